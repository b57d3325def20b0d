use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use super::wire::{read_frame, write_frame, MessageType, WireImage, WireMessage};
use super::{check_views, GuidanceError, GuidanceProvider, GuidanceResult, GuidanceTarget};
use crate::render::{Image, RenderedView};
use crate::scalar::Real;

pub const SCORER_ADDR_ENV: &str = "OOALIGN_SCORER_ADDR";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Client for an out-of-process scorer. Views are composited over white
/// before sending; returned RGB gradients are pulled back to RGBA.
#[derive(Debug)]
pub struct ExternalProvider {
    addr: String,
    timeout: Duration,
    pool: Mutex<Vec<TcpStream>>,
}

impl ExternalProvider {
    pub fn new(addr: impl Into<String>) -> Self {
        Self { addr: addr.into(), timeout: DEFAULT_TIMEOUT, pool: Mutex::new(Vec::new()) }
    }

    pub fn from_env() -> Result<Self, GuidanceError> {
        match std::env::var(SCORER_ADDR_ENV) {
            Ok(addr) if !addr.trim().is_empty() => Ok(Self::new(addr.trim())),
            _ => Err(GuidanceError::Unavailable(format!("{SCORER_ADDR_ENV} is not set; point it at a running scorer (host:port)"))),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    fn connect(&self) -> Result<TcpStream, GuidanceError> {
        let unavailable = |e: String| GuidanceError::Unavailable(format!("scorer at {} ({SCORER_ADDR_ENV}): {e}", self.addr));
        let addrs: Vec<_> = self.addr.to_socket_addrs().map_err(|e| unavailable(e.to_string()))?.collect();
        let mut last = String::from("address resolved to nothing");
        for a in addrs {
            match TcpStream::connect_timeout(&a, self.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.timeout)).map_err(|e| unavailable(e.to_string()))?;
                    s.set_write_timeout(Some(self.timeout)).map_err(|e| unavailable(e.to_string()))?;
                    s.set_nodelay(true).ok();
                    return Ok(s);
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(unavailable(last))
    }

    /// Opens (and pools) a connection without sending anything.
    pub fn check_connection(&self) -> Result<(), GuidanceError> {
        let s = self.connect()?;
        self.pool.lock().expect("pool lock").push(s);
        Ok(())
    }

    fn round_trip(&self, request: &WireMessage) -> Result<WireMessage, GuidanceError> {
        let pooled = self.pool.lock().expect("pool lock").pop();
        let mut stream = match pooled {
            Some(s) => s,
            None => self.connect()?,
        };
        write_frame(&mut stream, request).map_err(|e| GuidanceError::Unavailable(format!("sending request: {e}")))?;
        let reply = read_frame(&mut stream)?;
        self.pool.lock().expect("pool lock").push(stream);
        Ok(reply)
    }
}

impl<T: Real> GuidanceProvider<T> for ExternalProvider {
    fn id(&self) -> String {
        format!("external:{}", self.addr)
    }

    fn evaluate(&self, target: &GuidanceTarget, views: &[RenderedView<T>], want_grads: bool) -> Result<GuidanceResult<T>, GuidanceError> {
        check_views(views)?;
        let white = [T::one(); 3];
        let composited: Vec<Image<T>> = views.iter().map(|v| v.rgba.composite_rgba(white)).collect();
        let request = WireMessage::request(target.to_wire(), composited.iter().map(WireImage::from_rgb).collect(), want_grads);
        let reply = self.round_trip(&request)?;
        match reply.kind {
            MessageType::ScoreResponse => {}
            MessageType::Error => return Err(GuidanceError::Remote(reply.message.unwrap_or_default())),
            MessageType::ScoreRequest => return Err(GuidanceError::Malformed("scorer answered with a request".into())),
        }
        let scores = reply.scores.ok_or_else(|| GuidanceError::Malformed("response without scores".into()))?;
        if scores.len() != views.len() {
            return Err(GuidanceError::Malformed(format!("{} scores for {} views", scores.len(), views.len())));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(GuidanceError::Malformed("non-finite score".into()));
        }
        let mut grads = Vec::new();
        if want_grads {
            let wire = reply.grads.ok_or_else(|| GuidanceError::Malformed("gradients requested but not returned".into()))?;
            if wire.len() != views.len() {
                return Err(GuidanceError::Malformed(format!("{} gradient images for {} views", wire.len(), views.len())));
            }
            for ((g, view), comp) in wire.iter().zip(views).zip(&composited) {
                let rgb: Image<T> = g.to_rgb()?;
                if !rgb.same_shape(comp) {
                    return Err(GuidanceError::Malformed("gradient image shape does not match its view".into()));
                }
                if rgb.data.iter().any(|v| !v.is_finite()) {
                    return Err(GuidanceError::Malformed("non-finite gradient".into()));
                }
                grads.push(Image::composite_rgba_backward(&view.rgba, &rgb, white));
            }
        }
        Ok(GuidanceResult {
            per_view_scores: scores.into_iter().map(T::lit).collect(),
            per_view_pixel_grads: grads,
            provider_id: reply.provider_id.unwrap_or_else(|| format!("external:{}", self.addr)),
        })
    }
}
