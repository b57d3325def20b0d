//! In-process echo scorer speaking the wire protocol, for conformance tests.
//! Score = mean pixel intensity of the composited view.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::wire::{decode_f32, encode_f32, read_frame, write_frame, MessageType, WireImage, WireMessage};
use super::GuidanceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoGradient {
    /// d(score)/d(pixel) = 1 / (3 W H), the true gradient of the mean.
    Constant,
    /// Returns the view pixels themselves as the gradient.
    Pixels,
}

/// Pure request handler used by the server.
pub fn respond(request: &WireMessage, mode: EchoGradient) -> WireMessage {
    match handle(request, mode) {
        Ok(m) => m,
        Err(e) => WireMessage::error(e.to_string()),
    }
}

fn handle(request: &WireMessage, mode: EchoGradient) -> Result<WireMessage, GuidanceError> {
    if request.kind != MessageType::ScoreRequest {
        return Err(GuidanceError::Invalid("expected a score_request".into()));
    }
    if request.target.is_none() {
        return Err(GuidanceError::Invalid("score_request without target".into()));
    }
    let views = request.views.as_ref().ok_or_else(|| GuidanceError::Invalid("score_request without views".into()))?;
    let mut scores = Vec::with_capacity(views.len());
    let mut grads = Vec::with_capacity(views.len());
    for v in views {
        let px = decode_f32(&v.rgb_base64_f32_rowmajor)?;
        if px.len() != v.w * v.h * 3 || px.is_empty() {
            return Err(GuidanceError::Invalid(format!("view {}x{} carries {} floats", v.w, v.h, px.len())));
        }
        scores.push(px.iter().map(|&x| x as f64).sum::<f64>() / px.len() as f64);
        let g = match mode {
            EchoGradient::Constant => encode_f32(&vec![(1.0 / px.len() as f64) as f32; px.len()]),
            EchoGradient::Pixels => v.rgb_base64_f32_rowmajor.clone(),
        };
        grads.push(WireImage { w: v.w, h: v.h, rgb_base64_f32_rowmajor: g });
    }
    let want = request.want_grads.unwrap_or(false);
    Ok(WireMessage::response(scores, want.then_some(grads), Some("echo".into())))
}

/// Echo scorer listening on an ephemeral localhost port until dropped.
pub struct EchoServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl EchoServer {
    pub fn spawn(mode: EchoGradient) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = conn {
                    std::thread::spawn(move || serve_connection(stream, mode));
                }
            }
        });
        Ok(Self { addr, stop, handle: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

fn serve_connection(mut stream: TcpStream, mode: EchoGradient) {
    loop {
        let reply = match read_frame(&mut stream) {
            Ok(req) => respond(&req, mode),
            Err(GuidanceError::Malformed(m)) => WireMessage::error(m),
            Err(_) => return,
        };
        if write_frame(&mut stream, &reply).is_err() {
            return;
        }
    }
}

impl Drop for EchoServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
