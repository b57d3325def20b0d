//! Scorer wire format: a 4-byte big-endian length prefix followed by a JSON
//! payload. Images travel as base64 of little-endian f32 RGB, row-major.

use std::io::{Read, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::GuidanceError;
use crate::render::Image;
use crate::scalar::Real;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_BYTES: u32 = 512 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    ScoreRequest,
    ScoreResponse,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    pub w: usize,
    pub h: usize,
    pub rgb_base64_f32_rowmajor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WireTarget {
    Text { prompt: String },
    Image { reference_image: WireImage },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<WireTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<Vec<WireImage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub want_grads: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grads: Option<Vec<WireImage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_id: Option<String>,
}

impl WireMessage {
    pub fn request(target: WireTarget, views: Vec<WireImage>, want_grads: bool) -> Self {
        Self {
            kind: MessageType::ScoreRequest,
            target: Some(target),
            views: Some(views),
            want_grads: Some(want_grads),
            scores: None,
            grads: None,
            message: None,
            provider_id: None,
        }
    }

    pub fn response(scores: Vec<f64>, grads: Option<Vec<WireImage>>, provider_id: Option<String>) -> Self {
        Self {
            kind: MessageType::ScoreResponse,
            target: None,
            views: None,
            want_grads: None,
            scores: Some(scores),
            grads,
            message: None,
            provider_id,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            kind: MessageType::Error,
            target: None,
            views: None,
            want_grads: None,
            scores: None,
            grads: None,
            message: Some(message.into()),
            provider_id: None,
        }
    }
}

pub fn encode_f32(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32(text: &str) -> Result<Vec<f32>, GuidanceError> {
    let bytes = STANDARD.decode(text).map_err(|e| GuidanceError::Malformed(format!("base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(GuidanceError::Malformed(format!("payload of {} bytes is not whole f32s", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

impl WireImage {
    /// Encodes a 3-channel image.
    pub fn from_rgb<T: Real>(img: &Image<T>) -> Self {
        assert_eq!(img.channels, 3, "wire images are RGB");
        let values: Vec<f32> = img.data.iter().map(|v| v.as_f64() as f32).collect();
        Self { w: img.width, h: img.height, rgb_base64_f32_rowmajor: encode_f32(&values) }
    }

    pub fn to_rgb<T: Real>(&self) -> Result<Image<T>, GuidanceError> {
        let values = decode_f32(&self.rgb_base64_f32_rowmajor)?;
        if values.len() != self.w * self.h * 3 {
            return Err(GuidanceError::Malformed(format!(
                "image {}x{} carries {} floats, expected {}",
                self.w,
                self.h,
                values.len(),
                self.w * self.h * 3
            )));
        }
        Ok(Image { width: self.w, height: self.h, channels: 3, data: values.into_iter().map(|v| T::lit(v as f64)).collect() })
    }
}

pub fn write_frame(out: &mut impl Write, msg: &WireMessage) -> std::io::Result<()> {
    let payload = serde_json::to_vec(msg).map_err(std::io::Error::other)?;
    let len = u32::try_from(payload.len()).map_err(|_| std::io::Error::other("frame too large"))?;
    out.write_all(&len.to_be_bytes())?;
    out.write_all(&payload)?;
    out.flush()
}

/// Reads one frame. I/O failures and short reads surface as `Unavailable`;
/// a frame that arrives intact but does not decode is `Malformed`.
pub fn read_frame(input: &mut impl Read) -> Result<WireMessage, GuidanceError> {
    let mut len = [0u8; 4];
    input.read_exact(&mut len).map_err(|e| GuidanceError::Unavailable(format!("reading frame header: {e}")))?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_BYTES {
        return Err(GuidanceError::Malformed(format!("frame of {len} bytes exceeds limit")));
    }
    let mut payload = vec![0u8; len as usize];
    input.read_exact(&mut payload).map_err(|e| GuidanceError::Unavailable(format!("reading frame body: {e}")))?;
    serde_json::from_slice(&payload).map_err(|e| GuidanceError::Malformed(format!("json: {e}")))
}
