//! Semantic guidance providers: score rendered views against a text prompt or
//! reference image and return per-pixel score gradients.

pub mod echo;
mod external;
mod silhouette;
pub mod wire;

pub use external::{ExternalProvider, SCORER_ADDR_ENV};
pub use silhouette::{SilhouetteProvider, SilhouetteReference};

use crate::render::{Image, RenderedView};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GuidanceError {
    /// The scorer could not be reached or timed out. Worth retrying.
    #[error("guidance provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed guidance response: {0}")]
    Malformed(String),
    #[error("scorer reported an error: {0}")]
    Remote(String),
    #[error("invalid guidance input: {0}")]
    Invalid(String),
}

impl GuidanceError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GuidanceError::Unavailable(_))
    }
}

/// What the rendered views are compared against.
#[derive(Debug, Clone, PartialEq)]
pub enum GuidanceTarget {
    Text { prompt: String },
    Image { reference_image: Image<f32> },
}

impl GuidanceTarget {
    pub fn text(prompt: impl Into<String>) -> Self {
        GuidanceTarget::Text { prompt: prompt.into() }
    }

    pub fn to_wire(&self) -> wire::WireTarget {
        match self {
            GuidanceTarget::Text { prompt } => wire::WireTarget::Text { prompt: prompt.clone() },
            GuidanceTarget::Image { reference_image } => {
                wire::WireTarget::Image { reference_image: wire::WireImage::from_rgb(reference_image) }
            }
        }
    }

    pub fn from_wire(target: &wire::WireTarget) -> Result<Self, GuidanceError> {
        Ok(match target {
            wire::WireTarget::Text { prompt } => GuidanceTarget::Text { prompt: prompt.clone() },
            wire::WireTarget::Image { reference_image } => GuidanceTarget::Image { reference_image: reference_image.to_rgb()? },
        })
    }
}

/// Scores (higher is better) and d(score)/d(straight RGBA pixel) per view.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceResult<T = f64> {
    pub per_view_scores: Vec<T>,
    /// Empty when gradients were not requested.
    pub per_view_pixel_grads: Vec<Image<T>>,
    pub provider_id: String,
}

pub trait GuidanceProvider<T: Real>: Send + Sync {
    fn id(&self) -> String;

    /// False when scores never depend on the views, so rendering can be skipped.
    fn renders(&self) -> bool {
        true
    }

    fn evaluate(&self, target: &GuidanceTarget, views: &[RenderedView<T>], want_grads: bool) -> Result<GuidanceResult<T>, GuidanceError>;
}

/// Scores every view 0 with zero gradients.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullProvider;

impl<T: Real> GuidanceProvider<T> for NullProvider {
    fn id(&self) -> String {
        "null".into()
    }

    fn renders(&self) -> bool {
        false
    }

    fn evaluate(&self, _target: &GuidanceTarget, views: &[RenderedView<T>], want_grads: bool) -> Result<GuidanceResult<T>, GuidanceError> {
        check_views(views)?;
        Ok(GuidanceResult {
            per_view_scores: vec![T::zero(); views.len()],
            per_view_pixel_grads: if want_grads {
                views.iter().map(|v| Image::new(v.rgba.width, v.rgba.height, 4)).collect()
            } else {
                Vec::new()
            },
            provider_id: "null".into(),
        })
    }
}

pub(crate) fn check_views<T: Real>(views: &[RenderedView<T>]) -> Result<(), GuidanceError> {
    if views.is_empty() {
        return Err(GuidanceError::Invalid("at least one view is required".into()));
    }
    if views.iter().any(|v| v.rgba.channels != 4) {
        return Err(GuidanceError::Invalid("views must be RGBA".into()));
    }
    Ok(())
}

/// Negative mean of the per-view scores.
pub fn clip_loss_from_scores<T: Real>(result: &GuidanceResult<T>) -> T {
    let n = result.per_view_scores.len();
    if n == 0 {
        return T::zero();
    }
    -result.per_view_scores.iter().copied().sum::<T>() / T::count(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(scores: &[f64]) -> GuidanceResult<f64> {
        GuidanceResult { per_view_scores: scores.to_vec(), per_view_pixel_grads: Vec::new(), provider_id: "t".into() }
    }

    #[test]
    fn clip_loss_is_negative_mean() {
        assert_eq!(clip_loss_from_scores(&result(&[1.0, 1.0, 1.0, 1.0])), -1.0);
        assert!((clip_loss_from_scores(&result(&[0.2, 0.4])) + 0.3).abs() < 1e-15);
        assert_eq!(clip_loss_from_scores(&result(&[0.7])), -0.7);
    }

    #[test]
    fn clip_loss_ignores_view_order() {
        let a = clip_loss_from_scores(&result(&[0.1, 0.25, 0.5, 0.125]));
        let b = clip_loss_from_scores(&result(&[0.5, 0.125, 0.25, 0.1]));
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn only_unavailable_is_retriable() {
        assert!(GuidanceError::Unavailable("x".into()).is_retriable());
        assert!(!GuidanceError::Malformed("x".into()).is_retriable());
        assert!(!GuidanceError::Remote("x".into()).is_retriable());
    }
}
