//! Differentiable soft rendering and camera rigs.

mod camera;
mod image;
mod raster;

pub use camera::{build_rig, Camera, CameraFrame, RigSchedule};
pub(crate) use camera::ring;
pub use image::Image;
pub use raster::{backprop_render, render_soft, Shading, CUTOFF, TILE};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid camera schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid render settings: {0}")]
    InvalidSettings(String),
    #[error("scene has a degenerate bounding box")]
    DegenerateScene,
    #[error("non-finite value in scene or render output")]
    NonFinite,
    #[error("gradient image shape {got:?} does not match {expected:?}")]
    ShapeMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("image i/o: {0}")]
    Image(String),
}

/// A rendered image together with the camera and softness that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView<T = f64> {
    pub rgba: Image<T>,
    pub camera: Camera<T>,
    pub softness: T,
}

impl<T: crate::Real> RenderedView<T> {
    pub fn render(
        scene: &crate::geometry::TriMesh<T>,
        camera: &Camera<T>,
        softness: T,
        shading: &Shading,
    ) -> Result<Self, RenderError> {
        Ok(Self { rgba: render_soft(scene, camera, softness, shading)?, camera: *camera, softness })
    }
}
