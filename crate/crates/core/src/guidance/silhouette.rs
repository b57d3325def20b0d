use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{check_views, GuidanceError, GuidanceProvider, GuidanceResult, GuidanceTarget};
use crate::geometry::TriMesh;
use crate::render::{render_soft, Camera, Image, RenderedView, Shading};
use crate::scalar::Real;

/// Where the target silhouettes come from.
#[derive(Debug, Clone)]
pub enum SilhouetteReference<T = f64> {
    /// One single-channel alpha image per view index.
    Images(Vec<Image<T>>),
    /// A reference scene rendered with each view's own camera and softness,
    /// so the comparison stays consistent when the rig changes between phases.
    Scene { scene: TriMesh<T>, shading: Shading },
}

/// Offline objective: score = -mean((alpha - alpha_ref)^2).
#[derive(Debug)]
pub struct SilhouetteProvider<T = f64> {
    reference: SilhouetteReference<T>,
    cache: Mutex<HashMap<Vec<u64>, Arc<Image<T>>>>,
}

fn cache_key<T: Real>(camera: &Camera<T>, softness: T) -> Vec<u64> {
    let mut key: Vec<u64> = [camera.eye, camera.look_at, camera.up]
        .iter()
        .flat_map(|v| v.to_array())
        .chain([camera.vertical_fov_deg, softness])
        .map(|x| x.as_f64().to_bits())
        .collect();
    key.extend([camera.width as u64, camera.height as u64]);
    key
}

impl<T: Real> SilhouetteProvider<T> {
    pub fn new(reference: SilhouetteReference<T>) -> Self {
        Self { reference, cache: Mutex::new(HashMap::new()) }
    }

    pub fn from_scene(scene: TriMesh<T>, shading: Shading) -> Self {
        Self::new(SilhouetteReference::Scene { scene, shading })
    }

    fn reference_alpha(&self, index: usize, view: &RenderedView<T>) -> Result<Arc<Image<T>>, GuidanceError> {
        match &self.reference {
            SilhouetteReference::Images(images) => {
                let img = images
                    .get(index)
                    .ok_or_else(|| GuidanceError::Invalid(format!("no reference silhouette for view {index}")))?;
                if img.channels != 1 || img.width != view.rgba.width || img.height != view.rgba.height {
                    return Err(GuidanceError::Invalid(format!("reference silhouette {index} does not match the view shape")));
                }
                Ok(Arc::new(img.clone()))
            }
            SilhouetteReference::Scene { scene, shading } => {
                let key = cache_key(&view.camera, view.softness);
                if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
                    return Ok(hit.clone());
                }
                let img = render_soft(scene, &view.camera, view.softness, shading)
                    .map_err(|e| GuidanceError::Invalid(format!("rendering reference: {e}")))?;
                let alpha = Arc::new(img.channel(3));
                self.cache.lock().expect("cache lock").insert(key, alpha.clone());
                Ok(alpha)
            }
        }
    }
}

impl<T: Real> GuidanceProvider<T> for SilhouetteProvider<T> {
    fn id(&self) -> String {
        "silhouette".into()
    }

    fn evaluate(&self, _target: &GuidanceTarget, views: &[RenderedView<T>], want_grads: bool) -> Result<GuidanceResult<T>, GuidanceError> {
        check_views(views)?;
        let mut scores = Vec::with_capacity(views.len());
        let mut grads = Vec::new();
        for (i, view) in views.iter().enumerate() {
            let reference = self.reference_alpha(i, view)?;
            let n = T::count(reference.data.len());
            let mut sq = T::zero();
            let mut grad = if want_grads { Image::new(view.rgba.width, view.rgba.height, 4) } else { Image::new(0, 0, 4) };
            for (p, (px, r)) in view.rgba.data.chunks_exact(4).zip(&reference.data).enumerate() {
                let diff = px[3] - *r;
                sq += diff * diff;
                if want_grads {
                    grad.data[p * 4 + 3] = -T::two() * diff / n;
                }
            }
            scores.push(-sq / n);
            if want_grads {
                grads.push(grad);
            }
        }
        Ok(GuidanceResult { per_view_scores: scores, per_view_pixel_grads: grads, provider_id: "silhouette".into() })
    }
}
