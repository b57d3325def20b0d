use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::geometry::MeshStats;
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Pinhole camera. Image y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Camera<T = f64> {
    pub eye: Vec3<T>,
    pub look_at: Vec3<T>,
    pub up: Vec3<T>,
    pub vertical_fov_deg: T,
    pub width: usize,
    pub height: usize,
}

/// Orthonormal camera frame and intrinsics.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame<T> {
    pub right: Vec3<T>,
    pub up: Vec3<T>,
    pub forward: Vec3<T>,
    pub focal_px: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Real> Camera<T> {
    pub fn new(
        eye: Vec3<T>,
        look_at: Vec3<T>,
        up: Vec3<T>,
        vertical_fov_deg: T,
        width: usize,
        height: usize,
    ) -> Result<Self, RenderError> {
        let cam = Self { eye, look_at, up: up.normalized(), vertical_fov_deg, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let fwd = self.look_at - self.eye;
        if !(fwd.norm() > T::zero()) || !self.eye.is_finite() || !self.look_at.is_finite() {
            return Err(RenderError::InvalidCamera("eye coincides with look-at".into()));
        }
        let fov = self.vertical_fov_deg.as_f64();
        if !(fov > 1.0 && fov < 179.0) {
            return Err(RenderError::InvalidCamera(format!("vertical fov {fov} outside (1, 179)")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera("zero resolution".into()));
        }
        if fwd.normalized().cross(self.up).norm() < T::lit(1e-9) {
            return Err(RenderError::InvalidCamera("up is parallel to the view direction".into()));
        }
        Ok(())
    }

    pub fn distance(&self) -> T {
        (self.look_at - self.eye).norm()
    }

    pub fn frame(&self) -> CameraFrame<T> {
        let forward = (self.look_at - self.eye).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        let half = T::lit(self.vertical_fov_deg.as_f64().to_radians() * 0.5);
        CameraFrame {
            right,
            up,
            forward,
            focal_px: T::count(self.height) * T::half() / half.tan(),
            cx: T::count(self.width) * T::half(),
            cy: T::count(self.height) * T::half(),
        }
    }
}

impl<T: Real> CameraFrame<T> {
    /// Pixel coordinates and camera-space depth of a world point.
    #[inline]
    pub fn project(&self, eye: Vec3<T>, p: Vec3<T>) -> (T, T, T) {
        let d = p - eye;
        let z = d.dot(self.forward);
        let x = d.dot(self.right);
        let y = d.dot(self.up);
        (self.cx + self.focal_px * x / z, self.cy - self.focal_px * y / z, z)
    }

    /// Rows of the 2x3 Jacobian of [`Self::project`]'s pixel coordinates.
    #[inline]
    pub fn project_jacobian(&self, eye: Vec3<T>, p: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
        let d = p - eye;
        let z = d.dot(self.forward);
        let x = d.dot(self.right);
        let y = d.dot(self.up);
        let f = self.focal_px / z;
        (
            (self.right - self.forward * (x / z)) * f,
            -((self.up - self.forward * (y / z)) * f),
        )
    }
}

/// Per-phase camera ring schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSchedule {
    pub num_views: usize,
    /// Look-at interpolation from target centroid (0) to source centroid (1).
    pub betas: Vec<f64>,
    /// Camera distance as a multiple of the scene bounding-box diagonal.
    pub distance_factors: Vec<f64>,
    pub elevation_deg: f64,
    pub vertical_fov_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Azimuth of the first view.
    pub azimuth_offset_deg: f64,
}

impl Default for RigSchedule {
    fn default() -> Self {
        Self {
            num_views: 8,
            betas: vec![0.0, 0.5, 1.0],
            distance_factors: vec![1.6, 1.25, 0.9],
            elevation_deg: 20.0,
            vertical_fov_deg: 45.0,
            width: 224,
            height: 224,
            azimuth_offset_deg: 0.0,
        }
    }
}

impl RigSchedule {
    pub fn phases(&self) -> usize {
        self.betas.len()
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidSchedule(m.to_string()));
        if self.num_views == 0 {
            return bad("num_views must be positive");
        }
        if self.betas.is_empty() || self.betas.len() != self.distance_factors.len() {
            return bad("betas and distance_factors must be non-empty and equal length");
        }
        if self.betas[0] != 0.0 {
            return bad("first beta must be 0");
        }
        if self.betas.windows(2).any(|w| w[1] <= w[0]) || *self.betas.last().unwrap() > 1.0 {
            return bad("betas must increase strictly and stay <= 1");
        }
        if self.distance_factors.iter().any(|d| !(*d > 0.0)) || self.distance_factors.windows(2).any(|w| w[1] > w[0]) {
            return bad("distance factors must be positive and non-increasing");
        }
        Ok(())
    }
}

/// Cameras for `phase` (1-based) evenly spaced in azimuth on a ring.
pub fn build_rig<T: Real>(
    target_stats: &MeshStats<T>,
    source_stats: &MeshStats<T>,
    phase: usize,
    schedule: &RigSchedule,
    source_centroid: Vec3<T>,
) -> Result<Vec<Camera<T>>, RenderError> {
    schedule.validate()?;
    if phase == 0 || phase > schedule.phases() {
        return Err(RenderError::InvalidSchedule(format!("phase {phase} outside 1..={}", schedule.phases())));
    }
    let (lo, hi) = target_stats.union_aabb(source_stats);
    let diag = (hi - lo).norm();
    if !(diag > T::zero()) || !diag.is_finite() {
        return Err(RenderError::DegenerateScene);
    }
    let beta = T::lit(schedule.betas[phase - 1]);
    let look_at = target_stats.centroid * (T::one() - beta) + source_centroid * beta;
    let distance = diag * T::lit(schedule.distance_factors[phase - 1]);
    let up = Vec3::new(T::zero(), T::one(), T::zero());
    ring(look_at, distance, up, schedule)
}

pub(crate) fn ring<T: Real>(look_at: Vec3<T>, distance: T, up: Vec3<T>, schedule: &RigSchedule) -> Result<Vec<Camera<T>>, RenderError> {
    let el = schedule.elevation_deg.to_radians();
    (0..schedule.num_views)
        .map(|k| {
            let az = (schedule.azimuth_offset_deg + 360.0 * k as f64 / schedule.num_views as f64).to_radians();
            let dir = Vec3::from_f64([el.cos() * az.sin(), el.sin(), el.cos() * az.cos()]);
            Camera::new(
                look_at + dir * distance,
                look_at,
                up,
                T::lit(schedule.vertical_fov_deg),
                schedule.width,
                schedule.height,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{box_mesh, compute_stats};

    fn stats_pair() -> (MeshStats<f64>, MeshStats<f64>) {
        let t = compute_stats(&box_mesh("t", Vec3::splat(-1.0), Vec3::splat(1.0)));
        let s = compute_stats(&box_mesh("s", Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 1.0, 1.0)));
        (t, s)
    }

    #[test]
    fn first_phase_looks_at_target_centroid() {
        let (t, s) = stats_pair();
        let rig = build_rig(&t, &s, 1, &RigSchedule::default(), s.centroid).unwrap();
        assert!(rig.iter().all(|c| c.look_at == t.centroid));
    }

    #[test]
    fn last_phase_looks_at_source_centroid() {
        let (t, s) = stats_pair();
        let rig = build_rig(&t, &s, 3, &RigSchedule::default(), s.centroid).unwrap();
        for c in &rig {
            assert!((c.look_at - s.centroid).norm() < 1e-15);
        }
    }

    #[test]
    fn eight_views_evenly_spaced() {
        let (t, s) = stats_pair();
        let rig = build_rig(&t, &s, 1, &RigSchedule::default(), s.centroid).unwrap();
        assert_eq!(rig.len(), 8);
        let d0 = rig[0].distance();
        for (k, c) in rig.iter().enumerate() {
            assert!((c.distance() - d0).abs() < 1e-9);
            let dir = c.eye - c.look_at;
            let az = dir.x.atan2(dir.z).to_degrees().rem_euclid(360.0);
            assert!((az - 45.0 * k as f64).abs() < 1e-9 || (az - 45.0 * k as f64).abs() > 359.999);
        }
    }

    #[test]
    fn degenerate_scene_rejected() {
        let p = compute_stats(&crate::geometry::TriMesh::<f64>::empty("e"));
        assert_eq!(build_rig(&p, &p, 1, &RigSchedule::default(), Vec3::zero()).unwrap_err(), RenderError::DegenerateScene);
    }

    #[test]
    fn invalid_cameras() {
        let z = Vec3::<f64>::zero();
        let up = Vec3::new(0.0, 1.0, 0.0);
        assert!(Camera::new(z, z, up, 45.0, 8, 8).is_err());
        assert!(Camera::new(Vec3::new(0.0, 0.0, 1.0), z, up, 0.5, 8, 8).is_err());
        assert!(Camera::new(Vec3::new(0.0, 0.0, 1.0), z, up, 179.5, 8, 8).is_err());
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let cam = Camera::new(Vec3::new(1.0, 2.0, 5.0), Vec3::new(0.1, -0.2, 0.3), Vec3::new(0.0, 1.0, 0.0), 50.0, 64, 48).unwrap();
        let f = cam.frame();
        let p: Vec3<f64> = Vec3::new(0.3, 0.4, -0.2);
        let (jx, jy) = f.project_jacobian(cam.eye, p);
        let h: f64 = 1e-6;
        for k in 0..3 {
            let mut a = p;
            let mut b = p;
            a[k] += h;
            b[k] -= h;
            let (xa, ya, _) = f.project(cam.eye, a);
            let (xb, yb, _) = f.project(cam.eye, b);
            assert!(((xa - xb) / (2.0 * h) - jx[k]).abs() < 1e-5);
            assert!(((ya - yb) / (2.0 * h) - jy[k]).abs() < 1e-5);
        }
    }
}
