//! Similarity-transform pose of the source mesh and its chain rule.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{MeshPart, Role, TriMesh};
use crate::linalg::{Mat3, Quat, Vec3};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("pose has non-finite components")]
    NonFinite,
    #[error("quaternion has zero length")]
    ZeroQuaternion,
    #[error("expected {expected} vertex gradients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("pose gradient has non-finite entries")]
    NonFiniteGradient,
}

/// Translation, rotation and isotropic scale. Scale is stored as its log so
/// every parameter is unconstrained; the quaternion is normalized on use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams<T = f64> {
    pub tau: Vec3<T>,
    pub quat: Quat<T>,
    pub log_scale: T,
}

impl<T: Real> Default for PoseParams<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> PoseParams<T> {
    pub fn identity() -> Self {
        Self { tau: Vec3::zero(), quat: Quat::identity(), log_scale: T::zero() }
    }

    pub fn new(tau: Vec3<T>, quat: Quat<T>, scale: T) -> Self {
        Self { tau, quat, log_scale: scale.ln() }
    }

    pub fn translation(tau: Vec3<T>) -> Self {
        Self { tau, ..Self::identity() }
    }

    pub fn scale(&self) -> T {
        self.log_scale.exp()
    }

    pub fn is_finite(&self) -> bool {
        self.tau.is_finite() && self.quat.is_finite() && self.log_scale.is_finite()
    }

    pub fn unit_quat(&self) -> Result<Quat<T>, PoseError> {
        if !self.is_finite() {
            return Err(PoseError::NonFinite);
        }
        let n = self.quat.norm();
        if n == T::zero() {
            return Err(PoseError::ZeroQuaternion);
        }
        Ok(self.quat.normalized())
    }

    pub fn rotation(&self) -> Result<Mat3<T>, PoseError> {
        Ok(self.unit_quat()?.to_rotation_matrix())
    }

    /// `s R v + tau`.
    pub fn transform_point(&self, v: Vec3<T>) -> Result<Vec3<T>, PoseError> {
        let r = self.rotation()?;
        Ok(r.mul_vec(v) * self.scale() + self.tau)
    }

    /// Pose undoing this one.
    pub fn inverse(&self) -> Result<Self, PoseError> {
        let q = self.unit_quat()?;
        let inv_s = (-self.log_scale).exp();
        let r_t = q.to_rotation_matrix().transpose();
        Ok(Self { tau: -(r_t.mul_vec(self.tau) * inv_s), quat: q.conjugate(), log_scale: -self.log_scale })
    }

    /// Pose equivalent to applying `self` first and then `after`.
    pub fn then(&self, after: &Self) -> Result<Self, PoseError> {
        let q1 = self.unit_quat()?;
        let q2 = after.unit_quat()?;
        let r2 = q2.to_rotation_matrix();
        Ok(Self {
            tau: r2.mul_vec(self.tau) * after.scale() + after.tau,
            quat: q2.mul(q1).normalized(),
            log_scale: self.log_scale + after.log_scale,
        })
    }

    /// Flattened parameter vector `[tx, ty, tz, qw, qx, qy, qz, log s]`.
    pub fn to_vector(&self) -> [T; 8] {
        let q = self.quat.to_array();
        [self.tau.x, self.tau.y, self.tau.z, q[0], q[1], q[2], q[3], self.log_scale]
    }

    pub fn from_vector(p: [T; 8]) -> Self {
        Self {
            tau: Vec3::new(p[0], p[1], p[2]),
            quat: Quat::new(p[3], p[4], p[5], p[6]),
            log_scale: p[7],
        }
    }

    pub fn cast<U: Real>(&self) -> PoseParams<U> {
        PoseParams::from_vector(self.to_vector().map(|x| U::lit(x.as_f64())))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseJson {
    tau: [f64; 3],
    quat: [f64; 4],
    scale: f64,
}

impl<T: Real> Serialize for PoseParams<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseJson {
            tau: self.tau.to_f64(),
            quat: self.quat.to_array().map(|x| x.as_f64()),
            scale: self.scale().as_f64(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for PoseParams<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = PoseJson::deserialize(d)?;
        if !(j.scale > 0.0) {
            return Err(serde::de::Error::custom("scale must be positive"));
        }
        Ok(Self {
            tau: Vec3::from_f64(j.tau),
            quat: Quat::from_array(j.quat.map(T::lit)),
            log_scale: T::lit(j.scale.ln()),
        })
    }
}

/// Gradient of a scalar with respect to [`PoseParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGradient<T = f64> {
    pub d_tau: Vec3<T>,
    /// With respect to the stored, unnormalized quaternion.
    pub d_quat: [T; 4],
    pub d_log_scale: T,
}

impl<T: Real> PoseGradient<T> {
    pub fn zero() -> Self {
        Self { d_tau: Vec3::zero(), d_quat: [T::zero(); 4], d_log_scale: T::zero() }
    }

    pub fn to_vector(&self) -> [T; 8] {
        let q = self.d_quat;
        [self.d_tau.x, self.d_tau.y, self.d_tau.z, q[0], q[1], q[2], q[3], self.d_log_scale]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// Posed copy of `mesh`: vertices `s R v + tau`, normals rotated by `R`.
pub fn apply_pose<T: Real>(mesh: &TriMesh<T>, pose: &PoseParams<T>) -> Result<TriMesh<T>, PoseError> {
    let r = pose.rotation()?;
    let s = pose.scale();
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = r.mul_vec(*v) * s + pose.tau;
    }
    if let Some(ns) = &mut out.vertex_normals {
        for n in ns {
            *n = r.mul_vec(*n);
        }
    }
    Ok(out)
}

/// Pulls per-vertex gradients of the posed mesh back onto the pose.
pub fn backprop_pose<T: Real>(
    rest_vertices: &[Vec3<T>],
    pose: &PoseParams<T>,
    d_vertices: &[Vec3<T>],
) -> Result<PoseGradient<T>, PoseError> {
    if rest_vertices.len() != d_vertices.len() {
        return Err(PoseError::LengthMismatch { expected: rest_vertices.len(), got: d_vertices.len() });
    }
    let q_hat = pose.unit_quat()?;
    let r = q_hat.to_rotation_matrix();
    let s = pose.scale();

    let mut d_tau = Vec3::zero();
    let mut d_log_scale = T::zero();
    // G = sum_i g_i v_i^T ; dL/dR = s G
    let mut g_outer = Mat3::zero();
    for (v, g) in rest_vertices.iter().zip(d_vertices) {
        d_tau += *g;
        let rv = r.mul_vec(*v);
        d_log_scale += g.dot(rv);
        g_outer.add_assign(&Mat3::outer(*g, *v));
    }
    d_log_scale *= s;

    let partials = q_hat.rotation_matrix_partials();
    let d_qhat: [T; 4] = [0, 1, 2, 3].map(|k| partials[k].frobenius_dot(&g_outer) * s);
    // Through q_hat = q / |q|: (I - q_hat q_hat^T) / |q|
    let qn = pose.quat.norm();
    let qa = q_hat.to_array();
    let proj: T = (0..4).map(|k| qa[k] * d_qhat[k]).sum();
    let d_quat = [0, 1, 2, 3].map(|k| (d_qhat[k] - qa[k] * proj) / qn);

    let grad = PoseGradient { d_tau, d_quat, d_log_scale };
    if !grad.is_finite() {
        return Err(PoseError::NonFiniteGradient);
    }
    Ok(grad)
}

/// Scene `target ∪ posed_source`; source parts are labelled [`Role::Source`].
pub fn compose_scene<T: Real>(target: &TriMesh<T>, posed_source: &TriMesh<T>) -> TriMesh<T> {
    if posed_source.is_empty() {
        return target.clone();
    }
    let vo = target.vertex_count();
    let fo = target.face_count();
    let mut out = target.clone();
    out.name = format!("{}+{}", target.name, posed_source.name);
    out.vertices.extend_from_slice(&posed_source.vertices);
    out.faces.extend(posed_source.faces.iter().map(|f| [f[0] + vo, f[1] + vo, f[2] + vo]));
    out.vertex_normals = match (&target.vertex_normals, &posed_source.vertex_normals) {
        (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
        _ => None,
    };
    if target.is_empty() {
        out.parts.clear();
    }
    out.parts.extend(posed_source.parts.iter().map(|p| MeshPart {
        name: p.name.clone(),
        role: Role::Source,
        vertices: p.vertices.start + vo..p.vertices.end + vo,
        faces: p.faces.start + fo..p.faces.end + fo,
    }));
    out
}
