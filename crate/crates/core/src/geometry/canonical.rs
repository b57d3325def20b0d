//! Upright canonicalization by principal component analysis.
//!
//! The axis with the smallest vertex variance is mapped to +y (flat objects
//! lie down, plates and trays end up horizontal), the largest to +x and the
//! middle one to +z. Eigenvalues within a relative 1e-9 of each other are
//! considered tied and ordered by their dominant input axis index. Each
//! eigenvector's sign is chosen so its largest-magnitude component is
//! positive, then +z is flipped if needed to keep a proper rotation.

use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use super::stats::compute_stats;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Canonicalized<T> {
    pub mesh: TriMesh<T>,
    /// Applied as `R * (v - centroid)`.
    pub rotation: Mat3<T>,
    pub centroid: Vec3<T>,
    pub report: CanonicalReport,
}

/// What went where, for run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalReport {
    /// Input-frame principal directions mapped to +x, +y, +z.
    pub axes: [[f64; 3]; 3],
    /// Variances along those directions.
    pub variances: [f64; 3],
}

pub fn upright_canonicalize<T: Real>(mesh: &TriMesh<T>) -> Canonicalized<T> {
    let centroid = compute_stats(mesh).centroid;
    let n = T::count(mesh.vertices.len().max(1));
    let mut cov = Mat3::zero();
    for v in &mesh.vertices {
        let d = *v - centroid;
        cov.add_assign(&Mat3::outer(d, d));
    }
    for row in cov.m.iter_mut() {
        for x in row.iter_mut() {
            *x /= n;
        }
    }
    let (vals, vecs) = cov.symmetric_eigen();
    let mut axes: Vec<(T, Vec3<T>, usize)> = (0..3)
        .map(|k| {
            let mut v = vecs.col(k);
            let dom = (0..3)
                .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
                .unwrap();
            if v[dom] < T::zero() {
                v = -v;
            }
            (vals[k], v, dom)
        })
        .collect();
    let scale = vals.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::min_positive_value());
    let tol = T::lit(1e-9) * scale;
    axes.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= tol {
            a.2.cmp(&b.2)
        } else {
            a.0.partial_cmp(&b.0).unwrap()
        }
    });
    // ascending variance: [smallest, middle, largest] -> [+y, +z, +x]
    let y_axis = axes[0].1;
    let z_axis = axes[1].1;
    let x_axis = axes[2].1;
    let mut rotation = Mat3::from_rows(x_axis, y_axis, z_axis);
    if rotation.determinant() < T::zero() {
        rotation = Mat3::from_rows(x_axis, y_axis, -z_axis);
    }
    let mut out = mesh.clone();
    out.vertices = mesh.vertices.iter().map(|v| rotation.mul_vec(*v - centroid)).collect();
    out.vertex_normals = mesh
        .vertex_normals
        .as_ref()
        .map(|ns| ns.iter().map(|n| rotation.mul_vec(*n)).collect());
    let report = CanonicalReport {
        axes: [rotation.row(0).to_f64(), rotation.row(1).to_f64(), rotation.row(2).to_f64()],
        variances: [axes[2].0.as_f64(), axes[0].0.as_f64(), axes[1].0.as_f64()],
    };
    Canonicalized { mesh: out, rotation, centroid, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::box_mesh;
    use crate::geometry::stats::compute_stats;
    use crate::linalg::Quat;

    fn is_signed_permutation(r: &Mat3<f64>) -> bool {
        r.m.iter().all(|row| {
            let big = row.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-9).count();
            let zero = row.iter().filter(|x| x.abs() < 1e-9).count();
            big == 1 && zero == 2
        })
    }

    #[test]
    fn canonical_cube_rotation_is_a_signed_permutation() {
        let cube = box_mesh::<f64>("c", Vec3::splat(-0.5), Vec3::splat(0.5));
        let c = upright_canonicalize(&cube);
        assert!(is_signed_permutation(&c.rotation));
        assert!((c.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_cube_comes_back_axis_aligned() {
        let mut cube = box_mesh::<f64>("c", Vec3::splat(-0.5), Vec3::splat(0.5));
        let r = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::FRAC_PI_2).to_rotation_matrix();
        cube.vertices.iter_mut().for_each(|v| *v = r.mul_vec(*v));
        let out = upright_canonicalize(&cube);
        let e = compute_stats(&out.mesh).extents();
        for k in 0..3 {
            assert!((e[k] - 1.0).abs() < 1e-6, "extent {k} = {}", e[k]);
        }
    }

    #[test]
    fn elongated_box_long_axis_maps_to_x_thin_axis_to_y() {
        // long on x, thin on z
        let b = box_mesh::<f64>("b", Vec3::new(-2.0, -0.5, -0.1), Vec3::new(2.0, 0.5, 0.1));
        let r = Quat::from_euler_xyz(0.4, -0.3, 0.9).to_rotation_matrix();
        let mut rotated = b.clone();
        rotated.vertices.iter_mut().for_each(|v| *v = r.mul_vec(*v));
        let out = upright_canonicalize(&rotated);
        let e = compute_stats(&out.mesh).extents();
        assert!((e.x - 4.0).abs() < 1e-6);
        assert!((e.y - 0.2).abs() < 1e-6);
        assert!((e.z - 1.0).abs() < 1e-6);
        // PCA oracle: recorded +x axis is the rotated long axis up to sign
        let long = r.mul_vec(Vec3::new(1.0, 0.0, 0.0));
        let reported = Vec3::from_f64(out.report.axes[0]);
        assert!((reported.dot(long).abs() - 1.0).abs() < 1e-9);
        assert!(out.report.variances[0] > out.report.variances[2]);
        assert!(out.report.variances[2] > out.report.variances[1]);
    }
}
