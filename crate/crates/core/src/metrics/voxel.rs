use rayon::prelude::*;

use crate::linalg::Vec3;

/// Axis-aligned grid with `res` cells per axis; voxel `(x, y, z)` has flat
/// index `(z * res + y) * res + x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub lo: Vec3<f64>,
    pub cell: Vec3<f64>,
    pub res: usize,
}

/// Edge-function magnitudes below this (relative to the cell area) count as
/// a ray grazing an edge or vertex.
const GRAZE_TOL: f64 = 1e-9;
/// Deterministic sub-cell offsets tried when a ray grazes an edge.
const JITTER: [(f64, f64); 6] = [(0.0, 0.0), (1.3e-4, 2.9e-4), (-3.1e-4, 1.7e-4), (2.3e-4, -3.7e-4), (-4.1e-4, -1.1e-4), (5.3e-4, 4.7e-4)];

impl VoxelGrid {
    /// Grid covering the bounding box of `points`; flat axes get a tiny extent.
    pub fn enclosing(points: &[Vec3<f64>], res: usize) -> Self {
        let (lo, hi) = crate::geometry::aabb(points);
        let ext = hi - lo;
        let floor = 1e-9 * ext.norm().max(1e-9);
        let ext = Vec3::new(ext.x.max(floor), ext.y.max(floor), ext.z.max(floor));
        let r = res as f64;
        Self { lo, cell: Vec3::new(ext.x / r, ext.y / r, ext.z / r), res }
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell.x * self.cell.y * self.cell.z
    }

    pub fn center(&self, x: usize, y: usize, z: usize) -> Vec3<f64> {
        self.lo + Vec3::new((x as f64 + 0.5) * self.cell.x, (y as f64 + 0.5) * self.cell.y, (z as f64 + 0.5) * self.cell.z)
    }
}

enum Crossing {
    Miss,
    Hit(f64),
    Graze,
}

/// Crossing of the +x ray through `(y, z)` with a triangle, by edge functions
/// in the yz plane.
fn cross(tri: &[Vec3<f64>; 3], y: f64, z: f64, tol: f64) -> Crossing {
    let e = |a: Vec3<f64>, b: Vec3<f64>| (b.y - a.y) * (z - a.z) - (b.z - a.z) * (y - a.y);
    let w0 = e(tri[1], tri[2]);
    let w1 = e(tri[2], tri[0]);
    let w2 = e(tri[0], tri[1]);
    let sum = w0 + w1 + w2;
    if sum.abs() <= tol {
        // Edge-on in the yz projection.
        return Crossing::Miss;
    }
    let inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
    if !inside {
        return Crossing::Miss;
    }
    if w0.abs() <= tol || w1.abs() <= tol || w2.abs() <= tol {
        return Crossing::Graze;
    }
    Crossing::Hit((w0 * tri[0].x + w1 * tri[1].x + w2 * tri[2].x) / sum)
}

/// Inside flags of every voxel centre by +x ray-crossing parity. Rays that
/// graze an edge or vertex are re-cast with a small deterministic offset.
pub fn inside_mask(vertices: &[Vec3<f64>], faces: &[[usize; 3]], grid: &VoxelGrid) -> Vec<bool> {
    let res = grid.res;
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); res * res];
    let row_of = |v: f64, lo: f64, c: f64| ((v - lo) / c - 0.5).floor();
    for (f, face) in faces.iter().enumerate() {
        let t = face.map(|i| vertices[i]);
        let (ylo, yhi) = (t[0].y.min(t[1].y).min(t[2].y), t[0].y.max(t[1].y).max(t[2].y));
        let (zlo, zhi) = (t[0].z.min(t[1].z).min(t[2].z), t[0].z.max(t[1].z).max(t[2].z));
        let clamp = |v: f64| v.clamp(0.0, res as f64 - 1.0) as usize;
        let y0 = clamp(row_of(ylo, grid.lo.y, grid.cell.y));
        let y1 = clamp(row_of(yhi, grid.lo.y, grid.cell.y) + 1.0);
        let z0 = clamp(row_of(zlo, grid.lo.z, grid.cell.z));
        let z1 = clamp(row_of(zhi, grid.lo.z, grid.cell.z) + 1.0);
        for z in z0..=z1 {
            for y in y0..=y1 {
                rows[z * res + y].push(f as u32);
            }
        }
    }
    let tol = GRAZE_TOL * grid.cell.y * grid.cell.z;
    let mut mask = vec![false; res * res * res];
    mask.par_chunks_mut(res).enumerate().for_each(|(row, out)| {
        let (y, z) = (row % res, row / res);
        let c = grid.center(0, y, z);
        let mut xs = Vec::new();
        for (jy, jz) in JITTER {
            xs.clear();
            let (py, pz) = (c.y + jy * grid.cell.y, c.z + jz * grid.cell.z);
            let mut grazed = false;
            for &f in &rows[row] {
                let t = faces[f as usize].map(|i| vertices[i]);
                match cross(&t, py, pz, tol) {
                    Crossing::Miss => {}
                    Crossing::Hit(x) => xs.push(x),
                    Crossing::Graze => {
                        grazed = true;
                        break;
                    }
                }
            }
            if !grazed {
                break;
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        let mut k = 0;
        for (x, o) in out.iter_mut().enumerate() {
            let cx = grid.lo.x + (x as f64 + 0.5) * grid.cell.x;
            while k < xs.len() && xs[k] < cx {
                k += 1;
            }
            *o = k % 2 == 1;
        }
    });
    mask
}
