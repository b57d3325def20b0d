//! Soft rasterizer: per-triangle sigmoid coverage of the signed screen-space
//! distance to the triangle boundary, probabilistic alpha union, and a
//! depth-weighted color blend. The backward pass re-evaluates every pixel and
//! accumulates into per-tile buffers that are reduced in tile order, so
//! results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Camera, CameraFrame, Image, RenderError};
use crate::geometry::{Role, TriMesh};
use crate::linalg::Vec3;
use crate::scalar::Real;

pub const TILE: usize = 16;
/// Triangles farther outside a pixel than `CUTOFF * softness` are ignored.
pub const CUTOFF: f64 = 12.0;
const BLEND_EPS: f64 = 1e-10;
const MIN_SCREEN_AREA: f64 = 1e-9;

/// Flat headlight shading parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Shading {
    pub target_color: [f64; 3],
    pub source_color: [f64; 3],
    pub ambient: f64,
    pub diffuse: f64,
    /// Depth blend temperature as a fraction of the camera distance.
    pub depth_softness: f64,
    pub background: [f64; 3],
}

impl Default for Shading {
    fn default() -> Self {
        Self {
            target_color: [0.8, 0.8, 0.8],
            source_color: [1.0, 0.7, 0.4],
            ambient: 0.35,
            diffuse: 0.65,
            depth_softness: 0.01,
            background: [1.0, 1.0, 1.0],
        }
    }
}

impl Shading {
    pub fn validate(&self) -> Result<(), RenderError> {
        let colors = self.target_color.iter().chain(&self.source_color).chain(&self.background);
        if colors.into_iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(RenderError::InvalidSettings("colors must lie in [0, 1]".into()));
        }
        if !(self.ambient >= 0.0 && self.diffuse >= 0.0 && self.depth_softness > 0.0) {
            return Err(RenderError::InvalidSettings("shading coefficients must be non-negative".into()));
        }
        Ok(())
    }

    pub fn background<T: Real>(&self) -> [T; 3] {
        self.background.map(T::lit)
    }
}

#[derive(Clone, Copy)]
enum Closest {
    Edge(usize),
    Vertex(usize),
}

struct ScreenTri<T> {
    face: usize,
    p: [[T; 2]; 3],
    zbar: T,
    color: [T; 3],
    bbox: [T; 4],
}

struct Prepared<T> {
    tris: Vec<ScreenTri<T>>,
    bins: Vec<Vec<u32>>,
    tiles_x: usize,
    frame: CameraFrame<T>,
    tau: T,
    gamma: T,
}

struct Fragment<T> {
    local: usize,
    d: T,
    e: T,
    closest: Closest,
    inside: bool,
}

#[derive(Clone, Copy, Default)]
struct TriGrad<T> {
    p: [[T; 2]; 3],
    zbar: T,
    color: [T; 3],
}

#[inline]
fn cross2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn sub2<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn shade_factor<T: Real>(m: Vec3<T>, forward: Vec3<T>) -> T {
    let len = m.norm();
    if len > T::zero() {
        m.dot(forward) / len
    } else {
        T::zero()
    }
}

fn prepare<T: Real>(scene: &TriMesh<T>, camera: &Camera<T>, softness: T, shading: &Shading) -> Result<Prepared<T>, RenderError> {
    camera.validate()?;
    shading.validate()?;
    if !(softness > T::zero()) || !softness.is_finite() {
        return Err(RenderError::InvalidSettings(format!("softness must be positive, got {softness}")));
    }
    if scene.vertices.iter().any(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite);
    }
    let frame = camera.frame();
    let near = camera.distance() * T::lit(1e-3);
    let projected: Vec<(T, T, T)> = scene.vertices.iter().map(|&v| frame.project(camera.eye, v)).collect();
    let roles = scene.face_roles();
    let (w, h) = (T::count(camera.width), T::count(camera.height));
    let reach = softness * T::lit(CUTOFF);
    let ka = T::lit(shading.ambient);
    let kd = T::lit(shading.diffuse);

    let mut tris = Vec::new();
    for (f, face) in scene.faces.iter().enumerate() {
        let pr = face.map(|i| projected[i]);
        if pr.iter().any(|q| q.2 < near) {
            continue;
        }
        let p = pr.map(|q| [q.0, q.1]);
        if cross2(sub2(p[1], p[0]), sub2(p[2], p[0])).abs() < T::lit(MIN_SCREEN_AREA) {
            continue;
        }
        let lo_x = p.iter().map(|q| q[0]).fold(T::infinity(), T::min) - reach;
        let hi_x = p.iter().map(|q| q[0]).fold(T::neg_infinity(), T::max) + reach;
        let lo_y = p.iter().map(|q| q[1]).fold(T::infinity(), T::min) - reach;
        let hi_y = p.iter().map(|q| q[1]).fold(T::neg_infinity(), T::max) + reach;
        if hi_x < T::zero() || hi_y < T::zero() || lo_x > w || lo_y > h {
            continue;
        }
        let [a, b, c] = scene.triangle(f);
        let s = shade_factor((b - a).cross(c - a), frame.forward).abs();
        let base = match roles[f] {
            Role::Target => shading.target_color,
            Role::Source => shading.source_color,
        };
        tris.push(ScreenTri {
            face: f,
            p,
            zbar: (pr[0].2 + pr[1].2 + pr[2].2) / T::lit(3.0),
            color: base.map(|ch| T::lit(ch) * (ka + kd * s)),
            bbox: [lo_x, hi_x, lo_y, hi_y],
        });
    }

    let tiles_x = camera.width.div_ceil(TILE);
    let tiles_y = camera.height.div_ceil(TILE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    let tile_range = |lo: T, hi: T, n: usize| {
        let a = (lo.as_f64() / TILE as f64).floor().max(0.0) as usize;
        let b = ((hi.as_f64() / TILE as f64).floor().max(0.0) as usize).min(n - 1);
        a..=b
    };
    for (i, t) in tris.iter().enumerate() {
        for ty in tile_range(t.bbox[2], t.bbox[3], tiles_y) {
            for tx in tile_range(t.bbox[0], t.bbox[1], tiles_x) {
                bins[ty * tiles_x + tx].push(i as u32);
            }
        }
    }
    let gamma = camera.distance() * T::lit(shading.depth_softness);
    Ok(Prepared { tris, bins, tiles_x, frame, tau: softness, gamma })
}

/// Signed distance from `q` to the triangle boundary, positive inside.
fn signed_distance<T: Real>(q: [T; 2], p: &[[T; 2]; 3]) -> (T, Closest, bool) {
    let orient = cross2(sub2(p[1], p[0]), sub2(p[2], p[0]));
    let mut inside = true;
    let mut best = T::infinity();
    let mut closest = Closest::Vertex(0);
    for k in 0..3 {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let e = sub2(b, a);
        let r = sub2(q, a);
        let c = cross2(e, r);
        if c * orient < T::zero() {
            inside = false;
        }
        let ee = e[0] * e[0] + e[1] * e[1];
        let t = (r[0] * e[0] + r[1] * e[1]) / ee;
        let (dist, which) = if t <= T::zero() {
            ((r[0] * r[0] + r[1] * r[1]).sqrt(), Closest::Vertex(k))
        } else if t >= T::one() {
            let rb = sub2(q, b);
            ((rb[0] * rb[0] + rb[1] * rb[1]).sqrt(), Closest::Vertex((k + 1) % 3))
        } else {
            (c.abs() / ee.sqrt(), Closest::Edge(k))
        };
        if dist < best {
            best = dist;
            closest = which;
        }
    }
    (if inside { best } else { -best }, closest, inside)
}

/// Adds `g * d(sd)/d(p)` to `out`.
fn signed_distance_backward<T: Real>(q: [T; 2], p: &[[T; 2]; 3], closest: Closest, inside: bool, g: T, out: &mut [[T; 2]; 3]) {
    let s = if inside { T::one() } else { -T::one() };
    match closest {
        Closest::Vertex(k) => {
            let d = sub2(p[k], q);
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if len > T::zero() {
                out[k][0] += g * s * d[0] / len;
                out[k][1] += g * s * d[1] / len;
            }
        }
        Closest::Edge(k) => {
            let a = p[k];
            let b = p[(k + 1) % 3];
            let e = sub2(b, a);
            let r = sub2(q, a);
            let c = cross2(e, r);
            let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
            let sigma = if c >= T::zero() { s } else { -s };
            let l3 = len * len * len;
            let de = [sigma * (r[1] / len - c * e[0] / l3), sigma * (-r[0] / len - c * e[1] / l3)];
            let dr = [sigma * -e[1] / len, sigma * e[0] / len];
            let kb = (k + 1) % 3;
            out[kb][0] += g * de[0];
            out[kb][1] += g * de[1];
            out[k][0] -= g * (de[0] + dr[0]);
            out[k][1] -= g * (de[1] + dr[1]);
        }
    }
}

fn fragments<T: Real>(prep: &Prepared<T>, list: &[u32], q: [T; 2], out: &mut Vec<Fragment<T>>) {
    out.clear();
    let cutoff = -T::lit(CUTOFF);
    for (local, &ti) in list.iter().enumerate() {
        let t = &prep.tris[ti as usize];
        if q[0] < t.bbox[0] || q[0] > t.bbox[1] || q[1] < t.bbox[2] || q[1] > t.bbox[3] {
            continue;
        }
        let (sd, closest, inside) = signed_distance(q, &t.p);
        let x = sd / prep.tau;
        if x < cutoff {
            continue;
        }
        out.push(Fragment { local, d: sigmoid(x), e: T::zero(), closest, inside });
    }
    if out.is_empty() {
        return;
    }
    let zref = out.iter().map(|f| prep.tris[list[f.local] as usize].zbar).fold(T::infinity(), T::min);
    for f in out.iter_mut() {
        f.e = (-(prep.tris[list[f.local] as usize].zbar - zref) / prep.gamma).exp();
    }
}

struct PixelValue<T> {
    alpha: T,
    color: [T; 3],
    weight: T,
}

fn blend<T: Real>(prep: &Prepared<T>, list: &[u32], frags: &[Fragment<T>]) -> PixelValue<T> {
    let mut transmit = T::one();
    let mut weight = T::lit(BLEND_EPS);
    let mut acc = [T::zero(); 3];
    for f in frags {
        transmit *= T::one() - f.d;
        let w = f.d * f.e;
        weight += w;
        let c = prep.tris[list[f.local] as usize].color;
        for ch in 0..3 {
            acc[ch] += w * c[ch];
        }
    }
    PixelValue { alpha: T::one() - transmit, color: acc.map(|a| a / weight), weight }
}

fn pixel_center<T: Real>(x: usize, y: usize) -> [T; 2] {
    [T::count(x) + T::half(), T::count(y) + T::half()]
}

fn tile_pixels(tile: usize, tiles_x: usize, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
    let x0 = (tile % tiles_x) * TILE;
    let y0 = (tile / tiles_x) * TILE;
    (y0..(y0 + TILE).min(height)).flat_map(move |y| (x0..(x0 + TILE).min(width)).map(move |x| (x, y)))
}

/// Renders `scene` to a straight-alpha RGBA image. Pixels no triangle reaches
/// carry alpha 0 and the background color.
pub fn render_soft<T: Real>(scene: &TriMesh<T>, camera: &Camera<T>, softness: T, shading: &Shading) -> Result<Image<T>, RenderError> {
    let prep = prepare(scene, camera, softness, shading)?;
    let (w, h) = (camera.width, camera.height);
    let bg = shading.background::<T>();
    let tiles: Vec<Vec<(usize, [T; 4])>> = prep
        .bins
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let mut frags = Vec::new();
            tile_pixels(tile, prep.tiles_x, w, h)
                .map(|(x, y)| {
                    fragments(&prep, list, pixel_center(x, y), &mut frags);
                    let px = if frags.is_empty() {
                        [bg[0], bg[1], bg[2], T::zero()]
                    } else {
                        let v = blend(&prep, list, &frags);
                        [v.color[0], v.color[1], v.color[2], v.alpha]
                    };
                    (y * w + x, px)
                })
                .collect()
        })
        .collect();
    let mut img = Image::new(w, h, 4);
    for (i, px) in tiles.into_iter().flatten() {
        img.data[i * 4..i * 4 + 4].copy_from_slice(&px);
    }
    if img.data.iter().any(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite);
    }
    Ok(img)
}

/// Pulls an RGBA image gradient back to scene vertices. Target-role vertices
/// receive zero gradient.
pub fn backprop_render<T: Real>(
    scene: &TriMesh<T>,
    camera: &Camera<T>,
    softness: T,
    shading: &Shading,
    d_rgba: &Image<T>,
) -> Result<Vec<Vec3<T>>, RenderError> {
    if d_rgba.width != camera.width || d_rgba.height != camera.height || d_rgba.channels != 4 {
        return Err(RenderError::ShapeMismatch {
            expected: (camera.width, camera.height, 4),
            got: (d_rgba.width, d_rgba.height, d_rgba.channels),
        });
    }
    let prep = prepare(scene, camera, softness, shading)?;
    let (w, h) = (camera.width, camera.height);
    let tile_grads: Vec<Vec<TriGrad<T>>> = prep
        .bins
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let mut acc = vec![TriGrad::default(); list.len()];
            let mut frags = Vec::new();
            let mut suffix = Vec::new();
            for (x, y) in tile_pixels(tile, prep.tiles_x, w, h) {
                let g = d_rgba.pixel(x, y);
                if g.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                let q = pixel_center(x, y);
                fragments(&prep, list, q, &mut frags);
                if frags.is_empty() {
                    continue;
                }
                let v = blend(&prep, list, &frags);
                suffix.clear();
                suffix.resize(frags.len() + 1, T::one());
                for i in (0..frags.len()).rev() {
                    suffix[i] = suffix[i + 1] * (T::one() - frags[i].d);
                }
                let mut prefix = T::one();
                for (i, f) in frags.iter().enumerate() {
                    let t = &prep.tris[list[f.local] as usize];
                    let others = prefix * suffix[i + 1];
                    prefix *= T::one() - f.d;
                    let dot_dc: T = (0..3).map(|ch| g[ch] * (t.color[ch] - v.color[ch])).sum();
                    let g_d = g[3] * others + f.e * dot_dc / v.weight;
                    let g_e = f.d * dot_dc / v.weight;
                    let slot = &mut acc[f.local];
                    for (c, gc) in slot.color.iter_mut().zip(&g[..3]) {
                        *c += *gc * f.d * f.e / v.weight;
                    }
                    slot.zbar -= g_e * f.e / prep.gamma;
                    let g_sd = g_d * f.d * (T::one() - f.d) / prep.tau;
                    signed_distance_backward(q, &t.p, f.closest, f.inside, g_sd, &mut slot.p);
                }
            }
            acc
        })
        .collect();

    let mut grads = vec![TriGrad::<T>::default(); prep.tris.len()];
    for (list, acc) in prep.bins.iter().zip(&tile_grads) {
        for (&ti, g) in list.iter().zip(acc) {
            let dst = &mut grads[ti as usize];
            for k in 0..3 {
                dst.p[k][0] += g.p[k][0];
                dst.p[k][1] += g.p[k][1];
            }
            dst.zbar += g.zbar;
            for ch in 0..3 {
                dst.color[ch] += g.color[ch];
            }
        }
    }

    let frame = &prep.frame;
    let roles = scene.face_roles();
    let kd = T::lit(shading.diffuse);
    let third = T::one() / T::lit(3.0);
    let mut out = vec![Vec3::zero(); scene.vertices.len()];
    for (t, g) in prep.tris.iter().zip(&grads) {
        if roles[t.face] == Role::Target {
            continue;
        }
        let face = scene.faces[t.face];
        let pts = scene.triangle(t.face);
        for k in 0..3 {
            let (jx, jy) = frame.project_jacobian(camera.eye, pts[k]);
            out[face[k]] += jx * g.p[k][0] + jy * g.p[k][1] + frame.forward * (g.zbar * third);
        }
        let e1 = pts[1] - pts[0];
        let e2 = pts[2] - pts[0];
        let m = e1.cross(e2);
        let len = m.norm();
        if len > T::zero() {
            let n = m * (T::one() / len);
            let s = n.dot(frame.forward);
            let base = shading.source_color;
            let g_abs: T = (0..3).map(|ch| g.color[ch] * T::lit(base[ch]) * kd).sum();
            let g_s = if s >= T::zero() { g_abs } else { -g_abs };
            let g_m = (frame.forward - n * s) * (g_s / len);
            let g_e1 = e2.cross(g_m);
            let g_e2 = g_m.cross(e1);
            out[face[1]] += g_e1;
            out[face[2]] += g_e2;
            out[face[0]] -= g_e1 + g_e2;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite);
    }
    Ok(out)
}
