//! Uniform grid over a point set for exact nearest and k-nearest queries.

use std::collections::BinaryHeap;

use super::stats::aabb;
use crate::linalg::Vec3;
use crate::scalar::Real;

const MAX_CELLS_PER_AXIS: usize = 96;

pub struct PointGrid<'a, T> {
    points: &'a [Vec3<T>],
    origin: Vec3<T>,
    /// Upper corner of the points' bounding box.
    upper: Vec3<T>,
    inv_cell: T,
    cell: T,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate<T> {
    dist_sq: T,
    index: usize,
}

impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.dist_sq
            .partial_cmp(&o.dist_sq)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(self.index.cmp(&o.index))
    }
}

impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl<'a, T: Real> PointGrid<'a, T> {
    pub fn new(points: &'a [Vec3<T>]) -> Self {
        let (lo, hi) = aabb(points);
        let ext = hi - lo;
        let n = points.len().max(1) as f64;
        let diag = ext.norm().as_f64().max(1e-12);
        // Aim for about two points per occupied cell on a surface-like set.
        let mut cell = (diag / n.sqrt()).max(diag / MAX_CELLS_PER_AXIS as f64);
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|k| ((ext[k].as_f64() / cell).floor() as usize + 1).min(MAX_CELLS_PER_AXIS));
        let cell_t = T::lit(cell);
        let mut grid = PointGrid {
            points,
            origin: lo,
            upper: hi,
            inv_cell: T::one() / cell_t,
            cell: cell_t,
            dims,
            starts: Vec::new(),
            items: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncells + 1];
        let ids: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(*p))).collect();
        for &c in &ids {
            counts[c + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; points.len()];
        for (pi, &c) in ids.iter().enumerate() {
            items[fill[c]] = pi;
            fill[c] += 1;
        }
        grid.starts = counts;
        grid.items = items;
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_of(&self, p: Vec3<T>) -> [usize; 3] {
        let d = (p - self.origin) * self.inv_cell;
        [0, 1, 2].map(|k| {
            let c = d[k].floor();
            if c < T::zero() || !c.is_finite() {
                0
            } else {
                (c.to_usize().unwrap_or(usize::MAX)).min(self.dims[k] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn visit_shell(&self, center: [usize; 3], r: usize, mut f: impl FnMut(usize)) {
        let lo = center.map(|c| c as isize - r as isize);
        let hi = center.map(|c| c as isize + r as isize);
        let clamp = |k: usize, v: isize| v.clamp(0, self.dims[k] as isize - 1) as usize;
        let (x0, x1) = (clamp(0, lo[0]), clamp(0, hi[0]));
        let mut cell = |x: usize, y: usize, z: usize| {
            let c = self.flat([x, y, z]);
            for &pi in &self.items[self.starts[c]..self.starts[c + 1]] {
                f(pi);
            }
        };
        for z in clamp(2, lo[2])..=clamp(2, hi[2]) {
            for y in clamp(1, lo[1])..=clamp(1, hi[1]) {
                let face = r == 0 || y as isize == lo[1] || y as isize == hi[1] || z as isize == lo[2] || z as isize == hi[2];
                if face {
                    (x0..=x1).for_each(|x| cell(x, y, z));
                } else {
                    // Interior rows only touch the shell at its two x ends.
                    if x0 as isize == lo[0] {
                        cell(x0, y, z);
                    }
                    if x1 as isize == hi[0] && x1 != x0 {
                        cell(x1, y, z);
                    }
                }
            }
        }
    }

    /// Lower bound on the squared distance from `q` to any point outside the
    /// visited cell block, or `None` once the block covers the whole grid.
    fn block_bound(&self, q: Vec3<T>, center: [usize; 3], r: usize) -> Option<T> {
        let covers = (0..3).all(|k| center[k] <= r && center[k] + r + 1 >= self.dims[k]);
        if covers {
            return None;
        }
        // Every point lies in the bounding box, so each axis contributes at
        // least the gap between `q` and the box on that axis.
        let outside: [T; 3] = std::array::from_fn(|k| (self.origin[k] - q[k]).max(q[k] - self.upper[k]).max(T::zero()));
        let base: T = outside.iter().map(|o| *o * *o).sum();
        let mut bound = T::infinity();
        for k in 0..3 {
            let rest = base - outside[k] * outside[k];
            let lo_cell = center[k] as isize - r as isize;
            let hi_cell = center[k] + r + 1;
            if lo_cell > 0 {
                let lo = self.origin[k] + self.cell * T::lit(lo_cell as f64);
                let gap = (q[k] - lo).max(outside[k]);
                bound = bound.min(rest + gap * gap);
            }
            if hi_cell < self.dims[k] {
                let hi = self.origin[k] + self.cell * T::count(hi_cell);
                let gap = (hi - q[k]).max(outside[k]);
                bound = bound.min(rest + gap * gap);
            }
        }
        Some(bound)
    }

    /// Nearest point index and squared distance; ties go to the lower index.
    pub fn nearest(&self, q: Vec3<T>) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let center = self.cell_of(q);
        let mut best: Option<Candidate<T>> = None;
        for r in 0.. {
            self.visit_shell(center, r, |pi| {
                let cand = Candidate { dist_sq: (self.points[pi] - q).norm_squared(), index: pi };
                if best.is_none_or(|b| cand < b) {
                    best = Some(cand);
                }
            });
            match self.block_bound(q, center, r) {
                None => break,
                Some(bound) => {
                    if let Some(b) = best {
                        if b.dist_sq < bound {
                            break;
                        }
                    }
                }
            }
        }
        best.map(|b| (b.index, b.dist_sq))
    }

    /// The `k` nearest points sorted by (distance, index).
    pub fn k_nearest(&self, q: Vec3<T>, k: usize) -> Vec<(usize, T)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let center = self.cell_of(q);
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);
        for r in 0.. {
            self.visit_shell(center, r, |pi| {
                let cand = Candidate { dist_sq: (self.points[pi] - q).norm_squared(), index: pi };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            });
            match self.block_bound(q, center, r) {
                None => break,
                Some(bound) => {
                    if heap.len() == k && heap.peek().unwrap().dist_sq < bound {
                        break;
                    }
                }
            }
        }
        let mut out: Vec<_> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.dist_sq)).collect()
    }
}
