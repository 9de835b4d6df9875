//! Surface metrics: Chamfer distance, sampled barrier fields, zero-crossing
//! isosurface extraction and the full-versus-sparse query benchmark.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::cbf::{self, CbfConfig, SurfaceModel};
use crate::error::{Error, Result};
use crate::sim::Clock;
use crate::Vec3;

/// Static 3-d tree for nearest-neighbour queries.
pub struct KdTree {
    points: Vec<Vec3>,
    /// Implicit balanced tree: node `lo..hi` splits at the median index.
    idx: Vec<usize>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        build(points, &mut idx, 0);
        Self {
            points: points.to_vec(),
            idx,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of, and squared distance to, the nearest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.idx.len(), 0, &mut best);
        Some(best)
    }

    fn search(&self, q: &Vec3, lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let i = self.idx[mid];
        let p = &self.points[i];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && i < best.0) {
            *best = (i, d2);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &[Vec3], idx: &mut [usize], depth: usize) {
    if idx.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = idx.len() / 2;
    idx.select_nth_unstable_by(mid, |a, b| points[*a][axis].total_cmp(&points[*b][axis]));
    let (left, right) = idx.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

/// `Σ_{x∈from} min_{y∈to} ‖x − y‖`.
pub fn directed_sum(from: &[Vec3], to: &KdTree) -> f64 {
    from.iter()
        .map(|x| to.nearest(x).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
        .sum()
}

/// Chamfer distance: the sum of both directed nearest-neighbour sums.
pub fn chamfer(p1: &[Vec3], p2: &[Vec3]) -> Result<f64> {
    let (a, b) = directed_pair(p1, p2)?;
    Ok(a + b)
}

/// Size-normalized Chamfer distance: the sum of both directed mean
/// nearest-neighbour distances.
pub fn chamfer_normalized(p1: &[Vec3], p2: &[Vec3]) -> Result<f64> {
    let (a, b) = directed_pair(p1, p2)?;
    Ok(a / p1.len() as f64 + b / p2.len() as f64)
}

fn directed_pair(p1: &[Vec3], p2: &[Vec3]) -> Result<(f64, f64)> {
    if p1.is_empty() || p2.is_empty() {
        return Err(Error::EmptySet);
    }
    let t1 = KdTree::new(p1);
    let t2 = KdTree::new(p2);
    Ok((directed_sum(p1, &t2), directed_sum(p2, &t1)))
}

/// Values on a regular grid, x index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(origin: Vec3, spacing: Vec3, dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if !spacing.iter().all(|s| *s > 0.0) {
            return Err(Error::InvalidArgument("grid spacing must be positive"));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
            values,
        })
    }

    /// Evaluates `f` at every node.
    pub fn from_fn(
        origin: Vec3,
        spacing: Vec3,
        dims: [usize; 3],
        mut f: impl FnMut(&Vec3) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(&node(&origin, &spacing, i, j, k)));
                }
            }
        }
        Self::new(origin, spacing, dims, values)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        node(&self.origin, &self.spacing, i, j, k)
    }

    /// Trilinear interpolation, clamped to the grid.
    pub fn interpolate(&self, p: &Vec3) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            if n < 2 {
                continue;
            }
            let u = ((p[a] - self.origin[a]) / self.spacing[a]).clamp(0.0, (n - 1) as f64);
            let b = (u.floor() as usize).min(n - 2);
            base[a] = b;
            frac[a] = u - b as f64;
        }
        let step = |a: usize| usize::from(self.dims[a] >= 2);
        let mut v = 0.0;
        for c in 0..8usize {
            let off = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                v += w * self.at(
                    base[0] + off[0] * step(0),
                    base[1] + off[1] * step(1),
                    base[2] + off[2] * step(2),
                );
            }
        }
        v
    }
}

fn node(origin: &Vec3, spacing: &Vec3, i: usize, j: usize, k: usize) -> Vec3 {
    origin
        + Vec3::new(
            i as f64 * spacing.x,
            j as f64 * spacing.y,
            k as f64 * spacing.z,
        )
}

/// Samples `h` on a `dims` grid spanning the box `[lo, hi]`.
pub fn sample_field<M: SurfaceModel + ?Sized>(
    model: &M,
    cfg: &CbfConfig,
    lo: Vec3,
    hi: Vec3,
    dims: [usize; 3],
) -> Result<ScalarField> {
    if dims.iter().any(|d| *d < 2) {
        return Err(Error::InvalidArgument(
            "field needs at least 2 nodes per axis",
        ));
    }
    let spacing = Vec3::new(
        (hi.x - lo.x) / (dims[0] - 1) as f64,
        (hi.y - lo.y) / (dims[1] - 1) as f64,
        (hi.z - lo.z) / (dims[2] - 1) as f64,
    );
    ScalarField::from_fn(lo, spacing, dims, |p| cbf::eval_h(model, cfg, p))
}

/// Linear-interpolation crossing of `level` on every grid edge whose
/// endpoints lie on opposite sides of it.
pub fn extract_isosurface(field: &ScalarField, level: f64) -> Vec<Vec3> {
    let [nx, ny, nz] = field.dims;
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let va = field.at(i, j, k);
                let pa = field.node(i, j, k);
                for (di, dj, dk) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                    let (ib, jb, kb) = (i + di, j + dj, k + dk);
                    if ib >= nx || jb >= ny || kb >= nz {
                        continue;
                    }
                    let vb = field.at(ib, jb, kb);
                    if (va < level) != (vb < level) {
                        let t = (level - va) / (vb - va);
                        out.push(pa + (field.node(ib, jb, kb) - pa) * t);
                    }
                }
            }
        }
    }
    out
}

/// Per-query timings in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryTiming {
    pub eval_mean: f64,
    pub eval_median: f64,
    pub grad_mean: f64,
    pub grad_median: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub n: usize,
    pub m: usize,
    pub queries: usize,
    pub repeats: usize,
    pub full: QueryTiming,
    pub sparse: QueryTiming,
}

impl BenchReport {
    /// Full-over-sparse ratio of mean `h` query times.
    pub fn eval_speedup(&self) -> f64 {
        self.full.eval_mean / self.sparse.eval_mean
    }

    pub fn grad_speedup(&self) -> f64 {
        self.full.grad_mean / self.sparse.grad_mean
    }
}

fn time_queries<M: SurfaceModel + ?Sized, C: Clock + ?Sized>(
    model: &M,
    cfg: &CbfConfig,
    queries: &[Vec3],
    repeats: usize,
    clock: &C,
) -> QueryTiming {
    let mut eval_t = Vec::with_capacity(repeats);
    let mut grad_t = Vec::with_capacity(repeats);
    let mut sink = 0.0;
    for _ in 0..repeats {
        let t0 = clock.now();
        for q in queries {
            sink += cbf::eval_h(model, cfg, q);
        }
        let t1 = clock.now();
        for q in queries {
            if let Ok(g) = cbf::grad_h(model, cfg, q) {
                sink += g.x;
            }
        }
        let t2 = clock.now();
        eval_t.push((t1 - t0) / queries.len() as f64);
        grad_t.push((t2 - t1) / queries.len() as f64);
    }
    core::hint::black_box(sink);
    QueryTiming {
        eval_mean: mean(&eval_t),
        eval_median: median(&mut eval_t),
        grad_mean: mean(&grad_t),
        grad_median: median(&mut grad_t),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `h` and `∇h` queries on both models, interleaving repeats.
pub fn bench<F, S, C>(
    full: &F,
    sparse: &S,
    cfg: &CbfConfig,
    queries: &[Vec3],
    repeats: usize,
    clock: &C,
) -> Result<BenchReport>
where
    F: SurfaceModel + ?Sized,
    S: SurfaceModel + ?Sized,
    C: Clock + ?Sized,
{
    if queries.is_empty() || repeats == 0 {
        return Err(Error::InvalidArgument(
            "bench needs queries and at least one repeat",
        ));
    }
    // Warm-up pass so first-touch costs do not land on either model.
    time_queries(full, cfg, &queries[..1], 1, clock);
    time_queries(sparse, cfg, &queries[..1], 1, clock);
    Ok(BenchReport {
        n: full.centers().len(),
        m: sparse.centers().len(),
        queries: queries.len(),
        repeats,
        full: time_queries(full, cfg, queries, repeats, clock),
        sparse: time_queries(sparse, cfg, queries, repeats, clock),
    })
}
