//! Oriented point clouds and the labelled safety samples built from them.
//!
//! On-surface points get target 0, points pushed outward along the normal get
//! +1 and points pushed inward get −1, so the regressed field is positive
//! outside the object and negative inside.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Vec3;

/// Surface points with unit outward normals.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl PointCloud {
    /// Builds a cloud, normalizing every normal. Zero or non-finite normals
    /// are rejected.
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: normals.len(),
            });
        }
        let mut normals = normals;
        for n in normals.iter_mut() {
            let len = n.norm();
            if !(len > 0.0) || !len.is_finite() {
                return Err(Error::InvalidArgument(
                    "normal with zero or non-finite length",
                ));
            }
            *n /= len;
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite point coordinate"));
        }
        Ok(Self { points, normals })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(
            self.points
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0)
    }

    /// The sub-cloud at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
        }
    }

    /// Uniform random subset of `min(target_n, len)` points, without
    /// replacement. Input order is preserved.
    pub fn downsample(&self, target_n: usize, seed: u64) -> PointCloud {
        if target_n >= self.len() {
            return self.clone();
        }
        let idx = sorted_sample(self.len(), target_n, seed);
        self.select(&idx)
    }

    /// Keeps the first point (in input order) falling in each cubic voxel of
    /// side `voxel`.
    pub fn downsample_voxel(&self, voxel: f64) -> Result<PointCloud> {
        if !(voxel > 0.0) {
            return Err(Error::InvalidArgument("voxel size must be positive"));
        }
        let mut seen: BTreeMap<(i64, i64, i64), usize> = BTreeMap::new();
        for (i, p) in self.points.iter().enumerate() {
            let key = (
                (p.x / voxel).floor() as i64,
                (p.y / voxel).floor() as i64,
                (p.z / voxel).floor() as i64,
            );
            seen.entry(key).or_insert(i);
        }
        let mut idx: Vec<usize> = seen.into_values().collect();
        idx.sort_unstable();
        Ok(self.select(&idx))
    }

    /// Anisotropically scales the cloud about its bounding-box centre so the
    /// box has the given extents. Normals are mapped by the inverse-transpose
    /// scale and renormalized.
    pub fn rescale_to_box(&self, extents: Vec3) -> Result<PointCloud> {
        if !extents.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidArgument("box extents must be positive"));
        }
        let (lo, hi) = self.bounding_box().ok_or(Error::EmptySet)?;
        let size = hi - lo;
        for axis in 0..3 {
            if !(size[axis] > 0.0) {
                return Err(Error::DegenerateCloud { axis });
            }
        }
        let scale = extents.component_div(&size);
        let points = self
            .points
            .iter()
            .map(|p| {
                extents.component_mul(&((p - lo).component_div(&size)))
                    + lo
                    + 0.5 * (size - extents)
            })
            .collect();
        let normals = self
            .normals
            .iter()
            .map(|n| {
                let m = n.component_div(&scale);
                m / m.norm()
            })
            .collect();
        Ok(PointCloud { points, normals })
    }
}

pub(crate) fn sorted_sample(len: usize, amount: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, len, amount).into_vec();
    idx.sort_unstable();
    idx
}

/// Default normal offset for off-surface samples: 5% of the bounding-box
/// diagonal.
pub fn default_offset(cloud: &PointCloud) -> f64 {
    0.05 * cloud.diagonal()
}

/// Training inputs and targets, ordered on-surface, exterior, interior.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyDataset {
    inputs: Vec<Vec3>,
    targets: Vec<f64>,
    n0: usize,
    n_plus: usize,
    n_minus: usize,
}

impl SafetyDataset {
    /// Assembles a dataset from the three sample groups. Counts must satisfy
    /// `n_plus < n0` and `n_minus <= n_plus`.
    pub fn from_groups(
        on_surface: Vec<Vec3>,
        exterior: Vec<Vec3>,
        interior: Vec<Vec3>,
    ) -> Result<Self> {
        let (n0, n_plus, n_minus) = (on_surface.len(), exterior.len(), interior.len());
        if !(n_plus < n0 && n_minus <= n_plus) {
            return Err(Error::InvalidCounts {
                n0,
                n_plus,
                n_minus,
                cloud: n0,
            });
        }
        let mut inputs = on_surface;
        inputs.extend(exterior);
        inputs.extend(interior);
        let mut targets = Vec::with_capacity(inputs.len());
        targets.resize(n0, 0.0);
        targets.resize(n0 + n_plus, 1.0);
        targets.resize(n0 + n_plus + n_minus, -1.0);
        Ok(Self {
            inputs,
            targets,
            n0,
            n_plus,
            n_minus,
        })
    }

    pub fn inputs(&self) -> &[Vec3] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn n_minus(&self) -> usize {
        self.n_minus
    }

    pub fn on_surface(&self) -> &[Vec3] {
        &self.inputs[..self.n0]
    }

    pub fn exterior(&self) -> &[Vec3] {
        &self.inputs[self.n0..self.n0 + self.n_plus]
    }

    pub fn interior(&self) -> &[Vec3] {
        &self.inputs[self.n0 + self.n_plus..]
    }
}

/// Draws `n0` on-surface points, then pushes `n_plus` of them outward and
/// the first `n_minus` of those inward by `offset` along their normals.
pub fn make_safety_samples(
    cloud: &PointCloud,
    n0: usize,
    n_plus: usize,
    n_minus: usize,
    offset: f64,
    seed: u64,
) -> Result<SafetyDataset> {
    if !(n0 <= cloud.len() && n_plus < n0 && n_minus <= n_plus) {
        return Err(Error::InvalidCounts {
            n0,
            n_plus,
            n_minus,
            cloud: cloud.len(),
        });
    }
    if !(offset > 0.0) || !offset.is_finite() {
        return Err(Error::InvalidArgument("offset must be positive"));
    }
    let surface = sorted_sample(cloud.len(), n0, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    // Random order within the surface subset; interior reuses a prefix.
    let off_idx: Vec<usize> = index::sample(&mut rng, n0, n_plus)
        .into_iter()
        .map(|k| surface[k])
        .collect();
    let pts = cloud.points();
    let nrm = cloud.normals();
    let on: Vec<Vec3> = surface.iter().map(|&i| pts[i]).collect();
    let ext: Vec<Vec3> = off_idx.iter().map(|&i| pts[i] + nrm[i] * offset).collect();
    let int: Vec<Vec3> = off_idx[..n_minus]
        .iter()
        .map(|&i| pts[i] - nrm[i] * offset)
        .collect();
    SafetyDataset::from_groups(on, ext, int)
}
