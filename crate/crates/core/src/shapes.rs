//! Synthetic objects built from simple solids, with exact inside tests.
//!
//! Surfaces are sampled uniformly by area on each solid, discarding samples
//! that fall inside another solid of the same union or lie on a face shared
//! with one. Normals are
//! the outward normals of the solid the sample came from.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::pointcloud::PointCloud;
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Solid {
    /// Axis-aligned box `[min, max]`.
    Cuboid { min: Vec3, max: Vec3 },
    /// Axis-aligned ellipsoid.
    Ellipsoid { center: Vec3, radii: Vec3 },
}

impl Solid {
    pub fn cuboid(min: Vec3, max: Vec3) -> Self {
        Solid::Cuboid { min, max }
    }

    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Solid::Ellipsoid {
            center,
            radii: Vec3::repeat(radius),
        }
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Solid::Cuboid { min, max } => (0..3).all(|a| p[a] > min[a] && p[a] < max[a]),
            Solid::Ellipsoid { center, radii } => {
                (p - center).component_div(radii).norm_squared() < 1.0
            }
        }
    }

    /// Approximate surface area (Knud Thomsen's formula for ellipsoids).
    pub fn area(&self) -> f64 {
        match self {
            Solid::Cuboid { min, max } => {
                let s = max - min;
                2.0 * (s.x * s.y + s.y * s.z + s.x * s.z)
            }
            Solid::Ellipsoid { radii, .. } => {
                let p = 1.6075;
                let (a, b, c) = (radii.x.powf(p), radii.y.powf(p), radii.z.powf(p));
                4.0 * core::f64::consts::PI * ((a * b + a * c + b * c) / 3.0).powf(1.0 / p)
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (Vec3, Vec3) {
        match self {
            Solid::Cuboid { min, max } => {
                let s = max - min;
                let faces = [s.y * s.z, s.x * s.z, s.x * s.y];
                let total = faces.iter().sum::<f64>();
                let mut pick = rng.random::<f64>() * total;
                let mut axis = 2;
                for (a, f) in faces.iter().enumerate() {
                    if pick < *f {
                        axis = a;
                        break;
                    }
                    pick -= f;
                }
                let upper = rng.random::<bool>();
                let mut p = Vec3::new(
                    min.x + rng.random::<f64>() * s.x,
                    min.y + rng.random::<f64>() * s.y,
                    min.z + rng.random::<f64>() * s.z,
                );
                let mut n = Vec3::zeros();
                p[axis] = if upper { max[axis] } else { min[axis] };
                n[axis] = if upper { 1.0 } else { -1.0 };
                (p, n)
            }
            Solid::Ellipsoid { center, radii } => {
                // Direction uniform on the sphere, then rejection on the
                // area stretch factor so the ellipsoid density is uniform.
                let rmax = radii.max();
                loop {
                    let z = 2.0 * rng.random::<f64>() - 1.0;
                    let t = 2.0 * core::f64::consts::PI * rng.random::<f64>();
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let u = Vec3::new(r * t.cos(), r * t.sin(), z);
                    let n = u.component_div(radii);
                    let stretch = radii.x * radii.y * radii.z * n.norm();
                    let bound = rmax * rmax;
                    if rng.random::<f64>() * bound <= stretch {
                        return (center + u.component_mul(radii), n.normalize());
                    }
                }
            }
        }
    }
}

/// A union of solids.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub solids: Vec<Solid>,
}

impl Shape {
    pub fn new(solids: Vec<Solid>) -> Self {
        Self { solids }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.solids.iter().any(|s| s.contains(p))
    }

    /// Exactly `n` surface samples of the union.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<PointCloud> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let areas: Vec<f64> = self.solids.iter().map(Solid::area).collect();
        let total: f64 = areas.iter().sum();
        let mut pts = Vec::with_capacity(n);
        let mut nrm = Vec::with_capacity(n);
        while pts.len() < n {
            let mut pick = rng.random::<f64>() * total;
            let mut k = areas.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    k = i;
                    break;
                }
                pick -= a;
            }
            let (p, normal) = self.solids[k].sample(&mut rng);
            let probe = p + normal * 1e-9;
            let buried = self
                .solids
                .iter()
                .enumerate()
                .any(|(j, s)| j != k && (s.contains(&p) || s.contains(&probe)));
            if !buried {
                pts.push(p);
                nrm.push(normal);
            }
        }
        PointCloud::new(pts, nrm)
    }
}

/// Chair-like object: seat, four legs, backrest and headrest. Legs are
/// 0.06 m square, so gaps between legs are around 0.3 m.
pub fn chair() -> Shape {
    let b = |x0: f64, y0: f64, z0: f64, x1: f64, y1: f64, z1: f64| {
        Solid::cuboid(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1))
    };
    let (w, leg, seat_z, seat_t) = (0.45, 0.06, 0.45, 0.06);
    let inset = 0.02;
    let mut solids = Vec::new();
    solids.push(b(
        -w / 2.0,
        -w / 2.0,
        seat_z,
        w / 2.0,
        w / 2.0,
        seat_z + seat_t,
    ));
    for (sx, sy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        let cx = sx * (w / 2.0 - inset - leg / 2.0);
        let cy = sy * (w / 2.0 - inset - leg / 2.0);
        solids.push(b(
            cx - leg / 2.0,
            cy - leg / 2.0,
            0.0,
            cx + leg / 2.0,
            cy + leg / 2.0,
            seat_z,
        ));
    }
    // Backrest along the +y edge, headrest on top of it.
    let back_t = 0.06;
    solids.push(b(
        -w / 2.0,
        w / 2.0 - back_t,
        seat_z + seat_t,
        w / 2.0,
        w / 2.0,
        1.0,
    ));
    solids.push(b(
        -0.15,
        w / 2.0 - back_t - 0.02,
        1.0,
        0.15,
        w / 2.0 + 0.02,
        1.15,
    ));
    Shape::new(solids)
}

/// Rabbit-like object from ellipsoids: body, head, two ears, tail and feet.
pub fn bunny() -> Shape {
    let e = |c: [f64; 3], r: [f64; 3]| Solid::Ellipsoid {
        center: Vec3::from(c),
        radii: Vec3::from(r),
    };
    Shape::new(alloc::vec![
        e([0.0, 0.0, 0.17], [0.2, 0.15, 0.16]),
        e([0.15, 0.0, 0.33], [0.09, 0.08, 0.085]),
        e([0.13, 0.035, 0.47], [0.025, 0.018, 0.09]),
        e([0.11, -0.04, 0.46], [0.025, 0.018, 0.09]),
        e([-0.2, 0.0, 0.2], [0.04, 0.04, 0.04]),
        e([0.12, 0.08, 0.03], [0.08, 0.035, 0.03]),
        e([0.12, -0.08, 0.03], [0.08, 0.035, 0.03]),
    ])
}

/// Point count of the reference bunny scan.
pub const BUNNY_POINTS: usize = 34_817;

/// Uniform points and outward normals on a sphere (Fibonacci lattice).
pub fn sphere_cloud(center: Vec3, radius: f64, n: usize) -> PointCloud {
    let golden = core::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut pts = Vec::with_capacity(n);
    let mut nrm = Vec::with_capacity(n);
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let t = golden * i as f64;
        let u = Vec3::new(r * t.cos(), r * t.sin(), z);
        pts.push(center + u * radius);
        nrm.push(u);
    }
    PointCloud::new(pts, nrm).expect("unit normals")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chair_samples_lie_on_the_boundary() {
        let c = chair();
        let cloud = c.sample_surface(3000, 1).unwrap();
        assert_eq!(cloud.len(), 3000);
        for (p, n) in cloud.points().iter().zip(cloud.normals()) {
            assert!(!c.contains(p));
            assert!(c.contains(&(p - n * 1e-4)), "{p} {n}");
        }
    }

    #[test]
    fn bunny_sample_has_reference_size() {
        let b = bunny();
        let cloud = b.sample_surface(BUNNY_POINTS, 7).unwrap();
        assert_eq!(cloud.len(), BUNNY_POINTS);
        for (p, n) in cloud.points().iter().zip(cloud.normals()).take(2000) {
            assert!(!b.contains(&(p + n * 1e-4)) || b.contains(&(p - n * 1e-4)));
            assert!(b.contains(&(p - n * 1e-4)));
        }
        assert_eq!(
            b.sample_surface(100, 7).unwrap(),
            b.sample_surface(100, 7).unwrap()
        );
    }

    #[test]
    fn sphere_cloud_is_on_sphere() {
        let c = sphere_cloud(Vec3::new(1.0, 0.0, 0.0), 0.5, 200);
        for (p, n) in c.points().iter().zip(c.normals()) {
            assert!(((p - Vec3::new(1.0, 0.0, 0.0)).norm() - 0.5).abs() < 1e-12);
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }
}
