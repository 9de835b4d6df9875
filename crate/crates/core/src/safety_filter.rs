//! Minimum-deviation input rectification.
//!
//! Both CBF conditions used here are a single affine constraint `a·u + b ≥ 0`,
//! so `argmin ½‖u − u_nom‖²` has a closed form: keep `u_nom` if it is
//! feasible, otherwise project it onto the hyperplane `a·u + b = 0`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Below this `‖a‖` the input has lost authority over the constraint.
pub const EPS_G: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RectifyResult {
    pub u_rect: Vec<f64>,
    /// `a·u_rect + b`.
    pub constraint_value: f64,
    pub active: bool,
    /// The constraint was violated with no input authority; `u_rect` is zero.
    pub fallback: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projects `u_nom` onto `{u : a·u + b ≥ 0}`.
pub fn rectify_affine(a: &[f64], b: f64, u_nom: &[f64]) -> Result<RectifyResult> {
    if a.len() != u_nom.len() {
        return Err(Error::DimensionMismatch {
            expected: u_nom.len(),
            found: a.len(),
        });
    }
    let value = dot(a, u_nom) + b;
    if value >= 0.0 {
        return Ok(RectifyResult {
            u_rect: u_nom.to_vec(),
            constraint_value: value,
            active: false,
            fallback: false,
        });
    }
    let aa = dot(a, a);
    if aa.sqrt() < EPS_G {
        return Ok(RectifyResult {
            u_rect: alloc::vec![0.0; u_nom.len()],
            constraint_value: b,
            active: true,
            fallback: true,
        });
    }
    let step = -value / aa;
    let u: Vec<f64> = u_nom.iter().zip(a).map(|(u, ai)| u + step * ai).collect();
    Ok(RectifyResult {
        constraint_value: dot(a, &u) + b,
        u_rect: u,
        active: true,
        fallback: false,
    })
}

/// Degree-1 condition `L_f h + L_g h·u + k₀ h ≥ 0`.
pub fn rectify(lf_h: f64, lg_h: &[f64], h: f64, k0: f64, u_nom: &[f64]) -> Result<RectifyResult> {
    if !(k0 > 0.0) {
        return Err(Error::InvalidArgument("k0 must be positive"));
    }
    rectify_affine(lg_h, lf_h + k0 * h, u_nom)
}

/// Exponential CBF for relative degree 2:
/// `L_f²h + L_gL_f h·u + (λ₁+λ₂) ḣ + λ₁λ₂ h ≥ 0`.
pub fn rectify_ecbf(
    lf2_h: f64,
    lglf_h: &[f64],
    hdot: f64,
    h: f64,
    poles: (f64, f64),
    u_nom: &[f64],
) -> Result<RectifyResult> {
    let (l1, l2) = poles;
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::InvalidArgument("ECBF poles must be positive"));
    }
    rectify_affine(lglf_h, lf2_h + (l1 + l2) * hdot + l1 * l2 * h, u_nom)
}

/// Scales `u` down uniformly so every component lies within `±limit`.
/// Forward invariance is no longer guaranteed once this bites.
pub fn clamp_input(u: &mut [f64], limit: f64) -> bool {
    let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > limit {
        let s = limit / peak;
        for v in u.iter_mut() {
            *v *= s;
        }
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn inactive_constraint_keeps_nominal() {
        let r = rectify(0.0, &[1.0, 0.0], 1.0, 1.0, &[0.3, -0.2]).unwrap();
        assert_eq!(r.u_rect, vec![0.3, -0.2]);
        assert!(!r.active && !r.fallback);
    }

    #[test]
    fn kkt_example_against_grid() {
        let r = rectify(0.0, &[1.0, 0.0], -1.0, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(r.u_rect, vec![1.0, 0.0]);
        assert!(r.active);
        // Grid search over [−3, 3]² at 0.01 resolution.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -300..=300 {
            for j in -300..=300 {
                let (u0, u1) = (i as f64 * 0.01, j as f64 * 0.01);
                if u0 - 1.0 >= 0.0 {
                    let c = u0 * u0 + u1 * u1;
                    if c < best.0 {
                        best = (c, u0, u1);
                    }
                }
            }
        }
        assert!((best.1 - 1.0).abs() < 1e-12 && best.2.abs() < 1e-12);
    }

    #[test]
    fn degenerate_gradient_falls_back() {
        let r = rectify(0.0, &[0.0, 0.0], -0.5, 1.0, &[0.4, 0.1]).unwrap();
        assert!(r.fallback);
        assert_eq!(r.u_rect, vec![0.0, 0.0]);
        let r = rectify_ecbf(0.0, &[0.0; 3], 0.0, -0.1, (1.0, 2.0), &[1.0, 0.0, 0.0]).unwrap();
        assert!(r.fallback);
    }

    #[test]
    fn ecbf_far_from_surface_is_passive() {
        let r = rectify_ecbf(
            0.0,
            &[0.0, 0.0, 0.1],
            0.0,
            2.0,
            (2.0, 3.0),
            &[0.5, 0.0, -1.0],
        )
        .unwrap();
        assert_eq!(r.u_rect, vec![0.5, 0.0, -1.0]);
    }

    #[test]
    fn clamp_scales_uniformly() {
        let mut u = [2.0, -4.0];
        assert!(clamp_input(&mut u, 1.0));
        assert_eq!(u, [0.5, -1.0]);
    }
}
