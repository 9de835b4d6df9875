use gcbf_core::safety_filter::{rectify, rectify_affine, rectify_ecbf};
use proptest::prelude::*;

/// Projection onto `{u : a·u + b ≥ 0}` by maximizing the concave dual
/// `λ ↦ −½λ²‖a‖² − λ(a·u₀ + b)` over `λ ≥ 0` with a bracketing search.
fn dual_oracle(a: &[f64], b: f64, u0: &[f64]) -> Vec<f64> {
    let aa: f64 = a.iter().map(|v| v * v).sum();
    let slack: f64 = a.iter().zip(u0).map(|(x, y)| x * y).sum::<f64>() + b;
    let dual = |l: f64| -0.5 * l * l * aa - l * slack;
    let (mut lo, mut hi) = (0.0, 1.0);
    while dual(hi) > dual(hi / 2.0) || hi < 1e-300 {
        hi *= 2.0;
        if hi > 1e30 {
            break;
        }
    }
    for _ in 0..400 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dual(m1) < dual(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let l = 0.5 * (lo + hi);
    u0.iter().zip(a).map(|(u, x)| u + l * x).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn instance() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|m| {
        (
            prop::collection::vec(-3.0..3.0f64, m),
            -5.0..5.0f64,
            prop::collection::vec(-3.0..3.0f64, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn matches_dual_oracle((a, b, u0) in instance()) {
        prop_assume!(dot(&a, &a) > 1e-6);
        let r = rectify_affine(&a, b, &u0).unwrap();
        let oracle = dual_oracle(&a, b, &u0);
        let scale = 1.0 + dist(&oracle, &vec![0.0; a.len()]);
        prop_assert!(dist(&r.u_rect, &oracle) < 1e-6 * scale);
    }

    #[test]
    fn feasible_minimal_and_complementary((a, b, u0) in instance(), probe in prop::collection::vec(-3.0..3.0f64, 4)) {
        prop_assume!(dot(&a, &a) > 1e-6);
        let r = rectify_affine(&a, b, &u0).unwrap();
        let c = dot(&a, &r.u_rect) + b;
        prop_assert!(c >= -1e-9);
        prop_assert!((r.constraint_value - c).abs() < 1e-9);
        if r.active {
            prop_assert!(c.abs() < 1e-9);
            // The correction is a non-negative multiple of a.
            let d: Vec<f64> = r.u_rect.iter().zip(&u0).map(|(x, y)| x - y).collect();
            prop_assert!(dot(&d, &a) >= 0.0);
            prop_assert!((dot(&d, &a).powi(2) - dot(&d, &d) * dot(&a, &a)).abs() < 1e-8 * (1.0 + dot(&d, &d) * dot(&a, &a)));
        } else {
            prop_assert_eq!(&r.u_rect, &u0);
        }
        // No feasible probe is closer to the nominal input.
        let p = &probe[..a.len()];
        if dot(&a, p) + b >= 0.0 {
            prop_assert!(dist(p, &u0) >= dist(&r.u_rect, &u0) - 1e-9);
        }
    }

    #[test]
    fn rectification_is_idempotent((a, b, u0) in instance()) {
        prop_assume!(dot(&a, &a) > 1e-6);
        let once = rectify_affine(&a, b, &u0).unwrap();
        let twice = rectify_affine(&a, b, &once.u_rect).unwrap();
        prop_assert!(dist(&once.u_rect, &twice.u_rect) < 1e-9);
    }

    #[test]
    fn degree_wrappers_build_the_same_constraint(
        (lg, lf, u0) in instance(),
        h in 0.0..2.0f64,
        hdot in -2.0..2.0f64,
        k0 in 0.1..5.0f64,
        l1 in 0.1..5.0f64,
        l2 in 0.1..5.0f64,
    ) {
        let d1 = rectify(lf, &lg, h, k0, &u0).unwrap();
        let a1 = rectify_affine(&lg, lf + k0 * h, &u0).unwrap();
        prop_assert_eq!(d1, a1);
        let d2 = rectify_ecbf(lf, &lg, hdot, h, (l1, l2), &u0).unwrap();
        let a2 = rectify_affine(&lg, lf + (l1 + l2) * hdot + l1 * l2 * h, &u0).unwrap();
        prop_assert_eq!(d2, a2);
    }
}
