use gcbf_core::cbf::{eval_h, evaluate, grad_h, lie_degree1, PositionSelector};
use gcbf_core::gp_full::Observations;
use gcbf_core::sim::ChainModel;
use gcbf_core::{CbfConfig, GpModel, KernelFamily, KernelSpec, SparseGpModel, Vec3};
use nalgebra::DVector;
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn check(
    model: &dyn gcbf_core::cbf::SurfaceModel,
    cfg: &CbfConfig,
    q: &Vec3,
) -> Result<(), TestCaseError> {
    let e = evaluate(model, cfg, q, true).unwrap();
    let hess = e.hess.unwrap();
    let step = 1e-5;
    for a in 0..3 {
        let mut dp = *q;
        let mut dm = *q;
        dp[a] += step;
        dm[a] -= step;
        let fd = (eval_h(model, cfg, &dp) - eval_h(model, cfg, &dm)) / (2.0 * step);
        prop_assert!(
            rel_err(e.grad[a], fd) < 1e-5,
            "grad[{a}] {} vs {fd}",
            e.grad[a]
        );
        let gp = grad_h(model, cfg, &dp).unwrap();
        let gm = grad_h(model, cfg, &dm).unwrap();
        for b in 0..3 {
            let fd = (gp[b] - gm[b]) / (2.0 * step);
            prop_assert!(
                rel_err(hess[(b, a)], fd) < 1e-4,
                "hess[{b},{a}] {} vs {fd}",
                hess[(b, a)]
            );
        }
    }
    Ok(())
}

fn draw() -> impl Strategy<Value = (KernelSpec, Vec<Vec3>, Vec<f64>, f64, Vec3)> {
    (
        any::<bool>(),
        0.4..1.2f64,
        0.5..2.0f64,
        0.01..0.1f64,
        prop::collection::vec((point(1.0), -1.0..1.0f64), 4..25),
        -4.0..4.0f64,
        point(1.3),
    )
        .prop_map(|(matern, l, sf, sn, data, c, q)| {
            let family = if matern {
                KernelFamily::Matern32
            } else {
                KernelFamily::SquaredExp
            };
            let (x, y) = data.into_iter().unzip();
            (KernelSpec::isotropic(family, l, sf, sn), x, y, c, q)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_model_derivatives_match_fd((spec, x, y, c, q) in draw()) {
        prop_assume!(x.iter().all(|xi| (xi - q).norm() > 1e-3));
        let m = GpModel::fit(spec, Observations::new(&x, &y).unwrap()).unwrap();
        let cfg = CbfConfig { margin_coeff: c, ..CbfConfig::default() };
        check(&m, &cfg, &q)?;
    }

    #[test]
    fn sparse_model_derivatives_match_fd((spec, x, y, c, q) in draw(), seed in 0u64..100) {
        let m = (x.len() / 2).max(1);
        let s = SparseGpModel::fit(spec, Observations::new(&x, &y).unwrap(), m, seed).unwrap();
        prop_assume!(s.pseudo_inputs().iter().all(|z| (z - q).norm() > 1e-3));
        let cfg = CbfConfig { margin_coeff: c, ..CbfConfig::default() };
        check(&s, &cfg, &q)?;
    }

    #[test]
    fn manipulator_lg_matches_fd_through_kinematics(q in prop::collection::vec(-2.0..2.0f64, 7)) {
        let chain = ChainModel::generic_7dof();
        let x: Vec<Vec3> = (0..12).map(|i| Vec3::new(0.1 * i as f64 - 0.5, 0.3, 0.6)).collect();
        let y: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let m = GpModel::fit(KernelSpec::squared_exp_iso(0.4, 1.0, 0.01), Observations::new(&x, &y).unwrap()).unwrap();
        let cfg = CbfConfig { margin_coeff: 4.0, ..CbfConfig::default() };
        let p = chain.fk(&q);
        let jac = chain.jacobian(&q);
        let state = DVector::from_iterator(3, p.iter().copied());
        let d = lie_degree1(&m, &cfg, &state, &DVector::zeros(3), &jac, &PositionSelector::default()).unwrap();
        let step = 1e-6;
        for j in 0..7 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += step;
            qm[j] -= step;
            let fd = (eval_h(&m, &cfg, &chain.fk(&qp)) - eval_h(&m, &cfg, &chain.fk(&qm))) / (2.0 * step);
            prop_assert!((d.lg[j] - fd).abs() < 1e-4, "joint {j}: {} vs {fd}", d.lg[j]);
        }
        prop_assert_eq!(d.lf, 0.0);
    }
}
