//! Sparse pseudo-input GP (FITC).
//!
//! With `M` pseudo-inputs `Z`, the training covariance is approximated by
//! `Q_N + Λ + σ_n² I`, where `Q_N = K_NM K_M⁻¹ K_MN` and
//! `Λ = diag(K_N − Q_N)`. Everything is computed through
//! `V = L_M⁻¹ K_MN`, `D = Λ + σ_n²` and `B = I + V D⁻¹ Vᵀ = L_B L_Bᵀ`, so the
//! cost is O(N M²). `Q_M = K_M + K_MN D⁻¹ K_NM` factors as `(L_M L_B)(L_M L_B)ᵀ`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gp_full::{Observations, TrainReport, LN_2PI};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky_with_jitter, symmetrize, LowerFactor};
use crate::optim::{self, LbfgsConfig};
use crate::pointcloud::sorted_sample;
use crate::Vec3;

/// Floor on `Λ_i + σ_n²`, relative to `σ_f²`.
const D_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseGpModel {
    spec: KernelSpec,
    x: Vec<Vec3>,
    y: Vec<f64>,
    z: Vec<Vec3>,
    lambda: DVector<f64>,
    km: LowerFactor,
    lb: LowerFactor,
    w: DVector<f64>,
    p: DMatrix<f64>,
}

/// Shared FITC intermediates for one `(spec, X, y, Z)`.
struct Fitc {
    km: LowerFactor,
    /// `L_M⁻¹ K_MN`.
    v: DMatrix<f64>,
    lambda: DVector<f64>,
    d: DVector<f64>,
    lb: LowerFactor,
    /// `L_B⁻¹ V D^{-1/2}`.
    e: DMatrix<f64>,
    /// `Σ⁻¹ y`.
    beta: DVector<f64>,
    lml: f64,
}

fn fitc(spec: &KernelSpec, x: &[Vec3], y: &[f64], z: &[Vec3]) -> Result<Fitc> {
    let n = x.len();
    let m = z.len();
    let sf = spec.signal_var();
    let km = cholesky_with_jitter(&spec.gram(z))?.factor;
    let mut v = spec.cross_matrix(z, x, false)?;
    km.solve_lower_mat(&mut v);
    let floor = D_FLOOR * sf;
    let mut lambda = DVector::zeros(n);
    let mut d = DVector::zeros(n);
    for i in 0..n {
        let q = v.column(i).norm_squared();
        lambda[i] = (sf - q).max(0.0);
        d[i] = (lambda[i] + spec.noise_var()).max(floor);
    }
    let mut vd = v.clone();
    for i in 0..n {
        let s = 1.0 / d[i].sqrt();
        vd.column_mut(i).scale_mut(s);
    }
    let mut b = vd.clone() * vd.transpose();
    for j in 0..m {
        b[(j, j)] += 1.0;
    }
    let lb = cholesky_with_jitter(&b)?.factor;
    let mut e = vd;
    lb.solve_lower_mat(&mut e);

    // β = D^{-1/2}(I − EᵀE) D^{-1/2} y
    let ys = DVector::from_iterator(n, (0..n).map(|i| y[i] / d[i].sqrt()));
    let ey = &e * &ys;
    let inner = &ys - e.tr_mul(&ey);
    let beta = DVector::from_iterator(n, (0..n).map(|i| inner[i] / d[i].sqrt()));

    let log_det = d.iter().map(|v| v.ln()).sum::<f64>() + lb.log_det();
    let lml = -0.5 * y.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>()
        - 0.5 * log_det
        - 0.5 * n as f64 * LN_2PI;
    Ok(Fitc {
        km,
        v,
        lambda,
        d,
        lb,
        e,
        beta,
        lml,
    })
}

fn check_m(m: usize, n: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::InvalidM { m, n });
    }
    Ok(())
}

/// Seeded random subset of the training inputs.
pub fn initial_pseudo_inputs(x: &[Vec3], m: usize, seed: u64) -> Result<Vec<Vec3>> {
    check_m(m, x.len())?;
    Ok(sorted_sample(x.len(), m, seed)
        .into_iter()
        .map(|i| x[i])
        .collect())
}

impl SparseGpModel {
    /// Fits with pseudo-inputs drawn as a seeded subset of the inputs.
    pub fn fit(spec: KernelSpec, data: Observations<'_>, m: usize, seed: u64) -> Result<Self> {
        let z = initial_pseudo_inputs(data.inputs, m, seed)?;
        Self::fit_with_pseudo_inputs(spec, data, z)
    }

    pub fn fit_with_pseudo_inputs(
        spec: KernelSpec,
        data: Observations<'_>,
        z: Vec<Vec3>,
    ) -> Result<Self> {
        spec.validate()?;
        check_m(z.len(), data.len())?;
        let f = fitc(&spec, data.inputs, data.targets, &z)?;
        let m = z.len();
        // w = L_M⁻ᵀ L_B⁻ᵀ L_B⁻¹ V D⁻¹ y = L_M⁻ᵀ L_B⁻ᵀ E D^{-1/2} y
        let ys = DVector::from_iterator(
            data.len(),
            (0..data.len()).map(|i| data.targets[i] / f.d[i].sqrt()),
        );
        let mut w = &f.e * ys;
        f.lb.solve_upper_in_place(w.as_mut_slice());
        f.km.solve_upper_in_place(w.as_mut_slice());

        // P = K_M⁻¹ − Q_M⁻¹ = L_M⁻ᵀ (I − B⁻¹) L_M⁻¹
        let lm_inv = f.km.inverse_factor();
        let mut inner = DMatrix::identity(m, m) - f.lb.inverse();
        symmetrize(&mut inner);
        let mut p = lm_inv.transpose() * (inner * &lm_inv);
        symmetrize(&mut p);
        Ok(Self {
            spec,
            x: data.inputs.to_vec(),
            y: data.targets.to_vec(),
            z,
            lambda: f.lambda,
            km: f.km,
            lb: f.lb,
            w,
            p,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn inputs(&self) -> &[Vec3] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn pseudo_inputs(&self) -> &[Vec3] {
        &self.z
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// Cholesky factor of `K_M` (with jitter).
    pub fn km_chol(&self) -> &LowerFactor {
        &self.km
    }

    /// Cholesky factor of `B = I + V D⁻¹ Vᵀ`.
    pub fn b_chol(&self) -> &LowerFactor {
        &self.lb
    }

    /// Cholesky factor of `Q_M`, i.e. `L_M L_B`.
    pub fn qm_chol(&self) -> LowerFactor {
        let mut l = self.km.matrix() * self.lb.matrix();
        let m = l.nrows();
        for j in 1..m {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        LowerFactor::from_lower(l)
    }

    /// Mean weights: `μ(x*) = k_M(x*)ᵀ w`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    /// `K_M⁻¹ − Q_M⁻¹`, symmetrized.
    pub fn p_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn m(&self) -> usize {
        self.z.len()
    }

    fn kvec(&self, xq: &Vec3) -> DVector<f64> {
        DVector::from_iterator(
            self.z.len(),
            self.z.iter().map(|zi| self.spec.eval_signal(zi, xq)),
        )
    }

    pub fn predict_mean(&self, xq: &Vec3) -> f64 {
        self.z
            .iter()
            .zip(self.w.iter())
            .map(|(zi, w)| w * self.spec.eval_signal(zi, xq))
            .sum()
    }

    /// `k** − k_Mᵀ P k_M`, evaluated as `k** − ‖L_M⁻¹k‖² + ‖L_B⁻¹L_M⁻¹k‖²`.
    pub fn predict_var(&self, xq: &Vec3) -> f64 {
        self.predict(xq).1
    }

    pub fn predict(&self, xq: &Vec3) -> (f64, f64) {
        let mut a = self.kvec(xq);
        let mean = a.dot(&self.w);
        self.km.solve_lower_in_place(a.as_mut_slice());
        let s1 = a.norm_squared();
        self.lb.solve_lower_in_place(a.as_mut_slice());
        let s2 = a.norm_squared();
        (mean, (self.spec.prior_var() - s1 + s2).max(0.0))
    }
}

/// Gradients of the FITC log marginal likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLmlGrad {
    /// With respect to `spec.log_params()`.
    pub hyper: Vec<f64>,
    /// With respect to each pseudo-input coordinate.
    pub pseudo: Vec<Vec3>,
}

/// FITC log marginal likelihood with covariance `Q_N + Λ + σ_n² I`, and its
/// analytic gradient.
pub fn sparse_lml(
    spec: &KernelSpec,
    data: Observations<'_>,
    z: &[Vec3],
) -> Result<(f64, SparseLmlGrad)> {
    spec.validate()?;
    let n = data.len();
    let m = z.len();
    check_m(m, n)?;
    let x = data.inputs;
    let f = fitc(spec, x, data.targets, z)?;

    // diag(W) for W = ββᵀ − Σ⁻¹, with diag(Σ⁻¹)_i = (1 − ‖E_i‖²)/D_i.
    let wd = DVector::from_iterator(
        n,
        (0..n).map(|i| f.beta[i] * f.beta[i] - (1.0 - f.e.column(i).norm_squared()) / f.d[i]),
    );
    // U = K_M⁻¹ K_MN = L_M⁻ᵀ V
    let mut u = f.v.clone();
    f.km.solve_upper_mat(&mut u);
    // G = (Uβ)βᵀ − U Σ⁻¹ − U diag(w), with
    // U Σ⁻¹ = U D⁻¹ − (U D^{-1/2} Eᵀ) E D^{-1/2}.
    let dinv_sqrt = f.d.map(|v| 1.0 / v.sqrt());
    let mut uds = u.clone();
    for i in 0..n {
        uds.column_mut(i).scale_mut(dinv_sqrt[i]);
    }
    let c = &uds * f.e.transpose();
    let mut ce = &c * &f.e;
    for i in 0..n {
        ce.column_mut(i).scale_mut(dinv_sqrt[i]);
    }
    let ub = &u * &f.beta;
    let mut g = ce;
    for i in 0..n {
        let scale = -(dinv_sqrt[i] * dinv_sqrt[i]) - wd[i];
        let b = f.beta[i];
        for j in 0..m {
            g[(j, i)] += ub[j] * b + scale * u[(j, i)];
        }
    }
    let mut h = &g * u.transpose();
    symmetrize(&mut h);

    let np = spec.n_params();
    let mut hyper = vec![0.0; np];
    let mut dk = vec![0.0; np];
    let mut pseudo = vec![Vec3::zeros(); m];
    for j in 0..m {
        for i in 0..n {
            let gji = g[(j, i)];
            spec.grad_log_params(&x[i], &z[j], &mut dk);
            for (acc, d) in hyper.iter_mut().zip(&dk) {
                *acc += gji * d;
            }
            pseudo[j] += spec.grad_second(&x[i], &z[j]) * gji;
        }
        for l in 0..m {
            let hjl = h[(j, l)];
            spec.grad_log_params(&z[j], &z[l], &mut dk);
            for (acc, d) in hyper.iter_mut().zip(&dk) {
                *acc -= 0.5 * hjl * d;
            }
            if l != j {
                pseudo[j] -= spec.grad_second(&z[l], &z[j]) * hjl;
            }
        }
    }
    let wsum = wd.sum();
    for i in 0..n {
        spec.grad_log_params(&x[i], &x[i], &mut dk);
        for (acc, d) in hyper.iter_mut().zip(&dk) {
            *acc += 0.5 * wd[i] * d;
        }
    }
    hyper[spec.noise_index()] = 0.5 * spec.noise_var() * wsum;
    Ok((f.lml, SparseLmlGrad { hyper, pseudo }))
}

/// Jointly optimizes log-hyperparameters and pseudo-inputs for `max_iters`
/// L-BFGS iterations, starting from a seeded subset of the inputs, then fits.
pub fn optimize_sparse(
    spec: &KernelSpec,
    data: Observations<'_>,
    m: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(SparseGpModel, TrainReport)> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1"));
    }
    spec.validate()?;
    let z0 = initial_pseudo_inputs(data.inputs, m, seed)?;
    let np = spec.n_params();
    let (mut lo, mut hi) = spec.log_param_bounds();
    lo.resize(np + 3 * m, f64::NEG_INFINITY);
    hi.resize(np + 3 * m, f64::INFINITY);
    let mut theta0 = spec.log_params();
    for zj in &z0 {
        theta0.extend_from_slice(zj.as_slice());
    }
    let unpack = |theta: &[f64]| {
        let s = spec.with_log_params(&theta[..np]);
        let z: Vec<Vec3> = theta[np..]
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();
        (s, z)
    };
    let cfg = LbfgsConfig {
        max_iters,
        ..LbfgsConfig::default()
    };
    let r = optim::minimize(
        |theta: &[f64]| {
            let (s, z) = unpack(theta);
            let (v, g) = sparse_lml(&s, data, &z)?;
            let mut out: Vec<f64> = g.hyper.iter().map(|d| -d).collect();
            for p in &g.pseudo {
                out.extend(p.iter().map(|d| -d));
            }
            Ok::<_, Error>((-v, out))
        },
        &theta0,
        &lo,
        &hi,
        &cfg,
    )?;
    let (s, z) = unpack(&r.x);
    let model = SparseGpModel::fit_with_pseudo_inputs(s, data, z)?;
    Ok((
        model,
        TrainReport {
            initial_lml: -r.initial_value,
            final_lml: -r.value,
            iterations: r.iterations,
            evaluations: r.evaluations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp_full::{log_marginal_likelihood, GpModel};

    fn dataset(n: usize, seed: u64) -> (Vec<Vec3>, Vec<f64>) {
        let mut s = seed
            .wrapping_mul(2862933555777941757)
            .wrapping_add(3037000493);
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let x: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(next(), next(), next()) * 2.0 - Vec3::repeat(1.0))
            .collect();
        let y = x
            .iter()
            .map(|p| p.norm() - 0.6 + 0.1 * (5.0 * p.x).sin())
            .collect();
        (x, y)
    }

    #[test]
    fn m_zero_is_rejected() {
        let (x, y) = dataset(5, 1);
        let obs = Observations::new(&x, &y).unwrap();
        let spec = KernelSpec::squared_exp_iso(0.5, 1.0, 0.01);
        assert_eq!(
            SparseGpModel::fit(spec.clone(), obs, 0, 0).unwrap_err(),
            Error::InvalidM { m: 0, n: 5 }
        );
        assert!(SparseGpModel::fit(spec, obs, 6, 0).is_err());
    }

    #[test]
    fn collapses_to_full_gp_when_z_equals_x() {
        let (x, y) = dataset(30, 2);
        let obs = Observations::new(&x, &y).unwrap();
        let spec = KernelSpec::squared_exp([0.4, 0.5, 0.3], 1.0, 0.01);
        let full = GpModel::fit(spec.clone(), obs).unwrap();
        let sparse = SparseGpModel::fit_with_pseudo_inputs(spec.clone(), obs, x.clone()).unwrap();
        assert!(sparse.lambda().amax() < 1e-8);
        let (qx, _) = dataset(20, 9);
        for q in &qx {
            let (mf, vf) = full.predict(q);
            let (ms, vs) = sparse.predict(q);
            assert!((mf - ms).abs() < 1e-6, "{mf} {ms}");
            assert!((vf - vs).abs() < 1e-6, "{vf} {vs}");
        }
        let lf = log_marginal_likelihood(&spec, obs).unwrap().0;
        let ls = sparse_lml(&spec, obs, &x).unwrap().0;
        assert!((lf - ls).abs() < 1e-6, "{lf} {ls}");
    }

    #[test]
    fn single_point_closed_form() {
        let x = [Vec3::new(0.1, 0.0, 0.0)];
        let y = [0.7];
        let spec = KernelSpec::squared_exp_iso(0.5, 2.0, 0.1);
        let s = SparseGpModel::fit_with_pseudo_inputs(
            spec.clone(),
            Observations::new(&x, &y).unwrap(),
            x.to_vec(),
        )
        .unwrap();
        let q = Vec3::new(0.3, 0.1, 0.0);
        let k = spec.eval_signal(&x[0], &q);
        let mean = k * 0.7 / 2.1;
        let var = 2.0 - k * k / 2.1;
        assert!((s.predict_mean(&q) - mean).abs() < 1e-9);
        assert!((s.predict_var(&q) - var).abs() < 1e-9);
    }

    #[test]
    fn var_via_p_matrix_matches_whitened_form() {
        let (x, y) = dataset(40, 3);
        let obs = Observations::new(&x, &y).unwrap();
        let s = SparseGpModel::fit(KernelSpec::matern32(0.5, 1.0, 0.02), obs, 10, 4).unwrap();
        let p = s.p_matrix();
        assert!((p - p.transpose()).amax() <= 1e-8 * p.amax());
        let q = Vec3::new(0.2, -0.3, 0.1);
        let k = DVector::from_iterator(
            10,
            s.pseudo_inputs()
                .iter()
                .map(|z| s.spec().eval_signal(z, &q)),
        );
        let via_p = s.spec().prior_var() - k.dot(&(p * &k));
        assert!((via_p - s.predict_var(&q)).abs() < 1e-8);
        let far = Vec3::new(50.0, 0.0, 0.0);
        assert!(s.predict_mean(&far).abs() < 1e-6);
        assert!((s.predict_var(&far) - 1.0).abs() < 1e-6);
    }

    fn fd_check(spec: &KernelSpec, x: &[Vec3], y: &[f64], z: &[Vec3]) {
        let obs = Observations::new(x, y).unwrap();
        let (_, g) = sparse_lml(spec, obs, z).unwrap();
        let theta = spec.log_params();
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-2);
        for p in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[p] += h;
            tm[p] -= h;
            let fd = (sparse_lml(&spec.with_log_params(&tp), obs, z).unwrap().0
                - sparse_lml(&spec.with_log_params(&tm), obs, z).unwrap().0)
                / (2.0 * h);
            assert!(
                rel(g.hyper[p], fd) < 1e-4,
                "hyper {p}: {} vs {fd}",
                g.hyper[p]
            );
        }
        for j in 0..z.len() {
            for a in 0..3 {
                let mut zp = z.to_vec();
                let mut zm = z.to_vec();
                zp[j][a] += h;
                zm[j][a] -= h;
                let fd = (sparse_lml(spec, obs, &zp).unwrap().0
                    - sparse_lml(spec, obs, &zm).unwrap().0)
                    / (2.0 * h);
                assert!(
                    rel(g.pseudo[j][a], fd) < 1e-4,
                    "z[{j}][{a}]: {} vs {fd}",
                    g.pseudo[j][a]
                );
            }
        }
    }

    #[test]
    fn lml_gradients_match_finite_differences() {
        let (x, y) = dataset(25, 5);
        let z = [x[0], x[7], x[13] + Vec3::new(0.05, 0.0, -0.02), x[20]];
        fd_check(
            &KernelSpec::squared_exp([0.5, 0.7, 0.6], 1.1, 0.05),
            &x,
            &y,
            &z,
        );
        fd_check(&KernelSpec::matern32(0.6, 0.9, 0.04), &x, &y, &z);
    }

    #[test]
    fn optimization_is_monotone_and_deterministic() {
        let (x, y) = dataset(60, 6);
        let obs = Observations::new(&x, &y).unwrap();
        let spec = KernelSpec::squared_exp_iso(0.5, 1.0, 0.05);
        let (a, r) = optimize_sparse(&spec, obs, 12, 5, 3).unwrap();
        assert!(r.final_lml > r.initial_lml);
        let (b, _) = optimize_sparse(&spec, obs, 12, 5, 3).unwrap();
        assert_eq!(a, b);
        let (_, r1) = optimize_sparse(&spec, obs, 12, 1, 3).unwrap();
        assert!(r1.final_lml >= r1.initial_lml);
    }
}
