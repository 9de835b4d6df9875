//! Gaussian control barrier functions `h(x) = μ(x) + c·σ²(x)`.
//!
//! Both model types reduce to the same shape: a kernel, a set of centres
//! `x_i`, mean weights `w` with `μ = Σ w_i k(x_i, x)`, and a variance
//! `σ² = k** − kᵀ P k` where `P = W₁ᵀW₁ − W₁ᵀW₂ᵀW₂W₁` is expressed through one
//! or two triangular factors (`W = L⁻¹`). The exact GP uses only
//! `L₁ = chol(K + σ_n² I)`; FITC uses `L₁ = L_M` and `L₂ = L_B`. With
//! `b = P k` and `J` the stacked kernel gradients:
//!
//! ```text
//! ∇σ² = −2 Jᵀ b
//! Hσ² = −2 Σ b_i ∇²k_i − 2 (G₁ᵀG₁ − G₂ᵀG₂),   G₁ = W₁J, G₂ = W₂G₁
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp_full::GpModel;
use crate::gp_sparse::SparseGpModel;
use crate::kernel::KernelSpec;
use crate::linalg::LowerFactor;
use crate::{Mat3, Vec3};

/// A fitted surface model usable as a barrier.
pub trait SurfaceModel {
    fn kernel(&self) -> &KernelSpec;
    /// Kernel centres: training inputs or pseudo-inputs.
    fn centers(&self) -> &[Vec3];
    fn mean_weights(&self) -> &DVector<f64>;
    /// Whitening factors `(L₁, L₂)` defining the variance.
    fn factors(&self) -> (&LowerFactor, Option<&LowerFactor>);
}

impl SurfaceModel for GpModel {
    fn kernel(&self) -> &KernelSpec {
        self.spec()
    }
    fn centers(&self) -> &[Vec3] {
        self.inputs()
    }
    fn mean_weights(&self) -> &DVector<f64> {
        self.alpha()
    }
    fn factors(&self) -> (&LowerFactor, Option<&LowerFactor>) {
        (self.chol(), None)
    }
}

impl SurfaceModel for SparseGpModel {
    fn kernel(&self) -> &KernelSpec {
        self.spec()
    }
    fn centers(&self) -> &[Vec3] {
        self.pseudo_inputs()
    }
    fn mean_weights(&self) -> &DVector<f64> {
        self.weights()
    }
    fn factors(&self) -> (&LowerFactor, Option<&LowerFactor>) {
        (self.km_chol(), Some(self.b_chol()))
    }
}

/// Either model type behind one value.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Full(GpModel),
    Sparse(SparseGpModel),
}

impl AnyModel {
    /// Posterior mean and variance.
    pub fn predict(&self, xq: &Vec3) -> (f64, f64) {
        match self {
            AnyModel::Full(m) => m.predict(xq),
            AnyModel::Sparse(m) => m.predict(xq),
        }
    }

    fn inner(&self) -> &dyn SurfaceModel {
        match self {
            AnyModel::Full(m) => m,
            AnyModel::Sparse(m) => m,
        }
    }
}

impl SurfaceModel for AnyModel {
    fn kernel(&self) -> &KernelSpec {
        self.inner().kernel()
    }
    fn centers(&self) -> &[Vec3] {
        self.inner().centers()
    }
    fn mean_weights(&self) -> &DVector<f64> {
        self.inner().mean_weights()
    }
    fn factors(&self) -> (&LowerFactor, Option<&LowerFactor>) {
        self.inner().factors()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CbfConfig {
    /// `c` in `h = μ + c·σ²`; may be negative.
    pub margin_coeff: f64,
    /// `k₀` in the degree-1 condition `ḣ ≥ −k₀ h`.
    pub alpha_gain: f64,
    /// `(λ₁, λ₂)` for the exponential CBF on degree-2 systems.
    pub ecbf_poles: (f64, f64),
}

impl Default for CbfConfig {
    fn default() -> Self {
        Self {
            margin_coeff: 1.0,
            alpha_gain: 1.0,
            ecbf_poles: (2.0, 2.0),
        }
    }
}

impl CbfConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.margin_coeff.is_finite() {
            return Err(Error::InvalidArgument("margin coefficient must be finite"));
        }
        if !(self.alpha_gain > 0.0 && self.alpha_gain.is_finite()) {
            return Err(Error::InvalidArgument("alpha gain must be positive"));
        }
        let (a, b) = self.ecbf_poles;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument("ECBF poles must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CbfEvaluation {
    pub h: f64,
    pub mean: f64,
    pub var: f64,
    pub grad: Vec3,
    pub hess: Option<Mat3>,
}

fn kernel_vector<M: SurfaceModel + ?Sized>(model: &M, xq: &Vec3) -> DVector<f64> {
    let k = model.kernel();
    let c = model.centers();
    DVector::from_iterator(c.len(), c.iter().map(|xi| k.eval_signal(xi, xq)))
}

/// `(μ, σ², a₁, a₂)` with `a₁ = W₁k`, `a₂ = W₂a₁`.
fn moments<M: SurfaceModel + ?Sized>(
    model: &M,
    k: &DVector<f64>,
) -> (f64, f64, DVector<f64>, Option<DVector<f64>>) {
    let mean = k.dot(model.mean_weights());
    let (l1, l2) = model.factors();
    let mut a1 = k.clone();
    l1.solve_lower_in_place(a1.as_mut_slice());
    let mut var = model.kernel().prior_var() - a1.norm_squared();
    let a2 = l2.map(|l2| {
        let mut a2 = a1.clone();
        l2.solve_lower_in_place(a2.as_mut_slice());
        var += a2.norm_squared();
        a2
    });
    (mean, var.max(0.0), a1, a2)
}

/// `h(xq)`. Defined everywhere, including at kernel centres.
pub fn eval_h<M: SurfaceModel + ?Sized>(model: &M, cfg: &CbfConfig, xq: &Vec3) -> f64 {
    let k = kernel_vector(model, xq);
    let (mean, var, _, _) = moments(model, &k);
    mean + cfg.margin_coeff * var
}

/// Value, gradient and (optionally) Hessian of `h` at `xq`.
pub fn evaluate<M: SurfaceModel + ?Sized>(
    model: &M,
    cfg: &CbfConfig,
    xq: &Vec3,
    with_hess: bool,
) -> Result<CbfEvaluation> {
    let spec = model.kernel();
    let centers = model.centers();
    let n = centers.len();
    let c = cfg.margin_coeff;
    let k = kernel_vector(model, xq);
    let (mean, var, a1, a2) = moments(model, &k);
    let (l1, l2) = model.factors();

    // b = P k = W₁ᵀ (a₁ − W₂ᵀ a₂)
    let mut b = a1;
    if let (Some(l2), Some(mut a2)) = (l2, a2) {
        l2.solve_upper_in_place(a2.as_mut_slice());
        b -= a2;
    }
    l1.solve_upper_in_place(b.as_mut_slice());

    let w = model.mean_weights();
    let mut jac = DMatrix::zeros(n, 3);
    let mut grad = Vec3::zeros();
    let mut hess = Mat3::zeros();
    for (i, xi) in centers.iter().enumerate() {
        let g = spec.grad_x(xi, xq)?;
        let coef = w[i] - 2.0 * c * b[i];
        grad += g * coef;
        if with_hess {
            jac.row_mut(i).copy_from(&g.transpose());
            hess += spec.hess_x(xi, xq)? * coef;
        }
    }
    let hess = if with_hess {
        l1.solve_lower_mat(&mut jac);
        let mut quad = jac.tr_mul(&jac);
        if let Some(l2) = l2 {
            l2.solve_lower_mat(&mut jac);
            quad -= jac.tr_mul(&jac);
        }
        for r in 0..3 {
            for s in 0..3 {
                hess[(r, s)] -= 2.0 * c * quad[(r, s)];
            }
        }
        Some((hess + hess.transpose()) * 0.5)
    } else {
        None
    };
    Ok(CbfEvaluation {
        h: mean + c * var,
        mean,
        var,
        grad,
        hess,
    })
}

pub fn grad_h<M: SurfaceModel + ?Sized>(model: &M, cfg: &CbfConfig, xq: &Vec3) -> Result<Vec3> {
    Ok(evaluate(model, cfg, xq, false)?.grad)
}

pub fn hess_h<M: SurfaceModel + ?Sized>(model: &M, cfg: &CbfConfig, xq: &Vec3) -> Result<Mat3> {
    Ok(evaluate(model, cfg, xq, true)?.hess.expect("requested"))
}

/// Which state coordinates hold the 3-D position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionSelector(pub [usize; 3]);

impl Default for PositionSelector {
    fn default() -> Self {
        Self([0, 1, 2])
    }
}

impl PositionSelector {
    pub fn position(&self, state: &DVector<f64>) -> Vec3 {
        Vec3::new(state[self.0[0]], state[self.0[1]], state[self.0[2]])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Degree1 {
    pub h: f64,
    pub lf: f64,
    pub lg: DVector<f64>,
}

/// `L_f h = ∇hᵀ f_pos` and `L_g h = ∇hᵀ g_pos` for the position rows of the
/// drift and input matrices.
pub fn lie_from_position_rows(
    grad: &Vec3,
    f_pos: &Vec3,
    g_pos: &DMatrix<f64>,
) -> (f64, DVector<f64>) {
    assert_eq!(g_pos.nrows(), 3);
    (grad.dot(f_pos), g_pos.tr_mul(grad))
}

/// Degree-1 Lie derivatives for `ẋ = f(x) + g(x) u`. Coordinates outside the
/// selector do not enter `h`.
pub fn lie_degree1<M: SurfaceModel + ?Sized>(
    model: &M,
    cfg: &CbfConfig,
    state: &DVector<f64>,
    f_val: &DVector<f64>,
    g_val: &DMatrix<f64>,
    sel: &PositionSelector,
) -> Result<Degree1> {
    if f_val.len() != state.len() || g_val.nrows() != state.len() {
        return Err(Error::DimensionMismatch {
            expected: state.len(),
            found: if f_val.len() != state.len() {
                f_val.len()
            } else {
                g_val.nrows()
            },
        });
    }
    let e = evaluate(model, cfg, &sel.position(state), false)?;
    let f_pos = sel.position(f_val);
    let mut g_pos = DMatrix::zeros(3, g_val.ncols());
    for (r, &idx) in sel.0.iter().enumerate() {
        g_pos.row_mut(r).copy_from(&g_val.row(idx));
    }
    let (lf, lg) = lie_from_position_rows(&e.grad, &f_pos, &g_pos);
    Ok(Degree1 { h: e.h, lf, lg })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Degree2 {
    pub h: f64,
    pub hdot: f64,
    /// `L_f² h = vᵀ H v`.
    pub lf2: f64,
    /// `L_g L_f h = ∇hᵀ`, acting on the acceleration input.
    pub lglf: Vec3,
}

/// Lie derivatives along the double integrator `ṗ = v, v̇ = u`.
pub fn lie_degree2<M: SurfaceModel + ?Sized>(
    model: &M,
    cfg: &CbfConfig,
    p: &Vec3,
    v: &Vec3,
) -> Result<Degree2> {
    let e = evaluate(model, cfg, p, true)?;
    let hess = e.hess.expect("requested");
    Ok(Degree2 {
        h: e.h,
        hdot: e.grad.dot(v),
        lf2: v.dot(&(hess * v)),
        lglf: e.grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp_full::Observations;
    use alloc::vec::Vec;

    fn sphere_model(spec: KernelSpec) -> GpModel {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let t = i as f64 * 2.399_963;
            let zc = 1.0 - 2.0 * (i as f64 + 0.5) / 40.0;
            let r = (1.0 - zc * zc).sqrt();
            let n = Vec3::new(r * t.cos(), r * t.sin(), zc);
            x.push(n * 0.5);
            y.push(0.0);
            if i % 2 == 0 {
                x.push(n * 0.6);
                y.push(1.0);
                x.push(n * 0.4);
                y.push(-1.0);
            }
        }
        GpModel::fit(spec, Observations::new(&x, &y).unwrap()).unwrap()
    }

    fn fd_grad<M: SurfaceModel>(m: &M, cfg: &CbfConfig, x: &Vec3) -> Vec3 {
        let h = 1e-6;
        Vec3::from_fn(|a, _| {
            let mut p = *x;
            let mut q = *x;
            p[a] += h;
            q[a] -= h;
            (eval_h(m, cfg, &p) - eval_h(m, cfg, &q)) / (2.0 * h)
        })
    }

    #[test]
    fn prior_only_model_is_constant() {
        let m = GpModel::prior(KernelSpec::squared_exp_iso(0.3, 2.0, 0.0)).unwrap();
        let cfg = CbfConfig::default();
        let e = evaluate(&m, &cfg, &Vec3::new(1.0, 2.0, 3.0), true).unwrap();
        assert_eq!(e.h, 2.0);
        assert_eq!(e.grad, Vec3::zeros());
        assert_eq!(e.hess.unwrap(), Mat3::zeros());
    }

    #[test]
    fn gradient_and_hessian_match_fd_on_sphere() {
        for spec in [
            KernelSpec::squared_exp_iso(0.3, 1.0, 0.01),
            KernelSpec::matern32(0.4, 1.0, 0.01),
        ] {
            let m = sphere_model(spec);
            let cfg = CbfConfig {
                margin_coeff: 4.0,
                ..Default::default()
            };
            for q in [
                Vec3::new(0.3, 0.2, -0.4),
                Vec3::new(0.9, -0.1, 0.2),
                Vec3::new(0.05, 0.02, 0.1),
            ] {
                let e = evaluate(&m, &cfg, &q, true).unwrap();
                let fd = fd_grad(&m, &cfg, &q);
                assert!(
                    (e.grad - fd).norm() <= 1e-5 * fd.norm().max(1e-2),
                    "{e:?} {fd}"
                );
                let hess = e.hess.unwrap();
                let h = 1e-5;
                for a in 0..3 {
                    let mut p = q;
                    let mut r = q;
                    p[a] += h;
                    r[a] -= h;
                    let col =
                        (grad_h(&m, &cfg, &p).unwrap() - grad_h(&m, &cfg, &r).unwrap()) / (2.0 * h);
                    assert!((hess.column(a) - col).norm() <= 1e-4 * hess.norm().max(1e-2));
                }
            }
        }
    }

    #[test]
    fn sign_convention_on_sphere() {
        let m = sphere_model(KernelSpec::squared_exp_iso(0.3, 1.0, 0.01));
        let cfg = CbfConfig {
            margin_coeff: 0.0,
            ..Default::default()
        };
        assert!(eval_h(&m, &cfg, &Vec3::zeros()) < 0.0);
        assert!(eval_h(&m, &cfg, &Vec3::new(0.0, 0.0, 1.0)) > 0.0);
    }

    #[test]
    fn symmetric_pair_has_zero_axial_gradient() {
        let x = [Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let y = [0.5, 0.5];
        let m = GpModel::fit(
            KernelSpec::squared_exp_iso(0.8, 1.0, 0.01),
            Observations::new(&x, &y).unwrap(),
        )
        .unwrap();
        let g = grad_h(&m, &CbfConfig::default(), &Vec3::new(0.0, 0.3, 0.0)).unwrap();
        assert!(g.x.abs() < 1e-9);
    }

    #[test]
    fn lie_examples() {
        let (lf, lg) = lie_from_position_rows(
            &Vec3::new(0.0, 0.0, 1.0),
            &Vec3::new(0.0, 0.0, 2.0),
            &DMatrix::identity(3, 3),
        );
        assert_eq!(lf, 2.0);
        assert_eq!(lg.as_slice(), &[0.0, 0.0, 1.0]);
        let m = sphere_model(KernelSpec::squared_exp_iso(0.3, 1.0, 0.01));
        let d = lie_degree2(
            &m,
            &CbfConfig::default(),
            &Vec3::new(0.7, 0.0, 0.0),
            &Vec3::zeros(),
        )
        .unwrap();
        assert_eq!(d.hdot, 0.0);
        assert_eq!(d.lf2, 0.0);
    }

    #[test]
    fn degree1_uses_selected_rows() {
        let m = sphere_model(KernelSpec::squared_exp_iso(0.3, 1.0, 0.01));
        let cfg = CbfConfig::default();
        let state = DVector::from_column_slice(&[9.0, 0.7, 0.1, 0.2]);
        let sel = PositionSelector([1, 2, 3]);
        let f = DVector::from_column_slice(&[5.0, 0.0, 0.0, 0.0]);
        let g = DMatrix::identity(4, 4);
        let d = lie_degree1(&m, &cfg, &state, &f, &g, &sel).unwrap();
        assert_eq!(d.lf, 0.0);
        assert_eq!(d.lg[0], 0.0);
        let grad = grad_h(&m, &cfg, &Vec3::new(0.7, 0.1, 0.2)).unwrap();
        assert_eq!(d.lg[1], grad.x);
        assert_eq!(d.lg[3], grad.z);
    }

    #[test]
    fn matern_gradient_at_centre_is_singular() {
        let m = sphere_model(KernelSpec::matern32(0.4, 1.0, 0.01));
        let c = m.inputs()[0];
        assert!(matches!(
            grad_h(&m, &CbfConfig::default(), &c),
            Err(Error::SingularPoint { .. })
        ));
        assert!(eval_h(&m, &CbfConfig::default(), &c).is_finite());
    }
}
