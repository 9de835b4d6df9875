//! Stationary covariance functions and their spatial derivatives.
//!
//! Two families are supported: the squared exponential with one lengthscale
//! per axis, and Matérn ν = 3/2 with a single lengthscale. Derivatives are
//! taken with respect to the *query* argument `x*` of `k(x_i, x*)`; the
//! white-noise term only ever appears on the diagonal of training
//! covariances and is never differentiated.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

/// Derivative ops refuse queries closer than this to a kernel centre (m).
pub const SINGULAR_EPS: f64 = 1e-8;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    SquaredExp,
    Matern32,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExp => "se",
            KernelFamily::Matern32 => "matern32",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "se" | "squared_exp" | "rbf" => Some(KernelFamily::SquaredExp),
            "matern32" | "matern" => Some(KernelFamily::Matern32),
            _ => None,
        }
    }
}

/// Kernel hyperparameters. The squared exponential uses three lengthscales
/// (one per axis); Matérn 3/2 uses exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub params: Hyperparams,
}

impl KernelSpec {
    pub fn squared_exp(lengthscales: [f64; 3], signal_var: f64, noise_var: f64) -> Self {
        Self {
            family: KernelFamily::SquaredExp,
            params: Hyperparams {
                lengthscales: lengthscales.to_vec(),
                signal_var,
                noise_var,
            },
        }
    }

    /// Squared exponential with the same lengthscale on every axis.
    pub fn squared_exp_iso(lengthscale: f64, signal_var: f64, noise_var: f64) -> Self {
        Self::squared_exp([lengthscale; 3], signal_var, noise_var)
    }

    pub fn matern32(lengthscale: f64, signal_var: f64, noise_var: f64) -> Self {
        Self {
            family: KernelFamily::Matern32,
            params: Hyperparams {
                lengthscales: vec![lengthscale],
                signal_var,
                noise_var,
            },
        }
    }

    /// Builds a spec of the given family from a single lengthscale.
    pub fn isotropic(
        family: KernelFamily,
        lengthscale: f64,
        signal_var: f64,
        noise_var: f64,
    ) -> Self {
        match family {
            KernelFamily::SquaredExp => Self::squared_exp_iso(lengthscale, signal_var, noise_var),
            KernelFamily::Matern32 => Self::matern32(lengthscale, signal_var, noise_var),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let expected = match self.family {
            KernelFamily::SquaredExp => 3,
            KernelFamily::Matern32 => 1,
        };
        if p.lengthscales.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: p.lengthscales.len(),
            });
        }
        if !p.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidHyperparams("lengthscales must be positive"));
        }
        if !(p.signal_var > 0.0 && p.signal_var.is_finite()) {
            return Err(Error::InvalidHyperparams(
                "signal variance must be positive",
            ));
        }
        if !(p.noise_var >= 0.0 && p.noise_var.is_finite()) {
            return Err(Error::InvalidHyperparams(
                "noise variance must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn signal_var(&self) -> f64 {
        self.params.signal_var
    }

    pub fn noise_var(&self) -> f64 {
        self.params.noise_var
    }

    /// Prior variance `k(x, x)` without the noise term.
    pub fn prior_var(&self) -> f64 {
        self.params.signal_var
    }

    /// Noise-free covariance `k(xi, xj)`.
    #[inline]
    pub fn eval_signal(&self, xi: &Vec3, xj: &Vec3) -> f64 {
        let p = &self.params;
        match self.family {
            KernelFamily::SquaredExp => {
                let l = &p.lengthscales;
                let d = xi - xj;
                let q = (d.x / l[0]).powi(2) + (d.y / l[1]).powi(2) + (d.z / l[2]).powi(2);
                p.signal_var * (-0.5 * q).exp()
            }
            KernelFamily::Matern32 => {
                let t = SQRT3 * (xi - xj).norm() / p.lengthscales[0];
                p.signal_var * (1.0 + t) * (-t).exp()
            }
        }
    }

    /// `k(xi, xj)`, adding the noise variance iff `same_index`.
    pub fn eval(&self, xi: &Vec3, xj: &Vec3, same_index: bool) -> f64 {
        let k = self.eval_signal(xi, xj);
        if same_index {
            k + self.params.noise_var
        } else {
            k
        }
    }

    fn check_singular(&self, xi: &Vec3, xq: &Vec3) -> Result<f64> {
        let r = (xq - xi).norm();
        if self.family == KernelFamily::Matern32 && r < SINGULAR_EPS {
            return Err(Error::SingularPoint { distance: r });
        }
        Ok(r)
    }

    /// Gradient of `k(xi, ·)` at `xq`.
    pub fn grad_x(&self, xi: &Vec3, xq: &Vec3) -> Result<Vec3> {
        let r = self.check_singular(xi, xq)?;
        let p = &self.params;
        Ok(match self.family {
            KernelFamily::SquaredExp => {
                let l = &p.lengthscales;
                let k = self.eval_signal(xi, xq);
                let d = xi - xq;
                Vec3::new(
                    d.x / (l[0] * l[0]),
                    d.y / (l[1] * l[1]),
                    d.z / (l[2] * l[2]),
                ) * k
            }
            KernelFamily::Matern32 => {
                let l = p.lengthscales[0];
                let t = SQRT3 * r / l;
                let dt = (xq - xi) * (SQRT3 / (l * r));
                dt * (-p.signal_var * t * (-t).exp())
            }
        })
    }

    /// Hessian of `k(xi, ·)` at `xq`.
    pub fn hess_x(&self, xi: &Vec3, xq: &Vec3) -> Result<Mat3> {
        let r = self.check_singular(xi, xq)?;
        let p = &self.params;
        Ok(match self.family {
            KernelFamily::SquaredExp => {
                let l = &p.lengthscales;
                let k = self.eval_signal(xi, xq);
                let inv2 = Vec3::new(
                    1.0 / (l[0] * l[0]),
                    1.0 / (l[1] * l[1]),
                    1.0 / (l[2] * l[2]),
                );
                let d = xi - xq;
                let g = d.component_mul(&inv2);
                let mut h = g * g.transpose();
                for a in 0..3 {
                    h[(a, a)] -= inv2[a];
                }
                h * k
            }
            KernelFamily::Matern32 => {
                let l = p.lengthscales[0];
                let c = SQRT3 / l;
                let t = c * r;
                let diff = xq - xi;
                let dt = diff * (c / r);
                let d2t = Mat3::identity() * (c / r) - diff * diff.transpose() * (c / (r * r * r));
                let e = (-t).exp();
                let h = d2t * (-p.signal_var * t * e)
                    + dt * dt.transpose() * (p.signal_var * (t - 1.0) * e);
                // Exact symmetry: the outer products above are symmetric up
                // to rounding in the scalar multiplies.
                (h + h.transpose()) * 0.5
            }
        })
    }

    /// Covariance matrix between two point sets. With `add_noise_on_diag` the
    /// sets must be the same, and the noise variance is added on the
    /// diagonal.
    pub fn cross_matrix(
        &self,
        a: &[Vec3],
        b: &[Vec3],
        add_noise_on_diag: bool,
    ) -> Result<DMatrix<f64>> {
        if add_noise_on_diag && a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        let mut k = DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval_signal(&a[i], &b[j]));
        if add_noise_on_diag {
            for i in 0..a.len() {
                k[(i, i)] += self.params.noise_var;
            }
        }
        Ok(k)
    }

    /// Symmetric training covariance `K(A, A)` without noise, filled from the
    /// lower triangle so it is exactly symmetric.
    pub fn gram(&self, a: &[Vec3]) -> DMatrix<f64> {
        let n = a.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            k[(j, j)] = self.eval_signal(&a[j], &a[j]);
            for i in (j + 1)..n {
                let v = self.eval_signal(&a[i], &a[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    // ---- log-space parameterization used by the optimizers ----

    /// Number of free log-parameters: lengthscales, signal, noise.
    pub fn n_params(&self) -> usize {
        self.params.lengthscales.len() + 2
    }

    pub fn signal_index(&self) -> usize {
        self.params.lengthscales.len()
    }

    pub fn noise_index(&self) -> usize {
        self.params.lengthscales.len() + 1
    }

    /// `[ln l_1.., ln σ_f², ln σ_n²]`. A zero noise variance maps to
    /// `ln(NOISE_FLOOR)`.
    pub fn log_params(&self) -> Vec<f64> {
        let p = &self.params;
        let mut v: Vec<f64> = p.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(p.signal_var.ln());
        v.push(p.noise_var.max(NOISE_FLOOR).ln());
        v
    }

    pub fn with_log_params(&self, theta: &[f64]) -> Self {
        let nl = self.params.lengthscales.len();
        assert_eq!(theta.len(), nl + 2);
        Self {
            family: self.family,
            params: Hyperparams {
                lengthscales: theta[..nl].iter().map(|v| v.exp()).collect(),
                signal_var: theta[nl].exp(),
                noise_var: theta[nl + 1].exp(),
            },
        }
    }

    /// Box bounds for the log-parameters.
    pub fn log_param_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let nl = self.params.lengthscales.len();
        let mut lo = vec![LENGTHSCALE_MIN.ln(); nl];
        let mut hi = vec![LENGTHSCALE_MAX.ln(); nl];
        lo.push(SIGNAL_MIN.ln());
        hi.push(SIGNAL_MAX.ln());
        lo.push(NOISE_FLOOR.ln());
        hi.push(SIGNAL_MAX.ln());
        (lo, hi)
    }

    /// Derivatives of the noise-free `k(xi, xj)` with respect to each
    /// log-parameter, written into `out` (length `n_params`). The noise slot
    /// is left at zero: noise only enters on training diagonals.
    pub fn grad_log_params(&self, xi: &Vec3, xj: &Vec3, out: &mut [f64]) {
        let p = &self.params;
        let nl = p.lengthscales.len();
        debug_assert_eq!(out.len(), nl + 2);
        match self.family {
            KernelFamily::SquaredExp => {
                let k = self.eval_signal(xi, xj);
                let d = xi - xj;
                for a in 0..3 {
                    let s = d[a] / p.lengthscales[a];
                    out[a] = k * s * s;
                }
                out[nl] = k;
            }
            KernelFamily::Matern32 => {
                let t = SQRT3 * (xi - xj).norm() / p.lengthscales[0];
                let e = (-t).exp();
                out[0] = p.signal_var * t * t * e;
                out[nl] = p.signal_var * (1.0 + t) * e;
            }
        }
        out[nl + 1] = 0.0;
    }

    /// Gradient of the noise-free `k(x, z)` with respect to the second
    /// argument `z` (used for pseudo-input gradients). Unlike `grad_x` this is
    /// defined everywhere; Matérn 3/2 is differentiable at `x = z` with zero
    /// gradient.
    pub fn grad_second(&self, x: &Vec3, z: &Vec3) -> Vec3 {
        let p = &self.params;
        match self.family {
            KernelFamily::SquaredExp => {
                let l = &p.lengthscales;
                let k = self.eval_signal(x, z);
                let d = x - z;
                Vec3::new(
                    d.x / (l[0] * l[0]),
                    d.y / (l[1] * l[1]),
                    d.z / (l[2] * l[2]),
                ) * k
            }
            KernelFamily::Matern32 => {
                let l = p.lengthscales[0];
                let t = SQRT3 * (x - z).norm() / l;
                // ∂k/∂z = -σ_f² (3/l²) e^{-t} (z - x)
                (z - x) * (-p.signal_var * 3.0 / (l * l) * (-t).exp())
            }
        }
    }
}

/// Smallest noise variance the optimizers will consider.
pub const NOISE_FLOOR: f64 = 1e-6;
const LENGTHSCALE_MIN: f64 = 1e-3;
const LENGTHSCALE_MAX: f64 = 1e3;
const SIGNAL_MIN: f64 = 1e-6;
const SIGNAL_MAX: f64 = 1e6;
