//! Exact Gaussian-process regression.
//!
//! The model keeps the Cholesky factor of `K + σ_n² I` and the weight vector
//! `α = (K + σ_n² I)⁻¹ y`. Means are `k(x*)ᵀ α`; variances are computed by a
//! triangular solve against the factor, `σ² = k** − ‖L⁻¹ k(x*)‖²`, and clamped
//! at zero.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::linalg::{cholesky_with_jitter, LowerFactor};
use crate::optim::{self, LbfgsConfig};
use crate::pointcloud::SafetyDataset;
use crate::Vec3;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Borrowed training inputs and targets of equal length.
#[derive(Clone, Copy, Debug)]
pub struct Observations<'a> {
    pub inputs: &'a [Vec3],
    pub targets: &'a [f64],
}

impl<'a> Observations<'a> {
    pub fn new(inputs: &'a [Vec3], targets: &'a [f64]) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl<'a> From<&'a SafetyDataset> for Observations<'a> {
    fn from(d: &'a SafetyDataset) -> Self {
        Self {
            inputs: d.inputs(),
            targets: d.targets(),
        }
    }
}

/// Outcome of a hyperparameter search.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_lml: f64,
    pub final_lml: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Data-scaled starting point: lengthscales 0.2 × bounding-box diagonal,
/// `σ_f² = var(y)` (1 if the targets are constant) and `σ_n² = 0.01·σ_f²`.
pub fn initial_spec(family: KernelFamily, data: Observations<'_>) -> KernelSpec {
    let x = data.inputs;
    let diag = match x.first() {
        Some(first) => {
            let (lo, hi) = x
                .iter()
                .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
            (hi - lo).norm()
        }
        None => 0.0,
    };
    let l = if diag > 0.0 { 0.2 * diag } else { 1.0 };
    let n = data.targets.len().max(1) as f64;
    let mean = data.targets.iter().sum::<f64>() / n;
    let var = data.targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let sf = if var > 0.0 { var } else { 1.0 };
    KernelSpec::isotropic(family, l, sf, 0.01 * sf)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpModel {
    spec: KernelSpec,
    x: Vec<Vec3>,
    y: Vec<f64>,
    chol: LowerFactor,
    jitter: f64,
    alpha: DVector<f64>,
}

impl GpModel {
    /// A model with no data: mean 0 and variance `σ_f²` everywhere.
    pub fn prior(spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            x: Vec::new(),
            y: Vec::new(),
            chol: LowerFactor::from_lower(nalgebra::DMatrix::zeros(0, 0)),
            jitter: 0.0,
            alpha: DVector::zeros(0),
        })
    }

    pub fn fit(spec: KernelSpec, data: Observations<'_>) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() {
            return Err(Error::EmptySet);
        }
        let k = training_cov(&spec, data.inputs);
        let j = cholesky_with_jitter(&k)?;
        let y = DVector::from_column_slice(data.targets);
        let alpha = j.factor.solve(&y);
        Ok(Self {
            spec,
            x: data.inputs.to_vec(),
            y: data.targets.to_vec(),
            chol: j.factor,
            jitter: j.jitter,
            alpha,
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

    pub fn chol(&self) -> &LowerFactor {
        &self.chol
    }

    /// Diagonal inflation used to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn kvec(&self, xq: &Vec3) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.spec.eval_signal(xi, xq)),
        )
    }

    pub fn predict_mean(&self, xq: &Vec3) -> f64 {
        self.x
            .iter()
            .zip(self.alpha.iter())
            .map(|(xi, a)| a * self.spec.eval_signal(xi, xq))
            .sum()
    }

    pub fn predict_var(&self, xq: &Vec3) -> f64 {
        let mut v = self.kvec(xq);
        self.chol.solve_lower_in_place(v.as_mut_slice());
        (self.spec.prior_var() - v.norm_squared()).max(0.0)
    }

    /// Mean and variance sharing one kernel vector.
    pub fn predict(&self, xq: &Vec3) -> (f64, f64) {
        let mut v = self.kvec(xq);
        let mean = v.dot(&self.alpha);
        self.chol.solve_lower_in_place(v.as_mut_slice());
        (mean, (self.spec.prior_var() - v.norm_squared()).max(0.0))
    }
}

fn training_cov(spec: &KernelSpec, x: &[Vec3]) -> nalgebra::DMatrix<f64> {
    let mut k = spec.gram(x);
    for i in 0..x.len() {
        k[(i, i)] += spec.noise_var();
    }
    k
}

/// Log marginal likelihood `−½ yᵀK⁻¹y − ½ log|K| − (N/2) log 2π` and its
/// gradient with respect to `spec.log_params()`.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    data: Observations<'_>,
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let k = training_cov(spec, data.inputs);
    let chol = cholesky_with_jitter(&k)?.factor;
    let y = DVector::from_column_slice(data.targets);
    let alpha = chol.solve(&y);
    let value = -0.5 * y.dot(&alpha) - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI;

    // ½ tr((ααᵀ − K⁻¹) ∂K), summed over the symmetric lower triangle.
    let kinv = chol.inverse();
    let np = spec.n_params();
    let mut grad = vec![0.0; np];
    let mut dk = vec![0.0; np];
    let x = data.inputs;
    for j in 0..n {
        for i in j..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let weight = if i == j { 0.5 * w } else { w };
            spec.grad_log_params(&x[i], &x[j], &mut dk);
            for (g, d) in grad.iter_mut().zip(&dk) {
                *g += weight * d;
            }
        }
    }
    let trace_w: f64 = (0..n).map(|i| alpha[i] * alpha[i] - kinv[(i, i)]).sum();
    grad[spec.noise_index()] = 0.5 * spec.noise_var() * trace_w;
    Ok((value, grad))
}

/// Maximizes the log marginal likelihood over log-hyperparameters with
/// L-BFGS for `max_iters` iterations. The search is deterministic.
pub fn optimize_hyperparams(
    spec: &KernelSpec,
    data: Observations<'_>,
    max_iters: usize,
) -> Result<(KernelSpec, TrainReport)> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1"));
    }
    spec.validate()?;
    let (lo, hi) = spec.log_param_bounds();
    let theta0 = spec.log_params();
    let cfg = LbfgsConfig {
        max_iters,
        ..LbfgsConfig::default()
    };
    let r = optim::minimize(
        |theta: &[f64]| {
            let (v, g) = log_marginal_likelihood(&spec.with_log_params(theta), data)?;
            Ok::<_, Error>((-v, g.into_iter().map(|d| -d).collect()))
        },
        &theta0,
        &lo,
        &hi,
        &cfg,
    )?;
    let report = TrainReport {
        initial_lml: -r.initial_value,
        final_lml: -r.value,
        iterations: r.iterations,
        evaluations: r.evaluations,
    };
    Ok((spec.with_log_params(&r.x), report))
}
