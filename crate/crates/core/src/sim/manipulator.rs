//! Kinematic arm (`q̇ = u`) tracking a straight end-effector path, with a
//! cone sensor at the end effector and local barriers trained online.
//!
//! Each step: sense, retrain when at least `trigger_points` never-seen cloud
//! points have come into view since the last training, rectify the nominal
//! joint velocity against `∇hᵀ J(q) u ≥ −k₀ h`, then take an explicit Euler
//! step. A new local model replaces the previous one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

use crate::cbf::{self, AnyModel, CbfConfig};
use crate::error::{Error, Result};
use crate::gp_full::{optimize_hyperparams, GpModel, Observations};
use crate::gp_sparse::{optimize_sparse, SparseGpModel};
use crate::kernel::KernelSpec;
use crate::pointcloud::{make_safety_samples, PointCloud};
use crate::safety_filter::rectify;
use crate::sim::kinematics::{dls_step, ChainModel};
use crate::sim::sensor::{sense, Boresight, SensorConfig};
use crate::sim::{Clock, EventKind, SimRun, TrainingRecord};
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Full,
    /// FITC with half of the local samples as pseudo-inputs.
    Sparse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManipulatorConfig {
    pub cbf: CbfConfig,
    /// Kernel used for every local model (and the starting point when
    /// `train_iters > 0`).
    pub kernel: KernelSpec,
    pub model: ModelKind,
    pub dt: f64,
    pub duration: f64,
    /// Proportional gain on end-effector position error.
    pub ik_gain: f64,
    pub ik_damping: f64,
    pub trigger_points: usize,
    /// Visible points beyond this are randomly thinned before training.
    pub max_local_points: usize,
    /// Normal offset of the exterior/interior samples.
    pub offset: f64,
    /// Hyperparameter iterations per local model; 0 keeps `kernel` fixed.
    pub train_iters: usize,
    /// Disable to run the unfiltered reference.
    pub filter: bool,
}

impl Default for ManipulatorConfig {
    fn default() -> Self {
        Self {
            cbf: CbfConfig {
                margin_coeff: 4.0,
                alpha_gain: 5.0,
                ecbf_poles: (2.0, 2.0),
            },
            kernel: KernelSpec::squared_exp_iso(0.05, 1.0, 1e-6),
            model: ModelKind::Sparse,
            dt: 0.01,
            duration: 8.0,
            ik_gain: 2.0,
            ik_damping: 0.05,
            trigger_points: 100,
            max_local_points: 500,
            offset: 0.03,
            train_iters: 0,
            filter: true,
        }
    }
}

/// Start configuration and end-effector goal; the end-effector reference
/// moves linearly from `fk(q0)` to `target` over the run.
#[derive(Clone, Debug, PartialEq)]
pub struct ManipulatorReference {
    pub q0: Vec<f64>,
    pub target: Vec3,
}

fn train_local(
    cloud: &PointCloud,
    visible: &[usize],
    cfg: &ManipulatorConfig,
    seed: u64,
) -> Result<(AnyModel, usize)> {
    let sub = cloud.select(visible).downsample(cfg.max_local_points, seed);
    let n0 = sub.len();
    let half = n0 / 2;
    if half == 0 {
        return Err(Error::InvalidArgument("too few visible points to train"));
    }
    let data = make_safety_samples(&sub, n0, half, half, cfg.offset, seed)?;
    let obs = Observations::from(&data);
    let n = data.len();
    let model = match cfg.model {
        ModelKind::Full => {
            let spec = if cfg.train_iters > 0 {
                optimize_hyperparams(&cfg.kernel, obs, cfg.train_iters)?.0
            } else {
                cfg.kernel.clone()
            };
            AnyModel::Full(GpModel::fit(spec, obs)?)
        }
        ModelKind::Sparse => {
            let m = (n / 2).max(1);
            if cfg.train_iters > 0 {
                AnyModel::Sparse(optimize_sparse(&cfg.kernel, obs, m, cfg.train_iters, seed)?.0)
            } else {
                AnyModel::Sparse(SparseGpModel::fit(cfg.kernel.clone(), obs, m, seed)?)
            }
        }
    };
    Ok((model, n))
}

pub fn run_manipulator<C: Clock + ?Sized>(
    chain: &ChainModel,
    cloud: &PointCloud,
    sensor: &SensorConfig,
    reference: &ManipulatorReference,
    cfg: &ManipulatorConfig,
    seed: u64,
    clock: &C,
) -> Result<SimRun> {
    cfg.cbf.validate()?;
    sensor.validate()?;
    cfg.kernel.validate()?;
    if reference.q0.len() != chain.joints() {
        return Err(Error::DimensionMismatch {
            expected: chain.joints(),
            found: reference.q0.len(),
        });
    }
    if !(cfg.dt > 0.0 && cfg.duration > 0.0) {
        return Err(Error::InvalidArgument("dt and duration must be positive"));
    }
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let mut q = reference.q0.clone();
    let p0 = chain.fk(&q);
    let v_ref = (reference.target - p0) / cfg.duration;
    let travel = if v_ref.norm() > 0.0 {
        v_ref.normalize()
    } else {
        Vec3::x()
    };

    let mut run = SimRun {
        dt: cfg.dt,
        duration: cfg.duration,
        ..SimRun::default()
    };
    let mut model = AnyModel::Full(GpModel::prior(cfg.kernel.clone())?);
    let mut seen = vec![false; cloud.len()];
    let mut fresh = 0usize;
    let mut trainings = 0u64;

    for s in 0..=steps {
        let t = s as f64 * cfg.dt;
        let p = chain.fk(&q);
        let dir = match sensor.boresight {
            Boresight::Motion => travel,
            Boresight::Fixed(d) => d,
        };
        let visible = sense(cloud.points(), sensor, &p, &dir);
        for &i in &visible {
            if !seen[i] {
                seen[i] = true;
                fresh += 1;
            }
        }
        if cfg.filter && fresh >= cfg.trigger_points {
            let t0 = clock.now();
            match train_local(cloud, &visible, cfg, seed.wrapping_add(trainings)) {
                Ok((m, n)) => {
                    let centres = cbf::SurfaceModel::centers(&m).len();
                    model = m;
                    run.training.push(TrainingRecord {
                        t,
                        seconds: clock.now() - t0,
                        n,
                        m: centres,
                    });
                    run.event(t, EventKind::Trained, format!("n={n} m={centres}"));
                }
                Err(e) => run.event(t, EventKind::FitFailed, format!("{e}")),
            }
            trainings += 1;
            fresh = 0;
        }

        let p_ref = p0 + v_ref * t.min(cfg.duration);
        let jac = chain.jacobian(&q);
        let u_nom = dls_step(&jac, &(v_ref + (p_ref - p) * cfg.ik_gain), cfg.ik_damping);

        let t0 = clock.now();
        let (h, u, active) = if cfg.filter {
            match cbf::evaluate(&model, &cfg.cbf, &p, false) {
                Ok(e) => {
                    let lg = jac.tr_mul(&e.grad);
                    let r = rectify(
                        0.0,
                        lg.as_slice(),
                        e.h,
                        cfg.cbf.alpha_gain,
                        u_nom.as_slice(),
                    )?;
                    if r.fallback {
                        run.event(t, EventKind::Fallback, format!("h={:.6}", e.h));
                    }
                    (e.h, DVector::from_vec(r.u_rect), r.active)
                }
                Err(e) => {
                    run.event(t, EventKind::Singular, format!("{e}"));
                    (
                        cbf::eval_h(&model, &cfg.cbf, &p),
                        DVector::zeros(q.len()),
                        true,
                    )
                }
            }
        } else {
            (cbf::eval_h(&model, &cfg.cbf, &p), u_nom, false)
        };
        run.inference_times.push(clock.now() - t0);
        run.log(t, &q, u.as_slice(), h, p, active);
        if s == steps {
            break;
        }
        for (qi, ui) in q.iter_mut().zip(u.iter()) {
            *qi += cfg.dt * ui;
        }
        if !q.iter().all(|v| v.is_finite()) {
            run.event(t, EventKind::Abort, "non-finite joint state".into());
            break;
        }
    }
    Ok(run)
}
