//! Point-mass quadrotor `ṗ = v, v̇ = u` steered by a PD controller and guarded
//! by an exponential barrier on a fixed surface model. The filter runs at
//! `control_rate` with a zero-order hold; the plant is integrated with RK4 at
//! `physics_rate`.

use alloc::format;

#[allow(unused_imports)]
use num_traits::Float;

use crate::cbf::{self, CbfConfig, SurfaceModel};
use crate::error::{Error, Result};
use crate::safety_filter::{clamp_input, rectify_ecbf};
use crate::sim::{Clock, EventKind, SimRun};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadrotorConfig {
    pub cbf: CbfConfig,
    pub kp: f64,
    pub kd: f64,
    pub control_rate: f64,
    pub physics_rate: f64,
    pub duration: f64,
    /// Optional per-axis bound on the nominal acceleration, applied before
    /// the filter.
    pub nominal_limit: Option<f64>,
}

impl Default for QuadrotorConfig {
    fn default() -> Self {
        Self {
            cbf: CbfConfig::default(),
            kp: 1.0,
            kd: 1.8,
            control_rate: 50.0,
            physics_rate: 500.0,
            duration: 10.0,
            nominal_limit: Some(2.0),
        }
    }
}

fn rk4(p: Vec3, v: Vec3, u: Vec3, dt: f64) -> (Vec3, Vec3) {
    let f = |_p: Vec3, v: Vec3| (v, u);
    let (k1p, k1v) = f(p, v);
    let (k2p, k2v) = f(p + k1p * (dt / 2.0), v + k1v * (dt / 2.0));
    let (k3p, k3v) = f(p + k2p * (dt / 2.0), v + k2v * (dt / 2.0));
    let (k4p, k4v) = f(p + k3p * dt, v + k3v * dt);
    (
        p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0),
        v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0),
    )
}

/// Flies from `start` (at rest) towards `goal`. Without a model the nominal
/// controller runs unfiltered and `h` is logged as `+∞`.
pub fn run_quadrotor<C: Clock + ?Sized>(
    model: Option<&dyn SurfaceModel>,
    start: Vec3,
    goal: Vec3,
    cfg: &QuadrotorConfig,
    clock: &C,
) -> Result<SimRun> {
    cfg.cbf.validate()?;
    if !(cfg.control_rate > 0.0 && cfg.physics_rate >= cfg.control_rate && cfg.duration > 0.0) {
        return Err(Error::InvalidArgument(
            "need 0 < control_rate <= physics_rate and a positive duration",
        ));
    }
    let ratio = cfg.physics_rate / cfg.control_rate;
    if (ratio - ratio.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument(
            "physics_rate must be a multiple of control_rate",
        ));
    }
    let hold = ratio.round() as usize;
    let dt = 1.0 / cfg.physics_rate;
    let steps = (cfg.duration * cfg.physics_rate).round() as usize;
    let h_at = |p: &Vec3| model.map_or(f64::INFINITY, |m| cbf::eval_h(m, &cfg.cbf, p));
    if h_at(&start) < 0.0 {
        return Err(Error::Precondition(
            "start position is outside the safe set",
        ));
    }

    let mut run = SimRun {
        dt,
        duration: cfg.duration,
        ..SimRun::default()
    };
    let (mut p, mut v) = (start, Vec3::zeros());
    let mut u = Vec3::zeros();
    let mut active = false;
    for s in 0..=steps {
        let t = s as f64 * dt;
        if s % hold == 0 {
            let mut nominal = (goal - p) * cfg.kp - v * cfg.kd;
            if let Some(limit) = cfg.nominal_limit {
                clamp_input(nominal.as_mut_slice(), limit);
            }
            u = nominal;
            active = false;
            if let Some(m) = model {
                let t0 = clock.now();
                match cbf::lie_degree2(m, &cfg.cbf, &p, &v) {
                    Ok(d) => {
                        let r = rectify_ecbf(
                            d.lf2,
                            d.lglf.as_slice(),
                            d.hdot,
                            d.h,
                            cfg.cbf.ecbf_poles,
                            nominal.as_slice(),
                        )?;
                        if r.fallback {
                            run.event(t, EventKind::Fallback, format!("h={:.6}", d.h));
                        }
                        u = Vec3::from_column_slice(&r.u_rect);
                        active = r.active;
                    }
                    Err(e) => run.event(t, EventKind::Singular, format!("{e}")),
                }
                run.inference_times.push(clock.now() - t0);
            }
        }
        let state = [p.x, p.y, p.z, v.x, v.y, v.z];
        run.log(t, &state, u.as_slice(), h_at(&p), p, active);
        if s == steps {
            break;
        }
        (p, v) = rk4(p, v, u, dt);
        if !(p.iter().all(|x| x.is_finite()) && v.iter().all(|x| x.is_finite())) {
            run.event(t + dt, EventKind::Abort, "non-finite vehicle state".into());
            break;
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp_full::{GpModel, Observations};
    use crate::kernel::KernelSpec;
    use crate::shapes::sphere_cloud;
    use crate::sim::FrozenClock;
    use alloc::vec::Vec;

    fn ball() -> GpModel {
        let cloud = sphere_cloud(Vec3::zeros(), 0.5, 150);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (p, n) in cloud.points().iter().zip(cloud.normals()) {
            x.extend([*p, p + n * 0.1, p - n * 0.1]);
            y.extend([0.0, 1.0, -1.0]);
        }
        let spec = KernelSpec::squared_exp_iso(0.25, 1.0, 1e-4);
        GpModel::fit(spec, Observations::new(&x, &y).unwrap()).unwrap()
    }

    #[test]
    fn filter_keeps_vehicle_outside() {
        let m = ball();
        let cfg = QuadrotorConfig {
            duration: 8.0,
            ..QuadrotorConfig::default()
        };
        let start = Vec3::new(-1.5, 0.05, 0.0);
        let goal = Vec3::new(1.5, 0.0, 0.0);
        let run = run_quadrotor(Some(&m), start, goal, &cfg, &FrozenClock).unwrap();
        assert_eq!(run.times.len(), 4001);
        assert!(run.min_h() >= 0.0, "{}", run.min_h());
        assert!(run.active.iter().any(|a| *a));
        assert_eq!(run.count(EventKind::Abort), 0);

        let free = run_quadrotor(None, start, goal, &cfg, &FrozenClock).unwrap();
        let crossed = free
            .positions
            .iter()
            .any(|p| cbf::eval_h(&m, &cfg.cbf, p) < 0.0);
        assert!(crossed);
    }

    #[test]
    fn rejects_unsafe_start() {
        let m = ball();
        let r = run_quadrotor(
            Some(&m),
            Vec3::zeros(),
            Vec3::x(),
            &QuadrotorConfig::default(),
            &FrozenClock,
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn zoh_holds_between_control_updates() {
        let cfg = QuadrotorConfig::default();
        let run = run_quadrotor(None, Vec3::zeros(), Vec3::x(), &cfg, &FrozenClock).unwrap();
        for k in 1..10 {
            assert_eq!(run.controls[k], run.controls[0]);
        }
        assert_ne!(run.controls[10], run.controls[0]);
    }
}
