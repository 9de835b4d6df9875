//! Closed-loop simulations: a kinematic serial arm with a proximal sensor and
//! online surface learning, and a double-integrator quadrotor guarded by an
//! offline-trained barrier.

use alloc::string::String;
use alloc::vec::Vec;

use crate::Vec3;

pub mod kinematics;
pub mod manipulator;
pub mod presets;
pub mod quadrotor;
pub mod sensor;

pub use kinematics::{ChainModel, DhRow};
pub use manipulator::{run_manipulator, ManipulatorConfig, ManipulatorReference, ModelKind};
pub use quadrotor::{run_quadrotor, QuadrotorConfig};
pub use sensor::{sense, Boresight, SensorConfig};

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that never advances; keeps runs byte-deterministic.
#[derive(Clone, Copy, Debug, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// A local model was trained.
    Trained,
    /// Training failed; the previous model stays in use.
    FitFailed,
    /// The barrier constraint had no input authority; the input was zeroed.
    Fallback,
    /// Barrier derivatives were unavailable at the query.
    Singular,
    /// Non-finite state; the run stopped.
    Abort,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Trained => "trained",
            EventKind::FitFailed => "fit_failed",
            EventKind::Fallback => "fallback",
            EventKind::Singular => "singular",
            EventKind::Abort => "abort",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRecord {
    pub t: f64,
    pub seconds: f64,
    /// Training samples `N`.
    pub n: usize,
    /// Kernel centres (`N` for the exact GP, `M` for FITC).
    pub m: usize,
}

/// Time series of one closed-loop run. Every per-step vector has one entry
/// per logged instant.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SimRun {
    pub dt: f64,
    pub duration: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Applied input held over the following step.
    pub controls: Vec<Vec<f64>>,
    /// Barrier value at the logged state.
    pub h: Vec<f64>,
    /// Point protected by the barrier (end effector or vehicle).
    pub positions: Vec<Vec3>,
    /// Whether the filter modified the input.
    pub active: Vec<bool>,
    pub training: Vec<TrainingRecord>,
    /// Seconds spent per barrier query and rectification.
    pub inference_times: Vec<f64>,
    pub events: Vec<Event>,
}

impl SimRun {
    pub fn min_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn final_position(&self) -> Option<Vec3> {
        self.positions.last().copied()
    }

    pub(crate) fn log(&mut self, t: f64, state: &[f64], u: &[f64], h: f64, p: Vec3, active: bool) {
        self.times.push(t);
        self.states.push(state.to_vec());
        self.controls.push(u.to_vec());
        self.h.push(h);
        self.positions.push(p);
        self.active.push(active);
    }

    pub(crate) fn event(&mut self, t: f64, kind: EventKind, detail: String) {
        self.events.push(Event { t, kind, detail });
    }
}
