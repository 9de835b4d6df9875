//! Ready-made scenes for the two test cases.

use alloc::vec::Vec;

use crate::error::Result;
use crate::pointcloud::{make_safety_samples, PointCloud, SafetyDataset};
use crate::shapes::{chair, sphere_cloud};
use crate::sim::manipulator::ManipulatorReference;
use crate::sim::quadrotor::QuadrotorConfig;
use crate::Vec3;

/// A sphere obstacle sitting on the straight end-effector path of the
/// generic 7-joint arm.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereReach {
    pub reference: ManipulatorReference,
    pub center: Vec3,
    pub radius: f64,
    pub cloud: PointCloud,
}

impl SphereReach {
    /// Signed distance from the true sphere surface.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        (p - self.center).norm() - self.radius
    }
}

/// The arm sweeps its end effector 0.7 m along +y; the sphere centre is
/// shifted by `lift` along z off the path.
pub fn sphere_reach(lift: f64, points: usize) -> SphereReach {
    let center = Vec3::new(0.5, 0.0, 0.5 + lift);
    let radius = 0.1;
    SphereReach {
        reference: ManipulatorReference {
            q0: alloc::vec![-0.094, 1.789, 0.705, -1.697, -0.161, 0.768, 0.0],
            target: Vec3::new(0.5, 0.35, 0.5),
        },
        center,
        radius,
        cloud: sphere_cloud(center, radius, points),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Flight {
    pub name: &'static str,
    pub start: Vec3,
    pub goal: Vec3,
}

/// Three references that collide with [`chair`]: diagonally through the
/// legs, straight through a front and a rear leg, and through the headrest.
pub fn chair_flights() -> Vec<Flight> {
    alloc::vec![
        Flight {
            name: "diagonal-legs",
            start: Vec3::new(-0.5, -0.5, 0.2),
            goal: Vec3::new(0.5, 0.5, 0.2),
        },
        Flight {
            name: "straight-legs",
            start: Vec3::new(0.175, -0.6, 0.25),
            goal: Vec3::new(0.175, 0.6, 0.25),
        },
        Flight {
            name: "headrest",
            start: Vec3::new(0.0, 0.7, 1.08),
            goal: Vec3::new(0.0, -0.3, 1.08),
        },
    ]
}

/// 2,201 labelled samples of the chair: 1,101 on the surface and 550 on
/// each side at 2 cm.
pub fn chair_dataset(seed: u64) -> Result<SafetyDataset> {
    let cloud = chair().sample_surface(1101, seed)?;
    make_safety_samples(&cloud, 1101, 550, 550, 0.02, seed)
}

/// Slow PD gains and a 0.5 m/s² nominal bound, margin coefficient 4.
pub fn chair_flight_config() -> QuadrotorConfig {
    let mut cfg = QuadrotorConfig {
        kp: 0.5,
        kd: 1.2,
        duration: 20.0,
        nominal_limit: Some(0.5),
        ..QuadrotorConfig::default()
    };
    cfg.cbf.margin_coeff = 4.0;
    cfg
}
