//! Proximal cone sensor.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::Vec3;

/// Where the cone points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boresight {
    /// Along the end-effector direction of travel.
    Motion,
    /// A fixed world direction.
    Fixed(Vec3),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorConfig {
    /// Half of the full field of view, radians.
    pub fov_half_angle: f64,
    pub range: f64,
    pub boresight: Boresight,
}

impl Default for SensorConfig {
    /// 110° full field of view, 0.8 m range.
    fn default() -> Self {
        Self {
            fov_half_angle: 55f64.to_radians(),
            range: 0.8,
            boresight: Boresight::Motion,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= core::f64::consts::PI) {
            return Err(Error::InvalidArgument("field of view must be in (0, π]"));
        }
        if !(self.range > 0.0) {
            return Err(Error::InvalidArgument("sensor range must be positive"));
        }
        Ok(())
    }
}

/// Indices of the points inside the closed cone at `origin` pointing along
/// `dir`.
pub fn sense(points: &[Vec3], sensor: &SensorConfig, origin: &Vec3, dir: &Vec3) -> Vec<usize> {
    let axis = dir.normalize();
    let limit = sensor.fov_half_angle * (1.0 + 1e-12);
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let v = *p - origin;
            let r = v.norm();
            if r > sensor.range {
                return false;
            }
            if r == 0.0 {
                return true;
            }
            let angle = v.cross(&axis).norm().atan2(v.dot(&axis));
            angle <= limit
        })
        .map(|(i, _)| i)
        .collect()
}
