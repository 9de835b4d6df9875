//! Serial-chain forward kinematics with standard DH parameters.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, UnitQuaternion};
#[allow(unused_imports)]
use num_traits::Float;

use crate::Vec3;

/// One standard DH row: `Rz(θ + offset) · Tz(d) · Tx(a) · Rx(α)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainModel {
    pub rows: Vec<DhRow>,
}

impl ChainModel {
    pub fn new(rows: Vec<DhRow>) -> Self {
        Self { rows }
    }

    /// Seven revolute joints with alternating ±90° twists and link offsets
    /// comparable to a lightweight 7-DOF arm (1.17 m fully stretched).
    pub fn generic_7dof() -> Self {
        let h = core::f64::consts::FRAC_PI_2;
        let d = [0.284, 0.0, 0.41, 0.0, 0.31, 0.0, 0.17];
        let alpha = [-h, h, -h, h, -h, h, 0.0];
        Self::new(
            (0..7)
                .map(|i| DhRow {
                    a: 0.0,
                    alpha: alpha[i],
                    d: d[i],
                    theta_offset: 0.0,
                })
                .collect(),
        )
    }

    pub fn joints(&self) -> usize {
        self.rows.len()
    }

    fn link(row: &DhRow, q: f64) -> Isometry3<f64> {
        let rz = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, row.d),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), q + row.theta_offset),
        );
        let rx = Isometry3::from_parts(
            Translation3::new(row.a, 0.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vec3::x_axis(), row.alpha),
        );
        rz * rx
    }

    /// Base frame followed by every link frame: `n_j + 1` transforms.
    pub fn frames(&self, q: &[f64]) -> Vec<Isometry3<f64>> {
        assert_eq!(q.len(), self.joints(), "joint vector length");
        let mut out = Vec::with_capacity(q.len() + 1);
        let mut t = Isometry3::identity();
        out.push(t);
        for (row, qi) in self.rows.iter().zip(q) {
            t *= Self::link(row, *qi);
            out.push(t);
        }
        out
    }

    /// End-effector position.
    pub fn fk(&self, q: &[f64]) -> Vec3 {
        self.frames(q)
            .last()
            .expect("base frame")
            .translation
            .vector
    }

    /// Position Jacobian (3 × n_j): column `i` is `z_{i} × (p_ee − p_{i})`
    /// for the frame preceding joint `i`.
    pub fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let frames = self.frames(q);
        let p = frames.last().expect("base frame").translation.vector;
        let mut j = DMatrix::zeros(3, self.joints());
        for (i, f) in frames.iter().take(self.joints()).enumerate() {
            let z = f.rotation * Vec3::z();
            let c = z.cross(&(p - f.translation.vector));
            j.column_mut(i).copy_from(&c);
        }
        j
    }
}

/// Damped least-squares inverse: `Jᵀ (J Jᵀ + λ² I)⁻¹ v`.
pub fn dls_step(j: &DMatrix<f64>, v: &Vec3, damping: f64) -> DVector<f64> {
    let mut a = j * j.transpose();
    for i in 0..3 {
        a[(i, i)] += damping * damping;
    }
    let rhs = DVector::from_column_slice(v.as_slice());
    let y = a
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(3));
    j.transpose() * y
}

/// Sum of link lengths. Bounds every Jacobian column, so
/// `‖fk(q + δ) − fk(q)‖ ≤ reach · ‖δ‖₁`.
pub fn reach(chain: &ChainModel) -> f64 {
    chain
        .rows
        .iter()
        .map(|r| (r.a * r.a + r.d * r.d).sqrt())
        .sum()
}
