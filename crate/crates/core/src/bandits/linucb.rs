use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, check_reward, BanditError};

/// Dimension of the planner-selection context.
pub const CONTEXT_DIM: usize = 7;

/// Planner-selection features: sector encoding, 30-day volatility, log market
/// cap, data richness, momentum, options availability, analyst coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextVector(pub [f64; CONTEXT_DIM]);

impl ContextVector {
    pub fn new(values: [f64; CONTEXT_DIM]) -> Result<Self, BanditError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(BanditError::NonFiniteContext)
        }
    }

    pub fn zeros() -> Self {
        Self([0.0; CONTEXT_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ContextVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Ridge-regression state of one LinUCB arm. `theta_hat` is kept equal to the
/// solution of `A θ = b` after every update.
#[derive(Debug, Clone, PartialEq)]
pub struct LinUcbArm {
    pub arm_id: String,
    a: DMatrix<f64>,
    b: DVector<f64>,
    theta_hat: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct LinUcbArmRepr {
    arm_id: String,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    theta_hat: Vec<f64>,
}

impl Serialize for LinUcbArm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let d = self.dim();
        LinUcbArmRepr {
            arm_id: self.arm_id.clone(),
            a: (0..d).map(|i| (0..d).map(|j| self.a[(i, j)]).collect()).collect(),
            b: self.b.iter().copied().collect(),
            theta_hat: self.theta_hat.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl LinUcbArm {
    /// Identity design matrix, zero response vector.
    pub fn new(arm_id: impl Into<String>, dim: usize) -> Self {
        Self {
            arm_id: arm_id.into(),
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    fn check_dim(&self, phi: &[f64]) -> Result<(), BanditError> {
        if phi.len() != self.dim() {
            return Err(BanditError::DimensionMismatch {
                expected: self.dim(),
                got: phi.len(),
            });
        }
        if !phi.iter().all(|v| v.is_finite()) {
            return Err(BanditError::NonFiniteContext);
        }
        Ok(())
    }

    /// φᵀθ̂ + α √(φᵀ A⁻¹ φ)
    pub fn ucb(&self, phi: &[f64], alpha_explore: f64) -> Result<f64, BanditError> {
        self.check_dim(phi)?;
        let x = DVector::from_column_slice(phi);
        let chol = self
            .a
            .clone()
            .cholesky()
            .ok_or(BanditError::NotPositiveDefinite)?;
        let a_inv_x = chol.solve(&x);
        let width = x.dot(&a_inv_x).max(0.0).sqrt();
        Ok(x.dot(&self.theta_hat) + alpha_explore * width)
    }

    /// A += φφᵀ, b += rφ, θ̂ = A⁻¹b.
    pub fn updated(&self, phi: &[f64], reward: f64) -> Result<Self, BanditError> {
        let mut next = self.clone();
        next.update(phi, reward)?;
        Ok(next)
    }

    pub fn update(&mut self, phi: &[f64], reward: f64) -> Result<(), BanditError> {
        check_reward(reward)?;
        self.check_dim(phi)?;
        let x = DVector::from_column_slice(phi);
        let a = &self.a + &x * x.transpose();
        let b = &self.b + &x * reward;
        let chol = a.clone().cholesky().ok_or(BanditError::NotPositiveDefinite)?;
        self.theta_hat = chol.solve(&b);
        self.a = a;
        self.b = b;
        Ok(())
    }
}

/// Arm index maximizing the UCB score; lowest index on ties.
pub fn linucb_select(
    arms: &[LinUcbArm],
    phi: &[f64],
    alpha_explore: f64,
) -> Result<usize, BanditError> {
    if arms.is_empty() {
        return Err(BanditError::EmptyArms);
    }
    let scores = arms
        .iter()
        .map(|arm| arm.ucb(phi, alpha_explore))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(argmax_lowest(&scores).expect("non-empty"))
}

/// LinUCB over a growable pool of arms sharing one context dimension.
#[derive(Debug, Clone, Serialize)]
pub struct LinUcbSelector {
    pub alpha_explore: f64,
    pub dim: usize,
    arms: Vec<LinUcbArm>,
}

impl LinUcbSelector {
    pub fn new(alpha_explore: f64, dim: usize) -> Self {
        Self {
            alpha_explore,
            dim,
            arms: Vec::new(),
        }
    }

    pub fn add_arm(&mut self, arm_id: impl Into<String>) -> Result<(), BanditError> {
        let id = arm_id.into();
        if self.arms.iter().any(|a| a.arm_id == id) {
            return Err(BanditError::DuplicateArm(id));
        }
        self.arms.push(LinUcbArm::new(id, self.dim));
        Ok(())
    }

    pub fn arms(&self) -> &[LinUcbArm] {
        &self.arms
    }

    pub fn select(&self, phi: &[f64]) -> Result<&str, BanditError> {
        let i = linucb_select(&self.arms, phi, self.alpha_explore)?;
        Ok(&self.arms[i].arm_id)
    }

    pub fn update(&mut self, arm_id: &str, phi: &[f64], reward: f64) -> Result<(), BanditError> {
        let arm = self
            .arms
            .iter_mut()
            .find(|a| a.arm_id == arm_id)
            .ok_or_else(|| BanditError::UnknownArm(arm_id.to_string()))?;
        arm.update(phi, reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_state_ties_to_lowest_index() {
        let arms: Vec<_> = (0..3).map(|i| LinUcbArm::new(format!("p{i}"), 7)).collect();
        let phi = [0.3, -0.2, 0.5, 0.1, 0.0, 1.0, 0.4];
        let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        for arm in &arms {
            assert!((arm.ucb(&phi, 1.0).unwrap() - norm).abs() < 1e-12);
        }
        assert_eq!(linucb_select(&arms, &phi, 1.0).unwrap(), 0);
    }

    #[test]
    fn zero_context_scores_zero() {
        let arms: Vec<_> = (0..2).map(|i| LinUcbArm::new(format!("p{i}"), 7)).collect();
        let phi = [0.0; 7];
        assert_eq!(arms[1].ucb(&phi, 1.0).unwrap(), 0.0);
        assert_eq!(linucb_select(&arms, &phi, 1.0).unwrap(), 0);
    }

    #[test]
    fn toy_update_matches_hand_inverse() {
        let arm = LinUcbArm::new("p", 2).updated(&[1.0, 0.0], 1.0).unwrap();
        assert_eq!(arm.a()[(0, 0)], 2.0);
        assert_eq!(arm.a()[(1, 1)], 1.0);
        assert_eq!(arm.a()[(0, 1)], 0.0);
        assert_eq!(arm.b().as_slice(), &[1.0, 0.0]);
        assert!((arm.theta_hat()[0] - 0.5).abs() < 1e-15);
        assert!(arm.theta_hat()[1].abs() < 1e-15);
    }

    #[test]
    fn zero_reward_leaves_b() {
        let arm = LinUcbArm::new("p", 2).updated(&[0.5, 0.5], 0.0).unwrap();
        assert_eq!(arm.b().as_slice(), &[0.0, 0.0]);
        assert_eq!(arm.a()[(0, 1)], 0.25);
    }

    #[test]
    fn zero_context_leaves_state() {
        let arm = LinUcbArm::new("p", 3);
        let next = arm.updated(&[0.0; 3], 0.7).unwrap();
        assert_eq!(arm, next);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let arm = LinUcbArm::new("p", 7);
        assert!(matches!(
            arm.ucb(&[1.0, 2.0], 1.0),
            Err(BanditError::DimensionMismatch { expected: 7, got: 2 })
        ));
        assert!(arm.updated(&[1.0], 0.5).is_err());
    }

    #[test]
    fn reward_out_of_range_is_error() {
        let arm = LinUcbArm::new("p", 2);
        assert!(arm.updated(&[1.0, 0.0], 2.0).is_err());
    }
}
