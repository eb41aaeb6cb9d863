//! Softmax query model: on query `x` the model emits index `i` with
//! probability proportional to `exp((Ax)_i)`.

use crate::distributions::{DiscreteDistribution, Seed};
use crate::error::{ConstraintKind, Error, Result};
use crate::numerics::{norm2, ParamMatrix};

/// Slack allowed on `‖x‖₂ ≤ E`.
pub const ENERGY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstraint {
    energy: f64,
}

impl EnergyConstraint {
    pub fn new(energy: f64) -> Result<Self> {
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::Domain(format!(
                "energy bound E must be positive and finite, got {energy}"
            )));
        }
        Ok(Self { energy })
    }

    #[inline]
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn admits(&self, x: &[f64]) -> bool {
        norm2(x) <= self.energy * (1.0 + ENERGY_SLACK)
    }

    /// Euclidean projection onto the ball of radius `E`.
    pub fn project(&self, x: &mut [f64]) {
        let nrm = norm2(x);
        if nrm > self.energy {
            let f = self.energy / nrm;
            x.iter_mut().for_each(|v| *v *= f);
        }
    }
}

/// A query vector `x ∈ ℝᵈ` known to satisfy its energy constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxQuery {
    x: Vec<f64>,
}

impl SoftmaxQuery {
    pub fn new(x: Vec<f64>, constraint: &EnergyConstraint) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("query has non-finite entries".into()));
        }
        if !constraint.admits(&x) {
            return Err(Error::ConstraintViolation {
                kind: ConstraintKind::Energy,
                detail: format!("‖x‖₂ = {} > E = {}", norm2(&x), constraint.energy()),
            });
        }
        Ok(Self { x })
    }

    pub(crate) fn unchecked(x: Vec<f64>) -> Self {
        Self { x }
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.x
    }
}

/// Max-shifted softmax of a logit vector.
pub fn softmax_from_logits(logits: &[f64]) -> Result<DiscreteDistribution> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Domain("logits must be finite".into()));
    }
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    DiscreteDistribution::from_weights(&w)
}

pub fn softmax_pmf(a: &ParamMatrix, x: &SoftmaxQuery) -> Result<DiscreteDistribution> {
    softmax_from_logits(&a.mul_vec(x.as_slice())?)
}

pub fn softmax_sample(
    a: &ParamMatrix,
    x: &SoftmaxQuery,
    seed: Seed,
    m: usize,
) -> Result<Vec<usize>> {
    Ok(crate::distributions::draw(&softmax_pmf(a, x)?, seed, m))
}
