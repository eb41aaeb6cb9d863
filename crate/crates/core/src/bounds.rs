//! Closed-form distance bounds for softmax logit perturbations, the
//! extremal pair that attains them, and the lower-bound scales used to
//! compare against measured sample counts.

use crate::distributions::Seed;
use crate::error::{Error, Result};
use crate::leverage::BoxConstraint;
use crate::numerics::{gram, min_eigenvalue, row_gram_gap, two_to_infty_norm, ParamMatrix};

/// Relative slack granted to an observed value before a bound counts as violated.
pub const BOUND_SLACK: f64 = 1e-9;
/// `δ` at or below this makes the leverage lower bound meaningless.
pub const DEGENERATE_DELTA: f64 = 1e-12;

/// Tight upper bound on `H²` between softmax laws whose logits differ by
/// `0` or `ε` per coordinate: `(1 − e^{ε/4})² / (1 + e^{ε/2})`.
pub fn logit_step_h2_bound(eps: f64) -> f64 {
    if eps < 0.0 {
        return f64::NAN;
    }
    let num = (eps / 4.0).exp_m1();
    num * num / (1.0 + (eps / 2.0).exp())
}

/// Tight upper bound on TV for the same family: `tanh(ε/4)`.
pub fn logit_step_tv_bound(eps: f64) -> f64 {
    if eps < 0.0 {
        return f64::NAN;
    }
    (eps / 4.0).tanh()
}

/// Logit pair attaining both bounds: the first `m` coordinates carry total
/// mass `t·e^{−ε/2}` and are shifted by `ε`, the remaining `n − m` carry `t`.
pub fn extremal_pair(n: usize, m: usize, eps: f64, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 || m >= n {
        return Err(Error::Domain(format!("need 1 ≤ m < n, got m = {m}, n = {n}")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("need ε > 0, got {eps}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("need t > 0, got {t}")));
    }
    let head = (t * (-eps / 2.0).exp() / m as f64).ln();
    let tail = (t / (n - m) as f64).ln();
    let a: Vec<f64> = (0..n).map(|i| if i < m { head } else { tail }).collect();
    let b = a
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < m { v + eps } else { v })
        .collect();
    Ok((a, b))
}

/// A lower-bound scale on the number of queries, or the marker for models
/// that no query can separate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LowerBound {
    Finite(f64),
    Indistinguishable,
}

impl LowerBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            LowerBound::Finite(v) => Some(*v),
            LowerBound::Indistinguishable => None,
        }
    }
}

/// `(‖A − B‖_{2→∞} · E)⁻²`.
pub fn softmax_lb_quantity(a: &ParamMatrix, b: &ParamMatrix, energy: f64) -> Result<LowerBound> {
    let gap = two_to_infty_norm(&a.sub(b)?);
    if gap == 0.0 {
        return Ok(LowerBound::Indistinguishable);
    }
    Ok(LowerBound::Finite((gap * energy).powi(-2)))
}

/// `cδ / (Cε)` with `ε` the row-gram gap and `δ = λ_min(AᵀA)`.
pub fn leverage_lb_quantity(
    a: &ParamMatrix,
    b: &ParamMatrix,
    constraint: &BoxConstraint,
) -> Result<LowerBound> {
    let gap = row_gram_gap(a, b)?;
    if gap == 0.0 {
        return Ok(LowerBound::Indistinguishable);
    }
    let delta = min_eigenvalue(&gram(a));
    if delta <= DEGENERATE_DELTA {
        return Err(Error::DegenerateModel(delta));
    }
    Ok(LowerBound::Finite(
        constraint.c() * delta / (constraint.cap() * gap),
    ))
}

/// Parameters a bound row was evaluated at; unused ones are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundParams {
    pub eps: Option<f64>,
    pub energy: Option<f64>,
    pub c: Option<f64>,
    pub cap: Option<f64>,
    pub delta: Option<f64>,
}

/// One observed-vs-bound comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bound_name: &'static str,
    /// Strict bounds are proven inequalities; envelopes carry measured constants.
    pub strict: bool,
    pub instance: u64,
    pub seed: Seed,
    pub params: BoundParams,
    pub bound_value: f64,
    pub observed_value: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn new(
        bound_name: &'static str,
        strict: bool,
        instance: u64,
        seed: Seed,
        params: BoundParams,
        bound_value: f64,
        observed_value: f64,
    ) -> Self {
        let satisfied = observed_value <= bound_value * (1.0 + BOUND_SLACK);
        Self {
            bound_name,
            strict,
            instance,
            seed,
            params,
            bound_value,
            observed_value,
            satisfied,
        }
    }

    /// `observed / bound`, or 0 when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.bound_value == 0.0 {
            if self.observed_value == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.observed_value / self.bound_value
        }
    }
}
