//! Small-ε expansion checks at a fixed query.
//!
//! Softmax: the ratio `H²(P, Q_ε) / (½ ε² Var_P(Mx))` is tabulated at
//! `ε ∈ {1e-2, 1e-3, 1e-4}` together with the same ratio against `⅛ ε² Var`,
//! which is the exact leading term under `H² = ½ Σ (√p − √q)²`. Leverage: the
//! analytic pmf derivative is compared with central differences and the
//! measured coefficient `H²/ε²` is reported next to two candidate constants.

use rand::Rng;

use crate::distributions::{hellinger_sq, mean_under, variance_under, Seed};
use crate::error::Result;
use crate::leverage::{first_order, leverage_pmf, leverage_pmf_derivative, BoxConstraint, ScaleQuery};
use crate::numerics::{norm2, ParamMatrix};
use crate::softmax::{softmax_from_logits, softmax_pmf, SoftmaxQuery};

use super::generators::gaussian_matrix;

pub const TAYLOR_EPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Step of the central-difference oracle.
pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;
pub const DERIVATIVE_SUM_TOL: f64 = 1e-10;
/// Variances below this are treated as a vanishing direction.
pub const DEGENERATE_VARIANCE: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct RatioPoint {
    pub eps: f64,
    pub hellinger_sq: f64,
    /// `H² / (½ ε² Var)`.
    pub ratio_half: f64,
    /// `H² / (⅛ ε² Var)`.
    pub ratio_eighth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SoftmaxTaylor {
    /// `Var_P(Mx) = 0`: both sides vanish and the ratio is undefined.
    Degenerate,
    Checked {
        variance: f64,
        points: Vec<RatioPoint>,
        /// `r(1e-3) ∈ [0.9, 1.1]` and `|r(1e-4) − 1| < |r(1e-3) − 1|` for
        /// the ½ ratio.
        half_ratio_ok: bool,
        /// Same test applied to the ⅛ ratio.
        eighth_ratio_ok: bool,
        /// `Z_B/Z_A − (1 + ε⟨p, Mx⟩)` at `ε = 1e-4`.
        partition_residual: f64,
        /// `|partition_residual| ≤ 2ε²`.
        partition_ok: bool,
    },
}

fn ratio_checks(points: &[RatioPoint], pick: impl Fn(&RatioPoint) -> f64) -> bool {
    let r3 = pick(&points[1]);
    let r4 = pick(&points[2]);
    (0.9..=1.1).contains(&r3) && (r4 - 1.0).abs() < (r3 - 1.0).abs()
}

pub fn softmax_taylor(a: &ParamMatrix, m: &ParamMatrix, x: &SoftmaxQuery) -> Result<SoftmaxTaylor> {
    a.check_same_shape(m, "softmax_taylor")?;
    let p = softmax_pmf(a, x)?;
    let ax = a.mul_vec(x.as_slice())?;
    let mx = m.mul_vec(x.as_slice())?;
    let variance = variance_under(&p, &mx)?;
    if variance <= DEGENERATE_VARIANCE {
        return Ok(SoftmaxTaylor::Degenerate);
    }
    let points = TAYLOR_EPS
        .iter()
        .map(|&eps| {
            let logits: Vec<f64> = ax.iter().zip(&mx).map(|(l, d)| l + eps * d).collect();
            let h2 = hellinger_sq(&p, &softmax_from_logits(&logits)?)?;
            Ok(RatioPoint {
                eps,
                hellinger_sq: h2,
                ratio_half: h2 / (0.5 * eps * eps * variance),
                ratio_eighth: h2 / (eps * eps * variance / 8.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let eps = TAYLOR_EPS[2];
    let mean = mean_under(&p, &mx)?;
    // Z_B / Z_A = Σ p_i e^{ε(Mx)_i}; expm1 keeps the O(ε) part exact
    let excess: f64 = p.probs().iter().zip(&mx).map(|(pi, d)| pi * (eps * d).exp_m1()).sum();
    let partition_residual = excess - eps * mean;
    Ok(SoftmaxTaylor::Checked {
        variance,
        half_ratio_ok: ratio_checks(&points, |p| p.ratio_half),
        eighth_ratio_ok: ratio_checks(&points, |p| p.ratio_eighth),
        points,
        partition_residual,
        partition_ok: partition_residual.abs() <= 2.0 * eps * eps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPoint {
    pub eps: f64,
    pub hellinger_sq: f64,
    /// `H²(ε) / ε²`.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeverageTaylor {
    /// `max_i |analytic_i − central_difference_i|` at step [`FD_STEP`].
    pub fd_max_error: f64,
    pub derivative_sum: f64,
    pub fd_ok: bool,
    pub sum_ok: bool,
    pub points: Vec<CoefficientPoint>,
    /// `Σ W_ii² / (2 d² p_i)`.
    pub candidate_squared: f64,
    /// `Σ W_ii / p_i`.
    pub candidate_literal: f64,
}

pub fn leverage_taylor(a: &ParamMatrix, m: &ParamMatrix, s: &ScaleQuery) -> Result<LeverageTaylor> {
    let analytic = leverage_pmf_derivative(a, m, s)?;
    let plus = leverage_pmf(&a.add_scaled(m, FD_STEP)?, s)?;
    let minus = leverage_pmf(&a.add_scaled(m, -FD_STEP)?, s)?;
    let fd_max_error = analytic
        .iter()
        .zip(plus.probs().iter().zip(minus.probs()))
        .map(|(g, (hi, lo))| (g - (hi - lo) / (2.0 * FD_STEP)).abs())
        .fold(0.0, f64::max);
    let derivative_sum: f64 = analytic.iter().sum();

    let p = leverage_pmf(a, s)?;
    let points = TAYLOR_EPS
        .iter()
        .map(|&eps| {
            let h2 = hellinger_sq(&p, &leverage_pmf(&a.add_scaled(m, eps)?, s)?)?;
            Ok(CoefficientPoint {
                eps,
                hellinger_sq: h2,
                coefficient: h2 / (eps * eps),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fo = first_order(a, m, s)?;
    let d = a.cols() as f64;
    let (mut candidate_squared, mut candidate_literal) = (0.0, 0.0);
    for (w, pi) in fo.w_diag.iter().zip(p.probs()) {
        if *pi > 0.0 {
            candidate_squared += w * w / (2.0 * d * d * pi);
            candidate_literal += w / pi;
        }
    }
    Ok(LeverageTaylor {
        fd_ok: fd_max_error <= FD_TOL,
        sum_ok: derivative_sum.abs() <= DERIVATIVE_SUM_TOL,
        fd_max_error,
        derivative_sum,
        points,
        candidate_squared,
        candidate_literal,
    })
}

/// Random softmax instance with `n ∈ [2, 10]`, `d ∈ [1, 5]`, Gaussian `A`
/// and `M`, and `x` uniform in direction with `‖x‖₂ ∈ [0.1, E]`.
pub fn random_softmax_instance(seed: Seed, energy: f64) -> (ParamMatrix, ParamMatrix, Vec<f64>) {
    let mut rng = seed.rng();
    let n = rng.random_range(2..=10);
    let d = rng.random_range(1..=5);
    let a = gaussian_matrix(&mut rng, n, d);
    let m = gaussian_matrix(&mut rng, n, d);
    let dir = gaussian_matrix(&mut rng, 1, d);
    let r = energy * rng.random_range(0.1..=1.0) / norm2(dir.row(0));
    let x = dir.row(0).iter().map(|v| v * r).collect();
    (a, m, x)
}

/// Random leverage instance with `d ∈ [1, 4]`, `n ∈ [d + 1, 10]`, Gaussian
/// `A`, `M` and an admissible `s` with random signs.
pub fn random_leverage_instance(
    seed: Seed,
    constraint: &BoxConstraint,
) -> (ParamMatrix, ParamMatrix, Vec<f64>) {
    let mut rng = seed.rng();
    let d = rng.random_range(1..=4);
    let n = rng.random_range(d + 1..=10);
    let a = gaussian_matrix(&mut rng, n, d);
    let m = gaussian_matrix(&mut rng, n, d);
    let s = random_scales(&mut rng, n, constraint);
    (a, m, s)
}

/// `s` with `s_i²` uniform in `[c, C]` and independent random signs.
pub fn random_scales<R: Rng + ?Sized>(rng: &mut R, n: usize, constraint: &BoxConstraint) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sq: f64 = rng.random_range(constraint.c()..=constraint.cap());
            if rng.random::<bool>() {
                sq.sqrt()
            } else {
                -sq.sqrt()
            }
        })
        .collect()
}
