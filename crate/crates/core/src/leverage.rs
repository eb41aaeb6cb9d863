//! Leverage-score query model: on query `s` the model emits index `i` with
//! probability `Π_ii / d`, where `Π` is the orthogonal projector onto the
//! column space of `A_s = Diag(s)⁻¹ A`.

use crate::distributions::{DiscreteDistribution, Seed};
use crate::error::{ConstraintKind, Error, Result};
use crate::numerics::{dot, thin_qr, ParamMatrix, ThinQr};

/// Leverage values below this make `w_s` undefined.
pub const ZERO_LEVERAGE_TOL: f64 = 1e-12;
/// Relative slack allowed on the box `c ≤ s_i² ≤ C`.
pub const BOX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxConstraint {
    lo: f64,
    hi: f64,
}

impl BoxConstraint {
    /// `lo = c`, `hi = C`; requires `0 < c ≤ C`.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0) || !hi.is_finite() || hi < lo {
            return Err(Error::Domain(format!(
                "box constraint needs 0 < c ≤ C, got c = {lo}, C = {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn c(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn cap(&self) -> f64 {
        self.hi
    }

    pub fn admits(&self, s: &[f64]) -> bool {
        s.iter().all(|&v| {
            let sq = v * v;
            v != 0.0 && sq >= self.lo * (1.0 - BOX_SLACK) && sq <= self.hi * (1.0 + BOX_SLACK)
        })
    }

    /// Range of the optimizer coordinate `u = s⁻²`.
    pub fn u_range(&self) -> (f64, f64) {
        (1.0 / self.hi, 1.0 / self.lo)
    }
}

/// Row scales `s ∈ (ℝ∖0)ⁿ` known to satisfy their box constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleQuery {
    s: Vec<f64>,
}

impl ScaleQuery {
    pub fn new(s: Vec<f64>, constraint: &BoxConstraint) -> Result<Self> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("scale query has non-finite entries".into()));
        }
        if let Some(i) = s.iter().position(|&v| v == 0.0) {
            return Err(Error::ConstraintViolation {
                kind: ConstraintKind::Box,
                detail: format!("s[{i}] = 0"),
            });
        }
        if !constraint.admits(&s) {
            let (i, v) = s
                .iter()
                .enumerate()
                .find(|(_, v)| !constraint.admits(&[**v]))
                .map(|(i, v)| (i, *v))
                .unwrap_or((0, s[0]));
            return Err(Error::ConstraintViolation {
                kind: ConstraintKind::Box,
                detail: format!(
                    "s[{i}]² = {} outside [{}, {}]",
                    v * v,
                    constraint.c(),
                    constraint.cap()
                ),
            });
        }
        Ok(Self { s })
    }

    /// Builds `s_i = u_i^{-1/2}` from inverse squares, clamping `u` into the box.
    pub fn from_inverse_squares(u: &[f64], constraint: &BoxConstraint) -> Result<Self> {
        let (lo, hi) = constraint.u_range();
        let s = u.iter().map(|&v| 1.0 / v.clamp(lo, hi).sqrt()).collect();
        Self::new(s, constraint)
    }

    pub(crate) fn unchecked(s: Vec<f64>) -> Self {
        Self { s }
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }

    pub fn inverse_squares(&self) -> Vec<f64> {
        self.s.iter().map(|v| 1.0 / (v * v)).collect()
    }
}

fn check_rows(a: &ParamMatrix, s: &[f64]) -> Result<()> {
    if a.rows() != s.len() {
        return Err(Error::ShapeMismatch(format!(
            "scale query of length {} for a matrix with {} rows",
            s.len(),
            a.rows()
        )));
    }
    Ok(())
}

/// Factorization of `A_s` used by every leverage computation.
fn scaled_qr(a: &ParamMatrix, s: &[f64]) -> Result<ThinQr> {
    check_rows(a, s)?;
    thin_qr(&a.div_rows(s)?)
}

/// Diagonal of `Π = A_s(A_sᵀA_s)⁻¹A_sᵀ` via row norms of `Q`.
fn projection_diag(qr: &ThinQr) -> Vec<f64> {
    (0..qr.q.rows()).map(|i| dot(qr.q.row(i), qr.q.row(i))).collect()
}

pub fn leverage_pmf(a: &ParamMatrix, s: &ScaleQuery) -> Result<DiscreteDistribution> {
    let qr = scaled_qr(a, s.as_slice())?;
    let d = a.cols() as f64;
    DiscreteDistribution::new(projection_diag(&qr).into_iter().map(|v| v / d).collect())
}

pub fn leverage_sample(
    a: &ParamMatrix,
    s: &ScaleQuery,
    seed: Seed,
    m: usize,
) -> Result<Vec<usize>> {
    Ok(crate::distributions::draw(&leverage_pmf(a, s)?, seed, m))
}

/// First-order data of the model at `s` in direction `M`.
#[derive(Debug, Clone)]
pub struct FirstOrder {
    /// `Π_ii`.
    pub leverage: Vec<f64>,
    /// `W_ii` with `W = (I − Π) M_s (A_sᵀA_s)⁻¹ A_sᵀ`.
    pub w_diag: Vec<f64>,
}

pub fn first_order(a: &ParamMatrix, m: &ParamMatrix, s: &ScaleQuery) -> Result<FirstOrder> {
    a.check_same_shape(m, "leverage direction")?;
    let qr = scaled_qr(a, s.as_slice())?;
    let ms = m.div_rows(s.as_slice())?;
    // M_s (A_sᵀA_s)⁻¹ A_sᵀ = (M_s R⁻¹) Qᵀ
    let k = qr.solve_right(&ms)?;
    let qtk = qr.q.transpose().matmul(&k)?;
    let k_perp = k.sub(&qr.q.matmul(&qtk)?)?;
    let w_diag = (0..a.rows())
        .map(|i| dot(k_perp.row(i), qr.q.row(i)))
        .collect();
    Ok(FirstOrder {
        leverage: projection_diag(&qr),
        w_diag,
    })
}

/// `w_s = diag(W) / diag(Π)` (entrywise).
pub fn leverage_w(a: &ParamMatrix, m: &ParamMatrix, s: &ScaleQuery) -> Result<Vec<f64>> {
    let fo = first_order(a, m, s)?;
    if let Some((row, &value)) = fo
        .leverage
        .iter()
        .enumerate()
        .find(|(_, &v)| v < ZERO_LEVERAGE_TOL)
    {
        return Err(Error::ZeroLeverage { row, value });
    }
    Ok(fo
        .w_diag
        .iter()
        .zip(&fo.leverage)
        .map(|(w, l)| w / l)
        .collect())
}

/// `d/dε leverage_pmf(A + εM, s)` at `ε = 0`, i.e. `2 W_ii / d`.
pub fn leverage_pmf_derivative(
    a: &ParamMatrix,
    m: &ParamMatrix,
    s: &ScaleQuery,
) -> Result<Vec<f64>> {
    let fo = first_order(a, m, s)?;
    let d = a.cols() as f64;
    Ok(fo.w_diag.iter().map(|w| 2.0 * w / d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> BoxConstraint {
        BoxConstraint::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn identity_gives_uniform() {
        let b = BoxConstraint::new(0.5, 2.0).unwrap();
        let s = ScaleQuery::new(vec![0.8, -1.3, 1.0], &b).unwrap();
        let p = leverage_pmf(&ParamMatrix::identity(3), &s).unwrap();
        assert!(p.probs().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn symmetric_column_gives_halves() {
        let a = ParamMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let s = ScaleQuery::new(vec![1.0, 1.0], &unit_box()).unwrap();
        let p = leverage_pmf(&a, &s).unwrap();
        assert!((p.probs()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_scaled_matrix_errors_before_sampling() {
        let a = ParamMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let s = ScaleQuery::new(vec![1.0, 1.0], &unit_box()).unwrap();
        assert!(matches!(
            leverage_sample(&a, &s, Seed(1), 10),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn box_violations_are_rejected() {
        let b = BoxConstraint::new(0.5, 2.0).unwrap();
        assert!(matches!(
            ScaleQuery::new(vec![1.0, 2.0], &b),
            Err(Error::ConstraintViolation { kind: ConstraintKind::Box, .. })
        ));
        assert!(ScaleQuery::new(vec![0.0, 1.0], &b).is_err());
        assert!(BoxConstraint::new(2.0, 1.0).is_err());
        assert!(BoxConstraint::new(0.0, 1.0).is_err());
    }

    #[test]
    fn w_vanishes_for_zero_and_self_direction() {
        let a = ParamMatrix::from_rows(&[
            vec![1.0, 0.2],
            vec![-0.4, 1.1],
            vec![0.3, 0.7],
            vec![0.9, -0.5],
        ])
        .unwrap();
        let s = ScaleQuery::new(vec![1.0, 0.9, 1.2, 1.1], &BoxConstraint::new(0.5, 2.0).unwrap())
            .unwrap();
        let w0 = leverage_w(&a, &ParamMatrix::zeros(4, 2), &s).unwrap();
        assert!(w0.iter().all(|&v| v == 0.0));
        let wa = leverage_w(&a, &a, &s).unwrap();
        assert!(wa.iter().all(|&v| v.abs() < 1e-14), "{wa:?}");
        let da = leverage_pmf_derivative(&a, &a, &s).unwrap();
        assert!(da.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_leverage_row_is_reported() {
        let a = ParamMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let m = ParamMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let s = ScaleQuery::new(vec![1.0, 1.0], &unit_box()).unwrap();
        assert!(matches!(
            leverage_w(&a, &m, &s),
            Err(Error::ZeroLeverage { row: 1, .. })
        ));
        // the derivative itself is well defined there
        let dq = leverage_pmf_derivative(&a, &m, &s).unwrap();
        assert_eq!(dq, vec![0.0, 0.0]);
    }

    #[test]
    fn from_inverse_squares_round_trips() {
        let b = BoxConstraint::new(0.5, 2.0).unwrap();
        let q = ScaleQuery::from_inverse_squares(&[0.5, 2.0, 1.0, 5.0], &b).unwrap();
        let u = q.inverse_squares();
        assert!((u[0] - 0.5).abs() < 1e-15);
        assert!((u[1] - 2.0).abs() < 1e-15);
        assert!((u[3] - 2.0).abs() < 1e-15, "clamped into the box");
    }
}
