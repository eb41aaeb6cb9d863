//! Best single query under the energy or box constraint.
//!
//! Every objective is maximized by multi-start projected gradient ascent
//! with central finite-difference gradients. Each accepted step must
//! strictly improve the objective; rejected steps halve the step length.
//! The reported value is the best objective seen, so it lower-bounds the
//! true supremum.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::{hellinger_sq, variance_under, Seed};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::leverage::{first_order, leverage_pmf, BoxConstraint, ScaleQuery, ZERO_LEVERAGE_TOL};
use crate::numerics::{norm2, thin_qr, ParamMatrix};
use crate::softmax::{softmax_pmf, EnergyConstraint, SoftmaxQuery};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Initial step as a fraction of the feasible region's scale.
    pub step_init: f64,
    pub grad_eps: f64,
    /// Stop once a step improves the objective by less than `tol` (relative).
    pub tol: f64,
    pub seed: Seed,
    pub exec: Execution,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            max_iters: 500,
            step_init: 0.1,
            grad_eps: 1e-6,
            tol: 1e-9,
            seed: Seed(0),
            exec: Execution::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.restarts >= 1
            && self.max_iters >= 1
            && self.step_init > 0.0
            && self.grad_eps > 0.0
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid optimizer config: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    /// `x` for softmax objectives, `u = s⁻²` for leverage objectives.
    pub argmax: Vec<f64>,
    pub value: f64,
    /// Total ascent iterations across all restarts.
    pub iterations_used: usize,
    pub restarts_used: usize,
    /// Whether the winning restart stopped on its own criteria.
    pub converged: bool,
    /// Whether the argmax lies on the boundary of the feasible set.
    pub constraint_active: bool,
}

impl OptResult {
    pub fn softmax_query(&self, constraint: &EnergyConstraint) -> Result<SoftmaxQuery> {
        SoftmaxQuery::new(self.argmax.clone(), constraint)
    }

    pub fn leverage_query(&self, constraint: &BoxConstraint) -> Result<ScaleQuery> {
        ScaleQuery::from_inverse_squares(&self.argmax, constraint)
    }
}

/// Feasible region with a Euclidean projection.
trait Region: Sync {
    fn project(&self, x: &mut [f64]);
    fn scale(&self) -> f64;
    fn sample(&self, seed: Seed) -> Vec<f64>;
    fn is_active(&self, x: &[f64]) -> bool;
}

struct Ball {
    dim: usize,
    radius: f64,
}

impl Region for Ball {
    fn project(&self, x: &mut [f64]) {
        let nrm = norm2(x);
        if nrm > self.radius {
            let f = self.radius / nrm;
            x.iter_mut().for_each(|v| *v *= f);
        }
    }

    fn scale(&self) -> f64 {
        self.radius
    }

    fn sample(&self, seed: Seed) -> Vec<f64> {
        let mut rng = seed.rng();
        let mut x: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = norm2(&x).max(f64::MIN_POSITIVE);
        let u: f64 = rng.random();
        let r = self.radius * u.powf(1.0 / self.dim as f64);
        x.iter_mut().for_each(|v| *v *= r / nrm);
        x
    }

    fn is_active(&self, x: &[f64]) -> bool {
        norm2(x) >= self.radius * (1.0 - 1e-9)
    }
}

struct Boxed {
    dim: usize,
    lo: f64,
    hi: f64,
}

impl Region for Boxed {
    fn project(&self, x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = v.clamp(self.lo, self.hi));
    }

    fn scale(&self) -> f64 {
        // a degenerate box still needs a non-zero step scale
        (self.hi - self.lo).max(self.hi * 1e-12)
    }

    fn sample(&self, seed: Seed) -> Vec<f64> {
        let mut rng = seed.rng();
        (0..self.dim)
            .map(|_| self.lo + (self.hi - self.lo) * rng.random::<f64>())
            .collect()
    }

    fn is_active(&self, x: &[f64]) -> bool {
        let tol = 1e-9 * self.scale();
        x.iter()
            .any(|&v| (v - self.lo).abs() <= tol || (self.hi - v).abs() <= tol)
    }
}

struct Ascent {
    x: Vec<f64>,
    fx: f64,
    iters: usize,
    converged: bool,
}

fn central_gradient<F>(f: &F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(&probe)?;
        probe[j] = orig - h;
        let down = f(&probe)?;
        probe[j] = orig;
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

fn ascend<R, F>(region: &R, f: &F, start: Vec<f64>, cfg: &OptimizerConfig) -> Result<Ascent>
where
    R: Region,
    F: Fn(&[f64]) -> Result<f64>,
{
    let scale = region.scale();
    let min_step = 1e-12 * scale;
    let mut x = start;
    region.project(&mut x);
    let mut fx = f(&x)?;
    let mut step = cfg.step_init * scale;
    let mut iters = 0;
    let mut converged = false;
    while iters < cfg.max_iters {
        iters += 1;
        let g = central_gradient(f, &x, cfg.grad_eps)?;
        let gn = norm2(&g);
        if !(gn > 0.0) || !gn.is_finite() {
            converged = true;
            break;
        }
        let accepted = loop {
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(v, d)| v + step * d / gn).collect();
            region.project(&mut cand);
            let fc = f(&cand)?;
            if fc > fx {
                break Some((cand, fc));
            }
            step *= 0.5;
            if step < min_step {
                break None;
            }
        };
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        let gain = fc - fx;
        x = cand;
        fx = fc;
        step = (step * 2.0).min(scale);
        if gain <= cfg.tol * fx.abs() {
            converged = true;
            break;
        }
    }
    Ok(Ascent {
        x,
        fx,
        iters,
        converged,
    })
}

/// Runs all restarts and keeps the best (ties go to the lowest index).
/// Restart 0 starts from `heuristic` when given.
fn maximize<R, F>(
    region: &R,
    f: F,
    heuristic: Option<Vec<f64>>,
    cfg: &OptimizerConfig,
) -> Result<(Ascent, usize)>
where
    R: Region,
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    let runs = cfg.exec.map(cfg.restarts, |k| {
        let start = match (&heuristic, k) {
            (Some(h), 0) => h.clone(),
            _ => region.sample(cfg.seed.derive(&[k as u64])),
        };
        ascend(region, &f, start, cfg)
    });
    let mut total = 0;
    let mut best: Option<Ascent> = None;
    for run in runs {
        let run = run?;
        total += run.iters;
        if best.as_ref().is_none_or(|b| run.fx > b.fx) {
            best = Some(run);
        }
    }
    Ok((best.expect("restarts ≥ 1"), total))
}

fn finish<R: Region>(
    region: &R,
    best: Ascent,
    total: usize,
    cfg: &OptimizerConfig,
    value: f64,
) -> OptResult {
    OptResult {
        constraint_active: region.is_active(&best.x),
        argmax: best.x,
        value,
        iterations_used: total,
        restarts_used: cfg.restarts,
        converged: best.converged,
    }
}

fn row_direction(diff: &ParamMatrix, radius: f64) -> Option<Vec<f64>> {
    let (i, nrm) = (0..diff.rows())
        .map(|i| (i, norm2(diff.row(i))))
        .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
    (nrm > 0.0).then(|| diff.row(i).iter().map(|v| v * radius / nrm).collect())
}

/// `H(Softmax_A(x), Softmax_B(x))`, with `x` unchecked.
pub fn softmax_hellinger(a: &ParamMatrix, b: &ParamMatrix, x: &[f64]) -> Result<f64> {
    Ok(softmax_hellinger_sq(a, b, x)?.sqrt())
}

fn softmax_hellinger_sq(a: &ParamMatrix, b: &ParamMatrix, x: &[f64]) -> Result<f64> {
    let q = SoftmaxQuery::unchecked(x.to_vec());
    hellinger_sq(&softmax_pmf(a, &q)?, &softmax_pmf(b, &q)?)
}

/// `Var_{Softmax_A(x)}(Mx)`, with `x` unchecked.
pub fn softmax_variance(a: &ParamMatrix, m: &ParamMatrix, x: &[f64]) -> Result<f64> {
    let q = SoftmaxQuery::unchecked(x.to_vec());
    variance_under(&softmax_pmf(a, &q)?, &m.mul_vec(x)?)
}

fn scales_from_u(u: &[f64]) -> Result<ScaleQuery> {
    if u.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("inverse squared scales must be positive".into()));
    }
    Ok(ScaleQuery::unchecked(u.iter().map(|v| 1.0 / v.sqrt()).collect()))
}

/// `H(Leverage_A(s), Leverage_B(s))` at `s = u^{-1/2}`, with `u` unchecked.
pub fn leverage_hellinger(a: &ParamMatrix, b: &ParamMatrix, u: &[f64]) -> Result<f64> {
    Ok(leverage_hellinger_sq(a, b, u)?.sqrt())
}

fn leverage_hellinger_sq(a: &ParamMatrix, b: &ParamMatrix, u: &[f64]) -> Result<f64> {
    let s = scales_from_u(u)?;
    hellinger_sq(&leverage_pmf(a, &s)?, &leverage_pmf(b, &s)?)
}

/// `Var_{Leverage_A(s)}(w_s)` at `s = u^{-1/2}`, with `u` unchecked.
pub fn leverage_variance(a: &ParamMatrix, m: &ParamMatrix, u: &[f64]) -> Result<f64> {
    let s = scales_from_u(u)?;
    let fo = first_order(a, m, &s)?;
    if let Some((row, &value)) = fo
        .leverage
        .iter()
        .enumerate()
        .find(|(_, &v)| v < ZERO_LEVERAGE_TOL)
    {
        return Err(Error::ZeroLeverage { row, value });
    }
    let d = a.cols() as f64;
    let w: Vec<f64> = fo.w_diag.iter().zip(&fo.leverage).map(|(w, l)| w / l).collect();
    let p = crate::distributions::DiscreteDistribution::new(
        fo.leverage.iter().map(|l| l / d).collect(),
    )?;
    variance_under(&p, &w)
}

/// Approximates `sup_{‖x‖₂ ≤ E} H(Softmax_A(x), Softmax_B(x))`.
pub fn max_hellinger_softmax(
    a: &ParamMatrix,
    b: &ParamMatrix,
    constraint: &EnergyConstraint,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    a.check_same_shape(b, "max_hellinger_softmax")?;
    let region = Ball {
        dim: a.cols(),
        radius: constraint.energy(),
    };
    let heuristic = row_direction(&a.sub(b)?, constraint.energy());
    let (best, total) = maximize(&region, |x| softmax_hellinger_sq(a, b, x), heuristic, cfg)?;
    let value = softmax_hellinger(a, b, &best.x)?;
    Ok(finish(&region, best, total, cfg, value))
}

/// Approximates `ν = sup_{‖x‖₂ ≤ E} Var_{Softmax_A(x)}(Mx)`.
pub fn max_variance_softmax(
    a: &ParamMatrix,
    m: &ParamMatrix,
    constraint: &EnergyConstraint,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    a.check_same_shape(m, "max_variance_softmax")?;
    let region = Ball {
        dim: a.cols(),
        radius: constraint.energy(),
    };
    let heuristic = row_direction(m, constraint.energy());
    let (best, total) = maximize(&region, |x| softmax_variance(a, m, x), heuristic, cfg)?;
    let value = softmax_variance(a, m, &best.x)?;
    Ok(finish(&region, best, total, cfg, value))
}

fn box_region(n: usize, constraint: &BoxConstraint) -> Boxed {
    let (lo, hi) = constraint.u_range();
    Boxed { dim: n, lo, hi }
}

fn box_center(region: &Boxed) -> Vec<f64> {
    vec![0.5 * (region.lo + region.hi); region.dim]
}

/// Approximates `sup_s H(Leverage_A(s), Leverage_B(s))` over `c ≤ s_i² ≤ C`.
pub fn max_hellinger_leverage(
    a: &ParamMatrix,
    b: &ParamMatrix,
    constraint: &BoxConstraint,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    a.check_same_shape(b, "max_hellinger_leverage")?;
    // full column rank of A and B is invariant under row scaling
    thin_qr(a)?;
    thin_qr(b)?;
    let region = box_region(a.rows(), constraint);
    let start = box_center(&region);
    let (best, total) = maximize(&region, |u| leverage_hellinger_sq(a, b, u), Some(start), cfg)?;
    let value = leverage_hellinger(a, b, &best.x)?;
    Ok(finish(&region, best, total, cfg, value))
}

/// Approximates `ν = sup_s Var_{Leverage_A(s)}(w_s)` over `c ≤ s_i² ≤ C`.
pub fn max_variance_leverage(
    a: &ParamMatrix,
    m: &ParamMatrix,
    constraint: &BoxConstraint,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    a.check_same_shape(m, "max_variance_leverage")?;
    thin_qr(a)?;
    let region = box_region(a.rows(), constraint);
    let start = box_center(&region);
    let (best, total) = maximize(&region, |u| leverage_variance(a, m, u), Some(start), cfg)?;
    let value = leverage_variance(a, m, &best.x)?;
    Ok(finish(&region, best, total, cfg, value))
}
