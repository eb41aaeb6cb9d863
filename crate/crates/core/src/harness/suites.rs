//! Randomized bound-falsification and invariance suites.
//!
//! Instance `k` of a check named `name` draws everything from
//! `seed.derive([label(name), k])`, which is also the seed written to its row.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bounds::{extremal_pair, logit_step_h2_bound, logit_step_tv_bound, BoundParams, BoundReport};
use crate::distributions::{hellinger_sq, tv, DiscreteDistribution, Seed};
use crate::error::Result;
use crate::exec::Execution;
use crate::format::g17;
use crate::leverage::{leverage_pmf, BoxConstraint, ScaleQuery};
use crate::numerics::{gram, min_eigenvalue, norm2, row_gram_gap, two_to_infty_norm, ParamMatrix};
use crate::optimizer::{max_hellinger_softmax, OptimizerConfig};
use crate::softmax::{softmax_from_logits, softmax_pmf, EnergyConstraint, SoftmaxQuery};

use super::csv::{Cell, CsvTable};
use super::generators::{gaussian_matrix, random_invertible, Generator, COND_CAP};
use super::taylor::random_scales;

/// Absolute slack on the randomized inequality checks.
pub const CHECK_SLACK: f64 = 1e-12;
/// `ε C / (c δ)` ceiling for the leverage TV envelope.
pub const LEVERAGE_ENVELOPE_REGIME: f64 = 0.1;
pub const LEVERAGE_ENVELOPE_K: f64 = 4.0;
/// Scales `s` tried per leverage envelope pair.
pub const LEVERAGE_ENVELOPE_QUERIES: usize = 10;
pub const LOW_MASS_NS: [usize; 3] = [10, 100, 1000];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    /// Instances for the cheap distribution-level checks.
    pub instances: usize,
    /// Instances for checks that build and factor model matrices.
    pub model_instances: usize,
    pub seed: Seed,
    pub exec: Execution,
    /// Multiplies every bound value; anything but 1 is fault injection.
    pub bound_scale: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 10_000,
            model_instances: 1_000,
            seed: Seed(0),
            exec: Execution::default(),
            bound_scale: 1.0,
        }
    }
}

impl SuiteConfig {
    fn instance_seed(&self, name: &str, k: usize) -> Seed {
        self.seed.derive(&[Seed::label(name), k as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSummary {
    pub bound_name: &'static str,
    pub strict: bool,
    pub rows: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BoundSuite {
    pub reports: Vec<BoundReport>,
}

impl BoundSuite {
    pub fn strict_violations(&self) -> usize {
        self.reports.iter().filter(|r| r.strict && !r.satisfied).count()
    }

    pub fn passed(&self) -> bool {
        self.strict_violations() == 0
    }

    /// Per-bound aggregates in order of first appearance.
    pub fn summary(&self) -> Vec<BoundSummary> {
        let mut order: Vec<&'static str> = Vec::new();
        let mut by: BTreeMap<&'static str, BoundSummary> = BTreeMap::new();
        for r in &self.reports {
            let e = by.entry(r.bound_name).or_insert_with(|| {
                order.push(r.bound_name);
                BoundSummary {
                    bound_name: r.bound_name,
                    strict: r.strict,
                    rows: 0,
                    violations: 0,
                    max_ratio: f64::NEG_INFINITY,
                    min_ratio: f64::INFINITY,
                }
            });
            e.rows += 1;
            e.violations += usize::from(!r.satisfied);
            e.max_ratio = e.max_ratio.max(r.ratio());
            e.min_ratio = e.min_ratio.min(r.ratio());
        }
        order.into_iter().map(|n| by.remove(n).expect("present")).collect()
    }

    pub fn of(&self, name: &str) -> Vec<&BoundReport> {
        self.reports.iter().filter(|r| r.bound_name == name).collect()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "bound_name",
            "strict",
            "instance",
            "seed",
            "eps",
            "E",
            "c",
            "C",
            "delta",
            "bound_value",
            "observed_value",
            "ratio",
            "satisfied",
        ]);
        for r in &self.reports {
            t.push(vec![
                Cell::from(r.bound_name),
                r.strict.into(),
                r.instance.into(),
                r.seed.0.into(),
                r.params.eps.into(),
                r.params.energy.into(),
                r.params.c.into(),
                r.params.cap.into(),
                r.params.delta.into(),
                r.bound_value.into(),
                r.observed_value.into(),
                r.ratio().into(),
                r.satisfied.into(),
            ]);
        }
        for s in self.summary() {
            t.note(format!(
                "bound={} strict={} rows={} violations={} max_ratio={} min_ratio={}",
                s.bound_name,
                s.strict,
                s.rows,
                s.violations,
                g17(s.max_ratio),
                g17(s.min_ratio)
            ));
        }
        t.note(format!("strict_violations={}", self.strict_violations()));
        t
    }
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// ε uniform on `(0, hi]`.
fn positive_eps<R: Rng + ?Sized>(rng: &mut R, hi: f64) -> f64 {
    hi * (1.0 - rng.random::<f64>())
}

fn report(
    cfg: &SuiteConfig,
    name: &'static str,
    strict: bool,
    k: usize,
    params: BoundParams,
    bound: f64,
    observed: f64,
) -> BoundReport {
    BoundReport::new(
        name,
        strict,
        k as u64,
        cfg.instance_seed(name, k),
        params,
        bound * cfg.bound_scale,
        observed,
    )
}

/// Logit pairs with `b − a ∈ {0, ε}ⁿ`, `ε ∈ (0, 2]`, against both closed forms.
fn logit_step_rows(cfg: &SuiteConfig) -> Result<Vec<BoundReport>> {
    let rows = cfg.exec.map(cfg.instances, |k| -> Result<[BoundReport; 2]> {
        let mut rng = cfg.instance_seed("logit_step", k).rng();
        let n = rng.random_range(2..=10);
        let eps = positive_eps(&mut rng, 2.0);
        let a = normal_vec(&mut rng, n, 2.0);
        let b: Vec<f64> = a.iter().map(|v| if rng.random() { v + eps } else { *v }).collect();
        let (p, q) = (softmax_from_logits(&a)?, softmax_from_logits(&b)?);
        let params = BoundParams { eps: Some(eps), ..Default::default() };
        Ok([
            report(cfg, "logit_step_h2", true, k, params, logit_step_h2_bound(eps) + CHECK_SLACK, hellinger_sq(&p, &q)?),
            report(cfg, "logit_step_tv", true, k, params, logit_step_tv_bound(eps) + CHECK_SLACK, tv(&p, &q)?),
        ])
    });
    flatten(rows)
}

fn flatten<const N: usize>(rows: Vec<Result<[BoundReport; N]>>) -> Result<Vec<BoundReport>> {
    let mut out = Vec::with_capacity(rows.len() * N);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Equality witnesses over `ε ∈ {0.1, 0.5, 1, 2}`, `n ∈ {2, 5, 10}`,
/// `m ∈ {1, ⌊n/2⌋}`, `t ∈ {0.5, 1, 2}`.
pub fn extremal_grid() -> Vec<(usize, usize, f64, f64)> {
    let mut grid = Vec::new();
    for &eps in &[0.1, 0.5, 1.0, 2.0] {
        for &n in &[2usize, 5, 10] {
            let mut ms = vec![1, n / 2];
            ms.dedup();
            for m in ms {
                for &t in &[0.5, 1.0, 2.0] {
                    grid.push((n, m, eps, t));
                }
            }
        }
    }
    grid
}

fn extremal_rows(cfg: &SuiteConfig) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    for (k, (n, m, eps, t)) in extremal_grid().into_iter().enumerate() {
        let (a, b) = extremal_pair(n, m, eps, t)?;
        let (p, q) = (softmax_from_logits(&a)?, softmax_from_logits(&b)?);
        let params = BoundParams { eps: Some(eps), ..Default::default() };
        out.push(report(cfg, "extremal_h2", true, k, params, logit_step_h2_bound(eps), hellinger_sq(&p, &q)?));
        out.push(report(cfg, "extremal_tv", true, k, params, logit_step_tv_bound(eps), tv(&p, &q)?));
    }
    Ok(out)
}

/// `‖a − b‖_∞ = ε ≤ 2`, chained through `max(a, b)`.
fn logit_inf_rows(cfg: &SuiteConfig) -> Result<Vec<BoundReport>> {
    let rows = cfg.exec.map(cfg.instances, |k| -> Result<[BoundReport; 2]> {
        let mut rng = cfg.instance_seed("logit_inf", k).rng();
        let n = rng.random_range(2..=10);
        let eps = positive_eps(&mut rng, 2.0);
        let a = normal_vec(&mut rng, n, 2.0);
        let hit = rng.random_range(0..n);
        let b: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let u: f64 = if i == hit {
                    if rng.random() { 1.0 } else { -1.0 }
                } else {
                    rng.random_range(-1.0..=1.0)
                };
                v + eps * u
            })
            .collect();
        let (p, q) = (softmax_from_logits(&a)?, softmax_from_logits(&b)?);
        let params = BoundParams { eps: Some(eps), ..Default::default() };
        Ok([
            report(cfg, "logit_inf_h2", true, k, params, logit_step_h2_bound(2.0 * eps) + CHECK_SLACK, hellinger_sq(&p, &q)?),
            report(cfg, "logit_inf_tv", true, k, params, 2.0 * logit_step_tv_bound(eps) + CHECK_SLACK, tv(&p, &q)?),
        ])
    });
    flatten(rows)
}

/// `H² ≤ (ε‖x‖₂)²` with `ε = ‖A − B‖_{2→∞}` and `ε‖x‖₂ ≤ 0.5`.
fn softmax_envelope_rows(cfg: &SuiteConfig) -> Result<Vec<BoundReport>> {
    let rows = cfg.exec.map(cfg.model_instances, |k| -> Result<[BoundReport; 1]> {
        let mut rng = cfg.instance_seed("softmax_envelope", k).rng();
        let n = rng.random_range(2..=10);
        let d = rng.random_range(1..=5);
        let a = gaussian_matrix(&mut rng, n, d);
        let dir = gaussian_matrix(&mut rng, n, d);
        let eps = positive_eps(&mut rng, 0.5);
        let b = a.add_scaled(&dir, eps / two_to_infty_norm(&dir))?;
        let eps = two_to_infty_norm(&a.sub(&b)?);
        let xdir = normal_vec(&mut rng, d, 1.0);
        let energy = 1.0;
        let xn: f64 = rng.random_range(0.0f64..=energy).min(0.5 / eps);
        let x: Vec<f64> = xdir.iter().map(|v| v * xn / norm2(&xdir)).collect();
        let q = SoftmaxQuery::new(x, &EnergyConstraint::new(energy)?)?;
        let h2 = hellinger_sq(&softmax_pmf(&a, &q)?, &softmax_pmf(&b, &q)?)?;
        let scale = eps * norm2(q.as_slice());
        let params = BoundParams { eps: Some(eps), energy: Some(energy), ..Default::default() };
        Ok([report(cfg, "softmax_envelope_h2", false, k, params, scale * scale, h2)])
    });
    flatten(rows)
}

/// Rescales a random direction until `ε C / (c δ) ≤ 0.1`.
fn leverage_envelope_pair<R: Rng + ?Sized>(
    rng: &mut R,
) -> Result<(ParamMatrix, ParamMatrix, BoxConstraint, f64, f64)> {
    loop {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(d + 1..=8);
        let a = gaussian_matrix(rng, n, d);
        let delta = min_eigenvalue(&gram(&a));
        if delta < 1e-3 {
            continue;
        }
        let c = rng.random_range(0.25..=1.0);
        let cap = c * rng.random_range(1.0..=4.0);
        let bx = BoxConstraint::new(c, cap)?;
        let m = gaussian_matrix(rng, n, d);
        let mut t = rng.random_range(0.01..=1.0) * LEVERAGE_ENVELOPE_REGIME * c * delta
            / (cap * row_gram_gap(&a, &a.add_scaled(&m, 1.0)?)?.max(1e-300));
        loop {
            let b = a.add_scaled(&m, t)?;
            let eps = row_gram_gap(&a, &b)?;
            let regime = eps * cap / (c * delta);
            if regime <= LEVERAGE_ENVELOPE_REGIME {
                if eps > 0.0 {
                    return Ok((a, b, bx, eps, delta));
                }
                break;
            }
            t *= 0.5;
        }
    }
}

fn leverage_envelope_rows(cfg: &SuiteConfig) -> Result<Vec<BoundReport>> {
    let rows = cfg.exec.map(cfg.model_instances, |k| -> Result<[BoundReport; 1]> {
        let mut rng = cfg.instance_seed("leverage_envelope", k).rng();
        let (a, b, bx, eps, delta) = leverage_envelope_pair(&mut rng)?;
        let mut worst = 0.0f64;
        for _ in 0..LEVERAGE_ENVELOPE_QUERIES {
            let s = ScaleQuery::new(random_scales(&mut rng, a.rows(), &bx), &bx)?;
            worst = worst.max(tv(&leverage_pmf(&a, &s)?, &leverage_pmf(&b, &s)?)?);
        }
        let regime = eps * bx.cap() / (bx.c() * delta);
        let params = BoundParams {
            eps: Some(eps),
            c: Some(bx.c()),
            cap: Some(bx.cap()),
            delta: Some(delta),
            ..Default::default()
        };
        Ok([report(cfg, "leverage_envelope_tv", false, k, params, LEVERAGE_ENVELOPE_K * regime, worst)])
    });
    flatten(rows)
}

/// `A = 0`, `M = e₁e₁ᵀ`, `ε = 0.1`, `E = 1`: optimized `H² ≤ 2ε²E²/n`.
fn low_mass_rows(cfg: &SuiteConfig) -> Result<Vec<BoundReport>> {
    let (eps, energy) = (0.1, 1.0);
    let ec = EnergyConstraint::new(energy)?;
    let mut out = Vec::new();
    for (k, &n) in LOW_MASS_NS.iter().enumerate() {
        let (a, m) = Generator::LowMass.instance(n, 2, Seed(0))?;
        let b = a.add_scaled(&m, eps)?;
        let opt = OptimizerConfig {
            restarts: 8,
            seed: cfg.instance_seed("low_mass", k),
            exec: cfg.exec,
            ..OptimizerConfig::default()
        };
        let h = max_hellinger_softmax(&a, &b, &ec, &opt)?.value;
        let params = BoundParams { eps: Some(eps), energy: Some(energy), ..Default::default() };
        let bound = 2.0 * eps * eps * energy * energy / n as f64;
        out.push(report(cfg, "low_mass_h2", false, k, params, bound, h * h));
    }
    Ok(out)
}

pub fn run_bound_suite(cfg: &SuiteConfig) -> Result<BoundSuite> {
    let mut reports = Vec::new();
    reports.extend(logit_step_rows(cfg)?);
    reports.extend(extremal_rows(cfg)?);
    reports.extend(logit_inf_rows(cfg)?);
    reports.extend(softmax_envelope_rows(cfg)?);
    reports.extend(leverage_envelope_rows(cfg)?);
    reports.extend(low_mass_rows(cfg)?);
    Ok(BoundSuite { reports })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceResult {
    pub name: &'static str,
    pub instances: usize,
    /// Largest deviation seen; for inequalities, the largest `lhs − rhs`.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub violations: usize,
}

impl InvarianceResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn collect(name: &'static str, tolerance: f64, devs: Vec<Result<f64>>) -> Result<Self> {
        let mut max_deviation = f64::NEG_INFINITY;
        let mut violations = 0;
        let instances = devs.len();
        for d in devs {
            let d = d?;
            max_deviation = max_deviation.max(d);
            violations += usize::from(!(d <= tolerance));
        }
        Ok(Self { name, instances, max_deviation, tolerance, violations })
    }
}

#[derive(Debug, Clone, Default)]
pub struct InvarianceSuite {
    pub results: Vec<InvarianceResult>,
}

impl InvarianceSuite {
    pub fn passed(&self) -> bool {
        self.results.iter().all(InvarianceResult::passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvarianceResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn footer_lines(&self) -> Vec<String> {
        self.results
            .iter()
            .map(|r| {
                format!(
                    "invariance={} instances={} max_deviation={} tolerance={} violations={}",
                    r.name,
                    r.instances,
                    g17(r.max_deviation),
                    g17(r.tolerance),
                    r.violations
                )
            })
            .collect()
    }
}

/// Random pmf on `2..=12` points; about a quarter of the pairs get zeros.
fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<DiscreteDistribution> {
    let sparse = rng.random_range(0..4) == 0;
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = rng.sample(rand_distr::Exp1);
            if sparse && rng.random_range(0..3) == 0 {
                0.0
            } else {
                e.powf(rng.random_range(0.5..=3.0))
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    DiscreteDistribution::from_weights(&w)
}

pub fn run_invariance_suite(cfg: &SuiteConfig) -> Result<InvarianceSuite> {
    let ex = cfg.exec;
    let models = cfg.model_instances;
    let mut results = Vec::new();
    let s = |name: &str, k: usize| cfg.instance_seed(name, k);

    results.push(InvarianceResult::collect("softmax_shift", 1e-12, ex.map(models, |k| {
        let mut rng = s("softmax_shift", k).rng();
        let n = rng.random_range(2..=10);
        let d = rng.random_range(1..=5);
        let a = gaussian_matrix(&mut rng, n, d);
        let w = normal_vec(&mut rng, d, 1.0);
        let shifted = ParamMatrix::from_fn(n, d, |i, j| a.get(i, j) + w[j]);
        let x = normal_vec(&mut rng, d, 1.0);
        let q = SoftmaxQuery::unchecked(x);
        Ok(softmax_pmf(&a, &q)?.max_abs_diff(&softmax_pmf(&shifted, &q)?))
    }))?);

    let bx = BoxConstraint::new(0.5, 2.0)?;
    results.push(InvarianceResult::collect("leverage_right", 1e-8, ex.map(models, |k| {
        let mut rng = s("leverage_right", k).rng();
        let d = rng.random_range(1..=4);
        let n = rng.random_range(d..=10);
        let a = gaussian_matrix(&mut rng, n, d);
        let r = random_invertible(d, Seed(rng.random()), COND_CAP)?;
        let sq = ScaleQuery::new(random_scales(&mut rng, n, &bx), &bx)?;
        Ok(leverage_pmf(&a, &sq)?.max_abs_diff(&leverage_pmf(&a.matmul(&r)?, &sq)?))
    }))?);

    results.push(InvarianceResult::collect("leverage_sign", 1e-12, ex.map(models, |k| {
        let mut rng = s("leverage_sign", k).rng();
        let d = rng.random_range(1..=4);
        let n = rng.random_range(d..=10);
        let a = gaussian_matrix(&mut rng, n, d);
        let sv = random_scales(&mut rng, n, &bx);
        let flipped: Vec<f64> = sv.iter().map(|v| if rng.random() { -v } else { *v }).collect();
        let p = leverage_pmf(&a, &ScaleQuery::new(sv, &bx)?)?;
        Ok(p.max_abs_diff(&leverage_pmf(&a, &ScaleQuery::new(flipped, &bx)?)?))
    }))?);

    results.push(InvarianceResult::collect("normalization", 1e-12, ex.map(models, |k| {
        let mut rng = s("normalization", k).rng();
        let d = rng.random_range(1..=4);
        let n = rng.random_range(d..=10);
        let a = gaussian_matrix(&mut rng, n, d);
        let x = SoftmaxQuery::unchecked(normal_vec(&mut rng, d, 3.0));
        let sq = ScaleQuery::new(random_scales(&mut rng, n, &bx), &bx)?;
        let ps: f64 = softmax_pmf(&a, &x)?.probs().iter().sum();
        let ls: f64 = leverage_pmf(&a, &sq)?.probs().iter().sum();
        Ok((ps - 1.0).abs().max((ls - 1.0).abs()))
    }))?);

    let pair = |name: &str, k: usize| -> Result<(DiscreteDistribution, DiscreteDistribution, DiscreteDistribution)> {
        let mut rng = s(name, k).rng();
        let n = rng.random_range(2..=12);
        Ok((
            random_distribution(&mut rng, n)?,
            random_distribution(&mut rng, n)?,
            random_distribution(&mut rng, n)?,
        ))
    };

    results.push(InvarianceResult::collect("sandwich_lower", CHECK_SLACK, ex.map(cfg.instances, |k| {
        let (p, q, _) = pair("sandwich", k)?;
        Ok(hellinger_sq(&p, &q)? - tv(&p, &q)?)
    }))?);
    results.push(InvarianceResult::collect("sandwich_upper", CHECK_SLACK, ex.map(cfg.instances, |k| {
        let (p, q, _) = pair("sandwich", k)?;
        Ok(tv(&p, &q)? - 2f64.sqrt() * hellinger_sq(&p, &q)?.sqrt())
    }))?);
    results.push(InvarianceResult::collect("triangle_tv", CHECK_SLACK, ex.map(models, |k| {
        let (p, q, r) = pair("triangle", k)?;
        Ok(tv(&p, &r)? - tv(&p, &q)? - tv(&q, &r)?)
    }))?);
    results.push(InvarianceResult::collect("triangle_hellinger", CHECK_SLACK, ex.map(models, |k| {
        let (p, q, r) = pair("triangle", k)?;
        let h = |x: &DiscreteDistribution, y: &DiscreteDistribution| hellinger_sq(x, y).map(f64::sqrt);
        Ok(h(&p, &r)? - h(&p, &q)? - h(&q, &r)?)
    }))?);
    results.push(InvarianceResult::collect("symmetry", 0.0, ex.map(models, |k| {
        let (p, q, _) = pair("symmetry", k)?;
        Ok((tv(&p, &q)? - tv(&q, &p)?).abs().max((hellinger_sq(&p, &q)? - hellinger_sq(&q, &p)?).abs()))
    }))?);

    Ok(InvarianceSuite { results })
}
