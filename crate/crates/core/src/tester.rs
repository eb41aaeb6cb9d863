//! Fixed-query likelihood-ratio testing against a black-box model oracle,
//! and Monte-Carlo estimation of success rates and sample complexity.

use crate::distributions::{draw, hellinger_sq, tv, DiscreteDistribution, Seed};
use crate::error::{ConstraintKind, Error, Result};
use crate::exec::Execution;
use crate::leverage::{leverage_pmf, BoxConstraint, ScaleQuery};
use crate::numerics::ParamMatrix;
use crate::optimizer::{max_hellinger_leverage, max_hellinger_softmax, OptimizerConfig};
use crate::softmax::{softmax_pmf, EnergyConstraint, SoftmaxQuery};

/// Probabilities are floored at this value inside the log-likelihood ratio.
pub const PROB_FLOOR: f64 = 1e-300;
/// Pairs closer than this in TV at the chosen query count as indistinguishable.
pub const INDISTINGUISHABLE_TV: f64 = 1e-12;
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Softmax,
    Leverage,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Softmax => "softmax",
            Family::Leverage => "leverage",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    Energy(EnergyConstraint),
    Box(BoxConstraint),
}

impl Constraint {
    pub fn family(&self) -> Family {
        match self {
            Constraint::Energy(_) => Family::Softmax,
            Constraint::Box(_) => Family::Leverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Softmax(SoftmaxQuery),
    Leverage(ScaleQuery),
}

impl Query {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Query::Softmax(q) => q.as_slice(),
            Query::Leverage(q) => q.as_slice(),
        }
    }
}

/// Where [`run_test`] gets its query from.
#[derive(Debug, Clone, PartialEq)]
pub enum QuerySource {
    Fixed(Query),
    /// Maximize the Hellinger distance with the given optimizer settings.
    Auto(OptimizerConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn index(self) -> u8 {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Hypothesis::H0 => Hypothesis::H1,
            Hypothesis::H1 => Hypothesis::H0,
        }
    }
}

/// The public half of a testing problem: both parameter matrices and the
/// query constraint. Which one is true lives only in [`ModelOracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub params0: ParamMatrix,
    pub params1: ParamMatrix,
    pub constraint: Constraint,
}

impl OracleSpec {
    pub fn new(params0: ParamMatrix, params1: ParamMatrix, constraint: Constraint) -> Result<Self> {
        params0.check_same_shape(&params1, "model pair")?;
        if matches!(constraint, Constraint::Box(_)) && params0.rows() < params0.cols() {
            return Err(Error::ShapeMismatch(format!(
                "leverage model needs n ≥ d, got {}x{}",
                params0.rows(),
                params0.cols()
            )));
        }
        Ok(Self {
            params0,
            params1,
            constraint,
        })
    }

    pub fn family(&self) -> Family {
        self.constraint.family()
    }

    fn params(&self, h: Hypothesis) -> &ParamMatrix {
        match h {
            Hypothesis::H0 => &self.params0,
            Hypothesis::H1 => &self.params1,
        }
    }

    /// Output law of `params(h)` at `query`, after checking the query against
    /// this problem's family and constraint.
    pub fn pmf(&self, h: Hypothesis, query: &Query) -> Result<DiscreteDistribution> {
        let a = self.params(h);
        match (&self.constraint, query) {
            (Constraint::Energy(c), Query::Softmax(x)) => {
                if !c.admits(x.as_slice()) {
                    return Err(Error::ConstraintViolation {
                        kind: ConstraintKind::Energy,
                        detail: "query built against a different energy bound".into(),
                    });
                }
                softmax_pmf(a, x)
            }
            (Constraint::Box(c), Query::Leverage(s)) => {
                if !c.admits(s.as_slice()) {
                    return Err(Error::ConstraintViolation {
                        kind: ConstraintKind::Box,
                        detail: "query built against a different box".into(),
                    });
                }
                leverage_pmf(a, s)
            }
            _ => Err(Error::Domain(format!(
                "query type does not match the {} family",
                self.family()
            ))),
        }
    }

    pub fn pmfs(&self, query: &Query) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
        Ok((self.pmf(Hypothesis::H0, query)?, self.pmf(Hypothesis::H1, query)?))
    }

    /// The pair with the roles of the two hypotheses exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            params0: self.params1.clone(),
            params1: self.params0.clone(),
            constraint: self.constraint,
        }
    }
}

/// Black box answering queries with samples from the hidden model.
#[derive(Debug, Clone)]
pub struct ModelOracle {
    spec: OracleSpec,
    hidden_truth: Hypothesis,
    seed: Seed,
    calls: u64,
    queries_used: u64,
}

impl ModelOracle {
    pub fn new(spec: OracleSpec, hidden_truth: Hypothesis, seed: Seed) -> Self {
        Self {
            spec,
            hidden_truth,
            seed,
            calls: 0,
            queries_used: 0,
        }
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn queries_used(&self) -> u64 {
        self.queries_used
    }

    /// Submits `query` `count` times and returns one sample per submission.
    pub fn query(&mut self, query: &Query, count: usize) -> Result<Vec<usize>> {
        let p = self.spec.pmf(self.hidden_truth, query)?;
        let seed = self.seed.derive(&[self.calls]);
        self.calls += 1;
        self.queries_used += count as u64;
        Ok(draw(&p, seed, count))
    }

    /// Only for scoring a finished run; no decision path calls this.
    pub fn reveal(&self) -> Hypothesis {
        self.hidden_truth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub decision: Hypothesis,
    pub llr_final: f64,
    pub m: u64,
    pub query: Query,
    pub seed: Seed,
}

/// `log(p0_y / p1_y)` per outcome, with probabilities floored at [`PROB_FLOOR`].
#[derive(Debug, Clone)]
pub struct LogRatioTable {
    table: Vec<f64>,
}

impl LogRatioTable {
    pub fn new(p0: &DiscreteDistribution, p1: &DiscreteDistribution) -> Result<Self> {
        if p0.len() != p1.len() {
            return Err(Error::ShapeMismatch(format!(
                "hypotheses over {} and {} outcomes",
                p0.len(),
                p1.len()
            )));
        }
        let table = p0
            .probs()
            .iter()
            .zip(p1.probs())
            .map(|(a, b)| a.max(PROB_FLOOR).ln() - b.max(PROB_FLOOR).ln())
            .collect();
        Ok(Self { table })
    }

    /// Decides `H0` iff the accumulated log-likelihood ratio is `≥ 0`.
    pub fn decide(&self, samples: &[usize]) -> Result<(Hypothesis, f64)> {
        let mut llr = 0.0;
        for &y in samples {
            llr += *self.table.get(y).ok_or(Error::IndexOutOfRange {
                index: y,
                n: self.table.len(),
            })?;
        }
        let decision = if llr >= 0.0 { Hypothesis::H0 } else { Hypothesis::H1 };
        Ok((decision, llr))
    }
}

pub fn lrt_decide(
    samples: &[usize],
    p0: &DiscreteDistribution,
    p1: &DiscreteDistribution,
) -> Result<(Hypothesis, f64)> {
    LogRatioTable::new(p0, p1)?.decide(samples)
}

/// Turns a query source into a concrete admissible query.
pub fn resolve_query(spec: &OracleSpec, source: &QuerySource) -> Result<Query> {
    match source {
        QuerySource::Fixed(q) => Ok(q.clone()),
        QuerySource::Auto(cfg) => match &spec.constraint {
            Constraint::Energy(c) => {
                let r = max_hellinger_softmax(&spec.params0, &spec.params1, c, cfg)?;
                Ok(Query::Softmax(r.softmax_query(c)?))
            }
            Constraint::Box(c) => {
                let r = max_hellinger_leverage(&spec.params0, &spec.params1, c, cfg)?;
                Ok(Query::Leverage(r.leverage_query(c)?))
            }
        },
    }
}

/// Submits one query `m` times and decides by likelihood ratio against the
/// exact laws of both hypotheses at that query.
pub fn run_test(oracle: &mut ModelOracle, m: usize, source: &QuerySource) -> Result<TestReport> {
    if m == 0 {
        return Err(Error::Domain("a test needs m ≥ 1 samples".into()));
    }
    let query = resolve_query(oracle.spec(), source)?;
    let (p0, p1) = oracle.spec().pmfs(&query)?;
    let table = LogRatioTable::new(&p0, &p1)?;
    let before = oracle.queries_used();
    let samples = oracle.query(&query, m)?;
    let (decision, llr_final) = table.decide(&samples)?;
    Ok(TestReport {
        decision,
        llr_final,
        m: oracle.queries_used() - before,
        query,
        seed: oracle.seed(),
    })
}

/// Per-hypothesis empirical success rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessEstimate {
    pub under_h0: f64,
    pub under_h1: f64,
    pub trials: usize,
}

impl SuccessEstimate {
    /// Success "under both hypotheses": the smaller of the two rates.
    pub fn min(&self) -> f64 {
        self.under_h0.min(self.under_h1)
    }
}

/// Runs `trials` independent tests per hidden truth at a fixed query.
/// Trial `k` under truth `h` uses seed `seed.derive([h, k])`.
pub fn estimate_success_detail(
    spec: &OracleSpec,
    query: &Query,
    m: usize,
    trials: usize,
    seed: Seed,
    exec: Execution,
) -> Result<SuccessEstimate> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    if m == 0 {
        return Err(Error::Domain("a test needs m ≥ 1 samples".into()));
    }
    let (p0, p1) = spec.pmfs(query)?;
    let table = LogRatioTable::new(&p0, &p1)?;
    let samplers = [p0.sampler(), p1.sampler()];
    let mut rates = [0.0; 2];
    for truth in [Hypothesis::H0, Hypothesis::H1] {
        let sampler = &samplers[truth.index() as usize];
        // Equivalent to a fresh `ModelOracle` per trial answering one
        // m-sample call; the sampler is shared to avoid recomputing the pmf.
        let wins = exec.count(trials, |k| {
            let oracle_seed = seed.derive(&[u64::from(truth.index()), k as u64]);
            let ys = sampler.draw(oracle_seed.derive(&[0]), m);
            matches!(table.decide(&ys), Ok((d, _)) if d == truth)
        });
        rates[truth.index() as usize] = wins as f64 / trials as f64;
    }
    Ok(SuccessEstimate {
        under_h0: rates[0],
        under_h1: rates[1],
        trials,
    })
}

/// `min_h` empirical success rate of the `m`-sample test.
pub fn estimate_success(
    spec: &OracleSpec,
    query: &Query,
    m: usize,
    trials: usize,
    seed: Seed,
    exec: Execution,
) -> Result<f64> {
    Ok(estimate_success_detail(spec, query, m, trials, seed, exec)?.min())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityConfig {
    pub target: f64,
    pub trials: usize,
    pub seed: Seed,
    pub budget: u64,
    pub exec: Execution,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            target: 2.0 / 3.0,
            trials: 400,
            seed: Seed(0),
            budget: DEFAULT_BUDGET,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityEstimate {
    pub m_star: u64,
    pub success_at_m_star: f64,
    /// `H²` between the two laws at the query used.
    pub hellinger_sq: f64,
    pub probes: usize,
}

/// Smallest `m` whose estimated success reaches `target`: doubling from 1,
/// then bisection. Probe `k` draws its trials from `seed.derive([k])`.
pub fn estimate_sample_complexity(
    spec: &OracleSpec,
    query: &Query,
    cfg: &ComplexityConfig,
) -> Result<ComplexityEstimate> {
    if !(cfg.target > 0.0 && cfg.target <= 1.0) {
        return Err(Error::Domain(format!("target must lie in (0, 1], got {}", cfg.target)));
    }
    let (p0, p1) = spec.pmfs(query)?;
    if tv(&p0, &p1)? <= INDISTINGUISHABLE_TV {
        return Err(Error::Indistinguishable);
    }
    let h2 = hellinger_sq(&p0, &p1)?;
    let mut probes = 0usize;
    let mut probe = |m: u64| -> Result<f64> {
        let s = estimate_success(
            spec,
            query,
            m as usize,
            cfg.trials,
            cfg.seed.derive(&[probes as u64]),
            cfg.exec,
        )?;
        probes += 1;
        Ok(s)
    };

    let mut lo = 0u64;
    let mut hi = 1u64;
    let mut hi_success;
    loop {
        if hi > cfg.budget {
            return Err(Error::BudgetExceeded { cap: cfg.budget });
        }
        let s = probe(hi)?;
        if s >= cfg.target {
            hi_success = s;
            break;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let s = probe(mid)?;
        if s >= cfg.target {
            hi = mid;
            hi_success = s;
        } else {
            lo = mid;
        }
    }
    Ok(ComplexityEstimate {
        m_star: hi,
        success_at_m_star: hi_success,
        hellinger_sq: h2,
        probes,
    })
}
