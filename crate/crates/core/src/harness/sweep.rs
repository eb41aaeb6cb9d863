//! ε-sweeps of the empirical sample complexity `m*` with a log-log fit.

use std::time::Instant;

use crate::distributions::Seed;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numerics::ParamMatrix;
use crate::optimizer::{
    max_hellinger_leverage, max_hellinger_softmax, max_variance_leverage, max_variance_softmax,
    OptimizerConfig,
};
use crate::tester::{
    estimate_sample_complexity, ComplexityConfig, Constraint, OracleSpec, Query, DEFAULT_BUDGET,
};

use super::csv::{Cell, CsvTable};
use super::spec::ModelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Strictly decreasing, all positive.
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub target: f64,
    pub budget: u64,
    pub optimizer: OptimizerConfig,
    pub seed: Seed,
    pub exec: Execution,
}

impl SweepConfig {
    pub fn new(eps_grid: Vec<f64>, seed: Seed) -> Self {
        Self {
            eps_grid,
            trials: 400,
            target: 2.0 / 3.0,
            budget: DEFAULT_BUDGET,
            optimizer: OptimizerConfig::default(),
            seed,
            exec: Execution::default(),
        }
    }

    /// Defaults overridden by the `experiment` section of a model file.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        let x = &spec.experiment;
        let mut cfg = Self::new(
            x.eps_grid.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05]),
            spec.seed,
        );
        if let Some(t) = x.trials {
            cfg.trials = t;
        }
        if let Some(t) = x.target {
            cfg.target = t;
        }
        if let Some(b) = x.budget {
            cfg.budget = b;
        }
        if let Some(r) = x.restarts {
            cfg.optimizer.restarts = r;
        }
        if let Some(i) = x.max_iters {
            cfg.optimizer.max_iters = i;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::Domain("ε grid is empty".into()));
        }
        if let Some(e) = self.eps_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::Domain(format!("ε grid entries must be positive, got {e}")));
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Domain("ε grid must be strictly decreasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trial count must be at least 1".into()));
        }
        self.optimizer.validate()
    }

    /// Seed of grid point `k`; replaying [`sweep_point`] with it reproduces
    /// the row.
    pub fn point_seed(&self, k: usize) -> Seed {
        self.seed.derive(&[Seed::label("sweep"), k as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    /// `H²` at the optimized query.
    pub hellinger_sq: f64,
    /// `ν` from the variance optimizer (identical across grid points).
    pub nu: f64,
    pub m_star: u64,
    pub success: f64,
    pub seconds: f64,
    pub seed: Seed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub family: crate::tester::Family,
    pub rows: Vec<SweepRow>,
    /// Grid points that ended in an error, in grid order.
    pub failures: Vec<(f64, Error)>,
    pub nu: f64,
    pub fit: Option<LogLogFit>,
}

/// Ordinary least squares of `ln y` on `ln x`; needs two distinct `x`.
pub fn log_log_fit(points: &[(f64, f64)]) -> Option<LogLogFit> {
    if points.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(LogLogFit {
        slope,
        intercept: my - slope * mx,
        points: points.len(),
    })
}

/// `ν` for the model's `(A, M)`; independent of ε.
pub fn predicted_nu(spec: &ModelSpec, direction: &ParamMatrix, cfg: &OptimizerConfig) -> Result<f64> {
    let r = match &spec.constraint {
        Constraint::Energy(c) => max_variance_softmax(&spec.a, direction, c, cfg)?,
        Constraint::Box(c) => max_variance_leverage(&spec.a, direction, c, cfg)?,
    };
    Ok(r.value)
}

/// One grid point: optimize the query for `B = A + εM`, then estimate `m*`.
pub fn sweep_point(
    spec: &ModelSpec,
    direction: &ParamMatrix,
    eps: f64,
    nu: f64,
    cfg: &SweepConfig,
    seed: Seed,
) -> Result<SweepRow> {
    let start = Instant::now();
    let b = spec.a.add_scaled(direction, eps)?;
    let oracle = OracleSpec::new(spec.a.clone(), b, spec.constraint)?;
    let opt = OptimizerConfig {
        seed: seed.derive(&[Seed::label("optimizer")]),
        exec: cfg.exec,
        ..cfg.optimizer
    };
    let query = match &spec.constraint {
        Constraint::Energy(c) => {
            let r = max_hellinger_softmax(&oracle.params0, &oracle.params1, c, &opt)?;
            Query::Softmax(r.softmax_query(c)?)
        }
        Constraint::Box(c) => {
            let r = max_hellinger_leverage(&oracle.params0, &oracle.params1, c, &opt)?;
            Query::Leverage(r.leverage_query(c)?)
        }
    };
    let est = estimate_sample_complexity(
        &oracle,
        &query,
        &ComplexityConfig {
            target: cfg.target,
            trials: cfg.trials,
            seed: seed.derive(&[Seed::label("complexity")]),
            budget: cfg.budget,
            exec: cfg.exec,
        },
    )?;
    Ok(SweepRow {
        eps,
        hellinger_sq: est.hellinger_sq,
        nu,
        m_star: est.m_star,
        success: est.success_at_m_star,
        seconds: start.elapsed().as_secs_f64(),
        seed,
    })
}

/// Runs every grid point (in parallel when `cfg.exec` allows) and returns the
/// rows in grid order with a fit over the points that completed.
pub fn run_sweep(spec: &ModelSpec, cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let direction = spec.direction()?;
    let nu_cfg = OptimizerConfig {
        seed: cfg.seed.derive(&[Seed::label("nu")]),
        exec: cfg.exec,
        ..cfg.optimizer
    };
    let nu = predicted_nu(spec, &direction, &nu_cfg)?;
    let results = cfg.exec.map(cfg.eps_grid.len(), |k| {
        sweep_point(spec, &direction, cfg.eps_grid[k], nu, cfg, cfg.point_seed(k))
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((cfg.eps_grid[k], e)),
        }
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.m_star as f64)).collect();
    Ok(SweepTable {
        family: spec.family,
        fit: log_log_fit(&pts),
        rows,
        failures,
        nu,
    })
}

impl SweepTable {
    /// CSV form. Wall-clock seconds are left out so that identical inputs
    /// give identical bytes.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "eps",
            "hellinger_sq",
            "nu",
            "m_star",
            "success",
            "m_star_times_hellinger_sq",
            "m_star_times_eps_sq_nu",
            "seed",
        ]);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.eps),
                r.hellinger_sq.into(),
                r.nu.into(),
                r.m_star.into(),
                r.success.into(),
                (r.m_star as f64 * r.hellinger_sq).into(),
                (r.m_star as f64 * r.eps * r.eps * r.nu).into(),
                r.seed.0.into(),
            ]);
        }
        t.note(format!("family={}", self.family));
        t.note(format!("nu={}", crate::format::g17(self.nu)));
        for (eps, e) in &self.failures {
            t.note(format!("failed eps={} error={e}", crate::format::g17(*eps)));
        }
        match &self.fit {
            Some(f) => t.note(format!(
                "fit slope={} intercept={} points={}",
                crate::format::g17(f.slope),
                crate::format::g17(f.intercept),
                f.points
            )),
            None => t.note(format!("fit unavailable points={}", self.rows.len())),
        }
        t
    }
}
