//! `hyptest`: scripting front end for the hypothesis-testing library.
//!
//! Exit codes: 0 success, 1 verification failure (including models no query
//! can separate), 2 usage or input error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hyptest::bounds::{extremal_pair, logit_step_h2_bound, logit_step_tv_bound};
use hyptest::distributions::{hellinger_sq, tv};
use hyptest::format::g17;
use hyptest::harness::csv::CsvTable;
use hyptest::harness::{run_bound_suite, run_invariance_suite, run_sweep, ModelSpec, SuiteConfig, SweepConfig};
use hyptest::leverage::leverage_pmf;
use hyptest::optimizer::{
    max_hellinger_leverage, max_hellinger_softmax, max_variance_leverage, max_variance_softmax,
};
use hyptest::softmax::{softmax_from_logits, softmax_pmf};
use hyptest::tester::{
    estimate_success_detail, resolve_query, Constraint, Query, QuerySource, INDISTINGUISHABLE_TV,
};
use hyptest::{Error, Execution, OptimizerConfig, ScaleQuery, Seed, SoftmaxQuery};

#[derive(Parser)]
#[command(name = "hyptest", version, about = "Binary hypothesis testing for softmax and leverage-score models")]
struct Cli {
    /// Worker threads for parallel sections (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the output law of a model at one query, one probability per line.
    Pmf {
        spec: PathBuf,
        /// Comma-separated query: x for softmax, s for leverage.
        #[arg(long, allow_hyphen_values = true)]
        query: String,
        /// Which model of the pair to evaluate.
        #[arg(long, value_enum, default_value_t = Which::A)]
        model: Which,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Print TV and H² between the two models at one query.
    Distance {
        /// Model spec; omit when using --extremal.
        spec: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "extremal")]
        query: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        /// Evaluate the extremal logit pair instead of a model file.
        #[arg(long, alias = "lemma-a1", conflicts_with_all = ["spec", "query"])]
        extremal: bool,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Optimize a single query and print the result as one CSV line.
    Optimize {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Objective::Hellinger)]
        objective: Objective,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print a header line before the result.
        #[arg(long)]
        header: bool,
    },
    /// Estimate the success rate of the m-sample likelihood-ratio test.
    Test {
        spec: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 400)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Exit 1 unless the success rate reaches this value.
        #[arg(long, default_value_t = 2.0 / 3.0)]
        require: f64,
        #[arg(long)]
        eps: Option<f64>,
        /// Fixed query; the Hellinger-optimal query is used when absent.
        #[arg(long, allow_hyphen_values = true)]
        query: Option<String>,
    },
    /// Sweep ε, estimate m* per grid point and write the table as CSV.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated, strictly decreasing.
        #[arg(long)]
        eps_grid: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Report per-point wall-clock seconds on stderr.
        #[arg(long)]
        timing: bool,
    },
    /// Run the bound and invariance suites and write the bound rows as CSV.
    Verify {
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        model_instances: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Multiply every bound value (fault injection).
        #[arg(long, default_value_t = 1.0)]
        bound_scale: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    A,
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Hellinger,
    Variance,
}

enum Failure {
    Verify(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Indistinguishable => Failure::Verify(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn parse_vector(text: &str) -> std::result::Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Input(format!("cannot parse {t:?} as a number")))
        })
        .collect()
}

fn make_query(constraint: &Constraint, values: Vec<f64>) -> std::result::Result<Query, Failure> {
    Ok(match constraint {
        Constraint::Energy(c) => Query::Softmax(SoftmaxQuery::new(values, c)?),
        Constraint::Box(c) => Query::Leverage(ScaleQuery::new(values, c)?),
    })
}

fn print_lines(lines: &[String]) {
    let mut out = std::io::stdout().lock();
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
}

fn write_csv(path: &Path, table: &CsvTable) -> Outcome {
    let file = std::fs::File::create(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    table.write_to(std::io::BufWriter::new(file))?;
    Ok(())
}

fn cmd_pmf(spec: &Path, query: &str, model: Which, eps: Option<f64>) -> Outcome {
    let spec = ModelSpec::load(spec)?;
    let q = make_query(&spec.constraint, parse_vector(query)?)?;
    let params = match model {
        Which::A => spec.a.clone(),
        Which::B => spec.oracle_spec(eps)?.params1,
    };
    let p = match &q {
        Query::Softmax(x) => softmax_pmf(&params, x)?,
        Query::Leverage(s) => leverage_pmf(&params, s)?,
    };
    print_lines(&p.probs().iter().map(|v| g17(*v)).collect::<Vec<_>>());
    Ok(())
}

fn sandwich_holds(t: f64, h2: f64) -> bool {
    h2 <= t + 1e-12 && t <= 2f64.sqrt() * h2.sqrt() + 1e-12
}

fn cmd_distance(
    spec: Option<&Path>,
    query: Option<&str>,
    eps: Option<f64>,
    extremal: Option<(usize, usize, f64)>,
) -> Outcome {
    let (p, q, reference) = if let Some((n, m, t)) = extremal {
        let eps = eps.ok_or_else(|| Failure::Input("--extremal needs --eps".into()))?;
        let (a, b) = extremal_pair(n, m, eps, t)?;
        (softmax_from_logits(&a)?, softmax_from_logits(&b)?, Some(eps))
    } else {
        let path = spec.ok_or_else(|| Failure::Input("a model spec is required".into()))?;
        let spec = ModelSpec::load(path)?;
        let oracle = spec.oracle_spec(eps)?;
        let query = query.ok_or_else(|| Failure::Input("--query is required".into()))?;
        let q = make_query(&spec.constraint, parse_vector(query)?)?;
        let (p, q) = oracle.pmfs(&q)?;
        (p, q, None)
    };
    let (t, h2) = (tv(&p, &q)?, hellinger_sq(&p, &q)?);
    if !sandwich_holds(t, h2) {
        return Err(Failure::Verify(format!(
            "metric sandwich violated: TV = {}, H² = {}",
            g17(t),
            g17(h2)
        )));
    }
    let mut lines = vec![format!("tv={}", g17(t)), format!("hellinger_sq={}", g17(h2))];
    if let Some(eps) = reference {
        lines.push(format!("tv_bound={}", g17(logit_step_tv_bound(eps))));
        lines.push(format!("hellinger_sq_bound={}", g17(logit_step_h2_bound(eps))));
    }
    print_lines(&lines);
    Ok(())
}

fn cmd_optimize(
    spec: &Path,
    objective: Objective,
    eps: Option<f64>,
    restarts: Option<usize>,
    seed: Option<u64>,
    header: bool,
    exec: Execution,
) -> Outcome {
    let spec = ModelSpec::load(spec)?;
    let mut cfg = OptimizerConfig {
        seed: Seed(seed.unwrap_or(spec.seed.0)),
        exec,
        ..OptimizerConfig::default()
    };
    if let Some(r) = restarts.or(spec.experiment.restarts) {
        cfg.restarts = r;
    }
    if let Some(i) = spec.experiment.max_iters {
        cfg.max_iters = i;
    }
    let r = match (objective, &spec.constraint) {
        (Objective::Hellinger, Constraint::Energy(c)) => {
            let o = spec.oracle_spec(eps)?;
            max_hellinger_softmax(&o.params0, &o.params1, c, &cfg)?
        }
        (Objective::Hellinger, Constraint::Box(c)) => {
            let o = spec.oracle_spec(eps)?;
            max_hellinger_leverage(&o.params0, &o.params1, c, &cfg)?
        }
        (Objective::Variance, Constraint::Energy(c)) => {
            max_variance_softmax(&spec.a, &spec.direction()?, c, &cfg)?
        }
        (Objective::Variance, Constraint::Box(c)) => {
            max_variance_leverage(&spec.a, &spec.direction()?, c, &cfg)?
        }
    };
    let query: Vec<f64> = match &spec.constraint {
        Constraint::Energy(c) => r.softmax_query(c)?.into_inner(),
        Constraint::Box(c) => r.leverage_query(c)?.as_slice().to_vec(),
    };
    let mut lines = Vec::new();
    if header {
        let mut h = vec![
            "value".to_string(),
            "iterations_used".into(),
            "restarts_used".into(),
            "converged".into(),
            "constraint_active".into(),
        ];
        h.extend((0..query.len()).map(|i| format!("query_{i}")));
        lines.push(h.join(","));
    }
    let mut cells = vec![
        g17(r.value),
        r.iterations_used.to_string(),
        r.restarts_used.to_string(),
        r.converged.to_string(),
        r.constraint_active.to_string(),
    ];
    cells.extend(query.iter().map(|v| g17(*v)));
    lines.push(cells.join(","));
    print_lines(&lines);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_test(
    spec: &Path,
    m: usize,
    trials: usize,
    seed: Option<u64>,
    require: f64,
    eps: Option<f64>,
    query: Option<&str>,
    exec: Execution,
) -> Outcome {
    let spec = ModelSpec::load(spec)?;
    let seed = Seed(seed.unwrap_or(spec.seed.0));
    let oracle = spec.oracle_spec(eps)?;
    let source = match query {
        Some(text) => QuerySource::Fixed(make_query(&spec.constraint, parse_vector(text)?)?),
        None => QuerySource::Auto(OptimizerConfig {
            seed: seed.derive(&[Seed::label("optimizer")]),
            exec,
            ..OptimizerConfig::default()
        }),
    };
    let q = resolve_query(&oracle, &source)?;
    let (p0, p1) = oracle.pmfs(&q)?;
    if tv(&p0, &p1)? <= INDISTINGUISHABLE_TV {
        return Err(Failure::Verify(
            "models are indistinguishable at the chosen query (TV ≤ 1e-12)".into(),
        ));
    }
    let est = estimate_success_detail(&oracle, &q, m, trials, seed.derive(&[Seed::label("test")]), exec)?;
    print_lines(&[
        format!("success={}", g17(est.min())),
        format!("success_h0={}", g17(est.under_h0)),
        format!("success_h1={}", g17(est.under_h1)),
        format!("m={m}"),
        format!("trials={trials}"),
        format!("seed={seed}"),
    ]);
    if est.min() >= require {
        Ok(())
    } else {
        Err(Failure::Verify(format!(
            "success rate {} below required {}",
            g17(est.min()),
            g17(require)
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    spec: &Path,
    out: &Path,
    eps_grid: Option<&str>,
    trials: Option<usize>,
    seed: Option<u64>,
    restarts: Option<usize>,
    timing: bool,
    exec: Execution,
) -> Outcome {
    let spec = ModelSpec::load(spec)?;
    let mut cfg = SweepConfig::from_spec(&spec);
    if let Some(g) = eps_grid {
        cfg.eps_grid = parse_vector(g)?;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = Seed(s);
    }
    if let Some(r) = restarts {
        cfg.optimizer.restarts = r;
    }
    cfg.exec = exec;
    cfg.optimizer.exec = exec;
    let table = run_sweep(&spec, &cfg)?;
    write_csv(out, &table.to_csv())?;
    if timing {
        for r in &table.rows {
            eprintln!("eps={} seconds={:.3}", g17(r.eps), r.seconds);
        }
    }
    if table.failures.is_empty() {
        if let Some(f) = &table.fit {
            print_lines(&[format!("slope={}", g17(f.slope))]);
        }
        return Ok(());
    }
    let msgs: Vec<String> = table
        .failures
        .iter()
        .map(|(e, err)| format!("eps={}: {err}", g17(*e)))
        .collect();
    if table.failures.iter().all(|(_, e)| matches!(e, Error::Indistinguishable)) {
        Err(Failure::Verify(msgs.join("; ")))
    } else {
        Err(Failure::Input(msgs.join("; ")))
    }
}

fn cmd_verify(
    spec: Option<&Path>,
    out: &Path,
    instances: Option<usize>,
    model_instances: Option<usize>,
    seed: Option<u64>,
    bound_scale: f64,
    exec: Execution,
) -> Outcome {
    let mut cfg = SuiteConfig { exec, bound_scale, ..SuiteConfig::default() };
    if let Some(path) = spec {
        let spec = ModelSpec::load(path)?;
        cfg.seed = spec.seed;
        if let Some(n) = spec.experiment.instances {
            cfg.instances = n;
        }
    }
    if let Some(n) = instances {
        cfg.instances = n;
    }
    if let Some(n) = model_instances {
        cfg.model_instances = n;
    }
    if let Some(s) = seed {
        cfg.seed = Seed(s);
    }
    if !(bound_scale > 0.0 && bound_scale.is_finite()) {
        return Err(Failure::Input(format!("--bound-scale must be positive, got {bound_scale}")));
    }
    if cfg.instances == 0 || cfg.model_instances == 0 {
        return Err(Failure::Input("instance counts must be at least 1".into()));
    }
    let bounds = run_bound_suite(&cfg)?;
    let inv = run_invariance_suite(&cfg)?;
    let mut table = bounds.to_csv();
    for l in inv.footer_lines() {
        table.note(l);
    }
    write_csv(out, &table)?;
    let mut lines = vec![format!("strict_violations={}", bounds.strict_violations())];
    for s in bounds.summary() {
        lines.push(format!("{} max_ratio={} violations={}", s.bound_name, g17(s.max_ratio), s.violations));
    }
    for r in &inv.results {
        lines.push(format!("{} max_deviation={} violations={}", r.name, g17(r.max_deviation), r.violations));
    }
    print_lines(&lines);
    match (bounds.passed(), inv.passed()) {
        (true, true) => Ok(()),
        (false, _) => Err(Failure::Verify(format!(
            "{} strict bound violations",
            bounds.strict_violations()
        ))),
        (true, false) => Err(Failure::Verify("invariance check failed".into())),
    }
}

fn configure_threads(threads: Option<usize>) -> std::result::Result<Execution, Failure> {
    match threads {
        Some(0) => Err(Failure::Input("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Input(e.to_string()))?;
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::default()),
    }
}

fn run(cli: Cli) -> Outcome {
    let exec = configure_threads(cli.threads)?;
    match cli.command {
        Command::Pmf { spec, query, model, eps } => cmd_pmf(&spec, &query, model, eps),
        Command::Distance { spec, query, eps, extremal, n, m, t } => cmd_distance(
            spec.as_deref(),
            query.as_deref(),
            eps,
            extremal.then_some((n, m, t)),
        ),
        Command::Optimize { spec, objective, eps, restarts, seed, header } => {
            cmd_optimize(&spec, objective, eps, restarts, seed, header, exec)
        }
        Command::Test { spec, m, trials, seed, require, eps, query } => {
            cmd_test(&spec, m, trials, seed, require, eps, query.as_deref(), exec)
        }
        Command::Sweep { spec, out, eps_grid, trials, seed, restarts, timing } => cmd_sweep(
            &spec,
            &out,
            eps_grid.as_deref(),
            trials,
            seed,
            restarts,
            timing,
            exec,
        ),
        Command::Verify { spec, out, instances, model_instances, seed, bound_scale } => cmd_verify(
            spec.as_deref(),
            &out,
            instances,
            model_instances,
            seed,
            bound_scale,
            exec,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(msg)) => {
            eprintln!("hyptest: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("hyptest: {msg}");
            ExitCode::from(2)
        }
    }
}
