use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dacs::data::Diversification;
use dacs::harness::io::{read_dataset, read_similarity_csv, Dataset};
use dacs::harness::sim::SimSetting;
use dacs::harness::sweep::{run_sweep, write_report, GammaRule, SweepConfig, SweepMetric};
use dacs::metrics::{markowitz_gamma_hint, rbf_similarity, Bandwidth, DiversityMetric, SimilarityMatrix};
use dacs::par::Parallelism;
use dacs::pipeline::{run_cs, run_dacs, DacsConfig, Mode, SelectionResult};
use dacs::stopping::write_tables_csv;
use dacs::validate::run_validation;
use dacs::DacsError;

#[derive(Parser)]
#[command(name = "dacs", version, about = "Diversity-aware conformal selection with FDR control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run DACS on a calibration/test CSV pair and print a JSON result.
    Select(SelectArgs),
    /// Run plain conformal selection (BH on conformal p-values).
    Cs(CsArgs),
    /// Replicated simulation sweep comparing DACS and CS; writes CSVs.
    Simulate(SimulateArgs),
    /// Check the fast engines against brute-force oracles on random instances.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MetricArg {
    Underrep,
    Sharpe,
    Markowitz,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModeArg {
    Exact,
    Relaxed,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {v}"))
    }
}

#[derive(Args)]
struct DataArgs {
    /// Calibration CSV with columns z (or z1..zd), mu_hat, y and optional c.
    #[arg(long)]
    calib: PathBuf,
    /// Test CSV with columns z (or z1..zd), mu_hat and optional y, c.
    #[arg(long)]
    test: PathBuf,
    /// Nominal FDR level in (0, 1).
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// Markowitz risk aversion; defaults to 2/λ_max(Σ).
    #[arg(long, value_parser = parse_positive)]
    gamma: Option<f64>,
    /// Square similarity matrix over calibration then test rows, no header.
    /// Without it an RBF kernel on the z vectors is used.
    #[arg(long)]
    sim_matrix: Option<PathBuf>,
    /// RBF bandwidth; defaults to the median pairwise distance.
    #[arg(long, value_parser = parse_positive)]
    bandwidth: Option<f64>,
    /// exact (underrep only) or relaxed (sharpe, markowitz). Defaults by metric.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Monte Carlo draws L per reward cell in relaxed mode.
    #[arg(long, default_value_t = 50)]
    mc_draws: usize,
    /// Grid size Q. Relaxed mode defaults to 10; exact mode to the full path.
    #[arg(long)]
    grid: Option<usize>,
    /// Rounding draws used to estimate relaxed optimal values (Sharpe).
    #[arg(long, default_value_t = 50)]
    rounding_draws: usize,
    /// Solve every Monte Carlo cell from scratch.
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Break ties between finite scores with a seeded perturbation.
    #[arg(long)]
    jitter: bool,
    /// Disable the rayon thread pool.
    #[arg(long)]
    sequential: bool,
    /// Also write the reward and Snell tables (t,s,R,E) to this CSV.
    #[arg(long)]
    tables: Option<PathBuf>,
}

#[derive(Args)]
struct CsArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// u1..u6 (categorical) or s1..s4 (continuous).
    #[arg(long)]
    setting: SimSetting,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Comma-separated nominal levels.
    #[arg(long, value_delimiter = ',', value_parser = parse_alpha, default_value = "0.05,0.2,0.35")]
    alpha_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 300)]
    m: usize,
    /// Training rows for the least-squares predictor.
    #[arg(long, default_value_t = 1000)]
    train: usize,
    /// Defaults to underrep for u settings and markowitz for s settings.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Fixed Markowitz γ; defaults to 2/λ_max(Σ) per replicate.
    #[arg(long, value_parser = parse_positive)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value_t = 50)]
    mc_draws: usize,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 50)]
    rounding_draws: usize,
    #[arg(long)]
    no_warm_start: bool,
    /// Rounding draws per time for baseline-CDF normalized diversity; 0 skips it.
    #[arg(long, default_value_t = 0)]
    baseline_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Random instances per check.
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn usage_error(kind: ErrorKind, msg: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn parallelism(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    }
}

fn resolve_mode(metric: MetricArg, mode: Option<ModeArg>, grid: Option<usize>, mc_draws: usize, rounding_draws: usize, warm: bool) -> Mode {
    match (metric, mode) {
        (MetricArg::Underrep, None | Some(ModeArg::Exact)) => Mode::ExactUnderrep { grid },
        (MetricArg::Underrep, Some(ModeArg::Relaxed)) => usage_error(ErrorKind::ArgumentConflict, "the underrepresentation index supports only --mode exact"),
        (_, Some(ModeArg::Exact)) => usage_error(ErrorKind::ArgumentConflict, "sharpe and markowitz support only --mode relaxed"),
        (_, None | Some(ModeArg::Relaxed)) => Mode::RelaxedMc { mc_draws, grid: grid.unwrap_or(10), rounding_draws, warm_start: warm },
    }
}

fn similarity(args: &SelectArgs, ds: &Dataset) -> Result<SimilarityMatrix, DacsError> {
    let pooled = ds.calib.len() + ds.test.len();
    if let Some(path) = &args.sim_matrix {
        let s = read_similarity_csv(path)?;
        if s.dim() != pooled {
            return Err(DacsError::Data(format!("similarity matrix is {0}x{0} but there are {pooled} rows", s.dim())));
        }
        return Ok(s);
    }
    let z: Vec<Vec<f64>> = ds
        .calib
        .iter()
        .map(|c| &c.z)
        .chain(ds.test.iter().map(|t| &t.z))
        .map(|z| match z {
            Diversification::Vector(v) => Ok(v.clone()),
            Diversification::Category(_) => Err(DacsError::Data("similarity metrics need z1..zd columns or --sim-matrix".into())),
        })
        .collect::<Result<_, _>>()?;
    rbf_similarity(&z, args.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed))
}

fn metric_for(args: &SelectArgs, ds: &Dataset) -> Result<DiversityMetric, DacsError> {
    if args.gamma.is_some() && args.metric != MetricArg::Markowitz {
        usage_error(ErrorKind::ArgumentConflict, "--gamma applies only to --metric markowitz");
    }
    Ok(match args.metric {
        MetricArg::Underrep => {
            let labels = ds.labels.as_ref().ok_or_else(|| DacsError::Data("underrep needs a categorical z column".into()))?;
            DiversityMetric::Underrep { categories: labels.len() }
        }
        MetricArg::Sharpe => DiversityMetric::Sharpe { sigma: similarity(args, ds)? },
        MetricArg::Markowitz => {
            let sigma = similarity(args, ds)?;
            let gamma = args.gamma.unwrap_or_else(|| markowitz_gamma_hint(&sigma));
            DiversityMetric::Markowitz { sigma, gamma }
        }
    })
}

fn result_json(res: &SelectionResult, ds: &Dataset, alpha: f64, method: &str) -> Value {
    let d = &res.diagnostics;
    let mut v = json!({
        "method": method,
        "alpha": alpha,
        "n": ds.calib.len(),
        "m": ds.test.len(),
        "selected": res.selected,
        "size": res.selected.len(),
        "tau_star": res.tau_star,
        "tau_bh": d.tau_bh,
        "cs_selected": d.cs_set,
        "e_values": res.e_values.values,
    });
    if method == "dacs" {
        v["diversity"] = json!(d.diversity);
        v["grid"] = json!(d.grid);
        v["timings"] = json!(d.timings);
        if let Some(sol) = &res.chi {
            v["chi"] = json!(sol.chi);
            v["relaxed_objective"] = json!(sol.objective);
        }
    }
    if let Some(labels) = &ds.labels {
        v["labels"] = json!(labels);
    }
    if let Some(y) = &ds.test_y {
        let false_sel = res.selected.iter().filter(|&&j| y[j] <= 0.0).count();
        v["fdp"] = json!(false_sel as f64 / res.selected.len().max(1) as f64);
    }
    v
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), DacsError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| DacsError::Io(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn select(args: &SelectArgs) -> Result<(), DacsError> {
    let ds = read_dataset(&args.data.calib, &args.data.test)?;
    let metric = metric_for(args, &ds)?;
    let mode = resolve_mode(args.metric, args.mode, args.grid, args.mc_draws, args.rounding_draws, !args.no_warm_start);
    let mut cfg = DacsConfig::new(args.data.alpha, metric, mode);
    cfg.seed = args.seed;
    cfg.jitter = args.jitter;
    cfg.parallelism = parallelism(args.sequential);
    cfg.keep_tables = args.tables.is_some();
    if let Err(e @ DacsError::InvalidParameter(_)) = cfg.validate() {
        usage_error(ErrorKind::InvalidValue, e);
    }
    let res = run_dacs(&ds.calib, &ds.test, &cfg)?;
    if let (Some(path), Some(r), Some(e)) = (&args.tables, &res.diagnostics.rewards, &res.diagnostics.snell) {
        write_tables_csv(r, e, path)?;
    }
    emit(&result_json(&res, &ds, args.data.alpha, "dacs"), args.data.out.as_deref())
}

fn cs(args: &CsArgs) -> Result<(), DacsError> {
    let ds = read_dataset(&args.data.calib, &args.data.test)?;
    let res = run_cs(&ds.calib, &ds.test, args.data.alpha)?;
    emit(&result_json(&res, &ds, args.data.alpha, "cs"), args.data.out.as_deref())
}

fn simulate(args: &SimulateArgs) -> Result<(), DacsError> {
    let categorical = matches!(args.setting, SimSetting::Underrep(_));
    let metric = args.metric.unwrap_or(if categorical { MetricArg::Underrep } else { MetricArg::Markowitz });
    if (metric == MetricArg::Underrep) != categorical {
        usage_error(ErrorKind::ArgumentConflict, "underrep pairs with u settings; sharpe and markowitz with s settings");
    }
    if args.gamma.is_some() && metric != MetricArg::Markowitz {
        usage_error(ErrorKind::ArgumentConflict, "--gamma applies only to markowitz");
    }
    let mut cfg = SweepConfig::new(args.setting, args.n, args.m, args.reps, args.alpha_grid.clone());
    cfg.spec.train = args.train;
    cfg.metric = match metric {
        MetricArg::Underrep => SweepMetric::Underrep,
        MetricArg::Sharpe => SweepMetric::Sharpe,
        MetricArg::Markowitz => SweepMetric::Markowitz(args.gamma.map_or(GammaRule::Hint, GammaRule::Fixed)),
    };
    cfg.mode = resolve_mode(metric, args.mode, args.grid, args.mc_draws, args.rounding_draws, !args.no_warm_start);
    cfg.seed = args.seed;
    cfg.parallelism = parallelism(args.sequential);
    cfg.baseline_draws = args.baseline_draws;
    if args.reps == 0 || args.n == 0 || args.m == 0 {
        usage_error(ErrorKind::InvalidValue, "--reps, --n and --m must be positive");
    }
    let report = run_sweep(&cfg)?;
    write_report(&report, &args.out_dir)?;
    eprintln!("{:<8}{:<7}{:>8}{:>9}{:>9}{:>8}{:>11}", "alpha", "method", "fdr", "fdr_se", "power", "size", "diversity");
    for r in &report.summary {
        eprintln!("{:<8}{:<7}{:>8.4}{:>9.4}{:>9.4}{:>8.2}{:>11.4}", r.alpha, r.method, r.fdr, r.fdr_se, r.power, r.size, r.diversity_nonempty);
    }
    eprintln!("wrote {}", args.out_dir.display());
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<bool, DacsError> {
    if args.cases == 0 {
        usage_error(ErrorKind::InvalidValue, "--cases must be positive");
    }
    let checks = run_validation(args.seed, args.cases)?;
    for c in &checks {
        println!("{} {:<42} cases {:>5}  worst {:.2e}  tol {:.0e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.cases, c.worst_error, c.tolerance);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Select(a) => select(a).map(|_| true),
        Command::Cs(a) => cs(a).map(|_| true),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
