//! Command-line front end: exact index tables, grid calibration, the Bayesian
//! Bernoulli family, scaling benchmarks, and policy comparisons, all written
//! as CSV/JSON artifacts plus a run manifest.
//!
//! Exit codes: 0 on success, 1 when a requested numeric cross-check fails,
//! 2 on input errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use bandit_index::bench::{best_fit_order, run_scaling_sweep, BenchAlgo, SweepConfig};
use bandit_index::calibration::{calibrate_index, LambdaGrid, DEFAULT_CAL_EPS};
use bandit_index::countable::rag_from_initial;
use bandit_index::model::{parse_model_file, ParsedModel};
use bandit_index::oracle::oracle_index_enumerate;
use bandit_index::policy::{policy_reports, EngagementMode, FhmabInstance};
use bandit_index::rag::{
    ag_reference, rag_full_sparse_with_stats, rag_full_with_stats,
    IndexTable, OpStats,
};
use bandit_index::{BanditModel, BetaBernoulli, BetaState};

#[derive(Parser)]
#[command(name = "bandit-index", version, about = "Finite-horizon bandit index computation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the exact index table of one project.
    Index(IndexArgs),
    /// Approximate the index on a calibration grid of standard-arm charges.
    Calibrate(CalibrateArgs),
    /// Index values for the Bayesian Bernoulli project from a Beta prior.
    Bernoulli(BernoulliArgs),
    /// Operation-counted scaling sweeps with polynomial order fits.
    Bench(BenchArgs),
    /// Compare optimal, index, and myopic policies on a small instance.
    Policy(PolicyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoChoice {
    /// One-pass reference chain.
    Ag,
    /// Staged recursion.
    Rag,
    /// Staged recursion with batched stage-end products.
    Block,
    /// Staged recursion over the sparse representation.
    Sparse,
}

#[derive(Args)]
struct IndexArgs {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Time horizon T.
    #[arg(long)]
    horizon: usize,
    #[arg(long, value_enum, default_value = "rag")]
    algo: AlgoChoice,
    /// Re-derive every value by stopping-rule enumeration and compare.
    #[arg(long)]
    check_oracle: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    horizon: usize,
    /// Decimal digits of grid accuracy; the grid has 10^digits + 1 points.
    #[arg(long)]
    digits: u32,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BernoulliArgs {
    /// Prior success count (>= 1).
    #[arg(long, default_value_t = 1)]
    i0: u32,
    /// Prior failure count (>= 1).
    #[arg(long, default_value_t = 1)]
    j0: u32,
    #[arg(long)]
    horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Comma-separated discount factors; emits one sweep row per (beta, s).
    #[arg(long, value_delimiter = ',')]
    sweep_beta: Vec<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Algorithms to sweep.
    #[arg(long, value_delimiter = ',', default_values = ["rag", "block_rag", "rag_sparse"])]
    algos: Vec<String>,
    /// Size axis: state counts, or horizons for rag_i0.
    #[arg(long = "n", value_delimiter = ',', default_values_t = [50usize, 100, 200])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Calibration grid digits (only used by the calibration algorithm).
    #[arg(long, default_value_t = 3)]
    digits: u32,
    /// Polynomial orders to fit against the size axis.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4])]
    fit_orders: Vec<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PolicyArgs {
    /// Model description files, one per project (shared discount factor).
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    horizon: usize,
    /// Engage up to K projects per period instead of exactly one.
    #[arg(long)]
    up_to: Option<usize>,
    /// Comma-separated initial state per project (default: all zeros).
    #[arg(long, value_delimiter = ',')]
    initial: Vec<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

enum CliError {
    Input(String),
    Numeric(String),
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    args: Vec<String>,
    seed: Option<u64>,
    version: String,
    prng: String,
    inputs: Vec<InputDigest>,
    timestamp: String,
}

struct OutputSet {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputSet {
    fn new(subcommand: &str, seed: Option<u64>, dir: &Path) -> Self {
        OutputSet {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                args: std::env::args().skip(1).collect(),
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                prng: bandit_index::model::PRNG_NAME.to_string(),
                inputs: Vec::new(),
                timestamp: chrono::Utc::now().to_rfc3339(),
            },
        }
    }

    fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.manifest.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: format!("{:x}", hasher.finalize()),
        });
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", self.dir.display())))?;
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, &text)
    }

    fn finish(&self) -> CliResult<()> {
        self.write_json("manifest.json", &self.manifest)
    }
}

fn load_model(path: &Path, out: &mut OutputSet) -> CliResult<ParsedModel> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    out.record_input(path, &bytes);
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::input(format!("{} is not UTF-8", path.display())))?;
    parse_model_file(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn require_dense(parsed: ParsedModel, path: &Path) -> CliResult<BanditModel> {
    match parsed {
        ParsedModel::Dense(m) => Ok(m),
        ParsedModel::Sparse(m) => Ok(m.to_dense()),
        ParsedModel::BetaBernoulli { .. } => Err(CliError::input(format!(
            "{}: the beta_bernoulli family needs the `bernoulli` subcommand",
            path.display()
        ))),
    }
}

fn index_csv(table: &IndexTable) -> String {
    let mut csv = String::from("d,i,lambda\n");
    for d in 1..=table.horizon() {
        for i in 0..table.n() {
            writeln!(csv, "{d},{i},{}", table.value(d, i)).unwrap();
        }
    }
    csv
}

fn order_csv(table: &IndexTable) -> String {
    let mut csv = String::from("k,s,i,lambda\n");
    for (k, e) in table.order().iter().enumerate() {
        writeln!(csv, "{},{},{},{}", k + 1, e.s, e.i, e.lambda).unwrap();
    }
    csv
}

fn run_index(args: &IndexArgs) -> CliResult<()> {
    if args.horizon == 0 {
        return Err(CliError::input("--horizon must be at least 1"));
    }
    let mut out = OutputSet::new("index", None, &args.out_dir);
    let parsed = load_model(&args.model, &mut out)?;
    let (table, stats) = match (args.algo, parsed) {
        (AlgoChoice::Sparse, ParsedModel::Sparse(m)) => rag_full_sparse_with_stats(&m, args.horizon),
        (AlgoChoice::Sparse, parsed) => {
            let m = require_dense(parsed, &args.model)?;
            rag_full_sparse_with_stats(&m.to_sparse(), args.horizon)
        }
        (choice, parsed) => {
            let m = require_dense(parsed, &args.model)?;
            match choice {
                AlgoChoice::Ag => (ag_reference(&m, args.horizon), OpStats::default()),
                AlgoChoice::Rag => rag_full_with_stats(&m, args.horizon),
                AlgoChoice::Block => {
                    let (t, s) = bandit_index::rag::block_rag_full_with_stats(&m, args.horizon);
                    (t, s)
                }
                AlgoChoice::Sparse => unreachable!(),
            }
        }
    };
    if args.check_oracle {
        let mut out2 = OutputSet::new("index", None, &args.out_dir);
        let m = require_dense(load_model(&args.model, &mut out2)?, &args.model)?;
        let mut worst = 0.0_f64;
        for d in 1..=args.horizon {
            for i in 0..m.n() {
                let reference = oracle_index_enumerate(&m, d, i)
                    .map_err(|e| CliError::input(format!("oracle check infeasible: {e}")))?;
                worst = worst.max((reference - table.value(d, i)).abs());
            }
        }
        if worst > 1e-9 {
            return Err(CliError::Numeric(format!(
                "oracle cross-check failed: max deviation {worst:e} exceeds 1e-9"
            )));
        }
        eprintln!("oracle cross-check passed: max deviation {worst:e}");
    }
    out.write("index.csv", &index_csv(&table))?;
    out.write("order.csv", &order_csv(&table))?;
    #[derive(Serialize)]
    struct OpsOut {
        refresh_ops: u64,
        rank1_ops: u64,
        block_products: u64,
    }
    out.write_json(
        "ops.json",
        &OpsOut {
            refresh_ops: stats.refresh_ops,
            rank1_ops: stats.rank1_ops,
            block_products: stats.block_products,
        },
    )?;
    out.finish()
}

fn run_calibrate(args: &CalibrateArgs) -> CliResult<()> {
    if args.horizon == 0 {
        return Err(CliError::input("--horizon must be at least 1"));
    }
    if args.digits == 0 {
        return Err(CliError::input(
            "--digits must be at least 1 (a 1-point grid cannot bracket the index)",
        ));
    }
    let mut out = OutputSet::new("calibrate", None, &args.out_dir);
    let model = require_dense(load_model(&args.model, &mut out)?, &args.model)?;
    let grid = LambdaGrid::from_model_digits(&model, args.digits);
    let table = calibrate_index(&model, &grid, args.horizon, DEFAULT_CAL_EPS)
        .map_err(|e| CliError::Numeric(format!("calibration failed: {e}")))?;
    let mut csv = String::from("d,i,lambda_hat\n");
    for d in 1..=args.horizon {
        for i in 0..model.n() {
            writeln!(csv, "{d},{i},{}", table.value(d, i)).unwrap();
        }
    }
    out.write("calibration.csv", &csv)?;
    #[derive(Serialize)]
    struct CalMeta {
        lambda_min: f64,
        lambda_max: f64,
        grid_points: usize,
        digits: u32,
        eps: f64,
        horizon: usize,
    }
    out.write_json(
        "calibration_meta.json",
        &CalMeta {
            lambda_min: grid.min(),
            lambda_max: grid.max(),
            grid_points: grid.len(),
            digits: args.digits,
            eps: DEFAULT_CAL_EPS,
            horizon: args.horizon,
        },
    )?;
    out.finish()
}

fn check_beta(beta: f64) -> CliResult<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(CliError::input(format!("discount factor {beta} outside (0, 1]")));
    }
    Ok(())
}

fn run_bernoulli(args: &BernoulliArgs) -> CliResult<()> {
    if args.horizon == 0 {
        return Err(CliError::input("--horizon must be at least 1"));
    }
    if args.i0 == 0 || args.j0 == 0 {
        return Err(CliError::input("--i0 and --j0 must be at least 1"));
    }
    let out = OutputSet::new("bernoulli", None, &args.out_dir);
    let i0 = BetaState::new(args.i0, args.j0);
    if args.sweep_beta.is_empty() {
        check_beta(args.beta)?;
        let table = rag_from_initial(&BetaBernoulli::new(args.beta), &i0, args.horizon);
        let mut csv = String::from("d,i_key,lambda\n");
        for d in 1..=args.horizon {
            let states = table.states_at(d).to_vec();
            for (state, &lambda) in states.iter().zip(table.values_at(d)) {
                writeln!(csv, "{d},{state},{lambda}").unwrap();
            }
        }
        out.write("bernoulli.csv", &csv)?;
    } else {
        for &beta in &args.sweep_beta {
            check_beta(beta)?;
        }
        let mut csv = String::from("beta,s,lambda\n");
        for &beta in &args.sweep_beta {
            let table = rag_from_initial(&BetaBernoulli::new(beta), &i0, args.horizon);
            for s in 1..=args.horizon {
                let lambda = table.value(s, &i0).expect("initial state always covered");
                writeln!(csv, "{beta},{s},{lambda}").unwrap();
            }
        }
        out.write("sweep.csv", &csv)?;
    }
    out.finish()
}

fn parse_bench_algo(name: &str) -> CliResult<BenchAlgo> {
    match name {
        "rag" => Ok(BenchAlgo::Rag),
        "block_rag" => Ok(BenchAlgo::BlockRag),
        "rag_sparse" => Ok(BenchAlgo::RagSparse),
        "calibration" => Ok(BenchAlgo::Calibration),
        "rag_i0" => Ok(BenchAlgo::RagInitial),
        other => Err(CliError::input(format!(
            "unknown bench algorithm {other:?}; expected rag, block_rag, rag_sparse, calibration, or rag_i0"
        ))),
    }
}

fn run_bench(args: &BenchArgs) -> CliResult<()> {
    if args.sizes.is_empty() || args.sizes.iter().any(|&s| s < 2) {
        return Err(CliError::input("--n must all be at least 2"));
    }
    check_beta(args.beta)?;
    if args.digits == 0 {
        return Err(CliError::input("--digits must be at least 1"));
    }
    let algos: Vec<BenchAlgo> =
        args.algos.iter().map(|a| parse_bench_algo(a)).collect::<CliResult<_>>()?;
    let out = OutputSet::new("bench", Some(args.seed), &args.out_dir);
    let config = SweepConfig {
        algos,
        sizes: args.sizes.clone(),
        horizon: args.horizon,
        beta: args.beta,
        seed: args.seed,
        digits: args.digits,
    };
    let records = run_scaling_sweep(&config);
    let mut csv = String::from("algo,n,T,L,seed,ops,slots,wall_ms\n");
    for rec in &records {
        let grid = rec.grid.map(|g| g.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            rec.algo, rec.n, rec.horizon, grid, rec.seed, rec.ops, rec.slots, rec.wall_ms
        )
        .unwrap();
    }
    out.write("bench.csv", &csv)?;
    #[derive(Serialize)]
    struct FitOut {
        algo: String,
        axis: String,
        order: usize,
        coeffs: Vec<f64>,
        rmse: f64,
    }
    let mut fits = Vec::new();
    let mut by_algo: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in &records {
        let x = if rec.algo == "rag_i0" { rec.horizon as f64 } else { rec.n as f64 };
        by_algo.entry(rec.algo.as_str()).or_default().push((x, rec.ops as f64));
    }
    for (algo, points) in by_algo {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let axis = if algo == "rag_i0" { "T" } else { "n" };
        match best_fit_order(&xs, &ys, &args.fit_orders) {
            Ok((best, all)) => {
                let chosen = all.into_iter().find(|f| f.order == best).unwrap();
                fits.push(FitOut {
                    algo: algo.to_string(),
                    axis: axis.to_string(),
                    order: chosen.order,
                    coeffs: chosen.coeffs,
                    rmse: chosen.rmse,
                });
            }
            Err(e) => {
                return Err(CliError::input(format!(
                    "cannot fit {algo}: {e}; provide more --n sizes"
                )))
            }
        }
    }
    out.write_json("fits.json", &fits)?;
    out.finish()
}

fn run_policy(args: &PolicyArgs) -> CliResult<()> {
    if args.horizon == 0 {
        return Err(CliError::input("--horizon must be at least 1"));
    }
    let mut out = OutputSet::new("policy", None, &args.out_dir);
    let mut projects = Vec::new();
    for path in &args.model {
        projects.push(require_dense(load_model(path, &mut out)?, path)?);
    }
    let beta = projects[0].beta();
    if projects.iter().any(|m| m.beta() != beta) {
        return Err(CliError::input("all projects must share one discount factor"));
    }
    let initial = if args.initial.is_empty() {
        vec![0; projects.len()]
    } else {
        args.initial.clone()
    };
    if initial.len() != projects.len() {
        return Err(CliError::input(format!(
            "--initial names {} states for {} projects",
            initial.len(),
            projects.len()
        )));
    }
    for (m, &i) in projects.iter().zip(&initial) {
        if i >= m.n() {
            return Err(CliError::input(format!("initial state {i} outside 0..{}", m.n())));
        }
    }
    let mode = match args.up_to {
        None => EngagementMode::ExactlyOne,
        Some(k) => EngagementMode::UpTo(k),
    };
    let instance = FhmabInstance::new(projects, args.horizon, mode, initial);
    let reports =
        policy_reports(&instance).map_err(|e| CliError::input(format!("cannot evaluate: {e}")))?;
    let mut csv = String::from("policy,value,gap\n");
    for rep in &reports {
        writeln!(csv, "{},{},{}", rep.policy, rep.value, rep.gap).unwrap();
    }
    out.write("policy.csv", &csv)?;
    out.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Index(args) => run_index(args),
        Command::Calibrate(args) => run_calibrate(args),
        Command::Bernoulli(args) => run_bernoulli(args),
        Command::Bench(args) => run_bench(args),
        Command::Policy(args) => run_policy(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric check failed: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
