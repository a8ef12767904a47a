//! Subcommands of the `aggregame` binary.

use std::fs;
use std::path::{Path, PathBuf};

use aggregame::experiment::{sweep_csv, SweepConfig, SweepReport};
use aggregame::reduction::{reduce, ReductionConfig};
use aggregame::scenario::{generate, shrink, ScenarioConfig};
use aggregame::solver::write_trace_csv;
use aggregame::{Aggregation, EquilibriumKind, GameSpec, SolverConfig, StepRule};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Name under which the bundled two-player instance can be passed to `--scenario`.
pub const TWO_PLAYER: &str = "builtin:two-player";
const TWO_PLAYER_JSON: &str = include_str!("../assets/two_player.json");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] aggregame::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(aggregame::Error::NotConverged(_)) => 2,
            CliError::Core(_) | CliError::Usage(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "aggregame", version, about = "Equilibria of aggregative charging games and their clustered reductions")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a charging scenario and write it as a game file.
    Generate(GenerateArgs),
    /// Compute a VNE or SVWE of a game file.
    Solve(SolveArgs),
    /// Cluster the players and write the population game with its error constants.
    Reduce(ReduceArgs),
    /// Reduce and solve for several cluster counts against one reference VNE.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Vne,
    Svwe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Convention {
    Sum,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    Auto,
    Harmonic,
    Constant,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario configuration JSON; the full-size charging study when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scale players, capacity and ramp limit by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub shrink: f64,
    /// Also scale the price thresholds when shrinking.
    #[arg(long)]
    pub scale_prices: bool,
    #[arg(long, value_enum)]
    pub convention: Option<Convention>,
    /// Repeat this many player types (exactly homogeneous clusters).
    #[arg(long)]
    pub types: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Rule::Auto)]
    pub step_rule: Rule,
    /// Step constant `c` of the chosen rule.
    #[arg(long, default_value_t = 1.0)]
    pub step_c: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub stop_tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
}

impl SolverArgs {
    pub fn config(&self, record_trace: bool) -> SolverConfig {
        let step_rule = match self.step_rule {
            Rule::Auto => StepRule::Auto(self.step_c),
            Rule::Harmonic => StepRule::Harmonic(self.step_c),
            Rule::Constant => StepRule::Constant(self.step_c),
        };
        SolverConfig {
            step_rule,
            stop_tol: self.stop_tol,
            max_iters: self.max_iters,
            record_trace,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Game file, or `builtin:two-player`.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, value_enum, default_value_t = Mode::Vne)]
    pub mode: Mode,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Per-iteration CSV trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub clusters: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for `report.json`, `auxiliary.json` and `labels.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100")]
    pub clusters: Vec<usize>,
    /// k-means seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seed: Vec<u64>,
    #[arg(long, default_value_t = 3)]
    pub timing_repeats: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Directory for `sweep.csv`, the plot tables and `sweep.json`.
    #[arg(long)]
    pub out: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_game(scenario: &str) -> Result<GameSpec> {
    let text = if scenario == TWO_PLAYER {
        TWO_PLAYER_JSON.to_string()
    } else {
        read(Path::new(scenario))?
    };
    Ok(GameSpec::from_json(&text)?)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::from_json(&read(path)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(c) = args.convention {
        cfg.aggregation = match c {
            Convention::Sum => Aggregation::Sum,
            Convention::Average => Aggregation::Average,
        };
    }
    if args.types.is_some() {
        cfg.homogeneous_types = args.types;
    }
    let cfg = shrink(&cfg, args.shrink, args.scale_prices)?;
    let game = generate(&cfg)?;
    let mut text = game.to_json();
    text.push('\n');
    write(&args.out, &text)?;
    println!(
        "generated N={} T={} coupled={} (coupling feasibility checked) -> {}",
        game.n_players,
        game.horizon,
        game.coupling.is_some(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let game = load_game(&args.scenario)?;
    let cfg = args.solver.config(args.trace.is_some());
    let result = match args.mode {
        Mode::Vne => aggregame::solve_vne(&game, &cfg)?,
        Mode::Svwe => aggregame::solve_svwe(&game, &game.weights(), &cfg)?,
    };
    if let Some(path) = &args.trace {
        let mut buf = Vec::new();
        write_trace_csv(&result.trace, &mut buf).expect("writing to memory");
        write(path, &String::from_utf8(buf).expect("ascii csv"))?;
    }
    let mut stored = result.clone();
    stored.trace.clear();
    write(&args.out, &to_json(&stored))?;
    let kind = match result.kind {
        EquilibriumKind::Vne => "VNE",
        EquilibriumKind::Svwe => "SVWE",
    };
    println!(
        "{kind}: converged={} iterations={} wall_time={:.3}s residual={:.3e} coupling_violation={}",
        result.converged,
        result.iterations,
        result.wall_time_s,
        result.residual,
        result
            .coupling_violation
            .map_or_else(|| "none".to_string(), |v| format!("{v:.3e}")),
    );
    if !result.converged {
        return Err(aggregame::Error::NotConverged(format!(
            "{kind} after {} iterations; result written to {}",
            result.iterations,
            args.out.display()
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_reduce(args: &ReduceArgs) -> Result<()> {
    let game = load_game(&args.scenario)?;
    if args.clusters == 0 || args.clusters > game.n_players {
        return Err(CliError::Usage(format!(
            "--clusters must lie in 1..={}, got {}",
            game.n_players, args.clusters
        )));
    }
    let report = reduce(&game, &ReductionConfig::new(args.clusters, args.seed))?;
    create_dir(&args.out)?;
    let mut text = report.to_json();
    text.push('\n');
    write(&args.out.join("report.json"), &text)?;
    let mut aux = report.auxiliary_game.to_json();
    aux.push('\n');
    write(&args.out.join("auxiliary.json"), &aux)?;
    write(&args.out.join("labels.csv"), &report.assignment.labels_csv())?;
    println!(
        "I={} delta_X={:.4e} ({:?}) delta_u={:.4e} rho={:.4e} K={} rho_condition_ok={}",
        args.clusters,
        report.delta_x,
        report.delta_x_method,
        report.delta_u,
        report.rho,
        report.k.map_or_else(|| "none".to_string(), |k| format!("{k:.4e}")),
        report.rho_condition_ok
    );
    Ok(())
}

/// Relative error range and median solve time per cluster count, for plotting.
fn plot_tables(report: &SweepReport) -> (String, String) {
    let mut clusters: Vec<usize> = report.rows.iter().map(|r| r.clusters).collect();
    clusters.sort_unstable();
    clusters.dedup();
    let mut error = String::from("I,mean_rel_error,min_rel_error,max_rel_error\n");
    let mut time = String::from("I,median_cpu_time_s\n");
    for i in clusters {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.clusters == i).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.rel_error).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let lo = errs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = errs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        error.push_str(&format!("{i},{mean:e},{lo:e},{hi:e}\n"));
        let mut times: Vec<f64> = rows.iter().map(|r| r.cpu_time_s).collect();
        times.sort_by(f64::total_cmp);
        time.push_str(&format!("{i},{:.6}\n", times[times.len() / 2]));
    }
    (error, time)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let game = load_game(&args.scenario)?;
    let cfg = SweepConfig {
        clusters: args.clusters.clone(),
        seeds: args.seed.clone(),
        solver: args.solver.config(false),
        timing_repeats: args.timing_repeats,
    };
    let report = aggregame::experiment::run_sweep(&game, &cfg)?;
    create_dir(&args.out)?;
    write(&args.out.join("sweep.csv"), &sweep_csv(&report.rows))?;
    let (error, time) = plot_tables(&report);
    write(&args.out.join("error_vs_I.csv"), &error)?;
    write(&args.out.join("time_vs_I.csv"), &time)?;
    write(&args.out.join("sweep.json"), &to_json(&report))?;
    println!(
        "reference VNE: {} iterations, {:.2}s",
        report.reference.iterations, report.reference.wall_time_s
    );
    for r in &report.rows {
        println!(
            "seed={} I={:>4} rel_error={:.4} cpu_time={:.4}s iterations={} converged={}",
            r.seed, r.clusters, r.rel_error, r.cpu_time_s, r.iterations, r.converged
        );
    }
    match &report.fit {
        Some(fit) => println!("rate fit: a={:.3} r2={:.3}", fit.a, fit.r2),
        None => println!("rate fit: not enough distinct cluster counts"),
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}
