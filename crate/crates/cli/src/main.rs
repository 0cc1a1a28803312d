use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use optlab_core::error::OptError;
use optlab_core::harness::invariants::check_all;
use optlab_core::harness::{run, suite, MetricTrace, RunConfig};

const SEED_ENV: &str = "OPTLAB_SEED";

#[derive(Parser)]
#[command(name = "optlab", version, about = "Run optimization experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random reshuffling, shuffle-once, incremental gradient and SGD
    Shuffle(FamilyCmd),
    /// Local SGD, minibatch SGD and FedRR
    Federated(FamilyCmd),
    /// Adaptive gradient descent
    Adaptive(FamilyCmd),
    /// DIANA and TernGrad with quantized communication
    Diana(FamilyCmd),
    /// Stochastic decoupling for linear constraints
    Sdm(FamilyCmd),
    /// Primal-dual splitting methods
    Splitting(FamilyCmd),
    /// Run a bundled suite of configs
    Bench {
        #[command(subcommand)]
        what: BenchCmd,
    },
    /// Run the built-in property checks
    Check {
        #[command(subcommand)]
        what: CheckCmd,
    },
}

#[derive(Args)]
struct FamilyCmd {
    #[command(subcommand)]
    action: FamilyAction,
}

#[derive(Subcommand)]
enum FamilyAction {
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; defaults to the config's `output`, then stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCmd {
    Suite {
        name: String,
        /// Directory for one CSV per config
        #[arg(long, default_value = "optlab-out")]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum CheckCmd {
    Invariants,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<OptError> for Failure {
    fn from(e: OptError) -> Self {
        Failure {
            code: if e.is_config_error() { 2 } else { 3 },
            msg: e.to_string(),
        }
    }
}

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        msg: msg.into(),
    }
}

/// Reads a config; a missing `seed` falls back to `OPTLAB_SEED`.
fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| config_failure(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
    if let Some(obj) = value.as_object_mut() {
        if !obj.contains_key("seed") {
            let seed = std::env::var(SEED_ENV).map_err(|_| {
                config_failure(format!(
                    "{}: no seed in the config and {SEED_ENV} is unset",
                    path.display()
                ))
            })?;
            let seed: u64 = seed
                .trim()
                .parse()
                .map_err(|e| config_failure(format!("{SEED_ENV}={seed:?}: {e}")))?;
            obj.insert("seed".into(), seed.into());
        }
    }
    Ok(RunConfig::from_json(&value.to_string())?)
}

fn run_family(family: &str, args: RunArgs) -> Result<(), Failure> {
    let path = args
        .config
        .ok_or_else(|| config_failure(format!("`{family} run` needs --config <file>")))?;
    let mut cfg = load_config(&path)?;
    if cfg.solver.family() != family {
        return Err(config_failure(format!(
            "{} configures the {} family, not {family}",
            path.display(),
            cfg.solver.family()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let trace = run(&cfg)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    match args.out.or_else(|| cfg.output.clone().map(PathBuf::from)) {
        Some(out) => {
            trace.write_csv(&out)?;
            eprintln!("{}: {} rows -> {}", family, trace.rows.len(), out.display());
        }
        None => trace.write_csv_to(std::io::stdout().lock())?,
    }
    Ok(())
}

fn bench_suite(name: &str, out_dir: &Path) -> Result<(), Failure> {
    let configs = suite(name)?;
    std::fs::create_dir_all(out_dir).map_err(OptError::from)?;
    let results: Vec<(String, Result<MetricTrace, OptError>, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(n, cfg)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = run(cfg);
                    (n.clone(), r, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let mut worst: Option<Failure> = None;
    for (n, r, secs) in results {
        match r {
            Ok(trace) => {
                let path = out_dir.join(format!("{n}.csv"));
                trace.write_csv(&path)?;
                let last = trace.last().expect("traces start with the initial point");
                println!(
                    "{n:<24} {:>6} rows  f_gap {:>10.3e}  dist_sq {:>10.3e}  {secs:.3}s",
                    trace.rows.len(),
                    last.f_gap,
                    last.dist_sq
                );
            }
            Err(e) => {
                println!("{n:<24} error: {e}");
                let f = Failure::from(e);
                if worst.as_ref().map(|w| w.code) < Some(f.code) {
                    worst = Some(f);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn check_invariants() -> Result<(), Failure> {
    let results = check_all();
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            msg: format!("{failed} of {} checks failed", results.len()),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Shuffle(c) => dispatch("shuffle", c),
        Command::Federated(c) => dispatch("federated", c),
        Command::Adaptive(c) => dispatch("adaptive", c),
        Command::Diana(c) => dispatch("diana", c),
        Command::Sdm(c) => dispatch("sdm", c),
        Command::Splitting(c) => dispatch("splitting", c),
        Command::Bench {
            what: BenchCmd::Suite { name, out_dir },
        } => bench_suite(&name, &out_dir),
        Command::Check {
            what: CheckCmd::Invariants,
        } => check_invariants(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(family: &str, c: FamilyCmd) -> Result<(), Failure> {
    match c.action {
        FamilyAction::Run(args) => run_family(family, args),
    }
}
