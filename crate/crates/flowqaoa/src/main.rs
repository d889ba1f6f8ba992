use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowqaoa::cli::{self, CapOverride, CommandKind};
use flowqaoa::error::Result;

#[derive(Parser)]
#[command(
    name = "flowqaoa",
    version,
    about = "Constraint-preserving QAOA benchmarks on network-flow problems"
)]
struct Cli {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Replace the invoked command's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory artifacts are written into.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Override a resource cap, e.g. --cap full=1000000 --cap feasible=5000.
    #[arg(long = "cap", global = true, value_name = "KEY=N")]
    caps: Vec<CapOverride>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Count total and feasible state-space sizes.
    Census,
    /// Scan mixer spreading and report the saturation time.
    Satscan,
    /// Optimize one instance end to end.
    Run,
    /// Benchmark a grid of mixers, depths, and preparations.
    Sweep,
    /// Exhaustively enumerate feasible solutions and cost bounds.
    Oracle,
    /// Trace the plaquette operations between two paths.
    Transform,
}

impl Command {
    fn kind(self) -> CommandKind {
        match self {
            Command::Census => CommandKind::Census,
            Command::Satscan => CommandKind::Satscan,
            Command::Run => CommandKind::Run,
            Command::Sweep => CommandKind::Sweep,
            Command::Oracle => CommandKind::Oracle,
            Command::Transform => CommandKind::Transform,
        }
    }
}

fn real_main(args: Cli) -> Result<()> {
    let mut cfg = cli::load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cli::apply_seed(&mut cfg, args.command.kind(), seed);
    }
    let mut caps = cfg.caps;
    cli::apply_caps(&mut caps, &args.caps);
    let out_dir = &args.out_dir;

    match args.command {
        Command::Census => {
            let outcome = cli::cmd_census(&cfg.census, &caps, out_dir)?;
            println!(
                "census: {} rows -> {}",
                outcome.rows_written,
                outcome.csv_path.display()
            );
            if let Some(e) = outcome.error {
                return Err(e);
            }
        }
        Command::Satscan => {
            let outcome = cli::cmd_satscan(&cfg.satscan, &caps, out_dir)?;
            let s = &outcome.summary;
            match s.t_sat {
                Some(t) => println!("satscan: {} saturates at t = {t}", s.instance),
                None => println!("satscan: {} shows no plateau on this grid", s.instance),
            }
            println!(
                "satscan: table -> {}, summary -> {}",
                outcome.csv_path.display(),
                outcome.json_path.display()
            );
        }
        Command::Run => {
            let outcome = cli::cmd_run(&cfg.run, &caps, out_dir)?;
            let r = &outcome.artifact.result;
            println!(
                "run: {} {} p={} AR = {:.4} ({} evaluations)",
                r.instance,
                r.mixer,
                r.p,
                r.approximation_ratio,
                r.de_evals + r.bfgs_evals
            );
            println!("run: result -> {}", outcome.json_path.display());
        }
        Command::Sweep => {
            let outcome = cli::cmd_sweep(&cfg.sweep, &caps, out_dir)?;
            println!(
                "sweep: {} runs ({} resumed, {} failed)",
                outcome.completed, outcome.resumed, outcome.failed
            );
            println!(
                "sweep: runs -> {}, aar -> {}, results -> {}",
                outcome.runs_csv.display(),
                outcome.aar_csv.display(),
                outcome.results_dir.display()
            );
        }
        Command::Oracle => {
            let outcome = cli::cmd_oracle(&cfg.oracle, &caps, out_dir)?;
            let a = &outcome.artifact;
            println!(
                "oracle: {} has {} feasible states, costs in [{}, {}]",
                a.instance, a.feasible_states, a.c_min, a.c_max
            );
            println!("oracle: dump -> {}", outcome.json_path.display());
        }
        Command::Transform => {
            let outcome = cli::cmd_transform(&cfg.transform, out_dir)?;
            let a = &outcome.artifact;
            println!(
                "transform: {} ops, max height {} on the {}x{} grid",
                a.total_ops, a.max_height, a.rows, a.cols
            );
            println!("transform: trace -> {}", outcome.json_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match real_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
