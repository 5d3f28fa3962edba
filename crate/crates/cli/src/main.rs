use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsl_cli::{parse_config, run, run_configured, CliError, Command, RunOptions};

#[derive(Parser)]
#[command(name = "hsl", version, about = "Pseudospectral laboratory for mixed fractional Hartree equations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the experiment named by the config's `experiment` key.
    Run(Common),
    /// Strang split-step integration with snapshots and diagnostics.
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Continue from the last snapshot in <out>/index.json.
        #[arg(long)]
        resume: bool,
    },
    /// Picard iteration of the Duhamel map on [0, T].
    Picard(Common),
    /// Norms of the ensemble (or of `initial.file`).
    Norms(Common),
    /// Run a verification suite.
    Verify {
        /// spaces, propagators, trilinear, strichartz, dynamics or all.
        suite: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Homogeneous Strichartz ratios of the linear flow.
    Strichartz(Common),
    /// Norms of the witness field across refinements.
    Witness(Common),
    /// Largest contracting horizon against the size of the datum.
    LocalExistence(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "HSL_OUT", default_value = "hsl-out")]
    out: PathBuf,
    /// Overrides `ensemble.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "HSL_THREADS")]
    threads: Option<usize>,
    /// Validate the config, print it resolved, and stop.
    #[arg(long)]
    dry_run: bool,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (cmd, common, resume, suite) = match cli.command {
        Sub::Run(c) => (None, c, false, None),
        Sub::Evolve { common, resume } => (Some(Command::Evolve), common, resume, None),
        Sub::Picard(c) => (Some(Command::Picard), c, false, None),
        Sub::Norms(c) => (Some(Command::Norms), c, false, None),
        Sub::Verify { suite, common } => (Some(Command::Verify), common, false, suite),
        Sub::Strichartz(c) => (Some(Command::Strichartz), c, false, None),
        Sub::Witness(c) => (Some(Command::Witness), c, false, None),
        Sub::LocalExistence(c) => (Some(Command::LocalExistence), c, false, None),
    };
    let mut cfg = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(s) = &suite {
        hsl_core::verify::Suite::parse(s).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if common.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let opts = RunOptions {
        out: common.out,
        resume,
        suite,
    };
    match cmd {
        Some(cmd) => run(cmd, &cfg, &opts),
        None => run_configured(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
