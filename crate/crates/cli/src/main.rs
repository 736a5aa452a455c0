use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use riskdual::app::{cmd_bench, cmd_bootstrap, cmd_bound, cmd_verify, BenchSpec, RunOptions};
use riskdual::report::OutputFormat;
use riskdual::Error;

/// Worst-case risk bounds from integral constraints.
#[derive(Parser, Debug)]
#[command(name = "riskdual", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Largest number of grid boxes to accept.
    #[arg(long, global = true)]
    budget_cells: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write the materialized master program as fixed MPS (bound only).
    #[arg(long, global = true)]
    dump_mps: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the worst-case bound.
    Bound { config: PathBuf },
    /// Solve, then compare with the primal value on a candidate grid.
    Verify { config: PathBuf },
    /// Print only the bootstrap estimates of the integral bounds.
    Bootstrap { config: PathBuf },
    /// Time column generation against the dense simplex.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 4096])]
        cells: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => OutputFormat::Text,
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    }
    let opts = RunOptions {
        seed: c.seed,
        budget_cells: c.budget_cells,
        dump_mps: c.dump_mps.clone(),
    };
    let format = OutputFormat::from(c.format);
    let (text, code) = match &cli.command {
        Command::Bound { config } => {
            let r = cmd_bound(config, &opts)?;
            (r.render(format), r.exit_code())
        }
        Command::Verify { config } => {
            let r = cmd_verify(config, &opts)?;
            (r.render(format), r.exit_code())
        }
        Command::Bootstrap { config } => {
            let r = cmd_bootstrap(config, &opts)?;
            (r.render(format), r.exit_code())
        }
        Command::Bench { dims, cells, runs } => {
            let spec = BenchSpec {
                dims: dims.clone(),
                cells: cells.clone(),
                runs: *runs,
                seed: c.seed.unwrap_or(0),
            };
            (cmd_bench(&spec)?.render(format), 0)
        }
    };
    match &c.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RISKDUAL_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
