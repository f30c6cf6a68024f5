use clap::{Parser, Subcommand};
use pamclt::exec::with_threads;
use pamclt::runner::{exit_code, run, Command, Invocation};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical laboratory for spatial averages of the parabolic Anderson model.
#[derive(Parser, Debug)]
#[command(name = "pamclt", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,

    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (falls back to `out` in the config, then $PAMCLT_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Cap on worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Accept a mollification scale the grid cannot resolve.
    #[arg(long, global = true)]
    allow_aliasing: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Check the configuration, the Dalang condition and the grid guards.
    Validate,
    /// Chaos integrals h_n, J_n and the truncated series.
    ChaosTable,
    /// Two-point profile and the limiting covariance K(t, s).
    Covariance,
    /// Full variance-scaling and normality report.
    Clt,
    /// Binary dump of one synthesized noise field.
    FieldDump,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Validate => Command::Validate,
            Cmd::ChaosTable => Command::ChaosTable,
            Cmd::Covariance => Command::Covariance,
            Cmd::Clt => Command::Clt,
            Cmd::FieldDump => Command::FieldDump,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: config error at `--config`: a configuration file is required");
        return ExitCode::from(2);
    };
    let inv = Invocation {
        command: cli.command.map(Command::from),
        config,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
        allow_aliasing: cli.allow_aliasing,
    };
    let mut stdout = std::io::stdout();
    match with_threads(inv.threads, || run(&inv, &mut stdout)) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
