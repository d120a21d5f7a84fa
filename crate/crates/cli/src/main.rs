use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use homoglat_core::experiments::{self, check, ExperimentConfig, RunOutput, TorusRule, SCHEMA};
use homoglat_core::Error;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "homoglat", version, about = "Stochastic homogenization experiments on periodic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the invariant and oracle battery.
    Check,
    /// Print the config schema, and torus-rule diagnostics for a config.
    Info { config: Option<PathBuf> },
    /// Re-emit a stored JSON result as CSV or JSON.
    Export {
        result: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_file(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn run(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    for w in cfg.torus_violations() {
        eprintln!("warning: torus rule relaxed: {w}");
    }
    let out = match experiments::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_SOLVER });
        }
    };
    if let Err(e) = out.write(&cfg) {
        eprintln!("error: writing results: {e}");
        return ExitCode::from(EXIT_SOLVER);
    }
    let verdict = match out.passed {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "logged",
    };
    println!(
        "{} {verdict}: {} and {}",
        out.experiment,
        cfg.csv_path().display(),
        cfg.json_path().display()
    );
    if out.passed == Some(false) {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn check() -> ExitCode {
    let items = match experiments::with_workers(check::run_check_battery) {
        Ok(Ok(items)) => items,
        Ok(Err(e)) | Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    let mut failed = 0;
    for it in &items {
        let tag = if it.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<40} {:>12.3e} <= {:.1e}", it.name, it.value, it.tolerance);
        failed += usize::from(!it.passed);
    }
    println!("{} checks, {failed} failed", items.len());
    if failed > 0 {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn info(config: Option<&PathBuf>) -> ExitCode {
    println!("config keys (key = value, # starts a comment):");
    for (key, format, meaning) in SCHEMA {
        println!("  {key:<12} {format:<42} {meaning}");
    }
    let Some(path) = config else {
        return ExitCode::SUCCESS;
    };
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    println!();
    println!("{}: {} on d = {}, N = {}", path.display(), cfg.experiment, cfg.d, cfg.n);
    let rule = match cfg.torus_rule {
        TorusRule::Strict => "strict",
        TorusRule::Relaxed => "relaxed",
    };
    let violations = cfg.torus_violations();
    if violations.is_empty() {
        println!("torus rule ({rule}): satisfied");
    } else {
        for v in violations {
            println!("torus rule ({rule}): {v}");
        }
    }
    ExitCode::SUCCESS
}

fn export(result: &Path, format: Format, output: Option<&PathBuf>) -> ExitCode {
    let out = match RunOutput::read(result) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", result.display());
            return ExitCode::from(match e {
                Error::Io(_) | Error::Json(_) => EXIT_CONFIG,
                _ => EXIT_SOLVER,
            });
        }
    };
    let text = match format {
        Format::Csv => out.table.to_csv(),
        Format::Json => out.to_json(),
    };
    match output {
        Some(p) => {
            if let Err(e) = std::fs::write(p, text) {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(EXIT_SOLVER);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config } => run(config),
        Command::Check => check(),
        Command::Info { config } => info(config.as_ref()),
        Command::Export { result, format, output } => export(result, *format, output.as_ref()),
    }
}
