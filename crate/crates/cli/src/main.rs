use std::path::PathBuf;
use std::process::ExitCode;

use bondloc_cli::{run_config, CliError, ScenarioConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bondloc", version, about = "Peridynamic localization and linearization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and run a scenario, writing CSV tables and summary.json.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for randomized checks (overrides `seed` in the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a scenario without running it.
    Validate { config: PathBuf },
    /// List kernel families, potentials and catalog micro-potentials.
    ListCatalog,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => match run_config(&config, out.as_deref(), seed, threads) {
            Ok(o) => {
                for c in &o.contracts {
                    println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                if o.pass() {
                    ExitCode::SUCCESS
                } else {
                    let failed: Vec<&str> = o.contracts.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
                    fail(CliError::Contract(failed.join(", ")))
                }
            }
            Err(e) => fail(e),
        },
        Command::Validate { config } => match ScenarioConfig::load(&config).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => {
                println!("{{\"valid\":true,\"experiment\":\"{}\"}}", c.experiment.name());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::ListCatalog => {
            println!("kernel families: box, fractional (s, p), annulus (inner), tabulated (r, value)");
            println!("kernel sequences: rescaled (delta0, power), fractional_to_one (p), constant");
            println!("potentials: power (coef, p), kinked_power (coef, p, slope), tabulated (a, phi, p)");
            println!("micro-potentials:");
            for (tag, desc) in bondloc_core::materials::CATALOG {
                println!("  {tag}: {desc}");
            }
            ExitCode::SUCCESS
        }
    }
}
