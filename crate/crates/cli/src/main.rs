//! `alg-testbed`: run attack scenarios against the simulated ALG.
//!
//! Exit status: 0 when every selected scenario matches its expectation (or
//! none were given), 1 on a verdict mismatch, 2 on a usage or configuration
//! error.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use alg_testbed::cwe::CATALOG;
use alg_testbed::harness::{run_all, select_scenarios, stress};
use alg_testbed::policy::load_policy;
use alg_testbed::report::{
    build_report, canonical_json, compare, config_digest, load_expectations, summary, write_report,
};
use alg_testbed::vnet::{load_network, write_jsonl};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alg-testbed", version, about = "CWE-driven attack scenarios against a simulated ALG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Configs {
    /// Network topology JSON.
    #[arg(long)]
    network: PathBuf,
    /// Policy JSON.
    #[arg(long)]
    policy: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios and write a report.
    Run {
        #[command(flatten)]
        configs: Configs,
        /// Comma-separated scenario ids, or "all".
        #[arg(long, default_value = "all")]
        scenarios: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write the JSON report. Printed to stdout if omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Expected verdict per scenario id.
        #[arg(long)]
        expect: Option<PathBuf>,
        /// Write the combined event trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep offered HTTP load and report mean latency per rate.
    Stress {
        #[command(flatten)]
        configs: Configs,
        /// Requests per virtual minute, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the weakness catalog as JSON.
    Catalog,
}

enum Failure {
    Mismatch,
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => Ok(io::stdout().write_all(bytes)?),
    }
}

struct Loaded {
    network: alg_testbed::vnet::NetworkConfig,
    policy: Arc<alg_testbed::policy::PolicySet>,
    digest: String,
}

fn load(configs: &Configs) -> Result<Loaded, Failure> {
    let net_bytes = read(&configs.network)?;
    let policy_bytes = read(&configs.policy)?;
    let network = load_network(&net_bytes)
        .map_err(|e| Failure::Usage(format!("{}: {e}", configs.network.display())))?;
    let policy = load_policy(&policy_bytes)
        .map_err(|e| Failure::Usage(format!("{}: {e}", configs.policy.display())))?;
    Ok(Loaded {
        network,
        policy: Arc::new(policy),
        digest: config_digest(&net_bytes, &policy_bytes),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Catalog => write_out(None, &canonical_json(&CATALOG)),
        Command::Stress {
            configs,
            rates,
            report,
        } => {
            let loaded = load(&configs)?;
            let out = stress(&loaded.network, loaded.policy, &rates)?;
            write_out(report.as_deref(), &canonical_json(&out))
        }
        Command::Run {
            configs,
            scenarios,
            seed,
            report,
            expect,
            trace,
        } => {
            let loaded = load(&configs)?;
            let specs = select_scenarios(&scenarios)?;
            let expectations = match &expect {
                Some(p) => Some(
                    load_expectations(&read(p)?)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            let runs = run_all(&specs, &loaded.network, &loaded.policy, seed)?;
            let rep = build_report(loaded.digest, seed, &runs);

            if let Some(path) = &trace {
                let file = fs::File::create(path)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                let mut w = BufWriter::new(file);
                for r in &runs {
                    write_jsonl(&r.trace, &mut w)?;
                }
                w.flush()?;
            }
            match &report {
                Some(p) => {
                    write_out(Some(p), &write_report(&rep))?;
                    print!("{}", summary(&rep));
                }
                None => write_out(None, &write_report(&rep))?,
            }

            let mismatches = expectations.map(|e| compare(&e, &rep.results)).unwrap_or_default();
            for m in &mismatches {
                eprintln!("{}: expected {}, got {}", m.id, m.expected, m.actual);
            }
            if mismatches.is_empty() {
                Ok(())
            } else {
                Err(Failure::Mismatch)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
