use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dscot_core::crypto::KeyPair;
use dscot_core::ledger::GasSchedule;
use dscot_core::report::{self, Verdict};
use dscot_core::scenario::{self, RunTrace};

/// Deterministic simulator of an NFT-based IoT identity registry on a
/// private BFT ledger.
#[derive(Parser)]
#[command(name = "dscot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario script and write trace.json and trace.csv.
    Run {
        script: PathBuf,
        /// Override the script's seed header.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the script's validator count.
        #[arg(long)]
        validators: Option<usize>,
        /// Gas schedule file (`key = value` lines).
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "dscot-out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Gas table: metered values from a trace next to published fixtures.
    Report {
        /// Trace produced by `run`; omit for the fixture-only table.
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run the ordering, zero-fee, linearity and determinism checks.
    Verify {
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the address and public key derived from (seed, name).
    Keygen {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

/// Failure mapped to a process exit code.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_trace(path: &Path) -> Result<RunTrace, Failure> {
    RunTrace::from_json(&read(path)?)
        .map_err(|e| usage(format!("{}: malformed trace: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Run {
            script,
            seed,
            validators,
            schedule,
            out,
            format,
        } => {
            let text = read(&script)?;
            let mut parsed =
                scenario::parse(&text).map_err(|e| usage(format!("{}: {e}", script.display())))?;
            if let Some(seed) = seed {
                parsed.seed = seed;
            }
            if let Some(n) = validators {
                parsed.validators = n;
            }
            let schedule = match schedule {
                Some(path) => read(&path)?
                    .parse::<GasSchedule>()
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?,
                None => GasSchedule::default(),
            };
            let trace = scenario::run(&parsed, schedule).map_err(|e| usage(e.to_string()))?;
            fs::create_dir_all(&out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
            write(&out.join("trace.json"), &trace.to_json())?;
            write(&out.join("trace.csv"), &trace.to_csv())?;
            let rendered = match format {
                Format::Text => trace.to_text(),
                Format::Csv => trace.to_csv(),
                Format::Json => trace.to_json(),
            };
            match &trace.aborted {
                Some(a) => Err(Failure {
                    code: 2,
                    message: format!(
                        "{rendered}required step {} (line {}) failed: {}",
                        a.step, a.line, a.reason
                    ),
                }),
                None => Ok(rendered),
            }
        }
        Command::Report { trace, format } => {
            let trace = trace.as_deref().map(load_trace).transpose()?;
            let r = report::gas_report(trace.as_ref());
            Ok(match format {
                Format::Text => r.to_text(),
                Format::Csv => r.to_csv(),
                Format::Json => r.to_json(),
            })
        }
        Command::Verify { trace, format } => {
            let checks = report::verify(&load_trace(&trace)?);
            let rendered = match format {
                Format::Text => checks.iter().map(|c| c.line() + "\n").collect(),
                Format::Csv => {
                    let mut s = String::from("check,verdict,detail\n");
                    for c in &checks {
                        let verdict = serde_json::to_value(c.verdict).expect("verdict serializes");
                        s += &format!(
                            "{},{},\"{}\"\n",
                            c.name,
                            verdict.as_str().unwrap_or_default(),
                            c.detail.replace('"', "\"\"")
                        );
                    }
                    s
                }
                Format::Json => {
                    serde_json::to_string_pretty(&checks).expect("checks serialize") + "\n"
                }
            };
            if checks.iter().any(|c| c.verdict == Verdict::Fail) {
                Err(Failure {
                    code: 2,
                    message: rendered,
                })
            } else {
                Ok(rendered)
            }
        }
        Command::Keygen { name, seed, format } => {
            let key = KeyPair::from_seed(seed, &name);
            let (address, public_key) = (key.address(), key.public_key());
            Ok(match format {
                Format::Text => format!("address    {address}\npublic key {public_key}\n"),
                Format::Csv => {
                    format!("name,seed,address,public_key\n{name},{seed},{address},{public_key}\n")
                }
                Format::Json => {
                    let v = json!({"name": name, "seed": seed, "address": address, "public_key": public_key});
                    serde_json::to_string_pretty(&v).expect("json serializes") + "\n"
                }
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure { code, message }) => {
            if code == 2 {
                print!("{message}");
            } else {
                eprintln!("dscot: {message}");
            }
            ExitCode::from(code)
        }
    }
}
