use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::Error;
use crate::evidence::{audit_pack, emit_pack, replay_verify};
use crate::governance::GovernanceMode;
use crate::harness::{run, RegistrySource, RunConfig, DEFAULT_SLICE};
use crate::hashcore::Fixed6;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ledgerloop",
    version,
    about = "Verifier-driven learning loop with an attested ledger"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Shadow,
    Enforce,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the two-arm experiment and write an evidence pack.
    Run {
        #[arg(long)]
        seed: u64,
        /// Output directory; must be empty or absent.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        cycles: u64,
        #[arg(long, default_value_t = 20)]
        events_per_cycle: u32,
        #[arg(long, default_value = "0.0", value_parser = parse_rate)]
        lr_baseline: Fixed6,
        #[arg(long, default_value = "0.1", value_parser = parse_rate)]
        lr_treatment: Fixed6,
        #[arg(long, value_enum, default_value_t = Mode::Shadow)]
        mode: Mode,
        /// Commitment registry to bind instead of the built-in defaults.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_SLICE)]
        slice: String,
        #[arg(long)]
        json: bool,
    },
    /// Replay-verify an evidence pack. Exit 0 if every check passes, 1 otherwise.
    Verify {
        pack: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Mirror-audit the ledgers in an evidence pack.
    Audit {
        pack: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

/// Non-negative decimal with at most six fractional digits.
fn parse_rate(s: &str) -> Result<Fixed6, String> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 6 || s.starts_with('-') {
        return Err(format!(
            "{s:?}: expected a non-negative decimal with at most 6 places"
        ));
    }
    format!("{int}.{frac:0<6}")
        .parse()
        .map_err(|e| format!("{e}"))
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run {
            seed,
            output,
            cycles,
            events_per_cycle,
            lr_baseline,
            lr_treatment,
            mode,
            registry,
            slice,
            json,
        } => {
            let mut config = RunConfig::new(seed);
            config.cycles = cycles;
            config.events_per_cycle = events_per_cycle;
            config.arms[0].lr = lr_baseline;
            config.arms[1].lr = lr_treatment;
            config.mode = match mode {
                Mode::Shadow => GovernanceMode::Shadow,
                Mode::Enforce => GovernanceMode::Enforce,
            };
            config.slice = slice;
            if let Some(path) = registry {
                config.registry = RegistrySource::File(path);
            }
            let result = run(&config).and_then(|state| {
                let manifest = emit_pack(&state, &output)?;
                Ok((state.summary()?, manifest))
            });
            match result {
                Ok((summary, manifest)) => {
                    if json {
                        print_json(&json!({
                            "output": output.display().to_string(),
                            "summary": summary,
                            "ledger_heads": manifest.ledger_heads,
                            "commitment_registry_sha256": manifest.commitment_registry_sha256,
                        }));
                    } else {
                        println!(
                            "wrote {} ({} files)",
                            output.display(),
                            manifest.files.len() + 1
                        );
                        for arm in &summary.arms {
                            println!(
                                "  {}: lr {}, {} blocks, mean dp {}, var {}, head {}",
                                arm.name,
                                arm.lr,
                                arm.blocks,
                                arm.mean_delta_p,
                                arm.delta_p_variance,
                                arm.ledger_head
                            );
                        }
                        let fired: Vec<&str> = summary.fired.iter().map(|p| p.as_str()).collect();
                        println!("  fired {:?}, claim level {:?}", fired, summary.claim_level);
                    }
                    EXIT_OK
                }
                Err(e @ Error::Config(_)) => {
                    eprintln!("error: {e}");
                    EXIT_USAGE
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_FAILURE
                }
            }
        }
        Command::Verify { pack, json } => {
            let report = replay_verify(&pack);
            if json {
                print_json(&report);
            } else {
                println!("{report}");
            }
            report.exit_code()
        }
        Command::Audit { pack, json } => match audit_pack(&pack) {
            Ok(report) => {
                if json {
                    print_json(&report);
                } else {
                    println!("{report}");
                }
                if report.passed {
                    EXIT_OK
                } else {
                    EXIT_FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_FAILURE
            }
        },
    }
}
