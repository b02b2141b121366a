use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use stp_core::abduction::AbductionError;
use stp_core::spectral::{lambda_max, spectrum};
use stp_core::{
    abduce, diffuse, CellularSheaf64, Cochain64, DiffusionConfig64, DiscrepancyQuery,
    EventCalculus, ExplanationSet, Interval, Mode,
};
use stp_sim::{
    goal_satisfied, simulate, validate_scenario, RunOptions, Scenario, ScenarioError, SimError,
    TraceEvent,
};

#[derive(Parser)]
#[command(name = "stp", version, about = "Sheaf-theoretic planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and emit its trace.
    Run {
        scenario: PathBuf,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for agent steps (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Explain the world's change from its initial state to the horizon.
    Abduce {
        scenario: PathBuf,
        #[arg(long, default_value_t = stp_core::abduction::DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long, default_value = "all-minimal")]
        mode: Mode,
    },
    /// Run a scenario and print only its merges and their follow-ups.
    Glue { scenario: PathBuf },
    /// Diffuse a cochain over a sheaf file.
    Consensus {
        sheaf: PathBuf,
        /// Step size; defaults to half the stability limit.
        #[arg(long)]
        alpha: Option<f64>,
        /// Maximum staleness of neighbour reads (0 = synchronous).
        #[arg(long, default_value_t = 0)]
        delay: usize,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the Dirichlet energy per iteration as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Print the Laplacian spectrum and cohomology of a sheaf file.
    Spectrum { sheaf: PathBuf },
    /// Check a scenario and list every problem.
    Validate { scenario: PathBuf },
}

/// Failures that map to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

#[derive(Deserialize)]
struct SheafFile {
    #[serde(flatten)]
    sheaf: CellularSheaf64,
    #[serde(default)]
    x0: Option<Cochain64>,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    Scenario::load(&read(path)?).map_err(|e| Invalid(e.to_string()).into())
}

fn load_sheaf(path: &Path) -> anyhow::Result<SheafFile> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
}

fn sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::Scenario(ScenarioError::Invalid(_)) => Invalid(e.to_string()).into(),
        other => anyhow!(other),
    }
}

fn run(cmd: Command, out: &mut String) -> anyhow::Result<()> {
    match cmd {
        Command::Run {
            scenario,
            trace,
            seed,
            threads,
        } => {
            let sc = load_scenario(&scenario)?;
            let outcome = simulate(&sc, RunOptions { threads, seed }).map_err(sim_error)?;
            let text = outcome.trace.to_ndjson();
            match trace {
                Some(path) => {
                    fs::write(&path, text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    for a in &sc.agents {
                        let ok = goal_satisfied(&sc, &outcome.trace, &a.id).map_err(sim_error)?;
                        writeln!(
                            out,
                            "{}: goal {}",
                            a.id,
                            if ok { "satisfied" } else { "not satisfied" }
                        )?;
                    }
                }
                None => out.push_str(&text),
            }
        }
        Command::Abduce {
            scenario,
            max_len,
            mode,
        } => {
            let sc = load_scenario(&scenario)?;
            let vocab = sc.vocabulary()?;
            let mut world = EventCalculus::new(&vocab, sc.narrative())?;
            let window = Interval::new(0, sc.horizon)?;
            let mut q = DiscrepancyQuery::new(world.stalk(0), world.stalk(sc.horizon), window)
                .with_max_len(max_len);
            q.relax_preconditions = sc.relax_preconditions;
            let set = match abduce(&q, &vocab, mode) {
                Ok(set) => set,
                Err(AbductionError::NoExplanationWithinBound { bound }) => ExplanationSet {
                    explanations: Vec::new(),
                    exhaustive_up_to: bound,
                },
                Err(AbductionError::ZeroMaxLen) => {
                    return Err(Invalid("--max-len must be at least 1".into()).into())
                }
                Err(e) => return Err(e.into()),
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&set)?)?;
        }
        Command::Glue { scenario } => {
            let sc = load_scenario(&scenario)?;
            let outcome = simulate(&sc, RunOptions::default()).map_err(sim_error)?;
            for r in &outcome.trace.records {
                let keep = match &r.event {
                    TraceEvent::Merge { .. } => true,
                    TraceEvent::Abduce { agents, .. } => agents.len() == 2,
                    _ => false,
                };
                if keep {
                    writeln!(out, "{}", serde_json::to_string(r)?)?;
                }
            }
        }
        Command::Consensus {
            sheaf,
            alpha,
            delay,
            max_iters,
            tol,
            seed,
            csv,
        } => {
            let file = load_sheaf(&sheaf)?;
            let s = file.sheaf;
            let x0 = match file.x0 {
                Some(x) => x,
                None => {
                    let flat: Vec<f64> = (0..s.dim()).map(|i| (i + 1) as f64).collect();
                    Cochain64::from_flat(&s, &flat)?
                }
            };
            let alpha = alpha.unwrap_or_else(|| {
                let l = lambda_max(&s.laplacian());
                if l > 0.0 {
                    1.0 / l
                } else {
                    0.5
                }
            });
            let cfg = DiffusionConfig64::new(alpha, max_iters, tol).with_delay(delay, seed);
            let result =
                diffuse(&s, &x0, &cfg).map_err(|e| anyhow::Error::from(Invalid(e.to_string())))?;
            if csv {
                writeln!(out, "iteration,energy")?;
                for (k, e) in result.report.dirichlet_trace.iter().enumerate() {
                    writeln!(out, "{k},{e:e}")?;
                }
            } else {
                writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
            }
        }
        Command::Spectrum { sheaf } => {
            let s = load_sheaf(&sheaf)?.sheaf;
            let report = spectrum(&s)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::Validate { scenario } => {
            let sc = Scenario::from_json(&read(&scenario)?).map_err(|e| Invalid(e.to_string()))?;
            let diags = validate_scenario(&sc);
            if diags.is_empty() {
                writeln!(out, "ok")?;
            } else {
                for d in &diags {
                    writeln!(out, "{d}")?;
                }
                return Err(Invalid(format!("{} problem(s)", diags.len())).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let result = run(cli.command, &mut out);
    // a closed pipe (`stp run ... | head`) is not an error
    let _ = io::stdout().lock().write_all(out.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Invalid>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
