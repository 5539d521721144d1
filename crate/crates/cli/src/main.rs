mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdi_core::certify::{self, TripartiteTarget};
use mdi_core::conic::{SolveStatus, Verdict};
use mdi_core::exec::{self, Execution};
use mdi_core::quantify::{self, NoiseSet, Quantity};
use mdi_core::randomness;
use mdi_core::relax::RelaxationLevel;
use mdi_core::scenario::{self, Behaviour};
use mdi_core::{Error, Result};

/// Measurement-device-independent entanglement and randomness certification.
///
/// Worker threads for sweeps and simulation default to the number of cores;
/// set MDI_WORKERS to override.
#[derive(Parser)]
#[command(name = "mdi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the behaviour of a state measured on trusted quantum inputs.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide whether a behaviour admits a relaxed-separable explanation.
    Certify {
        #[arg(value_enum)]
        mode: CertifyMode,
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "ppt", value_parser = parse_relaxation)]
        relaxation: RelaxationLevel,
        /// Write witness coefficients here when the bipartite test is infeasible.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// MDI robustness (lower bound on the state robustness).
    Robustness {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "generalized")]
        noise: NoiseSet,
        #[arg(long, default_value = "ppt", value_parser = parse_relaxation)]
        relaxation: RelaxationLevel,
        /// Separability notion for three-party behaviours.
        #[arg(long, value_enum, default_value = "full-sep")]
        target: TargetArg,
    },
    /// MDI lower bound on the negativity.
    Negativity {
        #[command(flatten)]
        source: Source,
    },
    /// Eavesdropper guessing probability and min-entropy.
    Randomness {
        #[arg(value_enum)]
        mode: RandomnessMode,
        #[command(flatten)]
        source: Source,
        /// Target input per party, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0,0")]
        targets: Vec<usize>,
    },
    /// Werner-family sweep written as CSV.
    SweepWerner {
        #[arg(long, default_value = "tetra")]
        ensemble: String,
        /// Number of equally spaced points on [0, 1].
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "guessing")]
        quantity: QuantityArg,
        /// Noise set for robustness sweeps.
        #[arg(long, default_value = "generalized")]
        noise: NoiseSet,
        #[arg(long, default_value = "ppt", value_parser = parse_relaxation)]
        relaxation: RelaxationLevel,
        /// Target inputs for guessing sweeps.
        #[arg(long, value_delimiter = ',', default_value = "0,0")]
        targets: Vec<usize>,
    },
}

/// Either a behaviour file or a state measured on input ensembles. Every party
/// gets the same measurement and ensemble.
#[derive(Args)]
struct Source {
    /// Behaviour JSON file.
    #[arg(long, alias = "behaviour", conflicts_with_all = ["state", "w"])]
    behavior: Option<PathBuf>,
    /// werner, ghz, phi-plus, mixed, mixed3, none (single box) or a state JSON file.
    #[arg(long)]
    state: Option<String>,
    /// Werner weight.
    #[arg(long)]
    w: Option<f64>,
    /// bsm, tetra-povm, computational or a POVM JSON file.
    #[arg(long, default_value = "bsm")]
    measurement: String,
    /// tomo4, tetra or an ensemble JSON file.
    #[arg(long, default_value = "tomo4")]
    ensemble: String,
}

impl Source {
    fn load(&self) -> Result<Behaviour> {
        if let Some(path) = &self.behavior {
            return specs::behaviour_file(path);
        }
        let Some(name) = &self.state else {
            return Err(Error::Unsupported("give either --behavior or --state".into()));
        };
        let state = specs::state(name, self.w)?;
        let povm = specs::measurement(&self.measurement)?;
        let ens = specs::ensemble(&self.ensemble)?;
        let parties = state.factors().len();
        let povms = vec![&povm; parties];
        scenario::simulate(&state, &povms, &vec![ens; parties])
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CertifyMode {
    Bipartite,
    TripartiteFull,
    TripartiteBisep,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    FullSep,
    Bisep,
}

#[derive(Clone, Copy, ValueEnum)]
enum RandomnessMode {
    Single,
    Bipartite,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantityArg {
    Guessing,
    Robustness,
    Negativity,
}

fn parse_relaxation(s: &str) -> std::result::Result<RelaxationLevel, String> {
    match s {
        "ppt" => Ok(RelaxationLevel::Ppt),
        _ => {
            let (k, with_ppt) = match s.strip_suffix("+ppt") {
                Some(rest) => (rest, true),
                None => (s, false),
            };
            let k = k
                .strip_prefix("symext")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| format!("unknown relaxation {s:?}; expected ppt, symextK or symextK+ppt"))?;
            RelaxationLevel::sym_ext(k, with_ppt).map_err(|e| e.to_string())
        }
    }
}

/// Whether the solver reached a definite answer.
enum Outcome {
    Done,
    Indeterminate,
}

impl Outcome {
    fn from_status(s: SolveStatus) -> Self {
        if s == SolveStatus::Indeterminate {
            Outcome::Indeterminate
        } else {
            Outcome::Done
        }
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(std::fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Shortest round-trip form; scientific notation for small magnitudes.
fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::InfeasibleCertified => "infeasible",
        SolveStatus::Indeterminate => "indeterminate",
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { source, out } => {
            let mut text = source.load()?.to_json();
            text.push('\n');
            emit(out.as_ref(), &text)?;
            Ok(Outcome::Done)
        }
        Command::Certify { mode, source, relaxation, witness } => {
            let b = source.load()?;
            let res = match mode {
                CertifyMode::Bipartite => certify::certify_bipartite(&b, relaxation)?,
                CertifyMode::TripartiteFull => certify::certify_tripartite_full(&b, relaxation)?,
                CertifyMode::TripartiteBisep => certify::certify_tripartite_bisep(&b, relaxation)?,
            };
            let verdict = match res.verdict {
                Verdict::Feasible => "feasible",
                Verdict::Infeasible => "infeasible",
                Verdict::Indeterminate => "indeterminate",
            };
            println!("verdict: {verdict}");
            println!("margin: {}", num(res.margin));
            println!("relaxation: {}", relaxation.label());
            if let Some(path) = witness {
                if !matches!(mode, CertifyMode::Bipartite) {
                    return Err(Error::Unsupported("witnesses are extracted for bipartite behaviours only".into()));
                }
                if res.verdict == Verdict::Infeasible {
                    std::fs::write(&path, certify::extract_witness(&b, relaxation)?.to_json())?;
                    println!("witness: {}", path.display());
                } else {
                    println!("witness: none (not infeasible)");
                }
            }
            Ok(match res.verdict {
                Verdict::Indeterminate => Outcome::Indeterminate,
                _ => Outcome::Done,
            })
        }
        Command::Robustness { source, noise, relaxation, target } => {
            let b = source.load()?;
            let res = if b.parties() == 3 {
                let t = match target {
                    TargetArg::FullSep => TripartiteTarget::FullSeparability,
                    TargetArg::Bisep => TripartiteTarget::Biseparability,
                };
                quantify::mdi_robustness_tripartite(&b, t, noise, relaxation)?
            } else {
                quantify::mdi_robustness(&b, noise, relaxation)?
            };
            println!("robustness: {}", num(res.value));
            println!("noise: {}", noise.label());
            if res.outer_bound {
                println!("note: white noise replaced by separable noise; the value bounds random robustness from below");
            }
            println!("status: {}", status_name(res.status));
            Ok(Outcome::from_status(res.status))
        }
        Command::Negativity { source } => {
            let res = quantify::mdi_negativity(&source.load()?)?;
            println!("negativity: {}", num(res.value));
            println!("status: {}", status_name(res.status));
            Ok(Outcome::from_status(res.status))
        }
        Command::Randomness { mode, source, targets } => {
            let b = source.load()?;
            let res = match mode {
                RandomnessMode::Single => randomness::single_box_guessing(&b, targets[0])?,
                RandomnessMode::Bipartite => {
                    let &[x, y] = targets.as_slice() else {
                        return Err(Error::Unsupported("bipartite randomness needs two targets".into()));
                    };
                    randomness::bipartite_guessing(&b, x, y)?
                }
            };
            println!("guessing_probability: {}", num(res.guessing_probability));
            println!("min_entropy_bits: {}", num(res.min_entropy_bits));
            println!("status: {}", status_name(res.status));
            Ok(Outcome::from_status(res.status))
        }
        Command::SweepWerner { ensemble, grid, out, quantity, noise, relaxation, targets } => {
            if grid < 2 {
                return Err(Error::Unsupported("--grid needs at least 2 points".into()));
            }
            let ens = specs::ensemble(&ensemble)?;
            let ws: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
            let (csv, statuses): (String, Vec<String>) = match quantity {
                QuantityArg::Guessing => {
                    let &[x, y] = targets.as_slice() else {
                        return Err(Error::Unsupported("guessing sweeps need two targets".into()));
                    };
                    let pts = randomness::werner_sweep(&ws, &ens, (x, y), Execution::Parallel);
                    (randomness::sweep_csv(&pts), pts.into_iter().map(|p| p.status).collect())
                }
                QuantityArg::Robustness | QuantityArg::Negativity => {
                    let q = match quantity {
                        QuantityArg::Negativity => Quantity::Negativity,
                        _ => Quantity::Robustness(noise),
                    };
                    let pts = quantify::werner_quantity_sweep(q, &ens, &ws, relaxation, Execution::Parallel);
                    (quantify::quantity_sweep_csv(&pts), pts.into_iter().map(|p| p.status).collect())
                }
            };
            emit(out.as_ref(), &csv)?;
            Ok(if statuses.iter().all(|s| s == "optimal") { Outcome::Done } else { Outcome::Indeterminate })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("MDI_WORKERS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                exec::set_workers(n);
            }
            _ => {
                eprintln!("error: MDI_WORKERS must be a positive integer, got {v:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Indeterminate) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Solver(_)) { 2 } else { 1 })
        }
    }
}
