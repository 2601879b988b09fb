//! Command-line front end: reads a JSON config, runs one experiment and
//! writes `report.json` plus CSV records.
//!
//! Exit codes: 0 when the run meets its tolerance, 1 when it does not,
//! 2 for configuration, argument or I/O errors.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entropy_gain::experiments::{self as ex, ExperimentReport, Settings};
use entropy_gain::TransferFunction;
use serde_json::{json, Value};

use config::{ConfigError, RunConfig, Unit};
use output::{spectrum_csv, summary, Artifacts};

#[derive(Parser)]
#[command(name = "entropy-gain", version, about = "Entropy-gain experiments for LTI filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<experiment>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Unit for the stdout summary; files are always in nats.
    #[arg(long, global = true, value_enum)]
    unit: Option<Unit>,
}

#[derive(Subcommand)]
enum Command {
    Disturbance,
    InputDisturbance,
    InitialState,
    EffectiveGain,
    RdfGap,
    NetworkedMi,
    FeedbackCollapse,
    Quantized,
    Spectrum,
    Jensen(JensenArgs),
    Probe,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Disturbance => "disturbance",
            Command::InputDisturbance => "input-disturbance",
            Command::InitialState => "initial-state",
            Command::EffectiveGain => "effective-gain",
            Command::RdfGap => "rdf-gap",
            Command::NetworkedMi => "networked-mi",
            Command::FeedbackCollapse => "feedback-collapse",
            Command::Quantized => "quantized",
            Command::Spectrum => "spectrum",
            Command::Jensen(_) => "jensen",
            Command::Probe => "probe",
        }
    }
}

/// Filter given by real roots on the command line; overrides `params.filter`.
#[derive(Args)]
struct JensenArgs {
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    zeros: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    poles: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gain: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

struct Outcome {
    artifacts: Artifacts,
    lines: Vec<(String, ExperimentReport)>,
}

impl Outcome {
    fn pass(&self) -> bool {
        self.lines.iter().all(|(_, r)| r.pass)
    }
}

fn single(label: &str, report: ExperimentReport) -> Result<Outcome, ConfigError> {
    let mut artifacts = Artifacts::new();
    artifacts.json("report.json", &report)?;
    artifacts.records("records.csv", &report.records)?;
    Ok(Outcome {
        artifacts,
        lines: vec![(label.to_string(), report)],
    })
}

fn run(cmd: &Command, cfg: &RunConfig, settings: &Settings) -> Result<Outcome, ConfigError> {
    let name = cmd.name();
    match cmd {
        Command::Disturbance => single(name, ex::run_disturbance(&cfg.params()?, settings)?),
        Command::InputDisturbance => single(name, ex::run_input_disturbance(&cfg.params()?, settings)?),
        Command::InitialState => single(name, ex::run_initial_state(&cfg.params()?, settings)?),
        Command::EffectiveGain => single(name, ex::run_effective_gain(&cfg.params()?, settings)?),
        Command::RdfGap => single(name, ex::run_rdf_gap(&cfg.params()?, settings)?),
        Command::NetworkedMi => single(name, ex::run_networked_mi(&cfg.params()?, settings)?),
        Command::Quantized => single(name, ex::run_quantized_discrepancy(&cfg.params()?, settings)?),
        Command::Probe => single(name, ex::run_probe(&cfg.params()?, settings)?),
        Command::Jensen(args) => {
            let mut p: ex::JensenParams = cfg.params()?;
            if !args.zeros.is_empty() || !args.poles.is_empty() || args.gain.is_some() {
                let mut poles = args.poles.clone();
                poles.resize(poles.len().max(args.zeros.len()), 0.0);
                p.filter = TransferFunction::from_real(&args.zeros, &poles, args.gain.unwrap_or(1.0))?;
            }
            if let Some(points) = args.points {
                p.points = points;
            }
            single(name, ex::run_jensen(&p, settings)?)
        }
        Command::Spectrum => {
            let out = ex::run_spectrum(&cfg.params()?, settings)?;
            let mut report = serde_json::to_value(&out.report)?;
            if let Value::Object(m) = &mut report {
                m.insert("decay_fit".into(), serde_json::to_value(&out.fit)?);
            }
            let mut artifacts = Artifacts::new();
            artifacts.json("report.json", &report)?;
            artifacts.records("records.csv", &out.report.records)?;
            artifacts.files.push(("spectrum.csv", spectrum_csv(&out.spectra)?));
            Ok(Outcome {
                artifacts,
                lines: vec![(name.to_string(), out.report)],
            })
        }
        Command::FeedbackCollapse => {
            let out = ex::run_feedback_collapse(&cfg.params()?, settings)?;
            let report = json!({
                "experiment": "feedback_collapse",
                "pass": out.pass(),
                "no_disturbance": out.clean,
                "with_disturbance": out.disturbed,
            });
            let mut artifacts = Artifacts::new();
            artifacts.json("report.json", &report)?;
            artifacts.records("records.csv", &out.disturbed.records)?;
            artifacts.records("records_no_disturbance.csv", &out.clean.records)?;
            Ok(Outcome {
                artifacts,
                lines: vec![
                    (format!("{name} (no disturbance)"), out.clean),
                    (format!("{name} (with disturbance)"), out.disturbed),
                ],
            })
        }
    }
}

fn main_inner(cli: Cli) -> Result<bool, ConfigError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let name = cli.command.name();
    if let Some(e) = &cfg.experiment {
        if e.replace('_', "-") != name {
            return Err(ConfigError(format!("config is for experiment {e:?}, not {name:?}")));
        }
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(ConfigError("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    let settings = Settings {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        n_grid: cfg.n_grid.clone(),
        tolerance: cfg.tolerance,
    };
    let unit = cli.unit.or(cfg.unit).unwrap_or_default();
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(name));

    let outcome = run(&cli.command, &cfg, &settings)?;
    outcome.artifacts.write(&out_dir)?;
    for (label, r) in &outcome.lines {
        println!("{}", summary(label, r, unit.scale(), unit.label()));
    }
    Ok(outcome.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENTROPY_GAIN_LOG", "warn")).init();
    match main_inner(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
