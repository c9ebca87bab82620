//! `doa`: simulate array records, estimate arrival angles and run the Monte
//! Carlo experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use doa_core::experiments::{
    cmd_estimate, cmd_mc_rmse, cmd_resolution_sweep, cmd_snr_gain, cmd_spectra, estimate_record,
    ExperimentKind, ExperimentSpec,
};
use doa_core::io::{csv_string, read_waveforms, write_waveforms, EstimateRecord, PipelineSection, SceneFile};
use doa_core::pipeline::{AlgorithmId, Pipeline};
use doa_core::signal::synthesize_trial;
use doa_core::DoaError;

#[derive(Debug, Parser)]
#[command(name = "doa", version, about = "Ambiguity-free broadband DOA estimation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the timestamp line from CSV output.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize one received array record.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Monte Carlo trial index selecting the noise realization.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Estimate arrival angles for a scene or a recorded waveform.
    Estimate {
        #[arg(long)]
        scene: PathBuf,
        /// Algorithm(s) to run; repeat for several.
        #[arg(long = "algo", default_value = "ptft-hscfd")]
        algo: Vec<AlgorithmId>,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Waveform file to process instead of simulating the scene.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Pipeline settings (TOML); defaults otherwise.
        #[arg(long)]
        pipeline: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// RMSE versus input SNR.
    McRmse(SpecArgs),
    /// Output SNR of DFT bins and transform ridge samples.
    SnrGain(SpecArgs),
    /// Median estimates over a sweep of the second target's angle.
    Resolution(SpecArgs),
    /// Per-pair CFD spectra from both snapshot sources.
    Spectra(SpecArgs),
}

#[derive(Debug, Args)]
struct SpecArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &DoaError) -> u8 {
    match e {
        DoaError::Numeric(_) | DoaError::Internal(_) => 3,
        DoaError::Parameter(_) | DoaError::Config(_) | DoaError::Io(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), DoaError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn header(cli: &Cli, kind: &str) -> Option<String> {
    if cli.deterministic {
        return None;
    }
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(format!("doa {} {kind}, generated at unix time {secs}", env!("CARGO_PKG_VERSION")))
}

fn write_csv<T: Serialize>(cli: &Cli, spec: &ExperimentSpec, out: &Option<PathBuf>, kind: &str, rows: &[T]) -> Result<(), DoaError> {
    let text = csv_string(rows, header(cli, kind).as_deref())?;
    emit(out.as_deref().or(spec.output.as_deref()), &text)
}

fn load_spec(args: &SpecArgs, expected: ExperimentKind) -> Result<ExperimentSpec, DoaError> {
    let spec = ExperimentSpec::load(&args.spec)?;
    if spec.kind != expected {
        return Err(DoaError::Config(format!(
            "spec kind is {:?}, this command runs {:?}",
            spec.kind, expected
        )));
    }
    Ok(spec)
}

fn run(cli: &Cli) -> Result<(), DoaError> {
    match &cli.command {
        Command::Synth { scene, out, trial } => {
            let scene = SceneFile::load(scene)?.build()?;
            write_waveforms(out, &synthesize_trial(&scene, *trial)?)
        }
        Command::Estimate {
            scene,
            algo,
            seed,
            input,
            pipeline,
            out,
        } => {
            let mut file = SceneFile::load(scene)?;
            if let Some(s) = seed {
                file.seed = *s;
            }
            let section = match pipeline {
                Some(p) => toml::from_str::<PipelineSection>(&std::fs::read_to_string(p)?)
                    .map_err(|e| DoaError::Config(e.to_string()))?,
                None => PipelineSection::default(),
            };
            let records: Vec<EstimateRecord> = match input {
                Some(path) => {
                    let scene = file.build()?;
                    let pipe = Pipeline::new(section.config(&scene, scene.num_targets())?)?;
                    estimate_record(&pipe, &read_waveforms(path)?, algo, scene.seed)?
                }
                None => cmd_estimate(&file, &section, algo)?,
            };
            let json = if records.len() == 1 {
                records[0].to_json()?
            } else {
                serde_json::to_string_pretty(&records).map_err(|e| DoaError::Internal(e.to_string()))?
            };
            emit(out.as_deref(), &(json + "\n"))
        }
        Command::McRmse(args) => {
            let spec = load_spec(args, ExperimentKind::McRmse)?;
            let report = cmd_mc_rmse(&spec)?;
            write_csv(cli, &spec, &args.out, "mc-rmse", &report.rows)
        }
        Command::SnrGain(args) => {
            let spec = load_spec(args, ExperimentKind::SnrGain)?;
            write_csv(cli, &spec, &args.out, "snr-gain", &cmd_snr_gain(&spec)?)
        }
        Command::Resolution(args) => {
            let spec = load_spec(args, ExperimentKind::ResolutionSweep)?;
            write_csv(cli, &spec, &args.out, "resolution", &cmd_resolution_sweep(&spec)?)
        }
        Command::Spectra(args) => {
            let spec = load_spec(args, ExperimentKind::Spectra)?;
            write_csv(cli, &spec, &args.out, "spectra", &cmd_spectra(&spec)?)
        }
    }
}
