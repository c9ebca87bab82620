//! Monte Carlo harness: output-SNR sweeps, per-pair spectra, resolution
//! sweeps and RMSE curves.
//!
//! Every trial is keyed by `(seed, trial)`; noise comes from the scene's
//! trial stream and random target phases from a separate stream, so a trial
//! reproduces bit for bit regardless of scheduling.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::io::{EstimateRecord, PipelineSection, SceneFile};
use crate::pipeline::{AlgorithmId, Pipeline, PipelineOutput};
use crate::ptft::output_snr_gain;
use crate::signal::{synthesize_trial, trial_rng, Scene};

/// Key mixed into the seed for the target-phase stream.
const PHASE_STREAM_KEY: u64 = 0x5eed_0f_a5e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SnrGain,
    Spectra,
    Estimate,
    ResolutionSweep,
    McRmse,
}

fn default_trials() -> usize {
    100
}

fn yes() -> bool {
    true
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scene: SceneFile,
    #[serde(default)]
    pub pipeline: PipelineSection,
    /// Monte Carlo trials `I`.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Input SNR axis in dB (snr-gain, mc-rmse).
    #[serde(default)]
    pub snr_db: Vec<f64>,
    /// Second-target angle axis in degrees (resolution-sweep).
    #[serde(default)]
    pub theta2: Vec<f64>,
    /// Window width axis in Hz (snr-gain).
    #[serde(default)]
    pub sigma: Vec<f64>,
    /// Algorithms to run; a kind-specific default when empty.
    #[serde(default)]
    pub algorithms: Vec<AlgorithmId>,
    /// Draw every target's phase uniformly per trial.
    #[serde(default = "yes")]
    pub random_phase: bool,
    /// Where the CLI writes results when no `--out` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| DoaError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DoaError::Config(msg));
        let scene = self.scene.build()?;
        self.pipeline.config(&scene, scene.num_targets())?;
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.snr_db) && finite(&self.theta2) && finite(&self.sigma)) {
            return fail("sweep values must be finite".into());
        }
        match self.kind {
            ExperimentKind::SnrGain => {
                if self.snr_db.is_empty() || self.sigma.is_empty() {
                    return fail("snr-gain needs nonempty snr_db and sigma axes".into());
                }
                if self.sigma.iter().any(|&s| s <= 0.0) {
                    return fail("sigma values must be positive".into());
                }
            }
            ExperimentKind::McRmse => {
                if self.snr_db.is_empty() {
                    return fail("mc-rmse needs a nonempty snr_db axis".into());
                }
            }
            ExperimentKind::ResolutionSweep => {
                if self.theta2.is_empty() {
                    return fail("resolution-sweep needs a nonempty theta2 axis".into());
                }
                if self.scene.targets.len() != 2 {
                    return fail("resolution-sweep needs a two-target scene".into());
                }
                if self.theta2.iter().any(|t| t.abs() > 90.0) {
                    return fail("theta2 values must lie in [-90, 90]".into());
                }
            }
            ExperimentKind::Spectra | ExperimentKind::Estimate => {}
        }
        Ok(())
    }

    /// Algorithms to run, falling back to the kind's default set.
    pub fn algorithm_list(&self) -> Vec<AlgorithmId> {
        if !self.algorithms.is_empty() {
            return self.algorithms.clone();
        }
        match self.kind {
            ExperimentKind::ResolutionSweep => vec![
                AlgorithmId::FftFdcbf,
                AlgorithmId::FftFdmusic,
                AlgorithmId::FftCfd,
                AlgorithmId::PtftHscfd,
            ],
            ExperimentKind::Spectra => vec![AlgorithmId::FftCfd, AlgorithmId::PtftHscfd],
            _ => AlgorithmId::ALL.to_vec(),
        }
    }

    fn pipeline_for(&self, scene: &Scene, diagnostics: bool) -> Result<Pipeline> {
        let mut cfg = self.pipeline.config(scene, scene.num_targets())?;
        cfg.diagnostics = diagnostics;
        Pipeline::new(cfg)
    }
}

/// Copy of `base` for one trial, with target phases redrawn when asked.
pub fn trial_scene(base: &Scene, trial: u64, random_phase: bool) -> Scene {
    let mut scene = base.clone();
    if random_phase {
        let mut rng = trial_rng(base.seed ^ PHASE_STREAM_KEY, trial);
        for t in &mut scene.targets {
            let phase = rng.random_range(0.0..2.0 * PI);
            t.amplitude = num_complex::Complex64::from_polar(t.amplitude.norm(), phase);
        }
    }
    scene
}

/// `√(1/(IK) ΣΣ (θ − θ̂)²)` with each trial's truth and estimates matched in
/// ascending order.
pub fn rmse(truth: &[Vec<f64>], estimates: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != estimates.len() || truth.is_empty() {
        return Err(DoaError::Parameter(format!(
            "truth has {} trials, estimates {}",
            truth.len(),
            estimates.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, e) in truth.iter().zip(estimates) {
        if t.len() != e.len() || t.is_empty() {
            return Err(DoaError::Parameter(format!(
                "trial has {} true angles and {} estimates",
                t.len(),
                e.len()
            )));
        }
        let mut t = t.clone();
        let mut e = e.clone();
        t.sort_by(f64::total_cmp);
        e.sort_by(f64::total_cmp);
        sum += t.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += t.len();
    }
    Ok((sum / count as f64).sqrt())
}

/// RMSE of an estimator that snaps every angle to a grid of spacing `step`,
/// for truths spread uniformly over a cell: `step/(2√3)`.
pub fn quantization_floor(step: f64) -> f64 {
    step / (2.0 * 3f64.sqrt())
}

/// One `(SNR, algorithm)` point of an RMSE curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub seed: u64,
    pub trials: usize,
    pub algorithm: AlgorithmId,
    pub snr_db: f64,
    /// Over complete trials only; empty when every trial failed.
    pub rmse_deg: Option<f64>,
    /// Trials returning fewer than `K` estimates.
    pub failures: usize,
    pub mean_unconverged: f64,
    pub quantization_floor_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub rows: Vec<RmseRow>,
    pub quantization_floor: f64,
}

impl RmseReport {
    pub fn rmse(&self, alg: AlgorithmId, snr_db: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.algorithm == alg && r.snr_db == snr_db)
            .and_then(|r| r.rmse_deg)
    }
}

/// Per-trial outputs of `algorithms` over a set of scenes, trial-major.
fn run_trials(
    spec: &ExperimentSpec,
    scenes: &[Scene],
    algorithms: &[AlgorithmId],
) -> Result<Vec<Vec<Vec<PipelineOutput>>>> {
    let pipeline = spec.pipeline_for(&scenes[0], false)?;
    let jobs: Vec<(usize, u64)> = (0..scenes.len())
        .flat_map(|s| (0..spec.trials as u64).map(move |t| (s, t)))
        .collect();
    let outs = jobs
        .par_iter()
        .map(|&(s, t)| {
            let scene = trial_scene(&scenes[s], t, spec.random_phase);
            let rec = synthesize_trial(&scene, t)?;
            pipeline.run_many(algorithms, &rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grouped: Vec<Vec<Vec<PipelineOutput>>> = vec![Vec::new(); scenes.len()];
    for ((s, _), o) in jobs.into_iter().zip(outs) {
        grouped[s].push(o);
    }
    Ok(grouped)
}

/// RMSE versus input SNR for every requested algorithm.
pub fn cmd_mc_rmse(spec: &ExperimentSpec) -> Result<RmseReport> {
    spec.validate()?;
    let base = spec.scene.build()?;
    let algorithms = spec.algorithm_list();
    let scenes = spec
        .snr_db
        .iter()
        .map(|&snr| base.with_snr(snr))
        .collect::<Result<Vec<_>>>()?;
    let results = run_trials(spec, &scenes, &algorithms)?;
    let truth = base.sorted_angles();
    let k = truth.len();
    let floor = quantization_floor(spec.pipeline.grid_step);
    let mut rows = Vec::new();
    for (&snr, per_trial) in spec.snr_db.iter().zip(&results) {
        for (a, &alg) in algorithms.iter().enumerate() {
            let outs: Vec<&PipelineOutput> = per_trial.iter().map(|o| &o[a]).collect();
            let complete: Vec<Vec<f64>> = outs
                .iter()
                .filter(|o| o.is_complete(k))
                .map(|o| o.theta_deg.clone())
                .collect();
            let rmse_deg = if complete.is_empty() {
                None
            } else {
                Some(rmse(&vec![truth.clone(); complete.len()], &complete)?)
            };
            rows.push(RmseRow {
                seed: base.seed,
                trials: spec.trials,
                algorithm: alg,
                snr_db: snr,
                rmse_deg,
                failures: outs.len() - complete.len(),
                mean_unconverged: outs.iter().map(|o| o.unconverged_solves as f64).sum::<f64>()
                    / outs.len() as f64,
                quantization_floor_deg: floor,
            });
        }
    }
    Ok(RmseReport {
        rows,
        quantization_floor: floor,
    })
}

/// Median estimates at one `θ2` of a resolution sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionRow {
    pub seed: u64,
    pub trials: usize,
    pub algorithm: AlgorithmId,
    pub theta1: f64,
    pub theta2: f64,
    pub theta_hat1: Option<f64>,
    pub theta_hat2: Option<f64>,
    pub failures: usize,
    /// Both medians within 1° of their targets, targets distinct.
    pub resolved: bool,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Resolution tolerance in degrees.
pub const RESOLVE_TOL_DEG: f64 = 1.0;

/// Sweeps the second target's angle with the first held fixed.
pub fn cmd_resolution_sweep(spec: &ExperimentSpec) -> Result<Vec<ResolutionRow>> {
    spec.validate()?;
    let base = spec.scene.build()?;
    let theta1 = base.targets[0].theta_deg;
    let algorithms = spec.algorithm_list();
    let scenes: Vec<Scene> = spec
        .theta2
        .iter()
        .map(|&t2| {
            let mut s = base.clone();
            s.targets[1].theta_deg = t2;
            s
        })
        .collect();
    let results = run_trials(spec, &scenes, &algorithms)?;
    let mut rows = Vec::new();
    for (&theta2, per_trial) in spec.theta2.iter().zip(&results) {
        let mut truth = [theta1, theta2];
        truth.sort_by(f64::total_cmp);
        for (a, &alg) in algorithms.iter().enumerate() {
            let complete: Vec<&Vec<f64>> = per_trial
                .iter()
                .map(|o| &o[a].theta_deg)
                .filter(|t| t.len() == 2)
                .collect();
            let hat1 = median(complete.iter().map(|t| t[0]).collect());
            let hat2 = median(complete.iter().map(|t| t[1]).collect());
            let resolved = match (hat1, hat2) {
                (Some(h1), Some(h2)) => {
                    (theta2 - theta1).abs() >= spec.pipeline.grid_step - 1e-9
                        && (h1 - truth[0]).abs() <= RESOLVE_TOL_DEG
                        && (h2 - truth[1]).abs() <= RESOLVE_TOL_DEG
                }
                _ => false,
            };
            rows.push(ResolutionRow {
                seed: base.seed,
                trials: spec.trials,
                algorithm: alg,
                theta1,
                theta2,
                theta_hat1: hat1,
                theta_hat2: hat2,
                failures: spec.trials - complete.len(),
                resolved,
            });
        }
    }
    Ok(rows)
}

/// Smallest swept `θ2` that `alg` resolves.
pub fn minimum_resolvable(rows: &[ResolutionRow], alg: AlgorithmId) -> Option<f64> {
    rows.iter()
        .filter(|r| r.algorithm == alg && r.resolved)
        .map(|r| r.theta2)
        .min_by(f64::total_cmp)
}

/// Output SNR of one sensor at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrGainRow {
    pub seed: u64,
    pub trials: usize,
    pub input_snr_db: f64,
    pub sigma: f64,
    pub sensor: usize,
    pub snr_fft_db: f64,
    pub snr_ptft_db: f64,
}

pub fn cmd_snr_gain(spec: &ExperimentSpec) -> Result<Vec<SnrGainRow>> {
    spec.validate()?;
    let base = spec.scene.build()?;
    let points: Vec<(f64, f64)> = spec
        .snr_db
        .iter()
        .flat_map(|&snr| spec.sigma.iter().map(move |&sigma| (snr, sigma)))
        .collect();
    let per_point = points
        .par_iter()
        .map(|&(snr, sigma)| {
            let scene = base.with_snr(snr)?;
            let mut cfg = spec.pipeline.ptft;
            cfg.sigma = sigma;
            output_snr_gain(&scene, &cfg, spec.trials)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(points
        .iter()
        .zip(per_point)
        .flat_map(|(&(snr, sigma), sensors)| {
            sensors.into_iter().map(move |s| SnrGainRow {
                seed: base.seed,
                trials: spec.trials,
                input_snr_db: snr,
                sigma,
                sensor: s.sensor,
                snr_fft_db: s.snr_fft_db,
                snr_ptft_db: s.snr_ptft_db,
            })
        })
        .collect())
}

/// One spectrum sample. `pair` is empty for the incoherent average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub seed: u64,
    pub trial: u64,
    pub algorithm: String,
    pub pair: Option<usize>,
    pub f_lo: Option<f64>,
    pub theta_deg: f64,
    pub value: f64,
}

/// Per-pair CFD spectra (and their incoherent average) from the FFT and
/// PTFT snapshot sources, for one trial of the scene.
pub fn cmd_spectra(spec: &ExperimentSpec) -> Result<Vec<SpectrumRow>> {
    spec.validate()?;
    let base = spec.scene.build()?;
    let scene = trial_scene(&base, 0, spec.random_phase);
    let rec = synthesize_trial(&scene, 0)?;
    let pipeline = spec.pipeline_for(&scene, true)?;
    let centers = pipeline.config().ptft.centers(&pipeline.config().pulse);
    let mut rows = Vec::new();
    for alg in [AlgorithmId::FftCfd, AlgorithmId::PtftHscfd] {
        let label = match alg {
            AlgorithmId::FftCfd => "fft-cfd",
            _ => "ptft-cfd",
        };
        let out = pipeline.run(alg, &rec)?;
        let diag = out
            .diagnostics
            .ok_or_else(|| DoaError::Internal("diagnostics missing".into()))?;
        for (w, s) in diag.spectra.iter().enumerate() {
            for (theta, v) in s.grid.iter().zip(&s.values) {
                rows.push(SpectrumRow {
                    seed: base.seed,
                    trial: 0,
                    algorithm: label.to_string(),
                    pair: Some(w),
                    f_lo: centers.get(w).copied(),
                    theta_deg: *theta,
                    value: *v,
                });
            }
        }
        let avg = crate::estimators::incoherent_average(&diag.spectra)?;
        for (theta, v) in avg.grid.iter().zip(&avg.values) {
            rows.push(SpectrumRow {
                seed: base.seed,
                trial: 0,
                algorithm: label.to_string(),
                pair: None,
                f_lo: None,
                theta_deg: *theta,
                value: *v,
            });
        }
    }
    Ok(rows)
}

/// Runs the requested algorithms once on the scene as written (trial 0,
/// phases from the file).
pub fn cmd_estimate(scene_file: &SceneFile, section: &PipelineSection, algorithms: &[AlgorithmId]) -> Result<Vec<EstimateRecord>> {
    let scene = scene_file.build()?;
    let pipeline = Pipeline::new(section.config(&scene, scene.num_targets())?)?;
    let rec = synthesize_trial(&scene, 0)?;
    estimate_record(&pipeline, &rec, algorithms, scene.seed)
}

/// Runs `algorithms` on a given record.
pub fn estimate_record(
    pipeline: &Pipeline,
    rec: &crate::signal::SampledWaveforms,
    algorithms: &[AlgorithmId],
    seed: u64,
) -> Result<Vec<EstimateRecord>> {
    Ok(pipeline
        .run_many(algorithms, rec)?
        .iter()
        .map(|o| EstimateRecord::from_output(o, seed))
        .collect())
}
