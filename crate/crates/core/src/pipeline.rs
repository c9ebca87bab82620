//! End-to-end algorithms: FFT and PTFT snapshot sources feeding FD-CBF,
//! FD-MUSIC, CFD and the histogram scheme.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, DoaError, Result};
use crate::estimators::{
    cbf_spectrum, cfd_spectrum, extract_peaks, incoherent_average, music_spectrum, DoaSpectrum,
    PeakCollection,
};
use crate::fd::{angle_grid, fd_snapshot, sensing_matrix, FdSnapshot, SensingMatrix};
use crate::histogram::{estimate_doas, EstimationResult, DEFAULT_ZETA};
use crate::ptft::{snapshots_from_spectra, PtftConfig, Ridge};
use crate::signal::{self, ArrayGeometry, LfmPulse, SampledWaveforms, SpectrumMatrix};
use crate::solver::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmId {
    FftFdcbf,
    FftFdmusic,
    FftCfd,
    PtftFdcbf,
    PtftFdmusic,
    PtftHscfd,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 6] = [
        Self::FftFdcbf,
        Self::FftFdmusic,
        Self::FftCfd,
        Self::PtftFdcbf,
        Self::PtftFdmusic,
        Self::PtftHscfd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FftFdcbf => "fft-fdcbf",
            Self::FftFdmusic => "fft-fdmusic",
            Self::FftCfd => "fft-cfd",
            Self::PtftFdcbf => "ptft-fdcbf",
            Self::PtftFdmusic => "ptft-fdmusic",
            Self::PtftHscfd => "ptft-hscfd",
        }
    }

    pub fn source(self) -> SnapshotSource {
        match self {
            Self::FftFdcbf | Self::FftFdmusic | Self::FftCfd => SnapshotSource::Fft,
            _ => SnapshotSource::Ptft,
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| DoaError::Config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SnapshotSource {
    Fft,
    Ptft,
}

/// Everything an algorithm needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub geometry: ArrayGeometry,
    pub pulse: LfmPulse,
    pub ptft: PtftConfig,
    pub solver: SolverSettings,
    pub zeta: f64,
    /// Number of targets `K`.
    pub targets: usize,
    /// Angle grid step in degrees.
    pub grid_step: f64,
    /// FD-MUSIC signal subspace dimension; `K` when unset.
    pub music_dim: Option<usize>,
    /// Keep per-pair spectra and peak pools in the output.
    pub diagnostics: bool,
}

impl PipelineConfig {
    pub fn new(geometry: ArrayGeometry, pulse: LfmPulse, targets: usize) -> Self {
        Self {
            geometry,
            pulse,
            ptft: PtftConfig::default(),
            solver: SolverSettings::default(),
            zeta: DEFAULT_ZETA,
            targets,
            grid_step: 0.1,
            music_dim: None,
            diagnostics: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.pulse.validate()?;
        self.ptft.validate(&self.pulse)?;
        self.solver.validate()?;
        ensure_param!(self.zeta > 0.0 && self.zeta <= 180.0, "zeta must be in (0, 180]");
        ensure_param!(self.targets >= 1, "need at least one target");
        if let Some(k) = self.music_dim {
            ensure_param!(k >= 1 && k < self.geometry.sensors, "MUSIC dimension must be in [1, M)");
        }
        Ok(())
    }

    fn music_k(&self) -> usize {
        self.music_dim.unwrap_or(self.targets)
    }
}

/// Per-run detail kept for figures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Per-pair spectra (CBF or CFD), in pair order.
    pub spectra: Vec<DoaSpectrum>,
    /// Incoherent average or MUSIC spectrum, when the algorithm forms one.
    pub combined: Option<DoaSpectrum>,
    /// Peaks fetched per pair (CFD paths).
    pub peaks: Option<PeakCollection>,
    pub ridge: Option<Ridge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub algorithm: AlgorithmId,
    /// Estimates in ascending order; fewer than `K` on failure.
    pub theta_deg: Vec<f64>,
    /// Histogram provenance (histogram scheme only).
    pub histogram: Option<EstimationResult>,
    /// Solves that stopped at the iteration cap.
    pub unconverged_solves: usize,
    pub warning: Option<String>,
    pub diagnostics: Option<Diagnostics>,
}

impl PipelineOutput {
    pub fn is_complete(&self, k: usize) -> bool {
        self.theta_deg.len() == k
    }
}

/// A configured pipeline with its dictionary built once.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    dictionary: SensingMatrix,
}

struct FdSet {
    snapshots: Vec<FdSnapshot>,
    ridge: Option<Ridge>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = angle_grid(cfg.grid_step)?;
        let dictionary = sensing_matrix(&cfg.geometry, cfg.ptft.delta_f, &grid)?;
        Ok(Self { cfg, dictionary })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn dictionary(&self) -> &SensingMatrix {
        &self.dictionary
    }

    pub fn run(&self, algorithm: AlgorithmId, waveforms: &SampledWaveforms) -> Result<PipelineOutput> {
        Ok(self.run_many(&[algorithm], waveforms)?.remove(0))
    }

    /// Runs several algorithms on one record, sharing the DFT and the PTFT
    /// snapshots between them. Outputs follow the order of `algorithms`.
    pub fn run_many(&self, algorithms: &[AlgorithmId], waveforms: &SampledWaveforms) -> Result<Vec<PipelineOutput>> {
        ensure_param!(
            waveforms.sensors() == self.cfg.geometry.sensors,
            "record has {} sensors, geometry has {}",
            waveforms.sensors(),
            self.cfg.geometry.sensors
        );
        ensure_param!(
            waveforms.sample_rate == self.cfg.pulse.sample_rate,
            "record sampled at {} Hz, pulse expects {} Hz",
            waveforms.sample_rate,
            self.cfg.pulse.sample_rate
        );
        let spec = signal::spectra(waveforms);
        let needs = |s: SnapshotSource| algorithms.iter().any(|a| a.source() == s);
        let fft = if needs(SnapshotSource::Fft) { Some(self.fft_snapshots(&spec)?) } else { None };
        let ptft = if needs(SnapshotSource::Ptft) {
            Some(self.ptft_snapshots(&spec, waveforms.sample_rate)?)
        } else {
            None
        };
        algorithms
            .iter()
            .map(|&alg| {
                let set = match alg.source() {
                    SnapshotSource::Fft => fft.as_ref(),
                    SnapshotSource::Ptft => ptft.as_ref(),
                }
                .ok_or_else(|| DoaError::Internal("snapshot set missing".into()))?;
                self.run_on(alg, set)
            })
            .collect()
    }

    /// FD snapshots from raw DFT bins at `f_w` and `f_w + Δf` (nearest bin).
    pub fn fft_fd_snapshots(&self, waveforms: &SampledWaveforms) -> Result<Vec<FdSnapshot>> {
        Ok(self.fft_snapshots(&signal::spectra(waveforms))?.snapshots)
    }

    /// FD snapshots from the PTFT ridge.
    pub fn ptft_fd_snapshots(&self, waveforms: &SampledWaveforms) -> Result<Vec<FdSnapshot>> {
        Ok(self
            .ptft_snapshots(&signal::spectra(waveforms), waveforms.sample_rate)?
            .snapshots)
    }

    fn fft_snapshots(&self, spec: &SpectrumMatrix) -> Result<FdSet> {
        let snap = |f: f64| -> (f64, usize) {
            let k = ((f / spec.df).round().max(0.0) as usize).min(spec.bins.ncols() - 1);
            (k as f64 * spec.df, k)
        };
        let snapshots = self
            .cfg
            .ptft
            .centers(&self.cfg.pulse)
            .into_iter()
            .map(|f| {
                let (f_lo, k_lo) = snap(f);
                let (f_hi, k_hi) = snap(f + self.cfg.ptft.delta_f);
                let lo = spec.bins.column(k_lo).to_vec();
                let hi = spec.bins.column(k_hi).to_vec();
                fd_snapshot(&lo, &hi, f_lo, f_hi)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FdSet { snapshots, ridge: None })
    }

    fn ptft_snapshots(&self, spec: &SpectrumMatrix, sample_rate: f64) -> Result<FdSet> {
        let set = snapshots_from_spectra(spec, &self.cfg.pulse, &self.cfg.ptft, sample_rate)?;
        let snapshots = set
            .centers
            .iter()
            .enumerate()
            .map(|(j, &f)| {
                let lo = set.snapshots.column(j).to_vec();
                let hi = set.shifted.column(j).to_vec();
                fd_snapshot(&lo, &hi, f, f + set.delta_f)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FdSet {
            snapshots,
            ridge: Some(set.ridge),
        })
    }

    fn run_on(&self, alg: AlgorithmId, set: &FdSet) -> Result<PipelineOutput> {
        let k = self.cfg.targets;
        let a = &self.dictionary;
        let mut diag = Diagnostics {
            ridge: set.ridge,
            ..Diagnostics::default()
        };
        let mut unconverged = 0;
        let mut histogram = None;
        let mut warning = None;
        let theta = match alg {
            AlgorithmId::FftFdcbf | AlgorithmId::PtftFdcbf => {
                let spectra = set
                    .snapshots
                    .par_iter()
                    .map(|z| cbf_spectrum(z, a))
                    .collect::<Result<Vec<_>>>()?;
                let avg = incoherent_average(&spectra)?;
                let theta = top_k(&avg, k)?;
                diag.spectra = spectra;
                diag.combined = Some(avg);
                theta
            }
            AlgorithmId::FftFdmusic | AlgorithmId::PtftFdmusic => {
                let music = music_spectrum(&set.snapshots, a, self.cfg.music_k())?;
                let theta = top_k(&music, k)?;
                diag.combined = Some(music);
                theta
            }
            AlgorithmId::FftCfd | AlgorithmId::PtftHscfd => {
                let solved = set
                    .snapshots
                    .par_iter()
                    .map(|z| cfd_spectrum(z, a, &self.cfg.solver))
                    .collect::<Result<Vec<_>>>()?;
                unconverged = solved.iter().filter(|s| !s.converged).count();
                let spectra: Vec<DoaSpectrum> = solved.into_iter().map(|s| s.spectrum).collect();
                let per_w = spectra
                    .iter()
                    .map(|s| extract_peaks(s, k * k))
                    .collect::<Result<Vec<_>>>()?;
                let peaks = PeakCollection { per_w };
                let theta = if alg == AlgorithmId::PtftHscfd {
                    let pool = peaks.angles();
                    if pool.is_empty() {
                        warning = Some("every per-pair spectrum is empty".to_string());
                        Vec::new()
                    } else {
                        let est = estimate_doas(&pool, self.cfg.zeta, k)?;
                        warning = est.warning.clone();
                        let theta = est.theta_deg.clone();
                        histogram = Some(est);
                        theta
                    }
                } else {
                    let avg = incoherent_average(&spectra)?;
                    let theta = top_k(&avg, k)?;
                    diag.combined = Some(avg);
                    theta
                };
                diag.spectra = spectra;
                diag.peaks = Some(peaks);
                theta
            }
        };
        if warning.is_none() && theta.len() < k {
            warning = Some(format!("{} of {k} targets found", theta.len()));
        }
        Ok(PipelineOutput {
            algorithm: alg,
            theta_deg: theta,
            histogram,
            unconverged_solves: unconverged,
            warning,
            diagnostics: self.cfg.diagnostics.then_some(diag),
        })
    }
}

/// The `k` strongest peaks of a spectrum, as ascending angles.
fn top_k(s: &DoaSpectrum, k: usize) -> Result<Vec<f64>> {
    let mut theta: Vec<f64> = extract_peaks(s, k)?.iter().map(|p| p.theta_deg).collect();
    theta.sort_by(f64::total_cmp);
    Ok(theta)
}
