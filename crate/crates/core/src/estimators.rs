//! Per-frequency-pair DOA spectra (FD-CBF, FD-MUSIC, CFD), peak picking and
//! incoherent averaging.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Result};
use crate::fd::{FdSnapshot, SensingMatrix};
use crate::solver::{solve_l1, L1Problem, SolverSettings};

/// Upper clamp for MUSIC pseudospectrum values.
pub const MUSIC_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Cbf,
    Music,
    Cfd,
    /// Incoherent average of per-pair spectra.
    Average,
}

impl EstimatorKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Cbf => "cbf",
            Self::Music => "music",
            Self::Cfd => "cfd",
            Self::Average => "average",
        }
    }
}

/// Where a spectrum came from: estimator and frequency pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSource {
    pub estimator: EstimatorKind,
    pub f_lo: f64,
    pub f_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaSpectrum {
    pub values: Vec<f64>,
    pub grid: Vec<f64>,
    pub source: SpectrumSource,
}

impl DoaSpectrum {
    /// True when every value is zero (nothing to read out).
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Grid angle of the largest value (first on ties).
    pub fn argmax(&self) -> Option<f64> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| v > self.values[b]) {
                best = Some(i);
            }
        }
        best.map(|i| self.grid[i])
    }
}

/// FD conventional beamformer, `P(θ) = |a(Δf,θ)ᴴz|² / (M‖z‖²)`.
///
/// The value is 1 exactly when `z` is proportional to a grid steering vector
/// and below 1 otherwise; a zero snapshot gives a zero spectrum.
pub fn cbf_spectrum(z: &FdSnapshot, a: &SensingMatrix) -> Result<DoaSpectrum> {
    check_rows(z, a)?;
    let energy = z.z.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let mut proj = vec![Complex64::new(0.0, 0.0); a.cols()];
    a.adjoint_apply(&z.z, &mut proj);
    let scale = if energy > 0.0 { 1.0 / (a.rows() as f64 * energy) } else { 0.0 };
    Ok(DoaSpectrum {
        values: proj.iter().map(|p| p.norm_sqr() * scale).collect(),
        grid: a.grid().to_vec(),
        source: source(EstimatorKind::Cbf, z),
    })
}

/// FD-MUSIC over all pairs of a pulse, with a `k_sig`-dimensional signal
/// subspace. Values are `1/‖E_nᴴa‖²`, clamped at [`MUSIC_CAP`].
pub fn music_spectrum(snapshots: &[FdSnapshot], a: &SensingMatrix, k_sig: usize) -> Result<DoaSpectrum> {
    let m = a.rows();
    ensure_param!(k_sig >= 1, "signal subspace dimension must be at least 1");
    ensure_param!(k_sig < m, "signal subspace dimension {k_sig} must be below M = {m}");
    ensure_param!(
        snapshots.len() >= k_sig,
        "need at least {k_sig} snapshots, got {}",
        snapshots.len()
    );
    for z in snapshots {
        check_rows(z, a)?;
    }
    let mut r = DMatrix::<Complex64>::zeros(m, m);
    for z in snapshots {
        for i in 0..m {
            for j in 0..m {
                r[(i, j)] += z.z[i] * z.z[j].conj();
            }
        }
    }
    r /= Complex64::new(snapshots.len() as f64, 0.0);
    let eig = r.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let noise: Vec<Vec<Complex64>> = order[..m - k_sig]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let values = (0..a.cols())
        .map(|n| {
            let col = a.column(n);
            let d: f64 = noise
                .iter()
                .map(|e| e.iter().zip(&col).map(|(u, v)| u.conj() * v).sum::<Complex64>().norm_sqr())
                .sum();
            if d > 1.0 / MUSIC_CAP { 1.0 / d } else { MUSIC_CAP }
        })
        .collect();
    let (f_lo, f_hi) = snapshots
        .first()
        .map_or((0.0, a.delta_f()), |z| (z.f_lo, z.f_hi));
    Ok(DoaSpectrum {
        values,
        grid: a.grid().to_vec(),
        source: SpectrumSource {
            estimator: EstimatorKind::Music,
            f_lo,
            f_hi,
        },
    })
}

/// Compressive FD spectrum: `|x|` from the L1 problem on the normalized
/// snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CfdOutput {
    pub spectrum: DoaSpectrum,
    pub iterations: usize,
    pub converged: bool,
}

pub fn cfd_spectrum(z: &FdSnapshot, a: &SensingMatrix, settings: &SolverSettings) -> Result<CfdOutput> {
    check_rows(z, a)?;
    let zn = z.normalized();
    let sol = solve_l1(&L1Problem {
        a,
        z: &zn.z,
        settings: *settings,
    })?;
    Ok(CfdOutput {
        spectrum: DoaSpectrum {
            values: sol.magnitudes(),
            grid: a.grid().to_vec(),
            source: source(EstimatorKind::Cfd, z),
        },
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

fn source(estimator: EstimatorKind, z: &FdSnapshot) -> SpectrumSource {
    SpectrumSource {
        estimator,
        f_lo: z.f_lo,
        f_hi: z.f_hi,
    }
}

fn check_rows(z: &FdSnapshot, a: &SensingMatrix) -> Result<()> {
    ensure_param!(
        z.z.len() == a.rows(),
        "snapshot has {} sensors, dictionary has {} rows",
        z.z.len(),
        a.rows()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub theta_deg: f64,
    pub amplitude: f64,
    pub index: usize,
}

/// Up to `count` peaks of a spectrum, strongest first.
///
/// A peak is a sample (or the leftmost sample of a flat run) whose neighbours
/// on both sides are strictly lower; a grid endpoint counts when it exceeds
/// its single neighbour. Zero-valued samples never count. Ties in amplitude
/// go to the smaller angle.
pub fn extract_peaks(s: &DoaSpectrum, count: usize) -> Result<Vec<Peak>> {
    ensure_param!(count >= 1, "peak count must be at least 1");
    let v = &s.values;
    let n = v.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let left_lower = i == 0 || v[i - 1] < v[i];
        let right_lower = j + 1 == n || v[j + 1] < v[i];
        if v[i] > 0.0 && left_lower && right_lower {
            peaks.push(Peak {
                theta_deg: s.grid[i],
                amplitude: v[i],
                index: i,
            });
        }
        i = j + 1;
    }
    peaks.sort_by(|p, q| {
        q.amplitude
            .total_cmp(&p.amplitude)
            .then(p.theta_deg.total_cmp(&q.theta_deg))
    });
    peaks.truncate(count);
    Ok(peaks)
}

/// Peaks fetched from each pair's spectrum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakCollection {
    pub per_w: Vec<Vec<Peak>>,
}

impl PeakCollection {
    /// All peak angles, in pair order.
    pub fn angles(&self) -> Vec<f64> {
        self.per_w
            .iter()
            .flat_map(|p| p.iter().map(|q| q.theta_deg))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.per_w.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pointwise mean of spectra that are each scaled to unit maximum first.
/// All-zero spectra are skipped; if none remain the result is all zeros.
pub fn incoherent_average(spectra: &[DoaSpectrum]) -> Result<DoaSpectrum> {
    ensure_param!(!spectra.is_empty(), "nothing to average");
    let grid = &spectra[0].grid;
    for s in spectra {
        ensure_param!(
            s.grid.len() == grid.len() && s.grid.iter().zip(grid).all(|(p, q)| p == q),
            "spectra are on different grids"
        );
    }
    let mut acc = vec![0.0; grid.len()];
    let mut used = 0usize;
    for s in spectra {
        let peak = s.max();
        if peak <= 0.0 {
            continue;
        }
        used += 1;
        for (a, v) in acc.iter_mut().zip(&s.values) {
            *a += v / peak;
        }
    }
    if used > 0 {
        acc.iter_mut().for_each(|a| *a /= used as f64);
    }
    let first = spectra[0].source;
    let last = spectra[spectra.len() - 1].source;
    Ok(DoaSpectrum {
        values: acc,
        grid: grid.clone(),
        source: SpectrumSource {
            estimator: EstimatorKind::Average,
            f_lo: first.f_lo,
            f_hi: last.f_hi,
        },
    })
}
