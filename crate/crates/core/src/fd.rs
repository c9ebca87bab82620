//! Steering vectors, frequency-difference products and the sensing matrix.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure_param, Result};
use crate::signal::ArrayGeometry;

/// Array response `a(f, θ)`, entry `m` is `e^{-j2πf·m·d·sinθ/c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: Vec<Complex64>,
    pub frequency: f64,
    pub theta_deg: f64,
}

pub fn steering_vector(geom: &ArrayGeometry, f: f64, theta_deg: f64) -> SteeringVector {
    let step = -2.0 * PI * f * geom.spacing * theta_deg.to_radians().sin() / geom.speed;
    let entries = (0..geom.sensors)
        .map(|m| Complex64::from_polar(1.0, step * m as f64))
        .collect();
    SteeringVector {
        entries,
        frequency: f,
        theta_deg,
    }
}

/// Steering vector of the difference-frequency array, `a(f₂,θ) ⊙ a*(f₁,θ)`.
pub fn fd_steering(geom: &ArrayGeometry, delta_f: f64, theta_deg: f64) -> SteeringVector {
    steering_vector(geom, delta_f, theta_deg)
}

/// Frequency-difference array data `z = y(f_hi) ⊙ y*(f_lo)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSnapshot {
    pub z: Vec<Complex64>,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl FdSnapshot {
    pub fn norm(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Snapshot scaled to unit ℓ2 norm; a zero snapshot stays zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        let z = if n > 0.0 {
            self.z.iter().map(|c| c / n).collect()
        } else {
            self.z.clone()
        };
        Self { z, ..*self }
    }

    pub fn delta_f(&self) -> f64 {
        self.f_hi - self.f_lo
    }
}

pub fn fd_snapshot(
    y_lo: &[Complex64],
    y_hi: &[Complex64],
    f_lo: f64,
    f_hi: f64,
) -> Result<FdSnapshot> {
    ensure_param!(
        y_lo.len() == y_hi.len(),
        "snapshot length mismatch: {} vs {}",
        y_lo.len(),
        y_hi.len()
    );
    Ok(FdSnapshot {
        z: y_hi.iter().zip(y_lo).map(|(h, l)| h * l.conj()).collect(),
        f_lo,
        f_hi,
    })
}

/// `[-90 : step : 90]` inclusive of both ends.
pub fn angle_grid(step_deg: f64) -> Result<Vec<f64>> {
    ensure_param!(step_deg > 0.0 && step_deg <= 180.0, "grid step must be in (0, 180]");
    let count = (180.0 / step_deg + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| -90.0 + i as f64 * step_deg).collect())
}

/// The 0.1° search grid with 1801 points.
pub fn default_grid() -> Vec<f64> {
    (0..=1800).map(|i| (i as f64 - 900.0) / 10.0).collect()
}

/// Dictionary `A(Δf)` whose column `n` is `a(Δf, θ_n)`.
///
/// Columns are stored contiguously with split real and imaginary parts so
/// the solver's `Aᴴr` sweep streams through memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    grid: Vec<f64>,
    delta_f: f64,
    sensors: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

pub fn sensing_matrix(geom: &ArrayGeometry, delta_f: f64, grid: &[f64]) -> Result<SensingMatrix> {
    ensure_param!(!grid.is_empty(), "angle grid is empty");
    ensure_param!(
        grid.windows(2).all(|w| w[0] < w[1]),
        "angle grid must be strictly ascending"
    );
    ensure_param!(
        grid.iter().all(|t| t.abs() <= 90.0),
        "angle grid must lie in [-90, 90]"
    );
    let columns: Vec<Vec<Complex64>> = grid
        .iter()
        .map(|&t| fd_steering(geom, delta_f, t).entries)
        .collect();
    Ok(SensingMatrix::from_columns(grid.to_vec(), delta_f, &columns))
}

impl SensingMatrix {
    /// Builds a dictionary from explicit columns (all of equal length).
    pub fn from_columns(grid: Vec<f64>, delta_f: f64, columns: &[Vec<Complex64>]) -> Self {
        let sensors = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == sensors));
        assert_eq!(grid.len(), columns.len());
        let mut re = Vec::with_capacity(sensors * columns.len());
        let mut im = Vec::with_capacity(sensors * columns.len());
        for c in columns {
            re.extend(c.iter().map(|v| v.re));
            im.extend(c.iter().map(|v| v.im));
        }
        Self {
            grid,
            delta_f,
            sensors,
            re,
            im,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Rows of the matrix (sensor count).
    pub fn rows(&self) -> usize {
        self.sensors
    }

    /// Columns of the matrix (`N_grid`).
    pub fn cols(&self) -> usize {
        self.grid.len()
    }

    pub fn column(&self, n: usize) -> Vec<Complex64> {
        let s = n * self.sensors;
        (s..s + self.sensors)
            .map(|i| Complex64::new(self.re[i], self.im[i]))
            .collect()
    }

    /// `out = Aᴴ r`.
    pub fn adjoint_apply(&self, r: &[Complex64], out: &mut [Complex64]) {
        let m = self.sensors;
        debug_assert_eq!(r.len(), m);
        debug_assert_eq!(out.len(), self.cols());
        let (rr, ri): (Vec<f64>, Vec<f64>) = r.iter().map(|c| (c.re, c.im)).unzip();
        for (n, o) in out.iter_mut().enumerate() {
            let are = &self.re[n * m..(n + 1) * m];
            let aim = &self.im[n * m..(n + 1) * m];
            let mut sr = 0.0;
            let mut si = 0.0;
            for k in 0..m {
                // conj(a) * r
                sr += are[k] * rr[k] + aim[k] * ri[k];
                si += are[k] * ri[k] - aim[k] * rr[k];
            }
            *o = Complex64::new(sr, si);
        }
    }

    /// `out = A x`, skipping zero coefficients.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let m = self.sensors;
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(out.len(), m);
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (n, xn) in x.iter().enumerate() {
            if xn.re == 0.0 && xn.im == 0.0 {
                continue;
            }
            let are = &self.re[n * m..(n + 1) * m];
            let aim = &self.im[n * m..(n + 1) * m];
            for k in 0..m {
                out[k] += Complex64::new(are[k], aim[k]) * xn;
            }
        }
    }

    /// Index of the grid angle closest to `theta_deg`.
    pub fn nearest_index(&self, theta_deg: f64) -> usize {
        nearest_index(&self.grid, theta_deg)
    }
}

pub(crate) fn nearest_index(grid: &[f64], theta_deg: f64) -> usize {
    let i = grid.partition_point(|&g| g < theta_deg);
    if i == 0 {
        0
    } else if i == grid.len() {
        grid.len() - 1
    } else if (grid[i] - theta_deg).abs() < (theta_deg - grid[i - 1]).abs() {
        i
    } else {
        i - 1
    }
}

/// Worst-case coherence between steering vectors of distinct angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguityReport {
    /// `max |a(θ_i)ᴴ a(θ_j)| / M`.
    pub coherence: f64,
    pub pair: (f64, f64),
}

/// Maximum normalized coherence over angle pairs more than two grid steps
/// apart.
pub fn ambiguity_scan(geom: &ArrayGeometry, f: f64, grid: &[f64]) -> Result<AmbiguityReport> {
    ensure_param!(grid.len() >= 2, "ambiguity scan needs at least two angles");
    let step = grid
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    ambiguity_scan_separated(geom, f, grid, 2.0 * step)
}

/// Like [`ambiguity_scan`] with an explicit minimum angular separation.
pub fn ambiguity_scan_separated(
    geom: &ArrayGeometry,
    f: f64,
    grid: &[f64],
    min_separation_deg: f64,
) -> Result<AmbiguityReport> {
    ensure_param!(grid.len() >= 2, "ambiguity scan needs at least two angles");
    let vectors: Vec<Vec<Complex64>> = grid
        .iter()
        .map(|&t| steering_vector(geom, f, t).entries)
        .collect();
    let m = geom.sensors as f64;
    let mut best = AmbiguityReport {
        coherence: 0.0,
        pair: (grid[0], grid[0]),
    };
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            if (grid[j] - grid[i]).abs() <= min_separation_deg * (1.0 + 1e-9) {
                continue;
            }
            let inner: Complex64 = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| a.conj() * b)
                .sum();
            let c = inner.norm() / m;
            if c > best.coherence {
                best = AmbiguityReport {
                    coherence: c,
                    pair: (grid[i], grid[j]),
                };
            }
        }
    }
    Ok(best)
}
