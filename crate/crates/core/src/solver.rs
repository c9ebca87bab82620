//! Complex L1-regularized least squares, `min ‖z − Ax‖² + μ‖x‖₁`, solved by
//! accelerated proximal gradient with objective-based restart.

use num_complex::Complex64;

use crate::error::{ensure_param, DoaError, Result};
use crate::fd::SensingMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Proximal map of `t·|·|`: shrinks the magnitude by `t`, keeps the phase.
pub fn soft_threshold(v: Complex64, t: f64) -> Complex64 {
    debug_assert!(t >= 0.0);
    let mag = v.norm();
    if mag <= t {
        ZERO
    } else {
        v * (1.0 - t / mag)
    }
}

/// Lipschitz constant of the gradient of `‖z − Ax‖²`, i.e. `2·σ_max(A)²`,
/// with a 1% safety margin.
///
/// The power iteration runs on the small `A Aᴴ` Gram matrix, which shares its
/// nonzero spectrum with `AᴴA`.
pub fn lipschitz_estimate(a: &SensingMatrix) -> Result<f64> {
    let cols: Vec<Vec<Complex64>> = (0..a.cols()).map(|k| a.column(k)).collect();
    Ok(2.0 * gram_lambda_max(&cols, a.rows())? * 1.01)
}

/// Largest eigenvalue of `Σ c cᴴ` over the given length-`m` columns.
fn gram_lambda_max(cols: &[Vec<Complex64>], m: usize) -> Result<f64> {
    if m == 0 || cols.is_empty() {
        return Ok(0.0);
    }
    let mut gram = vec![ZERO; m * m];
    for c in cols {
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] += c[i] * c[j].conj();
            }
        }
    }
    let mut v: Vec<Complex64> = (0..m)
        .map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64))
        .collect();
    normalize(&mut v);
    let mut w = vec![ZERO; m];
    let mut lambda = 0.0;
    for step in 0..10_000 {
        for i in 0..m {
            w[i] = (0..m).map(|j| gram[i * m + j] * v[j]).sum();
        }
        let next: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        if !next.is_finite() {
            return Err(DoaError::Numeric("non-finite power iteration".into()));
        }
        if next == 0.0 {
            return Ok(0.0);
        }
        let done = step > 0 && (next - lambda).abs() <= 1e-6 * next.abs();
        lambda = next;
        if done {
            return Ok(lambda);
        }
        v.copy_from_slice(&w);
        if normalize(&mut v) == 0.0 {
            return Ok(0.0);
        }
    }
    Err(DoaError::Numeric(
        "power iteration did not converge in 10000 steps".into(),
    ))
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
    }
    n
}

/// Regularization weight and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mu: 0.1,
            tol: 1e-6,
            max_iter: 2000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.mu > 0.0 && self.mu.is_finite(), "mu must be positive, got {}", self.mu);
        ensure_param!(self.tol > 0.0 && self.tol.is_finite(), "tol must be positive, got {}", self.tol);
        ensure_param!(self.max_iter > 0, "max_iter must be at least 1");
        Ok(())
    }
}

/// One instance of the L1 problem.
#[derive(Debug, Clone, Copy)]
pub struct L1Problem<'a> {
    pub a: &'a SensingMatrix,
    pub z: &'a [Complex64],
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub x: Vec<Complex64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration.
    pub history: Vec<f64>,
}

impl L1Solution {
    /// `|x|` on the grid.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.x.iter().map(|c| c.norm()).collect()
    }
}

/// `‖z − Ax‖² + μ‖x‖₁`.
pub fn objective(a: &SensingMatrix, z: &[Complex64], x: &[Complex64], mu: f64) -> f64 {
    let mut ax = vec![ZERO; a.rows()];
    a.apply(x, &mut ax);
    residual_energy(z, &ax) + mu * x.iter().map(|c| c.norm()).sum::<f64>()
}

fn residual_energy(z: &[Complex64], ax: &[Complex64]) -> f64 {
    z.iter().zip(ax).map(|(a, b)| (a - b).norm_sqr()).sum()
}

/// Solves the problem from `x = 0`.
///
/// Proximal-gradient iterations with momentum run on a working set of
/// columns, with the step taken from the working set's own Lipschitz
/// constant. Whenever the objective settles (relative change below `tol`),
/// the full gradient is checked: off-set columns that violate optimality
/// join the set, otherwise the run ends once the optimality check holds on
/// the whole grid. The minimizer is that of the full problem; restricting
/// the iterations only shortens the path to it.
pub fn solve_l1(p: &L1Problem<'_>) -> Result<L1Solution> {
    p.settings.validate()?;
    let a = p.a;
    let z = p.z;
    let SolverSettings { mu, tol, max_iter } = p.settings;
    ensure_param!(z.len() == a.rows(), "z has {} entries, A has {} rows", z.len(), a.rows());
    if z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(DoaError::Numeric("non-finite data vector".into()));
    }
    let n = a.cols();
    let m = a.rows();
    let half = mu / 2.0;
    let mut x = vec![ZERO; n];
    let mut ax = vec![ZERO; m];
    let mut f = residual_energy(z, &ax);
    let mut history = Vec::new();
    let mut g = vec![ZERO; n];
    let mut r = z.to_vec();
    let mut active: Vec<usize> = Vec::new();
    let mut in_set = vec![false; n];
    let mut iterations = 0;
    let mut inner_tol = tol;

    loop {
        a.adjoint_apply(&r, &mut g);
        if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(DoaError::Numeric("non-finite gradient".into()));
        }
        let report = kkt_from_gradient(&g, &x, half);
        if report.holds() {
            if iterations == 0 {
                iterations = 1;
                history.push(f);
            }
            return Ok(L1Solution { x, objective: f, iterations, converged: true, history });
        }
        if iterations >= max_iter {
            return Ok(L1Solution { x, objective: f, iterations, converged: false, history });
        }
        prune_working_set(&g, &x, half, &mut active, &mut in_set);
        let added = grow_working_set(&g, half, &mut active, &mut in_set);
        if added == 0 {
            // Settled on the set but not yet stationary there.
            inner_tol *= 0.01;
        } else {
            inner_tol = tol;
        }
        let sub = Subproblem::new(a, &active)?;
        let mut xs: Vec<Complex64> = active.iter().map(|&k| x[k]).collect();
        let budget = max_iter - iterations;
        let (used, f_new) = sub.run(z, mu, inner_tol, budget, &mut xs, &mut ax, f, &mut history)?;
        iterations += used;
        f = f_new;
        for (&k, v) in active.iter().zip(&xs) {
            x[k] = *v;
        }
        for k in 0..m {
            r[k] = z[k] - ax[k];
        }
    }
}

/// Adds the strongest violating local maxima of `|g|` to the working set
/// (any violators once no new maxima remain); returns how many.
fn grow_working_set(g: &[Complex64], half: f64, active: &mut Vec<usize>, in_set: &mut [bool]) -> usize {
    const BATCH: usize = 16;
    let limit = half * (1.0 + 1e-3);
    let mags: Vec<f64> = g.iter().map(|v| v.norm()).collect();
    let n = mags.len();
    let mut cand: Vec<usize> = (0..n)
        .filter(|&k| {
            !in_set[k]
                && mags[k] > limit
                && (k == 0 || mags[k] >= mags[k - 1])
                && (k + 1 == n || mags[k] >= mags[k + 1])
        })
        .collect();
    if cand.is_empty() {
        cand = (0..n).filter(|&k| !in_set[k] && mags[k] > limit).collect();
    }
    cand.sort_by(|&p, &q| mags[q].total_cmp(&mags[p]).then(p.cmp(&q)));
    cand.truncate(BATCH);
    for &k in &cand {
        in_set[k] = true;
        active.push(k);
    }
    cand.len()
}

/// Drops idle columns whose correlation sits well below the threshold; they
/// rejoin through `grow_working_set` if they start to violate again.
fn prune_working_set(g: &[Complex64], x: &[Complex64], half: f64, active: &mut Vec<usize>, in_set: &mut [bool]) {
    let floor = 0.9 * half;
    active.retain(|&k| {
        let keep = x[k] != ZERO || g[k].norm() >= floor;
        in_set[k] = keep;
        keep
    });
}

/// Columns of `A` restricted to a working set, stored twice: sensor-major
/// for `Aᴴr` and column-major for `Ax`, with split real and imaginary parts
/// so both products are plain vectorizable multiply-adds.
struct Subproblem {
    m: usize,
    w: usize,
    /// `[j·m + k]`.
    col_re: Vec<f64>,
    col_im: Vec<f64>,
    /// `[k·w + j]`.
    row_re: Vec<f64>,
    row_im: Vec<f64>,
    lipschitz: f64,
}

impl Subproblem {
    fn new(a: &SensingMatrix, cols: &[usize]) -> Result<Self> {
        let m = a.rows();
        let w = cols.len();
        let mut col_re = Vec::with_capacity(m * w);
        let mut col_im = Vec::with_capacity(m * w);
        let mut row_re = vec![0.0; m * w];
        let mut row_im = vec![0.0; m * w];
        let mut columns = Vec::with_capacity(w);
        for (j, &n) in cols.iter().enumerate() {
            let c = a.column(n);
            for (k, v) in c.iter().enumerate() {
                col_re.push(v.re);
                col_im.push(v.im);
                row_re[k * w + j] = v.re;
                row_im[k * w + j] = v.im;
            }
            columns.push(c);
        }
        let lipschitz = 2.0 * 1.01 * gram_lambda_max(&columns, m)?;
        Ok(Self { m, w, col_re, col_im, row_re, row_im, lipschitz })
    }

    /// `g = Aᴴr` into split parts.
    fn adjoint(&self, r: &[Complex64], g_re: &mut [f64], g_im: &mut [f64]) {
        let w = self.w;
        g_re.fill(0.0);
        g_im.fill(0.0);
        for (k, rk) in r.iter().enumerate() {
            let are = &self.row_re[k * w..(k + 1) * w];
            let aim = &self.row_im[k * w..(k + 1) * w];
            let (rr, ri) = (rk.re, rk.im);
            for j in 0..w {
                g_re[j] += are[j] * rr + aim[j] * ri;
                g_im[j] += are[j] * ri - aim[j] * rr;
            }
        }
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let m = self.m;
        let mut re = [0.0; 64];
        let mut im = [0.0; 64];
        if m > re.len() {
            out.iter_mut().for_each(|o| *o = ZERO);
            for (j, xj) in x.iter().enumerate() {
                for k in 0..m {
                    out[k] += Complex64::new(self.col_re[j * m + k], self.col_im[j * m + k]) * xj;
                }
            }
            return;
        }
        let (re, im) = (&mut re[..m], &mut im[..m]);
        for (j, xj) in x.iter().enumerate() {
            if *xj == ZERO {
                continue;
            }
            let are = &self.col_re[j * m..(j + 1) * m];
            let aim = &self.col_im[j * m..(j + 1) * m];
            let (xr, xi) = (xj.re, xj.im);
            for k in 0..m {
                re[k] += are[k] * xr - aim[k] * xi;
                im[k] += are[k] * xi + aim[k] * xr;
            }
        }
        for (o, (r, i)) in out.iter_mut().zip(re.iter().zip(im.iter())) {
            *o = Complex64::new(*r, *i);
        }
    }

    fn step(&self, z: &[Complex64], mu: f64, from: &[Complex64], a_from: &[Complex64], s: &mut Scratch) -> f64 {
        let step = 2.0 / self.lipschitz;
        let thresh = mu / self.lipschitz;
        for k in 0..self.m {
            s.r[k] = z[k] - a_from[k];
        }
        self.adjoint(&s.r, &mut s.g_re, &mut s.g_im);
        let mut l1 = 0.0;
        for j in 0..from.len() {
            let v = from[j] + Complex64::new(s.g_re[j], s.g_im[j]) * step;
            let mag = v.norm_sqr().sqrt();
            if mag <= thresh {
                s.x_new[j] = ZERO;
            } else {
                s.x_new[j] = v * (1.0 - thresh / mag);
                l1 += mag - thresh;
            }
        }
        self.apply(&s.x_new, &mut s.ax_new);
        residual_energy(z, &s.ax_new) + mu * l1
    }

    /// Accelerated iterations from `x` (warm start) with restart on
    /// objective increase. Returns iterations used and the final objective.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        z: &[Complex64],
        mu: f64,
        tol: f64,
        budget: usize,
        x: &mut Vec<Complex64>,
        ax: &mut Vec<Complex64>,
        mut f: f64,
        history: &mut Vec<f64>,
    ) -> Result<(usize, f64)> {
        let w = x.len();
        let mut s = Scratch {
            r: vec![ZERO; self.m],
            g_re: vec![0.0; w],
            g_im: vec![0.0; w],
            x_new: vec![ZERO; w],
            ax_new: vec![ZERO; self.m],
        };
        let mut y = x.clone();
        let mut ay = ax.clone();
        let mut t = 1.0_f64;
        let mut used = 0;
        while used < budget {
            used += 1;
            let mut f_new = self.step(z, mu, &y, &ay, &mut s);
            if f_new > f {
                t = 1.0;
                f_new = self.step(z, mu, x, ax, &mut s);
                if f_new > f {
                    // Rounding only; keep the incumbent.
                    f_new = f;
                    s.x_new.copy_from_slice(x);
                    s.ax_new.copy_from_slice(ax);
                }
            }
            if !f_new.is_finite() {
                return Err(DoaError::Numeric("non-finite objective".into()));
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for j in 0..w {
                y[j] = s.x_new[j] + (s.x_new[j] - x[j]) * beta;
            }
            for k in 0..self.m {
                ay[k] = s.ax_new[k] + (s.ax_new[k] - ax[k]) * beta;
            }
            t = t_next;
            std::mem::swap(x, &mut s.x_new);
            std::mem::swap(ax, &mut s.ax_new);
            let change = f - f_new;
            f = f_new;
            history.push(f);
            if change <= tol * f || f == 0.0 {
                break;
            }
        }
        Ok((used, f))
    }
}

struct Scratch {
    r: Vec<Complex64>,
    g_re: Vec<f64>,
    g_im: Vec<f64>,
    x_new: Vec<Complex64>,
    ax_new: Vec<Complex64>,
}

/// Optimality residuals of a candidate `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest `|Aᴴ(z − Ax)|_n / (μ/2)` over zero coordinates.
    pub off_support: f64,
    /// Largest `| |Aᴴ(z − Ax)|_n / (μ/2) − 1 |` over nonzero coordinates.
    pub on_support: f64,
}

impl KktReport {
    pub fn holds(&self) -> bool {
        self.off_support <= 1.0 + 1e-3 && self.on_support <= 1e-2
    }
}

pub fn kkt_report(a: &SensingMatrix, z: &[Complex64], x: &[Complex64], mu: f64) -> KktReport {
    let mut ax = vec![ZERO; a.rows()];
    a.apply(x, &mut ax);
    let r: Vec<Complex64> = z.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut g = vec![ZERO; a.cols()];
    a.adjoint_apply(&r, &mut g);
    kkt_from_gradient(&g, x, mu / 2.0)
}

fn kkt_from_gradient(g: &[Complex64], x: &[Complex64], half: f64) -> KktReport {
    let mut off: f64 = 0.0;
    let mut on: f64 = 0.0;
    for (gn, xn) in g.iter().zip(x) {
        let ratio = gn.norm() / half;
        if *xn == ZERO {
            off = off.max(ratio);
        } else {
            on = on.max((ratio - 1.0).abs());
        }
    }
    KktReport {
        off_support: off,
        on_support: on,
    }
}
