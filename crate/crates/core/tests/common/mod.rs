//! Shared helpers: reference scenes and an exact oracle for tiny complex
//! `ℓ1` problems.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use doa_core::fd::SensingMatrix;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `‖z − Ax‖² + μ‖x‖₁` with `A` given column-wise.
pub fn objective(cols: &[Vec<Complex64>], z: &[Complex64], x: &[Complex64], mu: f64) -> f64 {
    let mut r = z.to_vec();
    for (c, xj) in cols.iter().zip(x) {
        for (ri, ci) in r.iter_mut().zip(c) {
            *ri -= ci * xj;
        }
    }
    r.iter().map(|v| v.norm_sqr()).sum::<f64>() + mu * x.iter().map(|v| v.norm()).sum::<f64>()
}

/// Seeded instance with unit-modulus random-phase columns and Gaussian data.
pub fn random_instance(m: usize, n: usize, seed: u64) -> (Vec<Vec<Complex64>>, Vec<Complex64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect()
        })
        .collect();
    let z = (0..m)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    (cols, z)
}

pub fn matrix(cols: &[Vec<Complex64>]) -> SensingMatrix {
    let grid: Vec<f64> = (0..cols.len()).map(|i| i as f64).collect();
    SensingMatrix::from_columns(grid, 200.0, cols)
}

/// Minimizer of the problem restricted to `support` with every coordinate
/// nonzero: reweighted least squares to get close, then damped Newton on the
/// real embedding. `None` when the restricted minimum touches zero in some
/// coordinate (it then belongs to a smaller support).
fn interior_minimum(cols: &[Vec<Complex64>], z: &[Complex64], mu: f64, support: &[usize]) -> Option<(Vec<Complex64>, f64)> {
    let s = support.len();
    let m = z.len();
    let a: Vec<&Vec<Complex64>> = support.iter().map(|&k| &cols[k]).collect();
    // Gram G = AᴴA and c = Aᴴz.
    let mut g = vec![vec![ZERO; s]; s];
    let mut c = vec![ZERO; s];
    for i in 0..s {
        for j in 0..s {
            g[i][j] = (0..m).map(|k| a[i][k].conj() * a[j][k]).sum();
        }
        c[i] = (0..m).map(|k| a[i][k].conj() * z[k]).sum();
    }
    let f = |x: &[Complex64]| {
        let full: Vec<Complex64> = {
            let mut v = vec![ZERO; cols.len()];
            for (&k, xv) in support.iter().zip(x) {
                v[k] = *xv;
            }
            v
        };
        objective(cols, z, &full, mu)
    };
    // Start from the ridge least-squares fit.
    let mut ridge = DMatrix::<f64>::zeros(2 * s, 2 * s);
    let mut rhs = DVector::<f64>::zeros(2 * s);
    for i in 0..s {
        for j in 0..s {
            ridge[(2 * i, 2 * j)] = g[i][j].re;
            ridge[(2 * i, 2 * j + 1)] = -g[i][j].im;
            ridge[(2 * i + 1, 2 * j)] = g[i][j].im;
            ridge[(2 * i + 1, 2 * j + 1)] = g[i][j].re;
        }
        ridge[(2 * i, 2 * i)] += 1e-3;
        ridge[(2 * i + 1, 2 * i + 1)] += 1e-3;
        rhs[2 * i] = c[i].re;
        rhs[2 * i + 1] = c[i].im;
    }
    let x0 = ridge.lu().solve(&rhs)?;
    let mut x: Vec<Complex64> = (0..s).map(|i| Complex64::new(x0[2 * i], x0[2 * i + 1])).collect();
    // Majorize-minimize: x ← (G + (μ/2)·diag(1/|x|))⁻¹ c decreases the
    // restricted objective monotonically and drives coordinates that belong
    // at zero towards zero.
    let gm = DMatrix::<Complex64>::from_fn(s, s, |i, j| g[i][j]);
    let cv = DVector::<Complex64>::from_column_slice(&c);
    for _ in 0..5000 {
        if x.iter().any(|v| v.norm() < 1e-9) {
            return None;
        }
        let mut lhs = gm.clone();
        for i in 0..s {
            lhs[(i, i)] += Complex64::new(mu / (2.0 * x[i].norm()), 0.0);
        }
        let next = lhs.lu().solve(&cv)?;
        let change: f64 = (0..s).map(|i| (next[i] - x[i]).norm()).fold(0.0, f64::max);
        x = next.iter().copied().collect();
        if change < 1e-12 {
            break;
        }
    }
    let peak = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if x.iter().any(|v| v.norm() < 1e-6 * peak.max(1e-12)) {
        return None;
    }
    let mut fx = f(&x);
    for _ in 0..200 {
        // Gradient and Hessian of the real embedding.
        let mut grad = DVector::<f64>::zeros(2 * s);
        let mut hess = DMatrix::<f64>::zeros(2 * s, 2 * s);
        for i in 0..s {
            let gx: Complex64 = (0..s).map(|j| g[i][j] * x[j]).sum();
            let d = (gx - c[i]) * 2.0;
            let mag = x[i].norm();
            let u = x[i] / mag;
            grad[2 * i] = d.re + mu * u.re;
            grad[2 * i + 1] = d.im + mu * u.im;
            for j in 0..s {
                hess[(2 * i, 2 * j)] = 2.0 * g[i][j].re;
                hess[(2 * i, 2 * j + 1)] = -2.0 * g[i][j].im;
                hess[(2 * i + 1, 2 * j)] = 2.0 * g[i][j].im;
                hess[(2 * i + 1, 2 * j + 1)] = 2.0 * g[i][j].re;
            }
            let w = mu / mag;
            hess[(2 * i, 2 * i)] += w * (1.0 - u.re * u.re);
            hess[(2 * i, 2 * i + 1)] -= w * u.re * u.im;
            hess[(2 * i + 1, 2 * i)] -= w * u.re * u.im;
            hess[(2 * i + 1, 2 * i + 1)] += w * (1.0 - u.im * u.im);
        }
        if grad.norm() < 1e-11 {
            return Some((x, fx));
        }
        for d in 0..2 * s {
            hess[(d, d)] += 1e-12;
        }
        let step = hess.lu().solve(&(-&grad))?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<Complex64> = (0..s)
                .map(|i| x[i] + Complex64::new(step[2 * i], step[2 * i + 1]) * t)
                .collect();
            let ft = f(&trial);
            if ft <= fx - 1e-4 * t * (-grad.dot(&step)).max(0.0) {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || x.iter().any(|v| v.norm() < 1e-10) {
            break;
        }
    }
    // The iterate is feasible, so its value still bounds the minimum above.
    Some((x.clone(), f(&x)))
}

/// Global minimum of `‖z − Ax‖² + μ‖x‖₁` by enumerating every support and
/// taking the best interior stationary point. The empty support is always a
/// candidate.
pub fn support_enumeration_oracle(cols: &[Vec<Complex64>], z: &[Complex64], mu: f64) -> f64 {
    let n = cols.len();
    assert!(n <= 12, "oracle enumerates 2^n supports");
    let mut best = z.iter().map(|v| v.norm_sqr()).sum::<f64>();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).collect();
        if let Some((_, f)) = interior_minimum(cols, z, mu, &support) {
            best = best.min(f);
        }
    }
    best
}

/// Best objective over every 1- and 2-sparse least-squares refit, penalty
/// included. Each refit is feasible, so this bounds the minimum from above.
pub fn sparse_refit_bound(cols: &[Vec<Complex64>], z: &[Complex64], mu: f64) -> f64 {
    let n = cols.len();
    let mut best = z.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let fit = |support: &[usize]| -> Option<Vec<Complex64>> {
        let s = support.len();
        let m = z.len();
        let a = DMatrix::<Complex64>::from_fn(m, s, |i, j| cols[support[j]][i]);
        let zz = DVector::<Complex64>::from_column_slice(z);
        let lhs = a.adjoint() * &a;
        let rhs = a.adjoint() * zz;
        lhs.lu().solve(&rhs).map(|v| v.iter().copied().collect())
    };
    for i in 0..n {
        for j in i..n {
            let support: Vec<usize> = if i == j { vec![i] } else { vec![i, j] };
            if let Some(xs) = fit(&support) {
                let mut x = vec![ZERO; n];
                for (&k, v) in support.iter().zip(&xs) {
                    x[k] = *v;
                }
                best = best.min(objective(cols, z, &x, mu));
            }
        }
    }
    best
}
