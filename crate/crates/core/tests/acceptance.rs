//! End-to-end acceptance checks, one line of output per criterion.
//!
//! `DOA_ACCEPTANCE_FULL=1` runs the RMSE criterion with 100 trials per point
//! instead of the reduced 20. `DOA_ACCEPTANCE_ONLY=3,4` restricts the run to
//! the listed criteria.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use doa_core::estimators::{cbf_spectrum, extract_peaks, incoherent_average, music_spectrum};
use doa_core::experiments::{cmd_mc_rmse, cmd_resolution_sweep, trial_scene, ExperimentSpec, ResolutionRow};
use doa_core::fd::{ambiguity_scan_separated, default_grid, fd_steering, sensing_matrix, steering_vector, FdSnapshot};
use doa_core::histogram::estimate_doas;
use doa_core::io::SceneFile;
use doa_core::pipeline::{AlgorithmId, Pipeline};
use doa_core::ptft::{output_snr_gain, rotation, PtftConfig};
use doa_core::signal::{analytic_lfm_spectrum, noiseless_spectra, synthesize_trial, ArrayGeometry, LfmPulse, Scene, Target};
use doa_core::solver::{kkt_report, soft_threshold, solve_l1, L1Problem, SolverSettings};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 8] = [
        (1, "ptft output snr gain", c1_snr_gain),
        (2, "chirp phase flattening", c2_phase_flattening),
        (3, "ambiguity removal", c3_ambiguity),
        (4, "solver correctness", c4_solver),
        (5, "resolution sweep", c5_resolution),
        (6, "rmse floor", c6_rmse),
        (7, "histogram robustness", c7_histogram),
        (8, "property suites", c8_properties),
    ];
    let only: Option<Vec<u32>> = std::env::var("DOA_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {n} ({name}): {verdict}: {} [{:.1} s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn scene(text: &str) -> Scene {
    SceneFile::from_toml_str(text).unwrap().build().unwrap()
}

// 1. Output SNR of ridge samples against DFT bins.

const GAIN_TRIALS: usize = 200;
const SIGMA1_TOL_DB: f64 = 0.5;
const GAIN_TOL_DB: f64 = 2.0;

fn c1_snr_gain() -> Outcome {
    let s = scene("seed = 11\nsnr_db = -10.0\n[[targets]]\ntheta = 0.0\n");
    let mean_gain = |sigma: f64| {
        let cfg = PtftConfig {
            sigma,
            ..PtftConfig::default()
        };
        let rows = output_snr_gain(&s, &cfg, GAIN_TRIALS).unwrap();
        rows.iter().map(|r| r.snr_ptft_db - r.snr_fft_db).sum::<f64>() / rows.len() as f64
    };
    let g1 = mean_gain(1.0);
    let g32 = mean_gain(32.0);
    let target = 10.0 * 32f64.log10();
    outcome(
        g1.abs() <= SIGMA1_TOL_DB && (g32 - target).abs() <= GAIN_TOL_DB,
        format!(
            "sigma=1: gain {g1:.3} dB (|.| <= {SIGMA1_TOL_DB}); sigma=32: gain {g32:.2} dB (expected {target:.2} +- {GAIN_TOL_DB})"
        ),
    )
}

// 2. The rotation operator cancels the chirp's quadratic phase.

const PHASE_TOL: f64 = 1e-9;

fn c2_phase_flattening() -> Outcome {
    let pulse = LfmPulse::default();
    let n = 20_001;
    let phases: Vec<f64> = (0..n)
        .map(|i| {
            let f = pulse.f_low + (pulse.f_high - pulse.f_low) * i as f64 / (n - 1) as f64;
            (analytic_lfm_spectrum(&pulse, f) * rotation(&pulse, 0.0, f)).arg()
        })
        .collect();
    let spread = phases
        .iter()
        .map(|p| {
            let d = p - phases[0];
            (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
        })
        .fold(0.0f64, |m, d| m.max(d.abs()));
    outcome(
        spread <= PHASE_TOL,
        format!("max phase deviation {spread:.2e} rad over {n} frequencies (tol {PHASE_TOL:.0e})"),
    )
}

// 3. Grating lobes at the carrier, none at the difference frequency.

fn c3_ambiguity() -> Outcome {
    let geom = ArrayGeometry::default();
    let grid = default_grid();
    let hi = ambiguity_scan_separated(&geom, 15e3, &grid, 1.0).unwrap();
    let lo = ambiguity_scan_separated(&geom, 200.0, &grid, 1.0).unwrap();
    outcome(
        hi.coherence >= 0.999 && lo.coherence <= 0.99,
        format!(
            "15 kHz: max coherence {:.6} at {:?} (need >= 0.999); 200 Hz: max coherence {:.6} at {:?} (need <= 0.99)",
            hi.coherence, hi.pair, lo.coherence, lo.pair
        ),
    )
}

// 4. KKT on the full dictionary, exact optimum on tiny instances.

const ORACLE_TOL: f64 = 1e-6;

fn c4_solver() -> Outcome {
    let a = sensing_matrix(&ArrayGeometry::default(), 200.0, &default_grid()).unwrap();
    let settings = SolverSettings {
        max_iter: 50_000,
        ..SolverSettings::default()
    };
    let mut kkt_fail = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let z: Vec<Complex64> = (0..16)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let z: Vec<Complex64> = z.iter().map(|v| v / norm).collect();
        let sol = solve_l1(&L1Problem { a: &a, z: &z, settings }).unwrap();
        let k = kkt_report(&a, &z, &sol.x, settings.mu);
        worst = (worst.0.max(k.off_support), worst.1.max(k.on_support));
        if !k.holds() {
            kkt_fail.push(seed);
        }
    }

    let mut gap: f64 = 0.0;
    for seed in 0..20u64 {
        let (cols, z) = common::random_instance(4, 8, 1000 + seed);
        let inf = cols
            .iter()
            .map(|c| c.iter().zip(&z).map(|(p, q)| p.conj() * q).sum::<Complex64>().norm())
            .fold(0.0, f64::max);
        let mu = 2.0 * inf * [0.05, 0.2, 0.4, 0.7][seed as usize % 4];
        let m = common::matrix(&cols);
        let sol = solve_l1(&L1Problem {
            a: &m,
            z: &z,
            settings: SolverSettings {
                mu,
                tol: 1e-12,
                max_iter: 200_000,
            },
        })
        .unwrap();
        let f = common::objective(&cols, &z, &sol.x, mu);
        gap = gap.max((f - common::support_enumeration_oracle(&cols, &z, mu)).abs());
    }
    outcome(
        kkt_fail.is_empty() && gap <= ORACLE_TOL,
        format!(
            "KKT holds on {}/50 dictionary problems (worst off-support {:.5}, on-support {:.5}); max |f - oracle| {gap:.2e} on 20 tiny instances (tol {ORACLE_TOL:.0e})",
            50 - kkt_fail.len(),
            worst.0,
            worst.1
        ),
    )
}

// 5. Resolution sweep at -14 dB.

fn resolution_spec() -> ExperimentSpec {
    let mut theta2: Vec<f64> = (2..10).map(|i| i as f64 * 0.5).collect();
    theta2.extend((5..=25).map(f64::from));
    let axis = theta2.iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(", ");
    ExperimentSpec::from_toml_str(&format!(
        r#"
kind = "resolution-sweep"
trials = 20
theta2 = [{axis}]
algorithms = ["ptft-hscfd", "fft-cfd", "fft-fdmusic"]
[scene]
seed = 5
snr_db = -14.0
[[scene.targets]]
theta = 0.0
[[scene.targets]]
theta = 10.0
"#
    ))
    .unwrap()
}

/// Resolves every swept `θ2 ≥ 5°` and at least one below.
fn meets_resolution(rows: &[ResolutionRow], alg: AlgorithmId) -> (bool, String) {
    let mine: Vec<&ResolutionRow> = rows.iter().filter(|r| r.algorithm == alg).collect();
    let missed: Vec<f64> = mine
        .iter()
        .filter(|r| r.theta2 >= 5.0 && !r.resolved)
        .map(|r| r.theta2)
        .collect();
    let below: Vec<f64> = mine
        .iter()
        .filter(|r| r.theta2 < 5.0 && r.resolved)
        .map(|r| r.theta2)
        .collect();
    let min = below.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = missed.is_empty() && !below.is_empty();
    let min_text = if below.is_empty() { "none below 5".to_string() } else { format!("{min}") };
    (ok, format!("{alg}: min resolved {min_text}, unresolved at >= 5: {missed:?}"))
}

fn c5_resolution() -> Outcome {
    let rows = cmd_resolution_sweep(&resolution_spec()).unwrap();
    let (hs, hs_text) = meets_resolution(&rows, AlgorithmId::PtftHscfd);
    let (cfd, cfd_text) = meets_resolution(&rows, AlgorithmId::FftCfd);
    let (mu, mu_text) = meets_resolution(&rows, AlgorithmId::FftFdmusic);
    outcome(hs && !cfd && !mu, format!("{hs_text}; {cfd_text}; {mu_text}"))
}

// 6. RMSE against input SNR.

const HSCFD_RMSE_MAX: f64 = 0.1;
const PTFT_BASELINE_RMSE_MAX: f64 = 1.0;

fn c6_rmse() -> Outcome {
    let full = std::env::var("DOA_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let trials = if full { 100 } else { 20 };
    let spec = ExperimentSpec::from_toml_str(&format!(
        r#"
kind = "mc-rmse"
trials = {trials}
snr_db = [-24.0, -20.0, -16.0, -12.0, -8.0, -4.0, 0.0]
algorithms = ["ptft-hscfd", "ptft-fdcbf", "ptft-fdmusic", "fft-fdcbf", "fft-fdmusic"]
[scene]
seed = 6
[[scene.targets]]
theta = 0.78
[[scene.targets]]
theta = 15.23
"#
    ))
    .unwrap();
    let report = cmd_mc_rmse(&spec).unwrap();
    // A point with failed trials cannot certify an upper bound.
    let value = |alg: AlgorithmId, snr: f64| -> f64 {
        let row = report
            .rows
            .iter()
            .find(|r| r.algorithm == alg && r.snr_db == snr)
            .unwrap();
        match row.rmse_deg {
            Some(v) if row.failures == 0 => v,
            _ => f64::INFINITY,
        }
    };
    let mut notes = Vec::new();
    let mut pass = true;
    for snr in [-16.0, -12.0, -8.0, -4.0, 0.0] {
        let v = value(AlgorithmId::PtftHscfd, snr);
        pass &= v <= HSCFD_RMSE_MAX;
        notes.push(format!("hscfd@{snr}={v:.3}"));
    }
    for alg in [AlgorithmId::PtftFdcbf, AlgorithmId::PtftFdmusic] {
        let worst = spec.snr_db.iter().map(|&s| value(alg, s)).fold(0.0, f64::max);
        pass &= worst <= PTFT_BASELINE_RMSE_MAX;
        notes.push(format!("{alg} worst={worst:.3}"));
    }
    for alg in [AlgorithmId::FftFdcbf, AlgorithmId::FftFdmusic] {
        let v = value(alg, -24.0);
        pass &= v > PTFT_BASELINE_RMSE_MAX;
        notes.push(format!("{alg}@-24={v:.3}"));
    }
    outcome(
        pass,
        format!(
            "I={trials}: {} (need hscfd <= {HSCFD_RMSE_MAX} for -16..0, ptft fdcbf/fdmusic <= {PTFT_BASELINE_RMSE_MAX} for -24..0, fft fdcbf/fdmusic > {PTFT_BASELINE_RMSE_MAX} at -24)",
            notes.join(", ")
        ),
    )
}

// 7. Histogram readout against the incoherent average.

const RUNS: u64 = 50;
const HIST_TOL_DEG: f64 = 0.3;
const HIST_MIN_FRACTION: f64 = 0.9;
const PSEUDO_PEAK_RATIO: f64 = 0.5;
const PSEUDO_MIN_FRACTION: f64 = 0.2;

fn c7_histogram() -> Outcome {
    let base = scene("seed = 7\nsnr_db = -14.0\n[[targets]]\ntheta = 0.0\n[[targets]]\ntheta = 15.0\n");
    let mut cfg = doa_core::pipeline::PipelineConfig::new(base.geometry, base.pulse, 2);
    cfg.diagnostics = true;
    let pipeline = Pipeline::new(cfg).unwrap();
    let mut hist_ok = 0;
    let mut pseudo = 0;
    for run in 0..RUNS {
        let s = trial_scene(&base, run, true);
        let rec = synthesize_trial(&s, run).unwrap();
        let out = pipeline.run(AlgorithmId::PtftHscfd, &rec).unwrap();
        let diag = out.diagnostics.as_ref().unwrap();
        let pool = diag.peaks.as_ref().unwrap().angles();
        let est = estimate_doas(&pool, pipeline.config().zeta, 2).unwrap();
        if est.theta_deg.len() == 2
            && (est.theta_deg[0] - 0.0).abs() <= HIST_TOL_DEG
            && (est.theta_deg[1] - 15.0).abs() <= HIST_TOL_DEG
        {
            hist_ok += 1;
        }
        let avg = incoherent_average(&diag.spectra).unwrap();
        let peaks = extract_peaks(&avg, 3).unwrap();
        if peaks.len() == 3 && peaks[2].amplitude >= PSEUDO_PEAK_RATIO * peaks[0].amplitude {
            pseudo += 1;
        }
    }
    let hist_frac = hist_ok as f64 / RUNS as f64;
    let pseudo_frac = pseudo as f64 / RUNS as f64;
    outcome(
        hist_frac >= HIST_MIN_FRACTION && pseudo_frac >= PSEUDO_MIN_FRACTION,
        format!(
            "histogram within {HIST_TOL_DEG} deg in {hist_ok}/{RUNS} runs (need >= {:.0}%); third averaged peak >= {PSEUDO_PEAK_RATIO} of max in {pseudo}/{RUNS} runs (need >= {:.0}%)",
            HIST_MIN_FRACTION * 100.0,
            PSEUDO_MIN_FRACTION * 100.0
        ),
    )
}

// 8. Invariants under random inputs.

const CASES: u32 = 128;

fn small_pulse() -> LfmPulse {
    LfmPulse {
        f_low: 1000.0,
        f_high: 2000.0,
        duration: 1.0,
        record: 1.0,
        sample_rate: 5000.0,
    }
}

fn small_scene(targets: Vec<Target>, noise_power: f64, seed: u64) -> Scene {
    scene_with(small_pulse(), targets, noise_power, seed)
}

fn scene_with(pulse: LfmPulse, targets: Vec<Target>, noise_power: f64, seed: u64) -> Scene {
    Scene {
        geometry: ArrayGeometry::default(),
        pulse,
        targets,
        noise_power,
        seed,
    }
}

fn c_of(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn run_property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn c8_properties() -> Outcome {
    let geom = ArrayGeometry::default();
    let grid = default_grid();
    let dictionary = sensing_matrix(&geom, 200.0, &grid).unwrap();
    let mut results = Vec::new();

    results.push(run_property(
        "superposition",
        (-80.0..80.0f64, -80.0..80.0f64, 0.0..6.3f64, 0.0..0.2f64),
        |(t1, t2, ph, tau)| {
            // Half-length pulse so echoes can be delayed inside the record.
            let pulse = LfmPulse {
                duration: 0.5,
                ..small_pulse()
            };
            let a = Target::new(t1, Complex64::from_polar(1.0, ph), tau);
            let b = Target::new(t2, c_of(0.5, -0.2), 0.1);
            let spectra = |t: Vec<Target>| {
                noiseless_spectra(&scene_with(pulse, t, 0.0, 1)).map_err(|e| TestCaseError::fail(e.to_string()))
            };
            let both = spectra(vec![a, b])?;
            let sa = spectra(vec![a])?;
            let sb = spectra(vec![b])?;
            let scale = both.bins.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for ((x, y), z) in both.bins.iter().zip(sa.bins.iter()).zip(sb.bins.iter()) {
                prop_assert!((x - y - z).norm() <= 1e-9 * scale);
            }
            Ok(())
        },
    ));

    results.push(run_property(
        "fd steering identity",
        (-90.0..90.0f64, 1000.0..20000.0f64, 10.0..500.0f64),
        |(theta, f, df)| {
            let lo = steering_vector(&geom, f, theta).entries;
            let hi = steering_vector(&geom, f + df, theta).entries;
            let fd = fd_steering(&geom, df, theta).entries;
            for ((h, l), d) in hi.iter().zip(&lo).zip(&fd) {
                prop_assert!((h * l.conj() - d).norm() <= 1e-9);
            }
            Ok(())
        },
    ));

    results.push(run_property(
        "scale and argmax invariance",
        (
            proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
            0.01..100.0f64,
            0.0..6.3f64,
        ),
        |(entries, mag, ph)| {
            let z: Vec<Complex64> = entries.iter().map(|&(r, i)| c_of(r, i)).collect();
            prop_assume!(z.iter().any(|v| v.norm() > 1e-3));
            let c = Complex64::from_polar(mag, ph);
            let snap = FdSnapshot { z: z.clone(), f_lo: 15000.0, f_hi: 15200.0 };
            let scaled = FdSnapshot { z: z.iter().map(|v| v * c).collect(), ..snap.clone() };
            let p = cbf_spectrum(&snap, &dictionary).unwrap();
            let q = cbf_spectrum(&scaled, &dictionary).unwrap();
            for (u, v) in p.values.iter().zip(&q.values) {
                prop_assert!((u - v).abs() <= 1e-9);
            }
            prop_assert!(p.values.iter().all(|&v| v <= 1.0 + 1e-12));
            let m1 = music_spectrum(std::slice::from_ref(&snap), &dictionary, 1).unwrap();
            let m2 = music_spectrum(std::slice::from_ref(&scaled), &dictionary, 1).unwrap();
            prop_assert_eq!(m1.argmax(), m2.argmax());
            Ok(())
        },
    ));

    results.push(run_property(
        "soft threshold prox",
        (-10.0..10.0f64, -10.0..10.0f64, 0.0..5.0f64, -10.0..10.0f64, -10.0..10.0f64),
        |(re, im, t, ur, ui)| {
            let v = c_of(re, im);
            let s = soft_threshold(v, t);
            prop_assert!((s.norm() - (v.norm() - t).max(0.0)).abs() <= 1e-12);
            if s.norm() > 0.0 {
                prop_assert!((s.arg() - v.arg()).abs() <= 1e-9);
            }
            // s minimizes ½|u − v|² + t|u|.
            let prox = |u: Complex64| 0.5 * (u - v).norm_sqr() + t * u.norm();
            prop_assert!(prox(s) <= prox(c_of(ur, ui)) + 1e-12);
            prop_assert_eq!(soft_threshold(v, 0.0), v);
            Ok(())
        },
    ));

    results.push(run_property(
        "histogram permutation invariance",
        (proptest::collection::vec(-90.0..90.0f64, 4..60), any::<u64>(), 1usize..4),
        |(pool, seed, k)| {
            let mut shuffled = pool.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let a = estimate_doas(&pool, 2.0, k);
            let b = estimate_doas(&shuffled, 2.0, k);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a.bins, &b.bins);
                    prop_assert_eq!(&a.counts, &b.counts);
                    for (x, y) in a.theta_deg.iter().zip(&b.theta_deg) {
                        prop_assert!((x - y).abs() <= 1e-9);
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "outcomes differ: {:?} vs {:?}", a.is_ok(), b.is_ok()),
            }
            Ok(())
        },
    ));

    let small = Pipeline::new(doa_core::pipeline::PipelineConfig::new(geom, small_pulse(), 2)).unwrap();
    results.push(run_property(
        "determinism under fixed seeds",
        (any::<u64>(), 0u64..1000, -60.0..60.0f64, -60.0..60.0f64),
        |(seed, trial, t1, t2)| {
            let base = small_scene(
                vec![Target::new(t1, c_of(1.0, 0.0), 0.0), Target::new(t2, c_of(1.0, 0.0), 0.0)],
                0.1,
                seed,
            );
            let s1 = trial_scene(&base, trial, true);
            let s2 = trial_scene(&base, trial, true);
            prop_assert_eq!(&s1, &s2);
            let r1 = synthesize_trial(&s1, trial).unwrap();
            let r2 = synthesize_trial(&s2, trial).unwrap();
            prop_assert_eq!(&r1, &r2);
            let o1 = small.run_many(&[AlgorithmId::FftFdcbf, AlgorithmId::PtftHscfd], &r1).unwrap();
            let o2 = small.run_many(&[AlgorithmId::FftFdcbf, AlgorithmId::PtftHscfd], &r2).unwrap();
            prop_assert_eq!(o1, o2);
            Ok(())
        },
    ));

    let failures: Vec<String> = results.into_iter().filter_map(|r| r.err()).collect();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("6 properties x {CASES} cases")
        } else {
            failures.join("; ")
        },
    )
}
