//! Coarse-to-fine histogram statistics over pooled per-pair peak angles.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, DoaError, Result};

/// Slack for interval membership tests, degrees.
const EDGE_TOL: f64 = 1e-9;

/// Default coarse bin width, degrees.
pub const DEFAULT_ZETA: f64 = 2.0;

/// Counts over `[−90 : ζ : 90]`; bin `b` covers `[−90 + bζ, −90 + (b+1)ζ)`
/// and the last bin also takes its right edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseHistogram {
    pub zeta: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl CoarseHistogram {
    pub fn new(pool: &[f64], zeta: f64) -> Result<Self> {
        ensure_param!(zeta > 0.0 && zeta <= 180.0, "zeta must be in (0, 180], got {zeta}");
        let bins = ((180.0 / zeta) - EDGE_TOL).ceil().max(1.0) as usize;
        let mut edges: Vec<f64> = (0..bins).map(|b| -90.0 + b as f64 * zeta).collect();
        edges.push(90.0);
        let mut counts = vec![0; bins];
        for &theta in pool {
            counts[bin_index(theta, zeta, bins)?] += 1;
        }
        Ok(Self { zeta, edges, counts })
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn left_edge(&self, bin: usize) -> f64 {
        self.edges[bin]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn bin_index(theta: f64, zeta: f64, bins: usize) -> Result<usize> {
    ensure_param!(
        theta.is_finite() && (-90.0 - EDGE_TOL..=90.0 + EDGE_TOL).contains(&theta),
        "pooled angle {theta} outside [-90, 90]"
    );
    let raw = ((theta + 90.0) / zeta + EDGE_TOL).floor().max(0.0) as usize;
    Ok(raw.min(bins - 1))
}

/// Outcome of the coarse stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseSelection {
    pub histogram: CoarseHistogram,
    /// Selected bin indices, strongest first.
    pub bins: Vec<usize>,
    pub warning: Option<String>,
}

impl CoarseSelection {
    /// Left endpoints `B_k` of the selected bins, strongest first.
    pub fn left_edges(&self) -> Vec<f64> {
        self.bins.iter().map(|&b| self.histogram.left_edge(b)).collect()
    }
}

/// Picks up to `k` highest-count bins, skipping bins adjacent to one already
/// picked; ties go to the lower left endpoint.
pub fn coarse_select(pool: &[f64], zeta: f64, k: usize) -> Result<CoarseSelection> {
    ensure_param!(!pool.is_empty(), "angle pool is empty");
    ensure_param!(k >= 1, "target count must be at least 1");
    let histogram = CoarseHistogram::new(pool, zeta)?;
    let mut order: Vec<usize> = (0..histogram.num_bins()).collect();
    order.sort_by(|&p, &q| histogram.counts[q].cmp(&histogram.counts[p]).then(p.cmp(&q)));
    let mut bins: Vec<usize> = Vec::with_capacity(k);
    for b in order {
        if bins.len() == k || histogram.counts[b] == 0 {
            break;
        }
        if bins.iter().any(|&s| s.abs_diff(b) == 1) {
            continue;
        }
        bins.push(b);
    }
    let warning = (bins.len() < k).then(|| {
        format!(
            "only {} non-adjacent nonempty bins for {} targets",
            bins.len(),
            k
        )
    });
    Ok(CoarseSelection {
        histogram,
        bins,
        warning,
    })
}

/// The three overlapping intervals around a coarse bin and their counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedBin {
    pub left: f64,
    pub zeta: f64,
    /// Closed intervals `[B−ζ/2, B+ζ/2]`, `[B, B+ζ]`, `[B+ζ/2, B+3ζ/2]`.
    pub intervals: [(f64, f64); 3],
    pub chi: [usize; 3],
    /// Index (0-based) of the winning interval.
    pub chosen: usize,
}

impl RefinedBin {
    pub fn chosen_interval(&self) -> (f64, f64) {
        self.intervals[self.chosen]
    }

    pub fn contains(&self, theta: f64) -> bool {
        let (lo, hi) = self.chosen_interval();
        in_closed(theta, lo, hi)
    }
}

fn in_closed(theta: f64, lo: f64, hi: f64) -> bool {
    theta >= lo - EDGE_TOL && theta <= hi + EDGE_TOL
}

/// Counts pooled angles in the three intervals around `left` and picks the
/// fullest. Ties prefer the middle interval, then the left, then the right.
pub fn refine_bin(pool: &[f64], left: f64, zeta: f64) -> Result<RefinedBin> {
    ensure_param!(zeta > 0.0 && zeta <= 180.0, "zeta must be in (0, 180], got {zeta}");
    let half = zeta / 2.0;
    let intervals = [
        (left - half, left + half),
        (left, left + zeta),
        (left + half, left + 3.0 * half),
    ];
    let mut chi = [0usize; 3];
    for &theta in pool {
        for (c, &(lo, hi)) in chi.iter_mut().zip(&intervals) {
            if in_closed(theta, lo, hi) {
                *c += 1;
            }
        }
    }
    let mut chosen = 1;
    for i in [0, 2] {
        if chi[i] > chi[chosen] {
            chosen = i;
        }
    }
    Ok(RefinedBin {
        left,
        zeta,
        intervals,
        chi,
        chosen,
    })
}

/// Final estimates with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    /// Estimates in ascending order.
    pub theta_deg: Vec<f64>,
    /// Coarse left endpoint behind each estimate.
    pub bins: Vec<f64>,
    /// Pooled angles averaged into each estimate.
    pub counts: Vec<usize>,
    pub refined: Vec<RefinedBin>,
    pub warning: Option<String>,
}

/// Coarse selection, three-interval refinement, then the mean of the pooled
/// angles inside each chosen interval.
pub fn estimate_doas(pool: &[f64], zeta: f64, k: usize) -> Result<EstimationResult> {
    let coarse = coarse_select(pool, zeta, k)?;
    let mut rows = Vec::with_capacity(coarse.bins.len());
    for left in coarse.left_edges() {
        let refined = refine_bin(pool, left, zeta)?;
        let members: Vec<f64> = pool.iter().copied().filter(|&t| refined.contains(t)).collect();
        if members.is_empty() {
            return Err(DoaError::Internal(format!(
                "chosen interval {:?} around bin {left} is empty",
                refined.chosen_interval()
            )));
        }
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        rows.push((mean, left, members.len(), refined));
    }
    rows.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    Ok(EstimationResult {
        theta_deg: rows.iter().map(|r| r.0).collect(),
        bins: rows.iter().map(|r| r.1).collect(),
        counts: rows.iter().map(|r| r.2).collect(),
        refined: rows.into_iter().map(|r| r.3).collect(),
        warning: coarse.warning,
    })
}
