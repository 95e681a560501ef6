//! Moment-matching calibration of (eta, beta, gamma).
//!
//! Two conditional moments drive the fit, both computed on multiplicity
//! series: f1(M; J) is the probability that a bin with multiplicity >= M is
//! followed within tau minutes by a bin with multiplicity >= J, and f2(M) is
//! the average multiplicity of the nonzero bins inside those forward
//! windows. Model moments come from Monte-Carlo paths; the loss is
//!
//! ```text
//! chi2_(i) = sum_{M in S} (a_d - a_m)^2 / (delta_d^2 + delta_m^2)
//! total    = chi2_(1) + 0.5 * chi2_(2)
//! ```
//!
//! minimized over a 0.05-spaced parameter grid.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cojump_stats::MultiplicitySeries;
use crate::error::{Error, Result};
use crate::hawkes::{bin_to_multiplicity, build_kernel, simulate, BinRule, HawkesParams};
use crate::seeding::derive_seed;

/// A sample moment with its standard error; `n == 0` marks an empty
/// conditioning set (mean and stderr are reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MomentEstimate {
    pub const EMPTY: MomentEstimate = MomentEstimate {
        mean: 0.0,
        stderr: 0.0,
        n: 0,
    };

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Largest multiplicity inside the forward window (t, t+tau], per t.
fn forward_window_max(m: &[u32], tau: usize) -> Vec<u32> {
    let len = m.len();
    let mut out = vec![0u32; len];
    let mut window: VecDeque<usize> = VecDeque::new(); // indices, m decreasing
    for t in (0..len).rev() {
        let gained = t + 1;
        if gained < len {
            while let Some(&back) = window.back() {
                if m[back] <= m[gained] {
                    window.pop_back();
                } else {
                    break;
                }
            }
            window.push_back(gained);
        }
        while let Some(&front) = window.front() {
            if front > t + tau {
                window.pop_front();
            } else {
                break;
            }
        }
        out[t] = window.front().map_or(0, |&i| m[i]);
    }
    out
}

/// P[exists t' in (t, t+tau] with m >= J | m_t >= M], with binomial
/// standard error. Conditioning bins whose window runs past the series end
/// are excluded.
pub fn f1(ms: &MultiplicitySeries, m_min: u32, j: u32, tau: usize) -> MomentEstimate {
    if tau == 0 || ms.len() <= tau {
        return MomentEstimate::EMPTY;
    }
    let window_max = forward_window_max(&ms.m, tau);
    let mut n = 0usize;
    let mut hits = 0usize;
    for t in 0..=(ms.len() - 1 - tau) {
        if ms.m[t] >= m_min {
            n += 1;
            if window_max[t] >= j {
                hits += 1;
            }
        }
    }
    if n == 0 {
        return MomentEstimate::EMPTY;
    }
    let p = hits as f64 / n as f64;
    MomentEstimate {
        mean: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
        n,
    }
}

/// E[m_t' | m_t >= M, t' in (t, t+tau], m_t' > 0], pooling the nonzero bins
/// of every conditioning window (bins covered by several windows count once
/// per window). Standard error is the pooled sample sd / sqrt(n).
pub fn f2(ms: &MultiplicitySeries, m_min: u32, tau: usize) -> MomentEstimate {
    if tau == 0 || ms.len() <= tau {
        return MomentEstimate::EMPTY;
    }
    let mut n = 0usize;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for t in 0..=(ms.len() - 1 - tau) {
        if ms.m[t] >= m_min {
            for s in (t + 1)..=(t + tau) {
                if ms.m[s] > 0 {
                    let v = ms.m[s] as f64;
                    n += 1;
                    sum += v;
                    sum_sq += v * v;
                }
            }
        }
    }
    if n == 0 {
        return MomentEstimate::EMPTY;
    }
    let mean = sum / n as f64;
    let stderr = if n >= 2 {
        let var = (sum_sq - sum * sum / n as f64) / (n - 1) as f64;
        (var.max(0.0) / n as f64).sqrt()
    } else {
        0.0
    };
    MomentEstimate { mean, stderr, n }
}

/// f1 and f2 sampled over a conditioning grid S.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentProfile {
    pub tau: usize,
    pub j_threshold: u32,
    pub m_grid: Vec<u32>,
    pub f1: BTreeMap<u32, MomentEstimate>,
    pub f2: BTreeMap<u32, MomentEstimate>,
}

/// Data-side profile: both moments evaluated directly on the series.
pub fn moment_profile(
    ms: &MultiplicitySeries,
    tau: usize,
    j_threshold: u32,
    m_grid: &[u32],
) -> MomentProfile {
    let mut p1 = BTreeMap::new();
    let mut p2 = BTreeMap::new();
    for &m in m_grid {
        p1.insert(m, f1(ms, m, j_threshold, tau));
        p2.insert(m, f2(ms, m, tau));
    }
    MomentProfile {
        tau,
        j_threshold,
        m_grid: m_grid.to_vec(),
        f1: p1,
        f2: p2,
    }
}

/// Weighted squared-distance breakdown between two profiles.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Chi2Loss {
    pub chi2_1: f64,
    pub chi2_2: f64,
    pub total: f64,
    /// Grid points skipped because one side was empty (f1, f2).
    pub skipped_1: usize,
    pub skipped_2: usize,
}

fn chi2_term(d: &MomentEstimate, m: &MomentEstimate) -> Option<f64> {
    if d.is_empty() || m.is_empty() {
        return None;
    }
    let denom = d.stderr * d.stderr + m.stderr * m.stderr;
    let diff = d.mean - m.mean;
    if denom == 0.0 {
        Some(if diff == 0.0 { 0.0 } else { f64::INFINITY })
    } else {
        Some(diff * diff / denom)
    }
}

/// chi2_(1) + 0.5 * chi2_(2) over the shared conditioning grid.
pub fn chi2_loss(data: &MomentProfile, model: &MomentProfile) -> Result<Chi2Loss> {
    let shared: Vec<u32> = data
        .m_grid
        .iter()
        .copied()
        .filter(|m| model.m_grid.contains(m))
        .collect();
    if shared.is_empty() {
        return Err(Error::InvalidInput(
            "data and model conditioning grids are disjoint".into(),
        ));
    }
    let mut chi2_1 = 0.0;
    let mut chi2_2 = 0.0;
    let mut skipped_1 = 0;
    let mut skipped_2 = 0;
    for m in shared {
        match chi2_term(&data.f1[&m], &model.f1[&m]) {
            Some(v) => chi2_1 += v,
            None => skipped_1 += 1,
        }
        match chi2_term(&data.f2[&m], &model.f2[&m]) {
            Some(v) => chi2_2 += v,
            None => skipped_2 += 1,
        }
    }
    Ok(Chi2Loss {
        chi2_1,
        chi2_2,
        total: chi2_1 + 0.5 * chi2_2,
        skipped_1,
        skipped_2,
    })
}

/// Monte-Carlo budget for one model evaluation.
#[derive(Debug, Clone)]
pub struct ModelMomentConfig {
    pub n_paths: usize,
    /// Simulated minutes per path; conventionally the data series length.
    pub horizon: f64,
    pub seed: u64,
    pub bin_rule: BinRule,
}

/// Simulate `n_paths` streams, bin each, and aggregate per-path moments:
/// the profile mean is the across-path average and its stderr the
/// across-path standard error. Grid points with fewer than two non-empty
/// paths are marked empty.
pub fn model_moments(
    params: &HawkesParams,
    tau: usize,
    j_threshold: u32,
    m_grid: &[u32],
    cfg: &ModelMomentConfig,
) -> Result<MomentProfile> {
    if cfg.n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be >= 1".into()));
    }
    let km = build_kernel(params)?;
    let per_path: Vec<Result<MomentProfile>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(cfg.seed, k as u64 + 1);
            let es = simulate(&km, params.beta, cfg.horizon, seed)?;
            let ms = bin_to_multiplicity(&es, cfg.bin_rule);
            Ok(moment_profile(&ms, tau, j_threshold, m_grid))
        })
        .collect();

    let mut paths = Vec::with_capacity(cfg.n_paths);
    for p in per_path {
        paths.push(p?);
    }

    let aggregate = |pick: &dyn Fn(&MomentProfile, u32) -> MomentEstimate| {
        let mut out = BTreeMap::new();
        for &m in m_grid {
            let vals: Vec<f64> = paths
                .iter()
                .map(|p| pick(p, m))
                .filter(|e| !e.is_empty())
                .map(|e| e.mean)
                .collect();
            let est = if vals.len() < 2 {
                MomentEstimate::EMPTY
            } else {
                let k = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / k;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
                MomentEstimate {
                    mean,
                    stderr: (var / k).sqrt(),
                    n: vals.len(),
                }
            };
            out.insert(m, est);
        }
        out
    };

    Ok(MomentProfile {
        tau,
        j_threshold,
        m_grid: m_grid.to_vec(),
        f1: aggregate(&|p, m| p.f1[&m]),
        f2: aggregate(&|p, m| p.f2[&m]),
    })
}

/// Inclusive arithmetic grid over one parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || max < min {
            return Err(Error::InvalidInput(format!(
                "bad grid axis {min}:{max}:{step}"
            )));
        }
        Ok(GridAxis { min, max, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.min + i as f64 * self.step).collect()
    }
}

/// Default 0.05-spaced search region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub eta: GridAxis,
    pub beta: GridAxis,
    pub gamma: GridAxis,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            eta: GridAxis {
                min: 0.05,
                max: 0.95,
                step: 0.05,
            },
            beta: GridAxis {
                min: 0.05,
                max: 3.0,
                step: 0.05,
            },
            gamma: GridAxis {
                min: 1.0,
                max: 5.0,
                step: 0.05,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSearchConfig {
    pub grid: GridSpec,
    pub lambda_bar: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
    pub seed: u64,
    pub bin_rule: BinRule,
}

/// Loss at one grid point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurfacePoint {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub chi2_1: f64,
    pub chi2_2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub loss: f64,
    pub chi2_1: f64,
    pub chi2_2: f64,
    pub n_mc_paths: usize,
    pub n_grid_points: usize,
    pub seed: u64,
    /// Full grid, written separately as CSV; omitted from the JSON summary.
    #[serde(skip)]
    pub surface: Vec<SurfacePoint>,
}

/// Smallest total loss; ties break lexicographically on (eta, beta, gamma).
pub(crate) fn select_argmin(points: &[SurfacePoint]) -> usize {
    let key = |p: &SurfacePoint| {
        let total = if p.total.is_nan() { f64::INFINITY } else { p.total };
        (total, p.eta, p.beta, p.gamma)
    };
    let mut best = 0usize;
    for i in 1..points.len() {
        let (a, b) = (key(&points[i]), key(&points[best]));
        if a.0 < b.0
            || (a.0 == b.0 && (a.1, a.2, a.3) < (b.1, b.2, b.3))
        {
            best = i;
        }
    }
    best
}

/// Evaluate the total loss at every grid point and return the argmin plus
/// the full surface. Each point gets a seed derived from the base seed and
/// its grid index, so results do not depend on scheduling.
pub fn grid_search(data: &MomentProfile, cfg: &GridSearchConfig) -> Result<CalibrationResult> {
    let etas = cfg.grid.eta.values();
    let betas = cfg.grid.beta.values();
    let gammas = cfg.grid.gamma.values();
    let n_points = etas.len() * betas.len() * gammas.len();
    if n_points == 0 {
        return Err(Error::InvalidInput("empty parameter grid".into()));
    }

    let surface: Vec<SurfacePoint> = (0..n_points)
        .into_par_iter()
        .map(|idx| {
            let ie = idx / (betas.len() * gammas.len());
            let ib = (idx / gammas.len()) % betas.len();
            let ig = idx % gammas.len();
            let params = HawkesParams {
                n: cfg.lambda_bar.len(),
                eta: etas[ie],
                beta: betas[ib],
                gamma: gammas[ig],
                lambda_bar: cfg.lambda_bar.clone(),
            };
            let mm_cfg = ModelMomentConfig {
                n_paths: cfg.n_paths,
                horizon: cfg.horizon,
                seed: derive_seed(cfg.seed, idx as u64),
                bin_rule: cfg.bin_rule,
            };
            let model = model_moments(&params, data.tau, data.j_threshold, &data.m_grid, &mm_cfg)?;
            let loss = chi2_loss(data, &model)?;
            Ok(SurfacePoint {
                eta: etas[ie],
                beta: betas[ib],
                gamma: gammas[ig],
                chi2_1: loss.chi2_1,
                chi2_2: loss.chi2_2,
                total: loss.total,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = select_argmin(&surface);
    let p = surface[best];
    Ok(CalibrationResult {
        eta: p.eta,
        beta: p.beta,
        gamma: p.gamma,
        loss: p.total,
        chi2_1: p.chi2_1,
        chi2_2: p.chi2_2,
        n_mc_paths: cfg.n_paths,
        n_grid_points: n_points,
        seed: cfg.seed,
        surface,
    })
}

/// Uniform random permutation of the series; the value multiset is
/// preserved exactly.
pub fn shuffle_benchmark(ms: &MultiplicitySeries, seed: u64) -> MultiplicitySeries {
    let mut shuffled = ms.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.m.shuffle(&mut rng);
    shuffled
}
