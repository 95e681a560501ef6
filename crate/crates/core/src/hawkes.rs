//! N-dimensional exponential-kernel Hawkes process over the multiplicity
//! vector: an event of type i means "a cojump of multiplicity i occurred".
//!
//! The kernel matrix is pinned down by three scalars plus the stationary
//! intensity vector:
//!
//! ```text
//! Sigma_ij = (|i - j| + 1)^(-gamma)
//! D_ii     = (1 - eta) * lambda_bar_i / sum_j lambda_bar_j * Sigma_ij
//! Gamma    = D * Sigma          mu = eta * lambda_bar
//! ```
//!
//! so lambda_bar is the Perron eigenvector of Gamma with eigenvalue 1 - eta,
//! the spectral radius. All eigenvalues are real because Gamma is similar to
//! the symmetric matrix sqrt(D) * Sigma * sqrt(D). Simulation is exact Ogata
//! thinning: intensities decay at the common rate beta between events and a
//! type-j event shocks every lambda_i by alpha_ij = beta * Gamma_ij.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cojump_stats::MultiplicitySeries;
use crate::error::{Error, Result};

/// Model parameters: dimension, exogenous fraction eta, kernel decay beta
/// (1/minute), cross-excitation tail gamma, and the stationary intensity
/// vector (events/minute per multiplicity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HawkesParams {
    pub n: usize,
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_bar: Vec<f64>,
}

impl HawkesParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.lambda_bar.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "lambda_bar length {} != n {}",
                self.lambda_bar.len(),
                self.n
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidInput(format!("eta {} outside (0,1)", self.eta)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidInput("beta must be > 0".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidInput("gamma must be > 0".into()));
        }
        if self.lambda_bar.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput(
                "lambda_bar must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let p: HawkesParams = serde_json::from_str(raw)?;
        p.validate()?;
        Ok(p)
    }
}

/// Cross-excitation profile: sigma(|i - j|) = (|i - j| + 1)^(-gamma).
pub fn sigma_entry(i: usize, j: usize, gamma: f64) -> f64 {
    let d = i.abs_diff(j) as f64;
    (d + 1.0).powf(-gamma)
}

/// Assembled kernel: Gamma = D * Sigma with baseline mu = eta * lambda_bar.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub gamma_matrix: DMatrix<f64>,
    pub d_diag: DVector<f64>,
    pub sigma_matrix: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub eta: f64,
    pub lambda_bar: DVector<f64>,
}

const EIGEN_IDENTITY_TOL: f64 = 1e-10;

/// Build the kernel and verify Gamma * lambda_bar = (1 - eta) * lambda_bar
/// before returning it.
pub fn build_kernel(p: &HawkesParams) -> Result<KernelMatrix> {
    p.validate()?;
    let n = p.n;
    let lambda_bar = DVector::from_column_slice(&p.lambda_bar);

    let sigma_matrix = DMatrix::from_fn(n, n, |i, j| sigma_entry(i, j, p.gamma));
    // D_ii = (1 - eta) * lambda_bar_i / sum_j lambda_bar_j * sigma(|i-j|);
    // mu is proportional to lambda_bar so either works in the ratio
    let mut d_diag = DVector::zeros(n);
    for i in 0..n {
        let denom: f64 = (0..n).map(|j| lambda_bar[j] * sigma_matrix[(i, j)]).sum();
        d_diag[i] = (1.0 - p.eta) * lambda_bar[i] / denom;
    }
    let mut gamma_matrix = sigma_matrix.clone();
    for i in 0..n {
        for j in 0..n {
            gamma_matrix[(i, j)] *= d_diag[i];
        }
    }
    let mu = &lambda_bar * p.eta;

    let image = &gamma_matrix * &lambda_bar;
    let target = 1.0 - p.eta;
    for i in 0..n {
        let rel = (image[i] - target * lambda_bar[i]).abs() / (target * lambda_bar[i]);
        if !(rel < EIGEN_IDENTITY_TOL) {
            return Err(Error::Construction(format!(
                "eigenvector identity violated at component {i}: relative error {rel:e}"
            )));
        }
    }

    Ok(KernelMatrix {
        gamma_matrix,
        d_diag,
        sigma_matrix,
        mu,
        eta: p.eta,
        lambda_bar,
    })
}

/// Eigenvalue report; always real by the symmetric-similarity computation.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    pub spectral_radius: f64,
    /// |Gamma_ii| > sum_{j != i} |Gamma_ij| for every row.
    pub diagonally_dominant: bool,
}

/// Eigenvalues of Gamma via the similar symmetric matrix
/// sqrt(D) * Sigma * sqrt(D).
pub fn spectrum(km: &KernelMatrix) -> SpectrumReport {
    let n = km.gamma_matrix.nrows();
    let sqrt_d: Vec<f64> = km.d_diag.iter().map(|d| d.sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| sqrt_d[i] * km.sigma_matrix[(i, j)] * sqrt_d[j]);
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let spectral_radius = eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let diagonally_dominant = (0..n).all(|i| {
        let off: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| km.gamma_matrix[(i, j)].abs())
            .sum();
        km.gamma_matrix[(i, i)].abs() > off
    });
    SpectrumReport {
        eigenvalues,
        spectral_radius,
        diagonally_dominant,
    }
}

impl KernelMatrix {
    /// Unconditional expected intensities (I - Gamma)^(-1) mu; for a
    /// constructed kernel this is lambda_bar = mu / eta.
    pub fn expected_intensity(&self) -> Result<DVector<f64>> {
        solve_expected_intensity(&self.gamma_matrix, &self.mu)
    }
}

/// Power-iteration estimate of the Perron eigenvalue of a nonnegative
/// matrix; used for reporting when a model is rejected as nonstationary.
fn perron_radius_estimate(gamma: &DMatrix<f64>, iters: usize) -> f64 {
    let n = gamma.nrows();
    let mut x = DVector::from_element(n, 1.0);
    let mut rho = 0.0;
    for _ in 0..iters {
        let y = gamma * &x;
        let norm = y.amax();
        if !(norm > 0.0) {
            return 0.0;
        }
        rho = norm / x.amax();
        x = y / norm;
    }
    rho
}

/// Solve (I - Gamma) x = mu for a nonnegative kernel matrix, refusing
/// nonstationary inputs.
///
/// For entrywise-nonnegative Gamma and strictly positive mu, the system
/// has a nonnegative solution exactly when the spectral radius is below 1
/// (x = mu + Gamma x > 0 with Gamma x <= (1 - min mu_i/x_i) x bounds the
/// radius away from 1), so the solve itself is the stationarity test.
pub fn solve_expected_intensity(
    gamma: &DMatrix<f64>,
    mu: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = gamma.nrows();
    if gamma.iter().any(|&g| g < 0.0) || mu.iter().any(|&m| m < 0.0) {
        return Err(Error::InvalidInput(
            "kernel matrix and baseline must be nonnegative".into(),
        ));
    }
    let system = DMatrix::identity(n, n) - gamma;
    let scale = mu.amax().max(1.0);
    match system.lu().solve(mu) {
        Some(x) if x.iter().all(|&v| v >= -1e-12 * scale) => Ok(x),
        _ => Err(Error::NonStationary {
            spectral_radius: perron_radius_estimate(gamma, 200),
        }),
    }
}

/// One simulated event: continuous time in minutes and the multiplicity it
/// carries (1-based type index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub multiplicity: u32,
}

/// Time-ordered stream over [0, horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub events: Vec<SimEvent>,
    pub horizon: f64,
    pub n_types: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Abort once the event count exceeds this multiple of the stationary
    /// expectation (floored at 1000 events for tiny cases).
    pub cap_multiplier: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { cap_multiplier: 50.0 }
    }
}

/// Exact Ogata thinning with the common-beta exponential kernel.
pub fn simulate(km: &KernelMatrix, beta: f64, horizon: f64, seed: u64) -> Result<EventStream> {
    simulate_raw(&km.gamma_matrix, &km.mu, beta, horizon, seed, SimOptions::default())
}

/// Thinning on an explicit (Gamma, mu) pair; `Gamma = 0` degenerates to N
/// independent Poisson processes with rates mu_i.
pub fn simulate_raw(
    gamma: &DMatrix<f64>,
    mu: &DVector<f64>,
    beta: f64,
    horizon: f64,
    seed: u64,
    opts: SimOptions,
) -> Result<EventStream> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput("beta must be > 0".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput("horizon must be > 0".into()));
    }
    let n = gamma.nrows();
    let expected = solve_expected_intensity(gamma, mu)?;
    let expected_total: f64 = expected.sum() * horizon;
    let cap = ((opts.cap_multiplier * expected_total).ceil() as usize).max(1000);

    let mu_total: f64 = mu.sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<SimEvent> = Vec::new();
    // excitation vector g at reference time t_ref; between events every
    // component decays by the same factor, so the scalar sum tracks it
    let mut g = DVector::<f64>::zeros(n);
    let mut g_sum = 0.0f64;
    let mut t_ref = 0.0f64;
    let mut t_cur = 0.0f64;

    loop {
        let bound = mu_total + g_sum * (-beta * (t_cur - t_ref)).exp();
        if bound <= 0.0 {
            break; // mu = 0 and the excitation has fully died out
        }
        let exp_draw: f64 = rand_distr::Exp1.sample(&mut rng);
        let t_cand = t_cur + exp_draw / bound;
        if t_cand >= horizon {
            break;
        }
        let lambda_total = mu_total + g_sum * (-beta * (t_cand - t_ref)).exp();
        let u: f64 = rng.gen::<f64>() * bound;
        if u <= lambda_total {
            // accept; u is uniform on [0, lambda_total] so it also selects
            // the event type through the cumulative intensities
            let decay = (-beta * (t_cand - t_ref)).exp();
            for i in 0..n {
                g[i] *= decay;
            }
            t_ref = t_cand;
            let mut chosen = n - 1;
            let mut acc = 0.0;
            for i in 0..n {
                acc += mu[i] + g[i];
                if u <= acc {
                    chosen = i;
                    break;
                }
            }
            for i in 0..n {
                g[i] += beta * gamma[(i, chosen)];
            }
            g_sum = g.sum();
            events.push(SimEvent {
                time: t_cand,
                multiplicity: (chosen + 1) as u32,
            });
            if events.len() > cap {
                return Err(Error::RunawayIntensity {
                    events: events.len(),
                    cap,
                });
            }
        }
        t_cur = t_cand;
    }

    Ok(EventStream {
        events,
        horizon,
        n_types: n,
    })
}

use rand_distr::Distribution;

/// How simultaneous (same-bin) events collapse to one multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinRule {
    /// Keep the largest type in the bin (preserves the systemicity of the
    /// minute; collisions are rare at realistic intensities).
    #[default]
    MaxType,
    /// Sum the types, capped at N.
    SumCapped,
    /// Keep the first event's type.
    FirstEvent,
}

/// Map a continuous-time stream onto 1-minute bins.
pub fn bin_to_multiplicity(es: &EventStream, rule: BinRule) -> MultiplicitySeries {
    let n_bins = es.horizon.ceil() as usize;
    let mut m = vec![0u32; n_bins];
    for ev in &es.events {
        let bin = ev.time.floor() as usize;
        if bin >= n_bins {
            continue;
        }
        m[bin] = match rule {
            BinRule::MaxType => m[bin].max(ev.multiplicity),
            BinRule::SumCapped => (m[bin] + ev.multiplicity).min(es.n_types as u32),
            BinRule::FirstEvent => {
                if m[bin] == 0 {
                    ev.multiplicity
                } else {
                    m[bin]
                }
            }
        };
    }
    MultiplicitySeries {
        m,
        n_assets: es.n_types,
        theta: None,
        timescale: 1,
        grid: None,
    }
}

/// Empirical per-minute frequencies of each multiplicity 1..=N, with zero
/// counts floored at 0.5/T so the Perron-Frobenius positivity holds.
pub fn empirical_lambda_bar(ms: &MultiplicitySeries, n: usize) -> Vec<f64> {
    let t = ms.len().max(1) as f64;
    let mut counts = vec![0usize; n + 1];
    for &v in &ms.m {
        let v = v as usize;
        if v >= 1 && v <= n {
            counts[v] += 1;
        }
    }
    (1..=n)
        .map(|i| {
            if counts[i] == 0 {
                0.5 / t
            } else {
                counts[i] as f64 / t
            }
        })
        .collect()
}

/// Synthetic stationary-intensity vector with a power-law multiplicity
/// distribution: pmf_i proportional to i^-(tail_exponent + 1), so the CCDF
/// decays like m^-tail_exponent. `total_rate` is events per minute summed
/// over all multiplicities.
pub fn power_law_lambda_bar(n: usize, tail_exponent: f64, total_rate: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-(tail_exponent + 1.0))).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|p| total_rate * p / z).collect()
}
