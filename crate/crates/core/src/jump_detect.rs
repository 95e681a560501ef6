//! Over-threshold return detection against an EWMA bipower-variation spot
//! volatility, with optional aggregation to coarser (1-5 minute) timescales.
//!
//! A minute is flagged for an asset when |r_t| / sigma_t > theta, where
//! sigma_t is built only from returns strictly before t:
//!
//! ```text
//! sigma2_t = (1 - w) * sigma2_{t-1} + w * (pi/2) * |r_{t-1}| * |r_{t-2}|
//! w = 1 - 2^(-1/halflife)
//! ```
//!
//! The pi/2 factor makes the product of consecutive absolute Gaussian
//! returns an unbiased variance estimate; using a product of two different
//! returns keeps single-minute jumps from inflating their own scale.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::market_data::ReturnPanel;

/// Detection thresholds and EWMA tuning. Time-valued fields are expressed
/// in bins of the panel they are applied to (minutes at timescale 1;
/// `scaled_to` converts them for aggregated panels).
#[derive(Debug, Clone)]
pub struct VolatilityConfig {
    /// Threshold theta of the detection rule.
    pub theta: f64,
    /// EWMA half-life in bins.
    pub ewma_halflife: f64,
    /// Lower bound on sigma.
    pub sigma_floor: f64,
    /// Initialization window; no flags are raised before it ends.
    pub warmup_minutes: usize,
    /// Aggregation scale in minutes (1..=5).
    pub timescale: usize,
    /// Bins at the start of each day that are never flagged.
    pub day_start_mask: usize,
}

impl Default for VolatilityConfig {
    fn default() -> Self {
        VolatilityConfig {
            theta: 4.0,
            ewma_halflife: 60.0,
            sigma_floor: 1e-8,
            warmup_minutes: 120,
            timescale: 1,
            day_start_mask: 10,
        }
    }
}

impl VolatilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::InvalidInput("theta must be > 0".into()));
        }
        if !(self.ewma_halflife > 0.0) {
            return Err(Error::InvalidInput("ewma_halflife must be > 0".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::InvalidInput("sigma_floor must be > 0".into()));
        }
        if self.warmup_minutes < 3 {
            return Err(Error::InvalidInput("warmup must be >= 3 bins".into()));
        }
        if self.timescale < 1 || self.timescale > 5 {
            return Err(Error::InvalidInput(format!(
                "timescale {} outside 1..=5",
                self.timescale
            )));
        }
        Ok(())
    }

    /// Config with time-valued fields converted from minutes to k-minute bins.
    pub fn scaled_to(&self, k: usize) -> VolatilityConfig {
        VolatilityConfig {
            theta: self.theta,
            ewma_halflife: (self.ewma_halflife / k as f64).max(1.0),
            sigma_floor: self.sigma_floor,
            warmup_minutes: self.warmup_minutes.div_ceil(k).max(3),
            timescale: k,
            day_start_mask: self.day_start_mask.div_ceil(k),
        }
    }
}

/// Spot volatility per asset and bin; floored, no look-ahead.
#[derive(Debug, Clone)]
pub struct VolatilitySeries {
    pub sigma: Array2<f64>,
    pub warmup: usize,
}

impl VolatilitySeries {
    /// Constant known volatility, used when the true scale is given.
    pub fn constant(n_assets: usize, n_bins: usize, sigma: f64) -> Self {
        VolatilitySeries {
            sigma: Array2::from_elem((n_assets, n_bins), sigma),
            warmup: 0,
        }
    }
}

/// Boolean flags per asset and bin, plus the provenance of the rule.
#[derive(Debug, Clone)]
pub struct JumpMatrix {
    pub flags: Array2<bool>,
    pub theta: f64,
    pub timescale: usize,
}

impl JumpMatrix {
    pub fn n_assets(&self) -> usize {
        self.flags.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.flags.ncols()
    }

    pub fn total_flags(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// EWMA bipower recursion on a single series. `sigma[t]` uses only
/// `returns[..t]`; indices before `warmup` are filled with the
/// initialization value.
pub fn ewma_bipower_series(
    returns: &[f64],
    halflife: f64,
    sigma_floor: f64,
    warmup: usize,
) -> Result<Vec<f64>> {
    if returns.len() <= warmup {
        return Err(Error::InsufficientData(format!(
            "series length {} <= warmup {}",
            returns.len(),
            warmup
        )));
    }
    if warmup < 3 {
        return Err(Error::InvalidInput("warmup must be >= 3".into()));
    }
    let w = 1.0 - 2f64.powf(-1.0 / halflife);
    let correction = std::f64::consts::FRAC_PI_2;
    let floor2 = sigma_floor * sigma_floor;

    // initialize from the bipower products available inside the warmup window
    let mut init = 0.0;
    for t in 2..warmup {
        init += returns[t - 1].abs() * returns[t - 2].abs();
    }
    init = (correction * init / (warmup - 2) as f64).max(floor2);

    let mut sigma = vec![init.sqrt(); returns.len()];
    let mut s2 = init;
    for t in warmup..returns.len() {
        let product = returns[t - 1].abs() * returns[t - 2].abs();
        s2 = (1.0 - w) * s2 + w * correction * product;
        sigma[t] = s2.max(floor2).sqrt();
    }
    Ok(sigma)
}

/// Per-asset EWMA bipower volatility over the whole panel.
pub fn ewma_bipower_volatility(rp: &ReturnPanel, cfg: &VolatilityConfig) -> Result<VolatilitySeries> {
    cfg.validate()?;
    if !rp.normalized {
        return Err(Error::InvalidInput(
            "volatility expects normalized returns".into(),
        ));
    }
    let n = rp.n_assets();
    let t_total = rp.n_minutes();
    let mut sigma = Array2::zeros((n, t_total));
    for i in 0..n {
        let row: Vec<f64> = rp.returns.row(i).to_vec();
        let s = ewma_bipower_series(&row, cfg.ewma_halflife, cfg.sigma_floor, cfg.warmup_minutes)?;
        for (t, v) in s.into_iter().enumerate() {
            sigma[[i, t]] = v;
        }
    }
    Ok(VolatilitySeries {
        sigma,
        warmup: cfg.warmup_minutes,
    })
}

/// Flag bins where |r|/sigma strictly exceeds theta. Warmup bins and the
/// first `day_start_mask` bins of each day are never flagged.
pub fn detect_jumps(
    rp: &ReturnPanel,
    vs: &VolatilitySeries,
    cfg: &VolatilityConfig,
) -> Result<JumpMatrix> {
    cfg.validate()?;
    if vs.sigma.dim() != rp.returns.dim() {
        return Err(Error::InvalidInput(format!(
            "volatility shape {:?} does not match returns {:?}",
            vs.sigma.dim(),
            rp.returns.dim()
        )));
    }
    let (n, t_total) = rp.returns.dim();
    let mut flags = Array2::from_elem((n, t_total), false);
    for i in 0..n {
        for t in vs.warmup..t_total {
            let (_, slot) = rp.grid.day_slot(t);
            if slot < cfg.day_start_mask {
                continue;
            }
            flags[[i, t]] = rp.returns[[i, t]].abs() / vs.sigma[[i, t]] > cfg.theta;
        }
    }
    Ok(JumpMatrix {
        flags,
        theta: cfg.theta,
        timescale: cfg.timescale,
    })
}

/// Non-overlapping k-minute sums of returns within each day; trailing
/// partial bins are dropped. The aggregated panel keeps the normalized flag
/// but drops the per-slot pattern.
pub fn aggregate_timescale(rp: &ReturnPanel, k: usize) -> Result<ReturnPanel> {
    if k < 1 || k > 5 {
        return Err(Error::InvalidInput(format!("timescale {k} outside 1..=5")));
    }
    if k == 1 {
        return Ok(rp.clone());
    }
    let slots = rp.grid.slots_per_day;
    let new_slots = slots / k;
    if new_slots == 0 {
        return Err(Error::InsufficientData(format!(
            "day of {slots} bins too short for {k}-minute aggregation"
        )));
    }
    let n = rp.n_assets();
    let n_days = rp.grid.n_days();
    let mut out = Array2::zeros((n, n_days * new_slots));
    for i in 0..n {
        for day in 0..n_days {
            for s in 0..new_slots {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += rp.returns[[i, day * slots + s * k + j]];
                }
                out[[i, day * new_slots + s]] = acc;
            }
        }
    }
    let mut grid = rp.grid.clone();
    grid.slots_per_day = new_slots;
    grid.minutes_per_slot = rp.grid.minutes_per_slot * k;
    Ok(ReturnPanel {
        asset_ids: rp.asset_ids.clone(),
        grid,
        returns: out,
        normalized: rp.normalized,
        pattern: None,
    })
}

/// Output of the end-to-end detection run at a given timescale.
#[derive(Debug, Clone)]
pub struct DetectionOutput {
    /// The panel detection actually ran on (aggregated when timescale > 1).
    pub returns: ReturnPanel,
    pub volatility: VolatilitySeries,
    pub jumps: JumpMatrix,
}

/// Aggregate (when `cfg.timescale > 1`), estimate volatility and flag jumps.
/// `cfg` time fields are interpreted in minutes and rescaled to bins.
pub fn run_detection(rp: &ReturnPanel, cfg: &VolatilityConfig) -> Result<DetectionOutput> {
    cfg.validate()?;
    let scaled = cfg.scaled_to(cfg.timescale);
    let panel = aggregate_timescale(rp, cfg.timescale)?;
    let vs = ewma_bipower_volatility(&panel, &scaled)?;
    let jumps = detect_jumps(&panel, &vs, &scaled)?;
    Ok(DetectionOutput {
        returns: panel,
        volatility: vs,
        jumps,
    })
}
