//! Minute-bar panel ingestion, log returns, and intraday volatility pattern
//! estimation/removal.
//!
//! Prices arrive as `asset_id,timestamp,close` rows on a regular-session
//! minute grid (09:30-16:00, 390 slots per day by default). Returns are
//! within-day log returns; the first slot of every day is set to zero so no
//! overnight gap leaks into the series. The U-shaped intraday pattern is
//! estimated as the average over asset-days of absolute returns rescaled by
//! that day's volatility, and removed by division, after which the panel is
//! treated as a single series with no periodic structure.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Regular-session minute grid: a run of trading dates, each holding
/// `slots_per_day` bins of `minutes_per_slot` minutes starting at
/// `session_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub dates: Vec<NaiveDate>,
    pub session_start: NaiveTime,
    pub slots_per_day: usize,
    pub minutes_per_slot: usize,
}

impl TimeGrid {
    pub fn len(&self) -> usize {
        self.dates.len() * self.slots_per_day
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// (day, slot) of global bin index `t`.
    pub fn day_slot(&self, t: usize) -> (usize, usize) {
        (t / self.slots_per_day, t % self.slots_per_day)
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        let (day, slot) = self.day_slot(t);
        self.dates[day]
            .and_time(self.session_start)
            .checked_add_signed(chrono::Duration::minutes(
                (slot * self.minutes_per_slot) as i64,
            ))
            .expect("timestamp within day")
    }

    pub fn is_day_start(&self, t: usize) -> bool {
        t % self.slots_per_day == 0
    }
}

/// Dense panel of strictly positive minute closing prices, one row per asset.
#[derive(Debug, Clone)]
pub struct PricePanel {
    pub asset_ids: Vec<String>,
    pub grid: TimeGrid,
    /// N x T closes.
    pub prices: Array2<f64>,
}

impl PricePanel {
    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_minutes(&self) -> usize {
        self.grid.len()
    }
}

/// Per-slot positive intraday factors; one row when pooled across assets,
/// N rows otherwise. Slot 0 is pinned at 1.0 because the first return of
/// every day is zero by convention.
#[derive(Debug, Clone)]
pub struct IntradayPattern {
    pub factors: Array2<f64>,
    pub pooled: bool,
}

impl IntradayPattern {
    pub fn flat(n_slots: usize) -> Self {
        IntradayPattern {
            factors: Array2::ones((1, n_slots)),
            pooled: true,
        }
    }

    pub fn factor(&self, asset: usize, slot: usize) -> f64 {
        let row = if self.pooled { 0 } else { asset };
        self.factors[[row, slot]]
    }

    pub fn n_slots(&self) -> usize {
        self.factors.ncols()
    }
}

/// Log returns on the same grid as the source panel.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    pub asset_ids: Vec<String>,
    pub grid: TimeGrid,
    /// N x T log returns; slot 0 of each day is 0 (overnight excluded).
    pub returns: Array2<f64>,
    pub normalized: bool,
    /// Present once the panel has been normalized. Aggregating to a coarser
    /// timescale drops it (the per-slot factors have no meaning there).
    pub pattern: Option<IntradayPattern>,
}

impl ReturnPanel {
    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_minutes(&self) -> usize {
        self.grid.len()
    }
}

/// Column/format descriptor and fill policy for `load_price_panel`.
#[derive(Debug, Clone)]
pub struct LoadSpec {
    pub session_start: NaiveTime,
    pub session_end: NaiveTime,
    /// Assets missing more than this fraction of grid minutes are rejected.
    pub max_missing_frac: f64,
    /// Trading dates to drop entirely (early closes, holidays).
    pub exclude_dates: Vec<NaiveDate>,
}

impl Default for LoadSpec {
    fn default() -> Self {
        LoadSpec {
            session_start: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            session_end: NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            max_missing_frac: 0.10,
            exclude_dates: Vec::new(),
        }
    }
}

impl LoadSpec {
    pub fn slots_per_day(&self) -> usize {
        let span = self.session_end - self.session_start;
        span.num_minutes().max(0) as usize
    }
}

/// Assets dropped during ingestion and why.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    /// (asset_id, missing fraction) pairs rejected by the missing-data policy.
    pub rejected_assets: Vec<(String, f64)>,
    /// Rows skipped because their date is excluded.
    pub excluded_rows: usize,
}

fn parse_timestamp(raw: &str, line: usize) -> Result<NaiveDateTime> {
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(ts);
        }
    }
    Err(Error::Parse {
        line,
        msg: format!("unparseable timestamp {raw:?}"),
    })
}

/// Load a dense price panel from CSV rows `asset_id,timestamp,close`.
///
/// Missing minutes are forward-filled from the last close of the same day
/// (a leading gap is filled from the first close of that day); assets
/// missing more than `spec.max_missing_frac` of minutes, or an entire day,
/// are rejected and reported.
pub fn load_price_panel<P: AsRef<Path>>(path: P, spec: &LoadSpec) -> Result<(PricePanel, LoadReport)> {
    let file = std::fs::File::open(path.as_ref())?;
    load_price_panel_from_reader(file, spec)
}

pub fn load_price_panel_from_reader<R: Read>(
    reader: R,
    spec: &LoadSpec,
) -> Result<(PricePanel, LoadReport)> {
    let slots_per_day = spec.slots_per_day();
    if slots_per_day == 0 {
        return Err(Error::InvalidInput(
            "session_end must be after session_start".into(),
        ));
    }

    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut rows: Vec<(String, NaiveDate, usize, f64)> = Vec::new();
    let mut dates: BTreeSet<NaiveDate> = BTreeSet::new();
    let mut assets: BTreeSet<String> = BTreeSet::new();
    let mut report = LoadReport::default();

    for (idx, record) in csv_reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header row
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() < 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 columns, got {}", record.len()),
            });
        }
        let asset = record[0].trim().to_string();
        let ts = parse_timestamp(record[1].trim(), line)?;
        let close: f64 = record[2].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("unparseable close {:?}", &record[2]),
        })?;
        if !close.is_finite() || close <= 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("non-positive price {close}"),
            });
        }
        if ts.time().second() != 0 || ts.time().nanosecond() != 0 {
            return Err(Error::Grid {
                line,
                msg: format!("timestamp {ts} is not minute-aligned"),
            });
        }
        if spec.exclude_dates.contains(&ts.date()) {
            report.excluded_rows += 1;
            continue;
        }
        if ts.time() < spec.session_start || ts.time() >= spec.session_end {
            return Err(Error::Grid {
                line,
                msg: format!("timestamp {ts} outside session"),
            });
        }
        let slot = (ts.time() - spec.session_start).num_minutes() as usize;
        dates.insert(ts.date());
        assets.insert(asset.clone());
        rows.push((asset, ts.date(), slot, close));
    }

    if rows.is_empty() {
        return Err(Error::InsufficientData("empty price panel".into()));
    }

    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let date_index: BTreeMap<NaiveDate, usize> =
        dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let asset_list: Vec<String> = assets.into_iter().collect();
    let asset_index: BTreeMap<&str, usize> = asset_list
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();

    let t_total = dates.len() * slots_per_day;
    let mut raw = Array2::<f64>::from_elem((asset_list.len(), t_total), f64::NAN);
    for (asset, date, slot, close) in rows {
        let i = asset_index[asset.as_str()];
        let t = date_index[&date] * slots_per_day + slot;
        raw[[i, t]] = close; // duplicates: last row wins
    }

    // Per-asset missing-data policy, then within-day forward fill.
    let mut kept_ids = Vec::new();
    let mut kept_rows = Vec::new();
    for (i, id) in asset_list.iter().enumerate() {
        let row = raw.row(i);
        let missing = row.iter().filter(|v| v.is_nan()).count();
        let frac = missing as f64 / t_total as f64;
        if frac > spec.max_missing_frac {
            report.rejected_assets.push((id.clone(), frac));
            continue;
        }
        let mut filled: Vec<f64> = row.to_vec();
        let mut whole_day_gap = false;
        for day in 0..dates.len() {
            let lo = day * slots_per_day;
            let hi = lo + slots_per_day;
            let first_obs = (lo..hi).find(|&t| !filled[t].is_nan());
            let Some(first_obs) = first_obs else {
                whole_day_gap = true;
                break;
            };
            for t in lo..first_obs {
                filled[t] = filled[first_obs];
            }
            for t in (first_obs + 1)..hi {
                if filled[t].is_nan() {
                    filled[t] = filled[t - 1];
                }
            }
        }
        if whole_day_gap {
            report.rejected_assets.push((id.clone(), frac));
            continue;
        }
        kept_ids.push(id.clone());
        kept_rows.push(filled);
    }

    if kept_ids.is_empty() {
        return Err(Error::InsufficientData(
            "all assets rejected by the missing-data policy".into(),
        ));
    }

    let mut prices = Array2::<f64>::zeros((kept_ids.len(), t_total));
    for (i, row) in kept_rows.into_iter().enumerate() {
        for (t, v) in row.into_iter().enumerate() {
            prices[[i, t]] = v;
        }
    }

    let grid = TimeGrid {
        dates,
        session_start: spec.session_start,
        slots_per_day,
        minutes_per_slot: 1,
    };
    Ok((
        PricePanel {
            asset_ids: kept_ids,
            grid,
            prices,
        },
        report,
    ))
}

/// Within-day log returns; the first slot of each day is 0.
pub fn compute_log_returns(panel: &PricePanel) -> ReturnPanel {
    let n = panel.n_assets();
    let t_total = panel.n_minutes();
    let mut returns = Array2::<f64>::zeros((n, t_total));
    for i in 0..n {
        for t in 0..t_total {
            if !panel.grid.is_day_start(t) {
                returns[[i, t]] = (panel.prices[[i, t]] / panel.prices[[i, t - 1]]).ln();
            }
        }
    }
    ReturnPanel {
        asset_ids: panel.asset_ids.clone(),
        grid: panel.grid.clone(),
        returns,
        normalized: false,
        pattern: None,
    }
}

/// Options for intraday pattern estimation.
#[derive(Debug, Clone)]
pub struct PatternConfig {
    /// Pool all assets into one pattern (default) or estimate per asset.
    pub pooled: bool,
    /// Lower bound applied to every factor.
    pub floor: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            pooled: true,
            floor: 0.05,
        }
    }
}

/// Average over asset-days of |r| rescaled by that day's mean |r|, per slot.
///
/// Slot 0 carries the structural zero return and is excluded: its factor is
/// 1.0. Factors are rescaled to mean 1 over slots 1..S and floored.
pub fn estimate_intraday_pattern(rp: &ReturnPanel, cfg: &PatternConfig) -> Result<IntradayPattern> {
    if rp.normalized {
        return Err(Error::InvalidInput(
            "pattern must be estimated on raw (non-normalized) returns".into(),
        ));
    }
    let n_days = rp.grid.n_days();
    if n_days < 2 {
        return Err(Error::InsufficientData(format!(
            "pattern estimation needs >= 2 days, got {n_days}"
        )));
    }
    let n = rp.n_assets();
    let slots = rp.grid.slots_per_day;
    let n_patterns = if cfg.pooled { 1 } else { n };

    let mut sums = Array2::<f64>::zeros((n_patterns, slots));
    let mut counts = Array2::<f64>::zeros((n_patterns, slots));
    for i in 0..n {
        let row = if cfg.pooled { 0 } else { i };
        for day in 0..n_days {
            let lo = day * slots;
            let v_day: f64 = (1..slots)
                .map(|s| rp.returns[[i, lo + s]].abs())
                .sum::<f64>()
                / (slots - 1) as f64;
            if v_day <= 0.0 {
                continue; // flat day carries no pattern information
            }
            for s in 1..slots {
                sums[[row, s]] += rp.returns[[i, lo + s]].abs() / v_day;
                counts[[row, s]] += 1.0;
            }
        }
    }

    let mut factors = Array2::<f64>::ones((n_patterns, slots));
    for row in 0..n_patterns {
        for s in 1..slots {
            if counts[[row, s]] > 0.0 {
                factors[[row, s]] = sums[[row, s]] / counts[[row, s]];
            }
        }
        let mean: f64 = (1..slots).map(|s| factors[[row, s]]).sum::<f64>() / (slots - 1) as f64;
        if mean > 0.0 {
            for s in 1..slots {
                factors[[row, s]] /= mean;
            }
        }
        for s in 0..slots {
            factors[[row, s]] = factors[[row, s]].max(cfg.floor);
        }
    }
    Ok(IntradayPattern {
        factors,
        pooled: cfg.pooled,
    })
}

/// Divide returns by the per-slot factors; marks the panel normalized.
pub fn normalize_returns(rp: &ReturnPanel, pattern: &IntradayPattern) -> Result<ReturnPanel> {
    if rp.normalized {
        return Err(Error::InvalidInput("returns already normalized".into()));
    }
    if pattern.n_slots() != rp.grid.slots_per_day {
        return Err(Error::InvalidInput(format!(
            "pattern has {} slots, panel has {}",
            pattern.n_slots(),
            rp.grid.slots_per_day
        )));
    }
    if !pattern.pooled && pattern.factors.nrows() != rp.n_assets() {
        return Err(Error::InvalidInput(
            "per-asset pattern does not match panel assets".into(),
        ));
    }
    if pattern.factors.iter().any(|&f| f <= 0.0) {
        return Err(Error::InvalidInput(
            "pattern factors must be strictly positive".into(),
        ));
    }
    let mut out = rp.returns.clone();
    for i in 0..rp.n_assets() {
        for t in 0..rp.n_minutes() {
            let (_, slot) = rp.grid.day_slot(t);
            out[[i, t]] /= pattern.factor(i, slot);
        }
    }
    Ok(ReturnPanel {
        asset_ids: rp.asset_ids.clone(),
        grid: rp.grid.clone(),
        returns: out,
        normalized: true,
        pattern: Some(pattern.clone()),
    })
}
