//! Multiplicity series and the descriptive statistics built on it: jump
//! frequency, systemic fractions, the multiplicity CCDF with a tail-exponent
//! fit, timescale robustness, and the calendar table of events.

use chrono::NaiveDateTime;

use crate::error::{Error, Result};
use crate::jump_detect::{run_detection, JumpMatrix, VolatilityConfig};
use crate::market_data::{ReturnPanel, TimeGrid};

/// Per-bin count of flagged assets. The grid is carried when the series
/// comes from market data; model-binned series have none.
#[derive(Debug, Clone)]
pub struct MultiplicitySeries {
    pub m: Vec<u32>,
    pub n_assets: usize,
    pub theta: Option<f64>,
    pub timescale: usize,
    pub grid: Option<TimeGrid>,
}

impl MultiplicitySeries {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Bins with at least one flagged asset.
    pub fn cojump_minutes(&self) -> usize {
        self.m.iter().filter(|&&v| v >= 1).count()
    }
}

/// One cojump event: a bin with at least one flagged asset. Identities are
/// optional; the multiplicity-only model drops them.
#[derive(Debug, Clone)]
pub struct CojumpEvent {
    pub timestamp: NaiveDateTime,
    pub multiplicity: u32,
    pub asset_ids: Option<Vec<String>>,
}

/// A ratio together with its provenance; `empty` marks a zero denominator,
/// in which case the value is reported as 0 rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlaggedFraction {
    pub value: f64,
    pub numerator: usize,
    pub denominator: usize,
    pub empty: bool,
}

impl FlaggedFraction {
    fn of(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            FlaggedFraction {
                value: 0.0,
                numerator,
                denominator,
                empty: true,
            }
        } else {
            FlaggedFraction {
                value: numerator as f64 / denominator as f64,
                numerator,
                denominator,
                empty: false,
            }
        }
    }
}

/// Column sums of the jump matrix.
pub fn multiplicity_series(jm: &JumpMatrix, grid: Option<TimeGrid>) -> MultiplicitySeries {
    let m = (0..jm.n_bins())
        .map(|t| jm.flags.column(t).iter().filter(|&&f| f).count() as u32)
        .collect();
    MultiplicitySeries {
        m,
        n_assets: jm.n_assets(),
        theta: Some(jm.theta),
        timescale: jm.timescale,
        grid,
    }
}

/// Fraction of bins with at least one flagged asset.
pub fn jump_frequency(ms: &MultiplicitySeries) -> f64 {
    if ms.m.is_empty() {
        return 0.0;
    }
    ms.cojump_minutes() as f64 / ms.len() as f64
}

/// Fraction of cojump bins with multiplicity >= m_min, among bins with
/// multiplicity >= 1.
pub fn systemic_fraction(ms: &MultiplicitySeries, m_min: u32) -> FlaggedFraction {
    let den = ms.cojump_minutes();
    let num = ms.m.iter().filter(|&&v| v >= m_min.max(1)).count();
    FlaggedFraction::of(num, den)
}

/// Empirical CCDF of the multiplicity over cojump bins, plus a Hill tail fit.
#[derive(Debug, Clone)]
pub struct MultiplicityCcdf {
    /// P(M >= m | M >= 1) for m = 1..=n_assets.
    pub support: Vec<u32>,
    pub ccdf: Vec<f64>,
    /// Hill estimate over the top decile, with standard error alpha/sqrt(k);
    /// None when the top of the sample is degenerate.
    pub tail_exponent: Option<(f64, f64)>,
    pub n_cojumps: usize,
}

/// Hill tail-exponent estimate on integer data.
///
/// Tied integer values v are first spread deterministically to
/// v + (i + 0.5)/c, i = 0..c-1 (the expected positions under uniform
/// within-cell smoothing); plain Hill on raw integers is biased low by the
/// ties at the threshold. `top_frac` selects the order statistics used.
pub fn hill_tail_exponent(values: &[u32], top_frac: f64) -> Option<(f64, f64)> {
    if values.len() < 10 {
        return None;
    }
    let mut counts = std::collections::BTreeMap::<u32, usize>::new();
    for &v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    // degenerate top: no variation above the threshold order statistic
    {
        let n = values.len();
        let k = ((n as f64 * top_frac).floor() as usize).clamp(1, n - 1);
        let mut seen = 0usize;
        let mut kth = 0u32;
        for (&v, &c) in counts.iter().rev() {
            seen += c;
            if seen > k {
                kth = v;
                break;
            }
        }
        let max = *counts.keys().next_back().unwrap();
        if kth == max {
            return None;
        }
    }
    let mut xs: Vec<f64> = Vec::with_capacity(values.len());
    for (v, c) in counts {
        for i in 0..c {
            xs.push(v as f64 + (i as f64 + 0.5) / c as f64);
        }
    }
    xs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n = xs.len();
    let k = ((n as f64 * top_frac).floor() as usize).clamp(1, n - 1);
    let threshold = xs[k];
    if threshold <= 0.0 {
        return None;
    }
    let sum_log: f64 = xs[..k].iter().map(|x| (x / threshold).ln()).sum();
    if sum_log <= 0.0 {
        return None;
    }
    let alpha = k as f64 / sum_log;
    Some((alpha, alpha / (k as f64).sqrt()))
}

/// CCDF over cojump bins; errors when the series has no cojumps.
pub fn multiplicity_ccdf(ms: &MultiplicitySeries) -> Result<MultiplicityCcdf> {
    let cojumps: Vec<u32> = ms.m.iter().copied().filter(|&v| v >= 1).collect();
    if cojumps.is_empty() {
        return Err(Error::InsufficientData(
            "no cojump minutes; CCDF undefined".into(),
        ));
    }
    let n = ms.n_assets.max(1);
    let total = cojumps.len() as f64;
    let mut counts = vec![0usize; n + 2];
    for &v in &cojumps {
        counts[(v as usize).min(n + 1)] += 1;
    }
    let mut support = Vec::with_capacity(n);
    let mut ccdf = Vec::with_capacity(n);
    let mut at_least = cojumps.len();
    for m in 1..=n {
        support.push(m as u32);
        ccdf.push(at_least as f64 / total);
        at_least -= counts[m];
    }
    Ok(MultiplicityCcdf {
        support,
        ccdf,
        tail_exponent: hill_tail_exponent(&cojumps, 0.10),
        n_cojumps: cojumps.len(),
    })
}

/// One row of the timescale-robustness table.
#[derive(Debug, Clone)]
pub struct TimescaleRow {
    pub timescale: usize,
    pub fraction: FlaggedFraction,
}

/// systemic_fraction(m_min) recomputed after aggregating to each of the
/// 1..=5 minute scales, with detection re-run on the coarser panels.
pub fn timescale_robustness(
    rp: &ReturnPanel,
    cfg: &VolatilityConfig,
    m_min: u32,
) -> Result<Vec<TimescaleRow>> {
    let mut rows = Vec::with_capacity(5);
    for k in 1..=5usize {
        let mut cfg_k = cfg.clone();
        cfg_k.timescale = k;
        let out = run_detection(rp, &cfg_k)?;
        let ms = multiplicity_series(&out.jumps, Some(out.returns.grid.clone()));
        rows.push(TimescaleRow {
            timescale: k,
            fraction: systemic_fraction(&ms, m_min),
        });
    }
    Ok(rows)
}

/// Events (bins with multiplicity >= min_multiplicity) with timestamps.
pub fn cojump_events(ms: &MultiplicitySeries, min_multiplicity: u32) -> Result<Vec<CojumpEvent>> {
    let grid = ms.grid.as_ref().ok_or_else(|| {
        Error::InvalidInput("multiplicity series has no time grid; events need timestamps".into())
    })?;
    Ok(ms
        .m
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= min_multiplicity.max(1))
        .map(|(t, &v)| CojumpEvent {
            timestamp: grid.timestamp(t),
            multiplicity: v,
            asset_ids: None,
        })
        .collect())
}

/// Plot-ready (day, time-of-day, multiplicity) rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CalendarRow {
    pub day: chrono::NaiveDate,
    pub time_of_day: chrono::NaiveTime,
    pub multiplicity: u32,
}

pub fn cojump_calendar(events: &[CojumpEvent]) -> Vec<CalendarRow> {
    events
        .iter()
        .map(|e| CalendarRow {
            day: e.timestamp.date(),
            time_of_day: e.timestamp.time(),
            multiplicity: e.multiplicity,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn series_of(m: Vec<u32>, n_assets: usize) -> MultiplicitySeries {
        MultiplicitySeries {
            m,
            n_assets,
            theta: Some(4.0),
            timescale: 1,
            grid: None,
        }
    }

    fn jump_matrix_of(flags: Vec<Vec<bool>>) -> JumpMatrix {
        let n = flags.len();
        let t = flags[0].len();
        let mut arr = Array2::from_elem((n, t), false);
        for (i, row) in flags.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                arr[[i, j]] = v;
            }
        }
        JumpMatrix {
            flags: arr,
            theta: 4.0,
            timescale: 1,
        }
    }

    #[test]
    fn all_false_matrix_gives_zero_series() {
        let jm = jump_matrix_of(vec![vec![false; 5]; 3]);
        let ms = multiplicity_series(&jm, None);
        assert_eq!(ms.m, vec![0; 5]);
        assert_eq!(ms.n_assets, 3);
    }

    #[test]
    fn column_counts() {
        let jm = jump_matrix_of(vec![
            vec![false, true, false],
            vec![false, true, true],
            vec![false, false, false],
        ]);
        let ms = multiplicity_series(&jm, None);
        assert_eq!(ms.m, vec![0, 2, 1]);
    }

    #[test]
    fn random_matrix_matches_recount_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 12;
        let t = 200;
        let flags: Vec<Vec<bool>> = (0..n)
            .map(|_| (0..t).map(|_| rng.gen::<f64>() < 0.3).collect())
            .collect();
        let jm = jump_matrix_of(flags.clone());
        let ms = multiplicity_series(&jm, None);
        for tt in 0..t {
            let brute = (0..n).filter(|&i| flags[i][tt]).count() as u32;
            assert_eq!(ms.m[tt], brute);
        }
        let total: u32 = ms.m.iter().sum();
        assert_eq!(total as usize, jm.total_flags());
    }

    #[test]
    fn jump_frequency_cases() {
        assert_eq!(jump_frequency(&series_of(vec![0, 0, 0], 3)), 0.0);
        assert_eq!(jump_frequency(&series_of(vec![1, 2, 3], 3)), 1.0);
        assert_eq!(jump_frequency(&series_of(vec![0, 2, 0, 1], 3)), 0.5);
    }

    #[test]
    fn systemic_fraction_cases() {
        let ms = series_of(vec![0, 5, 30, 60], 60);
        assert_eq!(systemic_fraction(&ms, 1).value, 1.0);
        assert!((systemic_fraction(&ms, 30).value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(systemic_fraction(&ms, 61).value, 0.0);
        let empty = systemic_fraction(&series_of(vec![0, 0], 3), 1);
        assert!(empty.empty);
        assert_eq!(empty.value, 0.0);
    }

    #[test]
    fn systemic_fraction_monotone_in_m_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ms = series_of((0..500).map(|_| rng.gen_range(0..20)).collect(), 20);
        let mut prev = f64::INFINITY;
        for m_min in 1..=21 {
            let f = systemic_fraction(&ms, m_min).value;
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn ccdf_single_value() {
        let ms = series_of(vec![1, 0, 1, 1], 4);
        let c = multiplicity_ccdf(&ms).unwrap();
        assert_eq!(c.ccdf[0], 1.0);
        assert_eq!(c.ccdf[1], 0.0);
    }

    #[test]
    fn ccdf_hand_enumeration() {
        let ms = series_of(vec![1, 1, 2, 4], 4);
        let c = multiplicity_ccdf(&ms).unwrap();
        assert_eq!(c.support, vec![1, 2, 3, 4]);
        assert_eq!(c.ccdf, vec![1.0, 0.5, 0.25, 0.25]);
    }

    #[test]
    fn ccdf_requires_cojumps() {
        let ms = series_of(vec![0, 0], 4);
        assert!(multiplicity_ccdf(&ms).is_err());
    }

    #[test]
    fn ccdf_nonincreasing_and_integer_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let ms = series_of((0..2000).map(|_| rng.gen_range(0..15)).collect(), 15);
        let c = multiplicity_ccdf(&ms).unwrap();
        for w in c.ccdf.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for v in &c.ccdf {
            let scaled = v * c.n_cojumps as f64;
            assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn hill_recovers_discrete_pareto_exponent() {
        // M = floor(U^(-1/1.5)) has P(M >= m) = m^(-1.5) exactly
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws: Vec<u32> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.gen();
                (u.powf(-1.0 / 1.5).floor() as u32).min(1_000_000)
            })
            .collect();
        let (alpha, se) = hill_tail_exponent(&draws, 0.10).unwrap();
        assert!(
            (alpha - 1.5).abs() <= 0.1,
            "hill estimate {alpha} (se {se}) outside 1.5 +- 0.1"
        );
    }

    #[test]
    fn hill_degenerate_returns_none() {
        assert!(hill_tail_exponent(&[1; 100], 0.10).is_none());
        assert!(hill_tail_exponent(&[1, 2, 3], 0.10).is_none());
    }

    #[test]
    fn calendar_pass_through() {
        assert!(cojump_calendar(&[]).is_empty());
        let grid = TimeGrid {
            dates: vec![chrono::NaiveDate::from_ymd_opt(2013, 1, 2).unwrap()],
            session_start: chrono::NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            slots_per_day: 390,
            minutes_per_slot: 1,
        };
        let ms = MultiplicitySeries {
            m: {
                let mut m = vec![0; 390];
                m[0] = 3;
                m[45] = 7;
                m
            },
            n_assets: 10,
            theta: Some(4.0),
            timescale: 1,
            grid: Some(grid),
        };
        let events = cojump_events(&ms, 1).unwrap();
        let rows = cojump_calendar(&events);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].multiplicity, 3);
        assert_eq!(
            rows[1].time_of_day,
            chrono::NaiveTime::from_hms_opt(10, 15, 0).unwrap()
        );
        let single = cojump_calendar(&events[..1]);
        assert_eq!(single.len(), 1);
    }
}
