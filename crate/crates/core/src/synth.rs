//! Seeded synthetic data: Gaussian minute-return panels with a configurable
//! intraday U-shape, planted cojumps, and scheduled news timestamps. Used to
//! exercise the pipeline without proprietary market or news data.

use chrono::{Datelike, NaiveDate, NaiveTime, Weekday};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::market_data::{IntradayPattern, PricePanel, ReturnPanel, TimeGrid};
use crate::news_match::{Importance, NewsRecord};

/// A cojump planted at one minute: the first `multiplicity` assets get a
/// return of `amplitude_sigmas` times the base scale.
#[derive(Debug, Clone, Copy)]
pub struct PlantedCojump {
    pub day: usize,
    pub slot: usize,
    pub multiplicity: usize,
    pub amplitude_sigmas: f64,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_assets: usize,
    pub n_days: usize,
    pub slots_per_day: usize,
    pub start_date: NaiveDate,
    pub session_start: NaiveTime,
    /// Base per-minute return standard deviation.
    pub return_sd: f64,
    /// 0 gives a flat profile; positive values bend it into the open/close
    /// U-shape (parabola with mean 1, amplitude a fraction of 12).
    pub u_shape_amplitude: f64,
    pub planted: Vec<PlantedCojump>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_assets: 10,
            n_days: 5,
            slots_per_day: 390,
            start_date: NaiveDate::from_ymd_opt(2013, 1, 2).unwrap(),
            session_start: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            return_sd: 1e-3,
            u_shape_amplitude: 0.0,
            planted: Vec::new(),
            seed: 0,
        }
    }
}

/// Weekday dates starting at `start`, `n` of them.
pub fn trading_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(n);
    let mut d = start;
    while dates.len() < n {
        if d.weekday() != Weekday::Sat && d.weekday() != Weekday::Sun {
            dates.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    dates
}

fn u_shape_factor(slot: usize, slots: usize, amplitude: f64) -> f64 {
    if amplitude == 0.0 || slots <= 1 {
        return 1.0;
    }
    let x = slot as f64 / (slots - 1) as f64;
    1.0 + amplitude * ((x - 0.5) * (x - 0.5) - 1.0 / 12.0)
}

/// The exact per-slot factors the generator applies (slot 0 pinned at 1).
pub fn true_pattern(cfg: &SynthConfig) -> IntradayPattern {
    let mut factors = Array2::ones((1, cfg.slots_per_day));
    for s in 1..cfg.slots_per_day {
        factors[[0, s]] = u_shape_factor(s, cfg.slots_per_day, cfg.u_shape_amplitude);
    }
    IntradayPattern {
        factors,
        pooled: true,
    }
}

/// Ground-truth return panel: Gaussian noise scaled by the U-shape, planted
/// cojumps added on top, first slot of each day zero.
pub fn generate_returns(cfg: &SynthConfig) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_total = cfg.n_days * cfg.slots_per_day;
    let mut returns = Array2::zeros((cfg.n_assets, t_total));
    for i in 0..cfg.n_assets {
        for t in 0..t_total {
            let slot = t % cfg.slots_per_day;
            if slot == 0 {
                continue;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            returns[[i, t]] =
                cfg.return_sd * u_shape_factor(slot, cfg.slots_per_day, cfg.u_shape_amplitude) * z;
        }
    }
    for p in &cfg.planted {
        assert!(p.day < cfg.n_days && p.slot > 0 && p.slot < cfg.slots_per_day);
        let t = p.day * cfg.slots_per_day + p.slot;
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        for i in 0..p.multiplicity.min(cfg.n_assets) {
            returns[[i, t]] = sign * p.amplitude_sigmas * cfg.return_sd;
        }
    }
    ReturnPanel {
        asset_ids: (0..cfg.n_assets).map(|i| format!("SYN{i:03}")).collect(),
        grid: TimeGrid {
            dates: trading_dates(cfg.start_date, cfg.n_days),
            session_start: cfg.session_start,
            slots_per_day: cfg.slots_per_day,
            minutes_per_slot: 1,
        },
        returns,
        normalized: false,
        pattern: None,
    }
}

/// Price panel obtained by compounding the generated returns from 100-ish
/// starting levels; day opens continue from the previous close so the
/// loader's overnight convention applies cleanly.
pub fn generate_panel(cfg: &SynthConfig) -> PricePanel {
    let rp = generate_returns(cfg);
    let t_total = rp.n_minutes();
    let mut prices = Array2::zeros((cfg.n_assets, t_total));
    for i in 0..cfg.n_assets {
        let mut level = 100.0 * (1.0 + 0.01 * i as f64);
        for t in 0..t_total {
            level *= rp.returns[[i, t]].exp();
            prices[[i, t]] = level;
        }
    }
    PricePanel {
        asset_ids: rp.asset_ids,
        grid: rp.grid,
        prices,
    }
}

#[derive(Debug, Clone)]
pub struct NewsConfig {
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub session_start: NaiveTime,
    pub slots_per_day: usize,
    /// Fixed announcement slots, every day.
    pub daily_slots: Vec<usize>,
    /// Extra announcements dropped uniformly at random per minute.
    pub random_density: f64,
    pub seed: u64,
}

impl Default for NewsConfig {
    fn default() -> Self {
        NewsConfig {
            n_days: 5,
            start_date: NaiveDate::from_ymd_opt(2013, 1, 2).unwrap(),
            session_start: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            slots_per_day: 390,
            daily_slots: vec![30, 270],
            random_density: 0.0,
            seed: 0,
        }
    }
}

const CATEGORIES: &[(&str, Importance)] = &[
    ("FOMC", Importance::Mmi),
    ("ISM", Importance::Mmi),
    ("CONSUMER_CONFIDENCE", Importance::Mea),
    ("PMI", Importance::Mea),
];

/// Scheduled announcement timestamps on the same grid as the panels.
pub fn generate_news(cfg: &NewsConfig) -> Vec<NewsRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dates = trading_dates(cfg.start_date, cfg.n_days);
    let mut records = Vec::new();
    let mut cat = 0usize;
    for date in dates {
        for &slot in &cfg.daily_slots {
            let (name, importance) = CATEGORIES[cat % CATEGORIES.len()];
            cat += 1;
            records.push(NewsRecord {
                timestamp: date.and_time(cfg.session_start)
                    + chrono::Duration::minutes(slot as i64),
                category: name.to_string(),
                importance,
            });
        }
        if cfg.random_density > 0.0 {
            for slot in 0..cfg.slots_per_day {
                if rng.gen::<f64>() < cfg.random_density {
                    let (name, importance) = CATEGORIES[cat % CATEGORIES.len()];
                    cat += 1;
                    records.push(NewsRecord {
                        timestamp: date.and_time(cfg.session_start)
                            + chrono::Duration::minutes(slot as i64),
                        category: name.to_string(),
                        importance,
                    });
                }
            }
        }
    }
    records.sort_by_key(|r| r.timestamp);
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_detect::{detect_jumps, VolatilityConfig, VolatilitySeries};
    use crate::market_data::compute_log_returns;

    #[test]
    fn generator_is_seed_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate_panel(&cfg);
        let b = generate_panel(&cfg);
        assert_eq!(a.prices, b.prices);
        let c = generate_panel(&SynthConfig { seed: 1, ..cfg });
        assert_ne!(a.prices, c.prices);
    }

    #[test]
    fn round_trip_through_prices_recovers_returns() {
        let cfg = SynthConfig {
            n_assets: 3,
            n_days: 2,
            slots_per_day: 30,
            ..SynthConfig::default()
        };
        let truth = generate_returns(&cfg);
        let panel = generate_panel(&cfg);
        let recovered = compute_log_returns(&panel);
        for i in 0..3 {
            for t in 0..60 {
                if t % 30 == 0 {
                    assert_eq!(recovered.returns[[i, t]], 0.0);
                } else {
                    assert!(
                        (recovered.returns[[i, t]] - truth.returns[[i, t]]).abs() < 1e-12,
                        "asset {i} minute {t}"
                    );
                }
            }
        }
    }

    #[test]
    fn planted_cojump_is_detected() {
        let cfg = SynthConfig {
            n_assets: 40,
            n_days: 2,
            slots_per_day: 390,
            planted: vec![PlantedCojump {
                day: 1,
                slot: 200,
                multiplicity: 30,
                amplitude_sigmas: 8.0,
            }],
            ..SynthConfig::default()
        };
        let truth = generate_returns(&cfg);
        let normalized = ReturnPanel {
            normalized: true,
            pattern: Some(IntradayPattern::flat(390)),
            ..truth
        };
        let vs = VolatilitySeries::constant(40, normalized.n_minutes(), cfg.return_sd);
        let det_cfg = VolatilityConfig {
            warmup_minutes: 120,
            ..VolatilityConfig::default()
        };
        let jm = detect_jumps(&normalized, &vs, &det_cfg).unwrap();
        let t = 390 + 200;
        let flagged = (0..40).filter(|&i| jm.flags[[i, t]]).count();
        assert_eq!(flagged, 30);
    }

    #[test]
    fn news_schedule_and_weekday_grid() {
        let cfg = NewsConfig {
            n_days: 7,
            ..NewsConfig::default()
        };
        let news = generate_news(&cfg);
        assert_eq!(news.len(), 14);
        for r in &news {
            let wd = r.timestamp.date().weekday();
            assert!(wd != Weekday::Sat && wd != Weekday::Sun);
        }
        // 2013-01-02 is a Wednesday; 7 trading days span the weekend
        let dates = trading_dates(NaiveDate::from_ymd_opt(2013, 1, 2).unwrap(), 7);
        assert_eq!(dates[3], NaiveDate::from_ymd_opt(2013, 1, 7).unwrap());
    }
}
