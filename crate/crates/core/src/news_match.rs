//! Matching of scheduled macroeconomic announcements against cojump events.
//!
//! A news release at minute s matches an event at minute t when
//! 0 <= t - s <= tau: same-minute releases count (announcements land at
//! second-level times inside the bar), and windows nest so fractions are
//! monotone in tau.

use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDateTime, NaiveTime};

use crate::cojump_stats::CojumpEvent;
use crate::error::{Error, Result};

/// Econoday-style importance classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Importance {
    /// Market Moving Indicator.
    Mmi,
    /// Merit Extra Attention.
    Mea,
}

impl FromStr for Importance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MMI" => Ok(Importance::Mmi),
            "MEA" => Ok(Importance::Mea),
            other => Err(format!("unknown importance {other:?} (expected MMI or MEA)")),
        }
    }
}

impl std::fmt::Display for Importance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Importance::Mmi => "MMI",
            Importance::Mea => "MEA",
        })
    }
}

#[derive(Debug, Clone)]
pub struct NewsRecord {
    pub timestamp: NaiveDateTime,
    pub category: String,
    pub importance: Importance,
}

/// Which importance classes to keep when matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImportanceFilter {
    #[default]
    Both,
    MmiOnly,
    MeaOnly,
}

impl ImportanceFilter {
    pub fn keeps(&self, imp: Importance) -> bool {
        match self {
            ImportanceFilter::Both => true,
            ImportanceFilter::MmiOnly => imp == Importance::Mmi,
            ImportanceFilter::MeaOnly => imp == Importance::Mea,
        }
    }
}

/// Load `timestamp,category,importance` rows, drop out-of-session records,
/// and sort by timestamp. Returns the records and the dropped-row count.
pub fn load_news<P: AsRef<Path>>(
    path: P,
    session_start: NaiveTime,
    session_end: NaiveTime,
) -> Result<(Vec<NewsRecord>, usize)> {
    let file = std::fs::File::open(path.as_ref())?;
    load_news_from_reader(file, session_start, session_end)
}

pub fn load_news_from_reader<R: Read>(
    reader: R,
    session_start: NaiveTime,
    session_end: NaiveTime,
) -> Result<(Vec<NewsRecord>, usize)> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for (idx, row) in csv_reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if row.len() < 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 columns, got {}", row.len()),
            });
        }
        let ts = parse_minute_timestamp(row[0].trim(), line)?;
        let importance = Importance::from_str(&row[2]).map_err(|msg| Error::Parse { line, msg })?;
        if ts.time() < session_start || ts.time() >= session_end {
            dropped += 1;
            continue;
        }
        records.push(NewsRecord {
            timestamp: ts,
            category: row[1].trim().to_string(),
            importance,
        });
    }
    records.sort_by_key(|r| r.timestamp);
    Ok((records, dropped))
}

fn parse_minute_timestamp(raw: &str, line: usize) -> Result<NaiveDateTime> {
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

fn matched(event: NaiveDateTime, news: &[NaiveDateTime], tau: usize) -> bool {
    // news sorted ascending; find any s with 0 <= event - s <= tau minutes
    let lo = event - chrono::Duration::minutes(tau as i64);
    let idx = news.partition_point(|&s| s < lo);
    idx < news.len() && news[idx] <= event
}

/// News-match counts for one (tau, m_min) cell.
#[derive(Debug, Clone, Copy)]
pub struct NewsMatchCell {
    pub tau: usize,
    pub m_min: u32,
    pub n_events: usize,
    pub n_matched: usize,
    pub fraction: f64,
    pub empty: bool,
}

/// Fraction of events with multiplicity >= m_min preceded by at least one
/// news within the tau-minute lookback window.
pub fn news_triggered_fraction(
    events: &[CojumpEvent],
    news: &[NewsRecord],
    tau: usize,
    m_min: u32,
    filter: ImportanceFilter,
) -> Result<NewsMatchCell> {
    if tau < 1 {
        return Err(Error::InvalidInput("tau must be >= 1".into()));
    }
    let mut times: Vec<NaiveDateTime> = news
        .iter()
        .filter(|r| filter.keeps(r.importance))
        .map(|r| r.timestamp)
        .collect();
    times.sort();
    let mut n_events = 0usize;
    let mut n_matched = 0usize;
    for e in events.iter().filter(|e| e.multiplicity >= m_min) {
        n_events += 1;
        if matched(e.timestamp, &times, tau) {
            n_matched += 1;
        }
    }
    let empty = n_events == 0;
    Ok(NewsMatchCell {
        tau,
        m_min,
        n_events,
        n_matched,
        fraction: if empty {
            0.0
        } else {
            n_matched as f64 / n_events as f64
        },
        empty,
    })
}

/// Full (tau, m_min) table of news-triggered fractions.
pub fn news_fraction_profile(
    events: &[CojumpEvent],
    news: &[NewsRecord],
    taus: &[usize],
    m_grid: &[u32],
    filter: ImportanceFilter,
) -> Result<Vec<NewsMatchCell>> {
    let mut cells = Vec::with_capacity(taus.len() * m_grid.len());
    for &tau in taus {
        for &m_min in m_grid {
            cells.push(news_triggered_fraction(events, news, tau, m_min, filter)?);
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn session() -> (NaiveTime, NaiveTime) {
        (
            NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
        )
    }

    fn minute(m: i64) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2012, 3, 5)
            .unwrap()
            .and_hms_opt(9, 30, 0)
            .unwrap()
            + chrono::Duration::minutes(m)
    }

    fn event(m: i64, mult: u32) -> CojumpEvent {
        CojumpEvent {
            timestamp: minute(m),
            multiplicity: mult,
            asset_ids: None,
        }
    }

    fn news_at(minutes: &[i64]) -> Vec<NewsRecord> {
        minutes
            .iter()
            .map(|&m| NewsRecord {
                timestamp: minute(m),
                category: "FOMC".into(),
                importance: Importance::Mmi,
            })
            .collect()
    }

    #[test]
    fn load_empty_file() {
        let (s, e) = session();
        let (records, dropped) =
            load_news_from_reader(Cursor::new("timestamp,category,importance\n"), s, e).unwrap();
        assert!(records.is_empty());
        assert_eq!(dropped, 0);
    }

    #[test]
    fn load_drops_out_of_session() {
        let (s, e) = session();
        let body = "timestamp,category,importance\n\
                    2012-03-05T08:30,CPI,MMI\n\
                    2012-03-05T10:00,FOMC,MMI\n";
        let (records, dropped) = load_news_from_reader(Cursor::new(body), s, e).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(dropped, 1);
        assert_eq!(records[0].category, "FOMC");
    }

    #[test]
    fn load_keeps_duplicates() {
        let (s, e) = session();
        let body = "timestamp,category,importance\n\
                    2012-03-05T10:00,FOMC,MMI\n\
                    2012-03-05T10:00,ISM,MEA\n";
        let (records, _) = load_news_from_reader(Cursor::new(body), s, e).unwrap();
        assert_eq!(records.len(), 2);
    }

    #[test]
    fn load_reports_line_numbers() {
        let (s, e) = session();
        let body = "timestamp,category,importance\n\
                    2012-03-05T10:00,FOMC,MMI\n\
                    not-a-time,ISM,MEA\n";
        match load_news_from_reader(Cursor::new(body), s, e).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_news_gives_zero() {
        let events = vec![event(10, 30)];
        let cell =
            news_triggered_fraction(&events, &[], 5, 1, ImportanceFilter::Both).unwrap();
        assert_eq!(cell.fraction, 0.0);
        assert!(!cell.empty);
    }

    #[test]
    fn news_one_minute_before_every_event() {
        let events = vec![event(10, 3), event(50, 7)];
        let news = news_at(&[9, 49]);
        for tau in [1, 5, 10, 15] {
            let cell =
                news_triggered_fraction(&events, &news, tau, 1, ImportanceFilter::Both).unwrap();
            assert_eq!(cell.fraction, 1.0, "tau={tau}");
        }
    }

    #[test]
    fn hand_enumerated_half() {
        // events at t=10 (M=30) and t=100 (M=30); news at t=7; tau=5 matches
        // the first (10-7=3) and misses the second
        let events = vec![event(10, 30), event(100, 30)];
        let news = news_at(&[7]);
        let cell =
            news_triggered_fraction(&events, &news, 5, 30, ImportanceFilter::Both).unwrap();
        assert_eq!(cell.n_events, 2);
        assert_eq!(cell.n_matched, 1);
        assert_eq!(cell.fraction, 0.5);
    }

    #[test]
    fn same_minute_counts_for_tau_one() {
        let events = vec![event(10, 5)];
        let news = news_at(&[10]);
        let cell =
            news_triggered_fraction(&events, &news, 1, 1, ImportanceFilter::Both).unwrap();
        assert_eq!(cell.fraction, 1.0);
    }

    #[test]
    fn no_qualifying_events_flagged_empty() {
        let events = vec![event(10, 5)];
        let cell = news_triggered_fraction(&events, &news_at(&[9]), 5, 50, ImportanceFilter::Both)
            .unwrap();
        assert!(cell.empty);
        assert_eq!(cell.fraction, 0.0);
    }

    #[test]
    fn monotone_in_tau_and_in_added_news() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let events: Vec<CojumpEvent> = (0..200)
            .map(|_| event(rng.gen_range(0..380), rng.gen_range(1..40)))
            .collect();
        let mut news = news_at(
            &(0..30)
                .map(|_| rng.gen_range(0..380))
                .collect::<Vec<i64>>(),
        );
        let mut prev = 0.0;
        for tau in [1usize, 5, 10, 15] {
            let f = news_triggered_fraction(&events, &news, tau, 1, ImportanceFilter::Both)
                .unwrap()
                .fraction;
            assert!(f >= prev, "tau={tau}: {f} < {prev}");
            prev = f;
        }
        let before = news_triggered_fraction(&events, &news, 5, 1, ImportanceFilter::Both)
            .unwrap()
            .fraction;
        news.extend(news_at(&[100]));
        let after = news_triggered_fraction(&events, &news, 5, 1, ImportanceFilter::Both)
            .unwrap()
            .fraction;
        assert!(after >= before);
    }

    #[test]
    fn uniform_news_matches_closed_form() {
        // window [t - tau, t] spans tau + 1 minute slots, so with news
        // dropped i.i.d. at density rho the match probability is
        // 1 - (1 - rho)^(tau + 1)
        let rho = 0.07;
        let mut news = Vec::new();
        let mut events = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for day in 0..600i64 {
            for m in 20..380i64 {
                let ts = minute(m) + chrono::Duration::days(day);
                if rng.gen::<f64>() < rho {
                    news.push(NewsRecord {
                        timestamp: ts,
                        category: "CPI".into(),
                        importance: Importance::Mea,
                    });
                }
                if rng.gen::<f64>() < 0.02 {
                    events.push(CojumpEvent {
                        timestamp: ts,
                        multiplicity: 5,
                        asset_ids: None,
                    });
                }
            }
        }
        for tau in [1usize, 5, 10] {
            let cell =
                news_triggered_fraction(&events, &news, tau, 1, ImportanceFilter::Both).unwrap();
            let expected = 1.0 - (1.0 - rho).powi(tau as i32 + 1);
            let se = (expected * (1.0 - expected) / cell.n_events as f64).sqrt();
            assert!(
                (cell.fraction - expected).abs() < 4.0 * se,
                "tau={tau}: {} vs {} (se {se})",
                cell.fraction,
                expected
            );
        }
    }

    #[test]
    fn importance_filter_applies() {
        let events = vec![event(10, 5)];
        let news = vec![NewsRecord {
            timestamp: minute(9),
            category: "ISM".into(),
            importance: Importance::Mea,
        }];
        let both = news_triggered_fraction(&events, &news, 5, 1, ImportanceFilter::Both).unwrap();
        let mmi =
            news_triggered_fraction(&events, &news, 5, 1, ImportanceFilter::MmiOnly).unwrap();
        assert_eq!(both.fraction, 1.0);
        assert_eq!(mmi.fraction, 0.0);
    }

    #[test]
    fn profile_is_composition() {
        let events = vec![event(10, 30), event(100, 30)];
        let news = news_at(&[7]);
        let cells = news_fraction_profile(
            &events,
            &news,
            &[1, 5, 10, 15],
            &[1, 30],
            ImportanceFilter::Both,
        )
        .unwrap();
        assert_eq!(cells.len(), 8);
        for c in &cells {
            let direct =
                news_triggered_fraction(&events, &news, c.tau, c.m_min, ImportanceFilter::Both)
                    .unwrap();
            assert_eq!(c.fraction, direct.fraction);
        }
    }
}
