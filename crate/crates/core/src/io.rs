//! CSV and JSON serialization of the pipeline artifacts. All CSV files are
//! UTF-8 with a mandatory header row; provenance travels in `# key=value`
//! comment lines above the header, which the readers here skip.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::cojump_stats::MultiplicitySeries;
use crate::error::{Error, Result};
use crate::hawkes::EventStream;
use crate::jump_detect::DetectionOutput;

/// Write atomically: temp file in the same directory, then rename.
pub fn write_atomic<P: AsRef<Path>>(path: P, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// `# key=value` comment lines carried above CSV headers.
#[derive(Debug, Clone, Default)]
pub struct CsvMeta {
    pub entries: Vec<(String, String)>,
}

impl CsvMeta {
    pub fn new() -> Self {
        CsvMeta::default()
    }

    pub fn push(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("# {k}={v}\n"))
            .collect()
    }
}

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Flagged minutes only: `asset_id,timestamp,return,sigma,score`.
pub fn render_jumps_csv(out: &DetectionOutput, meta: &CsvMeta) -> String {
    let mut s = meta.render();
    s.push_str("asset_id,timestamp,return,sigma,score\n");
    let rp = &out.returns;
    for i in 0..rp.n_assets() {
        for t in 0..rp.n_minutes() {
            if out.jumps.flags[[i, t]] {
                let r = rp.returns[[i, t]];
                let sigma = out.volatility.sigma[[i, t]];
                s.push_str(&format!(
                    "{},{},{:.10e},{:.10e},{:.4}\n",
                    rp.asset_ids[i],
                    rp.grid.timestamp(t).format(TS_FORMAT),
                    r,
                    sigma,
                    r.abs() / sigma,
                ));
            }
        }
    }
    s
}

/// `timestamp,multiplicity` when the series has a grid, `minute,multiplicity`
/// otherwise.
pub fn render_multiplicity_csv(ms: &MultiplicitySeries, meta: &CsvMeta) -> String {
    let mut extended = meta.clone();
    extended = extended.push("n_assets", ms.n_assets);
    extended = extended.push("timescale", ms.timescale);
    if let Some(theta) = ms.theta {
        extended = extended.push("theta", theta);
    }
    let mut s = extended.render();
    match &ms.grid {
        Some(grid) => {
            s.push_str("timestamp,multiplicity\n");
            for (t, &m) in ms.m.iter().enumerate() {
                s.push_str(&format!("{},{}\n", grid.timestamp(t).format(TS_FORMAT), m));
            }
        }
        None => {
            s.push_str("minute,multiplicity\n");
            for (t, &m) in ms.m.iter().enumerate() {
                s.push_str(&format!("{t},{m}\n"));
            }
        }
    }
    s
}

/// Read a multiplicity CSV produced by `render_multiplicity_csv`. Timestamps
/// are not reconstructed; the series comes back grid-less with any metadata
/// found in the comment lines.
pub fn read_multiplicity_csv<R: Read>(reader: R) -> Result<(MultiplicitySeries, CsvMeta)> {
    let buf = BufReader::new(reader);
    let mut meta = CsvMeta::new();
    let mut m = Vec::new();
    let mut header_seen = false;
    for (idx, line) in buf.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                meta.entries.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if !header_seen {
            header_seen = true; // header row
            continue;
        }
        let value = trimmed.rsplit(',').next().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "missing multiplicity column".into(),
        })?;
        let v: u32 = value.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("unparseable multiplicity {value:?}"),
        })?;
        m.push(v);
    }
    if m.is_empty() {
        return Err(Error::InsufficientData("empty multiplicity series".into()));
    }
    let n_assets = meta
        .get("n_assets")
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| m.iter().copied().max().unwrap_or(1) as usize);
    let timescale = meta.get("timescale").and_then(|v| v.parse().ok()).unwrap_or(1);
    let theta = meta.get("theta").and_then(|v| v.parse().ok());
    Ok((
        MultiplicitySeries {
            m,
            n_assets,
            theta,
            timescale,
            grid: None,
        },
        meta,
    ))
}

/// `time,type` rows of a simulated stream.
pub fn render_events_csv(es: &EventStream, meta: &CsvMeta) -> String {
    let mut extended = meta.clone();
    extended = extended.push("n_types", es.n_types);
    extended = extended.push("horizon", es.horizon);
    let mut s = extended.render();
    s.push_str("time,type\n");
    for ev in &es.events {
        s.push_str(&format!("{:.6},{}\n", ev.time, ev.multiplicity));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::SimEvent;

    #[test]
    fn multiplicity_round_trip() {
        let ms = MultiplicitySeries {
            m: vec![0, 3, 0, 12],
            n_assets: 40,
            theta: Some(4.0),
            timescale: 1,
            grid: None,
        };
        let rendered = render_multiplicity_csv(&ms, &CsvMeta::new().push("config_hash", "abc"));
        assert!(rendered.starts_with("# config_hash=abc\n"));
        let (back, meta) = read_multiplicity_csv(rendered.as_bytes()).unwrap();
        assert_eq!(back.m, ms.m);
        assert_eq!(back.n_assets, 40);
        assert_eq!(back.theta, Some(4.0));
        assert_eq!(meta.get("config_hash"), Some("abc"));
    }

    #[test]
    fn empty_multiplicity_is_an_error() {
        let res = read_multiplicity_csv("# n_assets=3\nminute,multiplicity\n".as_bytes());
        assert!(res.is_err());
    }

    #[test]
    fn events_render() {
        let es = EventStream {
            events: vec![SimEvent {
                time: 1.25,
                multiplicity: 7,
            }],
            horizon: 10.0,
            n_types: 12,
        };
        let s = render_events_csv(&es, &CsvMeta::new());
        assert!(s.contains("time,type\n"));
        assert!(s.contains("1.250000,7\n"));
    }

    #[test]
    fn atomic_write_creates_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, "a,b\n1,2\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
        assert!(!dir.path().join("x.tmp").exists());
    }
}
