use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::PathBuf;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::signals::{Payload, SignalUpdate};
use crate::starmap::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub path: PathBuf,
    /// Track seconds per emitted second.
    #[serde(default = "default_scale")]
    pub time_scale: f64,
    /// Silence, in track seconds, after which a vessel leaves the active set.
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_channel")]
    pub channel: String,
    /// Standard deviation attached to each reported position, meters.
    #[serde(default = "default_std")]
    pub report_std: f64,
}

fn default_scale() -> f64 {
    1.0
}
fn default_timeout() -> f64 {
    120.0
}
fn default_channel() -> String {
    "/distance/vessel".into()
}
fn default_std() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRecord {
    pub entity: String,
    /// Seconds since the earliest record in the file.
    pub t: f64,
    /// Local plane, meters.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tracks {
    /// In time order; records with equal times keep their file order.
    pub records: Vec<ReplayRecord>,
    pub malformed: usize,
}

fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp_micros() as f64 / 1e6);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    None
}

/// Reads `mmsi,timestamp_iso8601,lat,lon` rows (extra columns ignored).
/// Unparseable rows, and rows not strictly later than the previous row of
/// the same vessel, are skipped and counted.
pub fn load_tracks<R: Read>(reader: R, grid: &GridSpec) -> Result<Tracks, SimError> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SimError::Config(format!("AIS file lacks a {name} column")))
    };
    let (mmsi, ts, lat, lon) = (
        column("mmsi")?,
        column("timestamp_iso8601")?,
        column("lat")?,
        column("lon")?,
    );

    let mut raw: Vec<(String, f64, f64, f64)> = Vec::new();
    let mut last: HashMap<String, f64> = HashMap::new();
    let mut malformed = 0;
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let parsed = row.ok().and_then(|r| {
            let id = r.get(mmsi)?.to_string();
            let t = parse_time(r.get(ts)?)?;
            let la: f64 = r.get(lat)?.parse().ok()?;
            let lo: f64 = r.get(lon)?.parse().ok()?;
            (!id.is_empty()
                && la.is_finite()
                && lo.is_finite()
                && la.abs() <= 90.0
                && lo.abs() <= 180.0)
                .then_some((id, t, la, lo))
        });
        let Some((id, t, la, lo)) = parsed else {
            log::warn!("AIS line {line}: malformed row skipped");
            malformed += 1;
            continue;
        };
        if last.get(&id).is_some_and(|&prev| t <= prev) {
            log::warn!("AIS line {line}: {id} goes back in time, row skipped");
            malformed += 1;
            continue;
        }
        last.insert(id.clone(), t);
        raw.push((id, t, la, lo));
    }
    let t0 = raw.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mut records: Vec<ReplayRecord> = raw
        .into_iter()
        .map(|(entity, t, la, lo)| ReplayRecord {
            entity,
            t: t - t0,
            position: grid.project(la, lo),
        })
        .collect();
    records.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(Tracks { records, malformed })
}

/// Emits records at `t / time_scale` and expiries after the timeout.
#[derive(Debug, Clone)]
pub struct Replay {
    config: ReplayConfig,
    records: Vec<ReplayRecord>,
    next: usize,
    /// Active vessels and the emitted time of their last report.
    active: BTreeMap<String, f64>,
}

impl Replay {
    pub fn new(config: ReplayConfig, tracks: Tracks) -> Result<Self, SimError> {
        if !(config.time_scale > 0.0) {
            return Err(SimError::Config("time scale must be positive".into()));
        }
        if !(config.timeout_s > 0.0) {
            return Err(SimError::Config("timeout must be positive".into()));
        }
        Ok(Replay {
            config,
            records: tracks.records,
            next: 0,
            active: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.next == self.records.len() && self.active.is_empty()
    }

    /// Emitted time of the next event, if any.
    pub fn next_time(&self) -> Option<f64> {
        let record = self
            .records
            .get(self.next)
            .map(|r| r.t / self.config.time_scale);
        let expiry = self.next_expiry().map(|e| e.1);
        match (record, expiry) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn next_expiry(&self) -> Option<(&str, f64)> {
        let window = self.config.timeout_s / self.config.time_scale;
        self.active
            .iter()
            .map(|(id, &t)| (id.as_str(), t + window))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Every event due up to and including `now`, in time order.
    pub fn step(&mut self, now: f64) -> Vec<SignalUpdate> {
        let mut out = Vec::new();
        loop {
            let record = self
                .records
                .get(self.next)
                .map(|r| r.t / self.config.time_scale);
            let expiry = self.next_expiry().map(|(id, t)| (id.to_string(), t));
            let take_record = match (&record, &expiry) {
                (Some(r), Some((_, e))) => r <= e,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if take_record {
                let t = record.expect("checked");
                if t > now {
                    break;
                }
                let r = &self.records[self.next];
                self.next += 1;
                self.active.insert(r.entity.clone(), t);
                out.push(SignalUpdate {
                    channel: self.config.channel.clone(),
                    timestamp: t,
                    payload: Payload::EntityReport {
                        entity: r.entity.clone(),
                        easting: r.position[0],
                        northing: r.position[1],
                        std: Some(self.config.report_std),
                    },
                });
            } else {
                let (id, t) = expiry.expect("checked");
                if t > now {
                    break;
                }
                self.active.remove(&id);
                out.push(SignalUpdate {
                    channel: self.config.channel.clone(),
                    timestamp: t,
                    payload: Payload::EntityExpired { entity: id },
                });
            }
        }
        out
    }
}
