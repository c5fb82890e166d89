//! Channel updates, the φ meaningfulness gate and Frequency-of-Change
//! tracking used to cluster sources.

mod queue;
mod rate;

use serde::{Deserialize, Serialize};

pub use queue::{read_records, write_record, Producer, UpdateQueue};
pub use rate::{FocEstimator, RateParams};

/// Default φ threshold on normalized parameter values.
pub const DEFAULT_EPSILON: f64 = 0.003;

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("payload shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("timestamp {timestamp} on {channel} precedes {last}")]
    NonMonotonicTimestamp {
        channel: String,
        timestamp: f64,
        last: f64,
    },
    #[error("record line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// Per-cell weight vectors, cell-major, for every cell of the grid.
    FullField { values: Vec<f64> },
    /// Weight vectors for a subset of cells.
    Patch { cells: Vec<usize>, values: Vec<f64> },
    /// One entity's position in the local plane, meters.
    EntityReport {
        entity: String,
        easting: f64,
        northing: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
    },
    /// The entity went silent and leaves the active set.
    EntityExpired { entity: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalUpdate {
    pub channel: String,
    /// Seconds on a monotonic clock.
    pub timestamp: f64,
    pub payload: Payload,
}

/// Largest absolute elementwise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// The φ indicator. `old` is the last accepted payload on the channel (for
/// entity reports: the last accepted report of the same entity); `None`
/// means this is the first one, which always counts. Field payloads are
/// meaningful when some value moved by more than `epsilon`; entity reports
/// when the position moved by more than `min_displacement` meters.
pub fn meaningful(
    old: Option<&Payload>,
    new: &Payload,
    epsilon: f64,
    min_displacement: f64,
) -> Result<bool, SignalError> {
    let Some(old) = old else { return Ok(true) };
    match (old, new) {
        (Payload::FullField { values: a }, Payload::FullField { values: b }) => {
            if a.len() != b.len() {
                return Err(SignalError::ShapeMismatch(format!(
                    "{} values vs {}",
                    a.len(),
                    b.len()
                )));
            }
            Ok(max_abs_diff(a, b) > epsilon)
        }
        (
            Payload::Patch {
                cells: ca,
                values: a,
            },
            Payload::Patch {
                cells: cb,
                values: b,
            },
        ) => {
            if ca != cb || a.len() != b.len() {
                return Ok(true);
            }
            Ok(max_abs_diff(a, b) > epsilon)
        }
        (
            Payload::EntityReport {
                easting: x0,
                northing: y0,
                ..
            },
            Payload::EntityReport {
                easting: x1,
                northing: y1,
                ..
            },
        ) => Ok((x1 - x0).hypot(y1 - y0) > min_displacement),
        (_, Payload::EntityExpired { .. }) => Ok(true),
        (a, b) => Err(SignalError::ShapeMismatch(format!(
            "{} payload after {}",
            kind_name(b),
            kind_name(a)
        ))),
    }
}

fn kind_name(p: &Payload) -> &'static str {
    match p {
        Payload::FullField { .. } => "full field",
        Payload::Patch { .. } => "patch",
        Payload::EntityReport { .. } => "entity report",
        Payload::EntityExpired { .. } => "entity expiry",
    }
}

/// Half-open binning `k·h ≤ λ < (k+1)·h`. The floor of `λ / h` can be off by
/// one after rounding, so the result is nudged until the products agree.
pub fn cluster_of(rate: f64, h: f64) -> usize {
    assert!(h > 0.0, "partition width must be positive");
    if !(rate > 0.0) {
        return 0;
    }
    let mut k = (rate / h).floor().min(usize::MAX as f64 / 2.0) as usize;
    while k > 0 && k as f64 * h > rate {
        k -= 1;
    }
    while (k + 1) as f64 * h <= rate {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Partition width in Hz.
    pub h: f64,
    /// Largest cluster index handed out.
    pub max_clusters: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            h: 0.5,
            max_clusters: 16,
        }
    }
}

impl ClusterConfig {
    pub fn cluster_of(&self, rate: f64) -> usize {
        cluster_of(rate, self.h).min(self.max_clusters)
    }
}
