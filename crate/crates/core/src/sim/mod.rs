//! Traffic generators: a simulated UAS fleet flying between vertiports and
//! replayed vessel positions from AIS exports.

mod replay;
mod uas;

use std::time::{Duration, Instant};

pub use replay::{load_tracks, Replay, ReplayConfig, ReplayRecord, Tracks};
pub use uas::{UasFleet, UasSimConfig};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Paces producers. Times are seconds since the start of the run.
pub trait Clock: Send + Sync {
    /// Blocks until `t`; returns immediately for virtual time.
    fn wait_until(&self, t: f64);
    fn is_virtual(&self) -> bool;
}

/// As fast as possible; timestamps alone define the order of events.
#[derive(Debug, Clone, Copy, Default)]
pub struct VirtualClock;

impl Clock for VirtualClock {
    fn wait_until(&self, _t: f64) {}

    fn is_virtual(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn start() -> Self {
        WallClock {
            start: Instant::now(),
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

impl Clock for WallClock {
    fn wait_until(&self, t: f64) {
        let now = self.elapsed();
        if t > now {
            std::thread::sleep(Duration::from_secs_f64(t - now));
        }
    }

    fn is_virtual(&self) -> bool {
        false
    }
}
