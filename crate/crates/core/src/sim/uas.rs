use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::signals::{Payload, SignalUpdate};
use crate::starmap::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UasSimConfig {
    /// `[lat, lon]` in degrees.
    pub vertiports: Vec<[f64; 2]>,
    #[serde(default = "default_speed")]
    pub speed_kmh: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default = "default_fleet")]
    pub fleet: usize,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the reported position, meters.
    #[serde(default = "default_std")]
    pub report_std: f64,
    #[serde(default = "default_channel")]
    pub channel: String,
}

fn default_speed() -> f64 {
    100.0
}
fn default_rate() -> f64 {
    2.0
}
fn default_fleet() -> usize {
    12
}
fn default_std() -> f64 {
    15.0
}
fn default_channel() -> String {
    "/distance/uas".into()
}

#[derive(Debug, Clone)]
struct Uas {
    pos: [f64; 2],
    target: [f64; 2],
    heading_home: bool,
    /// Time `pos` refers to.
    t: f64,
    phase: f64,
    reports: u64,
    rng: ChaCha8Rng,
}

impl Uas {
    fn next_report(&self, period: f64) -> f64 {
        self.phase + self.reports as f64 * period
    }
}

/// Straight-line flights: vertiport, random destination in the mission
/// area, random vertiport, and so on.
#[derive(Debug, Clone)]
pub struct UasFleet {
    config: UasSimConfig,
    grid: GridSpec,
    vertiports: Vec<[f64; 2]>,
    uas: Vec<Uas>,
    period: f64,
    speed: f64,
}

impl UasFleet {
    pub fn new(config: UasSimConfig, grid: GridSpec) -> Result<Self, SimError> {
        if !(config.speed_kmh > 0.0) {
            return Err(SimError::Config("speed must be positive".into()));
        }
        if !(config.rate_hz > 0.0) {
            return Err(SimError::Config("report rate must be positive".into()));
        }
        if !(config.report_std >= 0.0) {
            return Err(SimError::Config("report std must be non-negative".into()));
        }
        if config.fleet > 0 && config.vertiports.is_empty() {
            return Err(SimError::Config(
                "a fleet needs at least one vertiport".into(),
            ));
        }
        let vertiports: Vec<[f64; 2]> = config
            .vertiports
            .iter()
            .map(|v| grid.project(v[0], v[1]))
            .collect();
        if let Some(v) = vertiports.iter().find(|v| !grid.contains(**v)) {
            return Err(SimError::Config(format!(
                "vertiport at {v:?} m lies outside the grid"
            )));
        }
        let period = 1.0 / config.rate_hz;
        let mut fleet = UasFleet {
            period,
            speed: config.speed_kmh / 3.6,
            uas: Vec::with_capacity(config.fleet),
            vertiports,
            grid,
            config,
        };
        for i in 0..fleet.config.fleet {
            let mut rng = ChaCha8Rng::seed_from_u64(fleet.config.seed);
            rng.set_stream(i as u64);
            let pos = fleet.vertiports[rng.random_range(0..fleet.vertiports.len())];
            let target = fleet.destination(&mut rng);
            let phase = rng.random::<f64>() * period;
            fleet.uas.push(Uas {
                pos,
                target,
                heading_home: false,
                t: 0.0,
                phase,
                reports: 0,
                rng,
            });
        }
        Ok(fleet)
    }

    pub fn config(&self) -> &UasSimConfig {
        &self.config
    }

    fn destination(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        [
            (rng.random::<f64>() - 0.5) * self.grid.width_m,
            (rng.random::<f64>() - 0.5) * self.grid.height_m,
        ]
    }

    fn advance(&self, u: &mut Uas, to: f64) {
        let mut budget = (to - u.t).max(0.0) * self.speed;
        u.t = to;
        while budget > 0.0 {
            let (dx, dy) = (u.target[0] - u.pos[0], u.target[1] - u.pos[1]);
            let d = dx.hypot(dy);
            if d > budget {
                u.pos = [u.pos[0] + dx / d * budget, u.pos[1] + dy / d * budget];
                return;
            }
            budget -= d;
            u.pos = u.target;
            u.target = if u.heading_home {
                self.destination(&mut u.rng)
            } else {
                self.vertiports[u.rng.random_range(0..self.vertiports.len())]
            };
            u.heading_home = !u.heading_home;
        }
    }

    /// True positions at the last step, in the local plane.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.uas.iter().map(|u| u.pos).collect()
    }

    /// Every report due up to and including `now`, ordered by time and then
    /// by vehicle.
    pub fn step(&mut self, now: f64) -> Vec<SignalUpdate> {
        let mut out: Vec<(f64, usize, SignalUpdate)> = Vec::new();
        let std = self.config.report_std;
        let noise = Normal::new(0.0, std).expect("finite std");
        let mut uas = std::mem::take(&mut self.uas);
        for (i, u) in uas.iter_mut().enumerate() {
            loop {
                let t = u.next_report(self.period);
                if t > now {
                    break;
                }
                self.advance(u, t);
                let (ex, ey) = if std > 0.0 {
                    (noise.sample(&mut u.rng), noise.sample(&mut u.rng))
                } else {
                    (0.0, 0.0)
                };
                u.reports += 1;
                out.push((
                    t,
                    i,
                    SignalUpdate {
                        channel: self.config.channel.clone(),
                        timestamp: t,
                        payload: Payload::EntityReport {
                            entity: format!("uas-{i}"),
                            easting: u.pos[0] + ex,
                            northing: u.pos[1] + ey,
                            std: Some(std),
                        },
                    },
                ));
            }
            self.advance(u, now);
        }
        self.uas = uas;
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, _, u)| u).collect()
    }
}
