use std::collections::BTreeMap;

use super::SignalError;

/// Filter tuning. The state is the mean gap between meaningful events, so
/// both noises are relative to the current estimate squared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    /// Random-walk process noise per event, relative.
    pub q: f64,
    /// Measurement noise, relative. 1 matches exponential gaps.
    pub r: f64,
    /// Partition width in Hz; bounds the silence horizon for slow channels.
    pub h: f64,
    /// Silence horizon in expected gaps.
    pub silence_gaps: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        RateParams {
            q: 1e-4,
            r: 1.0,
            h: 0.5,
            silence_gaps: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ChannelState {
    /// Estimated mean gap in seconds and its variance; `None` until two
    /// meaningful events have been seen.
    gap: Option<(f64, f64)>,
    last_meaningful: Option<f64>,
    last_seen: Option<f64>,
    /// Time the last silence pseudo-measurement was injected.
    silence_mark: Option<f64>,
    meaningful_events: u64,
}

impl ChannelState {
    fn rate(&self) -> f64 {
        match self.gap {
            Some((g, _)) if g > 0.0 => 1.0 / g,
            _ => 0.0,
        }
    }
}

/// Per-channel Kalman tracking of the rate of meaningful updates.
///
/// Gaps between meaningful events are measured directly rather than their
/// reciprocals, which are heavy-tailed for Poisson streams; the reported rate
/// is the reciprocal of the filtered gap.
#[derive(Debug, Clone, Default)]
pub struct FocEstimator {
    params: RateParams,
    channels: BTreeMap<String, ChannelState>,
}

impl FocEstimator {
    pub fn new(params: RateParams) -> Self {
        FocEstimator {
            params,
            channels: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &RateParams {
        &self.params
    }

    /// Current λ̂ in Hz; 0 for unseen channels.
    pub fn rate(&self, channel: &str) -> f64 {
        self.channels.get(channel).map_or(0.0, ChannelState::rate)
    }

    pub fn rates(&self) -> BTreeMap<String, f64> {
        self.channels
            .iter()
            .map(|(k, s)| (k.clone(), s.rate()))
            .collect()
    }

    pub fn meaningful_events(&self, channel: &str) -> u64 {
        self.channels
            .get(channel)
            .map_or(0, |s| s.meaningful_events)
    }

    /// Feeds one event. Only meaningful events produce gap measurements;
    /// any event also advances the silence check.
    pub fn observe(
        &mut self,
        channel: &str,
        timestamp: f64,
        meaningful: bool,
    ) -> Result<f64, SignalError> {
        let params = self.params;
        let state = self.channels.entry(channel.to_string()).or_default();
        if let Some(last) = state.last_seen {
            if timestamp < last {
                return Err(SignalError::NonMonotonicTimestamp {
                    channel: channel.to_string(),
                    timestamp,
                    last,
                });
            }
        }
        state.last_seen = Some(timestamp);
        if !meaningful {
            silence(state, &params, timestamp);
            return Ok(state.rate());
        }
        state.meaningful_events += 1;
        if state.silence_mark.is_some() {
            // Waking from silence: the long gap says nothing about the new
            // regime. The silence estimate stays until the next interval,
            // which replaces it almost entirely.
            state.gap = state.gap.map(|(g, _)| (g, WAKE_VARIANCE * g * g));
        } else if let Some(last) = state.last_meaningful {
            let dt = timestamp - last;
            state.gap = Some(match state.gap {
                None => (dt, dt * dt),
                Some((g, p)) => kalman(g, p + params.q * g * g, dt, params.r * g * g),
            });
        }
        state.last_meaningful = Some(timestamp);
        state.silence_mark = None;
        Ok(state.rate())
    }

    /// Advances every channel's silence check to `now` without an event.
    pub fn tick(&mut self, now: f64) {
        let params = self.params;
        for state in self.channels.values_mut() {
            if state.last_seen.is_some_and(|t| now >= t) {
                silence(state, &params, now);
            }
        }
    }
}

/// Relative variance after a silence; large enough that the first gain is
/// close to one.
const WAKE_VARIANCE: f64 = 1e6;

fn kalman(x: f64, p: f64, z: f64, r: f64) -> (f64, f64) {
    let k = if p + r > 0.0 { p / (p + r) } else { 1.0 };
    (x + k * (z - x), (1.0 - k) * p)
}

/// Once a channel has been quiet for `silence_gaps / max(λ̂, h)` seconds the
/// gap so far replaces the estimate: nothing faster than that is consistent
/// with the silence.
fn silence(state: &mut ChannelState, params: &RateParams, now: f64) {
    let (Some(last), Some((g, _))) = (state.last_meaningful, state.gap) else {
        return;
    };
    let horizon = params.silence_gaps / state.rate().max(params.h);
    let since = now - state.silence_mark.unwrap_or(last);
    if since <= horizon {
        return;
    }
    let quiet = now - last;
    if quiet > g {
        state.gap = Some((quiet, quiet * quiet));
    }
    state.silence_mark = Some(now);
}
