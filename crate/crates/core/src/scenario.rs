//! Jamming recovery over a spatial constellation.
//!
//! The link runs on one channel and reports a goodput fraction per window.
//! Once goodput has stayed under a threshold for a few windows the UAV picks
//! the next free channel, flies to that channel's symbol, and the base
//! station decodes the symbol from a radar capture. Both sides then retune
//! and the link resumes on the new channel.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::{Channel, Constellation};
use crate::error::{Error, Result};
use crate::error_model::{symbol_region, HoverModel};
use crate::flight::{fly_to, FlightConfig, PidParams};
use crate::geometry::PolarPoint;
use crate::localization::{compute_min_pts, localize, DbscanParams, HistogramConfig};
use crate::sensor::{synthesize_frame, SensorModel};

/// Base station decision for a position estimate.
///
/// The first symbol (by index) whose decision region contains the estimate
/// wins, so boundary ties go to the lower index. Regions tile the plane;
/// the nearest-symbol fallback in spacing units only matters for estimates
/// that are not finite.
pub fn decode_symbol(estimate: &PolarPoint, constellation: &Constellation) -> usize {
    let (t, r) = (estimate.theta(), estimate.rho());
    (0..constellation.len())
        .find(|&i| symbol_region(constellation, i).contains(t, r))
        .unwrap_or_else(|| {
            let mut best = (f64::INFINITY, 0);
            for (i, s) in constellation.symbols().iter().enumerate() {
                let dt = (t - s.theta()) / constellation.delta_theta();
                let dr = (r - s.rho()) / constellation.delta_rho();
                let d = dt * dt + dr * dr;
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
}

/// Channels jammed during `[t_start_s, t_end_s)`; no end means until the
/// run is over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JamInterval {
    pub t_start_s: f64,
    #[serde(default)]
    pub t_end_s: Option<f64>,
    pub channels: Vec<Channel>,
}

impl JamInterval {
    fn end(&self) -> f64 {
        self.t_end_s.unwrap_or(f64::INFINITY)
    }

    fn covers(&self, channel: Channel, t: f64) -> bool {
        t >= self.t_start_s && t < self.end() && self.channels.contains(&channel)
    }
}

/// Timing and detection knobs of the scenario loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    pub goodput_window_s: f64,
    /// A window below this goodput fraction counts towards jam detection.
    pub jam_threshold: f64,
    /// Consecutive low windows that declare the channel jammed.
    pub jam_windows: u32,
    /// Radar dwell per decoding attempt.
    pub t_meas_s: f64,
    /// Relative goodput jitter; each window loses up to this fraction.
    pub goodput_jitter: f64,
    /// Retuning delay once the symbol is decoded.
    pub switch_time_s: f64,
    pub duration_s: f64,
    /// Scale of the expected edge-of-range density used as DBSCAN `min_pts`.
    /// `None` keeps the configured `min_pts`.
    pub min_pts_alpha: Option<f64>,
    /// Radar captures tried before the decode is given up.
    pub max_sensing_attempts: u32,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            goodput_window_s: 1.0,
            jam_threshold: 0.5,
            jam_windows: 2,
            t_meas_s: 1.0,
            goodput_jitter: 0.05,
            switch_time_s: 0.1,
            duration_s: 40.0,
            min_pts_alpha: Some(0.5),
            max_sensing_attempts: 3,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.goodput_window_s > 0.0 && self.t_meas_s > 0.0 && self.duration_s > 0.0) {
            return bad("goodput window, t_meas and duration must be positive".into());
        }
        if !(self.jam_threshold > 0.0 && self.jam_threshold < 1.0) {
            return bad(format!("jam_threshold must be in (0, 1), got {}", self.jam_threshold));
        }
        if self.jam_windows == 0 || self.max_sensing_attempts == 0 {
            return bad("jam_windows and max_sensing_attempts must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.goodput_jitter) {
            return bad(format!("goodput_jitter must be in [0, 1), got {}", self.goodput_jitter));
        }
        if !(self.switch_time_s >= 0.0) {
            return bad("switch_time_s must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Round-robin order for picking a new channel.
    pub channels: Vec<Channel>,
    pub initial_channel: Channel,
    pub constellation: Constellation,
    pub sensor: SensorModel,
    pub hover: HoverModel,
    pub dbscan: DbscanParams,
    pub hist: HistogramConfig,
    pub pid: PidParams,
    pub flight: FlightConfig,
    pub jammer: Vec<JamInterval>,
    pub link: LinkParams,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.sensor.validate()?;
        self.dbscan.validate()?;
        self.hist.validate()?;
        self.pid.validate()?;
        self.flight.validate()?;
        if self.channels.is_empty() {
            return Err(Error::InvalidParameter("scenario needs at least one channel".into()));
        }
        if !self.constellation.covers(&self.channels) {
            return Err(Error::InvalidConstellation(
                "every scenario channel needs a constellation symbol".into(),
            ));
        }
        if !self.channels.contains(&self.initial_channel) {
            return Err(Error::InvalidParameter(format!("initial channel {} is not in the channel list", self.initial_channel)));
        }
        for j in &self.jammer {
            if !(j.t_start_s.is_finite() && j.end() >= j.t_start_s) {
                return Err(Error::InvalidParameter(format!("jam interval ends before it starts: {j:?}")));
            }
        }
        Ok(())
    }

    fn jammed(&self, channel: Channel, t: f64) -> bool {
        self.jammer.iter().any(|j| j.covers(channel, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    JamDetected,
    MoveStarted,
    SymbolDecoded,
    ChannelSwitched,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::JamDetected => "jam_detected",
            EventKind::MoveStarted => "move_started",
            EventKind::SymbolDecoded => "symbol_decoded",
            EventKind::ChannelSwitched => "channel_switched",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// Channel the event refers to: the jammed one, the target, the decoded
    /// one, or the one switched to.
    pub channel: Channel,
    pub symbol: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodputSample {
    /// Window start.
    pub t: f64,
    pub goodput: f64,
    /// Base station channel at the end of the window.
    pub channel: Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioStatus {
    Completed,
    /// Every channel was jammed when a new one was needed.
    NoFreeChannel,
    /// No radar capture produced a detection.
    NotLocalized,
    /// The base station decoded a different symbol than the UAV flew to.
    SymbolError,
}

/// One completed or attempted channel change.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recovery {
    /// First instant the active channel was jammed.
    pub jam_onset: f64,
    pub detected_at: f64,
    pub flight_s: f64,
    pub sensing_s: f64,
    pub switch_s: f64,
    pub switched_at: f64,
    pub from: Channel,
    pub to: Channel,
    pub intended_symbol: usize,
    pub decoded_symbol: usize,
    pub estimate: Option<(f64, f64)>,
}

impl Recovery {
    pub fn detection_s(&self) -> f64 {
        self.detected_at - self.jam_onset
    }

    pub fn outage_s(&self) -> f64 {
        self.switched_at - self.jam_onset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTimeline {
    pub samples: Vec<GoodputSample>,
    pub events: Vec<Event>,
    pub recoveries: Vec<Recovery>,
    pub status: ScenarioStatus,
    pub min_pts: usize,
}

pub const TIMELINE_HEADER: [&str; 4] = ["t_s", "goodput", "channel_mhz", "event"];

impl ScenarioTimeline {
    /// Goodput rows with an empty event column, interleaved in time order
    /// with event rows whose goodput column is empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TIMELINE_HEADER)?;
        let mut events = self.events.iter().peekable();
        for s in &self.samples {
            while let Some(e) = events.next_if(|e| e.t < s.t) {
                write_event(&mut w, e)?;
            }
            w.write_record([s.t.to_string(), s.goodput.to_string(), s.channel.mhz().to_string(), String::new()])?;
        }
        for e in events {
            write_event(&mut w, e)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Total time of windows whose goodput fell under `threshold`.
    pub fn low_goodput_time(&self, threshold: f64, window: f64) -> f64 {
        self.samples.iter().filter(|s| s.goodput < threshold).count() as f64 * window
    }
}

fn write_event<W: Write>(w: &mut csv::Writer<W>, e: &Event) -> Result<()> {
    let label = match e.symbol {
        Some(s) => format!("{}:{s}", e.kind.as_str()),
        None => e.kind.as_str().to_string(),
    };
    w.write_record([e.t.to_string(), String::new(), e.channel.mhz().to_string(), label])?;
    Ok(())
}

/// Piecewise-constant channel of each side. `changes` holds
/// `(time, uav, bs)` from time zero on, in time order.
struct LinkState {
    changes: Vec<(f64, Channel, Channel)>,
}

impl LinkState {
    fn at(&self, t: f64) -> (Channel, Channel) {
        let k = self.changes.partition_point(|c| c.0 <= t);
        let c = self.changes[k.max(1) - 1];
        (c.1, c.2)
    }

    /// Fraction of `[a, b)` during which both sides share an unjammed channel.
    fn up_fraction(&self, cfg: &ScenarioConfig, a: f64, b: f64) -> f64 {
        let mut cuts = vec![a, b];
        cuts.extend(self.changes.iter().map(|c| c.0));
        for j in &cfg.jammer {
            cuts.push(j.t_start_s);
            cuts.push(j.end());
        }
        cuts.retain(|&t| t >= a && t <= b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut up = 0.0;
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let (uav, bs) = self.at(mid);
            if uav == bs && !cfg.jammed(bs, mid) {
                up += w[1] - w[0];
            }
        }
        up / (b - a)
    }
}

/// First instant at or after `from` that `channel` is jammed, found among
/// the jam interval starts.
fn jam_onset(cfg: &ScenarioConfig, channel: Channel, from: f64, until: f64) -> f64 {
    if cfg.jammed(channel, from) {
        return from;
    }
    cfg.jammer
        .iter()
        .filter(|j| j.channels.contains(&channel) && j.t_start_s >= from && j.t_start_s <= until)
        .map(|j| j.t_start_s)
        .fold(until, f64::min)
}

/// Runs the scenario. Window jitter and radar captures draw from separate
/// streams of the seed, so changing the sensing setup does not reshuffle
/// the goodput noise.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioTimeline> {
    cfg.validate()?;
    let link = &cfg.link;
    let mut dbscan = cfg.dbscan;
    if let Some(alpha) = link.min_pts_alpha {
        dbscan.min_pts = compute_min_pts(alpha, &cfg.sensor, link.t_meas_s)?;
    }
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    jitter_rng.set_stream(0);
    let mut radar_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    radar_rng.set_stream(1);

    let c = &cfg.constellation;
    let mut state = LinkState {
        changes: vec![(0.0, cfg.initial_channel, cfg.initial_channel)],
    };
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let mut recoveries: Vec<Recovery> = Vec::new();
    let mut status = ScenarioStatus::Completed;

    let w = link.goodput_window_s;
    let n_windows = (link.duration_s / w).ceil() as usize;
    let mut low_streak = 0u32;
    // windows before this time belong to an ongoing recovery
    let mut busy_until = 0.0;
    let mut watch_from = 0.0;

    for k in 0..n_windows {
        let (a, b) = (k as f64 * w, (k + 1) as f64 * w);
        let frac = state.up_fraction(cfg, a, b);
        let goodput = frac * (1.0 - link.goodput_jitter * jitter_rng.random::<f64>());
        samples.push(GoodputSample {
            t: a,
            goodput,
            channel: state.at(b).1,
        });

        if status != ScenarioStatus::Completed || a < busy_until {
            continue;
        }
        if goodput >= link.jam_threshold {
            low_streak = 0;
            continue;
        }
        low_streak += 1;
        if low_streak < link.jam_windows {
            continue;
        }
        low_streak = 0;

        let detected_at = b;
        let (current, _) = state.at(detected_at);
        events.push(Event {
            t: detected_at,
            kind: EventKind::JamDetected,
            channel: current,
            symbol: None,
        });
        let pos = cfg.channels.iter().position(|&ch| ch == current).unwrap_or(0);
        let n = cfg.channels.len();
        let Some(next) = (1..n)
            .map(|s| cfg.channels[(pos + s) % n])
            .find(|&ch| !cfg.jammed(ch, detected_at))
        else {
            status = ScenarioStatus::NoFreeChannel;
            continue;
        };

        let from_sym = c.symbol_for_channel(current).expect("validated coverage");
        let to_sym = c.symbol_for_channel(next).expect("validated coverage");
        events.push(Event {
            t: detected_at,
            kind: EventKind::MoveStarted,
            channel: next,
            symbol: Some(to_sym),
        });
        let flight_s = fly_to(&c.symbol(from_sym), &c.symbol(to_sym), &cfg.pid, &cfg.flight)?.travel_time;

        let mut sensing_s = 0.0;
        let mut estimate = None;
        for _ in 0..link.max_sensing_attempts {
            sensing_s += link.t_meas_s;
            let frame = synthesize_frame(&c.symbol(to_sym), &cfg.sensor, &cfg.hover, link.t_meas_s, &mut radar_rng)?;
            if let Some(top) = localize(&frame.cloud, &dbscan, &cfg.hist)?.first() {
                estimate = Some(top.estimate);
                break;
            }
        }
        let decided_at = detected_at + flight_s + sensing_s;
        let Some(est) = estimate else {
            status = ScenarioStatus::NotLocalized;
            busy_until = f64::INFINITY;
            continue;
        };
        let decoded = decode_symbol(&est, c);
        let decoded_channel = c.channel(decoded);
        events.push(Event {
            t: decided_at,
            kind: EventKind::SymbolDecoded,
            channel: decoded_channel,
            symbol: Some(decoded),
        });
        let switched_at = decided_at + link.switch_time_s;
        events.push(Event {
            t: switched_at,
            kind: EventKind::ChannelSwitched,
            channel: decoded_channel,
            symbol: Some(decoded),
        });
        state.changes.push((switched_at, next, decoded_channel));
        recoveries.push(Recovery {
            jam_onset: jam_onset(cfg, current, watch_from, detected_at),
            detected_at,
            flight_s,
            sensing_s,
            switch_s: link.switch_time_s,
            switched_at,
            from: current,
            to: next,
            intended_symbol: to_sym,
            decoded_symbol: decoded,
            estimate: Some((est.theta(), est.rho())),
        });
        if decoded != to_sym {
            status = ScenarioStatus::SymbolError;
        }
        // the first window that starts on the new channel is watched again
        busy_until = switched_at;
        watch_from = switched_at;
    }

    events.sort_by(|x, y| x.t.total_cmp(&y.t));
    Ok(ScenarioTimeline {
        samples,
        events,
        recoveries,
        status,
        min_pts: dbscan.min_pts,
    })
}
