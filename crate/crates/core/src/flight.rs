//! Point-mass flight between constellation points under a PID velocity
//! controller, and the mean travel time of a constellation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::geometry::{CartesianPoint, PolarPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidParams {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    /// The integrator only accumulates while the position error is inside
    /// this radius, so long approaches do not wind it up.
    pub integral_zone_m: f64,
}

impl Default for PidParams {
    fn default() -> Self {
        PidParams {
            kp: 0.6,
            kd: 0.12,
            ki: 0.05,
            integral_zone_m: 0.5,
        }
    }
}

impl PidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp > 0.0 && self.kd >= 0.0 && self.ki >= 0.0 && self.integral_zone_m >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "PID gains need kp > 0 and kd, ki, integral zone >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightConfig {
    pub dt_s: f64,
    pub v_max_mps: f64,
    pub arrival_radius_m: f64,
    /// The UAV must stay inside the arrival radius this long to count as arrived.
    pub settle_time_s: f64,
    pub max_sim_time_s: f64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        FlightConfig {
            dt_s: 0.01,
            v_max_mps: 5.0,
            arrival_radius_m: 0.05,
            settle_time_s: 0.5,
            max_sim_time_s: 600.0,
        }
    }
}

impl FlightConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.dt_s, self.v_max_mps, self.arrival_radius_m, self.settle_time_s, self.max_sim_time_s];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("flight settings must be positive, got {self:?}")));
        }
        if self.dt_s * 10.0 > self.settle_time_s {
            return Err(Error::InvalidParameter(format!(
                "dt ({} s) must be well below the settle time ({} s)",
                self.dt_s, self.settle_time_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlightSample {
    pub t: f64,
    pub position: CartesianPoint,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<FlightSample>,
    /// Time the UAV entered the arrival radius for good.
    pub travel_time: f64,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_s", "x_m", "y_m", "speed_mps"])?;
        for s in &self.samples {
            w.write_record([
                s.t.to_string(),
                s.position.x.to_string(),
                s.position.y.to_string(),
                s.speed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn clamp_norm(x: f64, y: f64, max: f64) -> (f64, f64) {
    let n = x.hypot(y);
    if n > max {
        (x * max / n, y * max / n)
    } else {
        (x, y)
    }
}

/// Simulates one leg.
///
/// Each step commands `v = kp·e + kd·de/dt + ki·∫e` on the 2-D position
/// error, clamps its magnitude to `v_max` and integrates the position. The
/// integral is clamped so that `ki·|∫e| <= v_max` and only accumulates while
/// the command is unsaturated and the error is inside the integral zone. The travel time is the
/// moment the UAV entered the arrival radius and then stayed inside for
/// `settle_time`.
pub fn fly_to(start: &PolarPoint, target: &PolarPoint, pid: &PidParams, cfg: &FlightConfig) -> Result<Trajectory> {
    fly_cartesian(start.to_cartesian(), target.to_cartesian(), pid, cfg)
}

pub fn fly_cartesian(
    start: CartesianPoint,
    target: CartesianPoint,
    pid: &PidParams,
    cfg: &FlightConfig,
) -> Result<Trajectory> {
    pid.validate()?;
    cfg.validate()?;
    let mut pos = start;
    let mut samples = vec![FlightSample {
        t: 0.0,
        position: pos,
        speed: 0.0,
    }];
    if start.distance(&target) <= cfg.arrival_radius_m * 1e-9 {
        return Ok(Trajectory {
            samples,
            travel_time: 0.0,
        });
    }

    let dt = cfg.dt_s;
    let settle_steps = (cfg.settle_time_s / dt).round() as usize;
    let max_steps = (cfg.max_sim_time_s / dt).ceil() as usize;
    let integral_cap = if pid.ki > 0.0 { cfg.v_max_mps / pid.ki } else { f64::INFINITY };

    let mut prev_err = (target.x - pos.x, target.y - pos.y);
    let mut integral = (0.0, 0.0);
    let mut entered: Option<usize> = if start.distance(&target) <= cfg.arrival_radius_m { Some(0) } else { None };

    for step in 1..=max_steps {
        let err = (target.x - pos.x, target.y - pos.y);
        let deriv = ((err.0 - prev_err.0) / dt, (err.1 - prev_err.1) / dt);
        prev_err = err;
        let candidate = clamp_norm(integral.0 + err.0 * dt, integral.1 + err.1 * dt, integral_cap);
        let raw = (
            pid.kp * err.0 + pid.kd * deriv.0 + pid.ki * candidate.0,
            pid.kp * err.1 + pid.kd * deriv.1 + pid.ki * candidate.1,
        );
        // a saturated command or a far target freezes the integrator
        if raw.0.hypot(raw.1) <= cfg.v_max_mps && err.0.hypot(err.1) <= pid.integral_zone_m {
            integral = candidate;
        }
        let v = clamp_norm(
            pid.kp * err.0 + pid.kd * deriv.0 + pid.ki * integral.0,
            pid.kp * err.1 + pid.kd * deriv.1 + pid.ki * integral.1,
            cfg.v_max_mps,
        );
        pos = CartesianPoint::new(pos.x + v.0 * dt, pos.y + v.1 * dt);
        samples.push(FlightSample {
            t: step as f64 * dt,
            position: pos,
            speed: v.0.hypot(v.1),
        });

        if pos.distance(&target) <= cfg.arrival_radius_m {
            let first = *entered.get_or_insert(step);
            if step - first >= settle_steps {
                return Ok(Trajectory {
                    samples,
                    travel_time: first as f64 * dt,
                });
            }
        } else {
            entered = None;
        }
    }
    Err(Error::NotSettled {
        max_sim_time: cfg.max_sim_time_s,
        remaining: pos.distance(&target),
    })
}

/// Mean leg time over all ordered symbol pairs. Legs are symmetric, so each
/// unordered pair is flown once.
pub fn mean_travel_time(constellation: &Constellation, pid: &PidParams, cfg: &FlightConfig) -> Result<f64> {
    let n = constellation.len();
    if n < 2 {
        return Ok(0.0);
    }
    let s = constellation.symbols();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += fly_to(&s[i], &s[j], pid, cfg)?.travel_time;
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}
