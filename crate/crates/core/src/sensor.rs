//! Synthetic radar point clouds.
//!
//! Detection density falls off exponentially with range,
//! `count = rate_r · t_meas · exp(decay_b · d)`, and target returns scatter
//! more in azimuth than in range. Clutter is spread uniformly over the
//! sensed sector.
//!
//! The default `rate_r` and `decay_b` are placeholders, not fitted values.
//! Fit them to a captured dataset before drawing conclusions that depend on
//! absolute point counts.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::HoverModel;
use crate::geometry::{Fov, PolarPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    /// Target detections per second at zero range.
    pub rate_r: f64,
    /// Exponential density coefficient per meter; negative means sparser far away.
    pub decay_b: f64,
    pub scatter_sigma_theta_deg: f64,
    pub scatter_sigma_rho_m: f64,
    /// Clutter detections per second over the whole sector.
    pub clutter_rate: f64,
    pub dist_max_m: f64,
    pub fov: Fov,
    /// Median target power at 1 m; falls with the square of range.
    pub target_power_median: f64,
    /// Log-normal spread (std of ln power) of target returns.
    pub target_power_spread: f64,
    /// Returns far from the body are weaker by `exp(-focus · z² / 2)`, where
    /// `z` is the scatter offset in sigmas.
    pub target_power_focus: f64,
    pub clutter_power_median: f64,
    pub clutter_power_spread: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            rate_r: 50.0,
            decay_b: -0.2,
            scatter_sigma_theta_deg: 0.5,
            scatter_sigma_rho_m: 0.03,
            clutter_rate: 10.0,
            dist_max_m: 10.0,
            fov: Fov::default(),
            target_power_median: 100.0,
            target_power_spread: 0.5,
            target_power_focus: 0.5,
            clutter_power_median: 0.5,
            clutter_power_spread: 0.5,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.rate_r > 0.0 && self.rate_r.is_finite()) {
            return bad(format!("rate_r must be positive, got {}", self.rate_r));
        }
        if !self.decay_b.is_finite() {
            return bad("decay_b must be finite".into());
        }
        if !(self.dist_max_m > 0.0 && self.dist_max_m.is_finite()) {
            return bad(format!("dist_max_m must be positive, got {}", self.dist_max_m));
        }
        if !(self.scatter_sigma_theta_deg > 0.0 && self.scatter_sigma_rho_m > 0.0) {
            return bad("scatter sigmas must be positive".into());
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return bad(format!("clutter_rate must be non-negative, got {}", self.clutter_rate));
        }
        let arc = self.scatter_sigma_theta_deg.to_radians() * 0.5 * self.dist_max_m;
        if arc <= self.scatter_sigma_rho_m {
            return bad(format!(
                "azimuth scatter ({arc:.4} m of arc at half range) must exceed range scatter ({} m)",
                self.scatter_sigma_rho_m
            ));
        }
        if !(self.target_power_median > 0.0 && self.clutter_power_median > 0.0) {
            return bad("power medians must be positive".into());
        }
        if !(self.target_power_spread >= 0.0 && self.clutter_power_spread >= 0.0 && self.target_power_focus >= 0.0) {
            return bad("power spreads and focus must be non-negative".into());
        }
        Fov::new(self.fov.min_deg, self.fov.max_deg)?;
        Ok(())
    }
}

pub fn expected_point_count(model: &SensorModel, t_meas: f64, distance: f64) -> Result<f64> {
    if !(t_meas > 0.0) {
        return Err(Error::InvalidParameter(format!("t_meas must be positive, got {t_meas}")));
    }
    if !(0.0..=model.dist_max_m).contains(&distance) {
        return Err(Error::OutOfRange {
            distance,
            dist_max: model.dist_max_m,
        });
    }
    Ok(model.rate_r * t_meas * (model.decay_b * distance).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    #[serde(rename = "t_s")]
    pub t: f64,
    #[serde(rename = "theta_deg")]
    pub theta: f64,
    #[serde(rename = "rho_m")]
    pub rho: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    pub t_meas: f64,
}

pub const CLOUD_HEADER: [&str; 4] = ["t_s", "theta_deg", "rho_m", "power"];

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(CLOUD_HEADER)?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `t_s,theta_deg,rho_m,power` format. Lines starting with `#`
    /// are comments. When `t_meas` is not given, the latest timestamp is used.
    pub fn read_csv<R: Read>(reader: R, t_meas: Option<f64>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CLOUD_HEADER {
            return Err(Error::InvalidParameter(format!(
                "point-cloud header must be `{}`, got `{}`",
                CLOUD_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (row, rec) in r.deserialize::<CloudPoint>().enumerate() {
            let p = rec?;
            if !(p.power > 0.0) || p.rho < 0.0 || !p.theta.is_finite() || !p.rho.is_finite() || !(p.t >= 0.0) {
                return Err(Error::InvalidPoint(format!("row {}: {p:?}", row + 1)));
            }
            points.push(p);
        }
        let latest = points.iter().map(|p| p.t).fold(0.0, f64::max);
        let t_meas = t_meas.unwrap_or(latest);
        if latest > t_meas {
            return Err(Error::InvalidParameter(format!(
                "timestamp {latest} s lies beyond the collection window {t_meas} s"
            )));
        }
        Ok(PointCloud { points, t_meas })
    }
}

/// A synthesized cloud together with the UAV position the sensor actually saw.
#[derive(Debug, Clone)]
pub struct SensedFrame {
    pub cloud: PointCloud,
    /// True position displaced by hover drift during this window.
    pub center: (f64, f64),
    /// Number of points in `cloud` that came from the target.
    pub target_points: usize,
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
}

fn lognormal<R: Rng + ?Sized>(rng: &mut R, median: f64, spread: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    median * (spread * z).exp()
}

/// Synthesizes one collection window of `t_meas` seconds.
///
/// Hover drift moves the whole target once per window; each detection then
/// scatters independently around that displaced center. Points that land
/// outside the field of view or beyond `dist_max` are not reported.
pub fn synthesize_frame<R: Rng + ?Sized>(
    true_pos: &PolarPoint,
    model: &SensorModel,
    hover: &HoverModel,
    t_meas: f64,
    rng: &mut R,
) -> Result<SensedFrame> {
    model.validate()?;
    if !model.fov.contains(true_pos.theta()) || true_pos.rho() > model.dist_max_m {
        return Err(Error::InvalidPoint(format!(
            "UAV at ({} deg, {} m) is outside the sensing area",
            true_pos.theta(),
            true_pos.rho()
        )));
    }
    let expected = expected_point_count(model, t_meas, true_pos.rho())?;

    let zt: f64 = rng.sample(StandardNormal);
    let zr: f64 = rng.sample(StandardNormal);
    let center = (
        true_pos.theta() + hover.sigma_theta() * zt,
        true_pos.rho() + hover.sigma_rho() * zr,
    );

    let in_area = |theta: f64, rho: f64| model.fov.contains(theta) && (0.0..=model.dist_max_m).contains(&rho);
    let mut points = Vec::new();

    let n_target = poisson(rng, expected);
    for _ in 0..n_target {
        let t = rng.random_range(0.0..=t_meas);
        let st: f64 = rng.sample(StandardNormal);
        let sr: f64 = rng.sample(StandardNormal);
        let theta = center.0 + model.scatter_sigma_theta_deg * st;
        let rho = center.1 + model.scatter_sigma_rho_m * sr;
        let median = model.target_power_median / rho.max(1.0).powi(2);
        let power = lognormal(rng, median, model.target_power_spread)
            * (-0.5 * model.target_power_focus * (st * st + sr * sr)).exp();
        if in_area(theta, rho) {
            points.push((true, CloudPoint { t, theta, rho, power }));
        }
    }

    points.extend(clutter(model, t_meas, rng).map(|p| (false, p)));

    points.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
    let target_points = points.iter().filter(|(is_target, _)| *is_target).count();
    Ok(SensedFrame {
        cloud: PointCloud {
            points: points.into_iter().map(|(_, p)| p).collect(),
            t_meas,
        },
        center,
        target_points,
    })
}

pub fn synthesize_cloud<R: Rng + ?Sized>(
    true_pos: &PolarPoint,
    model: &SensorModel,
    hover: &HoverModel,
    t_meas: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    synthesize_frame(true_pos, model, hover, t_meas, rng).map(|f| f.cloud)
}

fn clutter<'a, R: Rng + ?Sized>(
    model: &'a SensorModel,
    t_meas: f64,
    rng: &'a mut R,
) -> impl Iterator<Item = CloudPoint> + 'a {
    let n = poisson(rng, model.clutter_rate * t_meas);
    (0..n).map(move |_| {
        let t = rng.random_range(0.0..=t_meas);
        let theta = rng.random_range(model.fov.min_deg..=model.fov.max_deg);
        // uniform over the sector's area
        let rho = model.dist_max_m * rng.random::<f64>().sqrt();
        let power = lognormal(rng, model.clutter_power_median, model.clutter_power_spread);
        CloudPoint { t, theta, rho, power }
    })
}

/// Clutter-only window, for false-alarm checks.
pub fn synthesize_clutter<R: Rng + ?Sized>(model: &SensorModel, t_meas: f64, rng: &mut R) -> Result<PointCloud> {
    model.validate()?;
    if !(t_meas > 0.0) {
        return Err(Error::InvalidParameter(format!("t_meas must be positive, got {t_meas}")));
    }
    let mut points: Vec<CloudPoint> = clutter(model, t_meas, rng).collect();
    points.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(PointCloud { points, t_meas })
}
