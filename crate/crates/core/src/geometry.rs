//! Polar and Cartesian coordinates in the sensor plane.
//!
//! The sensor sits at the origin looking along +y. Azimuth `theta` is
//! measured in degrees from that boresight (positive towards +x) and range
//! `rho` in meters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Azimuth field of view of the sensor, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fov {
    pub min_deg: f64,
    pub max_deg: f64,
}

impl Default for Fov {
    fn default() -> Self {
        Fov {
            min_deg: -90.0,
            max_deg: 90.0,
        }
    }
}

impl Fov {
    pub fn new(min_deg: f64, max_deg: f64) -> Result<Self> {
        if !(min_deg.is_finite() && max_deg.is_finite()) || min_deg >= max_deg {
            return Err(Error::InvalidParameter(format!(
                "field of view [{min_deg}, {max_deg}] deg is empty"
            )));
        }
        Ok(Fov { min_deg, max_deg })
    }

    pub fn contains(&self, theta_deg: f64) -> bool {
        theta_deg >= self.min_deg && theta_deg <= self.max_deg
    }

    pub fn width(&self) -> f64 {
        self.max_deg - self.min_deg
    }
}

/// A position in the sensor's polar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolar", into = "RawPolar")]
pub struct PolarPoint {
    theta: f64,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolar {
    theta_deg: f64,
    rho_m: f64,
}

impl TryFrom<RawPolar> for PolarPoint {
    type Error = Error;

    fn try_from(raw: RawPolar) -> Result<Self> {
        PolarPoint::new(raw.theta_deg, raw.rho_m)
    }
}

impl From<PolarPoint> for RawPolar {
    fn from(p: PolarPoint) -> Self {
        RawPolar {
            theta_deg: p.theta,
            rho_m: p.rho,
        }
    }
}

impl PolarPoint {
    /// Point inside the default ±90° field of view.
    pub fn new(theta_deg: f64, rho_m: f64) -> Result<Self> {
        Self::within(theta_deg, rho_m, &Fov::default())
    }

    pub fn within(theta_deg: f64, rho_m: f64, fov: &Fov) -> Result<Self> {
        if !theta_deg.is_finite() || !rho_m.is_finite() {
            return Err(Error::InvalidPoint(format!(
                "non-finite coordinates ({theta_deg}, {rho_m})"
            )));
        }
        if rho_m < 0.0 {
            return Err(Error::InvalidPoint(format!("negative range {rho_m} m")));
        }
        if !fov.contains(theta_deg) {
            return Err(Error::InvalidPoint(format!(
                "azimuth {theta_deg} deg outside field of view [{}, {}]",
                fov.min_deg, fov.max_deg
            )));
        }
        Ok(PolarPoint {
            theta: theta_deg,
            rho: rho_m,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn to_cartesian(&self) -> CartesianPoint {
        let (s, c) = self.theta.to_radians().sin_cos();
        CartesianPoint {
            x: self.rho * s,
            y: self.rho * c,
        }
    }

    /// Straight-line (chord) distance in meters.
    pub fn distance(&self, other: &PolarPoint) -> f64 {
        distance(self, other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64) -> Self {
        CartesianPoint { x, y }
    }

    /// Inverse of [`PolarPoint::to_cartesian`]. The origin maps to
    /// `(0°, 0 m)`. Fails only when the azimuth falls outside `fov`.
    pub fn to_polar_within(&self, fov: &Fov) -> Result<PolarPoint> {
        let rho = self.x.hypot(self.y);
        let theta = if rho == 0.0 {
            0.0
        } else {
            self.x.atan2(self.y).to_degrees()
        };
        PolarPoint::within(theta, rho, fov)
    }

    pub fn to_polar(&self) -> Result<PolarPoint> {
        self.to_polar_within(&Fov::default())
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &CartesianPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Chord distance `sqrt(ρ1² + ρ2² − 2ρ1ρ2·cos(θ1−θ2))`.
pub fn distance(a: &PolarPoint, b: &PolarPoint) -> f64 {
    let dtheta = (a.theta - b.theta).to_radians();
    // 1 - cos(x) = 2 sin²(x/2) keeps small separations accurate
    let half = (0.5 * dtheta).sin();
    let dr = a.rho - b.rho;
    (dr * dr + 4.0 * a.rho * b.rho * half * half).max(0.0).sqrt()
}

/// Mean distance over all unordered pairs; 0 for fewer than two points.
pub fn mean_pairwise_distance(points: &[PolarPoint]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += distance(&points[i], &points[j]);
        }
    }
    total / (n * (n - 1) / 2) as f64
}
