use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Fov, PolarPoint};

/// Relative tolerance for deciding that a coordinate sits on the lattice.
pub const LATTICE_TOL: f64 = 1e-9;

/// Radio channel, identified by its center frequency in MHz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Channel(pub f64);

impl Channel {
    pub fn mhz(&self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} MHz", self.0)
    }
}

/// Symbol positions on a rectangular (Δθ, Δρ) lattice. Symbol `i` signals
/// `channel_map[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    symbols: Vec<PolarPoint>,
    delta_theta: f64,
    delta_rho: f64,
    channel_map: Vec<Channel>,
    lattice: Vec<(i64, i64)>,
}

impl Constellation {
    pub fn new(
        symbols: Vec<PolarPoint>,
        delta_theta: f64,
        delta_rho: f64,
        channel_map: Vec<Channel>,
    ) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidConstellation("no symbols".into()));
        }
        if !(delta_theta > 0.0 && delta_rho > 0.0) || !(delta_theta.is_finite() && delta_rho.is_finite()) {
            return Err(Error::InvalidConstellation(format!(
                "spacings must be positive, got ({delta_theta} deg, {delta_rho} m)"
            )));
        }
        if channel_map.len() != symbols.len() {
            return Err(Error::InvalidConstellation(format!(
                "{} symbols but {} channels",
                symbols.len(),
                channel_map.len()
            )));
        }
        for (i, a) in channel_map.iter().enumerate() {
            if !a.0.is_finite() {
                return Err(Error::InvalidConstellation(format!("channel {i} is not finite")));
            }
            if channel_map[..i].contains(a) {
                return Err(Error::InvalidConstellation(format!("channel {a} mapped twice")));
            }
        }
        let lattice = lattice_coords(&symbols, delta_theta, delta_rho)?;
        for i in 0..lattice.len() {
            if lattice[..i].contains(&lattice[i]) {
                return Err(Error::InvalidConstellation(format!(
                    "symbol {i} duplicates an earlier symbol"
                )));
            }
        }
        Ok(Constellation {
            symbols,
            delta_theta,
            delta_rho,
            channel_map,
            lattice,
        })
    }

    /// Full `cols × rows` block: `cols` azimuths centered on `center`, `rows`
    /// ranges from `center` outwards, symbols numbered azimuth-major.
    /// Channels are numbered 0, 1, ... when the caller has none to assign.
    pub fn block(cols: usize, rows: usize, center: &PolarPoint, delta_theta: f64, delta_rho: f64) -> Result<Self> {
        let start = center.theta() - delta_theta * cols.saturating_sub(1) as f64 / 2.0;
        let mut symbols = Vec::with_capacity(cols * rows);
        for i in 0..cols {
            for j in 0..rows {
                symbols.push(PolarPoint::new(start + delta_theta * i as f64, center.rho() + delta_rho * j as f64)?);
            }
        }
        let channels = (0..symbols.len()).map(|k| Channel(k as f64)).collect();
        Constellation::new(symbols, delta_theta, delta_rho, channels)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[PolarPoint] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> PolarPoint {
        self.symbols[index]
    }

    pub fn delta_theta(&self) -> f64 {
        self.delta_theta
    }

    pub fn delta_rho(&self) -> f64 {
        self.delta_rho
    }

    pub fn channel_map(&self) -> &[Channel] {
        &self.channel_map
    }

    pub fn channel(&self, symbol: usize) -> Channel {
        self.channel_map[symbol]
    }

    pub fn symbol_for_channel(&self, channel: Channel) -> Option<usize> {
        self.channel_map.iter().position(|c| *c == channel)
    }

    /// Integer lattice coordinates `(k_theta, k_rho)` relative to symbol 0.
    pub fn lattice(&self) -> &[(i64, i64)] {
        &self.lattice
    }

    /// Same layout with a different symbol-to-channel assignment.
    pub fn with_channel_map(&self, channel_map: Vec<Channel>) -> Result<Self> {
        Constellation::new(self.symbols.clone(), self.delta_theta, self.delta_rho, channel_map)
    }

    /// Checks every symbol against a field of view and maximum range.
    pub fn check_bounds(&self, fov: &Fov, dist_max: f64) -> Result<()> {
        for (i, s) in self.symbols.iter().enumerate() {
            if !fov.contains(s.theta()) || s.rho() > dist_max {
                return Err(Error::InvalidConstellation(format!(
                    "symbol {i} at ({} deg, {} m) is outside the sensing area",
                    s.theta(),
                    s.rho()
                )));
            }
        }
        Ok(())
    }

    /// Channels covered by the map, in symbol order.
    pub fn covers(&self, channels: &[Channel]) -> bool {
        channels.len() == self.channel_map.len()
            && channels.iter().all(|c| self.channel_map.contains(c))
    }
}

fn lattice_coords(symbols: &[PolarPoint], dt: f64, dr: f64) -> Result<Vec<(i64, i64)>> {
    let origin = symbols[0];
    let snap = |offset: f64, step: f64, axis: &str, i: usize| -> Result<i64> {
        let k = (offset / step).round();
        if (offset - k * step).abs() > LATTICE_TOL * step * k.abs().max(1.0) {
            return Err(Error::OffLattice {
                delta_theta: dt,
                delta_rho: dr,
                detail: format!("symbol {i} is {offset} off symbol 0 along {axis}"),
            });
        }
        Ok(k as i64)
    };
    symbols
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok((
                snap(s.theta() - origin.theta(), dt, "theta", i)?,
                snap(s.rho() - origin.rho(), dr, "rho", i)?,
            ))
        })
        .collect()
}
