//! Symbol error probability of a hovering UAV.
//!
//! The UAV's measured position around symbol `s` is modeled as independent
//! Gaussians on each polar axis, `θ ~ N(s_θ, σθ)` and `ρ ~ N(s_ρ, σρ)`. A
//! symbol error happens when the position leaves the symbol's rectangular
//! decision region. Regions are bounded halfway to each lattice neighbor and
//! are unbounded on sides without a neighbor, so the per-symbol probability
//! depends only on how many neighbors the symbol has along each axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};

/// Per-axis standard deviation of the hover position error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHover", into = "RawHover")]
pub struct HoverModel {
    sigma_theta: f64,
    sigma_rho: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHover {
    sigma_theta_deg: f64,
    sigma_rho_m: f64,
}

impl TryFrom<RawHover> for HoverModel {
    type Error = Error;
    fn try_from(raw: RawHover) -> Result<Self> {
        HoverModel::new(raw.sigma_theta_deg, raw.sigma_rho_m)
    }
}

impl From<HoverModel> for RawHover {
    fn from(h: HoverModel) -> Self {
        RawHover {
            sigma_theta_deg: h.sigma_theta,
            sigma_rho_m: h.sigma_rho,
        }
    }
}

impl Default for HoverModel {
    /// RTK-corrected hover accuracy: 0.9° in azimuth, 5 cm in range.
    fn default() -> Self {
        HoverModel {
            sigma_theta: 0.9,
            sigma_rho: 0.05,
        }
    }
}

impl HoverModel {
    pub fn new(sigma_theta_deg: f64, sigma_rho_m: f64) -> Result<Self> {
        if !(sigma_theta_deg > 0.0 && sigma_rho_m > 0.0)
            || !(sigma_theta_deg.is_finite() && sigma_rho_m.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "hover sigmas must be positive, got ({sigma_theta_deg} deg, {sigma_rho_m} m)"
            )));
        }
        Ok(HoverModel {
            sigma_theta: sigma_theta_deg,
            sigma_rho: sigma_rho_m,
        })
    }

    pub fn sigma_theta(&self) -> f64 {
        self.sigma_theta
    }

    pub fn sigma_rho(&self) -> f64 {
        self.sigma_rho
    }
}

/// Upper tail of the standard normal distribution.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] by bisection. `p` must lie in (0, 1).
///
/// Returns the upper end of the final bracket, so `q_function(x) <= p`
/// always holds for the result.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Q inverse needs a probability in (0, 1), got {p}"
        )));
    }
    // Q(±38.5) is beyond f64 resolution on either side
    let (mut lo, mut hi) = (-38.5, 38.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(hi)
}

/// Number of lattice neighbors of a symbol along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeighborProfile {
    pub n_theta: u8,
    pub n_rho: u8,
}

impl NeighborProfile {
    pub fn new(n_theta: u8, n_rho: u8) -> Result<Self> {
        if n_theta > 2 || n_rho > 2 {
            return Err(Error::InvalidParameter(format!(
                "neighbor counts are at most 2 per axis, got ({n_theta}, {n_rho})"
            )));
        }
        Ok(NeighborProfile { n_theta, n_rho })
    }

    /// Interior symbol of a 2-D lattice.
    pub const WORST: NeighborProfile = NeighborProfile {
        n_theta: 2,
        n_rho: 2,
    };
}

impl Default for NeighborProfile {
    fn default() -> Self {
        NeighborProfile::WORST
    }
}

/// Decision region of one symbol. Open sides are infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolRegion {
    pub theta_low: f64,
    pub theta_high: f64,
    pub rho_low: f64,
    pub rho_high: f64,
}

impl SymbolRegion {
    /// Closed-bound membership; callers resolve boundary ties.
    pub fn contains(&self, theta: f64, rho: f64) -> bool {
        theta >= self.theta_low && theta <= self.theta_high && rho >= self.rho_low && rho <= self.rho_high
    }
}

fn has_symbol(c: &Constellation, at: (i64, i64)) -> bool {
    c.lattice().contains(&at)
}

pub fn neighbor_counts(constellation: &Constellation, symbol: usize) -> NeighborProfile {
    let (kt, kr) = constellation.lattice()[symbol];
    let count = |a: (i64, i64), b: (i64, i64)| has_symbol(constellation, a) as u8 + has_symbol(constellation, b) as u8;
    NeighborProfile {
        n_theta: count((kt - 1, kr), (kt + 1, kr)),
        n_rho: count((kt, kr - 1), (kt, kr + 1)),
    }
}

pub fn symbol_region(constellation: &Constellation, symbol: usize) -> SymbolRegion {
    let (kt, kr) = constellation.lattice()[symbol];
    let s = constellation.symbol(symbol);
    let half_t = 0.5 * constellation.delta_theta();
    let half_r = 0.5 * constellation.delta_rho();
    let bound = |neighbor: (i64, i64), edge: f64, open: f64| {
        if has_symbol(constellation, neighbor) {
            edge
        } else {
            open
        }
    };
    SymbolRegion {
        theta_low: bound((kt - 1, kr), s.theta() - half_t, f64::NEG_INFINITY),
        theta_high: bound((kt + 1, kr), s.theta() + half_t, f64::INFINITY),
        rho_low: bound((kt, kr - 1), s.rho() - half_r, f64::NEG_INFINITY),
        rho_high: bound((kt, kr + 1), s.rho() + half_r, f64::INFINITY),
    }
}

/// Per-symbol error probability for a neighbor profile.
///
/// Each neighbor along an axis contributes one Gaussian tail beyond the
/// half-spacing, and the two axes fail independently:
/// `1 − (1 − n_θ·Q(Δθ/2σθ))(1 − n_ρ·Q(Δρ/2σρ))`. Profile (0, 0) gives 0.
pub fn symbol_error_probability(
    profile: NeighborProfile,
    delta_theta: f64,
    delta_rho: f64,
    hover: &HoverModel,
) -> f64 {
    let axis = |n: u8, delta: f64, sigma: f64| {
        if n == 0 {
            0.0
        } else {
            n as f64 * q_function(0.5 * delta / sigma)
        }
    };
    let p_theta = axis(profile.n_theta, delta_theta, hover.sigma_theta);
    let p_rho = axis(profile.n_rho, delta_rho, hover.sigma_rho);
    // p + q − pq avoids the cancellation in 1 − (1−p)(1−q) for tiny tails
    p_theta + p_rho - p_theta * p_rho
}

/// Average of the per-symbol probabilities over equiprobable symbols.
pub fn constellation_error_probability(constellation: &Constellation, hover: &HoverModel) -> f64 {
    let n = constellation.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|i| {
            symbol_error_probability(
                neighbor_counts(constellation, i),
                constellation.delta_theta(),
                constellation.delta_rho(),
                hover,
            )
        })
        .sum();
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub trials: u64,
    pub errors: u64,
    pub estimate: f64,
    /// Half-width of the 95% Wald interval.
    pub half_width: f64,
}

impl MonteCarloEstimate {
    fn from_counts(trials: u64, errors: u64) -> Self {
        let p = if trials == 0 { 0.0 } else { errors as f64 / trials as f64 };
        let half_width = if trials == 0 {
            0.0
        } else {
            1.959_963_984_540_054 * (p * (1.0 - p) / trials as f64).sqrt()
        };
        MonteCarloEstimate {
            trials,
            errors,
            estimate: p,
            half_width,
        }
    }
}

/// Trials per independently seeded block. Blocks, not shards, own the
/// random streams, so the result does not depend on the shard count.
pub const MC_BLOCK: u64 = 1 << 16;

/// Nearest symbol after scaling each axis by its hover sigma. Ties go to
/// the lower index. On a full rectangular lattice this is the same decision
/// as the midpoint regions.
pub fn nearest_symbol_normalized(
    constellation: &Constellation,
    hover: &HoverModel,
    theta: f64,
    rho: f64,
) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in constellation.symbols().iter().enumerate() {
        let dt = (theta - s.theta()) / hover.sigma_theta;
        let dr = (rho - s.rho()) / hover.sigma_rho;
        let d = dt * dt + dr * dr;
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn run_block(constellation: &Constellation, hover: &HoverModel, seed: u64, block: u64, trials: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let n = constellation.len();
    let mut errors = 0;
    for _ in 0..trials {
        let sent = rng.random_range(0..n);
        let s = constellation.symbol(sent);
        let zt: f64 = rng.sample(StandardNormal);
        let zr: f64 = rng.sample(StandardNormal);
        let theta = s.theta() + hover.sigma_theta * zt;
        let rho = s.rho() + hover.sigma_rho * zr;
        if nearest_symbol_normalized(constellation, hover, theta, rho) != sent {
            errors += 1;
        }
    }
    errors
}

/// Empirical symbol error rate with a 95% confidence half-width.
pub fn monte_carlo_pe(constellation: &Constellation, hover: &HoverModel, trials: u64, seed: u64) -> MonteCarloEstimate {
    monte_carlo_pe_sharded(constellation, hover, trials, seed, 1)
}

/// [`monte_carlo_pe`] spread over `shards` threads.
pub fn monte_carlo_pe_sharded(
    constellation: &Constellation,
    hover: &HoverModel,
    trials: u64,
    seed: u64,
    shards: usize,
) -> MonteCarloEstimate {
    let blocks = trials.div_ceil(MC_BLOCK);
    let block_trials = |b: u64| MC_BLOCK.min(trials - b * MC_BLOCK);
    let shards = shards.max(1) as u64;
    let errors: u64 = if shards == 1 {
        (0..blocks)
            .map(|b| run_block(constellation, hover, seed, b, block_trials(b)))
            .sum()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..shards)
                .map(|shard| {
                    scope.spawn(move || {
                        (shard..blocks)
                            .step_by(shards as usize)
                            .map(|b| run_block(constellation, hover, seed, b, block_trials(b)))
                            .sum::<u64>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("monte carlo shard panicked")).sum()
        })
    };
    MonteCarloEstimate::from_counts(trials, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::Channel;
    use crate::geometry::PolarPoint;

    fn grid(n_theta: usize, n_rho: usize, dt: f64, dr: f64) -> Constellation {
        let mut symbols = Vec::new();
        for i in 0..n_theta {
            for j in 0..n_rho {
                symbols.push(PolarPoint::new(dt * i as f64, 5.0 + dr * j as f64).unwrap());
            }
        }
        let chans = (0..symbols.len()).map(|k| Channel(900.0 + k as f64)).collect();
        Constellation::new(symbols, dt, dr, chans).unwrap()
    }

    /// Gaussian tail by composite Simpson quadrature on [x, x + 40].
    fn q_quadrature(x: f64) -> f64 {
        let n = 400_000;
        let h = 40.0 / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(x) + f(x + 40.0);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(x + h * k as f64);
        }
        s * h / 3.0
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!((q_function(1.0) - 0.158_655_253_931_457).abs() < 1e-12);
        for x in [-8.0, -3.3, -1.0, 0.0, 0.4, 1.0, 2.0, 4.5, 8.0] {
            assert!((q_function(x) + q_function(-x) - 1.0).abs() < 1e-12);
            if x >= 0.0 {
                assert!((q_function(x) - q_quadrature(x)).abs() < 1e-12, "x = {x}");
            }
        }
    }

    #[test]
    fn q_inverse_round_trips() {
        for p in [1e-15, 1e-6, 0.01, 0.158_655_253_931_457, 0.5, 0.9] {
            let x = q_inverse(p).unwrap();
            assert!((q_function(x) - p).abs() <= 1e-9 * p, "p = {p}");
        }
        assert!((q_inverse(0.5).unwrap()).abs() < 1e-12);
        for p in [1e-9, 0.003, 0.2] {
            assert!(q_function(q_inverse(p).unwrap()) <= p);
        }
        assert!(q_inverse(0.0).is_err());
        assert!(q_inverse(1.0).is_err());
    }

    #[test]
    fn neighbor_profiles() {
        let radial = grid(1, 2, 18.0, 1.0);
        assert_eq!(neighbor_counts(&radial, 0), NeighborProfile { n_theta: 0, n_rho: 1 });
        assert_eq!(neighbor_counts(&radial, 1), NeighborProfile { n_theta: 0, n_rho: 1 });
        let g42 = grid(2, 4, 5.0, 0.8);
        assert_eq!(neighbor_counts(&g42, 0), NeighborProfile { n_theta: 1, n_rho: 1 });
        let g33 = grid(3, 3, 4.0, 0.5);
        assert_eq!(neighbor_counts(&g33, 4), NeighborProfile::WORST);
        let single = grid(1, 1, 1.0, 1.0);
        assert_eq!(neighbor_counts(&single, 0), NeighborProfile { n_theta: 0, n_rho: 0 });
    }

    #[test]
    fn table_rows() {
        let hover = HoverModel::new(0.9, 0.05).unwrap();
        let (dt, dr) = (2.0, 0.12);
        let qt = q_function(dt / 2.0 / 0.9);
        let qr = q_function(dr / 2.0 / 0.05);
        let rows = [
            ((2, 2), 1.0 - (1.0 - 2.0 * qt) * (1.0 - 2.0 * qr)),
            ((2, 1), 1.0 - (1.0 - 2.0 * qt) * (1.0 - qr)),
            ((2, 0), 2.0 * qt),
            ((1, 2), 1.0 - (1.0 - qt) * (1.0 - 2.0 * qr)),
            ((1, 1), 1.0 - (1.0 - qt) * (1.0 - qr)),
            ((1, 0), qt),
            ((0, 2), 2.0 * qr),
            ((0, 1), qr),
            ((0, 0), 0.0),
        ];
        for ((nt, nr), want) in rows {
            let got = symbol_error_probability(NeighborProfile::new(nt, nr).unwrap(), dt, dr, &hover);
            assert!((got - want).abs() < 1e-15, "row ({nt},{nr})");
        }
        // (n,0) mirrors (0,n) with the axes swapped
        let swapped = HoverModel::new(0.05, 0.9).unwrap();
        for n in 1..=2 {
            let a = symbol_error_probability(NeighborProfile::new(n, 0).unwrap(), dt, dr, &hover);
            let b = symbol_error_probability(NeighborProfile::new(0, n).unwrap(), dr, dt, &swapped);
            assert!((a - b).abs() < 1e-15);
        }
        let inf = symbol_error_probability(NeighborProfile::WORST, 1e6, 1e6, &hover);
        assert_eq!(inf, 0.0);
    }

    #[test]
    fn two_by_two_at_one_sigma() {
        let hover = HoverModel::new(1.0, 0.1).unwrap();
        let c = grid(2, 2, 2.0, 0.2);
        let pe = constellation_error_probability(&c, &hover);
        // 1 − (1 − Q(1))² to 30 digits: 0.292139018262858984...
        assert!((pe - 0.292_139_018_262_859).abs() < 1e-12);
        let q1 = q_function(1.0);
        assert!((pe - (1.0 - (1.0 - q1) * (1.0 - q1))).abs() < 1e-15);
    }

    #[test]
    fn pair_is_bpsk() {
        let hover = HoverModel::new(0.9, 0.05).unwrap();
        let theta_pair = grid(2, 1, 1.8, 1.0);
        let want = q_function(1.0);
        assert!((constellation_error_probability(&theta_pair, &hover) - want).abs() < 1e-12);
        assert_eq!(constellation_error_probability(&grid(1, 1, 1.0, 1.0), &hover), 0.0);
    }

    #[test]
    fn regions_tile_a_full_lattice() {
        let c = grid(3, 2, 4.0, 0.5);
        let r = symbol_region(&c, 0);
        assert_eq!(r.theta_low, f64::NEG_INFINITY);
        assert_eq!(r.theta_high, 2.0);
        assert_eq!(r.rho_low, f64::NEG_INFINITY);
        assert_eq!(r.rho_high, 5.25);
        let mut state = 7u64;
        for _ in 0..2000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let t = -10.0 + 30.0 * ((state >> 11) as f64 / (1u64 << 53) as f64);
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let rho = 3.0 + 4.0 * ((state >> 11) as f64 / (1u64 << 53) as f64);
            let inside: Vec<usize> = (0..c.len()).filter(|&i| symbol_region(&c, i).contains(t, rho)).collect();
            assert_eq!(inside.len(), 1);
            let hover = HoverModel::new(0.9, 0.05).unwrap();
            assert_eq!(inside[0], nearest_symbol_normalized(&c, &hover, t, rho));
        }
    }

    #[test]
    fn monte_carlo_limits_and_determinism() {
        let c = grid(2, 2, 18.0, 1.0);
        let tiny = HoverModel::new(1e-9, 1e-9).unwrap();
        assert_eq!(monte_carlo_pe(&c, &tiny, 10_000, 1).estimate, 0.0);
        let hover = HoverModel::new(9.0, 0.5).unwrap();
        let a = monte_carlo_pe(&c, &hover, 200_000, 42);
        let b = monte_carlo_pe(&c, &hover, 200_000, 42);
        assert_eq!(a, b);
        let sharded = monte_carlo_pe_sharded(&c, &hover, 200_000, 42, 3);
        assert_eq!(a, sharded);
        let analytic = constellation_error_probability(&c, &hover);
        assert!((a.estimate - analytic).abs() <= 3.0 * a.half_width);
    }

    #[test]
    fn edge_symbols_err_less_than_interior() {
        let c = grid(3, 3, 2.0, 0.1);
        let hover = HoverModel::default();
        let pe = |i| {
            symbol_error_probability(neighbor_counts(&c, i), c.delta_theta(), c.delta_rho(), &hover)
        };
        let interior = pe(4);
        for i in [0, 1, 2, 3, 5, 6, 7, 8] {
            assert!(pe(i) <= interior);
        }
    }
}
