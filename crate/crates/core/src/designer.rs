//! Constellation design.
//!
//! Spacings come first: the smallest `(Δθ, Δρ)` that keeps the symbol error
//! probability under a threshold. A square grid of `N²` candidate positions
//! is laid out from a start point, and the `N` candidates with the smallest
//! mean pairwise distance become the constellation, since shorter hops mean
//! shorter flights between symbols.

use serde::{Deserialize, Serialize};

use crate::constellation::{Channel, Constellation};
use crate::error::{Error, Result};
use crate::error_model::{constellation_error_probability, q_inverse, symbol_error_probability, HoverModel, NeighborProfile};
use crate::geometry::{mean_pairwise_distance, Fov, PolarPoint};

/// Default cap on the number of subsets the exhaustive search may visit.
pub const DEFAULT_SEARCH_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub delta_theta_deg: f64,
    pub delta_rho_m: f64,
}

/// Smallest spacings whose `profile` error probability stays at or below `xi`.
///
/// The budget is split evenly between the two axes, each axis solved by
/// bisection on the Gaussian tail. An axis with no neighbors in `profile`
/// needs no spacing of its own and reuses the normalized spacing of the
/// other axis.
pub fn solve_deltas(hover: &HoverModel, xi: f64, profile: NeighborProfile) -> Result<Spacing> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must be in (0, 1), got {xi}")));
    }
    let (nt, nr) = (profile.n_theta, profile.n_rho);
    if nt == 0 && nr == 0 {
        return Err(Error::InvalidParameter(
            "profile (0, 0) has no neighbors and constrains no spacing".into(),
        ));
    }
    // per-axis failure probability, from 1 − (1 − b)² = xi
    let per_axis = if nt > 0 && nr > 0 { 1.0 - (1.0 - xi).sqrt() } else { xi };
    let half_spacing = |n: u8| -> Result<f64> {
        let tail = per_axis / n as f64;
        if tail >= 0.5 {
            Ok(0.0)
        } else {
            q_inverse(tail)
        }
    };
    let (zt, zr) = match (nt, nr) {
        (0, _) => {
            let z = half_spacing(nr)?;
            (z, z)
        }
        (_, 0) => {
            let z = half_spacing(nt)?;
            (z, z)
        }
        _ => (half_spacing(nt)?, half_spacing(nr)?),
    };
    Ok(Spacing {
        delta_theta_deg: 2.0 * zt * hover.sigma_theta(),
        delta_rho_m: 2.0 * zr * hover.sigma_rho(),
    })
}

/// Spacings from a fixed spacing-to-sigma quotient in dB (`10·log10(Δ/σ)`).
/// 13 dB gives `Δ ≈ 20σ` on each axis.
pub fn deltas_from_quotient_db(hover: &HoverModel, quotient_db: f64) -> Result<Spacing> {
    if !quotient_db.is_finite() {
        return Err(Error::InvalidParameter(format!("quotient must be finite, got {quotient_db}")));
    }
    let ratio = 10f64.powf(quotient_db / 10.0);
    Ok(Spacing {
        delta_theta_deg: ratio * hover.sigma_theta(),
        delta_rho_m: ratio * hover.sigma_rho(),
    })
}

/// `N²` candidate positions: `N` azimuths centered on the start point and
/// `N` ranges from the start point outwards. Candidate `i·N + j` has the
/// `i`-th azimuth and the `j`-th range.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub center: PolarPoint,
    pub n: usize,
    pub spacing: Spacing,
    pub candidates: Vec<PolarPoint>,
}

pub fn build_grid(center: &PolarPoint, n: usize, spacing: Spacing, fov: &Fov, dist_max: f64) -> Result<CandidateGrid> {
    if n == 0 {
        return Err(Error::InvalidParameter("constellation needs at least one symbol".into()));
    }
    let (dt, dr) = (spacing.delta_theta_deg, spacing.delta_rho_m);
    if !(dt > 0.0 && dr > 0.0) {
        return Err(Error::InvalidParameter(format!("spacings must be positive, got ({dt} deg, {dr} m)")));
    }
    let span = (n - 1) as f64;
    let theta_lo = center.theta() - dt * span / 2.0;
    let theta_hi = center.theta() + dt * span / 2.0;
    let rho_hi = center.rho() + dr * span;
    let mut bad = Vec::new();
    if theta_lo < fov.min_deg {
        bad.push(format!("theta {theta_lo} deg < {}", fov.min_deg));
    }
    if theta_hi > fov.max_deg {
        bad.push(format!("theta {theta_hi} deg > {}", fov.max_deg));
    }
    if rho_hi > dist_max {
        bad.push(format!("rho {rho_hi} m > {dist_max}"));
    }
    if !bad.is_empty() {
        return Err(Error::GridOutOfBounds(bad.join(", ")));
    }
    let mut candidates = Vec::with_capacity(n * n);
    for i in 0..n {
        let theta = if n == 1 { center.theta() } else { theta_lo + dt * i as f64 };
        for j in 0..n {
            candidates.push(PolarPoint::within(theta, center.rho() + dr * j as f64, fov)?);
        }
    }
    Ok(CandidateGrid {
        center: *center,
        n,
        spacing,
        candidates,
    })
}

/// A chosen subset of a grid, shifted in azimuth so its mean azimuth sits
/// on the grid center. Rotation about the sensor preserves every distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Candidate indices, ascending.
    pub indices: Vec<usize>,
    pub symbols: Vec<PolarPoint>,
    pub mean_distance: f64,
    /// Subsets visited; 0 for the heuristic.
    pub visited: u64,
}

impl Selection {
    fn new(grid: &CandidateGrid, mut indices: Vec<usize>, visited: u64) -> Result<Self> {
        indices.sort_unstable();
        let picked: Vec<PolarPoint> = indices.iter().map(|&i| grid.candidates[i]).collect();
        let mean_theta = picked.iter().map(|p| p.theta()).sum::<f64>() / picked.len() as f64;
        let shift = grid.center.theta() - mean_theta;
        let symbols = picked
            .iter()
            .map(|p| PolarPoint::new(p.theta() + shift, p.rho()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Selection {
            mean_distance: mean_pairwise_distance(&picked),
            indices,
            symbols,
            visited,
        })
    }

    pub fn into_constellation(self, spacing: Spacing, channels: &[Channel]) -> Result<Constellation> {
        Constellation::new(self.symbols, spacing.delta_theta_deg, spacing.delta_rho_m, channels.to_vec())
    }
}

/// The `n` candidates closest to the grid center, ties by index.
pub fn heuristic_search(grid: &CandidateGrid, n: usize) -> Result<Selection> {
    check_n(grid, n)?;
    let mut ranked: Vec<(f64, usize)> =
        grid.candidates.iter().enumerate().map(|(i, c)| (c.distance(&grid.center), i)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Selection::new(grid, ranked.into_iter().take(n).map(|(_, i)| i).collect(), 0)
}

fn check_n(grid: &CandidateGrid, n: usize) -> Result<()> {
    if n == 0 || n > grid.candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot pick {n} symbols from {} candidates",
            grid.candidates.len()
        )));
    }
    Ok(())
}

/// Relative tolerance under which two subset costs count as equal.
const COST_TOL: f64 = 1e-9;

struct BranchAndBound<'a> {
    dist: &'a [Vec<f64>],
    /// `floor_sum[j][m]`: sum of the `m` smallest distances from `j` to any other candidate.
    floor_sum: Vec<Vec<f64>>,
    n: usize,
    budget: u64,
    visited: u64,
    best_cost: f64,
    best: Vec<usize>,
    chosen: Vec<usize>,
    /// Summed distance from each candidate to the chosen set.
    link: Vec<f64>,
    scratch: Vec<f64>,
}

impl BranchAndBound<'_> {
    fn better(&self, cost: f64) -> bool {
        let tol = COST_TOL * self.best_cost.abs().max(1e-300);
        cost < self.best_cost - tol || (cost <= self.best_cost + tol && self.chosen < self.best)
    }

    /// Lower bound on the cost added by completing the subset with `m`
    /// candidates taken after `last`.
    fn completion_bound(&mut self, start: usize, m: usize) -> f64 {
        let l = self.dist.len();
        self.scratch.clear();
        for j in start..l {
            self.scratch.push(self.link[j] + 0.5 * self.floor_sum[j][m - 1]);
        }
        if self.scratch.len() > m {
            self.scratch.select_nth_unstable_by(m - 1, f64::total_cmp);
        }
        self.scratch[..m].iter().sum()
    }

    fn descend(&mut self, start: usize, cost: f64) -> Result<()> {
        self.visited += 1;
        if self.visited > self.budget {
            return Err(Error::SearchBudgetExceeded { budget: self.budget });
        }
        let k = self.chosen.len();
        if k == self.n {
            if self.better(cost) {
                self.best_cost = cost;
                self.best = self.chosen.clone();
            }
            return Ok(());
        }
        let m = self.n - k;
        let l = self.dist.len();
        if l - start < m {
            return Ok(());
        }
        let bound = cost + self.completion_bound(start, m);
        if bound > self.best_cost + COST_TOL * self.best_cost.abs() {
            return Ok(());
        }
        for j in start..=(l - m) {
            let added = self.link[j];
            self.chosen.push(j);
            for (t, d) in self.link.iter_mut().zip(&self.dist[j]) {
                *t += d;
            }
            let r = self.descend(j + 1, cost + added);
            for (t, d) in self.link.iter_mut().zip(&self.dist[j]) {
                *t -= d;
            }
            self.chosen.pop();
            r?;
        }
        Ok(())
    }
}

/// Optimal `n`-subset by mean pairwise distance.
///
/// Subsets are enumerated in lexicographic index order and pruned with a
/// lower bound on the cost of completing a partial subset, so the result is
/// the exact optimum (lowest index set among ties). The search fails once it
/// has visited `budget` subsets.
pub fn exhaustive_search(grid: &CandidateGrid, n: usize, budget: u64) -> Result<Selection> {
    check_n(grid, n)?;
    let l = grid.candidates.len();
    if n == l {
        return heuristic_search(grid, n);
    }
    let c = &grid.candidates;
    let dist: Vec<Vec<f64>> = (0..l).map(|i| (0..l).map(|j| c[i].distance(&c[j])).collect()).collect();
    let floor_sum = (0..l)
        .map(|j| {
            let mut row: Vec<f64> = (0..l).filter(|&k| k != j).map(|k| dist[j][k]).collect();
            row.sort_by(f64::total_cmp);
            let mut acc = vec![0.0];
            for d in row.iter().take(n) {
                acc.push(acc.last().unwrap() + d);
            }
            acc
        })
        .collect();

    let seed = heuristic_search(grid, n)?;
    let seed_cost = pair_sum(&dist, &seed.indices);
    let mut search = BranchAndBound {
        dist: &dist,
        floor_sum,
        n,
        budget,
        visited: 0,
        best_cost: seed_cost,
        best: seed.indices,
        chosen: Vec::with_capacity(n),
        link: vec![0.0; l],
        scratch: Vec::with_capacity(l),
    };
    search.descend(0, 0.0)?;
    let visited = search.visited;
    Selection::new(grid, search.best, visited)
}

fn pair_sum(dist: &[Vec<f64>], idx: &[usize]) -> f64 {
    let mut s = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            s += dist[i][j];
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exhaustive,
    Heuristic,
}

/// How the lattice spacings are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpacingRule {
    /// Solve for the threshold with a worst-case neighbor profile.
    Threshold {
        #[serde(default)]
        worst_profile: NeighborProfile,
    },
    /// Fixed spacing-to-sigma quotient in dB.
    QuotientDb { quotient_db: f64 },
    Fixed { delta_theta_deg: f64, delta_rho_m: f64 },
}

impl Default for SpacingRule {
    fn default() -> Self {
        SpacingRule::Threshold {
            worst_profile: NeighborProfile::WORST,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRequest {
    pub channels: Vec<Channel>,
    pub hover: HoverModel,
    pub xi: f64,
    pub center: PolarPoint,
    pub mode: SearchMode,
    pub spacing: SpacingRule,
    pub fov: Fov,
    pub dist_max: f64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub n: usize,
    pub delta_theta_deg: f64,
    pub delta_rho_m: f64,
    pub xi: f64,
    pub pe_analytic: f64,
    /// Worst-case per-symbol bound the spacings were solved against.
    pub pe_worst_case: f64,
    pub mean_distance_m: f64,
    pub mode: SearchMode,
    pub subsets_visited: u64,
}

pub fn spacing_for(rule: &SpacingRule, hover: &HoverModel, xi: f64) -> Result<Spacing> {
    match *rule {
        SpacingRule::Threshold { worst_profile } => solve_deltas(hover, xi, worst_profile),
        SpacingRule::QuotientDb { quotient_db } => deltas_from_quotient_db(hover, quotient_db),
        SpacingRule::Fixed {
            delta_theta_deg,
            delta_rho_m,
        } => Ok(Spacing {
            delta_theta_deg,
            delta_rho_m,
        }),
    }
}

/// Spacing, grid, search, and a final check of the exact error probability
/// of the chosen layout against the threshold. Symbol `i` carries
/// `channels[i]`.
pub fn design(req: &DesignRequest) -> Result<(Constellation, DesignReport)> {
    let n = req.channels.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no channels to encode".into()));
    }
    if !(req.xi > 0.0 && req.xi < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must be in (0, 1), got {}", req.xi)));
    }
    let spacing = spacing_for(&req.spacing, &req.hover, req.xi)?;
    let grid = build_grid(&req.center, n, spacing, &req.fov, req.dist_max)?;
    let selection = match req.mode {
        SearchMode::Exhaustive => exhaustive_search(&grid, n, req.budget)?,
        SearchMode::Heuristic => heuristic_search(&grid, n)?,
    };
    let mean_distance = selection.mean_distance;
    let visited = selection.visited;
    let constellation = selection.into_constellation(spacing, &req.channels)?;
    constellation.check_bounds(&req.fov, req.dist_max)?;
    let pe = constellation_error_probability(&constellation, &req.hover);
    let worst = match req.spacing {
        SpacingRule::Threshold { worst_profile } => worst_profile,
        _ => NeighborProfile::WORST,
    };
    let pe_worst_case = symbol_error_probability(worst, spacing.delta_theta_deg, spacing.delta_rho_m, &req.hover);
    if pe > req.xi {
        return Err(Error::ThresholdViolated { pe, xi: req.xi });
    }
    Ok((
        constellation,
        DesignReport {
            n,
            delta_theta_deg: spacing.delta_theta_deg,
            delta_rho_m: spacing.delta_rho_m,
            xi: req.xi,
            pe_analytic: pe,
            pe_worst_case,
            mean_distance_m: mean_distance,
            mode: req.mode,
            subsets_visited: visited,
        },
    ))
}

/// On-disk constellation document shared by the `design` and `scenario`
/// commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationFile {
    pub n: usize,
    pub delta_theta_deg: f64,
    pub delta_rho_m: f64,
    pub symbols: Vec<SymbolEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<DesignReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolEntry {
    pub index: usize,
    pub theta_deg: f64,
    pub rho_m: f64,
    pub channel_mhz: f64,
}

impl ConstellationFile {
    pub fn from_constellation(c: &Constellation, report: Option<DesignReport>) -> Self {
        ConstellationFile {
            n: c.len(),
            delta_theta_deg: c.delta_theta(),
            delta_rho_m: c.delta_rho(),
            symbols: c
                .symbols()
                .iter()
                .zip(c.channel_map())
                .enumerate()
                .map(|(index, (s, ch))| SymbolEntry {
                    index,
                    theta_deg: s.theta(),
                    rho_m: s.rho(),
                    channel_mhz: ch.mhz(),
                })
                .collect(),
            report,
            config_sha256: None,
            seed: None,
        }
    }

    pub fn to_constellation(&self) -> Result<Constellation> {
        if self.symbols.len() != self.n {
            return Err(Error::InvalidConstellation(format!(
                "n = {} but {} symbols listed",
                self.n,
                self.symbols.len()
            )));
        }
        let mut entries = self.symbols.clone();
        entries.sort_by_key(|e| e.index);
        if entries.iter().enumerate().any(|(i, e)| e.index != i) {
            return Err(Error::InvalidConstellation("symbol indices must be 0..n".into()));
        }
        let symbols = entries
            .iter()
            .map(|e| PolarPoint::new(e.theta_deg, e.rho_m))
            .collect::<Result<Vec<_>>>()?;
        let channels = entries.iter().map(|e| Channel(e.channel_mhz)).collect();
        Constellation::new(symbols, self.delta_theta_deg, self.delta_rho_m, channels)
    }
}
