//! Two-stage UAV localization from a radar point cloud.
//!
//! DBSCAN first separates dense groups of returns from scattered clutter,
//! with `min_pts` derived from the expected detection density at the edge of
//! the sensing range. Each surviving cluster is then reduced to one position
//! by taking the peak of power-weighted histograms of azimuth and range.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Fov, PolarPoint};
use crate::sensor::{expected_point_count, CloudPoint, PointCloud, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbscanParams {
    /// Neighborhood radius, roughly the airframe size.
    pub epsilon_m: f64,
    pub min_pts: usize,
    pub dist_max_m: f64,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            epsilon_m: 0.5,
            min_pts: 7,
            dist_max_m: 10.0,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_m > 0.0 && self.epsilon_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon_m)));
        }
        if self.min_pts < 1 {
            return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
        }
        if !(self.dist_max_m > 0.0) {
            return Err(Error::InvalidParameter(format!("dist_max must be positive, got {}", self.dist_max_m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramConfig {
    pub bin_width_theta_deg: f64,
    pub bin_width_rho_m: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            bin_width_theta_deg: 1.0,
            bin_width_rho_m: 0.05,
        }
    }
}

impl HistogramConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_theta_deg > 0.0 && self.bin_width_rho_m > 0.0) {
            return Err(Error::InvalidParameter("histogram bin widths must be positive".into()));
        }
        Ok(())
    }
}

/// `⌈alpha · F(t_meas, dist_max)⌉`: the sparsest expected target cloud sets
/// the density a cluster must reach.
pub fn compute_min_pts(alpha: f64, model: &SensorModel, t_meas: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1], got {alpha}")));
    }
    let expected = expected_point_count(model, t_meas, model.dist_max_m)?;
    Ok(min_pts_for(alpha, expected))
}

pub(crate) fn min_pts_for(alpha: f64, expected: f64) -> usize {
    // guard against 0.5 · 100.000000001 rounding up to 51
    let scaled = alpha * expected;
    let rounded = scaled.round();
    let v = if (scaled - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        scaled.ceil()
    };
    (v as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into the cloud, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    /// Indices of points not assigned to any cluster, ascending.
    pub noise: Vec<usize>,
    /// Cluster id per point, `None` for noise.
    pub labels: Vec<Option<usize>>,
}

fn xy(p: &CloudPoint) -> (f64, f64) {
    let (s, c) = p.theta.to_radians().sin_cos();
    (p.rho * s, p.rho * c)
}

/// Uniform grid over the plane with cell size epsilon.
struct CellIndex {
    eps: f64,
    xy: Vec<(f64, f64)>,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl CellIndex {
    fn new(xy: Vec<(f64, f64)>, eligible: &[bool], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &(x, y)) in xy.iter().enumerate() {
            if eligible[i] {
                cells.entry(Self::cell(x, y, eps)).or_default().push(i);
            }
        }
        CellIndex { eps, xy, cells }
    }

    fn cell(x: f64, y: f64, eps: f64) -> (i64, i64) {
        ((x / eps).floor() as i64, (y / eps).floor() as i64)
    }

    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let (x, y) = self.xy[i];
        let (cx, cy) = Self::cell(x, y, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &j in bucket {
                        let (u, v) = self.xy[j];
                        if (u - x) * (u - x) + (v - y) * (v - y) <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
    }
}

/// Density-based clustering.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `epsilon` of it. Clusters grow from core points in input order;
/// a border point reachable from several clusters stays with the first one
/// that reached it. Points beyond `dist_max` are noise and never neighbors.
pub fn dbscan(cloud: &PointCloud, params: &DbscanParams) -> Result<Clustering> {
    params.validate()?;
    let n = cloud.len();
    let eligible: Vec<bool> = cloud.points.iter().map(|p| p.rho <= params.dist_max_m).collect();
    let index = CellIndex::new(cloud.points.iter().map(xy).collect(), &eligible, params.epsilon_m);

    #[derive(Clone, Copy, PartialEq)]
    enum Label {
        Unseen,
        Noise,
        Member(usize),
    }
    let mut labels = vec![Label::Unseen; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut hood = Vec::new();
    let mut queue = VecDeque::new();

    for i in 0..n {
        if labels[i] != Label::Unseen {
            continue;
        }
        if !eligible[i] {
            labels[i] = Label::Noise;
            continue;
        }
        index.neighbors(i, &mut hood);
        if hood.len() < params.min_pts {
            labels[i] = Label::Noise;
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        labels[i] = Label::Member(id);
        queue.extend(hood.iter().copied());
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Label::Member(_) => continue,
                Label::Noise => {
                    // border point, already known not to be core
                    labels[j] = Label::Member(id);
                    members.push(j);
                    continue;
                }
                Label::Unseen => {}
            }
            labels[j] = Label::Member(id);
            members.push(j);
            index.neighbors(j, &mut hood);
            if hood.len() >= params.min_pts {
                queue.extend(hood.iter().copied().filter(|&k| !matches!(labels[k], Label::Member(_))));
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }

    let labels: Vec<Option<usize>> = labels
        .into_iter()
        .map(|l| match l {
            Label::Member(id) => Some(id),
            _ => None,
        })
        .collect();
    let noise = (0..n).filter(|&i| labels[i].is_none()).collect();
    Ok(Clustering {
        clusters: clusters.into_iter().map(|members| Cluster { members }).collect(),
        noise,
        labels,
    })
}

/// Power-weighted histogram peak along one axis.
///
/// Bins are centered on integer multiples of `width`. Each bin's mass is the
/// sum of member powers normalized by the total, so scaling every power by
/// a constant does not move the peak. Equal-mass bins are resolved towards
/// the power-weighted mean.
fn histogram_peak(values: impl Iterator<Item = (f64, f64)>, width: f64) -> f64 {
    let mut bins: HashMap<i64, f64> = HashMap::new();
    let mut total = 0.0;
    let mut weighted_sum = 0.0;
    for (v, w) in values {
        *bins.entry((v / width).round() as i64).or_insert(0.0) += w;
        total += w;
        weighted_sum += v * w;
    }
    let mean = weighted_sum / total;
    let mut best: Option<(i64, f64)> = None;
    let mut keys: Vec<i64> = bins.keys().copied().collect();
    keys.sort_unstable();
    for k in keys {
        let h = bins[&k] / total;
        best = match best {
            None => Some((k, h)),
            Some((bk, bh)) => {
                let tol = 1e-12 * bh.max(h);
                if h > bh + tol {
                    Some((k, h))
                } else if (h - bh).abs() <= tol
                    && ((k as f64 * width - mean).abs() < (bk as f64 * width - mean).abs())
                {
                    Some((k, h))
                } else {
                    Some((bk, bh))
                }
            }
        };
    }
    best.expect("non-empty cluster").0 as f64 * width
}

pub fn estimate_position(cloud: &PointCloud, cluster: &Cluster, cfg: &HistogramConfig) -> Result<PolarPoint> {
    cfg.validate()?;
    if cluster.members.is_empty() {
        return Err(Error::InvalidParameter("cannot estimate an empty cluster".into()));
    }
    let pts = || cluster.members.iter().map(|&i| &cloud.points[i]);
    let theta = histogram_peak(pts().map(|p| (p.theta, p.power)), cfg.bin_width_theta_deg);
    let rho = histogram_peak(pts().map(|p| (p.rho, p.power)), cfg.bin_width_rho_m);
    let fov = Fov::default();
    PolarPoint::within(theta.clamp(fov.min_deg, fov.max_deg), rho.max(0.0), &fov)
}

/// One localized object.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub estimate: PolarPoint,
    /// Total received power of the cluster.
    pub mass: f64,
    pub cluster: Cluster,
}

/// Clusters the cloud and estimates one position per cluster, strongest
/// cluster first.
pub fn localize(cloud: &PointCloud, params: &DbscanParams, cfg: &HistogramConfig) -> Result<Vec<Detection>> {
    let clustering = dbscan(cloud, params)?;
    let mut found = clustering
        .clusters
        .into_iter()
        .map(|cluster| {
            let estimate = estimate_position(cloud, &cluster, cfg)?;
            let mass = cluster.members.iter().map(|&i| cloud.points[i].power).sum();
            Ok(Detection { estimate, mass, cluster })
        })
        .collect::<Result<Vec<_>>>()?;
    // stable: equal masses keep cluster order
    found.sort_by(|a, b| b.mass.total_cmp(&a.mass));
    Ok(found)
}

pub const ESTIMATE_HEADER: [&str; 4] = ["object_id", "theta_deg", "rho_m", "mass"];

pub fn write_estimates_csv<W: Write>(detections: &[Detection], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ESTIMATE_HEADER)?;
    for (id, d) in detections.iter().enumerate() {
        w.write_record([
            id.to_string(),
            d.estimate.theta().to_string(),
            d.estimate.rho().to_string(),
            d.mass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
