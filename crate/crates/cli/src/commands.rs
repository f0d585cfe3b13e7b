use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use skyconst::designer::{
    build_grid, design, exhaustive_search, heuristic_search, ConstellationFile, DesignReport, DesignRequest, SearchMode,
    Selection, Spacing,
};
use skyconst::error_model::{constellation_error_probability, monte_carlo_pe_sharded};
use skyconst::flight::mean_travel_time;
use skyconst::localization::{compute_min_pts, localize, write_estimates_csv};
use skyconst::scenario::{run_scenario, Recovery, ScenarioConfig, ScenarioStatus};
use skyconst::sensor::{synthesize_clutter, synthesize_cloud, PointCloud};
use skyconst::{Channel, Constellation, PolarPoint};

use crate::config::{Lattice, Point, RunConfig};
use crate::output::Provenance;
use crate::CliError;

fn polar(p: &Point) -> Result<PolarPoint, CliError> {
    Ok(PolarPoint::new(p.theta_deg, p.rho_m)?)
}

fn csv_body(prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut s = prov.csv_header();
    s.push_str(&header.join(","));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

fn io_at(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn json_body<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("output serializes");
    v.push(b'\n');
    v
}

fn design_request(cfg: &RunConfig) -> Result<DesignRequest, CliError> {
    Ok(DesignRequest {
        channels: cfg.design.channels_mhz.clone(),
        hover: cfg.hover,
        xi: cfg.design.xi,
        center: polar(&cfg.design.center)?,
        mode: cfg.design.mode,
        spacing: cfg.design.spacing,
        fov: cfg.sensor.fov,
        dist_max: cfg.sensor.dist_max_m,
        budget: cfg.design.budget,
    })
}

pub fn design_cmd(cfg: &RunConfig, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let (c, report) = design(&design_request(cfg)?)?;
    Ok(json_body(&document(&c, Some(report), prov)))
}

fn document(c: &Constellation, report: Option<DesignReport>, prov: &Provenance) -> ConstellationFile {
    let mut doc = ConstellationFile::from_constellation(c, report);
    doc.config_sha256 = Some(prov.config_sha256.clone());
    doc.seed = Some(prov.seed);
    doc
}

fn block(l: &Lattice, z: f64, cfg: &RunConfig, center: &Point) -> Result<Constellation, CliError> {
    if l.cols == 0 || l.rows == 0 {
        return Err(CliError::Config(format!("lattice {}x{} has no symbols", l.cols, l.rows)));
    }
    let dt = 2.0 * z * cfg.hover.sigma_theta();
    let dr = 2.0 * z * cfg.hover.sigma_rho();
    Ok(Constellation::block(l.cols, l.rows, &polar(center)?, dt, dr)?)
}

pub fn pe_cmd(cfg: &RunConfig, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    for l in &cfg.pe.lattices {
        for &z in &cfg.pe.half_spacing_sigmas {
            let c = block(l, z, cfg, &cfg.pe.center)?;
            rows.push(vec![
                l.cols.to_string(),
                l.rows.to_string(),
                c.len().to_string(),
                z.to_string(),
                c.delta_theta().to_string(),
                c.delta_rho().to_string(),
                constellation_error_probability(&c, &cfg.hover).to_string(),
            ]);
        }
    }
    let header = ["cols", "rows", "n", "half_spacing_sigmas", "delta_theta_deg", "delta_rho_m", "pe"];
    Ok(csv_body(prov, &header, &rows))
}

pub fn montecarlo_cmd(cfg: &RunConfig, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let mc = &cfg.montecarlo;
    let mut rows = Vec::new();
    for l in &mc.lattices {
        for &z in &mc.half_spacing_sigmas {
            let c = block(l, z, cfg, &mc.center)?;
            let est = monte_carlo_pe_sharded(&c, &cfg.hover, mc.trials, prov.seed, mc.shards);
            rows.push(vec![
                l.cols.to_string(),
                l.rows.to_string(),
                c.len().to_string(),
                z.to_string(),
                constellation_error_probability(&c, &cfg.hover).to_string(),
                est.estimate.to_string(),
                est.half_width.to_string(),
                est.trials.to_string(),
                est.errors.to_string(),
            ]);
        }
    }
    let header = ["cols", "rows", "n", "half_spacing_sigmas", "pe_analytic", "pe_montecarlo", "ci95_half_width", "trials", "errors"];
    Ok(csv_body(prov, &header, &rows))
}

pub fn localize_cmd(cfg: &RunConfig, prov: &Provenance, input: &Path) -> Result<Vec<u8>, CliError> {
    let file = std::fs::File::open(input).map_err(|e| io_at(input, e))?;
    let cloud = PointCloud::read_csv(std::io::BufReader::new(file), cfg.localize.t_meas_s)?;
    let mut params = cfg.dbscan;
    if let Some(alpha) = cfg.localize.alpha {
        params.min_pts = compute_min_pts(alpha, &cfg.sensor, cloud.t_meas)?;
    }
    let found = localize(&cloud, &params, &cfg.hist)?;
    let mut body = prov.csv_header().into_bytes();
    write_estimates_csv(&found, &mut body)?;
    Ok(body)
}

pub fn synth_cmd(cfg: &RunConfig, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(prov.seed);
    let cloud = match &cfg.synth.target {
        Some(p) => synthesize_cloud(&polar(p)?, &cfg.sensor, &cfg.hover, cfg.synth.t_meas_s, &mut rng)?,
        None => synthesize_clutter(&cfg.sensor, cfg.synth.t_meas_s, &mut rng)?,
    };
    let mut body = prov.csv_header().into_bytes();
    cloud.write_csv(&mut body)?;
    Ok(body)
}

/// Designs an `n`-symbol layout on its grid without the error threshold.
fn select(
    cfg: &RunConfig,
    center: &Point,
    n: usize,
    spacing: Spacing,
    range_limit: Option<f64>,
    mode: SearchMode,
    budget: u64,
) -> Result<Selection, CliError> {
    let limit = range_limit.unwrap_or(cfg.sensor.dist_max_m);
    let grid = build_grid(&polar(center)?, n, spacing, &cfg.sensor.fov, limit)?;
    Ok(match mode {
        SearchMode::Exhaustive => exhaustive_search(&grid, n, budget)?,
        SearchMode::Heuristic => heuristic_search(&grid, n)?,
    })
}

fn flown(cfg: &RunConfig, sel: Selection, spacing: Spacing) -> Result<f64, CliError> {
    let channels: Vec<Channel> = (0..sel.symbols.len()).map(|k| Channel(k as f64)).collect();
    let c = sel.into_constellation(spacing, &channels)?;
    Ok(mean_travel_time(&c, &cfg.pid, &cfg.flight)?)
}

pub fn traveltime_cmd(cfg: &RunConfig, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let tt = &cfg.traveltime;
    let mut rows = Vec::new();
    for &n in &tt.n_values {
        for &dt in &tt.delta_theta_deg {
            for &dr in &tt.delta_rho_m {
                let spacing = Spacing {
                    delta_theta_deg: dt,
                    delta_rho_m: dr,
                };
                let sel = select(cfg, &tt.center, n, spacing, tt.range_limit_m, tt.mode, tt.budget)?;
                let mean_distance = sel.mean_distance;
                let visited = sel.visited;
                let t = flown(cfg, sel, spacing)?;
                rows.push(vec![
                    n.to_string(),
                    (n as f64).log2().to_string(),
                    dt.to_string(),
                    dr.to_string(),
                    mode_name(tt.mode).to_string(),
                    mean_distance.to_string(),
                    t.to_string(),
                    visited.to_string(),
                ]);
            }
        }
    }
    let header = ["n", "log2_n", "delta_theta_deg", "delta_rho_m", "mode", "mean_distance_m", "travel_time_s", "subsets_visited"];
    Ok(csv_body(prov, &header, &rows))
}

fn mode_name(m: SearchMode) -> &'static str {
    match m {
        SearchMode::Exhaustive => "exhaustive",
        SearchMode::Heuristic => "heuristic",
    }
}

pub fn compare_cmd(cfg: &RunConfig, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let cs = &cfg.compare_search;
    let mut rows = Vec::new();
    for g in &cs.grids {
        let spacing = Spacing {
            delta_theta_deg: g.delta_theta_deg,
            delta_rho_m: g.delta_rho_m,
        };
        let ex = select(cfg, &cs.center, g.n, spacing, cs.range_limit_m, SearchMode::Exhaustive, cs.budget)?;
        let he = select(cfg, &cs.center, g.n, spacing, cs.range_limit_m, SearchMode::Heuristic, cs.budget)?;
        let ratio = if ex.mean_distance > 0.0 { he.mean_distance / ex.mean_distance } else { 1.0 };
        let mut row = vec![
            g.n.to_string(),
            g.delta_theta_deg.to_string(),
            g.delta_rho_m.to_string(),
            ex.mean_distance.to_string(),
            he.mean_distance.to_string(),
            ratio.to_string(),
        ];
        if cs.travel_time {
            row.push(flown(cfg, ex, spacing)?.to_string());
            row.push(flown(cfg, he, spacing)?.to_string());
        }
        rows.push(row);
    }
    let mut header = vec!["n", "delta_theta_deg", "delta_rho_m", "exhaustive_mean_m", "heuristic_mean_m", "ratio"];
    if cs.travel_time {
        header.extend(["exhaustive_travel_s", "heuristic_travel_s"]);
    }
    Ok(csv_body(prov, &header, &rows))
}

#[derive(Serialize)]
struct ScenarioReport<'a> {
    status: ScenarioStatus,
    min_pts: usize,
    recoveries: Vec<RecoveryRow<'a>>,
    config_sha256: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct RecoveryRow<'a> {
    #[serde(flatten)]
    recovery: &'a Recovery,
    detection_s: f64,
    outage_s: f64,
}

pub struct ScenarioOutput {
    pub timeline: Vec<u8>,
    pub report: Vec<u8>,
    pub status: ScenarioStatus,
    pub summary: String,
}

pub fn scenario_cmd(cfg: &RunConfig, prov: &Provenance, constellation: Option<&Path>) -> Result<ScenarioOutput, CliError> {
    let sc = &cfg.scenario;
    let path = constellation.map(Path::to_path_buf).or(sc.constellation_file.as_ref().map(Into::into));
    let c = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| io_at(&p, e))?;
            let doc: ConstellationFile =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            doc.to_constellation()?
        }
        None => design(&design_request(cfg)?)?.0,
    };
    let run = ScenarioConfig {
        channels: sc.channels_mhz.clone(),
        initial_channel: sc.initial_channel_mhz,
        constellation: c,
        sensor: cfg.sensor.clone(),
        hover: cfg.hover,
        dbscan: cfg.dbscan,
        hist: cfg.hist,
        pid: cfg.pid,
        flight: cfg.flight,
        jammer: sc.jammer.clone(),
        link: sc.link.clone(),
        seed: prov.seed,
    };
    let tl = run_scenario(&run)?;
    let mut timeline = prov.csv_header().into_bytes();
    tl.write_csv(&mut timeline)?;
    let report = ScenarioReport {
        status: tl.status,
        min_pts: tl.min_pts,
        recoveries: tl
            .recoveries
            .iter()
            .map(|r| RecoveryRow {
                recovery: r,
                detection_s: r.detection_s(),
                outage_s: r.outage_s(),
            })
            .collect(),
        config_sha256: &prov.config_sha256,
        seed: prov.seed,
    };
    let mut summary = format!("status: {:?}\n", tl.status);
    for r in &tl.recoveries {
        let _ = writeln!(
            summary,
            "{} -> {}: symbol {} decoded as {}, outage {:.2} s (detect {:.2} + fly {:.2} + sense {:.2} + switch {:.2})",
            r.from,
            r.to,
            r.intended_symbol,
            r.decoded_symbol,
            r.outage_s(),
            r.detection_s(),
            r.flight_s,
            r.sensing_s,
            r.switch_s
        );
    }
    Ok(ScenarioOutput {
        timeline,
        report: json_body(&report),
        status: tl.status,
        summary,
    })
}
