//! Acceptance run: one line per criterion, non-zero exit if any fails.
//! Runs as a plain binary (`harness = false`) so the lines always print.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skyconst::designer::{build_grid, deltas_from_quotient_db, design, exhaustive_search, DesignRequest, SearchMode, Spacing, SpacingRule};
use skyconst::error_model::{constellation_error_probability, monte_carlo_pe, q_function, HoverModel};
use skyconst::flight::{fly_to, mean_travel_time, FlightConfig, PidParams};
use skyconst::localization::{compute_min_pts, dbscan, localize, DbscanParams, HistogramConfig};
use skyconst::sensor::{synthesize_clutter, synthesize_frame, CloudPoint, PointCloud, SensorModel};
use skyconst::{Channel, Constellation, Fov, PolarPoint};

type Outcome = Result<String, String>;

fn p(t: f64, r: f64) -> PolarPoint {
    PolarPoint::new(t, r).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_skyconst")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_cli(args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

/// Data rows of a CSV produced by the CLI, keyed by header name.
fn csv_rows(bytes: &[u8]) -> Vec<HashMap<String, String>> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

fn hover() -> HoverModel {
    HoverModel::new(0.9, 0.05).unwrap()
}

fn bpsk() -> Outcome {
    let h = hover();
    let mut worst = 0.0f64;
    for z in [0.25, 0.5, 1.0, 2.0, 3.0, 5.0] {
        let along_rho = Constellation::block(1, 2, &p(0.0, 5.0), 1.0, 2.0 * z * h.sigma_rho()).unwrap();
        let along_theta = Constellation::block(2, 1, &p(0.0, 5.0), 2.0 * z * h.sigma_theta(), 1.0).unwrap();
        for c in [along_rho, along_theta] {
            worst = worst.max((constellation_error_probability(&c, &h) - q_function(z)).abs());
        }
    }
    let c = Constellation::block(1, 2, &p(0.0, 5.0), 1.0, 2.0 * h.sigma_rho()).unwrap();
    let mc = monte_carlo_pe(&c, &h, 1_000_000, 20_240_601);
    let target = 0.158655;
    let inside = (mc.estimate - target).abs() <= mc.half_width;
    check(
        worst <= 1e-12 && inside,
        format!(
            "max |analytic - Q| = {worst:.1e}; MC {:.6} +/- {:.6} vs {target}",
            mc.estimate, mc.half_width
        ),
    )
}

fn table_vs_oracle() -> Outcome {
    let h = hover();
    let mut worst_ratio = 0.0f64;
    let mut cells = 0;
    for (cols, rows) in [(2, 2), (3, 3), (4, 2)] {
        for zt in [0.5, 1.0, 2.0] {
            for zr in [0.5, 1.0, 2.0] {
                let c = Constellation::block(cols, rows, &p(0.0, 5.0), 2.0 * zt * h.sigma_theta(), 2.0 * zr * h.sigma_rho()).unwrap();
                let analytic = constellation_error_probability(&c, &h);
                let mc = monte_carlo_pe(&c, &h, 1_000_000, 7 + cells as u64);
                worst_ratio = worst_ratio.max((analytic - mc.estimate).abs() / mc.half_width);
                cells += 1;
            }
        }
    }
    check(worst_ratio <= 3.0, format!("{cells} cells, worst |analytic - MC| = {worst_ratio:.2} CI half-widths"))
}

fn two_channel_design() -> Outcome {
    let h = hover();
    let s = deltas_from_quotient_db(&h, 13.0).unwrap();
    let rho_ok = (s.delta_rho_m - 1.0).abs() <= 0.05;
    let theta_ok = (s.delta_theta_deg - 18.0).abs() <= 0.05 * 18.0;
    let req = DesignRequest {
        channels: vec![Channel(900.0), Channel(905.0)],
        hover: h,
        xi: 1e-3,
        center: p(0.0, 5.0),
        mode: SearchMode::Exhaustive,
        spacing: SpacingRule::QuotientDb { quotient_db: 13.0 },
        fov: Fov::default(),
        dist_max: 10.0,
        budget: 100_000_000,
    };
    let (c, _) = design(&req).map_err(|e| e.to_string())?;
    let sy = c.symbols();
    let shape = sy.len() == 2
        && sy.iter().all(|s| s.theta().abs() < 1e-9)
        && (sy[0].rho() - 5.0).abs() < 1e-12
        && (sy[1].rho() - 6.0).abs() <= 0.05 * 6.0;
    check(
        rho_ok && theta_ok && shape,
        format!(
            "spacing ({:.3} deg, {:.4} m); symbols ({}, {}), ({}, {:.4})",
            s.delta_theta_deg,
            s.delta_rho_m,
            sy[0].theta(),
            sy[0].rho(),
            sy[1].theta(),
            sy[1].rho()
        ),
    )
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    values.map(|v| (v * 1e6).round() as i64).collect::<BTreeSet<_>>().len()
}

fn n8_shape() -> Outcome {
    let spacing = Spacing {
        delta_theta_deg: 5.0,
        delta_rho_m: 0.8,
    };
    // the 8 x 8 grid reaches 10.6 m; the shape question is pure geometry
    let grid = build_grid(&p(0.0, 5.0), 8, spacing, &Fov::default(), 20.0).map_err(|e| e.to_string())?;
    let sel = exhaustive_search(&grid, 8, 100_000_000).map_err(|e| e.to_string())?;
    let n_rho = distinct(sel.symbols.iter().map(|s| s.rho()));
    let n_theta = distinct(sel.symbols.iter().map(|s| s.theta()));
    check(
        n_rho == 4 && n_theta == 2,
        format!(
            "optimum uses {n_rho} rho x {n_theta} theta values (mean distance {:.4} m, {} subsets visited); expected 4 rho x 2 theta",
            sel.mean_distance, sel.visited
        ),
    )
}

fn heuristic_sanity() -> Outcome {
    let (code, out) = run_cli(&["compare-search", "--set", "seed=1"])?;
    if code != 0 {
        return Err(format!("compare-search exited {code}"));
    }
    let rows = csv_rows(&out);
    let mut ok = rows.len() == 3;
    let mut parts = Vec::new();
    for r in &rows {
        let ex: f64 = r["exhaustive_mean_m"].parse().unwrap();
        let he: f64 = r["heuristic_mean_m"].parse().unwrap();
        let ratio: f64 = r["ratio"].parse().unwrap();
        ok &= he >= ex * (1.0 - 1e-12) && (ratio - he / ex).abs() < 1e-12;
        parts.push(format!("N={} ratio {:.4}", r["n"], ratio));
    }
    check(ok, format!("{} (N=2 gap is the documented heuristic deviation)", parts.join(", ")))
}

fn travel_time_monotone() -> Outcome {
    let pid = PidParams::default();
    let cfg = FlightConfig::default();
    let t = |n: usize, dt: f64, dr: f64| -> Result<f64, String> {
        let spacing = Spacing {
            delta_theta_deg: dt,
            delta_rho_m: dr,
        };
        let grid = build_grid(&p(0.0, 5.0), n, spacing, &Fov::default(), 40.0).map_err(|e| e.to_string())?;
        let sel = exhaustive_search(&grid, n, 100_000_000).map_err(|e| e.to_string())?;
        let chans: Vec<Channel> = (0..n).map(|k| Channel(k as f64)).collect();
        let c = sel.into_constellation(spacing, &chans).map_err(|e| e.to_string())?;
        mean_travel_time(&c, &pid, &cfg).map_err(|e| e.to_string())
    };
    let mut drops = Vec::new();
    let mut scan = |label: String, xs: &[f64], ts: &[f64]| {
        for i in 1..ts.len() {
            if ts[i] < ts[i - 1] - 1e-9 {
                drops.push(format!("{label} {} -> {}: T {:.3} -> {:.3} s", xs[i - 1], xs[i], ts[i - 1], ts[i]));
            }
        }
    };
    let thetas = [2.0, 5.0, 10.0, 15.0, 20.0];
    let rhos = [0.2, 0.4, 0.8, 1.2, 1.6];
    for n in [2, 4, 8] {
        let by_theta = thetas.iter().map(|&dt| t(n, dt, 0.8)).collect::<Result<Vec<_>, _>>()?;
        let by_rho = rhos.iter().map(|&dr| t(n, 5.0, dr)).collect::<Result<Vec<_>, _>>()?;
        scan(format!("N={n} dtheta"), &thetas, &by_theta);
        scan(format!("N={n} drho"), &rhos, &by_rho);
    }
    let by_n = [2, 4, 8].iter().map(|&n| t(n, 5.0, 0.8)).collect::<Result<Vec<_>, _>>()?;
    scan("log2 N".into(), &[1.0, 2.0, 3.0], &by_n);
    let ok = drops.is_empty();
    let mut notes = vec![format!("T(log2 N = 1,2,3) = {:.3}, {:.3}, {:.3}", by_n[0], by_n[1], by_n[2])];
    if ok {
        notes.push("no decrease over the dtheta and drho sweeps".into());
    } else {
        notes.push(format!("decreases where the distance-optimal layout changes shape: {}", drops.join(", ")));
    }
    check(ok, notes.join("; "))
}

fn reference_dbscan(pts: &[(f64, f64)], eps: f64, min_pts: usize, dist_max: f64) -> Vec<Option<usize>> {
    let n = pts.len();
    let ok = |i: usize| pts[i].1 <= dist_max;
    let d = |i: usize, j: usize| {
        let ((t1, r1), (t2, r2)) = (pts[i], pts[j]);
        (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * (t1 - t2).to_radians().cos()).max(0.0).sqrt()
    };
    let hood = |i: usize| (0..n).filter(|&j| ok(j) && d(i, j) <= eps).collect::<Vec<_>>();
    let mut label = vec![None; n];
    let mut seen = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if seen[i] || !ok(i) {
            continue;
        }
        seen[i] = true;
        let h = hood(i);
        if h.len() < min_pts {
            continue;
        }
        label[i] = Some(next);
        let mut stack = h;
        while let Some(j) = stack.pop() {
            label[j].get_or_insert(next);
            if !seen[j] {
                seen[j] = true;
                let hj = hood(j);
                if hj.len() >= min_pts {
                    stack.extend(hj);
                }
            }
        }
        next += 1;
    }
    label
}

fn same_partition(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    let (mut f, mut g) = (HashMap::new(), HashMap::new());
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) => *f.entry(*x).or_insert(*y) == *y && *g.entry(*y).or_insert(*x) == *x,
        _ => false,
    })
}

fn hi_dbscan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut matched = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=500);
        let blobs: Vec<(f64, f64)> = (0..rng.random_range(1..5))
            .map(|_| (rng.random_range(-60.0..60.0), rng.random_range(1.0..10.0)))
            .collect();
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                if rng.random_bool(0.7) {
                    let (t, r) = blobs[rng.random_range(0..blobs.len())];
                    (t + rng.random_range(-3.0..3.0), r + rng.random_range(-0.3..0.3))
                } else {
                    (rng.random_range(-90.0..90.0), rng.random_range(0.0..11.0))
                }
            })
            .collect();
        let params = DbscanParams {
            epsilon_m: rng.random_range(0.1..0.6),
            min_pts: rng.random_range(2..10),
            dist_max_m: 10.0,
        };
        let cloud = PointCloud {
            points: pts.iter().map(|&(theta, rho)| CloudPoint { t: 0.0, theta, rho, power: 1.0 }).collect(),
            t_meas: 1.0,
        };
        let got = dbscan(&cloud, &params).map_err(|e| e.to_string())?;
        matched += same_partition(&got.labels, &reference_dbscan(&pts, params.epsilon_m, params.min_pts, 10.0)) as usize;
    }

    let model = SensorModel::default();
    let hist = HistogramConfig::default();
    let params = DbscanParams {
        min_pts: compute_min_pts(0.5, &model, 1.0).map_err(|e| e.to_string())?,
        ..DbscanParams::default()
    };
    let mut hits = 0;
    for seed in 0..100 {
        let mut r = ChaCha8Rng::seed_from_u64(5000 + seed);
        let frame = synthesize_frame(&p(0.0, 6.0), &model, &hover(), 1.0, &mut r).map_err(|e| e.to_string())?;
        let found = localize(&frame.cloud, &params, &hist).map_err(|e| e.to_string())?;
        if let [only] = found.as_slice() {
            let dt = (only.estimate.theta() - frame.center.0).abs();
            let dr = (only.estimate.rho() - frame.center.1).abs();
            hits += (dt <= hist.bin_width_theta_deg && dr <= hist.bin_width_rho_m) as usize;
        }
    }
    let mut quiet = 0;
    for seed in 0..100 {
        let mut r = ChaCha8Rng::seed_from_u64(9000 + seed);
        let cloud = synthesize_clutter(&model, 1.0, &mut r).map_err(|e| e.to_string())?;
        quiet += localize(&cloud, &params, &hist).map_err(|e| e.to_string())?.is_empty() as usize;
    }
    check(
        matched == 50 && hits >= 95 && quiet >= 99,
        format!("reference match {matched}/50, single estimate within a bin {hits}/100, clutter-only silent {quiet}/100 (min_pts {})", params.min_pts),
    )
}

fn scenario_runs() -> Outcome {
    let cfg = configs().join("jamming_recovery.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = dir.path().join("report.json");
    let (mut decoded_ok, mut phases_ok, mut outage_ok) = (0, 0, 0);
    let mut moves_ok = true;
    for seed in 0..100 {
        let seed_arg = format!("seed={seed}");
        let (code, out) = run_cli(&[
            "scenario",
            "-c",
            cfg.to_str().unwrap(),
            "--set",
            &seed_arg,
            "--report",
            report.to_str().unwrap(),
        ])?;
        let rep: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let rec = &rep["recoveries"][0];
        if code == 0 && rec["intended_symbol"] == rec["decoded_symbol"] {
            decoded_ok += 1;
        }
        // symbol 0 is the near point: the move goes from 6 m to 5 m
        moves_ok &= rec["intended_symbol"] == 0 && rec["from"] == 900.0 && rec["to"] == 905.0;

        let rows: Vec<(f64, f64, f64)> = csv_rows(&out)
            .into_iter()
            .filter(|r| r["event"].is_empty())
            .map(|r| (r["t_s"].parse().unwrap(), r["goodput"].parse().unwrap(), r["channel_mhz"].parse().unwrap()))
            .collect();
        let f = |k: &str| rec[k].as_f64().unwrap_or(f64::NAN);
        let (onset, switched) = (f("jam_onset"), f("switched_at"));
        let w = 1.0;
        let before = rows.iter().filter(|r| r.0 + w <= onset).all(|r| r.1 >= 0.9 && r.2 == 900.0);
        let during = rows.iter().filter(|r| r.0 >= onset && r.0 + w <= switched).all(|r| r.1 <= 0.05);
        let after = rows.iter().filter(|r| r.0 >= switched).all(|r| r.1 >= 0.9 && r.2 == 905.0);
        phases_ok += (before && during && after) as usize;

        let parts = f("detection_s") + f("flight_s") + f("sensing_s") + f("switch_s");
        let low_time = rows.iter().filter(|r| r.1 < 0.5).count() as f64 * w;
        outage_ok += ((parts - f("outage_s")).abs() < 1e-9 && (low_time - parts).abs() <= w) as usize;
    }
    check(
        decoded_ok >= 99 && phases_ok == 100 && outage_ok == 100 && moves_ok,
        format!("decoded {decoded_ok}/100, three-phase goodput {phases_ok}/100, outage within a window {outage_ok}/100, 6 m -> 5 m on 905 MHz: {moves_ok}"),
    )
}

fn hygiene() -> Outcome {
    let mut q_err = (q_function(0.0) - 0.5).abs();
    for k in 0..=400 {
        let x = k as f64 * 0.02;
        q_err = q_err.max((q_function(x) + q_function(-x) - 1.0).abs());
    }
    let pid = PidParams::default();
    let coarse = FlightConfig::default();
    let fine = FlightConfig {
        dt_s: coarse.dt_s / 2.0,
        ..coarse
    };
    let mut dt_err = 0.0f64;
    for (a, b) in [((0.0, 5.0), (0.0, 6.0)), ((-9.0, 5.0), (9.0, 6.0)), ((0.0, 2.0), (30.0, 9.0)), ((-2.5, 5.0), (2.5, 5.8))] {
        let t1 = fly_to(&p(a.0, a.1), &p(b.0, b.1), &pid, &coarse).map_err(|e| e.to_string())?.travel_time;
        let t2 = fly_to(&p(a.0, a.1), &p(b.0, b.1), &pid, &fine).map_err(|e| e.to_string())?.travel_time;
        dt_err = dt_err.max((t1 - t2).abs() / t2);
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cloud = dir.path().join("cloud.csv");
    let (code, bytes) = run_cli(&["synth", "--set", "seed=5"])?;
    if code != 0 {
        return Err("synth failed".into());
    }
    std::fs::write(&cloud, &bytes).map_err(|e| e.to_string())?;
    let scenario_cfg = configs().join("jamming_recovery.json");
    let commands: Vec<Vec<&str>> = vec![
        vec!["design", "--set", "seed=5"],
        vec!["pe", "--set", "seed=5"],
        vec!["montecarlo", "--set", "seed=5", "--set", "montecarlo.trials=200000", "--set", "montecarlo.shards=3"],
        vec!["synth", "--set", "seed=5"],
        vec!["localize", "-i", cloud.to_str().unwrap(), "--set", "seed=5"],
        vec!["traveltime", "--set", "seed=5"],
        vec!["compare-search", "--set", "seed=5"],
        vec!["scenario", "-c", scenario_cfg.to_str().unwrap(), "--set", "seed=5"],
    ];
    let mut identical = 0;
    for args in &commands {
        let a = run_cli(args)?;
        let b = run_cli(args)?;
        identical += (a.0 == 0 && a == b && !a.1.is_empty()) as usize;
    }
    check(
        q_err <= 1e-12 && dt_err < 0.02 && identical == commands.len(),
        format!(
            "Q identities err {q_err:.1e}; dt-halving change {:.2}%; byte-identical reruns {identical}/{}",
            dt_err * 100.0,
            commands.len()
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags; a filter argument that names no
    // criterion number still runs everything
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("BPSK equivalence", bpsk, Duration::from_secs(10)),
        ("error table vs Monte Carlo", table_vs_oracle, Duration::from_secs(120)),
        ("two-channel design reproduction", two_channel_design, Duration::from_secs(1)),
        ("N=8 optimal shape", n8_shape, Duration::from_secs(300)),
        ("heuristic sanity", heuristic_sanity, Duration::from_secs(300)),
        ("travel-time monotonicity", travel_time_monotone, Duration::from_secs(60)),
        ("Hi-DBSCAN correctness", hi_dbscan, Duration::from_secs(60)),
        ("end-to-end scenario", scenario_runs, Duration::from_secs(120)),
        ("numerical hygiene", hygiene, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let (verdict, detail) = match (&result, took <= *budget) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {verdict} {name} ({:.2} s): {detail}", i + 1, took.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
