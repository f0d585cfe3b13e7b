//! Run configuration: one JSON document with a section per command.
//! Every field has a default, so an empty `{}` reproduces the reference
//! two-channel setup.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use skyconst::designer::{SearchMode, SpacingRule, DEFAULT_SEARCH_BUDGET};
use skyconst::error_model::HoverModel;
use skyconst::flight::{FlightConfig, PidParams};
use skyconst::localization::{DbscanParams, HistogramConfig};
use skyconst::scenario::{JamInterval, LinkParams};
use skyconst::sensor::SensorModel;
use skyconst::Channel;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed for every randomized command. Drawn at random and
    /// recorded in the output when absent.
    pub seed: Option<u64>,
    pub hover: HoverModel,
    pub sensor: SensorModel,
    pub dbscan: DbscanParams,
    pub hist: HistogramConfig,
    pub pid: PidParams,
    pub flight: FlightConfig,
    pub design: DesignSection,
    pub pe: PeSection,
    pub montecarlo: MonteCarloSection,
    pub localize: LocalizeSection,
    pub synth: SynthSection,
    pub traveltime: TravelTimeSection,
    pub compare_search: CompareSection,
    pub scenario: ScenarioSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            hover: HoverModel::default(),
            sensor: SensorModel::default(),
            dbscan: DbscanParams::default(),
            hist: HistogramConfig::default(),
            pid: PidParams::default(),
            flight: FlightConfig::default(),
            design: DesignSection::default(),
            pe: PeSection::default(),
            montecarlo: MonteCarloSection::default(),
            localize: LocalizeSection::default(),
            synth: SynthSection::default(),
            traveltime: TravelTimeSection::default(),
            compare_search: CompareSection::default(),
            scenario: ScenarioSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub theta_deg: f64,
    pub rho_m: f64,
}

impl Default for Point {
    fn default() -> Self {
        Point {
            theta_deg: 0.0,
            rho_m: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    /// Symbol `i` carries `channels_mhz[i]`.
    pub channels_mhz: Vec<Channel>,
    pub xi: f64,
    pub center: Point,
    pub mode: SearchMode,
    pub spacing: SpacingRule,
    pub budget: u64,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            channels_mhz: vec![Channel(900.0), Channel(905.0)],
            xi: 1e-3,
            center: Point::default(),
            mode: SearchMode::Exhaustive,
            spacing: SpacingRule::QuotientDb { quotient_db: 13.0 },
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    /// Symbols along θ.
    pub cols: usize,
    /// Symbols along ρ.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeSection {
    pub lattices: Vec<Lattice>,
    /// Half-spacings in hover sigmas, applied to both axes.
    pub half_spacing_sigmas: Vec<f64>,
    pub center: Point,
}

impl Default for PeSection {
    fn default() -> Self {
        PeSection {
            lattices: vec![
                Lattice { cols: 1, rows: 2 },
                Lattice { cols: 2, rows: 2 },
                Lattice { cols: 3, rows: 3 },
                Lattice { cols: 4, rows: 2 },
            ],
            half_spacing_sigmas: vec![0.5, 1.0, 2.0],
            center: Point::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub lattices: Vec<Lattice>,
    pub half_spacing_sigmas: Vec<f64>,
    pub center: Point,
    pub trials: u64,
    pub shards: usize,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        MonteCarloSection {
            lattices: vec![Lattice { cols: 1, rows: 2 }],
            half_spacing_sigmas: vec![1.0],
            center: Point::default(),
            trials: 1_000_000,
            shards: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeSection {
    /// Derive `min_pts` from the sensor model; `None` uses `dbscan.min_pts`.
    pub alpha: Option<f64>,
    /// Collection window of the input cloud; the latest timestamp when absent.
    pub t_meas_s: Option<f64>,
}

impl Default for LocalizeSection {
    fn default() -> Self {
        LocalizeSection {
            alpha: Some(0.5),
            t_meas_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// UAV position; `None` gives a clutter-only cloud.
    pub target: Option<Point>,
    pub t_meas_s: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            target: Some(Point {
                theta_deg: 0.0,
                rho_m: 6.0,
            }),
            t_meas_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TravelTimeSection {
    pub n_values: Vec<usize>,
    pub delta_theta_deg: Vec<f64>,
    pub delta_rho_m: Vec<f64>,
    pub center: Point,
    pub mode: SearchMode,
    /// Range bound for the candidate grid; the sensor range when absent.
    pub range_limit_m: Option<f64>,
    pub budget: u64,
}

impl Default for TravelTimeSection {
    fn default() -> Self {
        TravelTimeSection {
            n_values: vec![2, 4, 8],
            delta_theta_deg: vec![2.5, 5.0, 10.0],
            delta_rho_m: vec![0.4, 0.8, 1.2],
            center: Point::default(),
            mode: SearchMode::Exhaustive,
            range_limit_m: Some(20.0),
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub delta_theta_deg: f64,
    pub delta_rho_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub grids: Vec<GridSpec>,
    pub center: Point,
    pub range_limit_m: Option<f64>,
    pub budget: u64,
    /// Also fly both constellations and report their mean travel times.
    pub travel_time: bool,
}

impl Default for CompareSection {
    fn default() -> Self {
        let g = |n, t, r| GridSpec {
            n,
            delta_theta_deg: t,
            delta_rho_m: r,
        };
        CompareSection {
            grids: vec![g(2, 18.0, 1.0), g(4, 18.0, 1.0), g(8, 5.0, 0.8)],
            center: Point::default(),
            range_limit_m: Some(20.0),
            budget: DEFAULT_SEARCH_BUDGET,
            travel_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Round-robin order for picking a new channel.
    pub channels_mhz: Vec<Channel>,
    pub initial_channel_mhz: Channel,
    /// Constellation document to fly; designed from the `design` section
    /// when absent.
    pub constellation_file: Option<String>,
    pub jammer: Vec<JamInterval>,
    pub link: LinkParams,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            channels_mhz: vec![Channel(900.0), Channel(905.0)],
            initial_channel_mhz: Channel(900.0),
            constellation_file: None,
            jammer: vec![JamInterval {
                t_start_s: 10.0,
                t_end_s: None,
                channels: vec![Channel(900.0)],
            }],
            link: LinkParams::default(),
        }
    }
}

/// Parses a config document and applies `key.path=value` overrides.
///
/// The document is parsed as-is first, so schema errors point at its line
/// and column. Overrides then apply to the parsed config with every default
/// filled in. Values are read as JSON when they parse, otherwise as plain
/// strings.
pub fn load(text: &str, origin: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let parsed: RunConfig =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    if overrides.is_empty() {
        return Ok(parsed);
    }
    let mut doc = serde_json::to_value(&parsed).expect("config serializes");
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {o}: expected key.path=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut doc, path, value).map_err(|e| CliError::Config(format!("--set {o}: {e}")))?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(format!("after --set overrides: {e}")))
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(format!("malformed key path `{path}`"));
    }
    let mut node = doc;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| format!("`{key}` is not an array index"))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| format!("index {idx} out of range ({len} items)"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("`{key}` is below a scalar")),
        };
    }
    unreachable!("loop returns on the last key")
}

impl RunConfig {
    /// Semantic checks that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |section: &str, r: skyconst::Result<()>| r.map_err(|e| CliError::Config(format!("{section}: {e}")));
        wrap("sensor", self.sensor.validate())?;
        wrap("dbscan", self.dbscan.validate())?;
        wrap("hist", self.hist.validate())?;
        wrap("pid", self.pid.validate())?;
        wrap("flight", self.flight.validate())?;
        wrap("scenario.link", self.scenario.link.validate())?;
        if self.montecarlo.shards == 0 {
            return Err(CliError::Config("montecarlo.shards must be at least 1".into()));
        }
        for (name, zs) in [("pe", &self.pe.half_spacing_sigmas), ("montecarlo", &self.montecarlo.half_spacing_sigmas)] {
            if zs.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
                return Err(CliError::Config(format!("{name}.half_spacing_sigmas must be positive")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the effective config.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(load("{}", "t", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = load("{\n  \"hover\": {\"sigma_theta_deg\": 0.9, \"sigma_rho_m\": 0.05},\n  \"bogus\": 1\n}", "cfg.json", &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = load(
            "{}",
            "t",
            &["hover.sigma_rho_m=0.1".into(), "design.mode=heuristic".into(), "pe.lattices.0.rows=3".into()],
        )
        .unwrap();
        assert_eq!(cfg.hover, HoverModel::new(0.9, 0.1).unwrap());
        assert_eq!(cfg.pe.lattices[0].rows, 3);
        assert_eq!(cfg.design.mode, SearchMode::Heuristic);
        assert!(load("{}", "t", &["hover.nope=1".into()]).is_err());
        assert!(load("{}", "t", &["seed".into()]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.seed = Some(1);
        assert_ne!(a.sha256(), b.sha256());
    }
}
