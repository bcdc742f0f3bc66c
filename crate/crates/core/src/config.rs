//! TOML experiment and network files.
//!
//! An experiment file is flat: top-level keys for the run plus one table per
//! component. Every key has a default, so an empty file is a valid
//! experiment on the default synthetic trace and network.
//!
//! ```toml
//! seed = 7
//! out = "runs/day1"
//! trials = 300
//! gamma = 0.7
//! estimator = "mlc"
//!
//! [traffic]
//! source = "synth"      # or "cdr" with `path = "..."`
//! days = 7
//!
//! [network]
//! source = "synth"      # or "file" with `path = "network.toml"`
//! sbs_count = 8
//! solar_fraction = 0.3
//!
//! [mlc]
//! levels = 2
//! ```
//!
//! Relative paths are resolved against the directory of the experiment file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimators::distance::DistanceConfig;
use crate::estimators::mlc::MlcConfig;
use crate::experiment::{synth_network, ComparisonConfig, SynthNetworkParams};
use crate::model::{BaseStation, GridPos, Network, PowerParams, Tier};
use crate::renewable::SolarConfig;
use crate::switching::{
    Estimator, LstmEstimatorConfig, PartitionRule, SwitchConfig, TimelineConfig,
};
use crate::traffic::{
    load_cdr_csv, synth_traffic, ActivityWeights, SynthParams, TrafficTrace, MILAN_GRID_WIDTH,
};
use crate::{Error, Result};

/// Which estimator a run uses; its settings come from the matching table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Dist,
    Mlc,
    Lstm,
    Oracle,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dist" | "distance" => Ok(EstimatorKind::Dist),
            "mlc" => Ok(EstimatorKind::Mlc),
            "lstm" => Ok(EstimatorKind::Lstm),
            "oracle" => Ok(EstimatorKind::Oracle),
            _ => Err(Error::config(
                "estimator",
                format!("unknown estimator `{s}`; expected dist, mlc, lstm or oracle"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TrafficSource {
    Synth(SynthParams),
    Cdr(CdrSource),
}

impl Default for TrafficSource {
    fn default() -> Self {
        TrafficSource::Synth(SynthParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdrSource {
    pub path: PathBuf,
    #[serde(default)]
    pub weights: ActivityWeights,
    #[serde(default = "default_grid_width")]
    pub grid_width: u32,
    #[serde(default = "default_slots_per_day")]
    pub slots_per_day: usize,
}

fn default_grid_width() -> u32 {
    MILAN_GRID_WIDTH
}

fn default_slots_per_day() -> usize {
    crate::traffic::SLOTS_PER_DAY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum NetworkSource {
    Synth(SynthNetworkParams),
    File {
        path: PathBuf,
        /// Capacity used to normalise cells that no SBS serves.
        #[serde(default = "default_cell_capacity")]
        cell_capacity: f64,
    },
}

fn default_cell_capacity() -> f64 {
    100.0
}

impl Default for NetworkSource {
    fn default() -> Self {
        NetworkSource::Synth(SynthNetworkParams::default())
    }
}

/// Slots simulated by `switch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimelineWindow {
    pub start_slot: usize,
    pub num_slots: usize,
}

impl Default for TimelineWindow {
    fn default() -> Self {
        TimelineWindow {
            start_slot: 0,
            num_slots: 144,
        }
    }
}

/// Monte Carlo settings of `estimate` beyond the trial count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateSettings {
    pub sleeping: usize,
    pub history_fraction: f64,
    pub mape_epsilon: f64,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        let c = ComparisonConfig::default();
        EstimateSettings {
            sleeping: c.sleeping,
            history_fraction: c.history_fraction,
            mape_epsilon: c.mape_epsilon,
        }
    }
}

/// Grids swept by `estimate` and `switch --sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub distance_neighbors: Vec<usize>,
    pub distance_exponents: Vec<f64>,
    pub lstm_windows: Vec<usize>,
    pub lstm_units: Vec<usize>,
    pub mlc_levels: Vec<usize>,
    pub solar_fractions: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            distance_neighbors: (4..=40).step_by(4).collect(),
            distance_exponents: vec![3.0, 5.0],
            lstm_windows: vec![4, 8, 12],
            lstm_units: vec![5, 10, 20],
            mlc_levels: vec![1, 2],
            solar_fractions: vec![0.0, 0.2, 0.4, 0.6],
            gammas: vec![0.0, 0.3, 0.7, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Monte Carlo trials of `estimate`.
    pub trials: usize,
    /// State-of-charge threshold of the renewable partition.
    pub gamma: f64,
    pub estimator: EstimatorKind,
    pub traffic: TrafficSource,
    pub network: NetworkSource,
    pub switch: SwitchConfig,
    pub timeline: TimelineWindow,
    pub estimate: EstimateSettings,
    pub sweep: SweepSettings,
    pub distance: DistanceConfig,
    pub mlc: MlcConfig,
    pub lstm: LstmEstimatorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("out"),
            trials: 300,
            gamma: 1.0,
            estimator: EstimatorKind::Dist,
            traffic: TrafficSource::default(),
            network: NetworkSource::default(),
            switch: SwitchConfig::default(),
            timeline: TimelineWindow::default(),
            estimate: EstimateSettings::default(),
            sweep: SweepSettings::default(),
            distance: DistanceConfig::default(),
            mlc: MlcConfig::default(),
            lstm: LstmEstimatorConfig::default(),
        }
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.message().to_string(),
        }
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads, resolves relative paths and validates an experiment file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, path, base)
    }

    /// Parses `text`; `origin` only labels errors.
    pub fn from_toml(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = parse_toml(origin, text)?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.out = resolve(base, &self.out);
        if let TrafficSource::Cdr(c) = &mut self.traffic {
            c.path = resolve(base, &c.path);
        }
        if let NetworkSource::File { path, .. } = &mut self.network {
            *path = resolve(base, path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1]"));
        }
        match &self.traffic {
            TrafficSource::Cdr(c) if !c.path.is_file() => {
                return Err(Error::config(
                    "traffic.path",
                    format!("{} does not exist", c.path.display()),
                ));
            }
            TrafficSource::Synth(p) if p.num_cells == 0 || p.days == 0 || p.slots_per_day == 0 => {
                return Err(Error::config(
                    "traffic",
                    "num_cells, days and slots_per_day must be >= 1",
                ));
            }
            _ => {}
        }
        match &self.network {
            NetworkSource::File { path, .. } if !path.is_file() => {
                return Err(Error::config(
                    "network.path",
                    format!("{} does not exist", path.display()),
                ));
            }
            NetworkSource::File { cell_capacity, .. } if !(*cell_capacity > 0.0) => {
                return Err(Error::config("network.cell_capacity", "must be > 0"));
            }
            NetworkSource::Synth(p) => p.validate()?,
            _ => {}
        }
        if self.timeline.num_slots == 0 {
            return Err(Error::config("timeline.num_slots", "must be >= 1"));
        }
        if self.estimate.sleeping == 0 {
            return Err(Error::config("estimate.sleeping", "must be >= 1"));
        }
        if !(self.estimate.history_fraction > 0.0 && self.estimate.history_fraction < 1.0) {
            return Err(Error::config(
                "estimate.history_fraction",
                "must lie in (0, 1)",
            ));
        }
        if self.sweep.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::config("sweep.gammas", "values must lie in [0, 1]"));
        }
        if self
            .sweep
            .solar_fractions
            .iter()
            .any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(Error::config(
                "sweep.solar_fractions",
                "values must lie in [0, 1]",
            ));
        }
        self.switch.validate()?;
        self.distance.validate()?;
        self.mlc.validate()?;
        self.lstm.lstm.validate()
    }

    pub fn estimator_for(&self, kind: EstimatorKind) -> Estimator {
        match kind {
            EstimatorKind::Dist => Estimator::Distance(self.distance),
            EstimatorKind::Mlc => Estimator::Mlc(self.mlc.clone()),
            EstimatorKind::Lstm => Estimator::Lstm(self.lstm.clone()),
            EstimatorKind::Oracle => Estimator::Oracle,
        }
    }

    pub fn timeline_config(&self) -> TimelineConfig {
        TimelineConfig {
            start_slot: self.timeline.start_slot,
            num_slots: self.timeline.num_slots,
            rule: PartitionRule::Threshold(self.gamma),
            switch: self.switch.clone(),
            estimator: self.estimator_for(self.estimator),
            seed: self.seed,
        }
    }

    pub fn comparison_config(&self) -> ComparisonConfig {
        ComparisonConfig {
            trials: self.trials,
            sleeping: self.estimate.sleeping,
            history_fraction: self.estimate.history_fraction,
            seed: self.seed,
            mape_epsilon: self.estimate.mape_epsilon,
            switch: self.switch.clone(),
        }
    }

    pub fn load_trace(&self) -> Result<TrafficTrace> {
        match &self.traffic {
            TrafficSource::Synth(p) => Ok(synth_traffic(p)),
            TrafficSource::Cdr(c) => {
                load_cdr_csv(&c.path, c.weights, c.grid_width, c.slots_per_day)
            }
        }
    }

    pub fn load_network(&self, trace: &TrafficTrace) -> Result<Network> {
        match &self.network {
            NetworkSource::Synth(p) => synth_network(trace, p),
            NetworkSource::File { path, .. } => load_network_file(path),
        }
    }

    /// Capacity used for cells that no SBS serves.
    pub fn default_capacity(&self) -> f64 {
        match &self.network {
            NetworkSource::Synth(p) => p.cell_capacity,
            NetworkSource::File { cell_capacity, .. } => *cell_capacity,
        }
    }
}

/// One `[[station]]` entry. Omitted power parameters take the tier default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub id: u32,
    pub tier: Tier,
    pub capacity: f64,
    pub row: i32,
    pub col: i32,
    pub p_o: Option<f64>,
    pub eta: Option<f64>,
    pub p_t: Option<f64>,
    pub p_s: Option<f64>,
    /// Equip with the file's `[solar]` panel and battery.
    #[serde(default)]
    pub solar: bool,
    #[serde(default)]
    pub base_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub solar: SolarConfig,
    pub station: Vec<StationSpec>,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<Network> {
        let stations = self
            .station
            .into_iter()
            .map(|s| {
                let d = match s.tier {
                    Tier::Sbs => PowerParams::SBS_DEFAULT,
                    Tier::Mbs => PowerParams::MBS_DEFAULT,
                    Tier::Haps => PowerParams::HAPS_DEFAULT,
                };
                BaseStation {
                    id: s.id,
                    tier: s.tier,
                    capacity: s.capacity,
                    power: PowerParams {
                        p_operational: s.p_o.unwrap_or(d.p_operational),
                        pa_efficiency: s.eta.unwrap_or(d.pa_efficiency),
                        p_transmit: s.p_t.unwrap_or(d.p_transmit),
                        p_sleep: s.p_s.unwrap_or(d.p_sleep),
                    },
                    position: GridPos::new(s.row, s.col),
                    solar: s.solar.then(|| self.solar.clone()),
                    base_load: s.base_load,
                }
            })
            .collect();
        Network::new(stations)
    }

    pub fn from_network(network: &Network) -> Self {
        let solar = network
            .stations()
            .iter()
            .find_map(|b| b.solar.clone())
            .unwrap_or_default();
        NetworkFile {
            solar,
            station: network
                .stations()
                .iter()
                .map(|b| StationSpec {
                    id: b.id,
                    tier: b.tier,
                    capacity: b.capacity,
                    row: b.position.row,
                    col: b.position.col,
                    p_o: Some(b.power.p_operational),
                    eta: Some(b.power.pa_efficiency),
                    p_t: Some(b.power.p_transmit),
                    p_s: Some(b.power.p_sleep),
                    solar: b.solar.is_some(),
                    base_load: b.base_load,
                })
                .collect(),
        }
    }
}

pub fn load_network_file(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml::<NetworkFile>(path, &text)?.into_network()
}

/// Writes `network` as a network file. Distinct solar configurations are not
/// representable; the first one found is used for every solar SBS.
pub fn write_network_file(network: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = toml::to_string(&NetworkFile::from_network(network))
        .map_err(|e| Error::domain(format!("cannot serialise network: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("test.toml"), Path::new("."))
    }

    #[test]
    fn empty_file_is_default() {
        let cfg = ExperimentConfig::from_toml("", Path::new("x.toml"), Path::new("")).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn tables_and_tags() {
        let cfg = parse(
            "seed = 3\ngamma = 0.3\nestimator = \"lstm\"\n\
             [traffic]\nsource = \"synth\"\ndays = 2\n\
             [network]\nsource = \"synth\"\nsbs_count = 8\nsolar_fraction = 0.25\n\
             [switch]\noffload = \"proportional_to_headroom\"\n\
             [lstm.lstm]\nunits = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.estimator, EstimatorKind::Lstm);
        assert!(matches!(&cfg.traffic, TrafficSource::Synth(p) if p.days == 2));
        assert!(matches!(&cfg.network, NetworkSource::Synth(p) if p.sbs_count == 8));
        assert_eq!(cfg.lstm.lstm.units, 5);
        assert_eq!(cfg.timeline_config().rule, PartitionRule::Threshold(0.3));
        assert!(matches!(
            cfg.timeline_config().estimator,
            Estimator::Lstm(_)
        ));
    }

    #[test]
    fn validation_names_fields() {
        let field = |text: &str| match parse(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field("trials = 0"), "trials");
        assert_eq!(field("gamma = 1.5"), "gamma");
        assert_eq!(
            field("[traffic]\nsource = \"cdr\"\npath = \"nope.csv\""),
            "traffic.path"
        );
        assert_eq!(
            field("[network]\nsource = \"file\"\npath = \"nope.toml\""),
            "network.path"
        );
        assert_eq!(
            field("[distance]\nneighbor_count = 0"),
            "distance.neighbor_count"
        );
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line() {
        match parse("seed = 1\nbogus = 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn network_file_round_trip() {
        let trace = synth_traffic(&SynthParams {
            num_cells: 25,
            days: 1,
            ..Default::default()
        });
        let net = synth_network(
            &trace,
            &SynthNetworkParams {
                sbs_count: 5,
                solar_fraction: 0.4,
                ..Default::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.toml");
        write_network_file(&net, &p).unwrap();
        assert_eq!(load_network_file(&p).unwrap(), net);
    }

    #[test]
    fn station_defaults_follow_tier() {
        let text = "[[station]]\nid = 1\ntier = \"mbs\"\ncapacity = 10\nrow = 0\ncol = 0\n\
                    [[station]]\nid = 2\ntier = \"haps\"\ncapacity = 10\nrow = 0\ncol = 0\n\
                    [[station]]\nid = 3\ntier = \"sbs\"\ncapacity = 5\nrow = 1\ncol = 1\nsolar = true\np_o = 90\n";
        let net = parse_toml::<NetworkFile>(Path::new("n.toml"), text)
            .unwrap()
            .into_network()
            .unwrap();
        assert_eq!(net.haps().power, PowerParams::HAPS_DEFAULT);
        assert_eq!(net.sbs(0).power.p_operational, 90.0);
        assert_eq!(net.sbs(0).power.p_sleep, PowerParams::SBS_DEFAULT.p_sleep);
        assert!(net.is_solar(0));
    }
}
