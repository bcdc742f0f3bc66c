//! Experiment drivers shared by the command-line tool and the test suites.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::lstm::{lstm_predict_next, lstm_train, LstmConfig, MinMaxScaler};
use crate::metrics::{decision_change_rate, mape, nes, DEFAULT_MAPE_EPSILON};
use crate::model::{BaseStation, Network, PowerParams, Tier};
use crate::renewable::{BatteryState, SolarConfig};
use crate::switching::{
    es_optimize, run_timeline, Estimator, LoadField, PartitionRule, PreparedEstimator, SlotContext,
    SwitchConfig, Timeline, TimelineConfig,
};
use crate::traffic::{make_windows, split_windows, TrafficTrace};
use crate::{Error, Result};

pub const MBS_ID: u32 = 1_000_000;
pub const HAPS_ID: u32 = 1_000_001;

/// Topology placed on top of a traffic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthNetworkParams {
    pub sbs_count: usize,
    /// Capacity of every SBS, and of the cells no SBS serves, in traffic units.
    pub cell_capacity: f64,
    pub mbs_capacity: f64,
    pub mbs_base_load: f64,
    pub haps_capacity: f64,
    pub haps_base_load: f64,
    /// Share of SBSs with solar panels. Solar sets are nested across
    /// fractions for a fixed seed.
    pub solar_fraction: f64,
    pub solar: SolarConfig,
    pub seed: u64,
}

impl Default for SynthNetworkParams {
    fn default() -> Self {
        SynthNetworkParams {
            sbs_count: 10,
            cell_capacity: 100.0,
            mbs_capacity: 1000.0,
            mbs_base_load: 0.5,
            haps_capacity: 1000.0,
            haps_base_load: 0.8,
            solar_fraction: 0.0,
            solar: SolarConfig::default(),
            seed: 0,
        }
    }
}

impl SynthNetworkParams {
    pub fn validate(&self) -> Result<()> {
        if self.sbs_count == 0 {
            return Err(Error::config("network.sbs_count", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.solar_fraction) {
            return Err(Error::config(
                "network.solar_fraction",
                "must lie in [0, 1]",
            ));
        }
        for (field, v) in [
            ("network.cell_capacity", self.cell_capacity),
            ("network.mbs_capacity", self.mbs_capacity),
            ("network.haps_capacity", self.haps_capacity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be > 0"));
            }
        }
        self.solar.validate()
    }
}

/// Places SBSs on distinct, seeded trace cells (in trace order) and adds one
/// MBS and one HAPS at the centre of the grid.
pub fn synth_network(trace: &TrafficTrace, p: &SynthNetworkParams) -> Result<Network> {
    p.validate()?;
    if p.sbs_count > trace.cells.len() {
        return Err(Error::config(
            "network.sbs_count",
            format!(
                "{} SBSs but only {} trace cells",
                p.sbs_count,
                trace.cells.len()
            ),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut cells = index::sample(&mut rng, trace.cells.len(), p.sbs_count).into_vec();
    cells.sort_unstable();
    let mut order: Vec<usize> = (0..p.sbs_count).collect();
    order.shuffle(&mut rng);
    let n_solar = (p.solar_fraction * p.sbs_count as f64).round() as usize;
    let solar: Vec<usize> = order[..n_solar].to_vec();

    let centre = trace.cells[trace.cells.len() / 2].position;
    let mut stations = vec![
        BaseStation {
            id: MBS_ID,
            tier: Tier::Mbs,
            capacity: p.mbs_capacity,
            power: PowerParams::MBS_DEFAULT,
            position: centre,
            solar: None,
            base_load: p.mbs_base_load,
        },
        BaseStation {
            id: HAPS_ID,
            tier: Tier::Haps,
            capacity: p.haps_capacity,
            power: PowerParams::HAPS_DEFAULT,
            position: centre,
            solar: None,
            base_load: p.haps_base_load,
        },
    ];
    for (j, &c) in cells.iter().enumerate() {
        let cell = trace.cells[c];
        stations.push(BaseStation {
            id: cell.id,
            tier: Tier::Sbs,
            capacity: p.cell_capacity,
            power: PowerParams::SBS_DEFAULT,
            position: cell.position,
            solar: solar.contains(&j).then(|| p.solar.clone()),
            base_load: 0.0,
        });
    }
    Network::new(stations)
}

/// Monte Carlo settings for comparing estimators on snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    pub trials: usize,
    /// SBSs asleep in each snapshot.
    pub sleeping: usize,
    /// Leading share of the trace used as history; snapshots come after it.
    pub history_fraction: f64,
    pub seed: u64,
    pub mape_epsilon: f64,
    pub switch: SwitchConfig,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            trials: 300,
            sleeping: 3,
            history_fraction: 0.6,
            seed: 0,
            mape_epsilon: DEFAULT_MAPE_EPSILON,
            switch: SwitchConfig::default(),
        }
    }
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if self.sleeping == 0 {
            return Err(Error::config("sleeping", "must be >= 1"));
        }
        if !(self.history_fraction > 0.0 && self.history_fraction < 1.0) {
            return Err(Error::config("history_fraction", "must lie in (0, 1)"));
        }
        self.switch.validate()
    }
}

/// A snapshot: one slot and the SBS indices asleep in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub slot: usize,
    pub sleeping: Vec<usize>,
}

/// Draws the snapshots shared by every estimator.
pub fn draw_snapshots(
    field: &LoadField,
    sbs_count: usize,
    cfg: &ComparisonConfig,
) -> Result<(usize, Vec<Snapshot>)> {
    cfg.validate()?;
    if cfg.sleeping > sbs_count {
        return Err(Error::config(
            "sleeping",
            format!("{} exceeds the {sbs_count} SBSs", cfg.sleeping),
        ));
    }
    let history_end = (cfg.history_fraction * field.len() as f64).round() as usize;
    if history_end >= field.len() {
        return Err(Error::config(
            "history_fraction",
            "leaves no slots to evaluate",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let snaps = (0..cfg.trials)
        .map(|_| {
            let slot = rng.random_range(history_end..field.len());
            let mut sleeping = index::sample(&mut rng, sbs_count, cfg.sleeping).into_vec();
            sleeping.sort_unstable();
            Snapshot { slot, sleeping }
        })
        .collect();
    Ok((history_end, snaps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorScore {
    pub label: String,
    pub mape_percent: f64,
    pub guarded: usize,
    /// Percent of ON/OFF decisions that differ from perfect knowledge.
    pub decision_change_percent: f64,
    pub estimates: usize,
    pub downgraded: bool,
}

/// ES decisions for every snapshot with perfect knowledge.
fn decide(
    field: &LoadField,
    network: &Network,
    snap: &Snapshot,
    estimates: Option<&[f64]>,
    cfg: &SwitchConfig,
) -> Result<Vec<bool>> {
    let n = network.sbs_count();
    let mut loads: Vec<f64> = field
        .sbs_cells
        .iter()
        .map(|&i| field.loads[i][snap.slot])
        .collect();
    if let Some(est) = estimates {
        for (&j, &e) in snap.sleeping.iter().zip(est) {
            loads[j] = e.clamp(0.0, 1.0);
        }
    }
    let mut prev = vec![true; n];
    for &j in &snap.sleeping {
        prev[j] = false;
    }
    let batteries: Vec<BatteryState> = network
        .sbs_iter()
        .map(|b| {
            b.solar
                .as_ref()
                .map_or(BatteryState::none(), |s| s.initial_battery())
        })
        .collect();
    let ctx = SlotContext {
        slot: snap.slot,
        prev_switch: &prev,
        loads: &loads,
        batteries: &batteries,
    };
    let part = PartitionRule::default().partition(network, &batteries)?;
    Ok(es_optimize(network, &part, &ctx, cfg)?.switch)
}

/// Scores each estimator on the same snapshots: MAPE of the sleeping-load
/// estimates and decision-change rate against perfect knowledge.
pub fn compare_estimators(
    field: &LoadField,
    network: &Network,
    estimators: &[(String, Estimator)],
    cfg: &ComparisonConfig,
    lstm_cells: &[usize],
) -> Result<Vec<EstimatorScore>> {
    let (history_end, snaps) = draw_snapshots(field, network.sbs_count(), cfg)?;
    let reference: Vec<Vec<bool>> = snaps
        .par_iter()
        .map(|s| decide(field, network, s, None, &cfg.switch))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(estimators.len());
    for (label, est) in estimators {
        let prepared = PreparedEstimator::prepare(est, field, history_end, lstm_cells, cfg.seed)?;
        let results: Vec<(Vec<f64>, Vec<f64>, Vec<bool>)> = snaps
            .par_iter()
            .map(|s| {
                let cells: Vec<usize> = s.sleeping.iter().map(|&j| field.sbs_cells[j]).collect();
                let w = prepared.lstm_window().unwrap_or(0);
                let window = |cell: usize| field.loads[cell][s.slot - w..s.slot].to_vec();
                let est = prepared.estimate(field, s.slot, &cells, &window)?;
                let truth: Vec<f64> = cells.iter().map(|&c| field.loads[c][s.slot]).collect();
                let decision = decide(field, network, s, Some(&est), &cfg.switch)?;
                Ok((truth, est, decision))
            })
            .collect::<Result<_>>()?;
        let actual: Vec<f64> = results.iter().flat_map(|r| r.0.iter().copied()).collect();
        let predicted: Vec<f64> = results.iter().flat_map(|r| r.1.iter().copied()).collect();
        let decisions: Vec<Vec<bool>> = results.into_iter().map(|r| r.2).collect();
        let m = mape(&actual, &predicted, cfg.mape_epsilon)?;
        out.push(EstimatorScore {
            label: label.clone(),
            mape_percent: m.percent,
            guarded: m.guarded,
            decision_change_percent: decision_change_rate(&reference, &decisions)?,
            estimates: actual.len(),
            downgraded: prepared.is_downgraded(est),
        });
    }
    Ok(out)
}

/// Test MAPE (percent) of a single-series forecaster: windows are split
/// within the series, the model trains on the first part and forecasts the
/// rest.
pub fn lstm_forecast_mape(
    series: &[f64],
    cfg: &LstmConfig,
    train_fraction: f64,
    split_seed: u64,
) -> Result<f64> {
    let scaler = MinMaxScaler::fit(series)?;
    let scaled: Vec<f64> = series.iter().map(|&x| scaler.transform(x)).collect();
    let ws = make_windows(&scaled, cfg.window, 0)?;
    let (train, test) = split_windows(&ws, train_fraction, split_seed)?;
    let fit = lstm_train(&train, cfg)?;
    let mut actual = Vec::with_capacity(test.len());
    let mut predicted = Vec::with_capacity(test.len());
    for (x, &t) in test.inputs.iter().zip(&test.targets) {
        actual.push(scaler.inverse(t));
        predicted.push(scaler.inverse(lstm_predict_next(&fit.params, x, cfg.window)?));
    }
    Ok(mape(&actual, &predicted, DEFAULT_MAPE_EPSILON)?.percent)
}

/// A renewable run and its same-engine baseline without solar.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutcome {
    pub timeline: Timeline,
    pub baseline: Timeline,
    pub nes_percent: f64,
}

pub fn run_with_baseline(
    field: &LoadField,
    network: &Network,
    cfg: &TimelineConfig,
) -> Result<SwitchOutcome> {
    let timeline = run_timeline(field, network, cfg)?;
    let baseline = run_timeline(field, &network.without_solar(), cfg)?;
    let nes_percent = nes(&baseline.grid_series(), &timeline.grid_series())?;
    Ok(SwitchOutcome {
        timeline,
        baseline,
        nes_percent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub solar_fraction: f64,
    pub gamma: f64,
    pub mean_grid_power: f64,
    pub nes_percent: f64,
}

/// Mean grid power for every (solar fraction, gamma) pair. The network is
/// rebuilt per fraction from `net`; runs execute in parallel.
pub fn renewable_sweep(
    trace: &TrafficTrace,
    net: &SynthNetworkParams,
    fractions: &[f64],
    gammas: &[f64],
    cfg: &TimelineConfig,
) -> Result<Vec<SweepPoint>> {
    let jobs: Vec<(f64, f64)> = fractions
        .iter()
        .flat_map(|&f| gammas.iter().map(move |&g| (f, g)))
        .collect();
    jobs.par_iter()
        .map(|&(f, g)| {
            let network = synth_network(
                trace,
                &SynthNetworkParams {
                    solar_fraction: f,
                    ..net.clone()
                },
            )?;
            let field = LoadField::new(trace, &network, net.cell_capacity)?;
            let run_cfg = TimelineConfig {
                rule: PartitionRule::Threshold(g),
                ..cfg.clone()
            };
            let out = run_with_baseline(&field, &network, &run_cfg)?;
            Ok(SweepPoint {
                solar_fraction: f,
                gamma: g,
                mean_grid_power: out.timeline.mean_grid_power(),
                nes_percent: out.nes_percent,
            })
        })
        .collect()
}
