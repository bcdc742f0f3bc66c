//! The per-slot loop: estimate sleeping loads, search, commit.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    delta_bits, es_optimize, evaluate_unchecked, PartitionRule, SlotContext, SwitchConfig,
};
use crate::estimators::distance::{estimate_distance, DistanceConfig, Neighbor};
use crate::estimators::kmeans::elbow_select_g;
use crate::estimators::lstm::{LstmConfig, LstmModel};
use crate::estimators::mlc::{mlc_estimate, summary_features, ClusterCount, MlcConfig};
use crate::model::Network;
use crate::numfmt::sig9;
use crate::renewable::{BatteryState, EnergyBreakdown};
use crate::traffic::{create, normalize_loads, Cell, TrafficTrace};
use crate::{Error, Result};

pub const TIMELINE_HEADER: &str =
    "slot,delta_bits,grid_power_w,total_power_w,feasible,configs_evaluated";
pub const BATTERY_HEADER: &str = "sbs_id,slot,S_kwh,E_H,E_R,E_G";

/// Load factors of every trace cell, with the cell serving each SBS.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadField {
    pub cells: Vec<Cell>,
    /// `loads[i][t]` for cell `i`.
    pub loads: Vec<Vec<f64>>,
    pub slots_per_day: usize,
    /// Trace cell index of each SBS, matched by grid position.
    pub sbs_cells: Vec<usize>,
    /// Samples clipped at load factor 1 during normalisation.
    pub clipped: usize,
}

impl LoadField {
    /// Normalises `trace` with each SBS's capacity for its own cell and
    /// `default_capacity` for cells no SBS serves.
    pub fn new(trace: &TrafficTrace, network: &Network, default_capacity: f64) -> Result<Self> {
        let mut capacities = vec![default_capacity; trace.cells.len()];
        let mut sbs_cells = Vec::with_capacity(network.sbs_count());
        for bs in network.sbs_iter() {
            let i = trace.index_at(bs.position).ok_or_else(|| {
                Error::domain(format!(
                    "SBS {} at row {} col {} has no trace cell",
                    bs.id, bs.position.row, bs.position.col
                ))
            })?;
            if sbs_cells.contains(&i) {
                return Err(Error::domain(format!(
                    "SBS {} shares its trace cell with another SBS",
                    bs.id
                )));
            }
            capacities[i] = bs.capacity;
            sbs_cells.push(i);
        }
        let (loads, clipped) = normalize_loads(trace, &capacities)?;
        Ok(LoadField {
            cells: trace.cells.clone(),
            loads,
            slots_per_day: trace.slots_per_day,
            sbs_cells,
            clipped,
        })
    }

    pub fn len(&self) -> usize {
        self.loads.first().map_or(0, |l| l.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmEstimatorConfig {
    pub lstm: LstmConfig,
    /// Training windows kept after seeded subsampling.
    pub max_train_windows: usize,
}

impl Default for LstmEstimatorConfig {
    fn default() -> Self {
        LstmEstimatorConfig {
            lstm: LstmConfig::default(),
            max_train_windows: 20_000,
        }
    }
}

/// Estimator used for sleeping SBSs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Distance(DistanceConfig),
    Mlc(MlcConfig),
    Lstm(LstmEstimatorConfig),
    /// Perfect knowledge of the true load.
    Oracle,
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Distance(DistanceConfig::default())
    }
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Distance(_) => "dist",
            Estimator::Mlc(_) => "mlc",
            Estimator::Lstm(_) => "lstm",
            Estimator::Oracle => "oracle",
        }
    }
}

enum Kind {
    Distance,
    Mlc {
        cfg: MlcConfig,
        features: Vec<Option<Vec<f64>>>,
    },
    Lstm(Box<LstmModel>),
    Oracle,
}

/// An estimator trained on the slots before `history_end`.
pub struct PreparedEstimator {
    kind: Kind,
    fallback: DistanceConfig,
    /// Messages about downgrades and other notable preparation steps.
    pub log: Vec<String>,
}

impl PreparedEstimator {
    /// `lstm_cells` lists the trace cells whose history trains the LSTM.
    pub fn prepare(
        est: &Estimator,
        field: &LoadField,
        history_end: usize,
        lstm_cells: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut log = Vec::new();
        let fallback = DistanceConfig::default();
        let kind = match est {
            Estimator::Distance(cfg) => {
                cfg.validate()?;
                return Ok(PreparedEstimator {
                    kind: Kind::Distance,
                    fallback: *cfg,
                    log,
                });
            }
            Estimator::Oracle => Kind::Oracle,
            Estimator::Mlc(cfg) => {
                cfg.validate()?;
                if history_end == 0 {
                    log.push(
                        "mlc: no history before the first slot; using the distance estimator"
                            .into(),
                    );
                    Kind::Distance
                } else {
                    let features: Vec<Option<Vec<f64>>> = field
                        .loads
                        .iter()
                        .map(|l| {
                            Some(summary_features(
                                &l[..history_end],
                                field.slots_per_day,
                                cfg.feature,
                            ))
                        })
                        .collect();
                    let mut cfg = cfg.clone();
                    cfg.seed = cfg.seed.wrapping_add(seed);
                    if cfg.clusters == ClusterCount::Auto {
                        // the summary features do not change, so neither does the elbow
                        let base: Vec<Vec<f64>> = features.iter().flatten().cloned().collect();
                        let g = if base.len() >= 2 {
                            elbow_select_g(
                                &base,
                                cfg.g_max.min(base.len()),
                                cfg.restarts,
                                cfg.max_iters,
                                cfg.seed,
                            )?
                            .g
                        } else {
                            1
                        };
                        log.push(format!("mlc: elbow selected {g} clusters"));
                        cfg.clusters = ClusterCount::Fixed(g);
                    }
                    Kind::Mlc { cfg, features }
                }
            }
            Estimator::Lstm(cfg) => {
                cfg.lstm.validate()?;
                if history_end <= cfg.lstm.window {
                    log.push(format!(
                        "lstm: {history_end} history slots cannot fill a window of {}; using the distance estimator",
                        cfg.lstm.window
                    ));
                    Kind::Distance
                } else {
                    let histories: Vec<(u32, &[f64])> = lstm_cells
                        .iter()
                        .map(|&i| (field.cells[i].id, &field.loads[i][..history_end]))
                        .collect();
                    let mut lc = cfg.lstm.clone();
                    lc.seed = lc.seed.wrapping_add(seed);
                    let (model, fit) = LstmModel::fit(&histories, &lc, cfg.max_train_windows)?;
                    log.push(format!(
                        "lstm: trained on {} cells, loss {} -> {}",
                        histories.len(),
                        sig9(fit.initial_loss),
                        sig9(fit.loss_history.last().copied().unwrap_or(fit.initial_loss))
                    ));
                    Kind::Lstm(Box::new(model))
                }
            }
        };
        Ok(PreparedEstimator {
            kind,
            fallback,
            log,
        })
    }

    /// Whether [`PreparedEstimator::estimate`] will use the distance estimator.
    pub fn is_downgraded(&self, est: &Estimator) -> bool {
        matches!(self.kind, Kind::Distance) && !matches!(est, Estimator::Distance(_))
    }

    pub fn lstm_window(&self) -> Option<usize> {
        match &self.kind {
            Kind::Lstm(m) => Some(m.config.window),
            _ => None,
        }
    }

    /// Estimates the loads of `sleeping` trace cells at slot `t`.
    ///
    /// Every other cell is observed at `t`. `window` returns the last
    /// values known for a cell before `t`, used by the LSTM.
    pub fn estimate(
        &self,
        field: &LoadField,
        t: usize,
        sleeping: &[usize],
        window: &dyn Fn(usize) -> Vec<f64>,
    ) -> Result<Vec<f64>> {
        if sleeping.is_empty() {
            return Ok(Vec::new());
        }
        match &self.kind {
            Kind::Oracle => Ok(sleeping.iter().map(|&i| field.loads[i][t]).collect()),
            Kind::Distance => {
                let active: Vec<Neighbor> = (0..field.cells.len())
                    .filter(|i| !sleeping.contains(i))
                    .map(|i| Neighbor {
                        position: field.cells[i].position,
                        load: field.loads[i][t],
                    })
                    .collect();
                sleeping
                    .iter()
                    .map(|&i| estimate_distance(field.cells[i].position, &active, &self.fallback))
                    .collect()
            }
            Kind::Mlc { cfg, features } => {
                let current: Vec<Option<f64>> = (0..field.cells.len())
                    .map(|i| (!sleeping.contains(&i)).then(|| field.loads[i][t]))
                    .collect();
                let est = mlc_estimate(features, &current, cfg)?;
                Ok(sleeping
                    .iter()
                    .map(|&i| est.get(i).unwrap_or(0.0))
                    .collect())
            }
            Kind::Lstm(model) => sleeping
                .iter()
                .map(|&i| model.predict_cell(field.cells[i].id, &window(i)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimelineConfig {
    /// First simulated slot; earlier slots are history.
    pub start_slot: usize,
    pub num_slots: usize,
    pub rule: PartitionRule,
    pub switch: SwitchConfig,
    pub estimator: Estimator,
    pub seed: u64,
}

impl Default for TimelineConfig {
    fn default() -> Self {
        TimelineConfig {
            start_slot: 0,
            num_slots: 144,
            rule: PartitionRule::default(),
            switch: SwitchConfig::default(),
            estimator: Estimator::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotResult {
    pub slot: usize,
    /// Estimate per SBS; `None` for SBSs that were ON in the previous slot.
    pub estimates: Vec<Option<f64>>,
    pub switch: Vec<bool>,
    /// Grid power realised with the true loads, in watts.
    pub grid_power: f64,
    /// Total demand power realised with the true loads, in watts.
    pub total_power: f64,
    /// Objective value the search saw, computed with the estimates.
    pub objective_value: f64,
    pub breakdowns: Vec<EnergyBreakdown>,
    /// The search found a configuration within macro capacity.
    pub feasible: bool,
    /// The true loads overload a macro tier under the chosen vector.
    pub overload: bool,
    pub configs_evaluated: u64,
    /// The distance estimator stood in for the configured one.
    pub downgraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryRecord {
    pub sbs_id: u32,
    pub slot: usize,
    /// Stored energy after the slot, in kWh.
    pub stored: f64,
    pub breakdown: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub slots: Vec<SlotResult>,
    pub battery: Vec<BatteryRecord>,
    pub log: Vec<String>,
}

impl Timeline {
    pub fn grid_series(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.grid_power).collect()
    }

    pub fn switch_vectors(&self) -> Vec<Vec<bool>> {
        self.slots.iter().map(|s| s.switch.clone()).collect()
    }

    pub fn mean_grid_power(&self) -> f64 {
        self.slots.iter().map(|s| s.grid_power).sum::<f64>() / self.slots.len().max(1) as f64
    }
}

/// Runs the two-phase loop over `cfg.num_slots` slots from `cfg.start_slot`.
///
/// Every SBS starts ON. Each slot, the loads of SBSs that slept in the
/// previous slot are estimated, the search picks a vector using those
/// estimates, and the vector is then accounted with the true loads.
pub fn run_timeline(
    field: &LoadField,
    network: &Network,
    cfg: &TimelineConfig,
) -> Result<Timeline> {
    cfg.switch.validate()?;
    let n = network.sbs_count();
    if field.sbs_cells.len() != n {
        return Err(Error::Size(
            "load field was built for a different network".into(),
        ));
    }
    let end = cfg.start_slot + cfg.num_slots;
    if cfg.num_slots == 0 || end > field.len() {
        return Err(Error::domain(format!(
            "slots {}..{end} outside the trace of {} slots",
            cfg.start_slot,
            field.len()
        )));
    }
    let prepared = PreparedEstimator::prepare(
        &cfg.estimator,
        field,
        cfg.start_slot,
        &field.sbs_cells,
        cfg.seed,
    )?;
    let downgraded = prepared.is_downgraded(&cfg.estimator);
    let mut log = prepared.log.clone();

    let mut batteries: Vec<BatteryState> = network
        .sbs_iter()
        .map(|b| {
            b.solar
                .as_ref()
                .map_or(BatteryState::none(), |s| s.initial_battery())
        })
        .collect();
    let mut prev_switch = vec![true; n];
    // value known for each SBS at each simulated slot: measured or estimated
    let mut known: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.num_slots); n];
    let mut slots = Vec::with_capacity(cfg.num_slots);
    let mut battery_log = Vec::new();

    for t in cfg.start_slot..end {
        let truth: Vec<f64> = field.sbs_cells.iter().map(|&i| field.loads[i][t]).collect();
        let sleepers: Vec<usize> = (0..n).filter(|&j| !prev_switch[j]).collect();
        let sleeping_cells: Vec<usize> = sleepers.iter().map(|&j| field.sbs_cells[j]).collect();
        let window = |cell: usize| -> Vec<f64> {
            let j = field.sbs_cells.iter().position(|&c| c == cell).unwrap();
            let w = prepared.lstm_window().unwrap_or(0);
            (t - w..t)
                .map(|k| {
                    if k < cfg.start_slot {
                        field.loads[cell][k]
                    } else {
                        known[j][k - cfg.start_slot]
                    }
                })
                .collect()
        };
        let est = prepared.estimate(field, t, &sleeping_cells, &window)?;
        let mut estimates = vec![None; n];
        let mut believed = truth.clone();
        for (&j, &e) in sleepers.iter().zip(&est) {
            let e = e.clamp(0.0, 1.0);
            estimates[j] = Some(e);
            believed[j] = e;
        }

        let partition = cfg.rule.partition(network, &batteries)?;
        let decision_ctx = SlotContext {
            slot: t,
            prev_switch: &prev_switch,
            loads: &believed,
            batteries: &batteries,
        };
        let es = es_optimize(network, &partition, &decision_ctx, &cfg.switch)?;
        let real_ctx = SlotContext {
            loads: &truth,
            ..decision_ctx
        };
        let realized = evaluate_unchecked(network, &es.switch, &real_ctx, &cfg.switch);

        for j in 0..n {
            let measured = prev_switch[j] || es.switch[j];
            known[j].push(if measured { truth[j] } else { believed[j] });
            if network.is_solar(j) {
                battery_log.push(BatteryRecord {
                    sbs_id: network.sbs(j).id,
                    slot: t,
                    stored: realized.next_batteries[j].stored,
                    breakdown: realized.breakdowns[j],
                });
            }
        }
        if realized.state.clamped {
            log.push(format!(
                "slot {t}: macro load clamped at zero during reclaim"
            ));
        }
        batteries.clone_from(&realized.next_batteries);
        prev_switch.clone_from(&es.switch);
        slots.push(SlotResult {
            slot: t,
            estimates,
            switch: es.switch,
            grid_power: realized.grid_power,
            total_power: realized.total_power,
            objective_value: es.eval.objective(cfg.switch.objective),
            breakdowns: realized.breakdowns,
            feasible: es.feasible,
            overload: !realized.feasible,
            configs_evaluated: es.configs_evaluated,
            downgraded: downgraded && !sleepers.is_empty(),
        });
    }
    Ok(Timeline {
        slots,
        battery: battery_log,
        log,
    })
}

pub fn write_timeline_csv(timeline: &Timeline, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{TIMELINE_HEADER}").map_err(io)?;
    for s in &timeline.slots {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.slot,
            delta_bits(&s.switch),
            sig9(s.grid_power),
            sig9(s.total_power),
            s.feasible,
            s.configs_evaluated
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_battery_csv(timeline: &Timeline, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{BATTERY_HEADER}").map_err(io)?;
    for r in &timeline.battery {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.sbs_id,
            r.slot,
            sig9(r.stored),
            sig9(r.breakdown.harvested),
            sig9(r.breakdown.renewable_used),
            sig9(r.breakdown.grid)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::switching::tests::network;
    use crate::traffic::{cell_position, TrafficTrace};

    fn trace(values: impl Fn(usize, usize) -> f64, cells: usize, days: usize) -> TrafficTrace {
        let cells_v: Vec<Cell> = (0..cells as u32)
            .map(|k| Cell {
                id: k + 1,
                position: cell_position(k + 1, 100),
            })
            .collect();
        let series = (0..cells)
            .map(|c| (0..144 * days).map(|t| values(c, t)).collect())
            .collect();
        TrafficTrace::new(144, days, cells_v, series).unwrap()
    }

    #[test]
    fn zero_traffic_switches_everything_off() {
        let net = network(4, &[], 1000.0, 0.0);
        let field = LoadField::new(&trace(|_, _| 0.0, 6, 1), &net, 100.0).unwrap();
        let tl = run_timeline(
            &field,
            &net,
            &TimelineConfig {
                num_slots: 20,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(tl.slots.iter().all(|s| s.switch.iter().all(|on| !on)));
    }

    #[test]
    fn oracle_matches_a_run_on_true_loads() {
        let net = network(4, &[], 200.0, 0.5);
        let tr = trace(|c, t| 20.0 + 10.0 * c as f64 + (t % 30) as f64, 6, 1);
        let field = LoadField::new(&tr, &net, 100.0).unwrap();
        let cfg = TimelineConfig {
            num_slots: 60,
            estimator: Estimator::Oracle,
            ..Default::default()
        };
        let tl = run_timeline(&field, &net, &cfg).unwrap();
        assert!(tl
            .slots
            .iter()
            .all(|s| (s.objective_value - s.grid_power).abs() < 1e-9));
        assert_eq!(run_timeline(&field, &net, &cfg).unwrap(), tl);
    }

    #[test]
    fn missing_history_downgrades_to_distance() {
        let net = network(3, &[], 200.0, 0.5);
        let tr = trace(|c, t| 10.0 + c as f64 + (t % 7) as f64, 5, 1);
        let field = LoadField::new(&tr, &net, 100.0).unwrap();
        let cfg = TimelineConfig {
            num_slots: 10,
            estimator: Estimator::Lstm(LstmEstimatorConfig::default()),
            ..Default::default()
        };
        let tl = run_timeline(&field, &net, &cfg).unwrap();
        assert!(tl.log.iter().any(|l| l.contains("distance")));
        assert!(tl.slots.iter().any(|s| s.downgraded));
    }

    #[test]
    fn sbs_without_trace_cell_is_rejected() {
        let net = network(4, &[], 1000.0, 0.0);
        assert!(LoadField::new(&trace(|_, _| 1.0, 2, 1), &net, 100.0).is_err());
    }
}
