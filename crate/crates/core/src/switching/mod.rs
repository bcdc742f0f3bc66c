//! Exhaustive-search ON/OFF optimisation under macro-tier capacity limits.

mod timeline;

pub use timeline::{
    run_timeline, write_battery_csv, write_timeline_csv, BatteryRecord, Estimator, LoadField,
    LstmEstimatorConfig, PreparedEstimator, SlotResult, Timeline, TimelineConfig, BATTERY_HEADER,
    TIMELINE_HEADER,
};

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{offload_in_place, reclaim_in_place, Network, NetworkState, OffloadPolicy};
use crate::renewable::{
    demand_energy, harvest, step_storage, to_avg_power, BatteryState, EnergyBreakdown,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioLabel {
    /// Every SBS is searchable (`gamma = 1`).
    Scenario1,
    /// Every solar SBS is kept ON (`gamma = 0`).
    Scenario2,
    /// Solar SBSs are searchable while their charge ratio is at most `gamma`.
    Scenario3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPolicy {
    gamma: f64,
}

impl ScenarioPolicy {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config("gamma", format!("{gamma} outside [0, 1]")));
        }
        Ok(ScenarioPolicy { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn label(&self) -> ScenarioLabel {
        if self.gamma == 1.0 {
            ScenarioLabel::Scenario1
        } else if self.gamma == 0.0 {
            ScenarioLabel::Scenario2
        } else {
            ScenarioLabel::Scenario3
        }
    }
}

/// Which SBSs the exhaustive search may switch off. Indices are SBS indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePartition {
    pub searchable: Vec<usize>,
    pub forced_on: Vec<usize>,
}

impl CandidatePartition {
    pub fn all_searchable(network: &Network) -> Self {
        CandidatePartition {
            searchable: (0..network.sbs_count()).collect(),
            forced_on: Vec::new(),
        }
    }

    pub fn solar_forced_on(network: &Network) -> Self {
        let (forced_on, searchable) = (0..network.sbs_count()).partition(|&j| network.is_solar(j));
        CandidatePartition {
            searchable,
            forced_on,
        }
    }
}

/// Splits SBSs by battery charge ratio: a solar SBS is searchable iff its
/// ratio is at most `gamma`, except that `gamma = 0` keeps every solar SBS ON.
pub fn threshold_partition(
    network: &Network,
    batteries: &[BatteryState],
    gamma: f64,
) -> Result<CandidatePartition> {
    ScenarioPolicy::new(gamma)?;
    if batteries.len() != network.sbs_count() {
        return Err(Error::Size("one battery state per SBS required".into()));
    }
    let mut part = CandidatePartition {
        searchable: Vec::new(),
        forced_on: Vec::new(),
    };
    for (j, b) in batteries.iter().enumerate() {
        if !network.is_solar(j) {
            part.searchable.push(j);
            continue;
        }
        if b.capacity <= 0.0 {
            return Err(Error::domain(format!(
                "solar SBS {} has no battery capacity",
                network.sbs(j).id
            )));
        }
        if gamma > 0.0 && b.soc_ratio() <= gamma {
            part.searchable.push(j);
        } else {
            part.forced_on.push(j);
        }
    }
    Ok(part)
}

/// How candidate partitions are formed each slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "gamma")]
pub enum PartitionRule {
    Threshold(f64),
    AllSearchable,
    SolarForcedOn,
}

impl Default for PartitionRule {
    fn default() -> Self {
        PartitionRule::Threshold(1.0)
    }
}

impl PartitionRule {
    pub fn partition(
        &self,
        network: &Network,
        batteries: &[BatteryState],
    ) -> Result<CandidatePartition> {
        match *self {
            PartitionRule::Threshold(g) => threshold_partition(network, batteries, g),
            PartitionRule::AllSearchable => Ok(CandidatePartition::all_searchable(network)),
            PartitionRule::SolarForcedOn => Ok(CandidatePartition::solar_forced_on(network)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Grid power after renewable offsets.
    #[default]
    GridPower,
    /// Total demand power, ignoring renewables when choosing a configuration.
    /// Accounting stays renewable-aware.
    TotalPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchConfig {
    pub offload: OffloadPolicy,
    pub objective: Objective,
    /// Largest number of searchable SBSs accepted.
    pub search_cap: usize,
    pub slot_minutes: f64,
    /// Searches with at least this many searchable SBSs run in parallel.
    pub parallel_from: usize,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            offload: OffloadPolicy::AllToHaps,
            objective: Objective::GridPower,
            search_cap: 20,
            slot_minutes: 10.0,
            parallel_from: 12,
        }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_minutes > 0.0 && self.slot_minutes.is_finite()) {
            return Err(Error::config("switch.slot_minutes", "must be > 0"));
        }
        if self.search_cap > 30 {
            return Err(Error::config("switch.search_cap", "must be <= 30"));
        }
        Ok(())
    }
}

/// Inputs shared by every candidate of one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub slot: usize,
    /// Switch vector committed in the previous slot.
    pub prev_switch: &'a [bool],
    /// Load factor per SBS: measured for SBSs that were ON, estimated for
    /// sleepers.
    pub loads: &'a [f64],
    pub batteries: &'a [BatteryState],
}

/// State at the start of a slot: the traffic of every SBS that slept in the
/// previous slot is carried by the macro tier.
pub fn pre_state(network: &Network, ctx: &SlotContext, policy: OffloadPolicy) -> NetworkState {
    let mut s = NetworkState::all_on(network, ctx.slot, ctx.loads);
    for (j, &on) in ctx.prev_switch.iter().enumerate() {
        if !on {
            offload_in_place(&mut s, j, policy, network);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigEval {
    pub grid_power: f64,
    pub total_power: f64,
    pub feasible: bool,
    pub state: NetworkState,
    /// Per SBS; non-solar SBSs draw everything from the grid.
    pub breakdowns: Vec<EnergyBreakdown>,
    pub next_batteries: Vec<BatteryState>,
    pub macro_power: f64,
    pub haps_power: f64,
}

impl ConfigEval {
    pub fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::GridPower => self.grid_power,
            Objective::TotalPower => self.total_power,
        }
    }
}

fn check_context(network: &Network, delta: &[bool], ctx: &SlotContext) -> Result<()> {
    let n = network.sbs_count();
    if delta.len() != n
        || ctx.prev_switch.len() != n
        || ctx.loads.len() != n
        || ctx.batteries.len() != n
    {
        return Err(Error::Size(format!(
            "switch vectors, loads and batteries need {n} entries"
        )));
    }
    if let Some(l) = ctx.loads.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::domain(format!("load factor {l} outside [0, 1]")));
    }
    Ok(())
}

/// Applies the transitions from `ctx.prev_switch` to `delta` and accounts
/// power, renewable use and feasibility. Batteries are stepped on a copy.
pub fn evaluate_config(
    network: &Network,
    delta: &[bool],
    ctx: &SlotContext,
    cfg: &SwitchConfig,
) -> Result<ConfigEval> {
    check_context(network, delta, ctx)?;
    Ok(evaluate_unchecked(network, delta, ctx, cfg))
}

fn evaluate_unchecked(
    network: &Network,
    delta: &[bool],
    ctx: &SlotContext,
    cfg: &SwitchConfig,
) -> ConfigEval {
    let policy = cfg.offload;
    let mut state = pre_state(network, ctx, policy);
    for (j, &on) in delta.iter().enumerate() {
        match (ctx.prev_switch[j], on) {
            (true, false) => offload_in_place(&mut state, j, policy, network),
            (false, true) => reclaim_in_place(&mut state, j, ctx.loads[j], policy, network),
            _ => {}
        }
    }
    let macro_power = network.mbs().power.active_power(state.macro_load);
    let haps_power = network.haps().power.active_power(state.haps_load);
    let mut total = macro_power + haps_power;
    let mut grid = total;
    let mut breakdowns = Vec::with_capacity(delta.len());
    let mut next_batteries = Vec::with_capacity(delta.len());
    for (j, bs) in network.sbs_iter().enumerate() {
        let p = if delta[j] {
            bs.power.active_power(ctx.loads[j])
        } else {
            bs.power.p_sleep
        };
        total += p;
        let demand = demand_energy(p, cfg.slot_minutes);
        match &bs.solar {
            Some(solar) => {
                let harvested = harvest(ctx.slot, solar, cfg.slot_minutes);
                let (b, next) = step_storage(ctx.batteries[j], demand, harvested);
                grid += to_avg_power(b.grid, cfg.slot_minutes);
                breakdowns.push(b);
                next_batteries.push(next);
            }
            None => {
                grid += p;
                breakdowns.push(EnergyBreakdown {
                    demand,
                    harvested: 0.0,
                    renewable_used: 0.0,
                    grid: demand,
                });
                next_batteries.push(ctx.batteries[j]);
            }
        }
    }
    ConfigEval {
        grid_power: grid,
        total_power: total,
        feasible: state.is_feasible(),
        state,
        breakdowns,
        next_batteries,
        macro_power,
        haps_power,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsResult {
    pub switch: Vec<bool>,
    pub eval: ConfigEval,
    /// False when no configuration was feasible and all-ON was returned.
    pub feasible: bool,
    pub configs_evaluated: u64,
}

/// Orders candidates: lower objective, then more SBSs OFF, then the
/// lexicographically smaller vector (OFF before ON).
fn better(a: (f64, &[bool]), b: (f64, &[bool])) -> Ordering {
    let off = |v: &[bool]| v.iter().filter(|on| !**on).count();
    a.0.total_cmp(&b.0)
        .then(off(b.1).cmp(&off(a.1)))
        .then_with(|| a.1.cmp(b.1))
}

fn vector_for(mask: u64, partition: &CandidatePartition, n: usize) -> Vec<bool> {
    let mut delta = vec![true; n];
    for (bit, &j) in partition.searchable.iter().enumerate() {
        delta[j] = mask >> bit & 1 == 1;
    }
    delta
}

/// Enumerates every ON/OFF vector over `partition.searchable` (forced-on SBSs
/// pinned ON) and returns the best feasible one.
pub fn es_optimize(
    network: &Network,
    partition: &CandidatePartition,
    ctx: &SlotContext,
    cfg: &SwitchConfig,
) -> Result<EsResult> {
    cfg.validate()?;
    let n = network.sbs_count();
    let k = partition.searchable.len();
    if k > cfg.search_cap {
        return Err(Error::SearchCap {
            searchable: k,
            cap: cfg.search_cap,
        });
    }
    let mut covered = vec![0u8; n];
    for &j in partition.searchable.iter().chain(&partition.forced_on) {
        if j >= n {
            return Err(Error::Size(format!("SBS index {j} out of range")));
        }
        covered[j] += 1;
    }
    if covered.iter().any(|&c| c != 1) {
        return Err(Error::domain("partition must cover every SBS exactly once"));
    }
    check_context(network, &vec![true; n], ctx)?;

    let total = 1u64 << k;
    let objective = cfg.objective;
    let eval_mask = |mask: u64| -> Option<(Vec<bool>, ConfigEval)> {
        let delta = vector_for(mask, partition, n);
        let e = evaluate_unchecked(network, &delta, ctx, cfg);
        e.feasible.then_some((delta, e))
    };
    let pick = |a: Option<(Vec<bool>, ConfigEval)>, b: Option<(Vec<bool>, ConfigEval)>| match (a, b)
    {
        (Some(a), Some(b)) => {
            if better(
                (a.1.objective(objective), &a.0),
                (b.1.objective(objective), &b.0),
            ) == Ordering::Greater
            {
                Some(b)
            } else {
                Some(a)
            }
        }
        (a, None) => a,
        (None, b) => b,
    };
    let best = if k >= cfg.parallel_from {
        (0..total)
            .into_par_iter()
            .map(eval_mask)
            .reduce(|| None, pick)
    } else {
        (0..total).map(eval_mask).fold(None, pick)
    };
    Ok(match best {
        Some((switch, eval)) => EsResult {
            switch,
            eval,
            feasible: true,
            configs_evaluated: total,
        },
        None => {
            let switch = vec![true; n];
            let eval = evaluate_unchecked(network, &switch, ctx, cfg);
            EsResult {
                switch,
                eval,
                feasible: false,
                configs_evaluated: total,
            }
        }
    })
}

/// Switch vector as a 0/1 string in SBS index order.
pub fn delta_bits(switch: &[bool]) -> String {
    switch
        .iter()
        .map(|&on| if on { '1' } else { '0' })
        .collect()
}
