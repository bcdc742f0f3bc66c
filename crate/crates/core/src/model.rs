//! Network topology, the EARTH power model and load offloading between tiers.

use serde::{Deserialize, Serialize};

use crate::renewable::SolarConfig;
use crate::{Error, Result};

/// Side length of one traffic grid cell, in metres.
pub const GRID_CELL_METERS: f64 = 235.0;

/// Reclaims that would push a macro load below this are flagged as clamped.
const CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Sbs,
    Mbs,
    Haps,
}

/// Parameters of the affine EARTH power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    /// Operational circuit power while active, in watts.
    pub p_operational: f64,
    /// Power-amplifier slope, dimensionless.
    pub pa_efficiency: f64,
    /// Transmit power, in watts.
    pub p_transmit: f64,
    /// Sleep-mode power, in watts.
    pub p_sleep: f64,
}

impl PowerParams {
    pub const SBS_DEFAULT: PowerParams = PowerParams {
        p_operational: 100.0,
        pa_efficiency: 4.0,
        p_transmit: 20.0,
        p_sleep: 30.0,
    };
    pub const MBS_DEFAULT: PowerParams = PowerParams {
        p_operational: 130.0,
        pa_efficiency: 4.7,
        p_transmit: 20.0,
        p_sleep: 75.0,
    };
    pub const HAPS_DEFAULT: PowerParams = PowerParams {
        p_operational: 150.0,
        pa_efficiency: 4.7,
        p_transmit: 40.0,
        p_sleep: 75.0,
    };

    pub fn new(
        p_operational: f64,
        pa_efficiency: f64,
        p_transmit: f64,
        p_sleep: f64,
    ) -> Result<Self> {
        let params = PowerParams {
            p_operational,
            pa_efficiency,
            p_transmit,
            p_sleep,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_operational", self.p_operational),
            ("pa_efficiency", self.pa_efficiency),
            ("p_transmit", self.p_transmit),
            ("p_sleep", self.p_sleep),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.p_sleep >= self.p_operational {
            return Err(Error::domain(format!(
                "p_sleep ({}) must be below p_operational ({})",
                self.p_sleep, self.p_operational
            )));
        }
        Ok(())
    }

    /// Active-mode power `P_o + eta * load * P_t` without range checks.
    ///
    /// Macro-tier loads may exceed 1 while a candidate configuration is being
    /// evaluated, so this is the form used internally.
    #[inline]
    pub fn active_power(&self, load: f64) -> f64 {
        self.p_operational + self.pa_efficiency * load * self.p_transmit
    }
}

/// Power drawn by one base station.
///
/// ```
/// use vhetnet::model::{bs_power, PowerParams};
/// let p = PowerParams::SBS_DEFAULT;
/// assert_eq!(bs_power(&p, 0.5, true).unwrap(), 140.0);
/// assert_eq!(bs_power(&p, 0.0, false).unwrap(), 30.0);
/// ```
pub fn bs_power(params: &PowerParams, load: f64, is_on: bool) -> Result<f64> {
    if !(0.0..=1.0).contains(&load) {
        return Err(Error::domain(format!("load factor {load} outside [0, 1]")));
    }
    Ok(if is_on {
        params.active_power(load)
    } else {
        params.p_sleep
    })
}

/// Position on the traffic grid, in whole cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub row: i32,
    pub col: i32,
}

impl GridPos {
    pub fn new(row: i32, col: i32) -> Self {
        GridPos { row, col }
    }

    pub fn distance_m(&self, other: &GridPos) -> f64 {
        let dr = f64::from(self.row - other.row);
        let dc = f64::from(self.col - other.col);
        dr.hypot(dc) * GRID_CELL_METERS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: u32,
    pub tier: Tier,
    /// Capacity in traffic units.
    pub capacity: f64,
    pub power: PowerParams,
    pub position: GridPos,
    pub solar: Option<SolarConfig>,
    /// Background load factor carried independently of SBS offloading.
    /// Only meaningful for the macro tiers.
    #[serde(default)]
    pub base_load: f64,
}

/// One macro cell: exactly one MBS, one HAPS and any number of SBSs.
///
/// SBSs are indexed `0..sbs_count()` in the order they were listed; every
/// switch vector in the crate uses that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    stations: Vec<BaseStation>,
    sbs: Vec<usize>,
    mbs: usize,
    haps: usize,
}

impl Network {
    pub fn new(stations: Vec<BaseStation>) -> Result<Self> {
        let mut sbs = Vec::new();
        let mut mbs = Vec::new();
        let mut haps = Vec::new();
        let mut ids = std::collections::HashSet::new();
        for (i, bs) in stations.iter().enumerate() {
            if !ids.insert(bs.id) {
                return Err(Error::domain(format!(
                    "duplicate base station id {}",
                    bs.id
                )));
            }
            if !(bs.capacity.is_finite() && bs.capacity > 0.0) {
                return Err(Error::domain(format!(
                    "base station {}: capacity must be > 0",
                    bs.id
                )));
            }
            bs.power
                .validate()
                .map_err(|e| Error::domain(format!("base station {}: {e}", bs.id)))?;
            if !(bs.base_load.is_finite() && bs.base_load >= 0.0) {
                return Err(Error::domain(format!(
                    "base station {}: base_load must be >= 0",
                    bs.id
                )));
            }
            match bs.tier {
                Tier::Sbs => sbs.push(i),
                Tier::Mbs => mbs.push(i),
                Tier::Haps => haps.push(i),
            }
            if bs.tier != Tier::Sbs && bs.solar.is_some() {
                return Err(Error::domain(format!(
                    "base station {}: only SBSs may be solar",
                    bs.id
                )));
            }
            if let Some(solar) = &bs.solar {
                solar.validate()?;
            }
        }
        if mbs.len() != 1 || haps.len() != 1 {
            return Err(Error::domain(format!(
                "a network needs exactly one MBS and one HAPS, found {} and {}",
                mbs.len(),
                haps.len()
            )));
        }
        Ok(Network {
            stations,
            sbs,
            mbs: mbs[0],
            haps: haps[0],
        })
    }

    pub fn stations(&self) -> &[BaseStation] {
        &self.stations
    }

    pub fn sbs_count(&self) -> usize {
        self.sbs.len()
    }

    pub fn sbs(&self, j: usize) -> &BaseStation {
        &self.stations[self.sbs[j]]
    }

    pub fn sbs_iter(&self) -> impl Iterator<Item = &BaseStation> + '_ {
        self.sbs.iter().map(|&i| &self.stations[i])
    }

    pub fn mbs(&self) -> &BaseStation {
        &self.stations[self.mbs]
    }

    pub fn haps(&self) -> &BaseStation {
        &self.stations[self.haps]
    }

    /// Index of the SBS with the given id.
    pub fn sbs_index(&self, id: u32) -> Result<usize> {
        self.sbs
            .iter()
            .position(|&i| self.stations[i].id == id)
            .ok_or(Error::NotFound(id))
    }

    /// Relative capacity ratio `C_j / C_k` between SBS `j` and macro tier `k`.
    pub fn phi(&self, j: usize, tier: Tier) -> f64 {
        let target = match tier {
            Tier::Mbs => self.mbs(),
            Tier::Haps => self.haps(),
            Tier::Sbs => panic!("phi is defined towards the macro tiers only"),
        };
        self.sbs(j).capacity / target.capacity
    }

    pub fn is_solar(&self, j: usize) -> bool {
        self.sbs(j).solar.is_some()
    }

    pub fn solar_count(&self) -> usize {
        self.sbs_iter().filter(|b| b.solar.is_some()).count()
    }

    /// Same topology with every solar installation removed.
    pub fn without_solar(&self) -> Network {
        let mut out = self.clone();
        for bs in &mut out.stations {
            bs.solar = None;
        }
        out
    }
}

/// Switch vector and load factors of every tier for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub slot: usize,
    /// `true` means ON.
    pub switch: Vec<bool>,
    pub sbs_loads: Vec<f64>,
    pub macro_load: f64,
    pub haps_load: f64,
    /// Set when a reclaim had to clamp a macro load at zero.
    pub clamped: bool,
}

impl NetworkState {
    /// Every SBS ON with the given loads; macro tiers carry their base load.
    pub fn all_on(network: &Network, slot: usize, loads: &[f64]) -> Self {
        assert_eq!(loads.len(), network.sbs_count(), "one load per SBS");
        NetworkState {
            slot,
            switch: vec![true; network.sbs_count()],
            sbs_loads: loads.to_vec(),
            macro_load: network.mbs().base_load,
            haps_load: network.haps().base_load,
            clamped: false,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.macro_load <= 1.0 && self.haps_load <= 1.0
    }

    /// Total carried traffic `sum_i lambda_i * C_i` in raw traffic units.
    pub fn raw_traffic(&self, network: &Network) -> f64 {
        let sbs: f64 = self
            .sbs_loads
            .iter()
            .zip(network.sbs_iter())
            .map(|(l, b)| l * b.capacity)
            .sum();
        sbs + self.macro_load * network.mbs().capacity + self.haps_load * network.haps().capacity
    }

    pub fn off_count(&self) -> usize {
        self.switch.iter().filter(|on| !**on).count()
    }
}

/// How traffic of a sleeping SBS is shared between the MBS and the HAPS.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffloadPolicy {
    #[default]
    AllToHaps,
    AllToMbs,
    /// Offload in proportion to each tier's free raw capacity; reclaim in
    /// proportion to each tier's carried raw traffic.
    ProportionalToHeadroom,
}

/// Raw traffic `(to MBS, to HAPS)` for an offload of `tau` units.
fn offload_split(
    policy: OffloadPolicy,
    state: &NetworkState,
    network: &Network,
    tau: f64,
) -> (f64, f64) {
    match policy {
        OffloadPolicy::AllToHaps => (0.0, tau),
        OffloadPolicy::AllToMbs => (tau, 0.0),
        OffloadPolicy::ProportionalToHeadroom => {
            let cm = network.mbs().capacity;
            let ch = network.haps().capacity;
            let hm = (1.0 - state.macro_load).max(0.0) * cm;
            let hh = (1.0 - state.haps_load).max(0.0) * ch;
            let (wm, wh) = if hm + hh > 0.0 { (hm, hh) } else { (cm, ch) };
            let to_m = tau * wm / (wm + wh);
            (to_m, tau - to_m)
        }
    }
}

fn reclaim_split(
    policy: OffloadPolicy,
    state: &NetworkState,
    network: &Network,
    tau: f64,
) -> (f64, f64) {
    match policy {
        OffloadPolicy::AllToHaps => (0.0, tau),
        OffloadPolicy::AllToMbs => (tau, 0.0),
        OffloadPolicy::ProportionalToHeadroom => {
            let rm = state.macro_load * network.mbs().capacity;
            let rh = state.haps_load * network.haps().capacity;
            if rm + rh > 0.0 {
                let from_m = tau * rm / (rm + rh);
                (from_m, tau - from_m)
            } else {
                (0.0, tau)
            }
        }
    }
}

/// Switches SBS `j` off, moving its traffic to the macro tier. No checks.
pub(crate) fn offload_in_place(
    state: &mut NetworkState,
    j: usize,
    policy: OffloadPolicy,
    network: &Network,
) {
    let tau = state.sbs_loads[j] * network.sbs(j).capacity;
    if tau > 0.0 {
        let (to_m, to_h) = offload_split(policy, state, network, tau);
        state.macro_load += to_m / network.mbs().capacity;
        state.haps_load += to_h / network.haps().capacity;
    }
    state.sbs_loads[j] = 0.0;
    state.switch[j] = false;
}

/// Switches SBS `j` on with `next_load`, pulling its traffic back. No checks.
pub(crate) fn reclaim_in_place(
    state: &mut NetworkState,
    j: usize,
    next_load: f64,
    policy: OffloadPolicy,
    network: &Network,
) {
    let tau = next_load * network.sbs(j).capacity;
    if tau > 0.0 {
        let (from_m, from_h) = reclaim_split(policy, state, network, tau);
        let m = state.macro_load - from_m / network.mbs().capacity;
        let h = state.haps_load - from_h / network.haps().capacity;
        if m < -CLAMP_TOLERANCE || h < -CLAMP_TOLERANCE {
            state.clamped = true;
        }
        state.macro_load = m.max(0.0);
        state.haps_load = h.max(0.0);
    }
    state.sbs_loads[j] = next_load;
    state.switch[j] = true;
}

/// Switches an active SBS off and offloads its current traffic.
pub fn offload_to_macro(
    state: &NetworkState,
    sbs_id: u32,
    policy: OffloadPolicy,
    network: &Network,
) -> Result<NetworkState> {
    let j = network.sbs_index(sbs_id)?;
    if !state.switch[j] {
        return Err(Error::domain(format!("SBS {sbs_id} is already off")));
    }
    let mut next = state.clone();
    offload_in_place(&mut next, j, policy, network);
    Ok(next)
}

/// Switches a sleeping SBS on with `next_load`, reclaiming that traffic
/// from the macro tier. Macro loads are clamped at zero and
/// [`NetworkState::clamped`] is set if the reclaim exceeds what they carry.
pub fn reclaim_from_macro(
    state: &NetworkState,
    sbs_id: u32,
    next_load: f64,
    policy: OffloadPolicy,
    network: &Network,
) -> Result<NetworkState> {
    let j = network.sbs_index(sbs_id)?;
    if state.switch[j] {
        return Err(Error::domain(format!("SBS {sbs_id} is already on")));
    }
    if !(0.0..=1.0).contains(&next_load) {
        return Err(Error::domain(format!(
            "load factor {next_load} outside [0, 1]"
        )));
    }
    let mut next = state.clone();
    reclaim_in_place(&mut next, j, next_load, policy, network);
    Ok(next)
}

/// Total instantaneous network power; MBS and HAPS are always active.
pub fn total_power(network: &Network, state: &NetworkState) -> f64 {
    let mut p = network.haps().power.active_power(state.haps_load)
        + network.mbs().power.active_power(state.macro_load);
    for (j, bs) in network.sbs_iter().enumerate() {
        p += if state.switch[j] {
            bs.power.active_power(state.sbs_loads[j])
        } else {
            bs.power.p_sleep
        };
    }
    p
}

/// Shannon capacity `m * B * log2(1 + SINR)` in bit/s, SINR given in dB.
pub fn capacity_headroom(m: f64, bandwidth_hz: f64, sinr_db: f64) -> f64 {
    let sinr = 10f64.powf(sinr_db / 10.0);
    m * bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2
}
