//! Solar harvesting, battery storage and renewable-versus-grid accounting.
//!
//! Every quantity here is per-slot energy in kWh. Powers (watts) are converted
//! with [`demand_energy`] and [`to_avg_power`].

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Time-varying solar availability `alpha(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolarProfile {
    Constant {
        value: f64,
    },
    /// Half-sine over the peak window, maximal at its midpoint.
    Sinusoidal,
    /// Per-slot availability indexed by absolute slot, repeating.
    Trace {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolarConfig {
    /// Conversion efficiency `zeta`.
    pub efficiency: f64,
    /// Peak harvest rate `C_s` in kWh per hour.
    pub capacity_kwh_per_h: f64,
    /// First slot of day inside the peak window (inclusive).
    pub peak_start_slot: usize,
    /// Last slot of day inside the peak window (inclusive).
    pub peak_end_slot: usize,
    pub profile: SolarProfile,
    /// Battery capacity `S_max` in kWh.
    pub battery_kwh: f64,
    /// Stored energy at simulation start, in kWh.
    pub initial_kwh: f64,
}

impl Default for SolarConfig {
    fn default() -> Self {
        SolarConfig {
            efficiency: 0.95,
            capacity_kwh_per_h: 0.5,
            // 08:00 and 18:00 with ten-minute slots
            peak_start_slot: 48,
            peak_end_slot: 108,
            profile: SolarProfile::Sinusoidal,
            battery_kwh: 2.0,
            initial_kwh: 0.0,
        }
    }
}

impl SolarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config("solar.efficiency", "must lie in [0, 1]"));
        }
        if !(self.capacity_kwh_per_h >= 0.0 && self.capacity_kwh_per_h.is_finite()) {
            return Err(Error::config("solar.capacity_kwh_per_h", "must be >= 0"));
        }
        if self.peak_start_slot >= self.peak_end_slot {
            return Err(Error::config(
                "solar.peak_start_slot",
                "must precede peak_end_slot",
            ));
        }
        if !(self.battery_kwh >= 0.0 && self.battery_kwh.is_finite()) {
            return Err(Error::config("solar.battery_kwh", "must be >= 0"));
        }
        if !(0.0..=self.battery_kwh).contains(&self.initial_kwh) {
            return Err(Error::config(
                "solar.initial_kwh",
                "must lie in [0, battery_kwh]",
            ));
        }
        let in_unit = |a: f64| (0.0..=1.0).contains(&a);
        match &self.profile {
            SolarProfile::Constant { value } if !in_unit(*value) => Err(Error::config(
                "solar.profile",
                "availability must lie in [0, 1]",
            )),
            SolarProfile::Trace { values }
                if values.is_empty() || !values.iter().all(|a| in_unit(*a)) =>
            {
                Err(Error::config(
                    "solar.profile",
                    "trace must be non-empty with values in [0, 1]",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Availability `alpha(t)`; zero outside the peak window.
    pub fn availability(&self, slot: usize, slots_per_day: usize) -> f64 {
        let s = slot % slots_per_day;
        if s < self.peak_start_slot || s > self.peak_end_slot {
            return 0.0;
        }
        match &self.profile {
            SolarProfile::Constant { value } => *value,
            SolarProfile::Sinusoidal => {
                let width = (self.peak_end_slot - self.peak_start_slot + 1) as f64;
                let x = ((s - self.peak_start_slot) as f64 + 0.5) / width;
                (std::f64::consts::PI * x).sin()
            }
            SolarProfile::Trace { values } => values[slot % values.len()],
        }
    }

    pub fn initial_battery(&self) -> BatteryState {
        BatteryState {
            stored: self.initial_kwh,
            capacity: self.battery_kwh,
        }
    }
}

fn slot_hours(slot_minutes: f64) -> f64 {
    slot_minutes / 60.0
}

pub fn slots_per_day(slot_minutes: f64) -> usize {
    (1440.0 / slot_minutes).round() as usize
}

/// Solar energy harvested during `slot`, in kWh.
///
/// ```
/// use vhetnet::renewable::{harvest, SolarConfig, SolarProfile};
/// let cfg = SolarConfig { profile: SolarProfile::Constant { value: 1.0 }, ..Default::default() };
/// assert_eq!(harvest(60, &cfg, 10.0), 0.95 * 0.5 * (10.0 / 60.0));
/// assert_eq!(harvest(0, &cfg, 10.0), 0.0);
/// ```
pub fn harvest(slot: usize, cfg: &SolarConfig, slot_minutes: f64) -> f64 {
    let alpha = cfg.availability(slot, slots_per_day(slot_minutes));
    if alpha == 0.0 {
        return 0.0;
    }
    cfg.efficiency * cfg.capacity_kwh_per_h * slot_hours(slot_minutes) * alpha
}

/// Slot energy demand in kWh of a base station drawing `power_w` watts.
pub fn demand_energy(power_w: f64, slot_minutes: f64) -> f64 {
    power_w / 1000.0 * slot_hours(slot_minutes)
}

/// Average power in watts corresponding to `energy_kwh` over one slot.
pub fn to_avg_power(energy_kwh: f64, slot_minutes: f64) -> f64 {
    energy_kwh * 1000.0 / slot_hours(slot_minutes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    /// Stored energy `S` in kWh.
    pub stored: f64,
    /// Capacity `S_max` in kWh.
    pub capacity: f64,
}

impl BatteryState {
    pub fn new(stored: f64, capacity: f64) -> Result<Self> {
        if !(capacity >= 0.0 && capacity.is_finite()) || !(0.0..=capacity).contains(&stored) {
            return Err(Error::domain(format!(
                "battery state {stored} kWh outside [0, {capacity}]"
            )));
        }
        Ok(BatteryState { stored, capacity })
    }

    /// The zero-capacity battery of a non-solar SBS.
    pub fn none() -> Self {
        BatteryState {
            stored: 0.0,
            capacity: 0.0,
        }
    }

    /// State-of-charge ratio `S / S_max`.
    pub fn soc_ratio(&self) -> f64 {
        if self.capacity > 0.0 {
            self.stored / self.capacity
        } else {
            0.0
        }
    }
}

/// Energy flows of one base station during one slot, all in kWh.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub demand: f64,
    pub harvested: f64,
    pub renewable_used: f64,
    pub grid: f64,
}

/// Advances a battery by one slot.
///
/// Renewable energy is used first; any shortfall comes from the grid and any
/// surplus charges the battery up to its capacity.
pub fn step_storage(
    batt: BatteryState,
    demand: f64,
    harvested: f64,
) -> (EnergyBreakdown, BatteryState) {
    let available = batt.stored + harvested;
    let renewable_used = demand.min(available);
    let grid = demand - renewable_used;
    let stored = (available - renewable_used).min(batt.capacity).max(0.0);
    (
        EnergyBreakdown {
            demand,
            harvested,
            renewable_used,
            grid,
        },
        BatteryState {
            stored,
            capacity: batt.capacity,
        },
    )
}
