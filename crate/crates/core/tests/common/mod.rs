#![allow(dead_code)]

use vhetnet::model::{BaseStation, GridPos, Network, PowerParams, Tier};
use vhetnet::renewable::SolarConfig;

pub fn station(
    id: u32,
    tier: Tier,
    capacity: f64,
    power: PowerParams,
    solar: Option<SolarConfig>,
) -> BaseStation {
    BaseStation {
        id,
        tier,
        capacity,
        power,
        position: GridPos::new(id as i32 / 10, id as i32 % 10),
        solar,
        base_load: 0.0,
    }
}

/// One MBS, one HAPS and an SBS per entry of `solar`, SBS ids `0..n`.
pub fn network(
    sbs_capacity: f64,
    macro_capacity: f64,
    macro_base: f64,
    haps_base: f64,
    solar: &[bool],
) -> Network {
    let mut mbs = station(
        100,
        Tier::Mbs,
        macro_capacity,
        PowerParams::MBS_DEFAULT,
        None,
    );
    mbs.base_load = macro_base;
    let mut haps = station(
        101,
        Tier::Haps,
        macro_capacity,
        PowerParams::HAPS_DEFAULT,
        None,
    );
    haps.base_load = haps_base;
    let mut stations = vec![mbs, haps];
    for (j, &s) in solar.iter().enumerate() {
        stations.push(station(
            j as u32,
            Tier::Sbs,
            sbs_capacity,
            PowerParams::SBS_DEFAULT,
            s.then(SolarConfig::default),
        ));
    }
    Network::new(stations).unwrap()
}
