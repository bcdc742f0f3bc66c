use proptest::prelude::*;
use vhetnet::traffic::{
    load_cdr_csv, make_windows, normalize_loads, synth_traffic, write_cdr_csv, ActivityWeights,
    SynthParams, TrafficTrace,
};

fn small_trace(seed: u64, cells: usize) -> TrafficTrace {
    synth_traffic(&SynthParams {
        num_cells: cells,
        days: 1,
        slots_per_day: 24,
        grid_width: 4,
        seed,
        ..Default::default()
    })
}

#[test]
fn cdr_round_trip_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let trace = small_trace(seed, 12);
        let path = dir.path().join(format!("trace{seed}.csv"));
        write_cdr_csv(&trace, &path).unwrap();
        let back = load_cdr_csv(&path, ActivityWeights::default(), 4, 24).unwrap();
        assert_eq!(back, trace);
        let again = dir.path().join("again.csv");
        write_cdr_csv(&back, &again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }
}

proptest! {
    #[test]
    fn normalized_loads_stay_in_unit_interval(
        seed in 0u64..1000,
        capacity in 1.0..200.0f64,
    ) {
        let trace = small_trace(seed, 9);
        let (loads, clipped) = normalize_loads(&trace, &[capacity; 9]).unwrap();
        prop_assert!(loads.iter().flatten().all(|l| (0.0..=1.0).contains(l)));
        let over = trace.series.iter().flatten().filter(|t| **t > capacity).count();
        prop_assert_eq!(clipped, over);
    }

    #[test]
    fn windows_keep_temporal_adjacency(
        series in prop::collection::vec(0.0..1.0f64, 2..80),
        window in 1usize..12,
        cell in any::<u32>(),
    ) {
        prop_assume!(series.len() > window);
        let ws = make_windows(&series, window, cell).unwrap();
        prop_assert_eq!(ws.len(), series.len() - window);
        for (k, ((x, &y), &(id, t))) in ws.inputs.iter().zip(&ws.targets).zip(&ws.provenance).enumerate() {
            prop_assert_eq!(id, cell);
            prop_assert_eq!(t, k + window);
            prop_assert_eq!(x.as_slice(), &series[t - window..t]);
            prop_assert_eq!(y, series[t]);
        }
    }
}
