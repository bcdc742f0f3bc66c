//! The `synth`, `estimate` and `switch` subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use vhetnet::config::{
    write_network_file, EstimatorKind, ExperimentConfig, NetworkSource, TrafficSource,
};
use vhetnet::estimators::distance::DistanceConfig;
use vhetnet::estimators::mlc::MlcConfig;
use vhetnet::experiment::{compare_estimators, renewable_sweep, run_with_baseline, EstimatorScore};
use vhetnet::metrics::{nes, write_metrics_csv, MetricRow};
use vhetnet::numfmt::{round_sig9, sig9};
use vhetnet::switching::{
    write_battery_csv, write_timeline_csv, Estimator, LoadField, LstmEstimatorConfig,
    ScenarioLabel, ScenarioPolicy, Timeline,
};
use vhetnet::traffic::write_cdr_csv;

use crate::svg::{line_chart, Series};
use crate::Failure;

pub const MAPE_SWEEP_HEADER: &str =
    "family,label,neighbors,exponent,levels,window,units,mape_percent,decision_change_percent,estimates,guarded,downgraded";
pub const COMPARISON_HEADER: &str = "estimator,label,mape_percent,decision_change_percent";
pub const SCENARIO_SWEEP_HEADER: &str =
    "solar_fraction,gamma,scenario,mean_grid_power_w,nes_percent";

pub(crate) fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn synth(
    cfg: &ExperimentConfig,
    seed: Option<u64>,
    out: &Path,
) -> Result<Vec<PathBuf>, Failure> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        if let TrafficSource::Synth(p) = &mut cfg.traffic {
            p.seed = s;
        }
        if let NetworkSource::Synth(p) = &mut cfg.network {
            p.seed = s;
        }
    }
    prepare_out(out)?;
    let trace = cfg.load_trace()?;
    let network = cfg.load_network(&trace)?;
    let trace_path = out.join("trace.csv");
    let net_path = out.join("network.toml");
    write_cdr_csv(&trace, &trace_path)?;
    write_network_file(&network, &net_path)?;
    Ok(vec![trace_path, net_path])
}

struct Entry {
    family: EstimatorKind,
    label: String,
    estimator: Estimator,
}

fn sweep_entries(cfg: &ExperimentConfig, families: &[EstimatorKind]) -> Vec<Entry> {
    let mut out = Vec::new();
    for &family in families {
        match family {
            EstimatorKind::Dist => {
                for &n in &cfg.sweep.distance_exponents {
                    for &k in &cfg.sweep.distance_neighbors {
                        out.push(Entry {
                            family,
                            label: format!("dist_N{k}_n{}", sig9(n)),
                            estimator: Estimator::Distance(DistanceConfig {
                                neighbor_count: k,
                                exponent: n,
                            }),
                        });
                    }
                }
            }
            EstimatorKind::Mlc => {
                for &levels in &cfg.sweep.mlc_levels {
                    out.push(Entry {
                        family,
                        label: format!("mlc_L{levels}"),
                        estimator: Estimator::Mlc(MlcConfig {
                            levels,
                            ..cfg.mlc.clone()
                        }),
                    });
                }
            }
            EstimatorKind::Lstm => {
                for &w in &cfg.sweep.lstm_windows {
                    for &u in &cfg.sweep.lstm_units {
                        let mut l: LstmEstimatorConfig = cfg.lstm.clone();
                        l.lstm.window = w;
                        l.lstm.units = u;
                        out.push(Entry {
                            family,
                            label: format!("lstm_w{w}_u{u}"),
                            estimator: Estimator::Lstm(l),
                        });
                    }
                }
            }
            EstimatorKind::Oracle => out.push(Entry {
                family,
                label: "oracle".into(),
                estimator: Estimator::Oracle,
            }),
        }
    }
    // the configured setting of each family, if the grids miss it
    for &family in families {
        let est = cfg.estimator_for(family);
        if !out.iter().any(|e| e.estimator == est) {
            out.push(Entry {
                family,
                label: format!("{}_configured", est.name()),
                estimator: est,
            });
        }
    }
    out
}

fn family_name(f: EstimatorKind) -> &'static str {
    match f {
        EstimatorKind::Dist => "dist",
        EstimatorKind::Mlc => "mlc",
        EstimatorKind::Lstm => "lstm",
        EstimatorKind::Oracle => "oracle",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sweep_row(e: &Entry, s: &EstimatorScore) -> String {
    let (mut nb, mut ex, mut lv, mut win, mut un) = (None, None, None, None, None);
    match &e.estimator {
        Estimator::Distance(d) => {
            nb = Some(d.neighbor_count.to_string());
            ex = Some(sig9(d.exponent));
        }
        Estimator::Mlc(m) => lv = Some(m.levels.to_string()),
        Estimator::Lstm(l) => {
            win = Some(l.lstm.window.to_string());
            un = Some(l.lstm.units.to_string());
        }
        Estimator::Oracle => {}
    }
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        family_name(e.family),
        e.label,
        opt(nb),
        opt(ex),
        opt(lv),
        opt(win),
        opt(un),
        sig9(s.mape_percent),
        sig9(s.decision_change_percent),
        s.estimates,
        s.guarded,
        s.downgraded
    )
}

pub fn estimate(
    cfg: &ExperimentConfig,
    family: Option<EstimatorKind>,
    out: &Path,
    log: &mut dyn Write,
) -> Result<Vec<PathBuf>, Failure> {
    prepare_out(out)?;
    let trace = cfg.load_trace()?;
    let network = cfg.load_network(&trace)?;
    let field = LoadField::new(&trace, &network, cfg.default_capacity())?;
    let families = match family {
        Some(f) => vec![f],
        None => vec![EstimatorKind::Dist, EstimatorKind::Mlc, EstimatorKind::Lstm],
    };
    let entries = sweep_entries(cfg, &families);
    let labelled: Vec<(String, Estimator)> = entries
        .iter()
        .map(|e| (e.label.clone(), e.estimator.clone()))
        .collect();
    let all_cells: Vec<usize> = (0..field.cells.len()).collect();
    let scores = compare_estimators(
        &field,
        &network,
        &labelled,
        &cfg.comparison_config(),
        &all_cells,
    )?;
    for s in scores.iter().filter(|s| s.downgraded) {
        let _ = writeln!(
            log,
            "{}: too little history, fell back to the distance estimator",
            s.label
        );
    }

    let mut sweep = format!("{MAPE_SWEEP_HEADER}\n");
    for (e, s) in entries.iter().zip(&scores) {
        sweep += &sweep_row(e, s);
        sweep.push('\n');
    }
    let sweep_path = out.join("mape_sweep.csv");
    write_text(&sweep_path, &sweep)?;

    let mut cmp = format!("{COMPARISON_HEADER}\n");
    for &f in &families {
        let est = cfg.estimator_for(f);
        if let Some((e, s)) = entries
            .iter()
            .zip(&scores)
            .find(|(e, _)| e.estimator == est)
        {
            cmp += &format!(
                "{},{},{},{}\n",
                family_name(f),
                e.label,
                sig9(s.mape_percent),
                sig9(s.decision_change_percent)
            );
        }
    }
    let cmp_path = out.join("comparison.csv");
    write_text(&cmp_path, &cmp)?;

    let mut written = vec![sweep_path, cmp_path];
    if let Some(svg) = mape_chart(&entries, &scores) {
        let p = out.join("mape_sweep.svg");
        write_text(&p, &svg)?;
        written.push(p);
    }
    Ok(written)
}

/// Distance MAPE against N per exponent, else LSTM MAPE against window per
/// unit count.
fn mape_chart(entries: &[Entry], scores: &[EstimatorScore]) -> Option<String> {
    let mut series: Vec<Series> = Vec::new();
    let mut push =
        |label: String, x: f64, y: f64| match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((x, y)),
            None => series.push(Series {
                label,
                points: vec![(x, y)],
            }),
        };
    let dist = entries
        .iter()
        .any(|e| matches!(e.estimator, Estimator::Distance(_)));
    for (e, s) in entries.iter().zip(scores) {
        if e.label.ends_with("_configured") {
            continue;
        }
        match &e.estimator {
            Estimator::Distance(d) => push(
                format!("n = {}", sig9(d.exponent)),
                d.neighbor_count as f64,
                s.mape_percent,
            ),
            Estimator::Lstm(l) if !dist => push(
                format!("{} units", l.lstm.units),
                l.lstm.window as f64,
                s.mape_percent,
            ),
            _ => {}
        }
    }
    if series.is_empty() {
        return None;
    }
    let (title, x) = if dist {
        ("Distance estimator MAPE", "neighbouring cells N")
    } else {
        ("LSTM MAPE", "window size")
    };
    Some(line_chart(title, x, "MAPE (%)", &series))
}

fn rounded_grid(t: &Timeline) -> Vec<f64> {
    t.grid_series().into_iter().map(round_sig9).collect()
}

fn slot_axis(t: &Timeline) -> impl Iterator<Item = f64> + '_ {
    t.slots.iter().map(|s| s.slot as f64)
}

fn scenario_name(gamma: f64) -> Result<&'static str, Failure> {
    Ok(match ScenarioPolicy::new(gamma)?.label() {
        ScenarioLabel::Scenario1 => "scenario1",
        ScenarioLabel::Scenario2 => "scenario2",
        ScenarioLabel::Scenario3 => "scenario3",
    })
}

pub fn switch(
    cfg: &ExperimentConfig,
    sweep: bool,
    out: &Path,
    log: &mut dyn Write,
) -> Result<Vec<PathBuf>, Failure> {
    prepare_out(out)?;
    let trace = cfg.load_trace()?;
    let network = cfg.load_network(&trace)?;
    let field = LoadField::new(&trace, &network, cfg.default_capacity())?;
    let tcfg = cfg.timeline_config();
    let run = run_with_baseline(&field, &network, &tcfg)?;
    for line in &run.timeline.log {
        let _ = writeln!(log, "{line}");
    }

    let paths = [
        out.join("timeline.csv"),
        out.join("baseline_timeline.csv"),
        out.join("battery.csv"),
        out.join("metrics.csv"),
        out.join("power.svg"),
    ];
    write_timeline_csv(&run.timeline, &paths[0])?;
    write_timeline_csv(&run.baseline, &paths[1])?;
    write_battery_csv(&run.timeline, &paths[2])?;

    // NES from the values as written, so the timelines reproduce it exactly
    let grid = rounded_grid(&run.timeline);
    let base = rounded_grid(&run.baseline);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let slots = run.timeline.slots.len() as f64;
    let mut rows = vec![
        MetricRow::new("nes_percent", "network", nes(&base, &grid)?),
        MetricRow::new("mean_grid_power_w", "renewable", mean(&grid)),
        MetricRow::new("mean_grid_power_w", "baseline", mean(&base)),
        MetricRow::new(
            "mean_total_power_w",
            "renewable",
            run.timeline
                .slots
                .iter()
                .map(|s| s.total_power)
                .sum::<f64>()
                / slots,
        ),
        MetricRow::new(
            "mean_sleeping_sbs",
            "renewable",
            run.timeline
                .slots
                .iter()
                .map(|s| s.switch.iter().filter(|on| !**on).count() as f64)
                .sum::<f64>()
                / slots,
        ),
        MetricRow::new(
            "infeasible_slots",
            "renewable",
            run.timeline.slots.iter().filter(|s| !s.feasible).count() as f64,
        ),
        MetricRow::new("gamma", "network", cfg.gamma),
        MetricRow::new("solar_sbs", "network", network.solar_count() as f64),
    ];
    for (j, bs) in network.sbs_iter().enumerate() {
        let off = run.timeline.slots.iter().filter(|s| !s.switch[j]).count() as f64;
        rows.push(MetricRow::new(
            "sleep_share",
            format!("sbs_{}", bs.id),
            off / slots,
        ));
    }
    write_metrics_csv(&rows, &paths[3])?;

    let chart = line_chart(
        "Grid power",
        "slot",
        "grid power (W)",
        &[
            Series {
                label: "renewable".into(),
                points: slot_axis(&run.timeline).zip(grid.iter().copied()).collect(),
            },
            Series {
                label: "no renewable".into(),
                points: slot_axis(&run.baseline).zip(base.iter().copied()).collect(),
            },
        ],
    );
    write_text(&paths[4], &chart)?;
    let mut written = paths.to_vec();

    if sweep {
        let NetworkSource::Synth(params) = &cfg.network else {
            return Err(Failure::usage(
                "--sweep",
                "the solar-fraction sweep rebuilds the network and needs a synthetic network",
            ));
        };
        let points = renewable_sweep(
            &trace,
            params,
            &cfg.sweep.solar_fractions,
            &cfg.sweep.gammas,
            &tcfg,
        )?;
        let mut csv = format!("{SCENARIO_SWEEP_HEADER}\n");
        for p in &points {
            csv += &format!(
                "{},{},{},{},{}\n",
                sig9(p.solar_fraction),
                sig9(p.gamma),
                scenario_name(p.gamma)?,
                sig9(p.mean_grid_power),
                sig9(p.nes_percent)
            );
        }
        let p = out.join("scenario_sweep.csv");
        write_text(&p, &csv)?;
        written.push(p);

        let mut series: Vec<Series> = Vec::new();
        for &g in &cfg.sweep.gammas {
            series.push(Series {
                label: format!("gamma = {}", sig9(g)),
                points: points
                    .iter()
                    .filter(|p| p.gamma == g)
                    .map(|p| (p.solar_fraction, p.mean_grid_power))
                    .collect(),
            });
        }
        let p = out.join("scenario_sweep.svg");
        write_text(
            &p,
            &line_chart(
                "Grid power by solar share",
                "solar fraction",
                "mean grid power (W)",
                &series,
            ),
        )?;
        written.push(p);
    }
    Ok(written)
}
