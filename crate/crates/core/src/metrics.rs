//! Estimation and switching metrics, and the misestimation error analysis.

use std::io::Write;
use std::path::Path;

use crate::model::{BaseStation, GridPos, Network, PowerParams, Tier};
use crate::numfmt::sig9;
use crate::renewable::BatteryState;
use crate::switching::{
    es_optimize, evaluate_config, CandidatePartition, SlotContext, SwitchConfig,
};
use crate::traffic::create;
use crate::{Error, Result};

pub const DEFAULT_MAPE_EPSILON: f64 = 1e-6;
pub const METRICS_HEADER: &str = "metric,scope,value";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    pub percent: f64,
    /// Terms whose actual value was below `epsilon` in magnitude.
    pub guarded: usize,
}

/// Mean absolute percentage error, with `epsilon` as the smallest
/// denominator.
///
/// ```
/// use vhetnet::metrics::mape;
/// let m = mape(&[0.5], &[0.45], 1e-6).unwrap();
/// assert!((m.percent - 10.0).abs() < 1e-9);
/// ```
pub fn mape(actual: &[f64], predicted: &[f64], epsilon: f64) -> Result<Mape> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::domain(
            "MAPE needs two non-empty series of equal length",
        ));
    }
    let mut guarded = 0;
    let mut sum = 0.0;
    for (a, p) in actual.iter().zip(predicted) {
        let denom = if a.abs() < epsilon {
            guarded += 1;
            epsilon
        } else {
            a.abs()
        };
        sum += (a - p).abs() / denom;
    }
    Ok(Mape {
        percent: 100.0 * sum / actual.len() as f64,
        guarded,
    })
}

/// Percentage of ON/OFF entries that differ between two sequences of switch
/// vectors.
pub fn decision_change_rate(reference: &[Vec<bool>], candidate: &[Vec<bool>]) -> Result<f64> {
    if reference.is_empty()
        || reference.len() != candidate.len()
        || reference
            .iter()
            .zip(candidate)
            .any(|(a, b)| a.len() != b.len() || a.is_empty())
    {
        return Err(Error::domain("switch vector sequences differ in shape"));
    }
    let total: usize = reference.iter().map(|v| v.len()).sum();
    let differing: usize = reference
        .iter()
        .zip(candidate)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
        .sum();
    Ok(100.0 * differing as f64 / total as f64)
}

/// Network energy saving of `achieved` relative to `baseline`, in percent.
pub fn nes(baseline: &[f64], achieved: &[f64]) -> Result<f64> {
    if baseline.is_empty() || baseline.len() != achieved.len() {
        return Err(Error::domain(
            "NES needs two non-empty series of equal length",
        ));
    }
    let mb = baseline.iter().sum::<f64>() / baseline.len() as f64;
    let ma = achieved.iter().sum::<f64>() / achieved.len() as f64;
    if mb <= 0.0 {
        return Err(Error::domain("baseline mean power must be > 0"));
    }
    Ok(100.0 * (mb - ma) / mb)
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("probability {p} outside [0, 1]")))
    }
}

/// Expected total power `P_est * p_err + P_T * (1 - p_err)`.
pub fn expected_power(p_est: f64, p_true: f64, p_err: f64) -> Result<f64> {
    check_probability(p_err)?;
    Ok(p_est * p_err + p_true * (1.0 - p_err))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorDirection {
    /// Overestimate wakes a sleeping SBS.
    OffToOn,
    /// Underestimate keeps an SBS asleep.
    OnToOff,
}

/// Expected power error of a wrong transition.
///
/// For [`ErrorDirection::OffToOn`] this is
/// `[(eta_H phi lambda P_tH + P_s) - (P_o + eta lambda_hat P_t)] * p_err`;
/// [`ErrorDirection::OnToOff`] swaps the two terms. The sign is kept.
pub fn expected_error_power(
    direction: ErrorDirection,
    haps: &PowerParams,
    sbs: &PowerParams,
    phi: f64,
    lambda: f64,
    lambda_hat: f64,
    p_err: f64,
) -> Result<f64> {
    check_probability(p_err)?;
    let asleep = haps.pa_efficiency * phi * lambda * haps.p_transmit + sbs.p_sleep;
    let awake = sbs.p_operational + sbs.pa_efficiency * lambda_hat * sbs.p_transmit;
    let bracket = match direction {
        ErrorDirection::OffToOn => asleep - awake,
        ErrorDirection::OnToOff => awake - asleep,
    };
    Ok(bracket * p_err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PErr {
    /// `Pr{lambda_hat > th | lambda <= th}`; `None` when no trial has `lambda <= th`.
    pub off_to_on: Option<f64>,
    /// `Pr{lambda_hat < th | lambda >= th}`; `None` when no trial has `lambda >= th`.
    pub on_to_off: Option<f64>,
}

/// Empirical conditional error probabilities from `(lambda, lambda_hat)` trials.
pub fn empirical_p_err(trials: &[(f64, f64)], threshold: f64) -> PErr {
    let ratio = |hits: usize, n: usize| (n > 0).then(|| hits as f64 / n as f64);
    let low: Vec<_> = trials.iter().filter(|(l, _)| *l <= threshold).collect();
    let high: Vec<_> = trials.iter().filter(|(l, _)| *l >= threshold).collect();
    PErr {
        off_to_on: ratio(
            low.iter().filter(|(_, e)| *e > threshold).count(),
            low.len(),
        ),
        on_to_off: ratio(
            high.iter().filter(|(_, e)| *e < threshold).count(),
            high.len(),
        ),
    }
}

/// Outcome of the constructed misestimation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MisestimationDemo {
    pub network: Network,
    pub true_load: f64,
    pub estimate: f64,
    /// Optimal vector with perfect knowledge.
    pub true_switch: Vec<bool>,
    /// Optimal vector given the estimate.
    pub estimated_switch: Vec<bool>,
    /// Grid power of `true_switch` under the true load.
    pub optimal_power: f64,
    /// Grid power of `estimated_switch` under the true load.
    pub realized_power: f64,
}

impl MisestimationDemo {
    pub fn power_increase(&self) -> f64 {
        self.realized_power - self.optimal_power
    }
}

/// One sleeping SBS next to a nearly full HAPS. With its true load of 0.02
/// it can stay asleep; an estimate of 0.9 does not fit the remaining HAPS
/// capacity, so the search wakes it and realised power rises.
pub fn misestimation_demo() -> Result<MisestimationDemo> {
    let station = |id, tier, capacity, power, base_load| BaseStation {
        id,
        tier,
        capacity,
        power,
        position: GridPos::new(0, 0),
        solar: None,
        base_load,
    };
    let network = Network::new(vec![
        station(1, Tier::Sbs, 100.0, PowerParams::SBS_DEFAULT, 0.0),
        station(2, Tier::Mbs, 100.0, PowerParams::MBS_DEFAULT, 0.5),
        station(3, Tier::Haps, 100.0, PowerParams::HAPS_DEFAULT, 0.95),
    ])?;
    let (true_load, estimate) = (0.02, 0.9);
    let cfg = SwitchConfig::default();
    let part = CandidatePartition::all_searchable(&network);
    let batt = [BatteryState::none()];
    let prev = [false];
    let ctx = |load: &'static [f64]| SlotContext {
        slot: 0,
        prev_switch: &prev,
        loads: load,
        batteries: &batt,
    };
    let truth = es_optimize(&network, &part, &ctx(&[0.02]), &cfg)?;
    let believed = es_optimize(&network, &part, &ctx(&[0.9]), &cfg)?;
    let realized = evaluate_config(&network, &believed.switch, &ctx(&[0.02]), &cfg)?;
    Ok(MisestimationDemo {
        network,
        true_load,
        estimate,
        true_switch: truth.switch,
        estimated_switch: believed.switch,
        optimal_power: truth.eval.grid_power,
        realized_power: realized.grid_power,
    })
}

/// One row of a metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub scope: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(metric: impl Into<String>, scope: impl Into<String>, value: f64) -> Self {
        MetricRow {
            metric: metric.into(),
            scope: scope.into(),
            value,
        }
    }
}

pub fn write_metrics_csv(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{METRICS_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{}", r.metric, r.scope, sig9(r.value)).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[0.2, 0.4], &[0.2, 0.4], 1e-6).unwrap().percent, 0.0);
        let m = mape(&[0.0, 0.5], &[0.1, 0.5], 1e-6).unwrap();
        assert!(m.percent.is_finite());
        assert_eq!(m.guarded, 1);
        assert!(mape(&[], &[], 1e-6).is_err());
    }

    #[test]
    fn decision_change_examples() {
        let a = vec![vec![true; 10]; 10];
        let mut b = a.clone();
        assert_eq!(decision_change_rate(&a, &b).unwrap(), 0.0);
        b[3][7] = false;
        assert!((decision_change_rate(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = vec![vec![false; 10]; 10];
        assert_eq!(decision_change_rate(&a, &c).unwrap(), 100.0);
        assert!(decision_change_rate(&a, &c[..9]).is_err());
    }

    #[test]
    fn nes_examples() {
        assert_eq!(nes(&[100.0, 100.0], &[100.0, 100.0]).unwrap(), 0.0);
        assert!((nes(&[100.0], &[77.0]).unwrap() - 23.0).abs() < 1e-12);
        assert!(nes(&[100.0], &[110.0]).unwrap() < 0.0);
        assert!(nes(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn expected_power_blends() {
        assert_eq!(expected_power(100.0, 80.0, 0.0).unwrap(), 80.0);
        assert_eq!(expected_power(100.0, 80.0, 1.0).unwrap(), 100.0);
        assert_eq!(expected_power(100.0, 80.0, 0.5).unwrap(), 90.0);
        assert!(expected_power(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn error_power_brackets() {
        let (h, s) = (PowerParams::HAPS_DEFAULT, PowerParams::SBS_DEFAULT);
        let e = expected_error_power(ErrorDirection::OffToOn, &h, &s, 0.1, 0.2, 0.2, 0.5).unwrap();
        // (4.7*0.1*0.2*40 + 30) - (100 + 4*0.2*20) = 33.76 - 116
        assert!((e - (-82.24 * 0.5)).abs() < 1e-9);
        let r = expected_error_power(ErrorDirection::OnToOff, &h, &s, 0.1, 0.2, 0.2, 0.5).unwrap();
        assert_eq!(r, -e);
        assert_eq!(
            expected_error_power(ErrorDirection::OffToOn, &h, &s, 0.1, 0.2, 0.7, 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn p_err_counts() {
        let perfect = [(0.01, 0.01), (0.5, 0.5), (0.03, 0.03)];
        let p = empirical_p_err(&perfect, 0.05);
        assert_eq!((p.off_to_on, p.on_to_off), (Some(0.0), Some(0.0)));
        let over = [(0.01, 0.3), (0.02, 0.9)];
        let p = empirical_p_err(&over, 0.05);
        assert_eq!((p.off_to_on, p.on_to_off), (Some(1.0), None));
        let mixed = [
            (0.01, 0.02),
            (0.02, 0.06),
            (0.04, 0.01),
            (0.03, 0.08),
            (0.10, 0.04),
            (0.20, 0.30),
            (0.06, 0.01),
            (0.50, 0.45),
        ];
        // low side: 4 trials, 2 overestimated; high side: 4 trials, 2 underestimated
        let p = empirical_p_err(&mixed, 0.05);
        assert_eq!((p.off_to_on, p.on_to_off), (Some(0.5), Some(0.5)));
    }

    #[test]
    fn misestimation_raises_realized_power() {
        let d = misestimation_demo().unwrap();
        assert_eq!(d.true_switch, vec![false]);
        assert_eq!(d.estimated_switch, vec![true]);
        // awake at 0.02 versus asleep with 0.02 carried by the HAPS
        let hand = (100.0 + 4.0 * 0.02 * 20.0) - (30.0 + 4.7 * 0.02 * 40.0);
        assert!((d.power_increase() - hand).abs() < 1e-9);
        assert!(d.power_increase() > 0.0);
    }

    #[test]
    fn metrics_csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&[MetricRow::new("nes_percent", "all", 12.5)], &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(path).unwrap(),
            "metric,scope,value\nnes_percent,all,12.5\n"
        );
    }

    proptest! {
        #[test]
        fn mape_is_scale_invariant(
            pairs in prop::collection::vec((0.01f64..10.0, 0.0f64..10.0), 1..40),
            k in 0.01f64..100.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
            let kp: Vec<f64> = p.iter().map(|x| x * k).collect();
            let m1 = mape(&a, &p, 0.0).unwrap().percent;
            let m2 = mape(&ka, &kp, 0.0).unwrap().percent;
            prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
        }

        #[test]
        fn nes_of_scaled_constant(b in 1.0f64..1000.0, x in -0.5f64..1.0, n in 1usize..50) {
            let base = vec![b; n];
            let ach = vec![b * (1.0 - x); n];
            prop_assert!((nes(&base, &ach).unwrap() - 100.0 * x).abs() < 1e-9);
        }
    }
}
