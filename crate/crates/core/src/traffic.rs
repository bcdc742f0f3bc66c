//! Grid traffic ingestion, synthetic traffic and preprocessing.
//!
//! Two CSV schemas are read and written, each with a fixed header row:
//!
//! | file            | header                               |
//! |-----------------|--------------------------------------|
//! | raw CDR trace   | `cell_id,slot,calls,sms,internet`    |
//! | normalized loads| `cell_id,slot,load_factor`           |
//!
//! `slot` is a zero-based ten-minute slot index. Floats are written with
//! nine significant digits.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::GridPos;
use crate::numfmt::{round_sig9, sig9};
use crate::{Error, Result};

pub const SLOTS_PER_DAY: usize = 144;
/// Width of the Milan grid; cell ids run row-major from 1.
pub const MILAN_GRID_WIDTH: u32 = 100;

pub const CDR_HEADER: &str = "cell_id,slot,calls,sms,internet";
pub const LOAD_HEADER: &str = "cell_id,slot,load_factor";

/// Grid position of a row-major cell id (ids start at 1).
pub fn cell_position(id: u32, grid_width: u32) -> GridPos {
    let k = id.saturating_sub(1);
    GridPos::new((k / grid_width) as i32, (k % grid_width) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub id: u32,
    pub position: GridPos,
}

/// Per-cell raw traffic on a regular slot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTrace {
    pub slots_per_day: usize,
    pub num_days: usize,
    pub cells: Vec<Cell>,
    /// `series[i][t]` is the raw traffic of `cells[i]` in slot `t`.
    pub series: Vec<Vec<f64>>,
    /// Slots absent from the source file, filled with zero.
    pub missing_slots: usize,
}

impl TrafficTrace {
    pub fn new(
        slots_per_day: usize,
        num_days: usize,
        cells: Vec<Cell>,
        series: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let trace = TrafficTrace {
            slots_per_day,
            num_days,
            cells,
            series,
            missing_slots: 0,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if self.cells.len() != self.series.len() {
            return Err(Error::Size("one series per cell".into()));
        }
        let len = self.len();
        for (cell, s) in self.cells.iter().zip(&self.series) {
            if s.len() != len {
                return Err(Error::Size(format!(
                    "cell {} has {} slots, expected {len}",
                    cell.id,
                    s.len()
                )));
            }
            if let Some(x) = s.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                return Err(Error::domain(format!(
                    "cell {}: traffic {x} is not a finite value >= 0",
                    cell.id
                )));
            }
        }
        Ok(())
    }

    /// Number of slots per series.
    pub fn len(&self) -> usize {
        self.slots_per_day * self.num_days
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_index(&self, id: u32) -> Option<usize> {
        self.cells.iter().position(|c| c.id == id)
    }

    pub fn index_at(&self, pos: GridPos) -> Option<usize> {
        self.cells.iter().position(|c| c.position == pos)
    }
}

/// Weights used to merge calls, SMS and internet activity into one traffic
/// measure.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ActivityWeights {
    pub calls: f64,
    pub sms: f64,
    pub internet: f64,
}

impl Default for ActivityWeights {
    fn default() -> Self {
        ActivityWeights {
            calls: 1.0,
            sms: 1.0,
            internet: 1.0,
        }
    }
}

/// Reads a raw CDR CSV.
///
/// Rows sharing a `(cell_id, slot)` are summed. Slots missing for a cell are
/// zero-filled and counted in [`TrafficTrace::missing_slots`]. The trace
/// spans whole days up to the largest slot present.
pub fn load_cdr_csv(
    path: impl AsRef<Path>,
    weights: ActivityWeights,
    grid_width: u32,
    slots_per_day: usize,
) -> Result<TrafficTrace> {
    let path = path.as_ref();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>().join(",") != CDR_HEADER {
        return Err(parse_err(1, format!("expected header `{CDR_HEADER}`")));
    }

    let mut sums: BTreeMap<u32, HashMap<usize, f64>> = BTreeMap::new();
    let mut max_slot = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 5 {
            return Err(parse_err(
                line,
                format!("expected 5 fields, found {}", record.len()),
            ));
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| parse_err(line, format!("{name}: cannot parse `{}`", &record[i])))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(parse_err(
                    line,
                    format!("{name}: must be a finite value >= 0"),
                ));
            }
            Ok(v)
        };
        let cell: u32 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("cell_id: cannot parse `{}`", &record[0])))?;
        let slot: usize = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("slot: cannot parse `{}`", &record[1])))?;
        let tau = weights.calls * field(2, "calls")?
            + weights.sms * field(3, "sms")?
            + weights.internet * field(4, "internet")?;
        *sums.entry(cell).or_default().entry(slot).or_insert(0.0) += tau;
        max_slot = max_slot.max(slot);
    }
    if sums.is_empty() {
        return Err(Error::EmptyTrace);
    }

    let num_days = max_slot / slots_per_day + 1;
    let len = num_days * slots_per_day;
    let mut cells = Vec::with_capacity(sums.len());
    let mut series = Vec::with_capacity(sums.len());
    let mut missing = 0;
    for (id, slots) in sums {
        let mut s = vec![0.0; len];
        for (&t, &v) in &slots {
            s[t] = v;
        }
        missing += len - slots.len();
        cells.push(Cell {
            id,
            position: cell_position(id, grid_width),
        });
        series.push(s);
    }
    let mut trace = TrafficTrace::new(slots_per_day, num_days, cells, series)?;
    trace.missing_slots = missing;
    Ok(trace)
}

pub(crate) fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes a trace in the raw CDR schema, with the traffic in the `internet`
/// column. Reloading it with unit internet weight gives back the same trace.
pub fn write_cdr_csv(trace: &TrafficTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{CDR_HEADER}").map_err(io)?;
    for (cell, s) in trace.cells.iter().zip(&trace.series) {
        for (t, tau) in s.iter().enumerate() {
            writeln!(w, "{},{},0,0,{}", cell.id, t, sig9(*tau)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes per-cell load factors in the normalized schema.
pub fn write_load_csv(cells: &[Cell], loads: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{LOAD_HEADER}").map_err(io)?;
    for (cell, s) in cells.iter().zip(loads) {
        for (t, l) in s.iter().enumerate() {
            writeln!(w, "{},{},{}", cell.id, t, sig9(*l)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Daily profile of one latent area type.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AreaProfile {
    /// Multiplier on `base_level` and `amplitude`.
    pub scale: f64,
    /// Hour of day at which the profile peaks.
    pub peak_hour: f64,
}

/// Business (midday), residential (evening) and mixed (afternoon) areas.
pub fn default_area_profiles() -> Vec<AreaProfile> {
    vec![
        AreaProfile {
            scale: 1.0,
            peak_hour: 12.0,
        },
        AreaProfile {
            scale: 0.9,
            peak_hour: 21.0,
        },
        AreaProfile {
            scale: 1.2,
            peak_hour: 17.0,
        },
    ]
}

/// Parameters of the synthetic traffic generator.
///
/// Every cell belongs to one of `area_profiles`. Types come in spatial
/// zones of equal size: cells are ranked by one smoothed Gaussian field of
/// correlation length `area_corr_length` and cut into quantiles.
/// Cell `i` of type `k` carries
/// `m_i * (1 + dynamic_sd * d_i(t) + type_dynamic_sd * e_k(t)) * diurnal_k(t)
/// + noise`, clipped at zero, where `m_i = exp(field_sd * g_i)` is a static
/// log-normal spatial field, `d_i(t)` a spatially correlated AR(1) process,
/// `e_k(t)` an AR(1) process shared by all cells of type `k` (both with time
/// constant `dynamic_time_slots`), and
/// `diurnal_k(t) = scale_k * (base_level + amplitude * (1 - cos(2 pi (t - peak_k) / slots_per_day + pi)) / 2)`.
/// Both fields are white noise smoothed by a Gaussian kernel of standard
/// deviation `spatial_corr_length` cells and rescaled to unit variance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub num_cells: usize,
    pub days: usize,
    pub seed: u64,
    pub spatial_corr_length: f64,
    pub noise_sd: f64,
    pub base_level: f64,
    pub amplitude: f64,
    pub field_sd: f64,
    pub dynamic_sd: f64,
    pub type_dynamic_sd: f64,
    pub dynamic_time_slots: f64,
    pub grid_width: u32,
    pub slots_per_day: usize,
    pub area_profiles: Vec<AreaProfile>,
    pub area_corr_length: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            num_cells: 100,
            days: 30,
            seed: 1,
            spatial_corr_length: 1.0,
            noise_sd: 1.0,
            base_level: 20.0,
            amplitude: 20.0,
            field_sd: 0.1,
            dynamic_sd: 0.05,
            type_dynamic_sd: 0.15,
            dynamic_time_slots: 36.0,
            grid_width: MILAN_GRID_WIDTH,
            slots_per_day: SLOTS_PER_DAY,
            area_profiles: default_area_profiles(),
            area_corr_length: 2.0,
        }
    }
}

/// Smoothed white noise on a `side x side` grid, unit marginal variance.
fn gaussian_field(side: usize, corr_len: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if corr_len <= 0.0 {
        return (0..side * side)
            .map(|_| StandardNormal.sample(rng))
            .collect();
    }
    let radius = (3.0 * corr_len).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let x = k as f64 - radius as f64;
            (-0.5 * (x / corr_len).powi(2)).exp()
        })
        .collect();
    let k2: f64 = kernel.iter().map(|k| k * k).sum();
    let padded = side + 2 * radius;
    let noise: Vec<f64> = (0..padded * padded)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    // separable convolution: rows first, then columns
    let mut rows = vec![0.0; padded * side];
    for r in 0..padded {
        for c in 0..side {
            rows[r * side + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * noise[r * padded + c + k])
                .sum();
        }
    }
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * rows[(r + k) * side + c])
                .sum();
            out[r * side + c] = v / k2;
        }
    }
    out
}

/// Generates a synthetic trace with diurnal shape and spatial correlation.
///
/// Values are rounded to the CSV precision so that a written trace reloads
/// bit-identically. Output depends only on `params`.
pub fn synth_traffic(params: &SynthParams) -> TrafficTrace {
    let n = params.num_cells.max(1);
    let side = (n as f64).sqrt().ceil() as usize;
    let grid_width = params.grid_width.max(side as u32);
    let spd = params.slots_per_day;
    let len = spd * params.days;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let cells: Vec<Cell> = (0..n)
        .map(|k| {
            let (r, c) = ((k / side) as u32, (k % side) as u32);
            Cell {
                id: r * grid_width + c + 1,
                position: GridPos::new(r as i32, c as i32),
            }
        })
        .collect();

    let static_field = gaussian_field(side, params.spatial_corr_length, &mut rng);
    let multiplier: Vec<f64> = (0..n)
        .map(|k| (params.field_sd * static_field[k]).exp())
        .collect();

    let profiles = if params.area_profiles.is_empty() {
        vec![AreaProfile {
            scale: 1.0,
            peak_hour: 12.0,
        }]
    } else {
        params.area_profiles.clone()
    };
    let area: Vec<usize> = if profiles.len() == 1 {
        vec![0; n]
    } else {
        // Equal-size zones cut from one smooth field by quantile.
        let field = gaussian_field(side, params.area_corr_length, &mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
        let mut area = vec![0; n];
        for (rank, &k) in order.iter().enumerate() {
            area[k] = rank * profiles.len() / n;
        }
        area
    };
    let diurnal = |kind: usize, t: usize| {
        let p = &profiles[kind];
        let peak = p.peak_hour * spd as f64 / 24.0;
        let phase = 2.0 * std::f64::consts::PI * ((t % spd) as f64 - peak) / spd as f64
            + std::f64::consts::PI;
        p.scale * (params.base_level + params.amplitude * 0.5 * (1.0 - phase.cos()))
    };

    let mut series = vec![vec![0.0; len]; n];
    let mut dynamic = vec![0.0; n];
    let a = if params.dynamic_time_slots > 0.0 {
        (-1.0 / params.dynamic_time_slots).exp()
    } else {
        0.0
    };
    let innovation_scale = (1.0 - a * a).sqrt();
    if params.dynamic_sd > 0.0 {
        let init = gaussian_field(side, params.spatial_corr_length, &mut rng);
        dynamic.copy_from_slice(&init[..n]);
    }
    let mut type_dynamic = vec![0.0; profiles.len()];
    let draw = |rng: &mut ChaCha8Rng| -> f64 { Distribution::<f64>::sample(&StandardNormal, rng) };
    if params.type_dynamic_sd > 0.0 {
        for e in type_dynamic.iter_mut() {
            *e = draw(&mut rng);
        }
    }
    for t in 0..len {
        if params.dynamic_sd > 0.0 && t > 0 {
            let e = gaussian_field(side, params.spatial_corr_length, &mut rng);
            for k in 0..n {
                dynamic[k] = a * dynamic[k] + innovation_scale * e[k];
            }
        }
        if params.type_dynamic_sd > 0.0 && t > 0 {
            for e in type_dynamic.iter_mut() {
                *e = a * *e + innovation_scale * draw(&mut rng);
            }
        }
        for k in 0..n {
            let base = diurnal(area[k], t);
            let noise: f64 = if params.noise_sd > 0.0 {
                params.noise_sd * draw(&mut rng)
            } else {
                0.0
            };
            let shift =
                params.dynamic_sd * dynamic[k] + params.type_dynamic_sd * type_dynamic[area[k]];
            let v = multiplier[k] * (1.0 + shift) * base + noise;
            series[k][t] = round_sig9(v.max(0.0));
        }
    }

    TrafficTrace {
        slots_per_day: spd,
        num_days: params.days,
        cells,
        series,
        missing_slots: 0,
    }
}

/// Replaces samples whose z-score exceeds `threshold` with the series
/// median. Returns the filtered series and the number of replacements.
///
/// The z-score uses the population standard deviation. A zero-variance
/// series is returned unchanged.
pub fn zscore_filter(series: &[f64], threshold: f64) -> Result<(Vec<f64>, usize)> {
    if series.len() < 2 {
        return Err(Error::Size(
            "z-score filtering needs at least 2 samples".into(),
        ));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let sd = (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Ok((series.to_vec(), 0));
    }
    let median = median(series);
    let mut removed = 0;
    let out = series
        .iter()
        .map(|&x| {
            if (x - mean).abs() / sd > threshold {
                removed += 1;
                median
            } else {
                x
            }
        })
        .collect();
    Ok((out, removed))
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Load factors `min(tau / C, 1)` per cell, with the number of clipped samples.
pub fn normalize_loads(trace: &TrafficTrace, capacities: &[f64]) -> Result<(Vec<Vec<f64>>, usize)> {
    if capacities.len() != trace.cells.len() {
        return Err(Error::Size(format!(
            "{} capacities for {} cells",
            capacities.len(),
            trace.cells.len()
        )));
    }
    let mut clipped = 0;
    let mut out = Vec::with_capacity(trace.series.len());
    for (s, &c) in trace.series.iter().zip(capacities) {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("capacity {c} must be > 0")));
        }
        out.push(
            s.iter()
                .map(|tau| {
                    let l = tau / c;
                    if l > 1.0 {
                        clipped += 1;
                        1.0
                    } else {
                        l
                    }
                })
                .collect(),
        );
    }
    Ok((out, clipped))
}

/// Sliding-window input/target pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowSet {
    pub window: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// `(cell_id, target slot)` per pair.
    pub provenance: Vec<(u32, usize)>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, input: Vec<f64>, target: f64, provenance: (u32, usize)) {
        self.inputs.push(input);
        self.targets.push(target);
        self.provenance.push(provenance);
    }

    pub fn extend(&mut self, other: WindowSet) {
        assert!(
            self.is_empty() || self.window == other.window,
            "window sizes differ"
        );
        self.window = other.window;
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        self.provenance.extend(other.provenance);
    }

    pub(crate) fn select(&self, idx: &[usize]) -> WindowSet {
        WindowSet {
            window: self.window,
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        }
    }
}

/// Pairs `(series[i..i+window], series[i+window])` for every `i`.
pub fn make_windows(series: &[f64], window: usize, cell_id: u32) -> Result<WindowSet> {
    if window == 0 {
        return Err(Error::Size("window must be >= 1".into()));
    }
    if series.len() <= window {
        return Err(Error::Size(format!(
            "series of length {} is too short for window {window}",
            series.len()
        )));
    }
    let mut ws = WindowSet {
        window,
        ..Default::default()
    };
    for i in 0..series.len() - window {
        ws.push(
            series[i..i + window].to_vec(),
            series[i + window],
            (cell_id, i + window),
        );
    }
    Ok(ws)
}

/// Shuffles the pairs of each cell with `seed` and puts the first
/// `round(train_fraction * n)` of each cell in the training set.
pub fn split_windows(
    ws: &WindowSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(WindowSet, WindowSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut by_cell: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, (cell, _)) in ws.provenance.iter().enumerate() {
        by_cell.entry(*cell).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut idx) in by_cell {
        idx.shuffle(&mut rng);
        let k = (train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    Ok((ws.select(&train), ws.select(&test)))
}

/// Preprocessing knobs for LSTM training data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub zscore_threshold: f64,
    pub train_fraction: f64,
    pub window: usize,
    pub shuffle_seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            zscore_threshold: 2.5,
            train_fraction: 0.6,
            window: 8,
            shuffle_seed: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1)"));
        }
        if self.window == 0 {
            return Err(Error::config("window", "must be >= 1"));
        }
        if !(self.zscore_threshold > 0.0) {
            return Err(Error::config("zscore_threshold", "must be > 0"));
        }
        Ok(())
    }
}
