//! Sensor records and everything between solver output and the likelihood:
//! synthetic data generation, noise calibration against a flat-bed run, and
//! the measurement CSV format.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{resample_bathymetry, BathymetryField, GaussianBumpParams};
use crate::swe::{solve_forward_from, BoundaryForcing, SampledSeries, SolverConfig};

/// Lower bound applied to calibrated noise variances, m².
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Tolerance on timestamp cadence, seconds.
const CADENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorLayout {
    /// Sensor whose record forces the left boundary.
    pub boundary: f64,
    /// Sensors whose records enter the likelihood.
    pub observation: Vec<f64>,
    /// Sampling rate, Hz.
    pub rate: f64,
}

impl Default for SensorLayout {
    fn default() -> Self {
        Self { boundary: 1.5, observation: vec![3.5, 5.5, 7.5], rate: 100.0 }
    }
}

impl SensorLayout {
    pub fn validate(&self, x_start: f64, x_end: f64) -> Result<()> {
        if self.observation.is_empty() {
            return Err(Error::Input("at least one observation sensor is required".into()));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::Input(format!("sampling rate must be positive, got {}", self.rate)));
        }
        let mut all = vec![self.boundary];
        all.extend_from_slice(&self.observation);
        if all.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("sensor positions must be strictly increasing".into()));
        }
        if !(self.boundary >= x_start && self.boundary < x_end) {
            return Err(Error::Input(format!(
                "boundary sensor at {} outside [{x_start}, {x_end})",
                self.boundary
            )));
        }
        if let Some(x) = self.observation.iter().find(|&&x| !(x > x_start && x < x_end)) {
            return Err(Error::Input(format!(
                "observation sensor at {x} outside ({x_start}, {x_end})"
            )));
        }
        Ok(())
    }

    pub fn interval(&self) -> f64 {
        1.0 / self.rate
    }

    /// Column names of the measurement CSV, boundary sensor first.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(self.boundary)
            .chain(self.observation.iter().copied())
            .map(sensor_column_name)
            .collect()
    }
}

pub fn sensor_column_name(position: f64) -> String {
    format!("sensor_{position}")
}

/// Free-surface elevation records, one column per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    times: Vec<f64>,
    positions: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

impl MeasurementSeries {
    pub fn new(times: Vec<f64>, positions: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if positions.len() != columns.len() {
            return Err(Error::Input(format!(
                "{} sensor positions for {} columns",
                positions.len(),
                columns.len()
            )));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != times.len()) {
            return Err(Error::Input(format!(
                "column of length {} for {} time stamps",
                c.len(),
                times.len()
            )));
        }
        if columns.iter().flatten().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::Input("measurement values must be finite".into()));
        }
        Ok(Self { times, positions, columns })
    }

    /// Number of time samples `T`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_sensors(&self) -> usize {
        self.columns.len()
    }

    /// Total number of data points `T * n_s`.
    pub fn data_points(&self) -> usize {
        self.len() * self.n_sensors()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn column(&self, sensor: usize) -> &[f64] {
        &self.columns[sensor]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn value(&self, time_index: usize, sensor: usize) -> f64 {
        self.columns[sensor][time_index]
    }

    /// Largest minus smallest value over all columns.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .columns
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    fn column_index(&self, position: f64) -> Option<usize> {
        self.positions.iter().position(|&p| (p - position).abs() < 1e-9)
    }

    /// Sub-series restricted to the given sensor positions, in that order.
    pub fn select(&self, positions: &[f64]) -> Result<Self> {
        let columns = positions
            .iter()
            .map(|&p| {
                self.column_index(p)
                    .map(|i| self.columns[i].clone())
                    .ok_or_else(|| Error::Input(format!("no sensor at {p}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), positions.to_vec(), columns)
    }

    /// Splits a full record into the boundary forcing and the observed columns.
    pub fn split_boundary(&self, layout: &SensorLayout) -> Result<(BoundaryForcing, Self)> {
        let b = self
            .column_index(layout.boundary)
            .ok_or_else(|| Error::Input(format!("no boundary sensor at {}", layout.boundary)))?;
        if self.len() < 2 {
            return Err(Error::Input("record needs at least two samples".into()));
        }
        let forcing = BoundaryForcing::Sampled(SampledSeries {
            t0: self.times[0],
            dt: layout.interval(),
            values: self.columns[b].clone(),
        });
        Ok((forcing, self.select(&layout.observation)?))
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() || self.n_sensors() != other.n_sensors() {
            return Err(Error::Input(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.len(),
                self.n_sensors(),
                other.len(),
                other.n_sensors()
            )));
        }
        if self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > CADENCE_TOL) {
            return Err(Error::Input("time stamps differ".into()));
        }
        Ok(())
    }
}

/// Diagonal measurement-noise covariance, one variance per observation sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    variances: Vec<f64>,
}

impl NoiseModel {
    /// Variances below `floor` are raised to it.
    pub fn new(variances: Vec<f64>, floor: f64) -> Result<Self> {
        if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Input("noise variances must be finite and non-negative".into()));
        }
        Ok(Self { variances: variances.into_iter().map(|v| v.max(floor)).collect() })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

/// Per-sensor mean squared difference between observations and a flat-bed run.
pub fn calibrate_noise(
    observed: &MeasurementSeries,
    flat_simulation: &MeasurementSeries,
) -> Result<NoiseModel> {
    observed.same_shape(flat_simulation)?;
    if observed.is_empty() {
        return Err(Error::Input("cannot calibrate on an empty series".into()));
    }
    let t = observed.len() as f64;
    let variances = observed
        .columns
        .iter()
        .zip(&flat_simulation.columns)
        .map(|(o, f)| o.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t)
        .collect();
    NoiseModel::new(variances, VARIANCE_FLOOR)
}

/// The bed used to generate synthetic observations.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticTruth {
    Field(BathymetryField),
    Bump(GaussianBumpParams),
}

impl SyntheticTruth {
    /// Bed heights at the cell centres of `config`.
    pub fn bed_on(&self, config: &SolverConfig) -> Result<Vec<f64>> {
        let grid = config.grid()?;
        match self {
            SyntheticTruth::Field(field) => resample_bathymetry(field, &grid),
            SyntheticTruth::Bump(p) => Ok(grid.nodes().iter().map(|&x| p.height_at(x)).collect()),
        }
    }
}

/// Clean and noise-perturbed synthetic records. Columns follow
/// [`SensorLayout::column_names`]; the boundary column is never perturbed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub clean: MeasurementSeries,
    pub noisy: MeasurementSeries,
    /// Standard deviation of the added noise.
    pub noise_std: f64,
}

pub fn synthesize_measurements(
    truth: &SyntheticTruth,
    fine_config: &SolverConfig,
    forcing: &BoundaryForcing,
    layout: &SensorLayout,
    noise_fraction: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if !(noise_fraction.is_finite() && noise_fraction >= 0.0) {
        return Err(Error::Input(format!("noise fraction must be non-negative, got {noise_fraction}")));
    }
    layout.validate(fine_config.x_start, fine_config.x_end)?;
    if (fine_config.output_interval - layout.interval()).abs() > 1e-12 {
        return Err(Error::Input("solver output interval must match the sensor rate".into()));
    }
    let bed = truth.bed_on(fine_config)?;
    let observed = solve_forward_from(&bed, fine_config, forcing, &layout.observation, 0.0)?;

    let boundary: Vec<f64> = observed.times.iter().map(|&t| forcing.surface_at(t)).collect();
    let mut positions = vec![layout.boundary];
    positions.extend_from_slice(&layout.observation);
    let mut columns = vec![boundary];
    columns.extend(observed.columns.iter().cloned());
    let clean = MeasurementSeries::new(observed.times.clone(), positions, columns)?;

    let wave_height = observed.range();
    if noise_fraction > 0.0 && !(wave_height > 0.0) {
        return Err(Error::Calibration(
            "clean series has zero wave height; cannot scale the noise".into(),
        ));
    }
    let noise_std = noise_fraction * wave_height;
    let mut noisy = clean.clone();
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for column in noisy.columns.iter_mut().skip(1) {
            for v in column.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise_std * z;
            }
        }
    }
    Ok(SyntheticData { clean, noisy, noise_std })
}

/// Element-wise mean of repeated records.
pub fn average_repeats(series: &[MeasurementSeries]) -> Result<MeasurementSeries> {
    let first = series.first().ok_or_else(|| Error::Input("no series to average".into()))?;
    for s in &series[1..] {
        first.same_shape(s)?;
    }
    let k = series.len() as f64;
    let columns = (0..first.n_sensors())
        .map(|c| {
            (0..first.len())
                .map(|t| series.iter().map(|s| s.columns[c][t]).sum::<f64>() / k)
                .collect()
        })
        .collect();
    MeasurementSeries::new(first.times.clone(), first.positions.clone(), columns)
}

/// Reads a measurement CSV (`time`, optional `rep`, `sensor_<x>` columns).
/// Returns one series per repetition, in order of first appearance.
pub fn load_measurements(path: impl AsRef<Path>, rate: f64) -> Result<Vec<MeasurementSeries>> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_measurements(file, rate)
}

pub fn read_measurements<R: Read>(reader: R, rate: f64) -> Result<Vec<MeasurementSeries>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
        .clone();

    let mut time_col = None;
    let mut rep_col = None;
    let mut sensors = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        match name {
            "time" => time_col = Some(i),
            "rep" => rep_col = Some(i),
            other => {
                let pos = other
                    .strip_prefix("sensor_")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        row: 1,
                        message: format!("unrecognised column `{other}`"),
                    })?;
                sensors.push((i, pos));
            }
        }
    }
    let time_col =
        time_col.ok_or_else(|| Error::Parse { row: 1, message: "missing `time` column".into() })?;
    if sensors.is_empty() {
        return Err(Error::Parse { row: 1, message: "no `sensor_<x>` columns".into() });
    }

    struct Rep {
        times: Vec<f64>,
        columns: Vec<Vec<f64>>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut reps: HashMap<String, Rep> = HashMap::new();
    let interval = 1.0 / rate;

    for (k, record) in csv.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let number = |i: usize| -> Result<f64> {
            let v = record[i].parse::<f64>().map_err(|e| Error::Parse {
                row,
                message: format!("column `{}`: {e}", &headers[i]),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse { row, message: format!("column `{}` is not finite", &headers[i]) })
            }
        };
        let key = rep_col.map(|i| record[i].to_string()).unwrap_or_default();
        let rep = reps.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Rep { times: Vec::new(), columns: vec![Vec::new(); sensors.len()] }
        });
        let t = number(time_col)?;
        if let Some(&prev) = rep.times.last() {
            if (t - prev - interval).abs() > CADENCE_TOL {
                return Err(Error::Parse {
                    row,
                    message: format!(
                        "time {t} does not follow {prev} at the {interval} s cadence"
                    ),
                });
            }
        }
        rep.times.push(t);
        for (c, &(i, _)) in sensors.iter().enumerate() {
            rep.columns[c].push(number(i)?);
        }
    }
    if order.is_empty() {
        return Err(Error::Parse { row: 2, message: "file contains no data rows".into() });
    }

    let positions: Vec<f64> = sensors.iter().map(|&(_, p)| p).collect();
    order
        .into_iter()
        .map(|key| {
            let rep = reps.remove(&key).expect("repetition recorded");
            MeasurementSeries::new(rep.times, positions.clone(), rep.columns)
        })
        .collect()
}

/// Writes one or more repetitions; a `rep` column is added when there are several.
pub fn write_measurements(path: impl AsRef<Path>, series: &[MeasurementSeries]) -> Result<()> {
    std::fs::write(path, format_measurements(series)?)?;
    Ok(())
}

pub fn format_measurements(series: &[MeasurementSeries]) -> Result<String> {
    let first = series.first().ok_or_else(|| Error::Input("nothing to write".into()))?;
    for s in &series[1..] {
        if s.positions != first.positions {
            return Err(Error::Input("repetitions must share sensor positions".into()));
        }
    }
    let stacked = series.len() > 1;
    let mut out = String::new();
    if stacked {
        out.push_str("rep,");
    }
    out.push_str("time");
    for &p in &first.positions {
        out.push(',');
        out.push_str(&sensor_column_name(p));
    }
    out.push('\n');
    for (r, s) in series.iter().enumerate() {
        for t in 0..s.len() {
            if stacked {
                out.push_str(&format!("{},", r + 1));
            }
            out.push_str(&format!("{}", s.times[t]));
            for c in &s.columns {
                out.push_str(&format!(",{}", c[t]));
            }
            out.push('\n');
        }
    }
    Ok(out)
}
