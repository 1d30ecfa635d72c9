//! Gaussian log-likelihood of sensor records given a bed, combined with a
//! prior into a log-posterior over either the two bump parameters or the
//! gridded bed heights.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{resample_bathymetry, BathymetryField, GaussianBumpParams, Grid};
use crate::observe::{MeasurementSeries, NoiseModel};
use crate::priors::{Prior, IMPOSSIBLE};
use crate::swe::{solve_forward_from, BoundaryForcing, SolverConfig};

/// Anything the sampler can target: an unnormalized log-density that is
/// [`IMPOSSIBLE`] (negative infinity) outside its support and never NaN.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, theta: &[f64]) -> f64;
}

/// The unknown being inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterSpace {
    /// `(position, width)` of a fixed-amplitude Gaussian bump.
    Parametric2D,
    /// Bed heights at `nodes` equidistant reconstruction nodes.
    Gridded { nodes: usize },
}

impl ParameterSpace {
    pub fn dim(&self) -> usize {
        match self {
            ParameterSpace::Parametric2D => 2,
            ParameterSpace::Gridded { nodes } => *nodes,
        }
    }

    /// Bed heights at the nodes of `grid` for parameter vector `theta`.
    pub fn expand(&self, theta: &[f64], grid: &Grid) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::Input(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                self.dim()
            )));
        }
        match self {
            ParameterSpace::Parametric2D => {
                let p = GaussianBumpParams::new(theta[0], theta[1])?;
                Ok(grid.nodes().iter().map(|&x| p.height_at(x)).collect())
            }
            ParameterSpace::Gridded { nodes } => {
                if grid.len() != *nodes {
                    return Err(Error::Input(format!(
                        "grid has {} nodes, parameter space has {nodes}",
                        grid.len()
                    )));
                }
                Ok(theta.to_vec())
            }
        }
    }
}

/// Forward model, data, noise and prior for one inference problem.
#[derive(Debug)]
pub struct PosteriorModel {
    space: ParameterSpace,
    reconstruction: Grid,
    solver_grid: Grid,
    solver: SolverConfig,
    forcing: BoundaryForcing,
    observed: MeasurementSeries,
    noise: NoiseModel,
    prior: Prior,
    forward_solves: AtomicUsize,
    failures: AtomicUsize,
}

impl PosteriorModel {
    /// `observed` holds only the observation sensors; its time stamps must
    /// match the solver's records starting at `observed.times()[0]`.
    pub fn new(
        space: ParameterSpace,
        reconstruction: Grid,
        solver: SolverConfig,
        forcing: BoundaryForcing,
        observed: MeasurementSeries,
        noise: NoiseModel,
        prior: Prior,
    ) -> Result<Self> {
        solver.validate()?;
        if prior.dim() != space.dim() {
            return Err(Error::Input(format!(
                "prior dimension {} does not match parameter dimension {}",
                prior.dim(),
                space.dim()
            )));
        }
        if let ParameterSpace::Gridded { nodes } = space {
            if reconstruction.len() != nodes {
                return Err(Error::Input(format!(
                    "reconstruction grid has {} nodes, expected {nodes}",
                    reconstruction.len()
                )));
            }
        }
        let solver_grid = solver.grid()?;
        if solver_grid.start() < reconstruction.start() || solver_grid.end() > reconstruction.end() {
            return Err(Error::Input(
                "reconstruction grid must cover the solver grid (no extrapolation)".into(),
            ));
        }
        if observed.len() != solver.n_records() {
            return Err(Error::Input(format!(
                "observed series has {} samples, solver records {}",
                observed.len(),
                solver.n_records()
            )));
        }
        if observed.n_sensors() != noise.variances().len() {
            return Err(Error::Input(format!(
                "{} observed sensors but {} noise variances",
                observed.n_sensors(),
                noise.variances().len()
            )));
        }
        let t0 = observed.times()[0];
        let spacing_ok = observed
            .times()
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - (t0 + k as f64 * solver.output_interval)).abs() < 1e-6);
        if !spacing_ok {
            return Err(Error::Input("observed time stamps do not match the solver cadence".into()));
        }
        forcing.validate(t0, *observed.times().last().unwrap())?;
        Ok(Self {
            space,
            reconstruction,
            solver_grid,
            solver,
            forcing,
            observed,
            noise,
            prior,
            forward_solves: AtomicUsize::new(0),
            failures: AtomicUsize::new(0),
        })
    }

    pub fn space(&self) -> ParameterSpace {
        self.space
    }

    pub fn reconstruction_grid(&self) -> &Grid {
        &self.reconstruction
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn observed(&self) -> &MeasurementSeries {
        &self.observed
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// Number of forward solves attempted so far.
    pub fn forward_solves(&self) -> usize {
        self.forward_solves.load(Ordering::Relaxed)
    }

    /// Number of forward solves that failed and were scored as impossible.
    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::Relaxed)
    }

    /// Bed heights on the reconstruction nodes.
    pub fn reconstruction_heights(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.space.expand(theta, &self.reconstruction)
    }

    /// Bed on the solver cell centres.
    pub fn solver_bed(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let heights = self.reconstruction_heights(theta)?;
        let field = BathymetryField::new(self.reconstruction.clone(), heights)?;
        resample_bathymetry(&field, &self.solver_grid)
    }

    /// Noise-free sensor records for `theta`.
    pub fn forward(&self, theta: &[f64]) -> Result<MeasurementSeries> {
        let bed = self.solver_bed(theta)?;
        self.forward_solves.fetch_add(1, Ordering::Relaxed);
        solve_forward_from(
            &bed,
            &self.solver,
            &self.forcing,
            self.observed.positions(),
            self.observed.times()[0],
        )
        .inspect_err(|_| {
            self.failures.fetch_add(1, Ordering::Relaxed);
        })
    }

    /// Log-likelihood of a simulated record against the observations.
    pub fn log_likelihood_of(&self, simulated: &MeasurementSeries) -> f64 {
        let t = self.observed.len() as f64;
        let mut total = 0.0;
        for (s, &var) in self.noise.variances().iter().enumerate() {
            let sq: f64 = self
                .observed
                .column(s)
                .iter()
                .zip(simulated.column(s))
                .map(|(o, f)| (o - f) * (o - f))
                .sum();
            total += -0.5 * t * (2.0 * PI * var).ln() - sq / (2.0 * var);
        }
        if total.is_nan() {
            IMPOSSIBLE
        } else {
            total
        }
    }

    /// Gaussian log-likelihood; [`IMPOSSIBLE`] for invalid parameters
    /// (e.g. non-positive width) or a failed forward solve.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|v| !v.is_finite()) {
            return IMPOSSIBLE;
        }
        match self.forward(theta) {
            Ok(sim) => self.log_likelihood_of(&sim),
            Err(_) => IMPOSSIBLE,
        }
    }

    /// Prior plus likelihood. The prior is evaluated first; the forward model
    /// is not run for points outside its support.
    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        let lp = match self.prior.log_density(theta) {
            Ok(v) => v,
            Err(_) => return IMPOSSIBLE,
        };
        if lp == IMPOSSIBLE {
            return IMPOSSIBLE;
        }
        let ll = self.log_likelihood(theta);
        if ll == IMPOSSIBLE {
            return IMPOSSIBLE;
        }
        lp + ll
    }
}

impl LogDensity for PosteriorModel {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_posterior(theta)
    }
}

/// Log-posterior on a `(position, width)` grid. Row `i` corresponds to
/// `positions[i]`, column `j` to `widths[j]`.
pub fn landscape(model: &PosteriorModel, positions: &[f64], widths: &[f64]) -> Result<Vec<Vec<f64>>> {
    if model.space() != ParameterSpace::Parametric2D {
        return Err(Error::Input("landscapes need the two-parameter bump space".into()));
    }
    Ok(positions
        .par_iter()
        .map(|&p| widths.iter().map(|&w| model.log_posterior(&[p, w])).collect())
        .collect())
}

/// Grid cells that are strict maxima over their (up to 8) neighbours.
pub fn local_maxima(values: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = values.len();
    let mut out = Vec::new();
    for i in 0..rows {
        let cols = values[i].len();
        for j in 0..cols {
            let v = values[i][j];
            if v == IMPOSSIBLE {
                continue;
            }
            let mut is_max = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni as usize >= rows || nj as usize >= values[ni as usize].len() {
                        continue;
                    }
                    if values[ni as usize][nj as usize] >= v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((i, j));
            }
        }
    }
    out
}
