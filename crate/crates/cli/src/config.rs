//! Run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bathyfer::fields::Grid;
use bathyfer::mcmc::Proposal;
use bathyfer::observe::SensorLayout;
use bathyfer::posterior::ParameterSpace;
use bathyfer::priors::PriorSpec;
use bathyfer::swe::{BoundaryForcing, SolverConfig};
use bathyfer::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Discretization used for inference.
    #[serde(default = "inference_solver")]
    pub solver: SolverConfig,
    /// Discretization used to generate synthetic data; must differ from `solver`.
    #[serde(default = "truth_solver")]
    pub truth_solver: SolverConfig,
    #[serde(default)]
    pub sensors: SensorLayout,
    pub data: DataSource,
    /// Equidistant nodes spanning the solver domain.
    #[serde(default = "default_nodes")]
    pub reconstruction_nodes: usize,
    pub space: SpaceKind,
    pub prior: PriorSpec,
    pub proposal: ProposalConfig,
    pub chains: ChainConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub landscape: Option<LandscapeConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn inference_solver() -> SolverConfig {
    SolverConfig { n_cells: 256, ..SolverConfig::default() }
}

pub fn truth_solver() -> SolverConfig {
    SolverConfig { n_cells: 512, dt: 5e-5, max_substeps: 16, ..SolverConfig::default() }
}

fn default_nodes() -> usize {
    64
}

fn default_noise_fraction() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Data generated on `truth_solver` from a known bed.
    Synthetic {
        truth: TruthSpec,
        forcing: BoundaryForcing,
        #[serde(default = "default_noise_fraction")]
        noise_fraction: f64,
    },
    /// Measurement CSV (repetitions are averaged); the boundary sensor's
    /// record forces the model.
    Measurements {
        path: PathBuf,
        #[serde(default)]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    Bump { position: f64, width: f64 },
    /// `x,b` CSV.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Parametric,
    Gridded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProposalConfig {
    /// One variance per coordinate, or a single value used for all.
    Independent {
        variances: Vec<f64>,
        #[serde(default = "unit")]
        scale: f64,
    },
    Correlated {
        variance: f64,
        length_scale: f64,
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub samples: usize,
    pub burn_in: usize,
    /// Starting points; omitted means `count` chains from a flat bed (zero vector).
    #[serde(default)]
    pub inits: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    Position,
    Width,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub vary: SweepTarget,
    pub values: Vec<f64>,
    /// A position error above this many metres marks the run as failed.
    #[serde(default = "position_tolerance")]
    pub position_tolerance: f64,
    /// A relative width error above this marks the run as failed.
    #[serde(default = "unit")]
    pub width_tolerance: f64,
}

fn position_tolerance() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    #[serde(default = "position_axis")]
    pub positions: Axis,
    #[serde(default = "width_axis")]
    pub widths: Axis,
    /// Also run the configured chains and write their paths.
    #[serde(default)]
    pub chain_paths: bool,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self { positions: position_axis(), widths: width_axis(), chain_paths: false }
    }
}

fn position_axis() -> Axis {
    Axis { start: 1.5, end: 12.5, count: 50 }
}

fn width_axis() -> Axis {
    Axis { start: 0.01, end: 0.5, count: 50 }
}

impl RunConfig {
    /// Parse and validate a JSON document. Relative paths are resolved
    /// against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Input("config is not valid UTF-8".into()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::from_json(text, base)?, bytes))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Synthetic { truth: TruthSpec::File { path }, .. } => fix(path),
            DataSource::Synthetic { .. } => {}
            DataSource::Measurements { path, truth } => {
                fix(path);
                if let Some(t) = truth {
                    fix(t);
                }
            }
        }
        if let Some(out) = &mut self.output {
            fix(out);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.sensors.validate(self.solver.x_start, self.solver.x_end)?;
        if (self.solver.output_interval - self.sensors.interval()).abs() > 1e-12 {
            return Err(Error::Input("solver output_interval must equal 1 / sensor rate".into()));
        }
        if self.reconstruction_nodes < 2 {
            return Err(Error::Input("reconstruction_nodes must be at least 2".into()));
        }
        if let DataSource::Synthetic { noise_fraction, .. } = &self.data {
            self.truth_solver.validate()?;
            if (self.truth_solver.x_start, self.truth_solver.x_end, self.truth_solver.t_end)
                != (self.solver.x_start, self.solver.x_end, self.solver.t_end)
            {
                return Err(Error::Input(
                    "truth_solver must share the domain and duration of solver".into(),
                ));
            }
            if self.truth_solver.n_cells == self.solver.n_cells && self.truth_solver.dt == self.solver.dt {
                return Err(Error::Input(
                    "truth_solver must use a different discretization than solver".into(),
                ));
            }
            if !(noise_fraction.is_finite() && *noise_fraction >= 0.0) {
                return Err(Error::Input("noise_fraction must be non-negative".into()));
            }
        }
        if let DataSource::Synthetic { truth: TruthSpec::Bump { width, .. }, .. } = &self.data {
            if !(*width > 0.0) {
                return Err(Error::Input("truth bump width must be positive".into()));
            }
        }
        let dim = self.parameter_space().dim();
        self.prior.build(dim)?;
        self.build_proposal()?;
        let c = &self.chains;
        if c.samples < 10 {
            return Err(Error::Input("chains.samples must be at least 10".into()));
        }
        match &c.inits {
            Some(inits) => {
                if inits.is_empty() || inits.iter().any(|i| i.len() != dim) {
                    return Err(Error::Input(format!("every init must have {dim} values")));
                }
            }
            None => {
                if c.count == 0 {
                    return Err(Error::Input("chains.count must be positive".into()));
                }
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Input("sweep.values is empty".into()));
            }
        }
        if let Some(l) = &self.landscape {
            for a in [l.positions, l.widths] {
                if a.count == 0 || !(a.start.is_finite() && a.end.is_finite()) {
                    return Err(Error::Input("landscape axes need a positive count".into()));
                }
            }
        }
        Ok(())
    }

    pub fn parameter_space(&self) -> ParameterSpace {
        match self.space {
            SpaceKind::Parametric => ParameterSpace::Parametric2D,
            SpaceKind::Gridded => ParameterSpace::Gridded { nodes: self.reconstruction_nodes },
        }
    }

    pub fn reconstruction_grid(&self) -> Result<Grid> {
        Grid::uniform(self.solver.x_start, self.solver.x_end, self.reconstruction_nodes)
    }

    pub fn build_proposal(&self) -> Result<Proposal> {
        let dim = self.parameter_space().dim();
        match &self.proposal {
            ProposalConfig::Independent { variances, scale } => {
                let v = match variances.len() {
                    1 => vec![variances[0]; dim],
                    n if n == dim => variances.clone(),
                    n => {
                        return Err(Error::Input(format!(
                            "proposal lists {n} variances for dimension {dim}"
                        )))
                    }
                };
                Proposal::independent(v)?.with_scale(*scale)
            }
            ProposalConfig::Correlated { variance, length_scale, scale } => {
                Proposal::correlated(dim, *variance, *length_scale)?.with_scale(*scale)
            }
        }
    }

    pub fn inits(&self) -> Vec<Vec<f64>> {
        match &self.chains.inits {
            Some(i) => i.clone(),
            None => vec![vec![0.0; self.parameter_space().dim()]; self.chains.count],
        }
    }
}
