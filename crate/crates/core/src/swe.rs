//! One-dimensional shallow-water forward model.
//!
//! Finite-volume discretization of the shallow-water equations with bed slope
//! and linear bottom friction. Second-order MUSCL reconstruction (minmod) of
//! depth, free surface and velocity feeds an HLL flux; the bed source uses the
//! hydrostatic reconstruction so that a lake at rest is preserved to round-off
//! over arbitrary beds. Time integration is Heun's method (SSP-RK2), followed
//! by a semi-implicit friction update `hu <- hu / (1 + kappa dt)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::observe::MeasurementSeries;

const GHOSTS: usize = 2;
const CFL_LIMIT: f64 = 0.9;

/// Boundary treatment at one end of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Free surface prescribed by the forcing at the face; the outgoing
    /// Riemann invariant sets the ghost velocity.
    Forced,
    /// Zero-gradient extrapolation of the interior state.
    Outflow,
    /// Reflective wall.
    Wall,
}

/// Slope limiter used by the MUSCL reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Limiter {
    Minmod,
    /// Generalized minmod `minmod(theta a, (a + b) / 2, theta b)`, `theta` in [1, 2].
    Theta { theta: f64 },
}

impl Limiter {
    #[inline]
    fn slope(self, a: f64, b: f64) -> f64 {
        match self {
            Limiter::Minmod => minmod(a, b),
            Limiter::Theta { theta } => {
                if a * b <= 0.0 {
                    0.0
                } else {
                    let c = 0.5 * (a + b);
                    let m = (theta * a.abs()).min(c.abs()).min(theta * b.abs());
                    m.copysign(a)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub limiter: Limiter,
    pub gravity: f64,
    /// Linear friction coefficient, 1/s.
    pub friction: f64,
    pub n_cells: usize,
    pub x_start: f64,
    pub x_end: f64,
    pub dt: f64,
    pub t_end: f64,
    pub dry_tolerance: f64,
    /// Spacing of recorded sensor samples, seconds.
    pub output_interval: f64,
    /// Upper bound on the number of substeps a CFL-violating step may be split into.
    /// `1` disables substepping.
    pub max_substeps: usize,
    pub left: Boundary,
    pub right: Boundary,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            limiter: Limiter::Minmod,
            gravity: 9.81,
            friction: 0.0,
            n_cells: 64,
            x_start: 1.5,
            x_end: 13.0,
            dt: 1e-2,
            t_end: 10.0,
            dry_tolerance: 1e-8,
            output_interval: 1e-2,
            max_substeps: 1,
            left: Boundary::Forced,
            right: Boundary::Outflow,
        }
    }
}

impl SolverConfig {
    /// The discretization used to generate synthetic truth data.
    pub fn fine() -> Self {
        Self { n_cells: 128, dt: 5e-5, max_substeps: 16, ..Self::default() }
    }

    pub fn dx(&self) -> f64 {
        (self.x_end - self.x_start) / self.n_cells as f64
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::cell_centers(self.x_start, self.x_end, self.n_cells)
    }

    /// Number of recorded samples, `round(t_end / output_interval)`.
    pub fn n_records(&self) -> usize {
        (self.t_end / self.output_interval).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("output_interval", self.output_interval),
            ("dry_tolerance", self.dry_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.friction.is_finite() && self.friction >= 0.0) {
            return Err(Error::Input(format!("friction must be non-negative, got {}", self.friction)));
        }
        if self.n_cells < 8 {
            return Err(Error::Input(format!("need at least 8 cells, got {}", self.n_cells)));
        }
        if !(self.x_start.is_finite() && self.x_end.is_finite() && self.x_end > self.x_start) {
            return Err(Error::Input(format!(
                "invalid domain [{}, {}]",
                self.x_start, self.x_end
            )));
        }
        if self.max_substeps == 0 {
            return Err(Error::Input("max_substeps must be at least 1".into()));
        }
        self.steps_per_record()?;
        Ok(())
    }

    /// Solver steps between two recorded samples; `dt` must divide the interval.
    pub fn steps_per_record(&self) -> Result<usize> {
        let m = (self.output_interval / self.dt).round();
        if m < 1.0 || (m * self.dt - self.output_interval).abs() > 1e-9 * self.output_interval {
            return Err(Error::Input(format!(
                "dt = {} does not divide the output interval {}",
                self.dt, self.output_interval
            )));
        }
        Ok(m as usize)
    }
}

/// Uniformly sampled time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SampledSeries {
    pub fn end_time(&self) -> f64 {
        self.t0 + self.dt * (self.values.len().saturating_sub(1)) as f64
    }

    /// Linear interpolation, clamped to the first/last sample outside the range.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.values.len();
        let s = (t - self.t0) / self.dt;
        if s <= 0.0 {
            return self.values[0];
        }
        let k = s.floor() as usize;
        if k >= n - 1 {
            return self.values[n - 1];
        }
        let w = s - k as f64;
        (1.0 - w) * self.values[k] + w * self.values[k + 1]
    }
}

/// Free-surface elevation imposed at the forced boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryForcing {
    /// `level + amplitude * sin(2 pi f t)`, with an optional raised-cosine
    /// ramp over the first `ramp_time` seconds.
    Sinusoid { level: f64, amplitude: f64, frequency: f64, #[serde(default)] ramp_time: f64 },
    /// Gaussian-in-time pulse `level + amplitude * exp(-((t - center) / duration)^2)`.
    Pulse { level: f64, amplitude: f64, center: f64, duration: f64 },
    /// Measured surface elevation, linearly interpolated in time.
    Sampled(SampledSeries),
}

impl BoundaryForcing {
    pub fn constant(level: f64) -> Self {
        BoundaryForcing::Sinusoid { level, amplitude: 0.0, frequency: 0.0, ramp_time: 0.0 }
    }

    pub fn surface_at(&self, t: f64) -> f64 {
        match self {
            BoundaryForcing::Sinusoid { level, amplitude, frequency, ramp_time } => {
                let ramp = if *ramp_time > 0.0 && t < *ramp_time {
                    0.5 * (1.0 - (std::f64::consts::PI * t.max(0.0) / ramp_time).cos())
                } else {
                    1.0
                };
                level + amplitude * ramp * (2.0 * std::f64::consts::PI * frequency * t).sin()
            }
            BoundaryForcing::Pulse { level, amplitude, center, duration } => {
                let s = (t - center) / duration;
                level + amplitude * (-s * s).exp()
            }
            BoundaryForcing::Sampled(series) => series.at(t),
        }
    }

    pub fn validate(&self, t_start: f64, t_last: f64) -> Result<()> {
        match self {
            BoundaryForcing::Sinusoid { level, amplitude, frequency, ramp_time } => {
                if ![level, amplitude, frequency, ramp_time].iter().all(|v| v.is_finite())
                    || *ramp_time < 0.0
                {
                    return Err(Error::Input("sinusoid forcing parameters must be finite".into()));
                }
            }
            BoundaryForcing::Pulse { level, amplitude, center, duration } => {
                if ![level, amplitude, center].iter().all(|v| v.is_finite())
                    || !(duration.is_finite() && *duration > 0.0)
                {
                    return Err(Error::Input("invalid pulse forcing parameters".into()));
                }
            }
            BoundaryForcing::Sampled(series) => {
                if series.values.len() < 2 || !(series.dt > 0.0) {
                    return Err(Error::Input("sampled forcing needs ≥ 2 samples".into()));
                }
                if series.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Input("sampled forcing contains non-finite values".into()));
                }
                let tol = 1e-9 * series.dt.max(1.0);
                if series.t0 > t_start + tol || series.end_time() < t_last - tol {
                    return Err(Error::Input(format!(
                        "forcing covers [{}, {}] but the run needs [{t_start}, {t_last}]",
                        series.t0,
                        series.end_time()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Depth and discharge per cell at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub h: Vec<f64>,
    pub hu: Vec<f64>,
    pub t: f64,
}

impl FlowState {
    pub fn total_mass(&self, dx: f64) -> f64 {
        self.h.iter().sum::<f64>() * dx
    }

    /// Free surface `h + b` per cell.
    pub fn surface(&self, bed: &[f64]) -> Vec<f64> {
        self.h.iter().zip(bed).map(|(h, b)| h + b).collect()
    }
}

pub fn init_lake_at_rest(bed: &[f64], surface_level: f64) -> Result<FlowState> {
    if !surface_level.is_finite() {
        return Err(Error::Input(format!("surface level must be finite, got {surface_level}")));
    }
    if bed.iter().any(|b| !b.is_finite()) {
        return Err(Error::Input("bed heights must be finite".into()));
    }
    Ok(FlowState {
        h: bed.iter().map(|b| (surface_level - b).max(0.0)).collect(),
        hu: vec![0.0; bed.len()],
        t: 0.0,
    })
}

/// Largest `(|u| + sqrt(g h)) dt / dx` over the cells.
pub fn cfl_number(state: &FlowState, config: &SolverConfig) -> f64 {
    max_wave_speed(&state.h, &state.hu, config.gravity, config.dry_tolerance) * config.dt
        / config.dx()
}

fn max_wave_speed(h: &[f64], hu: &[f64], g: f64, dry: f64) -> f64 {
    h.iter()
        .zip(hu)
        .map(|(&h, &hu)| if h < dry { 0.0 } else { (hu / h).abs() + (g * h).sqrt() })
        .fold(0.0, f64::max)
}

/// Advances `state` by one configured time step.
pub fn step(
    state: &FlowState,
    bed: &[f64],
    config: &SolverConfig,
    forcing: &BoundaryForcing,
) -> Result<FlowState> {
    let mut solver = ShallowWaterSolver::new(config, bed, forcing)?;
    solver.load(state)?;
    solver.advance(config.dt)?;
    Ok(solver.state())
}

/// Runs the model from lake at rest (at the forcing level at `t = 0`) and
/// records the free surface at `sensors` every `output_interval`, starting
/// with the initial state. The result has `round(t_end / output_interval)` rows.
pub fn solve_forward(
    bed: &[f64],
    config: &SolverConfig,
    forcing: &BoundaryForcing,
    sensors: &[f64],
) -> Result<MeasurementSeries> {
    solve_forward_from(bed, config, forcing, sensors, 0.0)
}

/// As [`solve_forward`], with the clock starting at `t0`.
pub fn solve_forward_from(
    bed: &[f64],
    config: &SolverConfig,
    forcing: &BoundaryForcing,
    sensors: &[f64],
    t0: f64,
) -> Result<MeasurementSeries> {
    let n_records = config.n_records();
    let per_record = config.steps_per_record()?;
    forcing.validate(t0, t0 + config.output_interval * n_records.saturating_sub(1) as f64)?;

    let probes = SensorProbes::new(config, sensors)?;
    let mut solver = ShallowWaterSolver::new(config, bed, forcing)?;
    let mut initial = init_lake_at_rest(bed, forcing.surface_at(t0))?;
    initial.t = t0;
    solver.load(&initial)?;

    let mut columns = vec![Vec::with_capacity(n_records); sensors.len()];
    let mut times = Vec::with_capacity(n_records);
    let mut step_count: u64 = 0;
    for k in 0..n_records {
        if k > 0 {
            for _ in 0..per_record {
                step_count += 1;
                solver.advance(config.dt)?;
                // re-anchor the clock to avoid accumulating dt round-off
                solver.t = t0 + step_count as f64 * config.dt;
            }
        }
        times.push(t0 + k as f64 * config.output_interval);
        probes.record(&solver, &mut columns);
    }
    MeasurementSeries::new(times, sensors.to_vec(), columns)
}

/// Linear interpolation weights from cell centres to sensor positions.
struct SensorProbes {
    stencils: Vec<(usize, usize, f64)>,
}

impl SensorProbes {
    fn new(config: &SolverConfig, sensors: &[f64]) -> Result<Self> {
        let dx = config.dx();
        let n = config.n_cells;
        let stencils = sensors
            .iter()
            .map(|&x| {
                if !(x > config.x_start && x < config.x_end) {
                    return Err(Error::Input(format!(
                        "sensor at {x} outside the open domain ({}, {})",
                        config.x_start, config.x_end
                    )));
                }
                let s = (x - config.x_start) / dx - 0.5;
                if s <= 0.0 {
                    Ok((0, 0, 0.0))
                } else if s >= (n - 1) as f64 {
                    Ok((n - 1, n - 1, 0.0))
                } else {
                    let i = s.floor() as usize;
                    Ok((i, i + 1, s - i as f64))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stencils })
    }

    fn record(&self, solver: &ShallowWaterSolver, columns: &mut [Vec<f64>]) {
        for (col, &(i, j, w)) in columns.iter_mut().zip(&self.stencils) {
            let surface = |c: usize| solver.h[c + GHOSTS] + solver.bed[c + GHOSTS];
            col.push((1.0 - w) * surface(i) + w * surface(j));
        }
    }
}

/// Time integrator with preallocated work arrays. All arrays carry two ghost
/// cells on each side.
struct ShallowWaterSolver<'a> {
    config: &'a SolverConfig,
    forcing: &'a BoundaryForcing,
    n: usize,
    dx: f64,
    t: f64,
    bed: Vec<f64>,
    h: Vec<f64>,
    hu: Vec<f64>,
    // stage buffers
    h0: Vec<f64>,
    hu0: Vec<f64>,
    dh: Vec<f64>,
    dhu: Vec<f64>,
    // reconstruction scratch
    vel: Vec<f64>,
    slope_h: Vec<f64>,
    slope_eta: Vec<f64>,
    slope_u: Vec<f64>,
    flux_h: Vec<f64>,
    flux_hu_left: Vec<f64>,
    flux_hu_right: Vec<f64>,
    face_h_left: Vec<f64>,
    face_h_right: Vec<f64>,
    face_b_left: Vec<f64>,
    face_b_right: Vec<f64>,
}

impl<'a> ShallowWaterSolver<'a> {
    fn new(config: &'a SolverConfig, bed: &[f64], forcing: &'a BoundaryForcing) -> Result<Self> {
        config.validate()?;
        let n = config.n_cells;
        if bed.len() != n {
            return Err(Error::Input(format!("bed has {} values for {n} cells", bed.len())));
        }
        if bed.iter().any(|b| !b.is_finite()) {
            return Err(Error::Input("bed heights must be finite".into()));
        }
        let m = n + 2 * GHOSTS;
        let mut bed_ext = vec![0.0; m];
        bed_ext[GHOSTS..GHOSTS + n].copy_from_slice(bed);
        for g in 0..GHOSTS {
            // ghost beds: held at the end value, or mirrored at a wall
            bed_ext[g] = match config.left {
                Boundary::Wall => bed[GHOSTS - 1 - g],
                _ => bed[0],
            };
            bed_ext[GHOSTS + n + g] = match config.right {
                Boundary::Wall => bed[n - 1 - g],
                _ => bed[n - 1],
            };
        }
        let zeros = || vec![0.0; m];
        Ok(Self {
            config,
            forcing,
            n,
            dx: config.dx(),
            t: 0.0,
            bed: bed_ext,
            h: zeros(),
            hu: zeros(),
            h0: zeros(),
            hu0: zeros(),
            dh: zeros(),
            dhu: zeros(),
            vel: zeros(),
            slope_h: zeros(),
            slope_eta: zeros(),
            slope_u: zeros(),
            flux_h: zeros(),
            flux_hu_left: zeros(),
            flux_hu_right: zeros(),
            face_h_left: zeros(),
            face_h_right: zeros(),
            face_b_left: zeros(),
            face_b_right: zeros(),
        })
    }

    fn load(&mut self, state: &FlowState) -> Result<()> {
        if state.h.len() != self.n || state.hu.len() != self.n {
            return Err(Error::Input(format!(
                "state has {}/{} values for {} cells",
                state.h.len(),
                state.hu.len(),
                self.n
            )));
        }
        if state.h.iter().chain(&state.hu).any(|v| !v.is_finite()) || state.h.iter().any(|&h| h < 0.0)
        {
            return Err(Error::Input("state must be finite with non-negative depth".into()));
        }
        self.h[GHOSTS..GHOSTS + self.n].copy_from_slice(&state.h);
        self.hu[GHOSTS..GHOSTS + self.n].copy_from_slice(&state.hu);
        self.t = state.t;
        Ok(())
    }

    fn state(&self) -> FlowState {
        FlowState {
            h: self.h[GHOSTS..GHOSTS + self.n].to_vec(),
            hu: self.hu[GHOSTS..GHOSTS + self.n].to_vec(),
            t: self.t,
        }
    }

    /// One step of length `dt`, split into substeps if the CFL limit requires it.
    fn advance(&mut self, dt: f64) -> Result<()> {
        let interior = GHOSTS..GHOSTS + self.n;
        let speed = max_wave_speed(
            &self.h[interior.clone()],
            &self.hu[interior],
            self.config.gravity,
            self.config.dry_tolerance,
        );
        let cfl = speed * dt / self.dx;
        if !cfl.is_finite() {
            return Err(Error::Divergence { time: self.t });
        }
        let substeps = if cfl < CFL_LIMIT { 1 } else { (cfl / CFL_LIMIT).floor() as usize + 1 };
        if substeps > self.config.max_substeps {
            return Err(Error::Stability { time: self.t, wave_speed: speed, cfl });
        }
        let sub_dt = dt / substeps as f64;
        for _ in 0..substeps {
            self.heun(sub_dt)?;
        }
        Ok(())
    }

    fn heun(&mut self, dt: f64) -> Result<()> {
        let interior = GHOSTS..GHOSTS + self.n;
        self.h0[interior.clone()].copy_from_slice(&self.h[interior.clone()]);
        self.hu0[interior.clone()].copy_from_slice(&self.hu[interior.clone()]);

        self.rhs(self.t);
        for i in interior.clone() {
            self.h[i] += dt * self.dh[i];
            self.hu[i] += dt * self.dhu[i];
        }
        self.clip();

        self.rhs(self.t + dt);
        for i in interior.clone() {
            self.h[i] = 0.5 * (self.h0[i] + self.h[i] + dt * self.dh[i]);
            self.hu[i] = 0.5 * (self.hu0[i] + self.hu[i] + dt * self.dhu[i]);
        }
        self.clip();

        let decay = 1.0 / (1.0 + self.config.friction * dt);
        for i in interior.clone() {
            self.hu[i] *= decay;
        }
        self.t += dt;

        if self.h[interior.clone()].iter().chain(&self.hu[interior]).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: self.t });
        }
        Ok(())
    }

    fn clip(&mut self) {
        let dry = self.config.dry_tolerance;
        for i in GHOSTS..GHOSTS + self.n {
            if self.h[i] < 0.0 {
                self.h[i] = 0.0;
            }
            if self.h[i] < dry {
                self.hu[i] = 0.0;
            }
        }
    }

    /// Ghost state for an imposed surface level `eta_b` at the boundary face.
    /// The surface is extrapolated linearly through the face from the adjacent
    /// interior cell (`k` half-cells beyond the face), and the velocity keeps
    /// the Riemann invariant carried out of the domain (`sign` = -1 on the
    /// left, +1 on the right), so an incoming wave enters without a phase lag.
    fn forced_ghost(&self, interior: usize, eta_b: f64, k: f64, ghost: usize, sign: f64) -> (f64, f64) {
        let g = self.config.gravity;
        let dry = self.config.dry_tolerance;
        let h_i = self.h[interior];
        let eta_i = h_i + self.bed[interior];
        let eta = eta_b + k * (eta_b - eta_i);
        let h = (eta - self.bed[ghost]).max(0.0);
        if h_i <= dry || h <= dry {
            return (h, 0.0);
        }
        let u_i = velocity(h_i, self.hu[interior], dry);
        let u = u_i - sign * 2.0 * ((g * h).sqrt() - (g * h_i).sqrt());
        (h, h * u)
    }

    fn fill_ghosts(&mut self, t: f64) {
        let n = self.n;
        let first = GHOSTS;
        let last = GHOSTS + n - 1;
        match self.config.left {
            Boundary::Forced => {
                let eta_b = self.forcing.surface_at(t);
                for g in 0..GHOSTS {
                    // ghost centre sits (GHOSTS - g - 0.5) cells outside the face
                    let k = 2.0 * (GHOSTS - g) as f64 - 1.0;
                    let (h, hu) = self.forced_ghost(first, eta_b, k, g, -1.0);
                    self.h[g] = h;
                    self.hu[g] = hu;
                }
            }
            Boundary::Outflow => {
                for g in 0..GHOSTS {
                    self.h[g] = self.h[first];
                    self.hu[g] = self.hu[first];
                }
            }
            Boundary::Wall => {
                for g in 0..GHOSTS {
                    let src = 2 * GHOSTS - 1 - g;
                    self.h[g] = self.h[src];
                    self.hu[g] = -self.hu[src];
                }
            }
        }
        match self.config.right {
            Boundary::Forced => {
                let eta_b = self.forcing.surface_at(t);
                for g in 0..GHOSTS {
                    let idx = last + 1 + g;
                    let k = 2.0 * g as f64 + 1.0;
                    let (h, hu) = self.forced_ghost(last, eta_b, k, idx, 1.0);
                    self.h[idx] = h;
                    self.hu[idx] = hu;
                }
            }
            Boundary::Outflow => {
                for g in 0..GHOSTS {
                    self.h[last + 1 + g] = self.h[last];
                    self.hu[last + 1 + g] = self.hu[last];
                }
            }
            Boundary::Wall => {
                for g in 0..GHOSTS {
                    let src = last - g;
                    self.h[last + 1 + g] = self.h[src];
                    self.hu[last + 1 + g] = -self.hu[src];
                }
            }
        }
    }

    /// Semi-discrete right-hand side for the interior cells, written to `dh`/`dhu`.
    fn rhs(&mut self, t: f64) {
        self.fill_ghosts(t);
        let m = self.n + 2 * GHOSTS;
        let g = self.config.gravity;
        let dry = self.config.dry_tolerance;
        let lim = self.config.limiter;

        for i in 0..m {
            self.vel[i] = velocity(self.h[i], self.hu[i], dry);
        }
        for i in 1..m - 1 {
            let eta = |k: usize| self.h[k] + self.bed[k];
            self.slope_h[i] = lim.slope(self.h[i] - self.h[i - 1], self.h[i + 1] - self.h[i]);
            self.slope_eta[i] = lim.slope(eta(i) - eta(i - 1), eta(i + 1) - eta(i));
            self.slope_u[i] =
                lim.slope(self.vel[i] - self.vel[i - 1], self.vel[i + 1] - self.vel[i]);
        }

        // Interface between cells i and i + 1.
        for i in 1..m - 2 {
            let j = i + 1;
            let h_l = self.h[i] + 0.5 * self.slope_h[i];
            let eta_l = self.h[i] + self.bed[i] + 0.5 * self.slope_eta[i];
            let u_l = self.vel[i] + 0.5 * self.slope_u[i];
            let b_l = eta_l - h_l;

            let h_r = self.h[j] - 0.5 * self.slope_h[j];
            let eta_r = self.h[j] + self.bed[j] - 0.5 * self.slope_eta[j];
            let u_r = self.vel[j] - 0.5 * self.slope_u[j];
            let b_r = eta_r - h_r;

            let b_star = b_l.max(b_r);
            let hs_l = (eta_l - b_star).max(0.0).min(h_l);
            let hs_r = (eta_r - b_star).max(0.0).min(h_r);

            let (f_h, f_hu) = hll_flux(hs_l, u_l, hs_r, u_r, g);
            self.flux_h[i] = f_h;
            // momentum flux seen by cell i (right face) and cell j (left face)
            self.flux_hu_right[i] = f_hu + 0.5 * g * (h_l * h_l - hs_l * hs_l);
            self.flux_hu_left[j] = f_hu + 0.5 * g * (h_r * h_r - hs_r * hs_r);
            self.face_h_right[i] = h_l;
            self.face_b_right[i] = b_l;
            self.face_h_left[j] = h_r;
            self.face_b_left[j] = b_r;
        }

        let inv_dx = 1.0 / self.dx;
        for i in GHOSTS..GHOSTS + self.n {
            self.dh[i] = -(self.flux_h[i] - self.flux_h[i - 1]) * inv_dx;
            let source = -g
                * 0.5
                * (self.face_h_left[i] + self.face_h_right[i])
                * (self.face_b_right[i] - self.face_b_left[i]);
            self.dhu[i] = (-(self.flux_hu_right[i] - self.flux_hu_left[i]) + source) * inv_dx;
        }
    }
}

#[inline]
fn velocity(h: f64, hu: f64, dry: f64) -> f64 {
    if h < dry {
        0.0
    } else {
        hu / h
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// HLL flux between reconstructed states, with dry-bed wave speed estimates.
#[inline]
fn hll_flux(h_l: f64, u_l: f64, h_r: f64, u_r: f64, g: f64) -> (f64, f64) {
    if h_l <= 0.0 && h_r <= 0.0 {
        return (0.0, 0.0);
    }
    let c_l = (g * h_l).sqrt();
    let c_r = (g * h_r).sqrt();
    let (s_l, s_r) = if h_l <= 0.0 {
        (u_r - 2.0 * c_r, u_r + c_r)
    } else if h_r <= 0.0 {
        (u_l - c_l, u_l + 2.0 * c_l)
    } else {
        ((u_l - c_l).min(u_r - c_r), (u_l + c_l).max(u_r + c_r))
    };

    let q_l = h_l * u_l;
    let q_r = h_r * u_r;
    let f_l = (q_l, q_l * u_l + 0.5 * g * h_l * h_l);
    let f_r = (q_r, q_r * u_r + 0.5 * g * h_r * h_r);

    if s_l >= 0.0 {
        f_l
    } else if s_r <= 0.0 {
        f_r
    } else {
        let inv = 1.0 / (s_r - s_l);
        (
            (s_r * f_l.0 - s_l * f_r.0 + s_l * s_r * (h_r - h_l)) * inv,
            (s_r * f_l.1 - s_l * f_r.1 + s_l * s_r * (q_r - q_l)) * inv,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GaussianBumpParams;

    fn bump_bed(config: &SolverConfig) -> Vec<f64> {
        let p = GaussianBumpParams::new(4.0, 0.05).unwrap();
        config.grid().unwrap().nodes().iter().map(|&x| p.height_at(x)).collect()
    }

    #[test]
    fn lake_at_rest_initialisation() {
        let flat = init_lake_at_rest(&[0.0; 10], 0.3).unwrap();
        assert!(flat.h.iter().all(|&h| h == 0.3));
        assert!(flat.hu.iter().all(|&q| q == 0.0));

        let bed = [0.0, 0.1, 0.2, 0.1, 0.0];
        let s = init_lake_at_rest(&bed, 0.3).unwrap();
        for (h, b) in s.h.iter().zip(bed) {
            assert_eq!(*h, 0.3 - b);
        }

        let dry = init_lake_at_rest(&bed, 0.15).unwrap();
        assert_eq!(dry.h[2], 0.0);
        assert!(init_lake_at_rest(&bed, f64::NAN).is_err());
    }

    #[test]
    fn one_step_preserves_lake_at_rest() {
        let config = SolverConfig::default();
        let bed = bump_bed(&config);
        let state = init_lake_at_rest(&bed, 0.3).unwrap();
        let next = step(&state, &bed, &config, &BoundaryForcing::constant(0.3)).unwrap();
        for i in 0..bed.len() {
            assert!((next.h[i] - state.h[i]).abs() < 1e-12);
            assert!(next.hu[i].abs() < 1e-12);
        }
    }

    #[test]
    fn friction_decay_matches_semi_implicit_update() {
        let config = SolverConfig { friction: 0.5, ..SolverConfig::default() };
        let n = config.n_cells;
        let state = FlowState { h: vec![0.3; n], hu: vec![0.03; n], t: 0.0 };
        let next = step(&state, &vec![0.0; n], &config, &BoundaryForcing::constant(0.3)).unwrap();
        let expected = 0.1 / (1.0 + 0.5 * config.dt);
        for i in 0..n {
            assert!((next.hu[i] / next.h[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn wall_bounded_hump_conserves_mass_per_step() {
        let config = SolverConfig {
            left: Boundary::Wall,
            right: Boundary::Wall,
            ..SolverConfig::default()
        };
        let grid = config.grid().unwrap();
        let mid = 0.5 * (config.x_start + config.x_end);
        let h: Vec<f64> =
            grid.nodes().iter().map(|x| 0.3 + 0.02 * (-(x - mid).powi(2)).exp()).collect();
        let state = FlowState { hu: vec![0.0; h.len()], h, t: 0.0 };
        let bed = vec![0.0; config.n_cells];
        let next = step(&state, &bed, &config, &BoundaryForcing::constant(0.3)).unwrap();
        let (m0, m1) = (state.total_mass(config.dx()), next.total_mass(config.dx()));
        assert!(((m1 - m0) / m0).abs() < 1e-13);
    }

    #[test]
    fn cfl_number_formula() {
        let config = SolverConfig { x_start: 0.0, x_end: 13.0, ..SolverConfig::default() };
        let state = FlowState { h: vec![0.3; 64], hu: vec![0.0; 64], t: 0.0 };
        let expected = 0.01 * (9.81f64 * 0.3).sqrt() / (13.0 / 64.0);
        let c = cfl_number(&state, &config);
        assert!((c - expected).abs() < 1e-15);
        assert!((c - 0.0844).abs() < 1e-4);

        let dry = FlowState { h: vec![0.0; 64], hu: vec![0.0; 64], t: 0.0 };
        assert_eq!(cfl_number(&dry, &config), 0.0);

        let doubled = SolverConfig { dt: 0.02, ..config.clone() };
        assert!((cfl_number(&state, &doubled) - 2.0 * c).abs() < 1e-15);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let config = SolverConfig { dt: 0.2, output_interval: 0.2, ..SolverConfig::default() };
        let bed = vec![0.0; config.n_cells];
        let state = init_lake_at_rest(&bed, 0.3).unwrap();
        match step(&state, &bed, &config, &BoundaryForcing::constant(0.3)) {
            Err(Error::Stability { wave_speed, cfl, .. }) => {
                assert!((wave_speed - (9.81f64 * 0.3).sqrt()).abs() < 1e-12);
                assert!(cfl > 0.9);
            }
            other => panic!("expected stability error, got {other:?}"),
        }
        let substepped = SolverConfig { max_substeps: 8, ..config };
        assert!(step(&state, &bed, &substepped, &BoundaryForcing::constant(0.3)).is_ok());
    }

    #[test]
    fn steady_forcing_gives_constant_readings() {
        let config = SolverConfig { t_end: 2.0, ..SolverConfig::default() };
        for bed in [vec![0.0; config.n_cells], bump_bed(&config)] {
            let series =
                solve_forward(&bed, &config, &BoundaryForcing::constant(0.3), &[3.5, 5.5, 7.5])
                    .unwrap();
            assert_eq!(series.len(), 200);
            for s in 0..3 {
                assert!(series.column(s).iter().all(|v| (v - 0.3).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn dt_must_divide_output_interval() {
        let config = SolverConfig { dt: 0.003, ..SolverConfig::default() };
        assert!(config.validate().is_err());
    }

    #[test]
    fn sampled_forcing_interpolates_and_clamps() {
        let s = SampledSeries { t0: 0.0, dt: 0.01, values: vec![0.0, 1.0, 3.0] };
        assert_eq!(s.at(-1.0), 0.0);
        assert!((s.at(0.005) - 0.5).abs() < 1e-12);
        assert!((s.at(0.015) - 2.0).abs() < 1e-12);
        assert_eq!(s.at(5.0), 3.0);
    }

    #[test]
    fn short_forcing_is_rejected() {
        let config = SolverConfig { t_end: 1.0, ..SolverConfig::default() };
        let forcing = BoundaryForcing::Sampled(SampledSeries {
            t0: 0.0,
            dt: 0.01,
            values: vec![0.3; 50],
        });
        let bed = vec![0.0; config.n_cells];
        assert!(matches!(solve_forward(&bed, &config, &forcing, &[3.5]), Err(Error::Input(_))));
    }
}
