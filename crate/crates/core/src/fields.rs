//! Spatial discretizations of the bed profile.
//!
//! Two grids appear throughout the crate: the equidistant reconstruction grid on
//! which the unknown bed heights live, and the cell-centred solver grid used by
//! the shallow-water model. Values move from the former to the latter through a
//! monotone piecewise cubic Hermite interpolant (PCHIP, Fritsch–Carlson slopes),
//! which never extrapolates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed peak height of the parameterized bump, in meters.
pub const BUMP_AMPLITUDE: f64 = 0.2;

/// An ordered set of positions along the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    start: f64,
    end: f64,
    nodes: Vec<f64>,
}

impl Grid {
    /// `n` equidistant nodes with the first at `start` and the last at `end`.
    pub fn uniform(start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Input(format!("uniform grid needs at least 2 nodes, got {n}")));
        }
        check_interval(start, end)?;
        let step = (end - start) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
        nodes[n - 1] = end;
        Ok(Self { start, end, nodes })
    }

    /// Centres of `n` equal cells partitioning `[start, end]`.
    pub fn cell_centers(start: f64, end: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("cell grid needs at least one cell".into()));
        }
        check_interval(start, end)?;
        let dx = (end - start) / n as f64;
        let nodes = (0..n).map(|i| start + dx * (i as f64 + 0.5)).collect();
        Ok(Self { start, end, nodes })
    }

    /// Arbitrary strictly increasing positions; the extent is the node range.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Input("grid needs at least 2 nodes".into()));
        }
        check_increasing(&nodes)?;
        Ok(Self { start: nodes[0], end: nodes[nodes.len() - 1], nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// True when consecutive spacings agree to relative tolerance 1e-12.
    pub fn is_uniform(&self) -> bool {
        let h0 = self.nodes[1] - self.nodes[0];
        self.nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h0).abs() <= 1e-12 * h0.abs().max(self.end.abs()))
    }
}

fn check_interval(start: f64, end: f64) -> Result<()> {
    if !(start.is_finite() && end.is_finite() && end > start) {
        return Err(Error::Input(format!("invalid interval [{start}, {end}]")));
    }
    Ok(())
}

fn check_increasing(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("positions must be finite".into()));
    }
    if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Input(format!(
            "positions must be strictly increasing (index {} -> {})",
            i,
            i + 1
        )));
    }
    Ok(())
}

/// Bed heights sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BathymetryField {
    grid: Grid,
    heights: Vec<f64>,
}

impl BathymetryField {
    pub fn new(grid: Grid, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != grid.len() {
            return Err(Error::Input(format!(
                "{} heights for a grid of {} nodes",
                heights.len(),
                grid.len()
            )));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::Input("bathymetry heights must be finite".into()));
        }
        Ok(Self { grid, heights })
    }

    /// Samples the bump at every node of `grid`.
    pub fn from_bump(grid: Grid, params: &GaussianBumpParams) -> Self {
        let heights = grid.nodes().iter().map(|&x| params.height_at(x)).collect();
        Self { grid, heights }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Reads a profile from a CSV file with header `x,b`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
            .clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "b" {
            return Err(Error::Parse { row: 1, message: "expected header `x,b`".into() });
        }
        let mut xs = Vec::new();
        let mut bs = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 2;
            let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            let parse = |k: usize| -> Result<f64> {
                record[k].parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    message: format!("column {}: {e}", k + 1),
                })
            };
            xs.push(parse(0)?);
            bs.push(parse(1)?);
        }
        let grid = Grid::from_nodes(xs)?;
        Self::new(grid, bs)
    }

    /// Writes the profile as a CSV with header `x,b`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("x,b\n");
        for (x, b) in self.grid.nodes().iter().zip(&self.heights) {
            out.push_str(&format!("{x},{b}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Position and width of the fixed-height Gaussian bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBumpParams {
    /// Centre of the bump, meters.
    pub position: f64,
    /// Width parameter `w` in `exp(-(x - p)^2 / (2 w))`, square meters.
    pub width: f64,
}

impl GaussianBumpParams {
    pub fn new(position: f64, width: f64) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::Input(format!("bump position must be finite, got {position}")));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Input(format!("bump width must be positive, got {width}")));
        }
        Ok(Self { position, width })
    }

    pub fn amplitude(&self) -> f64 {
        BUMP_AMPLITUDE
    }

    /// Bed height at `x`. Unchecked variant of [`gaussian_bump_eval`].
    #[inline]
    pub fn height_at(&self, x: f64) -> f64 {
        let d = x - self.position;
        BUMP_AMPLITUDE * (-d * d / (2.0 * self.width)).exp()
    }
}

pub fn gaussian_bump_eval(params: &GaussianBumpParams, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bump evaluated at non-finite x = {x}")));
    }
    Ok(params.height_at(x))
}

/// Shape-preserving piecewise cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneInterpolant {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneInterpolant {
    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn eval(&self, xq: f64) -> Result<f64> {
        pchip_eval(self, xq)
    }
}

pub fn pchip_build(xs: &[f64], ys: &[f64]) -> Result<MonotoneInterpolant> {
    if xs.len() != ys.len() {
        return Err(Error::Input(format!(
            "{} knot positions but {} knot values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Input("PCHIP needs at least 2 knots".into()));
    }
    check_increasing(xs)?;
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Input("knot values must be finite".into()));
    }

    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();

    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        for k in 1..n - 1 {
            let (a, b) = (delta[k - 1], delta[k]);
            if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
                d[k] = 0.0;
            } else {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    Ok(MonotoneInterpolant { xs: xs.to_vec(), ys: ys.to_vec(), slopes: d })
}

/// One-sided three-point end slope, limited to keep the end interval monotone.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == 0.0 {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

pub fn pchip_eval(interp: &MonotoneInterpolant, xq: f64) -> Result<f64> {
    let xs = &interp.xs;
    let n = xs.len();
    let (lo, hi) = (xs[0], xs[n - 1]);
    if !(xq >= lo && xq <= hi) {
        return Err(Error::Extrapolation { x: xq, lo, hi });
    }
    // index of the interval [xs[k], xs[k+1]] containing xq
    let k = match xs.binary_search_by(|v| v.total_cmp(&xq)) {
        Ok(i) => return Ok(interp.ys[i]),
        Err(i) => i - 1,
    };
    let h = xs[k + 1] - xs[k];
    let t = (xq - xs[k]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    Ok(h00 * interp.ys[k]
        + h10 * h * interp.slopes[k]
        + h01 * interp.ys[k + 1]
        + h11 * h * interp.slopes[k + 1])
}

/// PCHIP values of `field` at every node of `target`.
pub fn resample_bathymetry(field: &BathymetryField, target: &Grid) -> Result<Vec<f64>> {
    let interp = pchip_build(field.grid.nodes(), &field.heights)?;
    target.nodes().iter().map(|&x| pchip_eval(&interp, x)).collect()
}

/// Least-squares fit of the fixed-height bump to `field`.
///
/// A coarse scan over position (0.05 m steps across the grid) and width
/// (log-spaced over `[1e-3, 1]`) seeds a Nelder–Mead refinement in
/// `(position, ln width)`.
pub fn fit_gaussian_bump(field: &BathymetryField) -> Result<GaussianBumpParams> {
    if field.heights.iter().all(|&h| h == 0.0) {
        return Err(Error::Fit("profile is identically zero".into()));
    }
    let xs = field.grid.nodes();
    let ys = &field.heights;
    let objective = |p: &[f64; 2]| -> f64 {
        let params = GaussianBumpParams { position: p[0], width: p[1].exp() };
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = params.height_at(x) - y;
                r * r
            })
            .sum()
    };

    let (lo, hi) = (field.grid.start(), field.grid.end());
    let n_pos = ((hi - lo) / 0.05).floor() as usize + 1;
    let n_width = 61;
    let (ln_min, ln_max) = (1e-3f64.ln(), 0.0f64);
    let mut best = ([lo, ln_min], f64::INFINITY);
    for i in 0..n_pos {
        let p = lo + 0.05 * i as f64;
        for j in 0..n_width {
            let lw = ln_min + (ln_max - ln_min) * j as f64 / (n_width - 1) as f64;
            let f = objective(&[p, lw]);
            if f < best.1 {
                best = ([p, lw], f);
            }
        }
    }

    let (opt, _) = nelder_mead(objective, best.0, [0.05, 0.2], 1e-8, 4000);
    GaussianBumpParams::new(opt[0], opt[1].exp())
        .map_err(|e| Error::Fit(format!("refinement left the admissible region: {e}")))
}

/// Minimal 2-parameter Nelder–Mead. Stops once the objective spread over the
/// simplex is below `ftol` relative to the best value, or the simplex collapses.
fn nelder_mead<F: Fn(&[f64; 2]) -> f64>(
    f: F,
    start: [f64; 2],
    step: [f64; 2],
    ftol: f64,
    max_iter: usize,
) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(|p| f(&p));

    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        if values[2] - values[0] <= ftol * values[0].abs() || simplex_size(&simplex) < 1e-10 {
            break;
        }

        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| -> [f64; 2] {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    values[k] = f(&simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best], values[best])
}

fn simplex_size(s: &[[f64; 2]; 3]) -> f64 {
    let d = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(&s[0], &s[1]).max(d(&s[0], &s[2]))
}
