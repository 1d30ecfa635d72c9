//! The six subcommands. Each takes a validated [`RunConfig`] and writes an
//! [`OutputBundle`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use bathyfer::fields::{resample_bathymetry, BathymetryField, GaussianBumpParams, Grid};
use bathyfer::mcmc::{run_multichain, Chain, MultiChainResult};
use bathyfer::observe::{
    average_repeats, calibrate_noise, format_measurements, load_measurements, synthesize_measurements,
    MeasurementSeries, NoiseModel, SyntheticTruth,
};
use bathyfer::posterior::{landscape, local_maxima, ParameterSpace, PosteriorModel};
use bathyfer::stats::{error_report, field_summary, summarize, summarize_chains, ErrorReport};
use bathyfer::swe::{solve_forward_from, BoundaryForcing};
use bathyfer::Error;

use crate::bundle::OutputBundle;
use crate::config::{DataSource, RunConfig, SpaceKind, SweepTarget, TruthSpec};
use crate::CliError;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// What a command touched, in order. Lets tests check that the truth is
/// only consulted outside inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    TruthRead,
    InferenceStarted,
    InferenceFinished,
}

#[derive(Debug, Default)]
pub struct AccessLog(Mutex<Vec<Event>>);

impl AccessLog {
    pub fn record(&self, e: Event) {
        self.0.lock().expect("access log poisoned").push(e);
    }

    pub fn events(&self) -> Vec<Event> {
        self.0.lock().expect("access log poisoned").clone()
    }
}

/// Everything a command needs besides the config.
pub struct Invocation<'a> {
    pub config: &'a RunConfig,
    pub config_bytes: &'a [u8],
    pub out: PathBuf,
    pub log: &'a AccessLog,
}

impl Invocation<'_> {
    fn bundle(&self, command: &str) -> CliResult<OutputBundle> {
        Ok(OutputBundle::create(&self.out, command, self.config_bytes, self.config.seed)?)
    }
}

/// Forcing and observation-sensor records ready for calibration and inference.
#[derive(Debug, Clone)]
pub struct Observations {
    pub forcing: BoundaryForcing,
    /// Observation sensors only.
    pub observed: MeasurementSeries,
    /// Boundary column followed by the observation sensors.
    pub full: MeasurementSeries,
}

fn read_truth(spec: &TruthSpec, log: &AccessLog) -> CliResult<SyntheticTruth> {
    Ok(match spec {
        TruthSpec::Bump { position, width } => {
            SyntheticTruth::Bump(GaussianBumpParams::new(*position, *width)?)
        }
        TruthSpec::File { path } => {
            log.record(Event::TruthRead);
            SyntheticTruth::Field(BathymetryField::read_csv(path)?)
        }
    })
}

fn truth_heights(truth: &SyntheticTruth, grid: &Grid) -> CliResult<Vec<f64>> {
    Ok(match truth {
        SyntheticTruth::Bump(p) => grid.nodes().iter().map(|&x| p.height_at(x)).collect(),
        SyntheticTruth::Field(f) => resample_bathymetry(f, grid)?,
    })
}

/// The known bed on the reconstruction grid, if the config names one.
pub fn truth_on_grid(config: &RunConfig, log: &AccessLog) -> CliResult<Option<Vec<f64>>> {
    let grid = config.reconstruction_grid()?;
    let spec = match &config.data {
        DataSource::Synthetic { truth, .. } => truth.clone(),
        DataSource::Measurements { truth: Some(path), .. } => TruthSpec::File { path: path.clone() },
        DataSource::Measurements { truth: None, .. } => return Ok(None),
    };
    Ok(Some(truth_heights(&read_truth(&spec, log)?, &grid)?))
}

/// Synthesizes or loads the observations. Synthetic data use the config seed
/// and the configured analytic forcing; measured data are averaged over
/// repetitions and forced by the boundary sensor's record.
pub fn observations(config: &RunConfig, log: &AccessLog) -> CliResult<(Observations, Option<MeasurementSeries>)> {
    match &config.data {
        DataSource::Synthetic { truth, forcing, noise_fraction } => {
            let truth = read_truth(truth, log)?;
            let data = synthesize_measurements(
                &truth,
                &config.truth_solver,
                forcing,
                &config.sensors,
                *noise_fraction,
                config.seed,
            )?;
            let observed = data.noisy.select(&config.sensors.observation)?;
            let obs = Observations { forcing: forcing.clone(), observed, full: data.noisy };
            Ok((obs, Some(data.clean)))
        }
        DataSource::Measurements { path, .. } => {
            let reps = load_measurements(path, config.sensors.rate)?;
            let full = average_repeats(&reps)?;
            let (forcing, observed) = full.split_boundary(&config.sensors)?;
            Ok((Observations { forcing, observed, full }, None))
        }
    }
}

/// Per-sensor variance of the observations about a flat-bed run.
pub fn calibrate(config: &RunConfig, obs: &Observations) -> CliResult<NoiseModel> {
    let flat = vec![0.0; config.solver.n_cells];
    let t0 = obs.observed.times()[0];
    let sim = solve_forward_from(&flat, &config.solver, &obs.forcing, &config.sensors.observation, t0)?;
    Ok(calibrate_noise(&obs.observed, &sim)?)
}

pub fn build_model(config: &RunConfig, obs: &Observations, noise: NoiseModel) -> CliResult<PosteriorModel> {
    let space = config.parameter_space();
    Ok(PosteriorModel::new(
        space,
        config.reconstruction_grid()?,
        config.solver.clone(),
        obs.forcing.clone(),
        obs.observed.clone(),
        noise,
        config.prior.build(space.dim())?,
    )?)
}

/// Runs the configured chains; every chain uses the config seed on its own stream.
pub fn run_chains(config: &RunConfig, model: &PosteriorModel, log: &AccessLog) -> CliResult<MultiChainResult> {
    let proposal = config.build_proposal()?;
    let inits = config.inits();
    let seeds = vec![config.seed; inits.len()];
    log.record(Event::InferenceStarted);
    let result = run_multichain(model, &proposal, &inits, config.chains.samples, config.chains.burn_in, &seeds);
    log.record(Event::InferenceFinished);
    match result {
        Ok(r) if r.kept.is_empty() => Err(CliError::AllDiscarded(format!(
            "no chain has a finite mean log-posterior ({} ran, {} failed)",
            r.chains.len(),
            r.failed.len()
        ))),
        Ok(r) => Ok(r),
        Err(e) => Err(CliError::AllDiscarded(e.to_string())),
    }
}

fn pooled_samples(result: &MultiChainResult) -> Vec<Vec<f64>> {
    result.kept_chains().flat_map(|c| c.samples.iter().cloned()).collect()
}

fn parameter_names(space: ParameterSpace) -> Vec<String> {
    match space {
        ParameterSpace::Parametric2D => vec!["position".into(), "width".into()],
        ParameterSpace::Gridded { nodes } => (0..nodes).map(|i| format!("b_{i}")).collect(),
    }
}

fn chain_csv(chain: &Chain, index: usize, kept: bool, names: &[String]) -> String {
    let mut s = String::new();
    let init: Vec<String> = chain.initial.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(
        s,
        "# chain={index} seed={} stream={} burn_in={} scale={} kept={kept} init={}",
        chain.seed,
        chain.stream,
        chain.burn_in,
        chain.scale,
        init.join(";")
    );
    s.push_str("step,log_posterior,accepted");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (k, (theta, lp)) in chain.samples.iter().zip(&chain.log_posteriors).enumerate() {
        let _ = write!(s, "{k},{lp},{}", u8::from(chain.accepted[k]));
        for v in theta {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn chains_table(result: &MultiChainResult) -> CliResult<String> {
    let mut s = String::from("chain,status,acceptance_rate,burn_in_acceptance,final_scale,mean_log_posterior,min_ess\n");
    let mut ran = result.chains.iter();
    let failed: std::collections::BTreeMap<usize, &String> =
        result.failed.iter().map(|(i, m)| (*i, m)).collect();
    let total = result.chains.len() + result.failed.len();
    let mut k = 0;
    for i in 0..total {
        if let Some(msg) = failed.get(&i) {
            let _ = writeln!(s, "{i},failed: {},,,,,", msg.replace(',', ";"));
            continue;
        }
        let c = ran.next().expect("chain count");
        let status = if result.kept.contains(&k) { "kept" } else { "discarded" };
        let ess = summarize(&c.samples)?.ess.into_iter().fold(f64::INFINITY, f64::min);
        let burn = if c.burn_in == 0 { 0.0 } else { c.burn_in_accepted as f64 / c.burn_in as f64 };
        let _ = writeln!(
            s,
            "{i},{status},{},{burn},{},{},{ess}",
            c.acceptance_rate(),
            c.scale,
            c.mean_log_posterior()
        );
        k += 1;
    }
    Ok(s)
}

fn metric(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| x.to_string())
}

/// Summary figures written to `report.csv`.
#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    pub result: MultiChainResult,
    pub mean_parameters: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub field_mean: Vec<f64>,
    pub errors: Option<ErrorReport>,
}

pub fn cmd_simulate(inv: &Invocation) -> CliResult<()> {
    let config = inv.config;
    if !matches!(config.data, DataSource::Synthetic { .. }) {
        return Err(Error::Input("simulate needs a synthetic data source".into()).into());
    }
    let (obs, clean) = observations(config, inv.log)?;
    let clean = clean.expect("synthetic data have a clean series");
    let mut bundle = inv.bundle("simulate")?;
    bundle.write("measurements.csv", format_measurements(&[obs.full])?.as_bytes())?;
    bundle.write("clean.csv", format_measurements(&[clean])?.as_bytes())?;
    if let Some(truth) = truth_on_grid(config, inv.log)? {
        bundle.write("truth.csv", field_csv(config.reconstruction_grid()?.nodes(), &truth).as_bytes())?;
    }
    bundle.finish()?;
    Ok(())
}

fn field_csv(x: &[f64], b: &[f64]) -> String {
    let mut s = String::from("x,b\n");
    for (x, b) in x.iter().zip(b) {
        let _ = writeln!(s, "{x},{b}");
    }
    s
}

fn noise_csv(positions: &[f64], noise: &NoiseModel) -> String {
    let mut s = String::from("sensor,variance\n");
    for (p, v) in positions.iter().zip(noise.variances()) {
        let _ = writeln!(s, "{p},{v}");
    }
    s
}

pub fn cmd_calibrate(inv: &Invocation) -> CliResult<()> {
    let (obs, _) = observations(inv.config, inv.log)?;
    let noise = calibrate(inv.config, &obs)?;
    let mut bundle = inv.bundle("calibrate")?;
    bundle.write("noise.csv", noise_csv(obs.observed.positions(), &noise).as_bytes())?;
    bundle.finish()?;
    Ok(())
}

/// Data, calibration and chains; no truth is consulted in here apart from
/// synthesizing the data.
pub fn infer(config: &RunConfig, log: &AccessLog) -> CliResult<(Observations, NoiseModel, PosteriorModel, MultiChainResult)> {
    let (obs, _) = observations(config, log)?;
    let noise = calibrate(config, &obs)?;
    let model = build_model(config, &obs, noise.clone())?;
    let result = run_chains(config, &model, log)?;
    Ok((obs, noise, model, result))
}

/// Pooled summaries of the kept chains plus errors against `truth`.
pub fn summarize_outcome(
    config: &RunConfig,
    result: MultiChainResult,
    truth: Option<&[f64]>,
) -> CliResult<InferenceOutcome> {
    let kept: Vec<&[Vec<f64>]> = result.kept_chains().map(|c| c.samples.as_slice()).collect();
    let summary = summarize_chains(&kept)?;
    let grid = config.reconstruction_grid()?;
    let fs = field_summary(&pooled_samples(&result), config.parameter_space(), &grid)?;
    let errors = truth.map(|t| error_report(&fs.mean, t)).transpose()?;
    Ok(InferenceOutcome {
        result,
        mean_parameters: summary.mean,
        standard_errors: summary.standard_error,
        field_mean: fs.mean,
        errors,
    })
}

pub fn cmd_infer(inv: &Invocation) -> CliResult<InferenceOutcome> {
    let config = inv.config;
    let space = config.parameter_space();
    let names = parameter_names(space);
    let mut bundle = inv.bundle("infer")?;

    let (obs, noise, model, result) = match infer(config, inv.log) {
        Ok(v) => v,
        Err(e) => {
            bundle.finish()?;
            return Err(e);
        }
    };
    bundle.write("noise.csv", noise_csv(obs.observed.positions(), &noise).as_bytes())?;
    let total = result.chains.len() + result.failed.len();
    let mut ran = 0;
    for i in 0..total {
        if result.failed.iter().any(|(f, _)| *f == i) {
            continue;
        }
        let kept = result.kept.contains(&ran);
        let width = if total > 9 { 2 } else { 1 };
        bundle.write(
            &format!("chain_{i:0width$}.csv"),
            chain_csv(&result.chains[ran], i, kept, &names).as_bytes(),
        )?;
        ran += 1;
    }
    bundle.write("chains.csv", chains_table(&result)?.as_bytes())?;

    let truth = truth_on_grid(config, inv.log)?;
    let grid = config.reconstruction_grid()?;
    let kept: Vec<&[Vec<f64>]> = result.kept_chains().map(|c| c.samples.as_slice()).collect();
    let summary = summarize_chains(&kept)?;
    let fs = field_summary(&pooled_samples(&result), space, &grid)?;

    let mut s = String::from("parameter,mean,sd,ess,standard_error,lo95,hi95\n");
    for (i, n) in names.iter().enumerate() {
        let _ = writeln!(
            s,
            "{n},{},{},{},{},{},{}",
            summary.mean[i], summary.sd[i], summary.ess[i], summary.standard_error[i], summary.lo95[i], summary.hi95[i]
        );
    }
    bundle.write("parameters.csv", s.as_bytes())?;

    let mut s = String::from("x,mean,lo95,hi95,truth\n");
    for i in 0..fs.x.len() {
        let t = truth.as_ref().map_or_else(|| "absent".to_string(), |t| t[i].to_string());
        let _ = writeln!(s, "{},{},{},{},{t}", fs.x[i], fs.mean[i], fs.lo95[i], fs.hi95[i]);
    }
    bundle.write("field_summary.csv", s.as_bytes())?;

    let outcome = summarize_outcome(config, result, truth.as_deref())?;
    let kept_chains: Vec<&Chain> = outcome.result.kept_chains().collect();
    let acceptance = kept_chains.iter().map(|c| c.acceptance_rate()).sum::<f64>() / kept_chains.len() as f64;
    let e = outcome.errors;
    let mut s = String::from("metric,value\n");
    let rows: [(&str, String); 10] = [
        ("nrmse", metric(e.map(|e| e.nrmse))),
        ("nrmse_percent", metric(e.map(|e| e.nrmse_percent()))),
        ("rel_l2_percent", metric(e.map(|e| e.rel_l2))),
        ("rel_linf_percent", metric(e.map(|e| e.rel_linf))),
        ("peak_height", fs.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max).to_string()),
        ("acceptance_rate", acceptance.to_string()),
        ("min_ess", summary.ess.iter().copied().fold(f64::INFINITY, f64::min).to_string()),
        ("chains_kept", outcome.result.kept.len().to_string()),
        ("chains_total", total.to_string()),
        ("forward_solves", model.forward_solves().to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    bundle.write("report.csv", s.as_bytes())?;
    bundle.finish()?;
    Ok(outcome)
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target: f64,
    pub truth: GaussianBumpParams,
    pub outcome: Option<(Vec<f64>, Vec<f64>, usize)>,
    pub failed: bool,
}

pub fn cmd_sweep(inv: &Invocation) -> CliResult<Vec<SweepRow>> {
    let config = inv.config;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Input("sweep needs a `sweep` section".into()))?;
    if config.space != SpaceKind::Parametric {
        return Err(Error::Input("sweeps need the parametric space".into()).into());
    }
    let (base, forcing, noise_fraction) = match &config.data {
        DataSource::Synthetic { truth: TruthSpec::Bump { position, width }, forcing, noise_fraction } => {
            ((*position, *width), forcing.clone(), *noise_fraction)
        }
        _ => return Err(Error::Input("sweeps need a synthetic bump truth".into()).into()),
    };

    let mut rows = Vec::new();
    for &v in &sweep.values {
        let (position, width) = match sweep.vary {
            SweepTarget::Position => (v, base.1),
            SweepTarget::Width => (base.0, v),
        };
        let mut point = config.clone();
        point.data = DataSource::Synthetic {
            truth: TruthSpec::Bump { position, width },
            forcing: forcing.clone(),
            noise_fraction,
        };
        point.sweep = None;
        point.validate()?;
        let truth = GaussianBumpParams::new(position, width)?;
        let row = match infer(&point, inv.log) {
            Ok((_, _, _, result)) => {
                let o = summarize_outcome(&point, result, None)?;
                let failed = (o.mean_parameters[0] - position).abs() > sweep.position_tolerance
                    || (o.mean_parameters[1] - width).abs() / width > sweep.width_tolerance;
                SweepRow {
                    target: v,
                    truth,
                    outcome: Some((o.mean_parameters, o.standard_errors, o.result.kept.len())),
                    failed,
                }
            }
            Err(CliError::AllDiscarded(_)) => SweepRow { target: v, truth, outcome: None, failed: true },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }

    let vary = match sweep.vary {
        SweepTarget::Position => "position",
        SweepTarget::Width => "width",
    };
    let mut s = String::from(
        "vary,target,true_position,true_width,position_mean,position_se,width_mean,width_se,kept,failed\n",
    );
    for r in &rows {
        let _ = write!(s, "{vary},{},{},{},", r.target, r.truth.position, r.truth.width);
        match &r.outcome {
            Some((m, se, kept)) => {
                let _ = write!(s, "{},{},{},{},{kept}", m[0], se[0], m[1], se[1]);
            }
            None => s.push_str("NaN,NaN,NaN,NaN,0"),
        }
        let _ = writeln!(s, ",{}", r.failed);
    }
    let mut bundle = inv.bundle("sweep")?;
    bundle.write("sweep.csv", s.as_bytes())?;
    bundle.finish()?;
    Ok(rows)
}

/// Log-posterior grid and its local maxima.
#[derive(Debug, Clone)]
pub struct LandscapeOutcome {
    pub positions: Vec<f64>,
    pub widths: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub maxima: Vec<(usize, usize)>,
    pub chains: Option<MultiChainResult>,
}

pub fn cmd_landscape(inv: &Invocation) -> CliResult<LandscapeOutcome> {
    let config = inv.config;
    if config.space != SpaceKind::Parametric {
        return Err(Error::Input("landscapes need the parametric space".into()).into());
    }
    let settings = config.landscape.clone().unwrap_or_default();
    let (obs, _) = observations(config, inv.log)?;
    let noise = calibrate(config, &obs)?;
    let model = build_model(config, &obs, noise)?;
    let positions = settings.positions.values();
    let widths = settings.widths.values();
    let values = landscape(&model, &positions, &widths)?;
    let maxima = local_maxima(&values);

    let mut bundle = inv.bundle("landscape")?;
    let mut s = String::from("# rows ordered by b_p (outer) then b_w (inner)\nb_p,b_w,log_posterior\n");
    for (i, p) in positions.iter().enumerate() {
        for (j, w) in widths.iter().enumerate() {
            let _ = writeln!(s, "{p},{w},{}", values[i][j]);
        }
    }
    bundle.write("landscape.csv", s.as_bytes())?;
    let mut s = String::from("b_p,b_w,log_posterior\n");
    for &(i, j) in &maxima {
        let _ = writeln!(s, "{},{},{}", positions[i], widths[j], values[i][j]);
    }
    bundle.write("landscape_maxima.csv", s.as_bytes())?;

    let chains = if settings.chain_paths {
        let result = run_chains(config, &model, inv.log)?;
        for (k, c) in result.chains.iter().enumerate() {
            let mut s = String::from("step,b_p,b_w,log_posterior\n");
            for (n, (t, lp)) in c.samples.iter().zip(&c.log_posteriors).enumerate() {
                let _ = writeln!(s, "{n},{},{},{lp}", t[0], t[1]);
            }
            bundle.write(&format!("chain_path_{k}.csv"), s.as_bytes())?;
        }
        Some(result)
    } else {
        None
    };
    bundle.finish()?;
    Ok(LandscapeOutcome { positions, widths, values, maxima, chains })
}

fn parse_metrics(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut lines = text.lines();
    if lines.next() != Some("metric,value") {
        return Err(Error::Input("report.csv has an unexpected header".into()).into());
    }
    lines
        .map(|l| {
            l.split_once(',')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| Error::Input(format!("bad report line {l:?}")).into())
        })
        .collect()
}

/// The five headline metrics in table order.
pub const REPORT_COLUMNS: [&str; 5] =
    ["nrmse_percent", "rel_l2_percent", "rel_linf_percent", "acceptance_rate", "min_ess"];

/// Consolidates an inference bundle into `report.txt` and `report_table.csv`.
pub fn cmd_report(dir: &Path) -> CliResult<()> {
    let mut bundle = OutputBundle::open(dir)?;
    if bundle.manifest().command != "infer" {
        return Err(Error::Input(format!(
            "{} holds a `{}` bundle; report needs an inference bundle",
            dir.display(),
            bundle.manifest().command
        ))
        .into());
    }
    let metrics = parse_metrics(&bundle.read("report.csv")?)?;
    let chains = bundle.read("chains.csv")?;
    bundle.read("field_summary.csv")?;
    let lookup = |k: &str| -> CliResult<String> {
        metrics
            .iter()
            .find(|(m, _)| m == k)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Input(format!("report.csv lacks {k}")).into())
    };

    let mut table = REPORT_COLUMNS.join(",");
    table.push('\n');
    let values = REPORT_COLUMNS.iter().map(|k| lookup(k)).collect::<CliResult<Vec<_>>>()?;
    table.push_str(&values.join(","));
    table.push('\n');

    let mut text = String::new();
    let _ = writeln!(text, "Inference summary (seed {}, version {})", bundle.manifest().seed, bundle.manifest().code_version);
    let _ = writeln!(text);
    for (k, v) in &metrics {
        let _ = writeln!(text, "  {k:<18} {v}");
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "Chains:");
    for l in chains.lines().skip(1) {
        let _ = writeln!(text, "  {l}");
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "Field summary with truth overlay: field_summary.csv");

    bundle.write("report.txt", text.as_bytes())?;
    bundle.write("report_table.csv", table.as_bytes())?;
    bundle.finish()?;
    Ok(())
}
