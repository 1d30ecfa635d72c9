use bathyfer::fields::*;
use bathyfer::mcmc::*;
use bathyfer::observe::{MeasurementSeries, NoiseModel};
use bathyfer::posterior::*;
use bathyfer::priors::*;
use bathyfer::stats::*;
use bathyfer::swe::{solve_forward, BoundaryForcing, SolverConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SENSORS: [f64; 3] = [3.5, 5.5, 7.5];

fn short_solver() -> SolverConfig {
    SolverConfig { n_cells: 64, t_end: 2.0, ..SolverConfig::default() }
}

fn forcing() -> BoundaryForcing {
    BoundaryForcing::Sinusoid { level: 0.3, amplitude: 0.02, frequency: 0.5, ramp_time: 0.0 }
}

fn observed() -> MeasurementSeries {
    let fine = SolverConfig { n_cells: 96, dt: 5e-3, ..short_solver() };
    let p = GaussianBumpParams::new(4.0, 0.05).unwrap();
    let bed: Vec<f64> = fine.grid().unwrap().nodes().iter().map(|&x| p.height_at(x)).collect();
    solve_forward(&bed, &fine, &forcing(), &SENSORS).unwrap()
}

fn flat_prior() -> PriorSpec {
    PriorSpec::PerCoordinate {
        priors: vec![PriorSpec::Uniform { lo: 1.5, hi: 12.5 }, PriorSpec::Uniform { lo: 0.0, hi: 1.0 }],
    }
}

fn model_with(observed: MeasurementSeries, variances: Vec<f64>) -> PosteriorModel {
    PosteriorModel::new(
        ParameterSpace::Parametric2D,
        Grid::uniform(1.5, 13.0, 64).unwrap(),
        short_solver(),
        forcing(),
        observed,
        NoiseModel::new(variances, 1e-12).unwrap(),
        flat_prior().build(2).unwrap(),
    )
    .unwrap()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

// ---- fields

proptest! {
    #[test]
    fn pchip_reproduces_knots(
        gaps in prop::collection::vec(0.01..2.0f64, 2..20),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = vec![0.0];
        for g in &gaps {
            xs.push(xs.last().unwrap() + g);
        }
        let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(-5.0..5.0)).collect();
        let p = pchip_build(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let v = pchip_eval(&p, *x).unwrap();
            prop_assert!((v - y).abs() <= 1e-14 * y.abs().max(1.0));
        }
    }

    #[test]
    fn pchip_has_no_overshoot_on_monotone_stretches(
        gaps in prop::collection::vec(0.05..1.0f64, 3..12),
        steps in prop::collection::vec(0.0..1.0f64, 12),
        decreasing in any::<bool>(),
    ) {
        let mut xs = vec![0.0];
        for g in &gaps {
            xs.push(xs.last().unwrap() + g);
        }
        let mut ys = vec![0.0];
        for s in steps.iter().take(xs.len() - 1) {
            ys.push(ys.last().unwrap() + if decreasing { -s } else { *s });
        }
        let p = pchip_build(&xs, &ys).unwrap();
        let (lo, hi) = (xs[0], *xs.last().unwrap());
        let mut prev = pchip_eval(&p, lo).unwrap();
        for k in 1..1000 {
            let v = pchip_eval(&p, (lo + (hi - lo) * k as f64 / 999.0).min(hi)).unwrap();
            if decreasing {
                prop_assert!(v <= prev + 1e-12);
            } else {
                prop_assert!(v >= prev - 1e-12);
            }
            prev = v;
        }
    }

    #[test]
    fn bump_is_symmetric(position in 1.5..12.5f64, width in 0.005..1.0f64, delta in 0.0..5.0f64) {
        let p = GaussianBumpParams::new(position, width).unwrap();
        let (a, b) = (gaussian_bump_eval(&p, position + delta).unwrap(), gaussian_bump_eval(&p, position - delta).unwrap());
        prop_assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn resample_roundtrip_converges_at_second_order() {
    let f = |x: f64| 0.1 * x.sin() + 0.05 * (2.3 * x).cos();
    let error = |n: usize| {
        let grid = Grid::uniform(1.5, 13.0, n).unwrap();
        let field = BathymetryField::new(grid.clone(), grid.nodes().iter().map(|&x| f(x)).collect()).unwrap();
        let other = Grid::cell_centers(1.5, 13.0, n + n / 2).unwrap();
        let there = BathymetryField::new(other.clone(), resample_bathymetry(&field, &other).unwrap()).unwrap();
        // resample back onto the interior nodes the intermediate grid covers
        let inner = Grid::from_nodes(grid.nodes().iter().copied().filter(|&x| x >= other.nodes()[0] && x <= other.nodes()[other.len() - 1]).collect()).unwrap();
        let back = resample_bathymetry(&there, &inner).unwrap();
        inner.nodes().iter().zip(&back).map(|(&x, b)| (b - f(x)).abs()).fold(0.0, f64::max)
    };
    // least-squares slope of log(error) against log(dx) over several refinements
    let ns = [48usize, 64, 96, 128, 192, 256, 384];
    let pts: Vec<(f64, f64)> = ns.iter().map(|&n| ((11.5 / (n - 1) as f64).ln(), error(n).ln())).collect();
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / 7.0, pts.iter().map(|p| p.1).sum::<f64>() / 7.0);
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum::<f64>();
    assert!(slope >= 1.8, "refinement slope {slope}");
}

// ---- priors

fn scalar_spec() -> impl Strategy<Value = PriorSpec> {
    prop_oneof![
        (-2.0..0.0f64, 0.1..2.0f64).prop_map(|(lo, w)| PriorSpec::Uniform { lo, hi: lo + w }),
        (-1.0..1.0f64, 0.01..1.0f64).prop_map(|(mean, variance)| PriorSpec::Gaussian { mean, variance }),
        (0.001..1.0f64).prop_map(|scale| PriorSpec::CauchySparse { scale }),
    ]
}

proptest! {
    #[test]
    fn composite_is_sum_of_parts(
        a in scalar_spec(),
        b in scalar_spec(),
        points in prop::collection::vec(prop::collection::vec(-1.5..1.5f64, 4), 100),
    ) {
        let composite = PriorSpec::Composite { priors: vec![a.clone(), b.clone()] }.build(4).unwrap();
        let (pa, pb) = (a.build(4).unwrap(), b.build(4).unwrap());
        for p in &points {
            let sum = pa.log_density(p).unwrap() + pb.log_density(p).unwrap();
            let c = composite.log_density(p).unwrap();
            prop_assert!(c == sum || (c - sum).abs() <= 1e-12 * sum.abs());
        }
    }

    #[test]
    fn cauchy_symmetric_and_peaked_at_zero(
        scale in 0.001..1.0f64,
        theta in prop::collection::vec(-2.0..2.0f64, 5),
        flip in 0usize..5,
    ) {
        let p = PriorSpec::CauchySparse { scale }.build(5).unwrap();
        let mut mirrored = theta.clone();
        mirrored[flip] = -mirrored[flip];
        prop_assert_eq!(p.log_density(&theta).unwrap(), p.log_density(&mirrored).unwrap());
        prop_assert!(p.log_density(&[0.0; 5]).unwrap() >= p.log_density(&theta).unwrap());
    }

    #[test]
    fn log_prior_finite_inside_impossible_outside(
        lo in -1.0..0.0f64,
        width in 0.1..2.0f64,
        x in -3.0..3.0f64,
    ) {
        let hi = lo + width;
        let p = PriorSpec::PerCoordinate {
            priors: vec![PriorSpec::Uniform { lo, hi }, PriorSpec::CauchySparse { scale: 0.1 }],
        }
        .build(2)
        .unwrap();
        let v = log_prior(&p, &[x, x]).unwrap();
        prop_assert!(!v.is_nan());
        if (lo..=hi).contains(&x) {
            prop_assert!(v.is_finite());
        } else {
            prop_assert_eq!(v, IMPOSSIBLE);
        }
        prop_assert_eq!(log_prior(&p, &[f64::NAN, x]).unwrap(), IMPOSSIBLE);
    }

    #[test]
    fn smoothness_prefers_smooth_fields(seed in any::<u64>()) {
        let cov = build_se_covariance(64, 0.005, 2.0).unwrap();
        let prior = PriorSpec::Smoothness { variance: 0.005, length_scale: 2.0 }.build(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let smooth = sample_mvn(&cov, &mut rng);
        let mut rough = smooth.clone();
        rough.shuffle(&mut rng);
        prop_assert!(prior.log_density(&smooth).unwrap() > prior.log_density(&rough).unwrap());
    }
}

// ---- posterior

#[test]
fn likelihood_ignores_sensor_order() {
    let obs = observed();
    let vars = vec![1e-6, 2e-6, 4e-6];
    let model = model_with(obs.clone(), vars.clone());
    let order = [2, 0, 1];
    let cols = order.iter().map(|&i| obs.column(i).to_vec()).collect();
    let pos = order.iter().map(|&i| SENSORS[i]).collect();
    let permuted = MeasurementSeries::new(obs.times().to_vec(), pos, cols).unwrap();
    let pmodel = model_with(permuted, order.iter().map(|&i| vars[i]).collect());
    for theta in [[4.0, 0.05], [5.0, 0.2], [3.2, 0.01]] {
        let (a, b) = (model.log_likelihood(&theta), pmodel.log_likelihood(&theta));
        assert!(relative(a, b) < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn duplicated_observations_double_the_likelihood() {
    let obs = observed();
    let model = model_with(obs.clone(), vec![1e-6; 3]);
    let cols = obs.columns().iter().chain(obs.columns()).cloned().collect();
    let pos = SENSORS.iter().chain(&SENSORS).copied().collect();
    let doubled = MeasurementSeries::new(obs.times().to_vec(), pos, cols).unwrap();
    let dmodel = model_with(doubled, vec![1e-6; 6]);
    for theta in [[4.0, 0.05], [6.0, 0.3]] {
        let (a, b) = (model.log_likelihood(&theta), dmodel.log_likelihood(&theta));
        assert!(relative(2.0 * a, b) < 1e-12, "2 * {a} vs {b}");
    }
}

#[test]
fn inflating_noise_scales_likelihood_differences() {
    let obs = observed();
    // small enough that a poor fit leaves residuals well above the noise
    let base = model_with(obs.clone(), vec![1e-10; 3]);
    let c = 3.0;
    let inflated = model_with(obs, vec![c * 1e-10; 3]);
    let (t1, t2) = ([4.0, 0.05], [6.0, 0.3]);
    let d_base = base.log_likelihood(&t1) - base.log_likelihood(&t2);
    let d_infl = inflated.log_likelihood(&t1) - inflated.log_likelihood(&t2);
    assert!(relative(d_infl, d_base / c) < 1e-9, "{d_infl} vs {}", d_base / c);
    // a poor fit gains likelihood when the noise is inflated
    assert!(inflated.log_likelihood(&t2) > base.log_likelihood(&t2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn log_posterior_is_never_nan(
        p in prop_oneof![Just(f64::NAN), Just(f64::INFINITY), -20.0..20.0f64],
        w in prop_oneof![Just(f64::NAN), Just(0.0), -1.0..2.0f64],
    ) {
        let model = model_with(observed(), vec![1e-6; 3]);
        let v = model.log_posterior(&[p, w]);
        prop_assert!(!v.is_nan());
    }
}

// ---- mcmc

struct Gauss2;

impl LogDensity for Gauss2 {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, t: &[f64]) -> f64 {
        -0.5 * (t[0] * t[0] + 4.0 * t[1] * t[1])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chains_are_reproducible_and_rejections_consistent(seed in any::<u64>(), stream in 1u64..8) {
        let proposal = Proposal::independent(vec![0.5, 0.5]).unwrap();
        let a = run_chain(&Gauss2, &proposal, &[1.0, 1.0], 500, 200, seed, stream).unwrap();
        let b = run_chain(&Gauss2, &proposal, &[1.0, 1.0], 500, 200, seed, stream).unwrap();
        prop_assert_eq!(&a, &b);
        for k in 1..a.len() {
            if a.samples[k] == a.samples[k - 1] {
                prop_assert!(!a.accepted[k]);
            } else {
                prop_assert!(a.accepted[k]);
            }
        }
    }
}

#[test]
fn stored_log_posteriors_match_reevaluation() {
    let model = model_with(observed(), vec![1e-6; 3]);
    let proposal = Proposal::independent(vec![1e-2, 1e-4]).unwrap();
    let chain = run_chain(&model, &proposal, &[4.5, 0.1], 60, 20, 3, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let k = rng.random_range(0..chain.len());
        let again = model.log_posterior(&chain.samples[k]);
        assert!((again - chain.log_posteriors[k]).abs() <= 1e-9 * again.abs().max(1.0));
    }
}

#[test]
fn three_state_detailed_balance() {
    // target probabilities 0.2, 0.3, 0.5; proposal picks one of the other two states uniformly
    let target = [0.2f64, 0.3, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut state = 0usize;
    let mut counts = [0usize; 3];
    let n = 1_000_000;
    for _ in 0..n {
        let candidate = (state + rng.random_range(1..3)) % 3;
        if accept(target[state].ln(), target[candidate].ln(), &mut rng) {
            state = candidate;
        }
        counts[state] += 1;
    }
    for (c, p) in counts.iter().zip(target) {
        let freq = *c as f64 / n as f64;
        assert!((freq - p).abs() / p < 0.02, "frequency {freq} vs {p}");
    }
}

// ---- stats

proptest! {
    #[test]
    fn exact_reconstruction_has_zero_error(truth in prop::collection::vec(-1.0..1.0f64, 2..40)) {
        prop_assume!(truth.iter().any(|t| (t - truth[0]).abs() > 1e-6));
        let e = error_report(&truth, &truth).unwrap();
        prop_assert_eq!((e.nrmse, e.rel_l2, e.rel_linf), (0.0, 0.0, 0.0));
    }

    #[test]
    fn nrmse_shift_and_scale_invariant(
        pairs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3..40),
        shift in -5.0..5.0f64,
        scale in 0.1..10.0f64,
    ) {
        let (recon, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(truth.iter().any(|t| (t - truth[0]).abs() > 1e-3));
        let base = error_report(&recon, &truth).unwrap().nrmse;
        let shifted = error_report(
            &recon.iter().map(|r| r + shift).collect::<Vec<_>>(),
            &truth.iter().map(|t| t + shift).collect::<Vec<_>>(),
        ).unwrap().nrmse;
        let scaled = error_report(
            &recon.iter().map(|r| r * scale).collect::<Vec<_>>(),
            &truth.iter().map(|t| t * scale).collect::<Vec<_>>(),
        ).unwrap().nrmse;
        prop_assert!((shifted - base).abs() <= 1e-9 * base.max(1e-12));
        prop_assert!((scaled - base).abs() <= 1e-9 * base.max(1e-12));
    }

    #[test]
    fn summary_mean_and_band_nesting(rows in prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 3), 10..200)) {
        let s = summarize(&rows).unwrap();
        for i in 0..3 {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let naive = col.iter().sum::<f64>() / col.len() as f64;
            prop_assert!((s.mean[i] - naive).abs() <= 1e-12 * naive.abs().max(1.0));
            prop_assert!(s.lo95[i] <= quantile(&col, 0.25) && quantile(&col, 0.75) <= s.hi95[i]);
            prop_assert!(s.ess[i] >= 1.0 && s.ess[i] <= col.len() as f64);
        }
    }
}
