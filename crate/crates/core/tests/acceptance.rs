//! One line per acceptance criterion. Exits non-zero if any line fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use riskbo::acquire::{select_x, stableopt_select, AcquisitionProblem, Domain, OptimizerConfig};
use riskbo::bench::{make_problem, Problem, ProblemName, ZMode};
use riskbo::bounds::{beta_practical, joint, ConfidenceField};
use riskbo::env::{make_discrete_grid, make_truncated_gaussian, DiscreteEnv, EnvDistribution, EnvSampler, WeightRule};
use riskbo::gp::{se_kernel, GpHyper, GpPosterior, ObservationSet};
use riskbo::lacing::{lv_candidates_discrete, LvMode};
use riskbo::risk::{bounds_on_atoms, estimate_var_pinball, var_discrete, PinballConfig};
use riskbo::surrogate::{lnso_maximize, BoxRef, LnsoConfig, SurrogateNet};
use riskbo::vucb::{certify_regret, run_vucb, sampled_hit_rate, AcqMode, CertificateStatus, CertifyOptions, RunConfig, RunTrace};

struct Outcome {
    pass: bool,
    detail: String,
}

/// `spent` is time already used by shared setup.
fn check(id: u32, name: &str, budget: Duration, spent: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed() + spent;
    let pass = out.pass && elapsed <= budget;
    println!(
        "criterion {id} {name}: {} ({}; {:.1}s of {}s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Joint draw of a zero-mean GP at `points`.
fn sample_prior(points: &[Vec<f64>], hyper: &GpHyper, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len();
    let k = DMatrix::from_fn(n, n, |i, j| se_kernel(&points[i], &points[j], hyper) + if i == j { 1e-8 } else { 0.0 });
    let l = k.cholesky().expect("prior covariance is positive definite").l();
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (l * eps).iter().copied().collect()
}

fn random_posterior(d_z: usize, n: usize, hyper: &GpHyper, rng: &mut ChaCha8Rng) -> GpPosterior {
    let mut data = ObservationSet::new(1, d_z);
    let (a, b) = (rng.random_range(2.0..8.0), rng.random_range(0.0..6.0));
    for _ in 0..n {
        let x = vec![rng.random::<f64>()];
        let z: Vec<f64> = (0..d_z).map(|_| rng.random()).collect();
        let y = (a * x[0] + b).sin() + z.iter().map(|v| (a * v).cos()).sum::<f64>() * 0.5 + 0.1 * rng.random::<f64>();
        data.push(x, z, y).unwrap();
    }
    GpPosterior::fit(&data, hyper).unwrap()
}

fn lv_existence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut nonempty = 0;
    for _ in 0..500 {
        let d_z = rng.random_range(1..=2);
        let hyper = GpHyper::isotropic(1 + d_z, rng.random_range(0.1..1.0), rng.random_range(0.5..2.0), 0.01).unwrap();
        let post = random_posterior(d_z, rng.random_range(0..15), &hyper, &mut rng);
        let m = rng.random_range(2..=60);
        let atoms: Vec<Vec<f64>> = (0..m).map(|_| (0..d_z).map(|_| rng.random()).collect()).collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
        let env = DiscreteEnv::from_weights(atoms, weights).unwrap();
        let field = ConfidenceField::new(&post, rng.random_range(0.0..10.0));
        let alpha = rng.random_range(0.01..0.99);
        let x = [rng.random::<f64>()];
        if lv_candidates_discrete(&field, &x, &env, alpha).is_ok_and(|c| !c.is_empty()) {
            nonempty += 1;
        }
    }
    Outcome { pass: nonempty == 500, detail: format!("{nonempty}/500 nonempty") }
}

fn var_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let hyper = GpHyper::isotropic(2, 0.3, 1.0, 0.01).unwrap();
    let env = make_discrete_grid(1, 30, WeightRule::GaussianBump).unwrap();
    let d = env.as_discrete().unwrap();
    let x = [0.5];
    let (mut held, mut violations) = (0, 0);
    for _ in 0..200 {
        let n_obs = rng.random_range(2..10);
        let mut points: Vec<Vec<f64>> = d.atoms().iter().map(|z| joint(&x, z)).collect();
        points.extend((0..n_obs).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]));
        let f = sample_prior(&points, &hyper, &mut rng);
        let mut data = ObservationSet::new(1, 1);
        for (p, fv) in points.iter().zip(&f).skip(d.len()) {
            data.push(vec![p[0]], vec![p[1]], fv + 0.1 * rng.sample::<f64, _>(StandardNormal)).unwrap();
        }
        let post = GpPosterior::fit(&data, &hyper).unwrap();
        let (l, u) = bounds_on_atoms(&ConfidenceField::new(&post, 2.0), &x, d.atoms());
        let fa = &f[..d.len()];
        if !fa.iter().zip(l.iter().zip(&u)).all(|(v, (lo, hi))| lo <= v && v <= hi) {
            continue;
        }
        held += 1;
        for alpha in [0.1, 0.5, 0.9] {
            let vl = var_discrete(&l, d.masses(), alpha).unwrap();
            let vf = var_discrete(fa, d.masses(), alpha).unwrap();
            let vu = var_discrete(&u, d.masses(), alpha).unwrap();
            if !(vl <= vf && vf <= vu) {
                violations += 1;
            }
        }
    }
    Outcome { pass: violations == 0 && held > 0, detail: format!("{violations} violations over {held} in-band functions") }
}

fn certificate() -> Outcome {
    let hyper = GpHyper::isotropic(2, 0.3, 1.0, 0.01).unwrap();
    let xs: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0]).collect();
    let (mut pass, mut bound_violated, mut event_violated, mut uncertified) = (0, 0, 0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let env = make_discrete_grid(1, 10, WeightRule::GaussianBump).unwrap();
        let atoms = env.as_discrete().unwrap().atoms().to_vec();
        let points: Vec<Vec<f64>> = xs.iter().flat_map(|x| atoms.iter().map(move |z| joint(x, z))).collect();
        let f = sample_prior(&points, &hyper, &mut rng);
        let nearest = |grid: &[Vec<f64>], v: f64| {
            (0..grid.len()).min_by(|&a, &b| (grid[a][0] - v).abs().total_cmp(&(grid[b][0] - v).abs())).unwrap()
        };
        let (xs_c, atoms_c) = (xs.clone(), atoms.clone());
        let truth = move |x: &[f64], z: &[f64]| f[nearest(&xs_c, x[0]) * atoms_c.len() + nearest(&atoms_c, z[0])];
        let problem = Problem::custom("gp-sample", 1, env, 0.01, 0.1, truth)
            .unwrap()
            .with_domain(Domain::Finite(xs.clone()))
            .unwrap()
            .with_initial_design(3);
        let cfg = RunConfig {
            iterations: 30,
            seed,
            fit_hyper: false,
            hyper_init: Some(hyper.clone()),
            standardize: false,
            ..RunConfig::default()
        };
        let trace = run_vucb(&problem, &cfg).unwrap();
        let report = certify_regret(&trace, &problem, &CertifyOptions::default()).unwrap();
        pass += report.count(CertificateStatus::Pass);
        bound_violated += report.count(CertificateStatus::BoundViolated);
        event_violated += report.count(CertificateStatus::EventViolated);
        uncertified += report.count(CertificateStatus::NotCertified);
    }
    Outcome {
        pass: bound_violated == 0 && pass > 0,
        detail: format!("{pass} pass, {bound_violated} bound violations, {event_violated} outside band event, {uncertified} uncertified"),
    }
}

fn stableopt_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let env = make_discrete_grid(1, 20, WeightRule::Uniform).unwrap();
    let d = env.as_discrete().unwrap();
    let (mut worst_gap, mut worst_lv): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let hyper = GpHyper::isotropic(2, rng.random_range(0.15..0.6), 1.0, 0.01).unwrap();
        let post = random_posterior(1, rng.random_range(1..12), &hyper, &mut rng);
        let field = ConfidenceField::new(&post, rng.random_range(0.5..6.0));
        let prob = AcquisitionProblem::new(field, &env, 1e-6, Domain::unit(1));
        let sel = select_x(&prob, &mut rng).unwrap();
        let so = stableopt_select(&field, &Domain::unit(1), d, &OptimizerConfig::default()).unwrap();
        worst_gap = worst_gap.max((sel.value - so.value).abs());
        let (l, _) = bounds_on_atoms(&field, &sel.x, d.atoms());
        let min_l = l.iter().copied().fold(f64::INFINITY, f64::min);
        for i in lv_candidates_discrete(&field, &sel.x, d, 1e-6).unwrap() {
            worst_lv = worst_lv.max((l[i] - min_l).abs());
        }
    }
    Outcome {
        pass: worst_gap <= 1e-9 && worst_lv <= 1e-9,
        detail: format!("max optimum gap {worst_gap:.1e}, max LV gap to min l {worst_lv:.1e}"),
    }
}

struct StdNormal;

impl EnvSampler for StdNormal {
    fn dim(&self) -> usize {
        1
    }
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        vec![rng.sample(StandardNormal)]
    }
}

fn pinball() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cfg = PinballConfig { batch: 100, iters: 1000, ..PinballConfig::default() };
    let nu = estimate_var_pinball(|z| z[0], &StdNormal, 0.1, &cfg, &mut rng).unwrap();
    let normal_err = (nu + 1.2816).abs();
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = rng.random_range(5..40);
        let values: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let atoms: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64]).collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let env = EnvDistribution::Discrete(DiscreteEnv::from_weights(atoms, weights).unwrap());
        let alpha = rng.random_range(0.05..0.95);
        let exact = var_discrete(&values, env.as_discrete().unwrap().masses(), alpha).unwrap();
        let est = estimate_var_pinball(|z| values[z[0] as usize], &env, alpha, &PinballConfig::default(), &mut rng).unwrap();
        let range = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - values.iter().copied().fold(f64::INFINITY, f64::min);
        let rel = (est - exact).abs() / range;
        worst = worst.max(rel);
        if rel <= 0.01 {
            within += 1;
        }
    }
    Outcome {
        pass: normal_err <= 0.02 && within == 50,
        detail: format!("normal error {normal_err:.4}; {within}/50 discrete within 1% of range (worst {worst:.4})"),
    }
}

fn lnso() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let env = make_truncated_gaussian(1);
    let unit = BoxRef { lower: &[0.0], upper: &[1.0] };
    let mut hits = 0;
    for _ in 0..20 {
        let (c, a, b) = (rng.random_range(0.1..0.9), rng.random_range(0.5..3.0), rng.random_range(-0.3..0.3));
        let target = move |pts: &[Vec<f64>]| pts.iter().map(|p| -a * (p[0] - c).powi(2) + b * p[1]).collect::<Vec<f64>>();
        let x0 = [rng.random::<f64>()];
        let out = lnso_maximize(&target, &env, 0.1, unit, &x0, &LnsoConfig::default(), None, &mut rng).unwrap();
        if (out.x[0] - c).abs() <= 0.05 {
            hits += 1;
        }
    }
    let h = 1e-6;
    let mut net_err: f64 = 0.0;
    for _ in 0..20 {
        let mut net = SurrogateNet::new(2, &mut rng);
        for p in net.params_mut() {
            *p += rng.random_range(-0.25..0.25);
        }
        let u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (_, g) = net.param_grad(&u);
        for (k, gk) in g.iter().enumerate() {
            let (mut a, mut b) = (net.clone(), net.clone());
            a.params_mut()[k] += h;
            b.params_mut()[k] -= h;
            net_err = net_err.max(((a.forward(&u) - b.forward(&u)) / (2.0 * h) - gk).abs());
        }
        let gi = net.input_grad(&u);
        for k in 0..2 {
            let (mut up, mut dn) = (u, u);
            up[k] += h;
            dn[k] -= h;
            net_err = net_err.max(((net.forward(&up) - net.forward(&dn)) / (2.0 * h) - gi[k]).abs());
        }
    }
    let mut gp_err: f64 = 0.0;
    for _ in 0..20 {
        let hyper = GpHyper::new(vec![rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)], 1.0, 0.01).unwrap();
        let post = random_posterior(1, rng.random_range(1..12), &hyper, &mut rng);
        let p = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
        let g = post.predict_grad(&p);
        for k in 0..2 {
            let (mut up, mut dn) = (p, p);
            up[k] += h;
            dn[k] -= h;
            let (pu, pd) = (post.predict(&up), post.predict(&dn));
            gp_err = gp_err.max(((pu.mean - pd.mean) / (2.0 * h) - g.mean[k]).abs());
            if !g.degenerate {
                gp_err = gp_err.max(((pu.sd - pd.sd) / (2.0 * h) - g.sd[k]).abs());
            }
        }
    }
    Outcome {
        pass: hits >= 19 && net_err <= 1e-4 && gp_err <= 1e-4,
        detail: format!("{hits}/20 argmax within 0.05; net FD error {net_err:.1e}; GP FD error {gp_err:.1e}"),
    }
}

fn branin_runs() -> [Vec<RunTrace>; 3] {
    let problem = make_problem(ProblemName::Branin, ZMode::Discrete, 0.1).unwrap();
    let arms = [(AcqMode::Vucb, LvMode::MaxMass), (AcqMode::Vucb, LvMode::Uniform), (AcqMode::Random, LvMode::MaxMass)];
    let problem = &problem;
    std::thread::scope(|s| {
        let handles: Vec<_> = arms
            .iter()
            .flat_map(|&(acq, lv_mode)| {
                (0..10u64).map(move |seed| {
                    s.spawn(move || run_vucb(problem, &RunConfig { seed, acq, lv_mode, ..RunConfig::default() }).unwrap())
                })
            })
            .collect();
        let mut traces: Vec<RunTrace> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let random = traces.split_off(20);
        let unif = traces.split_off(10);
        [traces, unif, random]
    })
}

fn trend(runs: &[Vec<RunTrace>; 3]) -> Outcome {
    let final_median = |ts: &[RunTrace]| median(ts.iter().map(|t| t.rows.last().unwrap().log10_metric).collect());
    let first_median = median(runs[0].iter().map(|t| t.rows[0].log10_metric).collect());
    let (prob, unif, random) = (final_median(&runs[0]), final_median(&runs[1]), final_median(&runs[2]));
    let pass = prob <= random && prob <= first_median - 1.0 && prob <= unif + 0.1;
    Outcome {
        pass,
        detail: format!(
            "median log10 metric: prob {first_median:.2} -> {prob:.2}, unif {unif:.2}, random {random:.2}"
        ),
    }
}

fn sublinear(runs: &[Vec<RunTrace>; 3]) -> Outcome {
    let ratios: Vec<f64> =
        runs[0].iter().map(|t| (t.cumulative_regret(60) / 60.0) / (t.cumulative_regret(10) / 10.0)).collect();
    let ok = ratios.iter().filter(|r| **r <= 0.5).count();
    Outcome { pass: ok >= 7, detail: format!("{ok}/10 seeds with R_60/60 <= 0.5 R_10/10") }
}

fn hit_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let env = make_discrete_grid(1, 100, WeightRule::GaussianBump).unwrap();
    let hyper = GpHyper::isotropic(2, 0.3, 1.0, 0.01).unwrap();
    let mut total = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..25);
        let post = random_posterior(1, n, &hyper, &mut rng);
        let field = ConfidenceField::new(&post, beta_practical(n));
        let x = [rng.random::<f64>()];
        total += sampled_hit_rate(&field, &x, &env, 0.05, 2000, &mut rng).unwrap();
    }
    let mean = total / 50.0;
    Outcome { pass: mean <= 0.10, detail: format!("mean hit rate {mean:.4}") }
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= check(1, "lacing value existence", secs(30), Duration::ZERO, lv_existence);
    ok &= check(2, "VaR sandwich", secs(60), Duration::ZERO, var_sandwich);
    ok &= check(3, "per-iteration regret certificate", secs(300), Duration::ZERO, certificate);
    ok &= check(4, "StableOpt limit", secs(60), Duration::ZERO, stableopt_equivalence);
    ok &= check(5, "pinball quantile", secs(60), Duration::ZERO, pinball);
    ok &= check(6, "LNSO and gradients", secs(120), Duration::ZERO, lnso);
    let start = Instant::now();
    let runs = branin_runs();
    let shared = start.elapsed();
    ok &= check(7, "Branin trend", secs(900), shared, || trend(&runs));
    ok &= check(8, "sublinear regret", secs(900), shared, || sublinear(&runs));
    ok &= check(9, "sampled lacing hit rate", secs(120), Duration::ZERO, hit_rate);
    if !ok {
        std::process::exit(1);
    }
}
