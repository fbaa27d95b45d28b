//! The outer optimization loop, recommendations, regret accounting and the
//! per-iteration regret certificate.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquire::{select_x, stableopt_select, AcquisitionProblem, Domain, OptimizerConfig};
use crate::bench::Problem;
use crate::bounds::{beta_practical, beta_theoretical, joint, BetaSchedule, ConfidenceField};
use crate::env::EnvDistribution;
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparams, se_kernel, GpHyper, GpPosterior, HyperBounds, ObservationSet, OutputScaling};
use crate::lacing::{find_lv_with_interval, lv_candidates_discrete, select_lv, LvMode, LvSearchConfig};
use crate::risk::{bounds_on_atoms, var_discrete, var_interval, PinballConfig};
use crate::surrogate::{LnsoConfig, SurrogateNet};

/// Quasi-random `z` used for `V_α(μ(x, Z))` on continuous environments.
pub const RECOMMEND_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcqMode {
    Vucb,
    #[serde(rename = "stableopt")]
    StableOpt,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecommendMode {
    MeanVar,
    LcbMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BetaSpec {
    Practical,
    /// `γ_{t-1}` is the empirical information gain of the data so far.
    Theoretical {
        rkhs_bound: f64,
        delta: f64,
    },
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Initial design size; `None` takes the problem's default.
    pub n_init: Option<usize>,
    pub lv_mode: LvMode,
    pub acq: AcqMode,
    pub beta: BetaSpec,
    pub refit_every: usize,
    pub recommend: RecommendMode,
    /// Fit hyperparameters by marginal likelihood; otherwise keep
    /// `hyper_init` throughout.
    pub fit_hyper: bool,
    pub hyper_init: Option<GpHyper>,
    pub hyper_restarts: usize,
    /// Fit the GP on standardized observations.
    pub standardize: bool,
    pub optimizer: OptimizerConfig,
    pub pinball: PinballConfig,
    pub lnso: LnsoConfig,
    pub lv_search: LvSearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 60,
            seed: 0,
            n_init: None,
            lv_mode: LvMode::MaxMass,
            acq: AcqMode::Vucb,
            beta: BetaSpec::Practical,
            refit_every: 3,
            recommend: RecommendMode::MeanVar,
            fit_hyper: true,
            hyper_init: None,
            hyper_restarts: 3,
            standardize: true,
            optimizer: OptimizerConfig::default(),
            pinball: PinballConfig::default(),
            lnso: LnsoConfig::default(),
            lv_search: LvSearchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        if self.n_init == Some(0) {
            return Err(Error::Config("initial design size must be at least 1".into()));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit cadence must be at least 1".into()));
        }
        match self.beta {
            BetaSpec::Theoretical { rkhs_bound, delta } if !(rkhs_bound > 0.0 && delta > 0.0 && delta < 1.0) => {
                return Err(Error::Config("theoretical β needs B > 0 and δ in (0,1)".into()));
            }
            BetaSpec::Constant { value } if !(value >= 0.0) => {
                return Err(Error::Config("constant β must be non-negative".into()));
            }
            _ => {}
        }
        self.pinball.validate()?;
        self.lnso.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialObservation {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: f64,
    pub beta: f64,
    /// `σ_{t-1}(x_t, z_t)`.
    pub sigma: f64,
    pub var_lo: f64,
    pub var_hi: f64,
    pub lv_certified: bool,
    /// Number of lacing values at `x_t` (discrete environments).
    pub lv_candidates: Option<usize>,
    pub recommendation: Vec<f64>,
    pub metric: f64,
    pub log10_metric: f64,
    /// `V_α(f(x_*, Z)) - V_α(f(x_t, Z))`.
    pub regret: f64,
    /// Hyperparameters in force from this iteration on, recorded on refit
    /// iterations.
    pub hyper: Option<GpHyper>,
    pub lnso_retrains: usize,
    /// Share of sampled `z` that were lacing values (env-sampled runs).
    pub lv_hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub problem: String,
    pub seed: u64,
    pub alpha: f64,
    pub standardize: bool,
    pub init: Vec<InitialObservation>,
    pub rows: Vec<TraceRow>,
    /// Overall lacing-value hit rate of env-sampled runs.
    pub lv_hit_rate: Option<f64>,
}

impl RunTrace {
    /// Hyperparameters used at iteration `t` (1-based).
    pub fn hyper_at(&self, t: usize) -> Option<&GpHyper> {
        self.rows[..t].iter().rev().find_map(|r| r.hyper.as_ref())
    }

    /// Observations available before iteration `t`.
    pub fn data_before(&self, t: usize, d_x: usize, d_z: usize) -> Result<ObservationSet> {
        let mut data = ObservationSet::new(d_x, d_z);
        for o in &self.init {
            data.push(o.x.clone(), o.z.clone(), o.y)?;
        }
        for r in &self.rows[..t - 1] {
            data.push(r.x.clone(), r.z.clone(), r.y)?;
        }
        Ok(data)
    }

    pub fn cumulative_regret(&self, t: usize) -> f64 {
        self.rows[..t].iter().map(|r| r.regret).sum()
    }
}

/// Independent random streams derived from one seed: 0 draws the initial
/// design, 1 drives the algorithm, 2 the observation noise.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn scaling_for(data: &ObservationSet, standardize: bool) -> OutputScaling {
    if standardize && !data.is_empty() {
        data.standardizer()
    } else {
        OutputScaling::IDENTITY
    }
}

/// `½ log det(I + σ_n^{-2} K)` over `inputs`.
pub fn information_gain(inputs: &[Vec<f64>], hyper: &GpHyper) -> f64 {
    let n = inputs.len();
    if n == 0 {
        return 0.0;
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        let k = se_kernel(&inputs[i], &inputs[j], hyper) / hyper.noise_var;
        if i == j {
            1.0 + k
        } else {
            k
        }
    });
    let chol = m.cholesky().expect("I + K/σ² is positive definite");
    chol.l().diagonal().iter().map(|d| d.ln()).sum()
}

/// `C_1 = 8 / ln(1 + σ_n^{-2})`.
pub fn c1(noise_var: f64) -> f64 {
    8.0 / (1.0 + 1.0 / noise_var).ln()
}

fn beta_for(spec: &BetaSpec, t: usize, post: &GpPosterior) -> Result<f64> {
    match *spec {
        BetaSpec::Practical => Ok(beta_practical(t)),
        BetaSpec::Constant { value } => Ok(value),
        BetaSpec::Theoretical { rkhs_bound, delta } => {
            let inputs: Vec<Vec<f64>> = (0..post.data().len()).map(|i| post.data().joint(i)).collect();
            let gain = information_gain(&inputs, post.hyper());
            let schedule = BetaSchedule::Theoretical {
                rkhs_bound,
                noise_sd: post.hyper().noise_var.sqrt() * post.scaling().scale,
                delta,
                gamma: std::sync::Arc::new(move |_| gain),
            };
            beta_theoretical(t, &schedule)
        }
    }
}

fn empirical_quantile(mut v: Vec<f64>, alpha: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = ((alpha * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

/// `V_α(μ(x, Z))`: exact over atoms, or over fixed quasi-random samples.
pub fn mean_var(post: &GpPosterior, x: &[f64], env: &EnvDistribution, alpha: f64) -> Result<f64> {
    let field = ConfidenceField::new(post, 0.0);
    match env {
        EnvDistribution::Discrete(d) => var_discrete(&bounds_on_atoms(&field, x, d.atoms()).0, d.masses(), alpha),
        EnvDistribution::Continuous(_) => {
            let pts: Vec<Vec<f64>> = env.quasi_samples(RECOMMEND_SAMPLES).iter().map(|z| joint(x, z)).collect();
            Ok(empirical_quantile(post.predict_many(&pts).into_iter().map(|p| p.mean).collect(), alpha))
        }
    }
}

// `queried` holds every observed x (initial design first); `lcb` pairs the
// x of each iteration with its stored `V_α(l_{t-1})`.
fn recommend_among(
    queried: &[Vec<f64>],
    lcb: &[(Vec<f64>, f64)],
    post: &GpPosterior,
    env: &EnvDistribution,
    alpha: f64,
    mode: RecommendMode,
) -> Result<Vec<f64>> {
    match mode {
        RecommendMode::LcbMax if !lcb.is_empty() => {
            let mut best = 0;
            for (i, (_, v)) in lcb.iter().enumerate() {
                if *v > lcb[best].1 {
                    best = i;
                }
            }
            Ok(lcb[best].0.clone())
        }
        _ => {
            let mut best: Option<(usize, f64)> = None;
            for (i, x) in queried.iter().enumerate() {
                let v = mean_var(post, x, env, alpha)?;
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            Ok(queried[best.ok_or_else(|| Error::Config("nothing to recommend".into()))?.0].clone())
        }
    }
}

/// Recommendation after a run: the queried input maximizing `V_α(μ)`
/// (mean-var), or `x_{t_*}` with the largest stored `V_α(l_{t-1}(x_t, Z))`
/// (lcb-max). Ties go to the earliest.
pub fn recommend(
    trace: &RunTrace,
    posterior: &GpPosterior,
    env: &EnvDistribution,
    mode: RecommendMode,
) -> Result<Vec<f64>> {
    let queried: Vec<Vec<f64>> = trace.init.iter().map(|o| o.x.clone()).chain(trace.rows.iter().map(|r| r.x.clone())).collect();
    let lcb: Vec<(Vec<f64>, f64)> = trace.rows.iter().map(|r| (r.x.clone(), r.var_lo)).collect();
    recommend_among(&queried, &lcb, posterior, env, trace.alpha, mode)
}

/// Share of `n` environment draws that land on a lacing value at `x`.
pub fn sampled_hit_rate<R: Rng + ?Sized>(
    field: &ConfidenceField<'_>,
    x: &[f64],
    env: &EnvDistribution,
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let d = env.as_discrete().ok_or_else(|| Error::Config("hit rates need a discrete environment".into()))?;
    let cands = lv_candidates_discrete(field, x, d, alpha)?;
    let hits = (0..n).filter(|_| cands.binary_search(&d.sample_index(rng)).is_ok()).count();
    Ok(hits as f64 / n.max(1) as f64)
}

struct State {
    data: ObservationSet,
    hyper: GpHyper,
    warm: Option<SurrogateNet>,
    lcb: Vec<(Vec<f64>, f64)>,
    alg: ChaCha8Rng,
    noise: ChaCha8Rng,
    hits: usize,
    draws: usize,
}

/// Runs the loop: initial design, then per iteration choose `x_t`, choose
/// `z_t` (a lacing value for V-UCB), observe, update.
pub fn run_vucb(problem: &Problem, cfg: &RunConfig) -> Result<RunTrace> {
    run(problem, cfg, None)
}

/// Like [`run_vucb`] but `z_t` is the first of `n_z_per_iter` environment
/// draws; records how often the draws hit a lacing value.
pub fn run_env_sampled(problem: &Problem, cfg: &RunConfig, n_z_per_iter: usize) -> Result<RunTrace> {
    if !problem.env.is_discrete() {
        return Err(Error::Config("env-sampled runs need a discrete environment".into()));
    }
    if n_z_per_iter == 0 {
        return Err(Error::Config("n_z_per_iter must be at least 1".into()));
    }
    run(problem, cfg, Some(n_z_per_iter))
}

fn run(problem: &Problem, cfg: &RunConfig, env_sampled: Option<usize>) -> Result<RunTrace> {
    cfg.validate()?;
    problem.domain.validate()?;
    if cfg.acq == AcqMode::StableOpt && !problem.env.is_discrete() {
        return Err(Error::Config("StableOpt needs a discrete environment".into()));
    }
    let (d_x, d_z) = (problem.d_x, problem.d_z);
    let mut init_rng = stream(cfg.seed, 0);
    let mut noise = stream(cfg.seed, 2);
    let mut data = ObservationSet::new(d_x, d_z);
    let mut init = Vec::new();
    for _ in 0..cfg.n_init.unwrap_or(problem.n_init) {
        let x = problem.domain.sample(&mut init_rng);
        let z = uniform_z(&problem.env, &mut init_rng);
        let y = problem.observe(&x, &z, &mut noise);
        data.push(x.clone(), z.clone(), y)?;
        init.push(InitialObservation { x, z, y });
    }
    let hyper = match &cfg.hyper_init {
        Some(h) => h.clone(),
        None => GpHyper::isotropic(d_x + d_z, 0.3, 1.0, 0.01)?,
    };
    let mut state = State { data, hyper, warm: None, lcb: Vec::new(), alg: stream(cfg.seed, 1), noise, hits: 0, draws: 0 };
    let mut rows = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let row = iteration(problem, cfg, env_sampled, &mut state, t)
            .map_err(|e| Error::AtIteration { iteration: t, source: Box::new(e) })?;
        rows.push(row);
    }
    Ok(RunTrace {
        problem: problem.label.clone(),
        seed: cfg.seed,
        alpha: problem.alpha,
        standardize: cfg.standardize,
        init,
        rows,
        lv_hit_rate: env_sampled.map(|_| state.hits as f64 / state.draws.max(1) as f64),
    })
}

// Atoms are drawn uniformly (not by mass); continuous `z` from the density.
fn uniform_z<R: Rng + ?Sized>(env: &EnvDistribution, rng: &mut R) -> Vec<f64> {
    match env {
        EnvDistribution::Discrete(d) => d.atoms()[rng.random_range(0..d.len())].clone(),
        EnvDistribution::Continuous(c) => c.sample_one(rng),
    }
}

fn iteration(
    problem: &Problem,
    cfg: &RunConfig,
    env_sampled: Option<usize>,
    st: &mut State,
    t: usize,
) -> Result<TraceRow> {
    let env = &problem.env;
    let alpha = problem.alpha;
    let refit = (t - 1).is_multiple_of(cfg.refit_every);
    let scaling = scaling_for(&st.data, cfg.standardize);
    if refit && cfg.fit_hyper {
        let model_data = st.data.rescaled(scaling);
        st.hyper = fit_hyperparams(&model_data, &st.hyper, cfg.hyper_restarts, &HyperBounds::default(), &mut st.alg)?.hyper;
    }
    let post = GpPosterior::fit_scaled(&st.data, &st.hyper, scaling)?;
    let beta = beta_for(&cfg.beta, t, &post)?;
    let field = ConfidenceField::new(&post, beta);

    let mut lnso_retrains = 0;
    let x = match cfg.acq {
        AcqMode::Vucb => {
            let mut prob = AcquisitionProblem::new(field, env, alpha, problem.domain.clone());
            prob.optimizer = cfg.optimizer;
            prob.lnso = cfg.lnso;
            prob.warm = st.warm.take();
            let sel = select_x(&prob, &mut st.alg)?;
            lnso_retrains = sel.lnso_retrains;
            st.warm = sel.surrogate;
            sel.x
        }
        AcqMode::StableOpt => {
            let d = env.as_discrete().expect("checked before the loop");
            stableopt_select(&field, &problem.domain, d, &cfg.optimizer)?.x
        }
        AcqMode::Random => problem.domain.sample(&mut st.alg),
    };
    let interval = var_interval(&field, &x, env, alpha, &cfg.pinball, &mut st.alg)?;

    let mut lv_hit_rate = None;
    let (z, certified, n_cands) = match env {
        EnvDistribution::Discrete(d) => {
            let cands = lv_candidates_discrete(&field, &x, d, alpha)?;
            let idx = if let Some(n) = env_sampled {
                let draws: Vec<usize> = (0..n).map(|_| d.sample_index(&mut st.alg)).collect();
                let hits = draws.iter().filter(|i| cands.binary_search(i).is_ok()).count();
                st.hits += hits;
                st.draws += n;
                lv_hit_rate = Some(hits as f64 / n as f64);
                draws[0]
            } else {
                match cfg.acq {
                    AcqMode::Vucb => select_lv(&cands, d, cfg.lv_mode, &mut st.alg),
                    AcqMode::StableOpt => {
                        let l = bounds_on_atoms(&field, &x, d.atoms()).0;
                        (0..l.len()).min_by(|&a, &b| l[a].total_cmp(&l[b]).then(a.cmp(&b))).expect("nonempty env")
                    }
                    AcqMode::Random => st.alg.random_range(0..d.len()),
                }
            };
            (d.atoms()[idx].clone(), cands.binary_search(&idx).is_ok(), Some(cands.len()))
        }
        EnvDistribution::Continuous(c) => match cfg.acq {
            AcqMode::Random => (c.sample_one(&mut st.alg), false, None),
            _ => {
                let mut search = cfg.lv_search;
                if cfg.lv_mode == LvMode::Uniform {
                    search.density_steps = 0;
                }
                let lv = find_lv_with_interval(&field, &x, c, &interval, &search, &mut st.alg);
                (lv.z, lv.certified, None)
            }
        },
    };

    let sigma = post.predict(&joint(&x, &z)).sd;
    let y = problem.observe(&x, &z, &mut st.noise);
    if !y.is_finite() {
        return Err(Error::NonFinite { z: z.clone(), value: y });
    }
    st.data.push(x.clone(), z.clone(), y)?;
    st.lcb.push((x.clone(), interval.lo));

    let updated = GpPosterior::fit_scaled(&st.data, &st.hyper, scaling_for(&st.data, cfg.standardize))?;
    let queried: Vec<Vec<f64>> = st.data.rows().iter().map(|o| o.x.clone()).collect();
    let recommendation = recommend_among(&queried, &st.lcb, &updated, env, alpha, cfg.recommend)?;
    let metric = problem.metric(&recommendation);
    let regret = problem.oracle_best().value - problem.true_var(&x);

    Ok(TraceRow {
        t,
        x,
        z,
        y,
        beta,
        sigma,
        var_lo: interval.lo,
        var_hi: interval.hi,
        lv_certified: certified,
        lv_candidates: n_cands,
        recommendation,
        metric: metric.raw,
        log10_metric: metric.log10,
        regret,
        hyper: refit.then(|| st.hyper.clone()),
        lnso_retrains,
        lv_hit_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateStatus {
    Pass,
    BoundViolated,
    /// `f` left the band somewhere on the reference set.
    EventViolated,
    /// `z_t` was not a lacing value, so the inequality does not apply.
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationCertificate {
    pub t: usize,
    pub status: CertificateStatus,
    pub regret: f64,
    /// `2 β_t^{1/2} σ_{t-1}(x_t, z_t)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub iterations: Vec<IterationCertificate>,
    pub c1: f64,
    pub gamma_t: f64,
    /// `gamma_t` is the information gain of the actual queries, a lower
    /// bound on the maximum information gain.
    pub gamma_is_empirical: bool,
    pub cumulative_regret: f64,
    /// `√(C_1 T β_T γ_T)`.
    pub regret_bound: f64,
    /// Largest gap between a recorded `σ_{t-1}(x_t, z_t)` and its
    /// recomputation.
    pub sigma_mismatch: f64,
}

impl CertificateReport {
    pub fn count(&self, status: CertificateStatus) -> usize {
        self.iterations.iter().filter(|c| c.status == status).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// User-supplied `γ_T`; `None` uses the empirical information gain.
    pub gamma_t: Option<f64>,
    /// Reference grid points per x-axis for box domains.
    pub grid_per_axis: usize,
    /// Quasi-random `z` checked on continuous environments.
    pub z_samples: usize,
    pub tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { gamma_t: None, grid_per_axis: 51, z_samples: 64, tol: 1e-6 }
    }
}

fn reference_xs(domain: &Domain, per_axis: usize) -> Vec<Vec<f64>> {
    match domain {
        Domain::Finite(pts) => pts.clone(),
        Domain::Box { lower, upper } => {
            let n = per_axis.max(2);
            let mut out = vec![Vec::new()];
            for i in 0..lower.len() {
                out = out
                    .into_iter()
                    .flat_map(|p: Vec<f64>| {
                        (0..n).map(move |k| {
                            let mut q = p.clone();
                            q.push(lower[i] + (upper[i] - lower[i]) * k as f64 / (n - 1) as f64);
                            q
                        })
                    })
                    .collect();
            }
            out
        }
    }
}

/// Rebuilds every posterior of a run and checks `r(x_t) ≤ 2 β_t^{1/2}
/// σ_{t-1}(x_t, z_t)` wherever the band holds on the reference set and
/// `z_t` was a lacing value.
pub fn certify_regret(trace: &RunTrace, problem: &Problem, opts: &CertifyOptions) -> Result<CertificateReport> {
    let zs: Vec<Vec<f64>> = match &problem.env {
        EnvDistribution::Discrete(d) => d.atoms().to_vec(),
        EnvDistribution::Continuous(_) => problem.env.quasi_samples(opts.z_samples),
    };
    let xs = reference_xs(&problem.domain, opts.grid_per_axis);
    let truth: Vec<Vec<f64>> = xs.iter().map(|x| zs.iter().map(|z| problem.objective(x, z)).collect()).collect();
    let best = problem.oracle_best().value;
    let mut iterations = Vec::with_capacity(trace.rows.len());
    let mut sigma_mismatch: f64 = 0.0;
    for row in &trace.rows {
        let t = row.t;
        let hyper = trace.hyper_at(t).ok_or_else(|| Error::Config(format!("no hyperparameters recorded by t={t}")))?;
        let data = trace.data_before(t, problem.d_x, problem.d_z)?;
        let post = GpPosterior::fit_scaled(&data, hyper, scaling_for(&data, trace.standardize))?;
        let field = ConfidenceField::new(&post, row.beta);
        let sigma = post.predict(&joint(&row.x, &row.z)).sd;
        sigma_mismatch = sigma_mismatch.max((sigma - row.sigma).abs());
        let regret = best - problem.true_var(&row.x);
        let bound = 2.0 * row.beta.sqrt() * sigma;
        let status = if !row.lv_certified {
            CertificateStatus::NotCertified
        } else {
            let inside = |x: &[f64], fx: &[f64]| {
                let pts: Vec<Vec<f64>> = zs.iter().map(|z| joint(x, z)).collect();
                field.bounds_many(&pts).iter().zip(fx).all(|((l, u), f)| l <= f && f <= u)
            };
            let fx_t: Vec<f64> = zs.iter().map(|z| problem.objective(&row.x, z)).collect();
            let event = inside(&row.x, &fx_t) && xs.iter().zip(&truth).all(|(x, f)| inside(x, f));
            if !event {
                CertificateStatus::EventViolated
            } else if regret <= bound + opts.tol {
                CertificateStatus::Pass
            } else {
                CertificateStatus::BoundViolated
            }
        };
        iterations.push(IterationCertificate { t, status, regret, bound });
    }
    let last_hyper = trace.hyper_at(trace.rows.len()).cloned().unwrap_or(GpHyper::isotropic(problem.d_x + problem.d_z, 0.3, 1.0, 0.01)?);
    let queries: Vec<Vec<f64>> = trace.rows.iter().map(|r| joint(&r.x, &r.z)).collect();
    let gamma_t = opts.gamma_t.unwrap_or_else(|| information_gain(&queries, &last_hyper));
    let c1 = c1(last_hyper.noise_var);
    let beta_t = trace.rows.last().map_or(0.0, |r| r.beta);
    let big_t = trace.rows.len() as f64;
    Ok(CertificateReport {
        iterations,
        c1,
        gamma_t,
        gamma_is_empirical: opts.gamma_t.is_none(),
        cumulative_regret: trace.cumulative_regret(trace.rows.len()),
        regret_bound: (c1 * big_t * beta_t * gamma_t).sqrt(),
        sigma_mismatch,
    })
}
