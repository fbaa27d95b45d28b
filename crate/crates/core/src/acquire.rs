//! Choosing `x_t`: maximize `V_α(u(x, Z))` over the input domain, or the
//! max-min UCB value of StableOpt.
//!
//! Both acquisitions go through the same maximizer: a quasi-random sweep
//! followed by projected ascent from the best sweep points. With a uniform
//! environment and `α` below every atom mass the two objectives coincide
//! exactly, so do their maximizers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{joint, ConfidenceField};
use crate::env::{DiscreteEnv, EnvDistribution};
use crate::error::{Error, Result};
use crate::qmc::halton;
use crate::risk::{bounds_on_atoms, check_alpha, var_discrete};
use crate::surrogate::{lnso_maximize, BoxRef, LnsoConfig, SurrogateNet};

/// Values closer than this to the VaR count as attaining it.
pub const TIE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// A finite candidate set, searched exhaustively.
    Finite(Vec<Vec<f64>>),
}

impl Domain {
    pub fn unit(d: usize) -> Self {
        Domain::Box { lower: vec![0.0; d], upper: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Finite(pts) => pts.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Box { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(Error::Config("domain bounds must be nonempty and of equal length".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
                    return Err(Error::Config("domain needs finite bounds with lower < upper".into()));
                }
            }
            Domain::Finite(pts) => {
                let d = self.dim();
                if pts.is_empty() || d == 0 || pts.iter().any(|p| p.len() != d) {
                    return Err(Error::Config("finite domain needs equal-length points".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Box { lower, upper } => {
                x.len() == lower.len() && x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *l <= *v && v <= u)
            }
            Domain::Finite(pts) => pts.iter().any(|p| p.as_slice() == x),
        }
    }

    /// A uniform draw from the domain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Domain::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect(),
            Domain::Finite(pts) => pts[rng.random_range(0..pts.len())].clone(),
        }
    }

    /// Sweep candidates: a Halton set scaled into the box, or every point.
    pub fn candidates(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            Domain::Box { lower, upper } => halton(n, lower.len())
                .into_iter()
                .map(|u| u.iter().enumerate().map(|(i, v)| lower[i] + (upper[i] - lower[i]) * v).collect())
                .collect(),
            Domain::Finite(pts) => pts.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub sweep: usize,
    pub starts: usize,
    pub steps: usize,
    pub step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { sweep: 512, starts: 10, steps: 100, step: 0.05 }
    }
}

/// A smooth-almost-everywhere objective for [`maximize`].
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.value(x)).collect()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

/// Sweep the candidates, then run projected normalized-gradient ascent
/// with halving backtracking from the best `starts` of them. Returns the
/// best point evaluated; ties go to the earlier candidate.
pub fn maximize<O: Objective + ?Sized>(obj: &O, domain: &Domain, cfg: &OptimizerConfig) -> (Vec<f64>, f64) {
    let cands = domain.candidates(cfg.sweep.max(1));
    let vals = obj.values(&cands);
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut best = (cands[order[0]].clone(), vals[order[0]]);
    let Domain::Box { lower, upper } = domain else {
        return best;
    };
    for &start in order.iter().take(cfg.starts) {
        let mut x = cands[start].clone();
        let mut fx = vals[start];
        for _ in 0..cfg.steps {
            let g = obj.grad(&x);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                break;
            }
            let mut h = cfg.step;
            let mut moved = false;
            while h >= 1e-6 {
                let cand: Vec<f64> =
                    (0..x.len()).map(|i| (x[i] + h * g[i] / norm).clamp(lower[i], upper[i])).collect();
                let fc = obj.value(&cand);
                if fc > fx {
                    x = cand;
                    fx = fc;
                    moved = true;
                    break;
                }
                h *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Index of the atom whose value attains `target`: among values within
/// [`TIE_MARGIN`], the heaviest, then the lowest index. The flag reports a
/// tie.
pub fn attaining_atom(values: &[f64], masses: &[f64], target: f64) -> (usize, bool) {
    let near: Vec<usize> = (0..values.len()).filter(|&i| (values[i] - target).abs() <= TIE_MARGIN).collect();
    let pick = near
        .iter()
        .copied()
        .max_by(|&a, &b| masses[a].total_cmp(&masses[b]).then(b.cmp(&a)))
        .unwrap_or_else(|| {
            (0..values.len())
                .min_by(|&a, &b| (values[a] - target).abs().total_cmp(&(values[b] - target).abs()))
                .expect("nonempty values")
        });
    (pick, near.len() > 1)
}

#[derive(Debug, Clone)]
pub struct AcquisitionProblem<'a> {
    pub field: ConfidenceField<'a>,
    pub env: &'a EnvDistribution,
    pub alpha: f64,
    pub domain: Domain,
    pub optimizer: OptimizerConfig,
    pub lnso: LnsoConfig,
    /// Network to warm-start the surrogate from on continuous environments.
    pub warm: Option<SurrogateNet>,
}

impl<'a> AcquisitionProblem<'a> {
    pub fn new(field: ConfidenceField<'a>, env: &'a EnvDistribution, alpha: f64, domain: Domain) -> Self {
        Self {
            field,
            env,
            alpha,
            domain,
            optimizer: OptimizerConfig::default(),
            lnso: LnsoConfig::default(),
            warm: None,
        }
    }

    fn discrete(&self) -> Result<&'a DiscreteEnv> {
        self.env
            .as_discrete()
            .ok_or_else(|| Error::Config("exact acquisition needs a discrete environment".into()))
    }
}

// Upper bounds at `x` for every atom.
fn upper_on_atoms(field: &ConfidenceField<'_>, x: &[f64], env: &DiscreteEnv) -> Vec<f64> {
    bounds_on_atoms(field, x, env.atoms()).1
}

// Upper bounds for many `x` at once, one row per `x`.
fn upper_on_atoms_many(field: &ConfidenceField<'_>, xs: &[Vec<f64>], env: &DiscreteEnv) -> Vec<Vec<f64>> {
    let m = env.len();
    let mut rows = Vec::with_capacity(xs.len());
    // Bounded chunks keep the cross-kernel matrix small.
    let per_chunk = (16_384 / m).max(1);
    for chunk in xs.chunks(per_chunk) {
        let pts: Vec<Vec<f64>> = chunk.iter().flat_map(|x| env.atoms().iter().map(move |z| joint(x, z))).collect();
        let b = field.bounds_many(&pts);
        rows.extend(b.chunks(m).map(|c| c.iter().map(|p| p.1).collect::<Vec<f64>>()));
    }
    rows
}

fn upper_grad_x(field: &ConfidenceField<'_>, x: &[f64], z: &[f64]) -> Vec<f64> {
    let g = field.posterior.predict_grad_x(&joint(x, z));
    let k = field.width_factor();
    g.mean.iter().zip(&g.sd).map(|(m, s)| m + k * s).collect()
}

/// `V_α(u(x, Z))` over the atoms.
pub fn acq_value(prob: &AcquisitionProblem<'_>, x: &[f64]) -> Result<f64> {
    let env = prob.discrete()?;
    var_discrete(&upper_on_atoms(&prob.field, x, env), env.masses(), prob.alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcqGrad {
    pub grad: Vec<f64>,
    /// Atom attaining the VaR.
    pub atom: usize,
    /// Another atom's value lies within [`TIE_MARGIN`] of the VaR.
    pub degenerate: bool,
}

/// `∂u(x, z_(α))/∂x` at the VaR-attaining atom.
pub fn acq_grad(prob: &AcquisitionProblem<'_>, x: &[f64]) -> Result<AcqGrad> {
    let env = prob.discrete()?;
    let u = upper_on_atoms(&prob.field, x, env);
    let v = var_discrete(&u, env.masses(), prob.alpha)?;
    let (atom, degenerate) = attaining_atom(&u, env.masses(), v);
    Ok(AcqGrad { grad: upper_grad_x(&prob.field, x, &env.atoms()[atom]), atom, degenerate })
}

struct VucbObjective<'a, 'b> {
    field: &'a ConfidenceField<'b>,
    env: &'a DiscreteEnv,
    alpha: f64,
}

impl Objective for VucbObjective<'_, '_> {
    fn value(&self, x: &[f64]) -> f64 {
        var_discrete(&upper_on_atoms(self.field, x, self.env), self.env.masses(), self.alpha).expect("alpha checked")
    }

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        upper_on_atoms_many(self.field, xs, self.env)
            .iter()
            .map(|u| var_discrete(u, self.env.masses(), self.alpha).expect("alpha checked"))
            .collect()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let u = upper_on_atoms(self.field, x, self.env);
        let v = var_discrete(&u, self.env.masses(), self.alpha).expect("alpha checked");
        let (atom, _) = attaining_atom(&u, self.env.masses(), v);
        upper_grad_x(self.field, x, &self.env.atoms()[atom])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub x: Vec<f64>,
    /// Acquisition value at `x` (exact for discrete environments, an
    /// empirical quantile otherwise).
    pub value: f64,
    pub lnso_retrains: usize,
    pub surrogate: Option<SurrogateNet>,
}

/// Number of common quasi-random `z` used to score points on continuous
/// environments.
const SCORE_SAMPLES: usize = 256;
const SWEEP_SAMPLES: usize = 64;

fn empirical_quantile(mut v: Vec<f64>, alpha: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = ((alpha * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

fn upper_quantile(field: &ConfidenceField<'_>, x: &[f64], zs: &[Vec<f64>], alpha: f64) -> f64 {
    let pts: Vec<Vec<f64>> = zs.iter().map(|z| joint(x, z)).collect();
    empirical_quantile(field.bounds_many(&pts).into_iter().map(|b| b.1).collect(), alpha)
}

/// `x_t = argmax V_α(u(x, Z))`.
///
/// Discrete environments use the exact objective. Continuous ones start
/// from the best sweep point under a fixed quasi-random `z` set and run
/// the local surrogate optimizer; the better of the two is returned.
pub fn select_x<R: Rng + ?Sized>(prob: &AcquisitionProblem<'_>, rng: &mut R) -> Result<Selection> {
    check_alpha(prob.alpha)?;
    prob.domain.validate()?;
    match prob.env {
        EnvDistribution::Discrete(env) => {
            let obj = VucbObjective { field: &prob.field, env, alpha: prob.alpha };
            let (x, value) = maximize(&obj, &prob.domain, &prob.optimizer);
            Ok(Selection { x, value, lnso_retrains: 0, surrogate: None })
        }
        EnvDistribution::Continuous(_) => {
            let sweep_z = prob.env.quasi_samples(SWEEP_SAMPLES);
            let cands = prob.domain.candidates(prob.optimizer.sweep.max(1));
            let mut x0 = cands[0].clone();
            let mut f0 = f64::NEG_INFINITY;
            for c in &cands {
                let f = upper_quantile(&prob.field, c, &sweep_z, prob.alpha);
                if f > f0 {
                    x0 = c.clone();
                    f0 = f;
                }
            }
            let score_z = prob.env.quasi_samples(SCORE_SAMPLES);
            let score = |x: &[f64]| upper_quantile(&prob.field, x, &score_z, prob.alpha);
            let Domain::Box { lower, upper } = &prob.domain else {
                let value = score(&x0);
                return Ok(Selection { x: x0, value, lnso_retrains: 0, surrogate: None });
            };
            let field = prob.field;
            let target = move |pts: &[Vec<f64>]| field.bounds_many(pts).into_iter().map(|b| b.1).collect::<Vec<f64>>();
            let out = lnso_maximize(
                &target,
                prob.env,
                prob.alpha,
                BoxRef { lower, upper },
                &x0,
                &prob.lnso,
                prob.warm.clone(),
                rng,
            )?;
            let (s0, s1) = (score(&x0), score(&out.x));
            let (x, value) = if s1 >= s0 { (out.x, s1) } else { (x0, s0) };
            Ok(Selection { x, value, lnso_retrains: out.retrains, surrogate: Some(out.surrogate.net) })
        }
    }
}

struct StableOptObjective<'a, 'b> {
    field: &'a ConfidenceField<'b>,
    env: &'a DiscreteEnv,
}

impl Objective for StableOptObjective<'_, '_> {
    fn value(&self, x: &[f64]) -> f64 {
        upper_on_atoms(self.field, x, self.env).into_iter().fold(f64::INFINITY, f64::min)
    }

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        upper_on_atoms_many(self.field, xs, self.env)
            .into_iter()
            .map(|u| u.into_iter().fold(f64::INFINITY, f64::min))
            .collect()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let u = upper_on_atoms(self.field, x, self.env);
        let v = u.iter().copied().fold(f64::INFINITY, f64::min);
        let (atom, _) = attaining_atom(&u, self.env.masses(), v);
        upper_grad_x(self.field, x, &self.env.atoms()[atom])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableOptChoice {
    pub x: Vec<f64>,
    /// `max_x min_z u(x, z)` as found.
    pub value: f64,
    /// Index of `argmin_z l(x_t, z)`, lowest index on ties.
    pub z_index: usize,
}

/// `x_t = argmax_x min_z u(x, z)`, `z_t = argmin_z l(x_t, z)` over a
/// finite atom set.
pub fn stableopt_select(
    field: &ConfidenceField<'_>,
    domain: &Domain,
    atoms: &DiscreteEnv,
    cfg: &OptimizerConfig,
) -> Result<StableOptChoice> {
    domain.validate()?;
    let obj = StableOptObjective { field, env: atoms };
    let (x, value) = maximize(&obj, domain, cfg);
    let (l, _) = bounds_on_atoms(field, &x, atoms.atoms());
    let z_index = (0..l.len()).min_by(|&a, &b| l[a].total_cmp(&l[b]).then(a.cmp(&b))).expect("nonempty env");
    Ok(StableOptChoice { x, value, z_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_discrete_grid, make_truncated_gaussian, WeightRule};
    use crate::gp::{GpHyper, GpPosterior, ObservationSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prior(dim: usize) -> GpPosterior {
        GpPosterior::fit(&ObservationSet::new(1, dim - 1), &GpHyper::isotropic(dim, 0.3, 1.0, 1e-2).unwrap()).unwrap()
    }

    fn peaked(peak: f64) -> GpPosterior {
        let mut data = ObservationSet::new(1, 1);
        for i in 0..6 {
            let x = i as f64 / 5.0;
            for z in [0.2, 0.8] {
                data.push(vec![x], vec![z], -(x - peak).powi(2) * 4.0).unwrap();
            }
        }
        data.push(vec![peak], vec![0.5], 0.0).unwrap();
        GpPosterior::fit(&data, &GpHyper::isotropic(2, 0.25, 1.0, 1e-4).unwrap()).unwrap()
    }

    #[test]
    fn prior_acquisition_is_constant() {
        let post = prior(2);
        let env = make_discrete_grid(1, 10, WeightRule::GaussianBump).unwrap();
        let prob = AcquisitionProblem::new(ConfidenceField::new(&post, 1.0), &env, 0.1, Domain::unit(1));
        for x in [0.0, 0.3, 1.0] {
            assert!((acq_value(&prob, &[x]).unwrap() - 1.0).abs() < 1e-12);
            assert!(acq_grad(&prob, &[x]).unwrap().grad.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn zero_beta_uses_mean() {
        let post = peaked(0.4);
        let env = make_discrete_grid(1, 10, WeightRule::Uniform).unwrap();
        let prob = AcquisitionProblem::new(ConfidenceField::new(&post, 0.0), &env, 0.3, Domain::unit(1));
        let d = env.as_discrete().unwrap();
        let mu: Vec<f64> = d.atoms().iter().map(|z| post.predict(&[0.7, z[0]]).mean).collect();
        let want = var_discrete(&mu, d.masses(), 0.3).unwrap();
        assert!((acq_value(&prob, &[0.7]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let post = peaked(0.4);
        let env = make_discrete_grid(1, 10, WeightRule::GaussianBump).unwrap();
        let prob = AcquisitionProblem::new(ConfidenceField::new(&post, 2.0), &env, 0.1, Domain::unit(1));
        let h = 1e-6;
        for x in [0.13, 0.37, 0.61, 0.88] {
            let g = acq_grad(&prob, &[x]).unwrap();
            if g.degenerate {
                continue;
            }
            let fd = (acq_value(&prob, &[x + h]).unwrap() - acq_value(&prob, &[x - h]).unwrap()) / (2.0 * h);
            assert!((fd - g.grad[0]).abs() < 1e-4, "x={x}: {fd} vs {}", g.grad[0]);
        }
    }

    #[test]
    fn constructed_tie_sets_flag() {
        let (idx, tie) = attaining_atom(&[1.0, 2.0, 1.0 + 1e-10], &[0.2, 0.3, 0.5], 1.0);
        assert!(tie);
        assert_eq!(idx, 2);
        let (idx, tie) = attaining_atom(&[1.0, 2.0, 1.5], &[0.2, 0.3, 0.5], 1.5);
        assert!(!tie);
        assert_eq!(idx, 2);
        let (idx, _) = attaining_atom(&[1.0, 1.0], &[0.5, 0.5], 1.0);
        assert_eq!(idx, 0);
    }

    fn grid_argmax(prob: &AcquisitionProblem<'_>) -> (f64, f64) {
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..=10_000 {
            let x = i as f64 / 10_000.0;
            let v = acq_value(prob, &[x]).unwrap();
            if v > best.1 {
                best = (x, v);
            }
        }
        best
    }

    #[test]
    fn select_matches_grid_oracle() {
        let post = peaked(0.63);
        let env = make_discrete_grid(1, 10, WeightRule::GaussianBump).unwrap();
        let prob = AcquisitionProblem::new(ConfidenceField::new(&post, 0.5), &env, 0.1, Domain::unit(1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sel = select_x(&prob, &mut rng).unwrap();
        let (gx, gv) = grid_argmax(&prob);
        assert!((sel.x[0] - gx).abs() < 0.02, "{} vs {gx}", sel.x[0]);
        assert!(sel.value >= gv - 1e-9);
    }

    #[test]
    fn zero_beta_finds_mean_peak() {
        let post = peaked(0.27);
        let env = make_discrete_grid(1, 10, WeightRule::Uniform).unwrap();
        let prob = AcquisitionProblem::new(ConfidenceField::new(&post, 0.0), &env, 0.1, Domain::unit(1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sel = select_x(&prob, &mut rng).unwrap();
        assert!((sel.x[0] - 0.27).abs() < 0.05, "{:?}", sel.x);
    }

    #[test]
    fn best_of_sweep_and_stays_in_domain() {
        let post = peaked(0.5);
        let env = make_discrete_grid(1, 10, WeightRule::GaussianBump).unwrap();
        let prob = AcquisitionProblem::new(ConfidenceField::new(&post, 3.0), &env, 0.1, Domain::unit(1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sel = select_x(&prob, &mut rng).unwrap();
        assert!(prob.domain.contains(&sel.x));
        for c in prob.domain.candidates(512) {
            assert!(sel.value >= acq_value(&prob, &c).unwrap());
        }
        let again = select_x(&prob, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(sel, again);
    }

    #[test]
    fn small_alpha_is_min_over_atoms() {
        let post = peaked(0.5);
        let env = make_discrete_grid(1, 10, WeightRule::GaussianBump).unwrap();
        let d = env.as_discrete().unwrap();
        let f = ConfidenceField::new(&post, 2.0);
        let prob = AcquisitionProblem::new(f, &env, d.min_mass() * 0.5, Domain::unit(1));
        let u = bounds_on_atoms(&f, &[0.3], d.atoms()).1;
        assert_eq!(acq_value(&prob, &[0.3]).unwrap(), u.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn stableopt_matches_enumeration() {
        let post = peaked(0.45);
        let env = make_discrete_grid(1, 8, WeightRule::Uniform).unwrap();
        let d = env.as_discrete().unwrap();
        let f = ConfidenceField::new(&post, 1.5);
        let xs: Vec<Vec<f64>> = (0..=40).map(|i| vec![i as f64 / 40.0]).collect();
        let choice = stableopt_select(&f, &Domain::Finite(xs.clone()), d, &OptimizerConfig::default()).unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, x) in xs.iter().enumerate() {
            let m = d.atoms().iter().map(|z| f.bounds_at(&joint(x, z)).1).fold(f64::INFINITY, f64::min);
            if m > best {
                best = m;
                arg = i;
            }
        }
        assert!((choice.value - best).abs() < 1e-12);
        assert_eq!(choice.x, xs[arg]);
        let l: Vec<f64> = d.atoms().iter().map(|z| f.bounds_at(&joint(&choice.x, z)).0).collect();
        let lmin = l.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((l[choice.z_index] - lmin).abs() < 1e-12);
    }

    #[test]
    fn stableopt_with_z_free_bounds_is_ucb() {
        let mut data = ObservationSet::new(1, 1);
        for (x, y) in [(0.1, 0.2), (0.5, 0.9), (0.9, -0.3)] {
            data.push(vec![x], vec![0.5], y).unwrap();
        }
        let hyper = GpHyper::new(vec![0.2, 1e3], 1.0, 1e-2).unwrap();
        let post = GpPosterior::fit(&data, &hyper).unwrap();
        let env = make_discrete_grid(1, 5, WeightRule::Uniform).unwrap();
        let f = ConfidenceField::new(&post, 1.0);
        let xs: Vec<Vec<f64>> = (0..=50).map(|i| vec![i as f64 / 50.0]).collect();
        let choice = stableopt_select(&f, &Domain::Finite(xs.clone()), env.as_discrete().unwrap(), &OptimizerConfig::default())
            .unwrap();
        let ucb = |x: &[f64]| f.bounds_at(&joint(x, &[0.5])).1;
        let best = xs.iter().map(|x| ucb(x)).fold(f64::NEG_INFINITY, f64::max);
        assert!((ucb(&choice.x) - best).abs() < 1e-6);
    }

    #[test]
    fn tiny_alpha_matches_stableopt() {
        let post = peaked(0.35);
        let env = make_discrete_grid(1, 20, WeightRule::Uniform).unwrap();
        let f = ConfidenceField::new(&post, 2.0);
        let prob = AcquisitionProblem::new(f, &env, 1e-6, Domain::unit(1));
        let sel = select_x(&prob, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let so = stableopt_select(&f, &Domain::unit(1), env.as_discrete().unwrap(), &OptimizerConfig::default()).unwrap();
        assert!((sel.value - so.value).abs() <= 1e-9);
        assert_eq!(sel.x, so.x);
    }

    #[test]
    fn continuous_env_goes_through_surrogate() {
        let post = peaked(0.6);
        let env = make_truncated_gaussian(1);
        let prob = AcquisitionProblem::new(ConfidenceField::new(&post, 0.0), &env, 0.1, Domain::unit(1));
        let sel = select_x(&prob, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(sel.lnso_retrains >= 1);
        assert!(prob.domain.contains(&sel.x));
        assert!((sel.x[0] - 0.6).abs() < 0.1, "{:?}", sel.x);
        assert!(acq_value(&prob, &sel.x).is_err());
    }
}
