//! Synthetic benchmark problems and their ground-truth VaR.
//!
//! Every base function is negated (we maximize) and its native domain is
//! mapped onto the unit box. The first `d_x` coordinates are `x`, the rest
//! are `z`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquire::Domain;
use crate::env::{make_discrete_grid, make_truncated_gaussian, EnvDistribution, WeightRule};
use crate::error::{Error, Result};
use crate::risk::var_discrete;

pub const NOISE_VAR: f64 = 0.01;
/// Quasi-random samples behind the continuous-environment VaR.
pub const METRIC_SAMPLES: usize = 10_000;
pub const ORACLE_GRID: usize = 201;
/// Added before `log10` when the oracle is itself sampled.
pub const SAMPLED_ORACLE_EPS: f64 = 0.01;
/// Smallest metric reported on the log scale for exact oracles.
pub const LOG_FLOOR: f64 = 1e-10;

/// Published Branin minimum.
pub const BRANIN_MIN: f64 = 0.397_887_357_729_738;
pub const GOLDSTEIN_PRICE_MIN: f64 = 3.0;
pub const HARTMANN3_MIN: f64 = -3.862_779_787_332_77;

pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub fn goldstein_price(x1: f64, x2: f64) -> f64 {
    let a = 1.0
        + (x1 + x2 + 1.0).powi(2)
            * (19.0 - 14.0 * x1 + 3.0 * x1 * x1 - 14.0 * x2 + 6.0 * x1 * x2 + 3.0 * x2 * x2);
    let b = 30.0
        + (2.0 * x1 - 3.0 * x2).powi(2)
            * (18.0 - 32.0 * x1 + 12.0 * x1 * x1 + 48.0 * x2 - 36.0 * x1 * x2 + 27.0 * x2 * x2);
    a * b
}

const H3_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const H3_A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
const H3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

pub fn hartmann3(x: [f64; 3]) -> f64 {
    -(0..4)
        .map(|i| {
            let s: f64 = (0..3).map(|j| H3_A[i][j] * (x[j] - H3_P[i][j]).powi(2)).sum();
            H3_ALPHA[i] * (-s).exp()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Branin,
    GoldsteinPrice,
    #[serde(rename = "hartmann-1-2")]
    Hartmann12,
    #[serde(rename = "hartmann-2-1")]
    Hartmann21,
}

impl ProblemName {
    pub const ALL: [ProblemName; 4] =
        [ProblemName::Branin, ProblemName::GoldsteinPrice, ProblemName::Hartmann12, ProblemName::Hartmann21];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemName::Branin => "branin",
            ProblemName::GoldsteinPrice => "goldstein-price",
            ProblemName::Hartmann12 => "hartmann-1-2",
            ProblemName::Hartmann21 => "hartmann-2-1",
        }
    }

    /// `(d_x, d_z)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ProblemName::Branin | ProblemName::GoldsteinPrice => (1, 1),
            ProblemName::Hartmann12 => (1, 2),
            ProblemName::Hartmann21 => (2, 1),
        }
    }

    pub fn initial_design(&self) -> usize {
        match self {
            ProblemName::Branin | ProblemName::GoldsteinPrice => 3,
            ProblemName::Hartmann12 | ProblemName::Hartmann21 => 10,
        }
    }

    /// Noise-free negated objective at a unit-box joint point.
    pub fn eval_unit(&self, p: &[f64]) -> f64 {
        match self {
            ProblemName::Branin => -branin(-5.0 + 15.0 * p[0], 15.0 * p[1]),
            ProblemName::GoldsteinPrice => -goldstein_price(-2.0 + 4.0 * p[0], -2.0 + 4.0 * p[1]),
            ProblemName::Hartmann12 | ProblemName::Hartmann21 => -hartmann3([p[0], p[1], p[2]]),
        }
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace(['_', ' ', '(', ')', ','], "-");
        let key: Vec<&str> = lower.split('-').filter(|p| !p.is_empty()).collect();
        Ok(match key.join("-").as_str() {
            "branin" | "branin-hoo" | "branin-hoo-1-1" | "branin-1-1" => ProblemName::Branin,
            "goldstein-price" | "goldstein-price-1-1" => ProblemName::GoldsteinPrice,
            "hartmann-1-2" => ProblemName::Hartmann12,
            "hartmann-2-1" => ProblemName::Hartmann21,
            _ => return Err(Error::UnknownProblem(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZMode {
    Discrete,
    Continuous,
}

impl ZMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ZMode::Discrete => "discrete",
            ZMode::Continuous => "continuous",
        }
    }
}

impl fmt::Display for ZMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ZMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(ZMode::Discrete),
            "continuous" => Ok(ZMode::Continuous),
            _ => Err(Error::Config(format!("z_mode must be `discrete` or `continuous`, got `{s}`"))),
        }
    }
}

pub type ObjectiveFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Objective {
    Benchmark(ProblemName),
    Custom(ObjectiveFn),
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Benchmark(n) => write!(f, "Benchmark({n})"),
            Objective::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBest {
    pub x: Vec<f64>,
    pub value: f64,
}

/// The performance metric `V_α(f(x_*, Z)) - V_α(f(x̃, Z))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub raw: f64,
    pub log10: f64,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub label: String,
    pub objective: Objective,
    pub z_mode: ZMode,
    pub d_x: usize,
    pub d_z: usize,
    pub env: EnvDistribution,
    pub noise_var: f64,
    pub alpha: f64,
    pub domain: Domain,
    pub n_init: usize,
    metric_z: Vec<Vec<f64>>,
    oracle: OnceLock<OracleBest>,
}

/// A benchmark problem with its environment: Gaussian-bump grid (64 atoms
/// when `d_z = 2`, 100 otherwise) or the truncated Gaussian.
pub fn make_problem(name: ProblemName, z_mode: ZMode, alpha: f64) -> Result<Problem> {
    crate::risk::check_alpha(alpha)?;
    let (d_x, d_z) = name.dims();
    let env = match z_mode {
        ZMode::Discrete => {
            let n = if d_z == 2 { 8 } else { 100 };
            make_discrete_grid(d_z, n, WeightRule::GaussianBump)?
        }
        ZMode::Continuous => make_truncated_gaussian(d_z),
    };
    let mut p = Problem::new(name.as_str(), Objective::Benchmark(name), d_x, env, NOISE_VAR, alpha)?;
    p.n_init = name.initial_design();
    if let Some(o) = fixtures::oracle_lookup(name, z_mode, alpha) {
        let _ = p.oracle.set(o);
    }
    Ok(p)
}

impl Problem {
    pub fn new(
        label: &str,
        objective: Objective,
        d_x: usize,
        env: EnvDistribution,
        noise_var: f64,
        alpha: f64,
    ) -> Result<Self> {
        crate::risk::check_alpha(alpha)?;
        if !(noise_var >= 0.0) {
            return Err(Error::Config(format!("noise variance must be non-negative, got {noise_var}")));
        }
        let z_mode = if env.is_discrete() { ZMode::Discrete } else { ZMode::Continuous };
        let metric_z = if env.is_discrete() { Vec::new() } else { env.quasi_samples(METRIC_SAMPLES) };
        Ok(Self {
            label: label.to_string(),
            objective,
            z_mode,
            d_x,
            d_z: env.dim(),
            env,
            noise_var,
            alpha,
            domain: Domain::unit(d_x),
            n_init: 3,
            metric_z,
            oracle: OnceLock::new(),
        })
    }

    /// A problem around an arbitrary objective.
    pub fn custom<F>(label: &str, d_x: usize, env: EnvDistribution, noise_var: f64, alpha: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(label, Objective::Custom(Arc::new(f)), d_x, env, noise_var, alpha)
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        domain.validate()?;
        if domain.dim() != self.d_x {
            return Err(Error::DimensionMismatch { expected: self.d_x, got: domain.dim() });
        }
        self.domain = domain;
        self.oracle = OnceLock::new();
        Ok(self)
    }

    pub fn with_initial_design(mut self, n: usize) -> Self {
        self.n_init = n;
        self
    }

    /// Noise-free `f(x, z)`.
    pub fn objective(&self, x: &[f64], z: &[f64]) -> f64 {
        match &self.objective {
            Objective::Benchmark(name) => {
                let p: Vec<f64> = x.iter().chain(z).copied().collect();
                name.eval_unit(&p)
            }
            Objective::Custom(f) => f(x, z),
        }
    }

    /// `f(x, z)` plus Gaussian noise of variance `noise_var`.
    pub fn observe<R: Rng + ?Sized>(&self, x: &[f64], z: &[f64], rng: &mut R) -> f64 {
        let f = self.objective(x, z);
        if self.noise_var == 0.0 {
            return f;
        }
        f + Normal::new(0.0, self.noise_var.sqrt()).expect("finite sd").sample(rng)
    }

    /// `V_α(f(x, Z))`: exact over atoms, or the empirical quantile over a
    /// fixed quasi-random sample of the continuous environment.
    pub fn true_var(&self, x: &[f64]) -> f64 {
        match &self.env {
            EnvDistribution::Discrete(d) => {
                let vals: Vec<f64> = d.atoms().iter().map(|z| self.objective(x, z)).collect();
                var_discrete(&vals, d.masses(), self.alpha).expect("alpha checked at construction")
            }
            EnvDistribution::Continuous(_) => {
                let mut vals: Vec<f64> = self.metric_z.iter().map(|z| self.objective(x, z)).collect();
                vals.sort_by(f64::total_cmp);
                let k = ((self.alpha * vals.len() as f64).ceil() as usize).clamp(1, vals.len());
                vals[k - 1]
            }
        }
    }

    pub fn oracle_is_exact(&self) -> bool {
        self.env.is_discrete()
    }

    /// `(x_*, V_α(f(x_*, Z)))`, computed once per problem (or read from the
    /// fixtures for the standard benchmarks).
    pub fn oracle_best(&self) -> &OracleBest {
        self.oracle.get_or_init(|| compute_oracle(self, ORACLE_GRID))
    }

    pub fn metric(&self, x: &[f64]) -> Metric {
        let raw = self.oracle_best().value - self.true_var(x);
        let eps = if self.oracle_is_exact() { 0.0 } else { SAMPLED_ORACLE_EPS };
        Metric { raw, log10: (raw.max(0.0) + eps).max(LOG_FLOOR).log10() }
    }
}

/// Grid search over the domain with `per_axis` points per axis, then
/// nested grid refinement around the best point. Finite domains are
/// enumerated.
pub fn compute_oracle(problem: &Problem, per_axis: usize) -> OracleBest {
    let (lower, upper) = match &problem.domain {
        Domain::Finite(pts) => {
            let mut best = OracleBest { x: pts[0].clone(), value: f64::NEG_INFINITY };
            for p in pts {
                let v = problem.true_var(p);
                if v > best.value {
                    best = OracleBest { x: p.clone(), value: v };
                }
            }
            return best;
        }
        Domain::Box { lower, upper } => (lower.clone(), upper.clone()),
    };
    let d = lower.len();
    assert!(d <= 3, "oracle grid search supports d_x ≤ 3");
    let per_axis = per_axis.max(2);
    let mut best = OracleBest { x: lower.clone(), value: f64::NEG_INFINITY };
    let mut spacing: Vec<f64> = (0..d).map(|i| (upper[i] - lower[i]) / (per_axis - 1) as f64).collect();
    let scan = |centers: &[Vec<f64>], best: &mut OracleBest| {
        for x in centers {
            let v = problem.true_var(x);
            if v > best.value {
                *best = OracleBest { x: x.clone(), value: v };
            }
        }
    };
    let axes: Vec<Vec<f64>> = (0..d).map(|i| (0..per_axis).map(|k| lower[i] + k as f64 * spacing[i]).collect()).collect();
    scan(&grid_points(&axes), &mut best);
    // Each round covers ±1 old spacing with 21 points per axis.
    for _ in 0..4 {
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..21)
                    .map(|k| (best.x[i] + (k as f64 - 10.0) * spacing[i] / 10.0).clamp(lower[i], upper[i]))
                    .collect()
            })
            .collect();
        scan(&grid_points(&axes), &mut best);
        spacing.iter_mut().for_each(|s| *s /= 10.0);
    }
    best
}

fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Frozen reference data shipped with the crate.
pub mod fixtures {
    use super::*;

    pub const ORACLE_FILE: &str = "oracle_v1.tsv";
    pub const ORACLE_TSV: &str = include_str!("../fixtures/oracle_v1.tsv");
    pub const ATOMS_1D_FILE: &str = "atoms_1x100_gaussian-bump_v1.tsv";
    pub const ATOMS_1D_TSV: &str = include_str!("../fixtures/atoms_1x100_gaussian-bump_v1.tsv");
    pub const ATOMS_2D_FILE: &str = "atoms_2x8_gaussian-bump_v1.tsv";
    pub const ATOMS_2D_TSV: &str = include_str!("../fixtures/atoms_2x8_gaussian-bump_v1.tsv");

    /// `(file name, contents)` of every fixture.
    pub fn all() -> [(&'static str, &'static str); 3] {
        [(ORACLE_FILE, ORACLE_TSV), (ATOMS_1D_FILE, ATOMS_1D_TSV), (ATOMS_2D_FILE, ATOMS_2D_TSV)]
    }

    fn data_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split('\t').collect())
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct OracleRow {
        pub problem: ProblemName,
        pub z_mode: ZMode,
        pub alpha: f64,
        pub best: OracleBest,
    }

    pub fn parse_oracle(text: &str) -> Result<Vec<OracleRow>> {
        data_rows(text)
            .map(|cols| {
                let bad = || Error::Config(format!("malformed oracle row: {}", cols.join("\t")));
                if cols.len() < 5 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                Ok(OracleRow {
                    problem: cols[0].parse()?,
                    z_mode: cols[1].parse()?,
                    alpha: num(cols[2])?,
                    best: OracleBest { value: num(cols[3])?, x: cols[4].split(',').map(num).collect::<Result<_>>()? },
                })
            })
            .collect()
    }

    pub fn oracle_lookup(name: ProblemName, z_mode: ZMode, alpha: f64) -> Option<OracleBest> {
        parse_oracle(ORACLE_TSV)
            .ok()?
            .into_iter()
            .find(|r| r.problem == name && r.z_mode == z_mode && r.alpha == alpha)
            .map(|r| r.best)
    }

    pub fn render_oracle(rows: &[OracleRow]) -> String {
        let mut s = String::from("# riskbo oracle fixtures v1\nproblem\tz_mode\talpha\tvalue\tx\n");
        for r in rows {
            let x: Vec<String> = r.best.x.iter().map(|v| v.to_string()).collect();
            s += &format!("{}\t{}\t{}\t{}\t{}\n", r.problem, r.z_mode.as_str(), r.alpha, r.best.value, x.join(","));
        }
        s
    }

    /// Atoms and masses, one atom per line: coordinates then mass.
    pub fn parse_atoms(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut atoms = Vec::new();
        let mut masses = Vec::new();
        for cols in data_rows(text) {
            let vals: Vec<f64> = cols
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("malformed atom row: {e}")))?;
            let (mass, coords) = vals.split_last().ok_or_else(|| Error::Config("empty atom row".into()))?;
            atoms.push(coords.to_vec());
            masses.push(*mass);
        }
        Ok((atoms, masses))
    }

    pub fn render_atoms(env: &EnvDistribution) -> String {
        let d = env.as_discrete().expect("atom fixtures are discrete");
        let mut s = String::from("# riskbo atom grid v1\n");
        let header: Vec<String> = (1..=d.dim()).map(|i| format!("z{i}")).chain(["mass".to_string()]).collect();
        s += &header.join("\t");
        s.push('\n');
        for (a, m) in d.atoms().iter().zip(d.masses()) {
            let row: Vec<String> = a.iter().chain([m]).map(|v| v.to_string()).collect();
            s += &row.join("\t");
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn published_minima() {
        assert!((branin(PI, 2.275) - BRANIN_MIN).abs() < 1e-6);
        assert!((branin(-PI, 12.275) - BRANIN_MIN).abs() < 1e-6);
        assert!((branin(9.42478, 2.475) - BRANIN_MIN).abs() < 1e-5);
        assert_eq!(goldstein_price(0.0, -1.0), GOLDSTEIN_PRICE_MIN);
        assert!((hartmann3([0.114614, 0.555649, 0.852547]) - HARTMANN3_MIN).abs() < 1e-5);
    }

    #[test]
    fn negated_max_at_rescaled_minimizers() {
        let b = ProblemName::Branin;
        assert!((b.eval_unit(&[(PI + 5.0) / 15.0, 2.275 / 15.0]) + BRANIN_MIN).abs() < 1e-6);
        let g = ProblemName::GoldsteinPrice;
        assert!((g.eval_unit(&[0.5, 0.25]) + 3.0).abs() < 1e-9);
        let h = ProblemName::Hartmann12;
        assert!((h.eval_unit(&[0.114614, 0.555649, 0.852547]) + HARTMANN3_MIN).abs() < 1e-5);
        // No point on a coarse grid beats the published optimum.
        for name in ProblemName::ALL {
            let (d_x, d_z) = name.dims();
            let best = -match name {
                ProblemName::Branin => BRANIN_MIN,
                ProblemName::GoldsteinPrice => GOLDSTEIN_PRICE_MIN,
                _ => HARTMANN3_MIN,
            };
            let axis: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
            for p in grid_points(&vec![axis; d_x + d_z]) {
                assert!(name.eval_unit(&p) <= best + 1e-9);
            }
        }
    }

    #[test]
    fn problem_shapes() {
        let h = make_problem(ProblemName::Hartmann12, ZMode::Discrete, 0.1).unwrap();
        assert_eq!(h.env.as_discrete().unwrap().len(), 64);
        assert_eq!((h.d_x, h.d_z), (1, 2));
        let b = make_problem(ProblemName::Branin, ZMode::Discrete, 0.1).unwrap();
        assert_eq!(b.env.as_discrete().unwrap().len(), 100);
        assert_eq!(b.noise_var, 0.01);
        let c = make_problem(ProblemName::Hartmann21, ZMode::Continuous, 0.1).unwrap();
        assert_eq!((c.d_x, c.d_z), (2, 1));
        assert!(!c.env.is_discrete());
    }

    #[test]
    fn names_parse() {
        for n in ProblemName::ALL {
            assert_eq!(n.as_str().parse::<ProblemName>().unwrap(), n);
        }
        assert_eq!("Branin-Hoo-(1,1)".parse::<ProblemName>().unwrap(), ProblemName::Branin);
        assert!(matches!("rosenbrock".parse::<ProblemName>(), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn noisy_observation_spread() {
        let b = make_problem(ProblemName::Branin, ZMode::Discrete, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = b.objective(&[0.3], &[0.6]);
        let n = 20_000;
        let d: Vec<f64> = (0..n).map(|_| b.observe(&[0.3], &[0.6], &mut rng) - f).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.005);
        assert!((var - 0.01).abs() < 0.0006);
    }

    fn constant(z_mode: ZMode, alpha: f64) -> Problem {
        let env = match z_mode {
            ZMode::Discrete => make_discrete_grid(1, 10, WeightRule::GaussianBump).unwrap(),
            ZMode::Continuous => make_truncated_gaussian(1),
        };
        Problem::custom("constant", 1, env, 0.0, alpha, |_, _| 1.25).unwrap()
    }

    #[test]
    fn constant_objective() {
        for mode in [ZMode::Discrete, ZMode::Continuous] {
            for alpha in [0.05, 0.5, 0.95] {
                let p = constant(mode, alpha);
                assert_eq!(p.true_var(&[0.4]), 1.25);
                assert_eq!(p.oracle_best().value, 1.25);
                assert_eq!(p.metric(&[0.9]).raw, 0.0);
            }
        }
    }

    #[test]
    fn discrete_true_var_matches_sort_oracle() {
        let p = make_problem(ProblemName::Branin, ZMode::Discrete, 0.1).unwrap();
        let d = p.env.as_discrete().unwrap();
        for x in [0.0, 0.21, 0.5, 0.77, 1.0] {
            let mut pairs: Vec<(f64, f64)> = d.atoms().iter().zip(d.masses()).map(|(z, m)| (p.objective(&[x], z), *m)).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cum = 0.0;
            let mut want = f64::NAN;
            for (v, m) in pairs {
                cum += m;
                if cum >= 0.1 - 1e-12 {
                    want = v;
                    break;
                }
            }
            assert_eq!(p.true_var(&[x]), want);
        }
    }

    #[test]
    fn small_alpha_is_min_over_atoms() {
        let p = make_problem(ProblemName::GoldsteinPrice, ZMode::Discrete, 1e-30).unwrap();
        let d = p.env.as_discrete().unwrap();
        let min = d.atoms().iter().map(|z| p.objective(&[0.3], z)).fold(f64::INFINITY, f64::min);
        assert_eq!(p.true_var(&[0.3]), min);
    }

    #[test]
    fn oracle_dominates_random_points() {
        let p = make_problem(ProblemName::Branin, ZMode::Discrete, 0.1).unwrap();
        let best = p.oracle_best().value;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = [rng.random::<f64>()];
            assert!(p.true_var(&x) <= best + 1e-12);
            assert!(p.metric(&x).raw >= -1e-12);
        }
        assert!(p.metric(&p.oracle_best().x).raw.abs() < 1e-12);
    }

    #[test]
    fn fixture_oracles_reproduce() {
        for row in fixtures::parse_oracle(fixtures::ORACLE_TSV).unwrap() {
            if row.z_mode == ZMode::Continuous && row.problem == ProblemName::Hartmann21 {
                continue; // Heavy; covered by the regeneration example.
            }
            let mut p = make_problem(row.problem, row.z_mode, row.alpha).unwrap();
            p.oracle = OnceLock::new();
            let fresh = p.oracle_best();
            assert!((fresh.value - row.best.value).abs() < 1e-6, "{}: {} vs {}", row.problem, fresh.value, row.best.value);
        }
    }

    #[test]
    fn fixture_atom_grids_match_generation() {
        for (text, d_z, n) in [(fixtures::ATOMS_1D_TSV, 1, 100), (fixtures::ATOMS_2D_TSV, 2, 8)] {
            let (atoms, masses) = fixtures::parse_atoms(text).unwrap();
            let env = make_discrete_grid(d_z, n, WeightRule::GaussianBump).unwrap();
            let d = env.as_discrete().unwrap();
            assert_eq!(atoms, d.atoms());
            assert_eq!(masses, d.masses());
        }
    }

    #[test]
    fn finite_domain_oracle_enumerates() {
        let env = make_discrete_grid(1, 5, WeightRule::Uniform).unwrap();
        let xs: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 / 6.0]).collect();
        let p = Problem::custom("bowl", 1, env, 0.0, 0.5, |x, z| -(x[0] - 0.5).powi(2) + z[0])
            .unwrap()
            .with_domain(Domain::Finite(xs))
            .unwrap();
        assert_eq!(p.oracle_best().x, vec![0.5]);
    }
}
