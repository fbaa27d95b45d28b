//! The environmental random variable `Z`.
//!
//! A [`EnvDistribution`] is either a finite set of atoms with probability
//! masses or an axis-independent truncated Gaussian on a box. Both are
//! immutable after construction and sample through a caller-supplied rng.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::qmc;

const MASS_TOL: f64 = 1e-12;
const ATOM_TOL: f64 = 1e-12;

/// Weighting applied to grid atoms by [`make_discrete_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    Uniform,
    /// `mass(z) ∝ exp(-Σ_i (z_i - 0.5)² / 0.1²)`.
    GaussianBump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEnv {
    atoms: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl DiscreteEnv {
    pub fn new(atoms: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        if atoms.len() != masses.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} atoms but {} masses",
                atoms.len(),
                masses.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 || atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::InvalidDistribution("ragged or empty atom coordinates".into()));
        }
        if masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidDistribution("masses must be strictly positive".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        for i in 0..atoms.len() {
            for j in 0..i {
                let same = atoms[i]
                    .iter()
                    .zip(&atoms[j])
                    .all(|(a, b)| (a - b).abs() <= ATOM_TOL);
                if same {
                    return Err(Error::InvalidDistribution(format!(
                        "atoms {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self { atoms, masses })
    }

    /// Builds from unnormalized positive weights.
    pub fn from_weights(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("total weight {total}")));
        }
        let masses = weights.iter().map(|w| w / total).collect();
        Self::new(atoms, masses)
    }

    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len();
        Self::from_weights(atoms, vec![1.0; n])
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn index_of(&self, z: &[f64]) -> Option<usize> {
        self.atoms.iter().position(|a| {
            a.len() == z.len() && a.iter().zip(z).all(|(p, q)| (p - q).abs() <= ATOM_TOL)
        })
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, m) in self.masses.iter().enumerate() {
            acc += m;
            if u < acc {
                return i;
            }
        }
        self.masses.len() - 1
    }
}

/// Independent per-axis Gaussian truncated at `mean ± half_width·sd` and
/// intersected with a declared box.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussian {
    mean: Vec<f64>,
    sd: Vec<f64>,
    half_width: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    // Φ(b) - Φ(a) per axis, in standardized units.
    axis_mass: Vec<f64>,
}

impl TruncatedGaussian {
    pub fn new(
        mean: Vec<f64>,
        sd: Vec<f64>,
        half_width: f64,
        box_lower: Vec<f64>,
        box_upper: Vec<f64>,
    ) -> Result<Self> {
        let d = mean.len();
        if d == 0 || sd.len() != d || box_lower.len() != d || box_upper.len() != d {
            return Err(Error::InvalidDistribution("inconsistent dimensions".into()));
        }
        if !(half_width > 0.0) || sd.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidDistribution("sd and half-width must be positive".into()));
        }
        let std = std_normal();
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        let mut axis_mass = Vec::with_capacity(d);
        for i in 0..d {
            let lo = (mean[i] - half_width * sd[i]).max(box_lower[i]);
            let hi = (mean[i] + half_width * sd[i]).min(box_upper[i]);
            if !(lo < hi) {
                return Err(Error::InvalidDistribution(format!("empty support on axis {i}")));
            }
            let a = (lo - mean[i]) / sd[i];
            let b = (hi - mean[i]) / sd[i];
            axis_mass.push(std.cdf(b) - std.cdf(a));
            lower.push(lo);
            upper.push(hi);
        }
        Ok(Self { mean, sd, half_width, lower, upper, axis_mass })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Support box `(lower, upper)`.
    pub fn support(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        if z.len() != self.mean.len() {
            return 0.0;
        }
        let std = std_normal();
        let mut p = 1.0;
        for i in 0..z.len() {
            if z[i] < self.lower[i] || z[i] > self.upper[i] {
                return 0.0;
            }
            let s = (z[i] - self.mean[i]) / self.sd[i];
            p *= std.pdf(s) / (self.sd[i] * self.axis_mass[i]);
        }
        p
    }

    /// Gradient of `log p(z)` inside the support.
    pub fn grad_log_density(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(zi, (m, s))| -(zi - m) / (s * s))
            .collect()
    }

    pub fn mode(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(m, (lo, hi))| m.clamp(*lo, *hi))
            .collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.mean.len())
            .map(|i| loop {
                let n: f64 = rng.sample(StandardNormal);
                let v = self.mean[i] + self.sd[i] * n;
                if v >= self.lower[i] && v <= self.upper[i] {
                    break v;
                }
            })
            .collect()
    }

    /// Maps a point of the unit cube through the per-axis inverse CDF.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        let std = std_normal();
        (0..self.mean.len())
            .map(|i| {
                let a = std.cdf((self.lower[i] - self.mean[i]) / self.sd[i]);
                let p = (a + u[i] * self.axis_mass[i]).clamp(1e-15, 1.0 - 1e-15);
                (self.mean[i] + self.sd[i] * std.inverse_cdf(p)).clamp(self.lower[i], self.upper[i])
            })
            .collect()
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvDistribution {
    Discrete(DiscreteEnv),
    Continuous(TruncatedGaussian),
}

/// Anything that can draw environmental samples.
///
/// Implemented by [`EnvDistribution`]; tests also plug in untruncated
/// samplers.
pub trait EnvSampler {
    fn dim(&self) -> usize;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;
}

impl EnvSampler for EnvDistribution {
    fn dim(&self) -> usize {
        EnvDistribution::dim(self)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            EnvDistribution::Discrete(d) => d.atoms[d.sample_index(rng)].clone(),
            EnvDistribution::Continuous(c) => c.sample_one(rng),
        }
    }
}

impl EnvDistribution {
    pub fn dim(&self) -> usize {
        match self {
            EnvDistribution::Discrete(d) => d.dim(),
            EnvDistribution::Continuous(c) => c.mean.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, EnvDistribution::Discrete(_))
    }

    pub fn as_discrete(&self) -> Option<&DiscreteEnv> {
        match self {
            EnvDistribution::Discrete(d) => Some(d),
            EnvDistribution::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&TruncatedGaussian> {
        match self {
            EnvDistribution::Continuous(c) => Some(c),
            EnvDistribution::Discrete(_) => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// Probability mass for discrete `Z`, density for continuous `Z`; zero
    /// off the support.
    pub fn mass_or_density(&self, z: &[f64]) -> f64 {
        match self {
            EnvDistribution::Discrete(d) => d.index_of(z).map_or(0.0, |i| d.masses[i]),
            EnvDistribution::Continuous(c) => c.density(z),
        }
    }

    /// Bounding box of the support.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            EnvDistribution::Discrete(d) => {
                let dim = d.dim();
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for a in &d.atoms {
                    for i in 0..dim {
                        lo[i] = lo[i].min(a[i]);
                        hi[i] = hi[i].max(a[i]);
                    }
                }
                (lo, hi)
            }
            EnvDistribution::Continuous(c) => (c.lower.clone(), c.upper.clone()),
        }
    }

    /// Deterministic quasi-random sample set; continuous only uses the
    /// inverse-CDF map of a Halton sequence.
    pub fn quasi_samples(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            EnvDistribution::Discrete(d) => {
                // Stratified inverse-CDF over atoms.
                let mut out = Vec::with_capacity(n);
                for k in 0..n {
                    let u = (k as f64 + 0.5) / n as f64;
                    let mut acc = 0.0;
                    let mut idx = d.len() - 1;
                    for (i, m) in d.masses.iter().enumerate() {
                        acc += m;
                        if u < acc {
                            idx = i;
                            break;
                        }
                    }
                    out.push(d.atoms[idx].clone());
                }
                out
            }
            EnvDistribution::Continuous(c) => {
                qmc::halton(n, c.mean.len()).iter().map(|u| c.from_unit(u)).collect()
            }
        }
    }
}

/// Equi-spaced grid over `[0,1]^d_z` (endpoints included) with the chosen
/// weighting.
pub fn make_discrete_grid(d_z: usize, n_per_axis: usize, rule: WeightRule) -> Result<EnvDistribution> {
    if d_z == 0 || n_per_axis == 0 {
        return Err(Error::InvalidDistribution("d_z and n_per_axis must be ≥ 1".into()));
    }
    let coords: Vec<f64> = if n_per_axis == 1 {
        vec![0.5]
    } else {
        (0..n_per_axis).map(|i| i as f64 / (n_per_axis - 1) as f64).collect()
    };
    let total = n_per_axis.pow(d_z as u32);
    let mut atoms = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut atom = vec![0.0; d_z];
        for axis in (0..d_z).rev() {
            atom[axis] = coords[rem % n_per_axis];
            rem /= n_per_axis;
        }
        atoms.push(atom);
    }
    let weights: Vec<f64> = match rule {
        WeightRule::Uniform => vec![1.0; total],
        WeightRule::GaussianBump => atoms
            .iter()
            .map(|z| {
                let sq: f64 = z.iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
                (-sq / 0.01).exp()
            })
            .collect(),
    };
    Ok(EnvDistribution::Discrete(DiscreteEnv::from_weights(atoms, weights)?))
}

/// Mean 0.5, sd 0.125, truncated at two standard deviations, on `[0,1]^d_z`.
pub fn make_truncated_gaussian(d_z: usize) -> EnvDistribution {
    let dist = TruncatedGaussian::new(
        vec![0.5; d_z],
        vec![0.125; d_z],
        2.0,
        vec![0.0; d_z],
        vec![1.0; d_z],
    )
    .expect("fixed parameters are valid");
    EnvDistribution::Continuous(dist)
}
