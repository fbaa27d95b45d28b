//! Value-at-risk of random function values.
//!
//! `V_α(X) = inf { ω : P(X ≤ ω) ≥ α }`. For a finite environment this is an
//! exact lookup over sorted atom values; for a continuous environment the
//! α-quantile is estimated by stochastic subgradient descent on the
//! expected pinball loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{joint, ConfidenceField};
use crate::env::{EnvDistribution, EnvSampler};
use crate::error::{Error, Result};

const TIE_TOL: f64 = 1e-12;
const CUM_TOL: f64 = 1e-12;
const PILOT_SAMPLES: usize = 256;

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Index of the atom attaining the discrete VaR.
///
/// Among atoms tied with the VaR value the one with the largest mass wins,
/// then the lowest index.
pub fn var_discrete_index(values: &[f64], masses: &[f64], alpha: f64) -> Result<usize> {
    var_discrete_run(values, masses, alpha).map(|(i, _)| i)
}

// Attaining index and the smallest value of its run of near-ties.
fn var_discrete_run(values: &[f64], masses: &[f64], alpha: f64) -> Result<(usize, f64)> {
    check_alpha(alpha)?;
    if values.is_empty() || values.len() != masses.len() {
        return Err(Error::DimensionMismatch { expected: masses.len(), got: values.len() });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut cum = 0.0;
    let mut start = 0;
    while start < order.len() {
        // Merge the run of (near-)equal values.
        let head = values[order[start]];
        let mut end = start;
        while end < order.len() && values[order[end]] - head <= TIE_TOL {
            cum += masses[order[end]];
            end += 1;
        }
        if cum >= alpha - CUM_TOL || end == order.len() {
            let best = order[start..end]
                .iter()
                .copied()
                .max_by(|&a, &b| masses[a].total_cmp(&masses[b]).then(b.cmp(&a)))
                .expect("nonempty run");
            return Ok((best, head));
        }
        start = end;
    }
    unreachable!("loop returns on the last run")
}

/// Within a run of near-tied values the smallest is returned.
pub fn var_discrete(values: &[f64], masses: &[f64], alpha: f64) -> Result<f64> {
    var_discrete_run(values, masses, alpha).map(|(_, v)| v)
}

/// Tilted absolute value `ρ_α(w)`.
pub fn pinball(w: f64, alpha: f64) -> f64 {
    if w >= 0.0 {
        alpha * w
    } else {
        (alpha - 1.0) * w
    }
}

/// Knobs of the pinball-loss quantile estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PinballConfig {
    /// Environment samples per subgradient step.
    pub batch: usize,
    pub iters: usize,
    /// Step multiplier; the step at iteration `k` is
    /// `step · spread / √k` where `spread` is the pilot sample's standard
    /// deviation.
    pub step: f64,
    /// Starting point; `None` uses the empirical α-quantile of a pilot draw.
    pub init: Option<f64>,
}

impl Default for PinballConfig {
    fn default() -> Self {
        Self { batch: 64, iters: 1000, step: 1.0, init: None }
    }
}

impl PinballConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.iters == 0 || !(self.step > 0.0) {
            return Err(Error::Config("pinball batch, iters and step must be positive".into()));
        }
        Ok(())
    }
}

fn empirical_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let k = ((alpha * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Runs the estimator for several value maps at once on common samples
/// and a common step scale. `eval` maps a batch of `z` to one row of
/// values per `z`, each row of length `k`.
fn pinball_sgd<S, F, R>(
    mut eval: F,
    k: usize,
    sampler: &S,
    alpha: f64,
    cfg: &PinballConfig,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    S: EnvSampler,
    F: FnMut(&[Vec<f64>]) -> Vec<Vec<f64>>,
    R: Rng + ?Sized,
{
    check_alpha(alpha)?;
    cfg.validate()?;
    let mut evaluate = |zs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        let rows = eval(zs);
        for (z, row) in zs.iter().zip(&rows) {
            if let Some(&v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite { z: z.clone(), value: v });
            }
        }
        Ok(rows)
    };

    let pilot_z: Vec<Vec<f64>> = (0..PILOT_SAMPLES).map(|_| sampler.draw(rng)).collect();
    let pilot = evaluate(&pilot_z)?;
    let mut nu = Vec::with_capacity(k);
    let mut spread: f64 = 0.0;
    for j in 0..k {
        let mut col: Vec<f64> = pilot.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        spread = spread.max(sd);
        col.sort_by(f64::total_cmp);
        nu.push(cfg.init.unwrap_or_else(|| empirical_quantile(&col, alpha)));
    }
    let scale = cfg.step * spread;
    if scale == 0.0 {
        // Every pilot value coincided; the quantile is that value.
        return Ok(nu);
    }

    let burn = cfg.iters / 2;
    let mut avg = vec![0.0; k];
    let mut avg_count = 0usize;
    let mut batch = vec![Vec::new(); cfg.batch];
    for it in 1..=cfg.iters {
        for slot in batch.iter_mut() {
            *slot = sampler.draw(rng);
        }
        let rows = evaluate(&batch)?;
        let step = scale / (it as f64).sqrt();
        for j in 0..k {
            // d/dν E[ρ_α(v - ν)]: 1-α below ν, -α above, 0 at ν.
            let mut g = 0.0;
            for r in &rows {
                let v = r[j];
                if v < nu[j] {
                    g += 1.0 - alpha;
                } else if v > nu[j] {
                    g -= alpha;
                }
            }
            nu[j] -= step * g / rows.len() as f64;
        }
        if it > burn {
            for j in 0..k {
                avg[j] += nu[j];
            }
            avg_count += 1;
        }
    }
    Ok(avg.into_iter().map(|s| s / avg_count as f64).collect())
}

/// Estimates `V_α(value_fn(Z))` by minimizing `E[ρ_α(value_fn(Z) - ν)]`.
pub fn estimate_var_pinball<S, F, R>(
    mut value_fn: F,
    sampler: &S,
    alpha: f64,
    cfg: &PinballConfig,
    rng: &mut R,
) -> Result<f64>
where
    S: EnvSampler,
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let eval = |zs: &[Vec<f64>]| zs.iter().map(|z| vec![value_fn(z)]).collect();
    Ok(pinball_sgd(eval, 1, sampler, alpha, cfg, rng)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    Lower,
    Upper,
}

/// `[V_α(l(x,Z)), V_α(u(x,Z))]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarInterval {
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
    pub x: Vec<f64>,
}

impl VarInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Lower and upper bounds at every atom of a discrete environment.
pub fn bounds_on_atoms(field: &ConfidenceField<'_>, x: &[f64], atoms: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let pts: Vec<Vec<f64>> = atoms.iter().map(|z| joint(x, z)).collect();
    field.bounds_many(&pts).into_iter().unzip()
}

pub fn var_of_bound<R: Rng + ?Sized>(
    field: &ConfidenceField<'_>,
    x: &[f64],
    which: Bound,
    env: &EnvDistribution,
    alpha: f64,
    cfg: &PinballConfig,
    rng: &mut R,
) -> Result<f64> {
    match env {
        EnvDistribution::Discrete(d) => {
            let (l, u) = bounds_on_atoms(field, x, d.atoms());
            let values = match which {
                Bound::Lower => l,
                Bound::Upper => u,
            };
            var_discrete(&values, d.masses(), alpha)
        }
        EnvDistribution::Continuous(_) => {
            let pick = |(l, u): (f64, f64)| match which {
                Bound::Lower => l,
                Bound::Upper => u,
            };
            let eval = |zs: &[Vec<f64>]| {
                let pts: Vec<Vec<f64>> = zs.iter().map(|z| joint(x, z)).collect();
                field.bounds_many(&pts).into_iter().map(|b| vec![pick(b)]).collect()
            };
            Ok(pinball_sgd(eval, 1, env, alpha, cfg, rng)?[0])
        }
    }
}

/// The VaR confidence interval at `x`. On the continuous path both ends
/// share samples and step scale.
pub fn var_interval<R: Rng + ?Sized>(
    field: &ConfidenceField<'_>,
    x: &[f64],
    env: &EnvDistribution,
    alpha: f64,
    cfg: &PinballConfig,
    rng: &mut R,
) -> Result<VarInterval> {
    let (lo, hi) = match env {
        EnvDistribution::Discrete(d) => {
            let (l, u) = bounds_on_atoms(field, x, d.atoms());
            (var_discrete(&l, d.masses(), alpha)?, var_discrete(&u, d.masses(), alpha)?)
        }
        EnvDistribution::Continuous(_) => {
            let eval = |zs: &[Vec<f64>]| {
                let pts: Vec<Vec<f64>> = zs.iter().map(|z| joint(x, z)).collect();
                field.bounds_many(&pts).into_iter().map(|(l, u)| vec![l, u]).collect()
            };
            let v = pinball_sgd(eval, 2, env, alpha, cfg, rng)?;
            (v[0], v[1])
        }
    };
    if lo > hi {
        return Err(Error::InvertedInterval { lo, hi });
    }
    Ok(VarInterval { lo, hi, alpha, x: x.to_vec() })
}
