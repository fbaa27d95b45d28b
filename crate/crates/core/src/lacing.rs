//! Lacing values: environment points `z` whose band `[l(x,z), u(x,z)]`
//! contains the whole VaR interval at `x`.
//!
//! For finite environments candidates are enumerated exactly. For a
//! continuous environment we minimize the hinge loss
//! `ReLU(-d_u(z)) + ReLU(-d_l(z))` and then climb the density inside the
//! certified region.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{joint, ConfidenceField};
use crate::env::{DiscreteEnv, EnvDistribution, TruncatedGaussian};
use crate::error::{Error, Result};
use crate::risk::{bounds_on_atoms, var_discrete, var_interval, PinballConfig, VarInterval};

/// Slack on `d_u, d_l` for exact (discrete) certification.
pub const DISCRETE_SLACK: f64 = 1e-9;
/// Slack for continuous certification; VaR endpoints there are estimates.
pub const CONTINUOUS_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LvMode {
    Uniform,
    MaxMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvResult {
    pub z: Vec<f64>,
    pub certified: bool,
    /// `u(x,z) - V_α(u(x,Z))`.
    pub d_u: f64,
    /// `V_α(l(x,Z)) - l(x,z)`.
    pub d_l: f64,
    pub mass_or_density: f64,
}

/// Indices `i` with `lower[i] ≤ V_α(lower)` and `upper[i] ≥ V_α(upper)`.
pub fn lacing_candidates(lower: &[f64], upper: &[f64], masses: &[f64], alpha: f64) -> Result<Vec<usize>> {
    let var_l = var_discrete(lower, masses, alpha)?;
    let var_u = var_discrete(upper, masses, alpha)?;
    let out: Vec<usize> = (0..lower.len())
        .filter(|&i| lower[i] <= var_l + DISCRETE_SLACK && upper[i] >= var_u - DISCRETE_SLACK)
        .collect();
    if out.is_empty() {
        return Err(Error::NoLacingValue);
    }
    Ok(out)
}

/// Atom indices of all lacing values at `x`.
pub fn lv_candidates_discrete(
    field: &ConfidenceField<'_>,
    x: &[f64],
    env: &DiscreteEnv,
    alpha: f64,
) -> Result<Vec<usize>> {
    let (l, u) = bounds_on_atoms(field, x, env.atoms());
    lacing_candidates(&l, &u, env.masses(), alpha)
}

/// Picks one candidate index: uniformly at random, or the heaviest atom
/// with a lexicographic tie-break on coordinates.
pub fn select_lv<R: Rng + ?Sized>(candidates: &[usize], env: &DiscreteEnv, mode: LvMode, rng: &mut R) -> usize {
    assert!(!candidates.is_empty(), "select_lv needs at least one candidate");
    match mode {
        LvMode::Uniform => *candidates.choose(rng).expect("nonempty"),
        LvMode::MaxMass => {
            let masses = env.masses();
            let atoms = env.atoms();
            *candidates
                .iter()
                .max_by(|&&a, &&b| {
                    masses[a].total_cmp(&masses[b]).then_with(|| {
                        // Smaller coordinates win ties, so compare reversed.
                        let ord = atoms[b]
                            .iter()
                            .zip(&atoms[a])
                            .map(|(p, q)| p.total_cmp(q))
                            .find(|o| o.is_ne())
                            .unwrap_or(std::cmp::Ordering::Equal);
                        ord
                    })
                })
                .expect("nonempty")
        }
    }
}

/// Hinge loss `ReLU(-d_u(z)) + ReLU(-d_l(z))` against a fixed VaR interval.
pub fn lv_loss(z: &[f64], field: &ConfidenceField<'_>, x: &[f64], interval: &VarInterval) -> f64 {
    let (l, u) = field.bounds_at(&joint(x, z));
    hinge(interval.hi - u) + hinge(l - interval.lo)
}

fn hinge(v: f64) -> f64 {
    v.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LvSearchConfig {
    pub starts: usize,
    pub hinge_steps: usize,
    pub density_steps: usize,
    /// Initial hinge step as a fraction of the support width.
    pub step: f64,
    pub tol: f64,
}

impl Default for LvSearchConfig {
    fn default() -> Self {
        Self { starts: 16, hinge_steps: 200, density_steps: 50, step: 0.05, tol: CONTINUOUS_SLACK }
    }
}

struct LvObjective<'a, 'b> {
    field: &'a ConfidenceField<'b>,
    x: &'a [f64],
    interval: &'a VarInterval,
    dist: &'a TruncatedGaussian,
}

impl LvObjective<'_, '_> {
    fn margins(&self, z: &[f64]) -> (f64, f64) {
        let (l, u) = self.field.bounds_at(&joint(self.x, z));
        (u - self.interval.hi, self.interval.lo - l)
    }

    fn loss(&self, z: &[f64]) -> f64 {
        let (du, dl) = self.margins(z);
        hinge(-du) + hinge(-dl)
    }

    fn loss_grad(&self, z: &[f64]) -> Vec<f64> {
        let p = joint(self.x, z);
        let (du, dl) = self.margins(z);
        let g = self.field.posterior.predict_grad(&p);
        let k = self.field.width_factor();
        let d_x = self.x.len();
        (0..z.len())
            .map(|i| {
                let dmu = g.mean[d_x + i];
                let dsd = g.sd[d_x + i];
                let mut v = 0.0;
                if du < 0.0 {
                    v -= dmu + k * dsd;
                }
                if dl < 0.0 {
                    v += dmu - k * dsd;
                }
                v
            })
            .collect()
    }

    fn project(&self, z: &mut [f64]) {
        let (lo, hi) = self.dist.support();
        for i in 0..z.len() {
            z[i] = z[i].clamp(lo[i], hi[i]);
        }
    }

    fn result(&self, z: Vec<f64>, tol: f64) -> LvResult {
        let (d_u, d_l) = self.margins(&z);
        LvResult {
            certified: d_u >= -tol && d_l >= -tol,
            d_u,
            d_l,
            mass_or_density: self.dist.density(&z),
            z,
        }
    }
}

/// Searches a continuous environment for a lacing value against a
/// precomputed VaR interval.
pub fn find_lv_with_interval<R: Rng + ?Sized>(
    field: &ConfidenceField<'_>,
    x: &[f64],
    env: &TruncatedGaussian,
    interval: &VarInterval,
    cfg: &LvSearchConfig,
    rng: &mut R,
) -> LvResult {
    let obj = LvObjective { field, x, interval, dist: env };
    let (lo, hi) = env.support();
    let width: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let certified = |z: &[f64]| {
        let (du, dl) = obj.margins(z);
        du >= -cfg.tol && dl >= -cfg.tol
    };

    let mut best: Option<LvResult> = None;
    for _ in 0..cfg.starts.max(1) {
        let mut z = env.sample_one(rng);
        let mut loss = obj.loss(&z);
        let mut step = cfg.step * width;
        for _ in 0..cfg.hinge_steps {
            if loss <= cfg.tol {
                break;
            }
            let g = obj.loss_grad(&z);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                break;
            }
            let mut cand: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi / norm).collect();
            obj.project(&mut cand);
            let cl = obj.loss(&cand);
            if cl < loss {
                z = cand;
                loss = cl;
                step = (step * 1.5).min(width);
            } else {
                step *= 0.5;
                if step < 1e-12 * width {
                    break;
                }
            }
        }
        if loss <= cfg.tol && certified(&z) {
            // Newton step toward the mode, shortened until certification holds.
            let mode = env.mode();
            let mut frac = 1.0;
            for _ in 0..cfg.density_steps {
                let cand: Vec<f64> = z.iter().zip(&mode).map(|(zi, m)| zi + frac * (m - zi)).collect();
                if certified(&cand) && env.density(&cand) >= env.density(&z) {
                    z = cand;
                    if frac < 1.0 {
                        frac = (frac * 2.0).min(1.0);
                    }
                    if z == mode {
                        break;
                    }
                } else {
                    frac *= 0.5;
                }
            }
        }
        let res = obj.result(z, cfg.tol);
        let better = match &best {
            None => true,
            Some(b) => match (res.certified, b.certified) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => res.mass_or_density > b.mass_or_density,
                (false, false) => obj.loss(&res.z) < obj.loss(&b.z),
            },
        };
        if better {
            best = Some(res);
        }
    }
    best.expect("at least one start")
}

/// Continuous lacing-value search: estimates the VaR interval, then runs
/// [`find_lv_with_interval`].
pub fn find_lv_continuous<R: Rng + ?Sized>(
    field: &ConfidenceField<'_>,
    x: &[f64],
    env: &EnvDistribution,
    alpha: f64,
    pinball: &PinballConfig,
    cfg: &LvSearchConfig,
    rng: &mut R,
) -> Result<LvResult> {
    let dist = env
        .as_continuous()
        .ok_or_else(|| Error::Config("find_lv_continuous needs a continuous environment".into()))?;
    let interval = var_interval(field, x, env, alpha, pinball, rng)?;
    Ok(find_lv_with_interval(field, x, dist, &interval, cfg, rng))
}
