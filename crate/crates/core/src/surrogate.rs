//! Local neural surrogate optimization.
//!
//! A small network `g(x; θ)` is fitted with the pinball loss to the
//! α-quantile of `target(x, Z)` on a ball around a center `x_c`, and the
//! iterate climbs `g`. When the iterate drifts `δ_x` away from the center
//! the ball moves and the network is retrained from its previous weights.
//!
//! Inside the network inputs are `(x - x_c) / r` and outputs are in units
//! of the target's spread on the first training ball.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::bounds::joint;
use crate::env::EnvSampler;
use crate::error::{Error, Result};
use crate::risk::{check_alpha, pinball};

pub const HIDDEN: usize = 30;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `d_x → 30 → 30 → 1`, sigmoid hidden units and a linear head.
///
/// Parameters live in one flat vector laid out as
/// `W1 (30×d_x, row-major), b1, W2 (30×30), b2, w3, b3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateNet {
    d_x: usize,
    params: Vec<f64>,
}

struct Activations {
    a1: Vec<f64>,
    a2: Vec<f64>,
    out: f64,
}

impl SurrogateNet {
    pub fn param_count(d_x: usize) -> usize {
        HIDDEN * d_x + HIDDEN + HIDDEN * HIDDEN + HIDDEN + HIDDEN + 1
    }

    pub fn zeros(d_x: usize) -> Self {
        Self { d_x, params: vec![0.0; Self::param_count(d_x)] }
    }

    /// Glorot-uniform hidden layers; the head starts small so the initial
    /// output is close to zero.
    pub fn new<R: Rng + ?Sized>(d_x: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(d_x);
        let (w1, _, w2, _, w3, _) = net.offsets();
        let fill = |p: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).expect("finite bounds");
            p.iter_mut().for_each(|v| *v = u.sample(rng));
        };
        fill(&mut net.params[w1..w1 + HIDDEN * d_x], d_x, HIDDEN, rng);
        fill(&mut net.params[w2..w2 + HIDDEN * HIDDEN], HIDDEN, HIDDEN, rng);
        let head = Uniform::new_inclusive(-0.1, 0.1).expect("finite bounds");
        net.params[w3..w3 + HIDDEN].iter_mut().for_each(|v| *v = head.sample(rng));
        net
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = w1 + HIDDEN * self.d_x;
        let w2 = b1 + HIDDEN;
        let b2 = w2 + HIDDEN * HIDDEN;
        let w3 = b2 + HIDDEN;
        let b3 = w3 + HIDDEN;
        (w1, b1, w2, b2, w3, b3)
    }

    fn activations(&self, u: &[f64]) -> Activations {
        assert_eq!(u.len(), self.d_x, "input dimension");
        let p = &self.params;
        let (w1, b1, w2, b2, w3, b3) = self.offsets();
        let a1: Vec<f64> = (0..HIDDEN)
            .map(|h| {
                let row = &p[w1 + h * self.d_x..w1 + (h + 1) * self.d_x];
                sigmoid(p[b1 + h] + row.iter().zip(u).map(|(w, x)| w * x).sum::<f64>())
            })
            .collect();
        let a2: Vec<f64> = (0..HIDDEN)
            .map(|h| {
                let row = &p[w2 + h * HIDDEN..w2 + (h + 1) * HIDDEN];
                sigmoid(p[b2 + h] + row.iter().zip(&a1).map(|(w, a)| w * a).sum::<f64>())
            })
            .collect();
        let out = p[b3] + p[w3..w3 + HIDDEN].iter().zip(&a2).map(|(w, a)| w * a).sum::<f64>();
        Activations { a1, a2, out }
    }

    pub fn forward(&self, u: &[f64]) -> f64 {
        self.activations(u).out
    }

    // Back-propagated deltas of the two hidden layers.
    fn deltas(&self, act: &Activations) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let (_, _, w2, _, w3, _) = self.offsets();
        let d2: Vec<f64> = (0..HIDDEN).map(|h| p[w3 + h] * act.a2[h] * (1.0 - act.a2[h])).collect();
        let d1: Vec<f64> = (0..HIDDEN)
            .map(|j| {
                let back: f64 = (0..HIDDEN).map(|h| p[w2 + h * HIDDEN + j] * d2[h]).sum();
                back * act.a1[j] * (1.0 - act.a1[j])
            })
            .collect();
        (d1, d2)
    }

    /// Output and `∂g/∂θ` in the flat parameter layout.
    pub fn param_grad(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.params.len()];
        let out = self.accumulate_param_grad(u, 1.0, &mut g);
        (out, g)
    }

    // Adds `weight · ∂g/∂θ` into `acc` and returns `g(u)`.
    fn accumulate_param_grad(&self, u: &[f64], weight: f64, acc: &mut [f64]) -> f64 {
        let act = self.activations(u);
        let (d1, d2) = self.deltas(&act);
        let (w1, b1, w2, b2, w3, b3) = self.offsets();
        for h in 0..HIDDEN {
            let s1 = weight * d1[h];
            for (i, x) in u.iter().enumerate() {
                acc[w1 + h * self.d_x + i] += s1 * x;
            }
            acc[b1 + h] += s1;
            let s2 = weight * d2[h];
            for j in 0..HIDDEN {
                acc[w2 + h * HIDDEN + j] += s2 * act.a1[j];
            }
            acc[b2 + h] += s2;
            acc[w3 + h] += weight * act.a2[h];
        }
        acc[b3] += weight;
        act.out
    }

    /// `∂g/∂u`.
    pub fn input_grad(&self, u: &[f64]) -> Vec<f64> {
        let act = self.activations(u);
        let (d1, _) = self.deltas(&act);
        let p = &self.params;
        (0..self.d_x).map(|i| (0..HIDDEN).map(|h| p[h * self.d_x + i] * d1[h]).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LnsoConfig {
    pub radius: f64,
    pub t_v: usize,
    pub t_g: usize,
    pub gamma_x: f64,
    pub gamma_g: f64,
    pub n_z: usize,
    pub n_x: usize,
    /// Retrain distance `δ_x`; `None` means the radius.
    pub trigger: Option<f64>,
}

impl Default for LnsoConfig {
    fn default() -> Self {
        Self { radius: 0.1, t_v: 100, t_g: 500, gamma_x: 0.02, gamma_g: 0.05, n_z: 10, n_x: 50, trigger: None }
    }
}

impl LnsoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("lnso: {m}")));
        if !(self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if self.t_v == 0 || self.t_g == 0 || self.n_z == 0 || self.n_x == 0 {
            return bad("iteration and sample counts must be at least 1");
        }
        if !(self.gamma_x > 0.0 && self.gamma_g > 0.0) {
            return bad("step sizes must be positive");
        }
        if let Some(d) = self.trigger {
            if !(d > 0.0) {
                return bad("trigger distance must be positive");
            }
        }
        Ok(())
    }

    pub fn trigger_distance(&self) -> f64 {
        self.trigger.unwrap_or(self.radius)
    }
}

// First and second moment estimates with the usual 0.9 / 0.999 decays.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// A point drawn uniformly from the ball `B(center, r)` and clipped to the
/// box.
pub fn sample_ball<R: Rng + ?Sized>(center: &[f64], r: f64, lower: &[f64], upper: &[f64], rng: &mut R) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let rad = r * rng.random::<f64>().powf(1.0 / d as f64);
    (0..d).map(|i| (center[i] + rad * dir[i] / norm).clamp(lower[i], upper[i])).collect()
}

/// A network together with the ball it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSurrogate {
    pub net: SurrogateNet,
    pub center: Vec<f64>,
    pub radius: f64,
    pub shift: f64,
    pub scale: f64,
}

impl LocalSurrogate {
    pub fn new(net: SurrogateNet, center: Vec<f64>, radius: f64) -> Self {
        Self { net, center, radius, shift: 0.0, scale: 1.0 }
    }

    fn local(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| (a - c) / self.radius).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.shift + self.scale * self.net.forward(&self.local(x))
    }

    pub fn grad_x(&self, x: &[f64]) -> Vec<f64> {
        let k = self.scale / self.radius;
        self.net.input_grad(&self.local(x)).into_iter().map(|g| k * g).collect()
    }
}

/// Batched objective over joint points `(x, z)`.
pub type Target<'a> = dyn Fn(&[Vec<f64>]) -> Vec<f64> + 'a;

/// Domain box for the surrogate iterates.
#[derive(Debug, Clone, Copy)]
pub struct BoxRef<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

/// `t_g` pinball-loss steps (Adam moments, step `γ_g / √j`) on the ball around `sur.center`. Returns
/// the mean loss of every step, in target units.
///
/// The first call on a surrogate whose `scale` is still 1 with `shift` 0
/// sets the output normalization from the first batch.
#[allow(clippy::too_many_arguments)]
pub fn net_train_local<S, R>(
    sur: &mut LocalSurrogate,
    target: &Target<'_>,
    env: &S,
    alpha: f64,
    cfg: &LnsoConfig,
    domain: BoxRef<'_>,
    normalize: bool,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    S: EnvSampler,
    R: Rng + ?Sized,
{
    check_alpha(alpha)?;
    cfg.validate()?;
    let mut losses = Vec::with_capacity(cfg.t_g);
    let mut adam = Adam::new(sur.net.params().len());
    let mut grad = vec![0.0; sur.net.params().len()];
    let pairs = (cfg.n_x * cfg.n_z) as f64;
    for j in 1..=cfg.t_g {
        let xs: Vec<Vec<f64>> =
            (0..cfg.n_x).map(|_| sample_ball(&sur.center, sur.radius, domain.lower, domain.upper, rng)).collect();
        let zs: Vec<Vec<f64>> = (0..cfg.n_z).map(|_| env.draw(rng)).collect();
        let pts: Vec<Vec<f64>> = xs.iter().flat_map(|x| zs.iter().map(move |z| joint(x, z))).collect();
        let h = target(&pts);
        if let Some((i, &v)) = h.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { z: zs[i % cfg.n_z].clone(), value: v });
        }
        if normalize && j == 1 {
            let mean = h.iter().sum::<f64>() / pairs;
            let sd = (h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pairs).sqrt();
            sur.shift = mean;
            sur.scale = if sd > 1e-12 { sd } else { 1.0 };
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (ix, x) in xs.iter().enumerate() {
            let u = sur.local(x);
            let g_out = sur.shift + sur.scale * sur.net.forward(&u);
            // dρ_α(h - g)/dg is -α when h ≥ g and 1 - α otherwise.
            let mut weight = 0.0;
            for iz in 0..cfg.n_z {
                let w = h[ix * cfg.n_z + iz] - g_out;
                loss += pinball(w, alpha);
                weight += if w >= 0.0 { -alpha } else { 1.0 - alpha };
            }
            sur.net.accumulate_param_grad(&u, weight / pairs, &mut grad);
        }
        loss /= pairs;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("surrogate training loss became {loss} at step {j}")));
        }
        losses.push(loss);
        let step = cfg.gamma_g / (j as f64).sqrt();
        adam.step(sur.net.params_mut(), &grad, step);
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnsoOutcome {
    pub x: Vec<f64>,
    pub retrains: usize,
    pub surrogate: LocalSurrogate,
}

/// Ascends the surrogate of `V_α(target(x, Z))` from `x0`, retraining on a
/// fresh ball whenever the iterate is `δ_x` away from the current center.
///
/// Each ascent step moves `γ_x` along the normalized surrogate gradient,
/// then projects into the box.
#[allow(clippy::too_many_arguments)]
pub fn lnso_maximize<S, R>(
    target: &Target<'_>,
    env: &S,
    alpha: f64,
    domain: BoxRef<'_>,
    x0: &[f64],
    cfg: &LnsoConfig,
    warm: Option<SurrogateNet>,
    rng: &mut R,
) -> Result<LnsoOutcome>
where
    S: EnvSampler,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if x0.len() != domain.lower.len() {
        return Err(Error::DimensionMismatch { expected: domain.lower.len(), got: x0.len() });
    }
    let net = warm.unwrap_or_else(|| SurrogateNet::new(x0.len(), rng));
    let mut sur = LocalSurrogate::new(net, x0.to_vec(), cfg.radius);
    let mut x: Vec<f64> = x0.iter().zip(domain.lower.iter().zip(domain.upper)).map(|(v, (l, u))| v.clamp(*l, *u)).collect();
    let delta = cfg.trigger_distance();
    let mut retrains = 0;
    for i in 0..cfg.t_v {
        let dist = x.iter().zip(&sur.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
        if i == 0 || dist >= delta {
            sur.center = x.clone();
            net_train_local(&mut sur, target, env, alpha, cfg, domain, i == 0, rng)?;
            retrains += 1;
        }
        let g = sur.grad_x(&x);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for k in 0..x.len() {
                x[k] = (x[k] + cfg.gamma_x * g[k] / norm).clamp(domain.lower[k], domain.upper[k]);
            }
        }
    }
    Ok(LnsoOutcome { x, retrains, surrogate: sur })
}
