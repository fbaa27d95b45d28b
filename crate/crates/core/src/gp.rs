//! Gaussian-process regression over joint inputs `(x, z)`.
//!
//! The kernel is an anisotropic squared exponential
//! `k(p, q) = σ_f² exp(-½ Σ_i (p_i - q_i)² / ℓ_i²)` with a zero prior mean.
//! A [`GpPosterior`] is immutable: adding data or changing hyperparameters
//! means fitting a new one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard lower bound on the noise variance.
pub const NOISE_FLOOR: f64 = 1e-4;
pub const LENGTHSCALE_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    d_x: usize,
    d_z: usize,
    rows: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(d_x: usize, d_z: usize) -> Self {
        Self { d_x, d_z, rows: Vec::new() }
    }

    pub fn push(&mut self, x: Vec<f64>, z: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.d_x {
            return Err(Error::DimensionMismatch { expected: self.d_x, got: x.len() });
        }
        if z.len() != self.d_z {
            return Err(Error::DimensionMismatch { expected: self.d_z, got: z.len() });
        }
        if !y.is_finite() {
            return Err(Error::NonFinite { z, value: y });
        }
        self.rows.push(Observation { x, z, y });
        Ok(())
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn dim(&self) -> usize {
        self.d_x + self.d_z
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self { d_x: self.d_x, d_z: self.d_z, rows: self.rows[..n.min(self.rows.len())].to_vec() }
    }

    pub fn joint(&self, i: usize) -> Vec<f64> {
        let r = &self.rows[i];
        r.x.iter().chain(&r.z).copied().collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    /// Shift/scale that maps `y` to zero mean and unit standard deviation.
    pub fn standardizer(&self) -> OutputScaling {
        let n = self.rows.len();
        if n == 0 {
            return OutputScaling::IDENTITY;
        }
        let mean = self.rows.iter().map(|r| r.y).sum::<f64>() / n as f64;
        let var = self.rows.iter().map(|r| (r.y - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        OutputScaling { shift: mean, scale: if sd > 1e-12 { sd } else { 1.0 } }
    }

    pub fn rescaled(&self, scaling: OutputScaling) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| Observation { x: r.x.clone(), z: r.z.clone(), y: scaling.to_model(r.y) })
            .collect();
        Self { d_x: self.d_x, d_z: self.d_z, rows }
    }
}

/// Affine map between observation units and the GP's internal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub shift: f64,
    pub scale: f64,
}

impl OutputScaling {
    pub const IDENTITY: Self = Self { shift: 0.0, scale: 1.0 };

    pub fn to_model(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn new(lengthscales: Vec<f64>, signal_var: f64, noise_var: f64) -> Result<Self> {
        let (lo, hi) = LENGTHSCALE_RANGE;
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(*l >= lo && *l <= hi)) {
            return Err(Error::InvalidHyper(format!("lengthscales {lengthscales:?} outside [{lo}, {hi}]")));
        }
        if !(signal_var > 0.0) || !signal_var.is_finite() {
            return Err(Error::InvalidHyper(format!("signal variance {signal_var}")));
        }
        if !(noise_var >= NOISE_FLOOR) || !noise_var.is_finite() {
            return Err(Error::InvalidHyper(format!("noise variance {noise_var} below floor {NOISE_FLOOR}")));
        }
        Ok(Self { lengthscales, signal_var, noise_var })
    }

    pub fn isotropic(dim: usize, lengthscale: f64, signal_var: f64, noise_var: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_var, noise_var)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.noise_var.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_var: theta[d].exp(),
            noise_var: theta[d + 1].exp(),
        }
    }
}

/// Box constraints for maximum-likelihood fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub signal_var: (f64, f64),
    pub noise_var: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            lengthscale: LENGTHSCALE_RANGE,
            signal_var: (1e-4, 1e2),
            noise_var: (NOISE_FLOOR, 1e1),
        }
    }
}

impl HyperBounds {
    fn log_box(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.lengthscale.0.ln(); dim];
        let mut hi = vec![self.lengthscale.1.ln(); dim];
        lo.push(self.signal_var.0.ln());
        hi.push(self.signal_var.1.ln());
        lo.push(self.noise_var.0.max(NOISE_FLOOR).ln());
        hi.push(self.noise_var.1.ln());
        (lo, hi)
    }
}

pub fn se_kernel(p: &[f64], q: &[f64], hyper: &GpHyper) -> f64 {
    let mut sq = 0.0;
    for ((a, b), l) in p.iter().zip(q).zip(&hyper.lengthscales) {
        let d = (a - b) / l;
        sq += d * d;
    }
    hyper.signal_var * (-0.5 * sq).exp()
}

/// Lower Cholesky factor; reports the offending pivot on failure.
fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Factorization { row: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn gram(inputs: &[Vec<f64>], hyper: &GpHyper) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hyper.signal_var;
        for j in 0..i {
            let v = se_kernel(&inputs[i], &inputs[j], hyper);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Posterior mean and standard deviation at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
}

/// Gradients of the posterior mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrad {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// `σ` was too small for a meaningful `∂σ`; `sd` is zeroed.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    hyper: GpHyper,
    data: ObservationSet,
    scaling: OutputScaling,
    inputs: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    // (K + σ_n² I)^{-1}, used for batched variances and gradients.
    precision: DMatrix<f64>,
}

impl GpPosterior {
    /// Exact posterior for `data` under `hyper`, in observation units.
    ///
    /// On a failed factorization the noise variance is doubled once before
    /// giving up.
    pub fn fit(data: &ObservationSet, hyper: &GpHyper) -> Result<Self> {
        Self::fit_scaled(data, hyper, OutputScaling::IDENTITY)
    }

    /// Fits on standardized targets; predictions are mapped back.
    pub fn fit_standardized(data: &ObservationSet, hyper: &GpHyper) -> Result<Self> {
        Self::fit_scaled(data, hyper, data.standardizer())
    }

    pub fn fit_scaled(data: &ObservationSet, hyper: &GpHyper, scaling: OutputScaling) -> Result<Self> {
        if hyper.dim() != data.dim() {
            return Err(Error::DimensionMismatch { expected: data.dim(), got: hyper.dim() });
        }
        match Self::try_fit(data, hyper, scaling) {
            Ok(p) => Ok(p),
            Err(Error::Factorization { .. }) => {
                let mut jittered = hyper.clone();
                jittered.noise_var *= 2.0;
                Self::try_fit(data, &jittered, scaling)
            }
            Err(e) => Err(e),
        }
    }

    fn try_fit(data: &ObservationSet, hyper: &GpHyper, scaling: OutputScaling) -> Result<Self> {
        let n = data.len();
        let inputs: Vec<Vec<f64>> = (0..n).map(|i| data.joint(i)).collect();
        let mut k = gram(&inputs, hyper);
        for i in 0..n {
            k[(i, i)] += hyper.noise_var;
        }
        let chol = cholesky(&k)?;
        let y = DVector::from_iterator(n, data.rows().iter().map(|r| scaling.to_model(r.y)));
        let linv = chol
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(Error::Factorization { row: 0, pivot: 0.0 })?;
        let precision = linv.transpose() * &linv;
        let alpha = &precision * y;
        Ok(Self { hyper: hyper.clone(), data: data.clone(), scaling, inputs, chol, alpha, precision })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn data(&self) -> &ObservationSet {
        &self.data
    }

    pub fn scaling(&self) -> OutputScaling {
        self.scaling
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim()
    }

    pub fn d_x(&self) -> usize {
        self.data.d_x()
    }

    fn kernel_row(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|q| se_kernel(p, q, &self.hyper)))
    }

    pub fn predict(&self, p: &[f64]) -> Prediction {
        let n = self.inputs.len();
        let (mean, var) = if n == 0 {
            (0.0, self.hyper.signal_var)
        } else {
            let k = self.kernel_row(p);
            let mean = k.dot(&self.alpha);
            let v = self.chol.solve_lower_triangular(&k).expect("nonsingular factor");
            (mean, self.hyper.signal_var - v.norm_squared())
        };
        Prediction {
            mean: self.scaling.shift + self.scaling.scale * mean,
            sd: self.scaling.scale * var.max(0.0).sqrt(),
        }
    }

    /// Batched prediction; equivalent to calling [`Self::predict`] per point.
    pub fn predict_many(&self, points: &[Vec<f64>]) -> Vec<Prediction> {
        let n = self.inputs.len();
        let m = points.len();
        if n == 0 {
            let sd = self.scaling.scale * self.hyper.signal_var.sqrt();
            return vec![Prediction { mean: self.scaling.shift, sd }; m];
        }
        let mut kstar = DMatrix::<f64>::zeros(m, n);
        for (i, p) in points.iter().enumerate() {
            for (j, q) in self.inputs.iter().enumerate() {
                kstar[(i, j)] = se_kernel(p, q, &self.hyper);
            }
        }
        let means = &kstar * &self.alpha;
        let projected = &kstar * &self.precision;
        (0..m)
            .map(|i| {
                let quad = projected.row(i).dot(&kstar.row(i));
                let var = (self.hyper.signal_var - quad).max(0.0);
                Prediction {
                    mean: self.scaling.shift + self.scaling.scale * means[i],
                    sd: self.scaling.scale * var.sqrt(),
                }
            })
            .collect()
    }

    /// Gradient of `μ` and `σ` with respect to every joint coordinate.
    pub fn predict_grad(&self, p: &[f64]) -> PredictionGrad {
        let dim = p.len();
        let n = self.inputs.len();
        if n == 0 {
            return PredictionGrad { mean: vec![0.0; dim], sd: vec![0.0; dim], degenerate: false };
        }
        let k = self.kernel_row(p);
        let w = &self.precision * &k;
        let var = (self.hyper.signal_var - k.dot(&w)).max(0.0);
        let sd = var.sqrt();
        let mut dmean = vec![0.0; dim];
        let mut dvar = vec![0.0; dim];
        for (i, q) in self.inputs.iter().enumerate() {
            for d in 0..dim {
                let l = self.hyper.lengthscales[d];
                let dk = -k[i] * (p[d] - q[d]) / (l * l);
                dmean[d] += dk * self.alpha[i];
                dvar[d] -= 2.0 * dk * w[i];
            }
        }
        let s = self.scaling.scale;
        let degenerate = sd <= 1e-9;
        let dsd = if degenerate {
            vec![0.0; dim]
        } else {
            dvar.iter().map(|g| s * g / (2.0 * sd)).collect()
        };
        PredictionGrad { mean: dmean.iter().map(|g| s * g).collect(), sd: dsd, degenerate }
    }

    /// Gradient restricted to the `x` block of the joint input.
    pub fn predict_grad_x(&self, p: &[f64]) -> PredictionGrad {
        let d_x = self.d_x();
        let mut g = self.predict_grad(p);
        g.mean.truncate(d_x);
        g.sd.truncate(d_x);
        g
    }
}

pub fn fit_posterior(data: &ObservationSet, hyper: &GpHyper) -> Result<GpPosterior> {
    GpPosterior::fit(data, hyper)
}

/// Log evidence and its gradient with respect to
/// `(log ℓ_1, …, log ℓ_D, log σ_f², log σ_n²)`.
pub fn log_marginal_likelihood(data: &ObservationSet, hyper: &GpHyper) -> Result<(f64, Vec<f64>)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Config("log marginal likelihood needs data".into()));
    }
    let dim = hyper.dim();
    if dim != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: dim });
    }
    let inputs: Vec<Vec<f64>> = (0..n).map(|i| data.joint(i)).collect();
    let kf = gram(&inputs, hyper);
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += hyper.noise_var;
    }
    let l = cholesky(&k)?;
    let y = DVector::from_vec(data.ys());
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::Factorization { row: 0, pivot: 0.0 })?;
    let kinv = linv.transpose() * &linv;
    let alpha = &kinv * &y;
    let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let value = -0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = ααᵀ - K⁻¹; dL/dθ = ½ Σ_ij W_ij ∂K_ij/∂θ.
    let w = &alpha * alpha.transpose() - &kinv;
    let mut grad = vec![0.0; dim + 2];
    for i in 0..n {
        for j in 0..n {
            let wij = w[(i, j)];
            let kij = kf[(i, j)];
            grad[dim] += 0.5 * wij * kij;
            if i != j {
                for d in 0..dim {
                    let diff = (inputs[i][d] - inputs[j][d]) / hyper.lengthscales[d];
                    grad[d] += 0.5 * wij * kij * diff * diff;
                }
            }
        }
        grad[dim + 1] += 0.5 * w[(i, i)] * hyper.noise_var;
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperFit {
    pub hyper: GpHyper,
    pub log_likelihood: f64,
    /// Every restart failed and `hyper` is the initial value.
    pub warning: bool,
}

/// Maximum-likelihood hyperparameters by multi-start projected gradient
/// ascent in log space. The first start is `init`; the others are drawn
/// log-uniformly from a moderate sub-box of `bounds`.
pub fn fit_hyperparams<R: Rng + ?Sized>(
    data: &ObservationSet,
    init: &GpHyper,
    n_restarts: usize,
    bounds: &HyperBounds,
    rng: &mut R,
) -> Result<HyperFit> {
    if data.is_empty() {
        return Err(Error::Config("hyperparameter fitting needs data".into()));
    }
    let dim = data.dim();
    let (lo, hi) = bounds.log_box(dim);
    let project = |t: &mut Vec<f64>| {
        for i in 0..t.len() {
            t[i] = t[i].clamp(lo[i], hi[i]);
        }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..n_restarts.max(1) {
        let mut theta = if restart == 0 {
            init.to_log()
        } else {
            let mut t = Vec::with_capacity(dim + 2);
            for _ in 0..dim {
                t.push(rng.random_range(0.05f64.ln()..2.0f64.ln()));
            }
            t.push(rng.random_range(0.1f64.ln()..10.0f64.ln()));
            t.push(rng.random_range(NOISE_FLOOR.ln()..0.1f64.ln()));
            t
        };
        project(&mut theta);
        let Ok((mut value, mut grad)) = log_marginal_likelihood(data, &GpHyper::from_log(&theta)) else {
            continue;
        };
        let mut step = 0.5;
        for _ in 0..200 {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !(norm > 1e-10) {
                break;
            }
            let mut cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g / norm).collect();
            project(&mut cand);
            match log_marginal_likelihood(data, &GpHyper::from_log(&cand)) {
                Ok((v, g)) if v > value => {
                    let moved = cand.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    theta = cand;
                    value = v;
                    grad = g;
                    step = (step * 1.5).min(2.0);
                    if moved < 1e-9 {
                        break;
                    }
                }
                _ => {
                    step *= 0.5;
                    if step < 1e-6 {
                        break;
                    }
                }
            }
        }
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, theta));
        }
    }
    Ok(match best {
        Some((log_likelihood, theta)) => {
            HyperFit { hyper: GpHyper::from_log(&theta), log_likelihood, warning: false }
        }
        None => HyperFit { hyper: init.clone(), log_likelihood: f64::NEG_INFINITY, warning: true },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_hyper(dim: usize, noise: f64) -> GpHyper {
        GpHyper::isotropic(dim, 1.0, 1.0, noise).unwrap()
    }

    #[test]
    fn kernel_closed_form() {
        let h = unit_hyper(2, 1e-2);
        assert_eq!(se_kernel(&[0.3, 0.1], &[0.3, 0.1], &h), 1.0);
        let k = se_kernel(&[0.0, 0.0], &[1.0, 1.0], &h);
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!(se_kernel(&[0.0, 0.0], &[100.0, 0.0], &h) < 1e-300);
        assert_eq!(se_kernel(&[0.2, 0.9], &[0.7, 0.4], &h), se_kernel(&[0.7, 0.4], &[0.2, 0.9], &h));
    }

    #[test]
    fn empty_data_is_prior() {
        let data = ObservationSet::new(1, 1);
        let post = GpPosterior::fit(&data, &GpHyper::isotropic(2, 0.5, 2.0, 1e-2).unwrap()).unwrap();
        let p = post.predict(&[0.3, 0.8]);
        assert_eq!(p.mean, 0.0);
        assert!((p.sd * p.sd - 2.0).abs() < 1e-12);
        let g = post.predict_grad_x(&[0.3, 0.8]);
        assert_eq!(g.mean, vec![0.0]);
    }

    #[test]
    fn single_observation_hand_values() {
        let mut data = ObservationSet::new(1, 1);
        data.push(vec![0.4], vec![0.6], 2.0).unwrap();
        let post = GpPosterior::fit(&data, &unit_hyper(2, 1.0)).unwrap();
        let p = post.predict(&[0.4, 0.6]);
        assert!((p.mean - 1.0).abs() < 1e-12);
        assert!((p.sd * p.sd - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_stay_finite() {
        let mut data = ObservationSet::new(1, 0);
        data.push(vec![0.5], vec![], 1.0).unwrap();
        data.push(vec![0.5], vec![], -1.0).unwrap();
        let post = GpPosterior::fit(&data, &GpHyper::isotropic(1, 0.2, 1.0, NOISE_FLOOR).unwrap()).unwrap();
        let p = post.predict(&[0.5]);
        assert!(p.mean.is_finite() && p.sd.is_finite());
        assert!(p.mean.abs() < 1e-6);
    }

    #[test]
    fn near_interpolation_at_observed_point() {
        let mut data = ObservationSet::new(1, 1);
        let pts = [(0.1, 0.2, 0.7), (0.5, 0.5, -0.3), (0.9, 0.1, 1.0)];
        for (x, z, y) in pts {
            data.push(vec![x], vec![z], y).unwrap();
        }
        let post = GpPosterior::fit(&data, &GpHyper::isotropic(2, 0.3, 1.0, 1e-4).unwrap()).unwrap();
        for (x, z, y) in pts {
            assert!((post.predict(&[x, z]).mean - y).abs() <= 0.05);
        }
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let mut data = ObservationSet::new(1, 0);
        data.push(vec![0.0], vec![], 1.5).unwrap();
        let post = GpPosterior::fit(&data, &GpHyper::isotropic(1, 0.1, 1.0, 1e-2).unwrap()).unwrap();
        let p = post.predict(&[1.0]);
        assert!(p.mean.abs() < 1e-3);
        assert!((p.sd - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_invalid_hyper() {
        assert!(GpHyper::new(vec![1.0], 1.0, 1e-5).is_err());
        assert!(GpHyper::new(vec![1e-4], 1.0, 1e-2).is_err());
        assert!(GpHyper::new(vec![1.0], 0.0, 1e-2).is_err());
        assert!(GpHyper::new(vec![], 1.0, 1e-2).is_err());
    }

    #[test]
    fn cholesky_reports_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky(&a) {
            Err(Error::Factorization { row, pivot }) => {
                assert_eq!(row, 1);
                assert!((pivot + 3.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn symmetric_midpoint_has_flat_mean() {
        let mut data = ObservationSet::new(1, 1);
        data.push(vec![0.3], vec![0.5], 1.0).unwrap();
        data.push(vec![0.7], vec![0.5], 1.0).unwrap();
        let post = GpPosterior::fit(&data, &GpHyper::isotropic(2, 0.2, 1.0, 1e-2).unwrap()).unwrap();
        let g = post.predict_grad_x(&[0.5, 0.5]);
        assert!(g.mean[0].abs() < 1e-12);
        assert!(g.sd[0].abs() < 1e-12);
    }

    #[test]
    fn lml_scalar_case() {
        let mut data = ObservationSet::new(1, 0);
        data.push(vec![0.0], vec![], 0.0).unwrap();
        let (v, _) = log_marginal_likelihood(&data, &unit_hyper(1, 1.0)).unwrap();
        let expected = -0.5 * 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_targets_make_fit_independent_of_data_term() {
        let mut data = ObservationSet::new(1, 0);
        for x in [0.1, 0.4, 0.8] {
            data.push(vec![x], vec![], 0.0).unwrap();
        }
        // With y = 0 only the determinant term moves.
        for l in [0.05, 0.3, 2.0] {
            let h = GpHyper::isotropic(1, l, 1.0, 0.1).unwrap();
            let (v, _) = log_marginal_likelihood(&data, &h).unwrap();
            let post = GpPosterior::fit(&data, &h).unwrap();
            let logdet: f64 = (0..3).map(|i| post.chol()[(i, i)].ln()).sum::<f64>() * 2.0;
            let expected = -0.5 * logdet - 1.5 * (2.0 * std::f64::consts::PI).ln();
            assert!((v - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_signal_drives_signal_variance_down() {
        let mut data = ObservationSet::new(1, 0);
        for i in 0..10 {
            data.push(vec![i as f64 / 9.0], vec![], 0.0).unwrap();
        }
        let init = GpHyper::isotropic(1, 0.3, 1.0, 1e-2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fit = fit_hyperparams(&data, &init, 3, &HyperBounds::default(), &mut rng).unwrap();
        assert!(fit.hyper.signal_var < 1e-3, "σ_f² = {}", fit.hyper.signal_var);
        assert!(!fit.warning);
    }
}
