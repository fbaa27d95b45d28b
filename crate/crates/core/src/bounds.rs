//! Exploration schedules `β_t` and the confidence band `μ ∓ √β σ`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gp::GpPosterior;

/// Estimator of the maximum information gain `γ_t`.
pub type GammaFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum BetaSchedule {
    /// `2 ln(t² π² / 0.6)`.
    Practical,
    /// `(B + σ_n √(2(γ_{t-1} + 1 + ln 1/δ)))²`.
    Theoretical {
        rkhs_bound: f64,
        noise_sd: f64,
        delta: f64,
        gamma: GammaFn,
    },
}

impl fmt::Debug for BetaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSchedule::Practical => write!(f, "Practical"),
            BetaSchedule::Theoretical { rkhs_bound, noise_sd, delta, .. } => f
                .debug_struct("Theoretical")
                .field("rkhs_bound", rkhs_bound)
                .field("noise_sd", noise_sd)
                .field("delta", delta)
                .finish_non_exhaustive(),
        }
    }
}

impl BetaSchedule {
    pub fn beta(&self, t: usize) -> Result<f64> {
        match self {
            BetaSchedule::Practical => Ok(beta_practical(t)),
            BetaSchedule::Theoretical { .. } => beta_theoretical(t, self),
        }
    }
}

pub fn beta_practical(t: usize) -> f64 {
    let t = t.max(1) as f64;
    2.0 * (t * t * std::f64::consts::PI.powi(2) / 0.6).ln()
}

pub fn beta_theoretical(t: usize, schedule: &BetaSchedule) -> Result<f64> {
    let BetaSchedule::Theoretical { rkhs_bound, noise_sd, delta, gamma } = schedule else {
        return Ok(beta_practical(t));
    };
    if !(*delta > 0.0 && *delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0,1), got {delta}")));
    }
    if !(*rkhs_bound > 0.0) || *noise_sd < 0.0 {
        return Err(Error::Config("B must be positive and σ_n non-negative".into()));
    }
    let g = gamma(t.max(1) - 1);
    if !(g >= 0.0) {
        return Err(Error::Config(format!("information gain estimate {g} is negative")));
    }
    let radical = (2.0 * (g + 1.0 + (1.0 / delta).ln())).sqrt();
    Ok((rkhs_bound + noise_sd * radical).powi(2))
}

/// A posterior paired with the `β` frozen for the current iteration.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceField<'a> {
    pub posterior: &'a GpPosterior,
    pub beta: f64,
}

impl<'a> ConfidenceField<'a> {
    pub fn new(posterior: &'a GpPosterior, beta: f64) -> Self {
        Self { posterior, beta }
    }

    pub fn width_factor(&self) -> f64 {
        self.beta.max(0.0).sqrt()
    }

    /// `(l, u)` at the joint point `p`.
    pub fn bounds_at(&self, p: &[f64]) -> (f64, f64) {
        let pr = self.posterior.predict(p);
        let w = self.width_factor() * pr.sd;
        (pr.mean - w, pr.mean + w)
    }

    pub fn bounds_many(&self, points: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let k = self.width_factor();
        self.posterior
            .predict_many(points)
            .into_iter()
            .map(|pr| (pr.mean - k * pr.sd, pr.mean + k * pr.sd))
            .collect()
    }
}

pub fn bounds_at(field: &ConfidenceField<'_>, p: &[f64]) -> (f64, f64) {
    field.bounds_at(p)
}

/// Joint input `(x, z)`.
pub fn joint(x: &[f64], z: &[f64]) -> Vec<f64> {
    x.iter().chain(z).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpHyper, ObservationSet};

    #[test]
    fn practical_values() {
        let b1 = beta_practical(1);
        assert!((b1 - 2.0 * (std::f64::consts::PI.powi(2) / 0.6).ln()).abs() < 1e-12);
        assert!((b1 - 5.6006).abs() < 1e-4);
        assert!(beta_practical(10) > b1);
        assert!((beta_practical(2) - b1 - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    fn theoretical(b: f64, sn: f64, delta: f64, g: f64) -> BetaSchedule {
        BetaSchedule::Theoretical { rkhs_bound: b, noise_sd: sn, delta, gamma: Arc::new(move |_| g) }
    }

    #[test]
    fn theoretical_values() {
        assert_eq!(beta_theoretical(5, &theoretical(1.0, 0.0, 0.1, 3.0)).unwrap(), 1.0);
        let v = beta_theoretical(1, &theoretical(1.0, 0.1, (-1.0f64).exp(), 0.0)).unwrap();
        assert!((v - 1.44).abs() < 1e-12);
        let loose = beta_theoretical(1, &theoretical(1.0, 0.1, 0.5, 0.0)).unwrap();
        let tight = beta_theoretical(1, &theoretical(1.0, 0.1, 0.01, 0.0)).unwrap();
        assert!(tight > loose);
    }

    #[test]
    fn theoretical_rejects_negative_gain() {
        assert!(beta_theoretical(1, &theoretical(1.0, 0.1, 0.1, -1.0)).is_err());
        assert!(beta_theoretical(1, &theoretical(1.0, 0.1, 1.5, 0.0)).is_err());
    }

    #[test]
    fn theoretical_monotone_in_t_with_growing_gain() {
        let s = BetaSchedule::Theoretical {
            rkhs_bound: 2.0,
            noise_sd: 0.1,
            delta: 0.1,
            gamma: Arc::new(|t| (t as f64 + 1.0).ln()),
        };
        let vals: Vec<f64> = (1..20).map(|t| s.beta(t).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn band_shapes() {
        let data = ObservationSet::new(1, 1);
        let post = GpPosterior::fit(&data, &GpHyper::isotropic(2, 0.3, 1.0, 1e-2).unwrap()).unwrap();
        let (l, u) = ConfidenceField::new(&post, 4.0).bounds_at(&[0.2, 0.9]);
        assert!((l + 2.0).abs() < 1e-12 && (u - 2.0).abs() < 1e-12);
        let (l, u) = ConfidenceField::new(&post, 0.0).bounds_at(&[0.2, 0.9]);
        assert_eq!(l, u);
    }

    #[test]
    fn band_tight_at_observation() {
        let mut data = ObservationSet::new(1, 1);
        data.push(vec![0.5], vec![0.5], 0.3).unwrap();
        let noise: f64 = 1e-4;
        let post = GpPosterior::fit(&data, &GpHyper::isotropic(2, 0.3, 1.0, noise).unwrap()).unwrap();
        let beta = beta_practical(3);
        let (l, u) = ConfidenceField::new(&post, beta).bounds_at(&[0.5, 0.5]);
        assert!(u - l <= 2.0 * beta.sqrt() * (noise.sqrt() + 1e-6));
    }
}
