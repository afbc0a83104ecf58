//! Gaussian mechanism: tail function, noise calibration, sensitivities and sampling.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{max_singular_value, Matrix};
use crate::rng::{fill_normal, StreamRng};

/// Privacy level (ε, δ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let p = Self { epsilon, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Domain(format!(
                "epsilon must be finite and > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Domain(format!("delta must lie in (0, 0.5), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Adjacency radii: `b` over output trajectories (ℓ₂), `β` over static vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjacencyParams {
    pub trajectory_radius: f64,
    pub static_radius: f64,
}

impl AdjacencyParams {
    pub fn new(trajectory_radius: f64, static_radius: f64) -> Result<Self> {
        for (name, v) in [
            ("trajectory_radius", trajectory_radius),
            ("static_radius", static_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(Self {
            trajectory_radius,
            static_radius,
        })
    }
}

/// Standard deviation of the added Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NoiseScale {
    pub sigma: f64,
}

impl NoiseScale {
    pub const ZERO: NoiseScale = NoiseScale { sigma: 0.0 };

    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain(format!(
                "noise scale must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Standard Gaussian upper tail Q(y) = P(Z > y).
pub fn q_function(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Domain(format!("Q-function argument must be finite, got {y}")));
    }
    Ok(0.5 * libm::erfc(y * FRAC_1_SQRT_2))
}

fn normal_pdf(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * PI).sqrt()
}

/// Q⁻¹(p) for p ∈ (0, 0.5): bracketing bisection to width 1e-6, then Newton to 1e-12.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Domain(format!("Q-inverse needs p in (0, 0.5), got {p}")));
    }
    let q = |y: f64| 0.5 * libm::erfc(y * FRAC_1_SQRT_2);
    let (mut lo, mut hi) = (0.0, 1.0);
    while q(hi) > p {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..50 {
        let step = (q(y) - p) / normal_pdf(y);
        y += step;
        if step.abs() <= 1e-12 {
            break;
        }
    }
    Ok(y)
}

/// Noise multiplier κ(δ, ε) = (K_δ + √(K_δ² + 2ε)) / (2ε), so that σ = κ·Δ.
pub fn kappa(p: PrivacyParams) -> Result<f64> {
    p.validate()?;
    let k = q_inverse(p.delta)?;
    Ok((k + (k * k + 2.0 * p.epsilon).sqrt()) / (2.0 * p.epsilon))
}

fn check_sensitivity(sensitivity: f64) -> Result<()> {
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(Error::Domain(format!(
            "sensitivity must be finite and >= 0, got {sensitivity}"
        )));
    }
    Ok(())
}

/// Smallest σ meeting the Gaussian-mechanism condition for (ε, δ) at the given ℓ₂ sensitivity.
pub fn noise_scale(p: PrivacyParams, sensitivity: f64) -> Result<NoiseScale> {
    check_sensitivity(sensitivity)?;
    NoiseScale::new(sensitivity * kappa(p)?)
}

/// dσ/dε of [`noise_scale`] at fixed δ and sensitivity. Always negative for Δ > 0.
pub fn noise_scale_derivative(p: PrivacyParams, sensitivity: f64) -> Result<f64> {
    check_sensitivity(sensitivity)?;
    p.validate()?;
    let k = q_inverse(p.delta)?;
    let e = p.epsilon;
    let root = (k * k + 2.0 * e).sqrt();
    Ok(sensitivity / (2.0 * e) * (-(k + root) / e + 1.0 / root))
}

/// ℓ₂ sensitivity s₁(C)·b of the output trajectory y = Cx under b-adjacency.
pub fn output_sensitivity(c: &Matrix, b: f64) -> Result<f64> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Domain(format!("trajectory radius must be > 0, got {b}")));
    }
    Ok(max_singular_value(c)? * b)
}

/// r + N(0, σ²I). Draws are consumed even when σ = 0 so stream positions do not depend on σ.
pub fn privatize_static<R: Rng + ?Sized>(r: &[f64], scale: NoiseScale, rng: &mut R) -> Vec<f64> {
    let mut noise = vec![0.0; r.len()];
    fill_normal(rng, scale.sigma, &mut noise);
    r.iter().zip(&noise).map(|(a, b)| a + b).collect()
}

/// One time sample of the output mechanism ỹ = y + v.
pub fn privatize_output<R: Rng + ?Sized>(y: &[f64], scale: NoiseScale, rng: &mut R) -> Vec<f64> {
    privatize_static(y, scale, rng)
}

/// A Gaussian mechanism that owns its generator. One instance per agent.
#[derive(Clone, Debug)]
pub struct GaussianMechanism {
    scale: NoiseScale,
    rng: StreamRng,
}

impl GaussianMechanism {
    pub fn new(scale: NoiseScale, rng: StreamRng) -> Self {
        Self { scale, rng }
    }

    pub fn scale(&self) -> NoiseScale {
        self.scale
    }

    pub fn privatize(&mut self, x: &[f64]) -> Vec<f64> {
        privatize_static(x, self.scale, &mut self.rng)
    }
}
