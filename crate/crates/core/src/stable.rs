//! Asymmetric α-stable Lévy measures.
//!
//! The jump kernel of a scalar α-stable motion is
//!
//! ```text
//! W(ξ) = k_α (1 + β) / (2 |ξ|^{1+α})   ξ > 0
//! W(ξ) = k_α (1 − β) / (2 |ξ|^{1+α})   ξ < 0
//! ```
//!
//! and a component driven by `σ dL` has jump density `σ⁻¹ W(σ⁻¹ y)`. All the
//! integrals the estimators need (interval masses and the truncated first and
//! second moments over `[−ε, ε]`) have closed forms and are computed here.
//!
//! Variates are drawn in the `S_α(δ, β, 0)` parametrization with the
//! Chambers–Mallows–Stuck transform.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StableError {
    #[error("stability index alpha = {0} outside (0, 2)")]
    Alpha(f64),
    #[error("skewness beta = {0} outside [-1, 1]")]
    Beta(f64),
    #[error("noise intensity sigma = {0} must be positive")]
    Sigma(f64),
    #[error("kernel is singular at xi = 0")]
    SingularKernel,
    #[error("interval [{0}, {1}) must be nonempty and exclude 0")]
    Interval(f64, f64),
    #[error("truncation radius epsilon = {0} must be positive")]
    Epsilon(f64),
    #[error("scale = {0} must be positive")]
    Scale(f64),
}

/// Stability index and skewness of a stable law, without an intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub struct StableShape {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawShape {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawShape> for StableShape {
    type Error = StableError;
    fn try_from(r: RawShape) -> Result<Self, StableError> {
        StableShape::new(r.alpha, r.beta)
    }
}

impl From<StableShape> for RawShape {
    fn from(s: StableShape) -> Self {
        RawShape { alpha: s.alpha, beta: s.beta }
    }
}

impl StableShape {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, StableError> {
        check_alpha(alpha)?;
        if !(-1.0..=1.0).contains(&beta) {
            return Err(StableError::Beta(beta));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_sigma(self, sigma: f64) -> Result<StableParams, StableError> {
        StableParams::new(self.alpha, self.beta, sigma)
    }
}

/// Per-component Lévy triple `(α, β, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct StableParams {
    shape: StableShape,
    sigma: f64,
    k_alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    beta: f64,
    sigma: f64,
}

impl TryFrom<RawParams> for StableParams {
    type Error = StableError;
    fn try_from(r: RawParams) -> Result<Self, StableError> {
        StableParams::new(r.alpha, r.beta, r.sigma)
    }
}

impl From<StableParams> for RawParams {
    fn from(p: StableParams) -> Self {
        RawParams { alpha: p.alpha(), beta: p.beta(), sigma: p.sigma }
    }
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64) -> Result<Self, StableError> {
        let shape = StableShape::new(alpha, beta)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(StableError::Sigma(sigma));
        }
        Ok(Self { shape, sigma, k_alpha: k_alpha(alpha)? })
    }

    pub fn alpha(&self) -> f64 {
        self.shape.alpha
    }

    pub fn beta(&self) -> f64 {
        self.shape.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> StableShape {
        self.shape
    }

    /// The normalizing constant `k_α`, cached at construction.
    pub fn k_alpha(&self) -> f64 {
        self.k_alpha
    }

    /// `σ^α k_α`, the common prefactor of every closed form below.
    fn intensity(&self) -> f64 {
        self.sigma.powf(self.alpha()) * self.k_alpha
    }
}

fn check_alpha(alpha: f64) -> Result<(), StableError> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(StableError::Alpha(alpha))
    }
}

/// Normalizing constant of the α-stable jump kernel.
///
/// `α(1−α) / (Γ(2−α) cos(πα/2))` for α ≠ 1 and `2/π` at α = 1. The quotient
/// is a removable singularity at α = 1; within 1e-9 of it the limit is used.
pub fn k_alpha(alpha: f64) -> Result<f64, StableError> {
    check_alpha(alpha)?;
    if (alpha - 1.0).abs() < 1e-9 {
        return Ok(FRAC_2_PI);
    }
    Ok(alpha * (1.0 - alpha) / (libm::tgamma(2.0 - alpha) * (PI * alpha / 2.0).cos()))
}

/// Jump kernel `W^{α,β}(ξ)` (unit intensity).
pub fn kernel_w(shape: StableShape, xi: f64) -> Result<f64, StableError> {
    if xi == 0.0 {
        return Err(StableError::SingularKernel);
    }
    let k = k_alpha(shape.alpha)?;
    let side = if xi > 0.0 { 1.0 + shape.beta } else { 1.0 - shape.beta };
    Ok(k * side / (2.0 * xi.abs().powf(1.0 + shape.alpha)))
}

/// Mass of the scaled jump measure `σ⁻¹ W(σ⁻¹ y) dy` on `[c1, c2)`.
pub fn bin_mass(params: &StableParams, c1: f64, c2: f64) -> Result<f64, StableError> {
    if !(c1 < c2) || (c1 <= 0.0 && c2 >= 0.0) {
        return Err(StableError::Interval(c1, c2));
    }
    let a = params.alpha();
    let (near, far, side) = if c1 > 0.0 {
        (c1, c2, 1.0 + params.beta())
    } else {
        (-c2, -c1, 1.0 - params.beta())
    };
    let span = near.powf(-a) - far.powf(-a);
    Ok((params.intensity() * side * span / (2.0 * a)).max(0.0))
}

/// Drift correction `R^{α,β}(ε)`: the first moment of the jump measure that
/// survives restriction to `[−ε, ε]`, net of the compensator.
///
/// `σ^α k_α β ε^{1−α} / (1−α)` for α ≠ 1 and `σ k_1 β ln ε` at α = 1, where
/// the α = 1 integral over `[−ε,−1] ∪ [1,ε]` is taken as oriented so that the
/// logarithm holds for ε < 1 as well.
pub fn correction_r(params: &StableParams, epsilon: f64) -> Result<f64, StableError> {
    if !(epsilon > 0.0) {
        return Err(StableError::Epsilon(epsilon));
    }
    let a = params.alpha();
    let b = params.beta();
    if a == 1.0 {
        Ok(params.intensity() * b * epsilon.ln())
    } else {
        Ok(params.intensity() * b * epsilon.powf(1.0 - a) / (1.0 - a))
    }
}

/// Diffusion correction `S_ij^{α,β}(ε)`: the truncated second moment of the
/// jump measure. Zero off the diagonal since the jump components are
/// independent. Indices are 0-based.
pub fn correction_s(params: &StableParams, epsilon: f64, i: usize, j: usize) -> Result<f64, StableError> {
    if !(epsilon > 0.0) {
        return Err(StableError::Epsilon(epsilon));
    }
    if i != j {
        return Ok(0.0);
    }
    let a = params.alpha();
    Ok(params.intensity() * epsilon.powf(2.0 - a) / (2.0 - a))
}

/// One `S_α(scale, β, 0)` variate via Chambers–Mallows–Stuck.
pub fn stable_variate<R: Rng + ?Sized>(shape: StableShape, scale: f64, rng: &mut R) -> f64 {
    let (alpha, beta) = (shape.alpha, shape.beta);
    let v = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break PI * (u - 0.5);
        }
    };
    let w = loop {
        let w: f64 = Exp1.sample(rng);
        if w > 0.0 {
            break w;
        }
    };
    if alpha == 1.0 {
        let skew = FRAC_PI_2 + beta * v;
        let x = FRAC_2_PI * (skew * v.tan() - beta * (FRAC_PI_2 * w * v.cos() / skew).ln());
        // S_1(δ, β, 0) = δ X + (2/π) β δ ln δ
        scale * x + FRAC_2_PI * beta * scale * scale.ln()
    } else {
        let zeta = beta * (PI * alpha / 2.0).tan();
        let offset = zeta.atan() / alpha;
        let amp = (1.0 + zeta * zeta).powf(1.0 / (2.0 * alpha));
        let arg = alpha * (v + offset);
        let x = amp * arg.sin() / v.cos().powf(1.0 / alpha)
            * ((v - arg).cos() / w).powf((1.0 - alpha) / alpha);
        scale * x
    }
}

/// `count` i.i.d. `S_α(scale, β, 0)` draws from `rng`.
pub fn sample_stable<R: Rng + ?Sized>(
    shape: StableShape,
    scale: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>, StableError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(StableError::Scale(scale));
    }
    Ok((0..count).map(|_| stable_variate(shape, scale, rng)).collect())
}
