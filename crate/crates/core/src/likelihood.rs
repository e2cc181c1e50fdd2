//! Signal models: conditional densities `f(y | h)`, their CDFs and the
//! likelihood ratio `f(y | 1) / f(y | 0)`.
//!
//! Every model used by the rest of the crate must have a likelihood ratio
//! that increases in `y`, which is what turns the likelihood ratio test into
//! a single threshold comparison on the signal.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::quadrature::Quadrature;
use crate::{ModelError, Result};

/// A binary state of the world, also used for the binary decisions agents
/// announce. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Hypothesis {
    Zero,
    One,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::Zero, Hypothesis::One];

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Hypothesis::One
        } else {
            Hypothesis::Zero
        }
    }

    pub fn is_one(self) -> bool {
        self == Hypothesis::One
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<Hypothesis> for u8 {
    fn from(h: Hypothesis) -> u8 {
        h as u8
    }
}

impl TryFrom<u8> for Hypothesis {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Hypothesis::Zero),
            1 => Ok(Hypothesis::One),
            other => Err(format!("binary value must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

/// Conditional signal densities with a monotone likelihood ratio.
///
/// Fallible methods only fail for numerically evaluated models (quadrature
/// or root bracketing problems); the Gaussian model never errors.
pub trait SignalModel: Send + Sync {
    /// `f(y | h)`; zero outside the support.
    fn pdf(&self, y: f64, h: Hypothesis) -> f64;

    /// `P(Y <= y | h)`.
    fn cdf(&self, y: f64, h: Hypothesis) -> Result<f64>;

    /// `P(Y > y | h)`, computed directly rather than as `1 - cdf`.
    fn sf(&self, y: f64, h: Hypothesis) -> Result<f64>;

    fn log_cdf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        Ok(self.cdf(y, h)?.ln())
    }

    fn log_sf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        Ok(self.sf(y, h)?.ln())
    }

    /// `ln f(y | 1) - ln f(y | 0)`.
    fn log_likelihood_ratio(&self, y: f64) -> Result<f64>;

    fn likelihood_ratio(&self, y: f64) -> Result<f64> {
        Ok(self.log_likelihood_ratio(y)?.exp())
    }

    /// The signal value whose log likelihood ratio equals `target`.
    fn threshold_for_log_ratio(&self, target: f64) -> Result<f64>;

    /// Inverse of [`SignalModel::cdf`] for `p` in `[0, 1]`.
    fn quantile(&self, p: f64, h: Hypothesis) -> Result<f64>;

    /// Support of both densities as an extended-real interval.
    fn support(&self) -> (f64, f64);
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Natural log of the standard normal CDF, accurate deep into the lower
/// tail where `Φ` itself underflows.
pub fn std_normal_log_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x > 0.0 {
        (-std_normal_sf(x)).ln_1p()
    } else if x > -35.0 {
        std_normal_cdf(x).ln()
    } else {
        // Asymptotic Mills-ratio expansion; the truncation error is below
        // 1e-12 relative for x <= -35.
        let inv2 = 1.0 / (x * x);
        let series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)));
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// Standard normal quantile: `Φ⁻¹(p)`.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        // One Halley step brings the library inverse to full precision.
        let x = -SQRT_2 * erfc_inv(2.0 * p);
        let r = if x < 0.0 {
            std_normal_cdf(x) - p
        } else {
            (1.0 - p) - std_normal_sf(x)
        };
        let u = r * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        if u.is_finite() {
            x - u / (1.0 + 0.5 * x * u)
        } else {
            x
        }
    }
}

/// `Y | H=0 ~ N(0, σ²)` and `Y | H=1 ~ N(h1, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLikelihood {
    h1: f64,
    sigma: f64,
}

impl GaussianLikelihood {
    pub fn new(h1: f64, sigma: f64) -> Result<Self> {
        if !(h1 > 0.0 && h1.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "h1",
                message: format!("mean separation must be positive and finite, got {h1}"),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "sigma",
                message: format!("standard deviation must be positive and finite, got {sigma}"),
            });
        }
        Ok(Self { h1, sigma })
    }

    /// Unit separation, unit variance.
    pub fn standard() -> Self {
        Self { h1: 1.0, sigma: 1.0 }
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::Zero => 0.0,
            Hypothesis::One => self.h1,
        }
    }

    /// The same model after substituting `y' = y / σ`.
    pub fn unit_variance(&self) -> Self {
        Self {
            h1: self.h1 / self.sigma,
            sigma: 1.0,
        }
    }

    fn z(&self, y: f64, h: Hypothesis) -> f64 {
        (y - self.mean(h)) / self.sigma
    }
}

impl SignalModel for GaussianLikelihood {
    fn pdf(&self, y: f64, h: Hypothesis) -> f64 {
        let z = self.z(y, h);
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    fn cdf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        Ok(std_normal_cdf(self.z(y, h)))
    }

    fn sf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        Ok(std_normal_sf(self.z(y, h)))
    }

    fn log_cdf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        Ok(std_normal_log_cdf(self.z(y, h)))
    }

    fn log_sf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        Ok(std_normal_log_cdf(-self.z(y, h)))
    }

    fn log_likelihood_ratio(&self, y: f64) -> Result<f64> {
        Ok((y - 0.5 * self.h1) * self.h1 / (self.sigma * self.sigma))
    }

    fn threshold_for_log_ratio(&self, target: f64) -> Result<f64> {
        Ok(0.5 * self.h1 + self.sigma * self.sigma / self.h1 * target)
    }

    fn quantile(&self, p: f64, h: Hypothesis) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidProbability(p));
        }
        Ok(self.mean(h) + self.sigma * std_normal_quantile(p))
    }

    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

pub type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const BISECTION_MAX_ITER: usize = 200;
const BISECTION_TOL: f64 = 1e-12;
const TAIL_SIGMAS: f64 = 12.0;

/// A signal model given by two arbitrary densities, evaluated numerically.
///
/// Infinite supports are truncated to a finite quadrature window (by default
/// twelve scale units beyond the supplied centres) before integrating.
#[derive(Clone)]
pub struct GenericLikelihood {
    density0: Density,
    density1: Density,
    support: (f64, f64),
    window: (f64, f64),
    quadrature: Quadrature,
}

impl fmt::Debug for GenericLikelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericLikelihood")
            .field("support", &self.support)
            .field("window", &self.window)
            .field("quadrature", &self.quadrature)
            .finish_non_exhaustive()
    }
}

/// Builder for [`GenericLikelihood`]; validation happens in [`build`](Self::build).
pub struct GenericLikelihoodBuilder {
    density0: Density,
    density1: Density,
    support: (f64, f64),
    centers: (f64, f64),
    scale: f64,
    quadrature: Quadrature,
}

impl GenericLikelihoodBuilder {
    pub fn support(mut self, lower: f64, upper: f64) -> Self {
        self.support = (lower, upper);
        self
    }

    /// Centres (typically the two conditional means) and a common scale
    /// used to truncate infinite support ends.
    pub fn truncate_around(mut self, center0: f64, center1: f64, scale: f64) -> Self {
        self.centers = (center0, center1);
        self.scale = scale;
        self
    }

    pub fn quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn build(self) -> Result<GenericLikelihood> {
        let (lo, hi) = self.support;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(ModelError::InvalidModel(format!("empty support [{lo}, {hi}]")));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(ModelError::InvalidModel(format!(
                "truncation scale must be positive, got {}",
                self.scale
            )));
        }
        let (c0, c1) = self.centers;
        let window = (
            lo.max(c0.min(c1) - TAIL_SIGMAS * self.scale),
            hi.min(c0.max(c1) + TAIL_SIGMAS * self.scale),
        );
        if window.0.partial_cmp(&window.1) != Some(std::cmp::Ordering::Less) {
            return Err(ModelError::InvalidModel(format!(
                "truncation window [{}, {}] does not overlap the support",
                window.0, window.1
            )));
        }
        let model = GenericLikelihood {
            density0: self.density0,
            density1: self.density1,
            support: self.support,
            window,
            quadrature: self.quadrature,
        };
        model.validate()?;
        Ok(model)
    }
}

impl GenericLikelihood {
    pub fn builder<F0, F1>(density0: F0, density1: F1) -> GenericLikelihoodBuilder
    where
        F0: Fn(f64) -> f64 + Send + Sync + 'static,
        F1: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        GenericLikelihoodBuilder {
            density0: Arc::new(density0),
            density1: Arc::new(density1),
            support: (f64::NEG_INFINITY, f64::INFINITY),
            centers: (0.0, 0.0),
            scale: 1.0,
            quadrature: Quadrature::default(),
        }
    }

    /// The finite interval actually integrated over.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    fn density(&self, h: Hypothesis) -> &Density {
        match h {
            Hypothesis::Zero => &self.density0,
            Hypothesis::One => &self.density1,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.window;
        for h in Hypothesis::BOTH {
            let density = self.density(h);
            let mass = self.quadrature.integrate(|y| density(y), a, b)?.value;
            if (mass - 1.0).abs() > 1e-8 {
                return Err(ModelError::InvalidModel(format!(
                    "density under H={h} integrates to {mass} over [{a}, {b}]"
                )));
            }
        }
        const GRID: usize = 1000;
        let mut previous = f64::NEG_INFINITY;
        for i in 0..GRID {
            let y = a + (b - a) * (i as f64 + 0.5) / GRID as f64;
            let (d0, d1) = ((self.density0)(y), (self.density1)(y));
            if d0 < 0.0 || d1 < 0.0 || d0.is_nan() || d1.is_nan() {
                return Err(ModelError::InvalidModel(format!("negative or NaN density at y = {y}")));
            }
            if d0 == 0.0 || d1 == 0.0 {
                continue;
            }
            let llr = d1.ln() - d0.ln();
            if llr < previous - 1e-9 * previous.abs().max(1.0) {
                return Err(ModelError::InvalidModel(format!(
                    "likelihood ratio decreases near y = {y}"
                )));
            }
            previous = llr;
        }
        Ok(())
    }

    fn integrate(&self, h: Hypothesis, lower: f64, upper: f64) -> Result<f64> {
        let density = self.density(h);
        Ok(self.quadrature.integrate(|y| density(y), lower, upper)?.value)
    }

    fn bisect<G: Fn(f64) -> Result<f64>>(&self, g: G, mut lo: f64, mut hi: f64) -> Result<f64> {
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= BISECTION_TOL * mid.abs().max(1.0) {
                return Ok(mid);
            }
            if g(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

impl SignalModel for GenericLikelihood {
    fn pdf(&self, y: f64, h: Hypothesis) -> f64 {
        if y < self.support.0 || y > self.support.1 {
            0.0
        } else {
            self.density(h)(y)
        }
    }

    fn cdf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        let (a, b) = self.window;
        if y <= a {
            Ok(0.0)
        } else if y >= b {
            Ok(1.0)
        } else {
            Ok(self.integrate(h, a, y)?.clamp(0.0, 1.0))
        }
    }

    fn sf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        let (a, b) = self.window;
        if y <= a {
            Ok(1.0)
        } else if y >= b {
            Ok(0.0)
        } else {
            Ok(self.integrate(h, y, b)?.clamp(0.0, 1.0))
        }
    }

    fn log_likelihood_ratio(&self, y: f64) -> Result<f64> {
        let d0 = self.pdf(y, Hypothesis::Zero);
        if d0 <= 0.0 {
            return Err(ModelError::ZeroDensity(y));
        }
        Ok(self.pdf(y, Hypothesis::One).ln() - d0.ln())
    }

    fn threshold_for_log_ratio(&self, target: f64) -> Result<f64> {
        let (a, b) = self.window;
        let low = self.log_likelihood_ratio(a)?;
        let high = self.log_likelihood_ratio(b)?;
        if !(low..=high).contains(&target) {
            return Err(ModelError::ThresholdNotBracketed { target, low, high });
        }
        self.bisect(|y| Ok(self.log_likelihood_ratio(y)? - target), a, b)
    }

    fn quantile(&self, p: f64, h: Hypothesis) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidProbability(p));
        }
        let (a, b) = self.window;
        if p == 0.0 {
            return Ok(a);
        }
        if p == 1.0 {
            return Ok(b);
        }
        self.bisect(|y| Ok(self.cdf(y, h)? - p), a, b)
    }

    fn support(&self) -> (f64, f64) {
        self.support
    }
}

/// Any of the supported signal models.
#[derive(Debug, Clone)]
pub enum LikelihoodModel {
    Gaussian(GaussianLikelihood),
    Generic(GenericLikelihood),
}

impl From<GaussianLikelihood> for LikelihoodModel {
    fn from(m: GaussianLikelihood) -> Self {
        LikelihoodModel::Gaussian(m)
    }
}

impl From<GenericLikelihood> for LikelihoodModel {
    fn from(m: GenericLikelihood) -> Self {
        LikelihoodModel::Generic(m)
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            LikelihoodModel::Gaussian($m) => $e,
            LikelihoodModel::Generic($m) => $e,
        }
    };
}

impl SignalModel for LikelihoodModel {
    fn pdf(&self, y: f64, h: Hypothesis) -> f64 {
        delegate!(self, m => m.pdf(y, h))
    }
    fn cdf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        delegate!(self, m => m.cdf(y, h))
    }
    fn sf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        delegate!(self, m => m.sf(y, h))
    }
    fn log_cdf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        delegate!(self, m => m.log_cdf(y, h))
    }
    fn log_sf(&self, y: f64, h: Hypothesis) -> Result<f64> {
        delegate!(self, m => m.log_sf(y, h))
    }
    fn log_likelihood_ratio(&self, y: f64) -> Result<f64> {
        delegate!(self, m => m.log_likelihood_ratio(y))
    }
    fn threshold_for_log_ratio(&self, target: f64) -> Result<f64> {
        delegate!(self, m => m.threshold_for_log_ratio(target))
    }
    fn quantile(&self, p: f64, h: Hypothesis) -> Result<f64> {
        delegate!(self, m => m.quantile(p, h))
    }
    fn support(&self) -> (f64, f64) {
        delegate!(self, m => m.support())
    }
}

/// Model description as it appears in experiment configs, e.g.
/// `{"kind": "gaussian", "h1": 1.0, "sigma": 1.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Gaussian { h1: f64, sigma: f64 },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Gaussian { h1: 1.0, sigma: 1.0 }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<LikelihoodModel> {
        match *self {
            ModelSpec::Gaussian { h1, sigma } => Ok(GaussianLikelihood::new(h1, sigma)?.into()),
        }
    }
}
