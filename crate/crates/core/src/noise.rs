//! Symmetric, zero-mean noise laws for the diffusion term of the exchange.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::opinion::{max_noise_halfwidth, DiffusionFunction, KineticParams};

/// Unit-variance base variable `Y` for [`NoiseModel::ScaledBase`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseVariable {
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    Uniform,
    /// Symmetric triangular on `[-sqrt(6), sqrt(6)]`.
    Triangular,
}

impl BaseVariable {
    fn support_halfwidth(self) -> f64 {
        match self {
            BaseVariable::Uniform => 3f64.sqrt(),
            BaseVariable::Triangular => 6f64.sqrt(),
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let a = self.support_halfwidth();
        match self {
            BaseVariable::Uniform => a * (2.0 * rng.random::<f64>() - 1.0),
            BaseVariable::Triangular => a * (rng.random::<f64>() - rng.random::<f64>()),
        }
    }
}

/// Law of the noise `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    UniformSymmetric { half_width: f64 },
    /// Gaussian with standard deviation `sigma` conditioned on `|eta| <= cutoff`.
    /// `sigma^2` is the variance before truncation.
    TruncatedGaussian { sigma: f64, cutoff: f64 },
    /// `sigma * Y`.
    ScaledBase { base: BaseVariable, sigma: f64 },
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel::UniformSymmetric { half_width: 0.0 }
    }

    /// Uniform law with exact variance `sigma2`.
    pub fn uniform_with_variance(sigma2: f64) -> Self {
        NoiseModel::UniformSymmetric {
            half_width: (3.0 * sigma2).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match *self {
            NoiseModel::UniformSymmetric { half_width } if !ok(half_width) => {
                Err(Error::invalid("noise.half_width", "must be finite and >= 0"))
            }
            NoiseModel::TruncatedGaussian { sigma, cutoff } if !ok(sigma) || !(cutoff.is_finite() && cutoff > 0.0) => {
                Err(Error::invalid("noise", "truncated gaussian needs sigma >= 0 and cutoff > 0"))
            }
            NoiseModel::ScaledBase { sigma, .. } if !ok(sigma) => {
                Err(Error::invalid("noise.sigma", "must be finite and >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Declared variance. For the truncated Gaussian this is `sigma^2`
    /// before truncation; see [`Self::variance`] for the realized one.
    pub fn declared_variance(&self) -> f64 {
        match *self {
            NoiseModel::UniformSymmetric { half_width } => half_width * half_width / 3.0,
            NoiseModel::TruncatedGaussian { sigma, .. } | NoiseModel::ScaledBase { sigma, .. } => sigma * sigma,
        }
    }

    /// Exact variance of the law that is actually sampled.
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseModel::TruncatedGaussian { sigma, cutoff } => {
                if sigma == 0.0 {
                    return 0.0;
                }
                let c = cutoff / sigma;
                let mass = erf(c / std::f64::consts::SQRT_2);
                let pdf = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
                sigma * sigma * (1.0 - 2.0 * c * pdf / mass)
            }
            _ => self.declared_variance(),
        }
    }

    pub fn support_halfwidth(&self) -> f64 {
        match *self {
            NoiseModel::UniformSymmetric { half_width } => half_width,
            NoiseModel::TruncatedGaussian { cutoff, .. } => cutoff,
            NoiseModel::ScaledBase { base, sigma } => sigma * base.support_halfwidth(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.support_halfwidth() == 0.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::UniformSymmetric { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            NoiseModel::TruncatedGaussian { sigma, cutoff } => {
                if sigma == 0.0 {
                    return 0.0;
                }
                loop {
                    let z: f64 = StandardNormal.sample(rng);
                    let eta = sigma * z;
                    if eta.abs() <= cutoff {
                        return eta;
                    }
                }
            }
            NoiseModel::ScaledBase { base, sigma } => sigma * base.sample(rng),
        }
    }
}

/// Default noise: uniform with variance `sigma^2`, clipped to the worst-case
/// admissible half-width of `diffusion`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultNoise {
    pub model: NoiseModel,
    /// Half-width was reduced; the effective lambda differs from the request.
    pub clipped: bool,
}

pub fn default_noise(params: &KineticParams, diffusion: &DiffusionFunction) -> Result<DefaultNoise> {
    let requested = NoiseModel::uniform_with_variance(params.sigma2());
    let bound = max_noise_halfwidth(diffusion, params.gamma(), None)?;
    if requested.support_halfwidth() <= bound {
        return Ok(DefaultNoise {
            model: requested,
            clipped: false,
        });
    }
    let model = NoiseModel::UniformSymmetric { half_width: bound };
    log::warn!(
        "noise half-width {:.6} clipped to {:.6}; effective lambda {:.6} instead of {:.6}",
        requested.support_halfwidth(),
        bound,
        model.variance() / params.gamma(),
        params.lambda()
    );
    Ok(DefaultNoise { model, clipped: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn empirical(noise: &NoiseModel, n: usize) -> (f64, f64, f64) {
        let mut rng = stream(7, 0);
        let (mut s, mut s2, mut max_abs) = (0.0, 0.0, 0.0f64);
        for _ in 0..n {
            let x = noise.sample(&mut rng);
            s += x;
            s2 += x * x;
            max_abs = max_abs.max(x.abs());
        }
        (s / n as f64, s2 / n as f64, max_abs)
    }

    #[test]
    fn laws_are_centered_with_declared_variance() {
        let n = 400_000;
        let models = [
            NoiseModel::UniformSymmetric { half_width: 0.3 },
            NoiseModel::TruncatedGaussian { sigma: 0.1, cutoff: 0.25 },
            NoiseModel::ScaledBase { base: BaseVariable::Uniform, sigma: 0.2 },
            NoiseModel::ScaledBase { base: BaseVariable::Triangular, sigma: 0.2 },
        ];
        for m in models {
            let (mean, var, max_abs) = empirical(&m, n);
            let v = m.variance();
            // four-sigma statistical windows
            assert!(mean.abs() < 4.0 * (v / n as f64).sqrt(), "{m:?} mean {mean}");
            assert!((var - v).abs() < 4.0 * v * (2.0 / n as f64).sqrt() * 1.5, "{m:?} var {var} vs {v}");
            assert!(max_abs <= m.support_halfwidth());
        }
    }

    #[test]
    fn truncated_variance_is_below_declared() {
        let m = NoiseModel::TruncatedGaussian { sigma: 1.0, cutoff: 1.0 };
        // known value for the standard normal truncated to [-1, 1]
        assert!((m.variance() - 0.291_125_7).abs() < 1e-6);
        assert!(m.variance() < m.declared_variance());
    }

    #[test]
    fn default_noise_clips_to_admissible_width() {
        let params = KineticParams::from_lambda(0.1, 0.5).unwrap();
        let d = default_noise(&params, &DiffusionFunction::OneMinusWSquared).unwrap();
        assert!(!d.clipped);
        assert!((d.model.variance() - 0.05).abs() < 1e-15);

        let params = KineticParams::from_lambda(0.1, 5.0).unwrap();
        let d = default_noise(&params, &DiffusionFunction::OneMinusWSquared).unwrap();
        assert!(d.clipped);
        assert!((d.model.support_halfwidth() - 0.45).abs() < 1e-15);
    }
}
