//! Closed-form stationary states of the `P = 1` Fokker-Planck equation.
//!
//! A zero-flux stationary density solves
//!
//! ```text
//! (lambda/2) (D^2 g)' + (w - m) g = 0   on (-1, 1),
//! ```
//!
//! so `D^2 g = exp(-int 2(w - m) / (lambda D^2))`. Integrating for the three
//! diffusion functions gives, up to normalization,
//!
//! | `D`             | `g`                                                                   |
//! |-----------------|-----------------------------------------------------------------------|
//! | `1 - w^2`       | `(1+w)^(-2+m/(2 lambda)) (1-w)^(-2-m/(2 lambda)) exp(-(1-m w)/(lambda (1-w^2)))` |
//! | `1 - abs(w)`    | `(1-abs(w))^(-2-2/lambda) exp(-2(abs(w) - m w)/(lambda (1-abs(w))))`  |
//! | `sqrt(1 - w^2)` | `(1-w)^((1-m)/lambda - 1) (1+w)^((1+m)/lambda - 1)`                   |
//!
//! Since `D^2 g` is continuous at `w = 0`, the `1 - abs(w)` density is
//! continuous there (with a kink). Every form has mean `m`.
//!
//! Densities are evaluated in log form from the two distances `1 + w` and
//! `1 - w`, so values next to the endpoints keep full relative precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::opinion::DiffusionFunction;
use crate::quadrature;

const ABS_TOL: f64 = 1e-15;
const REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyDiffusion {
    OneMinusWSquared,
    OneMinusAbs,
    SqrtOneMinusWSquared,
}

impl SteadyDiffusion {
    pub const ALL: [SteadyDiffusion; 3] = [
        SteadyDiffusion::OneMinusWSquared,
        SteadyDiffusion::OneMinusAbs,
        SteadyDiffusion::SqrtOneMinusWSquared,
    ];

    pub fn to_diffusion(self) -> DiffusionFunction {
        match self {
            SteadyDiffusion::OneMinusWSquared => DiffusionFunction::OneMinusWSquared,
            SteadyDiffusion::OneMinusAbs => DiffusionFunction::OneMinusAbs,
            SteadyDiffusion::SqrtOneMinusWSquared => DiffusionFunction::SqrtOneMinusWSquared,
        }
    }
}

impl TryFrom<&DiffusionFunction> for SteadyDiffusion {
    type Error = Error;

    fn try_from(d: &DiffusionFunction) -> Result<Self> {
        match d {
            DiffusionFunction::OneMinusWSquared => Ok(SteadyDiffusion::OneMinusWSquared),
            DiffusionFunction::OneMinusAbs => Ok(SteadyDiffusion::OneMinusAbs),
            DiffusionFunction::SqrtOneMinusWSquared => Ok(SteadyDiffusion::SqrtOneMinusWSquared),
            other => Err(Error::invalid(
                "diffusion",
                format!("no closed-form stationary state for {other:?}"),
            )),
        }
    }
}

/// How the density behaves as `w` approaches an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointBehavior {
    Vanishes,
    Finite,
    Diverges,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarySpec {
    pub diffusion: SteadyDiffusion,
    pub m: f64,
    pub lambda: f64,
}

impl StationarySpec {
    pub fn new(diffusion: SteadyDiffusion, m: f64, lambda: f64) -> Result<Self> {
        let spec = StationarySpec { diffusion, m, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m.abs() < 1.0) {
            return Err(Error::invalid("m", "must lie in (-1, 1)"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be > 0"));
        }
        Ok(())
    }

    /// `ln g` (unnormalized) from `a = 1 + w` and `b = 1 - w`.
    fn log_parts(&self, a: f64, b: f64) -> f64 {
        let (m, l) = (self.m, self.lambda);
        let w = 0.5 * (a - b);
        match self.diffusion {
            SteadyDiffusion::OneMinusWSquared => {
                let k = m / (2.0 * l);
                (-2.0 + k) * a.ln() + (-2.0 - k) * b.ln() - (1.0 - m * w) / (l * a * b)
            }
            SteadyDiffusion::OneMinusAbs => {
                let d = a.min(b);
                (-2.0 - 2.0 / l) * d.ln() - 2.0 * (w.abs() - m * w) / (l * d)
            }
            SteadyDiffusion::SqrtOneMinusWSquared => {
                ((1.0 - m) / l - 1.0) * b.ln() + ((1.0 + m) / l - 1.0) * a.ln()
            }
        }
    }

    /// The closed form without its normalization constant. `w` must lie in
    /// the open interval.
    pub fn unnormalized_density(&self, w: f64) -> Result<f64> {
        self.validate()?;
        if !(w.abs() < 1.0) {
            return Err(Error::invalid("w", "must lie in the open interval (-1, 1)"));
        }
        Ok(self.log_parts(1.0 + w, 1.0 - w).exp())
    }

    pub fn endpoint_behavior(&self) -> (EndpointBehavior, EndpointBehavior) {
        match self.diffusion {
            SteadyDiffusion::SqrtOneMinusWSquared => {
                let classify = |e: f64| match e.partial_cmp(&0.0) {
                    Some(std::cmp::Ordering::Less) => EndpointBehavior::Diverges,
                    Some(std::cmp::Ordering::Equal) => EndpointBehavior::Finite,
                    _ => EndpointBehavior::Vanishes,
                };
                (
                    classify((1.0 + self.m) / self.lambda - 1.0),
                    classify((1.0 - self.m) / self.lambda - 1.0),
                )
            }
            _ => (EndpointBehavior::Vanishes, EndpointBehavior::Vanishes),
        }
    }
}

/// A normalized stationary density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDensity {
    spec: StationarySpec,
    /// `ln c` relative to the unnormalized form.
    log_c: f64,
    /// `integral` of the unnormalized form, as a check on the constant.
    quadrature_error: f64,
}

/// `int phi(w) g(w)` over `(-1, 1)` with `g = exp(log_g)`, splitting at 0
/// and substituting toward each endpoint.
fn split_integral(
    log_g: impl Fn(f64, f64) -> f64,
    phi: impl Fn(f64) -> f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let left = quadrature::integrate_to_endpoint(
        |d| phi(-1.0 + d) * log_g(d, 2.0 - d).exp(),
        1.0,
        abs_tol,
        rel_tol,
    )?;
    let right = quadrature::integrate_to_endpoint(
        |d| phi(1.0 - d) * log_g(2.0 - d, d).exp(),
        1.0,
        abs_tol,
        rel_tol,
    )?;
    Ok((left.value + right.value, left.error + right.error))
}

impl StationaryDensity {
    /// Normalizes the closed form by adaptive quadrature with relative
    /// tolerance `tolerance`.
    pub fn new(spec: StationarySpec, tolerance: f64) -> Result<Self> {
        spec.validate()?;
        if !(tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be > 0"));
        }
        // shift so the largest sampled value is 1
        let shift = (1..400)
            .map(|k| {
                let w = -1.0 + k as f64 / 200.0;
                spec.log_parts(1.0 + w, 1.0 - w)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let (mass, error) = split_integral(|a, b| spec.log_parts(a, b) - shift, |_| 1.0, 0.0, tolerance)?;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Numerical(format!("stationary density not integrable: mass {mass}")));
        }
        Ok(StationaryDensity { spec, log_c: -shift - mass.ln(), quadrature_error: error / mass })
    }

    pub fn spec(&self) -> &StationarySpec {
        &self.spec
    }

    /// `c` with `int c * unnormalized_density = 1`.
    pub fn normalization_constant(&self) -> f64 {
        self.log_c.exp()
    }

    /// Estimated relative error of the normalization.
    pub fn quadrature_error(&self) -> f64 {
        self.quadrature_error
    }

    fn log_density(&self, a: f64, b: f64) -> f64 {
        self.spec.log_parts(a, b) + self.log_c
    }

    /// Normalized `g_inf(w)` on the open interval.
    pub fn eval(&self, w: f64) -> Result<f64> {
        if !(w.abs() < 1.0) {
            return Err(Error::invalid("w", "must lie in the open interval (-1, 1)"));
        }
        Ok(self.log_density(1.0 + w, 1.0 - w).exp())
    }

    /// `int phi g` by adaptive quadrature.
    pub fn expectation(&self, phi: impl Fn(f64) -> f64) -> Result<f64> {
        split_integral(|a, b| self.log_density(a, b), phi, 1e-15, 1e-13).map(|(v, _)| v)
    }

    pub fn mean(&self) -> Result<f64> {
        self.expectation(|w| w)
    }

    pub fn second_moment(&self) -> Result<f64> {
        self.expectation(|w| w * w)
    }

    /// Cell averages on `cells` uniform cells, each by adaptive quadrature
    /// (substituted toward the endpoints in the outer cells).
    pub fn cell_averages(&self, cells: usize) -> Result<DensityGrid> {
        if cells < 2 {
            return Err(Error::invalid("cells", "need at least 2 cells"));
        }
        let h = 2.0 / cells as f64;
        let g = |w: f64| self.log_density(1.0 + w, 1.0 - w).exp();
        let piece = |a: f64, b: f64| -> Result<f64> {
            Ok(quadrature::integrate(g, a, b, ABS_TOL, REL_TOL)?.value)
        };
        let values = (0..cells)
            .map(|j| {
                let (a, b) = (-1.0 + j as f64 * h, -1.0 + (j + 1) as f64 * h);
                let mass = if j == 0 {
                    quadrature::integrate_to_endpoint(|d| self.log_density(d, 2.0 - d).exp(), h, ABS_TOL, REL_TOL)?
                        .value
                } else if j == cells - 1 {
                    quadrature::integrate_to_endpoint(|d| self.log_density(2.0 - d, d).exp(), h, ABS_TOL, REL_TOL)?
                        .value
                } else if a < 0.0 && b > 0.0 {
                    piece(a, 0.0)? + piece(0.0, b)?
                } else {
                    piece(a, b)?
                };
                Ok(mass / h)
            })
            .collect::<Result<Vec<_>>>()?;
        DensityGrid::normalized(values)
    }

    /// Values at cell centers (not renormalized).
    pub fn tabulate(&self, cells: usize) -> Vec<(f64, f64)> {
        (0..cells)
            .map(|j| {
                let w = crate::grid::cell_center(cells, j);
                (w, self.log_density(1.0 + w, 1.0 - w).exp())
            })
            .collect()
    }

    /// Interior local maxima located on a `samples`-point grid and refined
    /// by golden-section search.
    pub fn peaks(&self, samples: usize) -> Vec<f64> {
        let n = samples.max(3);
        let xs: Vec<f64> = (1..=n).map(|k| -1.0 + 2.0 * k as f64 / (n + 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|w| self.log_density(1.0 + w, 1.0 - w)).collect();
        let mut out = Vec::new();
        for k in 1..n - 1 {
            if ys[k] > ys[k - 1] && ys[k] >= ys[k + 1] {
                out.push(self.golden_max(xs[k - 1], xs[k + 1]));
            }
        }
        out
    }

    fn golden_max(&self, mut a: f64, mut b: f64) -> f64 {
        let f = |w: f64| self.log_density(1.0 + w, 1.0 - w);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        for _ in 0..100 {
            if b - a < 1e-12 {
                break;
            }
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - r * (b - a);
            d = a + r * (b - a);
        }
        0.5 * (a + b)
    }

    /// One-sided limits of `g` at `w = 0`.
    pub fn one_sided_limits_at_zero(&self) -> (f64, f64) {
        let eps = 1e-12;
        (self.log_density(1.0 - eps, 1.0 + eps).exp(), self.log_density(1.0 + eps, 1.0 - eps).exp())
    }
}

/// Derivative of `f` at `x` by Ridders' polynomial extrapolation of
/// central differences, starting from step `h`. Returns (estimate, error).
pub fn ridders_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    const NTAB: usize = 10;
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut hh = h;
    a[0][0] = (f(x + hh) - f(x - hh)) / (2.0 * hh);
    let mut best = (a[0][0], f64::INFINITY);
    for i in 1..NTAB {
        hh /= CON;
        a[0][i] = (f(x + hh) - f(x - hh)) / (2.0 * hh);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let err = (a[j][i] - a[j - 1][i]).abs().max((a[j][i] - a[j - 1][i - 1]).abs());
            if err <= best.1 {
                best = (a[j][i], err);
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * best.1 {
            break;
        }
    }
    best
}

/// `max |(lambda/2)(D^2 g)' + (w - m) g|` over `points`, divided by the
/// largest `g` among them. With `u = D^2 g`, `u'` is taken as `u (ln u)'`
/// and `(ln u)'` numerically, which stays accurate where `u` varies over
/// many orders of magnitude.
pub fn stationary_ode_residual(density: &StationaryDensity, points: &[f64]) -> Result<f64> {
    let spec = density.spec;
    let d = spec.diffusion.to_diffusion();
    let log_u = |w: f64| d.squared(w).ln() + density.log_density(1.0 + w, 1.0 - w);
    let mut worst = 0.0f64;
    let mut g_max = 0.0f64;
    for &w in points {
        if !(w.abs() < 1.0) || (spec.diffusion == SteadyDiffusion::OneMinusAbs && w == 0.0) {
            return Err(Error::invalid("points", "must avoid the singular set"));
        }
        let mut room = 1.0 - w.abs();
        if spec.diffusion == SteadyDiffusion::OneMinusAbs {
            room = room.min(w.abs());
        }
        let (dlog_u, _) = ridders_derivative(log_u, w, (0.25 * room).min(0.05));
        let g = density.eval(w)?;
        let du = d.squared(w) * g * dlog_u;
        worst = worst.max((0.5 * spec.lambda * du + (w - spec.m) * g).abs());
        g_max = g_max.max(g);
    }
    if g_max == 0.0 {
        return Ok(worst);
    }
    Ok(worst / g_max)
}

/// `n` interior points: the midpoints of `n` uniform cells.
pub fn interior_points(n: usize) -> Vec<f64> {
    (0..n).map(|j| crate::grid::cell_center(n, j)).collect()
}
