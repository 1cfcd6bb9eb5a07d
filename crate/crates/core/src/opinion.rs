//! Opinion values, the local relevance functions and the binary exchange rule.
//!
//! Two agents with opinions `w` and `w*` in `[-1, 1]` meet and propose
//!
//! ```text
//! w'  = w  - gamma P(|w|)  (w  - w*) + eta  D(|w|)
//! w*' = w* - gamma P(|w*|) (w* - w)  + eta* D(|w*|)
//! ```
//!
//! The exchange only happens when both proposals stay inside `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of samples used when checking monotonicity and bounds of a
/// relevance function.
const SHAPE_CHECK_SAMPLES: usize = 2001;

/// An opinion in the closed interval `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[repr(transparent)]
#[serde(try_from = "f64", into = "f64")]
pub struct Opinion(f64);

impl Opinion {
    pub fn new(w: f64) -> Result<Self> {
        if is_in_range(w) {
            Ok(Opinion(w))
        } else {
            Err(Error::invalid("opinion", format!("{w} is outside [-1, 1]")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Caller guarantees `w` is in range; checked in debug builds only.
    #[inline]
    pub(crate) fn new_unchecked(w: f64) -> Self {
        debug_assert!(is_in_range(w), "opinion {w} out of range");
        Opinion(w)
    }
}

impl TryFrom<f64> for Opinion {
    type Error = Error;

    fn try_from(w: f64) -> Result<Self> {
        Opinion::new(w)
    }
}

impl From<Opinion> for f64 {
    fn from(w: Opinion) -> f64 {
        w.0
    }
}

#[inline]
fn is_in_range(w: f64) -> bool {
    (-1.0..=1.0).contains(&w)
}

/// Compromise strength and noise variance of the kinetic model.
///
/// `lambda = sigma2 / gamma` is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    gamma: f64,
    sigma2: f64,
}

impl KineticParams {
    pub fn new(gamma: f64, sigma2: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::invalid("sigma2", "noise variance must be finite and >= 0"));
        }
        Ok(KineticParams { gamma, sigma2 })
    }

    /// Parameters from the quasi-invariant ratio `lambda = sigma2 / gamma`.
    pub fn from_lambda(gamma: f64, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid("lambda", "lambda must be finite and >= 0"));
        }
        Self::new(gamma, lambda * gamma)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn lambda(&self) -> f64 {
        self.sigma2 / self.gamma
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 && gamma < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid("gamma", "gamma must lie in (0, 1/2)"))
    }
}

/// A relevance function given by values on a uniform grid of `|w|` over
/// `[0, 1]`, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Tabulated {
    values: Vec<f64>,
}

impl Tabulated {
    /// Values at `|w| = 0, 1/(n-1), ..., 1`. They must lie in `[0, 1]` and be
    /// non-increasing.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("table", "needs at least two values"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("table", "values must lie in [0, 1]"));
        }
        if values.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::invalid("table", "values must be non-increasing in |w|"));
        }
        Ok(Tabulated { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn eval(&self, abs_w: f64) -> f64 {
        let last = self.values.len() - 1;
        let x = abs_w.clamp(0.0, 1.0) * last as f64;
        let i = (x.floor() as usize).min(last - 1);
        let t = x - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

impl TryFrom<Vec<f64>> for Tabulated {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Tabulated::new(values)
    }
}

impl From<Tabulated> for Vec<f64> {
    fn from(t: Tabulated) -> Vec<f64> {
        t.values
    }
}

/// Local relevance of compromise, `P(|w|)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompromiseFunction {
    #[default]
    Constant,
    OneMinusWSquared,
    Table(Tabulated),
}

impl CompromiseFunction {
    #[inline]
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            CompromiseFunction::Constant => 1.0,
            CompromiseFunction::OneMinusWSquared => 1.0 - w * w,
            CompromiseFunction::Table(t) => t.eval(w.abs()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CompromiseFunction::Constant)
    }

    /// Checks `0 <= P <= 1` and monotonicity in `|w|` on a fine grid.
    pub fn validate(&self) -> Result<()> {
        check_shape("compromise", |w| self.eval(w))
    }
}

/// Local relevance of diffusion, `D(|w|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionFunction {
    /// `1 - |w|`
    OneMinusAbs,
    /// `1 - w^2`
    OneMinusWSquared,
    /// `sqrt(1 - w^2)`: the Fokker-Planck limit of [`Self::SqrtRegularized`].
    /// No positive noise support keeps it admissible for the kinetic model.
    SqrtOneMinusWSquared,
    /// `sqrt((1 - (1 + gamma^p) w^2)_+)`
    SqrtRegularized { p: f64, gamma: f64 },
    Table(Tabulated),
}

impl DiffusionFunction {
    pub fn sqrt_regularized(p: f64, gamma: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::invalid("diffusion.p", "p must be > 0"));
        }
        check_gamma(gamma)?;
        Ok(DiffusionFunction::SqrtRegularized { p, gamma })
    }

    #[inline]
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            DiffusionFunction::OneMinusAbs => 1.0 - w.abs(),
            DiffusionFunction::OneMinusWSquared => 1.0 - w * w,
            DiffusionFunction::SqrtOneMinusWSquared => (1.0 - w * w).max(0.0).sqrt(),
            DiffusionFunction::SqrtRegularized { p, gamma } => {
                (1.0 - (1.0 + gamma.powf(*p)) * w * w).max(0.0).sqrt()
            }
            DiffusionFunction::Table(t) => t.eval(w.abs()),
        }
    }

    /// `D(|w|)^2`, evaluated without a square root where possible.
    #[inline]
    pub fn squared(&self, w: f64) -> f64 {
        match self {
            DiffusionFunction::SqrtOneMinusWSquared => (1.0 - w * w).max(0.0),
            DiffusionFunction::SqrtRegularized { p, gamma } => {
                (1.0 - (1.0 + gamma.powf(*p)) * w * w).max(0.0)
            }
            _ => {
                let d = self.eval(w);
                d * d
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DiffusionFunction::SqrtRegularized { p, gamma } = self {
            DiffusionFunction::sqrt_regularized(*p, *gamma)?;
        }
        check_shape("diffusion", |w| self.eval(w))
    }
}

fn check_shape(field: &str, f: impl Fn(f64) -> f64) -> Result<()> {
    let mut prev = f64::INFINITY;
    for i in 0..SHAPE_CHECK_SAMPLES {
        let w = i as f64 / (SHAPE_CHECK_SAMPLES - 1) as f64;
        let (v, v_neg) = (f(w), f(-w));
        if !(0.0..=1.0).contains(&v) || !(0.0..=1.0).contains(&v_neg) {
            return Err(Error::invalid(field, format!("value {v} at |w| = {w} outside [0, 1]")));
        }
        if v > prev + 1e-12 {
            return Err(Error::invalid(field, "must be non-increasing in |w|"));
        }
        prev = v;
    }
    Ok(())
}

/// Raw post-interaction pair, before the admissibility check.
#[allow(clippy::too_many_arguments)]
pub fn interact(
    w: Opinion,
    w_star: Opinion,
    params: &KineticParams,
    compromise: &CompromiseFunction,
    diffusion: &DiffusionFunction,
    eta: f64,
    eta_star: f64,
) -> (f64, f64) {
    interact_raw(
        w.value(),
        w_star.value(),
        params.gamma(),
        compromise,
        diffusion,
        eta,
        eta_star,
    )
}

#[inline]
pub(crate) fn interact_raw(
    w: f64,
    w_star: f64,
    gamma: f64,
    compromise: &CompromiseFunction,
    diffusion: &DiffusionFunction,
    eta: f64,
    eta_star: f64,
) -> (f64, f64) {
    let diff = w - w_star;
    let w_new = w - gamma * compromise.eval(w) * diff + eta * diffusion.eval(w);
    let w_star_new = w_star + gamma * compromise.eval(w_star) * diff + eta_star * diffusion.eval(w_star);
    (w_new, w_star_new)
}

/// Both proposed opinions lie in the closed interval `[-1, 1]`.
#[inline]
pub fn is_admissible(w_prime: f64, w_star_prime: f64) -> bool {
    is_in_range(w_prime) && is_in_range(w_star_prime)
}

/// Contraction factor of the opinion difference in a noise-free exchange:
/// `|w' - w*'| = eps |w - w*|` with `eps = 1 - gamma (P(|w|) + P(|w*|))`.
pub fn restitution_coefficient(
    w: Opinion,
    w_star: Opinion,
    gamma: f64,
    compromise: &CompromiseFunction,
) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(1.0 - gamma * (compromise.eval(w.value()) + compromise.eval(w_star.value())))
}

/// Largest noise half-width `a` such that every `|eta| <= a` keeps the
/// exchange admissible.
///
/// With `w` given the bound may depend on the opinion; without it the
/// worst case over `[-1, 1]` is returned. Tabulated and `sqrt(1 - w^2)`
/// diffusion get the conservative bound 0.
pub fn max_noise_halfwidth(diffusion: &DiffusionFunction, gamma: f64, w: Option<Opinion>) -> Result<f64> {
    check_gamma(gamma)?;
    let a = match diffusion {
        DiffusionFunction::OneMinusAbs => 1.0 - gamma,
        DiffusionFunction::OneMinusWSquared => {
            let abs_w = w.map_or(1.0, |w| w.value().abs());
            (1.0 - gamma) / (1.0 + abs_w)
        }
        DiffusionFunction::SqrtRegularized { p, gamma: g_reg } => {
            let gp = g_reg.powf(*p);
            (1.0 - gamma) * gp.sqrt() / (1.0 + gp).sqrt()
        }
        DiffusionFunction::SqrtOneMinusWSquared | DiffusionFunction::Table(_) => 0.0,
    };
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn op(w: f64) -> Opinion {
        Opinion::new(w).unwrap()
    }

    fn params(gamma: f64) -> KineticParams {
        KineticParams::new(gamma, 0.0).unwrap()
    }

    #[test]
    fn opinion_rejects_out_of_range() {
        assert!(Opinion::new(1.0).is_ok());
        assert!(Opinion::new(-1.0).is_ok());
        assert!(Opinion::new(1.0 + 1e-12).is_err());
        assert!(Opinion::new(f64::NAN).is_err());
    }

    #[test]
    fn equal_opinions_without_noise_are_fixed() {
        for gamma in [0.01, 0.25, 0.49] {
            let (a, b) = interact(
                op(0.5),
                op(0.5),
                &params(gamma),
                &CompromiseFunction::Constant,
                &DiffusionFunction::OneMinusAbs,
                0.0,
                0.0,
            );
            assert_eq!((a, b), (0.5, 0.5));
        }
    }

    #[test]
    fn extremes_contract_by_one_minus_two_gamma() {
        let (a, b) = interact(
            op(1.0),
            op(-1.0),
            &params(0.25),
            &CompromiseFunction::Constant,
            &DiffusionFunction::OneMinusAbs,
            0.0,
            0.0,
        );
        assert_eq!((a, b), (0.5, -0.5));
        assert_eq!((a - b).abs(), (1.0 - 2.0 * 0.25) * 2.0);
    }

    #[test]
    fn one_minus_w2_compromise_example() {
        let (a, b) = interact(
            op(0.8),
            op(-0.2),
            &params(0.1),
            &CompromiseFunction::OneMinusWSquared,
            &DiffusionFunction::OneMinusAbs,
            0.0,
            0.0,
        );
        // hand arithmetic: 0.8 - 0.1*0.36*1.0 and -0.2 + 0.1*0.96*1.0
        assert_abs_diff_eq!(a, 0.764, epsilon = 1e-15);
        assert_abs_diff_eq!(b, -0.104, epsilon = 1e-15);
    }

    #[test]
    fn admissibility_is_closed_interval() {
        assert!(is_admissible(0.3, -0.9));
        assert!(!is_admissible(1.0001, 0.0));
        assert!(is_admissible(1.0, -1.0));
        assert!(!is_admissible(0.0, f64::NAN));
    }

    #[test]
    fn restitution_examples() {
        let eps = restitution_coefficient(op(0.3), op(-0.7), 0.25, &CompromiseFunction::Constant).unwrap();
        assert_eq!(eps, 0.5);
        let p = CompromiseFunction::OneMinusWSquared;
        assert_eq!(restitution_coefficient(op(1.0), op(1.0), 0.2, &p).unwrap(), 1.0);
        assert_abs_diff_eq!(restitution_coefficient(op(0.0), op(0.0), 0.2, &p).unwrap(), 0.6, epsilon = 1e-15);
        assert!(restitution_coefficient(op(0.0), op(0.0), 0.5, &p).is_err());
    }

    #[test]
    fn noise_halfwidths() {
        let a = max_noise_halfwidth(&DiffusionFunction::OneMinusAbs, 0.1, None).unwrap();
        assert_abs_diff_eq!(a, 0.9, epsilon = 1e-15);
        let d = DiffusionFunction::OneMinusWSquared;
        assert_abs_diff_eq!(max_noise_halfwidth(&d, 0.1, Some(op(0.0))).unwrap(), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(max_noise_halfwidth(&d, 0.1, Some(op(1.0))).unwrap(), 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(max_noise_halfwidth(&d, 0.1, None).unwrap(), 0.45, epsilon = 1e-15);
        let d = DiffusionFunction::sqrt_regularized(2.0 / 3.0, 0.001).unwrap();
        // 0.999 * 0.001^(1/3) / sqrt(1 + 0.001^(2/3)), evaluated independently
        assert_abs_diff_eq!(max_noise_halfwidth(&d, 0.001, None).unwrap(), 0.099404215301978, epsilon = 1e-12);
        assert!(max_noise_halfwidth(&d, 0.7, None).is_err());
        assert_eq!(max_noise_halfwidth(&DiffusionFunction::SqrtOneMinusWSquared, 0.1, None).unwrap(), 0.0);
    }

    #[test]
    fn table_validation_and_interpolation() {
        assert!(Tabulated::new(vec![1.0, 0.5, 0.6]).is_err());
        assert!(Tabulated::new(vec![1.2, 0.5]).is_err());
        let t = Tabulated::new(vec![1.0, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(t.eval(0.25), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(t.eval(1.0), 0.0, epsilon = 1e-15);
        assert!(DiffusionFunction::Table(t.clone()).validate().is_ok());
        assert!(CompromiseFunction::Table(t).validate().is_ok());
    }

    #[test]
    fn named_functions_pass_shape_checks() {
        for p in [CompromiseFunction::Constant, CompromiseFunction::OneMinusWSquared] {
            p.validate().unwrap();
        }
        for d in [
            DiffusionFunction::OneMinusAbs,
            DiffusionFunction::OneMinusWSquared,
            DiffusionFunction::SqrtOneMinusWSquared,
            DiffusionFunction::sqrt_regularized(2.0 / 3.0, 0.01).unwrap(),
        ] {
            d.validate().unwrap();
        }
    }

    #[test]
    fn lambda_is_derived() {
        let p = KineticParams::from_lambda(0.1, 0.5).unwrap();
        assert_eq!(p.lambda(), p.sigma2() / p.gamma());
        assert!(KineticParams::new(0.7, 0.1).is_err());
        assert!(KineticParams::new(0.0, 0.1).is_err());
    }

    fn compromise_strategy() -> impl Strategy<Value = CompromiseFunction> {
        prop_oneof![
            Just(CompromiseFunction::Constant),
            Just(CompromiseFunction::OneMinusWSquared),
        ]
    }

    fn diffusion_strategy() -> impl Strategy<Value = DiffusionFunction> {
        prop_oneof![
            Just(DiffusionFunction::OneMinusAbs),
            Just(DiffusionFunction::OneMinusWSquared),
            (0.1f64..2.0, 0.001f64..0.49)
                .prop_map(|(p, g)| DiffusionFunction::SqrtRegularized { p, gamma: g }),
        ]
    }

    proptest! {
        #[test]
        fn noise_free_exchange_preserves_bounds(
            w in -1.0f64..=1.0, ws in -1.0f64..=1.0, gamma in 0.0001f64..0.4999,
            p in compromise_strategy(),
        ) {
            let (a, b) = interact_raw(w, ws, gamma, &p, &DiffusionFunction::OneMinusAbs, 0.0, 0.0);
            prop_assert!(a.abs().max(b.abs()) <= w.abs().max(ws.abs()) + 1e-15);
        }

        #[test]
        fn bounded_noise_is_always_admissible(
            w in -1.0f64..=1.0, ws in -1.0f64..=1.0, gamma in 0.0001f64..0.4999,
            u in -1.0f64..=1.0, us in -1.0f64..=1.0,
            p in compromise_strategy(), d in diffusion_strategy(),
        ) {
            let a = max_noise_halfwidth(&d, gamma, Some(op(w))).unwrap();
            let a_star = max_noise_halfwidth(&d, gamma, Some(op(ws))).unwrap();
            let (x, y) = interact_raw(w, ws, gamma, &p, &d, u * a, us * a_star);
            // exact in real arithmetic; allow rounding at the boundary
            prop_assert!(x.abs() <= 1.0 + 1e-14 && y.abs() <= 1.0 + 1e-14, "w={} ws={} -> ({}, {})", w, ws, x, y);
        }

        #[test]
        fn sum_and_difference_identities(
            w in -1.0f64..=1.0, ws in -1.0f64..=1.0, gamma in 0.0001f64..0.4999,
            p in compromise_strategy(),
        ) {
            let (a, b) = interact_raw(w, ws, gamma, &p, &DiffusionFunction::OneMinusAbs, 0.0, 0.0);
            let (pw, pws) = (p.eval(w), p.eval(ws));
            let sum = w + ws - gamma * (w - ws) * (pw - pws);
            let eps = restitution_coefficient(op(w), op(ws), gamma, &p).unwrap();
            prop_assert!((a + b - sum).abs() <= 1e-14);
            prop_assert!((a - b - eps * (w - ws)).abs() <= 1e-14);
            prop_assert!((0.0..=1.0).contains(&eps));
        }

        #[test]
        fn exchange_is_deterministic(
            w in -1.0f64..=1.0, ws in -1.0f64..=1.0, gamma in 0.0001f64..0.4999,
            eta in -0.1f64..0.1, eta_s in -0.1f64..0.1,
        ) {
            let d = DiffusionFunction::OneMinusWSquared;
            let p = CompromiseFunction::OneMinusWSquared;
            let first = interact_raw(w, ws, gamma, &p, &d, eta, eta_s);
            let second = interact_raw(w, ws, gamma, &p, &d, eta, eta_s);
            prop_assert_eq!(first.0.to_bits(), second.0.to_bits());
            prop_assert_eq!(first.1.to_bits(), second.1.to_bits());
        }
    }
}
