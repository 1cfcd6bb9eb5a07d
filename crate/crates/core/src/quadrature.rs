//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kron += wk * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * half;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    let error = ((kron - gauss) * half).abs();
    Ok(Segment { a, b, value, error })
}

/// Integrates `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod(&f, a, b)?;
    let (mut value, mut error) = (first.value, first.error);
    heap.push(first);
    let mut intervals = 1;
    while error > abs_tol.max(rel_tol * value.abs()) {
        if intervals >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not converge: error {error:e}"
            )));
        }
        let worst = heap.pop().expect("heap holds every segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in floating point
            return Err(Error::Numerical(format!("quadrature stalled near {mid}")));
        }
        let left = kronrod(&f, worst.a, mid)?;
        let right = kronrod(&f, mid, worst.b)?;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        intervals += 1;
        if heap.len() % 64 == 0 {
            // resum to keep drift from the running updates in check
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Quadrature { value, error, evaluations: 15 * (2 * intervals - 1) })
}

/// `int_0^{delta_max} f(delta) d delta` for integrands that may be singular
/// (but integrable) at `delta = 0`.
///
/// Substitutes `delta = delta_max * exp(-s)` and maps `s in [0, inf)` onto
/// `t in [0, 1)` with `s = t / (1 - t)`. `f` receives the distance `delta`
/// directly so no precision is lost next to the endpoint.
pub fn integrate_to_endpoint(f: impl Fn(f64) -> f64, delta_max: f64, abs_tol: f64, rel_tol: f64) -> Result<Quadrature> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = t / (1.0 - t);
        let delta = delta_max * (-s).exp();
        if delta == 0.0 {
            return 0.0;
        }
        let jac = delta / ((1.0 - t) * (1.0 - t));
        let v = f(delta) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_smooth_functions() {
        let q = integrate(|x| x * x * x * x, -1.0, 1.0, 1e-14, 1e-14).unwrap();
        assert!((q.value - 0.4).abs() < 1e-15);
        let q = integrate(f64::exp, 0.0, 3.0, 1e-13, 1e-13).unwrap();
        assert!((q.value - (3f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularities() {
        // int_0^1 x^{-1/2} = 2
        let q = integrate_to_endpoint(|d| d.powf(-0.5), 1.0, 1e-13, 1e-13).unwrap();
        assert!((q.value - 2.0).abs() < 1e-11, "{}", q.value);
        // int_0^1 x^{-0.9} = 10
        let q = integrate_to_endpoint(|d| d.powf(-0.9), 1.0, 1e-12, 1e-12).unwrap();
        assert!((q.value - 10.0).abs() < 1e-9, "{}", q.value);
        // int_0^{1/2} exp(-1/x) / x^2 = exp(-2)
        let q = integrate_to_endpoint(|d| (-1.0 / d).exp() / (d * d), 0.5, 1e-14, 1e-13).unwrap();
        assert!((q.value - (-2f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(integrate(|x| 1.0 / x, 0.0, 1.0, 1e-10, 1e-10).is_err());
    }
}
