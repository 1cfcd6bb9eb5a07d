//! Finite-volume solver for the Fokker-Planck limits of the exchange model,
//!
//! ```text
//! dg/dtau = d/dw [ (lambda/2) d(D^2 g)/dw + V(w) g ],
//! ```
//!
//! with `V = P(|w|) (w - m)` for the compromise-driven equations and
//! `V = -(1 - w^2) w` for the Sznajd-type drift. The total flux vanishes at
//! `w = +-1`, so mass is conserved exactly.
//!
//! Interior fluxes are exponentially fitted: on the segment between two
//! cell centers the flux is taken constant and `u = D^2 g` solves
//! `(lambda/2) u' + V u / D^2 = F` exactly, with `int 2V/(lambda D^2)`
//! integrated by adaptive quadrature. The resulting two-point flux
//!
//! ```text
//! F = lambda/(2h) [ B(-x) u_right - B(x) u_left ],   B(x) = x / (e^x - 1)
//! ```
//!
//! is second order, has nonnegative coefficients (positivity under the step
//! bound) and keeps any profile with `u_right / u_left = e^{-x}` stationary,
//! so closed-form steady states sampled at cell centers are discrete fixed
//! points. Where `D` vanishes on a segment or there is no diffusion the drift
//! is upwinded instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_center, DensityGrid};
use crate::mc::{MomentRecord, MomentSeries};
use crate::opinion::{CompromiseFunction, DiffusionFunction};
use crate::quadrature;

/// Negative cells above this are clipped (with renormalization); below it
/// the step fails.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-10;

const FIT_ABS_TOL: f64 = 1e-14;
const FIT_REL_TOL: f64 = 1e-13;

/// Which limiting equation to solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "equation", rename_all = "snake_case", deny_unknown_fields)]
pub enum FpEquation {
    /// `P = 1`: `dg/dtau = (lambda/2)(D^2 g)'' + ((w - m) g)'`.
    Full { diffusion: DiffusionFunction, lambda: f64 },
    /// `dg/dtau = (lambda/2)(D^2 g)'' + (P(|w|)(w - m(tau)) g)'`.
    GeneralP {
        diffusion: DiffusionFunction,
        lambda: f64,
        compromise: CompromiseFunction,
    },
    /// `dg/dtau = (lambda/2)(D^2 g)''`.
    PureDiffusion { diffusion: DiffusionFunction, lambda: f64 },
    /// `dg/dtau = (P(|w|)(w - m(tau)) g)'`.
    PureDrift { compromise: CompromiseFunction },
    /// `dg/dtau = -((1 - w^2) w g)'`.
    SznajdDrift,
}

impl FpEquation {
    pub fn validate(&self) -> Result<()> {
        if let Some(lambda) = self.lambda() {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(Error::invalid("lambda", "must be > 0"));
            }
        }
        if let Some(d) = self.diffusion() {
            d.validate()?;
        }
        if let Some(p) = self.compromise() {
            p.validate()?;
        }
        Ok(())
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            FpEquation::Full { lambda, .. }
            | FpEquation::GeneralP { lambda, .. }
            | FpEquation::PureDiffusion { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub fn diffusion(&self) -> Option<&DiffusionFunction> {
        match self {
            FpEquation::Full { diffusion, .. }
            | FpEquation::GeneralP { diffusion, .. }
            | FpEquation::PureDiffusion { diffusion, .. } => Some(diffusion),
            _ => None,
        }
    }

    /// The compromise function of the drift, if the drift is compromise-driven.
    pub fn compromise(&self) -> Option<&CompromiseFunction> {
        const CONSTANT: CompromiseFunction = CompromiseFunction::Constant;
        match self {
            FpEquation::Full { .. } => Some(&CONSTANT),
            FpEquation::GeneralP { compromise, .. } | FpEquation::PureDrift { compromise } => Some(compromise),
            _ => None,
        }
    }

    /// `Full` is solved as `GeneralP` with `P = 1`.
    fn canonical(&self) -> FpEquation {
        match self {
            FpEquation::Full { diffusion, lambda } => FpEquation::GeneralP {
                diffusion: diffusion.clone(),
                lambda: *lambda,
                compromise: CompromiseFunction::Constant,
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MeanPolicy {
    /// The drift does not involve `m`.
    Unused,
    /// `P` constant: the mean law gives `dm/dtau = 0`, so `m` stays at its
    /// initial value.
    Frozen(f64),
    /// Recomputed from the pre-step grid.
    Recomputed,
}

#[derive(Debug, Clone, Copy)]
enum Interface {
    /// `x = i1 - m i0` with `i0 = int 2P/(lambda D^2)`, `i1 = int 2P w/(lambda D^2)`.
    Fitted { i0: f64, i1: f64 },
    /// Central diffusion plus upwind drift.
    Upwind,
}

/// `x / (e^x - 1)`
#[inline]
fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

/// Solver state for one equation on one grid resolution.
#[derive(Debug, Clone)]
pub struct FpSolver {
    equation: FpEquation,
    cells: usize,
    h: f64,
    half_lambda: f64,
    /// `D^2` at cell centers.
    b_center: Vec<f64>,
    /// Interior interfaces `1..cells`, stored at index `i - 1`.
    interfaces: Vec<Interface>,
    policy: MeanPolicy,
    /// Flux coefficients `F_i = plus_i g_i - minus_i g_{i-1}` for interfaces
    /// `0..=cells`; the two boundary entries stay zero.
    plus: Vec<f64>,
    minus: Vec<f64>,
    coefficients_for: Option<f64>,
    scratch: Vec<f64>,
}

impl FpSolver {
    /// Prepares the solver. For constant `P` the mean is taken from
    /// `initial` and held fixed.
    pub fn new(equation: &FpEquation, initial: &DensityGrid) -> Result<Self> {
        equation.validate()?;
        let equation = equation.canonical();
        let cells = initial.len();
        if cells < 2 {
            return Err(Error::invalid("cells", "need at least 2 cells"));
        }
        let h = 2.0 / cells as f64;
        let lambda = equation.lambda().unwrap_or(0.0);
        let zero_d = DiffusionFunction::Table(crate::opinion::Tabulated::new(vec![0.0, 0.0])?);
        let diffusion = equation.diffusion().unwrap_or(&zero_d);
        let b_center: Vec<f64> = (0..cells).map(|j| diffusion.squared(cell_center(cells, j))).collect();

        let policy = match equation.compromise() {
            None => MeanPolicy::Unused,
            Some(p) if p.is_constant() => MeanPolicy::Frozen(initial.mean()),
            Some(_) => MeanPolicy::Recomputed,
        };

        let interfaces = (1..cells)
            .map(|i| {
                let (a, b) = (cell_center(cells, i - 1), cell_center(cells, i));
                match (lambda > 0.0, equation.compromise()) {
                    (true, Some(p)) => fitted_integrals(diffusion, p, lambda, a, b),
                    (true, None) => Interface::Fitted { i0: 0.0, i1: 0.0 },
                    (false, _) => Interface::Upwind,
                }
            })
            .collect();

        Ok(FpSolver {
            equation,
            cells,
            h,
            half_lambda: 0.5 * lambda,
            b_center,
            interfaces,
            policy,
            plus: vec![0.0; cells + 1],
            minus: vec![0.0; cells + 1],
            coefficients_for: None,
            scratch: vec![0.0; cells],
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Mean opinion used in the drift for the given grid.
    pub fn drift_mean(&self, grid: &DensityGrid) -> f64 {
        match self.policy {
            MeanPolicy::Unused => 0.0,
            MeanPolicy::Frozen(m) => m,
            MeanPolicy::Recomputed => grid.mean(),
        }
    }

    fn velocity(&self, w: f64, m: f64) -> f64 {
        match &self.equation {
            FpEquation::SznajdDrift => -(1.0 - w * w) * w,
            FpEquation::PureDiffusion { .. } => 0.0,
            eq => eq.compromise().map_or(0.0, |p| p.eval(w) * (w - m)),
        }
    }

    fn assemble(&mut self, m: f64) {
        if self.coefficients_for == Some(m) {
            return;
        }
        let scale = self.half_lambda / self.h;
        for i in 1..self.cells {
            let (bl, br) = (self.b_center[i - 1], self.b_center[i]);
            let (plus, minus) = match self.interfaces[i - 1] {
                Interface::Fitted { i0, i1 } => {
                    let x = i1 - m * i0;
                    (scale * bernoulli(-x) * br, scale * bernoulli(x) * bl)
                }
                Interface::Upwind => {
                    let w = -1.0 + i as f64 * self.h;
                    let v = self.velocity(w, m);
                    (scale * br + v.max(0.0), scale * bl + (-v).max(0.0))
                }
            };
            self.plus[i] = plus;
            self.minus[i] = minus;
        }
        self.coefficients_for = Some(m);
    }

    /// Largest step that keeps every update coefficient nonnegative.
    pub fn monotone_bound(&mut self, grid: &DensityGrid) -> f64 {
        let m = self.drift_mean(grid);
        self.assemble(m);
        (0..self.cells)
            .map(|j| self.h / (self.minus[j + 1] + self.plus[j]))
            .fold(f64::INFINITY, f64::min)
    }

    /// `0.4 min(h^2 / (lambda max D^2), h / max |V|)`.
    pub fn cfl_bound(&self, grid: &DensityGrid) -> f64 {
        let m = self.drift_mean(grid);
        let lambda = 2.0 * self.half_lambda;
        let max_b = self.b_center.iter().cloned().fold(0.0, f64::max);
        let max_v = (0..=self.cells)
            .map(|i| self.velocity(-1.0 + i as f64 * self.h, m).abs())
            .fold(0.0, f64::max);
        let diffusive = if lambda * max_b > 0.0 { self.h * self.h / (lambda * max_b) } else { f64::INFINITY };
        let advective = if max_v > 0.0 { self.h / max_v } else { f64::INFINITY };
        0.4 * diffusive.min(advective)
    }

    /// Step size used by [`fp_solve`]: the CFL formula, capped by 0.9 of the
    /// monotonicity bound.
    pub fn suggested_dt(&mut self, grid: &DensityGrid) -> f64 {
        self.cfl_bound(grid).min(0.9 * self.monotone_bound(grid))
    }

    /// `dg/dtau` of the semi-discrete scheme.
    pub fn rate(&mut self, grid: &DensityGrid) -> Vec<f64> {
        let m = self.drift_mean(grid);
        self.assemble(m);
        let g = grid.values();
        (0..self.cells)
            .map(|j| (self.flux(g, j + 1) - self.flux(g, j)) / self.h)
            .collect()
    }

    #[inline]
    fn flux(&self, g: &[f64], i: usize) -> f64 {
        if i == 0 || i == self.cells {
            0.0
        } else {
            self.plus[i] * g[i] - self.minus[i] * g[i - 1]
        }
    }

    /// One explicit step. Returns the L1 norm of the change divided by `dt`.
    pub fn step(&mut self, grid: &mut DensityGrid, dt: f64) -> Result<f64> {
        if grid.len() != self.cells {
            return Err(Error::GridMismatch { left: grid.len(), right: self.cells });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        let bound = self.monotone_bound(grid);
        if dt > bound {
            return Err(Error::CflViolation { dt, bound });
        }
        let ratio = dt / self.h;
        let g = grid.values();
        let mut left_flux = 0.0;
        let mut change = 0.0;
        let mut negative: Option<(usize, f64)> = None;
        for j in 0..self.cells {
            let right_flux = self.flux(g, j + 1);
            let delta = ratio * (right_flux - left_flux);
            let v = g[j] + delta;
            change += delta.abs();
            if v < 0.0 && negative.is_none_or(|(_, worst)| v < worst) {
                negative = Some((j, v));
            }
            self.scratch[j] = v;
            left_flux = right_flux;
        }
        if let Some((cell, value)) = negative {
            if value < -NEGATIVITY_TOLERANCE {
                return Err(Error::NegativeDensity { cell, value });
            }
            let before: f64 = self.scratch.iter().sum();
            self.scratch.iter_mut().for_each(|v| *v = v.max(0.0));
            let after: f64 = self.scratch.iter().sum();
            self.scratch.iter_mut().for_each(|v| *v *= before / after);
        }
        grid.values_mut().copy_from_slice(&self.scratch);
        let tau = grid.tau() + dt;
        grid.set_tau(tau);
        Ok(change * self.h / dt)
    }
}

fn fitted_integrals(
    diffusion: &DiffusionFunction,
    compromise: &CompromiseFunction,
    lambda: f64,
    a: f64,
    b: f64,
) -> Interface {
    const PROBES: usize = 9;
    let vanishing = (0..PROBES).any(|k| {
        let w = a + (b - a) * k as f64 / (PROBES - 1) as f64;
        diffusion.squared(w) <= 1e-300
    });
    if vanishing {
        return Interface::Upwind;
    }
    let weight = |w: f64| 2.0 * compromise.eval(w) / (lambda * diffusion.squared(w));
    let i0 = quadrature::integrate(weight, a, b, FIT_ABS_TOL, FIT_REL_TOL);
    let i1 = quadrature::integrate(|w| weight(w) * w, a, b, FIT_ABS_TOL, FIT_REL_TOL);
    match (i0, i1) {
        (Ok(i0), Ok(i1)) => Interface::Fitted { i0: i0.value, i1: i1.value },
        _ => Interface::Upwind,
    }
}

/// One explicit conservative step of `equation`.
pub fn fp_step(solver: &mut FpSolver, grid: &mut DensityGrid, dt: f64) -> Result<()> {
    solver.step(grid, dt).map(|_| ())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpOptions {
    /// Fixed step; `None` uses [`FpSolver::suggested_dt`].
    pub dt: Option<f64>,
    /// Stop once `||g^{n+1} - g^n||_1 / dt` falls below this.
    pub steady_tol: Option<f64>,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions { dt: None, steady_tol: Some(1e-9) }
    }
}

#[derive(Debug, Clone)]
pub struct FpSolution {
    pub grid: DensityGrid,
    pub series: MomentSeries,
    pub steps: usize,
    /// Scaled time at which the steady-state residual test fired.
    pub steady_at: Option<f64>,
    pub last_residual: f64,
    pub max_mass_error: f64,
}

fn fp_record(grid: &DensityGrid) -> MomentRecord {
    let mean = grid.mean();
    MomentRecord {
        t: grid.tau(),
        mean,
        second_moment: grid.second_moment(),
        c_f: grid.spread(),
        rejected_fraction: 0.0,
    }
}

/// Integrates to `tau_end`, recording moments every `record_every`.
pub fn fp_solve(
    equation: &FpEquation,
    initial: &DensityGrid,
    tau_end: f64,
    record_every: f64,
    options: FpOptions,
) -> Result<FpSolution> {
    if !(tau_end.is_finite() && tau_end >= 0.0) {
        return Err(Error::invalid("tau_end", "must be >= 0"));
    }
    if !(record_every.is_finite() && record_every > 0.0) {
        return Err(Error::invalid("record_every", "must be > 0"));
    }
    let mut solver = FpSolver::new(equation, initial)?;
    let mut grid = initial.clone().with_tau(0.0);
    let mut series = vec![fp_record(&grid)];
    let mut next_record = record_every;
    let mut steps = 0;
    let mut steady_at = None;
    let mut last_residual = f64::INFINITY;
    let mut max_mass_error = (grid.mass() - 1.0).abs();
    let frozen = !matches!(solver.policy, MeanPolicy::Recomputed);
    let mut dt_auto = options.dt.unwrap_or_else(|| solver.suggested_dt(&grid));

    while grid.tau() < tau_end * (1.0 - 1e-14) {
        if options.dt.is_none() && !frozen {
            dt_auto = solver.suggested_dt(&grid);
        }
        let tau = grid.tau();
        let target = next_record.min(tau_end);
        let dt = if tau + dt_auto >= target { target - tau } else { dt_auto };
        if dt <= 0.0 {
            next_record += record_every;
            continue;
        }
        last_residual = solver.step(&mut grid, dt)?;
        steps += 1;
        max_mass_error = max_mass_error.max((grid.mass() - 1.0).abs());
        let reached = grid.tau() >= target * (1.0 - 1e-14);
        if reached {
            grid.set_tau(target);
            series.push(fp_record(&grid));
            next_record += record_every;
        }
        // ignore the shortened steps that land on record times
        if dt == dt_auto && options.steady_tol.is_some_and(|tol| last_residual < tol) {
            steady_at = Some(grid.tau());
            if !reached {
                series.push(fp_record(&grid));
            }
            break;
        }
    }
    Ok(FpSolution { grid, series, steps, steady_at, last_residual, max_mass_error })
}

/// `dm/dtau = m int P g - int w P g` by the midpoint rule.
pub fn mean_evolution_general_p(grid: &DensityGrid, compromise: &CompromiseFunction) -> f64 {
    let m = grid.mean();
    m * grid.integrate(|w| compromise.eval(w)) - grid.integrate(|w| w * compromise.eval(w))
}

/// One point of the closed moment system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub tau: f64,
    pub mean: f64,
    pub second_moment: f64,
}

/// Moments of the `P = 1`, `D = sqrt(1 - w^2)` equation:
///
/// ```text
/// dm/dtau  = 0
/// dM2/dtau = lambda (1 - M2) - 2 (M2 - m^2)
/// ```
///
/// obtained by testing the equation with `w` and `w^2` (boundary terms
/// vanish with `D(+-1) = 0` and zero flux). Classical RK4 with step `dt`.
pub fn closed_moment_odes(lambda: f64, m0: f64, m2_0: f64, tau_end: f64, dt: f64) -> Result<Vec<MomentPoint>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be > 0"));
    }
    if !(m0 * m0 <= m2_0 && m2_0 <= 1.0) {
        return Err(Error::invalid("moments", "need m0^2 <= M2_0 <= 1"));
    }
    if !(dt > 0.0 && tau_end >= 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    let rhs = |m2: f64| lambda * (1.0 - m2) - 2.0 * (m2 - m0 * m0);
    let steps = (tau_end / dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { tau_end / steps as f64 };
    let mut out = Vec::with_capacity(steps + 1);
    let mut m2 = m2_0;
    out.push(MomentPoint { tau: 0.0, mean: m0, second_moment: m2 });
    for k in 1..=steps {
        let k1 = rhs(m2);
        let k2 = rhs(m2 + 0.5 * h * k1);
        let k3 = rhs(m2 + 0.5 * h * k2);
        let k4 = rhs(m2 + h * k3);
        m2 += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(MomentPoint { tau: k as f64 * h, mean: m0, second_moment: m2 });
    }
    Ok(out)
}

/// Stationary second moment of [`closed_moment_odes`]: `(lambda + 2 m^2) / (lambda + 2)`.
pub fn stationary_second_moment(lambda: f64, m: f64) -> f64 {
    (lambda + 2.0 * m * m) / (lambda + 2.0)
}
