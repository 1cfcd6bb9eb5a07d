//! Quasi-invariant limit experiments: kinetic runs at decreasing `gamma`
//! with `lambda = sigma^2 / gamma` held fixed, compared against the
//! Fokker-Planck steady state and the closed forms.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fokker_planck::{fp_solve, FpEquation, FpOptions};
use crate::grid::DensityGrid;
use crate::mc::{simulate, InitialCondition, SimConfig, SimOutput};
use crate::noise::{default_noise, NoiseModel};
use crate::opinion::{max_noise_halfwidth, CompromiseFunction, DiffusionFunction, KineticParams};
use crate::rng::{derive_key, stream, BOOTSTRAP_TAG};
use crate::stationary::{StationaryDensity, StationarySpec, SteadyDiffusion};

/// Noise half-widths below this count as collapsed.
pub const MIN_NOISE_HALFWIDTH: f64 = 1e-12;

/// Horizon used for the "long-time" Fokker-Planck profile; the solver
/// usually stops earlier on its steady-state test.
pub const FP_LONG_TIME: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    L1,
    Wasserstein1,
}

fn check_same_grid(a: &DensityGrid, b: &DensityGrid) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

/// `sum |a - b| h`
pub fn l1_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    check_same_grid(a, b)?;
    let h = a.width();
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() * h)
}

/// `sum |CDF_a - CDF_b| h` with the CDFs taken at the right cell edges.
pub fn w1_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    check_same_grid(a, b)?;
    let h = a.width();
    let mut gap = 0.0;
    let mut total = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        gap += (x - y) * h;
        total += gap.abs();
    }
    Ok(total * h)
}

pub fn distance(a: &DensityGrid, b: &DensityGrid, metric: Metric) -> Result<f64> {
    match metric {
        Metric::L1 => l1_distance(a, b),
        Metric::Wasserstein1 => w1_distance(a, b),
    }
}

/// How the noise is chosen at each `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepNoise {
    /// Uniform with variance `lambda gamma`, clipped to the admissible width.
    #[default]
    Lambda,
    /// Uniform on the full admissible interval `(-a_gamma, a_gamma)`.
    Saturated,
}

fn default_refinement() -> usize {
    4
}

fn default_bootstrap() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Strictly decreasing values in `(0, 1/2)`.
    pub gammas: Vec<f64>,
    pub lambda: f64,
    pub diffusion: DiffusionFunction,
    #[serde(default)]
    pub compromise: CompromiseFunction,
    pub n: usize,
    pub realizations: usize,
    /// Scaled horizon; each kinetic run lasts `tau_end / gamma` sweeps.
    pub tau_end: f64,
    #[serde(default)]
    pub metric: Metric,
    pub bins: usize,
    #[serde(default)]
    pub initial: InitialCondition,
    pub seed: u64,
    #[serde(default)]
    pub noise: SweepNoise,
    /// The Fokker-Planck grid has `bins * fp_refinement` cells.
    #[serde(default = "default_refinement")]
    pub fp_refinement: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::invalid("gammas", "need at least one value"));
        }
        for &g in &self.gammas {
            KineticParams::new(g, 0.0).map_err(|_| Error::invalid("gammas", "gamma must lie in (0, 1/2)"))?;
        }
        if self.gammas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("gammas", "must be strictly decreasing"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be > 0"));
        }
        if self.n < 2 {
            return Err(Error::invalid("n", "ensemble needs at least 2 agents"));
        }
        if self.realizations < 2 {
            return Err(Error::invalid("realizations", "bootstrap needs at least 2 replicas"));
        }
        if !(self.tau_end.is_finite() && self.tau_end > 0.0) {
            return Err(Error::invalid("tau_end", "must be > 0"));
        }
        if self.bins < 2 {
            return Err(Error::invalid("bins", "must be >= 2"));
        }
        if self.fp_refinement == 0 {
            return Err(Error::invalid("fp_refinement", "must be >= 1"));
        }
        if self.bootstrap < 2 {
            return Err(Error::invalid("bootstrap", "must be >= 2"));
        }
        self.diffusion.validate()?;
        self.compromise.validate()?;
        self.initial.validate()
    }

    /// Kinetic diffusion function at `gamma` (the regularized square root
    /// follows the sweep parameter).
    pub fn diffusion_at(&self, gamma: f64) -> DiffusionFunction {
        match &self.diffusion {
            DiffusionFunction::SqrtRegularized { p, .. } => DiffusionFunction::SqrtRegularized { p: *p, gamma },
            d => d.clone(),
        }
    }

    /// Diffusion function of the limiting equation.
    pub fn limit_diffusion(&self) -> DiffusionFunction {
        match &self.diffusion {
            DiffusionFunction::SqrtRegularized { .. } => DiffusionFunction::SqrtOneMinusWSquared,
            d => d.clone(),
        }
    }

    fn noise_at(&self, gamma: f64, sigma2: f64) -> Result<(NoiseModel, bool)> {
        let diffusion = self.diffusion_at(gamma);
        match self.noise {
            SweepNoise::Lambda => {
                let d = default_noise(&KineticParams::new(gamma, sigma2)?, &diffusion)?;
                Ok((d.model, d.clipped))
            }
            SweepNoise::Saturated => {
                let a = max_noise_halfwidth(&diffusion, gamma, None)?;
                Ok((NoiseModel::UniformSymmetric { half_width: a }, false))
            }
        }
    }

    fn sim_config(&self, gamma: f64, noise: NoiseModel, sigma2: f64, seed: u64) -> Result<SimConfig> {
        let t_end = (self.tau_end / gamma).ceil();
        Ok(SimConfig {
            n: self.n,
            params: KineticParams::new(gamma, sigma2)?,
            compromise: self.compromise.clone(),
            diffusion: self.diffusion_at(gamma),
            noise,
            initial: self.initial,
            t_end,
            record_every: (t_end / 10.0).max(1.0),
            histogram_bins: self.bins,
            realizations: self.realizations,
            seed,
            snapshots: true,
        })
    }
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    /// Variance of the noise law actually sampled.
    pub sigma2: f64,
    pub effective_lambda: f64,
    pub clipped: bool,
    pub l1_to_fp: f64,
    pub l1_to_closed_form: Option<f64>,
    pub w1_to_fp: f64,
    pub w1_to_closed_form: Option<f64>,
    /// Bootstrap standard errors of the distances in the sweep metric.
    pub se_to_fp: f64,
    pub se_to_closed_form: Option<f64>,
    pub rejected_fraction: f64,
    /// Distance between the last two pooled checkpoints.
    pub checkpoint_distance: f64,
    /// Mean bootstrap distance of the pooled histogram from itself.
    pub noise_floor: f64,
    pub stationary: bool,
    pub runtime_seconds: f64,
    #[serde(skip)]
    pub pooled: Option<DensityGrid>,
}

impl SweepRow {
    pub fn distance_to_fp(&self, metric: Metric) -> f64 {
        match metric {
            Metric::L1 => self.l1_to_fp,
            Metric::Wasserstein1 => self.w1_to_fp,
        }
    }

    pub fn distance_to_closed_form(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::L1 => self.l1_to_closed_form,
            Metric::Wasserstein1 => self.w1_to_closed_form,
        }
    }

    /// Closed-form distance where available, else distance to the FP profile.
    pub fn verdict_distance(&self, metric: Metric) -> (f64, f64) {
        match (self.distance_to_closed_form(metric), self.se_to_closed_form) {
            (Some(d), Some(se)) => (d, se),
            _ => (self.distance_to_fp(metric), self.se_to_fp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub gamma: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Distances non-increasing along the sweep within one standard error.
    pub monotone: bool,
    /// Indices `k` where `d[k+1] > d[k] + max(se[k], se[k+1])`.
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<Skipped>,
    pub verdict: Verdict,
}

/// `d_{k+1} <= d_k + max(se_k, se_{k+1})` for consecutive rows.
pub fn monotonicity_verdict(distances: &[(f64, f64)]) -> Verdict {
    let violations: Vec<usize> = distances
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].0 > w[0].0 + w[0].1.max(w[1].1))
        .map(|(k, _)| k)
        .collect();
    Verdict { monotone: violations.is_empty(), violations }
}

/// Long-time Fokker-Planck profile with `lambda`, coarsened to `bins`.
pub fn fp_reference(
    diffusion: &DiffusionFunction,
    compromise: &CompromiseFunction,
    lambda: f64,
    initial: &InitialCondition,
    bins: usize,
    refinement: usize,
) -> Result<DensityGrid> {
    let equation = if compromise.is_constant() {
        FpEquation::Full { diffusion: diffusion.clone(), lambda }
    } else {
        FpEquation::GeneralP { diffusion: diffusion.clone(), lambda, compromise: compromise.clone() }
    };
    let init = initial.grid(bins * refinement)?;
    let sol = fp_solve(&equation, &init, FP_LONG_TIME, FP_LONG_TIME, FpOptions::default())?;
    sol.grid.coarsen(refinement)
}

/// Cell averages of the closed-form steady state, when one exists (`P`
/// constant and a diffusion function with a closed form).
pub fn closed_form_reference(
    diffusion: &DiffusionFunction,
    compromise: &CompromiseFunction,
    lambda: f64,
    m: f64,
    bins: usize,
) -> Result<Option<DensityGrid>> {
    if !compromise.is_constant() {
        return Ok(None);
    }
    let Ok(d) = SteadyDiffusion::try_from(diffusion) else {
        return Ok(None);
    };
    let Ok(spec) = StationarySpec::new(d, m, lambda) else {
        return Ok(None);
    };
    StationaryDensity::new(spec, 1e-12)?.cell_averages(bins).map(Some)
}

fn average(grids: &[&DensityGrid]) -> Result<DensityGrid> {
    let k = grids[0].len();
    let mut v = vec![0.0; k];
    for g in grids {
        v.iter_mut().zip(g.values()).for_each(|(a, b)| *a += b);
    }
    DensityGrid::normalized(v)
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Bootstrap over replicas: resample the replica histograms with
/// replacement and pool. Returns the standard error of the distance to each
/// reference and the mean distance of the resampled pools from `pooled`.
fn bootstrap<R: Rng>(
    out: &SimOutput,
    references: &[&DensityGrid],
    metric: Metric,
    resamples: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let r = out.replica_histograms.len();
    let mut samples = vec![Vec::with_capacity(resamples); references.len()];
    let mut floor = 0.0;
    for _ in 0..resamples {
        let pick: Vec<&DensityGrid> = (0..r).map(|_| &out.replica_histograms[rng.random_range(0..r)]).collect();
        let pool = average(&pick)?;
        for (s, reference) in samples.iter_mut().zip(references) {
            s.push(distance(&pool, reference, metric)?);
        }
        floor += l1_distance(&pool, &out.pooled)? / resamples as f64;
    }
    Ok((samples.iter().map(|s| std_dev(s)).collect(), floor))
}

/// Runs the kinetic model at each `gamma` and compares its pooled final
/// histogram with the limiting profiles.
pub fn run_sweep(config: &SweepConfig, exec: Execution) -> Result<SweepReport> {
    config.validate()?;
    let m0 = config.initial.mean();
    let limit_d = config.limit_diffusion();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (k, &gamma) in config.gammas.iter().enumerate() {
        let start = Instant::now();
        let (noise, clipped) = config.noise_at(gamma, config.lambda * gamma)?;
        if noise.support_halfwidth() < MIN_NOISE_HALFWIDTH {
            skipped.push(Skipped { gamma, reason: "noise support collapsed".into() });
            log::warn!("gamma = {gamma}: admissible noise support collapsed, skipped");
            continue;
        }
        let sigma2 = noise.variance();
        let effective_lambda = sigma2 / gamma;
        let sim = config.sim_config(gamma, noise, sigma2, derive_key(config.seed, k as u64))?;
        let out = simulate(&sim, exec)?;

        let fp = fp_reference(&limit_d, &config.compromise, effective_lambda, &config.initial, config.bins, config.fp_refinement)?;
        let closed = closed_form_reference(&limit_d, &config.compromise, effective_lambda, m0, config.bins)?;

        let mut references = vec![&fp];
        if let Some(c) = &closed {
            references.push(c);
        }
        let mut rng = stream(derive_key(config.seed, BOOTSTRAP_TAG), k as u64);
        let (se, noise_floor) = bootstrap(&out, &references, config.metric, config.bootstrap, &mut rng)?;

        let n_snap = out.snapshots.len();
        let checkpoint_distance = if n_snap >= 2 {
            l1_distance(&out.snapshots[n_snap - 2], &out.snapshots[n_snap - 1])?
        } else {
            f64::INFINITY
        };

        let pooled = &out.pooled;
        rows.push(SweepRow {
            gamma,
            sigma2,
            effective_lambda,
            clipped,
            l1_to_fp: l1_distance(pooled, &fp)?,
            l1_to_closed_form: closed.as_ref().map(|c| l1_distance(pooled, c)).transpose()?,
            w1_to_fp: w1_distance(pooled, &fp)?,
            w1_to_closed_form: closed.as_ref().map(|c| w1_distance(pooled, c)).transpose()?,
            se_to_fp: se[0],
            se_to_closed_form: se.get(1).copied(),
            rejected_fraction: out.rejected_fraction,
            checkpoint_distance,
            noise_floor,
            stationary: checkpoint_distance < 2.0 * noise_floor,
            runtime_seconds: start.elapsed().as_secs_f64(),
            pooled: Some(out.pooled.clone()),
        });
    }
    let distances: Vec<(f64, f64)> = rows.iter().map(|r| r.verdict_distance(config.metric)).collect();
    let verdict = monotonicity_verdict(&distances);
    Ok(SweepReport { rows, skipped, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    DiffusionDominated,
    CompromiseDominated,
}

/// Which unbalanced limit a run with `sigma^2 = lambda gamma^alpha` sits
/// closer to. Reported only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeProbe {
    pub gamma: f64,
    pub alpha: f64,
    pub sigma2: f64,
    pub clipped: bool,
    pub distance_to_pure_diffusion: f64,
    pub distance_to_pure_drift: f64,
    pub closer: Regime,
}

/// Runs the kinetic model at one `gamma` with `sigma^2 = lambda gamma^alpha`
/// and compares it at `tau_end` with the pure-diffusion equation (with
/// `lambda_eff = sigma^2 / gamma`) and the pure-drift equation, both started
/// from the same initial law.
pub fn regime_probe(config: &SweepConfig, gamma: f64, alpha: f64, exec: Execution) -> Result<RegimeProbe> {
    config.validate()?;
    KineticParams::new(gamma, 0.0)?;
    let requested = config.lambda * gamma.powf(alpha);
    let (noise, clipped) = config.noise_at(gamma, requested)?;
    let sigma2 = noise.variance();
    let sim = config.sim_config(gamma, noise, sigma2, derive_key(config.seed, alpha.to_bits()))?;
    let out = simulate(&sim, exec)?;
    let tau = sim.t_end * gamma;

    let cells = config.bins * config.fp_refinement;
    let init = config.initial.grid(cells)?;
    let no_stop = FpOptions { dt: None, steady_tol: None };
    let diffusion_eq = FpEquation::PureDiffusion { diffusion: config.limit_diffusion(), lambda: sigma2 / gamma };
    let drift_eq = FpEquation::PureDrift { compromise: config.compromise.clone() };
    let diff = fp_solve(&diffusion_eq, &init, tau, tau, no_stop)?.grid.coarsen(config.fp_refinement)?;
    let drift = fp_solve(&drift_eq, &init, tau, tau, no_stop)?.grid.coarsen(config.fp_refinement)?;
    let d_diff = distance(&out.pooled, &diff, Metric::Wasserstein1)?;
    let d_drift = distance(&out.pooled, &drift, Metric::Wasserstein1)?;
    Ok(RegimeProbe {
        gamma,
        alpha,
        sigma2,
        clipped,
        distance_to_pure_diffusion: d_diff,
        distance_to_pure_drift: d_drift,
        closer: if d_diff <= d_drift { Regime::DiffusionDominated } else { Regime::CompromiseDominated },
    })
}

/// Effective `lambda` of the regularized square-root diffusion with noise
/// uniform on the whole admissible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedLambda {
    pub gamma: f64,
    pub p: f64,
    /// `(1 - gamma) sqrt(gamma^p / (1 + gamma^p))`
    pub a_gamma: f64,
    /// Variance of the uniform law, by quadrature.
    pub sigma2: f64,
    pub effective_lambda: f64,
}

pub fn regularized_sqrt_lambda(gamma: f64, p: f64) -> Result<RegularizedLambda> {
    let d = DiffusionFunction::sqrt_regularized(p, gamma)?;
    let a = max_noise_halfwidth(&d, gamma, None)?;
    let density = 0.5 / a;
    let sigma2 = crate::quadrature::integrate(|x| x * x * density, -a, a, 0.0, 1e-14)?.value;
    Ok(RegularizedLambda { gamma, p, a_gamma: a, sigma2, effective_lambda: sigma2 / gamma })
}

/// Whether `|lambda - 1|` shrinks strictly along `gammas`.
pub fn approaches_one_monotonically(values: &[RegularizedLambda]) -> bool {
    values.windows(2).all(|w| (w[1].effective_lambda - 1.0).abs() < (w[0].effective_lambda - 1.0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(cells: usize, j: usize) -> DensityGrid {
        let mut v = vec![0.0; cells];
        v[j] = 1.0;
        DensityGrid::normalized(v).unwrap()
    }

    #[test]
    fn distances_of_simple_grids() {
        let u = DensityGrid::uniform(400).unwrap();
        assert_eq!(l1_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(w1_distance(&u, &u).unwrap(), 0.0);

        // point masses in the cells starting at 0 and at 0.5
        let a = point(400, 200);
        let b = point(400, 300);
        let w1 = w1_distance(&a, &b).unwrap();
        assert!((w1 - 0.5).abs() <= 0.005 + 1e-12, "{w1}");
        assert!((w1_distance(&b, &a).unwrap() - w1).abs() < 1e-15);

        // uniform vs a one-cell mass: (K-1) cells at 1/2 plus |1/h - 1/2| h
        let h = 2.0 / 400.0;
        let direct = 399.0 * 0.5 * h + (1.0 / h - 0.5) * h;
        assert!((l1_distance(&u, &a).unwrap() - direct).abs() < 1e-12);
        assert!(l1_distance(&u, &DensityGrid::uniform(200).unwrap()).is_err());
    }

    #[test]
    fn verdict_allows_one_standard_error() {
        let v = monotonicity_verdict(&[(0.10, 0.01), (0.105, 0.01), (0.05, 0.01)]);
        assert!(v.monotone);
        let v = monotonicity_verdict(&[(0.10, 0.01), (0.12, 0.01), (0.05, 0.01)]);
        assert_eq!(v.violations, vec![0]);
    }

    #[test]
    fn regularized_lambda_matches_the_bound() {
        let r = regularized_sqrt_lambda(0.001, 2.0 / 3.0).unwrap();
        assert!((r.a_gamma - 0.099_404_215_301_978).abs() < 1e-14);
        assert!((r.sigma2 - r.a_gamma * r.a_gamma / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_validation() {
        let mut c = SweepConfig {
            gammas: vec![0.1, 0.05],
            lambda: 0.5,
            diffusion: DiffusionFunction::OneMinusWSquared,
            compromise: CompromiseFunction::Constant,
            n: 100,
            realizations: 2,
            tau_end: 1.0,
            metric: Metric::L1,
            bins: 10,
            initial: InitialCondition::default(),
            seed: 1,
            noise: SweepNoise::Lambda,
            fp_refinement: 2,
            bootstrap: 10,
        };
        assert!(c.validate().is_ok());
        c.gammas = vec![0.05, 0.1];
        assert!(c.validate().is_err());
        c.gammas = vec![0.7];
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("gamma must lie in (0, 1/2)"), "{e}");
    }
}
