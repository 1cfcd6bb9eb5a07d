//! Run configuration, manifests and CSV output.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! [model]
//! gamma = 0.1
//! lambda = 0.5                # or sigma2 = 0.05
//! compromise = "constant"     # constant | one_minus_w2 | table
//! diffusion = "one_minus_w2"  # one_minus_abs | one_minus_w2 | sqrt_one_minus_w2
//!                             # | sqrt_regularized (with p) | table
//!
//! [noise]                     # optional; default: uniform with variance sigma2
//! kind = "uniform_symmetric"
//! half_width = 0.3
//!
//! [initial]
//! kind = "uniform"
//! lo = -1.0
//! hi = 1.0
//!
//! [numerics]
//! n = 100000
//! t_end = 500
//! seed = 7
//! ```
//!
//! Every command writes `manifest.toml` next to its outputs. The manifest
//! holds the configuration with all defaults filled in, so replaying it
//! reproduces the outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fokker_planck::{closed_moment_odes, fp_solve, stationary_second_moment, FpEquation, FpOptions};
use crate::grid::DensityGrid;
use crate::limit_lab::{
    regime_probe, regularized_sqrt_lambda, run_sweep, Metric, RegimeProbe, SweepConfig, SweepNoise, SweepRow,
};
use crate::mc::{moment_law_check, simulate, InitialCondition, MomentRecord, SimConfig};
use crate::noise::{default_noise, NoiseModel};
use crate::opinion::{CompromiseFunction, DiffusionFunction, KineticParams, Tabulated};
use crate::stationary::{
    interior_points, stationary_ode_residual, EndpointBehavior, StationaryDensity, StationarySpec, SteadyDiffusion,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    FpSolve,
    SteadyState,
    LimitSweep,
    MomentCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FpSolve => "fp-solve",
            Command::SteadyState => "steady-state",
            Command::LimitSweep => "limit-sweep",
            Command::MomentCheck => "moment-check",
        }
    }
}

fn default_compromise() -> String {
    "constant".into()
}

fn default_diffusion() -> String {
    "one_minus_w2".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Required by `simulate` and by the kinetic part of `moment-check`.
    pub gamma: Option<f64>,
    /// `sigma2 / gamma`; give this or `sigma2`.
    pub lambda: Option<f64>,
    pub sigma2: Option<f64>,
    #[serde(default = "default_compromise")]
    pub compromise: String,
    #[serde(default = "default_diffusion")]
    pub diffusion: String,
    /// Exponent of `sqrt_regularized`.
    pub p: Option<f64>,
    /// `P` on a uniform grid of `|w|` in `[0, 1]`, for `compromise = "table"`.
    pub compromise_table: Option<Vec<f64>>,
    /// `D` on a uniform grid of `|w|` in `[0, 1]`, for `diffusion = "table"`.
    pub diffusion_table: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub n: usize,
    /// Kinetic horizon in sweeps (one sweep is one unit of time).
    pub t_end: f64,
    pub record_every: f64,
    pub bins: usize,
    pub realizations: usize,
    pub seed: u64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        NumericsSection { n: 10_000, t_end: 100.0, record_every: 1.0, bins: 100, realizations: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpSection {
    /// full | general_p | pure_diffusion | pure_drift | sznajd_drift
    pub equation: String,
    pub cells: usize,
    pub tau_end: f64,
    pub record_every: f64,
    pub dt: Option<f64>,
    /// Early-stop threshold; 0 disables the test.
    pub steady_tol: f64,
}

impl Default for FpSection {
    fn default() -> Self {
        FpSection {
            equation: "full".into(),
            cells: 400,
            tau_end: 10.0,
            record_every: 0.1,
            dt: None,
            steady_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadySection {
    /// Mean of the steady state; defaults to the mean of `[initial]`.
    pub m: Option<f64>,
    pub cells: usize,
    pub residual_points: usize,
    pub tolerance: f64,
}

impl Default for SteadySection {
    fn default() -> Self {
        SteadySection { m: None, cells: 200, residual_points: 100, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub gammas: Vec<f64>,
    pub tau_end: f64,
    pub metric: Metric,
    pub noise: SweepNoise,
    pub fp_refinement: usize,
    pub bootstrap: usize,
    /// Exponents for `sigma^2 = lambda gamma^alpha` probes at the last gamma.
    pub regime_alphas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            gammas: vec![0.1, 0.05, 0.02, 0.01],
            tau_end: 6.0,
            metric: Metric::L1,
            noise: SweepNoise::Lambda,
            fp_refinement: 4,
            bootstrap: 200,
            regime_alphas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Also write a gnuplot script for the CSV files.
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub fp: FpSection,
    #[serde(default)]
    pub steady: SteadySection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Configuration with derived quantities filled in and checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub params: Option<KineticParams>,
    pub lambda: f64,
    pub compromise: CompromiseFunction,
    pub diffusion: DiffusionFunction,
    /// Noise law for kinetic runs (needs `gamma`).
    pub noise: Option<NoiseModel>,
    pub noise_clipped: bool,
}

fn parse_table(field: &str, table: &Option<Vec<f64>>) -> Result<Tabulated> {
    match table {
        Some(v) => Tabulated::new(v.clone()).map_err(|e| Error::invalid(field, e.to_string())),
        None => Err(Error::invalid(field, "required for a tabulated function")),
    }
}

pub fn parse_compromise(name: &str, table: &Option<Vec<f64>>) -> Result<CompromiseFunction> {
    let p = match name {
        "constant" => CompromiseFunction::Constant,
        "one_minus_w2" | "one_minus_w_squared" => CompromiseFunction::OneMinusWSquared,
        "table" => CompromiseFunction::Table(parse_table("model.compromise_table", table)?),
        other => {
            return Err(Error::invalid(
                "model.compromise",
                format!("unknown function '{other}' (constant | one_minus_w2 | table)"),
            ))
        }
    };
    p.validate()?;
    Ok(p)
}

pub fn parse_diffusion(name: &str, p: Option<f64>, gamma: Option<f64>, table: &Option<Vec<f64>>) -> Result<DiffusionFunction> {
    let d = match name {
        "one_minus_abs" => DiffusionFunction::OneMinusAbs,
        "one_minus_w2" | "one_minus_w_squared" => DiffusionFunction::OneMinusWSquared,
        "sqrt_one_minus_w2" | "sqrt_one_minus_w_squared" => DiffusionFunction::SqrtOneMinusWSquared,
        "sqrt_regularized" => {
            let p = p.ok_or_else(|| Error::invalid("model.p", "required for sqrt_regularized"))?;
            // the sweep replaces gamma; any valid placeholder works without one
            DiffusionFunction::sqrt_regularized(p, gamma.unwrap_or(0.25))?
        }
        "table" => DiffusionFunction::Table(parse_table("model.diffusion_table", table)?),
        other => {
            return Err(Error::invalid(
                "model.diffusion",
                format!(
                    "unknown function '{other}' \
                     (one_minus_abs | one_minus_w2 | sqrt_one_minus_w2 | sqrt_regularized | table)"
                ),
            ))
        }
    };
    d.validate()?;
    Ok(d)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks the whole configuration and derives `lambda`, `sigma2` and the
    /// default noise law.
    pub fn resolve(&self) -> Result<Resolved> {
        let m = &self.model;
        let positive = |field: &str, x: Option<f64>| -> Result<()> {
            match x {
                Some(v) if !(v.is_finite() && v >= 0.0) => Err(Error::invalid(field, "must be finite and >= 0")),
                _ => Ok(()),
            }
        };
        positive("model.lambda", m.lambda)?;
        positive("model.sigma2", m.sigma2)?;
        let params = match m.gamma {
            Some(gamma) => {
                let sigma2 = match (m.sigma2, m.lambda) {
                    (Some(s), Some(l)) => {
                        if (l * gamma - s).abs() > 1e-12 * s.max(1e-300) {
                            return Err(Error::invalid("model.lambda", "inconsistent with sigma2 / gamma"));
                        }
                        s
                    }
                    (Some(s), None) => s,
                    (None, Some(l)) => l * gamma,
                    (None, None) => return Err(Error::invalid("model.lambda", "give lambda or sigma2")),
                };
                Some(KineticParams::new(gamma, sigma2)?)
            }
            None => None,
        };
        let lambda = match (params, m.lambda) {
            (Some(p), _) => p.lambda(),
            (None, Some(l)) => l,
            (None, None) => return Err(Error::invalid("model.lambda", "required without gamma")),
        };
        let compromise = parse_compromise(&m.compromise, &m.compromise_table)?;
        let diffusion = parse_diffusion(&m.diffusion, m.p, m.gamma, &m.diffusion_table)?;
        self.initial.validate()?;

        let (noise, noise_clipped) = match (params, self.noise) {
            (Some(_), Some(n)) => {
                n.validate()?;
                (Some(n), false)
            }
            (Some(p), None) => {
                let d = default_noise(&p, &diffusion)?;
                (Some(d.model), d.clipped)
            }
            (None, _) => (None, false),
        };
        let n = &self.numerics;
        if n.n < 2 {
            return Err(Error::invalid("numerics.n", "ensemble needs at least 2 agents"));
        }
        if !(n.t_end.is_finite() && n.t_end > 0.0) {
            return Err(Error::invalid("numerics.t_end", "must be > 0"));
        }
        if !(n.record_every.is_finite() && n.record_every > 0.0) {
            return Err(Error::invalid("numerics.record_every", "must be > 0"));
        }
        if n.bins < 2 {
            return Err(Error::invalid("numerics.bins", "must be >= 2"));
        }
        if n.realizations == 0 {
            return Err(Error::invalid("numerics.realizations", "must be >= 1"));
        }
        let fp = &self.fp;
        if fp.cells < 2 {
            return Err(Error::invalid("fp.cells", "must be >= 2"));
        }
        if !(fp.tau_end.is_finite() && fp.tau_end > 0.0) {
            return Err(Error::invalid("fp.tau_end", "must be > 0"));
        }
        if !(fp.record_every.is_finite() && fp.record_every > 0.0) {
            return Err(Error::invalid("fp.record_every", "must be > 0"));
        }
        if !(fp.steady_tol.is_finite() && fp.steady_tol >= 0.0) {
            return Err(Error::invalid("fp.steady_tol", "must be >= 0"));
        }
        if let Some(dt) = fp.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid("fp.dt", "must be > 0"));
            }
        }
        let s = &self.steady;
        if s.cells < 2 || s.residual_points == 0 || !(s.tolerance > 0.0) {
            return Err(Error::invalid("steady", "cells >= 2, residual_points >= 1 and tolerance > 0 required"));
        }
        Ok(Resolved { params, lambda, compromise, diffusion, noise, noise_clipped })
    }

    /// The configuration as it is echoed into the manifest: `sigma2` in
    /// place of `lambda` when `gamma` is known, and the noise law spelled out.
    pub fn resolved_echo(&self) -> Result<Config> {
        let r = self.resolve()?;
        let mut c = self.clone();
        if let Some(p) = r.params {
            c.model.sigma2 = Some(p.sigma2());
            c.model.lambda = None;
            c.noise = r.noise;
        }
        Ok(c)
    }

    pub fn sim_config(&self, r: &Resolved) -> Result<SimConfig> {
        let params = r.params.ok_or_else(|| Error::invalid("model.gamma", "required for kinetic runs"))?;
        let n = &self.numerics;
        let config = SimConfig {
            n: n.n,
            params,
            compromise: r.compromise.clone(),
            diffusion: r.diffusion.clone(),
            noise: r.noise.unwrap_or_else(NoiseModel::none),
            initial: self.initial,
            t_end: n.t_end,
            record_every: n.record_every,
            histogram_bins: n.bins,
            realizations: n.realizations,
            seed: n.seed,
            snapshots: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn fp_equation(&self, r: &Resolved) -> Result<FpEquation> {
        let (diffusion, lambda) = (r.diffusion.clone(), r.lambda);
        let eq = match self.fp.equation.as_str() {
            "full" => FpEquation::Full { diffusion, lambda },
            "general_p" => FpEquation::GeneralP { diffusion, lambda, compromise: r.compromise.clone() },
            "pure_diffusion" => FpEquation::PureDiffusion { diffusion, lambda },
            "pure_drift" => FpEquation::PureDrift { compromise: r.compromise.clone() },
            "sznajd_drift" => FpEquation::SznajdDrift,
            other => {
                return Err(Error::invalid(
                    "fp.equation",
                    format!("unknown equation '{other}' (full | general_p | pure_diffusion | pure_drift | sznajd_drift)"),
                ))
            }
        };
        eq.validate()?;
        Ok(eq)
    }

    pub fn stationary_spec(&self, r: &Resolved) -> Result<StationarySpec> {
        let d = SteadyDiffusion::try_from(&r.diffusion)?;
        StationarySpec::new(d, self.steady.m.unwrap_or_else(|| self.initial.mean()), r.lambda)
    }

    pub fn sweep_config(&self, r: &Resolved) -> Result<SweepConfig> {
        let s = &self.sweep;
        let config = SweepConfig {
            gammas: s.gammas.clone(),
            lambda: r.lambda,
            diffusion: r.diffusion.clone(),
            compromise: r.compromise.clone(),
            n: self.numerics.n,
            realizations: self.numerics.realizations,
            tau_end: s.tau_end,
            metric: s.metric,
            bins: self.numerics.bins,
            initial: self.initial,
            seed: self.numerics.seed,
            noise: s.noise,
            fp_refinement: s.fp_refinement,
            bootstrap: s.bootstrap,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: Command,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub seed: u64,
    pub config: Config,
}

impl RunManifest {
    pub fn new(command: Command, config: &Config) -> Result<Self> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(RunManifest {
            command,
            version: VERSION.into(),
            timestamp,
            seed: config.numerics.seed,
            config: config.resolved_echo()?,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        write_text(path, &text)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes a header and rows of preformatted fields.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub const SERIES_HEADER: [&str; 5] = ["t", "mean", "second_moment", "c_f", "rejected_fraction"];
pub const GRID_HEADER: [&str; 2] = ["cell_center", "density"];
pub const SWEEP_HEADER: [&str; 8] = [
    "gamma",
    "sigma2",
    "effective_lambda",
    "L1_to_fp",
    "L1_to_closed_form",
    "W1_to_fp",
    "rejected_fraction",
    "runtime_seconds",
];

pub fn write_series(path: &Path, series: &[MomentRecord]) -> Result<()> {
    write_csv(
        path,
        &SERIES_HEADER,
        series.iter().map(|r| {
            [r.t, r.mean, r.second_moment, r.c_f, r.rejected_fraction].into_iter().map(fmt_f64).collect()
        }),
    )
}

pub fn write_grid(path: &Path, grid: &DensityGrid) -> Result<()> {
    write_csv(
        path,
        &GRID_HEADER,
        grid.centers().zip(grid.values()).map(|(w, g)| vec![fmt_f64(w), fmt_f64(*g)]),
    )
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv(
        path,
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.gamma),
                fmt_f64(r.sigma2),
                fmt_f64(r.effective_lambda),
                fmt_f64(r.l1_to_fp),
                fmt_opt(r.l1_to_closed_form),
                fmt_f64(r.w1_to_fp),
                fmt_f64(r.rejected_fraction),
                fmt_f64(r.runtime_seconds),
            ]
        }),
    )
}

fn write_regime(path: &Path, probes: &[RegimeProbe]) -> Result<()> {
    write_csv(
        path,
        &["gamma", "alpha", "sigma2", "clipped", "W1_to_pure_diffusion", "W1_to_pure_drift", "closer"],
        probes.iter().map(|p| {
            vec![
                fmt_f64(p.gamma),
                fmt_f64(p.alpha),
                fmt_f64(p.sigma2),
                p.clipped.to_string(),
                fmt_f64(p.distance_to_pure_diffusion),
                fmt_f64(p.distance_to_pure_drift),
                format!("{:?}", p.closer),
            ]
        }),
    )
}

/// Gnuplot script plotting the CSV files of one run.
pub fn gnuplot_script(command: Command) -> String {
    let head = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n";
    let body = match command {
        Command::Simulate => {
            "set output 'moments.png'\nset logscale y\nplot 'moments.csv' using 1:4 with lines\n\
             unset logscale y\nset output 'histogram.png'\nplot 'histogram.csv' using 1:2 with steps\n"
        }
        Command::FpSolve => {
            "set output 'fp_grid.png'\nplot 'fp_grid.csv' using 1:2 with lines\n\
             set output 'fp_moments.png'\nplot 'fp_moments.csv' using 1:3 with lines\n"
        }
        Command::SteadyState => "set output 'steady_state.png'\nplot 'steady_state.csv' using 1:2 with lines\n",
        Command::LimitSweep => {
            "set output 'sweep.png'\nset logscale xy\nplot 'sweep.csv' using 1:5 with linespoints, \
             '' using 1:4 with linespoints\n"
        }
        Command::MomentCheck => {
            "set output 'moment_check.png'\nplot 'moment_check.csv' using 1:2 with lines, '' using 1:3 with lines\n"
        }
    };
    format!("{head}{body}")
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    effective_lambda: f64,
    noise_clipped: bool,
    rejected_fraction: f64,
    final_mean: f64,
    final_c_f: f64,
}

#[derive(Debug, Serialize)]
struct FpSummary {
    steps: usize,
    steady_at: Option<f64>,
    last_residual: f64,
    max_mass_error: f64,
    final_mean: f64,
    final_second_moment: f64,
}

#[derive(Debug, Serialize)]
struct SteadySummary {
    m: f64,
    lambda: f64,
    normalization_constant: f64,
    quadrature_error: f64,
    ode_residual: f64,
    mean: f64,
    second_moment: f64,
    left_endpoint: EndpointBehavior,
    right_endpoint: EndpointBehavior,
    peaks: Vec<f64>,
    limit_below_zero: f64,
    limit_above_zero: f64,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    monotone: bool,
    violations: Vec<usize>,
    skipped: Vec<f64>,
    stationary: Vec<bool>,
}

#[derive(Debug, Serialize)]
struct MomentSummary {
    lambda: f64,
    m0: f64,
    max_abs_difference: f64,
    stationary_second_moment: f64,
    fitted_rate: Option<f64>,
    theoretical_rate: Option<f64>,
    continuum_rate: Option<f64>,
    relative_deviation: Option<f64>,
}

fn write_summary<T: Serialize>(path: &Path, summary: &T) -> Result<()> {
    let text = toml::to_string_pretty(summary).map_err(|e| Error::Config(e.to_string()))?;
    write_text(path, &text)
}

/// Files written by a run.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    fn add(&mut self, path: PathBuf) -> &Path {
        self.files.push(path);
        self.files.last().map(PathBuf::as_path).expect("just pushed")
    }
}

/// Runs `command` and writes its outputs and manifest into `out_dir`.
pub fn execute(command: Command, config: &Config, out_dir: &Path, exec: Execution) -> Result<RunOutcome> {
    let resolved = config.resolve()?;
    fs::create_dir_all(out_dir).map_err(|source| Error::Io { path: out_dir.to_path_buf(), source })?;
    let mut out = RunOutcome::default();
    RunManifest::new(command, config)?.write(out.add(out_dir.join("manifest.toml")))?;

    match command {
        Command::Simulate => {
            let sim = config.sim_config(&resolved)?;
            let result = simulate(&sim, exec)?;
            write_series(out.add(out_dir.join("moments.csv")), &result.series)?;
            write_grid(out.add(out_dir.join("histogram.csv")), &result.pooled)?;
            let last = result.series.last().expect("series starts with t = 0");
            write_summary(
                out.add(out_dir.join("summary.toml")),
                &SimulateSummary {
                    effective_lambda: result.effective_lambda,
                    noise_clipped: resolved.noise_clipped,
                    rejected_fraction: result.rejected_fraction,
                    final_mean: last.mean,
                    final_c_f: last.c_f,
                },
            )?;
        }
        Command::FpSolve => {
            let eq = config.fp_equation(&resolved)?;
            let init = config.initial.grid(config.fp.cells)?;
            let options = FpOptions {
                dt: config.fp.dt,
                steady_tol: (config.fp.steady_tol > 0.0).then_some(config.fp.steady_tol),
            };
            let sol = fp_solve(&eq, &init, config.fp.tau_end, config.fp.record_every, options)?;
            write_grid(out.add(out_dir.join("fp_grid.csv")), &sol.grid)?;
            write_series(out.add(out_dir.join("fp_moments.csv")), &sol.series)?;
            write_summary(
                out.add(out_dir.join("summary.toml")),
                &FpSummary {
                    steps: sol.steps,
                    steady_at: sol.steady_at,
                    last_residual: sol.last_residual,
                    max_mass_error: sol.max_mass_error,
                    final_mean: sol.grid.mean(),
                    final_second_moment: sol.grid.second_moment(),
                },
            )?;
        }
        Command::SteadyState => {
            let spec = config.stationary_spec(&resolved)?;
            let density = StationaryDensity::new(spec, config.steady.tolerance)?;
            write_grid(out.add(out_dir.join("steady_state.csv")), &density.cell_averages(config.steady.cells)?)?;
            let (left, right) = spec.endpoint_behavior();
            let (below, above) = density.one_sided_limits_at_zero();
            write_summary(
                out.add(out_dir.join("summary.toml")),
                &SteadySummary {
                    m: spec.m,
                    lambda: spec.lambda,
                    normalization_constant: density.normalization_constant(),
                    quadrature_error: density.quadrature_error(),
                    ode_residual: stationary_ode_residual(&density, &interior_points(config.steady.residual_points))?,
                    mean: density.mean()?,
                    second_moment: density.second_moment()?,
                    left_endpoint: left,
                    right_endpoint: right,
                    peaks: density.peaks(4000),
                    limit_below_zero: below,
                    limit_above_zero: above,
                },
            )?;
        }
        Command::LimitSweep => {
            let sweep = config.sweep_config(&resolved)?;
            let report = run_sweep(&sweep, exec)?;
            write_sweep(out.add(out_dir.join("sweep.csv")), &report.rows)?;
            if !config.sweep.regime_alphas.is_empty() {
                let gamma = *sweep.gammas.last().expect("validated non-empty");
                let probes = config
                    .sweep
                    .regime_alphas
                    .iter()
                    .map(|&a| regime_probe(&sweep, gamma, a, exec))
                    .collect::<Result<Vec<_>>>()?;
                write_regime(out.add(out_dir.join("regime.csv")), &probes)?;
            }
            if let DiffusionFunction::SqrtRegularized { p, .. } = resolved.diffusion {
                let values = sweep
                    .gammas
                    .iter()
                    .map(|&g| regularized_sqrt_lambda(g, p))
                    .collect::<Result<Vec<_>>>()?;
                write_csv(
                    out.add(out_dir.join("regularized_lambda.csv")),
                    &["gamma", "a_gamma", "sigma2", "effective_lambda"],
                    values.iter().map(|v| {
                        vec![fmt_f64(v.gamma), fmt_f64(v.a_gamma), fmt_f64(v.sigma2), fmt_f64(v.effective_lambda)]
                    }),
                )?;
            }
            write_summary(
                out.add(out_dir.join("summary.toml")),
                &SweepSummary {
                    monotone: report.verdict.monotone,
                    violations: report.verdict.violations.clone(),
                    skipped: report.skipped.iter().map(|s| s.gamma).collect(),
                    stationary: report.rows.iter().map(|r| r.stationary).collect(),
                },
            )?;
        }
        Command::MomentCheck => {
            let lambda = resolved.lambda;
            let init = config.initial.grid(config.fp.cells)?;
            let (m0, m2_0) = (init.mean(), init.second_moment());
            let eq = FpEquation::Full { diffusion: DiffusionFunction::SqrtOneMinusWSquared, lambda };
            let options = FpOptions { dt: config.fp.dt, steady_tol: None };
            let sol = fp_solve(&eq, &init, config.fp.tau_end, config.fp.record_every, options)?;
            let ode_dt = config.fp.record_every / 100.0;
            let ode = closed_moment_odes(lambda, m0, m2_0, config.fp.tau_end, ode_dt)?;
            let ode_at = |tau: f64| {
                let k = ((tau / ode_dt).round() as usize).min(ode.len() - 1);
                ode[k].second_moment
            };
            let rows: Vec<(f64, f64, f64)> =
                sol.series.iter().map(|r| (r.t, r.second_moment, ode_at(r.t))).collect();
            let max_abs_difference = rows.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
            write_csv(
                out.add(out_dir.join("moment_check.csv")),
                &["tau", "fp_second_moment", "ode_second_moment", "abs_difference"],
                rows.iter().map(|(t, a, b)| vec![fmt_f64(*t), fmt_f64(*a), fmt_f64(*b), fmt_f64((a - b).abs())]),
            )?;

            // spread decay of the kinetic model when it is noise free with P = 1
            let mut fit = None;
            if let (Some(_), Some(noise)) = (resolved.params, resolved.noise) {
                if noise.is_zero() && resolved.compromise.is_constant() {
                    let sim = config.sim_config(&resolved)?;
                    let result = simulate(&sim, exec)?;
                    write_series(out.add(out_dir.join("moments.csv")), &result.series)?;
                    fit = Some(moment_law_check(&result.series, &sim)?);
                }
            }
            write_summary(
                out.add(out_dir.join("summary.toml")),
                &MomentSummary {
                    lambda,
                    m0,
                    max_abs_difference,
                    stationary_second_moment: stationary_second_moment(lambda, m0),
                    fitted_rate: fit.as_ref().map(|f| f.fitted_rate),
                    theoretical_rate: fit.as_ref().map(|f| f.theoretical_rate),
                    continuum_rate: fit.as_ref().map(|f| f.continuum_rate),
                    relative_deviation: fit.as_ref().map(|f| f.relative_deviation),
                },
            )?;
        }
    }
    if config.output.gnuplot {
        write_text(out.add(out_dir.join("plot.gp")), &gnuplot_script(command))?;
    }
    Ok(out)
}

/// Re-runs the command recorded in a manifest.
pub fn replay(manifest: &Path, out_dir: &Path, exec: Execution) -> Result<RunOutcome> {
    let m = RunManifest::from_file(manifest)?;
    execute(m.command, &m.config, out_dir, exec)
}
