//! Ensemble Monte Carlo for the homogeneous Boltzmann-type exchange model.
//!
//! One sweep draws a uniformly random perfect matching of the `N` agents
//! (shuffle, then read pairs off consecutively) and lets every pair interact
//! once, so a sweep is one unit of kinetic time. Proposals that leave
//! `[-1, 1]` are rejected and both agents keep their opinions.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::{bin_index, DensityGrid};
use crate::noise::NoiseModel;
use crate::opinion::{interact_raw, is_admissible, CompromiseFunction, DiffusionFunction, KineticParams, Opinion};
use crate::rng::{stream, StreamRng};

/// Minimum number of usable records for a decay-rate fit.
pub const MIN_FIT_RECORDS: usize = 10;

/// Spreads below this are treated as numerically collapsed and skipped by
/// the decay-rate fit.
pub const SPREAD_FLOOR: f64 = 1e-25;

/// Law of the initial opinions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Uniform { lo: f64, hi: f64 },
    /// Density `(1 + 3 mean w) / 2` on `[-1, 1]`, valid for `|mean| <= 1/3`.
    Linear { mean: f64 },
    Point { at: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Uniform { lo: -1.0, hi: 1.0 }
    }
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialCondition::Uniform { lo, hi } if !(-1.0 <= lo && lo < hi && hi <= 1.0) => {
                Err(Error::invalid("initial", "uniform needs -1 <= lo < hi <= 1"))
            }
            InitialCondition::Linear { mean } if !(mean.abs() <= 1.0 / 3.0) => {
                Err(Error::invalid("initial.mean", "linear density needs |mean| <= 1/3"))
            }
            InitialCondition::Point { at } if !(-1.0..=1.0).contains(&at) => {
                Err(Error::invalid("initial.at", "point must lie in [-1, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitialCondition::Uniform { lo, hi } => 0.5 * (lo + hi),
            InitialCondition::Linear { mean } => mean,
            InitialCondition::Point { at } => at,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialCondition::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            InitialCondition::Linear { mean } => {
                // inverse CDF of (1 + b w)/2, b = 3 mean
                let u: f64 = rng.random();
                let b = 3.0 * mean;
                let w = if b.abs() < 1e-12 {
                    2.0 * u - 1.0
                } else {
                    // b w^2/2 + w + 1 - b/2 - 2u = 0, root in [-1, 1]
                    let c = 1.0 - 0.5 * b - 2.0 * u;
                    -2.0 * c / (1.0 + (1.0 - 2.0 * b * c).max(0.0).sqrt())
                };
                w.clamp(-1.0, 1.0)
            }
            InitialCondition::Point { at } => at,
        }
    }

    /// Cell-averaged initial density. A point mass occupies its cell.
    pub fn grid(&self, cells: usize) -> Result<DensityGrid> {
        match *self {
            InitialCondition::Uniform { lo, hi } => {
                DensityGrid::from_density(cells, |w| if (lo..=hi).contains(&w) { 1.0 } else { 0.0 })
            }
            InitialCondition::Linear { mean } => DensityGrid::from_density(cells, |w| 0.5 * (1.0 + 3.0 * mean * w)),
            InitialCondition::Point { at } => {
                let mut v = vec![0.0; cells];
                v[bin_index(at, cells)] = 1.0;
                DensityGrid::normalized(v)
            }
        }
    }
}

/// Everything one kinetic simulation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub params: KineticParams,
    pub compromise: CompromiseFunction,
    pub diffusion: DiffusionFunction,
    pub noise: NoiseModel,
    pub initial: InitialCondition,
    pub t_end: f64,
    pub record_every: f64,
    pub histogram_bins: usize,
    pub realizations: usize,
    pub seed: u64,
    /// Keep a pooled histogram at every record time.
    #[serde(default)]
    pub snapshots: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "ensemble needs at least 2 agents"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("t_end", "must be > 0"));
        }
        if !(self.record_every.is_finite() && self.record_every > 0.0) {
            return Err(Error::invalid("record_every", "must be > 0"));
        }
        if self.histogram_bins < 2 {
            return Err(Error::invalid("histogram_bins", "must be >= 2"));
        }
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be >= 1"));
        }
        KineticParams::new(self.params.gamma(), self.params.sigma2())?;
        self.compromise.validate()?;
        self.diffusion.validate()?;
        self.noise.validate()?;
        self.initial.validate()
    }

    pub fn sweeps(&self) -> usize {
        (self.t_end - 1e-9).ceil().max(1.0) as usize
    }

    pub fn record_stride(&self) -> usize {
        (self.record_every.round() as usize).max(1)
    }

    /// `sigma^2 / gamma` of the noise law that is actually sampled.
    pub fn effective_lambda(&self) -> f64 {
        self.noise.variance() / self.params.gamma()
    }
}

/// Agent opinions plus the kinetic time.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    opinions: Vec<Opinion>,
    time: f64,
}

impl Ensemble {
    pub fn new(opinions: Vec<Opinion>) -> Result<Self> {
        if opinions.len() < 2 {
            return Err(Error::invalid("n", "ensemble needs at least 2 agents"));
        }
        Ok(Ensemble { opinions, time: 0.0 })
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&w| Opinion::new(w)).collect::<Result<_>>()?)
    }

    pub fn sample<R: Rng + ?Sized>(n: usize, initial: &InitialCondition, rng: &mut R) -> Result<Self> {
        initial.validate()?;
        Self::new((0..n).map(|_| Opinion::new_unchecked(initial.sample(rng))).collect())
    }

    pub fn opinions(&self) -> &[Opinion] {
        &self.opinions
    }

    pub fn len(&self) -> usize {
        self.opinions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opinions.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `(mean, spread)` with the spread accumulated about the mean.
    pub fn mean_and_spread(&self) -> (f64, f64) {
        let n = self.opinions.len() as f64;
        let mean = self.opinions.iter().map(|w| w.value()).sum::<f64>() / n;
        let spread = self
            .opinions
            .iter()
            .map(|w| {
                let d = w.value() - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, spread)
    }

    pub fn record(&self, rejected_fraction: f64) -> MomentRecord {
        let (mean, c_f) = self.mean_and_spread();
        MomentRecord {
            t: self.time,
            mean,
            second_moment: (c_f + mean * mean).min(1.0),
            c_f,
            rejected_fraction,
        }
    }

    fn counts(&self, bins: usize) -> Vec<u64> {
        let mut counts = vec![0u64; bins];
        for w in &self.opinions {
            counts[bin_index(w.value(), bins)] += 1;
        }
        counts
    }
}

/// Moments of the opinion distribution at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub t: f64,
    pub mean: f64,
    pub second_moment: f64,
    /// `second_moment - mean^2`
    pub c_f: f64,
    /// Share of proposals rejected since the previous record.
    pub rejected_fraction: f64,
}

pub type MomentSeries = Vec<MomentRecord>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepStats {
    pub pairs: usize,
    pub rejected: usize,
}

/// One sweep: `N/2` disjoint random pairs, each interacting once.
pub fn mc_step<R: Rng + ?Sized>(ensemble: &mut Ensemble, config: &SimConfig, rng: &mut R) -> SweepStats {
    let gamma = config.params.gamma();
    let (p, d, noise) = (&config.compromise, &config.diffusion, &config.noise);
    let noisy = !noise.is_zero();
    ensemble.opinions.shuffle(rng);
    let mut stats = SweepStats::default();
    for pair in ensemble.opinions.chunks_exact_mut(2) {
        let (eta, eta_star) = if noisy {
            (noise.sample(rng), noise.sample(rng))
        } else {
            (0.0, 0.0)
        };
        let (a, b) = interact_raw(pair[0].value(), pair[1].value(), gamma, p, d, eta, eta_star);
        stats.pairs += 1;
        if is_admissible(a, b) {
            pair[0] = Opinion::new_unchecked(a);
            pair[1] = Opinion::new_unchecked(b);
        } else {
            stats.rejected += 1;
        }
    }
    ensemble.time += 1.0;
    debug_assert!(ensemble.opinions.iter().all(|w| w.value().abs() <= 1.0));
    stats
}

/// Result of one replica.
#[derive(Debug, Clone)]
pub struct ReplicaOutput {
    pub series: MomentSeries,
    pub histogram: DensityGrid,
    pub final_counts: Vec<u64>,
    pub snapshot_counts: Vec<Vec<u64>>,
    pub stats: SweepStats,
}

pub fn run_replica(config: &SimConfig, replica: usize) -> Result<ReplicaOutput> {
    let mut rng: StreamRng = stream(config.seed, replica as u64);
    let mut ensemble = Ensemble::sample(config.n, &config.initial, &mut rng)?;
    let bins = config.histogram_bins;
    let stride = config.record_stride();
    let sweeps = config.sweeps();

    let mut series = vec![ensemble.record(0.0)];
    let mut snapshot_counts = Vec::new();
    if config.snapshots {
        snapshot_counts.push(ensemble.counts(bins));
    }
    let mut total = SweepStats::default();
    let mut window = SweepStats::default();
    for sweep in 1..=sweeps {
        let s = mc_step(&mut ensemble, config, &mut rng);
        window.pairs += s.pairs;
        window.rejected += s.rejected;
        if sweep % stride == 0 || sweep == sweeps {
            series.push(ensemble.record(rejected_share(window)));
            if config.snapshots {
                snapshot_counts.push(ensemble.counts(bins));
            }
            total.pairs += window.pairs;
            total.rejected += window.rejected;
            window = SweepStats::default();
        }
    }
    let final_counts = ensemble.counts(bins);
    let histogram = counts_to_grid(&final_counts)?;
    Ok(ReplicaOutput { series, histogram, final_counts, snapshot_counts, stats: total })
}

fn rejected_share(s: SweepStats) -> f64 {
    if s.pairs == 0 {
        0.0
    } else {
        s.rejected as f64 / s.pairs as f64
    }
}

fn counts_to_grid(counts: &[u64]) -> Result<DensityGrid> {
    DensityGrid::normalized(counts.iter().map(|&c| c as f64).collect())
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Replica-averaged moments: mean, second moment, within-replica spread
    /// and rejected share are each averaged over replicas.
    pub series: MomentSeries,
    pub replica_series: Vec<MomentSeries>,
    pub replica_histograms: Vec<DensityGrid>,
    pub pooled: DensityGrid,
    /// Pooled histograms at each record time (empty unless requested).
    pub snapshots: Vec<DensityGrid>,
    pub rejected_fraction: f64,
    pub effective_lambda: f64,
    pub runtime_seconds: f64,
}

/// Runs `config.realizations` independent replicas. Replica `r` draws from
/// stream `r` of `config.seed`, so the output does not depend on how the
/// replicas are scheduled.
pub fn simulate(config: &SimConfig, exec: Execution) -> Result<SimOutput> {
    config.validate()?;
    let start = Instant::now();
    let replicas = map_indexed(config.realizations, exec, |r| run_replica(config, r))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let r = replicas.len() as f64;
    let records = replicas[0].series.len();
    let series = (0..records)
        .map(|k| {
            let mut acc = MomentRecord { t: replicas[0].series[k].t, mean: 0.0, second_moment: 0.0, c_f: 0.0, rejected_fraction: 0.0 };
            for rep in &replicas {
                let rec = &rep.series[k];
                acc.mean += rec.mean / r;
                acc.second_moment += rec.second_moment / r;
                acc.c_f += rec.c_f / r;
                acc.rejected_fraction += rec.rejected_fraction / r;
            }
            acc
        })
        .collect();

    let bins = config.histogram_bins;
    let mut pooled_counts = vec![0u64; bins];
    let mut snapshots = Vec::new();
    if config.snapshots {
        for k in 0..records {
            let mut counts = vec![0u64; bins];
            for rep in &replicas {
                counts.iter_mut().zip(&rep.snapshot_counts[k]).for_each(|(c, x)| *c += x);
            }
            snapshots.push(counts_to_grid(&counts)?.with_tau(replicas[0].series[k].t));
        }
    }
    let mut stats = SweepStats::default();
    for rep in &replicas {
        pooled_counts.iter_mut().zip(&rep.final_counts).for_each(|(c, x)| *c += x);
        stats.pairs += rep.stats.pairs;
        stats.rejected += rep.stats.rejected;
    }
    let pooled = counts_to_grid(&pooled_counts)?;

    Ok(SimOutput {
        series,
        replica_series: replicas.iter().map(|r| r.series.clone()).collect(),
        replica_histograms: replicas.into_iter().map(|r| r.histogram).collect(),
        pooled,
        snapshots,
        rejected_fraction: rejected_share(stats),
        effective_lambda: config.effective_lambda(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Histogram of the ensemble on `bins` uniform cells, normalized to unit mass.
pub fn estimate_density(ensemble: &Ensemble, bins: usize) -> Result<DensityGrid> {
    if bins < 2 {
        return Err(Error::invalid("bins", "must be >= 2"));
    }
    counts_to_grid(&ensemble.counts(bins))
}

/// Per-sweep contraction of the expected spread for `P = 1` and no noise:
/// `E[C'] = (1 - 2 gamma (1 - gamma) N / (N - 1)) C`.
///
/// Each pair keeps its sum and scales its difference by `1 - 2 gamma`, which
/// removes `2 gamma (1 - gamma) (w - w*)^2` from the pair's sum of squares;
/// a random distinct pair has `E[(w - w*)^2] = 2 N C / (N - 1)`.
pub fn sweep_contraction(gamma: f64, n: usize) -> f64 {
    let n = n as f64;
    1.0 - 2.0 * gamma * (1.0 - gamma) * n / (n - 1.0)
}

/// Outcome of [`moment_law_check`]. Rates are `d ln C_f / dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentLawFit {
    /// Least-squares slope of `ln C_f` against `t`.
    pub fitted_rate: f64,
    /// Decay rate of the sweep dynamics, `ln(sweep_contraction) per unit time`.
    pub theoretical_rate: f64,
    /// Rate of the continuous-time kinetic equation, `-2 gamma (1 - gamma)`.
    pub continuum_rate: f64,
    /// `|fitted - theoretical| / |theoretical|` (absolute when theoretical is 0).
    pub relative_deviation: f64,
    pub records_used: usize,
}

/// Fits the exponential rate of the spread in a `P = 1` run and compares it
/// with the rate implied by the exchange rule.
pub fn moment_law_check(series: &[MomentRecord], config: &SimConfig) -> Result<MomentLawFit> {
    if !config.compromise.is_constant() {
        return Err(Error::invalid("compromise", "moment law check needs P = constant"));
    }
    if series.len() < MIN_FIT_RECORDS {
        return Err(Error::invalid("series", format!("needs at least {MIN_FIT_RECORDS} records")));
    }
    let points: Vec<(f64, f64)> = series
        .iter()
        .filter(|r| r.c_f > SPREAD_FLOOR)
        .map(|r| (r.t, r.c_f.ln()))
        .collect();
    if points.len() < MIN_FIT_RECORDS {
        return Err(Error::invalid("series", "too few records above the spread floor"));
    }
    let n = points.len() as f64;
    let (st, sy) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (sxy, sxx) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    if sxx == 0.0 {
        return Err(Error::invalid("series", "records share a single time"));
    }
    let fitted_rate = sxy / sxx;
    let gamma = config.params.gamma();
    let theoretical_rate = sweep_contraction(gamma, config.n).ln();
    let continuum_rate = -2.0 * gamma * (1.0 - gamma);
    let relative_deviation = if theoretical_rate == 0.0 {
        fitted_rate.abs()
    } else {
        ((fitted_rate - theoretical_rate) / theoretical_rate).abs()
    };
    Ok(MomentLawFit {
        fitted_rate,
        theoretical_rate,
        continuum_rate,
        relative_deviation,
        records_used: points.len(),
    })
}
