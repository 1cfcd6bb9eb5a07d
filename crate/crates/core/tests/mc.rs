use opkin::mc::{mc_step, simulate, Ensemble, InitialCondition};
use opkin::noise::{default_noise, NoiseModel};
use opkin::rng::stream;
use opkin::{CompromiseFunction, DiffusionFunction, Execution, KineticParams, SimConfig};

fn config(gamma: f64, sigma2: f64, noise: NoiseModel) -> SimConfig {
    SimConfig {
        n: 2_000,
        params: KineticParams::new(gamma, sigma2).unwrap(),
        compromise: CompromiseFunction::Constant,
        diffusion: DiffusionFunction::OneMinusWSquared,
        noise,
        initial: InitialCondition::Uniform { lo: -0.8, hi: 0.9 },
        t_end: 40.0,
        record_every: 5.0,
        histogram_bins: 50,
        realizations: 6,
        seed: 7,
        snapshots: true,
    }
}

fn spread(w: &[f64]) -> f64 {
    let m = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / w.len() as f64
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let params = KineticParams::new(0.05, 0.01).unwrap();
    let noise = default_noise(&params, &DiffusionFunction::OneMinusWSquared).unwrap().model;
    let cfg = config(0.05, 0.01, noise);
    let a = simulate(&cfg, Execution::Sequential).unwrap();
    let b = simulate(&cfg, Execution::Parallel).unwrap();
    assert_eq!(a.series, b.series);
    assert_eq!(a.replica_series, b.replica_series);
    assert_eq!(a.pooled, b.pooled);
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.rejected_fraction.to_bits(), b.rejected_fraction.to_bits());
}

#[test]
fn default_noise_is_never_rejected() {
    let params = KineticParams::new(0.05, 0.02).unwrap();
    let d = default_noise(&params, &DiffusionFunction::OneMinusWSquared).unwrap();
    assert!(!d.clipped);
    let out = simulate(&config(0.05, 0.02, d.model), Execution::default()).unwrap();
    assert_eq!(out.rejected_fraction, 0.0);
    assert!(out.series.iter().all(|r| r.rejected_fraction == 0.0));
}

#[test]
fn noise_free_sweeps_conserve_the_mean() {
    let out = simulate(&config(0.1, 0.0, NoiseModel::none()), Execution::default()).unwrap();
    for rep in &out.replica_series {
        let m0 = rep[0].mean;
        assert!(rep.iter().all(|r| (r.mean - m0).abs() < 1e-12));
        assert!(rep.windows(2).all(|w| w[1].c_f <= w[0].c_f));
    }
}

#[test]
fn one_sweep_of_four_agents_matches_the_pairing_average() {
    // the three pairings of four agents are equally likely; average them by hand
    let w = [-0.7, -0.1, 0.3, 0.8];
    let gamma = 0.2;
    let mix = |a: f64, b: f64| (a - gamma * (a - b), b + gamma * (a - b));
    let mut expected = 0.0;
    for [i, j, k, l] in [[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]] {
        let (a, b) = mix(w[i], w[j]);
        let (c, d) = mix(w[k], w[l]);
        expected += spread(&[a, b, c, d]) / 3.0;
    }

    let mut cfg = config(gamma, 0.0, NoiseModel::none());
    cfg.n = 4;
    let trials = 20_000;
    let mut rng = stream(11, 0);
    let samples: Vec<f64> = (0..trials)
        .map(|_| {
            let mut e = Ensemble::from_values(&w).unwrap();
            mc_step(&mut e, &cfg, &mut rng);
            e.mean_and_spread().1
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    assert!((mean - expected).abs() < 5.0 * se, "{mean} vs {expected} (se {se})");
}
