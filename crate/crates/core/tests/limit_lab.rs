use opkin::limit_lab::{
    approaches_one_monotonically, regime_probe, regularized_sqrt_lambda, run_sweep, Metric, Regime, SweepConfig,
    SweepNoise,
};
use opkin::mc::InitialCondition;
use opkin::{CompromiseFunction, DiffusionFunction, Execution};

fn small_sweep() -> SweepConfig {
    SweepConfig {
        gammas: vec![0.1, 0.05],
        lambda: 0.5,
        diffusion: DiffusionFunction::OneMinusWSquared,
        compromise: CompromiseFunction::Constant,
        n: 4_000,
        realizations: 4,
        tau_end: 4.0,
        metric: Metric::L1,
        bins: 40,
        initial: InitialCondition::Uniform { lo: -1.0, hi: 1.0 },
        seed: 3,
        noise: SweepNoise::Lambda,
        fp_refinement: 2,
        bootstrap: 50,
    }
}

#[test]
fn small_sweep_reports_every_gamma() {
    let report = run_sweep(&small_sweep(), Execution::default()).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.skipped.is_empty());
    for row in &report.rows {
        assert!((row.effective_lambda - 0.5).abs() < 1e-12);
        assert!(!row.clipped);
        assert_eq!(row.rejected_fraction, 0.0);
        assert!(row.l1_to_fp > 0.0 && row.l1_to_fp < 0.5);
        assert!(row.l1_to_closed_form.is_some());
        assert!(row.se_to_fp > 0.0);
    }
}

#[test]
fn sweep_is_reproducible_across_schedules() {
    let cfg = small_sweep();
    let a = run_sweep(&cfg, Execution::Sequential).unwrap();
    let b = run_sweep(&cfg, Execution::Parallel).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.l1_to_fp.to_bits(), y.l1_to_fp.to_bits());
        assert_eq!(x.w1_to_fp.to_bits(), y.w1_to_fp.to_bits());
        assert_eq!(x.se_to_fp.to_bits(), y.se_to_fp.to_bits());
    }
}

#[test]
fn invalid_gamma_list_is_rejected() {
    let mut cfg = small_sweep();
    cfg.gammas = vec![0.05, 0.1];
    assert!(run_sweep(&cfg, Execution::default()).is_err());
    cfg.gammas = vec![0.6];
    assert!(run_sweep(&cfg, Execution::default()).is_err());
}

#[test]
fn regime_probe_separates_the_two_scalings() {
    // alpha < 1: sigma^2 >> gamma, noise wins; alpha > 1: compromise wins
    let mut cfg = small_sweep();
    cfg.lambda = 1.0;
    cfg.initial = InitialCondition::Uniform { lo: -0.5, hi: 0.5 };
    let gamma = 0.05;
    let diffusive = regime_probe(&cfg, gamma, 0.5, Execution::default()).unwrap();
    let drift = regime_probe(&cfg, gamma, 2.0, Execution::default()).unwrap();
    assert_eq!(drift.closer, Regime::CompromiseDominated, "{drift:?}");
    assert!(diffusive.sigma2 > drift.sigma2);
    assert!(diffusive.distance_to_pure_drift > drift.distance_to_pure_drift);
}

#[test]
fn regularized_sqrt_lambda_follows_the_admissible_halfwidth() {
    for p in [1.0, 2.0 / 3.0] {
        let rows: Vec<_> = [1e-2, 1e-3].iter().map(|&g| regularized_sqrt_lambda(g, p).unwrap()).collect();
        for r in &rows {
            let a = (1.0 - r.gamma) * (r.gamma.powf(p) / (1.0 + r.gamma.powf(p))).sqrt();
            assert!((r.a_gamma - a).abs() < 1e-12 * a);
            assert!((r.sigma2 - a * a / 3.0).abs() < 1e-12 * a * a);
        }
    }
    // p = 1 settles at 1/3, p = 2/3 grows like gamma^(-1/3)
    let p1: Vec<_> = [1e-3, 1e-4, 1e-5].iter().map(|&g| regularized_sqrt_lambda(g, 1.0).unwrap()).collect();
    assert!((p1[2].effective_lambda - 1.0 / 3.0).abs() < 1e-3);
    let p23: Vec<_> = [1e-2, 1e-3, 1e-4].iter().map(|&g| regularized_sqrt_lambda(g, 2.0 / 3.0).unwrap()).collect();
    assert!(!approaches_one_monotonically(&p23));
    assert!(p23.windows(2).all(|w| w[1].effective_lambda > w[0].effective_lambda));
}
