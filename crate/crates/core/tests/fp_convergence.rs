use opkin::fokker_planck::{fp_solve, FpEquation, FpOptions, FpSolver};
use opkin::mc::InitialCondition;
use opkin::stationary::{StationaryDensity, StationarySpec, SteadyDiffusion};
use opkin::{CompromiseFunction, DensityGrid, DiffusionFunction};

fn order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

fn l1_interior(a: &DensityGrid, b: &DensityGrid) -> f64 {
    let k = a.len();
    (1..k - 1).map(|j| (a.values()[j] - b.values()[j]).abs()).sum::<f64>() * a.width()
}

#[test]
fn manufactured_linear_profile_is_second_order() {
    // D^2 = 1 - w^2, P = 1, g = a + b w:
    // (lambda/2)((1 - w^2) g)'' + ((w - m) g)' = (lambda/2)(-2a - 6bw) + a + 2bw - m b
    let (a, b, lambda) = (0.5, 0.3, 0.7);
    let eq = FpEquation::Full { diffusion: DiffusionFunction::SqrtOneMinusWSquared, lambda };
    let mut errors = Vec::new();
    for cells in [50usize, 100, 200, 400] {
        let grid = DensityGrid::new((0..cells).map(|j| a + b * (-1.0 + (j as f64 + 0.5) * 2.0 / cells as f64)).collect())
            .unwrap();
        let mut solver = FpSolver::new(&eq, &grid).unwrap();
        let m = solver.drift_mean(&grid);
        let rate = solver.rate(&grid);
        let worst = grid
            .centers()
            .zip(&rate)
            .filter(|(w, _)| w.abs() <= 0.5)
            .map(|(w, r)| (r - (0.5 * lambda * (-2.0 * a - 6.0 * b * w) + a + 2.0 * b * w - m * b)).abs())
            .fold(0.0, f64::max);
        errors.push(worst);
    }
    for p in order(&errors) {
        assert!(p >= 1.9, "{errors:?}");
    }
}

#[test]
fn mean_drift_is_second_order_for_smooth_data() {
    // linear data has a boundary layer and only reaches ~1.5
    let eq = FpEquation::Full { diffusion: DiffusionFunction::OneMinusAbs, lambda: 0.5 };
    let mut drift = Vec::new();
    for cells in [100usize, 200, 400] {
        let init = DensityGrid::from_density(cells, |w| (1.0 - w * w).powi(2) * (1.0 + 0.8 * w)).unwrap();
        let sol = fp_solve(&eq, &init, 1.0, 0.5, FpOptions { dt: None, steady_tol: None }).unwrap();
        drift.push((sol.grid.mean() - init.mean()).abs());
        assert!(sol.max_mass_error < 1e-12);
    }
    for p in order(&drift) {
        assert!(p >= 1.8, "{drift:?}");
    }
}

#[test]
fn closed_form_is_a_fixed_point_up_to_second_order() {
    let spec = StationarySpec::new(SteadyDiffusion::OneMinusWSquared, 0.2, 0.5).unwrap();
    let g = StationaryDensity::new(spec, 1e-12).unwrap();
    let eq = FpEquation::Full { diffusion: DiffusionFunction::OneMinusWSquared, lambda: 0.5 };
    let mut residuals = Vec::new();
    for cells in [100usize, 200, 400] {
        let grid = g.cell_averages(cells).unwrap();
        let mut solver = FpSolver::new(&eq, &grid).unwrap();
        let rate = solver.rate(&grid);
        residuals.push(rate.iter().map(|r| r.abs()).sum::<f64>() * grid.width());
    }
    for p in order(&residuals) {
        assert!(p >= 1.8, "{residuals:?}");
    }
}

#[test]
fn abs_diffusion_converges_to_the_continuous_closed_form() {
    let (m, lambda) = (0.2, 1.0);
    let eq = FpEquation::Full { diffusion: DiffusionFunction::OneMinusAbs, lambda };
    let init = InitialCondition::Linear { mean: m }.grid(400).unwrap();
    let sol = fp_solve(&eq, &init, 200.0, 200.0, FpOptions::default()).unwrap();
    assert!(sol.steady_at.is_some());
    let exact = StationaryDensity::new(StationarySpec::new(SteadyDiffusion::OneMinusAbs, m, lambda).unwrap(), 1e-12)
        .unwrap()
        .cell_averages(400)
        .unwrap();
    let err = l1_interior(&sol.grid, &exact);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn singular_beta_steady_state_converges_slowly() {
    // lambda > 1 + |m|: the density diverges at both endpoints, the
    // center-value fixed point misses endpoint mass and the order drops to ~1/2
    let (m, lambda) = (0.2, 1.5);
    let spec = StationarySpec::new(SteadyDiffusion::SqrtOneMinusWSquared, m, lambda).unwrap();
    let eq = FpEquation::Full { diffusion: DiffusionFunction::SqrtOneMinusWSquared, lambda };
    let g = StationaryDensity::new(spec, 1e-12).unwrap();
    let mut errors = Vec::new();
    for cells in [200usize, 400] {
        let init = InitialCondition::Linear { mean: m }.grid(cells).unwrap();
        let sol = fp_solve(&eq, &init, 200.0, 200.0, FpOptions::default()).unwrap();
        assert!(sol.grid.values().iter().all(|v| v.is_finite() && *v >= 0.0));
        errors.push(l1_interior(&sol.grid, &g.cell_averages(cells).unwrap()));
    }
    assert!(errors[1] < errors[0], "{errors:?}");
    assert!(order(&errors)[0] > 0.4, "{errors:?}");
    assert!(errors[1] < 1.5e-2, "{errors:?}");
}

#[test]
fn pure_drift_follows_characteristics() {
    // two symmetric bumps; m stays 0 and each bump moves with
    // dw/dtau = -(1 - w^2) w
    let cells = 800;
    let bump = |c: f64| move |w: f64| (-(w - c) * (w - c) / (2.0 * 0.03 * 0.03)).exp();
    let (l, r) = (bump(-0.6), bump(0.6));
    let init = DensityGrid::from_density(cells, |w| l(w) + r(w)).unwrap();
    let eq = FpEquation::PureDrift { compromise: CompromiseFunction::OneMinusWSquared };
    let tau = 1.0;
    let sol = fp_solve(&eq, &init, tau, tau, FpOptions { dt: None, steady_tol: None }).unwrap();
    assert!(sol.max_mass_error < 1e-12);
    assert!(sol.grid.mean().abs() < 1e-12);

    let mut w: f64 = 0.6;
    let v = |w: f64| -(1.0 - w * w) * w;
    let h = 1e-4;
    for _ in 0..(tau / h) as usize {
        let k1 = v(w);
        let k2 = v(w + 0.5 * h * k1);
        let k3 = v(w + 0.5 * h * k2);
        let k4 = v(w + h * k3);
        w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let right: Vec<(f64, f64)> = sol.grid.centers().zip(sol.grid.values().iter().copied()).filter(|(c, _)| *c > 0.0).collect();
    let mass: f64 = right.iter().map(|(_, g)| g).sum();
    let centroid = right.iter().map(|(c, g)| c * g).sum::<f64>() / mass;
    assert!((centroid - w).abs() < 1e-2, "centroid {centroid} vs characteristic {w}");
    assert!(centroid < 0.6);
}

#[test]
fn general_p_mean_follows_its_law() {
    use opkin::fokker_planck::mean_evolution_general_p;
    let p = CompromiseFunction::OneMinusWSquared;
    let eq = FpEquation::GeneralP { diffusion: DiffusionFunction::OneMinusWSquared, lambda: 0.4, compromise: p.clone() };
    let init = DensityGrid::from_density(400, |w| (1.0 + w) * (1.0 + w) * (1.0 - w)).unwrap();
    let dt = 1e-3;
    let sol = fp_solve(&eq, &init, dt, dt, FpOptions { dt: None, steady_tol: None }).unwrap();
    let observed = (sol.grid.mean() - init.mean()) / dt;
    let predicted = mean_evolution_general_p(&init, &p);
    assert!(predicted.abs() > 1e-3);
    assert!((observed - predicted).abs() < 2e-2 * predicted.abs(), "{observed} vs {predicted}");
}
