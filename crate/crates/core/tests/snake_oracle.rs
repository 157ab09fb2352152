use branchtree::csbp::CsbpKernel;
use branchtree::gw::{sample_generations, OffspringDistribution, RescalingPlan};
use branchtree::mechanism::BranchingMechanism;
use branchtree::rng::stream_rng;
use branchtree::snake::*;
use branchtree::stats::{chi_square_two_sample, erf, mean_se};

fn geometric() -> OffspringDistribution {
    OffspringDistribution::geometric_half()
}

fn quadratic() -> BranchingMechanism {
    BranchingMechanism::quadratic(1.0).unwrap()
}

#[test]
fn walk_starts_at_a_unit_point_mass() {
    let d = geometric();
    let plan = RescalingPlan::new(&d, 40).unwrap();
    let mut rng = stream_rng(1, 0);
    let samples = branching_walk(&plan, &d, &SpatialKernel::Gaussian, 0.3, 0.5, &mut rng).unwrap();
    assert_eq!(samples.len(), plan.generation(0.5) as usize + 1);
    let z0 = &samples[0];
    assert_eq!(z0.time, 0.0);
    assert!((z0.total_mass() - 1.0).abs() < 1e-12);
    assert!(z0.positions.iter().all(|&x| x == 0.3));
    for (i, m) in samples.iter().enumerate() {
        assert_eq!(m.generation, i as u64);
        assert_eq!(m.weight, 1.0 / 40.0);
        assert!((m.total_mass() * 40.0 - m.positions.len() as f64).abs() < 1e-9);
        assert!(m.points().all(|(_, w)| w > 0.0));
    }
}

#[test]
fn total_mass_has_the_generation_size_law() {
    let d = geometric();
    let p = 10;
    let plan = RescalingPlan::new(&d, p).unwrap();
    let n = plan.generation(0.5);
    let mut rng = stream_rng(2, 0);
    let bins = 12;
    let mut a = vec![0.0; bins];
    let mut b = vec![0.0; bins];
    for _ in 0..20_000 {
        let m = branching_walk_final(&plan, &d, &SpatialKernel::Lattice, 0.0, 0.5, &mut rng).unwrap();
        a[(m.positions.len() / 3).min(bins - 1)] += 1.0;
        let y = sample_generations(&d, p, n, &mut rng).unwrap()[n as usize] as usize;
        b[(y / 3).min(bins - 1)] += 1.0;
    }
    let pv = chi_square_two_sample(&a, &b).unwrap().p_value;
    assert!(pv > 1e-3, "p-value {pv}");
}

#[test]
fn homogeneous_functional_matches_discrete_generating_function() {
    let d = geometric();
    let p = 100;
    let plan = RescalingPlan::new(&d, p).unwrap();
    let n = plan.generation(1.0);
    let mut rng = stream_rng(3, 0);
    let draws: Vec<f64> = (0..4000)
        .map(|_| {
            let m = branching_walk_final(&plan, &d, &SpatialKernel::Gaussian, 0.0, 1.0, &mut rng).unwrap();
            (-m.integrate(|_| 1.0)).exp()
        })
        .collect();
    let (mean, se) = mean_se(&draws);
    let exact = d.gf_iterate(n, (-1.0 / p as f64).exp()).unwrap().powi(p as i32);
    assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact}");
}

#[test]
fn laplace_functional_of_point_masses() {
    let s = MeasureSample {
        generation: 0,
        time: 0.0,
        weight: 0.5,
        positions: vec![-1.0, 2.0],
    };
    let f = |x: f64| x * x;
    assert!((s.integrate(f) - 2.5).abs() < 1e-15);
    assert!((laplace_functional(&[s.clone(), s], f) - (-2.5f64).exp()).abs() < 1e-15);
}

#[test]
fn kernels_have_diffusive_scale() {
    let mut rng = stream_rng(4, 0);
    let h = 0.01;
    for _ in 0..100 {
        let s = SpatialKernel::Lattice.step(0.0, h, &mut rng);
        assert!((s.abs() - 0.1).abs() < 1e-15);
    }
    let steps: Vec<f64> = (0..100_000).map(|_| SpatialKernel::Gaussian.step(5.0, h, &mut rng)).collect();
    let (mean, se) = mean_se(&steps);
    assert!(mean.abs() < 4.0 * se);
    let var = steps.iter().map(|x| x * x).sum::<f64>() / steps.len() as f64;
    assert!((var / h - 1.0).abs() < 0.02);
    let drift = SpatialKernel::Custom(std::sync::Arc::new(|x, h, _| -x * h));
    assert_eq!(drift.step(2.0, 0.5, &mut rng), -1.0);
    assert_eq!(drift.name(), "custom");
}

#[test]
fn solver_zero_and_constant_data() {
    let solver = ReactionDiffusion::default();
    for m in [quadratic(), BranchingMechanism::stable(1.0, 1.5).unwrap()] {
        let zero = solver.solve(&m, |_| 0.0, 0.7).unwrap();
        assert!(zero.grid.values.iter().all(|&v| v == 0.0));
        let lam = 2.0;
        let c = solve_super2(&m, &solver, |_| lam, 0.7).unwrap();
        let exact = CsbpKernel::new(m.clone()).u(0.7, lam).unwrap();
        let worst = c.grid.values.iter().map(|v| (v - exact).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "worst {worst}");
    }
}

#[test]
fn solver_reduces_to_heat_equation_without_branching() {
    // with negligible ψ, u_t(y) = P(|y + B_t| ≤ 1) for f = 1_{[−1,1]}
    let m = BranchingMechanism::quadratic(1e-12).unwrap();
    let t = 0.5;
    let sol = ReactionDiffusion::default().solve(&m, |y: f64| if y.abs() <= 1.0 { 1.0 } else { 0.0 }, t).unwrap();
    let s = (2.0 * t).sqrt();
    for y in [0.0, 0.5, 1.0, 2.0] {
        let exact = 0.5 * (erf((1.0 - y) / s) + erf((1.0 + y) / s));
        assert!((sol.grid.eval(y) - exact).abs() < 1e-4, "y {y}: {} vs {exact}", sol.grid.eval(y));
    }
}

#[test]
fn solver_refinement_shrinks_defect() {
    let sol = ReactionDiffusion::default()
        .solve(&quadratic(), |y: f64| if y.abs() <= 1.0 { 1.0 } else { 0.0 }, 0.5)
        .unwrap();
    assert!(sol.defect < 1e-6);
    assert!(sol.defects.windows(2).all(|w| w[1] < 0.5 * w[0]), "{:?}", sol.defects);
    let again = ReactionDiffusion::default()
        .solve(&quadratic(), |y: f64| if y.abs() <= 1.0 { 1.0 } else { 0.0 }, 0.5)
        .unwrap();
    assert_eq!(sol.grid.values, again.grid.values);
}

#[test]
fn exit_ode_examples() {
    let zero = ExitProblem::new(quadratic(), -1.0, 1.0, 0.0, 0.0).unwrap();
    let sol = solve_exit_ode(&zero, 1000).unwrap();
    assert!(sol.shooting.values.iter().all(|v| v.abs() < 1e-12));
    assert!(sol.collocation.values.iter().all(|v| v.abs() < 1e-12));

    let four = ExitProblem::new(quadratic(), -1.0, 1.0, 4.0, 4.0).unwrap();
    let sol = solve_exit_ode(&four, 4000).unwrap();
    assert!(sol.max_gap < 1e-6, "gap {}", sol.max_gap);
    for x in [0.2, 0.5, 0.9] {
        assert!((sol.shooting.eval(x) - sol.shooting.eval(-x)).abs() < 1e-6);
    }
    // u(0) lies below the boundary value and above 0
    let mid = sol.shooting.eval(0.0);
    assert!(mid > 0.0 && mid < 4.0);

    // ½u″ = u² is solved by u = 3/(x + 2)²
    let exact = |x: f64| 3.0 / ((x + 2.0) * (x + 2.0));
    let p = ExitProblem::new(quadratic(), -1.0, 1.0, exact(-1.0), exact(1.0)).unwrap();
    let sol = solve_exit_ode(&p, 4000).unwrap();
    for x in [-0.5, 0.0, 0.5] {
        assert!((sol.shooting.eval(x) - exact(x)).abs() < 1e-6);
        assert!((sol.collocation.eval(x) - exact(x)).abs() < 1e-6);
    }
    assert!(ExitProblem::new(quadratic(), 1.0, -1.0, 1.0, 1.0).is_err());
    assert!(ExitProblem::new(quadratic(), -1.0, 1.0, -1.0, 1.0).is_err());
}

#[test]
fn exit_measure_lives_outside_the_interval() {
    let d = geometric();
    let plan = RescalingPlan::new(&d, 50).unwrap();
    let mut rng = stream_rng(6, 0);
    let mut zero_functional = 0.0;
    for _ in 0..50 {
        let e = exit_measure(&plan, &d, &SpatialKernel::Gaussian, -1.0, 1.0, 0.2, 10_000_000, &mut rng).unwrap();
        assert!(e.positions.iter().all(|&y| y <= -1.0 || y >= 1.0));
        assert!((e.total_mass() - e.positions.len() as f64 / 50.0).abs() < 1e-12);
        zero_functional += e.integrate_boundary(0.0, 0.0);
        let csv = e.to_csv();
        assert_eq!(csv.lines().count(), e.positions.len() + 1);
    }
    assert_eq!(zero_functional, 0.0);
    assert!(exit_measure(&plan, &d, &SpatialKernel::Gaussian, -1.0, 1.0, 1.5, 1000, &mut rng).is_err());
}

#[test]
fn small_exit_experiment_is_consistent() {
    let params = SnakeExitParams {
        p: 100,
        reps: 200,
        cells: 1000,
        ..Default::default()
    };
    let r = snake_exit_experiment(&geometric(), &SpatialKernel::Gaussian, &params, 7).unwrap();
    assert!(r.checks.iter().any(|c| c.name == "shooting_vs_collocation" && c.pass));
    assert!(r.checks.iter().any(|c| c.name == "symmetric_solution" && c.pass));
}
