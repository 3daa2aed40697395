use bobkov_core::bellman::b_surface;
use bobkov_core::gauss::{inv_cdf, iso_profile, norm_cdf, norm_pdf, Probability};
use bobkov_core::quadrature::{gauss_weighted_integral, truncated_halfspace_mass, QuadratureSpec};
use bobkov_core::variational::*;
use bobkov_core::LabError;

/// `(t, x, y)` with `x = Φ(0.9)` and `y` the mass of the trajectory of slope 0.7.
fn reference_point() -> (f64, Probability, f64) {
    let x = Probability::new(norm_cdf(0.9)).unwrap();
    (1.0, x, consistent_mass(1.0, x, 0.7))
}

#[test]
fn constant_trajectory_cost() {
    let g = CollocationGrid::new(1.0, 512).unwrap();
    let traj = ControlTrajectory::from_values(&vec![0.5; 512]).unwrap();
    let cost = discretized_cost(&traj, &g).unwrap();
    let expected = iso_profile(Probability::new(0.5).unwrap()).unwrap() * norm_cdf(1.0);
    assert!((cost - expected).abs() < 1e-5, "{cost} vs {expected}");
    let mass = discretized_mass(&traj, &g).unwrap();
    assert!((mass - 0.5 * norm_cdf(1.0)).abs() < 1e-5);
}

#[test]
fn sampled_candidate_cost_is_second_order() {
    let (t, x, y) = reference_point();
    let c = analytic_candidate(t, x, y).unwrap();
    // Along Φ(as + b) the integrand is √(1 + a²)·φ(as + b)φ(s).
    let scale = c.a.hypot(1.0);
    let continuum = gauss_weighted_integral(
        |s| scale * norm_pdf(c.a * s + c.b),
        -DEFAULT_T_LOW,
        t,
        &QuadratureSpec::default(),
    )
    .unwrap();
    let mut costs = vec![];
    for n in [512, 1024] {
        let g = CollocationGrid::new(t, n).unwrap();
        let cost = discretized_cost(&c.sample(&g), &g).unwrap();
        // Observed error constant: 0.00704·Δ² at both sizes.
        let ratio = (cost - continuum) / (g.delta() * g.delta());
        assert!((0.006..0.008).contains(&ratio), "n={n}: {ratio}");
        costs.push(cost);
    }
    assert!((costs[0] - costs[1]).abs() < 1e-5);
}

#[test]
fn trajectory_size_mismatch_is_rejected() {
    let g = CollocationGrid::new(0.0, 64).unwrap();
    let traj = ControlTrajectory::from_values(&[0.5; 63]).unwrap();
    assert!(matches!(
        discretized_cost(&traj, &g),
        Err(LabError::SizeMismatch { .. })
    ));
    assert!(ControlTrajectory::from_values(&[0.5, 1.0]).is_err());
}

#[test]
fn candidate_at_zero_slope() {
    let (t, p) = (0.4, -0.6);
    let x = Probability::new(norm_cdf(p)).unwrap();
    let c = analytic_candidate(t, x, norm_cdf(p) * norm_cdf(t)).unwrap();
    assert!(c.a.abs() < 1e-9);
    assert!((c.b - inv_cdf(x)).abs() < 1e-9);
}

#[test]
fn candidate_constraint_round_trip() {
    let (t, x, y) = reference_point();
    let c = analytic_candidate(t, x, y).unwrap();
    assert!((c.a - 0.7).abs() < 1e-10);
    assert!((norm_cdf(c.a * t + c.b) - x.value()).abs() < 1e-15);
    let mass = truncated_halfspace_mass(t, c.a * t + c.b, c.a, &QuadratureSpec::default()).unwrap();
    assert!((mass - y).abs() < 1e-11);
}

#[test]
fn candidate_cost_matches_bellman_value() {
    let (t, x, y) = reference_point();
    let b = b_surface(t, x, y).unwrap().b;
    let g = CollocationGrid::new(t, 512).unwrap();
    let c = analytic_candidate(t, x, y).unwrap();
    let cost = discretized_cost(&c.sample(&g), &g).unwrap();
    assert!((cost - b).abs() < 2e-3);
}

#[test]
fn minimizer_finds_the_candidate() {
    let (t, x, y) = reference_point();
    let b = b_surface(t, x, y).unwrap().b;
    let g = CollocationGrid::new(t, 512).unwrap();
    let r = constrained_minimize(t, x, y, &g, &MinimizeOptions::default()).unwrap();
    assert!(r.converged, "{}", r.message);
    assert!((r.value - b).abs() < 2e-3);
    let c = analytic_candidate(t, x, y).unwrap().sample(&g);
    assert!(r.trajectory.sup_distance(&c) < 5e-3);
    assert!((r.trajectory.endpoint() - x.value()).abs() < 1e-15);
}

#[test]
fn fine_grid_optimum_does_not_undercut_b() {
    let (t, x, y) = reference_point();
    let b = b_surface(t, x, y).unwrap().b;
    let g = CollocationGrid::new(t, 1024).unwrap();
    let r = constrained_minimize(t, x, y, &g, &MinimizeOptions::default()).unwrap();
    assert!(r.converged, "{}", r.message);
    assert!(r.value >= b - 1e-4, "{} vs {b}", r.value);
}

#[test]
fn candidate_start_confirms_the_optimum() {
    let (t, x, y) = reference_point();
    let g = CollocationGrid::new(t, 512).unwrap();
    let opts = MinimizeOptions {
        init: Initialization::Candidate,
        ..Default::default()
    };
    let from_candidate = constrained_minimize(t, x, y, &g, &opts).unwrap();
    let from_constant = constrained_minimize(t, x, y, &g, &MinimizeOptions::default()).unwrap();
    assert!(from_candidate.converged && from_constant.converged);
    assert!((from_candidate.value - from_constant.value).abs() < 1e-9);
}

#[test]
fn converged_runs_are_feasible() {
    let (t, x, y) = reference_point();
    let g = CollocationGrid::new(t, 256).unwrap();
    let r = constrained_minimize(t, x, y, &g, &MinimizeOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.constraint_residual <= 1e-8 && r.gradient_norm <= 1e-6);
    let mass = discretized_mass(&r.trajectory, &g).unwrap();
    assert!((mass - y).abs() <= 1e-8);
    let cost = discretized_cost(&r.trajectory, &g).unwrap();
    assert_eq!(cost, r.value);
}

#[test]
fn non_convergence_is_reported() {
    let (t, x, y) = reference_point();
    let g = CollocationGrid::new(t, 256).unwrap();
    let opts = MinimizeOptions {
        max_outer: 1,
        max_inner: 1,
        ..Default::default()
    };
    let r = constrained_minimize(t, x, y, &g, &opts).unwrap();
    assert!(!r.converged);
    assert!(r.message.contains("no convergence"));
}

#[test]
fn grid_must_end_at_query_time() {
    let (_, x, y) = reference_point();
    let g = CollocationGrid::new(0.5, 128).unwrap();
    assert!(constrained_minimize(1.0, x, y, &g, &MinimizeOptions::default()).is_err());
}

#[test]
fn certification_at_reference_point() {
    let (t, x, y) = reference_point();
    let g = CollocationGrid::new(t, 512).unwrap();
    let r = certify_value(t, x, y, &g).unwrap();
    assert!(r.certified, "{}", r.note);
    assert!(r.optimum_gap <= r.tolerance && r.candidate_gap <= r.tolerance);
    assert_eq!(r.candidate, analytic_candidate(t, x, y).unwrap());
}

#[test]
fn certification_at_zero_slope() {
    let (t, p) = (0.3, 0.8);
    let x = Probability::new(norm_cdf(p)).unwrap();
    let y = norm_cdf(p) * norm_cdf(t);
    let g = CollocationGrid::new(t, 128).unwrap();
    let r = certify_value(t, x, y, &g).unwrap();
    assert!(r.certified, "{}", r.note);
    // The discrete mass of a constant is off by O(Δ²), and so is the discrete optimum.
    assert!(r.sup_distance < g.delta() * g.delta(), "{}", r.sup_distance);
}

#[test]
fn shifted_reference_is_not_certified() {
    let (t, x, y) = reference_point();
    let g = CollocationGrid::new(t, 512).unwrap();
    let b = b_surface(t, x, y).unwrap().b;
    let r = certify_against(t, x, y, &g, Some(b + 0.05), &MinimizeOptions::default()).unwrap();
    assert!(r.converged);
    assert!(!r.certified);
    assert!(r.optimum_gap > 0.04);
}

#[test]
fn coarse_grid_is_not_certified() {
    let (t, x, y) = reference_point();
    let g = CollocationGrid::new(t, 8).unwrap();
    let r = certify_value(t, x, y, &g).unwrap();
    assert!(!r.certified);
    assert!(r.note.contains("at least"));
    assert!(r.candidate_gap > 1e-3, "{}", r.candidate_gap);
}
