use proptest::prelude::*;
use volwings::control::*;
use volwings::stein_stein::{minimizers_z, Regime, SteinSteinParams};
use volwings::Error;

fn small_noise() -> volwings::stein_stein::SteinSteinSystem {
    SteinSteinParams::figure().control_system(Regime::SmallNoise)
}

fn max_drift<S: AffineControlSystem>(sys: &S, tr: &Trajectory) -> (f64, f64) {
    let h0 = hamiltonian_eval(sys, tr.first()).unwrap();
    let drift = tr
        .states
        .iter()
        .map(|s| (hamiltonian_eval(sys, s).unwrap() - h0).abs())
        .fold(0.0, f64::max);
    (h0, drift)
}

#[test]
fn stein_stein_hamiltonian_expansion() {
    let (b, c, rho) = (-0.5, 0.4, -0.75);
    let sys = small_noise();
    for (z, py, pz) in [(0.3, 1.2, -0.7), (-2.0, 0.5, 3.0), (0.0, -1.0, 2.0)] {
        let h = hamiltonian_eval(&sys, &HamiltonianState::new(vec![0.0, z], vec![py, pz])).unwrap();
        let expected = -0.5 * z * z * py
            + b * z * pz
            + 0.5 * (z * z * py * py + 2.0 * rho * c * z * py * pz + c * c * pz * pz);
        assert!((h - expected).abs() < 1e-14 * (1.0 + expected.abs()));
    }
}

#[test]
fn hamiltonian_rejects_wrong_dimension() {
    let err = hamiltonian_eval(
        &small_noise(),
        &HamiltonianState::new(vec![0.0], vec![0.0, 1.0]),
    )
    .unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
}

#[test]
fn zero_costate_without_drift_is_stationary() {
    let sys = LinearSystem::constant_diffusion(1, vec![vec![1.0, 0.5], vec![0.0, 2.0]]).unwrap();
    let tr = hamiltonian_flow(&sys, &[0.3, -1.0], &[0.0, 0.0], 2.0, 100).unwrap();
    assert_eq!(tr.states.len(), 101);
    assert!(tr
        .states
        .iter()
        .all(|s| s.x == vec![0.3, -1.0] && s.p == vec![0.0, 0.0]));
}

#[test]
fn energy_drift_and_order() {
    let sys = small_noise();
    let (x0, p0, t) = ([0.0, 1.0], [15.0, 15.0], 10.0);
    let drift = |steps| max_drift(&sys, &hamiltonian_flow(&sys, &x0, &p0, t, steps).unwrap());
    let (h0, d_fine) = drift(10_000);
    assert!(d_fine <= 1e-8 * (1.0 + h0.abs()), "drift {d_fine:e}");
    let (_, d1) = drift(2500);
    let (_, d2) = drift(5000);
    let order = (d1 / d2).log2();
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn shooting_residual_and_round_trip() {
    let sys = small_noise();
    let pb = ShootingProblem::new(vec![0.0, 0.0], vec![1.0], 1.0, 2000).unwrap();
    let sols = multi_start_shoot(&sys, &pb, 32, 7).unwrap();
    assert_eq!(sols.len(), 2);
    for sol in &sols {
        // residual recomputed from a fresh flow
        let tr = hamiltonian_flow(&sys, &pb.x0, &sol.p0, pb.t, pb.steps).unwrap();
        let end = tr.last();
        let res = (end.x[0] - 1.0).abs().max(end.p[1].abs());
        assert!((res - sol.residual_norm).abs() <= 1e-10);
        assert!(end.p[1].abs() <= 1e-9 * 2.0);

        let (x_end, action) = action_of_control(&sys, &sol.hdot, &pb.x0, pb.t).unwrap();
        for (a, b) in x_end.iter().zip(&sol.terminal().x) {
            assert!((a - b).abs() < 1e-6, "endpoint {a} vs {b}");
        }
        assert!((action - sol.action).abs() < 1e-6 * sol.action);

        let doubled: Vec<Vec<f64>> = sol
            .hdot
            .iter()
            .map(|h| h.iter().map(|v| 2.0 * v).collect())
            .collect();
        let zero_drift =
            LinearSystem::constant_diffusion(1, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (_, a1) = action_of_control(&zero_drift, &sol.hdot, &pb.x0, pb.t).unwrap();
        let (_, a2) = action_of_control(&zero_drift, &doubled, &pb.x0, pb.t).unwrap();
        assert!((a2 - 4.0 * a1).abs() < 1e-12 * a2);
    }
}

#[test]
fn symmetric_pair_matches_closed_form() {
    let prm = SteinSteinParams::figure();
    let sys = small_noise();
    let pb = ShootingProblem::new(vec![0.0, 0.0], vec![1.0], 1.0, 1000).unwrap();
    let sols = multi_start_shoot(&sys, &pb, 32, 7).unwrap();
    let (z_plus, _) = minimizers_z(1.0, &prm, 1.0).unwrap();
    assert_eq!(sols.len(), 2);
    let (za, zb) = (sols[0].terminal().x[1], sols[1].terminal().x[1]);
    assert!(za * zb < 0.0);
    for z in [za, zb] {
        assert!((z.abs() - z_plus).abs() < 1e-6 * z_plus);
    }
    assert!((sols[0].action - sols[1].action).abs() < 1e-8 * sols[0].action);
}

#[test]
fn huge_guess_never_returns_garbage() {
    let sys = small_noise();
    let pb = ShootingProblem::new(vec![0.0, 0.0], vec![1.0], 1.0, 200).unwrap();
    match shoot(&sys, &pb, &[1e6, -1e6]) {
        Ok(sol) => {
            assert!(sol.p0.iter().all(|v| v.is_finite()));
            assert!(sol.action.is_finite());
        }
        Err(e) => assert!(
            matches!(
                e,
                Error::NoConvergence { .. }
                    | Error::RankDeficient { .. }
                    | Error::Divergence { .. }
            ),
            "{e}"
        ),
    }
}

#[test]
fn point_to_point_self_target_has_zero_action() {
    let sys = LinearSystem::constant_diffusion(2, vec![vec![1.0, 0.0], vec![0.3, 1.0]]).unwrap();
    let pb = ShootingProblem::new(vec![0.5, -0.2], vec![0.5, -0.2], 1.0, 64).unwrap();
    let sols = multi_start_shoot(&sys, &pb, 4, 1).unwrap();
    assert!(sols.iter().any(|s| s.action < 1e-20));
}

#[test]
fn single_start_gives_at_most_one_solution() {
    let sys = small_noise();
    let pb = ShootingProblem::new(vec![0.0, 0.0], vec![1.0], 1.0, 400).unwrap();
    assert!(multi_start_shoot(&sys, &pb, 1, 3).unwrap().len() <= 1);
    assert!(multi_start_shoot(&sys, &pb, 0, 3).is_err());
}

#[test]
fn minimal_action_slope_is_terminal_costate() {
    // dΛ/dy equals the y-component of the terminal costate
    let sys = small_noise();
    let best = |y: f64| {
        let pb = ShootingProblem::new(vec![0.0, 0.0], vec![y], 1.0, 1000).unwrap();
        multi_start_shoot(&sys, &pb, 16, 5).unwrap().remove(0)
    };
    let h = 1e-3;
    let mid = best(1.0);
    let fd = (best(1.0 + h).action - best(1.0 - h).action) / (2.0 * h);
    assert!((fd - mid.terminal().p[0]).abs() < 1e-3 * fd.abs());
}

#[test]
fn malliavin_matrix_along_extremal() {
    let sys = small_noise();
    let pb = ShootingProblem::new(vec![0.0, 0.0], vec![1.0], 1.0, 500).unwrap();
    let sol = multi_start_shoot(&sys, &pb, 16, 7).unwrap().remove(0);
    let m = malliavin_matrix(&sys, &sol).unwrap();
    assert!((m.get(0, 1) - m.get(1, 0)).abs() <= 1e-10 * m.trace());
    assert!(m.eigenvalues.iter().all(|e| *e >= -1e-8 * m.trace()));
    assert!(m.is_invertible());
    assert!(m.condition_estimate.is_finite());
    assert!(is_elliptic_somewhere(&sys, &sol.trajectory));

    // the verdict survives grid refinement
    let fine = ShootingProblem::new(vec![0.0, 0.0], vec![1.0], 1.0, 1000).unwrap();
    let sol2 = shoot(&sys, &fine, &sol.p0).unwrap();
    assert!(malliavin_matrix(&sys, &sol2).unwrap().is_invertible());
}

#[test]
fn malliavin_scalar_brownian() {
    let sys = LinearSystem::constant_diffusion(1, vec![vec![1.0]]).unwrap();
    let pb = ShootingProblem::new(vec![0.0], vec![0.7], 2.0, 64).unwrap();
    let sol = shoot(&sys, &pb, &[0.0]).unwrap();
    let m = malliavin_matrix(&sys, &sol).unwrap();
    assert!((m.get(0, 0) - 2.0).abs() < 1e-12);
    assert!(is_elliptic_somewhere(&sys, &sol.trajectory));
}

#[test]
fn vanishing_columns_are_nowhere_elliptic() {
    // σ_j(x) = M_j x vanishes at the origin; zero control keeps x there
    let sys = LinearSystem::new(
        2,
        2,
        vec![0.0; 4],
        vec![0.0; 2],
        vec![vec![1.0, 0.0, 0.0, 1.0]],
        vec![vec![0.0, 0.0]],
    )
    .unwrap();
    let sol = ShootingSolution::from_initial_costate(
        &sys,
        &ShootingProblem::new(vec![0.0, 0.0], vec![0.0, 0.0], 1.0, 32).unwrap(),
        &[0.0, 0.0],
    )
    .unwrap();
    assert!(!is_elliptic_somewhere(&sys, &sol.trajectory));
    let m = malliavin_matrix(&sys, &sol).unwrap();
    assert!(m.eigenvalues[0].abs() < 1e-12);
}

fn random_linear() -> impl Strategy<Value = (LinearSystem, Vec<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, 4),
        prop::collection::vec(-1.0f64..1.0, 2),
        prop::collection::vec(-1.0f64..1.0, 8),
        prop::collection::vec(-1.0f64..1.0, 4),
        prop::collection::vec(-3.0f64..3.0, 2),
    )
        .prop_map(|(a, a0, m, c, x)| {
            let sys = LinearSystem::new(
                2,
                1,
                a,
                a0,
                vec![m[..4].to_vec(), m[4..].to_vec()],
                vec![c[..2].to_vec(), c[2..].to_vec()],
            )
            .unwrap();
            (sys, x)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jacobians_match_finite_differences((sys, x) in random_linear()) {
        prop_assert!(jacobian_discrepancy(&sys, &x) < 1e-6);
    }

    #[test]
    fn stein_stein_jacobians_match(z in -3.0f64..3.0, y in -2.0f64..2.0) {
        let prm = SteinSteinParams::figure();
        for regime in [Regime::SmallNoise, Regime::SmallTime] {
            prop_assert!(jacobian_discrepancy(&prm.control_system(regime), &[y, z]) < 1e-6);
        }
    }

    #[test]
    fn hamiltonian_vanishes_at_zero_costate((sys, x) in random_linear()) {
        let h = hamiltonian_eval(&sys, &HamiltonianState::new(x, vec![0.0, 0.0])).unwrap();
        prop_assert_eq!(h, 0.0);
    }

    #[test]
    fn energy_is_conserved(
        z0 in -1.0f64..1.0,
        py in -3.0f64..3.0,
        pz in -3.0f64..3.0,
        t in 0.1f64..2.0,
    ) {
        let sys = small_noise();
        let tr = hamiltonian_flow(&sys, &[0.0, z0], &[py, pz], t, 10_000).unwrap();
        let (h0, d) = max_drift(&sys, &tr);
        prop_assert!(d <= 1e-8 * (1.0 + h0.abs()));
    }
}
