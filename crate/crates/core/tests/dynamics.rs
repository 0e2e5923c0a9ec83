use nsk_core::linear::{self, LinearParams, Regime};
use nsk_core::physics::PressureModel;
use nsk_core::solver::{build_initial_data, simulate, InitialDataSpec, Scheme, Stepper, StepperConfig};
use nsk_core::Grid;
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = LinearParams> {
    (0.2f64..2.0, 0.0f64..1.0, 0.1f64..3.0).prop_map(|(mu, l, k)| LinearParams::new(mu, l, k).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn green_matrix_is_a_semigroup(
        p in params_strategy(),
        t in 0.0f64..3.0, s in 0.0f64..3.0,
        xi in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let gt = linear::green_matrix(t, &xi, &p).unwrap();
        let gs = linear::green_matrix(s, &xi, &p).unwrap();
        let gts = linear::green_matrix(t + s, &xi, &p).unwrap();
        let err = gt.matmul(&gs).sub(&gts).max_abs();
        prop_assert!(err <= 1e-10 * gts.max_abs().max(1.0), "err {err}");
    }

    #[test]
    fn green_matrix_solves_its_ode(
        p in params_strategy(),
        t in 0.05f64..3.0,
        xi in prop::collection::vec(-1.5f64..1.5, 2),
    ) {
        prop_assert!(linear::ode_residual(t, &xi, &p, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn green_matrix_starts_at_identity(p in params_strategy(), xi in prop::collection::vec(-3.0f64..3.0, 3)) {
        let g0 = linear::green_matrix(0.0, &xi, &p).unwrap();
        prop_assert!(g0.sub(&linear::GreenMatrix::identity(4)).max_abs() < 1e-14);
    }
}

#[test]
fn regimes_follow_the_discriminant() {
    assert_eq!(LinearParams::new(0.5, 0.0, 1.0).unwrap().regime(), Regime::Underdamped);
    assert_eq!(LinearParams::new(1.0, 0.0, 1.0).unwrap().regime(), Regime::Critical);
    assert_eq!(LinearParams::new(1.5, 0.0, 2.0).unwrap().regime(), Regime::Overdamped);
    assert!(LinearParams::new(-1.0, 0.0, 1.0).is_err());
}

#[test]
fn linear_only_run_matches_the_semigroup() {
    let grid = Grid::cube(2, 16, 20.0).unwrap();
    let params = LinearParams::new(1.0, 0.0, 2.0).unwrap();
    let data = build_initial_data(&grid, &InitialDataSpec::gaussian(1e-2, 1.5), 0).unwrap();
    let mut cfg = StepperConfig::new(0.05, Scheme::EtdRk2, 2.0);
    cfg.linear_only = true;
    let pressure = PressureModel::default();
    let stepper = Stepper::new(&grid, &params, &pressure, &cfg).unwrap();
    let traj = simulate(&data.state, &stepper, &cfg, &mut []).unwrap();
    let end = traj.final_state().unwrap();
    let exact = linear::apply_semigroup(&data.state, end.t, &params).unwrap();
    assert!(end.relative_difference(&exact) < 1e-12);
}

#[test]
fn nonlinear_run_conserves_mass_and_stays_near_the_linear_flow() {
    let grid = Grid::cube(2, 16, 20.0).unwrap();
    let params = LinearParams::new(1.0, 0.0, 1.0).unwrap();
    let data = build_initial_data(&grid, &InitialDataSpec::gaussian(0.05, 1.5), 1).unwrap();
    let cfg = StepperConfig::new(0.05, Scheme::EtdRk2, 5.0);
    let stepper = Stepper::new(&grid, &params, &PressureModel::default(), &cfg).unwrap();
    let traj = simulate(&data.state, &stepper, &cfg, &mut []).unwrap();
    assert!(traj.abort.is_none());
    assert!(traj.mass_drift() <= 1e-10 * traj.mass[0].abs().max(1.0));
    let end = traj.final_state().unwrap();
    let lin = linear::apply_semigroup(&data.state, end.t, &params).unwrap();
    let gap = end.relative_difference(&lin);
    assert!(gap > 1e-6 && gap < 0.5, "gap {gap}");
}

#[test]
fn oversized_data_trips_a_guard() {
    let grid = Grid::cube(2, 16, 20.0).unwrap();
    let params = LinearParams::new(1.0, 0.0, 1.0).unwrap();
    let data = build_initial_data(&grid, &InitialDataSpec::gaussian(0.9, 1.5), 0).unwrap();
    let cfg = StepperConfig::new(0.05, Scheme::EtdRk2, 1.0);
    let stepper = Stepper::new(&grid, &params, &PressureModel::default(), &cfg).unwrap();
    let traj = simulate(&data.state, &stepper, &cfg, &mut []).unwrap();
    assert!(traj.abort.is_some());
}
