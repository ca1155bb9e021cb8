use mvex_core::pde::{BoundaryCondition, DriftMode, Field, PdeError, Problem};
use mvex_core::{HydroVector, VelocityModel};
use std::f64::consts::PI;

fn initial(cells: usize) -> Field {
    Field::from_fn(cells, 2, |u| vec![1.4 - 0.8 * u + 0.2 * (PI * u).sin(), 0.2 - 0.2 * u]).unwrap()
}

fn solve(bc: BoundaryCondition, cells: usize, t: f64) -> Field {
    let m = VelocityModel::model_one(1).unwrap();
    let pr = Problem::new(
        &m,
        bc,
        HydroVector(vec![1.4, 0.2]),
        HydroVector(vec![0.6, 0.0]),
        DriftMode::Central,
    )
    .unwrap();
    pr.solve(&initial(cells), t, None, &[t], |_, _| {})
        .unwrap()
        .pop()
        .unwrap()
        .1
}

fn max_error_on_coarse(coarse: &Field, fine: &Field) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..coarse.nodes() {
        let f = fine.interpolate(coarse.u(i));
        for k in 0..2 {
            worst = worst.max((coarse.at(i)[k] - f[k]).abs());
        }
    }
    worst
}

// Self-convergence with the drift switched on: successive differences on
// grids 32, 64, 128, 256 shrink at close to second order in every closure.
#[test]
fn drift_scheme_converges_at_second_order() {
    for bc in [
        BoundaryCondition::Dirichlet,
        BoundaryCondition::Robin { kappa: 2.0 },
        BoundaryCondition::Neumann,
    ] {
        let f: Vec<Field> = [32, 64, 128, 256].iter().map(|&m| solve(bc, m, 0.05)).collect();
        let e1 = max_error_on_coarse(&f[0], &f[1]);
        let e2 = max_error_on_coarse(&f[1], &f[2]);
        let e3 = max_error_on_coarse(&f[2], &f[3]);
        let (r1, r2) = (e1 / e2, e2 / e3);
        assert!(r2 > 3.0 && r2 < 5.0, "{}: ratios {r1} {r2}", bc.name());
    }
}

// With the drift off, any linear profile joining the boundary data is a
// steady state of the Dirichlet problem.
#[test]
fn linear_profile_is_steady_without_drift() {
    let m = VelocityModel::model_one(1).unwrap();
    let pr = Problem::new(
        &m,
        BoundaryCondition::Dirichlet,
        HydroVector(vec![1.4, 0.2]),
        HydroVector(vec![0.6, 0.0]),
        DriftMode::Off,
    )
    .unwrap();
    let f = Field::from_fn(64, 2, |u| vec![1.4 - 0.8 * u, 0.2 - 0.2 * u]).unwrap();
    let out = pr.solve(&f, 0.1, None, &[0.1], |_, _| {}).unwrap();
    let diff = out[0].1.max_diff(&f).unwrap();
    assert!(diff.iter().all(|d| *d < 1e-12), "{diff:?}");
}

#[test]
fn step_above_cfl_is_rejected() {
    let m = VelocityModel::model_one(1).unwrap();
    let pr = Problem::new(
        &m,
        BoundaryCondition::Neumann,
        HydroVector(vec![1.0, 0.0]),
        HydroVector(vec![1.0, 0.0]),
        DriftMode::Central,
    )
    .unwrap();
    let f = initial(64);
    let h = f.h();
    let err = pr.solve(&f, 0.01, Some(0.3 * h * h), &[], |_, _| {}).unwrap_err();
    assert!(matches!(err, PdeError::CflViolation { .. }), "{err:?}");
}

#[test]
fn leaving_u_is_reported() {
    let m = VelocityModel::model_one(1).unwrap();
    // momentum 1.2 at density 1 is outside the state space
    let pr = Problem::new(
        &m,
        BoundaryCondition::Dirichlet,
        HydroVector(vec![1.0, 0.0]),
        HydroVector(vec![1.0, 0.0]),
        DriftMode::Central,
    )
    .unwrap();
    let f = Field::from_fn(32, 2, |u| vec![1.0, 1.2 * (PI * u).sin()]).unwrap();
    assert!(matches!(
        pr.solve(&f, 0.01, None, &[], |_, _| {}),
        Err(PdeError::NotInU { .. })
    ));
}
