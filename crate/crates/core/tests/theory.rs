use gds_core::bases::{BasisSpec, GridSpec};
use gds_core::cli::supp92_design;
use gds_core::simgen::{PredictorProcess, SimScenario, TruthSurface, BetaSurface};
use gds_core::theory::{estimate_kappa, feasibility_probe, parse_matrix, Kappa};
use nalgebra::{DMatrix, DVector};

#[test]
fn kappa_is_seeded_and_ordered() {
    let v = supp92_design().unwrap();
    let a = estimate_kappa(&v, Kappa::Kappa1, 1, 1, 3000, 5).unwrap();
    let b = estimate_kappa(&v, Kappa::Kappa1, 1, 1, 3000, 5).unwrap();
    assert_eq!(a.value, b.value);
    // same directions, larger denominator
    let k2 = estimate_kappa(&v, Kappa::Kappa2, 1, 1, 3000, 5).unwrap();
    assert!(k2.value <= a.value);
    // more trials can only lower a minimum over a nested set
    let more = estimate_kappa(&v, Kappa::Kappa1, 1, 1, 6000, 5).unwrap();
    assert!(more.value <= a.value);
}

#[test]
fn kappa_of_orthogonal_columns() {
    // V'V = n I makes ||Vh||^2 = n ||h||^2 >= n ||h_T||^2
    let n = 4;
    let v = DMatrix::<f64>::identity(n, n) * (n as f64).sqrt();
    let k = estimate_kappa(&v, Kappa::Kappa1, 2, 1, 2000, 1).unwrap();
    assert!(k.value >= 1.0 - 1e-12);
    assert!(k.value <= 2f64.sqrt() + 1e-12);
}

#[test]
fn kappa_rejects_bad_supports() {
    let v = DMatrix::<f64>::identity(3, 3);
    assert!(estimate_kappa(&v, Kappa::Kappa1, 0, 0, 10, 0).is_err());
    assert!(estimate_kappa(&v, Kappa::Kappa1, 4, 0, 10, 0).is_err());
    assert!(estimate_kappa(&v, Kappa::Kappa2, 2, 2, 10, 0).is_err());
    assert!(estimate_kappa(&v, Kappa::Kappa1, 1, 0, 0, 0).is_err());
}

#[test]
fn matrix_text_formats() {
    let m = parse_matrix("# header\n1 2\n\n3,4\n").unwrap();
    assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    assert!(parse_matrix("1 2\n3\n").is_err());
    assert!(parse_matrix("1 x\n").is_err());
}

#[test]
fn probe_needs_coefficient_truth() {
    let sc = SimScenario::new(TruthSurface::Named(BetaSurface::Beta2), PredictorProcess::P1, 50, 0);
    assert!(feasibility_probe(&sc, 3.0, 5, Some(0.1)).is_err());

    let spec = BasisSpec::piecewise(4, 4);
    let mut coef = DVector::zeros(16);
    coef[5] = 1.0;
    let sc = SimScenario {
        grid: GridSpec::midpoints(8, 8).unwrap(),
        ..SimScenario::new(TruthSurface::Coefficients { spec, coef }, PredictorProcess::P1, 80, 2)
    };
    assert!(feasibility_probe(&sc, 1.2, 5, Some(0.1)).is_err());
    let noiseless = feasibility_probe(&sc, 3.0, 10, Some(0.0)).unwrap();
    assert_eq!(noiseless.feasible, 10);
    let noisy = feasibility_probe(&sc, 3.0, 50, Some(0.1)).unwrap();
    assert!(noisy.rate >= 0.9, "{}", noisy.rate);
    assert!(noisy.prob_bound > 0.99);
}
