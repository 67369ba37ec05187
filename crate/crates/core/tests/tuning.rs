use gds_core::bases::{basis_matrix, BasisSpec, GridSpec};
use gds_core::design::{build_design, design_matrix, quadrature_weights, ImageSample};
use gds_core::diffops::Variant;
use gds_core::gds::{fit, GdsConfig};
use gds_core::simgen::{
    calibrate_noise, generate_dataset, generate_stream, BetaSurface, PredictorProcess,
    SimDataset, SimScenario, TruthSurface,
};
use gds_core::tuning::{
    cv_with_folds, fold_assignment, kfold_cv, select_aic, select_bic, select_validation,
    Criterion, GdsEstimator, TuneGrid,
};

fn scenario(m: usize, n: usize, seed: u64) -> SimScenario {
    SimScenario {
        grid: GridSpec::midpoints(m, m).unwrap(),
        ..SimScenario::new(TruthSurface::Named(BetaSurface::Beta2), PredictorProcess::P1, n, seed)
    }
}

fn base(m: usize) -> GdsConfig {
    let mut c = GdsConfig::new(BasisSpec::piecewise(m, m), GridSpec::midpoints(m, m).unwrap());
    c.variant = Variant::Separable;
    c.d1 = 1;
    c.d2 = 1;
    c
}

fn data(m: usize, n: usize, seed: u64) -> (SimScenario, SimDataset, Vec<f64>) {
    let sc = scenario(m, n, seed);
    let sigma = calibrate_noise(&sc, 2000).unwrap();
    let d = generate_dataset(&sc, sigma).unwrap();
    let w = quadrature_weights(&sc.grid, None).unwrap();
    (sc, d, w)
}

#[test]
fn leave_one_out_matches_direct_refits() {
    let m = 5;
    let (_, d, w) = data(m, 12, 4);
    let cfg = base(m);
    let bt = basis_matrix(&cfg.basis, &cfg.grid).unwrap();
    let lambdas = vec![0.4, 0.15, 0.05];
    let grid = TuneGrid::new(lambdas.clone(), vec![1.0], vec![(1, 1)]).unwrap();
    let folds: Vec<usize> = (0..d.images.len()).collect();
    let res = cv_with_folds(&d.images, &d.y, &w, &folds, &cfg, &grid).unwrap();

    let n = d.images.len();
    for (row, &lambda) in res.scores.iter().zip(&lambdas) {
        let mut total = 0.0;
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let imgs: Vec<ImageSample> = keep.iter().map(|&j| d.images[j].clone()).collect();
            let ys: Vec<f64> = keep.iter().map(|&j| d.y[j]).collect();
            let ds = build_design(&imgs, &ys, &bt, &w).unwrap();
            let mut c = cfg.clone();
            c.lambda = lambda;
            let f = fit(&ds, &c).unwrap();
            let row_i = design_matrix(&d.images[i..=i], &bt, &w).unwrap();
            let pred = f.alpha_hat + (row_i * &f.eta_hat)[0];
            total += (pred - d.y[i]).powi(2);
        }
        let oracle = total / n as f64;
        assert!(
            (row.score - oracle).abs() <= 1e-10 * (1.0 + oracle),
            "lambda {lambda}: {} vs {oracle}",
            row.score
        );
    }
    let best = res
        .scores
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .unwrap();
    assert_eq!(res.best_config.lambda, best.config.lambda);
}

#[test]
fn information_criteria_follow_their_formula() {
    let m = 6;
    let (_, d, w) = data(m, 40, 8);
    let cfg = base(m);
    let bt = basis_matrix(&cfg.basis, &cfg.grid).unwrap();
    let ds = build_design(&d.images, &d.y, &bt, &w).unwrap();
    let grid = TuneGrid::new(vec![0.5, 0.2, 0.08, 0.03], vec![1.0], vec![(1, 1)]).unwrap();
    for (res, pen) in [
        (select_aic(&ds, &cfg, &grid).unwrap(), 2.0),
        (select_bic(&ds, &cfg, &grid).unwrap(), (40f64).ln()),
    ] {
        for row in &res.scores {
            let f = fit(&ds, &row.config).unwrap();
            let rss: f64 = (0..40)
                .map(|i| (d.y[i] - f.alpha_hat - (ds.x.row(i) * &f.eta_hat)[0]).powi(2))
                .sum();
            let want = 40.0 * (rss / 40.0).ln() + pen * f.active_count() as f64;
            assert!((row.score - want).abs() < 1e-8 * want.abs().max(1.0), "{} vs {want}", row.score);
            assert_eq!(row.active, Some(f.active_count()));
        }
        let min = res.scores.iter().map(|r| r.score).fold(f64::INFINITY, f64::min);
        let chosen = res.scores.iter().find(|r| r.config == res.best_config).unwrap();
        assert_eq!(chosen.score, min);
    }
}

#[test]
fn information_criteria_need_aligned_pieces() {
    let m = 6;
    let (_, d, w) = data(m, 20, 1);
    let mut cfg = base(m);
    cfg.basis = BasisSpec::piecewise(3, 3);
    let bt = basis_matrix(&cfg.basis, &cfg.grid).unwrap();
    let ds = build_design(&d.images, &d.y, &bt, &w).unwrap();
    let grid = TuneGrid::new(vec![0.1], vec![1.0], vec![(1, 1)]).unwrap();
    assert!(select_aic(&ds, &cfg, &grid).is_err());
}

#[test]
fn validation_prefers_an_interior_lambda() {
    let m = 8;
    let (sc, d, w) = data(m, 80, 2);
    let val = generate_stream(&sc, d.sigma, 400, 99).unwrap();
    let cfg = base(m);
    let bt = basis_matrix(&cfg.basis, &cfg.grid).unwrap();
    let ds = build_design(&d.images, &d.y, &bt, &w).unwrap();
    let lmax = ds.lambda_max();
    let lambdas: Vec<f64> = (0..8).map(|k| lmax * 1.05 * 0.5f64.powi(k)).collect();
    let grid = TuneGrid::new(lambdas.clone(), vec![1.0], vec![(1, 1)]).unwrap();
    let res = select_validation(&ds, &val.images, &val.y, &cfg, &grid).unwrap();
    let chosen = res.best_config.lambda;
    assert!(chosen < lambdas[0] && chosen > lambdas[7], "selected {chosen}");
    assert_eq!(res.criterion, Criterion::ValMse);
}

#[test]
fn folds_are_balanced_and_seeded() {
    let f = fold_assignment(23, 5, 3).unwrap();
    let mut counts = [0; 5];
    for &k in &f {
        counts[k] += 1;
    }
    assert!(counts.iter().all(|&c| c == 4 || c == 5));
    assert_eq!(f, fold_assignment(23, 5, 3).unwrap());
    assert_ne!(f, fold_assignment(23, 5, 4).unwrap());
    assert!(fold_assignment(3, 5, 0).is_err());
    assert!(fold_assignment(10, 1, 0).is_err());
}

#[test]
fn cv_rejects_starved_training_folds() {
    let m = 4;
    let (_, d, w) = data(m, 3, 1);
    let grid = TuneGrid::new(vec![0.1], vec![1.0], vec![(1, 1)]).unwrap();
    let folds = vec![0, 1, 1];
    assert!(cv_with_folds(&d.images, &d.y, &w, &folds, &base(m), &grid).is_err());
}

#[test]
fn cv_is_reproducible() {
    let m = 5;
    let (_, d, w) = data(m, 30, 6);
    let grid = TuneGrid::new(vec![0.3, 0.1], vec![1.0], vec![(1, 1)]).unwrap();
    let a = kfold_cv(&d.images, &d.y, &w, 5, &base(m), &grid, 9).unwrap();
    let b = kfold_cv(&d.images, &d.y, &w, 5, &base(m), &grid, 9).unwrap();
    let sa: Vec<f64> = a.scores.iter().map(|r| r.score).collect();
    let sb: Vec<f64> = b.scores.iter().map(|r| r.score).collect();
    assert_eq!(sa, sb);
    assert_eq!(a.best_fit.eta_hat, b.best_fit.eta_hat);
}

#[test]
fn estimator_refit_pins_selected_zeros() {
    let m = 6;
    let (_, d, w) = data(m, 60, 12);
    let grid = TuneGrid::new(vec![0.4, 0.15, 0.05], vec![1.0], vec![(1, 1)]).unwrap();
    let est = GdsEstimator::new(base(m), grid, Criterion::Aic).with_refit(true);
    let (tuned, refitted) = est.fit(&d.images, &d.y, &w, None).unwrap();
    assert_eq!(refitted.config.w, 0.0);
    assert_eq!(refitted.config.lambda, tuned.best_config.lambda);
    let bt = basis_matrix(&tuned.best_config.basis, &tuned.best_config.grid).unwrap();
    let before = &bt.values * &tuned.best_fit.eta_hat;
    let after = &bt.values * &refitted.eta_hat;
    for (b, a) in before.iter().zip(after.iter()) {
        if b.abs() < tuned.best_config.zero_threshold {
            assert!(a.abs() <= 1e-9, "{a}");
        }
    }
    let no_val = GdsEstimator::new(base(m), TuneGrid::new(vec![0.1], vec![1.0], vec![(1, 1)]).unwrap(), Criterion::ValMse);
    assert!(no_val.fit(&d.images, &d.y, &w, None).is_err());
}
