use std::ffi::CStr;
use std::ptr;

use gds_core::bases::{basis_matrix, BasisSpec, GridSpec};
use gds_core::design::{build_design, quadrature_weights};
use gds_core::gds::{fit, GdsConfig};
use gds_core::simgen::{generate_dataset, PredictorProcess, SimScenario, TruthSurface};
use gds_ffi::*;
use nalgebra::DVector;

const M: usize = 10;

fn sample() -> (usize, Vec<f64>, Vec<f64>) {
    let mut coef = DVector::zeros(25);
    coef[6] = 1.0;
    coef[7] = 1.0;
    let truth = TruthSurface::Coefficients {
        spec: BasisSpec::piecewise(5, 5),
        coef,
    };
    let mut sc = SimScenario::new(truth, PredictorProcess::P1, 60, 3);
    sc.grid = GridSpec::midpoints(M, M).unwrap();
    let ds = generate_dataset(&sc, 0.05).unwrap();
    let flat = ds.images.iter().flat_map(|i| i.values.clone()).collect();
    (ds.images.len(), flat, ds.y)
}

fn last_error() -> String {
    let p = gds_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn options() -> GdsFitOptions {
    let mut o = gds_fit_options_default(5, 5);
    o.lambda = 0.05;
    o
}

unsafe fn dataset() -> *mut GdsDataset {
    let (n, imgs, y) = sample();
    let mut ds = ptr::null_mut();
    assert_eq!(gds_dataset_new(n, M, M, imgs.as_ptr(), y.as_ptr(), &mut ds), GdsStatus::Ok);
    assert!(!ds.is_null());
    ds
}

#[test]
fn fit_matches_library() {
    unsafe {
        let ds = dataset();
        let opts = options();
        let mut model = ptr::null_mut();
        assert_eq!(gds_fit(ds, &opts, &mut model), GdsStatus::Ok);
        assert!(gds_last_error().is_null());

        let (_, imgs, y) = sample();
        let grid = GridSpec::midpoints(M, M).unwrap();
        let images: Vec<_> = imgs
            .chunks(M * M)
            .enumerate()
            .map(|(i, v)| gds_core::design::ImageSample::new(format!("s{i}"), M, M, v.to_vec()).unwrap())
            .collect();
        let mut cfg = GdsConfig::new(BasisSpec::piecewise(5, 5), grid.clone());
        cfg.lambda = 0.05;
        let bt = basis_matrix(&cfg.basis, &grid).unwrap();
        let w = quadrature_weights(&grid, None).unwrap();
        let design = build_design(&images, &y, &bt, &w).unwrap();
        let direct = fit(&design, &cfg).unwrap();

        let mut needed = 0usize;
        assert_eq!(gds_model_eta(model, ptr::null_mut(), 0, &mut needed), GdsStatus::BufferTooSmall);
        assert_eq!(needed, 25);
        assert!(last_error().contains("25"));
        let mut eta = vec![0.0; needed];
        assert_eq!(gds_model_eta(model, eta.as_mut_ptr(), eta.len(), ptr::null_mut()), GdsStatus::Ok);
        assert_eq!(eta.as_slice(), direct.eta_hat.as_slice());

        let mut alpha = f64::NAN;
        assert_eq!(gds_model_alpha(model, &mut alpha), GdsStatus::Ok);
        assert_eq!(alpha, direct.alpha_hat);

        let mut active = 0usize;
        assert_eq!(gds_model_active_count(model, &mut active), GdsStatus::Ok);
        assert_eq!(active, direct.active_count());

        let mut surf = vec![0.0; M * M];
        assert_eq!(gds_model_surface(model, surf.as_mut_ptr(), surf.len(), &mut needed), GdsStatus::Ok);
        assert_eq!(needed, M * M);

        let mut pred = vec![0.0; 4];
        assert_eq!(gds_model_predict(model, 4, imgs.as_ptr(), pred.as_mut_ptr()), GdsStatus::Ok);
        for (p, yy) in pred.iter().zip(&y) {
            assert!((p - yy).abs() < 0.5, "{p} vs {yy}");
        }

        gds_model_free(model);
        gds_dataset_free(ds);
    }
}

#[test]
fn refit_option_runs() {
    unsafe {
        let ds = dataset();
        let mut opts = options();
        opts.variant = GdsVariant::Separable;
        opts.d1 = 1;
        opts.d2 = 1;
        opts.refit = true;
        let mut model = ptr::null_mut();
        let st = gds_fit(ds, &opts, &mut model);
        assert!(st == GdsStatus::Ok || st == GdsStatus::Numerical, "{st:?}");
        if st == GdsStatus::Ok {
            let mut alpha = 0.0;
            assert_eq!(gds_model_alpha(model, &mut alpha), GdsStatus::Ok);
            assert!(alpha.is_finite());
        } else {
            assert!(model.is_null());
            assert!(!last_error().is_empty());
        }
        gds_model_free(model);
        gds_dataset_free(ds);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut ds = ptr::null_mut();
        let y = [0.0; 3];
        assert_eq!(gds_dataset_new(3, 2, 2, ptr::null(), y.as_ptr(), &mut ds), GdsStatus::NullPointer);
        assert!(ds.is_null());
        assert!(last_error().contains("images"));

        let mut model = ptr::null_mut();
        assert_eq!(gds_fit(ptr::null(), &options(), &mut model), GdsStatus::NullPointer);
        assert!(last_error().contains("dataset"));
        assert_eq!(gds_model_alpha(ptr::null(), ptr::null_mut()), GdsStatus::NullPointer);

        gds_model_free(ptr::null_mut());
        gds_dataset_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments_are_reported() {
    unsafe {
        let mut ds = ptr::null_mut();
        let x = [0.0; 4];
        assert_eq!(gds_dataset_new(1, 2, 2, x.as_ptr(), x.as_ptr(), &mut ds), GdsStatus::InvalidArgument);
        assert_eq!(
            gds_dataset_new(usize::MAX, 2, 2, x.as_ptr(), x.as_ptr(), &mut ds),
            GdsStatus::Dimension
        );

        let ds = dataset();
        let mut opts = options();
        opts.lambda = -1.0;
        let mut model = ptr::null_mut();
        assert_eq!(gds_fit(ds, &opts, &mut model), GdsStatus::InvalidArgument);
        assert!(model.is_null());
        assert!(!last_error().is_empty());

        let mut opts = options();
        opts.p1 = 0;
        let st = gds_fit(ds, &opts, &mut model);
        assert_ne!(st, GdsStatus::Ok);
        assert!(!last_error().is_empty());
        gds_dataset_free(ds);
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(gds_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_entry_points() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gds.h")).unwrap();
    for name in [
        "gds_dataset_new",
        "gds_fit",
        "gds_model_eta",
        "gds_model_predict",
        "gds_last_error",
        "GDS_STATUS_OK",
    ] {
        assert!(h.contains(name), "{name}");
    }
}
