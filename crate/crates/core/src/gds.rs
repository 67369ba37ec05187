//! The generalized Dantzig selector: fit, predict, surface evaluation and
//! the zero-set refit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bases::{basis_matrix, BasisMatrix, BasisSpec, GridSpec, TensorBasis};
use crate::design::{design_matrix, DesignSet, ImageSample};
use crate::diffops::{assemble_a, TransformA, Variant};
use crate::error::{GdsError, Result};
use crate::lpcore::{
    build_gds_lp, build_gds_lp_with_zero_rows, solve_lp, solve_lp_warm, LpSolution, LpStatus,
    SolveOptions, WarmStart,
};
use crate::metrics::ZERO_THRESHOLD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdsConfig {
    pub basis: BasisSpec,
    pub grid: GridSpec,
    pub variant: Variant,
    pub d1: usize,
    pub d2: usize,
    pub w: f64,
    pub lambda: f64,
    #[serde(default = "default_threshold")]
    pub zero_threshold: f64,
}

fn default_threshold() -> f64 {
    ZERO_THRESHOLD
}

impl GdsConfig {
    pub fn new(basis: BasisSpec, grid: GridSpec) -> Self {
        GdsConfig {
            basis,
            grid,
            variant: Variant::Joint,
            d1: 0,
            d2: 0,
            w: 1.0,
            lambda: 1.0,
            zero_threshold: ZERO_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(GdsError::arg("lambda must be positive"));
        }
        if !(self.w >= 0.0) || !self.w.is_finite() {
            return Err(GdsError::arg("w must be nonnegative"));
        }
        if !(self.zero_threshold > 0.0) {
            return Err(GdsError::arg("zero threshold must be positive"));
        }
        if self.d1 >= self.grid.m1 || self.d2 >= self.grid.m2 {
            return Err(GdsError::arg("difference orders must be below the grid size"));
        }
        self.basis.validate()?;
        self.grid.validate()
    }

    /// `lambda=.., w=.., d=(..)` label used in reports.
    pub fn label(&self) -> String {
        format!(
            "lambda={} w={} d=({},{}) variant={}",
            self.lambda, self.w, self.d1, self.d2, self.variant
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdsDiagnostics {
    pub objective: f64,
    pub primal_residual: f64,
    /// `max_j |(1/n) D^-1 Xc'(yc - Xc eta)|_j` at the solution.
    pub max_correlation: f64,
    pub dropped_columns: Vec<usize>,
    pub d_max: f64,
    pub sigma_min: f64,
    pub iterations: usize,
    /// Grid points pinned to zero by a refit; `None` for a plain fit.
    pub zero_set_size: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GdsFit {
    pub eta_hat: DVector<f64>,
    pub alpha_hat: f64,
    pub gamma_hat: DVector<f64>,
    pub active_set: Vec<usize>,
    pub config: GdsConfig,
    pub diagnostics: GdsDiagnostics,
}

impl GdsFit {
    pub fn active_count(&self) -> usize {
        self.active_set.len()
    }
}

/// Basis matrix and transform for a configuration; reusable across lambdas.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bt: BasisMatrix,
    pub a: TransformA,
}

impl Prepared {
    pub fn new(cfg: &GdsConfig) -> Result<Self> {
        let bt = basis_matrix(&cfg.basis, &cfg.grid)?;
        let a = assemble_a(cfg.variant, cfg.w, cfg.d1, cfg.d2, &cfg.grid, &bt)?;
        Ok(Prepared { bt, a })
    }

    /// True when `(w, d1, d2, variant, basis, grid)` match.
    pub fn matches(&self, cfg: &GdsConfig) -> bool {
        self.a.w == cfg.w
            && self.a.d1 == cfg.d1
            && self.a.d2 == cfg.d2
            && self.a.variant == cfg.variant
            && self.bt.spec == cfg.basis
            && self.bt.grid == cfg.grid
    }
}

pub fn fit(ds: &DesignSet, cfg: &GdsConfig) -> Result<GdsFit> {
    cfg.validate()?;
    let prep = Prepared::new(cfg)?;
    fit_prepared(ds, cfg, &prep)
}

pub fn fit_prepared(ds: &DesignSet, cfg: &GdsConfig, prep: &Prepared) -> Result<GdsFit> {
    fit_warm(ds, cfg, prep, None).0
}

fn fit_warm(
    ds: &DesignSet,
    cfg: &GdsConfig,
    prep: &Prepared,
    warm: Option<&WarmStart>,
) -> (Result<GdsFit>, Option<WarmStart>) {
    let run = || -> Result<(GdsFit, Option<WarmStart>)> {
        cfg.validate()?;
        if !prep.matches(cfg) {
            return Err(GdsError::arg("prepared transform does not match the configuration"));
        }
        let lp = build_gds_lp(ds, &prep.a, cfg.lambda)?;
        let opts = SolveOptions::default();
        let mut sol = solve_lp_warm(&lp, &opts, warm)?;
        if warm.is_some() && sol.status != LpStatus::Optimal {
            // a stale basis can stall; start over
            sol = solve_lp_warm(&lp, &opts, None)?;
        }
        check_status(&sol, "transform")?;
        let layout = lp.layout.as_ref().expect("gds programs carry a layout");
        let eta = sol.eta(layout);
        let next = sol.warm_start.take();
        Ok((assemble_fit(ds, cfg, &prep.a, eta, &sol, None), next))
    };
    match run() {
        Ok((fit, next)) => (Ok(fit), next),
        Err(e) => (Err(e), None),
    }
}

/// Fits along a list of lambdas with everything else fixed, restarting
/// each solve from the previous optimal basis. Results are the same as
/// separate [`fit`] calls up to solver tolerance.
pub fn fit_path(
    ds: &DesignSet,
    cfg: &GdsConfig,
    prep: &Prepared,
    lambdas: &[f64],
) -> Vec<Result<GdsFit>> {
    let mut warm: Option<WarmStart> = None;
    lambdas
        .iter()
        .map(|&lambda| {
            let mut c = cfg.clone();
            c.lambda = lambda;
            let (res, next) = fit_warm(ds, &c, prep, warm.as_ref());
            if next.is_some() {
                warm = next;
            }
            res
        })
        .collect()
}

fn check_status(sol: &LpSolution, block: &str) -> Result<()> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(GdsError::Lp {
            status: sol.status,
            detail: format!("no coefficient vector satisfies the correlation bound and the {block} equalities"),
        }),
        status => Err(GdsError::Lp {
            status,
            detail: format!(
                "after {} iterations, residual {:e}",
                sol.iterations, sol.primal_residual
            ),
        }),
    }
}

fn assemble_fit(
    ds: &DesignSet,
    cfg: &GdsConfig,
    a: &TransformA,
    eta_hat: DVector<f64>,
    sol: &LpSolution,
    zero_set_size: Option<usize>,
) -> GdsFit {
    let gamma_hat = &a.values * &eta_hat;
    let alpha_hat = ds.y_mean - (&ds.x_means * &eta_hat)[0];
    let active_set = eta_hat
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > cfg.zero_threshold)
        .map(|(j, _)| j)
        .collect();
    let diagnostics = GdsDiagnostics {
        objective: gamma_hat.lp_norm(1),
        primal_residual: sol.primal_residual,
        max_correlation: ds.max_scaled_correlation(&eta_hat),
        dropped_columns: ds.dropped.clone(),
        d_max: ds.d_max(),
        sigma_min: a.sigma_min,
        iterations: sol.iterations,
        zero_set_size,
    };
    GdsFit {
        eta_hat,
        alpha_hat,
        gamma_hat,
        active_set,
        config: cfg.clone(),
        diagnostics,
    }
}

/// `alpha + X eta` for new images on the fit grid.
pub fn predict(
    fit: &GdsFit,
    images: &[ImageSample],
    bt: &BasisMatrix,
    weights: &[f64],
) -> Result<Vec<f64>> {
    if bt.grid != fit.config.grid || bt.dim() != fit.eta_hat.len() {
        return Err(GdsError::dim("basis matrix does not belong to this fit"));
    }
    let x = design_matrix(images, bt, weights)?;
    Ok((x * &fit.eta_hat)
        .iter()
        .map(|v| v + fit.alpha_hat)
        .collect())
}

/// Estimated surface on a grid, raw and with small values set to zero.
#[derive(Debug, Clone)]
pub struct Surface {
    pub grid: GridSpec,
    pub raw: Vec<f64>,
    pub truncated: Vec<f64>,
}

pub fn evaluate_surface(fit: &GdsFit, eval_grid: &GridSpec) -> Result<Surface> {
    let basis = TensorBasis::new(&fit.config.basis)?;
    let thr = fit.config.zero_threshold;
    let mut raw = Vec::with_capacity(eval_grid.len());
    for (t, s) in eval_grid.points() {
        raw.push(basis.combine(&fit.eta_hat, t, s)?);
    }
    let truncated = raw
        .iter()
        .map(|&v| if v.abs() < thr { 0.0 } else { v })
        .collect();
    Ok(Surface {
        grid: eval_grid.clone(),
        raw,
        truncated,
    })
}

/// Grid points where the fitted surface is zero under the fit threshold.
pub fn zero_set(fit: &GdsFit, bt: &BasisMatrix) -> Vec<usize> {
    let vals = &bt.values * &fit.eta_hat;
    vals.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() < fit.config.zero_threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Second pass with `w = 0`: keeps the surface exactly zero where the first
/// fit was zero and regularises smoothness elsewhere.
pub fn refit(fit: &GdsFit, ds: &DesignSet, lambda2: f64) -> Result<GdsFit> {
    let mut cfg = fit.config.clone();
    cfg.w = 0.0;
    cfg.lambda = lambda2;
    cfg.validate()?;
    let prep = Prepared::new(&cfg)?;
    let zeros = zero_set(fit, &prep.bt);
    let rows = DMatrix::from_fn(zeros.len(), prep.bt.dim(), |r, j| {
        prep.bt.values[(zeros[r], j)]
    });
    let lp = if zeros.is_empty() {
        build_gds_lp(ds, &prep.a, lambda2)?
    } else {
        build_gds_lp_with_zero_rows(ds, &prep.a, lambda2, &rows)?
    };
    let sol = solve_lp(&lp, &SolveOptions::default())?;
    check_status(&sol, "zero-set")?;
    let layout = lp.layout.as_ref().expect("gds programs carry a layout");
    let mut eta = sol.eta(layout);
    if !zeros.is_empty() {
        project_onto_null_space(&mut eta, &rows);
    }
    Ok(assemble_fit(ds, &cfg, &prep.a, eta, &sol, Some(zeros.len())))
}

/// Removes the rounding-level component of `eta` in the row space of
/// `rows`, so that `rows * eta` vanishes to working precision.
fn project_onto_null_space(eta: &mut DVector<f64>, rows: &DMatrix<f64>) {
    let resid = rows * &*eta;
    if resid.amax() == 0.0 {
        return;
    }
    let gram = rows * rows.transpose();
    let svd = gram.svd(true, true);
    let tol = svd.singular_values.max() * 1e-12;
    if let Ok(coef) = svd.solve(&resid, tol) {
        *eta -= rows.transpose() * coef;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::GridSpec;
    use crate::design::center;

    fn toy_design() -> DesignSet {
        let x = DMatrix::from_row_slice(
            6,
            4,
            &[
                0.9, -0.2, 0.1, 0.4, //
                -0.3, 0.8, 0.5, -0.1, //
                0.2, 0.1, -0.7, 0.6, //
                -0.5, -0.4, 0.3, 0.2, //
                0.7, 0.3, 0.2, -0.8, //
                -0.1, 0.6, -0.4, 0.5,
            ],
        );
        let eta = DVector::from_vec(vec![1.0, 0.0, -0.5, 0.0]);
        let noise = DVector::from_vec(vec![0.05, -0.02, 0.01, 0.03, -0.04, 0.0]);
        center(x.clone(), &x * eta + noise).unwrap()
    }

    fn toy_config() -> GdsConfig {
        let mut cfg = GdsConfig::new(
            BasisSpec::piecewise(2, 2),
            GridSpec::endpoints(2, 2).unwrap(),
        );
        cfg.d1 = 1;
        cfg.d2 = 1;
        cfg.lambda = 0.05;
        cfg
    }

    #[test]
    fn large_lambda_gives_zero_fit() {
        let ds = toy_design();
        let mut cfg = toy_config();
        cfg.lambda = ds.lambda_max() * 1.01;
        let f = fit(&ds, &cfg).unwrap();
        assert!(f.eta_hat.iter().all(|v| v.abs() < 1e-12));
        assert!((f.alpha_hat - ds.y_mean).abs() < 1e-12);
        assert_eq!(f.active_count(), 0);
    }

    #[test]
    fn transform_geometry_and_invariants() {
        let ds = toy_design();
        let f = fit(&ds, &toy_config()).unwrap();
        assert_eq!(f.gamma_hat.len(), 5);
        assert!(f.diagnostics.max_correlation <= 0.05 + 1e-7);
        assert!((f.diagnostics.objective - f.gamma_hat.lp_norm(1)).abs() < 1e-9);
    }

    #[test]
    fn predictions_and_surface() {
        let grid = GridSpec::endpoints(2, 2).unwrap();
        let cfg = toy_config();
        let bt = basis_matrix(&cfg.basis, &grid).unwrap();
        let mut f = fit(&toy_design(), &cfg).unwrap();
        f.eta_hat = DVector::zeros(4);
        let img = ImageSample::from_fn("a", &grid, |t, s| t + s);
        let w = vec![0.25; 4];
        assert_eq!(predict(&f, &[img], &bt, &w).unwrap(), vec![f.alpha_hat]);

        f.eta_hat[2] = 1.0;
        let eval = GridSpec::midpoints(4, 4).unwrap();
        let surf = evaluate_surface(&f, &eval).unwrap();
        for (i, (t, s)) in eval.points().into_iter().enumerate() {
            let expect = if t >= 0.5 && s < 0.5 { 1.0 } else { 0.0 };
            assert_eq!(surf.raw[i], expect);
            assert_eq!(surf.truncated[i], expect);
        }
    }

    #[test]
    fn truncated_channel_zeroes_small_values() {
        let mut f = fit(&toy_design(), &toy_config()).unwrap();
        f.eta_hat = DVector::from_vec(vec![1e-9, 2.0, -1e-10, 0.0]);
        let surf = evaluate_surface(&f, &GridSpec::endpoints(2, 2).unwrap()).unwrap();
        assert_eq!(surf.raw, vec![1e-9, 2.0, -1e-10, 0.0]);
        assert_eq!(surf.truncated, vec![0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn refit_pins_the_zero_set() {
        let ds = toy_design();
        let mut cfg = toy_config();
        cfg.lambda = 0.2;
        let f = fit(&ds, &cfg).unwrap();
        let r = refit(&f, &ds, 0.2).unwrap();
        let bt = basis_matrix(&cfg.basis, &cfg.grid).unwrap();
        for i in zero_set(&f, &bt) {
            assert!(r.eta_hat[i].abs() <= 1e-9);
        }
        assert_eq!(r.config.w, 0.0);
        assert!(r.diagnostics.zero_set_size.is_some());
    }

    #[test]
    fn invalid_configuration() {
        let ds = toy_design();
        let mut cfg = toy_config();
        cfg.lambda = 0.0;
        assert!(fit(&ds, &cfg).is_err());
        cfg.lambda = 1.0;
        cfg.d1 = 2;
        assert!(fit(&ds, &cfg).is_err());
    }
}
