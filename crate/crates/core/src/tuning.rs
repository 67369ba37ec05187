//! Choosing lambda, w and the difference orders: validation sets,
//! information criteria and k-fold cross-validation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::basis_matrix;
use crate::design::{build_design, DesignSet, ImageSample};
use crate::diffops::transform_rows;
use crate::error::{GdsError, Result};
use crate::gds::{evaluate_surface, fit_path, fit_prepared, predict, refit, GdsConfig, GdsFit, Prepared};
use crate::metrics;
use crate::simgen::{Estimate, Estimator, TrainingData};

/// Score used when the training residuals vanish and `ln(RSS/n)` would be
/// minus infinity.
pub const RSS_ZERO_SCORE: f64 = -1e300;

/// `c_k sqrt(log p / n)` with `c_k` log-spaced over `[c_min, c_max]`,
/// largest first.
pub fn lambda_grid(n: usize, p: usize, count: usize, c_min: f64, c_max: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(GdsError::arg("lambda grid needs at least one point"));
    }
    if !(c_min > 0.0 && c_min <= c_max && c_max.is_finite()) {
        return Err(GdsError::arg("need 0 < c_min <= c_max"));
    }
    if p < 2 {
        return Err(GdsError::arg("log p must be positive (p >= 2)"));
    }
    if n == 0 {
        return Err(GdsError::arg("n must be positive"));
    }
    let rate = ((p as f64).ln() / n as f64).sqrt();
    if count == 1 {
        return Ok(vec![c_min * rate]);
    }
    let (lo, hi) = (c_min.ln(), c_max.ln());
    Ok((0..count)
        .map(|k| {
            let f = k as f64 / (count - 1) as f64;
            (hi + f * (lo - hi)).exp() * rate
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    /// Positive, strictly descending.
    pub lambdas: Vec<f64>,
    pub ws: Vec<f64>,
    pub orders: Vec<(usize, usize)>,
}

impl TuneGrid {
    pub fn new(mut lambdas: Vec<f64>, ws: Vec<f64>, orders: Vec<(usize, usize)>) -> Result<Self> {
        lambdas.sort_by(|a, b| b.total_cmp(a));
        lambdas.dedup();
        let g = TuneGrid { lambdas, ws, orders };
        g.validate()?;
        Ok(g)
    }

    /// 20 multipliers in `[0.05, 20]`, `w` in `{1, sqrt(L)}` and the orders
    /// of `base`.
    pub fn default_for(base: &GdsConfig, n: usize) -> Result<Self> {
        base.validate()?;
        let lambdas = lambda_grid(n, base.basis.dim(), 20, 0.05, 20.0)?;
        let l = transform_rows(base.variant, base.grid.m1, base.grid.m2, base.d1, base.d2);
        TuneGrid::new(lambdas, vec![1.0, (l as f64).sqrt()], vec![(base.d1, base.d2)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.ws.is_empty() || self.orders.is_empty() {
            return Err(GdsError::arg("tuning grid has an empty axis"));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(GdsError::arg("lambdas must be positive"));
        }
        if self.lambdas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(GdsError::arg("lambdas must be strictly descending"));
        }
        if self.ws.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(GdsError::arg("weights must be nonnegative"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.ws.len() * self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One base configuration per `(w, orders)` pair, in grid order.
    fn groups(&self, base: &GdsConfig) -> Vec<GdsConfig> {
        let mut out = Vec::new();
        for &(d1, d2) in &self.orders {
            for &w in &self.ws {
                let mut c = base.clone();
                c.w = w;
                c.d1 = d1;
                c.d2 = d2;
                out.push(c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    ValMse,
    Aic,
    Bic,
    Cv,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::ValMse => "val",
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
            Criterion::Cv => "cv",
        })
    }
}

impl FromStr for Criterion {
    type Err = GdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "val" | "val_mse" | "validation" => Ok(Criterion::ValMse),
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "cv" => Ok(Criterion::Cv),
            other => Err(GdsError::Parse(format!("unknown criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreRow {
    pub config: GdsConfig,
    pub score: f64,
    /// Active-set size of the fit on the full training data; `None` for
    /// cross-validation, which never fits the full data per candidate.
    pub active: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best_config: GdsConfig,
    pub scores: Vec<ScoreRow>,
    pub criterion: Criterion,
    /// The selected configuration fitted on all training data.
    pub best_fit: GdsFit,
}

/// Index of the minimal score; equal scores go to the larger lambda, then
/// to the earlier row.
fn argmin(rows: &[ScoreRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        if r.score < b.score || (r.score == b.score && r.config.lambda > b.config.lambda) {
            best = i;
        }
    }
    best
}

fn candidate_err(cfg: &GdsConfig, e: GdsError) -> GdsError {
    GdsError::Candidate {
        config: cfg.label(),
        source: Box::new(e),
    }
}

/// Fits every candidate on `ds`, one warm-started path per `(w, orders)`.
fn fit_grid(ds: &DesignSet, base: &GdsConfig, grid: &TuneGrid) -> Result<Vec<GdsFit>> {
    grid.validate()?;
    let groups = grid.groups(base);
    let per_group: Vec<Result<Vec<GdsFit>>> = groups
        .par_iter()
        .map(|cfg| {
            cfg.validate().map_err(|e| candidate_err(cfg, e))?;
            let prep = Prepared::new(cfg).map_err(|e| candidate_err(cfg, e))?;
            fit_path(ds, cfg, &prep, &grid.lambdas)
                .into_iter()
                .zip(&grid.lambdas)
                .map(|(r, &lambda)| {
                    r.map_err(|e| {
                        let mut c = cfg.clone();
                        c.lambda = lambda;
                        candidate_err(&c, e)
                    })
                })
                .collect()
        })
        .collect();
    let mut fits = Vec::with_capacity(grid.len());
    for g in per_group {
        fits.extend(g?);
    }
    Ok(fits)
}

fn finish(fits: Vec<GdsFit>, scores: Vec<f64>, criterion: Criterion) -> TuneResult {
    let rows: Vec<ScoreRow> = fits
        .iter()
        .zip(scores)
        .map(|(f, score)| ScoreRow {
            config: f.config.clone(),
            score,
            active: Some(f.active_count()),
        })
        .collect();
    let best = argmin(&rows);
    let best_fit = fits.into_iter().nth(best).expect("nonempty grid");
    TuneResult {
        best_config: rows[best].config.clone(),
        scores: rows,
        criterion,
        best_fit,
    }
}

/// Fits every configuration on `train` and keeps the one with the smallest
/// mean squared prediction error on the validation images.
pub fn select_validation(
    train: &DesignSet,
    val_images: &[ImageSample],
    val_y: &[f64],
    base: &GdsConfig,
    grid: &TuneGrid,
) -> Result<TuneResult> {
    if val_images.len() != val_y.len() {
        return Err(GdsError::dim("validation images and responses differ in length"));
    }
    if val_images.is_empty() {
        return Err(GdsError::arg("validation set is empty"));
    }
    let bt = basis_matrix(&base.basis, &base.grid)?;
    let fits = fit_grid(train, base, grid)?;
    let scores = fits
        .iter()
        .map(|f| {
            let y_hat = predict(f, val_images, &bt, &train.quad_weights)?;
            metrics::mse(&y_hat, val_y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(fits, scores, Criterion::ValMse))
}

fn training_rss(ds: &DesignSet, eta: &DVector<f64>) -> f64 {
    (&ds.yc - &ds.xc * eta).norm_squared()
}

/// `n ln(RSS/n) + k df`, guarded against a zero RSS.
pub fn information_score(n: usize, rss: f64, df: usize, penalty: f64) -> f64 {
    if rss <= 0.0 {
        log::warn!("training residuals vanish; scoring as {RSS_ZERO_SCORE:e}");
        return RSS_ZERO_SCORE;
    }
    let n = n as f64;
    n * (rss / n).ln() + penalty * df as f64
}

/// AIC (or BIC) with the active-set size as degrees of freedom. Only
/// meaningful when each grid point carries its own piecewise constant.
pub fn select_information(
    train: &DesignSet,
    base: &GdsConfig,
    grid: &TuneGrid,
    criterion: Criterion,
) -> Result<TuneResult> {
    let penalty = match criterion {
        Criterion::Aic => 2.0,
        Criterion::Bic => (train.n() as f64).ln(),
        other => return Err(GdsError::arg(format!("{other} is not an information criterion"))),
    };
    check_aligned(base)?;
    let fits = fit_grid(train, base, grid)?;
    let scores = fits
        .iter()
        .map(|f| information_score(train.n(), training_rss(train, &f.eta_hat), f.active_count(), penalty))
        .collect();
    Ok(finish(fits, scores, criterion))
}

pub fn select_aic(train: &DesignSet, base: &GdsConfig, grid: &TuneGrid) -> Result<TuneResult> {
    select_information(train, base, grid, Criterion::Aic)
}

pub fn select_bic(train: &DesignSet, base: &GdsConfig, grid: &TuneGrid) -> Result<TuneResult> {
    select_information(train, base, grid, Criterion::Bic)
}

/// Piecewise basis with one piece per grid point, i.e. an identity basis
/// matrix.
fn check_aligned(cfg: &GdsConfig) -> Result<()> {
    if !cfg.basis.is_piecewise() || cfg.basis.dims() != (cfg.grid.m1, cfg.grid.m2) {
        return Err(GdsError::arg(
            "information criteria need a piecewise basis with one piece per grid point",
        ));
    }
    let bt = basis_matrix(&cfg.basis, &cfg.grid)?;
    let p = bt.dim();
    let identity = bt.values.nrows() == p
        && bt
            .values
            .iter()
            .enumerate()
            .all(|(k, &v)| v == if k % p == k / p { 1.0 } else { 0.0 });
    if !identity {
        return Err(GdsError::arg("grid points are not aligned with the pieces"));
    }
    Ok(())
}

/// Seeded assignment of `n` samples to `k` folds of near-equal size.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(GdsError::arg(format!("cannot split {n} samples into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Cross-validation over explicit fold labels `0..k`.
pub fn cv_with_folds(
    images: &[ImageSample],
    y: &[f64],
    weights: &[f64],
    folds: &[usize],
    base: &GdsConfig,
    grid: &TuneGrid,
) -> Result<TuneResult> {
    let n = images.len();
    if y.len() != n || folds.len() != n {
        return Err(GdsError::dim("images, responses and folds differ in length"));
    }
    grid.validate()?;
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(GdsError::arg("need at least two folds"));
    }
    let bt = basis_matrix(&base.basis, &base.grid)?;
    let mut totals = vec![0.0; grid.len()];
    for fold in 0..k {
        let (mut tr_img, mut tr_y, mut te_img, mut te_y) = (vec![], vec![], vec![], vec![]);
        for i in 0..n {
            if folds[i] == fold {
                te_img.push(images[i].clone());
                te_y.push(y[i]);
            } else {
                tr_img.push(images[i].clone());
                tr_y.push(y[i]);
            }
        }
        if te_img.is_empty() {
            return Err(GdsError::arg(format!("fold {fold} is empty")));
        }
        if tr_img.len() < 2 {
            return Err(GdsError::arg(format!(
                "fold {fold} leaves fewer than two training samples"
            )));
        }
        let ds = build_design(&tr_img, &tr_y, &bt, weights)?;
        let fits = fit_grid(&ds, base, grid)?;
        for (t, f) in totals.iter_mut().zip(&fits) {
            let y_hat = predict(f, &te_img, &bt, weights)?;
            *t += metrics::mse(&y_hat, &te_y)?;
        }
    }
    let mut rows: Vec<ScoreRow> = Vec::with_capacity(grid.len());
    for cfg in grid.groups(base) {
        for &lambda in &grid.lambdas {
            let mut c = cfg.clone();
            c.lambda = lambda;
            rows.push(ScoreRow {
                config: c,
                score: 0.0,
                active: None,
            });
        }
    }
    for (r, t) in rows.iter_mut().zip(&totals) {
        r.score = t / k as f64;
    }
    let best = argmin(&rows);
    let best_config = rows[best].config.clone();
    let full = build_design(images, y, &bt, weights)?;
    let prep = Prepared::new(&best_config)?;
    let best_fit =
        fit_prepared(&full, &best_config, &prep).map_err(|e| candidate_err(&best_config, e))?;
    Ok(TuneResult {
        best_config,
        scores: rows,
        criterion: Criterion::Cv,
        best_fit,
    })
}

/// k-fold cross-validation; the score is the mean over folds of the
/// held-out MSE.
pub fn kfold_cv(
    images: &[ImageSample],
    y: &[f64],
    weights: &[f64],
    k: usize,
    base: &GdsConfig,
    grid: &TuneGrid,
    seed: u64,
) -> Result<TuneResult> {
    let folds = fold_assignment(images.len(), k, seed)?;
    cv_with_folds(images, y, weights, &folds, base, grid)
}

/// Tuned GDS as a study estimator: select on the training replicate, then
/// optionally refit at the selected lambda.
#[derive(Debug, Clone)]
pub struct GdsEstimator {
    pub base: GdsConfig,
    pub grid: TuneGrid,
    pub criterion: Criterion,
    pub refit: bool,
    pub folds: usize,
    pub seed: u64,
}

impl GdsEstimator {
    pub fn new(base: GdsConfig, grid: TuneGrid, criterion: Criterion) -> Self {
        GdsEstimator {
            base,
            grid,
            criterion,
            refit: false,
            folds: 10,
            seed: 0,
        }
    }

    pub fn with_refit(mut self, refit: bool) -> Self {
        self.refit = refit;
        self
    }

    /// Selection followed by the optional refit.
    pub fn fit(
        &self,
        images: &[ImageSample],
        y: &[f64],
        weights: &[f64],
        validation: Option<(&[ImageSample], &[f64])>,
    ) -> Result<(TuneResult, GdsFit)> {
        let bt = basis_matrix(&self.base.basis, &self.base.grid)?;
        let ds = build_design(images, y, &bt, weights)?;
        let tuned = match self.criterion {
            Criterion::ValMse => {
                let (vi, vy) = validation
                    .ok_or_else(|| GdsError::arg("validation selection needs a validation set"))?;
                select_validation(&ds, vi, vy, &self.base, &self.grid)?
            }
            Criterion::Aic | Criterion::Bic => {
                select_information(&ds, &self.base, &self.grid, self.criterion)?
            }
            Criterion::Cv => {
                kfold_cv(images, y, weights, self.folds, &self.base, &self.grid, self.seed)?
            }
        };
        let fit = if self.refit {
            refit(&tuned.best_fit, &ds, tuned.best_config.lambda)?
        } else {
            tuned.best_fit.clone()
        };
        Ok((tuned, fit))
    }
}

impl Estimator for GdsEstimator {
    fn name(&self) -> String {
        format!("gds-{}{}", self.criterion, if self.refit { "-refit" } else { "" })
    }

    fn estimate(&self, data: &TrainingData) -> Result<Estimate> {
        let val = (!data.validation.images.is_empty())
            .then(|| (&data.validation.images[..], &data.validation.y[..]));
        let (_, fit) = self.fit(&data.train.images, &data.train.y, data.weights, val)?;
        let surface = evaluate_surface(&fit, &data.scenario.grid)?;
        Ok(Estimate {
            alpha: fit.alpha_hat,
            beta_grid: surface.truncated,
        })
    }
}
