//! Command-line driver. Every command reads a TOML run configuration,
//! applies flag overrides, writes the resolved configuration next to its
//! outputs, and produces only deterministic CSV/TOML files.

pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bases::{basis_matrix, BasisSpec, GridSpec};
use crate::design::{build_design, quadrature_weights, ImageSample};
use crate::diffops::{assemble_a, Variant};
use crate::error::{GdsError, Result};
use crate::gds::{evaluate_surface, fit, refit, zero_set, GdsConfig, GdsFit, Prepared};
use crate::metrics::{self, SurfacePair, ZERO_THRESHOLD};
use crate::simgen::{
    calibrate_noise, generate_dataset, generate_stream, run_replicated, PredictorProcess,
    RunnerOptions, SimScenario, TruthSurface,
};
use crate::theory::{estimate_kappa, parse_matrix, transformed_design, Kappa};
use crate::tuning::{
    kfold_cv, lambda_grid, select_information, select_validation, Criterion, GdsEstimator,
    TuneGrid, TuneResult,
};
use io::{num, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Streams for the validation and test sets written by `simulate`.
const VAL_STREAM: u64 = (1 << 40) + 2;
const TEST_STREAM: u64 = (1 << 40) + 3;

const SUPP92_X: &str = include_str!("../../testdata/supp92_x.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub truth: String,
    pub process: String,
    pub n: usize,
    pub snr: f64,
    pub m1: usize,
    pub m2: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub n_pilot: usize,
    /// Skips SNR calibration.
    pub sigma: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            truth: "beta2".into(),
            process: "P1".into(),
            n: 400,
            snr: 4.0,
            m1: 20,
            m2: 20,
            validation_size: 0,
            test_size: 0,
            n_pilot: 10_000,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `piecewise` or `bspline`.
    pub basis: String,
    pub p1: usize,
    pub p2: usize,
    pub order: usize,
    pub knots: usize,
    pub variant: String,
    pub w: f64,
    /// Defaults to `2 sqrt(log p / n)`.
    pub lambda: Option<f64>,
    pub d1: usize,
    pub d2: usize,
    pub refit: bool,
    /// Refit lambda; defaults to the fit lambda.
    pub refit_lambda: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            basis: "piecewise".into(),
            p1: 20,
            p2: 20,
            order: 3,
            knots: 7,
            variant: "joint".into(),
            w: 1.0,
            lambda: None,
            d1: 0,
            d2: 0,
            refit: false,
            refit_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub criterion: String,
    /// Explicit grid; otherwise `count` multipliers in `[c_min, c_max]`.
    pub lambdas: Option<Vec<f64>>,
    pub count: usize,
    pub c_min: f64,
    pub c_max: f64,
    /// Defaults to `{1, sqrt(L)}`.
    pub ws: Option<Vec<f64>>,
    /// Defaults to the model orders.
    pub orders: Option<Vec<[usize; 2]>>,
    pub folds: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            criterion: "aic".into(),
            lambdas: None,
            count: 20,
            c_min: 0.05,
            c_max: 20.0,
            ws: None,
            orders: None,
            folds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaConfig {
    pub fixture: Option<String>,
    /// Plain-text design matrix; the transform comes from `[model]`.
    pub design: Option<PathBuf>,
    pub trials: usize,
    pub s: usize,
    pub s_prime: usize,
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig {
            fixture: None,
            design: None,
            trials: 10_000,
            s: 1,
            s_prime: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    pub reps: usize,
    pub test_size: usize,
    pub validation_size: usize,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        ReplicateConfig {
            reps: 5,
            test_size: 10_000,
            validation_size: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset directory read by fit, tune and eval.
    pub data: Option<PathBuf>,
    /// Fit directory read by eval.
    pub fit: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub model: ModelConfig,
    pub tuning: TuningConfig,
    pub kappa: KappaConfig,
    pub replicate: ReplicateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            data: None,
            fit: None,
            scenario: ScenarioConfig::default(),
            model: ModelConfig::default(),
            tuning: TuningConfig::default(),
            kappa: KappaConfig::default(),
            replicate: ReplicateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GdsError::Parse(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&io::read_text(path)?)
    }

    fn grid(&self) -> Result<GridSpec> {
        GridSpec::midpoints(self.scenario.m1, self.scenario.m2)
    }

    pub fn scenario(&self) -> Result<SimScenario> {
        let truth: TruthSurface = self.scenario.truth.parse()?;
        let process: PredictorProcess = self.scenario.process.parse()?;
        let mut sc = SimScenario::new(truth, process, self.scenario.n, self.seed);
        sc.snr_target = self.scenario.snr;
        sc.grid = self.grid()?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        let m = &self.model;
        let spec = match m.basis.as_str() {
            "piecewise" => BasisSpec::piecewise(m.p1, m.p2),
            "bspline" => BasisSpec::bspline(m.order, m.knots),
            other => return Err(GdsError::arg(format!("unknown basis '{other}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Model configuration on `grid`; lambda falls back to the default rate.
    pub fn gds_config(&self, grid: &GridSpec, n: usize) -> Result<GdsConfig> {
        let basis = self.basis()?;
        let p = basis.dim();
        let mut cfg = GdsConfig::new(basis, grid.clone());
        cfg.variant = self.model.variant.parse::<Variant>()?;
        cfg.w = self.model.w;
        cfg.d1 = self.model.d1;
        cfg.d2 = self.model.d2;
        cfg.lambda = match self.model.lambda {
            Some(l) => l,
            None => lambda_grid(n, p, 1, 2.0, 2.0)?[0],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tune_grid(&self, base: &GdsConfig, n: usize) -> Result<TuneGrid> {
        let t = &self.tuning;
        let default = TuneGrid::default_for(base, n)?;
        let lambdas = match &t.lambdas {
            Some(l) => l.clone(),
            None => lambda_grid(n, base.basis.dim(), t.count, t.c_min, t.c_max)?,
        };
        let ws = t.ws.clone().unwrap_or(default.ws);
        let orders = t
            .orders
            .as_ref()
            .map(|o| o.iter().map(|p| (p[0], p[1])).collect())
            .unwrap_or(default.orders);
        TuneGrid::new(lambdas, ws, orders)
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| GdsError::arg("no dataset directory given (--data)"))
    }
}

/// A dataset read from disk, with its quadrature weights.
pub struct Dataset {
    pub grid: GridSpec,
    pub weights: Vec<f64>,
    pub images: Vec<ImageSample>,
    pub y: Vec<f64>,
}

fn read_pair(dir: &Path, images: &str, responses: &str, grid: &GridSpec, mask: Option<&[bool]>) -> Result<(Vec<ImageSample>, Vec<f64>)> {
    let mut imgs = io::read_images(&dir.join(images), grid)?;
    if let Some(mask) = mask {
        imgs = imgs
            .into_iter()
            .map(|i| i.with_mask(mask.to_vec()))
            .collect::<Result<_>>()?;
    }
    let y = io::read_responses(&dir.join(responses), &imgs)?;
    Ok((imgs, y))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let (grid, mask) = io::read_grid(&dir.join(io::GRID))?;
    let weights = quadrature_weights(&grid, mask.as_deref())?;
    let (images, y) = read_pair(dir, io::IMAGES, io::RESPONSES, &grid, mask.as_deref())?;
    Ok(Dataset {
        grid,
        weights,
        images,
        y,
    })
}

/// Optional companion set (validation or test) next to a dataset.
fn read_companion(dir: &Path, images: &str, responses: &str, ds: &Dataset) -> Result<Option<(Vec<ImageSample>, Vec<f64>)>> {
    if !dir.join(images).exists() {
        return Ok(None);
    }
    let (_, mask) = io::read_grid(&dir.join(io::GRID))?;
    read_pair(dir, images, responses, &ds.grid, mask.as_deref()).map(Some)
}

fn write_resolved(cfg: &RunConfig) -> Result<()> {
    io::write_text(&cfg.out.join(io::RESOLVED), &cfg.to_toml())
}

// ---------------------------------------------------------------------------
// commands

/// Training data, optional validation/test sets, the truth surface and the
/// grid sidecar.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let sc = cfg.scenario()?;
    let sigma = match cfg.scenario.sigma {
        Some(s) => s,
        None => calibrate_noise(&sc, cfg.scenario.n_pilot)?,
    };
    let out = &cfg.out;
    let train = generate_dataset(&sc, sigma)?;
    io::write_grid(&out.join(io::GRID), &sc.grid, None)?;
    io::write_images(&out.join(io::IMAGES), &train.images)?;
    io::write_responses(&out.join(io::RESPONSES), &train.images, &train.y)?;
    for (size, stream, img, resp) in [
        (cfg.scenario.validation_size, VAL_STREAM, io::VAL_IMAGES, io::VAL_RESPONSES),
        (cfg.scenario.test_size, TEST_STREAM, io::TEST_IMAGES, io::TEST_RESPONSES),
    ] {
        if size > 0 {
            let d = generate_stream(&sc, sigma, size, stream)?;
            io::write_images(&out.join(img), &d.images)?;
            io::write_responses(&out.join(resp), &d.images, &d.y)?;
        }
    }
    let truth = sc.truth.on_grid(&sc.grid)?;
    let truncated: Vec<f64> = truth
        .iter()
        .map(|&v| if v.abs() < ZERO_THRESHOLD { 0.0 } else { v })
        .collect();
    io::write_surface(&out.join(io::TRUTH), &sc.grid, &truth, &truncated)?;
    let mut t = Table::new(&["sigma", "snr_target", "n"]);
    t.row(&[num(sigma), num(sc.snr_target), sc.n.to_string()]);
    t.write(&out.join("noise.csv"))?;
    write_resolved(cfg)
}

fn write_fit(out: &Path, f: &GdsFit, refit_flag: bool, note: &str) -> Result<()> {
    let c = &f.config;
    let d = &f.diagnostics;
    let mut t = Table::new(&[
        "alpha", "lambda", "w", "d1", "d2", "variant", "active", "objective", "residual",
        "max_correlation", "iterations", "refit", "zero_set", "note",
    ]);
    t.row(&[
        num(f.alpha_hat),
        num(c.lambda),
        num(c.w),
        c.d1.to_string(),
        c.d2.to_string(),
        c.variant.to_string(),
        f.active_count().to_string(),
        num(d.objective),
        num(d.primal_residual),
        num(d.max_correlation),
        d.iterations.to_string(),
        refit_flag.to_string(),
        d.zero_set_size.map_or(String::new(), |z| z.to_string()),
        note.to_string(),
    ]);
    t.write(&out.join(io::FIT_SUMMARY))?;
    let mut e = Table::new(&["index", "eta"]);
    for (j, v) in f.eta_hat.iter().enumerate() {
        e.row(&[j.to_string(), num(*v)]);
    }
    e.write(&out.join(io::ETA))?;
    let s = evaluate_surface(f, &c.grid)?;
    io::write_surface(&out.join(io::SURFACE), &s.grid, &s.raw, &s.truncated)
}

/// Fit (and optional zero-set refit) at the configured lambda.
pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let data = read_dataset(cfg.data_dir()?)?;
    let gcfg = cfg.gds_config(&data.grid, data.images.len())?;
    let bt = basis_matrix(&gcfg.basis, &gcfg.grid)?;
    let ds = build_design(&data.images, &data.y, &bt, &data.weights)?;
    let first = fit(&ds, &gcfg)?;
    let (result, note) = if cfg.model.refit {
        if zero_set(&first, &bt).is_empty() {
            (first, "vacuous refit: empty zero set")
        } else {
            let l2 = cfg.model.refit_lambda.unwrap_or(gcfg.lambda);
            (refit(&first, &ds, l2)?, "")
        }
    } else {
        (first, "")
    };
    write_fit(&cfg.out, &result, cfg.model.refit, note)?;
    write_resolved(cfg)
}

fn tune_on(cfg: &RunConfig, data: &Dataset) -> Result<TuneResult> {
    let criterion: Criterion = cfg.tuning.criterion.parse()?;
    let base = cfg.gds_config(&data.grid, data.images.len())?;
    let grid = cfg.tune_grid(&base, data.images.len())?;
    let bt = basis_matrix(&base.basis, &base.grid)?;
    match criterion {
        Criterion::ValMse => {
            let dir = cfg.data_dir()?;
            let (vi, vy) = read_companion(dir, io::VAL_IMAGES, io::VAL_RESPONSES, data)?
                .ok_or_else(|| GdsError::arg("validation selection needs val_images.csv in the dataset"))?;
            let ds = build_design(&data.images, &data.y, &bt, &data.weights)?;
            select_validation(&ds, &vi, &vy, &base, &grid)
        }
        Criterion::Aic | Criterion::Bic => {
            let ds = build_design(&data.images, &data.y, &bt, &data.weights)?;
            select_information(&ds, &base, &grid, criterion)
        }
        Criterion::Cv => kfold_cv(
            &data.images,
            &data.y,
            &data.weights,
            cfg.tuning.folds,
            &base,
            &grid,
            cfg.seed,
        ),
    }
}

/// Score table over the tuning grid plus the selected configuration.
pub fn cmd_tune(cfg: &RunConfig) -> Result<()> {
    let data = read_dataset(cfg.data_dir()?)?;
    let res = tune_on(cfg, &data)?;
    let mut t = Table::new(&["lambda", "w", "d1", "d2", "variant", "score", "active"]);
    for r in &res.scores {
        let c = &r.config;
        t.row(&[
            num(c.lambda),
            num(c.w),
            c.d1.to_string(),
            c.d2.to_string(),
            c.variant.to_string(),
            num(r.score),
            r.active.map_or(String::new(), |a| a.to_string()),
        ]);
    }
    t.write(&cfg.out.join("tune_scores.csv"))?;
    let sel = toml::to_string(&res.best_config).expect("configuration serializes");
    io::write_text(
        &cfg.out.join("tune_selected.toml"),
        &format!("criterion = \"{}\"\n{sel}", res.criterion),
    )?;
    write_fit(&cfg.out, &res.best_fit, false, "selected")?;
    write_resolved(cfg)
}

/// Prediction and surface metrics for a fit directory.
pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let fit_dir = cfg
        .fit
        .as_deref()
        .ok_or_else(|| GdsError::arg("no fit directory given (--fit)"))?;
    let data_dir = cfg.data_dir()?;
    let (grid, mask) = io::read_grid(&data_dir.join(io::GRID))?;
    let weights = quadrature_weights(&grid, mask.as_deref())?;
    let (_, beta_hat) = io::read_surface(&fit_dir.join(io::SURFACE), &grid)?;
    let summary = io::read_record(&fit_dir.join(io::FIT_SUMMARY))?;
    let alpha: f64 = summary
        .get("alpha")
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| GdsError::Parse("fit summary has no alpha".into()))?;

    let truth_path = data_dir.join(io::TRUTH);
    let truth = if truth_path.exists() {
        Some(io::read_surface(&truth_path, &grid)?.0)
    } else {
        None
    };
    let test = if data_dir.join(io::TEST_IMAGES).exists() {
        Some(read_pair(data_dir, io::TEST_IMAGES, io::TEST_RESPONSES, &grid, mask.as_deref())?)
    } else {
        None
    };
    if truth.is_none() && test.is_none() {
        return Err(GdsError::arg(
            "evaluation needs truth.csv or a test set in the dataset directory",
        ));
    }
    let mut t = Table::new(&["metric", "value"]);
    let wbeta: Vec<f64> = beta_hat.iter().zip(&weights).map(|(b, w)| b * w).collect();
    if let Some((imgs, y)) = &test {
        let y_hat: Vec<f64> = imgs
            .iter()
            .map(|img| alpha + img.values.iter().zip(&wbeta).map(|(x, b)| x * b).sum::<f64>())
            .collect();
        let mse = metrics::mse(&y_hat, y)?;
        let (rmse, mae) = metrics::rmse_mae(&y_hat, y)?;
        t.row(&["mse".to_string(), num(mse)]);
        t.row(&["rmse".to_string(), num(rmse)]);
        t.row(&["mae".to_string(), num(mae)]);
    }
    if let Some(truth) = &truth {
        let pair = SurfacePair::new(truth, &beta_hat, &weights)?;
        if let Ok(r) = metrics::rise(&pair) {
            t.row(&["rise".to_string(), num(r)]);
        }
        if let Ok(r) = metrics::zero_recovery_r1(&pair, ZERO_THRESHOLD) {
            t.row(&["r1".to_string(), num(r)]);
        }
        if let Ok(r) = metrics::nonzero_recovery_r2(&pair, ZERO_THRESHOLD) {
            t.row(&["r2".to_string(), num(r)]);
        }
    }
    t.write(&cfg.out.join("metrics.csv"))?;
    write_resolved(cfg)
}

/// The bundled 2 x 2 example: design, grid and transform.
pub fn supp92_design() -> Result<nalgebra::DMatrix<f64>> {
    let x = parse_matrix(SUPP92_X)?;
    let grid = GridSpec::endpoints(2, 2)?;
    let bt = basis_matrix(&BasisSpec::piecewise(2, 2), &grid)?;
    let a = assemble_a(Variant::Joint, 1.0, 1, 1, &grid, &bt)?;
    transformed_design(&x, &a)
}

/// Monte-Carlo restricted eigenvalues for the fixture or a design file.
pub fn cmd_kappa(cfg: &RunConfig) -> Result<()> {
    let k = &cfg.kappa;
    let v = match (&k.fixture, &k.design) {
        (Some(name), _) if name == "supp92" => supp92_design()?,
        (Some(name), _) => return Err(GdsError::arg(format!("unknown fixture '{name}'"))),
        (None, Some(path)) => {
            let x = parse_matrix(&io::read_text(path)?)?;
            let grid = cfg.grid()?;
            let gcfg = cfg.gds_config(&grid, x.nrows())?;
            let prep = Prepared::new(&gcfg)?;
            transformed_design(&x, &prep.a)?
        }
        (None, None) => {
            return Err(GdsError::arg("kappa needs --fixture or a design file"));
        }
    };
    let mut t = Table::new(&["which", "s", "s_prime", "value", "trials", "seed"]);
    for which in [Kappa::Kappa1, Kappa::Kappa2] {
        let e = estimate_kappa(&v, which, k.s, k.s_prime, k.trials, cfg.seed)?;
        t.row(&[
            e.which.to_string(),
            e.s.to_string(),
            e.s_prime.to_string(),
            num(e.value),
            e.trials.to_string(),
            e.seed.to_string(),
        ]);
    }
    t.write(&cfg.out.join("kappa.csv"))?;
    write_resolved(cfg)
}

/// Replicated study with the configured estimator.
pub fn cmd_replicate(cfg: &RunConfig) -> Result<()> {
    let sc = cfg.scenario()?;
    let base = cfg.gds_config(&sc.grid, sc.n)?;
    let grid = cfg.tune_grid(&base, sc.n)?;
    let criterion: Criterion = cfg.tuning.criterion.parse()?;
    let mut est = GdsEstimator::new(base, grid, criterion).with_refit(cfg.model.refit);
    est.folds = cfg.tuning.folds;
    est.seed = cfg.seed;
    let opts = RunnerOptions {
        n_reps: cfg.replicate.reps,
        test_size: cfg.replicate.test_size,
        validation_size: cfg.replicate.validation_size,
        n_pilot: cfg.scenario.n_pilot,
        sigma: cfg.scenario.sigma,
    };
    let report = run_replicated(&sc, &[&est], &opts)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), num);
    let mut rows = Table::new(&["estimator", "replicate", "mse", "rise", "r1", "r2", "error"]);
    for r in &report.rows {
        rows.row(&[
            r.estimator.clone(),
            r.replicate.to_string(),
            opt(r.mse),
            opt(r.rise),
            opt(r.r1),
            opt(r.r2),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    rows.write(&cfg.out.join("replicates.csv"))?;
    let mut s = Table::new(&[
        "estimator", "completed", "failed", "sigma", "mse", "mse_se", "rise", "rise_se", "r1",
        "r1_se", "r2", "r2_se",
    ]);
    for r in &report.summary {
        s.row(&[
            r.estimator.clone(),
            r.completed.to_string(),
            r.failed.to_string(),
            num(report.sigma),
            opt(r.mse.mean),
            opt(r.mse.se),
            opt(r.rise.mean),
            opt(r.rise.se),
            opt(r.r1.mean),
            opt(r.r1.se),
            opt(r.r2.mean),
            opt(r.r2.se),
        ]);
    }
    s.write(&cfg.out.join("summary.csv"))?;
    write_resolved(cfg)
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(name = "gds", version, about = "Generalized Dantzig selector for scalar-on-image regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated dataset.
    Simulate(Flags),
    /// Fit at a fixed lambda.
    Fit(Flags),
    /// Select lambda, w and orders.
    Tune(Flags),
    /// Metrics for a fit directory.
    Eval(Flags),
    /// Restricted eigenvalue estimates.
    Kappa(Flags),
    /// Replicated simulation study.
    Replicate(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub w: Option<f64>,
    /// `d1,d2`
    #[arg(long)]
    pub orders: Option<String>,
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub refit: bool,
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
}

fn parse_orders(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(GdsError::arg(format!("bad orders '{s}'"))),
        },
        _ => Err(GdsError::arg(format!("orders must look like d1,d2, got '{s}'"))),
    }
}

impl Flags {
    /// Config file (or defaults) with the flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(f) = &self.fit {
            cfg.fit = Some(f.clone());
        }
        if let Some(l) = self.lambda {
            cfg.model.lambda = Some(l);
        }
        if let Some(w) = self.w {
            cfg.model.w = w;
        }
        if let Some(o) = &self.orders {
            let (d1, d2) = parse_orders(o)?;
            cfg.model.d1 = d1;
            cfg.model.d2 = d2;
        }
        if let Some(b) = &self.basis {
            cfg.model.basis = b.clone();
        }
        if let Some(v) = &self.variant {
            cfg.model.variant = v.clone();
        }
        if self.refit {
            cfg.model.refit = true;
        }
        if let Some(c) = &self.criterion {
            cfg.tuning.criterion = c.clone();
        }
        if let Some(t) = self.trials {
            cfg.kappa.trials = t;
        }
        if let Some(f) = &self.fixture {
            cfg.kappa.fixture = Some(f.clone());
        }
        if let Some(r) = self.reps {
            cfg.replicate.reps = r;
        }
        Ok(cfg)
    }
}

pub fn exit_code(e: &GdsError) -> i32 {
    match e {
        GdsError::Io { .. } => EXIT_IO,
        GdsError::Lp { .. } | GdsError::RankDeficient { .. } | GdsError::Degenerate(_) => {
            EXIT_NUMERICAL
        }
        GdsError::Candidate { source, .. } => exit_code(source),
        GdsError::Domain { .. }
        | GdsError::Argument(_)
        | GdsError::Dimension(_)
        | GdsError::Parse(_) => EXIT_USAGE,
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    let (flags, f): (&Flags, fn(&RunConfig) -> Result<()>) = match cmd {
        Command::Simulate(x) => (x, cmd_simulate),
        Command::Fit(x) => (x, cmd_fit),
        Command::Tune(x) => (x, cmd_tune),
        Command::Eval(x) => (x, cmd_eval),
        Command::Kappa(x) => (x, cmd_kappa),
        Command::Replicate(x) => (x, cmd_replicate),
    };
    f(&flags.resolve()?)
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
