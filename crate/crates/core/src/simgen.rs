//! Simulation scenarios: true surfaces, random image predictors,
//! SNR-calibrated noise and a replicated study runner.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{BSplineBasis1d, BasisSpec, GridSpec, TensorBasis};
use crate::design::{quadrature_weights, ImageSample};
use crate::error::{GdsError, Result};
use crate::metrics::{self, SurfacePair, ZERO_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaSurface {
    Beta1,
    Beta2,
    Beta3,
}

impl BetaSurface {
    pub fn eval(self, t: f64, s: f64) -> f64 {
        beta_eval(self, t, s)
    }
}

impl fmt::Display for BetaSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BetaSurface::Beta1 => "beta1",
            BetaSurface::Beta2 => "beta2",
            BetaSurface::Beta3 => "beta3",
        })
    }
}

impl FromStr for BetaSurface {
    type Err = GdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta1" | "1" => Ok(BetaSurface::Beta1),
            "beta2" | "2" => Ok(BetaSurface::Beta2),
            "beta3" | "3" => Ok(BetaSurface::Beta3),
            other => Err(GdsError::Parse(format!("unknown surface '{other}'"))),
        }
    }
}

fn phi1(x: f64) -> f64 {
    if x <= 0.25 {
        (PI * x).sin() - (PI / 4.0).sin()
    } else if x >= 0.75 {
        (3.0 * PI / 4.0).sin() - (PI * x).sin()
    } else {
        0.0
    }
}

fn phi2(x: f64) -> f64 {
    if (0.3..=0.7).contains(&x) {
        100.0 * (((x - 0.5) * (x - 0.5)).exp() - 0.04f64.exp())
    } else {
        0.0
    }
}

/// Closed-form true surfaces on the unit square.
///
/// The two discs of the third surface overlap in a thin lens; there both
/// terms are added, which keeps the surface continuous and antisymmetric.
pub fn beta_eval(id: BetaSurface, t: f64, s: f64) -> f64 {
    match id {
        BetaSurface::Beta1 => phi1(t) * phi1(s),
        BetaSurface::Beta2 => phi2(t) * phi2(s),
        BetaSurface::Beta3 => {
            let r1 = (t - 0.6).powi(2) + (s - 0.4).powi(2);
            let r2 = (t - 0.4).powi(2) + (s - 0.6).powi(2);
            let mut v = 0.0;
            if r1 <= 0.04 {
                v += 200.0 * (r1 - 0.04);
            }
            if r2 <= 0.04 {
                v += 200.0 * (0.04 - r2);
            }
            v
        }
    }
}

/// Truth used to generate responses.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthSurface {
    Named(BetaSurface),
    Zero,
    /// A surface inside a basis span.
    Coefficients { spec: BasisSpec, coef: DVector<f64> },
}

impl TruthSurface {
    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        match self {
            TruthSurface::Named(id) => Ok(beta_eval(*id, t, s)),
            TruthSurface::Zero => Ok(0.0),
            TruthSurface::Coefficients { spec, coef } => {
                TensorBasis::new(spec)?.combine(coef, t, s)
            }
        }
    }

    pub fn on_grid(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        match self {
            TruthSurface::Coefficients { spec, coef } => {
                let basis = TensorBasis::new(spec)?;
                grid.points()
                    .into_iter()
                    .map(|(t, s)| basis.combine(coef, t, s))
                    .collect()
            }
            _ => grid.points().into_iter().map(|(t, s)| self.eval(t, s)).collect(),
        }
    }
}

impl fmt::Display for TruthSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruthSurface::Named(id) => write!(f, "{id}"),
            TruthSurface::Zero => f.write_str("zero"),
            TruthSurface::Coefficients { coef, .. } => write!(f, "basis[{}]", coef.len()),
        }
    }
}

impl FromStr for TruthSurface {
    type Err = GdsError;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("zero") {
            Ok(TruthSurface::Zero)
        } else {
            s.parse().map(TruthSurface::Named)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorProcess {
    P1,
    P2,
}

impl PredictorProcess {
    pub fn order(self) -> usize {
        match self {
            PredictorProcess::P1 => 4,
            PredictorProcess::P2 => 5,
        }
    }

    pub fn interior_knots(self) -> usize {
        match self {
            PredictorProcess::P1 => 6,
            PredictorProcess::P2 => 15,
        }
    }

    pub fn m(self) -> usize {
        self.order() + self.interior_knots()
    }

    pub fn basis(self) -> BSplineBasis1d {
        BSplineBasis1d::uniform(self.order(), self.interior_knots())
    }
}

impl fmt::Display for PredictorProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictorProcess::P1 => "P1",
            PredictorProcess::P2 => "P2",
        })
    }
}

impl FromStr for PredictorProcess {
    type Err = GdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P1" | "1" => Ok(PredictorProcess::P1),
            "P2" | "2" => Ok(PredictorProcess::P2),
            other => Err(GdsError::Parse(format!("unknown predictor process '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub truth: TruthSurface,
    pub process: PredictorProcess,
    pub n: usize,
    pub snr_target: f64,
    pub grid: GridSpec,
    pub seed: u64,
}

impl SimScenario {
    /// 20 x 20 midpoint grid, SNR 4.
    pub fn new(truth: TruthSurface, process: PredictorProcess, n: usize, seed: u64) -> Self {
        SimScenario {
            truth,
            process,
            n,
            snr_target: 4.0,
            grid: GridSpec::midpoints(20, 20).expect("valid grid"),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(GdsError::arg("scenario needs at least one sample"));
        }
        if !(self.snr_target > 0.0) || !self.snr_target.is_finite() {
            return Err(GdsError::arg("target SNR must be positive"));
        }
        self.grid.validate()
    }
}

/// Fixed stream ids; replicate streams count up from 1.
pub const PILOT_STREAM: u64 = 1 << 40;
pub const CHECK_STREAM: u64 = (1 << 40) + 1;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws predictor images for a process on a grid and integrates them
/// against a surface.
#[derive(Debug, Clone)]
pub struct PredictorSampler {
    process: PredictorProcess,
    grid: GridSpec,
    psi_t: DMatrix<f64>,
    psi_s: DMatrix<f64>,
}

impl PredictorSampler {
    pub fn new(process: PredictorProcess, grid: &GridSpec) -> Self {
        let basis = process.basis();
        let m = basis.len();
        let psi = |n: usize, x: &dyn Fn(usize) -> f64| {
            let mut out = DMatrix::zeros(n, m);
            for k in 0..n {
                for (j, v) in basis.eval(x(k)).into_iter().enumerate() {
                    out[(k, j)] = v;
                }
            }
            out
        };
        PredictorSampler {
            process,
            grid: grid.clone(),
            psi_t: psi(grid.m1, &|k| grid.t(k)),
            psi_s: psi(grid.m2, &|l| grid.s(l)),
        }
    }

    pub fn process(&self) -> PredictorProcess {
        self.process
    }

    /// Image for a given coefficient matrix `a` (m x m).
    pub fn image_from_coefficients(&self, id: impl Into<String>, a: &DMatrix<f64>) -> ImageSample {
        let x = &self.psi_t * a * self.psi_s.transpose();
        let mut values = Vec::with_capacity(self.grid.len());
        for k in 0..self.grid.m1 {
            for l in 0..self.grid.m2 {
                values.push(x[(k, l)]);
            }
        }
        ImageSample::new(id, self.grid.m1, self.grid.m2, values).expect("shape matches grid")
    }

    pub fn draw_coefficients<R: rand::Rng>(&self, rng: &mut R) -> DMatrix<f64> {
        let m = self.psi_t.ncols();
        let draws: Vec<f64> = (0..m * m).map(|_| StandardNormal.sample(rng)).collect();
        DMatrix::from_row_slice(m, m, &draws)
    }

    pub fn sample<R: rand::Rng>(&self, id: impl Into<String>, rng: &mut R) -> ImageSample {
        let a = self.draw_coefficients(rng);
        self.image_from_coefficients(id, &a)
    }

    /// Exact variance of `sum_g w_g x(g) beta(g)` under the process,
    /// `|| Psi_t' (w * beta) Psi_s ||_F^2`.
    pub fn signal_variance(&self, weighted_beta: &[f64]) -> f64 {
        let wb = DMatrix::from_row_slice(self.grid.m1, self.grid.m2, weighted_beta);
        (self.psi_t.transpose() * wb * &self.psi_s).norm_squared()
    }
}

pub fn sample_predictor<R: rand::Rng>(
    process: PredictorProcess,
    grid: &GridSpec,
    rng: &mut R,
) -> ImageSample {
    PredictorSampler::new(process, grid).sample("x", rng)
}

/// Grid values of the truth multiplied by the quadrature weights.
fn weighted_truth(scenario: &SimScenario) -> Result<Vec<f64>> {
    let w = quadrature_weights(&scenario.grid, None)?;
    let beta = scenario.truth.on_grid(&scenario.grid)?;
    Ok(beta.iter().zip(&w).map(|(b, w)| b * w).collect())
}

fn integrate(img: &ImageSample, wbeta: &[f64]) -> f64 {
    img.values.iter().zip(wbeta).map(|(x, b)| x * b).sum()
}

/// Noise level giving the target SNR, from a pilot sample of signal
/// values drawn on a dedicated stream.
pub fn calibrate_noise(scenario: &SimScenario, n_pilot: usize) -> Result<f64> {
    scenario.validate()?;
    if n_pilot < 100 {
        return Err(GdsError::arg("noise calibration needs at least 100 pilot draws"));
    }
    let sampler = PredictorSampler::new(scenario.process, &scenario.grid);
    let wbeta = weighted_truth(scenario)?;
    let mut rng = rng_for(scenario.seed, PILOT_STREAM);
    let f: Vec<f64> = (0..n_pilot)
        .map(|_| integrate(&sampler.sample("", &mut rng), &wbeta))
        .collect();
    sigma_from_signal(&f, scenario.snr_target)
}

/// `sqrt(sampleVar(f) / snr)`.
pub fn sigma_from_signal(f: &[f64], snr_target: f64) -> Result<f64> {
    let var = metrics::sample_variance(f);
    if !var.is_finite() || var <= 0.0 {
        return Err(GdsError::Degenerate(format!(
            "pilot signal variance is {var}; the surface carries no signal"
        )));
    }
    Ok((var / snr_target).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub images: Vec<ImageSample>,
    pub y: Vec<f64>,
    pub f_true: Vec<f64>,
    pub sigma: f64,
}

/// `n` samples from one RNG stream. Each sample consumes its `m^2`
/// predictor coefficients followed by one noise draw.
pub fn generate_stream(scenario: &SimScenario, sigma: f64, n: usize, stream: u64) -> Result<SimDataset> {
    scenario.validate()?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(GdsError::arg("noise level must be nonnegative"));
    }
    let sampler = PredictorSampler::new(scenario.process, &scenario.grid);
    let wbeta = weighted_truth(scenario)?;
    let mut rng = rng_for(scenario.seed, stream);
    let mut images = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut f_true = Vec::with_capacity(n);
    for i in 0..n {
        let img = sampler.sample(format!("s{i}"), &mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let f = integrate(&img, &wbeta);
        f_true.push(f);
        y.push(f + sigma * eps);
        images.push(img);
    }
    Ok(SimDataset {
        images,
        y,
        f_true,
        sigma,
    })
}

/// Training set for the scenario seed (stream 0).
pub fn generate_dataset(scenario: &SimScenario, sigma: f64) -> Result<SimDataset> {
    generate_stream(scenario, sigma, scenario.n, 0)
}

// ---------------------------------------------------------------------------
// replicated study

#[derive(Debug, Clone)]
pub struct Estimate {
    pub alpha: f64,
    /// Estimated surface on the scenario grid, already truncated.
    pub beta_grid: Vec<f64>,
}

/// Data handed to an estimator for one replicate.
pub struct TrainingData<'a> {
    pub scenario: &'a SimScenario,
    pub train: &'a SimDataset,
    pub validation: &'a SimDataset,
    pub weights: &'a [f64],
    pub replicate: usize,
}

pub trait Estimator: Sync {
    fn name(&self) -> String;
    fn estimate(&self, data: &TrainingData) -> Result<Estimate>;
}

/// Plugs in the truth; a reference point for the metrics.
pub struct OracleEstimator;

impl Estimator for OracleEstimator {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn estimate(&self, data: &TrainingData) -> Result<Estimate> {
        Ok(Estimate {
            alpha: 0.0,
            beta_grid: data.scenario.truth.on_grid(&data.scenario.grid)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunnerOptions {
    pub n_reps: usize,
    pub test_size: usize,
    pub validation_size: usize,
    pub n_pilot: usize,
    /// Skip calibration and use this noise level.
    pub sigma: Option<f64>,
}

impl Default for RunnerOptions {
    fn default() -> Self {
        RunnerOptions {
            n_reps: 100,
            test_size: 10_000,
            validation_size: 0,
            n_pilot: 10_000,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRow {
    pub estimator: String,
    pub replicate: usize,
    pub mse: Option<f64>,
    pub rise: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanSe {
    pub mean: Option<f64>,
    pub se: Option<f64>,
}

impl MeanSe {
    fn of(vals: &[f64]) -> Self {
        let n = vals.len();
        if n == 0 {
            return MeanSe { mean: None, se: None };
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let se = (n > 1).then(|| (metrics::sample_variance(vals) / n as f64).sqrt());
        MeanSe { mean: Some(mean), se }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub completed: usize,
    pub failed: usize,
    pub mse: MeanSe,
    pub rise: MeanSe,
    pub r1: MeanSe,
    pub r2: MeanSe,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateReport {
    pub sigma: f64,
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<SummaryRow>,
}

fn replicate_streams(r: usize) -> (u64, u64, u64) {
    let base = 3 * r as u64;
    (base + 1, base + 2, base + 3)
}

fn score(
    est: &Estimate,
    truth: &[f64],
    weights: &[f64],
    test: &SimDataset,
) -> Result<(f64, Option<f64>, Option<f64>, Option<f64>)> {
    if est.beta_grid.len() != truth.len() {
        return Err(GdsError::dim("estimated surface does not match the grid"));
    }
    let wbeta: Vec<f64> = est.beta_grid.iter().zip(weights).map(|(b, w)| b * w).collect();
    let y_hat: Vec<f64> = test
        .images
        .iter()
        .map(|img| est.alpha + integrate(img, &wbeta))
        .collect();
    let mse = metrics::mse(&y_hat, &test.y)?;
    let pair = SurfacePair::new(truth, &est.beta_grid, weights)?;
    Ok((
        mse,
        metrics::rise(&pair).ok(),
        metrics::zero_recovery_r1(&pair, ZERO_THRESHOLD).ok(),
        metrics::nonzero_recovery_r2(&pair, ZERO_THRESHOLD).ok(),
    ))
}

/// Runs every estimator on `n_reps` independent replicates. Replicate `r`
/// draws training, validation and test data from its own streams, so the
/// report does not depend on how replicates are scheduled.
pub fn run_replicated(
    scenario: &SimScenario,
    estimators: &[&dyn Estimator],
    opts: &RunnerOptions,
) -> Result<ReplicateReport> {
    scenario.validate()?;
    if opts.n_reps == 0 {
        return Err(GdsError::arg("need at least one replicate"));
    }
    if opts.test_size == 0 {
        return Err(GdsError::arg("test set must be nonempty"));
    }
    let sigma = match opts.sigma {
        Some(s) => s,
        None => calibrate_noise(scenario, opts.n_pilot)?,
    };
    let weights = quadrature_weights(&scenario.grid, None)?;
    let truth = scenario.truth.on_grid(&scenario.grid)?;

    let per_rep: Vec<Result<Vec<ReplicateRow>>> = (0..opts.n_reps)
        .into_par_iter()
        .map(|r| {
            let (s_train, s_val, s_test) = replicate_streams(r);
            let train = generate_stream(scenario, sigma, scenario.n, s_train)?;
            let validation = generate_stream(scenario, sigma, opts.validation_size, s_val)?;
            let test = generate_stream(scenario, sigma, opts.test_size, s_test)?;
            let data = TrainingData {
                scenario,
                train: &train,
                validation: &validation,
                weights: &weights,
                replicate: r,
            };
            Ok(estimators
                .iter()
                .map(|e| {
                    let out = e
                        .estimate(&data)
                        .and_then(|est| score(&est, &truth, &weights, &test));
                    match out {
                        Ok((mse, rise, r1, r2)) => ReplicateRow {
                            estimator: e.name(),
                            replicate: r,
                            mse: Some(mse),
                            rise,
                            r1,
                            r2,
                            error: None,
                        },
                        Err(err) => {
                            log::warn!("replicate {r}, {}: {err}", e.name());
                            ReplicateRow {
                                estimator: e.name(),
                                replicate: r,
                                mse: None,
                                rise: None,
                                r1: None,
                                r2: None,
                                error: Some(err.to_string()),
                            }
                        }
                    }
                })
                .collect())
        })
        .collect();

    let mut rows = Vec::new();
    for rep in per_rep {
        rows.extend(rep?);
    }
    let summary = estimators
        .iter()
        .map(|e| {
            let name = e.name();
            let mine: Vec<&ReplicateRow> = rows.iter().filter(|r| r.estimator == name).collect();
            let ok: Vec<&&ReplicateRow> = mine.iter().filter(|r| r.error.is_none()).collect();
            let col = |f: fn(&ReplicateRow) -> Option<f64>| {
                MeanSe::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                estimator: name,
                completed: ok.len(),
                failed: mine.len() - ok.len(),
                mse: col(|r| r.mse),
                rise: col(|r| r.rise),
                r1: col(|r| r.r1),
                r2: col(|r| r.r2),
            }
        })
        .collect();
    Ok(ReplicateReport {
        sigma,
        rows,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::midpoints(20, 20).unwrap()
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(beta_eval(BetaSurface::Beta1, 0.5, 0.5), 0.0);
        for s in [0.0, 0.2, 0.5, 0.9] {
            assert!(beta_eval(BetaSurface::Beta2, 0.3, s).abs() < 1e-12);
        }
        assert!((beta_eval(BetaSurface::Beta3, 0.6, 0.4) + 8.0).abs() < 1e-12);
        assert!((beta_eval(BetaSurface::Beta3, 0.4, 0.6) - 8.0).abs() < 1e-12);
        // corner of the first surface: (sin 0 - sin pi/4)^2
        assert!((beta_eval(BetaSurface::Beta1, 0.0, 0.0) - 0.5).abs() < 1e-12);
        let c = 100.0 * (1.0 - 0.04f64.exp());
        assert!((beta_eval(BetaSurface::Beta2, 0.5, 0.5) - c * c).abs() < 1e-9);
    }

    #[test]
    fn symmetry_and_antisymmetry() {
        for (t, s) in GridSpec::midpoints(37, 37).unwrap().points() {
            for id in [BetaSurface::Beta1, BetaSurface::Beta2] {
                assert_eq!(beta_eval(id, t, s), beta_eval(id, s, t));
            }
            let d = beta_eval(BetaSurface::Beta3, t, s) + beta_eval(BetaSurface::Beta3, s, t);
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn beta2_nonzero_area() {
        for m in [20, 40] {
            let g = GridSpec::midpoints(m, m).unwrap();
            let area = g
                .points()
                .into_iter()
                .filter(|&(t, s)| beta_eval(BetaSurface::Beta2, t, s) != 0.0)
                .count() as f64
                / g.len() as f64;
            assert!((area - 0.16).abs() <= 1.0 / g.len() as f64 + 1e-12);
        }
    }

    #[test]
    fn process_sizes() {
        assert_eq!(PredictorProcess::P1.m(), 10);
        assert_eq!(PredictorProcess::P2.m(), 20);
        assert_eq!(PredictorProcess::P1.basis().len(), 10);
        assert_eq!(PredictorProcess::P2.basis().len(), 20);
    }

    #[test]
    fn forced_coefficients() {
        let g = grid();
        let sampler = PredictorSampler::new(PredictorProcess::P1, &g);
        let zero = sampler.image_from_coefficients("z", &DMatrix::zeros(10, 10));
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let mut a = DMatrix::zeros(10, 10);
        a[(0, 0)] = 1.0;
        let one = sampler.image_from_coefficients("e", &a);
        let psi = PredictorProcess::P1.basis();
        for (i, (t, s)) in g.points().into_iter().enumerate() {
            let expect = psi.eval(t)[0] * psi.eval(s)[0];
            assert!((one.values[i] - expect).abs() < 1e-14);
            assert!(one.values[i] >= 0.0);
        }
    }

    #[test]
    fn predictor_mean_is_zero() {
        let g = grid();
        let sampler = PredictorSampler::new(PredictorProcess::P1, &g);
        let mut rng = rng_for(11, 0);
        let means: Vec<f64> = (0..1000)
            .map(|_| {
                let img = sampler.sample("", &mut rng);
                img.values.iter().sum::<f64>() / img.values.len() as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / 1000.0;
        let se = (metrics::sample_variance(&means) / 1000.0).sqrt();
        assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn sigma_definition() {
        let f = [0.0, 2.0, 4.0];
        assert!((sigma_from_signal(&f, 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((sigma_from_signal(&f, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(sigma_from_signal(&[1.0; 4], 4.0).is_err());
    }

    #[test]
    fn pilot_matches_exact_variance() {
        let sc = SimScenario::new(TruthSurface::Named(BetaSurface::Beta2), PredictorProcess::P1, 10, 5);
        let sigma = calibrate_noise(&sc, 10_000).unwrap();
        let sampler = PredictorSampler::new(sc.process, &sc.grid);
        let exact = (sampler.signal_variance(&weighted_truth(&sc).unwrap()) / 4.0).sqrt();
        // sd of a sample sd with 10k draws is about 0.7%
        assert!((sigma / exact - 1.0).abs() < 0.03, "{sigma} vs {exact}");
    }

    #[test]
    fn zero_truth_cannot_be_calibrated() {
        let sc = SimScenario::new(TruthSurface::Zero, PredictorProcess::P1, 10, 5);
        assert!(matches!(calibrate_noise(&sc, 200), Err(GdsError::Degenerate(_))));
        assert!(calibrate_noise(&sc, 99).is_err());
    }

    #[test]
    fn datasets_are_deterministic() {
        let sc = SimScenario::new(TruthSurface::Named(BetaSurface::Beta1), PredictorProcess::P2, 25, 9);
        let a = generate_dataset(&sc, 0.5).unwrap();
        let b = generate_dataset(&sc, 0.5).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&SimScenario { seed: 10, ..sc.clone() }, 0.5).unwrap();
        assert_ne!(a.y, c.y);
        let exact = generate_dataset(&sc, 0.0).unwrap();
        assert_eq!(exact.y, exact.f_true);
        assert_eq!(exact.f_true, a.f_true);
    }

    #[test]
    fn zero_truth_gives_pure_noise() {
        let sc = SimScenario::new(TruthSurface::Zero, PredictorProcess::P1, 10_000, 3);
        let d = generate_dataset(&sc, 2.0).unwrap();
        assert!(d.f_true.iter().all(|&f| f == 0.0));
        let v = metrics::sample_variance(&d.y);
        assert!((v / 4.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn oracle_runner() {
        let sc = SimScenario::new(TruthSurface::Named(BetaSurface::Beta2), PredictorProcess::P1, 20, 1);
        let opts = RunnerOptions {
            n_reps: 1,
            test_size: 4000,
            n_pilot: 1000,
            ..RunnerOptions::default()
        };
        let rep = run_replicated(&sc, &[&OracleEstimator], &opts).unwrap();
        let s = &rep.summary[0];
        assert_eq!((s.completed, s.failed), (1, 0));
        assert_eq!(s.rise.mean, Some(0.0));
        assert_eq!(s.r1.mean, Some(1.0));
        assert_eq!(s.r2.mean, Some(1.0));
        assert!(s.mse.se.is_none());
        let ratio = s.mse.mean.unwrap() / (rep.sigma * rep.sigma);
        assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
    }

    struct Failing;
    impl Estimator for Failing {
        fn name(&self) -> String {
            "failing".into()
        }
        fn estimate(&self, data: &TrainingData) -> Result<Estimate> {
            if data.replicate == 1 {
                Err(GdsError::Degenerate("boom".into()))
            } else {
                OracleEstimator.estimate(data)
            }
        }
    }

    #[test]
    fn failures_are_counted_and_excluded() {
        let sc = SimScenario::new(TruthSurface::Named(BetaSurface::Beta3), PredictorProcess::P1, 20, 1);
        let opts = RunnerOptions {
            n_reps: 3,
            test_size: 50,
            sigma: Some(1.0),
            ..RunnerOptions::default()
        };
        let rep = run_replicated(&sc, &[&Failing, &OracleEstimator], &opts).unwrap();
        assert_eq!(rep.rows.len(), 6);
        let s = &rep.summary[0];
        assert_eq!((s.completed, s.failed), (2, 1));
        assert!(s.mse.se.is_some());
        assert!(rep.rows[2].error.is_some());
        assert!(rep.rows[3].error.is_none());
    }
}
