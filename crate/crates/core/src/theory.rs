//! Error-bound ingredients, Monte-Carlo restricted eigenvalues and the
//! feasibility probe for the true coefficients.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{basis_l2_norms, basis_matrix, project_beta, BasisSpec, Quadrature};
use crate::design::{build_design, DesignSet, ImageSample};
use crate::diffops::TransformA;
use crate::error::{GdsError, Result};
use crate::metrics::ZERO_THRESHOLD;
use crate::simgen::{calibrate_noise, generate_stream, rng_for, SimScenario, TruthSurface};

/// `C sigma sqrt(log p / n) + M omega`.
pub fn theoretical_lambda(c: f64, sigma: f64, p: usize, n: usize, m_omega: f64) -> f64 {
    c * sigma * ((p as f64).ln() / n as f64).sqrt() + m_omega
}

/// `1 - p^(1 - C^2/2)`.
pub fn probability_bound(c: f64, p: usize) -> f64 {
    1.0 - (p as f64).powf(1.0 - c * c / 2.0)
}

fn check_c(c: f64) -> Result<()> {
    if !(c > std::f64::consts::SQRT_2) || !c.is_finite() {
        return Err(GdsError::arg(format!("C must exceed sqrt(2), got {c}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundConstants {
    pub l: usize,
    pub p: usize,
    pub n: usize,
    /// Nonzeros of `A eta*`, when known.
    pub s_hat: Option<usize>,
    pub sigma_min_a: f64,
    pub d_max: f64,
    pub c_b: f64,
    pub omega_b: f64,
    /// False when no truth was supplied and `omega_b` is a placeholder 0.
    pub omega_known: bool,
    /// Largest quadrature L2 norm among the images.
    pub m: f64,
    pub c: f64,
    pub sigma: f64,
    pub lambda_theoretical: f64,
    pub prob_bound: f64,
    pub sqrt_l_over_sigma_min: f64,
}

pub fn max_image_norm(images: &[ImageSample], weights: &[f64]) -> Result<f64> {
    let mut m = 0.0_f64;
    for img in images {
        if img.values.len() != weights.len() {
            return Err(GdsError::dim("image does not match the quadrature weights"));
        }
        let sq: f64 = img.values.iter().zip(weights).map(|(v, w)| w * v * v).sum();
        m = m.max(sq.sqrt());
    }
    Ok(m)
}

/// Collects the constants of the error bounds. `s_hat` overrides the
/// sparsity that would otherwise be read off the projected truth.
#[allow(clippy::too_many_arguments)]
pub fn bound_constants(
    ds: &DesignSet,
    images: &[ImageSample],
    a: &TransformA,
    basis: &BasisSpec,
    beta: Option<&dyn Fn(f64, f64) -> f64>,
    c: f64,
    sigma: f64,
    s_hat: Option<usize>,
) -> Result<BoundConstants> {
    check_c(c)?;
    if !(sigma >= 0.0) {
        return Err(GdsError::arg("sigma must be nonnegative"));
    }
    if a.cols() != ds.p() || basis.dim() != ds.p() {
        return Err(GdsError::dim("transform, basis and design disagree on p"));
    }
    let weights = if ds.quad_weights.is_empty() {
        Quadrature::equal(a.grid.clone()).weights
    } else {
        ds.quad_weights.clone()
    };
    let m = max_image_norm(images, &weights)?;
    let (omega_b, omega_known, s_proj) = match beta {
        Some(f) => {
            let quad = Quadrature {
                grid: a.grid.clone(),
                weights: weights.clone(),
            };
            let proj = project_beta(f, basis, &quad)?;
            let gamma = &a.values * &proj.eta_star;
            let s = gamma.iter().filter(|v| v.abs() > ZERO_THRESHOLD).count();
            (proj.omega_b, true, Some(s))
        }
        None => (0.0, false, None),
    };
    let l = a.rows();
    let (p, n) = (ds.p(), ds.n());
    Ok(BoundConstants {
        l,
        p,
        n,
        s_hat: s_hat.or(s_proj),
        sigma_min_a: a.sigma_min,
        d_max: ds.d_max(),
        c_b: basis_l2_norms(basis)?.c_b,
        omega_b,
        omega_known,
        m,
        c,
        sigma,
        lambda_theoretical: theoretical_lambda(c, sigma, p, n, m * omega_b),
        prob_bound: probability_bound(c, p),
        sqrt_l_over_sigma_min: (l as f64).sqrt() / a.sigma_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kappa {
    Kappa1,
    Kappa2,
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kappa::Kappa1 => "kappa1",
            Kappa::Kappa2 => "kappa2",
        })
    }
}

impl FromStr for Kappa {
    type Err = GdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kappa1" | "1" => Ok(Kappa::Kappa1),
            "kappa2" | "2" => Ok(Kappa::Kappa2),
            other => Err(GdsError::Parse(format!("unknown restricted eigenvalue '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub which: Kappa,
    pub s: usize,
    pub s_prime: usize,
    pub value: f64,
    pub trials: usize,
    pub seed: u64,
}

/// One cone-constrained direction: support `t0`, entries uniform on
/// `[-1, 1]`, with the off-support part rescaled so its l1 norm is a uniform
/// fraction of the on-support l1 norm.
fn draw_direction<R: Rng>(rng: &mut R, l: usize, s: usize) -> (Vec<usize>, DVector<f64>) {
    let t0 = sample(rng, l, s).into_vec();
    let mut on = vec![false; l];
    for &j in &t0 {
        on[j] = true;
    }
    let mut h = DVector::<f64>::zeros(l);
    loop {
        for &j in &t0 {
            h[j] = rng.gen_range(-1.0..=1.0);
        }
        if t0.iter().any(|&j| h[j] != 0.0) {
            break;
        }
    }
    let l1_on: f64 = t0.iter().map(|&j| h[j].abs()).sum();
    let u: f64 = rng.gen();
    let mut l1_off = 0.0;
    for j in (0..l).filter(|&j| !on[j]) {
        let v: f64 = rng.gen_range(-1.0..=1.0);
        h[j] = v;
        l1_off += v.abs();
    }
    if l1_off > 0.0 {
        let scale = u * l1_on / l1_off;
        for j in (0..l).filter(|&j| !on[j]) {
            h[j] *= scale;
        }
    }
    (t0, h)
}

/// Norm of `h` over `t0` plus, for the second eigenvalue, the `s_prime`
/// largest entries outside `t0`.
fn denominator(which: Kappa, h: &DVector<f64>, t0: &[usize], s_prime: usize) -> f64 {
    let mut sq: f64 = t0.iter().map(|&j| h[j] * h[j]).sum();
    if which == Kappa::Kappa2 {
        let mut off: Vec<f64> = (0..h.len())
            .filter(|j| !t0.contains(j))
            .map(|j| h[j] * h[j])
            .collect();
        off.sort_by(|a, b| b.total_cmp(a));
        sq += off.iter().take(s_prime).sum::<f64>();
    }
    sq.sqrt()
}

/// Minimum over `trials` random cone directions of
/// `||V h|| / (sqrt(n) ||h_T||)`. Trial `k` draws from its own stream, so
/// the estimate does not depend on scheduling.
pub fn estimate_kappa(
    v: &DMatrix<f64>,
    which: Kappa,
    s: usize,
    s_prime: usize,
    trials: usize,
    seed: u64,
) -> Result<KappaEstimate> {
    let (n, l) = v.shape();
    if s == 0 || s > l {
        return Err(GdsError::arg(format!("support size {s} outside 1..={l}")));
    }
    if which == Kappa::Kappa2 && s + s_prime > l {
        return Err(GdsError::arg("S + S' exceeds the number of columns"));
    }
    if trials == 0 || n == 0 {
        return Err(GdsError::arg("need at least one trial and one row"));
    }
    let root_n = (n as f64).sqrt();
    let value = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64);
            let (t0, h) = draw_direction(&mut rng, l, s);
            (v * &h).norm() / (root_n * denominator(which, &h, &t0, s_prime))
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(KappaEstimate {
        which,
        s,
        s_prime: if which == Kappa::Kappa2 { s_prime } else { 0 },
        value,
        trials,
        seed,
    })
}

/// Whitespace-separated rows; blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| GdsError::Parse(format!("line {}: bad number '{t}'", no + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(GdsError::Parse(format!("line {}: ragged row", no + 1)));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GdsError::Parse("matrix has no rows".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

/// `V = X A^+`, the design in the coordinates `gamma = A eta`.
pub fn transformed_design(x: &DMatrix<f64>, a: &TransformA) -> Result<DMatrix<f64>> {
    if x.ncols() != a.cols() {
        return Err(GdsError::dim("design and transform disagree on p"));
    }
    Ok(x * crate::diffops::pseudoinverse(a)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub reps: usize,
    pub feasible: usize,
    pub rate: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub prob_bound: f64,
    /// Binomial standard error of `rate`.
    pub stderr: f64,
}

/// For each replicate, checks whether the true coefficients satisfy the
/// correlation constraint at `lambda = C sigma sqrt(log p / n)`. The truth
/// must be given by basis coefficients so that it lies in the span.
pub fn feasibility_probe(
    scenario: &SimScenario,
    c: f64,
    reps: usize,
    sigma: Option<f64>,
) -> Result<FeasibilityReport> {
    check_c(c)?;
    if reps == 0 {
        return Err(GdsError::arg("need at least one replicate"));
    }
    let TruthSurface::Coefficients { spec, coef } = &scenario.truth else {
        return Err(GdsError::arg("the probe needs a truth given by basis coefficients"));
    };
    let sigma = match sigma {
        Some(s) => s,
        None => calibrate_noise(scenario, 10_000)?,
    };
    let bt = basis_matrix(spec, &scenario.grid)?;
    let weights = Quadrature::equal(scenario.grid.clone()).weights;
    let (p, n) = (spec.dim(), scenario.n);
    let lambda = theoretical_lambda(c, sigma, p, n, 0.0);
    let outcomes: Vec<Result<bool>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = generate_stream(scenario, sigma, n, r as u64 + 1)?;
            let ds = build_design(&data.images, &data.y, &bt, &weights)?;
            // relative slack absorbs rounding when sigma = 0
            Ok(ds.max_scaled_correlation(coef) <= lambda * (1.0 + 1e-12) + 1e-12)
        })
        .collect();
    let mut feasible = 0;
    for o in outcomes {
        feasible += o? as usize;
    }
    let rate = feasible as f64 / reps as f64;
    Ok(FeasibilityReport {
        reps,
        feasible,
        rate,
        lambda,
        sigma,
        prob_bound: probability_bound(c, p),
        stderr: (rate * (1.0 - rate) / reps as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_and_probability_arithmetic() {
        let lam = theoretical_lambda(2.0, 1.0, 100, 400, 0.0);
        assert!((lam - 0.21459).abs() < 1e-5);
        assert!((probability_bound(2.0, 100) - 0.99).abs() < 1e-12);
        assert!(theoretical_lambda(2.0, 1.0, 100, 400, 0.1) > lam);
        assert!(theoretical_lambda(2.1, 1.0, 100, 400, 0.0) > lam);
        assert!(theoretical_lambda(2.0, 1.1, 100, 400, 0.0) > lam);
        assert_eq!(theoretical_lambda(2.0, 0.0, 100, 400, 0.0), 0.0);
    }

    #[test]
    fn c_must_exceed_root_two() {
        assert!(check_c(1.4).is_err());
        assert!(check_c(std::f64::consts::SQRT_2).is_err());
        assert!(check_c(1.5).is_ok());
    }

    #[test]
    fn draws_respect_the_cone() {
        let mut rng = rng_for(3, 0);
        for _ in 0..200 {
            let (t0, h) = draw_direction(&mut rng, 9, 2);
            assert_eq!(t0.len(), 2);
            let on: f64 = t0.iter().map(|&j| h[j].abs()).sum();
            let off: f64 = (0..9).filter(|j| !t0.contains(j)).map(|j| h[j].abs()).sum();
            assert!(on > 0.0);
            assert!(off <= on * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_design_gives_zero() {
        let v = DMatrix::zeros(3, 4);
        let k = estimate_kappa(&v, Kappa::Kappa1, 1, 0, 50, 1).unwrap();
        assert_eq!(k.value, 0.0);
    }

    #[test]
    fn scaled_orthonormal_design_is_at_least_one() {
        let n = 5.0_f64;
        let v = DMatrix::<f64>::identity(5, 5) * n.sqrt();
        let k = estimate_kappa(&v, Kappa::Kappa1, 2, 0, 500, 2).unwrap();
        assert!(k.value >= 1.0 - 1e-9);
    }

    #[test]
    fn kappa2_below_kappa1_on_same_draws() {
        let v = DMatrix::from_fn(6, 8, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let k1 = estimate_kappa(&v, Kappa::Kappa1, 2, 2, 300, 5).unwrap();
        let k2 = estimate_kappa(&v, Kappa::Kappa2, 2, 2, 300, 5).unwrap();
        assert!(k2.value <= k1.value + 1e-15);
    }

    #[test]
    fn matrix_text() {
        let m = parse_matrix("# c\n1 2\n\n3, 4 # tail\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(parse_matrix("1 2\n3").is_err());
        assert!(parse_matrix("1 x").is_err());
        assert!(parse_matrix("# only\n").is_err());
    }

    #[test]
    fn fixture_example_values() {
        use crate::bases::{basis_matrix, GridSpec};
        use crate::diffops::{assemble_a, Variant};
        let x = parse_matrix(include_str!("../testdata/supp92_x.txt")).unwrap();
        let grid = GridSpec::endpoints(2, 2).unwrap();
        let bt = basis_matrix(&BasisSpec::piecewise(2, 2), &grid).unwrap();
        let a = assemble_a(Variant::Joint, 1.0, 1, 1, &grid, &bt).unwrap();
        let v = transformed_design(&x, &a).unwrap();
        let printed = DMatrix::from_row_slice(
            4,
            5,
            &[
                -0.3721, -1.0915, -0.6668, -0.2608, 1.1254, 2.0988, 0.6740, -0.1265, -1.6357,
                -0.0844, -0.1422, -1.5192, 1.9371, 0.3471, -0.2130, 1.1231, 0.1025, -0.8652,
                -0.9808, 0.9050,
            ],
        );
        assert!((v - printed).amax() < 1e-4);
    }

    #[test]
    fn argument_checks() {
        let v = DMatrix::from_element(2, 3, 1.0);
        assert!(estimate_kappa(&v, Kappa::Kappa1, 0, 0, 10, 0).is_err());
        assert!(estimate_kappa(&v, Kappa::Kappa2, 2, 2, 10, 0).is_err());
        assert!(estimate_kappa(&v, Kappa::Kappa1, 1, 0, 0, 0).is_err());
    }
}
