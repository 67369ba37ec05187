//! Tensor-product bases on the unit square and the evaluation grid.
//!
//! Two families are provided: clamped tensor B-splines and piecewise
//! constant indicators. Basis index `j` maps to the factor pair `(k, l)`
//! through `j = k * p2 + l` (zero based), and grid point `(k, l)` maps to
//! row `k * m2 + l` of every grid-indexed matrix in the crate.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GdsError, Result};

/// Slack allowed when checking that coordinates lie in `[0, 1]`.
const UNIT_TOL: f64 = 1e-12;

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// An evenly spaced `m1 x m2` grid on the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m1: usize,
    pub m2: usize,
    pub t0: f64,
    pub s0: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl GridSpec {
    pub fn new(m1: usize, m2: usize, t0: f64, s0: f64, delta1: f64, delta2: f64) -> Result<Self> {
        let grid = GridSpec {
            m1,
            m2,
            t0,
            s0,
            delta1,
            delta2,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Pixel-centre grid: `t_k = (k + 1/2) / m1`, spacing `1 / m1`.
    pub fn midpoints(m1: usize, m2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(GdsError::arg("grid needs at least one point per axis"));
        }
        Self::new(
            m1,
            m2,
            0.5 / m1 as f64,
            0.5 / m2 as f64,
            1.0 / m1 as f64,
            1.0 / m2 as f64,
        )
    }

    /// Grid including both boundaries: `t_k = k / (m1 - 1)`.
    pub fn endpoints(m1: usize, m2: usize) -> Result<Self> {
        if m1 < 2 || m2 < 2 {
            return Err(GdsError::arg("endpoint grid needs at least two points per axis"));
        }
        Self::new(
            m1,
            m2,
            0.0,
            0.0,
            1.0 / (m1 - 1) as f64,
            1.0 / (m2 - 1) as f64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(GdsError::arg("grid needs at least one point per axis"));
        }
        if !(self.delta1 > 0.0 && self.delta2 > 0.0) {
            return Err(GdsError::arg("grid spacings must be positive"));
        }
        let (tl, sl) = (self.t(self.m1 - 1), self.s(self.m2 - 1));
        for v in [self.t0, self.s0, tl, sl] {
            if !(-UNIT_TOL..=1.0 + UNIT_TOL).contains(&v) {
                return Err(GdsError::arg(format!(
                    "grid coordinate {v} falls outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t(&self, k: usize) -> f64 {
        clamp_unit(self.t0 + k as f64 * self.delta1)
    }

    pub fn s(&self, l: usize) -> f64 {
        clamp_unit(self.s0 + l as f64 * self.delta2)
    }

    pub fn index(&self, k: usize, l: usize) -> usize {
        k * self.m2 + l
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        (self.t(idx / self.m2), self.s(idx % self.m2))
    }

    /// Grid points in row-major order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

fn clamp_unit(v: f64) -> f64 {
    // absorbs the rounding of t0 + k * delta at the boundary
    if v < 0.0 && v > -UNIT_TOL {
        0.0
    } else if v > 1.0 && v < 1.0 + UNIT_TOL {
        1.0
    } else {
        v
    }
}

fn check_unit(t: f64, s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(GdsError::Domain { t, s })
    }
}

/// Basis family and its size parameters.
///
/// For B-splines `order` is the polynomial order (degree + 1); each axis
/// carries `order + interior_knots` functions on a clamped knot vector with
/// evenly spaced interior knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisSpec {
    Bspline {
        order1: usize,
        order2: usize,
        interior_knots1: usize,
        interior_knots2: usize,
    },
    Piecewise {
        p1: usize,
        p2: usize,
    },
}

impl BasisSpec {
    pub fn piecewise(p1: usize, p2: usize) -> Self {
        BasisSpec::Piecewise { p1, p2 }
    }

    pub fn bspline(order: usize, interior_knots: usize) -> Self {
        BasisSpec::Bspline {
            order1: order,
            order2: order,
            interior_knots1: interior_knots,
            interior_knots2: interior_knots,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BasisSpec::Bspline { order1, order2, .. } => {
                if order1 == 0 || order2 == 0 {
                    return Err(GdsError::arg("spline order must be at least 1"));
                }
            }
            BasisSpec::Piecewise { p1, p2 } => {
                if p1 == 0 || p2 == 0 {
                    return Err(GdsError::arg("piece counts must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Per-axis sizes `(p1, p2)`.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            BasisSpec::Bspline {
                order1,
                order2,
                interior_knots1,
                interior_knots2,
            } => (order1 + interior_knots1, order2 + interior_knots2),
            BasisSpec::Piecewise { p1, p2 } => (p1, p2),
        }
    }

    /// Total dimension `p = p1 * p2`.
    pub fn dim(&self) -> usize {
        let (a, b) = self.dims();
        a * b
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self, BasisSpec::Piecewise { .. })
    }

    fn factors(&self) -> (Axis, Axis) {
        match *self {
            BasisSpec::Bspline {
                order1,
                order2,
                interior_knots1,
                interior_knots2,
            } => (
                Axis::Spline(BSplineBasis1d::uniform(order1, interior_knots1)),
                Axis::Spline(BSplineBasis1d::uniform(order2, interior_knots2)),
            ),
            BasisSpec::Piecewise { p1, p2 } => (Axis::Pieces(p1), Axis::Pieces(p2)),
        }
    }
}

/// Univariate clamped B-spline basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis1d {
    order: usize,
    knots: Vec<f64>,
}

impl BSplineBasis1d {
    /// Clamped basis on `[0, 1]` with `interior` evenly spaced interior knots.
    pub fn uniform(order: usize, interior: usize) -> Self {
        assert!(order >= 1, "spline order must be at least 1");
        let mut knots = Vec::with_capacity(2 * order + interior);
        knots.extend(std::iter::repeat_n(0.0, order));
        knots.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
        knots.extend(std::iter::repeat_n(1.0, order));
        BSplineBasis1d { order, knots }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index of the knot span containing `x`; the right end belongs to the
    /// last non-empty span.
    fn span(&self, x: f64) -> usize {
        let n = self.len();
        let deg = self.order - 1;
        if x >= self.knots[n] {
            return n - 1;
        }
        let (mut lo, mut hi) = (deg, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values of the `order` basis functions that may be nonzero at `x`,
    /// together with the index of the first one.
    pub fn eval_nonzero(&self, x: f64) -> (usize, Vec<f64>) {
        let deg = self.order - 1;
        let span = self.span(x);
        let mut vals = vec![0.0; self.order];
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        vals[0] = 1.0;
        for j in 1..=deg {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = if denom == 0.0 { 0.0 } else { vals[r] / denom };
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        (span - deg, vals)
    }

    /// All basis values at `x`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let (first, vals) = self.eval_nonzero(x);
        out[first..first + vals.len()].copy_from_slice(&vals);
        out
    }

    /// `int_0^1 B_k(x)^2 dx` for every k, by 8-point Gauss-Legendre on each
    /// knot span.
    pub fn squared_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
                let x = mid + half * node;
                let (first, vals) = self.eval_nonzero(x);
                for (i, v) in vals.iter().enumerate() {
                    acc[first + i] += half * weight * v * v;
                }
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
enum Axis {
    Spline(BSplineBasis1d),
    Pieces(usize),
}

impl Axis {
    fn len(&self) -> usize {
        match self {
            Axis::Spline(b) => b.len(),
            Axis::Pieces(p) => *p,
        }
    }

    fn eval_nonzero(&self, x: f64) -> (usize, Vec<f64>) {
        match self {
            Axis::Spline(b) => b.eval_nonzero(x),
            Axis::Pieces(p) => (piece_index(*p, x), vec![1.0]),
        }
    }

    fn squared_norms(&self) -> Vec<f64> {
        match self {
            Axis::Spline(b) => b.squared_norms(),
            Axis::Pieces(p) => vec![1.0 / *p as f64; *p],
        }
    }
}

/// Piece containing `x` for `p` even pieces, `[k/p, (k+1)/p)` with the last
/// piece closed at 1.
pub fn piece_index(p: usize, x: f64) -> usize {
    let pf = p as f64;
    let mut k = ((x * pf).floor().max(0.0) as usize).min(p - 1);
    // correct for rounding of x * p near a breakpoint
    while k + 1 < p && x >= (k + 1) as f64 / pf {
        k += 1;
    }
    while k > 0 && x < k as f64 / pf {
        k -= 1;
    }
    k
}

/// Precomputed tensor basis, cheap to evaluate repeatedly.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    spec: BasisSpec,
    axis_t: Axis,
    axis_s: Axis,
}

impl TensorBasis {
    pub fn new(spec: &BasisSpec) -> Result<Self> {
        spec.validate()?;
        let (axis_t, axis_s) = spec.factors();
        Ok(TensorBasis {
            spec: spec.clone(),
            axis_t,
            axis_s,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.axis_t.len() * self.axis_s.len()
    }

    /// Nonzero entries `(j, b_j(t, s))` at a point.
    pub fn eval_nonzero(&self, t: f64, s: f64) -> Result<Vec<(usize, f64)>> {
        check_unit(t, s)?;
        let p2 = self.axis_s.len();
        let (ft, vt) = self.axis_t.eval_nonzero(t);
        let (fs, vs) = self.axis_s.eval_nonzero(s);
        let mut out = Vec::with_capacity(vt.len() * vs.len());
        for (a, x) in vt.iter().enumerate() {
            for (b, y) in vs.iter().enumerate() {
                out.push(((ft + a) * p2 + fs + b, x * y));
            }
        }
        Ok(out)
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.dim());
        for (j, x) in self.eval_nonzero(t, s)? {
            v[j] = x;
        }
        Ok(v)
    }

    /// `sum_j coef_j b_j(t, s)`.
    pub fn combine(&self, coef: &DVector<f64>, t: f64, s: f64) -> Result<f64> {
        Ok(self
            .eval_nonzero(t, s)?
            .into_iter()
            .map(|(j, x)| coef[j] * x)
            .sum())
    }
}

/// `[b_1(t,s), ..., b_p(t,s)]`.
pub fn eval_basis(spec: &BasisSpec, t: f64, s: f64) -> Result<DVector<f64>> {
    TensorBasis::new(spec)?.eval(t, s)
}

/// Basis functions evaluated on a grid: row `i` holds the basis at grid
/// point `i`.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub grid: GridSpec,
    pub spec: BasisSpec,
}

impl BasisMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

pub fn basis_matrix(spec: &BasisSpec, grid: &GridSpec) -> Result<BasisMatrix> {
    grid.validate()?;
    let basis = TensorBasis::new(spec)?;
    let mut values = DMatrix::zeros(grid.len(), basis.dim());
    for i in 0..grid.len() {
        let (t, s) = grid.point(i);
        for (j, x) in basis.eval_nonzero(t, s)? {
            values[(i, j)] = x;
        }
    }
    Ok(BasisMatrix {
        values,
        grid: grid.clone(),
        spec: spec.clone(),
    })
}

/// Squared L2 norms of the basis functions and `C_B = sqrt(sum)`.
#[derive(Debug, Clone)]
pub struct BasisNorms {
    pub squared: DVector<f64>,
    pub c_b: f64,
}

pub fn basis_l2_norms(spec: &BasisSpec) -> Result<BasisNorms> {
    spec.validate()?;
    let (at, as_) = spec.factors();
    let (nt, ns) = (at.squared_norms(), as_.squared_norms());
    let squared = DVector::from_iterator(
        nt.len() * ns.len(),
        nt.iter().flat_map(|a| ns.iter().map(move |b| a * b)),
    );
    let c_b = squared.sum().sqrt();
    Ok(BasisNorms { squared, c_b })
}

/// A quadrature rule over grid points.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub grid: GridSpec,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Equal weights `1 / (m1 m2)` on every grid point.
    pub fn equal(grid: GridSpec) -> Self {
        let w = 1.0 / grid.len() as f64;
        let weights = vec![w; grid.len()];
        Quadrature { grid, weights }
    }

    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.grid
            .points()
            .into_iter()
            .zip(&self.weights)
            .map(|((t, s), w)| w * f(t, s))
            .sum()
    }
}

/// Best L2 approximation of a surface within the basis span.
#[derive(Debug, Clone)]
pub struct Projection {
    pub eta_star: DVector<f64>,
    pub omega_b: f64,
    /// Set when the quadrature Gram matrix was singular and the
    /// minimum-norm solution was returned.
    pub rank_deficient: bool,
}

pub fn project_beta<F>(beta: F, spec: &BasisSpec, quad: &Quadrature) -> Result<Projection>
where
    F: Fn(f64, f64) -> f64,
{
    let basis = TensorBasis::new(spec)?;
    let p = basis.dim();
    if quad.weights.len() != quad.grid.len() {
        return Err(GdsError::dim("quadrature weights do not match grid"));
    }
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut values = Vec::with_capacity(quad.grid.len());
    let mut nonzeros = Vec::with_capacity(quad.grid.len());
    for (i, &w) in quad.weights.iter().enumerate() {
        let (t, s) = quad.grid.point(i);
        let nz = basis.eval_nonzero(t, s)?;
        let b = beta(t, s);
        if w != 0.0 {
            for &(j, x) in &nz {
                rhs[j] += w * x * b;
                for &(k, y) in &nz {
                    gram[(j, k)] += w * x * y;
                }
            }
        }
        values.push(b);
        nonzeros.push(nz);
    }

    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * 1e-12 * p as f64;
    let rank_deficient = smax == 0.0 || svd.singular_values.min() <= cutoff;
    if rank_deficient {
        warn!("projection Gram matrix is singular; using the pseudoinverse");
    }
    let eta_star = if smax == 0.0 {
        DVector::zeros(p)
    } else {
        svd.solve(&rhs, cutoff)
            .map_err(|e| GdsError::Degenerate(e.to_string()))?
    };

    let mut err2 = 0.0;
    for ((w, b), nz) in quad.weights.iter().zip(&values).zip(&nonzeros) {
        let approx: f64 = nz.iter().map(|&(j, x)| eta_star[j] * x).sum();
        err2 += w * (b - approx) * (b - approx);
    }
    Ok(Projection {
        eta_star,
        omega_b: err2.max(0.0).sqrt(),
        rank_deficient,
    })
}
