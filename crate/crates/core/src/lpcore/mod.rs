//! Linear programs in standard form and the bundled simplex solver.
//!
//! A [`LinearProgram`] is `min c'z  s.t.  Aeq z = beq,  Aub z <= bub,
//! z >= 0`. Programs produced by [`build_gds_lp`] carry a [`VarLayout`]
//! naming the `(gamma+, gamma-, eta+, eta-)` spans; for those the solver
//! can work on the much smaller dual, which has one row per basis
//! coefficient instead of one per constraint, and reads the primal back
//! from the dual multipliers.

mod dual;
mod export;
pub(crate) mod simplex;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignSet;
use crate::diffops::TransformA;
use crate::error::{GdsError, Result};

pub use export::{read_standard_form, write_standard_form};
use simplex::{BoundedLp, EngineOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Named variable spans of a GDS program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarLayout {
    pub gamma_plus: Range<usize>,
    pub gamma_minus: Range<usize>,
    pub eta_plus: Range<usize>,
    pub eta_minus: Range<usize>,
}

impl VarLayout {
    pub fn new(l: usize, p: usize) -> Self {
        VarLayout {
            gamma_plus: 0..l,
            gamma_minus: l..2 * l,
            eta_plus: 2 * l..2 * l + p,
            eta_minus: 2 * l + p..2 * l + 2 * p,
        }
    }

    pub fn l(&self) -> usize {
        self.gamma_plus.len()
    }

    pub fn p(&self) -> usize {
        self.eta_plus.len()
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub aeq: DMatrix<f64>,
    pub beq: DVector<f64>,
    pub aub: DMatrix<f64>,
    pub bub: DVector<f64>,
    pub layout: Option<VarLayout>,
    /// Named row ranges of `aeq`, used in error messages.
    pub eq_blocks: Vec<(String, Range<usize>)>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.aeq.ncols() != n || self.aub.ncols() != n {
            return Err(GdsError::dim("constraint blocks and cost differ in width"));
        }
        if self.aeq.nrows() != self.beq.len() || self.aub.nrows() != self.bub.len() {
            return Err(GdsError::dim("right-hand side lengths do not match rows"));
        }
        if self.bub.iter().any(|v| !v.is_finite()) || self.beq.iter().any(|v| !v.is_finite()) {
            return Err(GdsError::arg("right-hand sides must be finite"));
        }
        if let Some(lay) = &self.layout {
            if 2 * lay.l() + 2 * lay.p() != n {
                return Err(GdsError::dim("variable layout does not cover the program"));
            }
        }
        Ok(())
    }

    /// Largest constraint violation, each row measured relative to
    /// `1 + |rhs| + sum_j |a_ij z_j|` so that badly scaled rows compare
    /// on the same footing.
    pub fn residual(&self, z: &DVector<f64>) -> f64 {
        let rel = |m: &DMatrix<f64>, rhs: &DVector<f64>, i: usize| -> (f64, f64) {
            let (mut v, mut mag) = (0.0, 0.0);
            for (j, &zj) in z.iter().enumerate() {
                let t = m[(i, j)] * zj;
                v += t;
                mag += t.abs();
            }
            (v - rhs[i], 1.0 + rhs[i].abs() + mag)
        };
        let mut worst = z.iter().fold(0.0_f64, |m, &v| m.max(-v));
        for i in 0..self.aeq.nrows() {
            let (v, scale) = rel(&self.aeq, &self.beq, i);
            worst = worst.max(v.abs() / scale);
        }
        for i in 0..self.aub.nrows() {
            let (v, scale) = rel(&self.aub, &self.bub, i);
            worst = worst.max(v / scale);
        }
        worst
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        self.c.dot(z)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub primal_residual: f64,
    pub iterations: usize,
    /// Present for optimal solves; see [`solve_lp_warm`].
    pub warm_start: Option<WarmStart>,
}

/// Final basis of an optimal solve. Restarting from it pays off when the
/// next program has the same constraint matrix and new costs or
/// right-hand sides, as along a lambda path.
#[derive(Debug, Clone)]
pub struct WarmStart {
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    basis: simplex::Basis,
}

impl LpSolution {
    /// `eta+ - eta-` for programs with a GDS layout.
    pub fn eta(&self, layout: &VarLayout) -> DVector<f64> {
        let zp = self.z.rows(layout.eta_plus.start, layout.p());
        let zm = self.z.rows(layout.eta_minus.start, layout.p());
        zp - zm
    }

    pub fn gamma(&self, layout: &VarLayout) -> DVector<f64> {
        let zp = self.z.rows(layout.gamma_plus.start, layout.l());
        let zm = self.z.rows(layout.gamma_minus.start, layout.l());
        zp - zm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LpMethod {
    /// Dual route when the program has a GDS layout, primal otherwise.
    #[default]
    Auto,
    Primal,
    StructuredDual,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Zero picks a budget proportional to the problem size.
    pub max_iter: usize,
    pub method: LpMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-8,
            opt_tol: 1e-8,
            max_iter: 0,
            method: LpMethod::Auto,
        }
    }
}

impl SolveOptions {
    fn engine(&self) -> EngineOptions {
        EngineOptions {
            // internal tolerances act on the scaled problem
            feas_tol: (self.feas_tol * 1e-1).min(1e-9),
            opt_tol: (self.opt_tol * 1e-1).min(1e-9),
            max_iter: self.max_iter,
            ..EngineOptions::default()
        }
    }
}

/// The GDS program on centered data:
///
/// `min sum(gamma+ + gamma-)` subject to `A(eta+ - eta-) = gamma+ - gamma-`
/// and `+-Xc'Xc(eta+ - eta-) <= n lambda D_j +- Xc'yc` for every retained
/// column `j`.
pub fn build_gds_lp(ds: &DesignSet, a: &TransformA, lambda: f64) -> Result<LinearProgram> {
    build_with_equalities(ds, a, lambda, None)
}

/// GDS program with extra rows forcing `rows * eta = 0`.
pub fn build_gds_lp_with_zero_rows(
    ds: &DesignSet,
    a: &TransformA,
    lambda: f64,
    zero_rows: &DMatrix<f64>,
) -> Result<LinearProgram> {
    build_with_equalities(ds, a, lambda, Some(zero_rows))
}

fn build_with_equalities(
    ds: &DesignSet,
    a: &TransformA,
    lambda: f64,
    zero_rows: Option<&DMatrix<f64>>,
) -> Result<LinearProgram> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(GdsError::arg("lambda must be positive and finite"));
    }
    let (l, p) = a.values.shape();
    if ds.p() != p {
        return Err(GdsError::dim(format!(
            "design has {} columns, transform has {}",
            ds.p(),
            p
        )));
    }
    let extra = zero_rows.map_or(0, |z| z.nrows());
    if let Some(z) = zero_rows {
        if z.ncols() != p {
            return Err(GdsError::dim("zero-set rows do not match basis size"));
        }
    }
    let lay = VarLayout::new(l, p);
    let nv = 2 * l + 2 * p;

    let mut c = DVector::zeros(nv);
    c.rows_mut(0, 2 * l).fill(1.0);

    let mut aeq = DMatrix::zeros(l + extra, nv);
    for i in 0..l {
        aeq[(i, lay.gamma_plus.start + i)] = -1.0;
        aeq[(i, lay.gamma_minus.start + i)] = 1.0;
    }
    aeq.view_mut((0, lay.eta_plus.start), (l, p))
        .copy_from(&a.values);
    aeq.view_mut((0, lay.eta_minus.start), (l, p))
        .copy_from(&(-&a.values));
    if let Some(z) = zero_rows {
        aeq.view_mut((l, lay.eta_plus.start), (extra, p)).copy_from(z);
        aeq.view_mut((l, lay.eta_minus.start), (extra, p))
            .copy_from(&(-z));
    }
    let beq = DVector::zeros(l + extra);

    let gram = ds.xc.tr_mul(&ds.xc);
    let xty = ds.xc.tr_mul(&ds.yc);
    let n = ds.n() as f64;
    let keep = ds.retained();
    let mut aub = DMatrix::zeros(2 * keep.len(), nv);
    let mut bub = DVector::zeros(2 * keep.len());
    for (r, &j) in keep.iter().enumerate() {
        let row = gram.row(j);
        let slack = n * lambda * ds.d[j];
        aub.view_mut((2 * r, lay.eta_plus.start), (1, p)).copy_from(&row);
        aub.view_mut((2 * r, lay.eta_minus.start), (1, p))
            .copy_from(&(-row));
        bub[2 * r] = slack + xty[j];
        aub.view_mut((2 * r + 1, lay.eta_plus.start), (1, p))
            .copy_from(&(-row));
        aub.view_mut((2 * r + 1, lay.eta_minus.start), (1, p))
            .copy_from(&row);
        bub[2 * r + 1] = slack - xty[j];
    }

    let mut eq_blocks = vec![("transform".to_string(), 0..l)];
    if extra > 0 {
        eq_blocks.push(("zero-set".to_string(), l..l + extra));
    }
    Ok(LinearProgram {
        c,
        aeq,
        beq,
        aub,
        bub,
        layout: Some(lay),
        eq_blocks,
    })
}

pub fn solve_lp(lp: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution> {
    solve_lp_warm(lp, opts, None)
}

/// [`solve_lp`] starting from the basis of an earlier solve. A start that
/// does not fit the program is ignored.
pub fn solve_lp_warm(
    lp: &LinearProgram,
    opts: &SolveOptions,
    warm: Option<&WarmStart>,
) -> Result<LpSolution> {
    lp.validate()?;
    let structured = match opts.method {
        LpMethod::Primal => None,
        LpMethod::Auto => dual::Structure::detect(lp),
        LpMethod::StructuredDual => Some(dual::Structure::detect(lp).ok_or_else(|| {
            GdsError::arg("program does not have the l1-of-transform layout")
        })?),
    };
    let mut sol = match structured {
        Some(st) => dual::solve(lp, &st, opts, warm),
        None => solve_primal(lp, opts, warm),
    };
    sol.primal_residual = lp.residual(&sol.z);
    sol.objective = lp.objective(&sol.z);
    Ok(sol)
}

fn solve_primal(lp: &LinearProgram, opts: &SolveOptions, warm: Option<&WarmStart>) -> LpSolution {
    let nv = lp.num_vars();
    let (neq, nub) = (lp.aeq.nrows(), lp.aub.nrows());
    let mut m = DMatrix::zeros(neq + nub, nv + nub);
    m.view_mut((0, 0), (neq, nv)).copy_from(&lp.aeq);
    m.view_mut((neq, 0), (nub, nv)).copy_from(&lp.aub);
    m.view_mut((neq, nv), (nub, nub)).fill_diagonal(1.0);
    let mut b = DVector::zeros(neq + nub);
    b.rows_mut(0, neq).copy_from(&lp.beq);
    b.rows_mut(neq, nub).copy_from(&lp.bub);
    let mut c = DVector::zeros(nv + nub);
    c.rows_mut(0, nv).copy_from(&lp.c);
    let blp = BoundedLp {
        m,
        b,
        c,
        lo: vec![0.0; nv + nub],
        hi: vec![f64::INFINITY; nv + nub],
        start: None,
    };
    let (res, warm_start) = solve_scaled(&blp, opts.engine(), warm);
    LpSolution {
        z: DVector::from_iterator(nv, res.x.iter().take(nv).map(|v| v.max(0.0))),
        objective: 0.0,
        status: res.status,
        primal_residual: 0.0,
        iterations: res.iterations,
        warm_start,
    }
}

/// Geometric-mean row and column equilibration around the engine.
pub(crate) fn solve_scaled(
    lp: &BoundedLp,
    opts: EngineOptions,
    warm: Option<&WarmStart>,
) -> (simplex::EngineResult, Option<WarmStart>) {
    let (rows, cols) = lp.m.shape();
    let mut r = vec![1.0; rows];
    let mut s = vec![1.0; cols];
    for _ in 0..6 {
        for (i, ri) in r.iter_mut().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
            for (j, sj) in s.iter().enumerate() {
                let v = (lp.m[(i, j)] * sj).abs();
                if v > 0.0 {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            *ri = if hi > 0.0 { 1.0 / (lo * hi).sqrt() } else { 1.0 };
        }
        for (j, sj) in s.iter_mut().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
            for (i, ri) in r.iter().enumerate() {
                let v = (lp.m[(i, j)] * ri).abs();
                if v > 0.0 {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            *sj = if hi > 0.0 { 1.0 / (lo * hi).sqrt() } else { 1.0 };
        }
    }
    let mut m = lp.m.clone();
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] *= r[i] * s[j];
        }
    }
    let b = DVector::from_iterator(rows, lp.b.iter().zip(&r).map(|(b, r)| b * r));
    let cs: Vec<f64> = lp.c.iter().zip(&s).map(|(c, s)| c * s).collect();
    let cscale = cs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cscale = if cscale > 0.0 { cscale } else { 1.0 };
    let c = DVector::from_iterator(cols, cs.iter().map(|v| v / cscale));
    let lo = lp.lo.iter().zip(&s).map(|(v, s)| v / s).collect();
    let hi = lp.hi.iter().zip(&s).map(|(v, s)| v / s).collect();
    let start = lp
        .start
        .as_ref()
        .map(|x0| x0.iter().zip(&s).map(|(v, s)| v / s).collect());
    let scaled = BoundedLp {
        m,
        b,
        c,
        lo,
        hi,
        start,
    };
    let basis = warm
        .filter(|w| w.row_scale == r && w.col_scale == s)
        .map(|w| &w.basis);
    let mut res = simplex::solve_from(&scaled, opts, basis);
    let warm_out = res.basis.take().map(|basis| WarmStart {
        row_scale: r.clone(),
        col_scale: s.clone(),
        basis,
    });
    for (x, sj) in res.x.iter_mut().zip(&s) {
        *x *= sj;
    }
    for (pi, ri) in res.duals.iter_mut().zip(&r) {
        *pi *= ri * cscale;
    }
    res.objective *= cscale;
    (res, warm_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(c: &[f64], aub: &[&[f64]], bub: &[f64]) -> LinearProgram {
        let n = c.len();
        let flat: Vec<f64> = aub.iter().flat_map(|r| r.iter().copied()).collect();
        LinearProgram {
            c: DVector::from_column_slice(c),
            aeq: DMatrix::zeros(0, n),
            beq: DVector::zeros(0),
            aub: DMatrix::from_row_slice(aub.len(), n, &flat),
            bub: DVector::from_column_slice(bub),
            layout: None,
            eq_blocks: Vec::new(),
        }
    }

    #[test]
    fn single_lower_bound() {
        let lp = tiny(&[1.0], &[&[-1.0]], &[-1.0]);
        let sol = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.z[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded_statuses() {
        let lp = tiny(&[1.0], &[&[1.0]], &[-1.0]);
        let sol = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        let lp = tiny(&[-1.0, 0.0], &[&[1.0, -1.0]], &[0.0]);
        let sol = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn invalid_programs_are_rejected() {
        let mut lp = tiny(&[1.0], &[&[1.0]], &[f64::INFINITY]);
        assert!(solve_lp(&lp, &SolveOptions::default()).is_err());
        lp.bub[0] = 1.0;
        lp.c = DVector::zeros(2);
        assert!(solve_lp(&lp, &SolveOptions::default()).is_err());
    }

    #[test]
    fn scaling_is_transparent() {
        // badly scaled rows, same optimum as the unscaled version
        let lp = tiny(
            &[-1.0, -1.0],
            &[&[1e6, 2e6], &[3e-6, 1e-6]],
            &[4e6, 6e-6],
        );
        let sol = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 2.8).abs() < 1e-9, "{}", sol.objective);
    }
}
