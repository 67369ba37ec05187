//! Dense bounded-variable revised simplex.
//!
//! Solves `min c'x  s.t.  M x = b,  lo <= x <= hi` with finite lower bounds.
//! Phase one drives one artificial per row to zero; phase two optimises the
//! true cost. Pricing is Dantzig's rule on column-normalised reduced costs
//! with a Harris ratio test, falling back to Bland's smallest-index rule
//! after a run of degenerate pivots. All ties resolve to the lowest index so
//! that identical inputs give identical pivots.

use nalgebra::{DMatrix, DVector};

use super::LpStatus;

/// Problem in bounded equality form.
#[derive(Debug, Clone)]
pub(crate) struct BoundedLp {
    pub m: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Starting values for the structural columns, clamped to the bounds.
    /// Columns that start strictly inside their bounds stay nonbasic and
    /// may move either way. Defaults to `lo`.
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EngineOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iter: 0,
            bland_after: 60,
            refactor_every: 80,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EngineResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row multipliers `pi` with reduced costs `c - M' pi`.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Final basis when optimal; restarts a program that differs only in
    /// its costs.
    pub basis: Option<Basis>,
}

/// A basis with the positions of the nonbasic variables.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    basis: Vec<usize>,
    state: Vec<State>,
    x: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const BLAND_PIVOT_REL: f64 = 1e-2;
const SHIFT: f64 = 1e-7;
const CRASH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum State {
    Basic,
    Lower,
    Upper,
    /// nonbasic, strictly between the bounds
    Between,
}

struct Engine<'a> {
    lp: &'a BoundedLp,
    opts: EngineOptions,
    rows: usize,
    /// structural columns, artificials follow
    n: usize,
    art_sign: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    col_norm: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    /// Original bounds while the anti-degeneracy shift is active.
    saved_bounds: Option<(Vec<f64>, Vec<f64>)>,
    widened: Vec<bool>,
}

impl<'a> Engine<'a> {
    fn new(lp: &'a BoundedLp, opts: EngineOptions) -> Self {
        let (rows, n) = lp.m.shape();
        let mut x: Vec<f64> = match &lp.start {
            Some(x0) => x0
                .iter()
                .zip(lp.lo.iter().zip(&lp.hi))
                .map(|(v, (lo, hi))| v.max(*lo).min(*hi))
                .collect(),
            None => lp.lo.clone(),
        };
        let mut resid = lp.b.clone();
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                resid.axpy(-v, &lp.m.column(j), 1.0);
            }
        }
        let art_sign: Vec<f64> = resid
            .iter()
            .map(|&r| if r < 0.0 { -1.0 } else { 1.0 })
            .collect();
        x.extend(resid.iter().map(|r| r.abs()));
        let mut lo = lp.lo.clone();
        lo.extend(std::iter::repeat_n(0.0, rows));
        let mut hi = lp.hi.clone();
        hi.extend(std::iter::repeat_n(f64::INFINITY, rows));
        let mut state: Vec<State> = (0..n)
            .map(|j| {
                if x[j] == lp.lo[j] {
                    State::Lower
                } else if x[j] == lp.hi[j] {
                    State::Upper
                } else {
                    State::Between
                }
            })
            .collect();
        state.extend(std::iter::repeat_n(State::Basic, rows));
        let basis: Vec<usize> = (n..n + rows).collect();
        let binv = DMatrix::from_diagonal(&DVector::from_column_slice(&art_sign));
        let mut col_norm: Vec<f64> = lp
            .m
            .column_iter()
            .map(|c| c.norm().max(1e-12))
            .collect();
        col_norm.extend(std::iter::repeat_n(1.0, rows));
        Engine {
            lp,
            opts,
            rows,
            n,
            art_sign,
            lo,
            hi,
            x,
            state,
            basis,
            binv,
            col_norm,
            iterations: 0,
            since_refactor: 0,
            saved_bounds: None,
            widened: vec![false; n + rows],
        }
    }

    fn total(&self) -> usize {
        self.n + self.rows
    }

    /// `col_j` dotted with `v`.
    fn col_dot(&self, j: usize, v: &DVector<f64>) -> f64 {
        if j < self.n {
            self.lp.m.column(j).dot(v)
        } else {
            self.art_sign[j - self.n] * v[j - self.n]
        }
    }

    fn ftran(&self, j: usize) -> DVector<f64> {
        if j < self.n {
            let col = self.lp.m.column(j);
            let mut out = DVector::zeros(self.rows);
            for (k, &v) in col.iter().enumerate() {
                if v != 0.0 {
                    out.axpy(v, &self.binv.column(k), 1.0);
                }
            }
            out
        } else {
            let k = j - self.n;
            self.binv.column(k) * self.art_sign[k]
        }
    }

    fn duals(&self, cost: &[f64]) -> DVector<f64> {
        let cb = DVector::from_iterator(self.rows, self.basis.iter().map(|&j| cost[j]));
        self.binv.tr_mul(&cb)
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let mut bm = DMatrix::zeros(self.rows, self.rows);
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                bm.column_mut(i).copy_from(&self.lp.m.column(j));
            } else {
                bm[(j - self.n, i)] = self.art_sign[j - self.n];
            }
        }
        bm
    }

    /// Rebuild the inverse from scratch and recompute basic values.
    fn refactor(&mut self) -> bool {
        let Some(inv) = self.basis_matrix().try_inverse() else {
            return false;
        };
        self.binv = inv;
        self.since_refactor = 0;
        let mut rhs = self.lp.b.clone();
        for j in 0..self.total() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                if j < self.n {
                    rhs.axpy(-self.x[j], &self.lp.m.column(j), 1.0);
                } else {
                    rhs[j - self.n] -= self.art_sign[j - self.n] * self.x[j];
                }
            }
        }
        let xb = &self.binv * rhs;
        for (i, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[i];
        }
        true
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Runs simplex iterations on `cost` until optimal, unbounded or the
    /// iteration budget is spent. Bounds shifted to break degeneracy are
    /// put back before returning.
    fn optimise(&mut self, cost: &[f64]) -> LpStatus {
        let status = self.iterate(cost);
        if self.saved_bounds.is_some() {
            self.restore_bounds();
            if !self.refactor() {
                return LpStatus::IterationLimit;
            }
            if status == LpStatus::Optimal {
                return self.dual_cleanup(cost);
            }
        }
        status
    }

    /// Dual simplex passes that remove the small bound violations left
    /// after the shifted bounds are put back, keeping reduced costs
    /// optimal.
    fn dual_cleanup(&mut self, cost: &[f64]) -> LpStatus {
        let tol = self.opts.feas_tol;
        loop {
            if self.iterations >= self.opts.max_iter {
                return LpStatus::IterationLimit;
            }
            let mut worst: Option<(usize, f64, State)> = None;
            let mut worst_v = tol;
            for (i, &j) in self.basis.iter().enumerate() {
                let scale = 1.0 + self.x[j].abs();
                let (v, to) = if self.x[j] < self.lo[j] {
                    (self.lo[j] - self.x[j], State::Lower)
                } else if self.x[j] > self.hi[j] {
                    (self.x[j] - self.hi[j], State::Upper)
                } else {
                    continue;
                };
                if v / scale > worst_v {
                    worst_v = v / scale;
                    worst = Some((i, v, to));
                }
            }
            let Some((r, _, to)) = worst else {
                return LpStatus::Optimal;
            };
            let leaving = self.basis[r];
            let target = if to == State::Lower {
                self.lo[leaving]
            } else {
                self.hi[leaving]
            };
            // x_r moves by -alpha_j * t when nonbasic j moves by t
            let need_up = to == State::Lower;
            let pi = self.duals(cost);
            let rho = self.binv.row(r).transpose();
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.total() {
                let st = self.state[j];
                if st == State::Basic || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let a = self.col_dot(j, &rho);
                if a.abs() <= PIVOT_TOL.max(1e-7 * rho.amax()) {
                    continue;
                }
                // sign of t that moves x_r the right way
                let t_pos = if need_up { a < 0.0 } else { a > 0.0 };
                let ok = match st {
                    State::Lower => t_pos,
                    State::Upper => !t_pos,
                    _ => true,
                };
                if !ok {
                    continue;
                }
                let d = cost[j] - self.col_dot(j, &pi);
                let ratio = d.abs() / a.abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba)) => ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba),
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, _, _)) = best else {
                // no repair keeps the costs optimal; leave the tiny violation
                return LpStatus::Optimal;
            };
            let alpha = self.ftran(q);
            let t = (self.x[leaving] - target) / alpha[r];
            for (i, &a) in alpha.iter().enumerate() {
                let j = self.basis[i];
                self.x[j] -= t * a;
            }
            self.x[q] += t;
            self.x[leaving] = target;
            self.state[leaving] = to;
            self.state[q] = State::Basic;
            self.basis[r] = q;
            self.pivot(r, &alpha);
            self.iterations += 1;
            self.since_refactor += 1;
            if self.since_refactor >= self.opts.refactor_every && !self.refactor() {
                return LpStatus::IterationLimit;
            }
        }
    }

    fn snapshot(&self) -> Basis {
        Basis {
            basis: self.basis.clone(),
            state: self.state.clone(),
            x: self.x.clone(),
        }
    }

    /// Load a basis from an earlier solve of a program with the same
    /// constraints. Returns false when it does not fit or is no longer
    /// feasible.
    fn load(&mut self, b: &Basis) -> bool {
        if b.basis.len() != self.rows || b.state.len() != self.total() {
            return false;
        }
        self.basis = b.basis.clone();
        self.state = b.state.clone();
        self.x = b.x.clone();
        for j in self.n..self.total() {
            self.hi[j] = 0.0;
        }
        if !self.refactor() {
            return false;
        }
        let tol = self.opts.feas_tol * 100.0;
        self.basis.iter().all(|&j| {
            let slack = tol * (1.0 + self.x[j].abs());
            self.x[j] >= self.lo[j] - slack && self.x[j] <= self.hi[j] + slack
        })
    }

    /// Start shifting bounds: every basic variable gets its bounds pushed
    /// out by a small, index-dependent amount, so ties in the ratio test
    /// disappear.
    fn start_shift(&mut self) {
        self.saved_bounds = Some((self.lo.clone(), self.hi.clone()));
        for i in 0..self.rows {
            self.widen(self.basis[i]);
        }
    }

    fn widen(&mut self, j: usize) {
        if self.saved_bounds.is_none() || self.widened[j] {
            return;
        }
        // golden-ratio sequence in [1, 2)
        let frac = (j as f64 * 0.618_033_988_749_895).fract();
        let shift = |b: f64| SHIFT * (1.0 + b.abs()) * (1.0 + frac);
        if self.lo[j].is_finite() {
            self.lo[j] -= shift(self.lo[j]);
        }
        if self.hi[j].is_finite() {
            self.hi[j] += shift(self.hi[j]);
        }
        self.widened[j] = true;
    }

    fn restore_bounds(&mut self) {
        let Some((lo, hi)) = self.saved_bounds.take() else {
            return;
        };
        self.lo = lo;
        self.hi = hi;
        for j in 0..self.total() {
            self.widened[j] = false;
            match self.state[j] {
                State::Basic => {}
                State::Lower => self.x[j] = self.lo[j],
                State::Upper => self.x[j] = self.hi[j],
                State::Between => {
                    self.x[j] = self.x[j].max(self.lo[j]).min(self.hi[j]);
                    if self.x[j] == self.lo[j] {
                        self.state[j] = State::Lower;
                    } else if self.x[j] == self.hi[j] {
                        self.state[j] = State::Upper;
                    }
                }
            }
        }
    }

    fn iterate(&mut self, cost: &[f64]) -> LpStatus {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.opts.max_iter {
                return LpStatus::IterationLimit;
            }
            let pi = self.duals(cost);

            // pricing
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.total() {
                let st = self.state[j];
                if st == State::Basic || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let d = cost[j] - self.col_dot(j, &pi);
                let improving = match st {
                    State::Lower => d < -self.opts.opt_tol,
                    State::Upper => d > self.opts.opt_tol,
                    State::Between => d.abs() > self.opts.opt_tol,
                    State::Basic => false,
                };
                if !improving {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                let score = d.abs() / self.col_norm[j];
                if score > best {
                    best = score;
                    entering = Some((j, d));
                }
            }
            let Some((q, dq)) = entering else {
                return LpStatus::Optimal;
            };
            let dir = match self.state[q] {
                State::Lower => 1.0,
                State::Upper => -1.0,
                _ => -dq.signum(),
            };
            let alpha = self.ftran(q);

            // ratio test
            let tol = self.opts.feas_tol;
            let flip = if dir > 0.0 {
                self.hi[q] - self.x[q]
            } else {
                self.x[q] - self.lo[q]
            };
            let mut relaxed = flip;
            for (i, &a) in alpha.iter().enumerate() {
                let a = a * dir;
                let j = self.basis[i];
                if a > PIVOT_TOL {
                    relaxed = relaxed.min((self.x[j] - self.lo[j] + tol) / a);
                } else if a < -PIVOT_TOL && self.hi[j].is_finite() {
                    relaxed = relaxed.min((self.hi[j] - self.x[j] + tol) / -a);
                }
            }
            if relaxed.is_infinite() {
                return LpStatus::Unbounded;
            }
            // second pass: among rows within the relaxed bound take the
            // largest pivot, or under Bland the smallest variable index
            // among pivots of reasonable size
            let mut cands: Vec<(usize, f64, State, f64)> = Vec::new();
            let mut amax = 0.0_f64;
            for (i, &a) in alpha.iter().enumerate() {
                let a = a * dir;
                let j = self.basis[i];
                let (ratio, to) = if a > PIVOT_TOL {
                    ((self.x[j] - self.lo[j]) / a, State::Lower)
                } else if a < -PIVOT_TOL && self.hi[j].is_finite() {
                    ((self.hi[j] - self.x[j]) / -a, State::Upper)
                } else {
                    continue;
                };
                if ratio <= relaxed {
                    amax = amax.max(a.abs());
                    cands.push((i, ratio, to, a.abs()));
                }
            }
            let mut leave: Option<(usize, f64, State)> = None;
            if bland {
                let floor = amax * BLAND_PIVOT_REL;
                let mut best_j = usize::MAX;
                for &(i, ratio, to, a) in &cands {
                    if a >= floor && self.basis[i] < best_j {
                        best_j = self.basis[i];
                        leave = Some((i, ratio, to));
                    }
                }
            } else {
                let mut key = 0.0;
                for &(i, ratio, to, a) in &cands {
                    if a > key {
                        key = a;
                        leave = Some((i, ratio, to));
                    }
                }
            }

            self.iterations += 1;
            let step = match leave {
                Some((_, ratio, _)) if ratio.max(0.0) < flip => ratio.max(0.0),
                _ => flip,
            };
            if step.is_infinite() {
                return LpStatus::Unbounded;
            }
            // move along the edge
            if step != 0.0 {
                for (i, &a) in alpha.iter().enumerate() {
                    let j = self.basis[i];
                    self.x[j] -= step * dir * a;
                }
                self.x[q] += step * dir;
            }
            if step < DEGENERATE_STEP {
                degenerate_run += 1;
                if degenerate_run > self.opts.bland_after {
                    if self.saved_bounds.is_none() {
                        self.start_shift();
                        degenerate_run = 0;
                    } else {
                        bland = true;
                    }
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }

            match leave {
                Some((r, ratio, to)) if ratio.max(0.0) < flip => {
                    let out = self.basis[r];
                    self.x[out] = if to == State::Lower {
                        self.lo[out]
                    } else {
                        self.hi[out]
                    };
                    self.state[out] = to;
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    self.pivot(r, &alpha);
                    self.widen(q);
                    self.since_refactor += 1;
                    if self.since_refactor >= self.opts.refactor_every && !self.refactor() {
                        return LpStatus::IterationLimit;
                    }
                }
                _ => {
                    // bound flip, basis unchanged
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, alpha: &DVector<f64>) {
        let ar = alpha[r];
        let rows = self.rows;
        for k in 0..rows {
            let pr = self.binv[(r, k)] / ar;
            if pr != 0.0 {
                let mut col = self.binv.column_mut(k);
                for i in 0..rows {
                    col[i] -= alpha[i] * pr;
                }
            }
            self.binv[(r, k)] = pr;
        }
    }

    /// Replace the all-artificial starting basis by structural columns
    /// chosen with complete pivoting, for a start that already satisfies
    /// every row. Rows left without a pivot keep their artificial, pinned
    /// at zero.
    fn crash(&mut self) {
        let (rows, n) = (self.rows, self.n);
        let mut work = self.lp.m.clone();
        let mut row_done = vec![false; rows];
        let mut col_used = vec![false; n];
        for j in 0..n {
            if self.hi[j] - self.lo[j] <= 0.0 {
                col_used[j] = true;
            }
        }
        let scale = work.amax().max(f64::MIN_POSITIVE);
        for _ in 0..rows {
            let mut best = (0.0, usize::MAX, usize::MAX);
            for j in 0..n {
                if col_used[j] {
                    continue;
                }
                let col = work.column(j);
                for i in 0..rows {
                    let v = col[i].abs();
                    if !row_done[i] && v > best.0 {
                        best = (v, i, j);
                    }
                }
            }
            let (piv, r, q) = best;
            if piv <= CRASH_TOL * scale {
                break;
            }
            row_done[r] = true;
            col_used[q] = true;
            let pcol = work.column(q).clone_owned();
            let prow = work.row(r).clone_owned();
            for j in 0..n {
                let f = prow[j] / pcol[r];
                if f != 0.0 && !col_used[j] {
                    let mut c = work.column_mut(j);
                    for i in 0..rows {
                        if !row_done[i] {
                            c[i] -= f * pcol[i];
                        }
                    }
                }
            }
            let art = n + r;
            self.state[art] = State::Lower;
            self.x[art] = 0.0;
            self.state[q] = State::Basic;
            self.basis[r] = q;
        }
        for j in n..self.total() {
            self.hi[j] = 0.0;
        }
    }

    /// Swap zero-valued artificials out of the basis where possible and
    /// pin every artificial at zero.
    fn expel_artificials(&mut self) {
        for r in 0..self.rows {
            let j = self.basis[r];
            if j < self.n {
                continue;
            }
            let row = self.binv.row(r).transpose();
            let mut best: Option<(usize, f64)> = None;
            for q in 0..self.n {
                if self.state[q] == State::Basic {
                    continue;
                }
                let v = self.lp.m.column(q).dot(&row);
                if v.abs() > 1e-7 && best.is_none_or(|(_, b)| v.abs() > b) {
                    best = Some((q, v.abs()));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                self.state[j] = State::Lower;
                self.x[j] = 0.0;
                self.state[q] = State::Basic;
                self.basis[r] = q;
                self.pivot(r, &alpha);
            }
        }
        for j in self.n..self.total() {
            self.hi[j] = 0.0;
        }
    }
}

#[cfg(test)]
pub(crate) fn solve(lp: &BoundedLp, opts: EngineOptions) -> EngineResult {
    solve_from(lp, opts, None)
}

/// Like [`solve`], starting phase two from `warm` when it is still
/// feasible for `lp`.
pub(crate) fn solve_from(lp: &BoundedLp, mut opts: EngineOptions, warm: Option<&Basis>) -> EngineResult {
    let (rows, n) = lp.m.shape();
    debug_assert_eq!(lp.b.len(), rows);
    debug_assert_eq!(lp.c.len(), n);
    if opts.max_iter == 0 {
        opts.max_iter = 50 * (rows + n) + 1000;
    }
    if let Some(w) = warm {
        let mut eng = Engine::new(lp, opts);
        if eng.load(w) {
            return phase_two(eng, lp);
        }
        log::debug!("warm start rejected, solving from scratch");
    }
    let mut eng = Engine::new(lp, opts);
    let total = eng.total();

    let mut phase1 = vec![0.0; total];
    for c in phase1.iter_mut().skip(n) {
        *c = 1.0;
    }
    let start_infeas: f64 = eng.x[n..].iter().sum();
    let status = if start_infeas == 0.0 {
        LpStatus::Optimal
    } else {
        eng.optimise(&phase1)
    };
    if status != LpStatus::Optimal {
        let status = if status == LpStatus::Unbounded {
            // phase one is bounded below by zero
            LpStatus::IterationLimit
        } else {
            status
        };
        return finish(&eng, status, &phase1);
    }
    eng.refactor();
    let infeas: f64 = eng.x[n..].iter().sum();
    let scale = 1.0 + lp.b.amax();
    if infeas > opts.feas_tol.max(1e-9) * scale * 10.0 {
        return finish(&eng, LpStatus::Infeasible, &phase1);
    }
    if start_infeas == 0.0 {
        eng.crash();
    } else {
        eng.expel_artificials();
    }
    eng.refactor();
    phase_two(eng, lp)
}

fn finish(eng: &Engine, status: LpStatus, cost: &[f64]) -> EngineResult {
    EngineResult {
        status,
        x: eng.x[..eng.n].to_vec(),
        duals: eng.duals(cost).iter().copied().collect(),
        objective: eng.objective(cost),
        iterations: eng.iterations,
        basis: None,
    }
}

fn phase_two(mut eng: Engine, lp: &BoundedLp) -> EngineResult {
    let rows = eng.rows;
    let mut cost: Vec<f64> = lp.c.iter().copied().collect();
    cost.extend(std::iter::repeat_n(0.0, rows));
    let mut status = eng.optimise(&cost);
    if status == LpStatus::Optimal {
        // re-check optimality against a fresh factorisation
        for _ in 0..3 {
            eng.refactor();
            let before = eng.iterations;
            status = eng.optimise(&cost);
            if status != LpStatus::Optimal || eng.iterations == before {
                break;
            }
        }
    }
    let mut res = finish(&eng, status, &cost);
    if status == LpStatus::Optimal {
        if let Some(pi) = accurate_duals(&eng, &cost) {
            res.duals = pi;
        }
        res.basis = Some(eng.snapshot());
    }
    res
}

/// Solve `B' pi = c_B` by LU rather than through the running inverse.
fn accurate_duals(eng: &Engine, cost: &[f64]) -> Option<Vec<f64>> {
    let bm = eng.basis_matrix();
    let cb = DVector::from_iterator(eng.rows, eng.basis.iter().map(|&j| cost[j]));
    let pi = bm.transpose().lu().solve(&cb)?;
    Some(pi.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(m: &[&[f64]], b: &[f64], c: &[f64], hi: &[f64]) -> BoundedLp {
        let rows = m.len();
        let cols = c.len();
        let flat: Vec<f64> = m.iter().flat_map(|r| r.iter().copied()).collect();
        BoundedLp {
            m: DMatrix::from_row_slice(rows, cols, &flat),
            b: DVector::from_column_slice(b),
            c: DVector::from_column_slice(c),
            lo: vec![0.0; cols],
            hi: hi.to_vec(),
            start: None,
        }
    }

    #[test]
    fn small_equality_lp() {
        // min -x - y  s.t. x + y + s = 4, x + 3y + t = 6
        let inf = f64::INFINITY;
        let p = lp(
            &[&[1.0, 1.0, 1.0, 0.0], &[1.0, 3.0, 0.0, 1.0]],
            &[4.0, 6.0],
            &[-1.0, -1.0, 0.0, 0.0],
            &[inf; 4],
        );
        let r = solve(&p, EngineOptions::default());
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 4.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_variables_flip() {
        // min -x - 2y  s.t. x + y + s = 3, 0 <= x, y <= 1
        let inf = f64::INFINITY;
        let p = lp(
            &[&[1.0, 1.0, 1.0]],
            &[3.0],
            &[-1.0, -2.0, 0.0],
            &[1.0, 1.0, inf],
        );
        let r = solve(&p, EngineOptions::default());
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 3.0).abs() < 1e-12);
        assert_eq!(&r.x[..2], &[1.0, 1.0]);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let inf = f64::INFINITY;
        // x + y = -1 with x, y >= 0
        let p = lp(&[&[1.0, 1.0]], &[-1.0], &[1.0, 1.0], &[inf, inf]);
        assert_eq!(solve(&p, EngineOptions::default()).status, LpStatus::Infeasible);
        // min -x s.t. x - y = 0
        let p = lp(&[&[1.0, -1.0]], &[0.0], &[-1.0, 0.0], &[inf, inf]);
        assert_eq!(solve(&p, EngineOptions::default()).status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let inf = f64::INFINITY;
        let p = lp(
            &[&[1.0, 1.0], &[2.0, 2.0]],
            &[1.0, 2.0],
            &[1.0, 2.0],
            &[inf, inf],
        );
        let r = solve(&p, EngineOptions::default());
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duals_price_out_the_optimal_basis() {
        let inf = f64::INFINITY;
        let p = lp(
            &[&[1.0, 2.0, 1.0, 0.0], &[3.0, 1.0, 0.0, 1.0]],
            &[4.0, 6.0],
            &[-1.0, -1.0, 0.0, 0.0],
            &[inf; 4],
        );
        let r = solve(&p, EngineOptions::default());
        assert_eq!(r.status, LpStatus::Optimal);
        // reduced costs nonnegative, zero on basic variables
        for j in 0..4 {
            let d = p.c[j] - p.m.column(j).dot(&DVector::from_column_slice(&r.duals));
            assert!(d > -1e-12);
            if r.x[j] > 1e-12 {
                assert!(d.abs() < 1e-12);
            }
        }
        let dual_obj: f64 = r.duals.iter().zip(p.b.iter()).map(|(a, b)| a * b).sum();
        assert!((dual_obj - r.objective).abs() < 1e-12);
    }
}
