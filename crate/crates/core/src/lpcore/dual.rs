//! Dual route for programs of the form
//! `min ||A eta||_1  s.t.  H eta <= h,  E eta = e`.
//!
//! The dual, `min h'mu - e'nu  s.t.  A'u + H'mu - E'nu = 0,
//! -1 <= u <= 1, mu >= 0`, has one equality row per coefficient. At its
//! optimum the row multipliers are a primal optimal `eta`.

use nalgebra::{DMatrix, DVector};

use super::simplex::BoundedLp;
use super::{solve_scaled, LinearProgram, LpSolution, LpStatus, SolveOptions, WarmStart};

pub(super) struct Structure {
    a: DMatrix<f64>,
    e: DMatrix<f64>,
    e_rhs: DVector<f64>,
    h: DMatrix<f64>,
    h_rhs: DVector<f64>,
}

impl Structure {
    pub(super) fn detect(lp: &LinearProgram) -> Option<Self> {
        let lay = lp.layout.as_ref()?;
        let (l, p) = (lay.l(), lay.p());
        let (gp, gm, ep, em) = (
            lay.gamma_plus.start,
            lay.gamma_minus.start,
            lay.eta_plus.start,
            lay.eta_minus.start,
        );
        if lay.gamma_minus.start != gp + l || lay.eta_minus.start != ep + p {
            return None;
        }
        if (0..2 * l).any(|j| lp.c[gp + j] != 1.0) || (0..2 * p).any(|j| lp.c[ep + j] != 0.0) {
            return None;
        }
        let neq = lp.aeq.nrows();
        if neq < l {
            return None;
        }
        for i in 0..neq {
            for k in 0..l {
                let (want_p, want_m) = if i == k { (-1.0, 1.0) } else { (0.0, 0.0) };
                if lp.aeq[(i, gp + k)] != want_p || lp.aeq[(i, gm + k)] != want_m {
                    return None;
                }
            }
            if i < l && lp.beq[i] != 0.0 {
                return None;
            }
            if (0..p).any(|k| lp.aeq[(i, em + k)] != -lp.aeq[(i, ep + k)]) {
                return None;
            }
        }
        for i in 0..lp.aub.nrows() {
            if (0..2 * l).any(|k| lp.aub[(i, gp + k)] != 0.0) {
                return None;
            }
            if (0..p).any(|k| lp.aub[(i, em + k)] != -lp.aub[(i, ep + k)]) {
                return None;
            }
        }
        Some(Structure {
            a: lp.aeq.view((0, ep), (l, p)).into_owned(),
            e: lp.aeq.view((l, ep), (neq - l, p)).into_owned(),
            e_rhs: lp.beq.rows(l, neq - l).into_owned(),
            h: lp.aub.view((0, ep), (lp.aub.nrows(), p)).into_owned(),
            h_rhs: lp.bub.clone(),
        })
    }
}

pub(super) fn solve(
    lp: &LinearProgram,
    st: &Structure,
    opts: &SolveOptions,
    warm: Option<&WarmStart>,
) -> LpSolution {
    let lay = lp.layout.as_ref().expect("structure implies layout");
    let (l, p) = (lay.l(), lay.p());
    let (q, r) = (st.h.nrows(), st.e.nrows());
    let cols = l + q + 2 * r;

    let mut m = DMatrix::zeros(p, cols);
    m.view_mut((0, 0), (p, l)).copy_from(&st.a.transpose());
    m.view_mut((0, l), (p, q)).copy_from(&st.h.transpose());
    let et = st.e.transpose();
    m.view_mut((0, l + q), (p, r)).copy_from(&(-&et));
    m.view_mut((0, l + q + r), (p, r)).copy_from(&et);

    let mut c = DVector::zeros(cols);
    c.rows_mut(l, q).copy_from(&st.h_rhs);
    c.rows_mut(l + q, r).copy_from(&(-&st.e_rhs));
    c.rows_mut(l + q + r, r).copy_from(&st.e_rhs);

    let mut lo = vec![0.0; cols];
    let mut hi = vec![f64::INFINITY; cols];
    for j in 0..l {
        lo[j] = -1.0;
        hi[j] = 1.0;
    }
    let blp = BoundedLp {
        m,
        b: DVector::zeros(p),
        c,
        lo,
        hi,
        // u = 0, mu = 0, nu = 0 satisfies every dual row
        start: Some(vec![0.0; cols]),
    };
    let (res, warm_start) = solve_scaled(&blp, opts.engine(), warm);
    let status = match res.status {
        LpStatus::Optimal => LpStatus::Optimal,
        // dual unbounded below means the primal has no feasible point
        LpStatus::Unbounded => LpStatus::Infeasible,
        LpStatus::Infeasible => LpStatus::Unbounded,
        LpStatus::IterationLimit => LpStatus::IterationLimit,
    };

    let eta = DVector::from_column_slice(&res.duals);
    let gamma = &st.a * &eta;
    let mut z = DVector::zeros(lp.num_vars());
    for k in 0..l {
        z[lay.gamma_plus.start + k] = gamma[k].max(0.0);
        z[lay.gamma_minus.start + k] = (-gamma[k]).max(0.0);
    }
    for k in 0..p {
        z[lay.eta_plus.start + k] = eta[k].max(0.0);
        z[lay.eta_minus.start + k] = (-eta[k]).max(0.0);
    }
    LpSolution {
        z,
        objective: 0.0,
        status,
        primal_residual: 0.0,
        iterations: res.iterations,
        warm_start,
    }
}
