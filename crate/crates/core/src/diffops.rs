//! Difference operators and the stacked transform `A`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bases::{BasisMatrix, GridSpec};
use crate::error::{GdsError, Result};

/// `(m - d) x m` matrix of signed binomial coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix {
    pub m: usize,
    pub d: usize,
    pub values: DMatrix<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn difference_matrix(m: usize, d: usize) -> Result<DiffMatrix> {
    if d >= m {
        return Err(GdsError::arg(format!(
            "difference order {d} must be smaller than length {m}"
        )));
    }
    let mut values = DMatrix::zeros(m - d, m);
    for i in 0..m - d {
        for k in 0..=d {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            values[(i, i + k)] = sign * binomial(d, k).round();
        }
    }
    Ok(DiffMatrix { m, d, values })
}

/// `(1/delta1)^d1 (1/delta2)^d2 D_{m1}^{d1} (x) D_{m2}^{d2}`, rows and
/// columns in row-major grid order.
pub fn bivariate_operator(
    m1: usize,
    m2: usize,
    d1: usize,
    d2: usize,
    delta1: f64,
    delta2: f64,
) -> Result<DMatrix<f64>> {
    if !(delta1 > 0.0 && delta2 > 0.0) {
        return Err(GdsError::arg("grid spacings must be positive"));
    }
    let dt = difference_matrix(m1, d1)?;
    let ds = difference_matrix(m2, d2)?;
    let scale = delta1.recip().powi(d1 as i32) * delta2.recip().powi(d2 as i32);
    Ok(dt.values.kronecker(&ds.values) * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `[w I; A^{d1,d2}] B^T`
    Joint,
    /// `[w I; A^{d1,0}; A^{0,d2}] B^T`
    Separable,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Joint => "joint",
            Variant::Separable => "separable",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = GdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Variant::Joint),
            "separable" => Ok(Variant::Separable),
            other => Err(GdsError::arg(format!("unknown variant '{other}'"))),
        }
    }
}

/// Row count of the stacked transform for a grid.
pub fn transform_rows(variant: Variant, m1: usize, m2: usize, d1: usize, d2: usize) -> usize {
    match variant {
        Variant::Joint => m1 * m2 + (m1 - d1) * (m2 - d2),
        Variant::Separable => m1 * m2 + (m1 - d1) * m2 + m1 * (m2 - d2),
    }
}

#[derive(Debug, Clone)]
pub struct TransformA {
    pub variant: Variant,
    pub w: f64,
    pub d1: usize,
    pub d2: usize,
    pub grid: GridSpec,
    pub values: DMatrix<f64>,
    pub sigma_min: f64,
    /// Set when some column of `A` is identically zero.
    pub zero_columns: bool,
}

impl TransformA {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

/// Grid-level operator (before right-multiplying by the basis matrix).
pub fn grid_operator(
    variant: Variant,
    w: f64,
    d1: usize,
    d2: usize,
    grid: &GridSpec,
) -> Result<DMatrix<f64>> {
    let (m1, m2) = (grid.m1, grid.m2);
    let g = m1 * m2;
    let blocks: Vec<DMatrix<f64>> = match variant {
        Variant::Joint => vec![bivariate_operator(
            m1,
            m2,
            d1,
            d2,
            grid.delta1,
            grid.delta2,
        )?],
        Variant::Separable => vec![
            bivariate_operator(m1, m2, d1, 0, grid.delta1, grid.delta2)?,
            bivariate_operator(m1, m2, 0, d2, grid.delta1, grid.delta2)?,
        ],
    };
    let rows = g + blocks.iter().map(|b| b.nrows()).sum::<usize>();
    let mut out = DMatrix::zeros(rows, g);
    out.view_mut((0, 0), (g, g)).fill_diagonal(w);
    let mut r = g;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), g)).copy_from(&b);
        r += b.nrows();
    }
    Ok(out)
}

pub fn assemble_a(
    variant: Variant,
    w: f64,
    d1: usize,
    d2: usize,
    grid: &GridSpec,
    bt: &BasisMatrix,
) -> Result<TransformA> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(GdsError::arg("weight w must be finite and nonnegative"));
    }
    if &bt.grid != grid || bt.rows() != grid.len() {
        return Err(GdsError::dim("basis matrix was evaluated on a different grid"));
    }
    let values = grid_operator(variant, w, d1, d2, grid)? * &bt.values;
    let zero_columns = values
        .column_iter()
        .any(|c| c.iter().all(|&v| v == 0.0));
    let sigma_min = if zero_columns || values.nrows() < values.ncols() {
        0.0
    } else {
        values.clone().svd(false, false).singular_values.min()
    };
    Ok(TransformA {
        variant,
        w,
        d1,
        d2,
        grid: grid.clone(),
        values,
        sigma_min,
        zero_columns,
    })
}

/// Moore-Penrose pseudoinverse of a full-column-rank `A`.
pub fn pseudoinverse(a: &TransformA) -> Result<DMatrix<f64>> {
    pinv_full_column_rank(&a.values)
}

pub(crate) fn pinv_full_column_rank(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (l, p) = a.shape();
    if l < p {
        return Err(GdsError::RankDeficient { sigma_min: 0.0 });
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let tol = smax * l.max(p) as f64 * f64::EPSILON;
    if !(smin > tol) {
        return Err(GdsError::RankDeficient { sigma_min: smin });
    }
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut vs = vt.transpose();
    for (j, s) in svd.singular_values.iter().enumerate() {
        vs.column_mut(j).scale_mut(1.0 / s);
    }
    Ok(vs * u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{basis_matrix, BasisSpec};

    #[test]
    fn second_difference_of_length_five() {
        let d = difference_matrix(5, 2).unwrap();
        let expect = DMatrix::from_row_slice(
            3,
            5,
            &[
                1., -2., 1., 0., 0., //
                0., 1., -2., 1., 0., //
                0., 0., 1., -2., 1.,
            ],
        );
        assert_eq!(d.values, expect);
    }

    #[test]
    fn zero_order_is_identity_and_first_order_signs() {
        assert_eq!(difference_matrix(4, 0).unwrap().values, DMatrix::identity(4, 4));
        let d = difference_matrix(3, 1).unwrap();
        assert_eq!(
            d.values,
            DMatrix::from_row_slice(2, 3, &[1., -1., 0., 0., 1., -1.])
        );
        assert!(difference_matrix(3, 3).is_err());
    }

    #[test]
    fn bivariate_shapes() {
        let a = bivariate_operator(2, 2, 1, 1, 1.0, 1.0).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(1, 4, &[1., -1., -1., 1.]));
        let a = bivariate_operator(4, 5, 1, 2, 0.25, 0.2).unwrap();
        assert_eq!(a.shape(), (9, 20));
        let a = bivariate_operator(3, 4, 0, 0, 1.0, 1.0).unwrap();
        assert_eq!(a, DMatrix::identity(12, 12));
    }

    #[test]
    fn row_counts_match_variants() {
        let grid = GridSpec::midpoints(6, 5).unwrap();
        let bt = basis_matrix(&BasisSpec::piecewise(3, 5), &grid).unwrap();
        let j = assemble_a(Variant::Joint, 1.0, 2, 1, &grid, &bt).unwrap();
        assert_eq!(j.rows(), 30 + 4 * 4);
        assert_eq!(j.rows(), transform_rows(Variant::Joint, 6, 5, 2, 1));
        let s = assemble_a(Variant::Separable, 1.0, 2, 1, &grid, &bt).unwrap();
        assert_eq!(s.rows(), 30 + 4 * 5 + 6 * 4);
        assert_eq!(
            j.values.rows(0, 30),
            s.values.rows(0, 30),
            "weighted identity block is shared"
        );
    }

    #[test]
    fn zero_weight_identity_basis_flags_nothing_but_sigma_from_basis() {
        let grid = GridSpec::midpoints(3, 3).unwrap();
        let bt = basis_matrix(&BasisSpec::bspline(2, 0), &grid).unwrap();
        let a = assemble_a(Variant::Joint, 0.0, 0, 0, &grid, &bt).unwrap();
        let expect = bt.values.clone().svd(false, false).singular_values.min();
        assert!((a.sigma_min - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_columns_are_flagged() {
        // pieces that no grid point falls into
        let grid = GridSpec::midpoints(2, 2).unwrap();
        let bt = basis_matrix(&BasisSpec::piecewise(4, 4), &grid).unwrap();
        let a = assemble_a(Variant::Joint, 1.0, 1, 1, &grid, &bt).unwrap();
        assert!(a.zero_columns);
        assert_eq!(a.sigma_min, 0.0);
        assert!(matches!(
            pseudoinverse(&a),
            Err(GdsError::RankDeficient { .. })
        ));
    }

    #[test]
    fn pseudoinverse_of_orthonormal_and_scaled() {
        let q = DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0]);
        let p = pinv_full_column_rank(&q).unwrap();
        assert!((p - q.transpose()).amax() < 1e-14);
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let pa = pinv_full_column_rank(&a).unwrap();
        let pca = pinv_full_column_rank(&(&a * 4.0)).unwrap();
        assert!((pca - pa / 4.0).amax() < 1e-13);
    }
}
