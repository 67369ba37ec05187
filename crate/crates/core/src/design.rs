//! Image predictors, quadrature and the centered design.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::bases::{BasisMatrix, GridSpec};
use crate::error::{GdsError, Result};

/// Columns whose centered n-norm falls below this carry no information and
/// are left out of the correlation constraint.
pub const ZERO_NORM_TOL: f64 = 1e-12;

/// One image predictor sampled on the grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub m1: usize,
    pub m2: usize,
    pub values: Vec<f64>,
    /// `true` marks cells that belong to the domain.
    pub mask: Option<Vec<bool>>,
}

impl ImageSample {
    pub fn new(id: impl Into<String>, m1: usize, m2: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m1 * m2 {
            return Err(GdsError::dim(format!(
                "image has {} values, grid has {}",
                values.len(),
                m1 * m2
            )));
        }
        Ok(ImageSample {
            id: id.into(),
            m1,
            m2,
            values,
            mask: None,
        })
    }

    /// Attach a mask; excluded cells are set to zero.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(GdsError::dim("mask does not match image shape"));
        }
        for (v, &keep) in self.values.iter_mut().zip(&mask) {
            if !keep {
                *v = 0.0;
            }
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(id: impl Into<String>, grid: &GridSpec, f: F) -> Self {
        let values = grid.points().into_iter().map(|(t, s)| f(t, s)).collect();
        ImageSample {
            id: id.into(),
            m1: grid.m1,
            m2: grid.m2,
            values,
            mask: None,
        }
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.m1 != grid.m1 || self.m2 != grid.m2 {
            return Err(GdsError::dim(format!(
                "image '{}' is {}x{}, grid is {}x{}",
                self.id, self.m1, self.m2, grid.m1, grid.m2
            )));
        }
        Ok(())
    }
}

/// Quadrature weights on the grid.
///
/// Every cell of an evenly spaced grid covers `1 / (m1 m2)` of the unit
/// square, so without a mask all weights are equal; masked cells get zero.
pub fn quadrature_weights(grid: &GridSpec, mask: Option<&[bool]>) -> Result<Vec<f64>> {
    grid.validate()?;
    let area = 1.0 / grid.len() as f64;
    match mask {
        None => Ok(vec![area; grid.len()]),
        Some(mask) => {
            if mask.len() != grid.len() {
                return Err(GdsError::dim("mask does not match grid"));
            }
            if !mask.iter().any(|&m| m) {
                return Err(GdsError::arg("every grid cell is masked out"));
            }
            Ok(mask.iter().map(|&m| if m { area } else { 0.0 }).collect())
        }
    }
}

/// `X_ij = sum_g w_g x_i(g) b_j(g)`.
pub fn design_matrix(
    images: &[ImageSample],
    bt: &BasisMatrix,
    weights: &[f64],
) -> Result<DMatrix<f64>> {
    let g = bt.grid.len();
    if weights.len() != g {
        return Err(GdsError::dim("weights do not match grid"));
    }
    let mut weighted = DMatrix::zeros(images.len(), g);
    for (i, img) in images.iter().enumerate() {
        img.check_grid(&bt.grid)?;
        for (k, (v, w)) in img.values.iter().zip(weights).enumerate() {
            weighted[(i, k)] = v * w;
        }
    }
    Ok(weighted * &bt.values)
}

/// Raw and centered design together with the quantities needed to undo the
/// centering.
#[derive(Debug, Clone)]
pub struct DesignSet {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x_means: RowDVector<f64>,
    pub y_mean: f64,
    pub xc: DMatrix<f64>,
    pub yc: DVector<f64>,
    /// Column n-norms of `xc`.
    pub d: DVector<f64>,
    /// Columns with `d_j < ZERO_NORM_TOL`.
    pub dropped: Vec<usize>,
    pub quad_weights: Vec<f64>,
}

impl DesignSet {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_max(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Indices of columns that enter the correlation constraint.
    pub fn retained(&self) -> Vec<usize> {
        (0..self.p()).filter(|j| !self.dropped.contains(j)).collect()
    }

    /// `(1/n) D^{-1} Xc^T (yc - Xc eta)` over retained columns, as
    /// `(column, value)` pairs.
    pub fn scaled_correlation(&self, eta: &DVector<f64>) -> Vec<(usize, f64)> {
        let resid = &self.yc - &self.xc * eta;
        let corr = self.xc.tr_mul(&resid);
        let n = self.n() as f64;
        self.retained()
            .into_iter()
            .map(|j| (j, corr[j] / (n * self.d[j])))
            .collect()
    }

    /// `max_j |(1/n) D^{-1} Xc^T (yc - Xc eta)|_j`.
    pub fn max_scaled_correlation(&self, eta: &DVector<f64>) -> f64 {
        self.scaled_correlation(eta)
            .into_iter()
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Smallest lambda at which `eta = 0` satisfies the constraint.
    pub fn lambda_max(&self) -> f64 {
        self.max_scaled_correlation(&DVector::zeros(self.p()))
    }
}

pub fn center(x: DMatrix<f64>, y: DVector<f64>) -> Result<DesignSet> {
    let n = x.nrows();
    if n < 2 {
        return Err(GdsError::arg("centering needs at least two samples"));
    }
    if y.len() != n {
        return Err(GdsError::dim(format!(
            "{} responses for {} design rows",
            y.len(),
            n
        )));
    }
    let x_means = x.row_mean();
    let y_mean = y.mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &x_means;
    }
    let yc = y.add_scalar(-y_mean);
    let d = DVector::from_iterator(
        xc.ncols(),
        xc.column_iter().map(|c| (c.norm_squared() / n as f64).sqrt()),
    );
    let dropped = d
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < ZERO_NORM_TOL)
        .map(|(j, _)| j)
        .collect();
    Ok(DesignSet {
        x,
        y,
        x_means,
        y_mean,
        xc,
        yc,
        d,
        dropped,
        quad_weights: Vec::new(),
    })
}

/// Design matrix, centering and weights in one step.
pub fn build_design(
    images: &[ImageSample],
    y: &[f64],
    bt: &BasisMatrix,
    weights: &[f64],
) -> Result<DesignSet> {
    let x = design_matrix(images, bt, weights)?;
    let mut ds = center(x, DVector::from_column_slice(y))?;
    ds.quad_weights = weights.to_vec();
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{basis_matrix, BasisSpec};

    #[test]
    fn unmasked_weights_are_equal() {
        let grid = GridSpec::midpoints(20, 20).unwrap();
        let w = quadrature_weights(&grid, None).unwrap();
        assert!(w.iter().all(|&v| (v - 0.0025).abs() < 1e-15));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_weights_follow_area() {
        let grid = GridSpec::midpoints(2, 2).unwrap();
        let w = quadrature_weights(&grid, Some(&[true, false, true, true])).unwrap();
        assert_eq!(w, vec![0.25, 0.0, 0.25, 0.25]);
        assert!(quadrature_weights(&grid, Some(&[false; 4])).is_err());
    }

    #[test]
    fn constant_image_integrates_to_area() {
        let grid = GridSpec::midpoints(7, 9).unwrap();
        let w = quadrature_weights(&grid, None).unwrap();
        let img = ImageSample::from_fn("one", &grid, |_, _| 1.0);
        let total: f64 = img.values.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_and_indicator_images_against_pieces() {
        let grid = GridSpec::midpoints(20, 20).unwrap();
        let spec = BasisSpec::piecewise(2, 2);
        let bt = basis_matrix(&spec, &grid).unwrap();
        let w = quadrature_weights(&grid, None).unwrap();
        let ones = ImageSample::from_fn("one", &grid, |_, _| 1.0);
        let x = design_matrix(&[ones], &bt, &w).unwrap();
        assert!(x.iter().all(|&v| (v - 0.25).abs() < 1e-12));

        let ind = ImageSample::from_fn("b3", &grid, |t, s| {
            crate::bases::eval_basis(&spec, t, s).unwrap()[2]
        });
        let x = design_matrix(&[ind], &bt, &w).unwrap();
        for j in 0..4 {
            let e = if j == 2 { 0.25 } else { 0.0 };
            assert!((x[(0, j)] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let grid = GridSpec::midpoints(4, 4).unwrap();
        let bt = basis_matrix(&BasisSpec::piecewise(2, 2), &grid).unwrap();
        let w = quadrature_weights(&grid, None).unwrap();
        let img = ImageSample::new("x", 3, 4, vec![0.0; 12]).unwrap();
        assert!(matches!(
            design_matrix(&[img], &bt, &w),
            Err(GdsError::Dimension(_))
        ));
    }

    #[test]
    fn identical_rows_center_to_zero_and_drop() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![4.0, 4.0, 4.0]);
        let ds = center(x, y).unwrap();
        assert!(ds.xc.iter().all(|&v| v == 0.0));
        assert!(ds.yc.iter().all(|&v| v == 0.0));
        assert_eq!(ds.dropped, vec![0, 1]);
        assert!(ds.retained().is_empty());
    }

    #[test]
    fn too_few_samples() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(center(x, DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn masked_cells_are_zeroed() {
        let img = ImageSample::new("m", 1, 3, vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_mask(vec![true, false, true])
            .unwrap();
        assert_eq!(img.values, vec![1.0, 0.0, 3.0]);
    }
}
