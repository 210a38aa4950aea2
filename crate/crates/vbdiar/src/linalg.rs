//! Dense linear-algebra helpers shared by the model and inference code.
//!
//! Everything Gaussian in this crate goes through Cholesky factorizations:
//! log-densities, quadratic forms and inverses are computed by solving
//! against the factor, never by forming an explicit inverse inside a
//! density evaluation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// ln(2π), used by every Gaussian log-density.
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Relative tolerance for symmetry checks on covariance/precision matrices.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// A symmetric positive-definite matrix with its cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct Spd {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    log_det: f64,
}

impl Spd {
    /// Validates symmetry, symmetrizes exactly, and factors the matrix.
    pub fn new(matrix: DMatrix<f64>, context: &str) -> Result<Self> {
        let sym = require_symmetric(&matrix, context)?;
        Self::from_symmetric(sym, context)
    }

    /// Like [`Spd::new`], but retries with a diagonal ridge of
    /// `1e-6 * trace/dim` when the plain factorization fails. The boolean
    /// reports whether the ridge was needed.
    pub fn with_ridge(matrix: DMatrix<f64>, context: &str) -> Result<(Self, bool)> {
        let sym = require_symmetric(&matrix, context)?;
        match Self::from_symmetric(sym.clone(), context) {
            Ok(spd) => Ok((spd, false)),
            Err(_) => {
                let ridge = ridge_magnitude(&sym);
                if ridge <= 0.0 {
                    return Err(Error::NotPositiveDefinite(format!(
                        "{context}: singular matrix with non-positive trace, ridge recovery impossible"
                    )));
                }
                let mut ridged = sym;
                for i in 0..ridged.nrows() {
                    ridged[(i, i)] += ridge;
                }
                let spd = Self::from_symmetric(ridged, context)?;
                Ok((spd, true))
            }
        }
    }

    fn from_symmetric(matrix: DMatrix<f64>, context: &str) -> Result<Self> {
        let chol = Cholesky::new(matrix.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite(format!("{context}: Cholesky factorization failed"))
        })?;
        let lower = chol.l();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "{context}: non-finite log-determinant"
            )));
        }
        Ok(Self {
            matrix,
            chol,
            lower,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The (symmetrized, possibly ridged) matrix that was factored.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular Cholesky factor L with `L Lᵀ = matrix`.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `matrix · x = b`.
    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Inverse computed by solving against the factor.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Quadratic form `dᵀ · matrix · d`, evaluated as ‖Lᵀd‖².
    pub fn quadform(&self, d: &DVector<f64>) -> f64 {
        self.lower.tr_mul(d).norm_squared()
    }

    /// Solves `Lᵀ x = b` against the Cholesky factor. With `matrix` used as
    /// a precision, this maps a standard-normal draw `b` to a sample with
    /// covariance `matrix⁻¹`.
    pub fn solve_factor_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .tr_solve_lower_triangular(b)
            .expect("Cholesky factor has positive diagonal")
    }
}

/// Ridge used to recover from rank-deficient scatter matrices.
pub fn ridge_magnitude(matrix: &DMatrix<f64>) -> f64 {
    1e-6 * matrix.trace() / matrix.nrows() as f64
}

/// Checks symmetry within [`SYMMETRY_TOLERANCE`] (relative to the largest
/// entry) and returns the exactly symmetrized matrix.
pub fn require_symmetric(matrix: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{context}: expected a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let scale = matrix.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let mut max_asym = 0.0_f64;
    for i in 0..matrix.nrows() {
        for j in (i + 1)..matrix.ncols() {
            max_asym = max_asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::InvalidInput(format!(
            "{context}: matrix is not symmetric (max asymmetry {max_asym:.3e})"
        )));
    }
    Ok(symmetrize(matrix))
}

/// (A + Aᵀ)/2.
pub fn symmetrize(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |i, j| {
        0.5 * (matrix[(i, j)] + matrix[(j, i)])
    })
}

/// log N(x; mean, Σ) where `cov` factors the covariance Σ.
pub fn gaussian_logpdf_cov(x: &DVector<f64>, mean: &DVector<f64>, cov: &Spd) -> f64 {
    let d = x - mean;
    let w = cov
        .lower()
        .solve_lower_triangular(&d)
        .expect("Cholesky factor has positive diagonal");
    -0.5 * (x.len() as f64) * LN_2PI - 0.5 * cov.log_det() - 0.5 * w.norm_squared()
}

/// log N(x; mean, P⁻¹) where `prec` factors the precision P.
pub fn gaussian_logpdf_prec(x: &DVector<f64>, mean: &DVector<f64>, prec: &Spd) -> f64 {
    let d = x - mean;
    -0.5 * (x.len() as f64) * LN_2PI + 0.5 * prec.log_det() - 0.5 * prec.quadform(&d)
}

/// Numerically stable log(Σ exp(xᵢ)).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order
/// and eigenvector signs canonicalized (largest-magnitude entry positive).
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub fn sorted_symmetric_eigen(matrix: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(matrix));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = col
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.abs()
                    .partial_cmp(&b.abs())
                    .expect("finite eigenvector entries")
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Sample mean of a set of vectors.
pub fn sample_mean(data: &[DVector<f64>]) -> DVector<f64> {
    let dim = data[0].len();
    let mut mean = DVector::zeros(dim);
    for x in data {
        mean += x;
    }
    mean / data.len() as f64
}

/// Population-normalized sample covariance (divides by n).
pub fn sample_covariance(data: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let mean = sample_mean(data);
    let dim = mean.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for x in data {
        let d = x - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    (mean, cov / data.len() as f64)
}

/// ‖a − b‖_F / ‖b‖_F.
pub fn frobenius_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
