//! Embedding transform applied before PLDA modelling: LDA projection,
//! whitening, and unit length normalization, in that order.
//!
//! LDA is solved as a symmetric generalized eigenproblem between the
//! between-class and pooled within-class covariances. Whitening uses the
//! Cholesky factor of the sample covariance: `y = L⁻¹(x − mean)`, which
//! maps the fitting sample to identity covariance. Both fits are
//! deterministic; rank-deficient within-class covariances fall back to a
//! diagonal ridge of `1e-6 · trace/dim`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, sorted_symmetric_eigen, Spd};

/// On-disk pipeline format revision.
pub const PIPELINE_FORMAT_VERSION: &str = "1";

/// Stock LDA output dimension for high-dimensional speaker embeddings.
pub const DEFAULT_LDA_DIM: usize = 150;

/// Affine whitening transform `y = matrix·x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Whitener {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl Whitener {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "whitener expects dim {}, got {}",
                self.matrix.ncols(),
                x.len()
            )));
        }
        Ok(&self.matrix * x + &self.offset)
    }
}

/// The full front-of-clustering transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionPipeline {
    /// d×D projection; identity to skip LDA.
    pub lda: DMatrix<f64>,
    pub whitener: Whitener,
    pub length_normalize: bool,
}

impl ProjectionPipeline {
    pub fn new(lda: DMatrix<f64>, whitener: Whitener, length_normalize: bool) -> Result<Self> {
        if whitener.matrix.nrows() != whitener.matrix.ncols()
            || whitener.matrix.nrows() != whitener.offset.len()
        {
            return Err(Error::DimensionMismatch(
                "whitener matrix and offset dimensions disagree".into(),
            ));
        }
        if whitener.matrix.ncols() != lda.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "LDA output dim {} vs whitener dim {}",
                lda.nrows(),
                whitener.matrix.ncols()
            )));
        }
        Ok(Self {
            lda,
            whitener,
            length_normalize,
        })
    }

    /// Pass-through pipeline in `dim` dimensions.
    pub fn identity(dim: usize, length_normalize: bool) -> Self {
        Self {
            lda: DMatrix::identity(dim, dim),
            whitener: Whitener::identity(dim),
            length_normalize,
        }
    }

    /// Fits LDA on the labelled data, then the whitener on the projected
    /// fitting sample.
    pub fn fit(
        data: &[(String, DVector<f64>)],
        out_dim: usize,
        length_normalize: bool,
    ) -> Result<Self> {
        let lda = fit_lda(data, out_dim)?;
        let projected: Vec<DVector<f64>> = data.iter().map(|(_, x)| &lda * x).collect();
        let whitener = fit_whitener(&projected)?;
        Self::new(lda, whitener, length_normalize)
    }

    pub fn input_dim(&self) -> usize {
        self.lda.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.whitener.dim()
    }

    /// LDA, then whitening, then optional length normalization.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "pipeline expects dim {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let projected = &self.lda * x;
        let mut out = self.whitener.apply(&projected)?;
        if self.length_normalize {
            let norm = out.norm();
            if norm == 0.0 {
                return Err(Error::Numerical(
                    "cannot length-normalize a zero vector".into(),
                ));
            }
            out /= norm;
        }
        Ok(out)
    }

    pub fn apply_all(&self, xs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PipelineJson {
            format_version: PIPELINE_FORMAT_VERSION.to_string(),
            lda: matrix_rows(&self.lda),
            whitener_matrix: matrix_rows(&self.whitener.matrix),
            whitener_offset: self.whitener.offset.iter().copied().collect(),
            length_normalize: self.length_normalize,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PipelineJson = serde_json::from_str(text)?;
        if doc.format_version != PIPELINE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported pipeline format_version {:?}",
                doc.format_version
            )));
        }
        Self::new(
            matrix_from_rows(&doc.lda, "lda")?,
            Whitener {
                matrix: matrix_from_rows(&doc.whitener_matrix, "whitener_matrix")?,
                offset: DVector::from_vec(doc.whitener_offset),
            },
            doc.length_normalize,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PipelineJson {
    format_version: String,
    lda: Vec<Vec<f64>>,
    whitener_matrix: Vec<Vec<f64>>,
    whitener_offset: Vec<f64>,
    length_normalize: bool,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Format(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Fits an LDA projection: rows are the generalized eigenvector directions
/// of the between/within covariance pencil, ordered by decreasing
/// eigenvalue ratio and sign-canonicalized. `out_dim` may not exceed
/// `min(D, classes − 1)`.
pub fn fit_lda(data: &[(String, DVector<f64>)], out_dim: usize) -> Result<DMatrix<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("LDA needs data".into()));
    }
    if out_dim == 0 {
        return Err(Error::InvalidInput("LDA output dim must be positive".into()));
    }
    let dim = data[0].1.len();
    let mut classes: BTreeMap<&str, Vec<&DVector<f64>>> = BTreeMap::new();
    for (label, x) in data {
        if x.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "mixed vector dims {dim} and {}",
                x.len()
            )));
        }
        classes.entry(label).or_default().push(x);
    }
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "LDA needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let max_dim = dim.min(classes.len() - 1);
    if out_dim > max_dim {
        return Err(Error::InvalidInput(format!(
            "LDA output dim {out_dim} exceeds the achievable rank {max_dim} \
             (min of dim {dim} and classes−1 = {})",
            classes.len() - 1
        )));
    }

    let total = data.len() as f64;
    let global_mean = linalg::sample_mean(&data.iter().map(|(_, x)| x.clone()).collect::<Vec<_>>());

    let mut within = DMatrix::zeros(dim, dim);
    let mut between = DMatrix::zeros(dim, dim);
    for vectors in classes.values() {
        let mut class_mean = DVector::zeros(dim);
        for x in vectors {
            class_mean += *x;
        }
        class_mean /= vectors.len() as f64;
        for x in vectors {
            let d = *x - &class_mean;
            within.ger(1.0, &d, &d, 1.0);
        }
        let d = &class_mean - &global_mean;
        between.ger(vectors.len() as f64, &d, &d, 1.0);
    }
    within /= total;
    between /= total;

    // Ridge only when the plain factorization fails, so a clean within-class
    // covariance is used untouched.
    let (within_spd, _) = Spd::with_ridge(within, "LDA within-class covariance")?;

    // Reduce S_b w = λ S_w w to an ordinary symmetric problem:
    // with S_w = LLᵀ and u = Lᵀw, solve (L⁻¹ S_b L⁻ᵀ) u = λ u.
    let lower = within_spd.lower();
    let a = lower
        .solve_lower_triangular(&between)
        .expect("Cholesky factor has positive diagonal");
    let reduced = lower
        .solve_lower_triangular(&a.transpose())
        .expect("Cholesky factor has positive diagonal");
    let (_, vectors) = sorted_symmetric_eigen(&reduced);

    let mut projection = DMatrix::zeros(out_dim, dim);
    for k in 0..out_dim {
        let u = vectors.column(k).clone_owned();
        let w = lower
            .tr_solve_lower_triangular(&u)
            .expect("Cholesky factor has positive diagonal");
        projection.row_mut(k).copy_from(&w.transpose());
    }
    Ok(canonicalize_row_signs(projection))
}

fn canonicalize_row_signs(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for r in 0..m.nrows() {
        let row = m.row(r);
        let pivot = row
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).expect("finite entries"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if m[(r, pivot)] < 0.0 {
            m.row_mut(r).neg_mut();
        }
    }
    m
}

/// Fits a whitening transform on a sample: `y = L⁻¹(x − mean)` for the
/// Cholesky factor `L` of the sample covariance. The transformed fitting
/// sample has zero mean and identity covariance.
pub fn fit_whitener(data: &[DVector<f64>]) -> Result<Whitener> {
    if data.len() < 2 {
        return Err(Error::InvalidInput("whitening needs at least 2 vectors".into()));
    }
    let (mean, cov) = linalg::sample_covariance(data);
    let (spd, _) = Spd::with_ridge(cov, "whitening covariance").map_err(|e| match e {
        Error::NotPositiveDefinite(msg) => Error::NotPositiveDefinite(format!(
            "{msg}; sample covariance is singular (all vectors identical?)"
        )),
        other => other,
    })?;
    let dim = mean.len();
    let matrix = spd
        .lower()
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .expect("Cholesky factor has positive diagonal");
    let offset = -(&matrix * &mean);
    Ok(Whitener { matrix, offset })
}
