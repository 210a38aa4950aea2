//! Two-covariance PLDA model of segment embeddings.
//!
//! An observed segment embedding is modelled as the sum of a speaker
//! vector `y ~ N(μ, Λ⁻¹)` shared by all segments of that speaker and a
//! per-segment residual `ε ~ N(0, 𝓛⁻¹)`. The module holds the parameter
//! container, the generative sampler, pairwise same-speaker LLR scoring,
//! an EM trainer, and an exact marginal likelihood for a fixed
//! segment-to-speaker assignment. The marginal likelihood doubles as the
//! enumeration oracle the inference tests are checked against.

mod em;

pub use em::{read_training_jsonl, train_em, write_training_jsonl, EmOutcome};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, Spd};
use crate::seed::rng_from_seed;

/// On-disk model format revision.
pub const MODEL_FORMAT_VERSION: &str = "1";

/// Parameters of the two-covariance PLDA model.
///
/// Stored as precisions: `between_precision` is Λ (speaker vectors are
/// `N(μ, Λ⁻¹)`), `within_precision` is 𝓛 (residuals are `N(0, 𝓛⁻¹)`).
/// Immutable after construction and safe to share across threads.
#[derive(Clone, Debug)]
pub struct TwoCovPlda {
    mu: DVector<f64>,
    between: Spd,
    within: Spd,
}

impl TwoCovPlda {
    pub fn new(
        mu: DVector<f64>,
        between_precision: DMatrix<f64>,
        within_precision: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = mu.len();
        if dim == 0 {
            return Err(Error::InvalidInput("model dimension must be positive".into()));
        }
        if between_precision.nrows() != dim || within_precision.nrows() != dim {
            return Err(Error::DimensionMismatch(format!(
                "model dim {dim} vs between {}x{} / within {}x{}",
                between_precision.nrows(),
                between_precision.ncols(),
                within_precision.nrows(),
                within_precision.ncols()
            )));
        }
        let between = Spd::new(between_precision, "between precision")?;
        let within = Spd::new(within_precision, "within precision")?;
        Ok(Self { mu, between, within })
    }

    /// Isotropic model with μ = 0, Λ⁻¹ = `between_var`·I, 𝓛⁻¹ = `within_var`·I.
    pub fn isotropic(dim: usize, between_var: f64, within_var: f64) -> Result<Self> {
        if between_var <= 0.0 || within_var <= 0.0 {
            return Err(Error::InvalidInput("variances must be positive".into()));
        }
        Self::new(
            DVector::zeros(dim),
            DMatrix::identity(dim, dim) / between_var,
            DMatrix::identity(dim, dim) / within_var,
        )
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// Λ.
    pub fn between_precision(&self) -> &DMatrix<f64> {
        self.between.matrix()
    }

    /// 𝓛.
    pub fn within_precision(&self) -> &DMatrix<f64> {
        self.within.matrix()
    }

    pub(crate) fn between(&self) -> &Spd {
        &self.between
    }

    pub(crate) fn within(&self) -> &Spd {
        &self.within
    }

    /// Λ⁻¹ + 𝓛⁻¹, the covariance of a single segment embedding.
    pub fn marginal_covariance(&self) -> DMatrix<f64> {
        self.between.inverse() + self.within.inverse()
    }

    /// Rescales the between-speaker covariance Λ⁻¹ by `factor`, leaving the
    /// residual covariance untouched. Used by the corpus generator's
    /// separation knob.
    pub fn with_between_covariance_scaled(&self, factor: f64) -> Result<Self> {
        if factor <= 0.0 {
            return Err(Error::InvalidInput("covariance scale must be positive".into()));
        }
        Self::new(
            self.mu.clone(),
            self.between.matrix() / factor,
            self.within.matrix().clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelJson {
            format_version: MODEL_FORMAT_VERSION.to_string(),
            dim: self.dim(),
            mu: self.mu.iter().copied().collect(),
            between_precision: matrix_rows(self.between.matrix()),
            within_precision: matrix_rows(self.within.matrix()),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelJson = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format_version {:?}",
                doc.format_version
            )));
        }
        let mu = DVector::from_vec(doc.mu);
        if mu.len() != doc.dim {
            return Err(Error::Format(format!(
                "model dim field {} does not match mu length {}",
                doc.dim,
                mu.len()
            )));
        }
        Self::new(
            mu,
            matrix_from_rows(&doc.between_precision, "between_precision")?,
            matrix_from_rows(&doc.within_precision, "within_precision")?,
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
struct ModelJson {
    format_version: String,
    dim: usize,
    mu: Vec<f64>,
    between_precision: Vec<Vec<f64>>,
    within_precision: Vec<Vec<f64>>,
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

/// Prior over which speaker talks in a segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerPrior {
    pi: Vec<f64>,
}

impl SpeakerPrior {
    /// Uniform prior π_s = 1/S.
    pub fn uniform(num_speakers: usize) -> Self {
        assert!(num_speakers >= 1, "need at least one speaker");
        Self {
            pi: vec![1.0 / num_speakers as f64; num_speakers],
        }
    }

    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::InvalidInput("prior needs at least one speaker".into()));
        }
        if pi.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidInput("prior probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "prior probabilities must sum to 1, got {sum}"
            )));
        }
        Ok(Self { pi })
    }

    pub fn num_speakers(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// log π_s, with zero-probability speakers mapped to −∞.
    pub fn log_pi(&self) -> Vec<f64> {
        self.pi
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect()
    }
}

/// Draws one conversation from the generative story: one speaker vector per
/// speaker, then per segment a speaker label from the prior and a fresh
/// residual. Deterministic given the seed.
pub fn sample_conversation(
    model: &TwoCovPlda,
    prior: &SpeakerPrior,
    num_segments: usize,
    seed: u64,
) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
    sample_conversation_scaled(model, prior, &vec![1.0; num_segments], seed)
}

/// [`sample_conversation`] with a per-segment residual scale: segment `m`
/// observes `y + scale_m · ε`. All-ones scales reproduce the plain sampler
/// draw for draw.
pub(crate) fn sample_conversation_scaled(
    model: &TwoCovPlda,
    prior: &SpeakerPrior,
    residual_scales: &[f64],
    seed: u64,
) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
    let num_segments = residual_scales.len();
    if num_segments == 0 {
        return Err(Error::InvalidInput("num_segments must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let speakers: Vec<DVector<f64>> = (0..prior.num_speakers())
        .map(|_| sample_speaker_vector(model, &mut rng))
        .collect();

    let mut embeddings = Vec::with_capacity(num_segments);
    let mut labels = Vec::with_capacity(num_segments);
    for &scale in residual_scales {
        let label = sample_categorical(&mut rng, prior.pi());
        let residual = sample_residual(model, &mut rng);
        embeddings.push(&speakers[label] + residual * scale);
        labels.push(label);
    }
    Ok((embeddings, labels))
}

/// One draw of a speaker vector `y ~ N(μ, Λ⁻¹)`.
pub(crate) fn sample_speaker_vector<R: Rng>(model: &TwoCovPlda, rng: &mut R) -> DVector<f64> {
    model.mu() + sample_from_precision(rng, model.between())
}

/// One draw of a residual `ε ~ N(0, 𝓛⁻¹)`.
pub(crate) fn sample_residual<R: Rng>(model: &TwoCovPlda, rng: &mut R) -> DVector<f64> {
    sample_from_precision(rng, model.within())
}

/// Zero-mean Gaussian draw with covariance `precision⁻¹`, realized as
/// `Lᵀ x = z` for standard-normal `z` and Cholesky factor `L` of the
/// precision.
fn sample_from_precision<R: Rng>(rng: &mut R, precision: &Spd) -> DVector<f64> {
    let z = DVector::from_fn(precision.dim(), |_, _| rng.sample(StandardNormal));
    precision.solve_factor_transpose(&z)
}

fn sample_categorical<R: Rng>(rng: &mut R, pi: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (idx, &p) in pi.iter().enumerate() {
        cum += p;
        if u < cum {
            return idx;
        }
    }
    pi.len() - 1
}

/// Log-likelihood ratio that `x1` and `x2` share a speaker:
/// `log p(x1, x2 | same) − log p(x1) − log p(x2)`.
pub fn llr_same_speaker(model: &TwoCovPlda, x1: &DVector<f64>, x2: &DVector<f64>) -> Result<f64> {
    if x1.len() != model.dim() || x2.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "llr inputs of dim {}/{} vs model dim {}",
            x1.len(),
            x2.len(),
            model.dim()
        )));
    }
    let joint = log_marginal_group(model, &[x1, x2]);
    let single1 = log_marginal_group(model, &[x1]);
    let single2 = log_marginal_group(model, &[x2]);
    let llr = joint - single1 - single2;
    if !llr.is_finite() {
        return Err(Error::Numerical("non-finite PLDA log-likelihood ratio".into()));
    }
    Ok(llr)
}

/// Exact `log ∫ p(Φ, Y | I) dY` for a fixed assignment of segments to
/// speakers. Speakers with no segments integrate to one and drop out.
pub fn marginal_loglik_assignment(
    model: &TwoCovPlda,
    embeddings: &[DVector<f64>],
    assignment: &[usize],
) -> Result<f64> {
    if embeddings.len() != assignment.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} embeddings vs {} assignment entries",
            embeddings.len(),
            assignment.len()
        )));
    }
    for x in embeddings {
        if x.len() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "embedding dim {} vs model dim {}",
                x.len(),
                model.dim()
            )));
        }
    }
    let num_speakers = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for speaker in 0..num_speakers {
        let group: Vec<&DVector<f64>> = embeddings
            .iter()
            .zip(assignment)
            .filter(|(_, &s)| s == speaker)
            .map(|(x, _)| x)
            .collect();
        if !group.is_empty() {
            total += log_marginal_group(model, &group);
        }
    }
    Ok(total)
}

/// Marginal log-likelihood of one speaker's segments with the speaker
/// vector integrated out:
/// `Σᵢ log N(φᵢ; m, 𝓛⁻¹) + log N(m; μ, Λ⁻¹) + (D/2)·log 2π − ½·log det P`
/// where `P = Λ + n𝓛` and `m` is the posterior speaker mean.
pub(crate) fn log_marginal_group(model: &TwoCovPlda, group: &[&DVector<f64>]) -> f64 {
    let n = group.len() as f64;
    let dim = model.dim();
    let posterior_precision = Spd::new(
        model.between_precision() + model.within_precision() * n,
        "speaker posterior precision",
    )
    .expect("sum of SPD matrices is SPD");

    let mut phi_sum = DVector::zeros(dim);
    for x in group {
        phi_sum += *x;
    }
    let rhs = model.between_precision() * model.mu() + model.within_precision() * phi_sum;
    let posterior_mean = posterior_precision.solve_vector(&rhs);

    let mut log_lik = 0.0;
    for x in group {
        log_lik += linalg::gaussian_logpdf_prec(x, &posterior_mean, model.within());
    }
    log_lik += linalg::gaussian_logpdf_prec(&posterior_mean, model.mu(), model.between());
    log_lik + 0.5 * dim as f64 * linalg::LN_2PI - 0.5 * posterior_precision.log_det()
}
