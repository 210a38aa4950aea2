//! EM training for the two-covariance model.
//!
//! The E-step computes each speaker's Gaussian posterior in closed form;
//! the M-step re-estimates μ and the two covariances from posterior
//! moments. Initialization is method-of-moments: between-class scatter of
//! speaker means, pooled within-class scatter, global mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{log_marginal_group, TwoCovPlda};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Spd};

/// Result of an EM run.
#[derive(Clone, Debug)]
pub struct EmOutcome {
    pub model: TwoCovPlda,
    /// Observed-data log-likelihood at initialization and after each
    /// iteration (`iterations + 1` entries).
    pub log_likelihood: Vec<f64>,
    /// True when a degenerate scatter matrix needed the diagonal ridge.
    pub ridged: bool,
}

/// Trains a two-covariance model with method-of-moments initialization.
pub fn train_em(data: &[(String, DVector<f64>)], iterations: usize) -> Result<EmOutcome> {
    let groups = group_by_speaker(data)?;
    let (init, init_ridged) = moment_init(&groups)?;
    let mut outcome = train_em_from(&init, data, iterations)?;
    outcome.ridged |= init_ridged;
    Ok(outcome)
}

/// Runs EM starting from the given parameters.
pub fn train_em_from(
    init: &TwoCovPlda,
    data: &[(String, DVector<f64>)],
    iterations: usize,
) -> Result<EmOutcome> {
    if iterations == 0 {
        return Err(Error::InvalidInput("iterations must be at least 1".into()));
    }
    let groups = group_by_speaker(data)?;
    let dim = groups[0].1[0].len();
    if init.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "initial model dim {} vs data dim {dim}",
            init.dim()
        )));
    }
    let num_speakers = groups.len() as f64;
    let total_vectors: usize = groups.iter().map(|(_, v)| v.len()).sum();

    let mut model = init.clone();
    let mut ridged = false;
    let mut log_likelihood = vec![observed_loglik(&model, &groups)];

    for _ in 0..iterations {
        let mut mean_sum = DVector::zeros(dim);
        let mut between_acc = DMatrix::zeros(dim, dim);
        let mut within_acc = DMatrix::zeros(dim, dim);

        for (_, vectors) in &groups {
            let n = vectors.len() as f64;
            let posterior_precision = Spd::new(
                model.between_precision() + model.within_precision() * n,
                "speaker posterior precision",
            )?;
            let mut phi_sum = DVector::zeros(dim);
            for x in vectors {
                phi_sum += *x;
            }
            let rhs = model.between_precision() * model.mu() + model.within_precision() * phi_sum;
            let posterior_mean = posterior_precision.solve_vector(&rhs);
            let posterior_cov = posterior_precision.inverse();

            mean_sum += &posterior_mean;
            between_acc += &posterior_cov;
            between_acc.ger(1.0, &posterior_mean, &posterior_mean, 1.0);
            within_acc += posterior_cov * n;
            for x in vectors {
                let d = *x - &posterior_mean;
                within_acc.ger(1.0, &d, &d, 1.0);
            }
        }

        let mu = mean_sum / num_speakers;
        let mut between_cov = between_acc / num_speakers;
        between_cov.ger(-1.0, &mu, &mu, 1.0);
        let within_cov = within_acc / total_vectors as f64;

        let (between_spd, r1) = Spd::with_ridge(symmetrize(&between_cov), "between covariance")?;
        let (within_spd, r2) = Spd::with_ridge(symmetrize(&within_cov), "within covariance")?;
        ridged |= r1 || r2;
        model = TwoCovPlda::new(mu, between_spd.inverse(), within_spd.inverse())?;
        log_likelihood.push(observed_loglik(&model, &groups));
    }

    Ok(EmOutcome {
        model,
        log_likelihood,
        ridged,
    })
}

type SpeakerGroups<'a> = Vec<(&'a str, Vec<&'a DVector<f64>>)>;

fn group_by_speaker(data: &[(String, DVector<f64>)]) -> Result<SpeakerGroups<'_>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let dim = data[0].1.len();
    let mut groups: BTreeMap<&str, Vec<&DVector<f64>>> = BTreeMap::new();
    for (speaker, vector) in data {
        if vector.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "training vectors of mixed dims {dim} and {}",
                vector.len()
            )));
        }
        groups.entry(speaker).or_default().push(vector);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "EM training needs at least 2 speakers, got {}",
            groups.len()
        )));
    }
    for (speaker, vectors) in &groups {
        if vectors.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "speaker {speaker:?} has {} vector(s); every speaker needs at least 2",
                vectors.len()
            )));
        }
    }
    Ok(groups.into_iter().collect())
}

/// Method-of-moments start: Λ⁻¹ from the scatter of speaker means, 𝓛⁻¹ from
/// the pooled within-class scatter, μ from the global mean.
fn moment_init(groups: &[(&str, Vec<&DVector<f64>>)]) -> Result<(TwoCovPlda, bool)> {
    let dim = groups[0].1[0].len();
    let total: usize = groups.iter().map(|(_, v)| v.len()).sum();

    let mut global_mean = DVector::zeros(dim);
    let mut speaker_means = Vec::with_capacity(groups.len());
    for (_, vectors) in groups {
        let mut m = DVector::zeros(dim);
        for x in vectors {
            m += *x;
            global_mean += *x;
        }
        speaker_means.push(m / vectors.len() as f64);
    }
    global_mean /= total as f64;

    let mut means_center = DVector::zeros(dim);
    for m in &speaker_means {
        means_center += m;
    }
    means_center /= speaker_means.len() as f64;

    let mut between = DMatrix::zeros(dim, dim);
    for m in &speaker_means {
        let d = m - &means_center;
        between.ger(1.0, &d, &d, 1.0);
    }
    between /= speaker_means.len() as f64;

    let mut within = DMatrix::zeros(dim, dim);
    for ((_, vectors), m) in groups.iter().zip(&speaker_means) {
        for x in vectors {
            let d = *x - m;
            within.ger(1.0, &d, &d, 1.0);
        }
    }
    within /= total as f64;

    let (between_spd, r1) = Spd::with_ridge(between, "between-class scatter")?;
    let (within_spd, r2) = Spd::with_ridge(within, "within-class scatter")?;
    let model = TwoCovPlda::new(global_mean, between_spd.inverse(), within_spd.inverse())?;
    Ok((model, r1 || r2))
}

fn observed_loglik(model: &TwoCovPlda, groups: &[(&str, Vec<&DVector<f64>>)]) -> f64 {
    groups
        .iter()
        .map(|(_, vectors)| log_marginal_group(model, vectors))
        .sum()
}

#[derive(Serialize, Deserialize)]
struct TrainingRecord {
    speaker: String,
    vector: Vec<f64>,
}

/// Reads training data as JSON Lines with fields `speaker` and `vector`.
pub fn read_training_jsonl(path: &Path) -> Result<Vec<(String, DVector<f64>)>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut data = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrainingRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        data.push((record.speaker, DVector::from_vec(record.vector)));
    }
    if data.is_empty() {
        return Err(Error::Format(format!("{}: no training records", path.display())));
    }
    Ok(data)
}

pub fn write_training_jsonl(path: &Path, data: &[(String, DVector<f64>)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (speaker, vector) in data {
        let record = TrainingRecord {
            speaker: speaker.clone(),
            vector: vector.iter().copied().collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&record)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_relative_error;
    use crate::plda::{sample_conversation, SpeakerPrior};
    use crate::seed::subseed;

    fn reference_model() -> TwoCovPlda {
        let dim = 5;
        let mut between = DMatrix::zeros(dim, dim);
        for (i, v) in [2.0, 1.6, 1.2, 0.9, 0.6].iter().enumerate() {
            between[(i, i)] = 1.0 / v; // precision = 1/variance
        }
        // within covariance 0.5·I + 0.1·J is SPD with a non-trivial structure
        let within_cov = DMatrix::from_element(dim, dim, 0.1) + DMatrix::identity(dim, dim) * 0.5;
        let within_prec = Spd::new(within_cov, "test").unwrap().inverse();
        TwoCovPlda::new(
            DVector::from_row_slice(&[1.0, -1.0, 0.5, 0.0, 2.0]),
            between,
            within_prec,
        )
        .unwrap()
    }

    fn sample_training_set(
        model: &TwoCovPlda,
        num_speakers: usize,
        per_speaker: usize,
        seed: u64,
    ) -> Vec<(String, DVector<f64>)> {
        let prior = SpeakerPrior::uniform(1);
        let mut data = Vec::new();
        for s in 0..num_speakers {
            let (embeddings, _) =
                sample_conversation(model, &prior, per_speaker, subseed(seed, s as u64)).unwrap();
            for e in embeddings {
                data.push((format!("spk{s:05}"), e));
            }
        }
        data
    }

    #[test]
    fn recovers_generating_covariances() {
        let truth = reference_model();
        let data = sample_training_set(&truth, 1000, 10, 31);
        let outcome = train_em(&data, 15).unwrap();

        let between_true = Spd::new(truth.between_precision().clone(), "t").unwrap().inverse();
        let within_true = Spd::new(truth.within_precision().clone(), "t").unwrap().inverse();
        let between_est = Spd::new(outcome.model.between_precision().clone(), "e")
            .unwrap()
            .inverse();
        let within_est = Spd::new(outcome.model.within_precision().clone(), "e")
            .unwrap()
            .inverse();

        let be = frobenius_relative_error(&between_est, &between_true);
        let we = frobenius_relative_error(&within_est, &within_true);
        assert!(be < 0.10, "between covariance off by {be:.3}");
        assert!(we < 0.10, "within covariance off by {we:.3}");

        for w in outcome.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "EM log-likelihood decreased: {w:?}");
        }
    }

    #[test]
    fn starting_at_the_generating_parameters_stays_monotone() {
        let truth = reference_model();
        let data = sample_training_set(&truth, 120, 8, 77);
        let outcome = train_em_from(&truth, &data, 5).unwrap();
        for w in outcome.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "log-likelihood decreased: {w:?}");
        }
    }

    #[test]
    fn output_dim_matches_input_dim() {
        let truth = reference_model();
        let data = sample_training_set(&truth, 10, 4, 3);
        let outcome = train_em(&data, 2).unwrap();
        assert_eq!(outcome.model.dim(), 5);
    }

    #[test]
    fn rejects_fewer_than_two_speakers() {
        let truth = reference_model();
        let data = sample_training_set(&truth, 1, 6, 3);
        assert!(matches!(train_em(&data, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_singleton_speakers() {
        let truth = reference_model();
        let mut data = sample_training_set(&truth, 3, 3, 3);
        data.push(("loner".to_string(), DVector::zeros(5)));
        let err = train_em(&data, 2).unwrap_err();
        assert!(err.to_string().contains("loner"));
    }

    #[test]
    fn training_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        let data = vec![
            ("a".to_string(), DVector::from_row_slice(&[1.0, 2.0])),
            ("b".to_string(), DVector::from_row_slice(&[-0.5, 0.25])),
        ];
        write_training_jsonl(&path, &data).unwrap();
        let back = read_training_jsonl(&path).unwrap();
        assert_eq!(data, back);
    }
}
