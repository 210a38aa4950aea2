//! Initialization strategies for the VB iterations.
//!
//! Random initialization draws independent row-stochastic segment
//! posteriors. The heuristic alternative starts several short three-speaker
//! VB runs, measures how far apart the converged speaker means are (cosine
//! similarity or PLDA same-speaker LLR), and keeps the most distant pair
//! across all attempts as the two-speaker starting point.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Open01;

use crate::error::{Error, Result};
use crate::plda::{llr_same_speaker, SpeakerPrior, TwoCovPlda};
use crate::seed::{rng_from_seed, subseed};
use crate::vb::{self, ConvergenceConfig, SpeakerPosterior, VbInit};

/// Distance metric for the pair-selection heuristic. Under both metrics a
/// smaller value means "more distant": low cosine similarity or low
/// same-speaker log-likelihood ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMetric {
    Cosine,
    PldaLlr,
}

/// How to produce the VB starting point.
#[derive(Clone, Debug)]
pub enum InitStrategy {
    Random {
        num_speakers: usize,
        seed: u64,
    },
    Heuristic {
        metric: PairMetric,
        attempts: usize,
        vb_iterations: usize,
        seed: u64,
    },
}

impl InitStrategy {
    pub fn random(num_speakers: usize, seed: u64) -> Self {
        Self::Random { num_speakers, seed }
    }

    /// Heuristic with the stock parameters: ten attempts, four VB sweeps each.
    pub fn heuristic(metric: PairMetric, seed: u64) -> Self {
        Self::Heuristic {
            metric,
            attempts: 10,
            vb_iterations: 4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Random { num_speakers, .. } => {
                if *num_speakers == 0 {
                    return Err(Error::InvalidInput("num_speakers must be at least 1".into()));
                }
            }
            Self::Heuristic {
                attempts,
                vb_iterations,
                ..
            } => {
                if *attempts == 0 || *vb_iterations == 0 {
                    return Err(Error::InvalidInput(
                        "heuristic init needs attempts >= 1 and vb_iterations >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Draws an M×S row-stochastic matrix with strictly positive entries:
/// each row is a vector of open-interval uniforms normalized to sum 1.
/// Deterministic given the seed.
pub fn random_init(num_segments: usize, num_speakers: usize, seed: u64) -> DMatrix<f64> {
    assert!(num_segments >= 1 && num_speakers >= 1);
    let mut rng = rng_from_seed(seed);
    let mut q = DMatrix::zeros(num_segments, num_speakers);
    for m in 0..num_segments {
        let mut sum = 0.0;
        for s in 0..num_speakers {
            let u: f64 = rng.sample(Open01);
            q[(m, s)] = u;
            sum += u;
        }
        for s in 0..num_speakers {
            q[(m, s)] /= sum;
        }
    }
    q
}

/// Result of the three-speaker pair-selection heuristic.
#[derive(Clone, Debug)]
pub struct HeuristicInit {
    /// The two selected speaker posteriors, ready to seed a two-speaker run.
    pub speakers: Vec<SpeakerPosterior>,
    /// Attempt index the winning pair came from.
    pub attempt: usize,
    /// Which pair of provisional speakers won within that attempt.
    pub pair: (usize, usize),
    /// Winning metric value (cosine similarity or same-speaker LLR).
    pub metric_value: f64,
    /// Attempts where some provisional speaker collected less than one
    /// segment-equivalent of responsibility mass. Such attempts are scored
    /// like any other, only flagged.
    pub degenerate_attempts: Vec<usize>,
}

impl HeuristicInit {
    /// Convenience conversion into a [`VbInit`].
    pub fn into_vb_init(self) -> VbInit {
        VbInit::SpeakerPosteriors(self.speakers)
    }
}

/// Runs the pair-selection heuristic: per attempt, a random three-speaker
/// initialization is refined with `vb_iterations` sweeps at β = 1, the
/// three candidate pairs of speaker means are scored with the metric, and
/// the globally most distant pair across attempts wins. Ties keep the
/// earliest attempt. Each attempt runs on its own sub-seed stream.
pub fn heuristic_pair_init(
    model: &TwoCovPlda,
    embeddings: &[DVector<f64>],
    strategy: &InitStrategy,
) -> Result<HeuristicInit> {
    strategy.validate()?;
    let (metric, attempts, vb_iterations, seed) = match strategy {
        InitStrategy::Heuristic {
            metric,
            attempts,
            vb_iterations,
            seed,
        } => (*metric, *attempts, *vb_iterations, *seed),
        InitStrategy::Random { .. } => {
            return Err(Error::InvalidInput(
                "heuristic_pair_init needs the heuristic strategy variant".into(),
            ))
        }
    };
    if embeddings.len() < 2 {
        return Err(Error::InvalidInput(
            "pair-selection heuristic needs at least 2 segments".into(),
        ));
    }

    let provisional_prior = SpeakerPrior::uniform(3);
    let config = ConvergenceConfig::exact_sweeps(vb_iterations);
    let mut best: Option<HeuristicInit> = None;
    let mut degenerate_attempts = Vec::new();

    for attempt in 0..attempts {
        let attempt_seed = subseed(seed, attempt as u64);
        let q0 = random_init(embeddings.len(), 3, attempt_seed);
        let run = vb::run_vb(
            model,
            &provisional_prior,
            embeddings,
            VbInit::SegmentPosteriors(q0),
            None,
            &config,
        )?;

        for s in 0..3 {
            let mass: f64 = (0..embeddings.len()).map(|m| run.state.q[(m, s)]).sum();
            if mass < 1.0 {
                degenerate_attempts.push(attempt);
                break;
            }
        }

        let means: Vec<&DVector<f64>> =
            run.state.speakers.iter().map(|p| &p.mean).collect();
        for &(i, j) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let value = pair_metric_value(model, metric, means[i], means[j])?;
            if best.as_ref().is_none_or(|b| value < b.metric_value) {
                best = Some(HeuristicInit {
                    speakers: vec![run.state.speakers[i].clone(), run.state.speakers[j].clone()],
                    attempt,
                    pair: (i, j),
                    metric_value: value,
                    degenerate_attempts: Vec::new(),
                });
            }
        }
    }

    let mut winner = best.expect("attempts >= 1 always yields a candidate");
    winner.degenerate_attempts = degenerate_attempts;
    Ok(winner)
}

/// Scores one candidate pair of speaker means; smaller is more distant.
fn pair_metric_value(
    model: &TwoCovPlda,
    metric: PairMetric,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<f64> {
    let value = match metric {
        PairMetric::Cosine => cosine_similarity(a, b)?,
        PairMetric::PldaLlr => llr_same_speaker(model, a, b)?,
    };
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite pair metric".into()));
    }
    Ok(value)
}

/// Picks the most distant pair among a set of speaker means; exposed so the
/// selection rule is testable in isolation. Returns the pair indices and
/// the metric value.
pub fn most_distant_pair(
    model: &TwoCovPlda,
    means: &[DVector<f64>],
    metric: PairMetric,
) -> Result<((usize, usize), f64)> {
    if means.len() < 2 {
        return Err(Error::InvalidInput("need at least two means".into()));
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for i in 0..means.len() {
        for j in (i + 1)..means.len() {
            let value = pair_metric_value(model, metric, &means[i], &means[j])?;
            if best.is_none_or(|(_, v)| value < v) {
                best = Some(((i, j), value));
            }
        }
    }
    Ok(best.expect("at least one pair"))
}

fn cosine_similarity(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numerical(
            "cosine similarity undefined for a zero-norm mean".into(),
        ));
    }
    Ok(a.dot(b) / (na * nb))
}
