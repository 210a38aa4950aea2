//! Mean-field variational inference for the diarization model.
//!
//! The approximate posterior factorizes as `Q(Y) Q(I)`: Gaussian speaker
//! posteriors `N(y_s; μ_s, C_s⁻¹)` and per-segment assignment posteriors
//! `q_ms`. Coordinate ascent alternates the two update rules; the
//! deterministic-annealing variant scales the speaker-dependent terms by a
//! temperature β that is ramped from `beta_init` to `beta_max`. At β = 1
//! the annealed updates reduce exactly to the plain ones, and the free
//! energy (mean-field ELBO) is non-decreasing under every update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Spd, LN_2PI};
use crate::plda::{SpeakerPrior, TwoCovPlda};

/// Gaussian posterior of one speaker vector.
#[derive(Clone, Debug)]
pub struct SpeakerPosterior {
    pub mean: DVector<f64>,
    /// Posterior precision C_s.
    pub precision: DMatrix<f64>,
}

/// Full state of a VB run: segment posteriors, speaker posteriors, the
/// current temperature and the sweep counter.
#[derive(Clone, Debug)]
pub struct VbState {
    /// M×S matrix of segment posteriors; each row sums to 1.
    pub q: DMatrix<f64>,
    pub speakers: Vec<SpeakerPosterior>,
    pub beta: f64,
    pub iteration: usize,
}

impl VbState {
    pub fn num_segments(&self) -> usize {
        self.q.nrows()
    }

    pub fn num_speakers(&self) -> usize {
        self.q.ncols()
    }

    /// Checks the state invariants: row-stochastic q within 1e-12 and
    /// symmetric, factorizable speaker precisions.
    pub fn validate(&self) -> Result<()> {
        if self.speakers.len() != self.num_speakers() {
            return Err(Error::DimensionMismatch(format!(
                "{} speaker posteriors vs q with {} columns",
                self.speakers.len(),
                self.num_speakers()
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidInput(format!("beta {} outside (0, 1]", self.beta)));
        }
        for m in 0..self.q.nrows() {
            let row = self.q.row(m);
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidInput(format!("q row {m} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "q row {m} sums to {sum}, expected 1"
                )));
            }
        }
        for (s, posterior) in self.speakers.iter().enumerate() {
            Spd::new(posterior.precision.clone(), &format!("speaker {s} precision"))?;
        }
        Ok(())
    }
}

/// Temperature schedule for deterministic annealing.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub beta_init: f64,
    pub factor: f64,
    pub beta_max: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            beta_init: 0.2,
            factor: 1.05,
            beta_max: 1.0,
        }
    }
}

impl AnnealSchedule {
    pub fn new(beta_init: f64, factor: f64, beta_max: f64) -> Result<Self> {
        let schedule = Self {
            beta_init,
            factor,
            beta_max,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_init > 0.0 && self.beta_init <= self.beta_max && self.beta_max <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "annealing schedule needs 0 < beta_init <= beta_max <= 1, got init {} max {}",
                self.beta_init, self.beta_max
            )));
        }
        if self.factor <= 1.0 {
            return Err(Error::InvalidInput(format!(
                "annealing factor must exceed 1, got {}",
                self.factor
            )));
        }
        Ok(())
    }
}

/// Convergence control for [`run_vb`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub max_iterations: usize,
    /// Maximum absolute change of any q_ms between successive sweeps.
    pub q_tolerance: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            q_tolerance: 1e-6,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        if !self.q_tolerance.is_finite() || self.q_tolerance <= 0.0 {
            return Err(Error::InvalidInput("q_tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Runs exactly `n` sweeps: the tolerance is the smallest positive
    /// float, so early exit happens only at an exact fixed point, where
    /// further sweeps could not change the state anyway.
    pub fn exact_sweeps(n: usize) -> Self {
        Self {
            max_iterations: n,
            q_tolerance: f64::MIN_POSITIVE,
        }
    }
}

/// Initialization for [`run_vb`]: either segment posteriors (the speaker
/// update runs first) or speaker posteriors (the segment update runs first).
#[derive(Clone, Debug)]
pub enum VbInit {
    SegmentPosteriors(DMatrix<f64>),
    SpeakerPosteriors(Vec<SpeakerPosterior>),
}

/// One line of the per-sweep trace.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Temperature in effect during the sweep.
    pub beta: f64,
    /// Mean-field ELBO (at β = 1) after the sweep.
    pub free_energy: f64,
    /// Max absolute q change relative to the previous sweep.
    pub max_q_delta: f64,
}

/// Outcome of [`run_vb`].
#[derive(Clone, Debug)]
pub struct VbRun {
    pub state: VbState,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

fn check_embeddings(model: &TwoCovPlda, embeddings: &[DVector<f64>]) -> Result<()> {
    if embeddings.is_empty() {
        return Err(Error::InvalidInput("need at least one segment embedding".into()));
    }
    for (m, x) in embeddings.iter().enumerate() {
        if x.len() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "embedding {m} has dim {}, model dim {}",
                x.len(),
                model.dim()
            )));
        }
    }
    Ok(())
}

/// Segment-posterior update: softmax over speakers of
/// `β·(μ_sᵀ𝓛φ_m − ½·tr(𝓛(C_s⁻¹ + μ_sμ_sᵀ))) + log π_s`,
/// normalized per row with log-sum-exp. Speaker-independent terms cancel
/// in the normalization and are never evaluated.
pub fn update_segment_posteriors(
    model: &TwoCovPlda,
    prior: &SpeakerPrior,
    embeddings: &[DVector<f64>],
    state: &VbState,
) -> Result<DMatrix<f64>> {
    check_embeddings(model, embeddings)?;
    let num_segments = embeddings.len();
    let num_speakers = state.speakers.len();
    if prior.num_speakers() != num_speakers {
        return Err(Error::DimensionMismatch(format!(
            "prior over {} speakers vs state with {num_speakers}",
            prior.num_speakers()
        )));
    }
    let log_pi = prior.log_pi();
    let within = model.within_precision();

    // Per-speaker constants: a_s = 𝓛μ_s and t_s = ½·tr(𝓛(C_s⁻¹ + μ_sμ_sᵀ)).
    // C_s⁻¹ comes from one Cholesky solve per speaker per sweep.
    let mut linear = Vec::with_capacity(num_speakers);
    let mut offset = Vec::with_capacity(num_speakers);
    for (s, posterior) in state.speakers.iter().enumerate() {
        let precision = Spd::new(posterior.precision.clone(), &format!("speaker {s} precision"))?;
        let cov = precision.inverse();
        let a = within * &posterior.mean;
        let t = 0.5 * (trace_product(within, &cov) + posterior.mean.dot(&a));
        linear.push(a);
        offset.push(t);
    }

    let mut q = DMatrix::zeros(num_segments, num_speakers);
    let mut scores = vec![0.0; num_speakers];
    for (m, phi) in embeddings.iter().enumerate() {
        for s in 0..num_speakers {
            scores[s] = state.beta * (linear[s].dot(phi) - offset[s]) + log_pi[s];
        }
        let norm = log_sum_exp(&scores);
        if !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite segment-posterior normalizer at segment {m}"
            )));
        }
        let mut row_sum = 0.0;
        for s in 0..num_speakers {
            let v = (scores[s] - norm).exp();
            q[(m, s)] = v;
            row_sum += v;
        }
        for s in 0..num_speakers {
            q[(m, s)] /= row_sum;
        }
    }
    Ok(q)
}

/// Speaker-posterior update:
/// `C_s = β(Λ + Σ_m q_ms 𝓛)` and `μ_s = C_s⁻¹ β(Λμ + Σ_m q_ms 𝓛φ_m)`.
/// The β in the mean's right-hand side cancels against the β inside C_s,
/// so speaker means do not depend on the temperature for fixed q.
pub fn update_speaker_posteriors(
    model: &TwoCovPlda,
    embeddings: &[DVector<f64>],
    state: &VbState,
) -> Result<Vec<SpeakerPosterior>> {
    check_embeddings(model, embeddings)?;
    if embeddings.len() != state.q.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} embeddings vs q with {} rows",
            embeddings.len(),
            state.q.nrows()
        )));
    }
    let dim = model.dim();
    let between = model.between_precision();
    let within = model.within_precision();
    let prior_term = between * model.mu();

    let mut speakers = Vec::with_capacity(state.num_speakers());
    for s in 0..state.num_speakers() {
        let mut responsibility = 0.0;
        let mut weighted_sum = DVector::zeros(dim);
        for (m, phi) in embeddings.iter().enumerate() {
            let w = state.q[(m, s)];
            responsibility += w;
            weighted_sum.axpy(w, phi, 1.0);
        }
        let precision = (between + within * responsibility) * state.beta;
        let rhs = (&prior_term + within * weighted_sum) * state.beta;
        let factored = Spd::new(precision, &format!("speaker {s} posterior precision"))
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let mean = factored.solve_vector(&rhs);
        speakers.push(SpeakerPosterior {
            mean,
            precision: factored.matrix().clone(),
        });
    }
    Ok(speakers)
}

/// Mean-field ELBO of the current state, evaluated at β = 1 regardless of
/// the state's temperature. A lower bound on the log evidence; retained as
/// a convergence diagnostic and exercised heavily by the test suite.
pub fn free_energy(
    model: &TwoCovPlda,
    prior: &SpeakerPrior,
    embeddings: &[DVector<f64>],
    state: &VbState,
) -> Result<f64> {
    check_embeddings(model, embeddings)?;
    let dim = model.dim() as f64;
    let log_pi = prior.log_pi();
    let within = model.within();
    let between = model.between();

    let mut total = 0.0;
    for (s, posterior) in state.speakers.iter().enumerate() {
        let precision = Spd::new(posterior.precision.clone(), &format!("speaker {s} precision"))?;
        let cov = precision.inverse();
        let trace_within = trace_product(within.matrix(), &cov);
        let trace_between = trace_product(between.matrix(), &cov);

        // E[log p(y_s)] under q(y_s)
        let prior_dev = &posterior.mean - model.mu();
        total += -0.5 * dim * LN_2PI + 0.5 * between.log_det()
            - 0.5 * (between.quadform(&prior_dev) + trace_between);
        // entropy of q(y_s)
        total += 0.5 * dim * (LN_2PI + 1.0) - 0.5 * precision.log_det();

        for (m, phi) in embeddings.iter().enumerate() {
            let w = state.q[(m, s)];
            if w <= 0.0 {
                continue;
            }
            let dev = phi - &posterior.mean;
            // E[log p(φ_m | y_s)] plus the assignment prior and entropy
            let expected_loglik = -0.5 * dim * LN_2PI + 0.5 * within.log_det()
                - 0.5 * (within.quadform(&dev) + trace_within);
            total += w * (log_pi[s] + expected_loglik - w.ln());
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite free energy".into()));
    }
    Ok(total)
}

/// Runs alternating VB updates to convergence.
///
/// A q-matrix initialization runs the speaker update first; a
/// speaker-posterior initialization runs the segment update first. With a
/// schedule, β starts at `beta_init` and is multiplied by `factor` after
/// each full sweep until it reaches `beta_max`; the q-change stopping rule
/// only applies once β has reached `beta_max`, so annealing is never cut
/// short. Without a schedule β is fixed at 1.
pub fn run_vb(
    model: &TwoCovPlda,
    prior: &SpeakerPrior,
    embeddings: &[DVector<f64>],
    init: VbInit,
    schedule: Option<&AnnealSchedule>,
    config: &ConvergenceConfig,
) -> Result<VbRun> {
    check_embeddings(model, embeddings)?;
    config.validate()?;
    if let Some(s) = schedule {
        s.validate()?;
    }
    let num_segments = embeddings.len();
    let num_speakers = prior.num_speakers();
    let beta_init = schedule.map_or(1.0, |s| s.beta_init);
    let beta_max = schedule.map_or(1.0, |s| s.beta_max);
    let factor = schedule.map_or(1.0, |s| s.factor);

    enum First {
        Speaker,
        Segment,
    }

    let (mut state, first) = match init {
        VbInit::SegmentPosteriors(q) => {
            if q.nrows() != num_segments || q.ncols() != num_speakers {
                return Err(Error::DimensionMismatch(format!(
                    "init q is {}x{}, expected {num_segments}x{num_speakers}",
                    q.nrows(),
                    q.ncols()
                )));
            }
            // speaker slots start at the prior; the first (speaker) sweep
            // replaces them before they are ever read
            let speakers = (0..num_speakers)
                .map(|_| SpeakerPosterior {
                    mean: model.mu().clone(),
                    precision: model.between_precision().clone(),
                })
                .collect();
            let state = VbState {
                q,
                speakers,
                beta: beta_init,
                iteration: 0,
            };
            state.validate()?;
            (state, First::Speaker)
        }
        VbInit::SpeakerPosteriors(speakers) => {
            if speakers.len() != num_speakers {
                return Err(Error::DimensionMismatch(format!(
                    "{} speaker posteriors, prior expects {num_speakers}",
                    speakers.len()
                )));
            }
            for (s, p) in speakers.iter().enumerate() {
                if p.mean.len() != model.dim() || p.precision.nrows() != model.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "speaker posterior {s} does not match model dim {}",
                        model.dim()
                    )));
                }
            }
            let q = DMatrix::from_element(num_segments, num_speakers, 1.0 / num_speakers as f64);
            let state = VbState {
                q,
                speakers,
                beta: beta_init,
                iteration: 0,
            };
            state.validate()?;
            (state, First::Segment)
        }
    };

    let mut trace = Vec::new();
    let mut converged = false;
    for sweep in 1..=config.max_iterations {
        let beta_used = state.beta;
        let prev_q = state.q.clone();
        match first {
            First::Speaker => {
                state.speakers = update_speaker_posteriors(model, embeddings, &state)?;
                state.q = update_segment_posteriors(model, prior, embeddings, &state)?;
            }
            First::Segment => {
                state.q = update_segment_posteriors(model, prior, embeddings, &state)?;
                state.speakers = update_speaker_posteriors(model, embeddings, &state)?;
            }
        }
        state.iteration = sweep;
        let max_q_delta = (&state.q - &prev_q).abs().max();
        let fe = free_energy(model, prior, embeddings, &state)?;
        trace.push(TraceEntry {
            iteration: sweep,
            beta: beta_used,
            free_energy: fe,
            max_q_delta,
        });
        if state.beta >= beta_max && max_q_delta <= config.q_tolerance {
            converged = true;
            break;
        }
        if state.beta < beta_max {
            state.beta = (state.beta * factor).min(beta_max);
        }
    }
    Ok(VbRun {
        state,
        trace,
        converged,
    })
}

/// Per-segment argmax over speakers; ties break toward the lowest index.
pub fn map_assignment(state: &VbState) -> Vec<usize> {
    argmax_rows(&state.q)
}

pub(crate) fn argmax_rows(q: &DMatrix<f64>) -> Vec<usize> {
    (0..q.nrows())
        .map(|m| {
            let mut best = 0;
            for s in 1..q.ncols() {
                if q[(m, s)] > q[(m, best)] {
                    best = s;
                }
            }
            best
        })
        .collect()
}

/// tr(A·B) for symmetric A, B of equal shape.
fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::plda::{marginal_loglik_assignment, sample_conversation};
    use crate::seed::subseed;

    fn model_1d(between_prec: f64, within_prec: f64, mu: f64) -> TwoCovPlda {
        TwoCovPlda::new(
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, between_prec),
            DMatrix::from_element(1, 1, within_prec),
        )
        .unwrap()
    }

    fn posterior_1d(mean: f64, precision: f64) -> SpeakerPosterior {
        SpeakerPosterior {
            mean: DVector::from_element(1, mean),
            precision: DMatrix::from_element(1, 1, precision),
        }
    }

    fn prior_posterior(model: &TwoCovPlda) -> SpeakerPosterior {
        SpeakerPosterior {
            mean: model.mu().clone(),
            precision: model.between_precision().clone(),
        }
    }

    fn state_with(q: DMatrix<f64>, speakers: Vec<SpeakerPosterior>, beta: f64) -> VbState {
        VbState {
            q,
            speakers,
            beta,
            iteration: 0,
        }
    }

    #[test]
    fn single_speaker_segment_posteriors_are_one() {
        let model = model_1d(1.0, 1.0, 0.0);
        let prior = SpeakerPrior::uniform(1);
        let embeddings = vec![DVector::from_element(1, 0.3), DVector::from_element(1, -2.0)];
        let state = state_with(
            DMatrix::from_element(2, 1, 1.0),
            vec![posterior_1d(0.5, 2.0)],
            1.0,
        );
        let q = update_segment_posteriors(&model, &prior, &embeddings, &state).unwrap();
        assert!(q.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn identical_speakers_split_exactly_in_half() {
        let model = model_1d(1.0, 1.0, 0.0);
        let prior = SpeakerPrior::uniform(2);
        let embeddings = vec![DVector::from_element(1, 0.7)];
        let state = state_with(
            DMatrix::from_element(1, 2, 0.5),
            vec![posterior_1d(0.4, 3.0), posterior_1d(0.4, 3.0)],
            1.0,
        );
        let q = update_segment_posteriors(&model, &prior, &embeddings, &state).unwrap();
        assert_eq!(q[(0, 0)], 0.5);
        assert_eq!(q[(0, 1)], 0.5);
    }

    #[test]
    fn segment_update_matches_scalar_hand_evaluation() {
        // D=1, β=1, 𝓛=1, C₁=C₂=4, μ₁=1, μ₂=−1, φ=0.5, equal priors:
        // log q̃₁ − log q̃₂ = 1 so q₁ = 1/(1+e⁻¹)
        let model = model_1d(1.0, 1.0, 0.0);
        let prior = SpeakerPrior::uniform(2);
        let embeddings = vec![DVector::from_element(1, 0.5)];
        let state = state_with(
            DMatrix::from_element(1, 2, 0.5),
            vec![posterior_1d(1.0, 4.0), posterior_1d(-1.0, 4.0)],
            1.0,
        );
        let q = update_segment_posteriors(&model, &prior, &embeddings, &state).unwrap();
        assert_relative_eq!(q[(0, 0)], 1.0 / (1.0 + (-1.0_f64).exp()), epsilon = 1e-12);
        assert_relative_eq!(q[(0, 0)], 0.731_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn rows_stay_stochastic_under_updates() {
        let model = TwoCovPlda::isotropic(3, 4.0, 0.5).unwrap();
        let prior = SpeakerPrior::uniform(3);
        let (embeddings, _) = sample_conversation(&model, &prior, 25, 5).unwrap();
        let q0 = crate::init::random_init(25, 3, 11);
        let mut state = state_with(
            q0,
            (0..3).map(|_| prior_posterior(&model)).collect(),
            1.0,
        );
        for _ in 0..5 {
            state.speakers = update_speaker_posteriors(&model, &embeddings, &state).unwrap();
            state.q = update_segment_posteriors(&model, &prior, &embeddings, &state).unwrap();
            for m in 0..state.q.nrows() {
                let sum: f64 = state.q.row(m).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "row {m} sums to {sum}");
            }
        }
    }

    #[test]
    fn zero_responsibility_recovers_the_prior() {
        let model = TwoCovPlda::isotropic(2, 2.0, 0.5).unwrap();
        let embeddings = vec![DVector::from_row_slice(&[1.0, -1.0])];
        // all mass on speaker 0; speaker 1 gets none
        let state = state_with(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            vec![prior_posterior(&model), prior_posterior(&model)],
            1.0,
        );
        let speakers = update_speaker_posteriors(&model, &embeddings, &state).unwrap();
        assert_eq!(speakers[1].precision, *model.between_precision());
        assert_relative_eq!((&speakers[1].mean - model.mu()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn speaker_update_matches_scalar_hand_evaluation() {
        // D=1, Λ=1, μ=0, 𝓛=2, φ=3 with q=1, β=1 → C = 3, μ_s = 6/3 = 2
        let model = model_1d(1.0, 2.0, 0.0);
        let embeddings = vec![DVector::from_element(1, 3.0)];
        let state = state_with(
            DMatrix::from_element(1, 1, 1.0),
            vec![posterior_1d(0.0, 1.0)],
            1.0,
        );
        let speakers = update_speaker_posteriors(&model, &embeddings, &state).unwrap();
        assert_relative_eq!(speakers[0].precision[(0, 0)], 3.0, epsilon = 1e-14);
        assert_relative_eq!(speakers[0].mean[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn speaker_means_are_temperature_invariant() {
        let model = TwoCovPlda::isotropic(2, 1.5, 0.7).unwrap();
        let prior = SpeakerPrior::uniform(2);
        let (embeddings, _) = sample_conversation(&model, &prior, 12, 21).unwrap();
        let q = crate::init::random_init(12, 2, 3);
        let speakers_for = |beta: f64| {
            let state = state_with(
                q.clone(),
                vec![prior_posterior(&model), prior_posterior(&model)],
                beta,
            );
            update_speaker_posteriors(&model, &embeddings, &state).unwrap()
        };
        let at_half = speakers_for(0.5);
        let at_one = speakers_for(1.0);
        for (a, b) in at_half.iter().zip(&at_one) {
            assert_relative_eq!((&a.mean - &b.mean).norm(), 0.0, epsilon = 1e-12);
            // C_s at β = 0.5 is exactly half of the β = 1 value
            let doubled = &a.precision * 2.0;
            assert_eq!(doubled, b.precision);
        }
    }

    #[test]
    fn free_energy_is_the_evidence_for_one_segment_one_speaker() {
        let model = model_1d(1.0 / 1.7, 1.0 / 0.4, 0.6); // variances 1.7, 0.4
        let prior = SpeakerPrior::uniform(1);
        let phi = 1.9;
        let embeddings = vec![DVector::from_element(1, phi)];
        let mut state = state_with(
            DMatrix::from_element(1, 1, 1.0),
            vec![posterior_1d(0.0, 1.0)],
            1.0,
        );
        state.speakers = update_speaker_posteriors(&model, &embeddings, &state).unwrap();
        let fe = free_energy(&model, &prior, &embeddings, &state).unwrap();
        let var: f64 = 1.7 + 0.4;
        let expected = -0.5 * LN_2PI - 0.5 * var.ln() - 0.5 * (phi - 0.6) * (phi - 0.6) / var;
        assert_relative_eq!(fe, expected, epsilon = 1e-8);
    }

    #[test]
    fn free_energy_never_decreases_under_coordinate_updates() {
        let model = TwoCovPlda::isotropic(2, 3.0, 0.5).unwrap();
        let prior = SpeakerPrior::uniform(2);
        for seed in 0..10u64 {
            let (embeddings, _) = sample_conversation(&model, &prior, 15, seed).unwrap();
            let mut state = state_with(
                crate::init::random_init(15, 2, subseed(seed, 1)),
                vec![prior_posterior(&model), prior_posterior(&model)],
                1.0,
            );
            state.speakers = update_speaker_posteriors(&model, &embeddings, &state).unwrap();
            let mut last = free_energy(&model, &prior, &embeddings, &state).unwrap();
            for _ in 0..8 {
                state.q = update_segment_posteriors(&model, &prior, &embeddings, &state).unwrap();
                let fe = free_energy(&model, &prior, &embeddings, &state).unwrap();
                assert!(fe >= last - 1e-8, "segment update decreased F: {last} -> {fe}");
                last = fe;
                state.speakers = update_speaker_posteriors(&model, &embeddings, &state).unwrap();
                let fe = free_energy(&model, &prior, &embeddings, &state).unwrap();
                assert!(fe >= last - 1e-8, "speaker update decreased F: {last} -> {fe}");
                last = fe;
            }
        }
    }

    #[test]
    fn free_energy_lower_bounds_the_enumerated_evidence() {
        let model = model_1d(1.0, 2.5, 0.1);
        let prior = SpeakerPrior::uniform(2);
        for seed in 0..20u64 {
            let (embeddings, _) = sample_conversation(&model, &prior, 3, 900 + seed).unwrap();
            let run = run_vb(
                &model,
                &prior,
                &embeddings,
                VbInit::SegmentPosteriors(crate::init::random_init(3, 2, seed)),
                None,
                &ConvergenceConfig::default(),
            )
            .unwrap();
            let fe = free_energy(&model, &prior, &embeddings, &run.state).unwrap();
            // total evidence by exhaustive enumeration of the 2³ assignments
            let log_pi = prior.log_pi();
            let mut terms = Vec::new();
            for bits in 0..8usize {
                let assignment: Vec<usize> = (0..3).map(|m| (bits >> m) & 1).collect();
                let weight: f64 = assignment.iter().map(|&s| log_pi[s]).sum();
                let mll = marginal_loglik_assignment(&model, &embeddings, &assignment).unwrap();
                terms.push(weight + mll);
            }
            let evidence = log_sum_exp(&terms);
            assert!(
                fe <= evidence + 1e-8,
                "free energy {fe} exceeds evidence {evidence}"
            );
        }
    }

    #[test]
    fn single_speaker_run_converges_after_one_sweep() {
        let model = TwoCovPlda::isotropic(2, 1.0, 1.0).unwrap();
        let prior = SpeakerPrior::uniform(1);
        let (embeddings, _) = sample_conversation(&model, &prior, 6, 2).unwrap();
        let run = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(DMatrix::from_element(6, 1, 1.0)),
            None,
            &ConvergenceConfig::default(),
        )
        .unwrap();
        assert!(run.converged);
        assert_eq!(run.state.iteration, 1);
        assert!(run.state.q.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn swapping_init_columns_swaps_the_final_state_bitwise() {
        let model = TwoCovPlda::isotropic(2, 4.0, 0.25).unwrap();
        let prior = SpeakerPrior::uniform(2);
        let (embeddings, _) = sample_conversation(&model, &prior, 14, 77).unwrap();
        let q = crate::init::random_init(14, 2, 8);
        let mut q_swapped = q.clone();
        q_swapped.swap_columns(0, 1);

        let run_a = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(q),
            None,
            &ConvergenceConfig::default(),
        )
        .unwrap();
        let run_b = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(q_swapped),
            None,
            &ConvergenceConfig::default(),
        )
        .unwrap();
        assert_eq!(run_a.state.iteration, run_b.state.iteration);
        for m in 0..14 {
            assert_eq!(run_a.state.q[(m, 0)].to_bits(), run_b.state.q[(m, 1)].to_bits());
            assert_eq!(run_a.state.q[(m, 1)].to_bits(), run_b.state.q[(m, 0)].to_bits());
        }
        assert_eq!(run_a.state.speakers[0].mean, run_b.state.speakers[1].mean);
    }

    #[test]
    fn vb_map_matches_exhaustive_enumeration_on_separated_data() {
        // D=1, Λ=1, 𝓛=100: speaker means far apart relative to residual noise
        let model = model_1d(1.0, 100.0, 0.0);
        let prior = SpeakerPrior::uniform(2);
        let (embeddings, _) = sample_conversation(&model, &prior, 8, 4242).unwrap();
        let run = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(crate::init::random_init(8, 2, 17)),
            None,
            &ConvergenceConfig::default(),
        )
        .unwrap();
        let vb_map = map_assignment(&run.state);

        let mut best = (f64::NEG_INFINITY, Vec::new());
        let log_pi = prior.log_pi();
        for bits in 0..(1usize << 8) {
            let assignment: Vec<usize> = (0..8).map(|m| (bits >> m) & 1).collect();
            let weight: f64 = assignment.iter().map(|&s| log_pi[s]).sum();
            let score =
                weight + marginal_loglik_assignment(&model, &embeddings, &assignment).unwrap();
            if score > best.0 {
                best = (score, assignment);
            }
        }
        let flipped: Vec<usize> = best.1.iter().map(|&s| 1 - s).collect();
        assert!(
            vb_map == best.1 || vb_map == flipped,
            "VB map {vb_map:?} vs enumeration {:?}",
            best.1
        );
    }

    #[test]
    fn constant_beta_schedule_is_bit_identical_to_plain_vb() {
        let model = TwoCovPlda::isotropic(2, 2.0, 0.5).unwrap();
        let prior = SpeakerPrior::uniform(2);
        let (embeddings, _) = sample_conversation(&model, &prior, 10, 55).unwrap();
        let q = crate::init::random_init(10, 2, 5);
        let config = ConvergenceConfig::default();
        let plain = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(q.clone()),
            None,
            &config,
        )
        .unwrap();
        let schedule = AnnealSchedule::new(1.0, 1.05, 1.0).unwrap();
        let pinned = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(q),
            Some(&schedule),
            &config,
        )
        .unwrap();
        assert_eq!(plain.trace.len(), pinned.trace.len());
        for (a, b) in plain.trace.iter().zip(&pinned.trace) {
            assert_eq!(a.free_energy.to_bits(), b.free_energy.to_bits());
            assert_eq!(a.max_q_delta.to_bits(), b.max_q_delta.to_bits());
        }
        assert_eq!(plain.state.q, pinned.state.q);
    }

    #[test]
    fn annealing_ramps_beta_and_finishes_at_beta_max() {
        let model = TwoCovPlda::isotropic(1, 2.0, 0.5).unwrap();
        let prior = SpeakerPrior::uniform(2);
        let (embeddings, _) = sample_conversation(&model, &prior, 10, 3).unwrap();
        let schedule = AnnealSchedule::default();
        let run = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(crate::init::random_init(10, 2, 9)),
            Some(&schedule),
            &ConvergenceConfig::default(),
        )
        .unwrap();
        assert_eq!(run.trace[0].beta, 0.2);
        for pair in run.trace.windows(2) {
            assert!(pair[1].beta >= pair[0].beta);
            assert!(pair[1].beta <= 1.0);
        }
        assert_eq!(run.state.beta, 1.0);
        // β multiplies by 1.05 from 0.2, so the ramp alone takes 33 sweeps
        assert!(run.state.iteration > 33);
    }

    #[test]
    fn map_assignment_breaks_ties_toward_lower_index() {
        let state = state_with(
            DMatrix::from_row_slice(3, 2, &[0.7, 0.3, 0.5, 0.5, 0.2, 0.8]),
            vec![posterior_1d(0.0, 1.0), posterior_1d(0.0, 1.0)],
            1.0,
        );
        assert_eq!(map_assignment(&state), vec![0, 0, 1]);
    }

    #[test]
    fn invalid_inits_are_rejected() {
        let model = TwoCovPlda::isotropic(2, 1.0, 1.0).unwrap();
        let prior = SpeakerPrior::uniform(2);
        let embeddings = vec![DVector::from_row_slice(&[0.0, 0.0])];
        // wrong shape
        let err = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(DMatrix::from_element(2, 2, 0.5)),
            None,
            &ConvergenceConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        // rows that do not sum to one
        let err = run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(DMatrix::from_element(1, 2, 0.4)),
            None,
            &ConvergenceConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
