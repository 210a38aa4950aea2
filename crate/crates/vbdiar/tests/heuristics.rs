//! Paired comparison of the pair-selection heuristic against random
//! initialization: across 50 seeded single-conversation corpora, full VB
//! from the heuristic start must reach a mean DER no worse than the mean
//! of the per-conversation medians over 10 random-init runs.

use vbdiar::der;
use vbdiar::init::{self, InitStrategy, PairMetric};
use vbdiar::plda::{SpeakerPrior, TwoCovPlda};
use vbdiar::seed::subseed;
use vbdiar::synth::{self, CorpusSpec, CountDistribution, DurationDistribution};
use vbdiar::vb::{self, ConvergenceConfig, VbInit};

fn conversation_der(conv: &synth::Conversation, labels: &[usize]) -> f64 {
    let reference = conv.reference_turns().unwrap();
    let hypothesis = conv.turns_for_labels(labels).unwrap();
    der::compute_der(&reference, &hypothesis, 0.25).unwrap().der
}

#[test]
fn heuristic_init_beats_the_random_init_median() {
    let prior = SpeakerPrior::uniform(2);
    let config = ConvergenceConfig::default();
    let mut heuristic_total = 0.0;
    let mut median_total = 0.0;

    for corpus_index in 0..50u64 {
        let spec = CorpusSpec {
            num_conversations: 1,
            num_speakers_per_conversation: 2,
            dim: 8,
            segments_per_conversation: CountDistribution::Uniform { lo: 20, hi: 40 },
            segment_duration_seconds: DurationDistribution::UniformSeconds { lo: 1.0, hi: 5.0 },
            dominance: 0.8,
            separation: 6.0,
            duration_residual_scaling: true,
            seed: subseed(0xBEEF, corpus_index),
        };
        let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0).unwrap();
        let model = synth::generation_model(&spec, &base).unwrap();
        let conv = synth::generate_corpus(&spec, &base).unwrap().remove(0);
        let embeddings = conv.embeddings();
        let run_seed = subseed(spec.seed, 999);

        let heuristic = init::heuristic_pair_init(
            &model,
            &embeddings,
            &InitStrategy::heuristic(PairMetric::Cosine, run_seed),
        )
        .unwrap();
        let run = vb::run_vb(
            &model,
            &prior,
            &embeddings,
            heuristic.into_vb_init(),
            None,
            &config,
        )
        .unwrap();
        heuristic_total += conversation_der(&conv, &vb::map_assignment(&run.state));

        let mut randoms: Vec<f64> = (0..10u64)
            .map(|restart| {
                let q = init::random_init(embeddings.len(), 2, subseed(run_seed, restart));
                let run = vb::run_vb(
                    &model,
                    &prior,
                    &embeddings,
                    VbInit::SegmentPosteriors(q),
                    None,
                    &config,
                )
                .unwrap();
                conversation_der(&conv, &vb::map_assignment(&run.state))
            })
            .collect();
        randoms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        median_total += 0.5 * (randoms[4] + randoms[5]);
    }

    let heuristic_mean = heuristic_total / 50.0;
    let median_mean = median_total / 50.0;
    assert!(
        heuristic_mean <= median_mean + 1e-12,
        "heuristic mean DER {heuristic_mean:.4} exceeds random-median mean {median_mean:.4}"
    );
    println!(
        "heuristic init: mean DER {:.2}% vs random-init median mean {:.2}%",
        100.0 * heuristic_mean,
        100.0 * median_mean
    );
}
