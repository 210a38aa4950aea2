//! The three-speaker pair-selection heuristic: run a few short
//! three-speaker VB passes, keep the two most distant speaker posteriors,
//! and continue two-speaker VB from them. Compares the cosine and PLDA-LLR
//! metrics against a plain random start.
//!
//! ```bash
//! cargo run --example init_heuristics
//! ```

use vbdiar::der;
use vbdiar::init::{self, InitStrategy, PairMetric};
use vbdiar::synth::{self, CorpusSpec, CountDistribution, DurationDistribution};
use vbdiar::vb::{self, ConvergenceConfig, VbInit};
use vbdiar::{SpeakerPrior, TwoCovPlda};

fn main() -> vbdiar::Result<()> {
    let spec = CorpusSpec {
        num_conversations: 1,
        num_speakers_per_conversation: 2,
        dim: 8,
        segments_per_conversation: CountDistribution::Fixed(40),
        segment_duration_seconds: DurationDistribution::UniformSeconds { lo: 1.0, hi: 5.0 },
        dominance: 0.85,
        separation: 6.0,
        duration_residual_scaling: true,
        seed: 31,
    };
    let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0)?;
    let model = synth::generation_model(&spec, &base)?;
    let conversation = synth::generate_corpus(&spec, &base)?.remove(0);
    let embeddings = conversation.embeddings();
    let reference = conversation.reference_turns()?;
    let prior = SpeakerPrior::uniform(2);
    let config = ConvergenceConfig::default();

    let score = |init: VbInit| -> vbdiar::Result<f64> {
        let run = vb::run_vb(&model, &prior, &embeddings, init, None, &config)?;
        let hypothesis = conversation.turns_for_labels(&vb::map_assignment(&run.state))?;
        Ok(der::compute_der(&reference, &hypothesis, 0.25)?.der)
    };

    let random = score(VbInit::SegmentPosteriors(init::random_init(
        embeddings.len(),
        2,
        9,
    )))?;
    println!("random init:        DER {:.2}%", 100.0 * random);

    for metric in [PairMetric::Cosine, PairMetric::PldaLlr] {
        let strategy = InitStrategy::heuristic(metric, 9);
        let chosen = init::heuristic_pair_init(&model, &embeddings, &strategy)?;
        println!(
            "{metric:?}: attempt {} pair {:?} metric value {:.4} ({} flagged attempts)",
            chosen.attempt,
            chosen.pair,
            chosen.metric_value,
            chosen.degenerate_attempts.len()
        );
        let der = score(chosen.into_vb_init())?;
        println!("  -> DER {:.2}%", 100.0 * der);
    }
    Ok(())
}
