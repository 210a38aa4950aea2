//! Compares plain VB against the deterministic-annealing variant on a
//! corpus where one speaker dominates each conversation and short segments
//! carry extra noise, the regime where random initialization is fragile.
//!
//! ```bash
//! cargo run --example deterministic_annealing
//! ```

use vbdiar::der;
use vbdiar::init;
use vbdiar::seed::subseed;
use vbdiar::synth::{self, CorpusSpec, CountDistribution, DurationDistribution};
use vbdiar::vb::{self, AnnealSchedule, ConvergenceConfig, VbInit};
use vbdiar::{SpeakerPrior, TwoCovPlda};

fn main() -> vbdiar::Result<()> {
    let spec = CorpusSpec {
        num_conversations: 200,
        num_speakers_per_conversation: 2,
        dim: 8,
        segments_per_conversation: CountDistribution::Uniform { lo: 20, hi: 60 },
        segment_duration_seconds: DurationDistribution::UniformSeconds { lo: 1.0, hi: 5.0 },
        dominance: 0.8,
        separation: 6.0,
        duration_residual_scaling: true,
        seed: 4000,
    };
    let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0)?;
    let model = synth::generation_model(&spec, &base)?;
    let corpus = synth::generate_corpus(&spec, &base)?;
    let prior = SpeakerPrior::uniform(2);
    let config = ConvergenceConfig::default();
    let schedule = AnnealSchedule::default();
    println!(
        "dominance {:.1}, separation {}, {} conversations; schedule: beta {} x{} -> {}",
        spec.dominance,
        spec.separation,
        corpus.len(),
        schedule.beta_init,
        schedule.factor,
        schedule.beta_max
    );

    let mut plain_sum = 0.0;
    let mut annealed_sum = 0.0;
    let mut plain_sweeps = 0usize;
    let mut annealed_sweeps = 0usize;
    for (index, conversation) in corpus.iter().enumerate() {
        let embeddings = conversation.embeddings();
        let reference = conversation.reference_turns()?;
        let q = init::random_init(embeddings.len(), 2, subseed(3, index as u64));
        for (use_schedule, sum, sweeps) in [
            (false, &mut plain_sum, &mut plain_sweeps),
            (true, &mut annealed_sum, &mut annealed_sweeps),
        ] {
            let run = vb::run_vb(
                &model,
                &prior,
                &embeddings,
                VbInit::SegmentPosteriors(q.clone()),
                use_schedule.then_some(&schedule),
                &config,
            )?;
            let hypothesis = conversation.turns_for_labels(&vb::map_assignment(&run.state))?;
            *sum += der::compute_der(&reference, &hypothesis, 0.25)?.der;
            *sweeps += run.state.iteration;
        }
    }

    let n = corpus.len() as f64;
    println!(
        "plain VB:  mean DER {:.2}%  ({:.1} sweeps/conversation)",
        100.0 * plain_sum / n,
        plain_sweeps as f64 / n
    );
    println!(
        "DA-VB:     mean DER {:.2}%  ({:.1} sweeps/conversation)",
        100.0 * annealed_sum / n,
        annealed_sweeps as f64 / n
    );
    Ok(())
}
