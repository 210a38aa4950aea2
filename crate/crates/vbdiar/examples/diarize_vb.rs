//! Diarizes one synthetic conversation with plain VB and prints the
//! per-sweep trace and the resulting DER.
//!
//! ```bash
//! cargo run --example diarize_vb
//! ```

use vbdiar::der;
use vbdiar::init;
use vbdiar::synth::{self, CorpusSpec};
use vbdiar::vb::{self, ConvergenceConfig, VbInit};
use vbdiar::{SpeakerPrior, TwoCovPlda};

fn main() -> vbdiar::Result<()> {
    let mut spec = CorpusSpec::new(1, 8, 11);
    spec.separation = 8.0;
    let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0)?;
    let model = synth::generation_model(&spec, &base)?;
    let conversation = synth::generate_corpus(&spec, &base)?.remove(0);
    let embeddings = conversation.embeddings();
    println!(
        "conversation {} with {} segments",
        conversation.recording_id,
        embeddings.len()
    );

    let prior = SpeakerPrior::uniform(2);
    let run = vb::run_vb(
        &model,
        &prior,
        &embeddings,
        VbInit::SegmentPosteriors(init::random_init(embeddings.len(), 2, 5)),
        None,
        &ConvergenceConfig::default(),
    )?;

    println!("sweep  beta   free energy      max |dq|");
    for entry in &run.trace {
        println!(
            "{:5}  {:.2}  {:13.4}  {:12.3e}",
            entry.iteration, entry.beta, entry.free_energy, entry.max_q_delta
        );
    }
    println!("converged: {} after {} sweeps", run.converged, run.state.iteration);

    let labels = vb::map_assignment(&run.state);
    let reference = conversation.reference_turns()?;
    let hypothesis = conversation.turns_for_labels(&labels)?;
    let report = der::compute_der(&reference, &hypothesis, 0.25)?;
    println!(
        "DER {:.2}% (scored {:.1} s, speaker error {:.2} s)",
        100.0 * report.der,
        report.scored_time,
        report.speaker_error_time
    );
    Ok(())
}
