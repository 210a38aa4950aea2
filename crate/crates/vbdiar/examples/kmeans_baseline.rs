//! The comparison system: per-utterance PCA keeping 50% of the eigenvalue
//! mass, then cosine k-means. Shows where it holds up against the
//! model-based method and where it falls behind.
//!
//! ```bash
//! cargo run --example kmeans_baseline
//! ```

use vbdiar::baseline;
use vbdiar::der;
use vbdiar::init;
use vbdiar::seed::subseed;
use vbdiar::synth::{self, CorpusSpec};
use vbdiar::vb::{self, AnnealSchedule, ConvergenceConfig, VbInit};
use vbdiar::{SpeakerPrior, TwoCovPlda};

fn mean_ders(spec: &CorpusSpec) -> vbdiar::Result<(f64, f64)> {
    let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0)?;
    let model = synth::generation_model(spec, &base)?;
    let corpus = synth::generate_corpus(spec, &base)?;
    let prior = SpeakerPrior::uniform(2);
    let config = ConvergenceConfig::default();
    let schedule = AnnealSchedule::default();

    let mut km = 0.0;
    let mut da = 0.0;
    for (index, conversation) in corpus.iter().enumerate() {
        let embeddings = conversation.embeddings();
        let reference = conversation.reference_turns()?;
        let seed = subseed(17, index as u64);

        let labels = baseline::diarize_kmeans_pca(&embeddings, seed)?;
        let hypothesis = conversation.turns_for_labels(&labels)?;
        km += der::compute_der(&reference, &hypothesis, 0.25)?.der;

        let run = vb::run_vb(
            &model,
            &prior,
            &embeddings,
            VbInit::SegmentPosteriors(init::random_init(embeddings.len(), 2, seed)),
            Some(&schedule),
            &config,
        )?;
        let hypothesis = conversation.turns_for_labels(&vb::map_assignment(&run.state))?;
        da += der::compute_der(&reference, &hypothesis, 0.25)?.der;
    }
    let n = corpus.len() as f64;
    Ok((km / n, da / n))
}

fn main() -> vbdiar::Result<()> {
    // how many PCA dimensions does 50% of the energy need?
    let mut spec = CorpusSpec::new(1, 8, 3);
    spec.separation = 10.0;
    let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0)?;
    let conversation = synth::generate_corpus(&spec, &base)?.remove(0);
    let projected = baseline::pca_project_half_energy(&conversation.embeddings())?;
    println!(
        "half-energy PCA keeps {} of {} dims on a separation-10 conversation",
        projected[0].len(),
        spec.dim
    );

    for separation in [10.0, 1.0] {
        let mut spec = CorpusSpec::new(200, 8, 4000);
        spec.separation = separation;
        let (km, da) = mean_ders(&spec)?;
        println!(
            "separation {separation:>4}: KM-PCA mean DER {:.2}%,  DA-VB mean DER {:.2}%",
            100.0 * km,
            100.0 * da
        );
    }
    Ok(())
}
