//! Generates a synthetic two-speaker corpus and inspects its ground truth.
//!
//! ```bash
//! cargo run --example generate_corpus
//! ```

use vbdiar::synth::{self, CorpusSpec, CountDistribution, DurationDistribution};
use vbdiar::TwoCovPlda;

fn main() -> vbdiar::Result<()> {
    let spec = CorpusSpec {
        num_conversations: 5,
        num_speakers_per_conversation: 2,
        dim: 8,
        segments_per_conversation: CountDistribution::Uniform { lo: 15, hi: 30 },
        segment_duration_seconds: DurationDistribution::UniformSeconds { lo: 1.0, hi: 5.0 },
        dominance: 0.7,
        separation: 8.0,
        duration_residual_scaling: false,
        seed: 42,
    };
    let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0)?;
    let corpus = synth::generate_corpus(&spec, &base)?;

    println!("generated {} conversations (dim {})", corpus.len(), spec.dim);
    for conv in &corpus {
        let total: f64 = conv.segments.iter().map(|s| s.end - s.start).sum();
        let dominant: f64 = conv
            .segments
            .iter()
            .filter(|s| s.speaker == Some(0))
            .map(|s| s.end - s.start)
            .sum();
        let turns = conv.reference_turns()?;
        println!(
            "  {}: {:3} segments, {:6.1} s, speaker-0 share {:.2}, {} reference turns",
            conv.recording_id,
            conv.segments.len(),
            total,
            dominant / total,
            turns.turns().len(),
        );
    }

    // the same corpus can be written to disk in the layout the CLI consumes
    let dir = std::env::temp_dir().join("vbdiar-example-corpus");
    let _ = std::fs::remove_dir_all(&dir);
    let model = synth::generation_model(&spec, &base)?;
    synth::write_corpus(&dir, &spec, &model, &corpus, None)?;
    println!("wrote the corpus to {}", dir.display());
    Ok(())
}
