//! Pairwise same-speaker scoring with the two-covariance model: the
//! log-likelihood ratio between "same speaker" and "different speakers"
//! for a pair of embeddings.
//!
//! ```bash
//! cargo run --example plda_scoring
//! ```

use vbdiar::plda::{llr_same_speaker, sample_conversation};
use vbdiar::{SpeakerPrior, TwoCovPlda};

fn main() -> vbdiar::Result<()> {
    let model = TwoCovPlda::isotropic(16, 2.0, 1.0)?;
    let prior = SpeakerPrior::uniform(2);

    let mut same = Vec::new();
    let mut different = Vec::new();
    for seed in 0..400u64 {
        let (embeddings, labels) = sample_conversation(&model, &prior, 2, seed)?;
        let llr = llr_same_speaker(&model, &embeddings[0], &embeddings[1])?;
        if labels[0] == labels[1] {
            same.push(llr);
        } else {
            different.push(llr);
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "same-speaker pairs:      {:4} with mean LLR {:+.3}",
        same.len(),
        mean(&same)
    );
    println!(
        "different-speaker pairs: {:4} with mean LLR {:+.3}",
        different.len(),
        mean(&different)
    );

    // a simple threshold at zero already separates the two populations well
    let correct = same.iter().filter(|&&v| v > 0.0).count()
        + different.iter().filter(|&&v| v <= 0.0).count();
    println!(
        "accuracy of the LLR > 0 rule: {:.1}%",
        100.0 * correct as f64 / (same.len() + different.len()) as f64
    );
    Ok(())
}
