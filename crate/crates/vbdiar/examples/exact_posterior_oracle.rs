//! The exact-enumeration machinery used to verify the variational
//! inference: for a small conversation, sums the marginal likelihood over
//! every possible assignment and compares the VB free energy and MAP
//! assignment against the exact answers.
//!
//! ```bash
//! cargo run --example exact_posterior_oracle
//! ```

use nalgebra::{DMatrix, DVector};
use vbdiar::init;
use vbdiar::linalg::log_sum_exp;
use vbdiar::plda::{marginal_loglik_assignment, sample_conversation};
use vbdiar::vb::{self, ConvergenceConfig, VbInit};
use vbdiar::{SpeakerPrior, TwoCovPlda};

fn main() -> vbdiar::Result<()> {
    // D=1 keeps the enumeration readable: 2^6 assignments
    let model = TwoCovPlda::new(
        DVector::from_element(1, 0.0),
        DMatrix::from_element(1, 1, 1.0),   // between precision
        DMatrix::from_element(1, 1, 25.0),  // within precision
    )?;
    let prior = SpeakerPrior::uniform(2);
    let segments = 6;
    let (embeddings, truth) = sample_conversation(&model, &prior, segments, 99)?;
    println!(
        "segments: {:?}",
        embeddings.iter().map(|e| (e[0] * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    println!("true labels: {truth:?}");

    let log_pi = prior.log_pi();
    let mut scored: Vec<(f64, Vec<usize>)> = Vec::new();
    for code in 0..(1usize << segments) {
        let assignment: Vec<usize> = (0..segments).map(|m| (code >> m) & 1).collect();
        let weight: f64 = assignment.iter().map(|&s| log_pi[s]).sum();
        let score = weight + marginal_loglik_assignment(&model, &embeddings, &assignment)?;
        scored.push((score, assignment));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let evidence = log_sum_exp(&scored.iter().map(|(s, _)| *s).collect::<Vec<_>>());
    println!("\nlog evidence (exact sum over {} assignments): {evidence:.4}", scored.len());
    println!("top assignments by joint score:");
    for (score, assignment) in scored.iter().take(3) {
        println!("  {assignment:?}  {score:.4}  posterior {:.3}", (score - evidence).exp());
    }

    let run = vb::run_vb(
        &model,
        &prior,
        &embeddings,
        VbInit::SegmentPosteriors(init::random_init(segments, 2, 1)),
        None,
        &ConvergenceConfig::default(),
    )?;
    let fe = vb::free_energy(&model, &prior, &embeddings, &run.state)?;
    println!("\nVB free energy: {fe:.4} (slack to evidence {:.3e})", evidence - fe);
    println!("VB MAP assignment: {:?}", vb::map_assignment(&run.state));
    println!("exact MAP:         {:?}", scored[0].1);
    Ok(())
}
