//! Trains a two-covariance PLDA model with EM and checks how well the
//! generating covariances are recovered.
//!
//! ```bash
//! cargo run --example train_plda
//! ```

use vbdiar::linalg::{frobenius_relative_error, Spd};
use vbdiar::plda;
use vbdiar::synth::{generate_plda_training_set, TrainingSetConfig};
use vbdiar::TwoCovPlda;

fn main() -> vbdiar::Result<()> {
    let truth = TwoCovPlda::isotropic(5, 2.0, 0.5)?;
    let config = TrainingSetConfig::new(600, 12, 7);
    let data = generate_plda_training_set(&truth, &config)?;
    println!(
        "training on {} vectors from {} speakers",
        data.len(),
        config.num_speakers
    );

    let outcome = plda::train_em(&data, 12)?;
    println!("log-likelihood trajectory:");
    for (i, ll) in outcome.log_likelihood.iter().enumerate() {
        println!("  after {i:2} iterations: {ll:.3}");
    }

    let between_true = Spd::new(truth.between_precision().clone(), "truth")?.inverse();
    let within_true = Spd::new(truth.within_precision().clone(), "truth")?.inverse();
    let between_est = Spd::new(outcome.model.between_precision().clone(), "est")?.inverse();
    let within_est = Spd::new(outcome.model.within_precision().clone(), "est")?.inverse();
    println!(
        "between-covariance relative error: {:.4}",
        frobenius_relative_error(&between_est, &between_true)
    );
    println!(
        "within-covariance relative error:  {:.4}",
        frobenius_relative_error(&within_est, &within_true)
    );

    let json = outcome.model.to_json()?;
    println!("model JSON is {} bytes; first line: {}", json.len(), json.lines().next().unwrap());
    Ok(())
}
