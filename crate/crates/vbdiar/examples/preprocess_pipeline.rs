//! Fits the embedding front-end (LDA projection, whitening, length
//! normalization) on labelled vectors and verifies its contracts.
//!
//! ```bash
//! cargo run --example preprocess_pipeline
//! ```

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use vbdiar::linalg::sample_covariance;
use vbdiar::preprocess::ProjectionPipeline;
use vbdiar::seed::rng_from_seed;

fn main() -> vbdiar::Result<()> {
    // three classes in 6 dimensions with anisotropic within-class noise
    let mut rng = rng_from_seed(19);
    let mut data: Vec<(String, DVector<f64>)> = Vec::new();
    for i in 0..300 {
        let class = i % 3;
        let mut mean = DVector::zeros(6);
        mean[class] = 5.0;
        let noise = DVector::from_fn(6, |d, _| {
            let z: f64 = rng.sample(StandardNormal);
            if d < 2 { 2.0 * z } else { 0.7 * z }
        });
        data.push((format!("class{class}"), mean + noise));
    }

    let pipeline = ProjectionPipeline::fit(&data, 2, true)?;
    println!(
        "fitted pipeline: {} -> {} dims, length_normalize = {}",
        pipeline.input_dim(),
        pipeline.output_dim(),
        pipeline.length_normalize
    );

    // without length normalization the fitting sample is exactly whitened
    let linear = ProjectionPipeline::new(pipeline.lda.clone(), pipeline.whitener.clone(), false)?;
    let projected: Vec<DVector<f64>> = data
        .iter()
        .map(|(_, x)| linear.apply(x))
        .collect::<vbdiar::Result<_>>()?;
    let (mean, cov) = sample_covariance(&projected);
    println!("projected sample mean magnitude: {:.2e}", mean.abs().max());
    println!("projected sample covariance:\n{:.6}", cov);

    let out = pipeline.apply(&data[0].1)?;
    println!("normalized output: {:.4?} (norm {:.12})", out.as_slice(), out.norm());

    let json = pipeline.to_json()?;
    let reloaded = ProjectionPipeline::from_json(&json)?;
    assert_eq!(pipeline, reloaded);
    println!("pipeline JSON round-trips ({} bytes)", json.len());
    Ok(())
}
