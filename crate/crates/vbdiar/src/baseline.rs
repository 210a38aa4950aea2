//! Comparison system: per-utterance PCA keeping half of the eigenvalue
//! mass, followed by cosine k-means with K = 2.
//!
//! The k-means runs in spherical form: inputs are length-normalized once,
//! centroids are re-normalized after every mean update, and assignments use
//! the cosine distance `1 − cos(v, c)`. Restarts use k-means++-style
//! seeding on per-restart sub-seed streams; the best labeling under the
//! summed cosine-distance objective wins, ties resolved toward the earlier
//! restart.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sample_covariance, sorted_symmetric_eigen};
use crate::seed::{rng_from_seed, subseed};

/// Centers the embeddings and projects them onto the smallest number of
/// leading principal axes whose eigenvalues reach 50% of the total
/// variance. At least one dimension is always kept.
pub fn pca_project_half_energy(embeddings: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if embeddings.len() < 2 {
        return Err(Error::InvalidInput("PCA needs at least 2 segments".into()));
    }
    let (mean, cov) = sample_covariance(embeddings);
    let (eigenvalues, eigenvectors) = sorted_symmetric_eigen(&cov);
    let energies: Vec<f64> = eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "PCA projection impossible: zero total variance (all segments identical)".into(),
        ));
    }
    // smallest d with cumulative energy ≥ 50%; the tiny relative slack
    // absorbs eigensolver roundoff at exact-tie spectra
    let threshold = 0.5 * total * (1.0 - 1e-12);
    let mut dim = energies.len();
    let mut cumulative = 0.0;
    for (k, &energy) in energies.iter().enumerate() {
        cumulative += energy;
        if cumulative >= threshold {
            dim = k + 1;
            break;
        }
    }
    let basis = eigenvectors.columns(0, dim).clone_owned();
    Ok(embeddings
        .iter()
        .map(|x| basis.tr_mul(&(x - &mean)))
        .collect())
}

/// Number of dimensions [`pca_project_half_energy`] keeps for the given
/// eigenvalue spectrum; exposed for diagnostics.
pub fn half_energy_dim(eigenvalues: &[f64]) -> Result<usize> {
    let energies: Vec<f64> = eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("zero total variance".into()));
    }
    let threshold = 0.5 * total * (1.0 - 1e-12);
    let mut cumulative = 0.0;
    for (k, &energy) in energies.iter().enumerate() {
        cumulative += energy;
        if cumulative >= threshold {
            return Ok(k + 1);
        }
    }
    Ok(energies.len())
}

/// Detailed k-means result.
#[derive(Clone, Debug)]
pub struct KmeansOutcome {
    pub labels: Vec<usize>,
    /// Unit-norm centroids, one per cluster.
    pub centroids: Vec<DVector<f64>>,
    /// Σ_m (1 − cos(v_m, c_label(m))) over non-zero inputs.
    pub objective: f64,
}

/// Cosine k-means labels, best of `restarts` seeded runs.
pub fn kmeans_cosine(
    vectors: &[DVector<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<Vec<usize>> {
    Ok(kmeans_cosine_full(vectors, k, seed, restarts)?.labels)
}

/// Like [`kmeans_cosine`] but returns centroids and the objective as well.
pub fn kmeans_cosine_full(
    vectors: &[DVector<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KmeansOutcome> {
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidInput("k and restarts must be positive".into()));
    }
    if vectors.len() < k {
        return Err(Error::InvalidInput(format!(
            "{} vectors cannot form {k} clusters",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch("mixed vector dims in k-means input".into()));
    }

    // normalize once; zero vectors go to cluster 0 and never touch centroids
    let mut unit = Vec::with_capacity(vectors.len());
    let mut zero_mask = vec![false; vectors.len()];
    for (i, v) in vectors.iter().enumerate() {
        let norm = v.norm();
        if norm == 0.0 {
            zero_mask[i] = true;
            unit.push(DVector::zeros(dim));
        } else {
            unit.push(v / norm);
        }
    }
    let active: Vec<usize> = (0..vectors.len()).filter(|&i| !zero_mask[i]).collect();
    if active.is_empty() {
        return Ok(KmeansOutcome {
            labels: vec![0; vectors.len()],
            centroids: vec![DVector::zeros(dim); k],
            objective: 0.0,
        });
    }

    let mut best: Option<KmeansOutcome> = None;
    for restart in 0..restarts {
        let outcome = lloyd_run(&unit, &active, &zero_mask, k, subseed(seed, restart as u64));
        if best.as_ref().is_none_or(|b| outcome.objective < b.objective) {
            best = Some(outcome);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn cosine_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    1.0 - a.dot(b)
}

fn lloyd_run(
    unit: &[DVector<f64>],
    active: &[usize],
    zero_mask: &[bool],
    k: usize,
    seed: u64,
) -> KmeansOutcome {
    let mut rng = rng_from_seed(seed);
    let dim = unit[0].len();
    let mut centroids = plus_plus_seeds(unit, active, k, &mut rng);
    let mut labels = vec![0usize; unit.len()];

    // assignment/update until labels stop changing (with a safety cap:
    // empty-cluster repairs can in principle cycle)
    let max_rounds = 200;
    for _ in 0..max_rounds {
        let mut changed = false;
        for &i in active {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = cosine_distance(&unit[i], centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }

        // repair empty clusters with the worst-fitting point
        loop {
            let mut counts = vec![0usize; k];
            for &i in active {
                counts[labels[i]] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let &worst = active
                .iter()
                .max_by(|&&a, &&b| {
                    cosine_distance(&unit[a], &centroids[labels[a]])
                        .partial_cmp(&cosine_distance(&unit[b], &centroids[labels[b]]))
                        .expect("finite distances")
                        .then(b.cmp(&a)) // deterministic tie-break: lowest index
                })
                .expect("active set is non-empty");
            labels[worst] = empty;
            centroids[empty] = unit[worst].clone();
            changed = true;
        }

        if !changed {
            break;
        }

        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut mean = DVector::zeros(dim);
            let mut count = 0usize;
            for &i in active {
                if labels[i] == c {
                    mean += &unit[i];
                    count += 1;
                }
            }
            if count > 0 {
                let norm = mean.norm();
                if norm > 0.0 {
                    *centroid = mean / norm;
                }
                // a zero mean (perfectly antipodal members) keeps the old centroid
            }
        }
    }

    for (i, &is_zero) in zero_mask.iter().enumerate() {
        if is_zero {
            labels[i] = 0;
        }
    }
    let objective = active
        .iter()
        .map(|&i| cosine_distance(&unit[i], &centroids[labels[i]]))
        .sum();
    KmeansOutcome {
        labels,
        centroids,
        objective,
    }
}

/// k-means++-style seeding under the cosine distance: the first centroid is
/// uniform among the non-zero inputs, later ones are drawn with probability
/// proportional to the squared distance to the nearest chosen centroid.
fn plus_plus_seeds<R: Rng>(
    unit: &[DVector<f64>],
    active: &[usize],
    k: usize,
    rng: &mut R,
) -> Vec<DVector<f64>> {
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    chosen.push(active[rng.random_range(0..active.len())]);
    while chosen.len() < k {
        let weights: Vec<f64> = active
            .iter()
            .map(|&i| {
                let nearest = chosen
                    .iter()
                    .map(|&c| cosine_distance(&unit[i], &unit[c]))
                    .fold(f64::INFINITY, f64::min);
                nearest * nearest
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut pick = active[active.len() - 1];
            for (&i, &w) in active.iter().zip(&weights) {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining points coincide with a centroid; take the first
            // index not yet chosen, falling back to repeats when exhausted
            active
                .iter()
                .copied()
                .find(|i| !chosen.contains(i))
                .unwrap_or(active[0])
        };
        chosen.push(next);
    }
    chosen.iter().map(|&i| unit[i].clone()).collect()
}

/// The full baseline: per-utterance half-energy PCA, then cosine k-means
/// with K = 2 and ten restarts.
pub fn diarize_kmeans_pca(embeddings: &[DVector<f64>], seed: u64) -> Result<Vec<usize>> {
    let projected = pca_project_half_energy(embeddings)?;
    kmeans_cosine(&projected, 2, seed, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds 2D points whose sample covariance is exactly diag(spectrum)/1:
    /// for eigenvalue λ_i the pair ±√(λ_i·n/2)·e_i contributes λ_i after the
    /// population normalization by n = 2·len(spectrum).
    fn exact_spectrum_data(spectrum: &[f64]) -> Vec<DVector<f64>> {
        let dim = spectrum.len();
        let n = (2 * dim) as f64;
        let mut data = Vec::new();
        for (i, &lambda) in spectrum.iter().enumerate() {
            let a = (lambda * n / 2.0).sqrt();
            let mut e = DVector::zeros(dim);
            e[i] = a;
            data.push(e.clone());
            data.push(-e);
        }
        data
    }

    #[test]
    fn half_energy_keeps_one_dim_when_the_top_eigenvalue_is_half() {
        // spectrum (4, 2, 1, 1): 4/8 = 50% met by the first axis
        let data = exact_spectrum_data(&[4.0, 2.0, 1.0, 1.0]);
        let projected = pca_project_half_energy(&data).unwrap();
        assert_eq!(projected[0].len(), 1);
        assert_eq!(half_energy_dim(&[4.0, 2.0, 1.0, 1.0]).unwrap(), 1);
    }

    #[test]
    fn all_variance_on_one_axis_keeps_one_dim() {
        let data = exact_spectrum_data(&[3.0, 0.0, 0.0]);
        let projected = pca_project_half_energy(&data).unwrap();
        assert_eq!(projected[0].len(), 1);
    }

    #[test]
    fn isotropic_spectrum_keeps_half_the_dims() {
        assert_eq!(half_energy_dim(&[1.0; 6]).unwrap(), 3);
        let data = exact_spectrum_data(&[1.0; 6]);
        let projected = pca_project_half_energy(&data).unwrap();
        assert_eq!(projected[0].len(), 3);
    }

    #[test]
    fn identical_segments_are_rejected() {
        let data = vec![DVector::from_row_slice(&[1.0, 1.0]); 4];
        assert!(pca_project_half_energy(&data).is_err());
    }

    #[test]
    fn retained_energy_is_at_least_half_and_minimal() {
        let spectrum = [5.0, 3.0, 2.0, 1.5, 0.5];
        let d = half_energy_dim(&spectrum).unwrap();
        let total: f64 = spectrum.iter().sum();
        let retained: f64 = spectrum[..d].iter().sum();
        assert!(retained / total >= 0.5);
        if d > 1 {
            let without_last: f64 = spectrum[..d - 1].iter().sum();
            assert!(without_last / total < 0.5);
        }
    }

    #[test]
    fn antipodal_clusters_separate_perfectly() {
        let mut vectors = Vec::new();
        for i in 0..10 {
            let jitter = 0.01 * i as f64;
            vectors.push(DVector::from_row_slice(&[1.0, jitter]));
            vectors.push(DVector::from_row_slice(&[-1.0, -jitter]));
        }
        let labels = kmeans_cosine(&vectors, 2, 7, 5).unwrap();
        for pair in vectors.chunks(2).zip(labels.chunks(2)) {
            let (_, l) = pair;
            assert_ne!(l[0], l[1]);
        }
        let first = labels[0];
        for (i, &l) in labels.iter().enumerate() {
            assert_eq!(l, if i % 2 == 0 { first } else { 1 - first });
        }
    }

    #[test]
    fn two_points_two_clusters() {
        let vectors = vec![
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[0.0, 1.0]),
        ];
        let labels = kmeans_cosine(&vectors, 2, 3, 3).unwrap();
        assert_ne!(labels[0], labels[1]);
    }

    #[test]
    fn labels_are_invariant_under_positive_rescaling() {
        let mut vectors = Vec::new();
        let mut rng = crate::seed::rng_from_seed(40);
        for _ in 0..30 {
            let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
            let y: f64 = rng.random::<f64>() * 2.0 - 1.0;
            vectors.push(DVector::from_row_slice(&[x + 2.0, y]));
        }
        let scaled: Vec<DVector<f64>> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + i as f64))
            .collect();
        let a = kmeans_cosine(&vectors, 2, 5, 4).unwrap();
        let b = kmeans_cosine(&scaled, 2, 5, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeded_fixture_is_one_swap_locally_optimal() {
        let mut rng = crate::seed::rng_from_seed(61);
        let mut vectors = Vec::new();
        for i in 0..50 {
            let base = if i % 2 == 0 { [2.0, 0.5] } else { [-1.0, 1.5] };
            let dx: f64 = rng.random::<f64>() - 0.5;
            let dy: f64 = rng.random::<f64>() - 0.5;
            vectors.push(DVector::from_row_slice(&[base[0] + dx, base[1] + dy]));
        }
        let outcome = kmeans_cosine_full(&vectors, 2, 9, 10).unwrap();

        // frozen labels: alternating clusters, matching the construction
        let expected: Vec<usize> = (0..50).map(|i| i % 2).collect();
        assert_eq!(outcome.labels, expected);

        // determinism of the full outcome
        let again = kmeans_cosine_full(&vectors, 2, 9, 10).unwrap();
        assert_eq!(outcome.labels, again.labels);
        assert_eq!(outcome.objective.to_bits(), again.objective.to_bits());

        // no single-point reassignment lowers the objective (fixed centroids)
        let unit: Vec<DVector<f64>> = vectors.iter().map(|v| v.normalize()).collect();
        for (i, u) in unit.iter().enumerate() {
            let current = 1.0 - u.dot(&outcome.centroids[outcome.labels[i]]);
            for c in 0..2 {
                let alternative = 1.0 - u.dot(&outcome.centroids[c]);
                assert!(
                    alternative >= current - 1e-12,
                    "point {i} prefers cluster {c}"
                );
            }
        }
    }

    #[test]
    fn zero_vectors_land_in_cluster_zero() {
        let vectors = vec![
            DVector::from_row_slice(&[0.0, 0.0]),
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[-1.0, 0.1]),
        ];
        let labels = kmeans_cosine(&vectors, 2, 2, 3).unwrap();
        assert_eq!(labels[0], 0);
        assert_ne!(labels[1], labels[2]);
    }

    #[test]
    fn more_clusters_than_points_is_an_error() {
        let vectors = vec![DVector::from_row_slice(&[1.0, 0.0])];
        assert!(kmeans_cosine(&vectors, 2, 1, 1).is_err());
    }
}
