//! Synthetic classification data, client shards with controllable quantity
//! skew and label-noise corruption, and the held-out evaluation/validation
//! split.
//!
//! Two disjoint held-out sets exist per run and serve different purposes:
//! the *evaluation* set is the shared dataset every client scores its local
//! model against (the quality signal), while the *validation* set is used by
//! the server to pick the quality/quantity blend and to rank final models.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Distance scale between class means in feature space.
const CLASS_SEPARATION: f64 = 2.0;

/// Seed stream for per-client label corruption, disjoint from client ids.
const LABEL_NOISE_STREAM: u64 = (1 << 32) | 4;

/// One labeled example: a fixed-dimension feature vector and a class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

/// One client's local dataset plus the label-noise fraction applied to it.
#[derive(Debug, Clone)]
pub struct DatasetShard {
    pub client_id: usize,
    pub examples: Vec<Example>,
    /// Fraction of labels that were resampled, recorded exactly as requested.
    pub noise_fraction: f64,
}

impl DatasetShard {
    pub fn size(&self) -> usize {
        self.examples.len()
    }
}

/// The full data arrangement of a run: client shards plus the two held-out sets.
#[derive(Debug, Clone)]
pub struct DataLayout {
    pub shards: Vec<DatasetShard>,
    pub evaluation_set: Vec<Example>,
    pub validation_set: Vec<Example>,
}

/// Mean of class `c`: vertices of a scaled simplex along the standard basis
/// when the class count fits the dimensionality, otherwise equally spaced
/// points on a circle in the first two feature dimensions.
fn class_mean(class: usize, dims: usize, num_classes: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dims];
    if num_classes <= dims {
        mean[class] = CLASS_SEPARATION;
    } else {
        let angle = 2.0 * std::f64::consts::PI * class as f64 / num_classes as f64;
        mean[0] = CLASS_SEPARATION * angle.cos();
        mean[1] = CLASS_SEPARATION * angle.sin();
    }
    mean
}

/// Draws `n` examples from `num_classes` unit-covariance Gaussian clusters.
///
/// Labels are assigned round-robin so classes are balanced; features are the
/// class mean plus standard normal noise. Deterministic given `seed`.
pub fn generate_synthetic(n: usize, dims: usize, num_classes: usize, seed: u64) -> Result<Vec<Example>> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument {
            what: "num_classes",
            value: num_classes as f64,
        });
    }
    if dims < 2 {
        return Err(Error::InvalidArgument {
            what: "dims",
            value: dims as f64,
        });
    }
    if n < num_classes {
        return Err(Error::InvalidArgument {
            what: "n",
            value: n as f64,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| class_mean(c, dims, num_classes))
        .collect();
    let examples = (0..n)
        .map(|i| {
            let label = i % num_classes;
            let features = means[label]
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect();
            Example { features, label }
        })
        .collect();
    Ok(examples)
}

/// Splits `data` into disjoint shards of exactly the requested sizes.
///
/// Assignment is a seeded shuffle followed by consecutive slices, so the
/// result is deterministic and shards never overlap. Client ids are the
/// positions in `sizes`.
pub fn partition(data: &[Example], sizes: &[usize], seed: u64) -> Result<Vec<DatasetShard>> {
    let requested: usize = sizes.iter().sum();
    if requested > data.len() {
        return Err(Error::Oversubscribed {
            requested,
            available: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);

    let mut shards = Vec::with_capacity(sizes.len());
    let mut cursor = 0;
    for (client_id, &size) in sizes.iter().enumerate() {
        let examples = order[cursor..cursor + size]
            .iter()
            .map(|&i| data[i].clone())
            .collect();
        cursor += size;
        shards.push(DatasetShard {
            client_id,
            examples,
            noise_fraction: 0.0,
        });
    }
    Ok(shards)
}

/// Resamples the labels of exactly `round(fraction * size)` examples,
/// uniformly over the other `num_classes - 1` classes, so every touched
/// label changes. Deterministic given `seed`.
pub fn corrupt_labels(
    shard: &DatasetShard,
    fraction: f64,
    num_classes: usize,
    seed: u64,
) -> Result<DatasetShard> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument {
            what: "fraction",
            value: fraction,
        });
    }
    if num_classes < 2 {
        return Err(Error::InvalidArgument {
            what: "num_classes",
            value: num_classes as f64,
        });
    }
    let mut examples = shard.examples.clone();
    let count = (fraction * examples.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, examples.len(), count);
    for idx in chosen {
        let old = examples[idx].label;
        let draw = rng.random_range(0..num_classes - 1);
        examples[idx].label = if draw >= old { draw + 1 } else { draw };
    }
    Ok(DatasetShard {
        client_id: shard.client_id,
        examples,
        noise_fraction: fraction,
    })
}

/// Builds the full run layout: client shards (with per-client label noise
/// applied) plus the shared evaluation and validation sets, all pairwise
/// disjoint.
pub fn build_layout(
    pool: &[Example],
    client_sizes: &[usize],
    noise_fractions: &[f64],
    num_classes: usize,
    eval_size: usize,
    validation_size: usize,
    seed: u64,
) -> Result<DataLayout> {
    if client_sizes.is_empty() {
        return Err(Error::EmptyInput("client_sizes"));
    }
    if client_sizes.len() != noise_fractions.len() {
        return Err(Error::LengthMismatch {
            left: client_sizes.len(),
            right: noise_fractions.len(),
        });
    }
    if eval_size == 0 || validation_size == 0 {
        return Err(Error::EmptyInput("evaluation/validation set"));
    }
    let mut sizes = client_sizes.to_vec();
    sizes.push(eval_size);
    sizes.push(validation_size);
    let mut parts = partition(pool, &sizes, seed)?;

    let validation_set = parts.pop().expect("validation slice").examples;
    let evaluation_set = parts.pop().expect("evaluation slice").examples;
    let shards = parts
        .into_iter()
        .zip(noise_fractions)
        .map(|(shard, &fraction)| {
            let shard_seed =
                crate::learner::derive_seed(seed, LABEL_NOISE_STREAM, shard.client_id as u64);
            corrupt_labels(&shard, fraction, num_classes, shard_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DataLayout {
        shards,
        evaluation_set,
        validation_set,
    })
}

/// Loads examples from a CSV file with a required header row: feature
/// columns first, one integer label column last.
pub fn load_csv(path: &Path) -> Result<Vec<Example>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let mut examples = Vec::new();
    let mut dims = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        if record.len() < 2 {
            return Err(Error::Dataset(format!(
                "{}: row {} has {} columns, need at least 2",
                path.display(),
                row + 2,
                record.len()
            )));
        }
        let d = record.len() - 1;
        match dims {
            None => dims = Some(d),
            Some(expect) if expect != d => {
                return Err(Error::Dataset(format!(
                    "{}: row {} has {d} feature columns, expected {expect}",
                    path.display(),
                    row + 2
                )))
            }
            _ => {}
        }
        let features = record
            .iter()
            .take(d)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Dataset(format!("{}: row {}: {e}", path.display(), row + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = record[d]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Dataset(format!("{}: row {}: {e}", path.display(), row + 2)))?;
        examples.push(Example { features, label });
    }
    if examples.is_empty() {
        return Err(Error::Dataset(format!("{}: no data rows", path.display())));
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Identity key for disjointness checks: the exact bit pattern of the
    /// feature vector (features are continuous, so collisions mean identity).
    fn feature_key(e: &Example) -> Vec<u64> {
        e.features.iter().map(|f| f.to_bits()).collect()
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate_synthetic(100, 2, 2, 7).unwrap();
        let b = generate_synthetic(100, 2, 2, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_shape_and_labels() {
        let data = generate_synthetic(100, 2, 2, 3).unwrap();
        assert_eq!(data.len(), 100);
        assert!(data.iter().all(|e| e.label < 2 && e.features.len() == 2));
    }

    #[test]
    fn class_means_are_separated() {
        // Oracle: empirical per-class means from the generated data.
        let data = generate_synthetic(2000, 2, 2, 11).unwrap();
        let mut sums = [vec![0.0; 2], vec![0.0; 2]];
        let mut counts = [0usize; 2];
        for e in &data {
            for (s, f) in sums[e.label].iter_mut().zip(&e.features) {
                *s += f;
            }
            counts[e.label] += 1;
        }
        let mean0: Vec<f64> = sums[0].iter().map(|s| s / counts[0] as f64).collect();
        let mean1: Vec<f64> = sums[1].iter().map(|s| s / counts[1] as f64).collect();
        let dist: f64 = mean0
            .iter()
            .zip(&mean1)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist >= 1.0, "class means only {dist} apart");
    }

    #[test]
    fn generate_rejects_bad_counts() {
        assert!(generate_synthetic(1, 2, 2, 0).is_err());
        assert!(generate_synthetic(10, 1, 2, 0).is_err());
        assert!(generate_synthetic(10, 2, 1, 0).is_err());
    }

    #[test]
    fn partition_four_equal_shards() {
        let data = generate_synthetic(100, 2, 2, 1).unwrap();
        let shards = partition(&data, &[25, 25, 25, 25], 9).unwrap();
        assert_eq!(shards.len(), 4);
        assert!(shards.iter().all(|s| s.size() == 25));
        let mut seen = HashSet::new();
        for s in &shards {
            for e in &s.examples {
                assert!(seen.insert(feature_key(e)), "duplicate example across shards");
            }
        }
    }

    #[test]
    fn partition_single_shard_is_permutation() {
        let data = generate_synthetic(40, 2, 2, 2).unwrap();
        let shards = partition(&data, &[40], 5).unwrap();
        let orig: HashSet<Vec<u64>> = data.iter().map(feature_key).collect();
        let got: HashSet<Vec<u64>> = shards[0].examples.iter().map(feature_key).collect();
        assert_eq!(orig, got);
    }

    #[test]
    fn partition_disjoint_unequal_sizes() {
        let data = generate_synthetic(100, 2, 2, 3).unwrap();
        let shards = partition(&data, &[10, 50], 4).unwrap();
        assert_eq!(shards[0].size(), 10);
        assert_eq!(shards[1].size(), 50);
        let a: HashSet<Vec<u64>> = shards[0].examples.iter().map(feature_key).collect();
        let b: HashSet<Vec<u64>> = shards[1].examples.iter().map(feature_key).collect();
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn partition_rejects_oversubscription() {
        let data = generate_synthetic(10, 2, 2, 0).unwrap();
        let err = partition(&data, &[8, 8], 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("16") && msg.contains("10"), "got: {msg}");
    }

    #[test]
    fn corrupt_zero_fraction_is_identity() {
        let data = generate_synthetic(50, 2, 3, 1).unwrap();
        let shard = partition(&data, &[50], 1).unwrap().remove(0);
        let out = corrupt_labels(&shard, 0.0, 3, 99).unwrap();
        assert_eq!(out.examples, shard.examples);
        assert_eq!(out.noise_fraction, 0.0);
    }

    #[test]
    fn corrupt_full_fraction_binary_flips_everything() {
        let data = generate_synthetic(30, 2, 2, 2).unwrap();
        let shard = partition(&data, &[30], 2).unwrap().remove(0);
        let out = corrupt_labels(&shard, 1.0, 2, 7).unwrap();
        for (orig, got) in shard.examples.iter().zip(&out.examples) {
            assert_eq!(got.label, 1 - orig.label);
        }
    }

    #[test]
    fn corrupt_flips_exactly_the_rounded_count() {
        let data = generate_synthetic(50, 2, 4, 5).unwrap();
        let shard = partition(&data, &[50], 5).unwrap().remove(0);
        let out = corrupt_labels(&shard, 0.4, 4, 13).unwrap();
        let differing = shard
            .examples
            .iter()
            .zip(&out.examples)
            .filter(|(a, b)| a.label != b.label)
            .count();
        assert_eq!(differing, 20);
        assert_eq!(out.noise_fraction, 0.4);
    }

    #[test]
    fn corrupt_is_deterministic() {
        let data = generate_synthetic(50, 2, 3, 5).unwrap();
        let shard = partition(&data, &[50], 5).unwrap().remove(0);
        let a = corrupt_labels(&shard, 0.5, 3, 21).unwrap();
        let b = corrupt_labels(&shard, 0.5, 3, 21).unwrap();
        assert_eq!(a.examples, b.examples);
    }

    #[test]
    fn layout_sets_are_pairwise_disjoint() {
        let pool = generate_synthetic(500, 2, 3, 17).unwrap();
        let layout =
            build_layout(&pool, &[100, 150], &[0.0, 0.3], 3, 100, 100, 17).unwrap();
        assert_eq!(layout.shards.len(), 2);
        assert_eq!(layout.evaluation_set.len(), 100);
        assert_eq!(layout.validation_set.len(), 100);
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let mut check = |examples: &[Example]| {
            for e in examples {
                assert!(seen.insert(feature_key(e)), "example appears twice in layout");
            }
        };
        for s in &layout.shards {
            check(&s.examples);
        }
        check(&layout.evaluation_set);
        check(&layout.validation_set);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "x0,x1,label\n0.5,-1.25,0\n2.0,3.5,1\n").unwrap();
        let examples = load_csv(&path).unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(examples[0].features, vec![0.5, -1.25]);
        assert_eq!(examples[0].label, 0);
        assert_eq!(examples[1].label, 1);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "x0,x1,label\n0.5,1.0,0\n1.0,1\n").unwrap();
        assert!(load_csv(&path).is_err());
    }
}
