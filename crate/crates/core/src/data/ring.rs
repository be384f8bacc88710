//! Synthetic shift-invariant classification on a ring.
//!
//! Every class waveform is a permutation of one shared, standardized set of
//! values, so first-order statistics (mean, value histogram) cannot separate
//! the classes. Classes come in mirror pairs (`2m + 1` is the reflection of
//! `2m`), so features that do not keep a consistent orientation around the
//! ring cannot separate them either. Circular shifts are the useful
//! transformations to learn.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{make_splits, Dataset, Splits};
use crate::error::{invalid, Result};
use crate::graph::{build_ring_graph, Graph};
use crate::nn::Mode;

/// `out[(i + shift) mod n] = x[i]`.
pub fn rotate(x: &[f64], shift: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for (i, &v) in x.iter().enumerate() {
        out[(i + shift) % n] = v;
    }
    out
}

/// `out[(n - i) mod n] = x[i]`.
pub fn reflect(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| x[(n - i) % n]).collect()
}

/// Smallest Euclidean distance between `a` and any rotation of `b`.
pub fn min_rotation_distance(a: &[f64], b: &[f64]) -> f64 {
    (0..b.len())
        .map(|r| {
            rotate(b, r)
                .iter()
                .zip(a)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Samples are `n x 1` signals: a uniformly random circular shift of their
/// class waveform plus Gaussian noise. The dataset carries a stratified
/// 80/10/10 split; the graph is the self-looped ring.
pub fn make_ring_task(
    n: usize,
    num_classes: usize,
    samples_per_class: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset, Arc<Graph>)> {
    if n < 4 {
        return Err(invalid(format!("ring task needs n >= 4, got {n}")));
    }
    if num_classes < 2 {
        return Err(invalid("ring task needs at least 2 classes"));
    }
    if samples_per_class < 3 {
        return Err(invalid("ring task needs at least 3 samples per class"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(invalid(format!("noise_std must be a finite non-negative number, got {noise_std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = class_waveforms(n, num_classes, &mut rng)?;
    let noise = Normal::new(0.0, noise_std).map_err(|e| invalid(e.to_string()))?;

    let mut signals = Vec::with_capacity(num_classes * samples_per_class);
    let mut labels = Vec::with_capacity(num_classes * samples_per_class);
    for _ in 0..samples_per_class {
        for (c, base) in bases.iter().enumerate() {
            let shift = rng.random_range(0..n);
            let rotated = rotate(base, shift);
            let x = Array2::from_shape_fn((n, 1), |(i, _)| {
                rotated[i] + if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 }
            });
            signals.push(x);
            labels.push(Some(c));
        }
    }
    let mut dataset = Dataset {
        mode: Mode::Signal,
        signals,
        labels,
        num_classes,
        splits: Splits::default(),
    };
    dataset.splits = make_splits(&dataset, [0.8, 0.1, 0.1], 1, seed ^ 0x5eed)?.remove(0);
    dataset.validate()?;
    Ok((dataset, Arc::new(build_ring_graph(n, true)?)))
}

fn standardized<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut values: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
    values
}

fn class_waveforms<R: Rng + ?Sized>(n: usize, num_classes: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let values = standardized(n, rng);
    // Separation threshold between rotation classes, relative to the
    // expected distance sqrt(2n) of two independent permutations.
    let min_sep = 0.5 * (2.0 * n as f64).sqrt();
    let far = |bases: &[Vec<f64>], c: &[f64]| bases.iter().all(|b| min_rotation_distance(b, c) >= min_sep);
    let mut bases: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    let mut attempts = 0;
    while bases.len() < num_classes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(invalid(format!(
                "could not draw {num_classes} rotation-distinct waveforms on {n} vertices"
            )));
        }
        let mut candidate = values.clone();
        candidate.shuffle(rng);
        if (1..n).any(|r| rotate(&candidate, r) == candidate) || !far(&bases, &candidate) {
            continue;
        }
        if bases.len() + 1 == num_classes {
            bases.push(candidate);
            continue;
        }
        let mirrored = reflect(&candidate);
        if min_rotation_distance(&candidate, &mirrored) >= min_sep && far(&bases, &mirrored) {
            bases.push(candidate);
            bases.push(mirrored);
        }
    }
    Ok(bases)
}
