//! Labeled graph-signal datasets and their train/validation/test splits.

mod cifar;
mod ring;
mod webkb;

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cifar::{
    downscale_2x, image_from_signal, load_cifar10, load_cifar10_with, read_cifar_batch, signal_from_image,
    CifarOptions, CIFAR_RECORD_BYTES,
};
pub use ring::{make_ring_task, min_rotation_distance, reflect, rotate};
pub use webkb::{load_webkb, WebKb, WEBKB_CLASSES};

use crate::error::{invalid, Result};
use crate::nn::Mode;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Splits {
    pub fn get(&self, which: Split) -> &[usize] {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn is_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .copied()
            .collect();
        let len = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == len
    }
}

/// Items are samples in signal mode and vertices in vertex mode. In vertex
/// mode `signals` holds exactly one `N x C` matrix and `labels[v]` is `None`
/// for unlabeled vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mode: Mode,
    pub signals: Vec<Array2<f64>>,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub splits: Splits,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.signals.is_empty() {
            return Err(invalid("dataset has no signals"));
        }
        let (n, c) = self.signals[0].dim();
        if self.signals.iter().any(|s| s.dim() != (n, c)) {
            return Err(invalid("signals differ in shape"));
        }
        let items = match self.mode {
            Mode::Signal => self.signals.len(),
            Mode::Vertex => {
                if self.signals.len() != 1 {
                    return Err(invalid("vertex-mode dataset must hold exactly one signal"));
                }
                n
            }
        };
        if self.labels.len() != items {
            return Err(invalid(format!("{} labels for {items} items", self.labels.len())));
        }
        if self.num_classes < 2 {
            return Err(invalid("need at least 2 classes"));
        }
        if let Some(bad) = self.labels.iter().flatten().find(|&&y| y >= self.num_classes) {
            return Err(invalid(format!("label {bad} out of range")));
        }
        if !self.splits.is_disjoint() {
            return Err(invalid("splits overlap"));
        }
        for which in [Split::Train, Split::Validation, Split::Test] {
            let set = self.splits.get(which);
            if let Some(&i) = set.iter().find(|&&i| i >= items || self.labels[i].is_none()) {
                return Err(invalid(format!("split item {i} is out of range or unlabeled")));
            }
            if self.mode == Mode::Vertex && set.is_empty() {
                return Err(invalid(format!("{which:?} split has no labeled vertices")));
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.signals[0].nrows()
    }

    pub fn channels(&self) -> usize {
        self.signals[0].ncols()
    }

    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, item: usize) -> Option<usize> {
        self.labels[item]
    }

    /// Indices of all labeled items.
    pub fn labeled_items(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i].is_some()).collect()
    }

    /// Rows of every signal-mode sample stacked as `(B * N) x C`.
    pub fn stack(&self, items: &[usize]) -> Array2<f64> {
        let (n, c) = self.signals[0].dim();
        let mut out = Array2::zeros((items.len() * n, c));
        for (b, &i) in items.iter().enumerate() {
            out.slice_mut(ndarray::s![b * n..(b + 1) * n, ..])
                .assign(&self.signals[i]);
        }
        out
    }

    /// Writes the long-format CSV `sample_id,vertex,channel,value` and the
    /// companion `sample_id,label` CSV.
    pub fn to_csv(&self) -> (String, String) {
        let mut values = String::from("sample_id,vertex,channel,value\n");
        for (s, x) in self.signals.iter().enumerate() {
            for ((v, c), val) in x.indexed_iter() {
                let _ = writeln!(values, "{s},{v},{c},{val}");
            }
        }
        let mut labels = String::from("sample_id,label\n");
        for (i, y) in self.labels.iter().enumerate() {
            if let Some(y) = y {
                let _ = writeln!(labels, "{i},{y}");
            }
        }
        (values, labels)
    }

    pub fn signal(&self, i: usize) -> ArrayView2<'_, f64> {
        self.signals[i].view()
    }
}

/// Stratified random splits of the labeled items. Per class, the train and
/// validation counts are `round(ratio * class_size)` and the test set takes
/// the remainder; every set with a positive ratio receives at least one item
/// of every class.
pub fn make_splits(dataset: &Dataset, ratios: [f64; 3], num_splits: usize, seed: u64) -> Result<Vec<Splits>> {
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split ratios must be in [0, 1] and sum to 1, got {ratios:?}")));
    }
    if num_splits == 0 {
        return Err(invalid("need at least one split"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, y) in dataset.labels.iter().enumerate() {
        if let Some(y) = *y {
            by_class[y].push(i);
        }
    }
    let required = ratios.iter().filter(|&&r| r > 0.0).count();
    for (c, items) in by_class.iter().enumerate() {
        if !items.is_empty() && items.len() < required {
            return Err(invalid(format!(
                "class {c} has {} items but {required} non-empty sets are requested",
                items.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_splits);
    for _ in 0..num_splits {
        let mut splits = Splits::default();
        for items in &by_class {
            if items.is_empty() {
                continue;
            }
            let mut items = items.clone();
            items.shuffle(&mut rng);
            let counts = class_counts(items.len(), ratios);
            splits.train.extend_from_slice(&items[..counts[0]]);
            splits.validation.extend_from_slice(&items[counts[0]..counts[0] + counts[1]]);
            splits.test.extend_from_slice(&items[counts[0] + counts[1]..]);
        }
        splits.train.sort_unstable();
        splits.validation.sort_unstable();
        splits.test.sort_unstable();
        out.push(splits);
    }
    Ok(out)
}

fn class_counts(size: usize, ratios: [f64; 3]) -> [usize; 3] {
    let mut counts = [
        (ratios[0] * size as f64).round() as usize,
        (ratios[1] * size as f64).round() as usize,
        0,
    ];
    for i in 0..2 {
        if ratios[i] > 0.0 && counts[i] == 0 {
            counts[i] = 1;
        }
    }
    let min_test = usize::from(ratios[2] > 0.0);
    while counts[0] + counts[1] + min_test > size {
        // shrink the larger of train/validation, keeping at least one each
        let j = if counts[0] >= counts[1] { 0 } else { 1 };
        counts[j] -= 1;
    }
    counts[2] = size - counts[0] - counts[1];
    counts
}
