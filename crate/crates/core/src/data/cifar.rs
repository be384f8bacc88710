//! CIFAR-10 binary batches.
//!
//! Each record is one label byte followed by 3072 pixel bytes: the red, green
//! and blue 32x32 planes, each row-major. Pixel `(r, c)` becomes vertex
//! `r * 32 + c`, with one column per color channel.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use super::{Dataset, Splits};
use crate::error::{invalid, Error, Result};
use crate::nn::Mode;

pub const CIFAR_RECORD_BYTES: usize = 3073;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

/// Parses one batch file into `1024 x 3` signals scaled to `[0, 1]` and labels.
pub fn read_cifar_batch(path: &Path) -> Result<(Vec<Array2<f64>>, Vec<usize>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        offset: 0,
        message: e.to_string(),
    })?;
    parse_records(&bytes, path, None)
}

fn parse_records(bytes: &[u8], path: &Path, limit: Option<usize>) -> Result<(Vec<Array2<f64>>, Vec<usize>)> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        let whole = bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES;
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            offset: whole as u64,
            message: format!(
                "file length {} is not a positive multiple of {CIFAR_RECORD_BYTES}; truncated record",
                bytes.len()
            ),
        });
    }
    let count = (bytes.len() / CIFAR_RECORD_BYTES).min(limit.unwrap_or(usize::MAX));
    let mut signals = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).take(count).enumerate() {
        let label = record[0];
        if label > 9 {
            return Err(Error::CorruptRecord {
                path: path.to_path_buf(),
                offset: (r * CIFAR_RECORD_BYTES) as u64,
                message: format!("label byte {label} is not in 0..=9"),
            });
        }
        let pixels = &record[1..];
        let x = Array2::from_shape_fn((PLANE, 3), |(v, ch)| f64::from(pixels[ch * PLANE + v]) / 255.0);
        signals.push(x);
        labels.push(label as usize);
    }
    Ok((signals, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CifarOptions {
    /// Keep at most this many training images (read in file order).
    pub train_limit: Option<usize>,
    /// Keep at most this many images of the test batch.
    pub eval_limit: Option<usize>,
    /// Average 2x2 blocks, giving 16x16 images.
    pub downscale: bool,
}

/// Loads every training batch and the test batch at full resolution. The
/// training images form the train split, the test batch the validation split.
pub fn load_cifar10(dir: &Path) -> Result<Dataset> {
    load_cifar10_with(dir, CifarOptions::default())
}

pub fn load_cifar10_with(dir: &Path, opts: CifarOptions) -> Result<Dataset> {
    let mut signals = Vec::new();
    let mut labels = Vec::new();
    let train_limit = opts.train_limit.unwrap_or(usize::MAX);
    for name in TRAIN_FILES {
        if labels.len() >= train_limit {
            break;
        }
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::Ingestion {
            path: path.clone(),
            offset: 0,
            message: e.to_string(),
        })?;
        let (s, l) = parse_records(&bytes, &path, Some(train_limit - labels.len()))?;
        signals.extend(s);
        labels.extend(l);
    }
    let n_train = labels.len();
    if opts.eval_limit != Some(0) {
        let path = dir.join(TEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::Ingestion {
            path: path.clone(),
            offset: 0,
            message: e.to_string(),
        })?;
        let (s, l) = parse_records(&bytes, &path, opts.eval_limit)?;
        signals.extend(s);
        labels.extend(l);
    }
    if opts.downscale {
        for s in signals.iter_mut() {
            let img = image_from_signal(s.view(), SIDE, SIDE)?;
            *s = signal_from_image(downscale_2x(img.view())?.view());
        }
    }
    let total = labels.len();
    let dataset = Dataset {
        mode: Mode::Signal,
        signals,
        labels: labels.into_iter().map(Some).collect(),
        num_classes: 10,
        splits: Splits {
            train: (0..n_train).collect(),
            validation: (n_train..total).collect(),
            test: Vec::new(),
        },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Mean of every non-overlapping 2x2 block, per channel: `32x32x3 -> 16x16x3`.
pub fn downscale_2x(image: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
    if image.dim() != (SIDE, SIDE, 3) {
        return Err(invalid(format!("expected a 32x32x3 image, got {:?}", image.dim())));
    }
    let half = SIDE / 2;
    Ok(Array3::from_shape_fn((half, half, 3), |(r, c, ch)| {
        let (r2, c2) = (2 * r, 2 * c);
        (image[[r2, c2, ch]] + image[[r2, c2 + 1, ch]] + image[[r2 + 1, c2, ch]] + image[[r2 + 1, c2 + 1, ch]])
            / 4.0
    }))
}

/// `h x w x C` image to an `(h * w) x C` graph signal.
pub fn signal_from_image(image: ArrayView3<'_, f64>) -> Array2<f64> {
    let (h, w, c) = image.dim();
    Array2::from_shape_fn((h * w, c), |(v, ch)| image[[v / w, v % w, ch]])
}

pub fn image_from_signal(x: ArrayView2<'_, f64>, height: usize, width: usize) -> Result<Array3<f64>> {
    if x.nrows() != height * width {
        return Err(invalid(format!(
            "signal has {} vertices, not {height} x {width}",
            x.nrows()
        )));
    }
    Ok(Array3::from_shape_fn((height, width, x.ncols()), |(r, c, ch)| x[[r * width + c, ch]]))
}
