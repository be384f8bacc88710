//! Accuracy and distances between hardened transforms and canonical grid
//! translations, dilations and contractions.

use std::fmt::Write as _;

use crate::data::{Dataset, Split};
use crate::error::{invalid, Result};
use crate::nn::{evaluate_items, Model};
use crate::transform::{soften, EdgeLogits, HardTransforms};

pub const CANONICAL_NAMES: [&str; 9] = [
    "identity",
    "up",
    "down",
    "left",
    "right",
    "h-dilate",
    "h-contract",
    "v-dilate",
    "v-contract",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalTransform {
    pub name: &'static str,
    pub target: Vec<usize>,
}

fn step_away(x: usize, center: usize, len: usize) -> usize {
    use std::cmp::Ordering::*;
    match x.cmp(&center) {
        Less => x.saturating_sub(1),
        Greater => (x + 1).min(len - 1),
        Equal => x,
    }
}

fn step_toward(x: usize, center: usize) -> usize {
    use std::cmp::Ordering::*;
    match x.cmp(&center) {
        Less => x + 1,
        Greater => x - 1,
        Equal => x,
    }
}

/// The nine reference maps on an `height x width` grid (vertex `r * width + c`),
/// in the order of [`CANONICAL_NAMES`]. Moves that would leave the grid stay put.
pub fn canonical_transforms(height: usize, width: usize) -> Result<Vec<CanonicalTransform>> {
    if height < 2 || width < 2 {
        return Err(invalid(format!("grid must be at least 2x2, got {height}x{width}")));
    }
    let (cr, cc) = ((height - 1) / 2, (width - 1) / 2);
    let maps: [&dyn Fn(usize, usize) -> (usize, usize); 9] = [
        &|r, c| (r, c),
        &|r, c| (r.saturating_sub(1), c),
        &|r, c| ((r + 1).min(height - 1), c),
        &|r, c| (r, c.saturating_sub(1)),
        &|r, c| (r, (c + 1).min(width - 1)),
        &|r, c| (r, step_away(c, cc, width)),
        &|r, c| (r, step_toward(c, cc)),
        &|r, c| (step_away(r, cr, height), c),
        &|r, c| (step_toward(r, cr), c),
    ];
    Ok(CANONICAL_NAMES
        .iter()
        .zip(maps)
        .map(|(&name, f)| CanonicalTransform {
            name,
            target: (0..height * width)
                .map(|v| {
                    let (r, c) = f(v / width, v % width);
                    r * width + c
                })
                .collect(),
        })
        .collect())
}

/// Fraction of vertices on which `a` and `b` disagree.
pub fn transform_distance(a: &[usize], b: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let diff = a.iter().zip(b).take(n).filter(|(x, y)| x != y).count();
    diff as f64 / n as f64
}

/// Closest canonical map to `slice`; ties go to the earlier name.
pub fn nearest_canonical(slice: &[usize], height: usize, width: usize) -> Result<(&'static str, f64)> {
    let n = height * width;
    if slice.len() != n {
        return Err(invalid(format!(
            "transform has {} vertices, grid {height}x{width} has {n}",
            slice.len()
        )));
    }
    let mut best = ("identity", f64::INFINITY);
    for c in canonical_transforms(height, width)? {
        let d = transform_distance(slice, &c.target, n);
        if d < best.1 {
            best = (c.name, d);
        }
    }
    Ok(best)
}

/// Accuracy of `model` with `S = soften(params, t)` on one split.
pub fn evaluate_accuracy(
    model: &Model,
    params: &EdgeLogits,
    dataset: &Dataset,
    split: Split,
    t: f64,
) -> Result<f64> {
    let items = dataset.splits.get(split);
    if items.is_empty() {
        return Err(invalid(format!("split {split:?} is empty")));
    }
    let s = soften(params, t)?;
    let stats = evaluate_items(model, &s, dataset, items, 256)?;
    Ok(stats.correct as f64 / stats.count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    pub k: usize,
    pub nearest_name: String,
    pub distance: f64,
}

pub fn slice_reports(hard: &HardTransforms, height: usize, width: usize) -> Result<Vec<SliceReport>> {
    (0..hard.k())
        .map(|k| {
            let (name, distance) = nearest_canonical(hard.slice(k), height, width)?;
            Ok(SliceReport {
                k,
                nearest_name: name.to_string(),
                distance,
            })
        })
        .collect()
}

/// Name of the rotation `i -> (i + r) mod n`: `identity`, `rotate+r` or
/// `rotate-r`, whichever sign gives the shorter way round.
pub fn rotation_name(r: usize, n: usize) -> String {
    let r = r % n.max(1);
    match r {
        0 => "identity".to_string(),
        _ if 2 * r <= n => format!("rotate+{r}"),
        _ => format!("rotate-{}", n - r),
    }
}

/// Closest circular rotation of a ring of `slice.len()` vertices as
/// `(r, distance)`; ties go to the smaller `r`.
pub fn nearest_rotation(slice: &[usize]) -> (usize, f64) {
    let n = slice.len();
    let mut best = (0, f64::INFINITY);
    for r in 0..n {
        let diff = slice.iter().enumerate().filter(|&(i, &j)| j != (i + r) % n).count();
        let d = diff as f64 / n as f64;
        if d < best.1 {
            best = (r, d);
        }
    }
    best
}

/// Per-slice nearest rotation, for transforms learned on a ring.
pub fn ring_slice_reports(hard: &HardTransforms) -> Vec<SliceReport> {
    (0..hard.k())
        .map(|k| {
            let (r, distance) = nearest_rotation(hard.slice(k));
            SliceReport {
                k,
                nearest_name: rotation_name(r, hard.n()),
                distance,
            }
        })
        .collect()
}

/// `k,nearest_name,distance` rows followed by `mean,,<mean distance>`.
pub fn report_csv(reports: &[SliceReport]) -> String {
    let mut out = String::from("k,nearest_name,distance\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{}", r.k, r.nearest_name, r.distance);
    }
    let mean = if reports.is_empty() {
        f64::NAN
    } else {
        reports.iter().map(|r| r.distance).sum::<f64>() / reports.len() as f64
    };
    let _ = writeln!(out, "mean,,{mean}");
    out
}

/// Per-reference distances used by the temperature sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepDistances {
    pub identity: f64,
    pub up: f64,
    pub down: f64,
    /// Closest slice to either h-dilate or v-dilate.
    pub dilation: f64,
    /// Mean over slices of the nearest-canonical distance.
    pub mean: f64,
}

/// For each named reference, the distance of the closest learned slice.
pub fn sweep_distances(hard: &HardTransforms, height: usize, width: usize) -> Result<SweepDistances> {
    if hard.n() != height * width {
        return Err(invalid(format!(
            "transform has {} vertices, grid {height}x{width} has {}",
            hard.n(),
            height * width
        )));
    }
    let canon = canonical_transforms(height, width)?;
    let closest = |names: &[&str]| {
        let mut best = f64::INFINITY;
        for c in canon.iter().filter(|c| names.contains(&c.name)) {
            for s in hard.slices() {
                best = best.min(transform_distance(s, &c.target, hard.n()));
            }
        }
        best
    };
    let reports = slice_reports(hard, height, width)?;
    Ok(SweepDistances {
        identity: closest(&["identity"]),
        up: closest(&["up"]),
        down: closest(&["down"]),
        dilation: closest(&["h-dilate", "v-dilate"]),
        mean: reports.iter().map(|r| r.distance).sum::<f64>() / reports.len().max(1) as f64,
    })
}
