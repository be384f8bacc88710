//! Subcommand implementations. Each returns what it wrote so callers and
//! tests can inspect the run without re-reading files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gsl_core::data::{load_cifar10_with, load_webkb, make_ring_task, make_splits, CifarOptions, Dataset, Split};
use gsl_core::eval::{evaluate_accuracy, report_csv, ring_slice_reports, slice_reports, sweep_distances, SliceReport};
use gsl_core::nn::{train, Checkpoint, TrainOutput, TrainRecord};
use gsl_core::viz::{arrow_field_svg, read_ppm, translated_image_ppm};
use gsl_core::{build_grid_graph, build_knn_covariance_graph, build_ring_graph, harden, Graph, HardTransforms};
use ndarray::Array2;
use rayon::prelude::*;

use crate::config::{DatasetKind, GraphKind, RunConfig};
use crate::error::{io_err, CliError};

/// Reference set the learned slices are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Grid { height: usize, width: usize },
    Ring,
}

pub struct Prepared {
    pub dataset: Dataset,
    pub graph: Arc<Graph>,
    pub reference: Option<Reference>,
}

fn require_path<'a>(p: &'a Option<PathBuf>, key: &str, dataset: DatasetKind) -> Result<&'a Path, CliError> {
    let p = p
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("dataset {dataset} needs {key} to be set")))?;
    if !p.exists() {
        return Err(CliError::Config(format!("{key}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn read_edge_list(path: &Path, n: usize, self_loops: bool) -> Result<Graph, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read edge list {}: {e}", path.display())))?;
    let g = Graph::from_edge_list(&text, Some(n))?;
    if !self_loops {
        return Ok(g);
    }
    let edges = (0..n).flat_map(|i| g.neighbors(i).iter().map(move |&j| (i, j)));
    Ok(Graph::from_edges(n, edges.collect::<Vec<_>>(), true)?)
}

/// Per-vertex channel means of the training signals, one row per sample.
fn covariance_samples(dataset: &Dataset) -> Array2<f64> {
    let items = &dataset.splits.train;
    let n = dataset.num_vertices();
    let mut m = Array2::zeros((items.len(), n));
    for (r, &i) in items.iter().enumerate() {
        let x = dataset.signal(i);
        for v in 0..n {
            m[[r, v]] = x.row(v).mean().unwrap_or(0.0);
        }
    }
    m
}

fn square_side(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

/// Loads or generates the dataset and builds the selected graph.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let (dataset, natural) = match cfg.dataset {
        DatasetKind::Ring => {
            let (d, g) = make_ring_task(cfg.ring_n, cfg.ring_classes, cfg.ring_samples, cfg.ring_noise, cfg.train.seed)?;
            (d, Some(g))
        }
        DatasetKind::Cifar10 => {
            let dir = require_path(&cfg.data_dir, "data_dir", cfg.dataset)?;
            let opts = CifarOptions {
                train_limit: cfg.train_limit,
                eval_limit: cfg.eval_limit,
                downscale: cfg.downscale,
            };
            (load_cifar10_with(dir, opts)?, None)
        }
        DatasetKind::Webkb => {
            let content = require_path(&cfg.webkb_content, "webkb_content", cfg.dataset)?;
            let cites = require_path(&cfg.webkb_cites, "webkb_cites", cfg.dataset)?;
            let mut w = load_webkb(content, cites)?;
            w.dataset.splits = make_splits(&w.dataset, [0.6, 0.2, 0.2], 1, cfg.train.seed)?.remove(0);
            (w.dataset, Some(w.graph))
        }
    };
    let n = dataset.num_vertices();
    let ring_or_grid = |kind: &GraphKind| -> Result<(Arc<Graph>, Option<Reference>), CliError> {
        match kind {
            GraphKind::Ring => Ok((Arc::new(build_ring_graph(n, cfg.self_loops)?), Some(Reference::Ring))),
            GraphKind::Grid => {
                let side = square_side(n).ok_or_else(|| {
                    CliError::Config(format!("grid graph needs a square number of vertices, got {n}"))
                })?;
                let g = build_grid_graph(side, side, cfg.self_loops)?;
                Ok((Arc::new(g), Some(Reference::Grid { height: side, width: side })))
            }
            _ => unreachable!(),
        }
    };
    let (graph, reference) = match (&cfg.graph, cfg.dataset) {
        (GraphKind::Auto, DatasetKind::Ring) if cfg.self_loops => (natural.expect("ring task graph"), Some(Reference::Ring)),
        (GraphKind::Auto, DatasetKind::Ring) => ring_or_grid(&GraphKind::Ring)?,
        (GraphKind::Auto, DatasetKind::Cifar10) => ring_or_grid(&GraphKind::Grid)?,
        (GraphKind::Auto, DatasetKind::Webkb) => (natural.expect("citation graph"), None),
        (GraphKind::Ring | GraphKind::Grid | GraphKind::KnnCovariance, DatasetKind::Webkb) => {
            return Err(CliError::Config(
                "webkb uses its citation graph; set graph = auto or an edge-list file".into(),
            ))
        }
        (kind @ (GraphKind::Ring | GraphKind::Grid), _) => ring_or_grid(kind)?,
        (GraphKind::KnnCovariance, _) => {
            let g = build_knn_covariance_graph(covariance_samples(&dataset).view(), cfg.knn)?;
            (Arc::new(g), None)
        }
        (GraphKind::EdgeList(p), _) => {
            if !p.exists() {
                return Err(CliError::Config(format!("graph: {} does not exist", p.display())));
            }
            (Arc::new(read_edge_list(p, n, cfg.self_loops)?), None)
        }
    };
    Ok(Prepared {
        dataset,
        graph,
        reference,
    })
}

pub fn reports_for(hard: &HardTransforms, reference: Reference) -> Result<Vec<SliceReport>, CliError> {
    Ok(match reference {
        Reference::Grid { height, width } => slice_reports(hard, height, width)?,
        Reference::Ring => ring_slice_reports(hard),
    })
}

pub fn metrics_csv(history: &[TrainRecord]) -> String {
    let mut out = String::from("step,temperature,train_loss,train_acc,val_acc\n");
    for r in history {
        let val = r.val_acc.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{val}", r.step, r.temperature, r.train_loss, r.train_acc);
    }
    out
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(format!("cannot write {}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(format!("cannot create {}", dir.display())))
}

pub struct TrainSummary {
    pub output: TrainOutput,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub reports: Option<Vec<SliceReport>>,
    pub written: Vec<PathBuf>,
}

fn split_accuracy(out: &TrainOutput, dataset: &Dataset, split: Split, t: f64) -> Result<Option<f64>, CliError> {
    if dataset.splits.get(split).is_empty() {
        return Ok(None);
    }
    Ok(Some(evaluate_accuracy(&out.model, &out.logits, dataset, split, t)?))
}

/// Trains once and writes checkpoint, metrics, hardened transforms, the
/// resolved config and, when a reference set exists, the eval report.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    cfg.train.validate()?;
    let prep = prepare(cfg)?;
    create_dir(&cfg.out_dir)?;
    let output = train(&prep.dataset, Arc::clone(&prep.graph), &cfg.train)?;
    let t = output.schedule.t_final;
    let val_acc = split_accuracy(&output, &prep.dataset, Split::Validation, t)?;
    let test_acc = split_accuracy(&output, &prep.dataset, Split::Test, t)?;

    let dir = &cfg.out_dir;
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: String| -> Result<(), CliError> {
        let p = dir.join(name);
        write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    let ck = Checkpoint::new(
        &prep.graph,
        &output.model,
        &output.logits,
        &output.optimizer,
        output.steps_done,
        output.schedule,
    );
    emit("checkpoint.json", ck.to_json()?)?;
    emit("metrics.csv", metrics_csv(&output.history))?;
    emit("transforms.json", output.hard.to_json()?)?;
    emit("config.txt", cfg.to_text())?;
    let reports = match prep.reference {
        Some(r) => {
            let reps = reports_for(&output.hard, r)?;
            emit("eval_report.csv", report_csv(&reps))?;
            Some(reps)
        }
        None => None,
    };
    Ok(TrainSummary {
        output,
        val_acc,
        test_acc,
        reports,
        written,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub t_init: f64,
    pub t_final: f64,
    pub accuracy: f64,
    pub distance_identity: Option<f64>,
    pub distance_up: Option<f64>,
    pub distance_down: Option<f64>,
    pub distance_dilation: Option<f64>,
    pub distance_mean: Option<f64>,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "t_init,t_final,accuracy,distance_identity,distance_up,distance_down,distance_dilation,distance_mean\n",
    );
    let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t_init,
            r.t_final,
            r.accuracy,
            f(r.distance_identity),
            f(r.distance_up),
            f(r.distance_down),
            f(r.distance_dilation),
            f(r.distance_mean)
        );
    }
    out
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

/// One independent training per grid point and repeat, run in parallel.
/// Repeat `r` uses seed `seed + r`; rows hold the mean over repeats. The
/// dataset is shared; with the ring task it is generated from the base seed.
/// Distances are reported for grid graphs only.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let grid = cfg.sweep_grid()?;
    cfg.train.validate()?;
    for &(a, b) in &grid {
        let mut t = cfg.train.clone();
        (t.t_init, t.t_final) = (a, b);
        t.validate()?;
    }
    let prep = prepare(cfg)?;
    create_dir(&cfg.out_dir)?;
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|g| (0..cfg.repeats as u64).map(move |r| (g, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(g, r)| -> Result<(f64, Option<gsl_core::eval::SweepDistances>), CliError> {
            let mut t = cfg.train.clone();
            (t.t_init, t.t_final) = grid[g];
            t.seed = cfg.train.seed.wrapping_add(r);
            let out = train(&prep.dataset, Arc::clone(&prep.graph), &t)?;
            let split = if prep.dataset.splits.validation.is_empty() { Split::Test } else { Split::Validation };
            let acc = evaluate_accuracy(&out.model, &out.logits, &prep.dataset, split, t.t_final)?;
            let dist = match prep.reference {
                Some(Reference::Grid { height, width }) => Some(sweep_distances(&out.hard, height, width)?),
                _ => None,
            };
            Ok((acc, dist))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reps = cfg.repeats;
    let rows: Vec<SweepRow> = grid
        .iter()
        .enumerate()
        .map(|(g, &(t_init, t_final))| {
            let chunk = &runs[g * reps..(g + 1) * reps];
            let d = |f: fn(&gsl_core::eval::SweepDistances) -> f64| {
                chunk
                    .iter()
                    .map(|(_, d)| d.as_ref().map(f))
                    .collect::<Option<Vec<_>>>()
                    .map(|v| mean(v.into_iter()))
            };
            SweepRow {
                t_init,
                t_final,
                accuracy: mean(chunk.iter().map(|(a, _)| *a)),
                distance_identity: d(|s| s.identity),
                distance_up: d(|s| s.up),
                distance_down: d(|s| s.down),
                distance_dilation: d(|s| s.dilation),
                distance_mean: d(|s| s.mean),
            }
        })
        .collect();
    write(&cfg.out_dir.join("sweep.csv"), sweep_csv(&rows))?;
    Ok(rows)
}

fn read_transforms(path: &Path) -> Result<HardTransforms, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read transforms {}: {e}", path.display())))?;
    HardTransforms::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes `T{k}.svg` for every slice and, given an image, `T{k}.ppm`.
pub fn cmd_viz(
    transforms: &Path,
    image: Option<&Path>,
    height: usize,
    width: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let hard = read_transforms(transforms)?;
    if height == 0 || width == 0 || height * width != hard.n() {
        return Err(CliError::Config(format!(
            "dims {height}x{width} do not match {} vertices in {}",
            hard.n(),
            transforms.display()
        )));
    }
    let img = match image {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::Config(format!("cannot read image {}: {e}", p.display())))?;
            let (img, h, w) = read_ppm(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            if (h, w) != (height, width) {
                return Err(CliError::Config(format!(
                    "image {} is {h}x{w}, expected {height}x{width}",
                    p.display()
                )));
            }
            Some(img)
        }
        None => None,
    };
    create_dir(out_dir)?;
    let mut written = Vec::new();
    for k in 0..hard.k() {
        let p = out_dir.join(format!("T{k}.svg"));
        write(&p, arrow_field_svg(hard.slice(k), height, width)?)?;
        written.push(p);
        if let Some(img) = &img {
            let p = out_dir.join(format!("T{k}.ppm"));
            write(&p, translated_image_ppm(&hard, k, img.view(), height, width)?)?;
            written.push(p);
        }
    }
    Ok(written)
}

pub struct EvalSummary {
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub reports: Vec<SliceReport>,
}

/// Scores a checkpoint on the configured dataset, or only compares a
/// transforms file against the reference set, and writes `eval_report.csv`.
/// `dims` overrides the reference with a `height x width` grid.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    transforms: Option<&Path>,
    dims: Option<(usize, usize)>,
) -> Result<EvalSummary, CliError> {
    let (hard, mut reference, val_acc, test_acc) = match (checkpoint, transforms) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
            let ck = Checkpoint::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let prep = prepare(cfg)?;
            let (model, logits) = ck.restore(Arc::clone(&prep.graph))?;
            let t = ck.schedule.t_final;
            let acc = |split: Split| -> Result<Option<f64>, CliError> {
                if prep.dataset.splits.get(split).is_empty() {
                    return Ok(None);
                }
                Ok(Some(evaluate_accuracy(&model, &logits, &prep.dataset, split, t)?))
            };
            let (v, te) = (acc(Split::Validation)?, acc(Split::Test)?);
            (harden(&logits), prep.reference, v, te)
        }
        (None, Some(path)) => (read_transforms(path)?, None, None, None),
        (None, None) => return Err(CliError::Config("eval needs --checkpoint or --transforms".into())),
    };
    if let Some((height, width)) = dims {
        reference = Some(Reference::Grid { height, width });
    }
    let reference = reference.ok_or_else(|| {
        CliError::Config("no reference set for this graph; pass --height and --width for a grid".into())
    })?;
    if let Reference::Grid { height, width } = reference {
        if height * width != hard.n() {
            return Err(CliError::Config(format!(
                "dims {height}x{width} do not match {} vertices",
                hard.n()
            )));
        }
    }
    let reports = reports_for(&hard, reference)?;
    create_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("eval_report.csv"), report_csv(&reports))?;
    Ok(EvalSummary {
        val_acc,
        test_acc,
        reports,
    })
}

/// Writes the configured graph as an edge list.
pub fn cmd_export_graph(cfg: &RunConfig, output: Option<&Path>) -> Result<PathBuf, CliError> {
    let prep = prepare(cfg)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            create_dir(&cfg.out_dir)?;
            cfg.out_dir.join("graph.txt")
        }
    };
    write(&path, prep.graph.to_edge_list())?;
    Ok(path)
}
