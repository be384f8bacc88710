//! Run configuration: per-dataset defaults, then `key = value` lines from a
//! config file, then command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gsl_core::nn::{OptimizerKind, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Ring,
    Cifar10,
    Webkb,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ring" => Ok(Self::Ring),
            "cifar10" => Ok(Self::Cifar10),
            "webkb" => Ok(Self::Webkb),
            _ => Err(format!("unknown dataset {s:?} (expected ring, cifar10 or webkb)")),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ring => "ring",
            Self::Cifar10 => "cifar10",
            Self::Webkb => "webkb",
        })
    }
}

/// `auto` picks the dataset's natural graph: ring for the ring task, the
/// pixel grid for CIFAR-10 and the citation graph for WebKB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphKind {
    Auto,
    Ring,
    Grid,
    KnnCovariance,
    EdgeList(PathBuf),
}

impl FromStr for GraphKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "auto" => Self::Auto,
            "ring" => Self::Ring,
            "grid" => Self::Grid,
            "knn-covariance" => Self::KnnCovariance,
            "" => return Err("empty graph selector".into()),
            path => Self::EdgeList(PathBuf::from(path)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub graph: GraphKind,
    /// Directory holding the CIFAR-10 binary batches.
    pub data_dir: Option<PathBuf>,
    pub webkb_content: Option<PathBuf>,
    pub webkb_cites: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    pub ring_n: usize,
    pub ring_classes: usize,
    pub ring_samples: usize,
    pub ring_noise: f64,
    pub train_limit: Option<usize>,
    pub eval_limit: Option<usize>,
    pub downscale: bool,
    /// Neighbors kept per vertex by the covariance graph (self included).
    pub knn: usize,
    pub self_loops: bool,
    pub sweep_t_init: Vec<f64>,
    pub sweep_t_final: Vec<f64>,
    pub repeats: usize,
}

/// Every key accepted in config files and by `--set`, with its help text.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset", "ring | cifar10 | webkb"),
    ("graph", "auto | ring | grid | knn-covariance | <edge-list file>"),
    ("data_dir", "directory with the CIFAR-10 binary batches"),
    ("webkb_content", "WebKB .content file"),
    ("webkb_cites", "WebKB .cites file"),
    ("out_dir", "output directory"),
    ("seed", "random seed"),
    ("k", "number of transformation slices"),
    ("layers", "comma-separated GSL widths"),
    ("t_init", "initial temperature"),
    ("t_final", "final temperature"),
    ("steps", "optimizer steps (ignored when epochs is set)"),
    ("epochs", "epochs, or 'none' to use steps"),
    ("batch_size", "items per mini-batch"),
    ("lr", "learning rate of the network weights"),
    ("logit_lr", "learning rate of the S logits, or 'none' to reuse lr"),
    ("optimizer", "adam | sgd"),
    ("momentum", "SGD momentum"),
    ("logit_init_scale", "S logits start uniform in [-scale, scale]"),
    ("ring_n", "ring task: vertices"),
    ("ring_classes", "ring task: classes"),
    ("ring_samples", "ring task: samples per class"),
    ("ring_noise", "ring task: noise standard deviation"),
    ("train_limit", "CIFAR-10: training images kept, or 'none'"),
    ("eval_limit", "CIFAR-10: test images kept, or 'none'"),
    ("downscale", "CIFAR-10: average 2x2 blocks to 16x16 (true/false)"),
    ("knn", "knn-covariance graph: neighbors per vertex including itself"),
    ("self_loops", "add self-loops to ring/grid/edge-list graphs (true/false)"),
    ("sweep_t_init", "comma-separated t_init grid for sweep"),
    ("sweep_t_final", "comma-separated t_final grid for sweep"),
    ("repeats", "sweep: runs averaged per grid point"),
];

impl RunConfig {
    pub fn defaults_for(dataset: DatasetKind) -> Self {
        let mut train = TrainConfig::default();
        let mut out = Self {
            dataset,
            graph: GraphKind::Auto,
            data_dir: None,
            webkb_content: None,
            webkb_cites: None,
            out_dir: PathBuf::from("gsl-out"),
            train: TrainConfig::default(),
            ring_n: 16,
            ring_classes: 4,
            ring_samples: 200,
            ring_noise: 0.05,
            train_limit: None,
            eval_limit: None,
            downscale: true,
            knn: 5,
            self_loops: true,
            sweep_t_init: Vec::new(),
            sweep_t_final: Vec::new(),
            repeats: 1,
        };
        match dataset {
            DatasetKind::Ring => {
                train.k = 3;
                train.widths = vec![32, 32];
                train.steps = 2000;
                train.lr = 0.01;
                train.logit_lr = Some(0.002);
            }
            DatasetKind::Cifar10 => {
                train.k = 5;
                train.epochs = Some(10);
                out.train_limit = Some(5000);
            }
            DatasetKind::Webkb => {
                train.k = 3;
                train.widths = vec![32];
                train.steps = 200;
                train.batch_size = 1024;
                train.lr = 0.01;
            }
        }
        out.train = train;
        out
    }

    /// Builds a config from `(key, value)` pairs applied in order. The last
    /// `dataset` entry chooses the defaults the other entries override.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        let dataset = match pairs.iter().rev().find(|(k, _)| k == "dataset") {
            Some((_, v)) => v.parse().map_err(CliError::Config)?,
            None => DatasetKind::Ring,
        };
        let mut cfg = Self::defaults_for(dataset);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let bad = |e: String| CliError::Config(format!("{key} = {value:?}: {e}"));
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = value.parse().map_err(bad)?,
            "graph" => self.graph = value.parse().map_err(bad)?,
            "data_dir" => self.data_dir = opt_path(value),
            "webkb_content" => self.webkb_content = opt_path(value),
            "webkb_cites" => self.webkb_cites = opt_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => t.seed = parse(value).map_err(bad)?,
            "k" => t.k = parse(value).map_err(bad)?,
            "layers" => t.widths = parse_list(value).map_err(bad)?,
            "t_init" => t.t_init = parse(value).map_err(bad)?,
            "t_final" => t.t_final = parse(value).map_err(bad)?,
            "steps" => t.steps = parse(value).map_err(bad)?,
            "epochs" => t.epochs = parse_opt(value).map_err(bad)?,
            "batch_size" => t.batch_size = parse(value).map_err(bad)?,
            "lr" => t.lr = parse(value).map_err(bad)?,
            "logit_lr" => t.logit_lr = parse_opt(value).map_err(bad)?,
            "optimizer" => {
                t.optimizer = match value {
                    "adam" => OptimizerKind::default(),
                    "sgd" => OptimizerKind::Sgd { momentum: 0.9 },
                    _ => return Err(bad("expected adam or sgd".into())),
                }
            }
            "momentum" => match &mut t.optimizer {
                OptimizerKind::Sgd { momentum } => *momentum = parse(value).map_err(bad)?,
                OptimizerKind::Adam { .. } => return Err(bad("momentum needs optimizer = sgd".into())),
            },
            "logit_init_scale" => t.logit_init_scale = parse(value).map_err(bad)?,
            "ring_n" => self.ring_n = parse(value).map_err(bad)?,
            "ring_classes" => self.ring_classes = parse(value).map_err(bad)?,
            "ring_samples" => self.ring_samples = parse(value).map_err(bad)?,
            "ring_noise" => self.ring_noise = parse(value).map_err(bad)?,
            "train_limit" => self.train_limit = parse_opt(value).map_err(bad)?,
            "eval_limit" => self.eval_limit = parse_opt(value).map_err(bad)?,
            "downscale" => self.downscale = parse(value).map_err(bad)?,
            "knn" => self.knn = parse(value).map_err(bad)?,
            "self_loops" => self.self_loops = parse(value).map_err(bad)?,
            "sweep_t_init" => self.sweep_t_init = parse_list(value).map_err(bad)?,
            "sweep_t_final" => self.sweep_t_final = parse_list(value).map_err(bad)?,
            "repeats" => self.repeats = parse(value).map_err(bad)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of `key` in the syntax `set` accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let path = |p: &Option<PathBuf>| opt(p.as_ref().map(|p| p.display().to_string()));
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        Some(match key {
            "dataset" => self.dataset.to_string(),
            "graph" => match &self.graph {
                GraphKind::Auto => "auto".into(),
                GraphKind::Ring => "ring".into(),
                GraphKind::Grid => "grid".into(),
                GraphKind::KnnCovariance => "knn-covariance".into(),
                GraphKind::EdgeList(p) => p.display().to_string(),
            },
            "data_dir" => path(&self.data_dir),
            "webkb_content" => path(&self.webkb_content),
            "webkb_cites" => path(&self.webkb_cites),
            "out_dir" => self.out_dir.display().to_string(),
            "seed" => t.seed.to_string(),
            "k" => t.k.to_string(),
            "layers" => t.widths.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "t_init" => t.t_init.to_string(),
            "t_final" => t.t_final.to_string(),
            "steps" => t.steps.to_string(),
            "epochs" => opt(t.epochs.map(|e| e.to_string())),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.lr.to_string(),
            "logit_lr" => opt(t.logit_lr.map(|l| l.to_string())),
            "optimizer" => match t.optimizer {
                OptimizerKind::Adam { .. } => "adam".into(),
                OptimizerKind::Sgd { .. } => "sgd".into(),
            },
            "momentum" => match t.optimizer {
                OptimizerKind::Sgd { momentum } => momentum.to_string(),
                OptimizerKind::Adam { .. } => return None,
            },
            "logit_init_scale" => t.logit_init_scale.to_string(),
            "ring_n" => self.ring_n.to_string(),
            "ring_classes" => self.ring_classes.to_string(),
            "ring_samples" => self.ring_samples.to_string(),
            "ring_noise" => self.ring_noise.to_string(),
            "train_limit" => opt(self.train_limit.map(|v| v.to_string())),
            "eval_limit" => opt(self.eval_limit.map(|v| v.to_string())),
            "downscale" => self.downscale.to_string(),
            "knn" => self.knn.to_string(),
            "self_loops" => self.self_loops.to_string(),
            "sweep_t_init" => list(&self.sweep_t_init),
            "sweep_t_final" => list(&self.sweep_t_final),
            "repeats" => self.repeats.to_string(),
            _ => return None,
        })
    }

    /// The resolved configuration as a config file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            if let Some(v) = self.get(key) {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }

    /// Sweep grid in row order. Exactly one axis may hold several values; an
    /// empty axis falls back to the scalar `t_init` / `t_final`.
    pub fn sweep_grid(&self) -> Result<Vec<(f64, f64)>, CliError> {
        if self.sweep_t_init.is_empty() && self.sweep_t_final.is_empty() {
            return Err(CliError::Config("sweep grid is empty: set sweep_t_init or sweep_t_final".into()));
        }
        if self.sweep_t_init.len() > 1 && self.sweep_t_final.len() > 1 {
            return Err(CliError::Config("sweep varies one axis at a time; the other must hold one value".into()));
        }
        if self.repeats == 0 {
            return Err(CliError::Config("repeats must be at least 1".into()));
        }
        let inits = if self.sweep_t_init.is_empty() { vec![self.train.t_init] } else { self.sweep_t_init.clone() };
        let finals = if self.sweep_t_final.is_empty() { vec![self.train.t_final] } else { self.sweep_t_final.clone() };
        Ok(inits
            .iter()
            .flat_map(|&a| finals.iter().map(move |&b| (a, b)))
            .collect())
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (v != "none" && !v.is_empty()).then(|| PathBuf::from(v))
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn parse_opt<T: FromStr>(v: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if v == "none" {
        Ok(None)
    } else {
        parse(v).map(Some)
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(s.trim())).collect()
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str, origin: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("{}:{}: expected key = value", origin.display(), i + 1))
        })?;
        let k = k.trim();
        if !KEYS.iter().any(|(name, _)| *name == k) {
            return Err(CliError::Config(format!("{}:{}: unknown key {k:?}", origin.display(), i + 1)));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(list: &[(&str, &str)]) -> Vec<(String, String)> {
        list.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn later_entries_win_and_dataset_picks_defaults() {
        let cfg = RunConfig::from_pairs(&pairs(&[("k", "7"), ("dataset", "cifar10"), ("k", "4")])).unwrap();
        assert_eq!(cfg.dataset, DatasetKind::Cifar10);
        assert_eq!(cfg.train.k, 4);
        assert_eq!(cfg.train.epochs, Some(10));
        let ring = RunConfig::from_pairs(&[]).unwrap();
        assert_eq!(ring.train.widths, vec![32, 32]);
        assert_eq!(ring.train.steps, 2000);
    }

    #[test]
    fn parses_file_text() {
        let text = "# comment\n\nlayers = 8, 16\nlogit_lr = none\ngraph = my edges.txt\n";
        let p = parse_config_text(text, Path::new("x.cfg")).unwrap();
        let cfg = RunConfig::from_pairs(&p).unwrap();
        assert_eq!(cfg.train.widths, vec![8, 16]);
        assert_eq!(cfg.train.logit_lr, None);
        assert_eq!(cfg.graph, GraphKind::EdgeList(PathBuf::from("my edges.txt")));
        let err = parse_config_text("k 3\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("x.cfg:1"));
        assert!(parse_config_text("kk = 3\n", Path::new("x.cfg")).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_pairs(&pairs(&[("k", "three")])).is_err());
        assert!(RunConfig::from_pairs(&pairs(&[("dataset", "mnist")])).is_err());
        assert!(RunConfig::from_pairs(&pairs(&[("momentum", "0.5")])).is_err());
        let sgd = RunConfig::from_pairs(&pairs(&[("optimizer", "sgd"), ("momentum", "0.5")])).unwrap();
        assert_eq!(sgd.train.optimizer, OptimizerKind::Sgd { momentum: 0.5 });
    }

    #[test]
    fn text_round_trips() {
        for d in [DatasetKind::Ring, DatasetKind::Cifar10, DatasetKind::Webkb] {
            let mut cfg = RunConfig::defaults_for(d);
            cfg.sweep_t_final = vec![0.5, 1e-4];
            cfg.train.logit_lr = Some(0.25);
            let p = parse_config_text(&cfg.to_text(), Path::new("dump")).unwrap();
            assert_eq!(RunConfig::from_pairs(&p).unwrap(), cfg);
        }
    }

    #[test]
    fn sweep_grid_shapes() {
        let mut cfg = RunConfig::defaults_for(DatasetKind::Ring);
        assert!(cfg.sweep_grid().is_err());
        cfg.sweep_t_final = vec![1e-4, 1e-2, 1.0, 10.0];
        let g = cfg.sweep_grid().unwrap();
        assert_eq!(g, vec![(10.0, 1e-4), (10.0, 1e-2), (10.0, 1.0), (10.0, 10.0)]);
        cfg.sweep_t_init = vec![0.1, 1.0];
        assert!(cfg.sweep_grid().is_err());
        cfg.sweep_t_init = vec![100.0];
        assert_eq!(cfg.sweep_grid().unwrap().len(), 4);
    }
}
