use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use gsl_cli::config::{read_config_file, KEYS};
use gsl_cli::{cmd_eval, cmd_export_graph, cmd_sweep, cmd_train, cmd_viz, CliError, DatasetKind, RunConfig};

/// Learn pseudo-translations on graphs and inspect them.
#[derive(Parser)]
#[command(name = "gsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once; writes checkpoint.json, metrics.csv, transforms.json,
    /// config.txt and eval_report.csv into the output directory.
    Train(Common),
    /// One training per temperature grid point; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated t_init values.
        #[arg(long, value_name = "LIST")]
        sweep_t_init: Option<String>,
        /// Comma-separated t_final values.
        #[arg(long, value_name = "LIST")]
        sweep_t_final: Option<String>,
        /// Runs averaged per grid point, with seeds seed, seed+1, ...
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Arrow-field SVGs (and translated PPM images) for every slice.
    Viz {
        /// Hardened transforms JSON.
        #[arg(long)]
        transforms: PathBuf,
        /// Binary PPM image of the same grid, translated by every slice.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// [default: gsl-out]
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Accuracy of a checkpoint and nearest reference per slice; writes
    /// eval_report.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Compare a transforms file without scoring a model.
        #[arg(long)]
        transforms: Option<PathBuf>,
        /// Grid height for the reference set; needs --width.
        #[arg(long, requires = "width")]
        height: Option<usize>,
        #[arg(long, requires = "height")]
        width: Option<usize>,
    },
    /// Write the configured graph as an `i j` edge list (graph.txt).
    ExportGraph {
        #[command(flatten)]
        common: Common,
        /// Output file instead of <out-dir>/graph.txt.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Flags override the config file, which overrides the defaults listed below.
#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// ring | cifar10 | webkb
    #[arg(long)]
    dataset: Option<String>,
    /// auto | ring | grid | knn-covariance | <edge-list file>
    #[arg(long)]
    graph: Option<String>,
    /// Number of transformation slices.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t_init: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated GSL widths.
    #[arg(long)]
    layers: Option<String>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self, extra: &[(&str, Option<String>)]) -> Result<RunConfig, CliError> {
        let mut pairs = match &self.config {
            Some(p) => read_config_file(p)?,
            None => Vec::new(),
        };
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string())),
            ("dataset", self.dataset.clone()),
            ("graph", self.graph.clone()),
            ("k", self.k.map(|v| v.to_string())),
            ("t_init", self.t_init.map(|v| v.to_string())),
            ("t_final", self.t_final.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("layers", self.layers.clone()),
        ];
        for (k, v) in flags.into_iter().chain(extra.iter().map(|(k, v)| (*k, v.clone()))) {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn defaults_help() -> String {
    let sets = [DatasetKind::Ring, DatasetKind::Cifar10, DatasetKind::Webkb].map(RunConfig::defaults_for);
    let mut out = String::from("Config keys and defaults (ring / cifar10 / webkb when they differ):\n");
    for (key, help) in KEYS {
        let vals: Vec<String> = sets.iter().map(|c| c.get(key).unwrap_or_else(|| "-".into())).collect();
        let shown = if vals.iter().all(|v| *v == vals[0]) { vals[0].clone() } else { vals.join(" / ") };
        out.push_str(&format!("  {key:<17} {help} [default: {shown}]\n"));
    }
    out
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve(&[])?;
            let s = cmd_train(&cfg)?;
            println!("final validation accuracy: {}", fmt_acc(s.val_acc));
            println!("final test accuracy: {}", fmt_acc(s.test_acc));
            if let Some(reps) = &s.reports {
                for r in reps {
                    println!("T{}: nearest {} (distance {:.4})", r.k, r.nearest_name, r.distance);
                }
            }
            for p in &s.written {
                println!("wrote {}", p.display());
            }
        }
        Command::Sweep {
            common,
            sweep_t_init,
            sweep_t_final,
            repeats,
        } => {
            let cfg = common.resolve(&[
                ("sweep_t_init", sweep_t_init),
                ("sweep_t_final", sweep_t_final),
                ("repeats", repeats.map(|r| r.to_string())),
            ])?;
            let rows = cmd_sweep(&cfg)?;
            for r in &rows {
                println!("t_init {} t_final {}: accuracy {:.4}", r.t_init, r.t_final, r.accuracy);
            }
            println!("wrote {}", cfg.out_dir.join("sweep.csv").display());
        }
        Command::Viz {
            transforms,
            image,
            height,
            width,
            out_dir,
        } => {
            let out_dir = out_dir.unwrap_or_else(|| PathBuf::from("gsl-out"));
            for p in cmd_viz(&transforms, image.as_deref(), height, width, &out_dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Eval {
            common,
            checkpoint,
            transforms,
            height,
            width,
        } => {
            let cfg = common.resolve(&[])?;
            let dims = height.zip(width);
            let s = cmd_eval(&cfg, checkpoint.as_deref(), transforms.as_deref(), dims)?;
            if checkpoint.is_some() {
                println!("validation accuracy: {}", fmt_acc(s.val_acc));
                println!("test accuracy: {}", fmt_acc(s.test_acc));
            }
            for r in &s.reports {
                println!("T{}: nearest {} (distance {:.4})", r.k, r.nearest_name, r.distance);
            }
            println!("wrote {}", cfg.out_dir.join("eval_report.csv").display());
        }
        Command::ExportGraph { common, output } => {
            let cfg = common.resolve(&[])?;
            println!("wrote {}", cmd_export_graph(&cfg, output.as_deref())?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let help = defaults_help();
    let mut cmd = Cli::command();
    for name in ["train", "sweep", "eval", "export-graph"] {
        cmd = cmd.mut_subcommand(name, |s| s.after_long_help(help.clone()));
    }
    let matches = cmd.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
