use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use koopman_bound::bounds::Variant;
use koopman_bound::io::{save_network, scatter_svg, ScatterPoint};
use koopman_bound::special::pearson;
use koopman_bound::trainer::{self, graph_koopman_quantity, Task, TrainConfig, TrainRun};

use crate::{usage, Failure, TaskArg, EXIT_DIVERGED};

pub struct TrainArgs {
    pub task: Option<TaskArg>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub epochs: Option<usize>,
    pub paired: bool,
    pub unregularized: bool,
    pub bound_variant: String,
    pub svg: bool,
    pub out_dir: PathBuf,
}

/// Layers whose Koopman quantity the paired digits summary compares.
const PAIRED_LAYERS: [usize; 2] = [1, 2];

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a TrainConfig,
    diverged: bool,
    divergence: Option<&'a str>,
    epochs_completed: usize,
    final_train_loss: f64,
    final_gen_error: f64,
    final_test_accuracy: Option<f64>,
    final_bound: Option<f64>,
    bound_variant: &'a str,
    bound_note: Option<&'a str>,
}

#[derive(Serialize)]
struct SeedCorrelation {
    seed: u64,
    pearson: Option<f64>,
}

#[derive(Serialize)]
struct CorrelationSummary {
    variant: String,
    seeds: Vec<SeedCorrelation>,
    mean: Option<f64>,
}

#[derive(Serialize)]
struct PairSide {
    test_accuracy: Option<f64>,
    koopman_quantity: Option<f64>,
    diverged: bool,
}

#[derive(Serialize)]
struct PairRecord {
    seed: u64,
    regularized: PairSide,
    unregularized: PairSide,
}

#[derive(Serialize)]
struct PairedSummary {
    layers: Vec<usize>,
    pairs: Vec<PairRecord>,
    mean_accuracy_regularized: Option<f64>,
    mean_accuracy_unregularized: Option<f64>,
    mean_quantity_regularized: Option<f64>,
    mean_quantity_unregularized: Option<f64>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| usage(e.to_string()))
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Option<Vec<f64>> = xs.collect();
    let vals = vals?;
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Pearson correlation between the bound and the generalization-error trajectories.
pub fn trajectory_correlation(run: &TrainRun, variant: Variant) -> Option<f64> {
    let (b, g): (Vec<f64>, Vec<f64>) = std::iter::once(&run.initial)
        .chain(&run.epochs)
        .filter_map(|m| Some((m.bound(variant)?, m.gen_error)))
        .filter(|(b, g)| b.is_finite() && g.is_finite())
        .unzip();
    pearson(&b, &g)
}

fn write_run(run: &TrainRun, dir: &Path, variant: Variant, svg: bool) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write(&dir.join("metrics.csv"), &run.metrics_csv()?)?;
    write(&dir.join("spectrum.csv"), &run.spectrum.to_csv()?)?;
    save_network(&run.final_net, &dir.join("weights.json"))?;
    let last = run.final_metrics();
    let summary = RunSummary {
        config: &run.config,
        diverged: run.diverged,
        divergence: run.divergence.as_deref(),
        epochs_completed: run.epochs.len(),
        final_train_loss: last.train_loss,
        final_gen_error: last.gen_error,
        final_test_accuracy: last.test_accuracy,
        final_bound: last.bound(variant),
        bound_variant: variant.name(),
        bound_note: last.bound_note.as_deref(),
    };
    write(&dir.join("run.json"), &json(&summary)?)?;
    if svg {
        let all: Vec<_> = std::iter::once(&run.initial).chain(&run.epochs).collect();
        let span = all.len().saturating_sub(1).max(1) as f64;
        let points: Vec<ScatterPoint> = all
            .iter()
            .enumerate()
            .filter_map(|(i, m)| {
                Some(ScatterPoint {
                    x: m.bound(variant)?,
                    y: m.gen_error,
                    shade: i as f64 / span,
                })
            })
            .collect();
        let title = format!("{} bound vs generalization error, seed {}", variant, run.config.seed);
        write(
            &dir.join("scatter.svg"),
            &scatter_svg(&points, &format!("{variant} bound"), "generalization error", &title),
        )?;
    }
    Ok(())
}

fn base_config(args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut config = match (&args.config, args.task) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            TrainConfig::from_json(&text)?
        }
        (None, Some(TaskArg::Synthetic)) => TrainConfig::synthetic(0),
        (None, Some(TaskArg::Digits)) => TrainConfig::digits(0, !args.unregularized),
        (None, None) => return Err(usage("either --task or --config is required")),
    };
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    Ok(config)
}

fn run_one(config: &TrainConfig) -> Result<TrainRun, Failure> {
    config.validate()?;
    Ok(trainer::run(config)?)
}

pub fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let variant: Variant = args.bound_variant.parse()?;
    let base = base_config(&args)?;
    if args.paired && base.task != Task::Digits {
        return Err(usage("--paired applies to the digits task"));
    }
    let seeds = args.seeds.clone().unwrap_or_else(|| vec![base.seed]);
    if seeds.is_empty() {
        return Err(usage("--seeds is empty"));
    }
    let sweep = seeds.len() > 1;
    let mut diverged = Vec::new();

    if args.paired {
        let mut pairs = Vec::new();
        for &seed in &seeds {
            let mut sides = Vec::new();
            let mut reg = TrainConfig { seed, ..base.clone() };
            if matches!(reg.regularizer, trainer::Regularizer::None) {
                reg.regularizer = TrainConfig::digits(seed, true).regularizer;
            }
            let unreg = TrainConfig {
                regularizer: trainer::Regularizer::None,
                ..reg.clone()
            };
            for (name, config) in [("regularized", reg), ("unregularized", unreg)] {
                let run = run_one(&config)?;
                let dir = args.out_dir.join(format!("seed-{seed}")).join(name);
                write_run(&run, &dir, variant, args.svg)?;
                if run.diverged {
                    diverged.push(dir.display().to_string());
                }
                sides.push(PairSide {
                    test_accuracy: run.final_metrics().test_accuracy,
                    koopman_quantity: graph_koopman_quantity(&run.final_net, &PAIRED_LAYERS).ok(),
                    diverged: run.diverged,
                });
            }
            let unregularized = sides.pop().expect("two sides");
            let regularized = sides.pop().expect("two sides");
            pairs.push(PairRecord {
                seed,
                regularized,
                unregularized,
            });
        }
        let summary = PairedSummary {
            layers: PAIRED_LAYERS.to_vec(),
            mean_accuracy_regularized: mean(pairs.iter().map(|p| p.regularized.test_accuracy)),
            mean_accuracy_unregularized: mean(pairs.iter().map(|p| p.unregularized.test_accuracy)),
            mean_quantity_regularized: mean(pairs.iter().map(|p| p.regularized.koopman_quantity)),
            mean_quantity_unregularized: mean(pairs.iter().map(|p| p.unregularized.koopman_quantity)),
            pairs,
        };
        fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
        write(&args.out_dir.join("paired.json"), &json(&summary)?)?;
    } else {
        let mut correlations = Vec::new();
        for &seed in &seeds {
            let config = TrainConfig { seed, ..base.clone() };
            let run = run_one(&config)?;
            let dir = if sweep {
                args.out_dir.join(format!("seed-{seed}"))
            } else {
                args.out_dir.clone()
            };
            write_run(&run, &dir, variant, args.svg)?;
            if run.diverged {
                diverged.push(dir.display().to_string());
            }
            correlations.push(SeedCorrelation {
                seed,
                pearson: trajectory_correlation(&run, variant),
            });
        }
        if sweep {
            let summary = CorrelationSummary {
                variant: variant.name().to_string(),
                mean: mean(correlations.iter().map(|c| c.pearson)),
                seeds: correlations,
            };
            write(&args.out_dir.join("correlation.json"), &json(&summary)?)?;
        }
    }

    if diverged.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_DIVERGED,
            message: format!("training diverged: {}", diverged.join(", ")),
        })
    }
}
