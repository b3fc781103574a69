//! `er` — experiment CLI for expectation-reflection training.
//!
//! Two subcommands:
//!
//! - `run`: train one configuration and write per-epoch metrics
//!   (CSV + JSON) and optionally a checkpoint.
//! - `compare`: run several algorithms on the same data/seed and print an
//!   aligned table of epoch-1 and final errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use er_core::data::{load_cifar10, load_mnist, subset, synth_two_moons, Dataset};
use er_core::harness::{compare_algorithms, run_experiment, ExperimentConfig, RunOptions};
use er_core::trainers::{Algorithm, BatchSize, TrainConfig};
use er_core::Result;

#[derive(Parser)]
#[command(
    name = "er",
    about = "Expectation Reflection training experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and record per-epoch metrics.
    Run(RunArgs),
    /// Run several algorithms on the same dataset and seed, print a table.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Dataset: mnist | cifar10 | moons
    #[arg(long, default_value = "")]
    dataset: String,

    /// Directory holding the dataset files (IDX files for mnist,
    /// data_batch_*.bin for cifar10). Unused for moons.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,

    /// Layer dims, comma-separated, e.g. 784,1750,475,10.
    /// Presets supply these when omitted.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,

    /// Ridge coefficient for every pseudo-inverse (0 = exact, needs full
    /// column rank).
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,

    /// Learning rate (bp) or weight-interpolation rate (er-minibatch).
    #[arg(long, default_value_t = 0.1)]
    eta: f64,

    /// Mini-batch size, or "full".
    #[arg(long, default_value = "full")]
    batch: String,

    /// Training epochs (full-batch ER reaches its level in 1).
    #[arg(long, default_value_t = 1)]
    epochs: usize,

    /// Seed for init and shuffling.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Keep only this many (class-stratified) training rows.
    #[arg(long)]
    train_rows: Option<usize>,

    /// Append a constant 1.0 feature column.
    #[arg(long, default_value_t = false)]
    augment_bias: bool,

    /// Shortcut configurations: mnist-small | mnist-full | cifar10-full | moons-small
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Algorithm: bp | er-single | er-alg1 | er-alg2 | er-naive | er-minibatch
    #[arg(long)]
    algo: String,

    #[command(flatten)]
    common: CommonArgs,

    /// Output stem: writes <out>.csv and <out>.json.
    #[arg(long, default_value = "er-run")]
    out: PathBuf,

    /// Also write a model checkpoint here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated algorithms to compare.
    #[arg(long, value_delimiter = ',', default_value = "er-alg2,bp")]
    algos: Vec<String>,

    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Resolve preset shorthand into dataset/dims/rows defaults.
fn apply_preset(common: &mut CommonArgs) -> Result<()> {
    let Some(preset) = &common.preset else {
        return Ok(());
    };
    match preset.as_str() {
        "mnist-small" => {
            common.dataset = "mnist".into();
            if common.dims.is_empty() {
                common.dims = vec![784, 256, 64, 10];
            }
            common.train_rows.get_or_insert(10_000);
        }
        "mnist-full" => {
            common.dataset = "mnist".into();
            if common.dims.is_empty() {
                common.dims = vec![784, 1750, 475, 10];
            }
        }
        "cifar10-full" => {
            common.dataset = "cifar10".into();
            if common.dims.is_empty() {
                common.dims = vec![3072, 2750, 250, 10];
            }
        }
        "moons-small" => {
            common.dataset = "moons".into();
            if common.dims.is_empty() {
                common.dims = vec![2, 8, 4, 2];
            }
        }
        other => {
            return Err(er_core::Error::Config(format!(
                "unknown preset '{other}' (mnist-small, mnist-full, cifar10-full, moons-small)"
            )))
        }
    }
    Ok(())
}

fn load_datasets(common: &CommonArgs) -> Result<(Dataset, Dataset)> {
    let (mut train, mut test) = match common.dataset.as_str() {
        "mnist" => {
            load_mnist(&common.data_dir.join("mnist")).or_else(|_| load_mnist(&common.data_dir))?
        }
        "cifar10" => load_cifar10(&common.data_dir.join("cifar10"))
            .or_else(|_| load_cifar10(&common.data_dir))?,
        "moons" => (
            synth_two_moons(400, 0.1, common.seed)?,
            synth_two_moons(200, 0.1, common.seed.wrapping_add(1))?,
        ),
        other => {
            return Err(er_core::Error::Config(format!(
                "unknown dataset '{other}' (mnist, cifar10, moons)"
            )))
        }
    };
    if let Some(n) = common.train_rows {
        train = subset(&train, n, common.seed)?;
    }
    if common.augment_bias {
        train = train.augment_ones()?;
        test = test.augment_ones()?;
    }
    Ok((train, test))
}

fn build_config(algo: &str, common: &CommonArgs) -> Result<ExperimentConfig> {
    let algorithm = Algorithm::parse(algo)?;
    let batch_size = if common.batch == "full" {
        BatchSize::Full
    } else {
        BatchSize::Fixed(common.batch.parse().map_err(|_| {
            er_core::Error::Config(format!(
                "batch must be a positive integer or \"full\", got '{}'",
                common.batch
            ))
        })?)
    };
    let mut dims = common.dims.clone();
    if common.augment_bias && !dims.is_empty() {
        dims[0] += 1;
    }
    Ok(ExperimentConfig {
        train: TrainConfig {
            algorithm,
            alpha: common.alpha,
            eta: common.eta,
            batch_size,
            epochs: common.epochs,
            seed: common.seed,
        },
        dims,
        dataset: common.dataset.clone(),
        augment_bias: common.augment_bias,
    })
}

fn cmd_run(mut args: RunArgs) -> Result<()> {
    apply_preset(&mut args.common)?;
    if args.common.dims.is_empty() {
        return Err(er_core::Error::Config(
            "give --dims or a --preset that supplies them".into(),
        ));
    }
    let config = build_config(&args.algo, &args.common)?;
    config.train.validate()?;
    let (train, test) = load_datasets(&args.common)?;

    let opts = RunOptions {
        csv_path: Some(args.out.with_extension("csv")),
        json_path: Some(args.out.with_extension("json")),
        checkpoint_path: args.checkpoint.clone(),
        record_timing: true,
    };
    eprintln!(
        "running {} on {} ({} train / {} test rows), dims {:?}",
        args.algo,
        train.name(),
        train.len(),
        test.len(),
        config.dims
    );
    let metrics = run_experiment(&config, &train, &test, &opts)?;
    for r in &metrics.records {
        println!(
            "epoch {:>3}  train {:>7.4}  test {:>7.4}  ({} ms)",
            r.epoch, r.train_error, r.test_error, r.wall_ms
        );
    }
    println!(
        "final: train {:.4} test {:.4} -> {}",
        metrics.final_train_error,
        metrics.final_test_error,
        args.out.with_extension("csv").display()
    );
    Ok(())
}

fn cmd_compare(mut args: CompareArgs) -> Result<()> {
    apply_preset(&mut args.common)?;
    if args.common.dims.is_empty() {
        return Err(er_core::Error::Config(
            "give --dims or a --preset that supplies them".into(),
        ));
    }
    if args.algos.len() < 2 {
        return Err(er_core::Error::Config(
            "give at least two algorithms to compare".into(),
        ));
    }
    let configs = args
        .algos
        .iter()
        .map(|a| build_config(a, &args.common))
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = load_datasets(&args.common)?;
    eprintln!(
        "comparing {:?} on {} ({} train / {} test rows)",
        args.algos,
        train.name(),
        train.len(),
        test.len()
    );
    let (table, _) = compare_algorithms(&configs, &train, &test)?;
    print!("{table}");
    Ok(())
}
