//! Experiment runner: wires a dataset, a network, and a training rule
//! together, records per-epoch error trajectories, and persists metrics.
//!
//! Epoch 0 is always a pre-training evaluation, so one-step learning claims
//! can be read directly off the epoch 0 -> 1 transition. "Error" is the
//! argmax misclassification fraction; the half squared error is tracked in
//! step reports but not in the trajectory files.
//!
//! # CSV layout
//!
//! ```text
//! epoch,train_error,test_error,wall_ms,dw_norms
//! 0,0.9012,0.9034,0,0;0;0
//! 1,0.0243,0.0288,5130,48.2191;12.0113;3.0071
//! ```
//!
//! `dw_norms` holds the per-layer Frobenius norms of that epoch's total
//! weight change, joined by semicolons. Floating-point fields use the
//! shortest round-trip representation, so a rerun with identical config and
//! seed is byte-identical when timing capture is off.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{init, save_checkpoint, InitSpec, MlpState};
use crate::trainers::{
    bp_step, er_alg1_step, er_alg2_step, er_minibatch_epoch, er_naive_target_step, er_single_step,
    misclassification_rate, weight_delta_norms, Algorithm, BatchSize, TrainConfig,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Everything needed to reproduce a run: hyperparameters, architecture, and
/// dataset identity. Serialized verbatim into the JSON summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub dims: Vec<usize>,
    pub dataset: String,
    #[serde(default)]
    pub augment_bias: bool,
}

/// Output and measurement options for a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// When false, wall_ms is recorded as 0 so reruns are byte-identical.
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub wall_ms: u64,
    pub dw_norms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config: ExperimentConfig,
    pub records: Vec<EpochRecord>,
    pub final_train_error: f64,
    pub final_test_error: f64,
}

/// Run one experiment end to end. Validates the configuration before any
/// compute, evaluates at epoch 0, trains for the configured number of
/// epochs, and writes CSV/JSON/checkpoint outputs as requested.
pub fn run_experiment(
    config: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    opts: &RunOptions,
) -> Result<RunMetrics> {
    config.train.validate()?;
    validate_dims(config, train, test)?;

    let mut state = init(&config.dims, InitSpec::new(config.train.seed))?;
    let mut records = Vec::with_capacity(config.train.epochs + 1);
    records.push(EpochRecord {
        epoch: 0,
        train_error: evaluate_error(&state, train)?,
        test_error: evaluate_error(&state, test)?,
        wall_ms: 0,
        dw_norms: vec![0.0; state.depth()],
    });

    for epoch in 1..=config.train.epochs {
        let started = Instant::now();
        let before: Vec<Matrix> = state.weights().to_vec();
        run_epoch(&mut state, train, &config.train, epoch as u64 - 1)?;
        let dw_norms = weight_delta_norms(&before, state.weights());
        drop(before);
        let wall_ms = if opts.record_timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        records.push(EpochRecord {
            epoch,
            train_error: evaluate_error(&state, train)?,
            test_error: evaluate_error(&state, test)?,
            wall_ms,
            dw_norms,
        });
    }

    let metrics = RunMetrics {
        config: config.clone(),
        final_train_error: records.last().expect("epoch 0 present").train_error,
        final_test_error: records.last().expect("epoch 0 present").test_error,
        records,
    };
    if let Some(path) = &opts.csv_path {
        write_metrics_csv(&metrics, path)?;
    }
    if let Some(path) = &opts.json_path {
        std::fs::write(path, serde_json::to_string_pretty(&metrics)?)?;
    }
    if let Some(path) = &opts.checkpoint_path {
        save_checkpoint(&state, path)?;
    }
    Ok(metrics)
}

/// Misclassification rate of the network on a dataset, evaluated without
/// touching the training cache.
pub fn evaluate_error(state: &MlpState, data: &Dataset) -> Result<f64> {
    let scores = state.forward_inference(data.x())?;
    misclassification_rate(&scores, data.y_hat())
}

fn validate_dims(config: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<()> {
    if config.dims.len() < 2 {
        return Err(Error::config("dims must list at least input and output"));
    }
    if config.dims[0] != train.n_features() {
        return Err(Error::config(format!(
            "dims[0] = {} but dataset '{}' has {} features",
            config.dims[0],
            train.name(),
            train.n_features(),
        )));
    }
    let out = *config.dims.last().expect("checked len");
    if out != train.n_classes() {
        return Err(Error::config(format!(
            "dims end in {} outputs but dataset '{}' has {} classes",
            out,
            train.name(),
            train.n_classes()
        )));
    }
    if test.n_features() != train.n_features() || test.n_classes() != train.n_classes() {
        return Err(Error::config(
            "train and test sets disagree on features or classes",
        ));
    }
    if config.train.algorithm == Algorithm::ErSingle && config.dims.len() != 2 {
        return Err(Error::config(
            "er-single trains single-layer networks; give exactly two dims",
        ));
    }
    Ok(())
}

/// One epoch of the configured algorithm.
fn run_epoch(
    state: &mut MlpState,
    train: &Dataset,
    config: &TrainConfig,
    epoch_index: u64,
) -> Result<()> {
    let x = train.x();
    let y = train.y_hat();
    match config.algorithm {
        Algorithm::ErMinibatch => {
            er_minibatch_epoch(state, x, y, config, epoch_index)?;
        }
        Algorithm::ErAlg1 => {
            er_alg1_step(state, x, y, config.alpha)?;
        }
        Algorithm::ErAlg2 => {
            er_alg2_step(state, x, y, config.alpha)?;
        }
        Algorithm::Bp | Algorithm::ErSingle | Algorithm::ErNaiveTarget => {
            // Batched epoch: seeded shuffle, one step per chunk. A full
            // batch keeps the natural order.
            let n = x.rows();
            let batch = match config.batch_size {
                BatchSize::Full => n,
                BatchSize::Fixed(b) => b.min(n),
            };
            if batch == n {
                step_once(state, x, y, config)?;
            } else {
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch_index));
                order.shuffle(&mut rng);
                for chunk in order.chunks(batch) {
                    let bx = x.select_rows(chunk)?;
                    let by = y.select_rows(chunk)?;
                    step_once(state, &bx, &by, config)?;
                }
            }
        }
    }
    Ok(())
}

fn step_once(state: &mut MlpState, x: &Matrix, y: &Matrix, config: &TrainConfig) -> Result<()> {
    match config.algorithm {
        Algorithm::Bp => bp_step(state, x, y, config.eta).map(|_| ()),
        Algorithm::ErSingle => er_single_step(state, x, y, config.alpha).map(|_| ()),
        Algorithm::ErNaiveTarget => er_naive_target_step(state, x, y, config.alpha).map(|_| ()),
        _ => unreachable!("batched path only handles per-step algorithms"),
    }
}

/// Row of a side-by-side algorithm comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub epoch1_train_error: f64,
    pub epoch1_test_error: f64,
    pub final_train_error: f64,
    pub final_test_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>14} {:>14} {:>13} {:>13}",
            "algorithm", "train@1", "test@1", "train(final)", "test(final)"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {:>13.2}% {:>13.2}% {:>12.2}% {:>12.2}%",
                r.algorithm,
                100.0 * r.epoch1_train_error,
                100.0 * r.epoch1_test_error,
                100.0 * r.final_train_error,
                100.0 * r.final_test_error,
            )?;
        }
        Ok(())
    }
}

/// Run every config on the same dataset pair and tabulate epoch-1 and final
/// errors side by side. Needs at least two configs to compare.
pub fn compare_algorithms(
    configs: &[ExperimentConfig],
    train: &Dataset,
    test: &Dataset,
) -> Result<(ComparisonTable, Vec<RunMetrics>)> {
    if configs.len() < 2 {
        return Err(Error::config("comparison needs at least two configs"));
    }
    let mut rows = Vec::with_capacity(configs.len());
    let mut all = Vec::with_capacity(configs.len());
    for config in configs {
        let metrics = run_experiment(config, train, test, &RunOptions::default())?;
        let epoch1 = metrics
            .records
            .get(1)
            .ok_or_else(|| Error::config("comparison requires at least one epoch"))?;
        rows.push(ComparisonRow {
            algorithm: config.train.algorithm.cli_name().to_string(),
            epoch1_train_error: epoch1.train_error,
            epoch1_test_error: epoch1.test_error,
            final_train_error: metrics.final_train_error,
            final_test_error: metrics.final_test_error,
        });
        all.push(metrics);
    }
    Ok((ComparisonTable { rows }, all))
}

pub fn write_metrics_csv(metrics: &RunMetrics, path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_error,test_error,wall_ms,dw_norms\n");
    for r in &metrics.records {
        let norms: Vec<String> = r.dw_norms.iter().map(|n| format!("{n}")).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.train_error,
            r.test_error,
            r.wall_ms,
            norms.join(";")
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Strict parser for the CSV written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut offset = 0u64;
    for (i, line) in text.lines().enumerate() {
        let line_start = offset;
        offset += line.len() as u64 + 1;
        if i == 0 {
            if line != "epoch,train_error,test_error,wall_ms,dw_norms" {
                return Err(Error::format(&file, 0, "unexpected CSV header"));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format(
                &file,
                line_start,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::format(&file, line_start, format!("bad float '{s}'")))
        };
        let dw_norms = if fields[4].is_empty() {
            Vec::new()
        } else {
            fields[4]
                .split(';')
                .map(parse_f)
                .collect::<Result<Vec<f64>>>()?
        };
        records.push(EpochRecord {
            epoch: fields[0]
                .parse()
                .map_err(|_| Error::format(&file, line_start, "bad epoch"))?,
            train_error: parse_f(fields[1])?,
            test_error: parse_f(fields[2])?,
            wall_ms: fields[3]
                .parse()
                .map_err(|_| Error::format(&file, line_start, "bad wall_ms"))?,
            dw_norms,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_two_moons;

    fn moons_pair() -> (Dataset, Dataset) {
        (
            synth_two_moons(120, 0.1, 40).unwrap(),
            synth_two_moons(60, 0.1, 41).unwrap(),
        )
    }

    fn alg2_config(dims: Vec<usize>, epochs: usize) -> ExperimentConfig {
        let mut train = TrainConfig::new(Algorithm::ErAlg2);
        train.epochs = epochs;
        train.seed = 7;
        ExperimentConfig {
            train,
            dims,
            dataset: "two-moons".into(),
            augment_bias: false,
        }
    }

    #[test]
    fn invalid_dims_rejected_before_compute() {
        let (train, test) = moons_pair();
        let config = alg2_config(vec![3, 4, 2], 1); // wrong input width
        assert!(run_experiment(&config, &train, &test, &RunOptions::default()).is_err());

        let config = alg2_config(vec![2, 4, 3], 1); // wrong class count
        assert!(run_experiment(&config, &train, &test, &RunOptions::default()).is_err());
    }

    #[test]
    fn invalid_batch_combination_rejected() {
        let (train, test) = moons_pair();
        let mut config = alg2_config(vec![2, 4, 2], 1);
        config.train.batch_size = BatchSize::Fixed(10);
        let err = run_experiment(&config, &train, &test, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn records_start_at_epoch_zero_and_increase() {
        let (train, test) = moons_pair();
        let config = alg2_config(vec![2, 6, 2], 3);
        let metrics = run_experiment(&config, &train, &test, &RunOptions::default()).unwrap();
        assert_eq!(metrics.records.len(), 4);
        for (i, r) in metrics.records.iter().enumerate() {
            assert_eq!(r.epoch, i);
            assert!((0.0..=1.0).contains(&r.train_error));
            assert!((0.0..=1.0).contains(&r.test_error));
        }
        assert_eq!(metrics.records[0].dw_norms, vec![0.0, 0.0]);
    }

    #[test]
    fn bp_on_moons_improves_over_training() {
        let (train, test) = moons_pair();
        let mut config = alg2_config(vec![2, 6, 2], 60);
        config.train = TrainConfig::new(Algorithm::Bp);
        config.train.eta = 0.05;
        config.train.epochs = 60;
        config.train.seed = 7;
        let metrics = run_experiment(&config, &train, &test, &RunOptions::default()).unwrap();
        let first = metrics.records.first().unwrap().train_error;
        let last = metrics.final_train_error;
        assert!(
            last < first,
            "bp should reduce training error: {first} -> {last}"
        );
    }

    #[test]
    fn csv_and_json_roundtrip_and_determinism() {
        let (train, test) = moons_pair();
        let config = alg2_config(vec![2, 6, 2], 2);
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            csv_path: Some(dir.path().join("run.csv")),
            json_path: Some(dir.path().join("run.json")),
            checkpoint_path: Some(dir.path().join("run.ermlp")),
            record_timing: false,
        };
        let metrics = run_experiment(&config, &train, &test, &opts).unwrap();

        // CSV round-trips to the same records.
        let parsed = read_metrics_csv(&dir.path().join("run.csv")).unwrap();
        assert_eq!(parsed, metrics.records);

        // JSON round-trips.
        let json = std::fs::read_to_string(dir.path().join("run.json")).unwrap();
        let back: RunMetrics = serde_json::from_str(&json).unwrap();
        assert_eq!(back.records, metrics.records);
        assert_eq!(back.final_test_error, metrics.final_test_error);

        // Reruns are byte-identical with timing capture off.
        let opts2 = RunOptions {
            csv_path: Some(dir.path().join("run2.csv")),
            ..RunOptions::default()
        };
        run_experiment(&config, &train, &test, &opts2).unwrap();
        let a = std::fs::read(dir.path().join("run.csv")).unwrap();
        let b = std::fs::read(dir.path().join("run2.csv")).unwrap();
        assert_eq!(a, b);

        // Checkpoint is loadable and matches the trained dims.
        let loaded = crate::network::load_checkpoint(&dir.path().join("run.ermlp")).unwrap();
        assert_eq!(loaded.layer_dims(), &[2, 6, 2]);
    }

    #[test]
    fn epoch_zero_error_near_chance_for_ten_classes() {
        // Random init on a balanced 10-class problem must start in the
        // [0.8, 1.0] band.
        let mut labels = Vec::new();
        let mut data = Vec::new();
        let mut state = 9001u64;
        for i in 0..400 {
            labels.push(i % 10);
            for _ in 0..12 {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                data.push((state >> 11) as f64 / (1u64 << 53) as f64);
            }
        }
        let d = Dataset::from_labels("rand10", Matrix::new(400, 12, data).unwrap(), labels, 10)
            .unwrap();
        for seed in [0, 1, 2] {
            let state = init(&[12, 8, 10], InitSpec::new(seed)).unwrap();
            let err = evaluate_error(&state, &d).unwrap();
            assert!(
                (0.8..=1.0).contains(&err),
                "seed {seed}: epoch-0 error {err} outside the chance band"
            );
        }
    }

    #[test]
    fn comparison_needs_two_configs_and_is_deterministic() {
        let (train, test) = moons_pair();
        let config = alg2_config(vec![2, 6, 2], 1);
        assert!(compare_algorithms(std::slice::from_ref(&config), &train, &test).is_err());

        let mut bp = config.clone();
        bp.train = TrainConfig::new(Algorithm::Bp);
        bp.train.eta = 0.05;
        bp.train.seed = 7;

        let (t1, _) = compare_algorithms(&[config.clone(), bp.clone()], &train, &test).unwrap();
        let (t2, _) = compare_algorithms(&[config, bp], &train, &test).unwrap();
        assert_eq!(t1.rows.len(), 2);
        for (a, b) in t1.rows.iter().zip(&t2.rows) {
            assert_eq!(a.final_test_error, b.final_test_error);
            assert_eq!(a.epoch1_test_error, b.epoch1_test_error);
        }
        // Render does not panic and contains both algorithm names.
        let rendered = t1.to_string();
        assert!(rendered.contains("er-alg2") && rendered.contains("bp"));
    }
}
