//! Command-line orchestration: `gen-data`, `train`, `tune`, `simulate`,
//! `eval`, and `delay` subcommands over a JSON run config.
//!
//! Every subcommand is deterministic given (config, seed), except the
//! wall-clock delay measurement. Flags override config keys. On failure
//! the binary prints a single `error: ...` line and exits nonzero.

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::controller::{write_trace_csv, PolicyKind, Predictor, World, WorldConfig};
use crate::dataset::{build_raw, prepare, read_raw_csv, write_raw_csv, FeatureVector};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, evaluate_efficiency, measure_delay, sweep_dataset_size,
    sweep_update_interval, DatasetSpec, EvalWorld, ReportFormat,
};
use crate::field_sim::{write_samples_csv, Field, FieldConfig};
use crate::lstm::{
    grid_search, save_checkpoint, train, write_grid_csv, write_history_csv, Checkpoint,
    GridSpec, TrainConfig,
};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Evaluation stage parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    /// Policies compared by `eval`: any of base, lstm, oracle.
    pub policies: Vec<String>,
    /// Number of test predictions per efficiency report.
    pub n_predictions: usize,
    /// Training-set sizes for the dataset-size sweep; empty disables it.
    pub dataset_sizes: Vec<usize>,
    /// Update-interval percentages for the interval sweep; empty disables.
    pub update_intervals: Vec<f64>,
    /// Wall-clock samples for the delay measurement.
    pub delay_samples: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            policies: vec!["base".into(), "lstm".into(), "oracle".into()],
            n_predictions: 600,
            dataset_sizes: vec![500, 1000, 2000, 3000, 4000, 5000, 6000],
            update_intervals: vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0],
            delay_samples: 600,
        }
    }
}

/// Tuning stage parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub grid: GridSpec,
    /// Reduced epoch budget used for every grid cell.
    pub epochs_per_cell: usize,
}

impl Default for TuneSpec {
    fn default() -> Self {
        TuneSpec {
            grid: GridSpec::default(),
            epochs_per_cell: 5,
        }
    }
}

/// The full pipeline configuration, serialized as a versioned JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub format_version: u32,
    pub field: FieldConfig,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub world: WorldConfig,
    pub tune: TuneSpec,
    pub eval: EvalSpec,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            field: FieldConfig::default(),
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
            world: WorldConfig {
                policy: PolicyKind::Lstm {
                    update_interval_percent: 100.0,
                },
                ..WorldConfig::default()
            },
            tune: TuneSpec::default(),
            eval: EvalSpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()))?;
        if config.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported config version {}",
                config.format_version
            )));
        }
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dwc",
    about = "Dynamic wireless charging simulator: field generation, LSTM training, and closed-loop evaluation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the field sample stream and the raw feature dataset CSV.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the field RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of 200 ms steps to generate.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the full per-point sample stream CSV.
        #[arg(long)]
        emit_samples: bool,
    },
    /// Train a model on a raw dataset CSV; writes checkpoint and history.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the learning rate (0 keeps the initialization).
        #[arg(long)]
        lr: Option<f64>,
        /// Override the training RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the scaled windowed dataset as JSON.
        #[arg(long)]
        emit_windowed: bool,
    },
    /// Grid-search hyperparameters; writes the results table and the best
    /// config.
    Tune {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Epoch budget per grid cell.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the closed loop over the test segment and write the step trace.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Policies to trace, comma-separated.
        #[arg(long)]
        policies: Option<String>,
        /// Number of steps to simulate.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Efficiency comparison, sweeps, and delay CDF on the test segment.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Policies to compare, comma-separated (base,lstm,oracle).
        #[arg(long)]
        policies: Option<String>,
        /// Number of test predictions.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Measure per-prediction computational delay and write its CDF.
    Delay {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of delay samples.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn ensure_output_dir(config: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

fn load_raw(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = fs::File::open(path)?;
    read_raw_csv(BufReader::new(file))
}

fn parse_policies(
    flag: &Option<String>,
    config: &RunConfig,
) -> Result<Vec<PolicyKind>> {
    let names: Vec<String> = match flag {
        Some(s) => s.split(',').map(|p| p.trim().to_string()).collect(),
        None => config.eval.policies.clone(),
    };
    let interval = match config.world.policy {
        PolicyKind::Lstm {
            update_interval_percent,
        } => update_interval_percent,
        _ => 100.0,
    };
    names
        .iter()
        .map(|name| match name.as_str() {
            "base" => Ok(PolicyKind::Base),
            "lstm" => Ok(PolicyKind::Lstm {
                update_interval_percent: interval,
            }),
            "oracle" => Ok(PolicyKind::Oracle),
            other => Err(Error::argument(format!("unknown policy '{other}'"))),
        })
        .collect()
}

/// Generates the synthetic feature stream for a config.
pub fn generate_features(field: &FieldConfig, steps: usize) -> Result<Vec<FeatureVector>> {
    let sim = Field::new(field.clone())?;
    let points = sim.generate_points();
    let samples = sim.sample_stream(&points, steps)?;
    build_raw(&samples, &points)
}

fn cmd_gen_data(
    config: RunConfig,
    seed: Option<u64>,
    steps: Option<usize>,
    output: Option<PathBuf>,
    emit_samples: bool,
) -> Result<()> {
    let mut field = config.field.clone();
    if let Some(s) = seed {
        field.rng_seed = s;
    }
    let steps = steps.unwrap_or(config.dataset.n_steps);
    let dir = ensure_output_dir(&config, output)?;

    let sim = Field::new(field.clone())?;
    let points = sim.generate_points();
    let samples = sim.sample_stream(&points, steps)?;
    let raw = build_raw(&samples, &points)?;

    let mut csv = Vec::new();
    write_raw_csv(&mut csv, &raw)?;
    let path = write_file(&dir, "raw.csv", &String::from_utf8_lossy(&csv))?;

    let field_json =
        serde_json::to_string_pretty(&field).map_err(|e| Error::format(e.to_string()))?;
    write_file(&dir, "field_config.json", &field_json)?;

    if emit_samples {
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &points, &samples)?;
        write_file(&dir, "samples.csv", &String::from_utf8_lossy(&buf))?;
    }

    println!("wrote {} rows to {}", raw.len(), path.display());
    Ok(())
}

fn cmd_train(
    config: RunConfig,
    data: PathBuf,
    epochs: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    emit_windowed: bool,
) -> Result<()> {
    let mut train_cfg = config.train.clone();
    if let Some(e) = epochs {
        train_cfg.max_epochs = e;
    }
    if let Some(rate) = lr {
        train_cfg.learning_rate = rate;
    }
    if let Some(s) = seed {
        train_cfg.rng_seed = s;
    }
    let dir = ensure_output_dir(&config, output)?;
    let raw = load_raw(&data)?;
    let ds = &config.dataset;
    let splits = prepare(&raw, ds.l, ds.f, ds.val_fraction, ds.test_rows)?;

    if emit_windowed {
        // the chronological splits partition the full windowed set
        let mut full = splits.train.clone();
        full.features.extend(splits.val.features.iter().cloned());
        full.features.extend(splits.test.features.iter().cloned());
        full.labels.extend(splits.val.labels.iter().cloned());
        full.labels.extend(splits.test.labels.iter().cloned());
        let file = crate::dataset::WindowedFile::new(&full, &splits.scaler);
        write_file(&dir, "windowed.json", &file.to_json()?)?;
    }

    let (params, history) = train(&splits, &train_cfg)?;
    let ckpt_json = save_checkpoint(
        &params,
        &splits.scaler,
        ds.l,
        ds.f,
        train_cfg,
        history.clone(),
    )?;
    let ckpt_path = write_file(&dir, "checkpoint.json", &ckpt_json)?;

    let mut hist_csv = Vec::new();
    write_history_csv(&mut hist_csv, &history)?;
    write_file(&dir, "history.csv", &String::from_utf8_lossy(&hist_csv))?;

    println!(
        "trained {} epochs; best validation mse {} at epoch {}; checkpoint {}",
        history.epochs.len(),
        history.best_val_mse,
        history.best_epoch,
        ckpt_path.display()
    );
    Ok(())
}

fn cmd_tune(
    config: RunConfig,
    data: PathBuf,
    epochs: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut base = config.train.clone();
    base.max_epochs = epochs.unwrap_or(config.tune.epochs_per_cell);
    if let Some(s) = seed {
        base.rng_seed = s;
    }
    let dir = ensure_output_dir(&config, output)?;
    let raw = load_raw(&data)?;
    let ds = &config.dataset;
    let splits = prepare(&raw, ds.l, ds.f, ds.val_fraction, ds.test_rows)?;

    let (best, results) = grid_search(&splits, &base, &config.tune.grid)?;

    let mut csv = Vec::new();
    write_grid_csv(&mut csv, &results)?;
    let table_path = write_file(&dir, "grid_results.csv", &String::from_utf8_lossy(&csv))?;
    let best_json =
        serde_json::to_string_pretty(&best).map_err(|e| Error::format(e.to_string()))?;
    write_file(&dir, "best_config.json", &best_json)?;

    println!(
        "evaluated {} cells; best hidden={} batch={} lr={}; table {}",
        results.len(),
        best.hidden_units,
        best.batch_size,
        best.learning_rate,
        table_path.display()
    );
    Ok(())
}

fn load_predictor(checkpoint: &Option<PathBuf>) -> Result<Option<Predictor>> {
    match checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            Ok(Some(Predictor::from_checkpoint(&ckpt)?))
        }
        None => Ok(None),
    }
}

/// Test segment start: everything after the training/validation pool.
fn test_start(raw_len: usize, test_rows: usize) -> Result<u64> {
    if raw_len <= test_rows {
        return Err(Error::argument(format!(
            "dataset has {raw_len} records, cannot hold a {test_rows}-step test segment"
        )));
    }
    Ok((raw_len - test_rows) as u64)
}

fn cmd_simulate(
    config: RunConfig,
    data: PathBuf,
    checkpoint: Option<PathBuf>,
    policies: Option<String>,
    steps: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut field = config.field.clone();
    if let Some(s) = seed {
        field.rng_seed = s;
    }
    let dir = ensure_output_dir(&config, output)?;
    let raw = load_raw(&data)?;
    let predictor = load_predictor(&checkpoint)?;
    let policies = parse_policies(&policies, &config)?;
    let start = test_start(raw.len(), config.dataset.test_rows)?;
    let n = steps.unwrap_or(config.eval.n_predictions).min(
        raw.len() - start as usize,
    );

    let mut records = Vec::new();
    for policy in policies {
        let world_cfg = WorldConfig {
            policy,
            ..config.world.clone()
        };
        let mut world = World::new(field.clone(), world_cfg, raw.clone(), predictor.clone())?;
        records.extend(world.run(start, n)?);
    }

    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &records)?;
    let path = write_file(&dir, "trace.csv", &String::from_utf8_lossy(&csv))?;
    println!("wrote {} trace rows to {}", records.len(), path.display());
    Ok(())
}

fn cmd_eval(
    config: RunConfig,
    data: PathBuf,
    checkpoint: Option<PathBuf>,
    policies: Option<String>,
    steps: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut field = config.field.clone();
    if let Some(s) = seed {
        field.rng_seed = s;
    }
    let dir = ensure_output_dir(&config, output)?;
    let raw = load_raw(&data)?;
    let predictor = load_predictor(&checkpoint)?;
    let policies = parse_policies(&policies, &config)?;
    let n = steps.unwrap_or(config.eval.n_predictions);
    let start = test_start(raw.len(), config.dataset.test_rows)?;

    let setup = EvalWorld::new(field, config.world.clone(), raw.clone(), start);

    let mut reports = Vec::new();
    for policy in policies {
        let report = evaluate_efficiency(&setup, policy, predictor.as_ref(), n)?;
        println!(
            "policy {}: avg strength {:.4} over {} predictions (gain vs base {:.1}%)",
            policy.label(),
            report.avg_strength,
            report.n_predictions,
            report.gain_vs_base_percent
        );
        reports.push(report);
    }

    // delay measurement rides along when a model is present
    let delay = match &predictor {
        Some(p) => {
            let report = measure_delay(p, &raw[start as usize..], config.eval.delay_samples)?;
            println!(
                "delay over {} predictions: mean {:.3} ms, p95 {:.3} ms",
                report.samples.len(),
                report.mean_ms,
                report.p95_ms
            );
            Some(report)
        }
        None => None,
    };

    for doc in emit_report(&reports, delay.as_ref(), ReportFormat::Csv)? {
        write_file(&dir, &doc.name, &doc.content)?;
    }
    for doc in emit_report(&reports, delay.as_ref(), ReportFormat::Json)? {
        write_file(&dir, &doc.name, &doc.content)?;
    }

    if !config.eval.update_intervals.is_empty() {
        let p = predictor.as_ref().ok_or_else(|| {
            Error::State("the update-interval sweep needs --checkpoint".into())
        })?;
        let rows = sweep_update_interval(&setup, &config.eval.update_intervals, p, n)?;
        let mut csv = String::from("percent,avg_strength\n");
        for (percent, report) in &rows {
            csv.push_str(&format!("{percent},{}\n", report.avg_strength));
        }
        write_file(&dir, "update_interval_sweep.csv", &csv)?;
    }

    if !config.eval.dataset_sizes.is_empty() {
        let rows = sweep_dataset_size(
            &setup,
            &config.eval.dataset_sizes,
            &config.dataset,
            &config.train,
            n,
        )?;
        let mut csv = String::from("size,avg_strength\n");
        for (size, report) in &rows {
            csv.push_str(&format!("{size},{}\n", report.avg_strength));
        }
        write_file(&dir, "dataset_size_sweep.csv", &csv)?;
    }

    println!("reports written to {}", dir.display());
    Ok(())
}

fn cmd_delay(
    config: RunConfig,
    data: PathBuf,
    checkpoint: PathBuf,
    steps: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let dir = ensure_output_dir(&config, output)?;
    let raw = load_raw(&data)?;
    let ckpt = Checkpoint::load(&checkpoint)?;
    let predictor = Predictor::from_checkpoint(&ckpt)?;
    let n = steps.unwrap_or(config.eval.delay_samples);

    let report = measure_delay(&predictor, &raw, n)?;
    for doc in emit_report(&[], Some(&report), ReportFormat::Csv)? {
        write_file(&dir, &doc.name, &doc.content)?;
    }
    for doc in emit_report(&[], Some(&report), ReportFormat::Json)? {
        write_file(&dir, &doc.name, &doc.content)?;
    }
    println!(
        "delay over {} predictions: mean {:.3} ms, p95 {:.3} ms",
        report.samples.len(),
        report.mean_ms,
        report.p95_ms
    );
    Ok(())
}

/// Parses argv and runs the requested subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            print!("{e}");
            std::process::exit(0);
        }
        _ => Error::argument(e.to_string()),
    })?;
    match cli.command {
        Command::GenData {
            config,
            seed,
            steps,
            output,
            emit_samples,
        } => cmd_gen_data(load_config(&config)?, seed, steps, output, emit_samples),
        Command::Train {
            config,
            data,
            epochs,
            lr,
            seed,
            output,
            emit_windowed,
        } => cmd_train(
            load_config(&config)?,
            data,
            epochs,
            lr,
            seed,
            output,
            emit_windowed,
        ),
        Command::Tune {
            config,
            data,
            epochs,
            seed,
            output,
        } => cmd_tune(load_config(&config)?, data, epochs, seed, output),
        Command::Simulate {
            config,
            data,
            checkpoint,
            policies,
            steps,
            seed,
            output,
        } => cmd_simulate(
            load_config(&config)?,
            data,
            checkpoint,
            policies,
            steps,
            seed,
            output,
        ),
        Command::Eval {
            config,
            data,
            checkpoint,
            policies,
            steps,
            seed,
            output,
        } => cmd_eval(
            load_config(&config)?,
            data,
            checkpoint,
            policies,
            steps,
            seed,
            output,
        ),
        Command::Delay {
            config,
            data,
            checkpoint,
            steps,
            output,
        } => cmd_delay(load_config(&config)?, data, checkpoint, steps, output),
    }
}
