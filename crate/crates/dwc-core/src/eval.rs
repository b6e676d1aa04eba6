//! Experiment suite: charging-efficiency comparison over a held-out test
//! segment, dataset-size and update-interval sweeps, and a computational
//! delay CDF.
//!
//! Charging efficiency is represented, as in the control loop, by the
//! average electromagnetic strength harvested over the test predictions;
//! no coupling-circuit power model is involved.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::controller::{PolicyKind, Predictor, World, WorldConfig};
use crate::dataset::{prepare, FeatureVector};
use crate::error::{Error, Result};
use crate::field_sim::FieldConfig;
use crate::lstm::{train, TrainConfig};

/// Average harvested strength of one policy over the test segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub policy: PolicyKind,
    pub n_predictions: usize,
    pub avg_strength: f64,
    /// First simulated step, for per-step row numbering.
    pub first_step: u64,
    pub per_step: Vec<f64>,
    /// `100 * (avg - avg_base) / avg_base`; 0 when the base average is 0.
    pub gain_vs_base_percent: f64,
}

/// Wall-clock per-prediction delay statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    /// Per-prediction delays in milliseconds, in measurement order.
    pub samples: Vec<f64>,
    pub mean_ms: f64,
    /// Smallest delay with cumulative fraction >= 0.95.
    pub p95_ms: f64,
    /// Sorted `(delay_ms, cumulative fraction)` pairs ending at 1.0.
    pub cdf: Vec<(f64, f64)>,
}

/// A field, its measured feature stream, and the held-out segment the
/// efficiency experiments run on.
#[derive(Debug, Clone)]
pub struct EvalWorld {
    pub field: FieldConfig,
    pub world: WorldConfig,
    pub raw: Vec<FeatureVector>,
    /// First step of the held-out test segment.
    pub test_start: u64,
}

impl EvalWorld {
    pub fn new(
        field: FieldConfig,
        world: WorldConfig,
        raw: Vec<FeatureVector>,
        test_start: u64,
    ) -> Self {
        EvalWorld {
            field,
            world,
            raw,
            test_start,
        }
    }

    fn test_len(&self) -> usize {
        self.raw.len().saturating_sub(self.test_start as usize)
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn run_policy(
    setup: &EvalWorld,
    policy: PolicyKind,
    predictor: Option<&Predictor>,
    n: usize,
) -> Result<Vec<f64>> {
    let config = WorldConfig {
        policy,
        ..setup.world.clone()
    };
    let mut world = World::new(
        setup.field.clone(),
        config,
        setup.raw.clone(),
        predictor.cloned(),
    )?;
    let records = world.run(setup.test_start, n)?;
    Ok(records.into_iter().map(|r| r.achieved_strength).collect())
}

/// Runs `n` sequential closed-loop steps on the held-out segment and
/// averages the harvested strength. The base policy is always evaluated
/// alongside to fill the gain column.
pub fn evaluate_efficiency(
    setup: &EvalWorld,
    policy: PolicyKind,
    predictor: Option<&Predictor>,
    n: usize,
) -> Result<EfficiencyReport> {
    if n == 0 {
        return Err(Error::argument("need at least one prediction"));
    }
    if setup.test_len() < n {
        return Err(Error::argument(format!(
            "test segment has {} steps, need {n}",
            setup.test_len()
        )));
    }
    policy.validate()?;
    let per_step = run_policy(setup, policy, predictor, n)?;
    let avg = mean(&per_step);
    let gain = if policy == PolicyKind::Base {
        0.0
    } else {
        let base = mean(&run_policy(setup, PolicyKind::Base, None, n)?);
        if base > 0.0 {
            100.0 * (avg - base) / base
        } else {
            0.0
        }
    };
    Ok(EfficiencyReport {
        policy,
        n_predictions: n,
        avg_strength: avg,
        first_step: setup.test_start,
        per_step,
        gain_vs_base_percent: gain,
    })
}

/// Windowing geometry for sweep retraining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub l: usize,
    pub f: usize,
    pub val_fraction: f64,
    pub test_rows: usize,
    /// Feature-stream length produced by data generation.
    pub n_steps: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            l: 10,
            f: 1,
            val_fraction: 0.10,
            test_rows: 600,
            n_steps: 6000,
        }
    }
}

/// Trains a fresh model on the first `size` raw records for each size and
/// evaluates it on the shared test segment.
///
/// Records overlapping the test segment are never trained on: the usable
/// prefix is capped at `raw.len() - test_rows`, so the largest sweep sizes
/// train on exactly the same pool as the main pipeline.
pub fn sweep_dataset_size(
    setup: &EvalWorld,
    sizes: &[usize],
    spec: &DatasetSpec,
    train_cfg: &TrainConfig,
    n: usize,
) -> Result<Vec<(usize, EfficiencyReport)>> {
    let interval = match setup.world.policy {
        PolicyKind::Lstm {
            update_interval_percent,
        } => update_interval_percent,
        _ => 100.0,
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size > setup.raw.len() {
            return Err(Error::argument(format!(
                "sweep size {size} exceeds the {}-record dataset",
                setup.raw.len()
            )));
        }
        if size < spec.l + spec.f {
            return Err(Error::argument(format!(
                "sweep size {size} is below the minimum {} (l + f)",
                spec.l + spec.f
            )));
        }
        let usable = size.min(setup.raw.len().saturating_sub(spec.test_rows));
        let splits = prepare(&setup.raw[..usable], spec.l, spec.f, spec.val_fraction, 0)?;
        let (params, _) = train(&splits, train_cfg)?;
        let ckpt = crate::lstm::Checkpoint::new(
            &params,
            &splits.scaler,
            spec.l,
            spec.f,
            train_cfg.clone(),
            crate::lstm::TrainHistory {
                epochs: vec![],
                best_epoch: 0,
                best_val_mse: f64::NAN,
                baseline_val_mse: f64::NAN,
            },
        );
        let predictor = Predictor::from_checkpoint(&ckpt)?;
        let report = evaluate_efficiency(
            setup,
            PolicyKind::Lstm {
                update_interval_percent: interval,
            },
            Some(&predictor),
            n,
        )?;
        rows.push((size, report));
    }
    Ok(rows)
}

/// Evaluates one fixed model at several update-interval percentages on the
/// shared test segment.
pub fn sweep_update_interval(
    setup: &EvalWorld,
    percentages: &[f64],
    predictor: &Predictor,
    n: usize,
) -> Result<Vec<(f64, EfficiencyReport)>> {
    percentages
        .iter()
        .map(|&p| {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::argument(format!(
                    "update interval {p} outside [0, 100]"
                )));
            }
            let report = evaluate_efficiency(
                setup,
                PolicyKind::Lstm {
                    update_interval_percent: p,
                },
                Some(predictor),
                n,
            )?;
            Ok((p, report))
        })
        .collect()
}

/// Times `n` predictions end to end — scaling, forward pass, de-scaling —
/// on a monotonic clock, after 10 unrecorded warm-up predictions. History
/// windows cycle through the provided feature stream.
pub fn measure_delay(
    predictor: &Predictor,
    raw: &[FeatureVector],
    n: usize,
) -> Result<DelayReport> {
    if n == 0 {
        return Err(Error::argument("need at least one delay sample"));
    }
    let l = predictor.lookback();
    if raw.len() < l {
        return Err(Error::argument(format!(
            "need at least {l} feature vectors for a history window"
        )));
    }
    let n_windows = raw.len() - l + 1;
    let window_at = |i: usize| {
        let start = i % n_windows;
        &raw[start..start + l]
    };

    const WARM_UP: usize = 10;
    for i in 0..WARM_UP {
        predictor.predict_position(window_at(i))?;
    }

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let history = window_at(WARM_UP + i);
        let start = Instant::now();
        let _ = predictor.predict_position(history)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let cdf: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, (i + 1) as f64 / n as f64))
        .collect();
    let p95_index = ((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1;
    Ok(DelayReport {
        mean_ms: mean(&samples),
        p95_ms: sorted[p95_index],
        cdf,
        samples,
    })
}

/// Output encoding for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// A named, self-contained report document.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub name: String,
    pub content: String,
}

/// Versioned JSON wrapper for efficiency reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyDoc {
    pub format_version: u32,
    pub reports: Vec<EfficiencyReport>,
}

/// Versioned JSON wrapper for a delay report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDoc {
    pub format_version: u32,
    pub report: DelayReport,
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Renders reports as deterministic documents suitable for plotting.
///
/// CSV yields one per-step document (`policy,step,strength`), one summary
/// document (`policy,n,avg_strength,gain_vs_base_percent`), and for the
/// delay report a two-column CDF. JSON yields schema-versioned documents.
pub fn emit_report(
    reports: &[EfficiencyReport],
    delay: Option<&DelayReport>,
    format: ReportFormat,
) -> Result<Vec<ReportDocument>> {
    if reports.is_empty() && delay.is_none() {
        return Err(Error::argument("nothing to report"));
    }
    let mut docs = Vec::new();
    match format {
        ReportFormat::Csv => {
            if !reports.is_empty() {
                let mut steps = String::from("policy,step,strength\n");
                let mut summary = String::from("policy,n,avg_strength,gain_vs_base_percent\n");
                for r in reports {
                    for (i, s) in r.per_step.iter().enumerate() {
                        steps.push_str(&format!(
                            "{},{},{}\n",
                            r.policy.label(),
                            r.first_step + i as u64,
                            s
                        ));
                    }
                    summary.push_str(&format!(
                        "{},{},{},{}\n",
                        r.policy.label(),
                        r.n_predictions,
                        r.avg_strength,
                        r.gain_vs_base_percent
                    ));
                }
                docs.push(ReportDocument {
                    name: "efficiency_steps.csv".into(),
                    content: steps,
                });
                docs.push(ReportDocument {
                    name: "efficiency_summary.csv".into(),
                    content: summary,
                });
            }
            if let Some(d) = delay {
                let mut cdf = String::from("delay_ms,cum_fraction\n");
                for (delay_ms, fraction) in &d.cdf {
                    cdf.push_str(&format!("{delay_ms},{fraction}\n"));
                }
                docs.push(ReportDocument {
                    name: "delay_cdf.csv".into(),
                    content: cdf,
                });
            }
        }
        ReportFormat::Json => {
            if !reports.is_empty() {
                let doc = EfficiencyDoc {
                    format_version: REPORT_FORMAT_VERSION,
                    reports: reports.to_vec(),
                };
                docs.push(ReportDocument {
                    name: "efficiency.json".into(),
                    content: serde_json::to_string(&doc)
                        .map_err(|e| Error::format(e.to_string()))?,
                });
            }
            if let Some(d) = delay {
                let doc = DelayDoc {
                    format_version: REPORT_FORMAT_VERSION,
                    report: d.clone(),
                };
                docs.push(ReportDocument {
                    name: "delay.json".into(),
                    content: serde_json::to_string(&doc)
                        .map_err(|e| Error::format(e.to_string()))?,
                });
            }
        }
    }
    Ok(docs)
}

/// Parses an efficiency JSON document back into reports.
pub fn parse_efficiency_json(text: &str) -> Result<EfficiencyDoc> {
    let doc: EfficiencyDoc =
        serde_json::from_str(text).map_err(|e| Error::format(e.to_string()))?;
    if doc.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported report version {}",
            doc.format_version
        )));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::tests::trained_world_parts;
    use crate::field_sim::{argmax_point, Field};

    fn zero_field() -> FieldConfig {
        FieldConfig {
            source_amplitudes: vec![0.0; 3],
            noise_std: 0.0,
            ..FieldConfig::default()
        }
    }

    fn small_eval_world() -> EvalWorld {
        let (config, raw, _) = trained_world_parts(false);
        EvalWorld::new(FieldConfig::default(), config, raw, 150)
    }

    #[test]
    fn zero_field_averages_zero_for_every_policy() {
        let (config, raw, predictor) = trained_world_parts(false);
        let setup = EvalWorld::new(zero_field(), config, raw, 150);
        for (policy, pred) in [
            (PolicyKind::Base, None),
            (
                PolicyKind::Lstm {
                    update_interval_percent: 100.0,
                },
                Some(&predictor),
            ),
            (PolicyKind::Oracle, None),
        ] {
            let report = evaluate_efficiency(&setup, policy, pred, 50).unwrap();
            assert_eq!(report.avg_strength, 0.0);
            assert_eq!(report.gain_vs_base_percent, 0.0);
        }
    }

    #[test]
    fn oracle_average_equals_mean_of_maxima() {
        let setup = small_eval_world();
        let report = evaluate_efficiency(&setup, PolicyKind::Oracle, None, 60).unwrap();
        let field = Field::new(setup.field.clone()).unwrap();
        let points = field.generate_points();
        let mut maxima = Vec::new();
        for step in 150..210u64 {
            let sample = field.sample_all(&points, step as f64 * 0.2).unwrap();
            maxima.push(argmax_point(&sample).unwrap().1);
        }
        let expect = maxima.iter().sum::<f64>() / maxima.len() as f64;
        assert!((report.avg_strength - expect).abs() < 1e-12);
    }

    #[test]
    fn oracle_dominates_and_gain_formula_holds() {
        let (config, raw, predictor) = trained_world_parts(false);
        let setup = EvalWorld::new(FieldConfig::default(), config, raw, 150);
        let n = 60;
        let base = evaluate_efficiency(&setup, PolicyKind::Base, None, n).unwrap();
        let lstm = evaluate_efficiency(
            &setup,
            PolicyKind::Lstm {
                update_interval_percent: 100.0,
            },
            Some(&predictor),
            n,
        )
        .unwrap();
        let oracle = evaluate_efficiency(&setup, PolicyKind::Oracle, None, n).unwrap();
        assert!(lstm.avg_strength <= oracle.avg_strength + 1e-12);
        assert!(base.avg_strength <= oracle.avg_strength + 1e-12);
        let expect_gain =
            100.0 * (lstm.avg_strength - base.avg_strength) / base.avg_strength;
        assert!((lstm.gain_vs_base_percent - expect_gain).abs() < 1e-9);
        assert_eq!(base.gain_vs_base_percent, 0.0);
        // avg is the mean of the per-step list
        assert!(
            (lstm.avg_strength - lstm.per_step.iter().sum::<f64>() / n as f64).abs() < 1e-12
        );
    }

    #[test]
    fn test_segment_too_short_is_an_argument_error() {
        let setup = small_eval_world();
        let n = setup.raw.len(); // longer than the segment after test_start
        assert!(matches!(
            evaluate_efficiency(&setup, PolicyKind::Base, None, n),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn update_interval_sweep_trends() {
        let (config, raw, predictor) = trained_world_parts(false);
        let setup = EvalWorld::new(FieldConfig::default(), config, raw, 150);
        let rows =
            sweep_update_interval(&setup, &[0.0, 100.0, 100.0], &predictor, 60).unwrap();
        let base = evaluate_efficiency(&setup, PolicyKind::Base, None, 60).unwrap();
        // 0% degenerates to base exactly
        assert!((rows[0].1.avg_strength - base.avg_strength).abs() < 1e-12);
        // identical cells give identical rows
        assert_eq!(rows[1].1, rows[2].1);

        assert!(matches!(
            sweep_update_interval(&setup, &[150.0], &predictor, 10),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn dataset_size_sweep_shapes_and_determinism() {
        let setup = small_eval_world();
        let spec = DatasetSpec {
            l: 10,
            f: 1,
            val_fraction: 0.1,
            test_rows: 70,
            n_steps: setup.raw.len(),
        };
        let cfg = TrainConfig {
            learning_rate: 0.02,
            batch_size: 16,
            max_epochs: 3,
            hidden_units: 4,
            rng_seed: 9,
            ..TrainConfig::default()
        };
        let rows = sweep_dataset_size(&setup, &[60, 60], &spec, &cfg, 40).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].1, rows[1].1); // same size, same seed

        assert!(matches!(
            sweep_dataset_size(&setup, &[5], &spec, &cfg, 40),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            sweep_dataset_size(&setup, &[10_000], &spec, &cfg, 40),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn delay_report_has_a_valid_cdf() {
        let (_, raw, predictor) = trained_world_parts(false);
        let report = measure_delay(&predictor, &raw, 120).unwrap();
        assert_eq!(report.samples.len(), 120);
        assert!(report.mean_ms > 0.0);
        assert!(report.p95_ms >= report.cdf[0].0);
        let mut prev = (f64::NEG_INFINITY, 0.0);
        for &(d, frac) in &report.cdf {
            assert!(d >= prev.0);
            assert!(frac > prev.1);
            prev = (d, frac);
        }
        assert_eq!(report.cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn single_sample_delay_cdf() {
        let (_, raw, predictor) = trained_world_parts(false);
        let report = measure_delay(&predictor, &raw, 1).unwrap();
        assert_eq!(report.cdf.len(), 1);
        assert_eq!(report.cdf[0].1, 1.0);
        assert_eq!(report.p95_ms, report.cdf[0].0);
        assert!(matches!(
            measure_delay(&predictor, &raw, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn emit_csv_row_counts() {
        let report = EfficiencyReport {
            policy: PolicyKind::Base,
            n_predictions: 3,
            avg_strength: 2.0,
            first_step: 10,
            per_step: vec![1.0, 2.0, 3.0],
            gain_vs_base_percent: 0.0,
        };
        let docs = emit_report(&[report], None, ReportFormat::Csv).unwrap();
        assert_eq!(docs.len(), 2);
        let steps = &docs[0];
        assert_eq!(steps.name, "efficiency_steps.csv");
        assert_eq!(steps.content.lines().count(), 1 + 3);
        assert_eq!(steps.content.lines().nth(1).unwrap(), "base,10,1");
        let summary = &docs[1];
        assert_eq!(summary.content.lines().count(), 1 + 1);
        assert_eq!(summary.content.lines().nth(1).unwrap(), "base,3,2,0");
    }

    #[test]
    fn emit_delay_cdf_csv() {
        let delay = DelayReport {
            samples: vec![1.5, 0.5],
            mean_ms: 1.0,
            p95_ms: 1.5,
            cdf: vec![(0.5, 0.5), (1.5, 1.0)],
        };
        let docs = emit_report(&[], Some(&delay), ReportFormat::Csv).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].name, "delay_cdf.csv");
        assert_eq!(docs[0].content.lines().count(), 3);
        assert_eq!(docs[0].content.lines().nth(1).unwrap(), "0.5,0.5");
    }

    #[test]
    fn efficiency_json_roundtrip() {
        let report = EfficiencyReport {
            policy: PolicyKind::Lstm {
                update_interval_percent: 40.0,
            },
            n_predictions: 2,
            avg_strength: 1.5,
            first_step: 0,
            per_step: vec![1.0, 2.0],
            gain_vs_base_percent: 12.5,
        };
        let docs =
            emit_report(std::slice::from_ref(&report), None, ReportFormat::Json).unwrap();
        let parsed = parse_efficiency_json(&docs[0].content).unwrap();
        assert_eq!(parsed.reports, vec![report]);

        assert!(matches!(
            emit_report(&[], None, ReportFormat::Json),
            Err(Error::Argument(_))
        ));
    }
}
