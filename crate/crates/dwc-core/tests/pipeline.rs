//! End-to-end pipeline integration: field → features → splits → training →
//! checkpoint → closed-loop evaluation, at reduced scale.

use dwc_core::controller::{PolicyKind, Predictor};
use dwc_core::dataset::{build_raw, prepare, WindowedFile};
use dwc_core::eval::{evaluate_efficiency, measure_delay, EvalWorld};
use dwc_core::field_sim::{Field, FieldConfig};
use dwc_core::lstm::{load_checkpoint, save_checkpoint, train, TrainConfig};

const STEPS: usize = 1200;
const TEST_ROWS: usize = 150;

fn small_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.005,
        batch_size: 32,
        max_epochs: 8,
        hidden_units: 16,
        rng_seed: 42,
        ..TrainConfig::default()
    }
}

#[test]
fn full_pipeline_trains_and_beats_base() {
    let field_cfg = FieldConfig::default();
    let field = Field::new(field_cfg.clone()).unwrap();
    let points = field.generate_points();
    let samples = field.sample_stream(&points, STEPS).unwrap();
    let raw = build_raw(&samples, &points).unwrap();
    assert_eq!(raw.len(), STEPS);

    let splits = prepare(&raw, 10, 1, 0.10, TEST_ROWS).unwrap();
    assert_eq!(
        splits.train.len() + splits.val.len() + splits.test.len(),
        STEPS - 10
    );

    let cfg = small_train_config();
    let (params, history) = train(&splits, &cfg).unwrap();
    assert!(history.best_val_mse <= history.baseline_val_mse);

    // through the checkpoint, as the RSU would consume it
    let json = save_checkpoint(
        &params,
        &splits.scaler,
        splits.l,
        splits.f,
        cfg,
        history,
    )
    .unwrap();
    let ckpt = load_checkpoint(&json).unwrap();
    let predictor = Predictor::from_checkpoint(&ckpt).unwrap();

    let test_start = (STEPS - TEST_ROWS) as u64;
    let setup = EvalWorld::new(
        field_cfg,
        dwc_core::controller::WorldConfig::default(),
        raw,
        test_start,
    );
    let n = TEST_ROWS;
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

    assert!(oracle.avg_strength >= lstm.avg_strength - 1e-12);
    assert!(oracle.avg_strength >= base.avg_strength - 1e-12);
    assert!(
        lstm.avg_strength > base.avg_strength,
        "lstm {} vs base {}",
        lstm.avg_strength,
        base.avg_strength
    );

    // the delay harness runs on the same artifacts
    let delay = measure_delay(&predictor, &setup.raw[test_start as usize..], 50).unwrap();
    assert_eq!(delay.samples.len(), 50);
    assert_eq!(delay.cdf.last().unwrap().1, 1.0);
}

#[test]
fn windowed_dataset_file_roundtrips_through_json() {
    let field = Field::new(FieldConfig::default()).unwrap();
    let points = field.generate_points();
    let samples = field.sample_stream(&points, 60).unwrap();
    let raw = build_raw(&samples, &points).unwrap();
    let splits = prepare(&raw, 10, 1, 0.10, 10).unwrap();

    let file = WindowedFile::new(&splits.train, &splits.scaler);
    let json = file.to_json().unwrap();
    let back = WindowedFile::from_json(&json).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.features.len(), splits.train.len());
}
