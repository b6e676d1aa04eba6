//! Hyperparameter grid search over hidden units, batch size, and learning
//! rate, ranked by best validation MSE.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dataset::DatasetSplits;
use crate::error::{Error, Result};
use crate::seeding::derive_seed;

use super::train::{train, TrainConfig};

const STREAM_GRID: u64 = 0x67726964; // "grid"

/// The candidate sets. The default grid spans hidden units 40..=180 step
/// 20, batch sizes {16, 32, 64, 128, 256}, and learning rates 1e-2..1e-6
/// by decades: 8 x 5 x 5 = 200 cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub hidden_units: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            hidden_units: (40..=180).step_by(20).collect(),
            batch_sizes: vec![16, 32, 64, 128, 256],
            learning_rates: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        }
    }
}

impl GridSpec {
    pub fn n_cells(&self) -> usize {
        self.hidden_units.len() * self.batch_sizes.len() * self.learning_rates.len()
    }
}

/// Outcome of one grid cell. A divergent cell records its error and a NaN
/// validation MSE instead of failing the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellResult {
    pub hidden_units: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub val_mse: f64,
    pub epochs_run: usize,
    pub error: Option<String>,
}

/// Trains one model per grid cell (epoch budget from `base.max_epochs`)
/// and returns the argmin-validation-MSE config plus the full table.
///
/// Cells run in parallel when the pool allows it; each cell derives its
/// own seed from `(base.rng_seed, cell index)`, so results do not depend
/// on scheduling. `DWC_SIM_THREADS` caps the worker count.
pub fn grid_search(
    splits: &DatasetSplits,
    base: &TrainConfig,
    grid: &GridSpec,
) -> Result<(TrainConfig, Vec<GridCellResult>)> {
    if grid.n_cells() == 0 {
        return Err(Error::argument("empty hyperparameter grid"));
    }

    let mut cells = Vec::with_capacity(grid.n_cells());
    for &hidden in &grid.hidden_units {
        for &batch in &grid.batch_sizes {
            for &lr in &grid.learning_rates {
                cells.push((hidden, batch, lr));
            }
        }
    }

    let run_cell = |(index, &(hidden, batch, lr)): (usize, &(usize, usize, f64))| {
        let cfg = TrainConfig {
            hidden_units: hidden,
            batch_size: batch,
            learning_rate: lr,
            rng_seed: derive_seed(base.rng_seed, &[STREAM_GRID, index as u64]),
            ..base.clone()
        };
        match train(splits, &cfg) {
            Ok((_, history)) => GridCellResult {
                hidden_units: hidden,
                batch_size: batch,
                learning_rate: lr,
                val_mse: history.best_val_mse,
                epochs_run: history.epochs.len(),
                error: None,
            },
            Err(e) => GridCellResult {
                hidden_units: hidden,
                batch_size: batch,
                learning_rate: lr,
                val_mse: f64::NAN,
                epochs_run: 0,
                error: Some(e.to_string()),
            },
        }
    };

    let results: Vec<GridCellResult> = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(|| cells.par_iter().enumerate().map(run_cell).collect()),
        None => cells.par_iter().enumerate().map(run_cell).collect(),
    };

    let best = results
        .iter()
        .filter(|r| r.val_mse.is_finite())
        .min_by(|a, b| a.val_mse.total_cmp(&b.val_mse))
        .ok_or_else(|| Error::State("every grid cell failed to train".into()))?;

    let best_cfg = TrainConfig {
        hidden_units: best.hidden_units,
        batch_size: best.batch_size,
        learning_rate: best.learning_rate,
        ..base.clone()
    };
    Ok((best_cfg, results))
}

/// Worker cap from `DWC_SIM_THREADS`, if set and parseable.
pub(crate) fn thread_cap() -> Option<usize> {
    std::env::var("DWC_SIM_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Writes the results table as CSV:
/// `hidden_units,batch_size,learning_rate,val_mse,epochs_run`.
pub fn write_grid_csv<W: Write>(out: &mut W, results: &[GridCellResult]) -> Result<()> {
    writeln!(out, "hidden_units,batch_size,learning_rate,val_mse,epochs_run")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.hidden_units, r.batch_size, r.learning_rate, r.val_mse, r.epochs_run
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::train::tests::toy_splits;

    fn small_base() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 2,
            hidden_units: 4,
            rng_seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_grid_has_two_hundred_cells() {
        // Oracle: product of the candidate set sizes, 8 x 5 x 5.
        let grid = GridSpec::default();
        assert_eq!(grid.hidden_units, vec![40, 60, 80, 100, 120, 140, 160, 180]);
        assert_eq!(grid.n_cells(), 200);
    }

    #[test]
    fn single_cell_grid_returns_that_cell() {
        let splits = toy_splits(60, 5);
        let grid = GridSpec {
            hidden_units: vec![4],
            batch_sizes: vec![8],
            learning_rates: vec![0.01],
        };
        let (best, results) = grid_search(&splits, &small_base(), &grid).unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(best.hidden_units, 4);
        assert_eq!(best.batch_size, 8);
        assert_eq!(best.learning_rate, 0.01);
    }

    #[test]
    fn best_cell_minimizes_validation_mse() {
        let splits = toy_splits(80, 5);
        let grid = GridSpec {
            hidden_units: vec![2, 4],
            batch_sizes: vec![8],
            learning_rates: vec![0.02, 0.001],
        };
        let (best, results) = grid_search(&splits, &small_base(), &grid).unwrap();
        assert_eq!(results.len(), 4);
        let min = results
            .iter()
            .map(|r| r.val_mse)
            .fold(f64::INFINITY, f64::min);
        let chosen = results
            .iter()
            .find(|r| {
                r.hidden_units == best.hidden_units
                    && r.batch_size == best.batch_size
                    && r.learning_rate == best.learning_rate
            })
            .unwrap();
        assert_eq!(chosen.val_mse, min);
    }

    #[test]
    fn grid_search_is_deterministic() {
        let splits = toy_splits(60, 5);
        let grid = GridSpec {
            hidden_units: vec![2, 3],
            batch_sizes: vec![4, 8],
            learning_rates: vec![0.01],
        };
        let (_, a) = grid_search(&splits, &small_base(), &grid).unwrap();
        let (_, b) = grid_search(&splits, &small_base(), &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let splits = toy_splits(60, 5);
        let grid = GridSpec {
            hidden_units: vec![],
            batch_sizes: vec![8],
            learning_rates: vec![0.01],
        };
        assert!(matches!(
            grid_search(&splits, &small_base(), &grid),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn csv_table_shape() {
        let results = vec![GridCellResult {
            hidden_units: 4,
            batch_size: 8,
            learning_rate: 0.01,
            val_mse: 0.25,
            epochs_run: 2,
            error: None,
        }];
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &results).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "hidden_units,batch_size,learning_rate,val_mse,epochs_run"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "4,8,0.01,0.25,2");
    }
}
