//! Feature extraction, min-max scaling, and sliding-window restructuring.
//!
//! A field sample stream becomes a sequence of raw feature vectors
//! `(t_step, a, p_x, p_y)` — the strongest point of each 200 ms snapshot —
//! which is scaled to [0, 1] per dimension and windowed into feature/label
//! matrices: each row holds `l` consecutive scaled vectors and is labeled
//! with the `(p_x, p_y)` of the step that follows the window.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::field_sim::{argmax_point, FieldSample, MeasurementPoint, STEP_SECONDS};

/// Number of raw feature dimensions: time step, strength, x, y.
pub const FEATURE_DIM: usize = 4;

/// One raw dataset element: the strongest grid point of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Time-step index; consecutive steps are [`STEP_SECONDS`] apart.
    pub t_step: u64,
    /// Strength at the strongest point, in A/m.
    pub a: f64,
    /// Coordinates of the strongest point, in meters.
    pub p_x: f64,
    pub p_y: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; FEATURE_DIM] {
        [self.t_step as f64, self.a, self.p_x, self.p_y]
    }
}

/// Per-dimension min/max fitted on a raw feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mins: [f64; FEATURE_DIM],
    pub maxs: [f64; FEATURE_DIM],
}

impl ScalerParams {
    /// Per-dimension min and max over the fitting set only.
    pub fn fit(raw: &[FeatureVector]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::argument("cannot fit a scaler on an empty set"));
        }
        let mut mins = [f64::INFINITY; FEATURE_DIM];
        let mut maxs = [f64::NEG_INFINITY; FEATURE_DIM];
        for v in raw {
            let arr = v.to_array();
            for d in 0..FEATURE_DIM {
                mins[d] = mins[d].min(arr[d]);
                maxs[d] = maxs[d].max(arr[d]);
            }
        }
        Ok(ScalerParams { mins, maxs })
    }

    /// Maps each dimension to `(v - min) / (max - min)`. Degenerate
    /// (constant) dimensions map to 0. Values outside the fitted range are
    /// NOT clipped, preserving invertibility.
    pub fn apply(&self, v: [f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for d in 0..FEATURE_DIM {
            let range = self.maxs[d] - self.mins[d];
            out[d] = if range == 0.0 {
                0.0
            } else {
                (v[d] - self.mins[d]) / range
            };
        }
        out
    }

    /// Exact algebraic inverse of [`ScalerParams::apply`] on non-degenerate
    /// dimensions; degenerate dimensions return the fitted minimum.
    pub fn invert(&self, s: [f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for d in 0..FEATURE_DIM {
            let range = self.maxs[d] - self.mins[d];
            out[d] = if range == 0.0 {
                self.mins[d]
            } else {
                self.mins[d] + s[d] * range
            };
        }
        out
    }

    /// De-scales a predicted `(p_x, p_y)` pair (scaled dimensions 2 and 3).
    pub fn invert_position(&self, scaled: [f64; 2]) -> (f64, f64) {
        let full = self.invert([0.0, 0.0, scaled[0], scaled[1]]);
        (full[2], full[3])
    }
}

/// Sliding-window feature/label matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    /// Lookback length: scaled vectors per feature row.
    pub l: usize,
    /// Prediction horizon in steps.
    pub f: usize,
    /// N rows of width `l * FEATURE_DIM`.
    pub features: Vec<Vec<f64>>,
    /// Scaled `(p_x, p_y)` of the step `f` past each window.
    pub labels: Vec<[f64; 2]>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Converts a time-ordered sample stream into raw feature vectors.
///
/// Element `i` is `(i, strength, x, y)` of the argmax point of sample `i`.
/// The stream must be spaced exactly [`STEP_SECONDS`] apart.
pub fn build_raw(
    samples: &[FieldSample],
    points: &[MeasurementPoint],
) -> Result<Vec<FeatureVector>> {
    if samples.is_empty() {
        return Err(Error::argument("empty sample stream"));
    }
    const SPACING_TOL: f64 = 1e-9;
    for pair in samples.windows(2) {
        let dt = pair[1].t - pair[0].t;
        if (dt - STEP_SECONDS).abs() > SPACING_TOL {
            return Err(Error::format(format!(
                "irregular sample spacing: {dt} s between t={} and t={}",
                pair[0].t, pair[1].t
            )));
        }
    }
    samples
        .iter()
        .enumerate()
        .map(|(i, sample)| {
            if sample.strengths.len() != points.len() {
                return Err(Error::argument(
                    "sample width does not match the point grid",
                ));
            }
            let (idx, a) = argmax_point(sample)?;
            Ok(FeatureVector {
                t_step: i as u64,
                a,
                p_x: points[idx].x,
                p_y: points[idx].y,
            })
        })
        .collect()
}

/// Restructures scaled vectors into window rows.
///
/// Row `i` concatenates vectors `[i, i+l)`; its label is the `(p_x, p_y)`
/// components of vector `i + l + f - 1`. For `f = 1` this yields
/// `len - l` rows.
pub fn window(raw_scaled: &[[f64; FEATURE_DIM]], l: usize, f: usize) -> Result<WindowedDataset> {
    if l == 0 || f == 0 {
        return Err(Error::argument("window requires l >= 1 and f >= 1"));
    }
    let needed = l + f;
    if raw_scaled.len() < needed {
        return Err(Error::argument(format!(
            "need more than {} vectors to window with l={l}, f={f}; got {}",
            needed - 1,
            raw_scaled.len()
        )));
    }
    let n = raw_scaled.len() - l - (f - 1);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(l * FEATURE_DIM);
        for v in &raw_scaled[i..i + l] {
            row.extend_from_slice(v);
        }
        features.push(row);
        let target = raw_scaled[i + l + f - 1];
        labels.push([target[2], target[3]]);
    }
    Ok(WindowedDataset {
        l,
        f,
        features,
        labels,
    })
}

/// Chronological train/validation/test partition.
///
/// Test is the last `test_rows` rows, validation the last
/// `floor(val_fraction * remainder)` of what precedes it, train the rest.
pub fn split(
    ds: &WindowedDataset,
    val_fraction: f64,
    test_rows: usize,
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::argument("val_fraction must be in [0, 1)"));
    }
    let n = ds.len();
    if n <= test_rows {
        return Err(Error::argument(format!(
            "need more than {test_rows} rows to split; got {n}"
        )));
    }
    let remainder = n - test_rows;
    let val_n = (remainder as f64 * val_fraction).floor() as usize;
    let train_n = remainder - val_n;
    if train_n == 0 {
        return Err(Error::argument("split leaves no training rows"));
    }
    let take = |from: usize, to: usize| WindowedDataset {
        l: ds.l,
        f: ds.f,
        features: ds.features[from..to].to_vec(),
        labels: ds.labels[from..to].to_vec(),
    };
    Ok((
        take(0, train_n),
        take(train_n, remainder),
        take(remainder, n),
    ))
}

/// A fully prepared dataset: scaler fitted on the training range only,
/// windows built from the scaled stream, chronological splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub scaler: ScalerParams,
    pub l: usize,
    pub f: usize,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

/// Runs the scale-and-window pipeline with leakage-safe scaler fitting.
///
/// Split sizes are computed first; the scaler is fitted only on the raw
/// records covered by training windows and their labels (`[0, train_n + l
/// + f - 1)`), then the whole stream is scaled and windowed.
pub fn prepare(
    raw: &[FeatureVector],
    l: usize,
    f: usize,
    val_fraction: f64,
    test_rows: usize,
) -> Result<DatasetSplits> {
    if l == 0 || f == 0 {
        return Err(Error::argument("prepare requires l >= 1 and f >= 1"));
    }
    if raw.len() < l + f {
        return Err(Error::argument(format!(
            "need at least {} raw records for l={l}, f={f}; got {}",
            l + f,
            raw.len()
        )));
    }
    let n = raw.len() - l - (f - 1);
    if n <= test_rows {
        return Err(Error::argument(format!(
            "{} windowed rows cannot hold a {test_rows}-row test split",
            n
        )));
    }
    let remainder = n - test_rows;
    let val_n = (remainder as f64 * val_fraction).floor() as usize;
    let train_n = remainder - val_n;
    if train_n == 0 {
        return Err(Error::argument("split leaves no training rows"));
    }

    let fit_end = train_n + l + f - 1;
    let scaler = ScalerParams::fit(&raw[..fit_end])?;

    let scaled: Vec<[f64; FEATURE_DIM]> =
        raw.iter().map(|v| scaler.apply(v.to_array())).collect();
    let ds = window(&scaled, l, f)?;
    let (train, val, test) = split(&ds, val_fraction, test_rows)?;
    Ok(DatasetSplits {
        scaler,
        l,
        f,
        train,
        val,
        test,
    })
}

/// Writes raw feature vectors as CSV: `t_step,a,p_x,p_y`.
pub fn write_raw_csv<W: Write>(out: &mut W, raw: &[FeatureVector]) -> Result<()> {
    writeln!(out, "t_step,a,p_x,p_y")?;
    for v in raw {
        writeln!(out, "{},{},{},{}", v.t_step, v.a, v.p_x, v.p_y)?;
    }
    Ok(())
}

/// Reads a raw feature CSV produced by [`write_raw_csv`].
pub fn read_raw_csv<R: BufRead>(input: R) -> Result<Vec<FeatureVector>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty raw dataset file"))??;
    if header.trim() != "t_step,a,p_x,p_y" {
        return Err(Error::format(format!("unexpected header: {header}")));
    }
    let mut raw = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::format(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(format!("line {}: {e}", lineno + 2)))
        };
        raw.push(FeatureVector {
            t_step: fields[0].trim().parse::<u64>().map_err(|e| {
                Error::format(format!("line {}: {e}", lineno + 2))
            })?,
            a: parse(fields[1])?,
            p_x: parse(fields[2])?,
            p_y: parse(fields[3])?,
        });
    }
    if raw.is_empty() {
        return Err(Error::format("raw dataset file has no rows"));
    }
    Ok(raw)
}

/// On-disk form of a windowed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedFile {
    pub format_version: u32,
    pub l: usize,
    pub f: usize,
    pub scaler: ScalerParams,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<[f64; 2]>,
}

/// Current [`WindowedFile`] schema version.
pub const WINDOWED_FORMAT_VERSION: u32 = 1;

impl WindowedFile {
    pub fn new(ds: &WindowedDataset, scaler: &ScalerParams) -> Self {
        WindowedFile {
            format_version: WINDOWED_FORMAT_VERSION,
            l: ds.l,
            f: ds.f,
            scaler: scaler.clone(),
            features: ds.features.clone(),
            labels: ds.labels.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WindowedFile =
            serde_json::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        if file.format_version != WINDOWED_FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported windowed dataset version {}",
                file.format_version
            )));
        }
        Ok(file)
    }
}
