//! Synthetic time-varying electromagnetic field over a coil-disk measurement grid.
//!
//! The field is a sum of latent spatial Gaussian sources whose amplitudes
//! oscillate sinusoidally in time, plus seeded Gaussian measurement noise,
//! clipped at zero. Source centers and measurement points are drawn uniformly
//! on the coil disk from the config seed, so the whole sample stream is
//! reproducible bit-exactly from a [`FieldConfig`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Spacing of the measurement clock in seconds.
pub const STEP_SECONDS: f64 = 0.2;

// Domain tags keeping the point, source, and noise RNG streams independent.
const STREAM_POINTS: u64 = 0x706f696e7473; // "points"
const STREAM_SOURCES: u64 = 0x737263; // "src"
const STREAM_NOISE: u64 = 0x6e6f697365; // "noise"

/// Parameters of the synthetic field generator.
///
/// Serialized as JSON with exactly these key names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Coil radius in meters; measurement points and sources live on this disk.
    pub coil_radius: f64,
    /// Burial depth of the transmitter coil in meters. Attenuates all
    /// amplitudes by `exp(-coil_depth / source_kernel_width)`.
    pub coil_depth: f64,
    /// Number of measurement points on the disk.
    pub n_points: usize,
    /// Number of latent field sources.
    pub n_sources: usize,
    /// Peak strength scale of each source in A/m; length `n_sources`.
    pub source_amplitudes: Vec<f64>,
    /// Temporal oscillation frequency of each source in Hz; length `n_sources`.
    pub source_frequencies: Vec<f64>,
    /// Temporal phase of each source in radians; length `n_sources`.
    pub source_phases: Vec<f64>,
    /// Spatial Gaussian kernel width in meters, shared by all sources.
    pub source_kernel_width: f64,
    /// Standard deviation of additive measurement noise in A/m.
    pub noise_std: f64,
    /// Seed for point placement, source placement, and the noise stream.
    pub rng_seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            coil_radius: 0.13,
            coil_depth: 0.03,
            n_points: 20,
            n_sources: 3,
            source_amplitudes: vec![120.0, 95.0, 75.0],
            source_frequencies: vec![0.07, 0.19, 0.41],
            source_phases: vec![0.0, 2.1, 4.2],
            source_kernel_width: 0.05,
            noise_std: 2.0,
            rng_seed: 42,
        }
    }
}

impl FieldConfig {
    /// Checks every config invariant, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        if !(self.coil_radius > 0.0 && self.coil_radius.is_finite()) {
            return Err(Error::config("coil_radius must be positive"));
        }
        if !(self.coil_depth >= 0.0 && self.coil_depth.is_finite()) {
            return Err(Error::config("coil_depth must be non-negative"));
        }
        if self.n_points == 0 {
            return Err(Error::config("n_points must be at least 1"));
        }
        if !(self.source_kernel_width > 0.0 && self.source_kernel_width.is_finite()) {
            return Err(Error::config("source_kernel_width must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise_std must be non-negative"));
        }
        for (name, list) in [
            ("source_amplitudes", &self.source_amplitudes),
            ("source_frequencies", &self.source_frequencies),
            ("source_phases", &self.source_phases),
        ] {
            if list.len() != self.n_sources {
                return Err(Error::config(format!(
                    "{name} has {} entries, expected n_sources = {}",
                    list.len(),
                    self.n_sources
                )));
            }
            if list.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("{name} contains a non-finite value")));
            }
        }
        if self.source_amplitudes.iter().any(|&a| a < 0.0) {
            return Err(Error::config("source_amplitudes must be non-negative"));
        }
        Ok(())
    }
}

/// A fixed measurement location on the coil disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

/// Strengths measured at every grid point at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    /// Sample time in seconds.
    pub t: f64,
    /// One strength per measurement point, in A/m; all non-negative.
    pub strengths: Vec<f64>,
}

/// A validated field with its latent source geometry resolved.
#[derive(Debug, Clone)]
pub struct Field {
    config: FieldConfig,
    centers: Vec<(f64, f64)>,
    depth_attenuation: f64,
}

/// Draws a point uniformly on the disk of the given radius.
fn uniform_disk(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let r = radius * u.sqrt();
    let theta = 2.0 * std::f64::consts::PI * v;
    (r * theta.cos(), r * theta.sin())
}

impl Field {
    /// Validates the config and fixes the latent source centers.
    pub fn new(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, &[STREAM_SOURCES]));
        let centers = (0..config.n_sources)
            .map(|_| uniform_disk(&mut rng, config.coil_radius))
            .collect();
        let depth_attenuation = (-config.coil_depth / config.source_kernel_width).exp();
        Ok(Field {
            config,
            centers,
            depth_attenuation,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    /// Latent source centers on the disk, in the order of the config lists.
    pub fn source_centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    /// Samples the measurement grid: `n_points` points uniform on the coil
    /// disk, deterministic per seed, indices dense from 0.
    pub fn generate_points(&self) -> Vec<MeasurementPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.config.rng_seed,
            &[STREAM_POINTS],
        ));
        (0..self.config.n_points)
            .map(|index| {
                let (x, y) = uniform_disk(&mut rng, self.config.coil_radius);
                MeasurementPoint { index, x, y }
            })
            .collect()
    }

    /// Field strength at one point and instant, in A/m.
    ///
    /// Strength is `max(0, sum_k amp_k * atten * temporal_k(t) * kernel_k(p) + noise)`
    /// with `temporal_k(t) = 0.5 + 0.5 sin(2π f_k t + φ_k)` and
    /// `kernel_k(p) = exp(-|p - c_k|² / (2 w²))`. The noise draw is keyed on
    /// `(seed, point index, t)`, so repeated evaluation is bit-identical and
    /// concurrent sampling needs no shared RNG state.
    pub fn strength_at(&self, point: &MeasurementPoint, t: f64) -> f64 {
        let w = self.config.source_kernel_width;
        let mut sum = 0.0;
        for (k, &(cx, cy)) in self.centers.iter().enumerate() {
            let amp = self.config.source_amplitudes[k] * self.depth_attenuation;
            let freq = self.config.source_frequencies[k];
            let phase = self.config.source_phases[k];
            let temporal = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * freq * t + phase).sin();
            let d2 = (point.x - cx).powi(2) + (point.y - cy).powi(2);
            let kernel = (-d2 / (2.0 * w * w)).exp();
            sum += amp * temporal * kernel;
        }
        if self.config.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                self.config.rng_seed,
                &[STREAM_NOISE, point.index as u64, t.to_bits()],
            ));
            let z: f64 = StandardNormal.sample(&mut rng);
            sum += self.config.noise_std * z;
        }
        sum.max(0.0)
    }

    /// Measures every grid point at time `t`.
    pub fn sample_all(&self, points: &[MeasurementPoint], t: f64) -> Result<FieldSample> {
        if points.len() != self.config.n_points {
            return Err(Error::argument(format!(
                "got {} points, config expects {}",
                points.len(),
                self.config.n_points
            )));
        }
        let strengths = points.iter().map(|p| self.strength_at(p, t)).collect();
        Ok(FieldSample { t, strengths })
    }

    /// Samples the full grid at `n_steps` instants spaced [`STEP_SECONDS`] apart.
    pub fn sample_stream(
        &self,
        points: &[MeasurementPoint],
        n_steps: usize,
    ) -> Result<Vec<FieldSample>> {
        (0..n_steps)
            .map(|i| self.sample_all(points, i as f64 * STEP_SECONDS))
            .collect()
    }
}

/// Uniform measurement points for a config; see [`Field::generate_points`].
pub fn generate_points(config: &FieldConfig) -> Result<Vec<MeasurementPoint>> {
    Field::new(config.clone()).map(|f| f.generate_points())
}

/// One-shot strength evaluation; see [`Field::strength_at`].
pub fn field_strength(config: &FieldConfig, point: &MeasurementPoint, t: f64) -> Result<f64> {
    Field::new(config.clone()).map(|f| f.strength_at(point, t))
}

/// One-shot grid measurement; see [`Field::sample_all`].
pub fn sample_all(
    config: &FieldConfig,
    points: &[MeasurementPoint],
    t: f64,
) -> Result<FieldSample> {
    Field::new(config.clone())?.sample_all(points, t)
}

/// Index and strength of the strongest point; ties break to the smallest index.
pub fn argmax_point(sample: &FieldSample) -> Result<(usize, f64)> {
    if sample.strengths.is_empty() {
        return Err(Error::argument("cannot take argmax of an empty sample"));
    }
    let mut best = 0;
    for (i, &s) in sample.strengths.iter().enumerate() {
        if s > sample.strengths[best] {
            best = i;
        }
    }
    Ok((best, sample.strengths[best]))
}

/// Writes a sample stream as CSV: `t,point_index,x,y,strength`, one row per
/// (t, point), times with 3 decimal places.
pub fn write_samples_csv<W: Write>(
    out: &mut W,
    points: &[MeasurementPoint],
    samples: &[FieldSample],
) -> Result<()> {
    writeln!(out, "t,point_index,x,y,strength")?;
    for sample in samples {
        if sample.strengths.len() != points.len() {
            return Err(Error::argument(
                "sample width does not match the point grid",
            ));
        }
        for (p, &s) in points.iter().zip(&sample.strengths) {
            writeln!(out, "{:.3},{},{},{},{}", sample.t, p.index, p.x, p.y, s)?;
        }
    }
    Ok(())
}
