//! Generated benchmark corpus: noisy sinusoids whose offset is set by a
//! binary class label.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::schema::{DataSchema, Dataset, FieldSpec, MetaValue, NormalizationRange, Sample, TimestampMode};

pub const CLASS_FIELD: &str = "class";
pub const VALUE_FIELD: &str = "value";
pub const CLASSES: [&str; 2] = ["A", "B"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinusoidCorpus {
    pub samples: usize,
    /// Each sample's length is drawn uniformly from these.
    pub lengths: Vec<usize>,
    pub amplitude: f64,
    /// Offset per class, in [`CLASSES`] order.
    pub offsets: [f64; 2],
    pub period: f64,
    pub noise_std: f64,
    /// Fraction of samples in class B.
    pub class_b_fraction: f64,
    pub batch_param: usize,
}

impl Default for SinusoidCorpus {
    fn default() -> Self {
        Self {
            samples: 1000,
            lengths: vec![56],
            amplitude: 1.0,
            offsets: [0.0, 100.0],
            period: 7.0,
            noise_std: 0.05,
            class_b_fraction: 0.5,
            batch_param: 1,
        }
    }
}

impl SinusoidCorpus {
    /// Length-280 variant.
    pub fn long() -> Self {
        Self { lengths: vec![280], ..Self::default() }
    }

    /// Lengths drawn 50/50 from {28, 56}.
    pub fn mixed_lengths() -> Self {
        Self { lengths: vec![28, 56], ..Self::default() }
    }

    pub fn schema(&self) -> DataSchema {
        DataSchema {
            metadata_fields: vec![FieldSpec::categorical(CLASS_FIELD, CLASSES)],
            measurement_fields: vec![FieldSpec::numeric(VALUE_FIELD, NormalizationRange::NegOneOne)],
            max_length: self.lengths.iter().copied().max().unwrap_or(1),
            batch_param: self.batch_param,
            timestamp_mode: TimestampMode::None,
        }
    }

    /// Builds the corpus. Class counts are exact (rounded) and shuffled; each
    /// series starts at a random phase.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        contract!(self.samples >= 1, "corpus needs at least one sample");
        contract!(!self.lengths.is_empty() && self.lengths.iter().all(|&l| l >= 1), "lengths must be >= 1");
        contract!((0.0..=1.0).contains(&self.class_b_fraction), "class_b_fraction must lie in [0, 1]");
        contract!(self.period > 0.0 && self.noise_std >= 0.0, "period must be > 0 and noise_std >= 0");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_b = (self.samples as f64 * self.class_b_fraction).round() as usize;
        let mut classes: Vec<usize> = (0..self.samples).map(|i| usize::from(i < n_b)).collect();
        classes.shuffle(&mut rng);
        let noise = Normal::new(0.0, self.noise_std).expect("finite std");
        let omega = 2.0 * std::f64::consts::PI / self.period;
        let samples = classes
            .into_iter()
            .map(|c| {
                let len = self.lengths[rng.random_range(0..self.lengths.len())];
                let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                let m = Array2::from_shape_fn((len, 1), |(t, _)| {
                    self.offsets[c] + self.amplitude * (omega * t as f64 + phase).sin()
                        + noise.sample(&mut rng)
                });
                Sample {
                    metadata: vec![MetaValue::Category(CLASSES[c].into())],
                    measurements: m,
                    timestamps: None,
                }
            })
            .collect();
        Dataset::new(self.schema(), samples)
    }
}
