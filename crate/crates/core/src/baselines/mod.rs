//! Reference generators sharing one `fit` / `sample` interface with the main
//! model: an autoregressive MLP, a teacher-forced LSTM, a Gaussian HMM and a
//! single-MLP GAN.
//!
//! AR, RNN and HMM draw metadata from [`EmpiricalMetadataSampler`] and
//! run for a length drawn from the empirical length distribution.

mod ar;
mod hmm;
mod naive_gan;
mod rnn;

pub use ar::{ArConfig, ArModel};
pub use hmm::{GaussianHmm, HmmConfig, HmmModel};
pub use naive_gan::{NaiveGanConfig, NaiveGanModel};
pub use rnn::{RnnConfig, RnnModel};

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::generation;
use crate::model::GeneratorBundle;
use crate::preprocess::Preprocessor;
use crate::schema::{DataSchema, Dataset, FieldKind, MetaValue, Sample, TimestampMode};

/// Anything that can draw a synthetic dataset.
pub trait Synthesizer {
    fn kind(&self) -> ModelKind;
    fn schema(&self) -> &DataSchema;
    /// Draws `n` samples; `length` forces every sample to that length.
    fn sample_with_length(&self, n: usize, length: Option<usize>, seed: u64) -> Result<Dataset>;

    fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.sample_with_length(n, None, seed)
    }
}

pub(crate) fn check_request(schema: &DataSchema, n: usize, length: Option<usize>) -> Result<()> {
    contract!(n >= 1, "sample count must be >= 1");
    if let Some(l) = length {
        contract!(l >= 1 && l <= schema.max_length, "length {l} outside [1, {}]", schema.max_length);
    }
    Ok(())
}

impl Synthesizer for GeneratorBundle {
    fn kind(&self) -> ModelKind {
        ModelKind::Doppelganger
    }

    fn schema(&self) -> &DataSchema {
        &self.preprocessor.schema
    }

    fn sample_with_length(&self, n: usize, length: Option<usize>, seed: u64) -> Result<Dataset> {
        generation::sample(self, n, length, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Doppelganger,
    Ar,
    Rnn,
    Hmm,
    NaiveGan,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Doppelganger, ModelKind::Ar, ModelKind::Rnn, ModelKind::Hmm, ModelKind::NaiveGan];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Doppelganger => "doppelganger",
            ModelKind::Ar => "ar",
            ModelKind::Rnn => "rnn",
            ModelKind::Hmm => "hmm",
            ModelKind::NaiveGan => "naive_gan",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown model {s:?}; expected one of doppelganger, ar, rnn, hmm, naive_gan")))
    }
}

/// Multinomial over observed metadata tuples, per-position Gaussians for
/// the first records, and the empirical length distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMetadataSampler {
    pub tuples: Vec<Vec<MetaValue>>,
    pub probabilities: Vec<f64>,
    /// `first_mean[j][k]`: mean of record `j` in measurement `k`.
    pub first_mean: Vec<Vec<f64>>,
    pub first_std: Vec<Vec<f64>>,
    pub lengths: Vec<usize>,
    pub length_probabilities: Vec<f64>,
}

impl EmpiricalMetadataSampler {
    /// Fits the sampler; Gaussians are kept for the first `leading` records.
    pub fn fit(ds: &Dataset, leading: usize) -> Result<Self> {
        contract!(!ds.is_empty(), "cannot fit a sampler on an empty dataset");
        let n = ds.len() as f64;
        let mut tuple_counts: BTreeMap<String, (Vec<MetaValue>, f64)> = BTreeMap::new();
        for s in &ds.samples {
            let key = serde_json::to_string(&s.metadata)?;
            tuple_counts.entry(key).or_insert_with(|| (s.metadata.clone(), 0.0)).1 += 1.0;
        }
        let (tuples, probabilities) = tuple_counts.into_values().map(|(t, c)| (t, c / n)).unzip();
        let k_total = ds.schema.measurement_fields.len();
        let mut first_mean = Vec::new();
        let mut first_std = Vec::new();
        for j in 0..leading.max(1) {
            let rows: Vec<_> = ds.samples.iter().filter(|s| s.len() > j).map(|s| s.measurements.row(j)).collect();
            let mut mean = vec![0.0; k_total];
            let mut std = vec![0.0; k_total];
            if !rows.is_empty() {
                let m = rows.len() as f64;
                for k in 0..k_total {
                    let mu = rows.iter().map(|r| r[k]).sum::<f64>() / m;
                    mean[k] = mu;
                    std[k] = (rows.iter().map(|r| (r[k] - mu).powi(2)).sum::<f64>() / m).sqrt();
                }
            } else if let Some(prev) = first_mean.last() {
                mean = Clone::clone(prev);
                std = Clone::clone(first_std.last().expect("paired"));
            }
            first_mean.push(mean);
            first_std.push(std);
        }
        let mut length_counts: BTreeMap<usize, f64> = BTreeMap::new();
        for l in ds.lengths() {
            *length_counts.entry(l).or_default() += 1.0;
        }
        let (lengths, length_probabilities) = length_counts.into_iter().map(|(l, c)| (l, c / n)).unzip();
        Ok(Self { tuples, probabilities, first_mean, first_std, lengths, length_probabilities })
    }

    pub fn sample_metadata(&self, rng: &mut impl Rng) -> Vec<MetaValue> {
        let dist = WeightedIndex::new(&self.probabilities).expect("positive weights");
        self.tuples[dist.sample(rng)].clone()
    }

    pub fn sample_length(&self, rng: &mut impl Rng) -> usize {
        let dist = WeightedIndex::new(&self.length_probabilities).expect("positive weights");
        self.lengths[dist.sample(rng)]
    }

    /// Record `j` (clamped to the fitted positions) drawn from its Gaussians.
    pub fn sample_record(&self, j: usize, rng: &mut impl Rng) -> Vec<f64> {
        let j = j.min(self.first_mean.len() - 1);
        self.first_mean[j]
            .iter()
            .zip(&self.first_std[j])
            .map(|(&m, &s)| if s > 0.0 { Normal::new(m, s).expect("finite").sample(rng) } else { m })
            .collect()
    }
}

/// Per-dimension z-scoring of measurements plus metadata encoding; shared
/// by the AR and RNN baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesCodec {
    pub meta: Preprocessor,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Category count of each categorical measurement; categorical values are
    /// modelled as their index.
    pub categories: Vec<Option<usize>>,
    pub timestamp_grid: Option<(f64, f64)>,
}

impl SeriesCodec {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let meta = Preprocessor::fit(ds, false)?;
        let k_total = ds.schema.measurement_fields.len();
        let mut mean = vec![0.0; k_total];
        let mut std = vec![1.0; k_total];
        for k in 0..k_total {
            let values: Vec<f64> = ds.samples.iter().flat_map(|s| s.series(k)).collect();
            let m = values.iter().sum::<f64>() / values.len() as f64;
            let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / values.len() as f64;
            mean[k] = m;
            std[k] = if v > 0.0 { v.sqrt() } else { 1.0 };
        }
        let categories = ds
            .schema
            .measurement_fields
            .iter()
            .map(|f| (f.kind == FieldKind::Categorical).then_some(f.categories.len()))
            .collect();
        let timestamp_grid = match (ds.schema.timestamp_mode, ds.samples.first()) {
            (TimestampMode::EquallySpaced, Some(Sample { timestamps: Some(ts), .. })) => {
                Some((ts[0], if ts.len() > 1 { ts[1] - ts[0] } else { 1.0 }))
            }
            _ => None,
        };
        Ok(Self { meta, mean, std, categories, timestamp_grid })
    }

    pub fn schema(&self) -> &DataSchema {
        &self.meta.schema
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn meta_width(&self) -> usize {
        self.meta.layout.meta_width
    }

    pub fn encode_metadata(&self, m: &[MetaValue]) -> Result<Vec<f64>> {
        self.meta.encode_metadata(m)
    }

    /// `T × K` z-scored copy of a sample's measurements.
    pub fn encode_series(&self, s: &Sample) -> Array2<f64> {
        let mut out = s.measurements.clone();
        for (k, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[k]) / self.std[k]);
        }
        out
    }

    pub fn scale_record(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().enumerate().map(|(k, v)| (v - self.mean[k]) / self.std[k]).collect()
    }

    /// Builds a sample from z-scored rows; categorical dims are rounded and
    /// clamped to a valid index.
    pub fn decode_sample(&self, metadata: Vec<MetaValue>, rows: &Array2<f64>) -> Sample {
        let mut m = rows.clone();
        for (k, mut col) in m.columns_mut().into_iter().enumerate() {
            let (mu, sd, cats) = (self.mean[k], self.std[k], self.categories[k]);
            col.mapv_inplace(|v| {
                let x = v * sd + mu;
                match cats {
                    Some(c) => x.round().clamp(0.0, (c - 1) as f64),
                    None => x,
                }
            });
        }
        let timestamps = self
            .timestamp_grid
            .map(|(start, step)| (0..m.nrows()).map(|j| start + j as f64 * step).collect());
        Sample { metadata, measurements: m, timestamps }
    }
}

/// Any trained model, as stored on disk by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum SavedModel {
    Doppelganger(Box<GeneratorBundle>),
    Ar(ArModel),
    Rnn(RnnModel),
    Hmm(HmmModel),
    NaiveGan(NaiveGanModel),
}

impl SavedModel {
    pub fn as_synthesizer(&self) -> &dyn Synthesizer {
        match self {
            SavedModel::Doppelganger(b) => b.as_ref(),
            SavedModel::Ar(m) => m,
            SavedModel::Rnn(m) => m,
            SavedModel::Hmm(m) => m,
            SavedModel::NaiveGan(m) => m,
        }
    }

    /// Baselines are written as tagged JSON, the main model as a checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match self {
            SavedModel::Doppelganger(b) => b.save(path),
            other => {
                let json = serde_json::to_vec(&BaselineFile { format: BASELINE_FORMAT.into(), inner: other.clone() })?;
                std::fs::write(path, json).map_err(|source| Error::Io { path: path.to_path_buf(), source })
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let probe: serde_json::Value = serde_json::from_slice(&bytes)?;
        if probe.get("format").and_then(|f| f.as_str()) == Some(BASELINE_FORMAT) {
            let file: BaselineFile = serde_json::from_value(probe)?;
            Ok(file.inner)
        } else {
            Ok(SavedModel::Doppelganger(Box::new(GeneratorBundle::load(path)?)))
        }
    }
}

const BASELINE_FORMAT: &str = "netsynth-baseline";

/// Per-sample random stream, so sample `i` depends only on `(seed, i)`.
pub(crate) fn row_rng(seed: u64, row: usize) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64 + 1);
    rng
}

/// Minibatch index lists drawn without replacement, reshuffled each epoch.
pub(crate) struct Batches {
    order: Vec<usize>,
    cursor: usize,
    size: usize,
}

impl Batches {
    pub(crate) fn new(n: usize, size: usize) -> Self {
        Self { order: (0..n).collect(), cursor: n, size: size.clamp(1, n.max(1)) }
    }

    /// Next batch; the flag is set when the batch starts a new epoch.
    pub(crate) fn next(&mut self, rng: &mut impl Rng) -> (Vec<usize>, bool) {
        use rand::seq::SliceRandom;
        let fresh = self.cursor + self.size > self.order.len();
        if fresh {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let b = self.order[self.cursor..self.cursor + self.size].to_vec();
        self.cursor += self.size;
        (b, fresh)
    }
}

#[derive(Serialize, Deserialize)]
struct BaselineFile {
    format: String,
    #[serde(flatten)]
    inner: SavedModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SinusoidCorpus;
    use crate::schema::{FieldSpec, NormalizationRange};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn model_kind_round_trips() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("gan".parse::<ModelKind>().is_err());
    }

    #[test]
    fn sampler_marginals_match_training_frequencies() {
        let schema = DataSchema {
            metadata_fields: vec![
                FieldSpec::categorical("a", ["x", "y", "z"]),
                FieldSpec::numeric("b", NormalizationRange::ZeroOne),
            ],
            measurement_fields: vec![FieldSpec::numeric("v", NormalizationRange::ZeroOne)],
            max_length: 3,
            batch_param: 1,
            timestamp_mode: TimestampMode::None,
        };
        let weights = [5usize, 3, 2];
        let mut samples = Vec::new();
        for (c, &w) in weights.iter().enumerate() {
            for i in 0..w {
                samples.push(Sample {
                    metadata: vec![MetaValue::Category(["x", "y", "z"][c].into()), MetaValue::Number(c as f64)],
                    measurements: Array2::from_elem((1 + i % 3, 1), c as f64 + i as f64),
                    timestamps: None,
                });
            }
        }
        let ds = Dataset::new(schema, samples).unwrap();
        let sampler = EmpiricalMetadataSampler::fit(&ds, 1).unwrap();
        assert!((sampler.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sampler.first_std.iter().flatten().all(|&s| s >= 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = 10_000;
        let mut counts = [0.0; 3];
        for _ in 0..draws {
            let m = sampler.sample_metadata(&mut rng);
            let c = ["x", "y", "z"].iter().position(|l| Some(*l) == m[0].as_category()).unwrap();
            assert_eq!(m[1], MetaValue::Number(c as f64));
            counts[c] += 1.0;
        }
        let stat: f64 = counts
            .iter()
            .zip(weights)
            .map(|(o, w)| {
                let e = draws as f64 * w as f64 / 10.0;
                (o - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi-square p = {p}");
    }

    #[test]
    fn codec_round_trips_numeric_series() {
        let ds = SinusoidCorpus { samples: 10, ..Default::default() }.generate(0).unwrap();
        let codec = SeriesCodec::fit(&ds).unwrap();
        let s = &ds.samples[3];
        let back = codec.decode_sample(s.metadata.clone(), &codec.encode_series(s));
        assert!((&back.measurements - &s.measurements).iter().all(|v| v.abs() < 1e-9));
    }
}
