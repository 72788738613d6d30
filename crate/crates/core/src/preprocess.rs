//! Tensor encoding of datasets.
//!
//! Each numeric measurement series is rescaled with its own min/max
//! (auto-normalisation), and the per-sample `(center, half_range)` pair is
//! carried alongside the real metadata as "fake" metadata that the model
//! learns to generate. Categorical values are one-hot encoded, every time step
//! gets a two-way generation flag, and series are zero-padded to `T_pad`.
//!
//! Row layouts (all matrices are `n × width`):
//!
//! * `metadata_real`: metadata fields in schema order; categorical fields as
//!   one-hot blocks, numeric fields as one globally normalised value;
//! * `metadata_fake`: `[center_0, half_range_0, center_1, ...]` for each numeric
//!   measurement dimension, globally normalised into that dimension's range;
//! * `measurements`: time-major, `T_pad` steps of `d_f` values each;
//! * `flags`: time-major, `T_pad` steps of `[continue, end]`.

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::schema::{
    DataSchema, Dataset, FieldKind, FieldSpec, MetaValue, NormalizationRange, Sample,
    TimestampMode,
};
use crate::Matrix;

/// Per-sample range of one numeric measurement dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub center: f64,
    pub half_range: f64,
}

impl NormalizationRecord {
    pub fn of(series: impl IntoIterator<Item = f64>) -> Self {
        let (lo, hi) = series
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        Self { center: 0.5 * (hi + lo), half_range: 0.5 * (hi - lo) }
    }

    pub fn min(&self) -> f64 {
        self.center - self.half_range
    }

    pub fn max(&self) -> f64 {
        self.center + self.half_range
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Numeric(NormalizationRange),
    /// One-hot / softmax block.
    Categorical,
}

/// A contiguous run of columns sharing one output activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    pub width: usize,
    pub kind: BlockKind,
}

impl Block {
    pub fn end(&self) -> usize {
        self.start + self.width
    }
}

fn blocks_for(fields: &[FieldSpec]) -> (Vec<Block>, usize) {
    let mut blocks = Vec::with_capacity(fields.len());
    let mut offset = 0;
    for f in fields {
        let (width, kind) = match f.kind {
            FieldKind::Categorical => (f.categories.len(), BlockKind::Categorical),
            FieldKind::Numeric => (1, BlockKind::Numeric(f.range())),
        };
        blocks.push(Block { start: offset, width, kind });
        offset += width;
    }
    (blocks, offset)
}

/// Column bookkeeping shared by the encoder and the networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub meta_blocks: Vec<Block>,
    pub meta_width: usize,
    pub fake_blocks: Vec<Block>,
    pub fake_width: usize,
    pub step_blocks: Vec<Block>,
    /// `d_f`: encoded width of one time step, flags excluded.
    pub step_width: usize,
    /// Measurement field indices of the numeric dimensions, in order.
    pub numeric_measurements: Vec<usize>,
    pub t_pad: usize,
    pub batch_param: usize,
}

impl Layout {
    pub fn new(schema: &DataSchema, t_pad: usize, auto_normalize: bool) -> Self {
        let (meta_blocks, meta_width) = blocks_for(&schema.metadata_fields);
        let (step_blocks, step_width) = blocks_for(&schema.measurement_fields);
        let numeric_measurements: Vec<usize> = schema
            .measurement_fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_numeric())
            .map(|(i, _)| i)
            .collect();
        let mut fake_blocks = Vec::new();
        if auto_normalize {
            for (j, &k) in numeric_measurements.iter().enumerate() {
                let range = schema.measurement_fields[k].range();
                fake_blocks.push(Block { start: 2 * j, width: 2, kind: BlockKind::Numeric(range) });
            }
        }
        let fake_width = 2 * fake_blocks.len();
        Self {
            meta_blocks,
            meta_width,
            fake_blocks,
            fake_width,
            step_blocks,
            step_width,
            numeric_measurements,
            t_pad,
            batch_param: schema.batch_param,
        }
    }

    pub fn passes(&self) -> usize {
        self.t_pad / self.batch_param
    }

    /// Width of `[metadata_real ‖ metadata_fake]`.
    pub fn aux_width(&self) -> usize {
        self.meta_width + self.fake_width
    }

    /// Width of the full discriminator input.
    pub fn disc_width(&self) -> usize {
        self.aux_width() + self.t_pad * (self.step_width + 2)
    }
}

/// Encoded dataset ready for training; see the module docs for layouts.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBatch {
    pub metadata_real: Matrix,
    pub metadata_fake: Matrix,
    pub measurements: Matrix,
    pub flags: Matrix,
    pub lengths: Vec<usize>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn t_pad(&self) -> usize {
        self.flags.ncols() / 2
    }

    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        let pick = |m: &Matrix| m.select(ndarray::Axis(0), rows);
        EncodedBatch {
            metadata_real: pick(&self.metadata_real),
            metadata_fake: pick(&self.metadata_fake),
            measurements: pick(&self.measurements),
            flags: pick(&self.flags),
            lengths: rows.iter().map(|&i| self.lengths[i]).collect(),
        }
    }

    /// `[metadata_real ‖ metadata_fake]`.
    pub fn aux_input(&self) -> Matrix {
        ndarray::concatenate![ndarray::Axis(1), self.metadata_real, self.metadata_fake]
    }

    /// `[metadata_real ‖ metadata_fake ‖ measurements ‖ flags]`.
    pub fn discriminator_input(&self) -> Matrix {
        ndarray::concatenate![
            ndarray::Axis(1),
            self.metadata_real,
            self.metadata_fake,
            self.measurements,
            self.flags
        ]
    }
}

/// Flag rows: `[1,0]` while the series continues, `[0,1]` at its last step,
/// `[0,0]` over padding. Returned as `n × 2·t_pad`, time-major.
pub fn make_flags(lengths: &[usize], t_pad: usize) -> Result<Matrix> {
    let mut flags = Array2::zeros((lengths.len(), 2 * t_pad));
    for (i, &len) in lengths.iter().enumerate() {
        contract!(len >= 1 && len <= t_pad, "length {len} outside [1, {t_pad}]");
        for t in 0..len - 1 {
            flags[[i, 2 * t]] = 1.0;
        }
        flags[[i, 2 * (len - 1) + 1]] = 1.0;
    }
    Ok(flags)
}

/// Length implied by one row of (possibly soft) flags: generation stops at
/// the first step whose end probability strictly exceeds its continue
/// probability. Series that never stop run to `t_pad`.
pub fn length_from_flags(flags: ndarray::ArrayView1<f64>) -> usize {
    let t_pad = flags.len() / 2;
    (0..t_pad).find(|&t| flags[2 * t] < flags[2 * t + 1]).map_or(t_pad, |t| t + 1)
}

fn to_range(x: f64, lo: f64, hi: f64, range: NormalizationRange) -> f64 {
    let (a, b) = range.bounds();
    if hi > lo {
        a + (x - lo) / (hi - lo) * (b - a)
    } else {
        range.midpoint()
    }
}

fn from_range(v: f64, lo: f64, hi: f64, range: NormalizationRange) -> f64 {
    let (a, b) = range.bounds();
    lo + (v - a) / (b - a) * (hi - lo)
}

fn bounds(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}

/// How categorical blocks are turned back into category labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalDecode {
    #[default]
    Argmax,
    /// Draw a category with the block's softmax probabilities.
    Sample,
}

fn decode_block(probs: ndarray::ArrayView1<f64>, mode: CategoricalDecode, rng: &mut impl Rng) -> usize {
    match mode {
        CategoricalDecode::Argmax => probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0,
        CategoricalDecode::Sample => {
            let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
            let mut u = rng.random::<f64>() * total;
            for (i, &p) in probs.iter().enumerate() {
                u -= p.max(0.0);
                if u <= 0.0 {
                    return i;
                }
            }
            probs.len() - 1
        }
    }
}

/// Fitted encoder: dataset-level constants plus the column layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub schema: DataSchema,
    pub auto_normalize: bool,
    pub layout: Layout,
    /// Global `(min, max)` of each numeric metadata field.
    meta_bounds: Vec<Option<(f64, f64)>>,
    /// Global bounds of `center` and `half_range` per numeric measurement.
    fake_bounds: Vec<[(f64, f64); 2]>,
    /// Global `(min, max)` per numeric measurement; used without auto-normalisation.
    meas_bounds: Vec<Option<(f64, f64)>>,
    /// `(start, step)` of the shared grid in equally-spaced mode.
    timestamp_grid: Option<(f64, f64)>,
}

impl Preprocessor {
    pub fn fit(ds: &Dataset, auto_normalize: bool) -> Result<Self> {
        ds.validate()?;
        contract!(
            ds.schema.timestamp_mode != TimestampMode::Derived,
            "derived timestamps must be converted with timestamp_transform before encoding"
        );
        let schema = ds.schema.clone();
        let t_pad = schema.padded_length_for(ds.max_observed_length());
        let layout = Layout::new(&schema, t_pad, auto_normalize);
        let meta_bounds = schema
            .metadata_fields
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.is_numeric().then(|| {
                    bounds(ds.samples.iter().filter_map(|s| s.metadata[j].as_number()))
                })
            })
            .collect();
        let meas_bounds = schema
            .measurement_fields
            .iter()
            .enumerate()
            .map(|(k, f)| {
                f.is_numeric()
                    .then(|| bounds(ds.samples.iter().flat_map(|s| s.measurements.column(k).to_vec())))
            })
            .collect();
        let fake_bounds = if auto_normalize {
            layout
                .numeric_measurements
                .iter()
                .map(|&k| {
                    let recs: Vec<NormalizationRecord> = ds
                        .samples
                        .iter()
                        .map(|s| NormalizationRecord::of(s.measurements.column(k).iter().copied()))
                        .collect();
                    [
                        bounds(recs.iter().map(|r| r.center)),
                        bounds(recs.iter().map(|r| r.half_range)),
                    ]
                })
                .collect()
        } else {
            Vec::new()
        };
        let timestamp_grid = match (schema.timestamp_mode, ds.samples.first()) {
            (TimestampMode::EquallySpaced, Some(Sample { timestamps: Some(ts), .. })) => {
                Some((ts[0], if ts.len() > 1 { ts[1] - ts[0] } else { 1.0 }))
            }
            _ => None,
        };
        Ok(Self { schema, auto_normalize, layout, meta_bounds, fake_bounds, meas_bounds, timestamp_grid })
    }

    /// Encodes one metadata vector into its `metadata_real` row.
    pub fn encode_metadata(&self, metadata: &[MetaValue]) -> Result<Vec<f64>> {
        let fields = &self.schema.metadata_fields;
        contract!(
            metadata.len() == fields.len(),
            "expected {} metadata values, got {}",
            fields.len(),
            metadata.len()
        );
        let mut row = vec![0.0; self.layout.meta_width];
        for ((value, field), block) in metadata.iter().zip(fields).zip(&self.layout.meta_blocks) {
            match (field.kind, value) {
                (FieldKind::Categorical, MetaValue::Category(c)) => {
                    let idx = field.category_index(c).ok_or_else(|| {
                        Error::Validation(format!("`{c}` is not a category of `{}`", field.name))
                    })?;
                    row[block.start + idx] = 1.0;
                }
                (FieldKind::Numeric, MetaValue::Number(x)) => {
                    let j = self.schema.metadata_index(&field.name).expect("field exists");
                    let (lo, hi) = self.meta_bounds[j].expect("numeric bounds");
                    row[block.start] = to_range(*x, lo, hi, field.range());
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "value `{value}` has the wrong kind for `{}`",
                        field.name
                    )))
                }
            }
        }
        Ok(row)
    }

    /// Encodes every sample; returns the raw per-sample ranges alongside.
    pub fn encode(&self, ds: &Dataset) -> Result<(EncodedBatch, Vec<Vec<NormalizationRecord>>)> {
        contract!(ds.schema == self.schema, "dataset schema differs from the fitted schema");
        let n = ds.len();
        let lay = &self.layout;
        let mut metadata_real = Array2::zeros((n, lay.meta_width));
        let mut metadata_fake = Array2::zeros((n, lay.fake_width));
        let mut measurements = Array2::zeros((n, lay.t_pad * lay.step_width));
        let mut records = Vec::with_capacity(n);
        for (i, s) in ds.samples.iter().enumerate() {
            contract!(s.len() <= lay.t_pad, "sample {i} longer than the padded length {}", lay.t_pad);
            metadata_real.row_mut(i).assign(&ndarray::Array1::from(self.encode_metadata(&s.metadata)?));
            let mut sample_records = Vec::new();
            for (k, block) in lay.step_blocks.iter().enumerate() {
                let series = s.measurements.column(k);
                match block.kind {
                    BlockKind::Categorical => {
                        for (t, &x) in series.iter().enumerate() {
                            measurements[[i, t * lay.step_width + block.start + x as usize]] = 1.0;
                        }
                    }
                    BlockKind::Numeric(range) => {
                        let (lo, hi) = if self.auto_normalize {
                            let rec = NormalizationRecord::of(series.iter().copied());
                            let j = sample_records.len();
                            let [cb, hb] = self.fake_bounds[j];
                            metadata_fake[[i, 2 * j]] = to_range(rec.center, cb.0, cb.1, range);
                            metadata_fake[[i, 2 * j + 1]] =
                                to_range(rec.half_range, hb.0, hb.1, range);
                            sample_records.push(rec);
                            (rec.min(), rec.max())
                        } else {
                            self.meas_bounds[k].expect("numeric bounds")
                        };
                        for (t, &x) in series.iter().enumerate() {
                            measurements[[i, t * lay.step_width + block.start]] =
                                to_range(x, lo, hi, range);
                        }
                    }
                }
            }
            records.push(sample_records);
        }
        let lengths = ds.lengths();
        let flags = make_flags(&lengths, lay.t_pad)?;
        Ok((EncodedBatch { metadata_real, metadata_fake, measurements, flags, lengths }, records))
    }

    /// Inverse of [`Preprocessor::encode`] with argmax categorical decoding.
    pub fn decode(&self, batch: &EncodedBatch) -> Result<Dataset> {
        self.decode_with(batch, CategoricalDecode::Argmax, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))
    }

    /// Decoded `(center, half_range)` per sample and numeric measurement;
    /// empty rows without auto-normalisation.
    pub fn ranges(&self, batch: &EncodedBatch) -> Vec<Vec<NormalizationRecord>> {
        (0..batch.len())
            .map(|i| {
                self.fake_bounds
                    .iter()
                    .zip(&self.layout.fake_blocks)
                    .enumerate()
                    .map(|(j, ([cb, hb], block))| {
                        let BlockKind::Numeric(range) = block.kind else { unreachable!("fake blocks are numeric") };
                        NormalizationRecord {
                            center: from_range(batch.metadata_fake[[i, 2 * j]], cb.0, cb.1, range),
                            half_range: from_range(batch.metadata_fake[[i, 2 * j + 1]], hb.0, hb.1, range).max(0.0),
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Inverse of [`Preprocessor::encode`]. Steps beyond each sample's length
    /// are dropped; generated half ranges below zero are clamped to zero.
    pub fn decode_with(
        &self,
        batch: &EncodedBatch,
        mode: CategoricalDecode,
        rng: &mut impl Rng,
    ) -> Result<Dataset> {
        let lay = &self.layout;
        let n = batch.len();
        contract!(batch.metadata_real.dim() == (n, lay.meta_width), "metadata_real has shape {:?}", batch.metadata_real.dim());
        contract!(batch.metadata_fake.dim() == (n, lay.fake_width), "metadata_fake has shape {:?}", batch.metadata_fake.dim());
        // generated batches may run past T_pad when a length is forced
        let steps = batch.t_pad();
        contract!(batch.flags.dim() == (n, 2 * steps), "flags have shape {:?}", batch.flags.dim());
        contract!(
            batch.measurements.dim() == (n, steps * lay.step_width),
            "measurements have shape {:?}",
            batch.measurements.dim()
        );

        let k_total = self.schema.measurement_fields.len();
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let len = batch.lengths[i];
            contract!(len >= 1 && len <= steps, "sample {i} has length {len}");
            let mut metadata = Vec::with_capacity(self.schema.metadata_fields.len());
            for (j, (field, block)) in self.schema.metadata_fields.iter().zip(&lay.meta_blocks).enumerate() {
                let cols = batch.metadata_real.slice(s![i, block.start..block.end()]);
                metadata.push(match block.kind {
                    BlockKind::Categorical => {
                        MetaValue::Category(field.categories[decode_block(cols, mode, rng)].clone())
                    }
                    BlockKind::Numeric(range) => {
                        let (lo, hi) = self.meta_bounds[j].expect("numeric bounds");
                        MetaValue::Number(from_range(cols[0], lo, hi, range))
                    }
                });
            }
            let mut meas = Array2::zeros((len, k_total));
            let mut numeric_seen = 0;
            for (k, block) in lay.step_blocks.iter().enumerate() {
                match block.kind {
                    BlockKind::Categorical => {
                        for t in 0..len {
                            let off = t * lay.step_width + block.start;
                            let cols = batch.measurements.slice(s![i, off..off + block.width]);
                            meas[[t, k]] = decode_block(cols, mode, rng) as f64;
                        }
                    }
                    BlockKind::Numeric(range) => {
                        let (lo, hi) = if self.auto_normalize {
                            let j = numeric_seen;
                            let [cb, hb] = self.fake_bounds[j];
                            let center = from_range(batch.metadata_fake[[i, 2 * j]], cb.0, cb.1, range);
                            let half = from_range(batch.metadata_fake[[i, 2 * j + 1]], hb.0, hb.1, range)
                                .max(0.0);
                            (center - half, center + half)
                        } else {
                            self.meas_bounds[k].expect("numeric bounds")
                        };
                        for t in 0..len {
                            let v = batch.measurements[[i, t * lay.step_width + block.start]];
                            meas[[t, k]] = from_range(v, lo, hi, range);
                        }
                        numeric_seen += 1;
                    }
                }
            }
            let timestamps = self
                .timestamp_grid
                .map(|(start, step)| (0..len).map(|j| start + j as f64 * step).collect());
            samples.push(Sample { metadata, measurements: meas, timestamps });
        }
        Dataset::new(self.schema.clone(), samples)
    }
}

/// Fits a per-sample normaliser on `ds` and encodes it.
pub fn auto_normalize(ds: &Dataset) -> Result<(EncodedBatch, Vec<Vec<NormalizationRecord>>)> {
    Preprocessor::fit(ds, true)?.encode(ds)
}

/// Decodes `batch` with the constants of `pre`.
pub fn denormalize(pre: &Preprocessor, batch: &EncodedBatch) -> Result<Dataset> {
    pre.decode(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::TimestampMode;
    use ndarray::array;

    fn schema(range: NormalizationRange, max_length: usize, s: usize) -> DataSchema {
        DataSchema {
            metadata_fields: vec![],
            measurement_fields: vec![FieldSpec::numeric("f", range)],
            max_length,
            batch_param: s,
            timestamp_mode: TimestampMode::None,
        }
    }

    fn series_ds(range: NormalizationRange, series: &[Vec<f64>]) -> Dataset {
        let max = series.iter().map(Vec::len).max().unwrap();
        Dataset::new(
            schema(range, max, 1),
            series
                .iter()
                .map(|v| Sample {
                    metadata: vec![],
                    measurements: Array2::from_shape_vec((v.len(), 1), v.clone()).unwrap(),
                    timestamps: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn offset_sinusoids_share_a_shape() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        let f1: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        let f2: Vec<f64> = t.iter().map(|x| x.sin() + 100.0).collect();
        let ds = series_ds(NormalizationRange::NegOneOne, &[f1.clone(), f2]);
        let (batch, recs) = auto_normalize(&ds).unwrap();
        let r1 = batch.measurements.row(0);
        let r2 = batch.measurements.row(1);
        for (a, b) in r1.iter().zip(r2.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let expected = NormalizationRecord::of(f1.iter().copied());
        assert!((recs[0][0].center - expected.center).abs() < 1e-12);
        assert!((recs[1][0].center - (expected.center + 100.0)).abs() < 1e-9);
        assert!((recs[0][0].half_range - recs[1][0].half_range).abs() < 1e-9);
        assert!((recs[0][0].half_range - 1.0).abs() < 1e-2);
    }

    #[test]
    fn constant_series_maps_to_midpoint() {
        let ds = series_ds(NormalizationRange::NegOneOne, &[vec![5.0, 5.0, 5.0]]);
        let (batch, recs) = auto_normalize(&ds).unwrap();
        assert_eq!(recs[0][0], NormalizationRecord { center: 5.0, half_range: 0.0 });
        assert_eq!(batch.measurements.row(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_one_affine_map() {
        let ds = series_ds(NormalizationRange::ZeroOne, &[vec![0.0, 10.0]]);
        let (batch, recs) = auto_normalize(&ds).unwrap();
        assert_eq!(batch.measurements.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(recs[0][0], NormalizationRecord { center: 5.0, half_range: 5.0 });
    }

    #[test]
    fn inverse_affine_map() {
        // Two samples so that the fake-metadata bounds are not degenerate.
        let ds = series_ds(NormalizationRange::ZeroOne, &[vec![99.0, 101.0], vec![0.0, 4.0]]);
        let pre = Preprocessor::fit(&ds, true).unwrap();
        let (mut batch, _) = pre.encode(&ds).unwrap();
        batch.measurements[[0, 0]] = 0.5;
        batch.lengths[0] = 1;
        let out = pre.decode(&batch).unwrap();
        assert!((out.samples[0].measurements[[0, 0]] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn negative_half_range_is_clamped() {
        let ds = series_ds(NormalizationRange::ZeroOne, &[vec![0.0, 2.0], vec![10.0, 11.0]]);
        let pre = Preprocessor::fit(&ds, true).unwrap();
        let (mut batch, _) = pre.encode(&ds).unwrap();
        // half-range bounds are [0.5, 1], so -1.4 decodes to a half range of -0.2
        batch.metadata_fake[[0, 1]] = -1.4;
        let out = pre.decode(&batch).unwrap();
        let center = 1.0;
        for &x in out.samples[0].measurements.iter() {
            assert!((x - center).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn flag_layout() {
        let f = make_flags(&[3], 5).unwrap();
        assert_eq!(f.row(0).to_vec(), vec![1., 0., 1., 0., 0., 1., 0., 0., 0., 0.]);
        let f = make_flags(&[5], 5).unwrap();
        assert_eq!(f.slice(s![0, 8..10]).to_vec(), vec![0., 1.]);
        let f = make_flags(&[1], 3).unwrap();
        assert_eq!(f.slice(s![0, 0..2]).to_vec(), vec![0., 1.]);
        assert!(matches!(make_flags(&[0], 3), Err(Error::Contract(_))));
    }

    #[test]
    fn stop_rule_on_soft_flags() {
        let flags = array![0.7, 0.3, 0.2, 0.8, 0.9, 0.1];
        assert_eq!(length_from_flags(flags.view()), 2);
        let flags = array![0.7, 0.3, 0.5, 0.5];
        assert_eq!(length_from_flags(flags.view()), 2);
    }

    #[test]
    fn padding_is_zero_and_t_pad_rounds_up() {
        let mut ds = series_ds(NormalizationRange::ZeroOne, &[vec![1.0, 2.0, 3.0], vec![4.0]]);
        ds.schema.batch_param = 2;
        let (batch, _) = auto_normalize(&ds).unwrap();
        assert_eq!(batch.t_pad(), 4);
        assert_eq!(batch.measurements.row(1).to_vec(), vec![0.5, 0.0, 0.0, 0.0]);
        assert_eq!(batch.flags.slice(s![1, 2..]).to_vec(), vec![0.0; 6]);
    }
}
