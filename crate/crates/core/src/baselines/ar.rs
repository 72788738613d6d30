//! Autoregressive MLP: `R_t = f(metadata, R_{t-1}, …, R_{t-p})`.

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use netsynth_nn::{Activation, Adam, Mlp, ParamSet, Tape};

use super::{check_request, row_rng, Batches, EmpiricalMetadataSampler, ModelKind, SeriesCodec, Synthesizer};
use crate::error::{contract, Result};
use crate::schema::{DataSchema, Dataset, MetaValue};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArConfig {
    /// Number of past records fed to the network.
    pub order: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self { order: 3, hidden: vec![200; 4], lr: 1e-3, batch_size: 100, steps: 5000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub config: ArConfig,
    pub codec: SeriesCodec,
    pub sampler: EmpiricalMetadataSampler,
    pub params: ParamSet,
    pub mlp: Mlp,
    /// Mean training loss over each block of 100 steps.
    pub loss_history: Vec<f64>,
}

impl ArModel {
    pub fn fit(ds: &Dataset, config: &ArConfig, seed: u64) -> Result<Self> {
        let p = config.order;
        contract!(p >= 1, "AR order must be >= 1");
        contract!(config.batch_size >= 1 && config.lr > 0.0, "batch_size and lr must be positive");
        let codec = SeriesCodec::fit(ds)?;
        let sampler = EmpiricalMetadataSampler::fit(ds, p)?;
        let k = codec.dims();
        let meta_w = codec.meta_width();

        let (inputs, targets) = windows(&codec, ds, p)?;
        let windows = inputs.nrows();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mlp = Mlp::new(&mut params, "ar", meta_w + p * k, &config.hidden, k, Activation::Relu, &mut rng);
        let mut adam = Adam::new(&params, config.lr, 0.9, 0.999);
        let mut batches = Batches::new(windows, config.batch_size);
        let mut loss_history = Vec::new();
        let mut running = 0.0;
        for step in 0..config.steps {
            let (idx, _) = batches.next(&mut rng);
            let tape = Tape::new();
            let vars = params.bind(&tape);
            let pred = mlp.forward(&vars, tape.leaf(inputs.select(ndarray::Axis(0), &idx)));
            let loss = (pred - tape.leaf(targets.select(ndarray::Axis(0), &idx))).square().mean_all();
            running += loss.item();
            let grads = tape.gradients(loss, &vars);
            adam.step(&mut params, &grads);
            if (step + 1) % 100 == 0 || step + 1 == config.steps {
                let span = (step % 100 + 1) as f64;
                loss_history.push(running / span);
                running = 0.0;
            }
        }
        Ok(Self { config: config.clone(), codec, sampler, params, mlp, loss_history })
    }

    fn forward(&self, input: Matrix) -> Matrix {
        let tape = Tape::new();
        let vars = self.params.bind(&tape);
        self.mlp.forward(&vars, tape.leaf(input)).value().as_ref().clone()
    }

    /// One-step prediction in data units; `history` holds the last `order`
    /// records, oldest first.
    pub fn predict_next(&self, metadata: &[MetaValue], history: &[Vec<f64>]) -> Result<Vec<f64>> {
        let p = self.config.order;
        contract!(history.len() == p, "history must hold exactly {p} records");
        let k = self.codec.dims();
        let meta_w = self.codec.meta_width();
        let mut input = Array2::zeros((1, meta_w + p * k));
        for (j, v) in self.codec.encode_metadata(metadata)?.into_iter().enumerate() {
            input[[0, j]] = v;
        }
        for lag in 1..=p {
            for (d, v) in self.codec.scale_record(&history[p - lag]).into_iter().enumerate() {
                input[[0, meta_w + (lag - 1) * k + d]] = v;
            }
        }
        let out = self.forward(input);
        Ok((0..k).map(|d| out[[0, d]] * self.codec.std[d] + self.codec.mean[d]).collect())
    }
}

/// Stacked `(input, target)` rows over every sample longer than `p`;
/// inputs are `[metadata ‖ R_{t-1} ‖ … ‖ R_{t-p}]`.
fn windows(codec: &SeriesCodec, ds: &Dataset, p: usize) -> Result<(Matrix, Matrix)> {
    let k = codec.dims();
    let meta_w = codec.meta_width();
    let usable: Vec<_> = ds.samples.iter().filter(|s| s.len() > p).collect();
    if usable.len() < ds.len() {
        log::warn!("{} samples of length <= {p} contribute no AR windows", ds.len() - usable.len());
    }
    contract!(!usable.is_empty(), "no sample is longer than the AR order {p}");
    let count: usize = usable.iter().map(|s| s.len() - p).sum();
    let mut inputs = Array2::zeros((count, meta_w + p * k));
    let mut targets = Array2::zeros((count, k));
    let mut row = 0;
    for s in usable {
        let meta = codec.encode_metadata(&s.metadata)?;
        let z = codec.encode_series(s);
        for t in p..s.len() {
            inputs.slice_mut(s![row, ..meta_w]).assign(&ndarray::ArrayView1::from(&meta));
            for lag in 1..=p {
                let off = meta_w + (lag - 1) * k;
                inputs.slice_mut(s![row, off..off + k]).assign(&z.row(t - lag));
            }
            targets.row_mut(row).assign(&z.row(t));
            row += 1;
        }
    }
    Ok((inputs, targets))
}

impl Synthesizer for ArModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Ar
    }

    fn schema(&self) -> &DataSchema {
        self.codec.schema()
    }

    /// Metadata, length and the first `order` records come from the
    /// empirical sampler; the rest is rolled out deterministically.
    fn sample_with_length(&self, n: usize, length: Option<usize>, seed: u64) -> Result<Dataset> {
        check_request(self.schema(), n, length)?;
        let p = self.config.order;
        let k = self.codec.dims();
        let meta_w = self.codec.meta_width();
        let mut metas = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        let mut input = Array2::zeros((n, meta_w + p * k));
        let mut series: Vec<Array2<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = row_rng(seed, i);
            let meta = self.sampler.sample_metadata(&mut rng);
            let len = length.unwrap_or_else(|| self.sampler.sample_length(&mut rng));
            let mut z = Array2::zeros((len.max(p), k));
            for j in 0..p {
                let rec = self.codec.scale_record(&self.sampler.sample_record(j, &mut rng));
                z.row_mut(j).assign(&ndarray::ArrayView1::from(&rec));
            }
            for (j, v) in self.codec.encode_metadata(&meta)?.into_iter().enumerate() {
                input[[i, j]] = v;
            }
            metas.push(meta);
            lengths.push(len);
            series.push(z);
        }
        let longest = lengths.iter().copied().max().unwrap_or(0);
        for t in p..longest {
            for (i, z) in series.iter().enumerate() {
                for lag in 1..=p {
                    let off = meta_w + (lag - 1) * k;
                    let src = if t - lag < z.nrows() { z.row(t - lag).to_owned() } else { ndarray::Array1::zeros(k) };
                    input.slice_mut(s![i, off..off + k]).assign(&src);
                }
            }
            let out = self.forward(input.clone());
            for (i, z) in series.iter_mut().enumerate() {
                if t < z.nrows() {
                    z.row_mut(t).assign(&out.row(i));
                }
            }
        }
        let samples = metas
            .into_iter()
            .zip(series)
            .zip(lengths)
            .map(|((meta, z), len)| self.codec.decode_sample(meta, &z.slice(s![..len, ..]).to_owned()))
            .collect();
        Dataset::new(self.codec.schema().clone(), samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FieldSpec, NormalizationRange, Sample, TimestampMode};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// `R_t = 0.9·R_{t-1} + ε`, `ε ~ N(0, 0.1²)`.
    fn ar1_dataset(n: usize, len: usize, seed: u64) -> Dataset {
        let schema = DataSchema {
            metadata_fields: vec![FieldSpec::categorical("g", ["only"])],
            measurement_fields: vec![FieldSpec::numeric("v", NormalizationRange::NegOneOne)],
            max_length: len,
            batch_param: 1,
            timestamp_mode: TimestampMode::None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let samples = (0..n)
            .map(|_| {
                let mut x: f64 = rng.random_range(-2.0..2.0);
                let m = Array2::from_shape_fn((len, 1), |_| {
                    let v = x;
                    x = 0.9 * x + noise.sample(&mut rng);
                    v
                });
                Sample { metadata: vec![MetaValue::Category("only".into())], measurements: m, timestamps: None }
            })
            .collect();
        Dataset::new(schema, samples).unwrap()
    }

    #[test]
    fn recovers_an_ar1_process() {
        let ds = ar1_dataset(200, 30, 0);
        let cfg = ArConfig { order: 1, hidden: vec![32], steps: 1500, batch_size: 64, ..Default::default() };
        let model = ArModel::fit(&ds, &cfg, 1).unwrap();
        let meta = [MetaValue::Category("only".into())];
        let mse = (0..41)
            .map(|i| {
                let x = -2.0 + 0.1 * i as f64;
                let pred = model.predict_next(&meta, &[vec![x]]).unwrap()[0];
                (pred - 0.9 * x).powi(2)
            })
            .sum::<f64>()
            / 41.0;
        assert!(mse < 0.01, "mse against the AR(1) oracle: {mse}");
        assert!(model.loss_history.last().unwrap() < &model.loss_history[0]);
    }

    #[test]
    fn one_window_per_step_after_the_order() {
        let ds = ar1_dataset(4, 56, 0);
        let codec = SeriesCodec::fit(&ds).unwrap();
        let (x, y) = windows(&codec, &ds, 3).unwrap();
        assert_eq!(x.nrows(), 4 * 53);
        assert_eq!(x.ncols(), 1 + 3);
        // row 0 predicts t = 3 from t = 2, 1, 0
        let z = codec.encode_series(&ds.samples[0]);
        assert_eq!(y[[0, 0]], z[[3, 0]]);
        assert_eq!(x.row(0).to_vec(), vec![1.0, z[[2, 0]], z[[1, 0]], z[[0, 0]]]);
    }

    #[test]
    fn samples_have_requested_shape_and_are_seeded() {
        let ds = ar1_dataset(20, 8, 3);
        let cfg = ArConfig { hidden: vec![8], steps: 20, ..Default::default() };
        let model = ArModel::fit(&ds, &cfg, 0).unwrap();
        let a = model.sample(7, 5).unwrap();
        assert_eq!(a.len(), 7);
        assert!(a.lengths().iter().all(|&l| l == 8));
        assert_eq!(a, model.sample(7, 5).unwrap());
        assert_eq!(a.samples[..3], model.sample(3, 5).unwrap().samples[..]);
        assert!(model.predict_next(&[MetaValue::Category("only".into())], &[vec![0.0]]).is_err());
        assert!(model.sample_with_length(4, Some(2), 0).unwrap().lengths().iter().all(|&l| l == 2));
    }
}
