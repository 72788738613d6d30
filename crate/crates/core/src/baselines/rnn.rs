//! LSTM trained with teacher forcing to predict `R_t` from
//! `[metadata ‖ R_{t-1}]`, then run free at sampling time.

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use netsynth_nn::{Adam, Linear, LstmCell, ParamSet, Tape, Var};

use super::{check_request, row_rng, Batches, EmpiricalMetadataSampler, ModelKind, SeriesCodec, Synthesizer};
use crate::error::{contract, Result};
use crate::schema::{DataSchema, Dataset};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnConfig {
    pub units: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self { units: 100, lr: 1e-3, batch_size: 100, epochs: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    pub config: RnnConfig,
    pub codec: SeriesCodec,
    pub sampler: EmpiricalMetadataSampler,
    pub params: ParamSet,
    pub cell: LstmCell,
    pub head: Linear,
    /// Mean teacher-forced one-step MSE per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Padded teacher-forcing tensors for a set of samples.
struct Prepared {
    meta: Matrix,
    /// `z[t]`: `n × K` records at step `t`, zero past each length.
    z: Vec<Matrix>,
    /// `mask[t]`: `n × K`, one where step `t` exists.
    mask: Vec<Matrix>,
}

impl RnnModel {
    pub fn fit(ds: &Dataset, config: &RnnConfig, seed: u64) -> Result<Self> {
        contract!(config.units >= 1 && config.batch_size >= 1 && config.lr > 0.0, "units, batch_size and lr must be positive");
        let codec = SeriesCodec::fit(ds)?;
        let sampler = EmpiricalMetadataSampler::fit(ds, 1)?;
        let k = codec.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let cell = LstmCell::new(&mut params, "rnn.cell", codec.meta_width() + k, config.units, &mut rng);
        let head = Linear::new(&mut params, "rnn.head", config.units, k, &mut rng);
        let mut model = Self { config: config.clone(), codec, sampler, params, cell, head, epoch_losses: Vec::new() };

        let encoded: Vec<(Vec<f64>, Matrix)> = ds
            .samples
            .iter()
            .map(|s| Ok((model.codec.encode_metadata(&s.metadata)?, model.codec.encode_series(s))))
            .collect::<Result<_>>()?;
        let mut adam = Adam::new(&model.params, config.lr, 0.9, 0.999);
        let mut batches = Batches::new(ds.len(), config.batch_size);
        let per_epoch = ds.len().div_ceil(batches_size(config.batch_size, ds.len()));
        for _ in 0..config.epochs {
            let mut total = 0.0;
            for _ in 0..per_epoch {
                let (idx, _) = batches.next(&mut rng);
                let prep = model.prepare(&idx.iter().map(|&i| &encoded[i]).collect::<Vec<_>>());
                let tape = Tape::new();
                let vars = model.params.bind(&tape);
                let loss = model.teacher_forced_loss(&tape, &vars, &prep);
                total += loss.item();
                let grads = tape.gradients(loss, &vars);
                adam.step(&mut model.params, &grads);
            }
            model.epoch_losses.push(total / per_epoch as f64);
        }
        Ok(model)
    }

    fn prepare(&self, rows: &[&(Vec<f64>, Matrix)]) -> Prepared {
        let n = rows.len();
        let k = self.codec.dims();
        let longest = rows.iter().map(|(_, z)| z.nrows()).max().unwrap_or(0);
        let mut meta = Array2::zeros((n, self.codec.meta_width()));
        let mut z = vec![Array2::zeros((n, k)); longest];
        let mut mask = vec![Array2::zeros((n, k)); longest];
        for (i, (m, series)) in rows.iter().enumerate() {
            meta.row_mut(i).assign(&ndarray::ArrayView1::from(m));
            for t in 0..series.nrows() {
                z[t].row_mut(i).assign(&series.row(t));
                mask[t].row_mut(i).fill(1.0);
            }
        }
        Prepared { meta, z, mask }
    }

    fn teacher_forced_loss<'t>(&self, tape: &'t Tape, p: &[Var<'t>], prep: &Prepared) -> Var<'t> {
        let n = prep.meta.nrows();
        let k = self.codec.dims();
        let meta = tape.leaf(prep.meta.clone());
        let mut state = self.cell.zero_state(tape, n);
        let mut prev = tape.zeros(n, k);
        let mut total = tape.scalar(0.0);
        let mut count = 0.0;
        for (z, mask) in prep.z.iter().zip(&prep.mask) {
            state = self.cell.step(p, Var::concat_cols(&[meta, prev]), state);
            let pred = self.head.forward(p, state.h);
            let target = tape.leaf(z.clone());
            total = total + ((pred - target) * tape.leaf(mask.clone())).square().sum_all();
            count += mask.sum();
            prev = target;
        }
        total.scale(1.0 / count.max(1.0))
    }
}

fn batches_size(batch: usize, n: usize) -> usize {
    batch.clamp(1, n.max(1))
}

impl Synthesizer for RnnModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Rnn
    }

    fn schema(&self) -> &DataSchema {
        self.codec.schema()
    }

    /// The first record comes from the empirical Gaussians; later records
    /// feed the network's own predictions back in.
    fn sample_with_length(&self, n: usize, length: Option<usize>, seed: u64) -> Result<Dataset> {
        check_request(self.schema(), n, length)?;
        let k = self.codec.dims();
        let mut metas = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        let mut meta = Array2::zeros((n, self.codec.meta_width()));
        let mut first = Array2::zeros((n, k));
        for i in 0..n {
            let mut rng = row_rng(seed, i);
            let m = self.sampler.sample_metadata(&mut rng);
            lengths.push(length.unwrap_or_else(|| self.sampler.sample_length(&mut rng)));
            let rec = self.codec.scale_record(&self.sampler.sample_record(0, &mut rng));
            first.row_mut(i).assign(&ndarray::ArrayView1::from(&rec));
            meta.row_mut(i).assign(&ndarray::ArrayView1::from(&self.codec.encode_metadata(&m)?));
            metas.push(m);
        }
        let longest = lengths.iter().copied().max().unwrap_or(1);
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let meta = tape.leaf(meta);
        let mut state = self.cell.zero_state(&tape, n);
        let mut prev = tape.zeros(n, k);
        let mut out = Array2::zeros((n, longest * k));
        for t in 0..longest {
            state = self.cell.step(&p, Var::concat_cols(&[meta, prev]), state);
            let rec = if t == 0 {
                tape.leaf(first.clone())
            } else {
                tape.leaf(self.head.forward(&p, state.h).value().as_ref().clone())
            };
            out.slice_mut(s![.., t * k..(t + 1) * k]).assign(rec.value().as_ref());
            // keep the graph short: state and inputs are plain values from here on
            state = netsynth_nn::LstmState { h: state.h.detach(), c: state.c.detach() };
            prev = rec;
        }
        let samples = metas
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let len = lengths[i];
                let rows = out.slice(s![i, ..len * k]).to_owned().into_shape_with_order((len, k)).expect("contiguous");
                self.codec.decode_sample(m, &rows)
            })
            .collect();
        Dataset::new(self.codec.schema().clone(), samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SinusoidCorpus;

    #[test]
    fn teacher_forced_loss_falls_over_early_epochs() {
        let ds = SinusoidCorpus { samples: 60, lengths: vec![20], ..Default::default() }.generate(0).unwrap();
        let cfg = RnnConfig { units: 16, batch_size: 20, epochs: 5, lr: 5e-3 };
        let mut falling = 0;
        for seed in 0..3 {
            let m = RnnModel::fit(&ds, &cfg, seed).unwrap();
            assert_eq!(m.epoch_losses.len(), 5);
            if m.epoch_losses.windows(2).all(|w| w[1] < w[0]) {
                falling += 1;
            }
        }
        assert!(falling >= 2, "loss fell every epoch for only {falling} of 3 seeds");
    }

    #[test]
    fn samples_follow_empirical_lengths() {
        let ds = SinusoidCorpus { samples: 30, lengths: vec![5, 9], ..Default::default() }.generate(1).unwrap();
        let m = RnnModel::fit(&ds, &RnnConfig { units: 4, epochs: 1, ..Default::default() }, 0).unwrap();
        let out = m.sample(40, 2).unwrap();
        assert!(out.lengths().iter().all(|l| [5, 9].contains(l)));
        assert_eq!(out, m.sample(40, 2).unwrap());
        assert!(out.samples.iter().all(|s| s.measurements.iter().all(|v| v.is_finite())));
    }
}
