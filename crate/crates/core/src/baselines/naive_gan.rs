//! Single MLP generator emitting the whole flattened sample
//! `[metadata_real ‖ metadata_fake ‖ measurements ‖ flags]` at once, trained
//! against one Wasserstein critic.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use netsynth_nn::{Activation, Adam, Mlp, ParamSet, Tape, Var};

use super::{check_request, row_rng, Batches, ModelKind, Synthesizer};
use crate::error::{contract, Result};
use crate::model::{activate_blocks, tile_blocks, Critic};
use crate::preprocess::{length_from_flags, Block, CategoricalDecode, EncodedBatch, Layout, Preprocessor};
use crate::schema::{DataSchema, Dataset};
use crate::training::wgan_gp_loss;
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NaiveGanConfig {
    pub noise_dim: usize,
    pub gen_mlp: Vec<usize>,
    pub disc_mlp: Vec<usize>,
    pub gp_weight: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub steps: usize,
    pub auto_normalize: bool,
}

impl Default for NaiveGanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 5,
            gen_mlp: vec![200; 4],
            disc_mlp: vec![200; 4],
            gp_weight: 10.0,
            lr: 1e-3,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            batch_size: 100,
            d_steps_per_g_step: 1,
            steps: 2000,
            auto_normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveGanModel {
    pub config: NaiveGanConfig,
    pub preprocessor: Preprocessor,
    pub gen_params: ParamSet,
    pub generator: Mlp,
    pub critic: Critic,
    /// Activation blocks over everything except the flags.
    pub blocks: Vec<Block>,
}

fn body_blocks(lay: &Layout) -> Vec<Block> {
    let shift = |bs: &[Block], by: usize| bs.iter().map(move |b| Block { start: b.start + by, ..*b }).collect::<Vec<_>>();
    let mut blocks = shift(&lay.meta_blocks, 0);
    blocks.extend(shift(&lay.fake_blocks, lay.meta_width));
    blocks.extend(shift(&tile_blocks(&lay.step_blocks, lay.step_width, lay.t_pad), lay.aux_width()));
    blocks
}

impl NaiveGanModel {
    /// Untrained model for `ds`'s schema and layout.
    pub fn new(ds: &Dataset, config: &NaiveGanConfig, rng: &mut impl Rng) -> Result<Self> {
        contract!(config.noise_dim >= 1 && config.batch_size >= 1, "noise_dim and batch_size must be >= 1");
        contract!(config.lr > 0.0 && config.gp_weight >= 0.0, "lr must be > 0 and gp_weight >= 0");
        let preprocessor = Preprocessor::fit(ds, config.auto_normalize)?;
        let lay = &preprocessor.layout;
        let width = lay.disc_width();
        let mut gen_params = ParamSet::new();
        let generator =
            Mlp::new(&mut gen_params, "naive.gen", config.noise_dim, &config.gen_mlp, width, Activation::Relu, rng);
        let critic = Critic::new(width, &config.disc_mlp, rng, "naive.disc");
        let blocks = body_blocks(lay);
        Ok(Self { config: config.clone(), preprocessor, gen_params, generator, critic, blocks })
    }

    pub fn output_width(&self) -> usize {
        self.generator.output()
    }

    /// Generator forward pass. With `mask` set, steps after the first end
    /// flag are zeroed, as in the real data's padding.
    pub fn forward<'t>(&self, p: &[Var<'t>], z: Var<'t>, mask: bool) -> Var<'t> {
        let tape = z.tape();
        let lay = &self.preprocessor.layout;
        let out = self.generator.forward(p, z);
        let body_end = lay.aux_width() + lay.t_pad * lay.step_width;
        let mut body = activate_blocks(out.slice_cols(0, body_end), &self.blocks);
        let mut flags = out.slice_cols(body_end, self.output_width()).group_softmax(2);
        if mask {
            let f = flags.value();
            let rows = f.nrows();
            let mut body_mask = Array2::ones((rows, body_end));
            let mut flag_mask = Array2::zeros((rows, 2 * lay.t_pad));
            for i in 0..rows {
                let len = length_from_flags(f.row(i));
                flag_mask.slice_mut(s![i, ..2 * len]).fill(1.0);
                body_mask.slice_mut(s![i, lay.aux_width() + len * lay.step_width..]).fill(0.0);
            }
            body = body * tape.leaf(body_mask);
            flags = flags * tape.leaf(flag_mask);
        }
        Var::concat_cols(&[body, flags])
    }

    fn generate_rows(&self, z: Matrix) -> Matrix {
        self.generate_rows_with(z, true)
    }

    fn generate_rows_with(&self, z: Matrix, mask: bool) -> Matrix {
        let tape = Tape::new();
        let p = self.gen_params.bind(&tape);
        self.forward(&p, tape.leaf(z), mask).value().as_ref().clone()
    }

    pub fn fit(ds: &Dataset, config: &NaiveGanConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::new(ds, config, &mut rng)?;
        let (encoded, _) = model.preprocessor.encode(ds)?;
        let real_all = encoded.discriminator_input();
        let mut gen_opt = Adam::new(&model.gen_params, config.lr, config.adam_beta1, config.adam_beta2);
        let mut disc_opt = Adam::new(&model.critic.params, config.lr, config.adam_beta1, config.adam_beta2);
        let mut batches = Batches::new(ds.len(), config.batch_size);
        let noise = |rows: usize, rng: &mut ChaCha8Rng| {
            Array2::from_shape_simple_fn((rows, config.noise_dim), || rng.sample(StandardNormal))
        };
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        for _ in 0..config.steps {
            for _ in 0..config.d_steps_per_g_step.max(1) {
                let (idx, _) = batches.next(&mut rng);
                let rows = idx.len();
                let fake = model.generate_rows(noise(rows, &mut rng));
                let mix = Array2::from_shape_simple_fn((rows, 1), || rng.sample(unit));
                let tape = Tape::new();
                let dp = model.critic.params.bind(&tape);
                let terms = wgan_gp_loss(
                    |x| model.critic.forward(&dp, x),
                    tape.leaf(real_all.select(ndarray::Axis(0), &idx)),
                    tape.leaf(fake),
                    &mix,
                    config.gp_weight,
                )?;
                let grads = tape.gradients(-terms.disc_loss, &dp);
                disc_opt.step(&mut model.critic.params, &grads);
            }
            let rows = config.batch_size.min(ds.len());
            let z = noise(rows, &mut rng);
            let tape = Tape::new();
            let gp = model.gen_params.bind(&tape);
            let dp = model.critic.params.bind(&tape);
            let fake = model.forward(&gp, tape.leaf(z), true);
            let loss = -model.critic.forward(&dp, fake)?.mean_all();
            let grads = tape.gradients(loss, &gp);
            gen_opt.step(&mut model.gen_params, &grads);
        }
        Ok(model)
    }

    /// Splits flattened generator rows back into an encoded batch.
    fn split(&self, rows: &Matrix) -> EncodedBatch {
        let lay = &self.preprocessor.layout;
        let meas_end = lay.aux_width() + lay.t_pad * lay.step_width;
        let flags = rows.slice(s![.., meas_end..]).to_owned();
        let lengths = flags
            .rows()
            .into_iter()
            .map(|r| length_from_flags(r).min(self.preprocessor.schema.max_length))
            .collect();
        EncodedBatch {
            metadata_real: rows.slice(s![.., ..lay.meta_width]).to_owned(),
            metadata_fake: rows.slice(s![.., lay.meta_width..lay.aux_width()]).to_owned(),
            measurements: rows.slice(s![.., lay.aux_width()..meas_end]).to_owned(),
            flags,
            lengths,
        }
    }
}

impl Synthesizer for NaiveGanModel {
    fn kind(&self) -> ModelKind {
        ModelKind::NaiveGan
    }

    fn schema(&self) -> &DataSchema {
        &self.preprocessor.schema
    }

    fn sample_with_length(&self, n: usize, length: Option<usize>, seed: u64) -> Result<Dataset> {
        check_request(self.schema(), n, length)?;
        let mut z = Array2::zeros((n, self.config.noise_dim));
        for i in 0..n {
            let mut rng = row_rng(seed, i);
            for v in z.row_mut(i) {
                *v = rng.sample(StandardNormal);
            }
        }
        // a forced length ignores the generated end flags
        let mut batch = self.split(&self.generate_rows_with(z, length.is_none()));
        if let Some(l) = length {
            batch.lengths = vec![l; n];
        }
        self.preprocessor.decode_with(&batch, CategoricalDecode::Argmax, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SinusoidCorpus;

    #[test]
    fn output_width_matches_layout_arithmetic() {
        let ds = crate::model::tests::toy_dataset(7, 1);
        let m = NaiveGanModel::new(&ds, &NaiveGanConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // d_A = 3 + 1, K_num = 1, d_f = 1 + 2
        assert_eq!(m.output_width(), 4 + 2 + 7 * (3 + 2));
        let off = NaiveGanModel::new(&ds, &NaiveGanConfig { auto_normalize: false, ..Default::default() }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(off.output_width(), 4 + 7 * (3 + 2));
    }

    #[test]
    fn generated_rows_follow_the_padding_convention() {
        let ds = SinusoidCorpus { samples: 40, lengths: vec![3, 6], ..Default::default() }.generate(0).unwrap();
        let cfg = NaiveGanConfig { gen_mlp: vec![8], disc_mlp: vec![8], steps: 3, batch_size: 10, ..Default::default() };
        let m = NaiveGanModel::fit(&ds, &cfg, 0).unwrap();
        let rows = m.generate_rows(Array2::from_shape_fn((20, 5), |(i, j)| ((i * 5 + j) as f64).sin() * 2.0));
        let batch = m.split(&rows);
        let lay = &m.preprocessor.layout;
        for (i, &len) in batch.lengths.iter().enumerate() {
            assert!(batch.measurements.slice(s![i, len * lay.step_width..]).iter().all(|&v| v == 0.0));
            assert!(batch.flags.slice(s![i, 2 * len..]).iter().all(|&v| v == 0.0));
        }
        let out = m.sample(9, 4).unwrap();
        assert_eq!(out.len(), 9);
        assert!(m.sample_with_length(5, Some(4), 4).unwrap().lengths().iter().all(|&l| l == 4));
        assert!(m.sample_with_length(5, Some(7), 4).is_err());
        assert_eq!(out, m.sample(9, 4).unwrap());
    }
}
