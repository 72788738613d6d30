//! Alternating Wasserstein-GP optimisation of both critics and the
//! generator, with optional clipped-and-noised critic gradients.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use netsynth_nn::{Adam, ParamSet, Tape, Var};

use crate::error::{contract, Error, Result};
use crate::model::{with_batch_param, BoundParams, GeneratorBundle, ModelConfig, Noise};
use crate::preprocess::{EncodedBatch, Preprocessor};
use crate::schema::Dataset;
use crate::Matrix;

/// Clipping and noise for private critic updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_batches: usize,
    /// Checkpoint cadence in steps; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
    pub dp: Option<DpConfig>,
    /// Progress log cadence in steps; 0 disables it.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_batches: 200_000,
            checkpoint_every: 0,
            checkpoint_dir: None,
            seed: 0,
            dp: None,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.max_batches == 0 {
            problems.push("max_batches must be >= 1".to_string());
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            problems.push("checkpoint_every is set but checkpoint_dir is missing".to_string());
        }
        if let Some(dp) = self.dp {
            if !(dp.clip_norm > 0.0) {
                problems.push(format!("dp clip_norm must be > 0 (got {})", dp.clip_norm));
            }
            if !(dp.noise_multiplier >= 0.0) {
                problems.push(format!("dp noise_multiplier must be >= 0 (got {})", dp.noise_multiplier));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

/// One optimiser cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss_d1: f64,
    pub loss_d2: f64,
    pub gp1: f64,
    pub gp2: f64,
    pub loss_g: f64,
    pub wallclock_s: f64,
    pub gen_param_norm: f64,
    pub disc_param_norm: f64,
}

impl StepRecord {
    pub fn is_finite(&self) -> bool {
        [self.loss_d1, self.loss_d2, self.gp1, self.gp2, self.loss_g].iter().all(|v| v.is_finite())
    }

    /// Equal up to wall-clock time.
    pub fn same_losses(&self, other: &StepRecord) -> bool {
        StepRecord { wallclock_s: 0.0, ..self.clone() } == StepRecord { wallclock_s: 0.0, ..other.clone() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "step,loss_d1,loss_d2,gp1,gp2,loss_g,wallclock_s";

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step, r.loss_d1, r.loss_d2, r.gp1, r.gp2, r.loss_g, r.wallclock_s
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let file = std::fs::File::create(path).map_err(io)?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(io)
    }
}

/// Terms of the Wasserstein-GP objective, all `1 × 1`.
#[derive(Clone, Copy, Debug)]
pub struct WganTerms<'t> {
    /// `wasserstein − λ·gp`, maximised by the critic.
    pub disc_loss: Var<'t>,
    /// `E[D(x)] − E[D(G(z))]`.
    pub wasserstein: Var<'t>,
    /// `−E[D(G(z))]`, minimised by the generator.
    pub gen_term: Var<'t>,
    /// `E[(‖∇D(x̂)‖₂ − 1)²]`, without the weight.
    pub gp: Var<'t>,
}

/// Wasserstein-GP terms for `critic` on equally shaped real and fake rows.
/// `mix` holds one interpolation weight per row: `x̂ = t·real + (1−t)·fake`.
pub fn wgan_gp_loss<'t, F>(
    critic: F,
    real: Var<'t>,
    fake: Var<'t>,
    mix: &Matrix,
    lambda: f64,
) -> Result<WganTerms<'t>>
where
    F: Fn(Var<'t>) -> Result<Var<'t>>,
{
    contract!(lambda >= 0.0, "gradient penalty weight must be >= 0, got {lambda}");
    contract!(
        real.shape() == fake.shape(),
        "real {:?} and fake {:?} batches differ in shape",
        real.shape(),
        fake.shape()
    );
    contract!(mix.dim() == (real.shape().0, 1), "one interpolation weight per row is required");
    let tape = real.tape();
    let d_real = critic(real)?.mean_all();
    let d_fake = critic(fake)?.mean_all();
    let t = tape.leaf(mix.clone());
    let one_minus_t = tape.leaf(mix.mapv(|v| 1.0 - v));
    let interp = real.mul_col(t) + fake.mul_col(one_minus_t);
    let score = critic(interp)?.sum_all();
    let g = tape.grad(score, &[interp])[0];
    // tiny offset keeps the norm differentiable at zero
    let norm = g.square().sum_cols().add_scalar(1e-12).sqrt();
    let gp = norm.add_scalar(-1.0).square().mean_all();
    let wasserstein = d_real - d_fake;
    Ok(WganTerms { disc_loss: wasserstein - gp.scale(lambda), wasserstein, gen_term: -d_fake, gp })
}

/// Clips each example's gradient to L2 norm `clip`, sums, adds
/// `N(0, (σ·clip)²)` per coordinate and divides by the batch size.
pub fn dp_gradient_transform(
    per_example: &[Vec<Matrix>],
    clip: f64,
    sigma: f64,
    rng: &mut impl Rng,
) -> Vec<Matrix> {
    assert!(!per_example.is_empty(), "no per-example gradients");
    let mut total: Vec<Matrix> = per_example[0].iter().map(|g| Array2::zeros(g.dim())).collect();
    for grads in per_example {
        let norm = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > clip { clip / norm } else { 1.0 };
        for (acc, g) in total.iter_mut().zip(grads) {
            acc.scaled_add(scale, g);
        }
    }
    let batch = per_example.len() as f64;
    let std = sigma * clip;
    let noise = (std > 0.0).then(|| Normal::new(0.0, std).expect("finite std"));
    for acc in &mut total {
        if let Some(n) = &noise {
            acc.mapv_inplace(|v| v + n.sample(rng));
        }
        acc.mapv_inplace(|v| v / batch);
    }
    total
}

#[derive(Clone, Debug)]
struct Optimizers {
    gen: Vec<Adam>,
    disc: Adam,
    aux: Option<Adam>,
}

/// Mutable training state: bundle, optimisers, data and randomness.
pub struct Trainer {
    pub bundle: GeneratorBundle,
    data: EncodedBatch,
    opts: Optimizers,
    dp: Option<DpConfig>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    steps: usize,
    started: Instant,
}

/// Interpolation weights `U[0, 1]`, one per row.
fn mix_weights(rows: usize, rng: &mut impl Rng) -> Matrix {
    let u = Uniform::new(0.0, 1.0).expect("valid range");
    Array2::from_shape_simple_fn((rows, 1), || u.sample(rng))
}

fn param_norm<'a>(sets: impl IntoIterator<Item = &'a ParamSet>) -> f64 {
    sets.into_iter().map(|p| p.l2_norm().powi(2)).sum::<f64>().sqrt()
}

impl Trainer {
    /// Fits the encoder on `ds` and initialises fresh networks.
    pub fn new(ds: &Dataset, model_cfg: &ModelConfig, seed: u64, dp: Option<DpConfig>) -> Result<Self> {
        model_cfg.validate()?;
        contract!(!ds.is_empty(), "cannot train on an empty dataset");
        let ds = with_batch_param(ds, model_cfg);
        let pre = Preprocessor::fit(&ds, model_cfg.auto_normalize)?;
        let (data, _) = pre.encode(&ds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bundle = GeneratorBundle::new(model_cfg.clone(), pre, seed, &mut rng)?;
        Ok(Self::from_bundle(bundle, data, rng, dp))
    }

    /// Continues training an existing bundle on already encoded data.
    pub fn from_bundle(
        bundle: GeneratorBundle,
        data: EncodedBatch,
        rng: ChaCha8Rng,
        dp: Option<DpConfig>,
    ) -> Self {
        let cfg = &bundle.config;
        let adam = |p: &ParamSet| Adam::new(p, cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
        let mut gen = Vec::new();
        if let Some(g) = &bundle.attr_gen {
            gen.push(adam(&g.params));
        }
        if let Some(g) = &bundle.minmax_gen {
            gen.push(adam(&g.params));
        }
        gen.push(adam(&bundle.meas_gen.params));
        let opts = Optimizers {
            gen,
            disc: adam(&bundle.disc_main.params),
            aux: bundle.disc_aux.as_ref().map(|c| adam(&c.params)),
        };
        let order = (0..data.len()).collect();
        Self { bundle, data, opts, dp, rng, order, cursor: usize::MAX, steps: 0, started: Instant::now() }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn data(&self) -> &EncodedBatch {
        &self.data
    }

    /// Next minibatch, drawn without replacement within each epoch.
    fn next_batch(&mut self) -> EncodedBatch {
        let n = self.data.len();
        let size = self.bundle.config.batch_size.min(n);
        if self.cursor.saturating_add(size) > n {
            self.order = index::sample(&mut self.rng, n, n).into_vec();
            self.cursor = 0;
        }
        let rows = &self.order[self.cursor..self.cursor + size];
        self.cursor += size;
        self.data.select(rows)
    }

    /// One critic update on both critics. Returns `(loss_d1, loss_d2, gp1, gp2)`.
    fn critic_step(&mut self, real: &EncodedBatch) -> Result<[f64; 4]> {
        let bundle = &self.bundle;
        let lambda = bundle.config.gp_weight;
        let rows = real.len();
        let noise = bundle.sample_noise(rows, &mut self.rng);
        let (fake_main, fake_aux) = {
            let tape = Tape::new();
            let p = bundle.bind(&tape);
            let g = bundle.generate(&tape, &p, &noise, None, true)?;
            (g.discriminator_input().value().as_ref().clone(), g.aux_input().value().as_ref().clone())
        };
        let real_main = real.discriminator_input();
        let real_aux = real.aux_input();
        let mix_main = mix_weights(rows, &mut self.rng);
        let mix_aux = mix_weights(rows, &mut self.rng);

        // Gradients of the negated critic objectives for a set of rows.
        let critic_grads = |idx: Option<usize>| -> Result<(Vec<Matrix>, Option<Vec<Matrix>>, [f64; 4])> {
            let pick = |m: &Matrix| match idx {
                Some(i) => m.slice(ndarray::s![i..i + 1, ..]).to_owned(),
                None => m.clone(),
            };
            let tape = Tape::new();
            let p = BoundParams {
                attr: Vec::new(),
                minmax: Vec::new(),
                meas: Vec::new(),
                disc: bundle.disc_main.params.bind(&tape),
                aux: bundle.disc_aux.as_ref().map(|c| c.params.bind(&tape)).unwrap_or_default(),
            };
            let l1 = wgan_gp_loss(
                |x| bundle.discriminate(&p, x),
                tape.leaf(pick(&real_main)),
                tape.leaf(pick(&fake_main)),
                &pick(&mix_main),
                lambda,
            )?;
            let g1 = tape.gradients(-l1.disc_loss, &p.disc);
            let mut stats = [l1.disc_loss.item(), 0.0, l1.gp.item(), 0.0];
            let g2 = if bundle.disc_aux.is_some() {
                let l2 = wgan_gp_loss(
                    |x| bundle.discriminate_aux(&p, x),
                    tape.leaf(pick(&real_aux)),
                    tape.leaf(pick(&fake_aux)),
                    &pick(&mix_aux),
                    lambda,
                )?;
                stats[1] = l2.disc_loss.item();
                stats[3] = l2.gp.item();
                Some(tape.gradients(-l2.disc_loss, &p.aux))
            } else {
                None
            };
            Ok((g1, g2, stats))
        };

        let (g1, g2, stats) = match self.dp {
            None => critic_grads(None)?,
            Some(dp) => {
                let mut per1 = Vec::with_capacity(rows);
                let mut per2 = Vec::with_capacity(rows);
                let mut stats = [0.0; 4];
                for i in 0..rows {
                    let (a, b, s) = critic_grads(Some(i))?;
                    per1.push(a);
                    per2.extend(b);
                    for (acc, v) in stats.iter_mut().zip(s) {
                        *acc += v / rows as f64;
                    }
                }
                let (c, sigma) = (dp.clip_norm, dp.noise_multiplier);
                let g1 = dp_gradient_transform(&per1, c, sigma, &mut self.rng);
                let g2 = (!per2.is_empty()).then(|| dp_gradient_transform(&per2, c, sigma, &mut self.rng));
                (g1, g2, stats)
            }
        };
        self.opts.disc.step(&mut self.bundle.disc_main.params, &g1);
        if let (Some(g2), Some(aux), Some(opt)) = (g2, self.bundle.disc_aux.as_mut(), self.opts.aux.as_mut()) {
            opt.step(&mut aux.params, &g2);
        }
        Ok(stats)
    }

    /// One generator update on `L_1 + α·L_2`; returns the loss value.
    fn generator_step(&mut self, rows: usize) -> Result<f64> {
        let bundle = &self.bundle;
        let noise = bundle.sample_noise(rows, &mut self.rng);
        let tape = Tape::new();
        let p = bundle.bind(&tape);
        let loss = generator_loss(bundle, &tape, &p, &noise)?;
        let grads = tape.gradients(loss, &p.generator());
        let value = loss.item();
        let mut offset = 0;
        for (params, opt) in self.bundle.generator_params().into_iter().zip(&mut self.opts.gen) {
            let n = params.len();
            opt.step(params, &grads[offset..offset + n]);
            offset += n;
        }
        Ok(value)
    }

    /// `d_steps_per_g_step` critic updates followed by one generator update.
    pub fn step(&mut self) -> Result<StepRecord> {
        let mut stats = [0.0; 4];
        let mut rows = 0;
        for _ in 0..self.bundle.config.d_steps_per_g_step {
            let real = self.next_batch();
            rows = real.len();
            stats = self.critic_step(&real)?;
        }
        let loss_g = self.generator_step(rows)?;
        self.steps += 1;
        let b = &self.bundle;
        let gen_sets = b.attr_gen.iter().map(|g| &g.params)
            .chain(b.minmax_gen.iter().map(|g| &g.params))
            .chain(std::iter::once(&b.meas_gen.params));
        let disc_sets = std::iter::once(&b.disc_main.params).chain(b.disc_aux.iter().map(|c| &c.params));
        Ok(StepRecord {
            step: self.steps,
            loss_d1: stats[0],
            loss_d2: stats[1],
            gp1: stats[2],
            gp2: stats[3],
            loss_g,
            wallclock_s: self.started.elapsed().as_secs_f64(),
            gen_param_norm: param_norm(gen_sets),
            disc_param_norm: param_norm(disc_sets),
        })
    }

    fn all_finite(&self) -> bool {
        let b = &self.bundle;
        b.attr_gen.iter().all(|g| g.params.all_finite())
            && b.minmax_gen.iter().all(|g| g.params.all_finite())
            && b.meas_gen.params.all_finite()
            && b.disc_main.params.all_finite()
            && b.disc_aux.iter().all(|c| c.params.all_finite())
    }
}

/// Generator objective `−E[D₁(G(z))] − α·E[D₂(G(z))]`.
pub fn generator_loss<'t>(
    bundle: &GeneratorBundle,
    tape: &'t Tape,
    p: &BoundParams<'t>,
    noise: &Noise,
) -> Result<Var<'t>> {
    let g = bundle.generate(tape, p, noise, None, true)?;
    let mut loss = -bundle.discriminate(p, g.discriminator_input())?.mean_all();
    let alpha = bundle.config.aux_weight;
    if alpha > 0.0 && bundle.disc_aux.is_some() {
        loss = loss - bundle.discriminate_aux(p, g.aux_input())?.mean_all().scale(alpha);
    }
    Ok(loss)
}

/// Combined objective `disc_loss₁ + α·disc_loss₂` with the generator in the
/// graph; used for gradient verification.
pub fn combined_objective<'t>(
    bundle: &GeneratorBundle,
    tape: &'t Tape,
    p: &BoundParams<'t>,
    real: &EncodedBatch,
    noise: &Noise,
    mix_main: &Matrix,
    mix_aux: &Matrix,
) -> Result<Var<'t>> {
    let lambda = bundle.config.gp_weight;
    let g = bundle.generate(tape, p, noise, None, false)?;
    let l1 = wgan_gp_loss(
        |x| bundle.discriminate(p, x),
        tape.leaf(real.discriminator_input()),
        g.discriminator_input(),
        mix_main,
        lambda,
    )?;
    let mut total = l1.disc_loss;
    if bundle.disc_aux.is_some() {
        let l2 = wgan_gp_loss(
            |x| bundle.discriminate_aux(p, x),
            tape.leaf(real.aux_input()),
            g.aux_input(),
            mix_aux,
            lambda,
        )?;
        total = total + l2.disc_loss.scale(bundle.config.aux_weight);
    }
    Ok(total)
}

/// Steps with non-finite losses tolerated in a row before giving up.
const MAX_NON_FINITE: usize = 100;

/// Trains a fresh bundle on `ds` for `train_cfg.max_batches` steps.
pub fn train(
    ds: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(GeneratorBundle, TrainLog)> {
    train_cfg.validate()?;
    let mut trainer = Trainer::new(ds, model_cfg, train_cfg.seed, train_cfg.dp)?;
    let log = run(&mut trainer, train_cfg)?;
    Ok((trainer.bundle, log))
}

/// Runs `max_batches` steps on an existing trainer with rollback on
/// non-finite values and periodic checkpoints.
pub fn run(trainer: &mut Trainer, train_cfg: &TrainConfig) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    let mut bad_streak = 0;
    for _ in 0..train_cfg.max_batches {
        let backup = (trainer.bundle.clone(), trainer.opts.clone());
        let record = trainer.step()?;
        let finite = record.is_finite() && trainer.all_finite();
        if finite {
            bad_streak = 0;
        } else {
            bad_streak += 1;
            log::warn!("step {}: non-finite values, rolling back", record.step);
            (trainer.bundle, trainer.opts) = backup;
            if bad_streak >= MAX_NON_FINITE {
                return Err(Error::Numeric(format!(
                    "training aborted at step {}: {MAX_NON_FINITE} consecutive non-finite steps \
                     (last losses d1={} d2={} g={})",
                    record.step, record.loss_d1, record.loss_d2, record.loss_g
                )));
            }
        }
        let step = record.step;
        if train_cfg.log_every > 0 && step % train_cfg.log_every == 0 {
            log::info!(
                "step {step}: d1={:.4} d2={:.4} gp1={:.4} gp2={:.4} g={:.4}",
                record.loss_d1, record.loss_d2, record.gp1, record.gp2, record.loss_g
            );
        }
        log.records.push(record);
        if let (true, Some(dir)) = (train_cfg.checkpoint_every > 0, &train_cfg.checkpoint_dir) {
            if step % train_cfg.checkpoint_every == 0 {
                trainer.bundle.save(dir.join(format!("checkpoint_{step:07}.json")))?;
            }
        }
    }
    Ok(log)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::schema::{DataSchema, FieldSpec, MetaValue, NormalizationRange, Sample, TimestampMode};

    pub(crate) fn tiny_dataset(n: usize, t: usize, s: usize) -> Dataset {
        let schema = DataSchema {
            metadata_fields: vec![FieldSpec::categorical("class", ["a", "b"])],
            measurement_fields: vec![FieldSpec::numeric("x", NormalizationRange::ZeroOne)],
            max_length: t,
            batch_param: s,
            timestamp_mode: TimestampMode::None,
        };
        let samples = (0..n)
            .map(|i| {
                let offset = if i % 2 == 0 { 0.0 } else { 10.0 };
                let len = t - (i % 3).min(t - 1);
                Sample {
                    metadata: vec![MetaValue::Category(["a", "b"][i % 2].into())],
                    measurements: Array2::from_shape_fn((len, 1), |(r, _)| offset + (r as f64 + i as f64).sin()),
                    timestamps: None,
                }
            })
            .collect();
        Dataset::new(schema, samples).unwrap()
    }

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            noise_dim: 2,
            attr_mlp: vec![4],
            minmax_mlp: vec![4],
            rnn_units: 5,
            disc_mlp: vec![6, 6],
            aux_disc_mlp: vec![4],
            batch_size: 4,
            ..ModelConfig::default()
        }
    }

    fn scalar_critic<'t>(w: f64) -> impl Fn(Var<'t>) -> Result<Var<'t>> {
        move |x: Var<'t>| Ok(x.sum_cols().scale(w))
    }

    fn wv_mul<'t>(x: Var<'t>, w: Var<'t>) -> Var<'t> {
        x.matmul(w)
    }

    fn square_critic(x: Var<'_>) -> Result<Var<'_>> {
        Ok(x.square())
    }

    #[test]
    fn unit_linear_critic_has_zero_penalty() {
        let tape = Tape::new();
        let wv = tape.leaf(Array2::from_shape_vec((2, 1), vec![0.6, 0.8]).unwrap());
        let critic = move |x| Ok(wv_mul(x, wv));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let real = tape.leaf(Array2::from_shape_simple_fn((5, 2), || rng.random::<f64>()));
        let fake = tape.leaf(Array2::from_shape_simple_fn((5, 2), || rng.random::<f64>()));
        let terms = wgan_gp_loss(critic, real, fake, &mix_weights(5, &mut rng), 10.0).unwrap();
        assert!(terms.gp.item().abs() < 1e-10);
    }

    #[test]
    fn slope_two_critic_penalty_is_one() {
        // D(x) = 2x: ‖∇D‖ = 2 everywhere, so (2 − 1)² = 1 and the weighted penalty is λ.
        let tape = Tape::new();
        let real = tape.leaf(Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap());
        let fake = tape.leaf(Array2::from_shape_vec((3, 1), vec![0.0, -1.0, 5.0]).unwrap());
        let lambda = 10.0;
        let mix = Array2::from_elem((3, 1), 0.3);
        let t = wgan_gp_loss(scalar_critic(2.0), real, fake, &mix, lambda).unwrap();
        assert!((t.gp.item() - 1.0).abs() < 1e-9);
        assert!((lambda * t.gp.item() - lambda).abs() < 1e-9);
        // E[D(real)] − E[D(fake)] = 2·(2 − 4/3)
        assert!((t.wasserstein.item() - 2.0 * (2.0 - 4.0 / 3.0)).abs() < 1e-9);
        assert!((t.disc_loss.item() - (t.wasserstein.item() - lambda * t.gp.item())).abs() < 1e-9);
        assert!((t.gen_term.item() + 2.0 * 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn negative_penalty_weight_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Array2::zeros((2, 1)));
        let r = wgan_gp_loss(scalar_critic(1.0), x, x, &Array2::zeros((2, 1)), -1.0);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn symmetric_setup_has_near_zero_wasserstein_term() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 20_000;
        let real = tape.leaf(Array2::from_shape_simple_fn((n, 1), || normal.sample(&mut rng)));
        let fake = tape.leaf(Array2::from_shape_simple_fn((n, 1), || normal.sample(&mut rng)));
        let t = wgan_gp_loss(square_critic, real, fake, &mix_weights(n, &mut rng), 10.0).unwrap();
        // D = x² has variance 2 under N(0,1); difference of two means has std 2/√n
        assert!(t.wasserstein.item().abs() < 4.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn dp_transform_without_noise_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grads: Vec<Vec<Matrix>> = (0..5)
            .map(|_| vec![Array2::from_shape_simple_fn((2, 3), || rng.random::<f64>() - 0.5)])
            .collect();
        let out = dp_gradient_transform(&grads, 1e9, 0.0, &mut rng);
        let mean = grads.iter().fold(Array2::<f64>::zeros((2, 3)), |acc, g| acc + &g[0]) / 5.0;
        assert!((&out[0] - &mean).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dp_transform_clips_to_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // norm 2C with C = 1.5
        let g = vec![vec![Array2::from_shape_vec((1, 2), vec![1.8, 2.4]).unwrap()]];
        let out = dp_gradient_transform(&g, 1.5, 0.0, &mut rng);
        let norm = out[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.5).abs() < 1e-12);
        assert!((out[0][[0, 0]] - 0.9).abs() < 1e-12 && (out[0][[0, 1]] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn dp_noise_averages_to_the_clipped_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grads = vec![
            vec![Array2::from_elem((1, 1), 3.0)],
            vec![Array2::from_elem((1, 1), 0.2)],
        ];
        // clipped: 1.0 and 0.2, mean 0.6; noise std per trial = σC/B = 5
        let (trials, sigma, clip) = (10_000, 10.0, 1.0);
        let mean = (0..trials)
            .map(|_| dp_gradient_transform(&grads, clip, sigma, &mut rng)[0][[0, 0]])
            .sum::<f64>()
            / trials as f64;
        let band = 3.0 * (sigma * clip / 2.0) / (trials as f64).sqrt();
        assert!((mean - 0.6).abs() < band, "{mean}");
    }

    #[test]
    fn one_step_moves_parameters() {
        let ds = tiny_dataset(8, 4, 2);
        let mut trainer = Trainer::new(&ds, &tiny_config(), 0, None).unwrap();
        let before = trainer.bundle.clone();
        let rec = trainer.step().unwrap();
        assert_eq!(rec.step, 1);
        assert!(rec.is_finite());
        assert_ne!(before.meas_gen.params, trainer.bundle.meas_gen.params);
        assert_ne!(before.disc_main.params, trainer.bundle.disc_main.params);
        assert_ne!(before.disc_aux, trainer.bundle.disc_aux);
    }

    #[test]
    fn max_batches_one_runs_exactly_one_cycle() {
        let ds = tiny_dataset(8, 4, 2);
        let cfg = TrainConfig { max_batches: 1, ..TrainConfig::default() };
        let (_, log) = train(&ds, &tiny_config(), &cfg).unwrap();
        assert_eq!(log.records.len(), 1);
        let mut csv = Vec::new();
        log.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("step,loss_d1,loss_d2,gp1,gp2,loss_g,wallclock_s\n1,"));
    }

    #[test]
    fn fixed_seed_runs_produce_identical_logs() {
        let ds = tiny_dataset(10, 4, 2);
        let cfg = TrainConfig { max_batches: 5, seed: 7, ..TrainConfig::default() };
        let (b1, l1) = train(&ds, &tiny_config(), &cfg).unwrap();
        let (b2, l2) = train(&ds, &tiny_config(), &cfg).unwrap();
        assert_eq!(b1, b2);
        assert!(l1.records.iter().zip(&l2.records).all(|(a, b)| a.same_losses(b)));
    }

    #[test]
    fn zero_aux_weight_cuts_the_aux_path() {
        let ds = tiny_dataset(8, 4, 2);
        let cfg = ModelConfig { aux_weight: 0.0, ..tiny_config() };
        let trainer = Trainer::new(&ds, &cfg, 3, None).unwrap();
        let b = &trainer.bundle;
        let noise = b.sample_noise(4, &mut ChaCha8Rng::seed_from_u64(0));
        let tape = Tape::new();
        let p = b.bind(&tape);
        let loss = generator_loss(b, &tape, &p, &noise).unwrap();
        let grads = tape.gradients(loss, &p.aux);
        assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        // with the aux weight on, the aux critic is in the graph
        let on = Trainer::new(&ds, &tiny_config(), 3, None).unwrap();
        let tape = Tape::new();
        let p = on.bundle.bind(&tape);
        let loss = generator_loss(&on.bundle, &tape, &p, &noise).unwrap();
        assert!(tape.gradients(loss, &p.aux).iter().any(|g| g.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn dp_training_runs() {
        let ds = tiny_dataset(8, 4, 2);
        let cfg = TrainConfig {
            max_batches: 2,
            dp: Some(DpConfig { clip_norm: 1.0, noise_multiplier: 1.0 }),
            ..TrainConfig::default()
        };
        let (_, log) = train(&ds, &tiny_config(), &cfg).unwrap();
        assert_eq!(log.records.len(), 2);
        assert!(log.records.iter().all(StepRecord::is_finite));
    }

    #[test]
    fn checkpoints_follow_the_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(8, 4, 2);
        let cfg = TrainConfig {
            max_batches: 4,
            checkpoint_every: 2,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..TrainConfig::default()
        };
        train(&ds, &tiny_config(), &cfg).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, vec!["checkpoint_0000002.json", "checkpoint_0000004.json"]);
        GeneratorBundle::load_for(dir.path().join(&names[1]), &ds.schema).unwrap();
    }

    #[test]
    fn train_config_lists_all_problems() {
        let cfg = TrainConfig {
            max_batches: 0,
            checkpoint_every: 5,
            dp: Some(DpConfig { clip_norm: 0.0, noise_multiplier: -1.0 }),
            ..TrainConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        for key in ["max_batches", "checkpoint_dir", "clip_norm", "noise_multiplier"] {
            assert!(msg.contains(key), "{msg}");
        }
    }
}
