//! Sampling synthetic datasets from a trained bundle, and retraining the
//! metadata generator towards a new attribute distribution.

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use netsynth_nn::{Adam, Tape};

use crate::error::{contract, Result};
use crate::model::{Critic, GeneratorBundle, Noise};
use crate::preprocess::{length_from_flags, make_flags, CategoricalDecode, EncodedBatch};
use crate::schema::{Dataset, MetaValue};
use crate::training::{wgan_gp_loss, TrainConfig};
use crate::Matrix;

/// Rows generated per forward pass.
const CHUNK: usize = 256;

/// Noise for rows `start..start + rows`. Every row draws from its own
/// stream, so a sample depends only on `(seed, sample index)`.
fn row_noise(seed: u64, start: usize, rows: usize, passes: usize, dim: usize) -> Noise {
    let per_row: Vec<Noise> = (start..start + rows)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            Noise::sample(1, passes, dim, &mut rng)
        })
        .collect();
    let stack = |f: &dyn Fn(&Noise) -> &Matrix| {
        let views: Vec<_> = per_row.iter().map(|n| f(n).view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("rows share widths")
    };
    Noise {
        attr: stack(&|n| &n.attr),
        minmax: stack(&|n| &n.minmax),
        passes: (0..passes).map(|k| stack(&|n| &n.passes[k])).collect(),
    }
}

/// Generation knobs beyond the sample count.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleOptions {
    /// Run exactly this many steps instead of stopping on the flags.
    pub length: Option<usize>,
    pub seed: u64,
    pub decode: CategoricalDecode,
}

/// Encoded generator output for `n` samples. Lengths come from the stop
/// flags (capped at the schema's `max_length`) unless forced.
pub fn sample_encoded(
    bundle: &GeneratorBundle,
    n: usize,
    fixed_metadata: Option<&[f64]>,
    opts: &SampleOptions,
) -> Result<EncodedBatch> {
    contract!(n >= 1, "sample count must be >= 1");
    let layout = bundle.layout();
    let max_length = bundle.schema().max_length;
    let s = layout.batch_param;
    let passes = match opts.length {
        Some(len) => {
            contract!(
                len >= 1 && len <= max_length,
                "forced length {len} outside [1, {max_length}]"
            );
            len.div_ceil(s)
        }
        None => layout.passes(),
    };
    let steps = passes * s;
    let mut parts = Vec::new();
    for start in (0..n).step_by(CHUNK) {
        let rows = CHUNK.min(n - start);
        let noise = row_noise(opts.seed, start, rows, passes, bundle.config.noise_dim);
        let fixed = fixed_metadata
            .map(|m| Array2::from_shape_fn((rows, m.len()), |(_, j)| m[j]));
        let tape = Tape::new();
        let p = bundle.bind(&tape);
        let g = bundle.generate(&tape, &p, &noise, fixed.as_ref(), opts.length.is_none())?;
        let flags = g.flags.value();
        let lengths: Vec<usize> = match opts.length {
            Some(len) => vec![len; rows],
            None => flags.rows().into_iter().map(|r| length_from_flags(r).min(max_length)).collect(),
        };
        parts.push(EncodedBatch {
            metadata_real: g.metadata_real.value().as_ref().clone(),
            metadata_fake: g.metadata_fake.value().as_ref().clone(),
            measurements: g.measurements.value().as_ref().clone(),
            flags: if opts.length.is_some() { make_flags(&lengths, steps)? } else { flags.as_ref().clone() },
            lengths,
        });
    }
    Ok(concat_batches(&parts))
}

fn concat_batches(parts: &[EncodedBatch]) -> EncodedBatch {
    let cat = |f: fn(&EncodedBatch) -> &Matrix| {
        let views: Vec<_> = parts.iter().map(|b| f(b).view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("chunks share widths")
    };
    EncodedBatch {
        metadata_real: cat(|b| &b.metadata_real),
        metadata_fake: cat(|b| &b.metadata_fake),
        measurements: cat(|b| &b.measurements),
        flags: cat(|b| &b.flags),
        lengths: parts.iter().flat_map(|b| b.lengths.iter().copied()).collect(),
    }
}

/// Draws `n` samples: metadata, then min/max, then measurements until the
/// first step whose end flag wins (or exactly `length_override` steps).
pub fn sample(
    bundle: &GeneratorBundle,
    n: usize,
    length_override: Option<usize>,
    seed: u64,
) -> Result<Dataset> {
    sample_with(bundle, n, &SampleOptions { length: length_override, seed, ..Default::default() })
}

pub fn sample_with(bundle: &GeneratorBundle, n: usize, opts: &SampleOptions) -> Result<Dataset> {
    let batch = sample_encoded(bundle, n, None, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    bundle.preprocessor.decode_with(&batch, opts.decode, &mut rng)
}

/// Like [`sample`], with every sample's metadata fixed to `metadata`.
pub fn conditional_sample(
    bundle: &GeneratorBundle,
    metadata: &[MetaValue],
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let encoded = bundle.preprocessor.encode_metadata(metadata)?;
    let opts = SampleOptions { seed, ..Default::default() };
    let batch = sample_encoded(bundle, n, Some(&encoded), &opts)?;
    let mut ds = bundle.preprocessor.decode(&batch)?;
    // numeric metadata round-trips through the encoder; keep the exact input
    for s in &mut ds.samples {
        s.metadata = metadata.to_vec();
    }
    Ok(ds)
}

/// Metadata rows of `ds`, checked against the bundle's metadata fields.
pub fn target_metadata(bundle: &GeneratorBundle, ds: &Dataset) -> Result<Vec<Vec<MetaValue>>> {
    contract!(
        ds.schema.metadata_fields == bundle.schema().metadata_fields,
        "target metadata fields do not match the trained schema"
    );
    Ok(ds.samples.iter().map(|s| s.metadata.clone()).collect())
}

/// Retrains only the metadata generator so its output matches `target`.
///
/// A fresh critic on the `metadata_real` columns is trained alongside it;
/// every other network in the bundle is left untouched.
pub fn retarget_metadata(
    bundle: &GeneratorBundle,
    target: &[Vec<MetaValue>],
    train_cfg: &TrainConfig,
) -> Result<GeneratorBundle> {
    contract!(!target.is_empty(), "target metadata is empty");
    contract!(bundle.attr_gen.is_some(), "the schema has no metadata fields to retarget");
    train_cfg.validate()?;
    let pre = &bundle.preprocessor;
    let width = pre.layout.meta_width;
    let mut rows = Vec::with_capacity(target.len() * width);
    for m in target {
        rows.extend(pre.encode_metadata(m)?);
    }
    let real_all = Array2::from_shape_vec((target.len(), width), rows).expect("row width");

    let mut out = bundle.clone();
    let cfg = out.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut critic = Critic::new(width, &cfg.aux_disc_mlp, &mut rng, "retarget");
    let attr = out.attr_gen.as_mut().expect("checked above");
    let mut critic_opt = Adam::new(&critic.params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    let mut gen_opt = Adam::new(&attr.params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    let batch = cfg.batch_size.min(target.len());
    let normal = |rows: usize, rng: &mut ChaCha8Rng| {
        Noise::sample(rows, 0, cfg.noise_dim, rng).attr
    };
    for step in 0..train_cfg.max_batches {
        for _ in 0..cfg.d_steps_per_g_step {
            let picks = index::sample(&mut rng, target.len(), batch).into_vec();
            let real = real_all.select(Axis(0), &picks);
            let z = normal(batch, &mut rng);
            let mix = Array2::from_shape_simple_fn((batch, 1), || rand::Rng::random::<f64>(&mut rng));
            let tape = Tape::new();
            let gp = attr.params.bind(&tape);
            let cp = critic.params.bind(&tape);
            let fake = attr.forward(&gp, tape.leaf(z)).detach();
            let terms = wgan_gp_loss(|x| critic.forward(&cp, x), tape.leaf(real), fake, &mix, cfg.gp_weight)?;
            let grads = tape.gradients(-terms.disc_loss, &cp);
            critic_opt.step(&mut critic.params, &grads);
        }
        let z = normal(batch, &mut rng);
        let tape = Tape::new();
        let gp = attr.params.bind(&tape);
        let cp = critic.params.bind(&tape);
        let loss = -critic.forward(&cp, attr.forward(&gp, tape.leaf(z)))?.mean_all();
        let grads = tape.gradients(loss, &gp);
        gen_opt.step(&mut attr.params, &grads);
        if train_cfg.log_every > 0 && (step + 1) % train_cfg.log_every == 0 {
            log::info!("retarget step {}: g={:.4}", step + 1, loss.item());
        }
    }
    Ok(out)
}
