//! Helpers shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use netsynth::model::{GeneratorBundle, ModelConfig, Noise};
use netsynth::preprocess::{EncodedBatch, Preprocessor};
use netsynth::schema::{DataSchema, Dataset, FieldSpec, MetaValue, NormalizationRange, Sample, TimestampMode};
use netsynth::training::combined_objective;
use netsynth_nn::{ParamSet, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-class dataset with lengths up to 6 and one numeric measurement.
pub fn six_step_dataset() -> Dataset {
    let schema = DataSchema {
        metadata_fields: vec![FieldSpec::categorical("class", ["a", "b"])],
        measurement_fields: vec![FieldSpec::numeric("x", NormalizationRange::NegOneOne)],
        max_length: 6,
        batch_param: 2,
        timestamp_mode: TimestampMode::None,
    };
    let samples = (0..6)
        .map(|i| {
            let len = 6 - i % 3;
            Sample {
                metadata: vec![MetaValue::Category(["a", "b"][i % 2].into())],
                measurements: Array2::from_shape_fn((len, 1), |(t, _)| (i as f64) + (t as f64 * 0.7).cos()),
                timestamps: None,
            }
        })
        .collect();
    Dataset::new(schema, samples).unwrap()
}

/// Bundle with every width at most 8, `T_pad = 6`, `S = 2`, and its data.
pub fn shrunken_bundle(seed: u64) -> (GeneratorBundle, EncodedBatch) {
    let ds = six_step_dataset();
    let config = ModelConfig {
        noise_dim: 2,
        attr_mlp: vec![4],
        minmax_mlp: vec![4],
        rnn_units: 4,
        disc_mlp: vec![8, 8],
        aux_disc_mlp: vec![5],
        ..ModelConfig::default()
    };
    let pre = Preprocessor::fit(&ds, true).unwrap();
    assert_eq!((pre.layout.t_pad, pre.layout.batch_param), (6, 2));
    let (data, _) = pre.encode(&ds).unwrap();
    let bundle = GeneratorBundle::new(config, pre, seed, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (bundle, data)
}

pub fn param_sets(b: &GeneratorBundle) -> Vec<&ParamSet> {
    vec![
        &b.attr_gen.as_ref().unwrap().params,
        &b.minmax_gen.as_ref().unwrap().params,
        &b.meas_gen.params,
        &b.disc_main.params,
        &b.disc_aux.as_ref().unwrap().params,
    ]
}

fn param_sets_mut(b: &mut GeneratorBundle) -> Vec<&mut ParamSet> {
    vec![
        &mut b.attr_gen.as_mut().unwrap().params,
        &mut b.minmax_gen.as_mut().unwrap().params,
        &mut b.meas_gen.params,
        &mut b.disc_main.params,
        &mut b.disc_aux.as_mut().unwrap().params,
    ]
}

pub struct GradientReport {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Compares analytic and central-difference gradients of the combined
/// objective for every scalar parameter.
pub fn gradient_check(seed: u64) -> GradientReport {
    let (mut bundle, data) = shrunken_bundle(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let rows = data.len();
    let noise = Noise::sample(rows, bundle.layout().passes(), bundle.config.noise_dim, &mut rng);
    let mix_main = Array2::from_shape_simple_fn((rows, 1), || rng.random::<f64>());
    let mix_aux = Array2::from_shape_simple_fn((rows, 1), || rng.random::<f64>());
    let eval = |b: &GeneratorBundle| {
        let tape = Tape::new();
        let p = b.bind(&tape);
        combined_objective(b, &tape, &p, &data, &noise, &mix_main, &mix_aux).unwrap().item()
    };
    let analytic: Vec<Vec<ndarray::Array2<f64>>> = {
        let tape = Tape::new();
        let p = bundle.bind(&tape);
        let loss = combined_objective(&bundle, &tape, &p, &data, &noise, &mix_main, &mix_aux).unwrap();
        [&p.attr, &p.minmax, &p.meas, &p.disc, &p.aux].iter().map(|vars| tape.gradients(loss, vars)).collect()
    };
    let h = 1e-5;
    let mut checked = 0;
    let mut max_rel_error: f64 = 0.0;
    for (set_idx, grads) in analytic.iter().enumerate() {
        for (m, g) in grads.iter().enumerate() {
            for ((i, j), &a) in g.indexed_iter() {
                let original = param_sets(&bundle)[set_idx].values[m][[i, j]];
                param_sets_mut(&mut bundle)[set_idx].values[m][[i, j]] = original + h;
                let up = eval(&bundle);
                param_sets_mut(&mut bundle)[set_idx].values[m][[i, j]] = original - h;
                let down = eval(&bundle);
                param_sets_mut(&mut bundle)[set_idx].values[m][[i, j]] = original;
                let numeric = (up - down) / (2.0 * h);
                let scale = a.abs().max(numeric.abs());
                let err = if scale < 1e-6 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
                max_rel_error = max_rel_error.max(err);
                checked += 1;
            }
        }
    }
    GradientReport { checked, max_rel_error }
}
