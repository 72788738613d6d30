//! The generator/critic network family.
//!
//! Generation runs in three stages: a metadata MLP, a min/max MLP conditioned
//! on that metadata, and an LSTM that emits `S` time steps per pass. Two
//! Wasserstein critics score the output: the main one sees the whole
//! flattened sample, the auxiliary one only `[metadata_real ‖ metadata_fake]`.
//!
//! The main critic input order is fixed as metadata_real, metadata_fake,
//! time-major measurements, time-major flags (see [`crate::preprocess`]).

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use netsynth_nn::{Activation, Linear, LstmCell, Mlp, ParamSet, Tape, Var};

use crate::error::{contract, Error, Result};
use crate::preprocess::{Block, BlockKind, Layout, Preprocessor};
use crate::schema::{DataSchema, Dataset, NormalizationRange};
use crate::Matrix;

/// Architecture and optimiser hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Dimension of every noise vector.
    pub noise_dim: usize,
    pub attr_mlp: Vec<usize>,
    pub minmax_mlp: Vec<usize>,
    pub rnn_units: usize,
    pub disc_mlp: Vec<usize>,
    pub aux_disc_mlp: Vec<usize>,
    /// Steps emitted per recurrent pass; `None` uses the schema's value.
    pub batch_param: Option<usize>,
    pub gp_weight: f64,
    pub aux_weight: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub auto_normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            noise_dim: 5,
            attr_mlp: vec![100, 100],
            minmax_mlp: vec![100, 100],
            rnn_units: 100,
            disc_mlp: vec![200; 4],
            aux_disc_mlp: vec![200; 4],
            batch_param: None,
            gp_weight: 10.0,
            aux_weight: 1.0,
            lr: 1e-3,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            batch_size: 100,
            d_steps_per_g_step: 1,
            auto_normalize: true,
        }
    }
}

impl ModelConfig {
    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let widths = [
            ("attr_mlp", &self.attr_mlp),
            ("minmax_mlp", &self.minmax_mlp),
            ("disc_mlp", &self.disc_mlp),
            ("aux_disc_mlp", &self.aux_disc_mlp),
        ];
        for (name, w) in widths {
            if w.contains(&0) {
                problems.push(format!("{name} widths must be >= 1"));
            }
        }
        let positive = [
            ("noise_dim", self.noise_dim),
            ("rnn_units", self.rnn_units),
            ("batch_size", self.batch_size),
            ("d_steps_per_g_step", self.d_steps_per_g_step),
        ];
        for (name, v) in positive {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if self.batch_param == Some(0) {
            problems.push("batch_param must be >= 1".into());
        }
        if !(self.gp_weight >= 0.0) {
            problems.push(format!("gp_weight must be >= 0 (got {})", self.gp_weight));
        }
        if !(self.aux_weight >= 0.0) {
            problems.push(format!("aux_weight must be >= 0 (got {})", self.aux_weight));
        }
        if !(self.lr > 0.0) {
            problems.push(format!("lr must be > 0 (got {})", self.lr));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} must lie in [0, 1) (got {b})"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

/// Applies each block's output activation: softmax over categorical blocks,
/// sigmoid or tanh over numeric ones. Adjacent blocks with the same
/// activation are handled together.
pub fn activate_blocks<'t>(x: Var<'t>, blocks: &[Block]) -> Var<'t> {
    #[derive(PartialEq)]
    enum Act {
        Range(NormalizationRange),
        Softmax(usize),
    }
    let act_of = |b: &Block| match b.kind {
        BlockKind::Numeric(r) => Act::Range(r),
        BlockKind::Categorical => Act::Softmax(b.width),
    };
    let mut runs: Vec<(usize, usize, Act)> = Vec::new();
    for b in blocks {
        let act = act_of(b);
        match runs.last_mut() {
            Some((_, end, last)) if *last == act && *end == b.start => *end = b.end(),
            _ => runs.push((b.start, b.end(), act)),
        }
    }
    let apply = |v: Var<'t>, act: &Act| match act {
        Act::Range(NormalizationRange::ZeroOne) => v.sigmoid(),
        Act::Range(NormalizationRange::NegOneOne) => v.tanh(),
        Act::Softmax(w) => v.group_softmax(*w),
    };
    let width = x.shape().1;
    if let [(0, end, act)] = runs.as_slice() {
        if *end == width {
            return apply(x, act);
        }
    }
    let parts: Vec<Var<'t>> =
        runs.iter().map(|(s, e, act)| apply(x.slice_cols(*s, *e), act)).collect();
    Var::concat_cols(&parts)
}

/// Concatenates the non-empty parts; all-empty yields a `rows × 0` matrix.
pub(crate) fn concat_nonempty<'t>(tape: &'t Tape, rows: usize, parts: &[Var<'t>]) -> Var<'t> {
    let kept: Vec<Var<'t>> = parts.iter().copied().filter(|v| v.shape().1 > 0).collect();
    match kept.len() {
        0 => tape.zeros(rows, 0),
        1 => kept[0],
        _ => Var::concat_cols(&kept),
    }
}

/// `blocks` repeated `times` times at a stride of `width` columns.
pub(crate) fn tile_blocks(blocks: &[Block], width: usize, times: usize) -> Vec<Block> {
    (0..times)
        .flat_map(|t| blocks.iter().map(move |b| Block { start: b.start + t * width, ..*b }))
        .collect()
}

/// Metadata MLP: noise → `metadata_real`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetadataGenerator {
    pub params: ParamSet,
    pub mlp: Mlp,
    pub blocks: Vec<Block>,
}

impl MetadataGenerator {
    pub fn forward<'t>(&self, p: &[Var<'t>], z: Var<'t>) -> Var<'t> {
        activate_blocks(self.mlp.forward(p, z), &self.blocks)
    }
}

/// Min/max MLP: `[metadata_real ‖ noise]` → `metadata_fake`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxGenerator {
    pub params: ParamSet,
    pub mlp: Mlp,
    pub blocks: Vec<Block>,
}

impl MinMaxGenerator {
    pub fn forward<'t>(&self, p: &[Var<'t>], metadata: Var<'t>, z: Var<'t>) -> Var<'t> {
        let tape = z.tape();
        let input = concat_nonempty(tape, z.shape().0, &[metadata, z]);
        activate_blocks(self.mlp.forward(p, input), &self.blocks)
    }
}

/// Recurrent measurement generator emitting `batch_param` steps per pass.
///
/// Each pass reads `[metadata_real ‖ metadata_fake ‖ noise]`; the linear head
/// produces `S·d_f` measurement values followed by `S` flag pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGenerator {
    pub params: ParamSet,
    pub cell: LstmCell,
    pub head: Linear,
    pub step_blocks: Vec<Block>,
    pub step_width: usize,
    pub batch_param: usize,
}

impl MeasurementGenerator {
    /// Unrolls one pass per entry of `noise`. With `mask` set, outputs after a
    /// sample's generated end step are zeroed so the critic sees the same
    /// padding convention as real data.
    pub fn forward<'t>(
        &self,
        p: &[Var<'t>],
        metadata_all: Var<'t>,
        noise: &[Var<'t>],
        mask: bool,
    ) -> (Var<'t>, Var<'t>) {
        let tape = metadata_all.tape();
        let batch = metadata_all.shape().0;
        let s = self.batch_param;
        let meas_width = s * self.step_width;
        let blocks = tile_blocks(&self.step_blocks, self.step_width, s);
        let mut state = self.cell.zero_state(tape, batch);
        let mut alive = vec![1.0; batch];
        let mut meas_parts = Vec::with_capacity(noise.len());
        let mut flag_parts = Vec::with_capacity(noise.len());
        for &z in noise {
            let x = concat_nonempty(tape, batch, &[metadata_all, z]);
            state = self.cell.step(p, x, state);
            let out = self.head.forward(p, state.h);
            let mut meas = activate_blocks(out.slice_cols(0, meas_width), &blocks);
            let mut flags = out.slice_cols(meas_width, meas_width + 2 * s).group_softmax(2);
            if mask {
                let f = flags.value();
                let mut meas_mask = Array2::zeros((batch, meas_width));
                let mut flag_mask = Array2::zeros((batch, 2 * s));
                for (i, a) in alive.iter_mut().enumerate() {
                    for j in 0..s {
                        meas_mask
                            .slice_mut(ndarray::s![i, j * self.step_width..(j + 1) * self.step_width])
                            .fill(*a);
                        flag_mask[[i, 2 * j]] = *a;
                        flag_mask[[i, 2 * j + 1]] = *a;
                        if f[[i, 2 * j]] < f[[i, 2 * j + 1]] {
                            *a = 0.0;
                        }
                    }
                }
                meas = meas * tape.leaf(meas_mask);
                flags = flags * tape.leaf(flag_mask);
            }
            meas_parts.push(meas);
            flag_parts.push(flags);
        }
        (concat_nonempty(tape, batch, &meas_parts), Var::concat_cols(&flag_parts))
    }
}

/// Wasserstein critic: ReLU MLP with a single unbounded output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub params: ParamSet,
    pub mlp: Mlp,
}

impl Critic {
    pub fn new(input: usize, hidden: &[usize], rng: &mut impl Rng, name: &str) -> Self {
        let mut params = ParamSet::new();
        let mlp = Mlp::new(&mut params, name, input, hidden, 1, Activation::Relu, rng);
        Self { params, mlp }
    }

    pub fn input_width(&self) -> usize {
        self.mlp.input()
    }

    /// Scores each row of `input`.
    pub fn forward<'t>(&self, p: &[Var<'t>], input: Var<'t>) -> Result<Var<'t>> {
        let width = input.shape().1;
        contract!(
            width == self.input_width(),
            "critic expects {} input columns, got {width}",
            self.input_width()
        );
        Ok(self.mlp.forward(p, input))
    }

    /// Scores a plain matrix without keeping the graph.
    pub fn score(&self, input: &Matrix) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let out = self.forward(&p, tape.leaf(input.clone()))?;
        Ok(out.value().column(0).to_vec())
    }
}

/// Noise for one generator forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub attr: Matrix,
    pub minmax: Matrix,
    /// One matrix per recurrent pass.
    pub passes: Vec<Matrix>,
}

impl Noise {
    pub fn sample(batch: usize, passes: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let mut draw = || Array2::from_shape_simple_fn((batch, dim), || rng.sample(StandardNormal));
        let attr = draw();
        let minmax = draw();
        let passes = (0..passes).map(|_| draw()).collect();
        Self { attr, minmax, passes }
    }
}

/// Generator output as tape variables, in encoded layout.
#[derive(Clone, Copy, Debug)]
pub struct Generated<'t> {
    pub metadata_real: Var<'t>,
    pub metadata_fake: Var<'t>,
    pub measurements: Var<'t>,
    pub flags: Var<'t>,
}

impl<'t> Generated<'t> {
    pub fn rows(&self) -> usize {
        self.flags.shape().0
    }

    pub fn aux_input(&self) -> Var<'t> {
        concat_nonempty(self.flags.tape(), self.rows(), &[self.metadata_real, self.metadata_fake])
    }

    pub fn discriminator_input(&self) -> Var<'t> {
        concat_nonempty(
            self.flags.tape(),
            self.rows(),
            &[self.metadata_real, self.metadata_fake, self.measurements, self.flags],
        )
    }
}

/// Every network bound as leaves on one tape.
pub struct BoundParams<'t> {
    pub attr: Vec<Var<'t>>,
    pub minmax: Vec<Var<'t>>,
    pub meas: Vec<Var<'t>>,
    pub disc: Vec<Var<'t>>,
    pub aux: Vec<Var<'t>>,
}

impl<'t> BoundParams<'t> {
    /// Generator parameters in the order of [`GeneratorBundle::generator_params`].
    pub fn generator(&self) -> Vec<Var<'t>> {
        self.attr.iter().chain(&self.minmax).chain(&self.meas).copied().collect()
    }
}

/// Scalar parameter count per network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub attr: usize,
    pub minmax: usize,
    pub meas: usize,
    pub disc: usize,
    pub aux: usize,
}

impl ParamCounts {
    /// Closed-form counts for `config` on `layout`.
    pub fn expected(config: &ModelConfig, layout: &Layout) -> Self {
        let d = config.noise_dim;
        let h = config.rnn_units;
        let head = layout.batch_param * (layout.step_width + 2);
        let aux_w = layout.aux_width();
        Self {
            attr: if layout.meta_width > 0 {
                Mlp::count_for(d, &config.attr_mlp, layout.meta_width)
            } else {
                0
            },
            minmax: if layout.fake_width > 0 {
                Mlp::count_for(layout.meta_width + d, &config.minmax_mlp, layout.fake_width)
            } else {
                0
            },
            meas: LstmCell::count_for(aux_w + d, h) + h * head + head,
            disc: Mlp::count_for(layout.disc_width(), &config.disc_mlp, 1),
            aux: if aux_w > 0 { Mlp::count_for(aux_w, &config.aux_disc_mlp, 1) } else { 0 },
        }
    }

    pub fn total(&self) -> usize {
        self.attr + self.minmax + self.meas + self.disc + self.aux
    }
}

/// The trained artefact: fitted encoder, three generators and two critics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBundle {
    pub config: ModelConfig,
    pub preprocessor: Preprocessor,
    /// Absent when the schema has no metadata fields.
    pub attr_gen: Option<MetadataGenerator>,
    /// Absent without auto-normalisation.
    pub minmax_gen: Option<MinMaxGenerator>,
    pub meas_gen: MeasurementGenerator,
    pub disc_main: Critic,
    pub disc_aux: Option<Critic>,
    /// Seed the networks were initialised from.
    pub seed: u64,
}

impl GeneratorBundle {
    /// Fresh networks sized for `preprocessor`'s layout.
    pub fn new(
        config: ModelConfig,
        preprocessor: Preprocessor,
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let layout = &preprocessor.layout;
        contract!(
            layout.t_pad.is_multiple_of(layout.batch_param),
            "T_pad {} is not divisible by the batch parameter {}",
            layout.t_pad,
            layout.batch_param
        );
        let d = config.noise_dim;
        let attr_gen = (layout.meta_width > 0).then(|| {
            let mut params = ParamSet::new();
            let mlp = Mlp::new(&mut params, "attr", d, &config.attr_mlp, layout.meta_width, Activation::Relu, rng);
            MetadataGenerator { params, mlp, blocks: layout.meta_blocks.clone() }
        });
        let minmax_gen = (layout.fake_width > 0).then(|| {
            let mut params = ParamSet::new();
            let mlp = Mlp::new(
                &mut params,
                "minmax",
                layout.meta_width + d,
                &config.minmax_mlp,
                layout.fake_width,
                Activation::Relu,
                rng,
            );
            MinMaxGenerator { params, mlp, blocks: layout.fake_blocks.clone() }
        });
        let meas_gen = {
            let mut params = ParamSet::new();
            let cell = LstmCell::new(&mut params, "rnn", layout.aux_width() + d, config.rnn_units, rng);
            let head_width = layout.batch_param * (layout.step_width + 2);
            let head = Linear::new(&mut params, "rnn.head", config.rnn_units, head_width, rng);
            MeasurementGenerator {
                params,
                cell,
                head,
                step_blocks: layout.step_blocks.clone(),
                step_width: layout.step_width,
                batch_param: layout.batch_param,
            }
        };
        let disc_main = Critic::new(layout.disc_width(), &config.disc_mlp, rng, "disc");
        let disc_aux = (layout.aux_width() > 0)
            .then(|| Critic::new(layout.aux_width(), &config.aux_disc_mlp, rng, "aux"));
        Ok(Self { config, preprocessor, attr_gen, minmax_gen, meas_gen, disc_main, disc_aux, seed })
    }

    pub fn layout(&self) -> &Layout {
        &self.preprocessor.layout
    }

    pub fn schema(&self) -> &DataSchema {
        &self.preprocessor.schema
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        let bind = |p: Option<&ParamSet>| p.map(|p| p.bind(tape)).unwrap_or_default();
        BoundParams {
            attr: bind(self.attr_gen.as_ref().map(|g| &g.params)),
            minmax: bind(self.minmax_gen.as_ref().map(|g| &g.params)),
            meas: self.meas_gen.params.bind(tape),
            disc: self.disc_main.params.bind(tape),
            aux: bind(self.disc_aux.as_ref().map(|c| &c.params)),
        }
    }

    /// Mutable access to the generator parameter sets, in binding order.
    pub fn generator_params(&mut self) -> Vec<&mut ParamSet> {
        let mut out = Vec::new();
        if let Some(g) = self.attr_gen.as_mut() {
            out.push(&mut g.params);
        }
        if let Some(g) = self.minmax_gen.as_mut() {
            out.push(&mut g.params);
        }
        out.push(&mut self.meas_gen.params);
        out
    }

    pub fn param_counts(&self) -> ParamCounts {
        let n = |p: Option<&ParamSet>| p.map_or(0, ParamSet::num_scalars);
        ParamCounts {
            attr: n(self.attr_gen.as_ref().map(|g| &g.params)),
            minmax: n(self.minmax_gen.as_ref().map(|g| &g.params)),
            meas: self.meas_gen.params.num_scalars(),
            disc: self.disc_main.params.num_scalars(),
            aux: n(self.disc_aux.as_ref().map(|c| &c.params)),
        }
    }

    /// Metadata stage: noise → `metadata_real` (`rows × 0` without metadata).
    pub fn gen_metadata<'t>(&self, p: &BoundParams<'t>, z: Var<'t>) -> Var<'t> {
        match &self.attr_gen {
            Some(g) => g.forward(&p.attr, z),
            None => z.tape().zeros(z.shape().0, 0),
        }
    }

    /// Min/max stage: `metadata_fake` conditioned on `metadata_real`.
    pub fn gen_minmax<'t>(&self, p: &BoundParams<'t>, metadata: Var<'t>, z: Var<'t>) -> Var<'t> {
        match &self.minmax_gen {
            Some(g) => g.forward(&p.minmax, metadata, z),
            None => z.tape().zeros(z.shape().0, 0),
        }
    }

    /// Measurement stage; emits `noise.len() · S` steps.
    pub fn gen_measurements<'t>(
        &self,
        p: &BoundParams<'t>,
        metadata_all: Var<'t>,
        noise: &[Var<'t>],
        mask: bool,
    ) -> (Var<'t>, Var<'t>) {
        self.meas_gen.forward(&p.meas, metadata_all, noise, mask)
    }

    /// Full three-stage forward. `fixed_metadata` replaces the metadata
    /// stage with given encoded rows.
    pub fn generate<'t>(
        &self,
        tape: &'t Tape,
        p: &BoundParams<'t>,
        noise: &Noise,
        fixed_metadata: Option<&Matrix>,
        mask: bool,
    ) -> Result<Generated<'t>> {
        let layout = self.layout();
        let batch = noise.attr.nrows();
        contract!(!noise.passes.is_empty(), "at least one recurrent pass is required");
        let metadata_real = match fixed_metadata {
            Some(m) => {
                contract!(
                    m.dim() == (batch, layout.meta_width),
                    "fixed metadata must be {batch} × {}, got {:?}",
                    layout.meta_width,
                    m.dim()
                );
                tape.leaf(m.clone())
            }
            None => self.gen_metadata(p, tape.leaf(noise.attr.clone())),
        };
        let metadata_fake = self.gen_minmax(p, metadata_real, tape.leaf(noise.minmax.clone()));
        let metadata_all = concat_nonempty(tape, batch, &[metadata_real, metadata_fake]);
        let z: Vec<Var<'t>> = noise.passes.iter().map(|m| tape.leaf(m.clone())).collect();
        let (measurements, flags) = self.gen_measurements(p, metadata_all, &z, mask);
        Ok(Generated { metadata_real, metadata_fake, measurements, flags })
    }

    /// Noise sized for a training-mode forward of `batch` rows.
    pub fn sample_noise(&self, batch: usize, rng: &mut impl Rng) -> Noise {
        Noise::sample(batch, self.layout().passes(), self.config.noise_dim, rng)
    }

    /// Main critic on a flattened `[meta_real ‖ meta_fake ‖ meas ‖ flags]` input.
    pub fn discriminate<'t>(&self, p: &BoundParams<'t>, input: Var<'t>) -> Result<Var<'t>> {
        self.disc_main.forward(&p.disc, input)
    }

    /// Auxiliary critic on `[meta_real ‖ meta_fake]`.
    pub fn discriminate_aux<'t>(&self, p: &BoundParams<'t>, input: Var<'t>) -> Result<Var<'t>> {
        match &self.disc_aux {
            Some(c) => c.forward(&p.aux, input),
            None => Err(Error::Contract("no metadata columns for the auxiliary critic".into())),
        }
    }

    /// Writes a versioned JSON checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            schema_hash: self.schema().hash(),
            bundle: self.clone(),
        };
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(&file)?).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    /// Reads a checkpoint and checks its internal schema hash.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let file: Checkpoint = serde_json::from_slice(&bytes)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("{} is not a netsynth checkpoint", path.display())));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let actual = file.bundle.schema().hash();
        if actual != file.schema_hash {
            return Err(Error::Validation(format!(
                "checkpoint schema hash {} does not match its schema ({actual})",
                file.schema_hash
            )));
        }
        Ok(file.bundle)
    }

    /// Loads a checkpoint that must have been trained on `schema`.
    pub fn load_for(path: impl AsRef<Path>, schema: &DataSchema) -> Result<Self> {
        let bundle = Self::load(path)?;
        let (want, got) = (schema.hash(), bundle.schema().hash());
        if want != got {
            return Err(Error::Validation(format!(
                "checkpoint was trained on schema {got}, dataset has schema {want}"
            )));
        }
        Ok(bundle)
    }
}

const CHECKPOINT_FORMAT: &str = "netsynth-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    schema_hash: String,
    bundle: GeneratorBundle,
}

/// SHA-256 over the raw bytes of every parameter.
pub fn fingerprint(params: &ParamSet) -> String {
    let mut h = Sha256::new();
    for v in &params.values {
        h.update((v.nrows() as u64).to_le_bytes());
        h.update((v.ncols() as u64).to_le_bytes());
        for x in v.iter() {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Applies the config's batch-parameter override to a copy of `ds`.
pub fn with_batch_param(ds: &Dataset, config: &ModelConfig) -> Dataset {
    match config.batch_param {
        Some(s) if s != ds.schema.batch_param => {
            let mut out = ds.clone();
            out.schema.batch_param = s;
            out
        }
        _ => ds.clone(),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::schema::{FieldSpec, MetaValue, Sample, TimestampMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_dataset(t: usize, s: usize) -> Dataset {
        let schema = DataSchema {
            metadata_fields: vec![
                FieldSpec::categorical("class", ["a", "b", "c"]),
                FieldSpec::numeric("size", NormalizationRange::ZeroOne),
            ],
            measurement_fields: vec![
                FieldSpec::numeric("x", NormalizationRange::NegOneOne),
                FieldSpec::categorical("state", ["on", "off"]),
            ],
            max_length: t,
            batch_param: s,
            timestamp_mode: TimestampMode::None,
        };
        let samples = (0..4)
            .map(|i| {
                let len = t - i % 2;
                let m = Array2::from_shape_fn((len, 2), |(r, c)| {
                    if c == 0 { (r * (i + 1)) as f64 } else { ((r + i) % 2) as f64 }
                });
                Sample {
                    metadata: vec![
                        MetaValue::Category(["a", "b", "c"][i % 3].into()),
                        MetaValue::Number(i as f64),
                    ],
                    measurements: m,
                    timestamps: None,
                }
            })
            .collect();
        Dataset::new(schema, samples).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            attr_mlp: vec![6],
            minmax_mlp: vec![6],
            rnn_units: 7,
            disc_mlp: vec![8, 8],
            aux_disc_mlp: vec![5],
            ..ModelConfig::default()
        }
    }

    fn bundle(t: usize, s: usize) -> GeneratorBundle {
        let ds = toy_dataset(t, s);
        let pre = Preprocessor::fit(&ds, true).unwrap();
        GeneratorBundle::new(small_config(), pre, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn default_config_matches_documented_sizes() {
        let c = ModelConfig::default();
        assert_eq!(c.noise_dim, 5);
        assert_eq!(c.attr_mlp, vec![100, 100]);
        assert_eq!(c.rnn_units, 100);
        assert_eq!(c.disc_mlp, vec![200, 200, 200, 200]);
        assert_eq!((c.gp_weight, c.aux_weight, c.lr, c.batch_size), (10.0, 1.0, 1e-3, 100));
        c.validate().unwrap();
    }

    #[test]
    fn validate_lists_every_violation() {
        let c = ModelConfig { gp_weight: -1.0, aux_weight: -2.0, disc_mlp: vec![0], ..Default::default() };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("gp_weight") && msg.contains("aux_weight") && msg.contains("disc_mlp"), "{msg}");
    }

    #[test]
    fn parameter_counts_match_closed_form() {
        let b = bundle(6, 2);
        assert_eq!(b.param_counts(), ParamCounts::expected(&b.config, b.layout()));
        // full-size defaults too
        let ds = toy_dataset(56, 1);
        let pre = Preprocessor::fit(&ds, true).unwrap();
        let big = GeneratorBundle::new(ModelConfig::default(), pre, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let counts = big.param_counts();
        assert_eq!(counts, ParamCounts::expected(&big.config, big.layout()));
        // LSTM: input = 4 (meta) + 2 (fake) + 5 (noise), 100 units; head 100 → 1·(3+2)
        assert_eq!(counts.meas, (11 + 100) * 400 + 400 + 100 * 5 + 5);
    }

    #[test]
    fn generator_outputs_respect_layout_and_softmax() {
        let b = bundle(6, 2);
        let tape = Tape::new();
        let p = b.bind(&tape);
        let noise = b.sample_noise(10, &mut ChaCha8Rng::seed_from_u64(3));
        let g = b.generate(&tape, &p, &noise, None, false).unwrap();
        let layout = b.layout();
        assert_eq!(g.metadata_real.shape(), (10, layout.meta_width));
        assert_eq!(g.metadata_fake.shape(), (10, layout.fake_width));
        assert_eq!(g.measurements.shape(), (10, 6 * layout.step_width));
        assert_eq!(g.flags.shape(), (10, 12));
        let meta = g.metadata_real.value();
        for row in meta.rows() {
            assert!((row[0] + row[1] + row[2] - 1.0).abs() < 1e-6);
            assert!(row[3] > 0.0 && row[3] < 1.0);
        }
        let meas = g.measurements.value();
        for row in meas.rows() {
            for t in 0..6 {
                assert!(row[3 * t].abs() < 1.0);
                assert!((row[3 * t + 1] + row[3 * t + 2] - 1.0).abs() < 1e-6);
            }
        }
        for row in g.flags.value().rows() {
            for t in 0..6 {
                assert!((row[2 * t] + row[2 * t + 1] - 1.0).abs() < 1e-6);
            }
        }
        assert_eq!(g.discriminator_input().shape(), (10, layout.disc_width()));
    }

    #[test]
    fn forward_is_deterministic_given_noise() {
        let b = bundle(6, 3);
        let noise = b.sample_noise(4, &mut ChaCha8Rng::seed_from_u64(9));
        let run = || {
            let tape = Tape::new();
            let p = b.bind(&tape);
            b.generate(&tape, &p, &noise, None, true).unwrap().discriminator_input().value()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn masking_zeroes_steps_after_the_end() {
        let b = bundle(6, 1);
        let tape = Tape::new();
        let p = b.bind(&tape);
        let noise = b.sample_noise(50, &mut ChaCha8Rng::seed_from_u64(5));
        let g = b.generate(&tape, &p, &noise, None, true).unwrap();
        let flags = g.flags.value();
        let meas = g.measurements.value();
        for i in 0..50 {
            let len = crate::preprocess::length_from_flags(flags.row(i));
            for t in len..6 {
                assert_eq!(flags[[i, 2 * t]] + flags[[i, 2 * t + 1]], 0.0);
                assert!((0..3).all(|k| meas[[i, 3 * t + k]] == 0.0));
            }
            assert!(flags[[i, 2 * (len - 1)]] + flags[[i, 2 * (len - 1) + 1]] > 0.99);
        }
    }

    #[test]
    fn recurrent_pass_count_is_t_pad_over_s() {
        let ds = toy_dataset(550, 5);
        let pre = Preprocessor::fit(&ds, true).unwrap();
        assert_eq!(pre.layout.passes(), 110);
        let ds = toy_dataset(6, 1);
        assert_eq!(Preprocessor::fit(&ds, true).unwrap().layout.passes(), 6);
    }

    #[test]
    fn critics_are_row_independent_and_restricted() {
        let b = bundle(6, 2);
        let layout = b.layout().clone();
        let zeros = Array2::zeros((3, layout.disc_width()));
        let s = b.disc_main.score(&zeros).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_simple_fn((2, layout.disc_width()), || rng.random::<f64>());
        let doubled = ndarray::concatenate![ndarray::Axis(0), x, x];
        let (a, d) = (b.disc_main.score(&x).unwrap(), b.disc_main.score(&doubled).unwrap());
        assert_eq!(d.len(), 4);
        assert_eq!(&d[..2], &a[..]);
        assert_eq!(&d[2..], &a[..]);
        let wrong = Array2::zeros((2, layout.disc_width() + 1));
        assert!(matches!(b.disc_main.score(&wrong), Err(Error::Contract(_))));
        let aux = b.disc_aux.as_ref().unwrap();
        assert_eq!(aux.input_width(), layout.aux_width());
        assert!(aux.score(&Array2::zeros((1, layout.aux_width()))).unwrap()[0].is_finite());
    }

    #[test]
    fn checkpoint_round_trip_and_schema_guard() {
        let b = bundle(6, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        b.save(&path).unwrap();
        let back = GeneratorBundle::load_for(&path, b.schema()).unwrap();
        assert_eq!(back, b);
        let mut other = b.schema().clone();
        other.max_length += 1;
        assert!(matches!(GeneratorBundle::load_for(&path, &other), Err(Error::Validation(_))));
    }

    #[test]
    fn fingerprint_tracks_parameter_changes() {
        let mut b = bundle(6, 2);
        let before = fingerprint(&b.meas_gen.params);
        assert_eq!(before, fingerprint(&b.meas_gen.params.clone()));
        b.meas_gen.params.values[0][[0, 0]] += 1e-12;
        assert_ne!(before, fingerprint(&b.meas_gen.params));
    }
}
