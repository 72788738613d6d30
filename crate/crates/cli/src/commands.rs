//! One function per subcommand: merge flags into the run configuration,
//! validate everything, run, then write outputs and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use netsynth::baselines::{ArModel, HmmModel, ModelKind, NaiveGanModel, RnnModel, SavedModel};
use netsynth::corpus::SinusoidCorpus;
use netsynth::downstream::{downstream_table, split_halves, AbabSplit, PredictorId, SynthTest, Task};
use netsynth::fidelity::{evaluate as run_evaluation, pearson_cdf, wasserstein1, EvalReport, MetricResult};
use netsynth::generation::{conditional_sample, retarget_metadata as retarget_bundle, sample_with, target_metadata, SampleOptions};
use netsynth::model::GeneratorBundle;
use netsynth::plot::{self, Series};
use netsynth::preprocess::CategoricalDecode;
use netsynth::privacy::{attack_vs_trainsize, dp_ablation as run_dp_ablation, NoAccountant};
use netsynth::schema::{load_dataset, save_dataset, DataSchema, Dataset, FieldKind, MetaValue};
use netsynth::training::{self, DpConfig};
use netsynth::Error;

use crate::config::{parse_list, resolve_seed, validate_baselines, Problems, RunConfig};
use crate::manifest::Manifest;
use crate::{AttackArgs, CorpusArgs, DpAblationArgs, EvaluateArgs, GenerateArgs, RetargetArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    Ok(())
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn required<T: Clone>(v: &Option<T>) -> T {
    v.clone().expect("checked during validation")
}

fn only_doppelganger(model: SavedModel, what: &str) -> std::result::Result<Box<GeneratorBundle>, Error> {
    match model {
        SavedModel::Doppelganger(b) => Ok(b),
        other => Err(Error::Validation(format!("{what} needs a doppelganger checkpoint, got {}", other.as_synthesizer().kind()))),
    }
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

// ---- train -----------------------------------------------------------------

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.common.config.as_deref())?;
    let mut problems = Problems::default();
    cfg.data = a.data.or(cfg.data);
    cfg.out = a.common.out.or(cfg.out);
    if let Some(m) = a.model {
        match m.parse::<ModelKind>() {
            Ok(k) => cfg.model = Some(k),
            Err(e) => problems.absorb(Err(e)),
        }
    }
    if let Some(n) = a.max_batches {
        cfg.train.max_batches = n;
        cfg.ar.steps = n;
        cfg.naive_gan.steps = n;
    }
    if let Some(b) = a.batch_size {
        cfg.model_config.batch_size = b;
        cfg.ar.batch_size = b;
        cfg.rnn.batch_size = b;
        cfg.naive_gan.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.model_config.lr = lr;
        cfg.ar.lr = lr;
        cfg.rnn.lr = lr;
        cfg.naive_gan.lr = lr;
    }
    if let Some(s) = a.batch_param {
        cfg.model_config.batch_param = Some(s);
    }
    if let Some(on) = a.auto_normalize {
        cfg.model_config.auto_normalize = on;
        cfg.naive_gan.auto_normalize = on;
    }
    if a.dp_noise.is_some() || a.dp_clip.is_some() {
        let old = cfg.train.dp;
        cfg.train.dp = Some(DpConfig {
            clip_norm: a.dp_clip.or(old.map(|d| d.clip_norm)).unwrap_or(1.0),
            noise_multiplier: a.dp_noise.or(old.map(|d| d.noise_multiplier)).unwrap_or(0.0),
        });
    }
    if let Some(n) = a.checkpoint_every {
        cfg.train.checkpoint_every = n;
    }
    if cfg.train.checkpoint_every > 0 && cfg.train.checkpoint_dir.is_none() {
        cfg.train.checkpoint_dir = cfg.out.as_ref().map(|o| o.join("checkpoints"));
    }
    let seed = resolve_seed(a.common.seed, cfg.seed, &mut problems.0);
    cfg.seed = Some(seed);
    cfg.train.seed = seed;

    problems.require_dir("--data", cfg.data.as_deref());
    if cfg.out.is_none() {
        problems.push("--out is required");
    }
    if cfg.model_kind() == ModelKind::Doppelganger {
        problems.absorb(cfg.train.validate());
    } else if cfg.train.dp.is_some() {
        problems.push("differential privacy is only available for the doppelganger model");
    }
    validate_baselines(&cfg, &mut problems);
    problems.finish()?;

    let (data, out) = (required(&cfg.data), required(&cfg.out));
    let ds = load(&data)?;
    create_dir(&out)?;
    if let Some(dir) = &cfg.train.checkpoint_dir {
        create_dir(dir)?;
    }
    let mut manifest = Manifest::new("train", seed, &cfg)?;
    manifest.dataset("data", &data, &ds);
    log::info!("training {} on {} samples", cfg.model_kind(), ds.len());
    let model = match cfg.model_kind() {
        ModelKind::Doppelganger => {
            let (bundle, log) = training::train(&ds, &cfg.model_config, &cfg.train)?;
            let log_path = out.join("train_log.csv");
            log.save_csv(&log_path)?;
            manifest.output(log_path);
            SavedModel::Doppelganger(Box::new(bundle))
        }
        ModelKind::Ar => SavedModel::Ar(ArModel::fit(&ds, &cfg.ar, seed)?),
        ModelKind::Rnn => SavedModel::Rnn(RnnModel::fit(&ds, &cfg.rnn, seed)?),
        ModelKind::Hmm => SavedModel::Hmm(HmmModel::fit(&ds, &cfg.hmm, seed)?),
        ModelKind::NaiveGan => SavedModel::NaiveGan(NaiveGanModel::fit(&ds, &cfg.naive_gan, seed)?),
    };
    let model_path = out.join("model.json");
    model.save(&model_path)?;
    manifest.output(&model_path);
    manifest.write(&out)?;
    log::info!("model written to {}", model_path.display());
    Ok(())
}

// ---- generate --------------------------------------------------------------

/// Metadata values in schema order from a JSON object keyed by field name.
fn read_metadata(path: &Path, schema: &DataSchema) -> std::result::Result<Vec<MetaValue>, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let obj: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut problems = Problems::default();
    for key in obj.keys() {
        if schema.metadata_index(key).is_none() {
            problems.push(format!("unknown metadata field {key:?}"));
        }
    }
    let mut values = Vec::new();
    for field in &schema.metadata_fields {
        match obj.get(&field.name) {
            None => problems.push(format!("metadata field {:?} is missing", field.name)),
            Some(v) => match serde_json::from_value::<MetaValue>(v.clone()) {
                Ok(m) => values.push(m),
                Err(e) => problems.push(format!("metadata field {:?}: {e}", field.name)),
            },
        }
    }
    problems.finish()?;
    Ok(values)
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.common.config.as_deref())?;
    let mut problems = Problems::default();
    let out = a.common.out.or(cfg.out);
    let seed = resolve_seed(a.common.seed, cfg.seed, &mut problems.0);
    problems.require_file("--checkpoint", a.checkpoint.as_deref());
    if out.is_none() {
        problems.push("--out is required");
    }
    if a.count == 0 {
        problems.push("--count must be >= 1");
    }
    if a.length == Some(0) {
        problems.push("--length must be >= 1");
    }
    if a.metadata_file.is_some() && a.length.is_some() {
        problems.push("--metadata-file and --length cannot be combined");
    }
    problems.require_file_opt("--metadata-file", a.metadata_file.as_deref());
    problems.finish()?;

    let (checkpoint, out) = (required(&a.checkpoint), required(&out));
    let model = SavedModel::load(&checkpoint)?;
    let ds = if let Some(meta_path) = &a.metadata_file {
        let bundle = only_doppelganger(model, "--metadata-file")?;
        let metadata = read_metadata(meta_path, bundle.schema())?;
        conditional_sample(&bundle, &metadata, a.count, seed)?
    } else if a.sample_categorical {
        let bundle = only_doppelganger(model, "--sample-categorical")?;
        let opts = SampleOptions { length: a.length, seed, decode: CategoricalDecode::Sample };
        sample_with(&bundle, a.count, &opts)?
    } else {
        model.as_synthesizer().sample_with_length(a.count, a.length, seed)?
    };
    save_dataset(&ds, &out)?;
    let snapshot = json!({
        "checkpoint": checkpoint,
        "count": a.count,
        "length": a.length,
        "metadata_file": a.metadata_file,
        "sample_categorical": a.sample_categorical,
    });
    let mut manifest = Manifest::new("generate", seed, &snapshot)?;
    manifest.file("checkpoint", &checkpoint)?;
    if let Some(p) = &a.metadata_file {
        manifest.file("metadata", p)?;
    }
    manifest.output(&out);
    manifest.write(&out)?;
    log::info!("{} samples written to {}", ds.len(), out.display());
    Ok(())
}

// ---- evaluate --------------------------------------------------------------

/// Metric families accepted by `--metrics`.
pub const FAMILIES: [&str; 7] = ["autocorr", "midpoint", "w1", "length", "metadata", "nearest", "cross_correlation"];

fn family_of(metric: &str) -> &'static str {
    const PREFIXES: [(&str, &str); 7] = [
        ("autocorr_", "autocorr"),
        ("midpoint_", "midpoint"),
        ("total_w1", "w1"),
        ("length_", "length"),
        ("metadata_", "metadata"),
        ("nearest_", "nearest"),
        ("pearson_", "cross_correlation"),
    ];
    PREFIXES.iter().find(|(p, _)| metric.starts_with(p)).map_or("other", |(_, f)| f)
}

fn parse_task(spec: &str, schema: &DataSchema) -> std::result::Result<Task, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Validation(format!("--downstream {spec:?}: expected classify:<field> or forecast:<measurement>:<horizon>"));
    match parts.as_slice() {
        ["classify", field] => Ok(Task::Classify { field: field.to_string() }),
        ["forecast", name, horizon] => {
            let dim = schema
                .measurement_index(name)
                .ok_or_else(|| Error::Validation(format!("--downstream: unknown measurement {name:?}")))?;
            let horizon = horizon.parse().map_err(|_| bad())?;
            Ok(Task::Forecast { dim, horizon })
        }
        _ => Err(bad()),
    }
}

fn cross_correlation(real: &Dataset, synth: &Dataset, report: &mut EvalReport) -> Result<()> {
    let numeric: Vec<usize> = (0..real.schema.measurement_fields.len())
        .filter(|&k| real.schema.measurement_fields[k].kind == FieldKind::Numeric)
        .collect();
    let [a, b, ..] = numeric[..] else {
        report.notes.push("cross_correlation needs two numeric measurements; skipped".into());
        return Ok(());
    };
    let names = &real.schema.measurement_fields;
    let tag = format!("{}~{}", names[a].name, names[b].name);
    let r = pearson_cdf(real, a, b)?;
    let s = pearson_cdf(synth, a, b)?;
    if !r.values.is_empty() && !s.values.is_empty() {
        report.metrics.push(MetricResult::scalar(format!("pearson_w1/{tag}"), wasserstein1(&r.values, &s.values)?));
    }
    report.metrics.push(MetricResult::curve(format!("pearson_cdf_real/{tag}"), r.values, r.cumulative));
    report.metrics.push(MetricResult::curve(format!("pearson_cdf_synth/{tag}"), s.values, s.cumulative));
    Ok(())
}

/// One SVG per real/synthetic pair of curves or histograms in `report`.
fn write_plots(report: &EvalReport, dir: &Path, manifest: &mut Manifest) -> Result<()> {
    let find = |name: &str| report.metrics.iter().find(|m| m.name == name);
    for m in &report.metrics {
        let Some(rest) = m.name.split_once("_real") else { continue };
        let (head, tail) = rest;
        let Some(other) = find(&format!("{head}_synth{tail}")) else { continue };
        let title = format!("{head}{tail}");
        let svg = match (&m.curve, &other.curve, &m.histogram, &other.histogram) {
            (Some((rx, ry)), Some((sx, sy)), _, _) => {
                let (x_label, y_label) = if head.starts_with("autocorr") { ("lag", "autocorrelation") } else { ("value", "CDF") };
                plot::line_chart(
                    &title,
                    x_label,
                    y_label,
                    &[Series::new("real", rx.clone(), ry.clone()), Series::new("synthetic", sx.clone(), sy.clone())],
                )
            }
            (_, _, Some(hr), Some(hs)) => {
                plot::histogram_chart(&title, head, &[("real".into(), hr.clone()), ("synthetic".into(), hs.clone())])
            }
            _ => continue,
        };
        let path = dir.join(format!("{}.svg", file_stem(&title)));
        plot::save(&svg, &path)?;
        manifest.output(path);
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.common.config.as_deref())?;
    let mut problems = Problems::default();
    let out = a.common.out.or(cfg.out.clone());
    let seed = resolve_seed(a.common.seed, cfg.seed, &mut problems.0);
    if let Some(l) = a.max_lag {
        cfg.eval.max_lag = l;
    }
    problems.require_dir("--real", a.real.as_deref());
    problems.require_dir("--synth", a.synth.as_deref());
    if out.is_none() {
        problems.push("--out is required");
    }
    let families: Option<Vec<String>> = match &a.metrics {
        None => None,
        Some(s) => match parse_list::<String>("--metrics", s) {
            Ok(list) => {
                for f in list.iter().filter(|f| !FAMILIES.contains(&f.as_str())) {
                    problems.push(format!("--metrics: unknown family {f:?}; expected one of {}", FAMILIES.join(", ")));
                }
                Some(list)
            }
            Err(e) => {
                problems.absorb(Err(e));
                None
            }
        },
    };
    let predictors: Option<Vec<PredictorId>> = match &a.predictors {
        None => None,
        Some(s) => parse_list("--predictors", s).map_err(|e| problems.absorb(Err(e))).ok(),
    };
    if a.predictors.is_some() && a.downstream.is_none() {
        problems.push("--predictors needs --downstream");
    }
    problems.finish()?;

    let (real_dir, synth_dir, out) = (required(&a.real), required(&a.synth), required(&out));
    let real = load(&real_dir)?;
    let synth = load(&synth_dir)?;
    create_dir(&out)?;
    let mut report = run_evaluation(&real, &synth, &cfg.eval)?;
    let wanted = |f: &str| families.as_ref().is_none_or(|list| list.iter().any(|x| x == f));
    if wanted("cross_correlation") {
        cross_correlation(&real, &synth, &mut report)?;
    }
    report.metrics.retain(|m| wanted(family_of(&m.name)));

    let mut manifest = Manifest::new("evaluate", seed, &json!({ "eval": cfg.eval, "metrics": families, "downstream": a.downstream }))?;
    manifest.dataset("real", &real_dir, &real);
    manifest.dataset("synthetic", &synth_dir, &synth);

    if let Some(spec) = &a.downstream {
        let task = parse_task(spec, &real.schema)?;
        let predictors = predictors.unwrap_or_else(|| match task {
            Task::Classify { .. } => PredictorId::CLASSIFIERS.to_vec(),
            Task::Forecast { .. } => PredictorId::REGRESSORS.to_vec(),
        });
        let (a_real, a_prime) = split_halves(&real, seed)?;
        let (b, b_prime) = split_halves(&synth, seed)?;
        let split = AbabSplit { a: a_real, a_prime, b, b_prime };
        let tables = [SynthTest::RealHoldout, SynthTest::SynthHoldout]
            .into_iter()
            .map(|p| downstream_table(&split, &task, &predictors, p, seed))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let path = out.join("downstream.json");
        fs::write(&path, serde_json::to_string_pretty(&tables)?).map_err(|source| Error::Io { path: path.clone(), source })?;
        manifest.output(path);
    }

    let plots = out.join("plots");
    create_dir(&plots)?;
    write_plots(&report, &plots, &mut manifest)?;
    let path = out.join("report.json");
    report.save_json(&path)?;
    manifest.output(path);
    manifest.write(&out)?;
    log::info!("{} metrics written to {}", report.metrics.len(), out.display());
    Ok(())
}

// ---- attack ----------------------------------------------------------------

pub fn attack(a: AttackArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.common.config.as_deref())?;
    let mut problems = Problems::default();
    cfg.data = a.data.or(cfg.data);
    let out = a.common.out.or(cfg.out.clone());
    let seed = resolve_seed(a.common.seed, cfg.seed, &mut problems.0);
    if let Some(n) = a.max_batches {
        cfg.train.max_batches = n;
    }
    let sizes: Vec<usize> = parse_list("--sizes", &a.sizes).map_err(|e| problems.absorb(Err(e))).unwrap_or_default();
    let seeds: Vec<u64> = parse_list("--seeds", &a.seeds).map_err(|e| problems.absorb(Err(e))).unwrap_or_default();
    problems.require_dir("--data", cfg.data.as_deref());
    if out.is_none() {
        problems.push("--out is required");
    }
    if cfg.model_kind() != ModelKind::Doppelganger {
        problems.push("attack only supports the doppelganger model");
    }
    problems.absorb(cfg.model_config.validate());
    problems.absorb(cfg.train.validate());
    problems.finish()?;

    let (data, out) = (required(&cfg.data), required(&out));
    let corpus = load(&data)?;
    create_dir(&out)?;
    let curve = attack_vs_trainsize(&corpus, &sizes, &seeds, &cfg.model_config, &cfg.train)?;
    let mut manifest = Manifest::new("attack", seed, &json!({ "run": cfg, "sizes": sizes, "seeds": seeds }))?;
    manifest.dataset("data", &data, &corpus);
    let path = out.join("attack.json");
    curve.to_report().save_json(&path)?;
    manifest.output(path);
    let x: Vec<f64> = curve.points.iter().map(|p| p.size as f64).collect();
    let y: Vec<f64> = curve.points.iter().map(|p| p.median).collect();
    let svg = plot::line_chart(
        "Membership inference",
        "training samples",
        "attack success",
        &[Series::new("median success", x.clone(), y), Series::new("chance", x, vec![0.5; curve.points.len()])],
    );
    let path = out.join("attack.svg");
    plot::save(&svg, &path)?;
    manifest.output(path);
    manifest.write(&out)?;
    for p in &curve.points {
        log::info!("size {}: median success {:.3}", p.size, p.median);
    }
    Ok(())
}

// ---- dp-ablation -----------------------------------------------------------

pub fn dp_ablation(a: DpAblationArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.common.config.as_deref())?;
    let mut problems = Problems::default();
    cfg.data = a.data.or(cfg.data);
    let out = a.common.out.or(cfg.out.clone());
    let seed = resolve_seed(a.common.seed, cfg.seed, &mut problems.0);
    if let Some(n) = a.max_batches {
        cfg.train.max_batches = n;
    }
    if let Some(l) = a.max_lag {
        cfg.eval.max_lag = l;
    }
    if let Some(clip) = a.clip {
        cfg.train.dp = Some(DpConfig { clip_norm: clip, noise_multiplier: 0.0 });
    }
    let sigmas: Vec<f64> = parse_list("--sigmas", &a.sigmas).map_err(|e| problems.absorb(Err(e))).unwrap_or_default();
    let seeds: Vec<u64> = parse_list("--seeds", &a.seeds).map_err(|e| problems.absorb(Err(e))).unwrap_or_default();
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        problems.push("--sigmas must be finite and >= 0");
    }
    problems.require_dir("--data", cfg.data.as_deref());
    if out.is_none() {
        problems.push("--out is required");
    }
    problems.absorb(cfg.model_config.validate());
    problems.absorb(cfg.train.validate());
    problems.finish()?;

    let (data, out) = (required(&cfg.data), required(&out));
    let corpus = load(&data)?;
    let fields = &corpus.schema.measurement_fields;
    let dim = match &a.measurement {
        Some(name) => corpus
            .schema
            .measurement_index(name)
            .filter(|&k| fields[k].kind == FieldKind::Numeric)
            .ok_or_else(|| Error::Validation(format!("--measurement {name:?} is not a numeric measurement")))?,
        None => fields
            .iter()
            .position(|f| f.kind == FieldKind::Numeric)
            .ok_or_else(|| Error::Validation("the dataset has no numeric measurement".into()))?,
    };
    create_dir(&out)?;
    let ablation =
        run_dp_ablation(&corpus, &sigmas, &seeds, &cfg.model_config, &cfg.train, dim, cfg.eval.max_lag, &NoAccountant)?;
    let mut manifest = Manifest::new(
        "dp-ablation",
        seed,
        &json!({ "run": cfg, "sigmas": sigmas, "seeds": seeds, "measurement": fields[dim].name }),
    )?;
    manifest.dataset("data", &data, &corpus);
    let path = out.join("dp_ablation.json");
    ablation.to_report().save_json(&path)?;
    manifest.output(path);
    let path = out.join("dp_overlay.svg");
    plot::save(&ablation.overlay_svg(), &path)?;
    manifest.output(path);
    manifest.write(&out)?;
    for (sigma, mse) in ablation.median_mse() {
        log::info!("sigma {sigma}: median autocorrelation MSE {mse:.5}");
    }
    Ok(())
}

// ---- retarget --------------------------------------------------------------

pub fn retarget(a: RetargetArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.common.config.as_deref())?;
    let mut problems = Problems::default();
    let out = a.common.out.or(cfg.out.clone());
    let seed = resolve_seed(a.common.seed, cfg.seed, &mut problems.0);
    cfg.train.seed = seed;
    if let Some(n) = a.max_batches {
        cfg.train.max_batches = n;
    }
    problems.require_file("--checkpoint", a.checkpoint.as_deref());
    problems.require_dir("--target", a.target.as_deref());
    if out.is_none() {
        problems.push("--out is required");
    }
    problems.absorb(cfg.train.validate());
    problems.finish()?;

    let (checkpoint, target_dir, out) = (required(&a.checkpoint), required(&a.target), required(&out));
    let bundle = only_doppelganger(SavedModel::load(&checkpoint)?, "retarget")?;
    let target = load(&target_dir)?;
    let metadata = target_metadata(&bundle, &target)?;
    let retargeted = retarget_bundle(&bundle, &metadata, &cfg.train)?;
    create_dir(&out)?;
    let mut manifest = Manifest::new("retarget", seed, &json!({ "train": cfg.train }))?;
    manifest.file("checkpoint", &checkpoint)?;
    manifest.dataset("target", &target_dir, &target);
    let path = out.join("model.json");
    retargeted.save(&path)?;
    manifest.output(&path);
    manifest.write(&out)?;
    log::info!("retargeted model written to {}", path.display());
    Ok(())
}

// ---- make-corpus -----------------------------------------------------------

pub fn make_corpus(a: CorpusArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.common.config.as_deref())?;
    let mut problems = Problems::default();
    let out: Option<PathBuf> = a.common.out.or(cfg.out);
    let seed = resolve_seed(a.common.seed, cfg.seed, &mut problems.0);
    let mut corpus = match a.variant.as_str() {
        "base" => SinusoidCorpus::default(),
        "long" => SinusoidCorpus::long(),
        "mixed" => SinusoidCorpus::mixed_lengths(),
        other => {
            problems.push(format!("--variant {other:?}: expected base, long or mixed"));
            SinusoidCorpus::default()
        }
    };
    if let Some(n) = a.samples {
        corpus.samples = n;
    }
    if let Some(l) = &a.lengths {
        match parse_list("--lengths", l) {
            Ok(v) => corpus.lengths = v,
            Err(e) => problems.absorb(Err(e)),
        }
    }
    if let Some(f) = a.class_b_fraction {
        corpus.class_b_fraction = f;
    }
    if let Some(s) = a.noise_std {
        corpus.noise_std = s;
    }
    if let Some(s) = a.batch_param {
        corpus.batch_param = s;
    }
    if out.is_none() {
        problems.push("--out is required");
    }
    problems.finish()?;

    let out = required(&out);
    let ds = corpus.generate(seed)?;
    save_dataset(&ds, &out)?;
    let mut manifest = Manifest::new("make-corpus", seed, &corpus)?;
    manifest.output(&out);
    manifest.write(&out)?;
    log::info!("{} samples written to {}", ds.len(), out.display());
    Ok(())
}
