//! Run configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use netsynth::baselines::{ArConfig, HmmConfig, ModelKind, NaiveGanConfig, RnnConfig};
use netsynth::fidelity::EvalOptions;
use netsynth::model::ModelConfig;
use netsynth::training::TrainConfig;
use netsynth::Error;

pub const SEED_ENV: &str = "NETSYNTH_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub model_config: ModelConfig,
    pub train: TrainConfig,
    pub ar: ArConfig,
    pub rnn: RnnConfig,
    pub hmm: HmmConfig,
    pub naive_gan: NaiveGanConfig,
    pub eval: EvalOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// The file at `path`, or defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, Error> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.unwrap_or(ModelKind::Doppelganger)
    }
}

/// Flag, then config file, then `NETSYNTH_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>, problems: &mut Vec<String>) -> u64 {
    if let Some(s) = flag.or(file) {
        return s;
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().unwrap_or_else(|_| {
            problems.push(format!("{SEED_ENV}={v:?} is not an unsigned integer"));
            0
        }),
        Err(_) => 0,
    }
}

/// Collects every violation before failing.
#[derive(Default)]
pub struct Problems(pub Vec<String>);

impl Problems {
    pub fn push(&mut self, p: impl Into<String>) {
        self.0.push(p.into());
    }

    /// Splits a library validation error back into its individual items.
    pub fn absorb(&mut self, r: Result<(), Error>) {
        match r {
            Ok(()) => {}
            Err(Error::Validation(msg)) => self.0.extend(msg.split("; ").map(str::to_string)),
            Err(e) => self.0.push(e.to_string()),
        }
    }

    pub fn require_dir(&mut self, what: &str, path: Option<&Path>) {
        match path {
            None => self.push(format!("{what} is required")),
            Some(p) if !p.is_dir() => self.push(format!("{what} {} is not a directory", p.display())),
            Some(_) => {}
        }
    }

    pub fn require_file(&mut self, what: &str, path: Option<&Path>) {
        match path {
            None => self.push(format!("{what} is required")),
            Some(p) if !p.is_file() => self.push(format!("{what} {} does not exist", p.display())),
            Some(_) => {}
        }
    }

    /// Like [`Self::require_file`] for a flag that may be omitted.
    pub fn require_file_opt(&mut self, what: &str, path: Option<&Path>) {
        if path.is_some() {
            self.require_file(what, path);
        }
    }

    pub fn finish(self) -> Result<(), Error> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.0.join("; ")))
        }
    }
}

pub fn validate_baselines(cfg: &RunConfig, problems: &mut Problems) {
    match cfg.model_kind() {
        ModelKind::Doppelganger => problems.absorb(cfg.model_config.validate()),
        ModelKind::Ar => {
            let c = &cfg.ar;
            if c.order == 0 {
                problems.push("ar.order must be >= 1");
            }
            positive(problems, "ar", c.batch_size, c.lr);
            if c.hidden.contains(&0) {
                problems.push("ar.hidden widths must be >= 1");
            }
        }
        ModelKind::Rnn => {
            let c = &cfg.rnn;
            if c.units == 0 {
                problems.push("rnn.units must be >= 1");
            }
            positive(problems, "rnn", c.batch_size, c.lr);
        }
        ModelKind::Hmm => {
            if cfg.hmm.states == 0 {
                problems.push("hmm.states must be >= 1");
            }
            if cfg.hmm.max_iter == 0 {
                problems.push("hmm.max_iter must be >= 1");
            }
        }
        ModelKind::NaiveGan => {
            let c = &cfg.naive_gan;
            positive(problems, "naive_gan", c.batch_size, c.lr);
            if c.noise_dim == 0 || c.gen_mlp.contains(&0) || c.disc_mlp.contains(&0) {
                problems.push("naive_gan widths and noise_dim must be >= 1");
            }
            if c.steps == 0 {
                problems.push("naive_gan.steps must be >= 1");
            }
        }
    }
}

fn positive(problems: &mut Problems, name: &str, batch_size: usize, lr: f64) {
    if batch_size == 0 {
        problems.push(format!("{name}.batch_size must be >= 1"));
    }
    if !(lr > 0.0) {
        problems.push(format!("{name}.lr must be > 0 (got {lr})"));
    }
}

/// Comma-separated list parsed item by item.
pub fn parse_list<T>(what: &str, s: &str) -> Result<Vec<T>, Error>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Validation(format!("{what} is empty")));
    }
    items
        .into_iter()
        .map(|x| x.parse().map_err(|e| Error::Validation(format!("{what}: cannot parse {x:?} ({e})"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_violation_is_reported() {
        let mut cfg = RunConfig::default();
        cfg.model_config.batch_size = 0;
        cfg.model_config.lr = -1.0;
        let mut p = Problems::default();
        p.require_dir("--data", None);
        validate_baselines(&cfg, &mut p);
        let msg = p.finish().unwrap_err().to_string();
        assert!(msg.contains("--data is required"), "{msg}");
        assert!(msg.contains("batch_size"), "{msg}");
        assert!(msg.contains("lr"), "{msg}");
    }

    #[test]
    fn seed_precedence() {
        let mut p = Vec::new();
        assert_eq!(resolve_seed(Some(3), Some(4), &mut p), 3);
        assert_eq!(resolve_seed(None, Some(4), &mut p), 4);
        assert!(p.is_empty());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": "ar"}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"model": "hmm", "hmm": {"states": 3}}"#).unwrap();
        assert_eq!(cfg.model_kind(), ModelKind::Hmm);
        assert_eq!(cfg.hmm.states, 3);
    }

    #[test]
    fn lists_parse_or_name_the_bad_item() {
        assert_eq!(parse_list::<usize>("--sizes", "50, 500").unwrap(), vec![50, 500]);
        let err = parse_list::<usize>("--sizes", "50,x").unwrap_err().to_string();
        assert!(err.contains("\"x\""));
    }
}
