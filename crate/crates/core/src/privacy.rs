//! Membership-inference audit and the differential-privacy ablation.
//!
//! The attack ranks samples by the main critic's score and calls the top half
//! of the pooled set members. Formal (ε, δ) accounting is left to a
//! [`PrivacyAccountant`] supplied by the caller.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::fidelity::{autocorrelation, curve_mse, EvalReport, MetricResult};
use crate::generation;
use crate::model::{GeneratorBundle, ModelConfig};
use crate::plot::{line_chart, Series};
use crate::schema::Dataset;
use crate::training::{train, DpConfig, TrainConfig};

/// Success rate of the median-threshold ranking attack: scores strictly
/// above the pooled median are called members.
pub fn ranking_attack(member_scores: &[f64], non_member_scores: &[f64]) -> Result<f64> {
    contract!(
        member_scores.len() == non_member_scores.len(),
        "attack sets must be balanced ({} members vs {} non-members)",
        member_scores.len(),
        non_member_scores.len()
    );
    contract!(!member_scores.is_empty(), "attack sets must be non-empty");
    let mut pooled: Vec<f64> = member_scores.iter().chain(non_member_scores).copied().collect();
    contract!(pooled.iter().all(|s| s.is_finite()), "attack scores must be finite");
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len();
    let median = (pooled[n / 2 - 1] + pooled[n / 2]) / 2.0;
    let hits = member_scores.iter().filter(|&&s| s > median).count()
        + non_member_scores.iter().filter(|&&s| s <= median).count();
    Ok(hits as f64 / n as f64)
}

/// Critic-score attack against `bundle`.
pub fn membership_attack(bundle: &GeneratorBundle, members: &Dataset, non_members: &Dataset) -> Result<f64> {
    let schema = &bundle.preprocessor.schema;
    contract!(
        &members.schema == schema && &non_members.schema == schema,
        "attack sets must use the bundle's schema"
    );
    let score = |ds: &Dataset| -> Result<Vec<f64>> {
        let (encoded, _) = bundle.preprocessor.encode(ds)?;
        bundle.disc_main.score(&encoded.discriminator_input())
    };
    ranking_attack(&score(members)?, &score(non_members)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPoint {
    pub size: usize,
    pub seeds: Vec<u64>,
    pub success: Vec<f64>,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackCurve {
    pub points: Vec<AttackPoint>,
}

impl AttackCurve {
    pub fn to_report(&self) -> EvalReport {
        let mut report = EvalReport::default();
        report.metrics.push(MetricResult::curve(
            "attack_success_median",
            self.points.iter().map(|p| p.size as f64).collect(),
            self.points.iter().map(|p| p.median).collect(),
        ));
        for p in &self.points {
            report.metrics.push(MetricResult::curve(
                format!("attack_success/{}", p.size),
                p.seeds.iter().map(|&s| s as f64).collect(),
                p.success.clone(),
            ));
        }
        report
    }

    pub fn from_report(report: &EvalReport) -> Result<Self> {
        let (sizes, medians) = report
            .get("attack_success_median")
            .and_then(|m| m.curve.clone())
            .ok_or_else(|| Error::Format("report has no attack_success_median curve".into()))?;
        let points = sizes
            .iter()
            .zip(medians)
            .map(|(&size, median)| {
                let size = size as usize;
                let (seeds, success) = report
                    .get(&format!("attack_success/{size}"))
                    .and_then(|m| m.curve.clone())
                    .ok_or_else(|| Error::Format(format!("report has no attack curve for size {size}")))?;
                Ok(AttackPoint { size, seeds: seeds.into_iter().map(|s| s as u64).collect(), success, median })
            })
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Disjoint member and non-member sets of `size` each, drawn with `seed`.
pub fn member_split(corpus: &Dataset, size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if size == 0 || 2 * size > corpus.len() {
        return Err(Error::Validation(format!(
            "training size {size} needs {} samples but the corpus has {}",
            2 * size,
            corpus.len()
        )));
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((corpus.subset(&idx[..size]), corpus.subset(&idx[size..2 * size])))
}

/// Trains a fresh bundle per (size, seed) and attacks it.
pub fn attack_vs_trainsize(
    corpus: &Dataset,
    sizes: &[usize],
    seeds: &[u64],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<AttackCurve> {
    contract!(!sizes.is_empty() && !seeds.is_empty(), "need at least one size and one seed");
    for &size in sizes {
        member_split(corpus, size, 0)?;
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut success = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let (members, non_members) = member_split(corpus, size, seed)?;
            let cfg = TrainConfig { seed, ..train_cfg.clone() };
            let (bundle, _) = train(&members, model_cfg, &cfg)?;
            let rate = membership_attack(&bundle, &members, &non_members)?;
            log::info!("attack: size {size} seed {seed} success {rate:.3}");
            success.push(rate);
        }
        points.push(AttackPoint { size, seeds: seeds.to_vec(), median: median(&success), success });
    }
    Ok(AttackCurve { points })
}

/// Run parameters an external accountant needs to derive ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpRunInfo {
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub n: usize,
}

/// Hook for formal privacy accounting; this crate ships none.
pub trait PrivacyAccountant {
    fn epsilon(&self, info: &DpRunInfo, delta: f64) -> Option<f64>;
}

/// Reports no ε.
pub struct NoAccountant;

impl PrivacyAccountant for NoAccountant {
    fn epsilon(&self, _info: &DpRunInfo, _delta: f64) -> Option<f64> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpRun {
    pub info: DpRunInfo,
    pub seed: u64,
    pub autocorr: Vec<f64>,
    pub autocorr_mse: f64,
    pub epsilon: Option<f64>,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpAblation {
    pub real_autocorr: Vec<f64>,
    pub runs: Vec<DpRun>,
}

impl DpAblation {
    /// Median autocorrelation MSE per noise multiplier, in input order.
    pub fn median_mse(&self) -> Vec<(f64, f64)> {
        let mut sigmas: Vec<f64> = Vec::new();
        for r in &self.runs {
            if !sigmas.contains(&r.info.noise_multiplier) {
                sigmas.push(r.info.noise_multiplier);
            }
        }
        sigmas
            .into_iter()
            .map(|s| {
                let v: Vec<f64> =
                    self.runs.iter().filter(|r| r.info.noise_multiplier == s).map(|r| r.autocorr_mse).collect();
                (s, median(&v))
            })
            .collect()
    }

    /// Real autocorrelation against the per-σ average synthetic curves.
    pub fn overlay_svg(&self) -> String {
        let lags = |n: usize| (0..n).map(|l| l as f64).collect::<Vec<_>>();
        let mut series = vec![Series::new("real", lags(self.real_autocorr.len()), self.real_autocorr.clone())];
        for (sigma, _) in self.median_mse() {
            let curves: Vec<&Vec<f64>> =
                self.runs.iter().filter(|r| r.info.noise_multiplier == sigma).map(|r| &r.autocorr).collect();
            let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
            let mean = (0..len).map(|l| curves.iter().map(|c| c[l]).sum::<f64>() / curves.len() as f64).collect();
            series.push(Series::new(format!("sigma={sigma}"), lags(len), mean));
        }
        line_chart("Autocorrelation: real vs DP training", "lag", "autocorrelation", &series)
    }

    pub fn to_report(&self) -> EvalReport {
        let lags = |n: usize| (0..n).map(|l| l as f64).collect::<Vec<_>>();
        let mut report = EvalReport::default();
        report.metrics.push(MetricResult::curve("autocorr_real", lags(self.real_autocorr.len()), self.real_autocorr.clone()));
        for r in &self.runs {
            let tag = format!("sigma={}/seed={}", r.info.noise_multiplier, r.seed);
            report.metrics.push(MetricResult::curve(format!("autocorr/{tag}"), lags(r.autocorr.len()), r.autocorr.clone()));
            report.metrics.push(MetricResult::scalar(format!("autocorr_mse/{tag}"), r.autocorr_mse));
            report.notes.push(format!(
                "{tag}: clip {} steps {} batch {} n {} delta {} epsilon {}",
                r.info.clip_norm,
                r.info.steps,
                r.info.batch_size,
                r.info.n,
                r.delta,
                r.epsilon.map_or("unreported".to_string(), |e| e.to_string())
            ));
        }
        report
    }
}

/// Trains one DP bundle per (σ, seed) and compares autocorrelation of
/// measurement `dim` against the corpus. The clip norm comes from
/// `train_cfg.dp`, defaulting to 1.
#[allow(clippy::too_many_arguments)]
pub fn dp_ablation(
    corpus: &Dataset,
    sigmas: &[f64],
    seeds: &[u64],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dim: usize,
    max_lag: usize,
    accountant: &dyn PrivacyAccountant,
) -> Result<DpAblation> {
    contract!(!sigmas.is_empty() && !seeds.is_empty(), "need at least one sigma and one seed");
    contract!(sigmas.iter().all(|s| *s >= 0.0 && s.is_finite()), "noise multipliers must be finite and >= 0");
    let clip_norm = train_cfg.dp.map_or(1.0, |d| d.clip_norm);
    let real = autocorrelation(corpus, dim, max_lag)?;
    let delta = 1.0 / corpus.len() as f64;
    let mut runs = Vec::new();
    for &sigma in sigmas {
        for &seed in seeds {
            let cfg = TrainConfig { seed, dp: Some(DpConfig { clip_norm, noise_multiplier: sigma }), ..train_cfg.clone() };
            let (bundle, log) = train(corpus, model_cfg, &cfg)?;
            let synth = generation::sample(&bundle, corpus.len(), None, seed.wrapping_add(1))?;
            let ac = autocorrelation(&synth, dim, max_lag)?;
            let info = DpRunInfo {
                noise_multiplier: sigma,
                clip_norm,
                steps: log.records.len(),
                batch_size: model_cfg.batch_size.min(corpus.len()),
                n: corpus.len(),
            };
            let epsilon = accountant.epsilon(&info, delta);
            let mse = curve_mse(&real.values, &ac.values, max_lag);
            log::info!("dp ablation: sigma {sigma} seed {seed} autocorr mse {mse:.5}");
            runs.push(DpRun { info, seed, autocorr: ac.values, autocorr_mse: mse, epsilon, delta });
        }
    }
    Ok(DpAblation { real_autocorr: real.values, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::tests::{tiny_config, tiny_dataset};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn separable_and_constant_scores() {
        assert_eq!(ranking_attack(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ranking_attack(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(ranking_attack(&[5.0; 8], &[5.0; 8]).unwrap(), 0.5);
        assert!(ranking_attack(&[1.0], &[1.0, 2.0]).is_err());
        assert!(ranking_attack(&[], &[]).is_err());
    }

    #[test]
    fn constant_critic_gives_chance() {
        let ds = tiny_dataset(8, 6, 2);
        let (mut bundle, _) = train(&ds, &tiny_config(), &TrainConfig { max_batches: 1, ..Default::default() }).unwrap();
        for w in bundle.disc_main.params.values.iter_mut() {
            w.fill(0.0);
        }
        let (m, nm) = member_split(&ds, 4, 0).unwrap();
        assert_eq!(membership_attack(&bundle, &m, &nm).unwrap(), 0.5);
        assert!(membership_attack(&bundle, &m, &ds).is_err());
    }

    proptest! {
        #[test]
        fn uninformative_scores_average_to_chance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2000;
            let m: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let nm: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let rate = ranking_attack(&m, &nm).unwrap();
            prop_assert!((0.0..=1.0).contains(&rate));
            // ±4σ of a binomial proportion over 2n trials
            prop_assert!((rate - 0.5).abs() < 4.0 * (0.25 / (2 * n) as f64).sqrt());
        }
    }

    #[test]
    fn attack_is_deterministic() {
        let ds = tiny_dataset(12, 6, 2);
        let (bundle, _) = train(&ds, &tiny_config(), &TrainConfig { max_batches: 2, ..Default::default() }).unwrap();
        let (m, nm) = member_split(&ds, 6, 1).unwrap();
        assert_eq!(membership_attack(&bundle, &m, &nm).unwrap(), membership_attack(&bundle, &m, &nm).unwrap());
    }

    #[test]
    fn sizes_must_leave_non_members() {
        let ds = tiny_dataset(10, 6, 2);
        let cfg = TrainConfig { max_batches: 1, ..Default::default() };
        assert!(matches!(attack_vs_trainsize(&ds, &[6], &[0], &tiny_config(), &cfg), Err(Error::Validation(_))));
        let curve = attack_vs_trainsize(&ds, &[5], &[0, 1], &tiny_config(), &cfg).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0].success.len(), 2);
        let back = AttackCurve::from_report(&curve.to_report()).unwrap();
        assert_eq!(back, curve);
        let json = serde_json::to_string(&curve.to_report()).unwrap();
        assert_eq!(AttackCurve::from_report(&serde_json::from_str(&json).unwrap()).unwrap(), curve);
    }

    struct Fixed;
    impl PrivacyAccountant for Fixed {
        fn epsilon(&self, info: &DpRunInfo, _delta: f64) -> Option<f64> {
            (info.noise_multiplier > 0.0).then_some(1.0 / info.noise_multiplier)
        }
    }

    #[test]
    fn ablation_records_run_metadata() {
        let ds = tiny_dataset(8, 6, 2);
        let cfg = TrainConfig { max_batches: 2, ..Default::default() };
        let out = dp_ablation(&ds, &[0.0, 2.0], &[0], &tiny_config(), &cfg, 0, 3, &Fixed).unwrap();
        assert_eq!(out.runs.len(), 2);
        assert_eq!(out.runs[0].info.steps, 2);
        assert_eq!(out.runs[0].info.clip_norm, 1.0);
        assert_eq!(out.runs[1].epsilon, Some(0.5));
        assert_eq!(out.runs[0].epsilon, None);
        assert_eq!(out.median_mse().len(), 2);
        let report = out.to_report();
        assert!(report.get("autocorr/sigma=2/seed=0").is_some());
        assert_eq!(report.notes.len(), 2);
        assert_eq!(out.overlay_svg().matches("<polyline").count(), 3);
    }
}
