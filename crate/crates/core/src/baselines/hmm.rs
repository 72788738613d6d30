//! Hidden Markov model with diagonal Gaussian emissions, fitted by
//! Baum-Welch over all training series.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_request, row_rng, EmpiricalMetadataSampler, ModelKind, SeriesCodec, Synthesizer};
use crate::error::{contract, Error, Result};
use crate::schema::{DataSchema, Dataset};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub states: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tol: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self { states: 10, max_iter: 100, tol: 1e-6 }
    }
}

const VAR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub start: Vec<f64>,
    /// Row-stochastic transition matrix.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

/// Outcome of [`GaussianHmm::fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct HmmFit {
    pub hmm: GaussianHmm,
    /// Log-likelihood of the data before each update, then after the last.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

#[derive(Default)]
struct Stats {
    log_likelihood: f64,
    start: Vec<f64>,
    trans: Vec<Vec<f64>>,
    weight: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
}

impl GaussianHmm {
    pub fn states(&self) -> usize {
        self.start.len()
    }

    fn log_emission(&self, x: ndarray::ArrayView1<f64>) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.variances)
            .map(|(mu, var)| {
                x.iter()
                    .zip(mu.iter().zip(var))
                    .map(|(&v, (&m, &s2))| -0.5 * ((v - m).powi(2) / s2 + (2.0 * std::f64::consts::PI * s2).ln()))
                    .sum()
            })
            .collect()
    }

    /// Total log-likelihood of `series` (each `T × K`).
    pub fn log_likelihood(&self, series: &[Matrix]) -> f64 {
        let mut stats = self.empty_stats(series.first().map_or(0, |s| s.ncols()));
        for x in series {
            self.accumulate(x, &mut stats, false);
        }
        stats.log_likelihood
    }

    fn empty_stats(&self, k: usize) -> Stats {
        let n = self.states();
        Stats {
            log_likelihood: 0.0,
            start: vec![0.0; n],
            trans: vec![vec![0.0; n]; n],
            weight: vec![0.0; n],
            sum: vec![vec![0.0; k]; n],
            sum_sq: vec![vec![0.0; k]; n],
        }
    }

    /// Scaled forward-backward over one series.
    fn accumulate(&self, x: &Matrix, st: &mut Stats, expectations: bool) {
        let n = self.states();
        let t_len = x.nrows();
        if t_len == 0 {
            return;
        }
        let mut b = Vec::with_capacity(t_len);
        for row in x.rows() {
            let lb = self.log_emission(row);
            let m = lb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            st.log_likelihood += m;
            b.push(lb.into_iter().map(|v| (v - m).exp()).collect::<Vec<_>>());
        }
        let mut alpha = vec![vec![0.0; n]; t_len];
        let mut scale = vec![0.0; t_len];
        for t in 0..t_len {
            for j in 0..n {
                let prior = if t == 0 {
                    self.start[j]
                } else {
                    (0..n).map(|i| alpha[t - 1][i] * self.transition[i][j]).sum()
                };
                alpha[t][j] = prior * b[t][j];
            }
            scale[t] = alpha[t].iter().sum::<f64>().max(f64::MIN_POSITIVE);
            alpha[t].iter_mut().for_each(|a| *a /= scale[t]);
            st.log_likelihood += scale[t].ln();
        }
        if !expectations {
            return;
        }
        let mut beta = vec![vec![1.0; n]; t_len];
        for t in (0..t_len - 1).rev() {
            for i in 0..n {
                beta[t][i] = (0..n).map(|j| self.transition[i][j] * b[t + 1][j] * beta[t + 1][j]).sum::<f64>()
                    / scale[t + 1];
            }
        }
        for t in 0..t_len {
            let g: Vec<f64> = (0..n).map(|i| alpha[t][i] * beta[t][i]).collect();
            let z = g.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            for i in 0..n {
                let w = g[i] / z;
                if t == 0 {
                    st.start[i] += w;
                }
                st.weight[i] += w;
                for (d, &v) in x.row(t).iter().enumerate() {
                    st.sum[i][d] += w * v;
                    st.sum_sq[i][d] += w * v * v;
                }
            }
            if t + 1 < t_len {
                for i in 0..n {
                    for j in 0..n {
                        st.trans[i][j] += alpha[t][i] * self.transition[i][j] * b[t + 1][j] * beta[t + 1][j]
                            / scale[t + 1];
                    }
                }
            }
        }
    }

    fn initial(states: usize, series: &[Matrix], rng: &mut impl Rng) -> Self {
        let k = series[0].ncols();
        let rows: Vec<_> = series.iter().flat_map(|s| s.rows()).collect();
        let total = rows.len() as f64;
        let mean: Vec<f64> = (0..k).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / total).collect();
        let var: Vec<f64> = (0..k)
            .map(|d| (rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / total).max(VAR_FLOOR))
            .collect();
        // k-means++ seeding of the state means
        let mut means: Vec<Vec<f64>> = vec![rows[rng.random_range(0..rows.len())].to_vec()];
        while means.len() < states {
            let d2: Vec<f64> = rows
                .iter()
                .map(|r| {
                    means
                        .iter()
                        .map(|m| r.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            match WeightedIndex::new(&d2) {
                Ok(dist) => means.push(rows[dist.sample(rng)].to_vec()),
                Err(_) => means.push(mean.clone()),
            }
        }
        let transition = (0..states)
            .map(|_| {
                let raw: Vec<f64> = (0..states).map(|_| 1.0 + 0.1 * rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Self { start: vec![1.0 / states as f64; states], transition, means, variances: vec![var; states] }
    }

    /// Baum-Welch from a seeded start. When `max_iter` runs out the best
    /// parameters seen are returned and a warning is logged.
    pub fn fit(series: &[Matrix], config: &HmmConfig, seed: u64) -> Result<HmmFit> {
        contract!(config.states >= 1, "HMM needs at least one state");
        let series: Vec<Matrix> = series.iter().filter(|s| s.nrows() > 0).cloned().collect();
        contract!(!series.is_empty(), "HMM needs at least one non-empty series");
        let k = series[0].ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hmm = Self::initial(config.states, &series, &mut rng);
        let mut log_likelihoods: Vec<f64> = Vec::new();
        let mut best = (f64::NEG_INFINITY, hmm.clone());
        let mut converged = false;
        for _ in 0..config.max_iter {
            let mut st = hmm.empty_stats(k);
            for x in &series {
                hmm.accumulate(x, &mut st, true);
            }
            let ll = st.log_likelihood;
            if !ll.is_finite() {
                return Err(Error::Numeric("HMM log-likelihood is not finite".into()));
            }
            if ll > best.0 {
                best = (ll, hmm.clone());
            }
            if let Some(&prev) = log_likelihoods.last() {
                if (ll - prev).abs() <= config.tol * prev.abs().max(1.0) {
                    log_likelihoods.push(ll);
                    converged = true;
                    break;
                }
            }
            log_likelihoods.push(ll);
            hmm = hmm.m_step(&st);
        }
        if !converged {
            let ll = hmm.log_likelihood(&series);
            log_likelihoods.push(ll);
            if ll > best.0 {
                best = (ll, hmm);
            }
            log::warn!("HMM did not converge in {} iterations; keeping the best parameters", config.max_iter);
        }
        Ok(HmmFit { hmm: best.1, log_likelihoods, converged })
    }

    fn m_step(&self, st: &Stats) -> Self {
        let n = self.states();
        let starts: f64 = st.start.iter().sum();
        let mut next = self.clone();
        for i in 0..n {
            next.start[i] = st.start[i] / starts;
            let row: f64 = st.trans[i].iter().sum();
            if row > 0.0 {
                for j in 0..n {
                    next.transition[i][j] = st.trans[i][j] / row;
                }
            }
            let w = st.weight[i];
            if w > 1e-10 {
                for d in 0..st.sum[i].len() {
                    let m = st.sum[i][d] / w;
                    next.means[i][d] = m;
                    next.variances[i][d] = (st.sum_sq[i][d] / w - m * m).max(VAR_FLOOR);
                }
            }
        }
        next
    }

    /// Draws a `len × K` series.
    pub fn sample_series(&self, len: usize, rng: &mut impl Rng) -> Matrix {
        let k = self.means.first().map_or(0, |m| m.len());
        let mut out = Matrix::zeros((len, k));
        let mut state = WeightedIndex::new(&self.start).expect("start distribution").sample(rng);
        for t in 0..len {
            if t > 0 {
                state = WeightedIndex::new(&self.transition[state]).expect("transition row").sample(rng);
            }
            for d in 0..k {
                out[[t, d]] = Normal::new(self.means[state][d], self.variances[state][d].sqrt())
                    .expect("finite")
                    .sample(rng);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub config: HmmConfig,
    pub codec: SeriesCodec,
    pub sampler: EmpiricalMetadataSampler,
    /// Fitted on z-scored measurements.
    pub hmm: GaussianHmm,
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

impl HmmModel {
    pub fn fit(ds: &Dataset, config: &HmmConfig, seed: u64) -> Result<Self> {
        contract!(
            ds.schema.measurement_fields.iter().all(|f| f.is_numeric()),
            "the HMM baseline supports numeric measurements only"
        );
        let codec = SeriesCodec::fit(ds)?;
        let sampler = EmpiricalMetadataSampler::fit(ds, 1)?;
        let series: Vec<Matrix> = ds.samples.iter().map(|s| codec.encode_series(s)).collect();
        let fit = GaussianHmm::fit(&series, config, seed)?;
        Ok(Self {
            config: config.clone(),
            codec,
            sampler,
            hmm: fit.hmm,
            log_likelihoods: fit.log_likelihoods,
            converged: fit.converged,
        })
    }

    /// State means in data units.
    pub fn state_means(&self) -> Vec<Vec<f64>> {
        self.hmm
            .means
            .iter()
            .map(|m| m.iter().enumerate().map(|(d, v)| v * self.codec.std[d] + self.codec.mean[d]).collect())
            .collect()
    }
}

impl Synthesizer for HmmModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Hmm
    }

    fn schema(&self) -> &DataSchema {
        self.codec.schema()
    }

    fn sample_with_length(&self, n: usize, length: Option<usize>, seed: u64) -> Result<Dataset> {
        check_request(self.schema(), n, length)?;
        let samples = (0..n)
            .map(|i| {
                let mut rng = row_rng(seed, i);
                let meta = self.sampler.sample_metadata(&mut rng);
                let len = length.unwrap_or_else(|| self.sampler.sample_length(&mut rng));
                self.codec.decode_sample(meta, &self.hmm.sample_series(len, &mut rng))
            })
            .collect();
        Dataset::new(self.codec.schema().clone(), samples)
    }
}
