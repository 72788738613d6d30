//! Structural comparison of a synthetic dataset against a real one.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::schema::{Dataset, FieldKind};

/// Fixed-edge histogram; values outside the edges land in the end bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Self {
        assert!(edges.len() >= 2, "a histogram needs at least one bin");
        let bins = edges.len() - 1;
        Self { edges, counts: vec![0.0; bins] }
    }

    /// `bins` equal-width bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Self {
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Self::new((0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect())
    }

    pub fn bin_of(&self, v: f64) -> usize {
        let last = self.counts.len() - 1;
        match self.edges.partition_point(|&e| e <= v) {
            0 => 0,
            i => (i - 1).min(last),
        }
    }

    pub fn add(&mut self, v: f64) {
        let b = self.bin_of(v);
        self.counts[b] += 1.0;
    }

    pub fn filled(mut self, values: impl IntoIterator<Item = f64>) -> Self {
        for v in values {
            self.add(v);
        }
        self
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total();
        self.counts.iter().map(|c| if t > 0.0 { c / t } else { 0.0 }).collect()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0.0).count()
    }
}

/// One named metric with whichever payloads apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<(Vec<f64>, Vec<f64>)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

impl MetricResult {
    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        Self { name: name.into(), scalar: Some(v), curve: None, histogram: None }
    }

    pub fn curve(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { name: name.into(), scalar: None, curve: Some((x, y)), histogram: None }
    }

    pub fn histogram(name: impl Into<String>, h: Histogram) -> Self {
        Self { name: name.into(), scalar: None, curve: None, histogram: Some(h) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<MetricResult>,
    /// Non-fatal observations, such as excluded constant series.
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<&MetricResult> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

/// Sample autocorrelation at lags `0..=max_lag`; `None` for a constant series.
pub fn series_autocorrelation(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom <= 0.0 {
        return None;
    }
    Some(
        (0..=max_lag.min(n.saturating_sub(1)))
            .map(|lag| centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / denom)
            .collect(),
    )
}

/// Autocorrelation averaged over samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrCurve {
    /// Value at lags `0..=max_lag`.
    pub values: Vec<f64>,
    /// Constant series left out of the average.
    pub excluded: usize,
}

impl AutocorrCurve {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }
}

/// Mean autocorrelation curve of measurement `dim`. Lags reaching the
/// shortest series are cut off.
pub fn autocorrelation(ds: &Dataset, dim: usize, max_lag: usize) -> Result<AutocorrCurve> {
    numeric_dim(ds, dim)?;
    contract!(!ds.is_empty(), "autocorrelation of an empty dataset");
    let shortest = ds.lengths().into_iter().min().unwrap_or(1);
    let lag = if max_lag >= shortest {
        log::warn!("max lag {max_lag} truncated to {} (shortest series)", shortest - 1);
        shortest - 1
    } else {
        max_lag
    };
    let mut sum = vec![0.0; lag + 1];
    let mut used = 0usize;
    for s in &ds.samples {
        if let Some(r) = series_autocorrelation(&s.series(dim), lag) {
            for (acc, v) in sum.iter_mut().zip(r) {
                *acc += v;
            }
            used += 1;
        }
    }
    let excluded = ds.len() - used;
    contract!(used > 0, "every series of dimension {dim} is constant");
    Ok(AutocorrCurve { values: sum.into_iter().map(|v| v / used as f64).collect(), excluded })
}

/// Mean squared difference of two curves over lags `1..=max_lag`.
pub fn curve_mse(a: &[f64], b: &[f64], max_lag: usize) -> f64 {
    let top = max_lag.min(a.len() - 1).min(b.len() - 1);
    (1..=top).map(|l| (a[l] - b[l]).powi(2)).sum::<f64>() / top.max(1) as f64
}

pub fn autocorr_mse(real: &Dataset, synth: &Dataset, dim: usize, max_lag: usize) -> Result<f64> {
    let a = autocorrelation(real, dim, max_lag)?;
    let b = autocorrelation(synth, dim, max_lag)?;
    Ok(curve_mse(&a.values, &b.values, max_lag))
}

fn numeric_dim(ds: &Dataset, dim: usize) -> Result<()> {
    match ds.schema.measurement_fields.get(dim) {
        Some(f) if f.kind == FieldKind::Numeric => Ok(()),
        Some(f) => Err(Error::Contract(format!("measurement {} is not numeric", f.name))),
        None => Err(Error::Contract(format!("no measurement dimension {dim}"))),
    }
}

/// Seed used when the larger vector must be resampled down.
pub const RESAMPLE_SEED: u64 = 0x5eed;

/// Empirical Wasserstein-1 distance through the sorted coupling. Unequal
/// sizes are handled by subsampling the larger vector without replacement.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    wasserstein1_seeded(a, b, RESAMPLE_SEED)
}

pub fn wasserstein1_seeded(a: &[f64], b: &[f64], seed: u64) -> Result<f64> {
    contract!(!a.is_empty() && !b.is_empty(), "wasserstein1 needs non-empty inputs");
    let (mut x, mut y) = (a.to_vec(), b.to_vec());
    if x.len() != y.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (big, small) = if x.len() > y.len() { (&mut x, y.len()) } else { (&mut y, x.len()) };
        let picks = index::sample(&mut rng, big.len(), small).into_vec();
        *big = picks.into_iter().map(|i| big[i]).collect();
    }
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64)
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Empirical CDF as sorted values and cumulative fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub values: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub excluded: usize,
}

/// CDF of per-sample Pearson correlations between two numeric dimensions.
pub fn pearson_cdf(ds: &Dataset, dim_a: usize, dim_b: usize) -> Result<EmpiricalCdf> {
    numeric_dim(ds, dim_a)?;
    numeric_dim(ds, dim_b)?;
    let mut values: Vec<f64> =
        ds.samples.iter().filter_map(|s| pearson(&s.series(dim_a), &s.series(dim_b))).collect();
    let excluded = ds.len() - values.len();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let cumulative = (1..=values.len()).map(|i| i as f64 / n).collect();
    Ok(EmpiricalCdf { values, cumulative, excluded })
}

pub fn length_histogram(ds: &Dataset, edges: &[f64]) -> Result<Histogram> {
    contract!(!ds.is_empty(), "length histogram of an empty dataset");
    Ok(Histogram::new(edges.to_vec()).filled(ds.lengths().into_iter().map(|l| l as f64)))
}

/// Counts per category of a categorical metadata field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub labels: Vec<String>,
    pub counts: Vec<f64>,
}

impl CategoryCounts {
    pub fn frequencies(&self) -> Vec<f64> {
        let t: f64 = self.counts.iter().sum();
        self.counts.iter().map(|c| c / t).collect()
    }
}

pub fn metadata_histogram(ds: &Dataset, field: &str) -> Result<CategoryCounts> {
    let j = ds
        .schema
        .metadata_index(field)
        .ok_or_else(|| Error::Contract(format!("unknown metadata field {field}")))?;
    let spec = &ds.schema.metadata_fields[j];
    contract!(spec.kind == FieldKind::Categorical, "metadata field {field} is not categorical");
    let mut counts = vec![0.0; spec.categories.len()];
    for s in &ds.samples {
        if let Some(i) = s.metadata[j].as_category().and_then(|c| spec.category_index(c)) {
            counts[i] += 1.0;
        }
    }
    Ok(CategoryCounts { labels: spec.categories.clone(), counts })
}

/// Jensen-Shannon divergence in bits between two count or probability
/// vectors (each normalised first).
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    contract!(p.len() == q.len(), "JSD inputs differ in length ({} vs {})", p.len(), q.len());
    let norm = |v: &[f64]| {
        let t: f64 = v.iter().sum();
        v.iter().map(|x| x / t).collect::<Vec<f64>>()
    };
    let (p, q) = (norm(p), norm(q));
    let kl = |a: &[f64], m: &[f64]| {
        a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).log2()).sum::<f64>()
    };
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).clamp(0.0, 1.0))
}

/// Per-sample `(max + min) / 2` of measurement `dim`.
pub fn range_midpoints(ds: &Dataset, dim: usize) -> Result<Vec<f64>> {
    numeric_dim(ds, dim)?;
    Ok(ds
        .samples
        .iter()
        .map(|s| {
            let (lo, hi) = s
                .measurements
                .column(dim)
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            (lo + hi) / 2.0
        })
        .collect())
}

pub fn range_midpoint_hist(ds: &Dataset, dim: usize, edges: &[f64]) -> Result<Histogram> {
    Ok(Histogram::new(edges.to_vec()).filled(range_midpoints(ds, dim)?))
}

/// Bins used to compare midpoint histograms: 50 bins over the real range
/// widened by 10% on each side.
pub fn midpoint_edges(real: &[f64]) -> Vec<f64> {
    let (lo, hi) = real.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.1).max(1e-9);
    Histogram::uniform(lo - pad, hi + pad, 50).edges
}

/// Binned JSD of the midpoint histograms of `real` and `synth`.
pub fn midpoint_jsd(real: &Dataset, synth: &Dataset, dim: usize) -> Result<f64> {
    let r = range_midpoints(real, dim)?;
    let edges = midpoint_edges(&r);
    let hr = Histogram::new(edges.clone()).filled(r);
    let hs = range_midpoint_hist(synth, dim, &edges)?;
    jsd(&hr.counts, &hs.counts)
}

/// Nearest training samples of one synthetic sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbours {
    pub indices: Vec<usize>,
    pub sq_errors: Vec<f64>,
}

fn flat(ds: &Dataset, i: usize, width: usize) -> Vec<f64> {
    let m = &ds.samples[i].measurements;
    let mut v: Vec<f64> = m.iter().copied().collect();
    v.resize(width, 0.0);
    v
}

/// Exact `k` nearest training samples by squared error for every synthetic
/// sample. Series are compared time-major with zero padding.
pub fn memorization_check(synth: &Dataset, train: &Dataset, k: usize) -> Result<Vec<Neighbours>> {
    contract!(k >= 1 && k <= train.len(), "k = {k} must lie in [1, {}]", train.len());
    let dims = train.schema.measurement_fields.len();
    contract!(
        synth.schema.measurement_fields.len() == dims,
        "synthetic and training data have different measurement counts"
    );
    let longest = synth.max_observed_length().max(train.max_observed_length());
    let width = longest * dims;
    let train_flat: Vec<Vec<f64>> = (0..train.len()).map(|i| flat(train, i, width)).collect();
    Ok((0..synth.len())
        .map(|i| {
            let q = flat(synth, i, width);
            let mut d: Vec<(f64, usize)> = train_flat
                .iter()
                .enumerate()
                .map(|(j, t)| (q.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum(), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            Neighbours { indices: d.iter().map(|x| x.1).collect(), sq_errors: d.iter().map(|x| x.0).collect() }
        })
        .collect())
}

/// Options for [`evaluate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub max_lag: usize,
    pub length_bins: usize,
    pub nearest_k: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { max_lag: 28, length_bins: 20, nearest_k: 1 }
    }
}

/// The standard metric suite: per numeric measurement autocorrelation
/// curves and MSE, midpoint histograms and JSD, W1 of per-sample totals;
/// length histograms and W1; categorical metadata histograms and JSD;
/// nearest-neighbour distances.
pub fn evaluate(real: &Dataset, synth: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    contract!(!real.is_empty() && !synth.is_empty(), "evaluation needs non-empty datasets");
    contract!(
        real.schema.measurement_fields == synth.schema.measurement_fields
            && real.schema.metadata_fields == synth.schema.metadata_fields,
        "real and synthetic schemas differ"
    );
    let mut report = EvalReport::default();
    let lags = |n: usize| (0..n).map(|l| l as f64).collect::<Vec<f64>>();
    for (k, field) in real.schema.measurement_fields.iter().enumerate() {
        if field.kind != FieldKind::Numeric {
            continue;
        }
        let name = &field.name;
        let ra = autocorrelation(real, k, opts.max_lag)?;
        let sa = autocorrelation(synth, k, opts.max_lag)?;
        for (who, c) in [("real", &ra), ("synthetic", &sa)] {
            if c.excluded > 0 {
                report.notes.push(format!("{who} {name}: {} constant series excluded", c.excluded));
            }
        }
        report.metrics.push(MetricResult::curve(format!("autocorr_real/{name}"), lags(ra.values.len()), ra.values.clone()));
        report.metrics.push(MetricResult::curve(format!("autocorr_synth/{name}"), lags(sa.values.len()), sa.values.clone()));
        report.metrics.push(MetricResult::scalar(format!("autocorr_mse/{name}"), curve_mse(&ra.values, &sa.values, opts.max_lag)));

        let rm = range_midpoints(real, k)?;
        let edges = midpoint_edges(&rm);
        let hr = Histogram::new(edges.clone()).filled(rm);
        let hs = range_midpoint_hist(synth, k, &edges)?;
        report.metrics.push(MetricResult::scalar(format!("midpoint_jsd/{name}"), jsd(&hr.counts, &hs.counts)?));
        report.metrics.push(MetricResult::histogram(format!("midpoint_real/{name}"), hr));
        report.metrics.push(MetricResult::histogram(format!("midpoint_synth/{name}"), hs));

        let total = |ds: &Dataset| ds.samples.iter().map(|s| s.measurements.column(k).sum()).collect::<Vec<f64>>();
        report.metrics.push(MetricResult::scalar(format!("total_w1/{name}"), wasserstein1(&total(real), &total(synth))?));
    }
    let longest = real.max_observed_length().max(synth.max_observed_length()) as f64;
    let edges = Histogram::uniform(0.5, longest + 0.5, opts.length_bins).edges;
    let lr = length_histogram(real, &edges)?;
    let ls = length_histogram(synth, &edges)?;
    let as_f = |ds: &Dataset| ds.lengths().into_iter().map(|l| l as f64).collect::<Vec<f64>>();
    report.metrics.push(MetricResult::scalar("length_w1", wasserstein1(&as_f(real), &as_f(synth))?));
    report.metrics.push(MetricResult::scalar("length_jsd", jsd(&lr.counts, &ls.counts)?));
    report.metrics.push(MetricResult::histogram("length_real", lr));
    report.metrics.push(MetricResult::histogram("length_synth", ls));
    for field in &real.schema.metadata_fields {
        if field.kind != FieldKind::Categorical {
            continue;
        }
        let r = metadata_histogram(real, &field.name)?;
        let s = metadata_histogram(synth, &field.name)?;
        report.metrics.push(MetricResult::scalar(format!("metadata_jsd/{}", field.name), jsd(&r.counts, &s.counts)?));
        let edges: Vec<f64> = (0..=r.labels.len()).map(|i| i as f64 - 0.5).collect();
        report.metrics.push(MetricResult::histogram(
            format!("metadata_synth/{}", field.name),
            Histogram { edges, counts: s.counts },
        ));
    }
    if opts.nearest_k > 0 && opts.nearest_k <= real.len() {
        let nn = memorization_check(synth, real, opts.nearest_k)?;
        let mut d: Vec<f64> = nn.iter().map(|n| n.sq_errors[0]).collect();
        d.sort_by(f64::total_cmp);
        report.metrics.push(MetricResult::scalar("nearest_sq_error_median", d[d.len() / 2]));
        report.metrics.push(MetricResult::scalar("nearest_sq_error_min", d[0]));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{DataSchema, FieldSpec, MetaValue, NormalizationRange, Sample, TimestampMode};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ds_from(series: Vec<Vec<f64>>) -> Dataset {
        let max = series.iter().map(Vec::len).max().unwrap();
        let schema = DataSchema {
            metadata_fields: vec![FieldSpec::categorical("c", ["x", "y"])],
            measurement_fields: vec![FieldSpec::numeric("v", NormalizationRange::ZeroOne)],
            max_length: max,
            batch_param: 1,
            timestamp_mode: TimestampMode::None,
        };
        let samples = series
            .into_iter()
            .enumerate()
            .map(|(i, v)| Sample {
                metadata: vec![MetaValue::Category(["x", "y"][i % 2].into())],
                measurements: Array2::from_shape_vec((v.len(), 1), v).unwrap(),
                timestamps: None,
            })
            .collect();
        Dataset::new(schema, samples).unwrap()
    }

    /// Direct double-loop autocorrelation.
    fn autocorr_oracle(x: &[f64], lag: usize) -> f64 {
        let n = x.len();
        let mut mean = 0.0;
        for v in x {
            mean += v;
        }
        mean /= n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..n {
            den += (x[t] - mean) * (x[t] - mean);
            for u in 0..n {
                if u == t + lag {
                    num += (x[t] - mean) * (x[u] - mean);
                }
            }
        }
        num / den
    }

    #[test]
    fn sine_of_period_seven_peaks_at_lag_seven() {
        let x: Vec<f64> = (0..70).map(|t| (2.0 * std::f64::consts::PI * t as f64 / 7.0).sin()).collect();
        let r = series_autocorrelation(&x, 10).unwrap();
        assert_eq!(r[0], 1.0);
        // the shared denominator leaves (70 - 7) / 70 of the energy at lag 7
        assert!((r[7] - 0.9).abs() < 1e-12, "{}", r[7]);
        assert!((r[7] - autocorr_oracle(&x, 7)).abs() < 1e-12);
        let curve = autocorrelation(&ds_from(vec![x.clone(), x]), 0, 7).unwrap();
        assert!((curve.values[7] - r[7]).abs() < 1e-12);
    }

    #[test]
    fn white_noise_autocorrelation_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let series = (0..1000).map(|_| (0..100).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let c = autocorrelation(&ds_from(series), 0, 10).unwrap();
        assert!(c.values[1..].iter().all(|v| v.abs() <= 0.1));
        assert_eq!(c.values[0], 1.0);
    }

    #[test]
    fn constant_series_are_excluded_and_lags_truncated() {
        let ds = ds_from(vec![vec![1.0; 5], vec![1.0, 2.0, 1.0, 2.0]]);
        let c = autocorrelation(&ds, 0, 10).unwrap();
        assert_eq!(c.excluded, 1);
        assert_eq!(c.max_lag(), 3);
    }

    #[test]
    fn offset_curve_mse_is_closed_form() {
        let a: Vec<f64> = (0..=100).map(|l| (l as f64 * 0.1).cos()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((curve_mse(&a, &b, 100) - 0.01).abs() < 1e-12);
        let ds = ds_from(vec![vec![0.0, 1.0, 3.0, 2.0], vec![5.0, 1.0, 2.0]]);
        assert_eq!(autocorr_mse(&ds, &ds, 0, 2).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!((wasserstein1(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(wasserstein1(&[], &[1.0]), Err(Error::Contract(_))));
        let big: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let w = wasserstein1(&big, &[10.0, 20.0]).unwrap();
        assert_eq!(w, wasserstein1(&big, &[10.0, 20.0]).unwrap());
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Optimal transport between equal-weight point sets: by Birkhoff the
    /// optimum is attained at a permutation.
    fn w1_oracle(a: &[f64], b: &[f64]) -> f64 {
        permutations(a.len())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / a.len() as f64
    }

    proptest! {
        #[test]
        fn w1_matches_brute_force_and_is_a_metric(
            (a, b, c) in (1usize..=6).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let ab = wasserstein1(&a, &b).unwrap();
            prop_assert!((ab - w1_oracle(&a, &b)).abs() < 1e-9);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, wasserstein1(&b, &a).unwrap());
            prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
            let ac = wasserstein1(&a, &c).unwrap();
            let cb = wasserstein1(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        #[test]
        fn autocorrelation_matches_double_loop(x in prop::collection::vec(-5.0f64..5.0, 2..200), lag in 0usize..20) {
            if let Some(r) = series_autocorrelation(&x, lag) {
                for (l, v) in r.iter().enumerate() {
                    prop_assert!((v - autocorr_oracle(&x, l)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn jsd_is_bounded_and_symmetric(p in prop::collection::vec(0.01f64..1.0, 2..8), q in prop::collection::vec(0.01f64..1.0, 8)) {
            let q = &q[..p.len()];
            let d = jsd(&p, q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, jsd(q, &p).unwrap());
        }
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[3.0, 1.0], &[6.0, 2.0]).unwrap(), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        // 1.5 − (3/4)·log2 3 ≈ 0.3113
        let expected = 1.5 - 0.75 * 3f64.log2();
        assert!((jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.3113).abs() < 1e-4);
    }

    #[test]
    fn pearson_cdf_extremes() {
        let schema = DataSchema {
            metadata_fields: vec![],
            measurement_fields: vec![
                FieldSpec::numeric("a", NormalizationRange::ZeroOne),
                FieldSpec::numeric("b", NormalizationRange::ZeroOne),
                FieldSpec::numeric("c", NormalizationRange::ZeroOne),
                FieldSpec::numeric("d", NormalizationRange::ZeroOne),
            ],
            max_length: 100,
            batch_param: 1,
            timestamp_mode: TimestampMode::None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples = (0..1000)
            .map(|_| {
                let m = Array2::from_shape_fn((100, 4), |_| 0.0);
                let mut m = m;
                for t in 0..100 {
                    let x: f64 = rng.sample(StandardNormal);
                    m[[t, 0]] = x;
                    m[[t, 1]] = -x;
                    m[[t, 2]] = rng.sample(StandardNormal);
                    m[[t, 3]] = rng.sample(StandardNormal);
                }
                Sample { metadata: vec![], measurements: m, timestamps: None }
            })
            .collect();
        let ds = Dataset::new(schema, samples).unwrap();
        let same = pearson_cdf(&ds, 0, 0).unwrap();
        assert!(same.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let neg = pearson_cdf(&ds, 0, 1).unwrap();
        assert!(neg.values.iter().all(|v| (v + 1.0).abs() < 1e-12));
        let indep = pearson_cdf(&ds, 2, 3).unwrap();
        let mut abs: Vec<f64> = indep.values.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        assert!(abs[abs.len() / 2] <= 0.15);
        assert_eq!(*indep.cumulative.last().unwrap(), 1.0);
    }

    #[test]
    fn histograms() {
        let ds = ds_from(vec![vec![1.0; 56], vec![2.0; 56]]);
        let h = length_histogram(&ds, &Histogram::uniform(0.5, 56.5, 14).edges).unwrap();
        assert_eq!(h.occupied_bins(), 1);
        let mh = metadata_histogram(&ds, "c").unwrap();
        assert_eq!(mh.counts, vec![1.0, 1.0]);
        assert!(metadata_histogram(&ds, "nope").is_err());
        let mids = range_midpoints(&ds_from(vec![vec![5.0; 3]]), 0).unwrap();
        assert_eq!(mids, vec![5.0]);
        let mut edge = Histogram::uniform(0.0, 1.0, 4);
        edge.add(-3.0);
        edge.add(1.0);
        edge.add(9.0);
        assert_eq!(edge.counts, vec![1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn memorization_finds_copies_and_matches_scan() {
        let train = ds_from(vec![vec![0.0, 1.0, 2.0], vec![5.0, 5.0], vec![1.0, 1.0, 1.0]]);
        let synth = ds_from(vec![vec![5.0, 5.0], vec![0.9, 1.1, 0.8]]);
        let nn = memorization_check(&synth, &train, 1).unwrap();
        assert_eq!(nn[0].indices, vec![1]);
        assert_eq!(nn[0].sq_errors, vec![0.0]);
        // exhaustive scan, zero-padded to length 3
        let q = [0.9f64, 1.1, 0.8];
        let cands = [[0.0f64, 1.0, 2.0], [5.0, 5.0, 0.0], [1.0, 1.0, 1.0]];
        let d: Vec<f64> = cands.iter().map(|c| c.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum()).collect();
        let best = (0..3).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        assert_eq!(nn[1].indices, vec![best]);
        assert!((nn[1].sq_errors[0] - d[best]).abs() < 1e-12);
        assert!(memorization_check(&synth, &train, 4).is_err());
        // swapping roles on identical sets gives the same distances
        let ab = memorization_check(&train, &train, 2).unwrap();
        assert!(ab.iter().all(|n| n.sq_errors[0] == 0.0));
    }

    #[test]
    fn evaluate_self_is_perfect() {
        let ds = ds_from(vec![vec![0.0, 1.0, 3.0, 2.0], vec![5.0, 1.0, 2.0, 4.0, 0.0]]);
        let r = evaluate(&ds, &ds, &EvalOptions { max_lag: 3, ..Default::default() }).unwrap();
        for name in ["autocorr_mse/v", "midpoint_jsd/v", "length_w1", "metadata_jsd/c", "nearest_sq_error_min"] {
            assert_eq!(r.get(name).unwrap().scalar, Some(0.0), "{name}");
        }
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
