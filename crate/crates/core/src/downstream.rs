//! Train-on-synthetic / test-on-real evaluation and ranking agreement.
//!
//! Real data is split into `A` (train) and `A′` (test); a model fitted on `A`
//! generates `B` and `B′` of matching sizes. Predictors are scored on each
//! pathway and their orderings compared with Spearman's ρ.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use netsynth_nn::{Activation, Adam, Mlp, ParamSet, Tape};

use crate::baselines::Synthesizer;
use crate::error::{contract, Error, Result};
use crate::schema::{Dataset, FieldKind, MetaValue};
use crate::Matrix;

/// Seeded 50/50 split into disjoint train and test halves.
pub fn split_halves(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    contract!(ds.len() >= 2, "need at least two samples to split, got {}", ds.len());
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = ds.len() / 2;
    Ok((ds.subset(&idx[..half]), ds.subset(&idx[half..])))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbabSplit {
    pub a: Dataset,
    pub a_prime: Dataset,
    pub b: Dataset,
    pub b_prime: Dataset,
}

/// Splits `real`, fits a model on `A` with `fit`, and generates `B`, `B′`.
pub fn split_abab<S, F>(real: &Dataset, fit: F, seed: u64) -> Result<AbabSplit>
where
    S: Synthesizer,
    F: FnOnce(&Dataset) -> Result<S>,
{
    let (a, a_prime) = split_halves(real, seed)?;
    let model = fit(&a)?;
    let b = model.sample(a.len(), seed.wrapping_add(1))?;
    let b_prime = model.sample(a_prime.len(), seed.wrapping_add(2))?;
    Ok(AbabSplit { a, a_prime, b, b_prime })
}

/// What the predictors learn from a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    /// Predict a categorical metadata field from the zero-padded series.
    Classify { field: String },
    /// Predict the last `horizon` values of measurement `dim` from the
    /// preceding steps.
    Forecast { dim: usize, horizon: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorId {
    Logistic,
    Mlp,
    NearestCentroid,
    Majority,
    Ridge,
    Mean,
}

impl PredictorId {
    pub const CLASSIFIERS: [PredictorId; 4] =
        [PredictorId::Logistic, PredictorId::Mlp, PredictorId::NearestCentroid, PredictorId::Majority];
    pub const REGRESSORS: [PredictorId; 3] = [PredictorId::Ridge, PredictorId::Mlp, PredictorId::Mean];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictorId::Logistic => "logistic",
            PredictorId::Mlp => "mlp",
            PredictorId::NearestCentroid => "nearest_centroid",
            PredictorId::Majority => "majority",
            PredictorId::Ridge => "ridge",
            PredictorId::Mean => "mean",
        }
    }

    pub fn classifier(self, seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(match self {
            PredictorId::Logistic => Box::new(SoftmaxClassifier::logistic(seed)),
            PredictorId::Mlp => Box::new(SoftmaxClassifier::mlp(seed)),
            PredictorId::NearestCentroid => Box::new(NearestCentroid::default()),
            PredictorId::Majority => Box::new(Majority::default()),
            other => return Err(Error::Validation(format!("{} is not a classifier", other.as_str()))),
        })
    }

    pub fn regressor(self, seed: u64) -> Result<Box<dyn Regressor>> {
        Ok(match self {
            PredictorId::Ridge => Box::new(Ridge::new(1.0)),
            PredictorId::Mlp => Box::new(MlpRegressor::new(seed)),
            PredictorId::Mean => Box::new(MeanRegressor::default()),
            other => return Err(Error::Validation(format!("{} is not a regressor", other.as_str()))),
        })
    }
}

impl FromStr for PredictorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PredictorId::Logistic,
            PredictorId::Mlp,
            PredictorId::NearestCentroid,
            PredictorId::Majority,
            PredictorId::Ridge,
            PredictorId::Mean,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| Error::Validation(format!("unknown predictor {s:?}")))
    }
}

/// Plug-in slot for classification predictors.
pub trait Classifier {
    fn fit(&mut self, x: &Matrix, y: &[usize], classes: usize);
    fn predict(&self, x: &Matrix) -> Vec<usize>;
}

/// Plug-in slot for regression predictors.
pub trait Regressor {
    fn fit(&mut self, x: &Matrix, y: &Matrix);
    fn predict(&self, x: &Matrix) -> Matrix;
}

/// Column standardisation fitted on training features.
#[derive(Clone, Debug, Default)]
struct Scaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Scaler {
    fn fit(x: &Matrix) -> Self {
        let mean = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let std = x
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        out
    }
}

/// Softmax cross-entropy model: linear (multinomial logistic regression) or
/// with one hidden ReLU layer.
pub struct SoftmaxClassifier {
    hidden: Vec<usize>,
    steps: usize,
    lr: f64,
    l2: f64,
    seed: u64,
    scaler: Scaler,
    params: ParamSet,
    net: Option<Mlp>,
}

impl SoftmaxClassifier {
    pub fn logistic(seed: u64) -> Self {
        Self::with_hidden(Vec::new(), seed)
    }

    pub fn mlp(seed: u64) -> Self {
        Self::with_hidden(vec![64], seed)
    }

    fn with_hidden(hidden: Vec<usize>, seed: u64) -> Self {
        Self { hidden, steps: 300, lr: 0.01, l2: 1e-4, seed, scaler: Scaler::default(), params: ParamSet::new(), net: None }
    }
}

impl Classifier for SoftmaxClassifier {
    fn fit(&mut self, x: &Matrix, y: &[usize], classes: usize) {
        self.scaler = Scaler::fit(x);
        let xs = self.scaler.apply(x);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.params = ParamSet::new();
        let net = Mlp::new(&mut self.params, "clf", x.ncols(), &self.hidden, classes, Activation::Relu, &mut rng);
        let mut onehot = Array2::zeros((y.len(), classes));
        for (i, &c) in y.iter().enumerate() {
            onehot[[i, c]] = 1.0;
        }
        let mut adam = Adam::new(&self.params, self.lr, 0.9, 0.999);
        for _ in 0..self.steps {
            let tape = Tape::new();
            let p = self.params.bind(&tape);
            let probs = net.forward(&p, tape.leaf(xs.clone())).softmax();
            let ce = -(probs.add_scalar(1e-12).ln() * tape.leaf(onehot.clone())).sum_all().scale(1.0 / y.len() as f64);
            let penalty = p.iter().fold(tape.scalar(0.0), |acc, w| acc + w.square().sum_all());
            let loss = ce + penalty.scale(self.l2);
            let grads = tape.gradients(loss, &p);
            adam.step(&mut self.params, &grads);
        }
        self.net = Some(net);
    }

    fn predict(&self, x: &Matrix) -> Vec<usize> {
        let net = self.net.as_ref().expect("fit before predict");
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let logits = net.forward(&p, tape.leaf(self.scaler.apply(x))).value();
        logits.rows().into_iter().map(|r| argmax(r.iter().copied())).collect()
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values.enumerate().fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best }).0
}

#[derive(Default)]
pub struct NearestCentroid {
    scaler: Scaler,
    centroids: Vec<Option<Vec<f64>>>,
}

impl Classifier for NearestCentroid {
    fn fit(&mut self, x: &Matrix, y: &[usize], classes: usize) {
        self.scaler = Scaler::fit(x);
        let xs = self.scaler.apply(x);
        self.centroids = (0..classes)
            .map(|c| {
                let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
                (!rows.is_empty()).then(|| xs.select(Axis(0), &rows).mean_axis(Axis(0)).expect("rows").to_vec())
            })
            .collect();
    }

    fn predict(&self, x: &Matrix) -> Vec<usize> {
        let xs = self.scaler.apply(x);
        xs.rows()
            .into_iter()
            .map(|r| {
                argmax(self.centroids.iter().map(|c| match c {
                    Some(c) => -r.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
                    None => f64::NEG_INFINITY,
                }))
            })
            .collect()
    }
}

/// Predicts the most frequent training class; ties go to the lowest index.
#[derive(Default)]
pub struct Majority {
    class: usize,
}

impl Classifier for Majority {
    fn fit(&mut self, _x: &Matrix, y: &[usize], classes: usize) {
        let mut counts = vec![0usize; classes];
        for &c in y {
            counts[c] += 1;
        }
        self.class = argmax(counts.iter().map(|&c| c as f64));
    }

    fn predict(&self, x: &Matrix) -> Vec<usize> {
        vec![self.class; x.nrows()]
    }
}

/// Closed-form ridge regression on standardised features.
pub struct Ridge {
    alpha: f64,
    scaler: Scaler,
    weights: Matrix,
    intercept: Vec<f64>,
}

impl Ridge {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, scaler: Scaler::default(), weights: Array2::zeros((0, 0)), intercept: Vec::new() }
    }
}

impl Regressor for Ridge {
    fn fit(&mut self, x: &Matrix, y: &Matrix) {
        self.scaler = Scaler::fit(x);
        let xs = self.scaler.apply(x);
        let (n, d) = xs.dim();
        self.intercept = y.mean_axis(Axis(0)).expect("rows").to_vec();
        let xm = DMatrix::from_row_iterator(n, d, xs.iter().copied());
        let gram = xm.transpose() * &xm + DMatrix::identity(d, d) * self.alpha;
        let chol = gram.cholesky().expect("ridge system is positive definite");
        self.weights = Array2::zeros((d, y.ncols()));
        for j in 0..y.ncols() {
            let yc = DVector::from_iterator(n, y.column(j).iter().map(|v| v - self.intercept[j]));
            let w = chol.solve(&(xm.transpose() * yc));
            for (i, v) in w.iter().enumerate() {
                self.weights[[i, j]] = *v;
            }
        }
    }

    fn predict(&self, x: &Matrix) -> Matrix {
        let mut out = self.scaler.apply(x).dot(&self.weights);
        for mut row in out.rows_mut() {
            row.iter_mut().zip(&self.intercept).for_each(|(v, b)| *v += b);
        }
        out
    }
}

/// One hidden ReLU layer trained on squared error.
pub struct MlpRegressor {
    seed: u64,
    scaler: Scaler,
    target: Scaler,
    params: ParamSet,
    net: Option<Mlp>,
}

impl MlpRegressor {
    pub fn new(seed: u64) -> Self {
        Self { seed, scaler: Scaler::default(), target: Scaler::default(), params: ParamSet::new(), net: None }
    }
}

impl Regressor for MlpRegressor {
    fn fit(&mut self, x: &Matrix, y: &Matrix) {
        self.scaler = Scaler::fit(x);
        self.target = Scaler::fit(y);
        let xs = self.scaler.apply(x);
        let ys = self.target.apply(y);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.params = ParamSet::new();
        let net = Mlp::new(&mut self.params, "reg", x.ncols(), &[64], y.ncols(), Activation::Relu, &mut rng);
        let mut adam = Adam::new(&self.params, 0.01, 0.9, 0.999);
        for _ in 0..300 {
            let tape = Tape::new();
            let p = self.params.bind(&tape);
            let loss = (net.forward(&p, tape.leaf(xs.clone())) - tape.leaf(ys.clone())).square().mean_all();
            let grads = tape.gradients(loss, &p);
            adam.step(&mut self.params, &grads);
        }
        self.net = Some(net);
    }

    fn predict(&self, x: &Matrix) -> Matrix {
        let net = self.net.as_ref().expect("fit before predict");
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let mut out = net.forward(&p, tape.leaf(self.scaler.apply(x))).value().as_ref().clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.target.std[j] + self.target.mean[j]);
        }
        out
    }
}

/// Predicts the training mean of each output.
#[derive(Default)]
pub struct MeanRegressor {
    mean: Vec<f64>,
}

impl Regressor for MeanRegressor {
    fn fit(&mut self, _x: &Matrix, y: &Matrix) {
        self.mean = y.mean_axis(Axis(0)).expect("rows").to_vec();
    }

    fn predict(&self, x: &Matrix) -> Matrix {
        Array2::from_shape_fn((x.nrows(), self.mean.len()), |(_, j)| self.mean[j])
    }
}

/// `1 − Σ(y − f)² / Σ(y − ȳ)²`, with `ȳ` the per-column mean of `y`.
pub fn r_squared(y: &Matrix, pred: &Matrix) -> f64 {
    let mean = y.mean_axis(Axis(0)).expect("non-empty targets");
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (row, prow) in y.rows().into_iter().zip(pred.rows()) {
        for j in 0..row.len() {
            ss_res += (row[j] - prow[j]).powi(2);
            ss_tot += (row[j] - mean[j]).powi(2);
        }
    }
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64
}

/// Time-major flattening of all measurements, zero-padded to `width` steps.
fn flat_series(ds: &Dataset, width: usize, steps_of: impl Fn(usize) -> usize) -> Matrix {
    let k = ds.schema.measurement_fields.len();
    let mut x = Array2::zeros((ds.len(), width * k));
    for (i, smp) in ds.samples.iter().enumerate() {
        let t = steps_of(smp.len()).min(width);
        for step in 0..t {
            x.slice_mut(s![i, step * k..(step + 1) * k]).assign(&smp.measurements.row(step));
        }
    }
    x
}

fn class_labels(ds: &Dataset, field: &str) -> Result<(Vec<usize>, usize)> {
    let j = ds
        .schema
        .metadata_index(field)
        .ok_or_else(|| Error::Validation(format!("unknown metadata field {field:?}")))?;
    let spec = &ds.schema.metadata_fields[j];
    if spec.kind != FieldKind::Categorical {
        return Err(Error::Validation(format!("field {field:?} is not categorical")));
    }
    let labels = ds
        .samples
        .iter()
        .map(|s| match &s.metadata[j] {
            MetaValue::Category(c) => spec
                .category_index(c)
                .ok_or_else(|| Error::Validation(format!("category {c:?} not in field {field:?}"))),
            MetaValue::Number(_) => Err(Error::Validation(format!("field {field:?} holds a number"))),
        })
        .collect::<Result<_>>()?;
    Ok((labels, spec.categories.len()))
}

/// Forecast inputs and targets; samples no longer than the horizon are dropped.
fn forecast_rows(ds: &Dataset, dim: usize, horizon: usize) -> Result<(Matrix, Matrix)> {
    contract!(horizon >= 1, "forecast horizon must be >= 1");
    contract!(dim < ds.schema.measurement_fields.len(), "measurement {dim} does not exist");
    contract!(ds.schema.max_length > horizon, "horizon {horizon} leaves no input steps");
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].len() > horizon).collect();
    contract!(!keep.is_empty(), "no sample is longer than the horizon {horizon}");
    let sub = ds.subset(&keep);
    let x = flat_series(&sub, ds.schema.max_length - horizon, |len| len - horizon);
    let y = Array2::from_shape_fn((sub.len(), horizon), |(i, h)| {
        let m = &sub.samples[i].measurements;
        m[[m.nrows() - horizon + h, dim]]
    });
    Ok((x, y))
}

/// Fits `predictor` on `train` and scores it on `test`: accuracy for
/// classification, R² for forecasting.
pub fn predict_eval(train: &Dataset, test: &Dataset, task: &Task, predictor: PredictorId, seed: u64) -> Result<f64> {
    contract!(train.schema == test.schema, "train and test schemas differ");
    contract!(!train.is_empty() && !test.is_empty(), "train and test sets must be non-empty");
    match task {
        Task::Classify { field } => {
            let mut model = predictor.classifier(seed)?;
            let (y_train, classes) = class_labels(train, field)?;
            let (y_test, _) = class_labels(test, field)?;
            let width = train.schema.max_length;
            model.fit(&flat_series(train, width, |l| l), &y_train, classes);
            Ok(accuracy(&y_test, &model.predict(&flat_series(test, width, |l| l))))
        }
        Task::Forecast { dim, horizon } => {
            let mut model = predictor.regressor(seed)?;
            let (x_train, y_train) = forecast_rows(train, *dim, *horizon)?;
            let (x_test, y_test) = forecast_rows(test, *dim, *horizon)?;
            model.fit(&x_train, &y_train);
            Ok(r_squared(&y_test, &model.predict(&x_test)))
        }
    }
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn rank_correlation(real_scores: &[f64], synth_scores: &[f64]) -> Result<f64> {
    contract!(
        real_scores.len() == synth_scores.len(),
        "score vectors differ in length ({} vs {})",
        real_scores.len(),
        synth_scores.len()
    );
    contract!(real_scores.len() >= 2, "need at least two scores to rank");
    let a = average_ranks(real_scores);
    let b = average_ranks(synth_scores);
    crate::fidelity::pearson(&a, &b)
        .filter(|r| r.is_finite())
        .ok_or_else(|| Error::Numeric("rank correlation is undefined for constant scores".into()))
}

/// Where the train-on-synthetic predictors are tested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthTest {
    /// Train on `B`, test on the real hold-out `A′`.
    #[default]
    RealHoldout,
    /// Train on `B`, test on `B′`.
    SynthHoldout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamRow {
    pub predictor: PredictorId,
    pub train_real: f64,
    pub train_synth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub task: Task,
    pub pathway: SynthTest,
    pub rows: Vec<DownstreamRow>,
    /// Spearman ρ between the two score columns; `None` with fewer than two
    /// predictors or constant scores.
    pub spearman: Option<f64>,
    /// Whether every train-real score is at least its train-synth score.
    pub real_at_least_synth: bool,
}

/// Scores each predictor trained on `A` (tested on `A′`) and on `B`.
pub fn downstream_table(split: &AbabSplit, task: &Task, predictors: &[PredictorId], pathway: SynthTest, seed: u64) -> Result<DownstreamReport> {
    let synth_test = match pathway {
        SynthTest::RealHoldout => &split.a_prime,
        SynthTest::SynthHoldout => &split.b_prime,
    };
    let rows = predictors
        .iter()
        .map(|&p| {
            Ok(DownstreamRow {
                predictor: p,
                train_real: predict_eval(&split.a, &split.a_prime, task, p, seed)?,
                train_synth: predict_eval(&split.b, synth_test, task, p, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let real: Vec<f64> = rows.iter().map(|r| r.train_real).collect();
    let synth: Vec<f64> = rows.iter().map(|r| r.train_synth).collect();
    let spearman = rank_correlation(&real, &synth).ok();
    let real_at_least_synth = rows.iter().all(|r| r.train_real >= r.train_synth);
    Ok(DownstreamReport { task: task.clone(), pathway, rows, spearman, real_at_least_synth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SinusoidCorpus, CLASS_FIELD};
    use proptest::prelude::*;

    /// Spearman from the rank-difference formula; valid without ties.
    fn spearman_no_ties(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|x| 1.0 + v.iter().filter(|y| *y < x).count() as f64).collect()
        };
        let (ra, rb) = (rank(a), rank(b));
        let n = a.len() as f64;
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((rank_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((rank_correlation(&a, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((rank_correlation(&a, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(rank_correlation(&a, &a[..4]).is_err());
        assert!(rank_correlation(&a[..1], &a[..1]).is_err());
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        #[test]
        fn spearman_matches_rank_formula_and_is_monotone_invariant(
            pairs in prop::collection::hash_set((0i32..1000, 0i32..1000), 2..12)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64 + 0.001 * p.0 as f64).collect();
            let rho = rank_correlation(&a, &b);
            if let Ok(rho) = rho {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
                let distinct = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<std::collections::HashSet<_>>().len() == v.len();
                if distinct(&a) && distinct(&b) {
                    prop_assert!((rho - spearman_no_ties(&a, &b)).abs() < 1e-9);
                }
                let warped: Vec<f64> = b.iter().map(|x| (x / 100.0).exp() * 3.0 - 7.0).collect();
                prop_assert!((rank_correlation(&a, &warped).unwrap() - rho).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn halves_are_disjoint_and_seeded() {
        let ds = SinusoidCorpus { samples: 100, lengths: vec![5], ..Default::default() }.generate(0).unwrap();
        let (a, b) = split_halves(&ds, 3).unwrap();
        assert_eq!((a.len(), b.len()), (50, 50));
        for s in &a.samples {
            assert!(!b.samples.contains(s));
        }
        assert_eq!(split_halves(&ds, 3).unwrap().0, a);
        assert_ne!(split_halves(&ds, 4).unwrap().0, a);
    }

    #[test]
    fn r_squared_reference_points() {
        let y = ndarray::array![[1.0, 2.0], [3.0, 5.0], [4.0, 0.0]];
        assert_eq!(r_squared(&y, &y), 1.0);
        let mean = y.mean_axis(Axis(0)).unwrap();
        let flat = Array2::from_shape_fn(y.dim(), |(_, j)| mean[j]);
        assert!(r_squared(&y, &flat).abs() < 1e-12);
    }

    #[test]
    fn classifiers_on_the_sinusoid_corpus() {
        let ds = SinusoidCorpus { samples: 80, lengths: vec![14], class_b_fraction: 0.3, ..Default::default() }
            .generate(0)
            .unwrap();
        let task = Task::Classify { field: CLASS_FIELD.into() };
        // trained and tested on the same data the majority rule scores the top frequency
        assert!((predict_eval(&ds, &ds, &task, PredictorId::Majority, 0).unwrap() - 0.7).abs() < 1e-12);
        let (a, b) = split_halves(&ds, 0).unwrap();
        for p in [PredictorId::Logistic, PredictorId::Mlp, PredictorId::NearestCentroid] {
            assert_eq!(predict_eval(&a, &b, &task, p, 0).unwrap(), 1.0, "{p:?}");
        }
        assert!(matches!(predict_eval(&a, &b, &task, PredictorId::Ridge, 0), Err(Error::Validation(_))));
        assert!("svm".parse::<PredictorId>().is_err());
        assert_eq!("nearest_centroid".parse::<PredictorId>().unwrap(), PredictorId::NearestCentroid);
    }

    #[test]
    fn forecasting_scores() {
        let ds = SinusoidCorpus { samples: 80, lengths: vec![21], noise_std: 0.01, ..Default::default() }
            .generate(1)
            .unwrap();
        let (a, b) = split_halves(&ds, 0).unwrap();
        let task = Task::Forecast { dim: 0, horizon: 3 };
        let ridge = predict_eval(&a, &b, &task, PredictorId::Ridge, 0).unwrap();
        let mean = predict_eval(&a, &b, &task, PredictorId::Mean, 0).unwrap();
        assert!(ridge > 0.99, "ridge R² {ridge}");
        assert!(mean < 0.01, "mean R² {mean}");
        assert!(predict_eval(&a, &b, &task, PredictorId::Mlp, 0).unwrap() > 0.9);
    }

    #[test]
    fn table_reports_both_pathways() {
        let ds = SinusoidCorpus { samples: 40, lengths: vec![7], ..Default::default() }.generate(2).unwrap();
        let split = split_abab(
            &ds,
            |a| crate::baselines::HmmModel::fit(a, &crate::baselines::HmmConfig { states: 2, ..Default::default() }, 0),
            0,
        )
        .unwrap();
        assert_eq!((split.b.len(), split.b_prime.len()), (20, 20));
        let task = Task::Classify { field: CLASS_FIELD.into() };
        let preds = [PredictorId::Majority, PredictorId::NearestCentroid];
        for pathway in [SynthTest::RealHoldout, SynthTest::SynthHoldout] {
            let report = downstream_table(&split, &task, &preds, pathway, 0).unwrap();
            assert_eq!(report.rows.len(), 2);
            assert!(report.rows.iter().all(|r| (0.0..=1.0).contains(&r.train_synth)));
        }
    }
}
