//! Dataset abstraction: samples made of static metadata plus a variable-length
//! multi-dimensional measurement series, and the on-disk directory format.
//!
//! A dataset directory holds three files:
//!
//! * `schema.json` – the [`DataSchema`];
//! * `attributes.csv` – `sample_id,<metadata names...>`, one row per sample;
//! * `features.csv` – `sample_id,step,<measurement names...>[,timestamp]`,
//!   sorted by `(sample_id, step)` with 0-based steps.
//!
//! Categorical measurement values are stored in memory as the category index
//! (as `f64`) and on disk as the category string.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Categorical,
    Numeric,
}

/// Target interval of a normalised numeric value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationRange {
    ZeroOne,
    NegOneOne,
}

impl NormalizationRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            NormalizationRange::ZeroOne => (0.0, 1.0),
            NormalizationRange::NegOneOne => (-1.0, 1.0),
        }
    }

    pub fn midpoint(self) -> f64 {
        let (lo, hi) = self.bounds();
        0.5 * (lo + hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationRange>,
}

impl FieldSpec {
    pub fn numeric(name: impl Into<String>, normalization: NormalizationRange) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Numeric,
            categories: Vec::new(),
            normalization: Some(normalization),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            normalization: None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.kind == FieldKind::Numeric
    }

    /// Normalisation range of a numeric field.
    pub fn range(&self) -> NormalizationRange {
        self.normalization.unwrap_or(NormalizationRange::ZeroOne)
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }

    fn validate(&self, problems: &mut Vec<String>) {
        match self.kind {
            FieldKind::Categorical => {
                if self.categories.is_empty() {
                    problems.push(format!("categorical field `{}` has no categories", self.name));
                }
                let mut seen = std::collections::HashSet::new();
                for c in &self.categories {
                    if !seen.insert(c) {
                        problems.push(format!("field `{}` repeats category `{c}`", self.name));
                    }
                }
            }
            FieldKind::Numeric => {
                if self.normalization.is_none() {
                    problems.push(format!("numeric field `{}` declares no normalization", self.name));
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampMode {
    None,
    EquallySpaced,
    Derived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    pub metadata_fields: Vec<FieldSpec>,
    pub measurement_fields: Vec<FieldSpec>,
    pub max_length: usize,
    pub batch_param: usize,
    pub timestamp_mode: TimestampMode,
}

impl DataSchema {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.measurement_fields.is_empty() {
            problems.push("at least one measurement field is required".to_string());
        }
        if self.max_length == 0 {
            problems.push("max_length must be positive".to_string());
        }
        if self.batch_param == 0 {
            problems.push("batch_param must be positive".to_string());
        }
        let mut names = std::collections::HashSet::new();
        for f in self.metadata_fields.iter().chain(&self.measurement_fields) {
            f.validate(&mut problems);
            if !names.insert(f.name.as_str()) {
                problems.push(format!("duplicate field name `{}`", f.name));
            }
            if f.name == "sample_id" || f.name == "step" || f.name == "timestamp" {
                problems.push(format!("field name `{}` is reserved", f.name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    /// Smallest multiple of the batch parameter that is at least `longest`.
    pub fn padded_length_for(&self, longest: usize) -> usize {
        let s = self.batch_param.max(1);
        longest.max(1).div_ceil(s) * s
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn metadata_index(&self, name: &str) -> Option<usize> {
        self.metadata_fields.iter().position(|f| f.name == name)
    }

    pub fn measurement_index(&self, name: &str) -> Option<usize> {
        self.measurement_fields.iter().position(|f| f.name == name)
    }
}

/// One raw metadata value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Number(f64),
    Category(String),
}

impl MetaValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            MetaValue::Number(x) => Some(*x),
            MetaValue::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            MetaValue::Category(s) => Some(s),
            MetaValue::Number(_) => None,
        }
    }
}

impl std::fmt::Display for MetaValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetaValue::Number(x) => write!(f, "{x}"),
            MetaValue::Category(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub metadata: Vec<MetaValue>,
    /// `T × K`; categorical columns hold the category index.
    pub measurements: Array2<f64>,
    pub timestamps: Option<Vec<f64>>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.measurements.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values of measurement dimension `k` over time.
    pub fn series(&self, k: usize) -> Vec<f64> {
        self.measurements.column(k).to_vec()
    }

    fn check(&self, schema: &DataSchema, problems: &mut Vec<String>, label: &str) {
        if self.metadata.len() != schema.metadata_fields.len() {
            problems.push(format!(
                "{label}: expected {} metadata values, found {}",
                schema.metadata_fields.len(),
                self.metadata.len()
            ));
        } else {
            for (value, field) in self.metadata.iter().zip(&schema.metadata_fields) {
                match (field.kind, value) {
                    (FieldKind::Numeric, MetaValue::Number(x)) if x.is_finite() => {}
                    (FieldKind::Numeric, _) => {
                        problems.push(format!("{label}: `{}` must be a finite number", field.name))
                    }
                    (FieldKind::Categorical, MetaValue::Category(c))
                        if field.category_index(c).is_some() => {}
                    (FieldKind::Categorical, other) => problems.push(format!(
                        "{label}: `{other}` is not a category of `{}`",
                        field.name
                    )),
                }
            }
        }
        let t = self.len();
        if t == 0 {
            problems.push(format!("{label}: sample has no records"));
        }
        if t > schema.max_length {
            problems.push(format!("{label}: length {t} exceeds max_length {}", schema.max_length));
        }
        if self.measurements.ncols() != schema.measurement_fields.len() {
            problems.push(format!(
                "{label}: expected {} measurement columns, found {}",
                schema.measurement_fields.len(),
                self.measurements.ncols()
            ));
        } else {
            for (k, field) in schema.measurement_fields.iter().enumerate() {
                for &x in self.measurements.column(k) {
                    let ok = match field.kind {
                        FieldKind::Numeric => x.is_finite(),
                        FieldKind::Categorical => {
                            x.fract() == 0.0 && x >= 0.0 && (x as usize) < field.categories.len()
                        }
                    };
                    if !ok {
                        problems.push(format!("{label}: invalid value {x} for `{}`", field.name));
                        break;
                    }
                }
            }
        }
        if let Some(ts) = &self.timestamps {
            if ts.len() != t {
                problems.push(format!("{label}: {} timestamps for {t} records", ts.len()));
            }
            if ts.iter().any(|x| !x.is_finite()) {
                problems.push(format!("{label}: non-finite timestamp"));
            }
            if ts.windows(2).any(|w| w[0] >= w[1]) {
                problems.push(format!("{label}: timestamps are not strictly increasing"));
            }
        } else if schema.timestamp_mode == TimestampMode::Derived {
            problems.push(format!("{label}: derived timestamp mode requires timestamps"));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: DataSchema,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: DataSchema, samples: Vec<Sample>) -> Result<Self> {
        let ds = Self { schema, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.samples.iter().map(Sample::len).collect()
    }

    pub fn max_observed_length(&self) -> usize {
        self.samples.iter().map(Sample::len).max().unwrap_or(0)
    }

    /// Reports every violation at once.
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let mut problems = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            s.check(&self.schema, &mut problems, &format!("sample {i}"));
        }
        let stamped = self.samples.iter().filter(|s| s.timestamps.is_some()).count();
        if stamped != 0 && stamped != self.samples.len() {
            problems.push("either all samples carry timestamps or none do".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    /// Dataset restricted to the given sample indices (in that order).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// SHA-256 over the saved text form; used to fingerprint run inputs.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.schema.hash().as_bytes());
        for s in &self.samples {
            for m in &s.metadata {
                hasher.update(m.to_string().as_bytes());
                hasher.update([0u8]);
            }
            for x in s.measurements.iter() {
                hasher.update(x.to_le_bytes());
            }
            if let Some(ts) = &s.timestamps {
                for x in ts {
                    hasher.update(x.to_le_bytes());
                }
            }
            hasher.update([0xffu8]);
        }
        hex::encode(hasher.finalize())
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Format(format!("missing file {}", path.display())),
        _ => Error::io(path, e),
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Format(format!("missing file {}", path.display())),
        _ => Error::io(path, e),
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("cannot parse `{text}` as a number ({what})")))
}

/// Reads and validates a dataset directory.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let schema: DataSchema = serde_json::from_str(&read_to_string(&root.join("schema.json"))?)?;
    schema.validate()?;

    let mut attr = csv_reader(&root.join("attributes.csv"))?;
    let header: Vec<String> = attr.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<String> = std::iter::once("sample_id".to_string())
        .chain(schema.metadata_fields.iter().map(|f| f.name.clone()))
        .collect();
    if header != expected {
        return Err(Error::Format(format!(
            "attributes.csv header {header:?} does not match schema {expected:?}"
        )));
    }
    let mut metadata: BTreeMap<u64, Vec<MetaValue>> = BTreeMap::new();
    for row in attr.records() {
        let row = row?;
        let id = row[0].trim().parse::<u64>().map_err(|_| {
            Error::Format(format!("sample_id `{}` is not a non-negative integer", &row[0]))
        })?;
        let mut values = Vec::with_capacity(schema.metadata_fields.len());
        for (field, text) in schema.metadata_fields.iter().zip(row.iter().skip(1)) {
            values.push(match field.kind {
                FieldKind::Numeric => MetaValue::Number(parse_f64(text, &field.name)?),
                FieldKind::Categorical => MetaValue::Category(text.to_string()),
            });
        }
        if metadata.insert(id, values).is_some() {
            return Err(Error::Validation(format!("duplicate sample_id {id} in attributes.csv")));
        }
    }

    let mut feat = csv_reader(&root.join("features.csv"))?;
    let header: Vec<String> = feat.headers()?.iter().map(str::to_string).collect();
    let mut expected: Vec<String> = ["sample_id", "step"].iter().map(|s| s.to_string()).collect();
    expected.extend(schema.measurement_fields.iter().map(|f| f.name.clone()));
    let has_timestamps = match header.len().checked_sub(expected.len()) {
        Some(0) if header == expected => false,
        Some(1) if header[..expected.len()] == expected[..] && header.last().unwrap() == "timestamp" => {
            true
        }
        _ => {
            return Err(Error::Format(format!(
                "features.csv header {header:?} does not match schema {expected:?}[,timestamp]"
            )))
        }
    };
    let k = schema.measurement_fields.len();
    let mut rows: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in feat.records() {
        let row = row?;
        let id = row[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Format(format!("bad sample_id `{}` in features.csv", &row[0])))?;
        let step = row[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad step `{}` in features.csv", &row[1])))?;
        let entry = rows.entry(id).or_default();
        if step != entry.0.len() / k.max(1) {
            return Err(Error::Validation(format!(
                "sample {id}: step {step} out of order (expected {})",
                entry.0.len() / k.max(1)
            )));
        }
        for (field, text) in schema.measurement_fields.iter().zip(row.iter().skip(2)) {
            let value = match field.kind {
                FieldKind::Numeric => parse_f64(text, &field.name)?,
                FieldKind::Categorical => field.category_index(text).ok_or_else(|| {
                    Error::Validation(format!(
                        "sample {id}: `{text}` is not a category of `{}`",
                        field.name
                    ))
                })? as f64,
            };
            entry.0.push(value);
        }
        if has_timestamps {
            entry.1.push(parse_f64(&row[k + 2], "timestamp")?);
        }
    }
    if let Some(orphan) = rows.keys().find(|id| !metadata.contains_key(id)) {
        return Err(Error::Validation(format!(
            "features.csv references sample {orphan} missing from attributes.csv"
        )));
    }

    let mut samples = Vec::with_capacity(metadata.len());
    for (id, meta) in metadata {
        let (values, stamps) = rows.remove(&id).unwrap_or_default();
        let t = values.len() / k.max(1);
        let measurements = Array2::from_shape_vec((t, k), values)
            .map_err(|e| Error::Format(format!("sample {id}: {e}")))?;
        samples.push(Sample {
            metadata: meta,
            measurements,
            timestamps: has_timestamps.then_some(stamps),
        });
    }
    Dataset::new(schema, samples)
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Writes `ds` to `root` (created if missing).
pub fn save_dataset(ds: &Dataset, root: impl AsRef<Path>) -> Result<()> {
    ds.validate()?;
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let schema_path = root.join("schema.json");
    fs::write(&schema_path, serde_json::to_string_pretty(&ds.schema)?)
        .map_err(|e| Error::io(&schema_path, e))?;

    let attr_path = root.join("attributes.csv");
    let mut attr = csv::Writer::from_path(&attr_path).map_err(write_err(&attr_path))?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(ds.schema.metadata_fields.iter().map(|f| f.name.clone()));
    attr.write_record(&header).map_err(write_err(&attr_path))?;
    for (i, s) in ds.samples.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(s.metadata.iter().map(MetaValue::to_string));
        attr.write_record(&rec).map_err(write_err(&attr_path))?;
    }
    attr.flush().map_err(|e| Error::io(&attr_path, e))?;

    let feat_path = root.join("features.csv");
    let mut feat = csv::Writer::from_path(&feat_path).map_err(write_err(&feat_path))?;
    let stamped = ds.samples.first().is_some_and(|s| s.timestamps.is_some());
    let mut header = vec!["sample_id".to_string(), "step".to_string()];
    header.extend(ds.schema.measurement_fields.iter().map(|f| f.name.clone()));
    if stamped {
        header.push("timestamp".to_string());
    }
    feat.write_record(&header).map_err(write_err(&feat_path))?;
    for (i, s) in ds.samples.iter().enumerate() {
        for (j, row) in s.measurements.rows().into_iter().enumerate() {
            let mut rec = vec![i.to_string(), j.to_string()];
            for (x, field) in row.iter().zip(&ds.schema.measurement_fields) {
                rec.push(match field.kind {
                    FieldKind::Numeric => x.to_string(),
                    FieldKind::Categorical => field.categories[*x as usize].clone(),
                });
            }
            if let Some(ts) = &s.timestamps {
                rec.push(ts[j].to_string());
            }
            feat.write_record(&rec).map_err(write_err(&feat_path))?;
        }
    }
    feat.flush().map_err(|e| Error::io(&feat_path, e))?;
    Ok(())
}

/// Replaces raw timestamps by a `start_time` metadata field and an
/// `interarrival` measurement (`t[j+1] - t[j]`, and 0 at the last step).
pub fn timestamp_transform(ds: &Dataset) -> Result<Dataset> {
    contract!(
        ds.schema.timestamp_mode == TimestampMode::Derived,
        "timestamp_transform requires timestamp_mode = derived, found {:?}",
        ds.schema.timestamp_mode
    );
    let mut schema = ds.schema.clone();
    schema.metadata_fields.push(FieldSpec::numeric("start_time", NormalizationRange::ZeroOne));
    schema.measurement_fields.push(FieldSpec::numeric("interarrival", NormalizationRange::ZeroOne));
    schema.timestamp_mode = TimestampMode::None;
    let mut samples = Vec::with_capacity(ds.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let ts = s
            .timestamps
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("sample {i} carries no timestamps")))?;
        let t = s.len();
        let k = s.measurements.ncols();
        let mut meas = Array2::zeros((t, k + 1));
        meas.slice_mut(ndarray::s![.., ..k]).assign(&s.measurements);
        for j in 0..t.saturating_sub(1) {
            meas[[j, k]] = ts[j + 1] - ts[j];
        }
        let mut metadata = s.metadata.clone();
        metadata.push(MetaValue::Number(ts[0]));
        samples.push(Sample { metadata, measurements: meas, timestamps: None });
    }
    Dataset::new(schema, samples)
}
