//! Prediction matrices, ground truth, their file formats, and pruning.
//!
//! A prediction matrix holds one row per unlabeled sample and one column per
//! model; entry `(i, j)` is the class index model `j` predicted for sample `i`.
//!
//! CSV layout:
//!
//! ```text
//! #classes=3
//! sample_id,f1,f2
//! x1,0,1
//! x2,2,2
//! ```
//!
//! The `#classes=<C>` directive is optional; without it the class count is
//! one more than the largest label seen. JSON files carry the same content as
//! `{"model_names": [...], "sample_ids": [...], "num_classes": C, "labels": [[...], ...]}`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A row/column position inside an input file, used in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    /// Sample id when known, otherwise `line <n>`.
    pub row: String,
    pub column: Option<String>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}", self.row)?;
        if let Some(col) = &self.column {
            write!(f, ", column {col}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("{at}: {message}")]
    Parse { at: Location, message: String },
    #[error("missing header row")]
    MissingHeader,
    #[error("no samples")]
    Empty,
    #[error("need at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("duplicate model name {0:?}")]
    DuplicateModel(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateSample(String),
    #[error("empty name or id")]
    EmptyName,
    #[error("class count must be positive")]
    NoClasses,
    #[error("label {label} at sample {row}, model {column} is outside [0, {classes})")]
    LabelOutOfRange {
        row: usize,
        column: usize,
        label: u32,
        classes: u32,
    },
    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("ground truth is missing sample ids: {}", .0.join(", "))]
    MissingTruth(Vec<String>),
    #[error("every sample received the same prediction from all models; nothing discriminates the models")]
    NoDiscriminatingData,
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("CSV: {0}")]
    Csv(String),
}

fn parse_err(row: impl Into<String>, column: Option<&str>, message: impl Into<String>) -> MatrixError {
    MatrixError::Parse {
        at: Location {
            row: row.into(),
            column: column.map(str::to_owned),
        },
        message: message.into(),
    }
}

fn check_unique(names: &[String], dup: fn(String) -> MatrixError) -> Result<(), MatrixError> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if name.is_empty() {
            return Err(MatrixError::EmptyName);
        }
        if !seen.insert(name.as_str()) {
            return Err(dup(name.clone()));
        }
    }
    Ok(())
}

/// Predicted class indices of `n` models on `m` samples, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionMatrix {
    model_names: Vec<String>,
    sample_ids: Vec<String>,
    num_classes: u32,
    labels: Vec<u32>,
}

impl PredictionMatrix {
    pub fn new(
        model_names: Vec<String>,
        sample_ids: Vec<String>,
        num_classes: u32,
        labels: Vec<u32>,
    ) -> Result<Self, MatrixError> {
        let n = model_names.len();
        let m = sample_ids.len();
        if n < 2 {
            return Err(MatrixError::TooFewModels(n));
        }
        if m == 0 {
            return Err(MatrixError::Empty);
        }
        if num_classes == 0 {
            return Err(MatrixError::NoClasses);
        }
        if labels.len() != n * m {
            return Err(MatrixError::Shape {
                expected: n * m,
                got: labels.len(),
            });
        }
        check_unique(&model_names, MatrixError::DuplicateModel)?;
        check_unique(&sample_ids, MatrixError::DuplicateSample)?;
        if let Some(pos) = labels.iter().position(|&l| l >= num_classes) {
            return Err(MatrixError::LabelOutOfRange {
                row: pos / n,
                column: pos % n,
                label: labels[pos],
                classes: num_classes,
            });
        }
        Ok(Self {
            model_names,
            sample_ids,
            num_classes,
            labels,
        })
    }

    /// Builds a matrix with generated names `model_1..` and ids `x1..`.
    pub fn from_rows(rows: &[Vec<u32>], num_classes: u32) -> Result<Self, MatrixError> {
        let n = rows.first().map_or(0, Vec::len);
        let mut labels = Vec::with_capacity(rows.len() * n);
        for row in rows {
            if row.len() != n {
                return Err(MatrixError::Shape {
                    expected: n,
                    got: row.len(),
                });
            }
            labels.extend_from_slice(row);
        }
        let models = (1..=n).map(|j| format!("model_{j}")).collect();
        let samples = (1..=rows.len()).map(|i| format!("x{i}")).collect();
        Self::new(models, samples, num_classes, labels)
    }

    pub fn num_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn num_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Row-major label storage.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let n = self.num_models();
        &self.labels[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.labels.chunks_exact(self.num_models())
    }

    pub fn get(&self, sample: usize, model: usize) -> u32 {
        self.labels[sample * self.num_models() + model]
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, MatrixError> {
        let mut labels = Vec::with_capacity(rows.len() * self.num_models());
        let mut ids = Vec::with_capacity(rows.len());
        for &i in rows {
            labels.extend_from_slice(self.row(i));
            ids.push(self.sample_ids[i].clone());
        }
        Self::new(self.model_names.clone(), ids, self.num_classes, labels)
    }

    /// Reorders model columns: column `j` of the result is column `order[j]` of `self`.
    pub fn permute_models(&self, order: &[usize]) -> Result<Self, MatrixError> {
        let names = order.iter().map(|&j| self.model_names[j].clone()).collect();
        let labels = self.rows().flat_map(|row| order.iter().map(move |&j| row[j])).collect();
        Self::new(names, self.sample_ids.clone(), self.num_classes, labels)
    }

    pub fn from_json(text: &str) -> Result<Self, MatrixError> {
        let raw: MatrixJson = serde_json::from_str(text).map_err(|e| MatrixError::Json(e.to_string()))?;
        let n = raw.model_names.len();
        let mut labels = Vec::with_capacity(raw.labels.len() * n);
        for (i, row) in raw.labels.iter().enumerate() {
            if row.len() != n {
                let id = raw.sample_ids.get(i).cloned().unwrap_or_else(|| format!("#{}", i + 1));
                return Err(parse_err(id, None, format!("expected {n} labels, got {}", row.len())));
            }
            labels.extend_from_slice(row);
        }
        if raw.labels.len() != raw.sample_ids.len() {
            return Err(MatrixError::Shape {
                expected: raw.sample_ids.len(),
                got: raw.labels.len(),
            });
        }
        Self::new(raw.model_names, raw.sample_ids, raw.num_classes, labels)
    }

    pub fn to_json(&self) -> String {
        let raw = MatrixJson {
            model_names: self.model_names.clone(),
            sample_ids: self.sample_ids.clone(),
            num_classes: self.num_classes,
            labels: self.rows().map(<[u32]>::to_vec).collect(),
        };
        serde_json::to_string_pretty(&raw).expect("matrix serializes") + "\n"
    }

    /// CSV text with an explicit `#classes` directive and `\n` line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.labels.len() * 3 + 64);
        out.push_str(&format!("#classes={}\n", self.num_classes));
        out.push_str("sample_id");
        for name in &self.model_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (id, row) in self.sample_ids.iter().zip(self.rows()) {
            out.push_str(id);
            for l in row {
                out.push(',');
                out.push_str(&l.to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    model_names: Vec<String>,
    sample_ids: Vec<String>,
    num_classes: u32,
    labels: Vec<Vec<u32>>,
}

fn csv_records(text: &str) -> Result<Vec<(u64, csv::StringRecord)>, MatrixError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| MatrixError::Csv(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        // Skip blank lines.
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_label(raw: &str, row: &str, column: &str) -> Result<u32, MatrixError> {
    let raw = raw.trim();
    match raw.parse::<i64>() {
        Ok(v) if v < 0 => Err(parse_err(row, Some(column), format!("negative label {v}"))),
        Ok(v) if v > u32::MAX as i64 => Err(parse_err(row, Some(column), format!("label {v} too large"))),
        Ok(v) => Ok(v as u32),
        Err(_) => Err(parse_err(row, Some(column), format!("invalid label {raw:?}"))),
    }
}

/// Parses the prediction CSV format (see the module docs).
pub fn parse_predictions_csv(text: &str) -> Result<PredictionMatrix, MatrixError> {
    let records = csv_records(text)?;
    let mut it = records.into_iter().peekable();

    let mut declared: Option<u32> = None;
    if let Some((line, rec)) = it.peek() {
        if rec[0].trim_start().starts_with('#') {
            let directive = rec[0].trim();
            let value = directive
                .strip_prefix("#classes=")
                .ok_or_else(|| parse_err(format!("line {line}"), None, format!("unknown directive {directive:?}")))?;
            let c: u32 = value
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("line {line}"), None, format!("invalid class count {value:?}")))?;
            if c == 0 {
                return Err(MatrixError::NoClasses);
            }
            declared = Some(c);
            it.next();
        }
    }

    let (_, header) = it.next().ok_or(MatrixError::MissingHeader)?;
    let model_names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_owned()).collect();
    if model_names.len() < 2 {
        return Err(MatrixError::TooFewModels(model_names.len()));
    }
    check_unique(&model_names, MatrixError::DuplicateModel)?;
    let n = model_names.len();

    let mut sample_ids = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in it {
        let id = rec[0].trim().to_owned();
        let row_name = if id.is_empty() {
            format!("line {line}")
        } else {
            id.clone()
        };
        if id.is_empty() {
            return Err(parse_err(row_name, None, "empty sample id"));
        }
        if rec.len() - 1 != n {
            return Err(parse_err(
                row_name,
                None,
                format!("expected {n} labels, got {}", rec.len() - 1),
            ));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_err(row_name, None, format!("duplicate sample id {id:?}")));
        }
        for (j, raw) in rec.iter().skip(1).enumerate() {
            let label = parse_label(raw, &row_name, &model_names[j])?;
            if let Some(c) = declared {
                if label >= c {
                    return Err(parse_err(
                        row_name,
                        Some(&model_names[j]),
                        format!("label {label} out of range for {c} classes"),
                    ));
                }
            }
            labels.push(label);
        }
        sample_ids.push(id);
    }
    if sample_ids.is_empty() {
        return Err(MatrixError::Empty);
    }
    let num_classes = match declared {
        Some(c) => c,
        None => labels.iter().copied().max().unwrap_or(0) + 1,
    };
    PredictionMatrix::new(model_names, sample_ids, num_classes, labels)
}

/// Accepts either file format; JSON is recognized by a leading `{`.
pub fn parse_predictions(text: &str) -> Result<PredictionMatrix, MatrixError> {
    if text.trim_start().starts_with('{') {
        PredictionMatrix::from_json(text)
    } else {
        parse_predictions_csv(text)
    }
}

/// True labels keyed by sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    sample_ids: Vec<String>,
    labels: Vec<u32>,
    index: HashMap<String, usize>,
}

impl GroundTruth {
    pub fn new(sample_ids: Vec<String>, labels: Vec<u32>) -> Result<Self, MatrixError> {
        if sample_ids.len() != labels.len() {
            return Err(MatrixError::Shape {
                expected: sample_ids.len(),
                got: labels.len(),
            });
        }
        if sample_ids.is_empty() {
            return Err(MatrixError::Empty);
        }
        check_unique(&sample_ids, MatrixError::DuplicateSample)?;
        let index = sample_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self {
            sample_ids,
            labels,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_of(&self, sample_id: &str) -> Option<u32> {
        self.index.get(sample_id).map(|&i| self.labels[i])
    }

    /// True labels in the matrix's row order.
    pub fn align(&self, matrix: &PredictionMatrix) -> Result<Vec<u32>, MatrixError> {
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(matrix.num_samples());
        for id in matrix.sample_ids() {
            match self.label_of(id) {
                Some(l) => out.push(l),
                None => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(MatrixError::MissingTruth(missing));
        }
        if let Some(pos) = out.iter().position(|&l| l >= matrix.num_classes()) {
            return Err(parse_err(
                matrix.sample_ids()[pos].clone(),
                Some("label"),
                format!(
                    "true label {} out of range for {} classes",
                    out[pos],
                    matrix.num_classes()
                ),
            ));
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,label\n");
        for (id, l) in self.sample_ids.iter().zip(&self.labels) {
            out.push_str(&format!("{id},{l}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let raw = TruthJson {
            sample_ids: self.sample_ids.clone(),
            labels: self.labels.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("truth serializes") + "\n"
    }
}

#[derive(Serialize, Deserialize)]
struct TruthJson {
    sample_ids: Vec<String>,
    labels: Vec<u32>,
}

/// Parses `sample_id,label` CSV.
pub fn parse_ground_truth_csv(text: &str) -> Result<GroundTruth, MatrixError> {
    let records = csv_records(text)?;
    let mut it = records.into_iter();
    let (_, header) = it.next().ok_or(MatrixError::MissingHeader)?;
    if header.len() != 2 {
        return Err(parse_err(
            "header",
            None,
            format!("expected 2 columns, got {}", header.len()),
        ));
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in it {
        let id = rec[0].trim().to_owned();
        let row_name = if id.is_empty() {
            format!("line {line}")
        } else {
            id.clone()
        };
        if id.is_empty() {
            return Err(parse_err(row_name, None, "empty sample id"));
        }
        if rec.len() != 2 {
            return Err(parse_err(
                row_name,
                None,
                format!("expected 1 label, got {}", rec.len() - 1),
            ));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_err(row_name, None, format!("duplicate sample id {id:?}")));
        }
        labels.push(parse_label(&rec[1], &row_name, "label")?);
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(MatrixError::Empty);
    }
    GroundTruth::new(ids, labels)
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, MatrixError> {
    if text.trim_start().starts_with('{') {
        let raw: TruthJson = serde_json::from_str(text).map_err(|e| MatrixError::Json(e.to_string()))?;
        GroundTruth::new(raw.sample_ids, raw.labels)
    } else {
        parse_ground_truth_csv(text)
    }
}

/// The rows of a matrix on which at least two models disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedMatrix {
    inner: PredictionMatrix,
    origin_index: Vec<usize>,
    pruned_count: usize,
}

impl PrunedMatrix {
    pub fn matrix(&self) -> &PredictionMatrix {
        &self.inner
    }

    pub fn into_matrix(self) -> PredictionMatrix {
        self.inner
    }

    /// Source row index of each retained row, strictly increasing.
    pub fn origin_index(&self) -> &[usize] {
        &self.origin_index
    }

    pub fn pruned_count(&self) -> usize {
        self.pruned_count
    }
}

fn is_unanimous(row: &[u32]) -> bool {
    row.iter().all(|&l| l == row[0])
}

/// Drops every sample on which all models agree.
pub fn prune(matrix: &PredictionMatrix) -> Result<PrunedMatrix, MatrixError> {
    let keep: Vec<usize> = matrix
        .rows()
        .enumerate()
        .filter(|(_, row)| !is_unanimous(row))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(MatrixError::NoDiscriminatingData);
    }
    let pruned_count = matrix.num_samples() - keep.len();
    let inner = if pruned_count == 0 {
        matrix.clone()
    } else {
        matrix.select_rows(&keep)?
    };
    Ok(PrunedMatrix {
        inner,
        origin_index: keep,
        pruned_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_with_directive() {
        let m = parse_predictions_csv("#classes=3\nsample_id,f1,f2\nx1,0,1\nx2,2,2\n").unwrap();
        assert_eq!(m.num_samples(), 2);
        assert_eq!(m.num_models(), 2);
        assert_eq!(m.num_classes(), 3);
        assert_eq!(m.model_names(), ["f1", "f2"]);
        assert_eq!(m.row(1), [2, 2]);
    }

    #[test]
    fn infers_class_count_from_max_label() {
        let m = parse_predictions_csv("sample_id,f1,f2\r\nx1,0,1\r\nx2,2,2\r\n").unwrap();
        assert_eq!(m.num_classes(), 3);
    }

    #[test]
    fn ragged_row_names_the_row() {
        let err = parse_predictions_csv("sample_id,f1,f2\nx1,0,1,1\n").unwrap_err();
        assert_eq!(err.to_string(), "row x1: expected 2 labels, got 3");
    }

    #[test]
    fn rejects_bad_labels() {
        let err = parse_predictions_csv("sample_id,f1,f2\nx1,0,a\n").unwrap_err();
        assert_eq!(err.to_string(), "row x1, column f2: invalid label \"a\"");
        let err = parse_predictions_csv("sample_id,f1,f2\nx1,-1,0\n").unwrap_err();
        assert!(err.to_string().contains("column f1"), "{err}");
        let err = parse_predictions_csv("#classes=2\nsample_id,f1,f2\nx1,0,2\n").unwrap_err();
        assert_eq!(err.to_string(), "row x1, column f2: label 2 out of range for 2 classes");
    }

    #[test]
    fn rejects_structural_problems() {
        assert_eq!(
            parse_predictions_csv("sample_id,f1\nx1,0\n").unwrap_err(),
            MatrixError::TooFewModels(1)
        );
        assert_eq!(
            parse_predictions_csv("sample_id,f1,f1\nx1,0,1\n").unwrap_err(),
            MatrixError::DuplicateModel("f1".into())
        );
        assert_eq!(
            parse_predictions_csv("sample_id,f1,f2\n").unwrap_err(),
            MatrixError::Empty
        );
        let err = parse_predictions_csv("sample_id,f1,f2\nx1,0,1\nx1,1,1\n").unwrap_err();
        assert!(err.to_string().contains("duplicate sample id"), "{err}");
        assert_eq!(parse_predictions_csv("").unwrap_err(), MatrixError::MissingHeader);
    }

    #[test]
    fn json_is_accepted_wherever_csv_is() {
        let m = PredictionMatrix::from_rows(&[vec![0, 1], vec![2, 2]], 4).unwrap();
        let back = parse_predictions(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            parse_predictions(r#"{"model_names":["a","b"],"sample_ids":["x"],"num_classes":2,"labels":[[0,1,1]]}"#),
            Err(MatrixError::Parse { .. })
        ));
    }

    #[test]
    fn ground_truth_parsing() {
        let t = parse_ground_truth_csv("sample_id,label\nx1,0\nx2,2\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.label_of("x2"), Some(2));
        assert!(parse_ground_truth_csv("sample_id,label\nx1,0\nx1,1\n").is_err());
        assert!(parse_ground_truth_csv("sample_id,label\nx1,zero\n").is_err());
        assert_eq!(
            parse_ground_truth_csv("sample_id,label\n").unwrap_err().to_string(),
            "no samples"
        );
    }

    #[test]
    fn align_reports_missing_ids() {
        let m = PredictionMatrix::from_rows(&[vec![0, 1], vec![1, 1], vec![0, 0]], 2).unwrap();
        let t = GroundTruth::new(vec!["x2".into()], vec![1]).unwrap();
        assert_eq!(
            t.align(&m).unwrap_err(),
            MatrixError::MissingTruth(vec!["x1".into(), "x3".into()])
        );
    }

    #[test]
    fn prune_removes_the_unanimous_sample() {
        // Six samples, three models, three classes; only x6 is unanimous.
        let m = PredictionMatrix::from_rows(
            &[
                vec![0, 0, 1],
                vec![1, 2, 1],
                vec![2, 0, 2],
                vec![0, 1, 1],
                vec![1, 1, 2],
                vec![2, 2, 2],
            ],
            3,
        )
        .unwrap();
        let p = prune(&m).unwrap();
        assert_eq!(p.matrix().num_samples(), 5);
        assert_eq!(p.pruned_count(), 1);
        assert_eq!(p.origin_index(), [0, 1, 2, 3, 4]);
    }

    #[test]
    fn prune_all_unanimous_is_an_error() {
        let m = PredictionMatrix::from_rows(&[vec![1, 1], vec![0, 0]], 2).unwrap();
        assert_eq!(prune(&m).unwrap_err(), MatrixError::NoDiscriminatingData);
    }

    #[test]
    fn prune_without_unanimous_rows_is_identity() {
        let m = PredictionMatrix::from_rows(&[vec![1, 0], vec![0, 1]], 2).unwrap();
        let p = prune(&m).unwrap();
        assert_eq!(p.matrix(), &m);
        assert_eq!(p.pruned_count(), 0);
    }

    fn arb_matrix() -> impl Strategy<Value = PredictionMatrix> {
        (2usize..5, 1usize..12, 2u32..4).prop_flat_map(|(n, m, c)| {
            prop::collection::vec(prop::collection::vec(0..c, n), m)
                .prop_map(move |rows| PredictionMatrix::from_rows(&rows, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(m in arb_matrix()) {
            prop_assert_eq!(parse_predictions_csv(&m.to_csv()).unwrap(), m);
        }

        #[test]
        fn prune_is_idempotent_and_keeps_invariants(m in arb_matrix()) {
            if let Ok(p) = prune(&m) {
                prop_assert!(p.origin_index().windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(p.matrix().num_samples() + p.pruned_count(), m.num_samples());
                prop_assert!(p.matrix().rows().all(|r| !is_unanimous(r)));
                let again = prune(p.matrix()).unwrap();
                prop_assert_eq!(again.matrix(), p.matrix());
            }
        }

        #[test]
        fn prune_commutes_with_row_permutation(m in arb_matrix(), rot in 0usize..12) {
            let k = rot % m.num_samples();
            let order: Vec<usize> = (0..m.num_samples()).map(|i| (i + k) % m.num_samples()).collect();
            let permuted = m.select_rows(&order).unwrap();
            match (prune(&m), prune(&permuted)) {
                (Ok(a), Ok(b)) => {
                    let mut ids_a: Vec<_> = a.matrix().sample_ids().to_vec();
                    let mut ids_b: Vec<_> = b.matrix().sample_ids().to_vec();
                    // retained set equal, order follows the permutation
                    let expect: Vec<_> = order.iter().map(|&i| &m.sample_ids()[i])
                        .filter(|id| ids_a.contains(id)).cloned().collect();
                    prop_assert_eq!(&ids_b, &expect);
                    ids_a.sort();
                    ids_b.sort();
                    prop_assert_eq!(ids_a, ids_b);
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false, "prune disagreed under permutation"),
            }
        }
    }
}
