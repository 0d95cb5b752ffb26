//! Loading, cleaning, splitting and standardizing tabular intrusion datasets
//! (NSL-KDD, UNSW-NB15, CIC-IDS-2017 CSV exports).
//!
//! The pipeline is `load_csv` → [`preprocess`] → [`split`] (or predefined
//! train/test files) → [`Standardizer::fit`] / [`Standardizer::apply`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no rows")]
    NoRows,
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("line {line}: column {column:?}: cannot parse {value:?} as a number")]
    BadNumber { line: u64, column: String, value: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("no feature columns left after dropping")]
    NoFeatures,
    #[error("no rows left after removing rows with missing values")]
    NoRowsRemaining,
    #[error("split with test fraction {fraction} of {n} rows leaves an empty side")]
    EmptySplit { fraction: f64, n: usize },
    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("label map line {line}: {message}")]
    LabelMap { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// How column names and kinds are resolved when reading a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    /// Names and kinds given up front. With `has_header` the first line is
    /// read only to check its width.
    Explicit { columns: Vec<Column>, has_header: bool },
    /// Names come from the header row: `label` is the label column, names in
    /// `categorical` are categorical, every other column is numeric.
    FromHeader { label: String, categorical: Vec<String> },
}

/// Column names of the NSL-KDD `KDDTrain+.txt` / `KDDTest+.txt` files, which
/// carry no header row.
pub const NSL_KDD_COLUMNS: [&str; 43] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
    "label",
    "difficulty",
];

/// Columns removed before training on NSL-KDD: the three categorical
/// connection descriptors and the per-record difficulty score.
pub const NSL_KDD_DROP: [&str; 4] = ["protocol_type", "service", "flag", "difficulty"];

/// Columns removed before training on UNSW-NB15. `label` is the binary
/// attack indicator and would leak the target; `attack_cat` is the label.
pub const UNSW_NB15_DROP: [&str; 5] = ["id", "proto", "service", "state", "label"];

impl Schema {
    pub fn nsl_kdd() -> Self {
        let columns = NSL_KDD_COLUMNS
            .iter()
            .map(|&name| {
                let kind = match name {
                    "protocol_type" | "service" | "flag" => ColumnKind::Categorical,
                    "label" => ColumnKind::Label,
                    _ => ColumnKind::Numeric,
                };
                Column::new(name, kind)
            })
            .collect();
        Schema::Explicit {
            columns,
            has_header: false,
        }
    }

    pub fn unsw_nb15() -> Self {
        Schema::FromHeader {
            label: "attack_cat".into(),
            categorical: vec!["proto".into(), "service".into(), "state".into()],
        }
    }

    fn resolve(&self, header: Option<&[String]>) -> Result<Vec<Column>, TabularError> {
        let columns = match self {
            Schema::Explicit { columns, .. } => columns.clone(),
            Schema::FromHeader { label, categorical } => {
                let header = header.ok_or_else(|| TabularError::Schema("header row required".into()))?;
                header
                    .iter()
                    .map(|name| {
                        let kind = if name == label {
                            ColumnKind::Label
                        } else if categorical.iter().any(|c| c == name) {
                            ColumnKind::Categorical
                        } else {
                            ColumnKind::Numeric
                        };
                        Column::new(name.clone(), kind)
                    })
                    .collect()
            }
        };
        let labels = columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if labels != 1 {
            return Err(TabularError::Schema(format!(
                "exactly one label column required, found {labels}"
            )));
        }
        Ok(columns)
    }

    fn has_header(&self) -> bool {
        match self {
            Schema::Explicit { has_header, .. } => *has_header,
            Schema::FromHeader { .. } => true,
        }
    }
}

/// A raw cell. Numeric columns hold `Num`, other kinds hold `Text`; empty
/// cells and `?` are `Missing` in any column.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(Box<str>),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    /// Builds a table, checking the row-width and single-label invariants.
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<Cell>>) -> Result<Self, TabularError> {
        let labels = columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if labels != 1 {
            return Err(TabularError::Schema(format!(
                "exactly one label column required, found {labels}"
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(TabularError::RaggedRow {
                    line: i as u64 + 1,
                    expected: columns.len(),
                    found: r.len(),
                });
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn label_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.kind == ColumnKind::Label)
            .expect("table invariant: one label column")
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Table, TabularError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TabularError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(BufReader::new(file), schema)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Table, TabularError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let mut header = None;
    if schema.has_header() {
        match records.next() {
            Some(rec) => header = Some(rec?.iter().map(str::to_string).collect::<Vec<_>>()),
            None => return Err(TabularError::NoRows),
        }
    }
    let columns = schema.resolve(header.as_deref())?;
    if let Some(h) = &header {
        if h.len() != columns.len() {
            return Err(TabularError::RaggedRow {
                line: 1,
                expected: columns.len(),
                found: h.len(),
            });
        }
    }

    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != columns.len() {
            return Err(TabularError::RaggedRow {
                line,
                expected: columns.len(),
                found: rec.len(),
            });
        }
        let mut row = Vec::with_capacity(columns.len());
        for (value, col) in rec.iter().zip(&columns) {
            let cell = if value.is_empty() || value == "?" {
                Cell::Missing
            } else if col.kind == ColumnKind::Numeric {
                match value.parse::<f64>() {
                    Ok(v) => Cell::Num(v),
                    Err(_) => {
                        return Err(TabularError::BadNumber {
                            line,
                            column: col.name.clone(),
                            value: value.to_string(),
                        })
                    }
                }
            } else {
                Cell::Text(value.into())
            };
            row.push(cell);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(TabularError::NoRows);
    }
    Ok(Table { columns, rows })
}

/// Optional `raw_label,category` mapping applied to labels before encoding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    map: HashMap<String, String>,
}

impl LabelMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TabularError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| TabularError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(BufReader::new(file))
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self, TabularError> {
        let mut map = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TabularError::LabelMap {
                line: i + 1,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (raw, cat) = line.split_once(',').ok_or_else(|| TabularError::LabelMap {
                line: i + 1,
                message: "expected raw_label,category".into(),
            })?;
            map.insert(raw.trim().to_string(), cat.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn insert(&mut self, raw: impl Into<String>, category: impl Into<String>) {
        self.map.insert(raw.into(), category.into());
    }

    /// Category for `raw`, or `raw` itself when unmapped.
    pub fn map<'a>(&'a self, raw: &'a str) -> &'a str {
        self.map.get(raw).map_or(raw, String::as_str)
    }
}

/// Model-ready data: `n x d` features, class indices, class names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Checks the invariants: matching lengths, labels in range, finite features.
    pub fn new(
        x: Matrix,
        y: Vec<usize>,
        classes: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self, TabularError> {
        if x.rows() != y.len() {
            return Err(TabularError::Dimension {
                expected: x.rows(),
                found: y.len(),
            });
        }
        if x.cols() != feature_names.len() && x.rows() > 0 {
            return Err(TabularError::Dimension {
                expected: feature_names.len(),
                found: x.cols(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes.len()) {
            return Err(TabularError::Schema(format!(
                "label index {bad} out of range for {} classes",
                classes.len()
            )));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(TabularError::Schema("non-finite feature value".into()));
        }
        Ok(Self {
            x,
            y,
            classes,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    pub drop: Vec<String>,
    pub label_map: Option<LabelMap>,
    /// Classes to seed the encoding with, so a test file encodes against the
    /// training class list. Labels not listed are appended on first appearance.
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub dataset: Dataset,
    /// Rows removed because a surviving cell was missing or non-finite.
    pub dropped_rows: usize,
    /// Categorical columns removed because they were not in the drop list.
    pub removed_categorical: Vec<String>,
}

/// Drops the named columns, removes remaining categorical columns, encodes
/// labels by first appearance and removes rows with missing cells.
pub fn preprocess(table: &Table, drop: &[&str]) -> Result<Preprocessed, TabularError> {
    preprocess_with(
        table,
        &PreprocessOptions {
            drop: drop.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        },
    )
}

pub fn preprocess_with(table: &Table, opts: &PreprocessOptions) -> Result<Preprocessed, TabularError> {
    let label_idx = table.label_index();
    for name in &opts.drop {
        match table.columns.iter().position(|c| &c.name == name) {
            None => return Err(TabularError::UnknownColumn(name.clone())),
            Some(i) if i == label_idx => {
                return Err(TabularError::Schema(format!("cannot drop the label column {name:?}")))
            }
            Some(_) => {}
        }
    }

    let mut features = Vec::new();
    let mut removed_categorical = Vec::new();
    for (i, col) in table.columns.iter().enumerate() {
        if opts.drop.iter().any(|d| d == &col.name) {
            continue;
        }
        match col.kind {
            ColumnKind::Numeric => features.push(i),
            ColumnKind::Categorical => {
                log::warn!("removing categorical column {:?} (no encoding)", col.name);
                removed_categorical.push(col.name.clone());
            }
            ColumnKind::Label => {}
        }
    }
    if features.is_empty() {
        return Err(TabularError::NoFeatures);
    }

    let mut classes = opts.classes.clone();
    let mut class_index: HashMap<String, usize> = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let mut data = Vec::with_capacity(table.rows.len() * features.len());
    let mut y = Vec::with_capacity(table.rows.len());
    let mut dropped_rows = 0;
    'rows: for row in &table.rows {
        let label = match &row[label_idx] {
            Cell::Text(t) => t.as_ref(),
            // A numeric-looking label is kept as text by load_csv, so anything
            // else here is a missing label.
            _ => {
                dropped_rows += 1;
                continue;
            }
        };
        let start = data.len();
        for &j in &features {
            match row[j] {
                Cell::Num(v) if v.is_finite() => data.push(v),
                _ => {
                    data.truncate(start);
                    dropped_rows += 1;
                    continue 'rows;
                }
            }
        }
        let label = opts.label_map.as_ref().map_or(label, |m| m.map(label));
        let next = classes.len();
        let idx = *class_index.entry(label.to_string()).or_insert_with(|| {
            classes.push(label.to_string());
            next
        });
        y.push(idx);
    }
    if y.is_empty() {
        return Err(TabularError::NoRowsRemaining);
    }
    if dropped_rows > 0 {
        log::info!("removed {dropped_rows} rows with missing values");
    }
    let feature_names = features
        .iter()
        .map(|&j| table.columns[j].name.clone())
        .collect::<Vec<_>>();
    let x = Matrix::new(y.len(), features.len(), data).expect("row widths are uniform");
    Ok(Preprocessed {
        dataset: Dataset {
            x,
            y,
            classes,
            feature_names,
        },
        dropped_rows,
        removed_categorical,
    })
}

/// Seeded shuffled partition into `(train, test)` with
/// `|test| = round(n * test_fraction)`.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), TabularError> {
    let n = ds.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if !(test_fraction > 0.0 && test_fraction < 1.0) || n < 2 || n_test == 0 || n_test >= n {
        return Err(TabularError::EmptySplit {
            fraction: test_fraction,
            n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let (test_idx, train_idx) = idx.split_at(n_test);
    Ok((ds.subset(train_idx), ds.subset(test_idx)))
}

/// Per-column z-score transform fit on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; `0` marks a constant column.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self, TabularError> {
        if x.is_empty() {
            return Err(TabularError::NoRows);
        }
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] == 0.0
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix, TabularError> {
        if x.cols() != self.dim() {
            return Err(TabularError::Dimension {
                expected: self.dim(),
                found: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.transform_in_place(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>, TabularError> {
        if row.len() != self.dim() {
            return Err(TabularError::Dimension {
                expected: self.dim(),
                found: row.len(),
            });
        }
        let mut out = row.to_vec();
        self.transform_in_place(&mut out);
        Ok(out)
    }

    fn transform_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
        }
    }
}
