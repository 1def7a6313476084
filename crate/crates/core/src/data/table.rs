//! Comma-separated numeric tables with one integer label column.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use faer::Mat;

use super::{Dataset, Split};
use crate::error::{ElmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    #[default]
    Last,
}

impl FromStr for LabelColumn {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(LabelColumn::Last),
            _ => s
                .parse()
                .map(LabelColumn::Index)
                .map_err(|_| ElmError::invalid(format!("label column must be an index or \"last\", got {s:?}"))),
        }
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Last => f.write_str("last"),
        }
    }
}

/// Parsed table before labels are remapped.
struct RawTable {
    features: Vec<f64>,
    raw_labels: Vec<i64>,
    width: usize,
}

fn location(line: u64, column: usize) -> String {
    format!("line {line}, column {}", column + 1)
}

fn read_table(path: &Path, label_column: LabelColumn, has_header: bool) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => ElmError::io(path, io),
            other => ElmError::format(path, "start", format!("{other:?}")),
        })?;
    let mut table = RawTable { features: Vec::new(), raw_labels: Vec::new(), width: 0 };
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let at = e.position().map_or_else(|| "unknown line".to_owned(), |p| format!("line {}", p.line()));
            ElmError::format(path, at, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if table.width == 0 {
            if record.len() < 2 {
                return Err(ElmError::format(path, location(line, 0), "need at least one feature and a label"));
            }
            table.width = record.len();
        } else if record.len() != table.width {
            return Err(ElmError::format(
                path,
                location(line, record.len().min(table.width)),
                format!("row has {} fields, expected {}", record.len(), table.width),
            ));
        }
        let label_at = match label_column {
            LabelColumn::Last => table.width - 1,
            LabelColumn::Index(i) if i < table.width => i,
            LabelColumn::Index(i) => {
                return Err(ElmError::invalid(format!("label column {i} but rows have {} fields", table.width)))
            }
        };
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| ElmError::format(path, location(line, c), format!("not a finite number: {cell:?}")))?;
            if c == label_at {
                if value.fract() != 0.0 || value.abs() > 2f64.powi(53) {
                    return Err(ElmError::format(path, location(line, c), format!("label is not an integer: {cell:?}")));
                }
                table.raw_labels.push(value as i64);
            } else {
                table.features.push(value);
            }
        }
    }
    if table.raw_labels.is_empty() {
        return Err(ElmError::format(path, "end of file", "no data rows"));
    }
    Ok(table)
}

fn into_dataset(table: RawTable, remap: &BTreeMap<i64, usize>, name: String, split: Split) -> Result<Dataset> {
    let (d, n) = (table.width - 1, table.raw_labels.len());
    let features = Mat::from_fn(d, n, |i, j| table.features[j * d + i]);
    let labels = table.raw_labels.iter().map(|l| remap[l]).collect();
    Dataset::new(features, labels, remap.len(), name, split)
}

fn label_map<'a>(labels: impl Iterator<Item = &'a i64>) -> BTreeMap<i64, usize> {
    let mut map: BTreeMap<i64, usize> = labels.map(|&l| (l, 0)).collect();
    for (k, v) in map.values_mut().enumerate() {
        *v = k;
    }
    map
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "csv".to_owned(), |s| s.to_string_lossy().into_owned())
}

/// Reads a table whose rows are samples. Distinct label values are mapped in
/// increasing order onto `0..c`.
pub fn load_csv(path: impl AsRef<Path>, label_column: LabelColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path, label_column, has_header)?;
    let remap = label_map(table.raw_labels.iter());
    into_dataset(table, &remap, stem(path), Split::Train)
}

/// Reads a train and a test table with one label mapping built from both.
pub fn load_csv_pair(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    label_column: LabelColumn,
    has_header: bool,
) -> Result<(Dataset, Dataset)> {
    let (train_path, test_path) = (train_path.as_ref(), test_path.as_ref());
    let train = read_table(train_path, label_column, has_header)?;
    let test = read_table(test_path, label_column, has_header)?;
    if train.width != test.width {
        return Err(ElmError::InvalidData(format!(
            "{} has {} columns, {} has {}",
            train_path.display(),
            train.width,
            test_path.display(),
            test.width
        )));
    }
    let remap = label_map(train.raw_labels.iter().chain(&test.raw_labels));
    Ok((
        into_dataset(train, &remap, stem(train_path), Split::Train)?,
        into_dataset(test, &remap, stem(test_path), Split::Test)?,
    ))
}

/// Writes one row per sample, features first and the class id last.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => ElmError::io(path, io),
        other => ElmError::InvalidData(format!("{other:?}")),
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    let d = data.input_dim();
    if header {
        let names = (0..d).map(|i| format!("x{i}")).chain(["label".to_owned()]);
        writer.write_record(names).map_err(to_err)?;
    }
    let x = data.features();
    for (j, label) in data.labels().iter().enumerate() {
        // `{}` on f64 prints the shortest string that parses back exactly
        let row = (0..d).map(|i| x[(i, j)].to_string()).chain([label.to_string()]);
        writer.write_record(row).map_err(to_err)?;
    }
    writer.flush().map_err(|e| ElmError::io(path, e))
}
