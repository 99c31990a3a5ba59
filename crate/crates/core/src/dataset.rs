//! Tabular input, binarization into threshold indicator columns, and
//! equivalence classes of identical binarized rows.
//!
//! Column orientation: bit `i` of a column for `(feature, θ)` is set iff
//! `x[i][feature] <= θ`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::support::SupportSet;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no samples")]
    NoSamples,
    #[error("no feature columns (need at least one feature plus the label)")]
    NoFeatures,
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: missing value")]
    Missing { row: usize, column: usize },
    #[error("row {row}, column {column}: non-numeric value {value:?}")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row}, column {column}: non-finite value {value:?}")]
    NonFinite { row: usize, column: usize, value: String },
    #[error("row {row}: label outside {{0,1}}: {value:?}")]
    Label { row: usize, value: String },
    #[error("feature index {feature} out of range (dataset has {n_features} features)")]
    FeatureOutOfRange { feature: usize, n_features: usize },
    #[error("duplicate threshold ({feature}, {threshold})")]
    DuplicateThreshold { feature: usize, threshold: f64 },
    #[error("invalid threshold ({feature}, {threshold}): must be finite")]
    InvalidThreshold { feature: usize, threshold: f64 },
    #[error("dataset shape mismatch: {0}")]
    Shape(String),
    #[error("column {column}: header {header:?} is not of the form feature<idx>≤<threshold>")]
    BinaryHeader { column: usize, header: String },
    #[error("row {row}, column {column}: expected 0 or 1, found {value:?}")]
    NotBinary { row: usize, column: usize, value: String },
}

/// Real-valued features with binary labels. Rows are stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    values: Vec<f64>,
    n_samples: usize,
    n_features: usize,
    feature_names: Vec<String>,
    labels: Vec<u8>,
}

impl RawDataset {
    pub fn new(rows: Vec<Vec<f64>>, feature_names: Vec<String>, labels: Vec<u8>) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::NoSamples);
        }
        let m = feature_names.len();
        if m == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if labels.len() != rows.len() {
            return Err(DatasetError::Shape(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(DatasetError::Ragged {
                    row: i + 1,
                    expected: m,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        row: i + 1,
                        column: j + 1,
                        value: v.to_string(),
                    });
                }
            }
            values.extend_from_slice(row);
        }
        for (i, &y) in labels.iter().enumerate() {
            if y > 1 {
                return Err(DatasetError::Label {
                    row: i + 1,
                    value: y.to_string(),
                });
            }
        }
        Ok(RawDataset {
            values,
            n_samples: rows.len(),
            n_features: m,
            feature_names,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |i| self.value(i, j))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks(self.n_features)
    }

    /// Sorted distinct values of feature `j`.
    pub fn unique_values(&self, j: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.column(j).collect();
        // partial_cmp/== so that -0.0 and 0.0 collapse into one value
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        v.dedup_by(|a, b| a == b);
        v
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<RawDataset, DatasetError> {
        let rows = indices.iter().map(|&i| self.row(i).to_vec()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        RawDataset::new(rows, self.feature_names.clone(), labels)
    }
}

/// Reads a CSV with a header row; the last column is the 0/1 label.
///
/// Row numbers in errors count data rows from 1; column numbers count from 1.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<RawDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 {
        return Err(DatasetError::NoFeatures);
    }
    let m = header.len() - 1;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != header.len() {
            return Err(DatasetError::Ragged {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut values = Vec::with_capacity(m);
        for (j, cell) in record.iter().take(m).enumerate() {
            values.push(parse_cell(cell, row, j + 1)?);
        }
        let label = match &record[m] {
            "0" => 0,
            "1" => 1,
            "" => return Err(DatasetError::Missing { row, column: m + 1 }),
            other => {
                return Err(DatasetError::Label {
                    row,
                    value: other.to_owned(),
                })
            }
        };
        rows.push(values);
        labels.push(label);
    }
    let mut names = header;
    names.pop();
    RawDataset::new(rows, names, labels)
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64, DatasetError> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Err(DatasetError::Missing { row, column });
    }
    let v: f64 = cell.parse().map_err(|_| DatasetError::NonNumeric {
        row,
        column,
        value: cell.to_owned(),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::NonFinite {
            row,
            column,
            value: cell.to_owned(),
        });
    }
    Ok(v)
}

/// Split point between two consecutive distinct values.
///
/// Falls back to `lo` when the halfway value rounds up onto `hi`, so the
/// induced partition is always `{<= lo} | {>= hi}`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub feature: usize,
    pub threshold: f64,
    pub importance: f64,
}

impl ThresholdEntry {
    pub fn key(&self) -> (usize, f64) {
        (self.feature, self.threshold)
    }
}

/// Compares `(feature, threshold)` pairs; thresholds are always finite.
pub fn cmp_split(a: (usize, f64), b: (usize, f64)) -> std::cmp::Ordering {
    a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// A set of candidate split points, each with an importance score.
///
/// Entry order is meaningful to callers that rank thresholds; binarization
/// always uses `(feature, threshold)` order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    entries: Vec<ThresholdEntry>,
}

impl ThresholdSet {
    pub fn new(entries: Vec<ThresholdEntry>) -> Result<Self, DatasetError> {
        let mut keys: Vec<(usize, f64)> = entries.iter().map(ThresholdEntry::key).collect();
        for &(feature, threshold) in &keys {
            if !threshold.is_finite() {
                return Err(DatasetError::InvalidThreshold { feature, threshold });
            }
        }
        keys.sort_by(|a, b| cmp_split(*a, *b));
        for w in keys.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(DatasetError::DuplicateThreshold {
                    feature: w[0].0,
                    threshold: w[0].1,
                });
            }
        }
        Ok(ThresholdSet { entries })
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Result<Self, DatasetError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(feature, threshold)| ThresholdEntry {
                    feature,
                    threshold,
                    importance: 0.0,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[ThresholdEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, feature: usize, threshold: f64) -> bool {
        self.entries
            .iter()
            .any(|e| e.feature == feature && e.threshold == threshold)
    }

    /// `(feature, threshold)` pairs in ascending order.
    pub fn sorted_pairs(&self) -> Vec<(usize, f64)> {
        let mut keys: Vec<(usize, f64)> = self.entries.iter().map(ThresholdEntry::key).collect();
        keys.sort_by(|a, b| cmp_split(*a, *b));
        keys
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub feature: usize,
    pub threshold: f64,
}

/// Bit-column matrix of threshold indicators plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDataset {
    columns: Vec<SupportSet>,
    meta: Vec<ColumnMeta>,
    labels: Vec<u8>,
    positives: SupportSet,
    feature_names: Vec<String>,
}

impl BinaryDataset {
    /// Builds a dataset directly from bit columns. `meta` defaults to
    /// `(j, 0.5)` per column when not supplied.
    pub fn from_columns(
        columns: Vec<SupportSet>,
        meta: Option<Vec<ColumnMeta>>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n = labels.len();
        if n == 0 {
            return Err(DatasetError::NoSamples);
        }
        if let Some(bad) = labels.iter().position(|&y| y > 1) {
            return Err(DatasetError::Label {
                row: bad + 1,
                value: labels[bad].to_string(),
            });
        }
        if columns.iter().any(|c| c.universe() != n) {
            return Err(DatasetError::Shape("column length differs from label count".into()));
        }
        let meta = meta.unwrap_or_else(|| {
            (0..columns.len())
                .map(|j| ColumnMeta {
                    feature: j,
                    threshold: 0.5,
                })
                .collect()
        });
        if meta.len() != columns.len() {
            return Err(DatasetError::Shape("metadata length differs from column count".into()));
        }
        let positives = SupportSet::from_indices(n, (0..n).filter(|&i| labels[i] == 1));
        Ok(BinaryDataset {
            columns,
            meta,
            labels,
            positives,
            feature_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[SupportSet] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &SupportSet {
        &self.columns[j]
    }

    pub fn meta(&self) -> &[ColumnMeta] {
        &self.meta
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Samples labelled 1.
    pub fn positives(&self) -> &SupportSet {
        &self.positives
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.columns[j].contains(i)
    }

    pub fn row_bits(&self, i: usize) -> Vec<bool> {
        self.columns.iter().map(|c| c.contains(i)).collect()
    }

    /// Index of the column splitting `feature` at exactly `threshold`.
    pub fn column_for(&self, feature: usize, threshold: f64) -> Option<usize> {
        self.meta
            .iter()
            .position(|m| m.feature == feature && m.threshold == threshold)
    }

    pub fn full_support(&self) -> SupportSet {
        SupportSet::full(self.n_samples())
    }

    /// The binarized matrix as real 0/1 features, for fitting the ensemble on
    /// indicator columns.
    pub fn to_indicator_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_samples())
            .map(|i| {
                self.columns
                    .iter()
                    .map(|c| if c.contains(i) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Header text of column `j`: `feature<idx>≤<θ>`.
    pub fn column_header(&self, j: usize) -> String {
        let m = self.meta[j];
        format!("feature{}≤{}", m.feature, m.threshold)
    }

    /// Writes the 0/1 matrix as CSV with a trailing `label` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.n_columns()).map(|j| self.column_header(j)).collect();
        header.push("label".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_columns() + 1);
        for i in 0..self.n_samples() {
            record.clear();
            for c in &self.columns {
                record.push(if c.contains(i) { "1" } else { "0" });
            }
            record.push(if self.labels[i] == 1 { "1" } else { "0" });
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| DatasetError::Io {
            path: "<csv output>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads the CSV written by [`BinaryDataset::write_csv`]; column metadata is
/// recovered from the headers. Feature names are not part of the format and
/// come back empty.
pub fn read_binary_csv<R: std::io::Read>(reader: R) -> Result<BinaryDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let m = header.len().checked_sub(1).ok_or(DatasetError::NoFeatures)?;
    let meta = header[..m]
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let bad = || DatasetError::BinaryHeader {
                column: j + 1,
                header: h.clone(),
            };
            let (f, t) = h
                .strip_prefix("feature")
                .and_then(|r| r.split_once('≤'))
                .ok_or_else(bad)?;
            let feature = f.parse().map_err(|_| bad())?;
            let threshold: f64 = t.parse().map_err(|_| bad())?;
            if !threshold.is_finite() {
                return Err(bad());
            }
            Ok(ColumnMeta { feature, threshold })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut bits: Vec<Vec<bool>> = vec![Vec::new(); m];
    let mut labels = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        for (j, cell) in record.iter().enumerate() {
            let v = match cell {
                "0" => 0u8,
                "1" => 1,
                _ if j == m => {
                    return Err(DatasetError::Label {
                        row,
                        value: cell.to_owned(),
                    })
                }
                _ => {
                    return Err(DatasetError::NotBinary {
                        row,
                        column: j + 1,
                        value: cell.to_owned(),
                    })
                }
            };
            if j == m {
                labels.push(v);
            } else {
                bits[j].push(v == 1);
            }
        }
    }
    let columns = bits.iter().map(|c| SupportSet::from_bools(c)).collect();
    BinaryDataset::from_columns(columns, Some(meta), labels, Vec::new())
}

pub fn load_binary_csv(path: impl AsRef<Path>) -> Result<BinaryDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_binary_csv(file)
}

fn indicator_column(raw: &RawDataset, feature: usize, threshold: f64) -> SupportSet {
    SupportSet::from_indices(
        raw.n_samples(),
        (0..raw.n_samples()).filter(|&i| raw.value(i, feature) <= threshold),
    )
}

/// One column per midpoint between consecutive distinct values of each feature.
pub fn full_binarize(raw: &RawDataset) -> BinaryDataset {
    let mut columns = Vec::new();
    let mut meta = Vec::new();
    for j in 0..raw.n_features() {
        let uniq = raw.unique_values(j);
        for w in uniq.windows(2) {
            let threshold = midpoint(w[0], w[1]);
            columns.push(indicator_column(raw, j, threshold));
            meta.push(ColumnMeta { feature: j, threshold });
        }
    }
    BinaryDataset::from_columns(columns, Some(meta), raw.labels().to_vec(), raw.feature_names().to_vec())
        .expect("a valid raw dataset yields a valid binarization")
}

/// All midpoints of every feature as a threshold set.
pub fn all_midpoints(raw: &RawDataset) -> ThresholdSet {
    let pairs = (0..raw.n_features()).flat_map(|j| {
        let uniq = raw.unique_values(j);
        uniq.windows(2).map(|w| (j, midpoint(w[0], w[1]))).collect::<Vec<_>>()
    });
    ThresholdSet::from_pairs(pairs).expect("midpoints are distinct")
}

/// One column per threshold entry, in `(feature, threshold)` order.
pub fn binarize_with_thresholds(raw: &RawDataset, ts: &ThresholdSet) -> Result<BinaryDataset, DatasetError> {
    let pairs = ts.sorted_pairs();
    for &(feature, _) in &pairs {
        if feature >= raw.n_features() {
            return Err(DatasetError::FeatureOutOfRange {
                feature,
                n_features: raw.n_features(),
            });
        }
    }
    let columns = pairs.iter().map(|&(f, t)| indicator_column(raw, f, t)).collect();
    let meta = pairs
        .iter()
        .map(|&(feature, threshold)| ColumnMeta { feature, threshold })
        .collect();
    BinaryDataset::from_columns(columns, Some(meta), raw.labels().to_vec(), raw.feature_names().to_vec())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceGroup {
    pub members: Vec<usize>,
    /// Label held by fewer members; on a tie, 1.
    pub minority_label: u8,
    pub minority_count: usize,
}

/// Partition of samples by identical binarized rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceClasses {
    groups: Vec<EquivalenceGroup>,
    group_of: Vec<usize>,
    /// For samples in groups that hold both labels: index into `mixed`.
    mixed_slot: Vec<u32>,
    n_mixed: usize,
    labels: Vec<u8>,
}

const NOT_MIXED: u32 = u32::MAX;

impl EquivalenceClasses {
    /// Groups ordered by their smallest member.
    pub fn groups(&self) -> &[EquivalenceGroup] {
        &self.groups
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn n_samples(&self) -> usize {
        self.group_of.len()
    }

    /// Sum of minority counts over all groups.
    pub fn total_minority(&self) -> usize {
        self.groups.iter().map(|g| g.minority_count).sum()
    }
}

pub fn equivalence_classes(bin: &BinaryDataset) -> EquivalenceClasses {
    let n = bin.n_samples();
    let words = bin.n_columns().div_ceil(64);
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![0; n];
    for (i, slot) in group_of.iter_mut().enumerate() {
        let mut sig = vec![0u64; words];
        for (j, c) in bin.columns().iter().enumerate() {
            if c.contains(i) {
                sig[j / 64] |= 1 << (j % 64);
            }
        }
        let g = *index.entry(sig).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
        *slot = g;
    }
    let labels = bin.labels().to_vec();
    let mut mixed_slot = vec![NOT_MIXED; n];
    let mut n_mixed = 0;
    let groups = groups
        .into_iter()
        .map(|members| {
            let ones = members.iter().filter(|&&i| labels[i] == 1).count();
            let zeros = members.len() - ones;
            let (minority_label, minority_count) = if zeros < ones { (0, zeros) } else { (1, ones) };
            if minority_count > 0 {
                for &i in &members {
                    mixed_slot[i] = n_mixed as u32;
                }
                n_mixed += 1;
            }
            EquivalenceGroup {
                members,
                minority_label,
                minority_count,
            }
        })
        .collect();
    EquivalenceClasses {
        groups,
        group_of,
        mixed_slot,
        n_mixed,
        labels,
    }
}

/// `Σ_u min(#label-0 in e_u ∩ s, #label-1 in e_u ∩ s)`.
///
/// Every tree misclassifies at least this many samples of `s`, because
/// identical rows always land in the same leaf.
pub fn minority_total(eq: &EquivalenceClasses, s: &SupportSet) -> usize {
    if eq.n_mixed == 0 {
        return 0;
    }
    thread_local! {
        static SCRATCH: RefCell<(Vec<[u32; 2]>, Vec<u32>)> = const { RefCell::new((Vec::new(), Vec::new())) };
    }
    SCRATCH.with_borrow_mut(|(counts, touched)| {
        if counts.len() < eq.n_mixed {
            counts.resize(eq.n_mixed, [0, 0]);
        }
        for i in s.iter() {
            let slot = eq.mixed_slot[i];
            if slot != NOT_MIXED {
                let c = &mut counts[slot as usize];
                if c[0] == 0 && c[1] == 0 {
                    touched.push(slot);
                }
                c[eq.labels[i] as usize] += 1;
            }
        }
        let mut total = 0;
        for slot in touched.drain(..) {
            let c = &mut counts[slot as usize];
            total += c[0].min(c[1]) as usize;
            *c = [0, 0];
        }
        total
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_csv_round_trip() {
        let raw = read_csv("a,b,y\n1,0.25,0\n2,0.75,1\n3,0.75,1\n".as_bytes()).unwrap();
        let bin = full_binarize(&raw);
        let mut buf = Vec::new();
        bin.write_csv(&mut buf).unwrap();
        let back = read_binary_csv(buf.as_slice()).unwrap();
        assert_eq!(back.meta(), bin.meta());
        assert_eq!(back.columns(), bin.columns());
        assert_eq!(back.labels(), bin.labels());

        let empty = read_binary_csv("label\n0\n1\n".as_bytes()).unwrap();
        assert_eq!((empty.n_columns(), empty.n_samples()), (0, 2));
        assert!(matches!(
            read_binary_csv("age,label\n1,0\n".as_bytes()),
            Err(DatasetError::BinaryHeader { column: 1, .. })
        ));
        assert!(matches!(
            read_binary_csv("feature0≤1,label\n2,0\n".as_bytes()),
            Err(DatasetError::NotBinary { row: 1, column: 1, .. })
        ));
    }
    use proptest::prelude::*;

    fn raw(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> RawDataset {
        let m = rows[0].len();
        RawDataset::new(rows, (0..m).map(|j| format!("x{j}")).collect(), labels).unwrap()
    }

    #[test]
    fn parses_minimal_csv() {
        let d = read_csv("a,y\n1,0\n2,1\n".as_bytes()).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.n_features(), 1);
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(d.feature_names(), &["a".to_string()]);
    }

    #[test]
    fn rejects_bad_label_with_position() {
        let err = read_csv("a,y\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Label { row: 1, .. }), "{err}");
        assert!(err.to_string().contains("label outside {0,1}"));
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(matches!(read_csv("a,y\n".as_bytes()), Err(DatasetError::NoSamples)));
        assert!(matches!(
            read_csv("a,b,y\n1,2,0\n3,1\n".as_bytes()),
            Err(DatasetError::Ragged { row: 2, .. })
        ));
        assert!(matches!(
            read_csv("a,y\nred,1\n".as_bytes()),
            Err(DatasetError::NonNumeric { row: 1, column: 1, .. })
        ));
        assert!(matches!(
            read_csv("a,y\n,1\n".as_bytes()),
            Err(DatasetError::Missing { row: 1, column: 1 })
        ));
    }

    #[test]
    fn midpoints_between_unique_values() {
        let d = raw(vec![vec![1.0], vec![2.0], vec![4.0]], vec![0, 1, 0]);
        let b = full_binarize(&d);
        let th: Vec<f64> = b.meta().iter().map(|m| m.threshold).collect();
        assert_eq!(th, vec![1.5, 3.0]);
    }

    #[test]
    fn constant_feature_has_no_columns() {
        let d = raw(vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 4.0]], vec![0, 1, 0]);
        assert_eq!(full_binarize(&d).n_columns(), 2);
    }

    #[test]
    fn explicit_threshold_column() {
        let d = raw(vec![vec![1.0], vec![2.0], vec![4.0]], vec![0, 1, 0]);
        let ts = ThresholdSet::from_pairs([(0, 1.5)]).unwrap();
        let b = binarize_with_thresholds(&d, &ts).unwrap();
        assert_eq!(b.n_columns(), 1);
        assert_eq!(b.row_bits(0), vec![true]);
        assert_eq!(b.row_bits(1), vec![false]);
        assert_eq!(b.row_bits(2), vec![false]);

        let empty = binarize_with_thresholds(&d, &ThresholdSet::default()).unwrap();
        assert_eq!(empty.n_columns(), 0);
        assert_eq!(empty.labels(), d.labels());

        let bad = ThresholdSet::from_pairs([(3, 1.5)]).unwrap();
        assert!(matches!(
            binarize_with_thresholds(&d, &bad),
            Err(DatasetError::FeatureOutOfRange { feature: 3, .. })
        ));
    }

    #[test]
    fn threshold_set_rejects_duplicates() {
        assert!(ThresholdSet::from_pairs([(0, 1.5), (0, 1.5)]).is_err());
        assert!(ThresholdSet::from_pairs([(0, 1.5), (1, 1.5)]).is_ok());
    }

    #[test]
    fn groups_identical_rows() {
        let cols = vec![
            SupportSet::from_bools(&[false, false, true]),
            SupportSet::from_bools(&[true, true, false]),
        ];
        let b = BinaryDataset::from_columns(cols, None, vec![0, 1, 1], vec![]).unwrap();
        let eq = equivalence_classes(&b);
        let members: Vec<Vec<usize>> = eq.groups().iter().map(|g| g.members.clone()).collect();
        assert_eq!(members, vec![vec![0, 1], vec![2]]);
        assert_eq!(eq.total_minority(), 1);
        assert_eq!(minority_total(&eq, &SupportSet::full(3)), 1);
        assert_eq!(minority_total(&eq, &SupportSet::empty(3)), 0);
        assert_eq!(minority_total(&eq, &SupportSet::from_indices(3, [0, 2])), 0);
    }

    #[test]
    fn distinct_rows_have_no_minority() {
        let cols = vec![
            SupportSet::from_bools(&[true, false, true, false]),
            SupportSet::from_bools(&[true, true, false, false]),
        ];
        let b = BinaryDataset::from_columns(cols, None, vec![0, 1, 1, 0], vec![]).unwrap();
        let eq = equivalence_classes(&b);
        assert_eq!(eq.groups().len(), 4);
        assert_eq!(eq.total_minority(), 0);
    }

    #[test]
    fn export_reloads() {
        let d = raw(vec![vec![1.0], vec![2.0], vec![4.0]], vec![0, 1, 0]);
        let b = full_binarize(&d);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("feature0≤1.5,feature0≤3,label\n"));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.n_features(), 2);
        assert_eq!(back.row(0), &[1.0, 1.0]);
        assert_eq!(back.row(2), &[0.0, 0.0]);
    }

    fn small_raw() -> impl Strategy<Value = RawDataset> {
        (1usize..30, 1usize..4).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(proptest::collection::vec(0u8..6, m), n),
                proptest::collection::vec(0u8..2, n),
            )
                .prop_map(move |(rows, labels)| {
                    let rows = rows
                        .into_iter()
                        .map(|r| r.into_iter().map(|v| v as f64 * 0.75 - 1.0).collect())
                        .collect();
                    RawDataset::new(rows, (0..m).map(|j| format!("f{j}")).collect(), labels).unwrap()
                })
        })
    }

    fn bit_rows() -> impl Strategy<Value = BinaryDataset> {
        (1usize..33, 1usize..6).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), m),
                proptest::collection::vec(0u8..2, n),
            )
                .prop_map(|(cols, labels)| {
                    let cols = cols.iter().map(|c| SupportSet::from_bools(c)).collect();
                    BinaryDataset::from_columns(cols, None, labels, vec![]).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn binarization_round_trip_and_count(d in small_raw()) {
            let b = full_binarize(&d);
            let expected: usize = (0..d.n_features()).map(|j| d.unique_values(j).len() - 1).sum();
            prop_assert_eq!(b.n_columns(), expected);
            for (j, meta) in b.meta().iter().enumerate() {
                for i in 0..d.n_samples() {
                    prop_assert_eq!(b.bit(i, j), d.value(i, meta.feature) <= meta.threshold);
                }
            }
            let via_ts = binarize_with_thresholds(&d, &all_midpoints(&d)).unwrap();
            prop_assert_eq!(via_ts, b);
        }

        #[test]
        fn groups_match_sort_and_scan(b in bit_rows()) {
            let eq = equivalence_classes(&b);
            // oracle: sort indices by row, scan runs of equal rows
            let n = b.n_samples();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&i| (b.row_bits(i), i));
            let mut oracle: Vec<Vec<usize>> = Vec::new();
            for &i in &idx {
                match oracle.last_mut() {
                    Some(g) if b.row_bits(g[0]) == b.row_bits(i) => g.push(i),
                    _ => oracle.push(vec![i]),
                }
            }
            oracle.sort();
            let mut got: Vec<Vec<usize>> = eq.groups().iter().map(|g| g.members.clone()).collect();
            got.sort();
            prop_assert_eq!(got, oracle);
            for g in eq.groups() {
                prop_assert!(g.minority_count <= g.members.len() / 2);
            }
        }

        #[test]
        fn minority_total_counts_per_group(b in bit_rows(), mask in proptest::collection::vec(any::<bool>(), 33)) {
            let eq = equivalence_classes(&b);
            let n = b.n_samples();
            let s = SupportSet::from_bools(&mask[..n]);
            // oracle: best constant label per group, by counting both options
            let mut expected = 0;
            for g in eq.groups() {
                let inside: Vec<usize> = g.members.iter().copied().filter(|&i| s.contains(i)).collect();
                let cost_0 = inside.iter().filter(|&&i| b.labels()[i] != 0).count();
                let cost_1 = inside.iter().filter(|&&i| b.labels()[i] != 1).count();
                expected += cost_0.min(cost_1);
            }
            prop_assert_eq!(minority_total(&eq, &s), expected);
        }

        #[test]
        fn groups_invariant_under_column_permutation(b in bit_rows(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut order: Vec<usize> = (0..b.n_columns()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let cols = order.iter().map(|&j| b.column(j).clone()).collect();
            let permuted = BinaryDataset::from_columns(cols, None, b.labels().to_vec(), vec![]).unwrap();
            let (a, c) = (equivalence_classes(&b), equivalence_classes(&permuted));
            prop_assert_eq!(a.groups(), c.groups());
        }
    }
}
