//! Dense dataset storage and the small set of vector utilities every other
//! module builds on.
//!
//! A [`FeatureMatrix`] holds `n` samples by `d` features and is stored
//! column-major, so that `column(j)` is a contiguous slice. Almost every
//! algorithm in this crate walks feature columns, not sample rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `n × d` real matrix, column-major by feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    feature_names: Option<Vec<String>>,
}

impl FeatureMatrix {
    /// Builds a matrix from column-major storage. Requires `n, d ≥ 1` and
    /// finite entries. Loaded datasets additionally require `n, d ≥ 2`
    /// (checked by [`load_csv`]); derived matrices such as a one-column
    /// projection are allowed.
    pub fn from_column_major(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Dimension(format!("empty matrix ({n}×{d})")));
        }
        if data.len() != n * d {
            return Err(Error::Dimension(format!(
                "expected {} values for a {n}×{d} matrix, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos % n + 1,
                message: format!("non-finite value in column {}", pos / n),
            });
        }
        Ok(Self {
            n,
            d,
            data,
            feature_names: None,
        })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::Dimension(format!(
                "column {bad} has length {} but column 0 has length {n}",
                columns[bad].len()
            )));
        }
        Self::from_column_major(n, columns.len(), columns.concat())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = vec![0.0; n * d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("expected {d} values, found {}", row.len()),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                data[j * n + i] = v;
            }
        }
        Self::from_column_major(n, d, data)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::Dimension(format!(
                "{} feature names for {} features",
                names.len(),
                self.d
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of features.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.d).map(|j| self.get(i, j)).collect()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.data
    }

    /// Column subset in the given order, keeping the matching feature names.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.n);
        for &j in indices {
            if j >= self.d {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: self.d,
                });
            }
            data.extend_from_slice(self.column(j));
        }
        let mut out = Self::from_column_major(self.n, indices.len(), data)?;
        if let Some(names) = &self.feature_names {
            out.feature_names = Some(indices.iter().map(|&j| names[j].clone()).collect());
        }
        Ok(out)
    }

    /// Scales every nonzero column to unit Euclidean norm. Zero columns are
    /// left untouched and reported.
    pub fn normalize_features(&self) -> Normalized {
        let mut data = self.data.clone();
        let mut zero_columns = Vec::new();
        for (j, col) in data.chunks_exact_mut(self.n).enumerate() {
            let norm = norm2(col);
            if norm == 0.0 || !norm.is_finite() {
                zero_columns.push(j);
                continue;
            }
            col.iter_mut().for_each(|v| *v /= norm);
        }
        Normalized {
            matrix: Self {
                n: self.n,
                d: self.d,
                data,
                feature_names: self.feature_names.clone(),
            },
            zero_columns,
        }
    }

    /// Euclidean distances between sample rows.
    pub fn pairwise_euclidean(&self) -> SquareMatrix {
        let n = self.n;
        let mut sq = vec![0.0; n * n];
        for col in self.columns() {
            for i in 0..n {
                let xi = col[i];
                for k in (i + 1)..n {
                    let diff = xi - col[k];
                    sq[i * n + k] += diff * diff;
                }
            }
        }
        for i in 0..n {
            for k in (i + 1)..n {
                let dist = sq[i * n + k].sqrt();
                sq[i * n + k] = dist;
                sq[k * n + i] = dist;
            }
        }
        SquareMatrix { n, data: sq }
    }
}

/// Result of [`FeatureMatrix::normalize_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub matrix: FeatureMatrix,
    pub zero_columns: Vec<usize>,
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Integer labels, one per sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dimension("empty label vector".into()));
        }
        Ok(Self(labels))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distinct(&self) -> usize {
        let mut v = self.0.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared cosine similarity of two feature vectors.
pub fn redundancy(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedRedundancy);
    }
    let c = dot(a, b);
    Ok((c * c / (na * nb)).clamp(0.0, 1.0))
}

/// Which CSV column, if any, holds the class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

fn parse_label(cell: &str, row: usize) -> Result<usize> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<usize>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as usize),
        _ => Err(Error::Parse {
            row,
            message: format!("label {cell:?} is not a non-negative integer"),
        }),
    }
}

/// Reads a numeric CSV with rows as samples. A first row containing any
/// non-numeric cell is treated as a header.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&LabelColumn>,
) -> Result<(FeatureMatrix, Option<LabelVector>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv(
    reader: impl std::io::Read,
    label_column: Option<&LabelColumn>,
) -> Result<(FeatureMatrix, Option<LabelVector>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in rdr.records().enumerate() {
        let row_no = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let cells: Vec<String> = record.iter().map(str::to_string).collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("ragged row: expected {w} fields, found {}", cells.len()),
                })
            }
            _ => {}
        }
        if idx == 0 && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            header = Some(cells);
        } else {
            rows.push(cells);
        }
    }
    let width = width.unwrap_or(0);
    let header_offset = usize::from(header.is_some());

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(Error::Config(format!(
                "label column {i} out of range for {width} columns"
            )))
        }
        Some(LabelColumn::Last) if width > 0 => Some(width - 1),
        Some(LabelColumn::Last) => None,
        Some(LabelColumn::Name(name)) => {
            let found = header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name));
            Some(found.ok_or_else(|| {
                Error::Config(format!("label column {name:?} not found in header"))
            })?)
        }
    };

    let n = rows.len();
    let d = width - usize::from(label_idx.is_some());
    if n < 2 || d < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 samples and 2 features, found {n}×{d}"
        )));
    }
    let mut data = vec![0.0; n * d];
    let mut labels = label_idx.map(|_| Vec::with_capacity(n));
    for (i, row) in rows.iter().enumerate() {
        let row_no = i + 1 + header_offset;
        let mut j = 0;
        for (c, cell) in row.iter().enumerate() {
            if Some(c) == label_idx {
                labels.as_mut().unwrap().push(parse_label(cell, row_no)?);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                message: format!("non-numeric cell {cell:?} in column {c}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("non-finite cell {cell:?} in column {c}"),
                });
            }
            data[j * n + i] = v;
            j += 1;
        }
    }
    let mut matrix = FeatureMatrix::from_column_major(n, d, data)?;
    if let Some(h) = header {
        let names = h
            .into_iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != label_idx)
            .map(|(_, s)| s)
            .collect();
        matrix = matrix.with_feature_names(names)?;
    }
    let labels = labels.map(LabelVector::new).transpose()?;
    Ok((matrix, labels))
}

/// Reads one non-negative integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        labels.push(parse_label(&line, i + 1)?);
    }
    LabelVector::new(labels)
}

pub fn write_csv(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(names) = matrix.feature_names() {
        writeln!(w, "{}", names.join(",")).map_err(io)?;
    }
    for i in 0..matrix.n() {
        let row: Vec<String> = matrix.row(i).iter().map(f64::to_string).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels.as_slice() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv(
        text: &str,
        labels: Option<&LabelColumn>,
    ) -> Result<(FeatureMatrix, Option<LabelVector>)> {
        read_csv(text.as_bytes(), labels)
    }

    #[test]
    fn reads_plain_numeric_csv() {
        let (m, l) = csv("1,2,3\n4,5,6\n7,8,9\n", None).unwrap();
        assert_eq!((m.n(), m.d()), (3, 3));
        assert_eq!(m.row(1), vec![4.0, 5.0, 6.0]);
        assert_eq!(m.column(2), &[3.0, 6.0, 9.0]);
        assert!(l.is_none());
        assert!(m.feature_names().is_none());
    }

    #[test]
    fn splits_named_label_column() {
        let text = "a,b,c,d,class\n1,2,3,4,0\n5,6,7,8,1\n9,1,2,3,1\n4,5,6,7,2\n";
        let (m, l) = csv(text, Some(&LabelColumn::Name("class".into()))).unwrap();
        assert_eq!((m.n(), m.d()), (4, 4));
        assert_eq!(l.unwrap().as_slice(), &[0, 1, 1, 2]);
        assert_eq!(m.feature_names().unwrap(), &["a", "b", "c", "d"]);
    }

    #[test]
    fn ragged_rows_name_the_row() {
        let err = csv("1,2,3\n4,5,6,7\n", None).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_is_a_parse_error() {
        let err = csv("1,2\n3,x\n4,5\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn too_small_is_a_dimension_error() {
        assert!(matches!(csv("1,2,3\n", None), Err(Error::Dimension(_))));
        assert!(matches!(csv("1\n2\n3\n", None), Err(Error::Dimension(_))));
    }

    #[test]
    fn normalizes_columns() {
        let m = FeatureMatrix::from_columns(&[vec![3.0, 4.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let norm = m.normalize_features();
        assert_eq!(norm.zero_columns, vec![1]);
        let c0 = norm.matrix.column(0);
        assert!((c0[0] - 0.6).abs() < 1e-15 && (c0[1] - 0.8).abs() < 1e-15 && c0[2] == 0.0);
        assert_eq!(norm.matrix.column(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_column_unchanged() {
        let s = 1.0 / 2f64.sqrt();
        let m = FeatureMatrix::from_columns(&[vec![s, s], vec![1.0, 0.0]]).unwrap();
        let norm = m.normalize_features();
        for (a, b) in m
            .as_column_major()
            .iter()
            .zip(norm.matrix.as_column_major())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_distance_basics() {
        let m =
            FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 4.0]]).unwrap();
        let dist = m.pairwise_euclidean();
        assert_eq!(dist.get(0, 1), 5.0);
        assert_eq!(dist.get(1, 2), 0.0);
        assert_eq!(dist.get(2, 0), 5.0);
    }

    #[test]
    fn pairwise_distance_matches_double_loop() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..3)
                    .map(|j| ((i * 7 + j * 3) as f64).sin() * 2.0)
                    .collect()
            })
            .collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let dist = m.pairwise_euclidean();
        for i in 0..5 {
            for k in 0..5 {
                let mut s = 0.0;
                for j in 0..3 {
                    s += (rows[i][j] - rows[k][j]).powi(2);
                }
                assert!((dist.get(i, k) - s.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn redundancy_cases() {
        let f = [1.0, 2.0, -0.5];
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        assert!((redundancy(&f, &f).unwrap() - 1.0).abs() < 1e-15);
        assert!((redundancy(&f, &neg).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(redundancy(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(
            redundancy(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedRedundancy)
        ));
    }

    #[test]
    fn select_columns_keeps_names() {
        let m = FeatureMatrix::from_columns(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]])
            .unwrap()
            .with_feature_names(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        let s = m.select_columns(&[2, 0]).unwrap();
        assert_eq!(s.column(0), &[5.0, 6.0]);
        assert_eq!(s.feature_names().unwrap(), &["c", "a"]);
        assert!(m.select_columns(&[3]).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = FeatureMatrix> {
        (2usize..6, 2usize..5).prop_flat_map(|(n, d)| {
            prop::collection::vec(-10.0f64..10.0, n * d)
                .prop_map(move |v| FeatureMatrix::from_column_major(n, d, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(m in matrix_strategy()) {
            let once = m.normalize_features().matrix;
            let twice = once.normalize_features().matrix;
            for (a, b) in once.as_column_major().iter().zip(twice.as_column_major()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn distances_form_a_metric(m in matrix_strategy()) {
            let dist = m.pairwise_euclidean();
            let n = m.n();
            for i in 0..n {
                prop_assert_eq!(dist.get(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(dist.get(i, j), dist.get(j, i));
                    for k in 0..n {
                        prop_assert!(dist.get(i, k) <= dist.get(i, j) + dist.get(j, k) + 1e-9);
                    }
                }
            }
        }

        #[test]
        fn redundancy_is_symmetric_and_scale_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 4),
            b in prop::collection::vec(-5.0f64..5.0, 4),
            sa in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
            sb in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            prop_assume!(norm2(&a) > 1e-3 && norm2(&b) > 1e-3);
            let r = redundancy(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((r - redundancy(&b, &a).unwrap()).abs() < 1e-12);
            let a2: Vec<f64> = a.iter().map(|v| v * sa).collect();
            let b2: Vec<f64> = b.iter().map(|v| v * sb).collect();
            prop_assert!((r - redundancy(&a2, &b2).unwrap()).abs() < 1e-12);
        }
    }
}
