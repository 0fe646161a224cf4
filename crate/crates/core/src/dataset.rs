//! Tabular data with columns split into an x-group and a y-group.
//!
//! A [`Dataset`] is immutable: every transform returns a new dataset and
//! records its lineage on the affected column, so derived columns can be
//! recomputed from raw inputs at prediction time.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the model equation a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    X,
    Y,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::X => write!(f, "x"),
            Side::Y => write!(f, "y"),
        }
    }
}

/// Element-wise column transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    Square,
    Log,
    Product,
    SignFlip,
    Shift { constant: f64 },
}

impl TransformKind {
    fn name(&self) -> &'static str {
        match self {
            TransformKind::Square => "square",
            TransformKind::Log => "log",
            TransformKind::Product => "product",
            TransformKind::SignFlip => "sign_flip",
            TransformKind::Shift { .. } => "shift",
        }
    }

    fn arity(&self) -> usize {
        match self {
            TransformKind::Product => 2,
            _ => 1,
        }
    }
}

/// One entry in a column's transform history.
///
/// A step whose single source is the column itself is an in-place step
/// (sign flip applied to an existing column); any other step derives the
/// column from other columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformStep {
    #[serde(flatten)]
    pub kind: TransformKind,
    pub sources: Vec<String>,
    /// Pre-transform values, kept so that applying the exact inverse shift
    /// restores the original bits. Not serialized.
    #[serde(skip)]
    undo: Option<Vec<f64>>,
}

impl TransformStep {
    fn new(kind: TransformKind, sources: Vec<String>) -> Self {
        TransformStep {
            kind,
            sources,
            undo: None,
        }
    }
}

/// A named column of observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub side: Side,
    values: Vec<f64>,
    pub lineage: Vec<TransformStep>,
    constant: bool,
}

impl Column {
    pub fn new(name: impl Into<String>, side: Side, values: Vec<f64>) -> Self {
        let constant = is_constant(&values);
        Column {
            name: name.into(),
            side,
            values,
            lineage: Vec::new(),
            constant,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when the column has (numerically) zero variance. Constant
    /// columns are kept in the dataset but excluded from composites.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        let constant = is_constant(&values);
        Column {
            name: self.name.clone(),
            side: self.side,
            values,
            lineage: self.lineage.clone(),
            constant,
        }
    }
}

/// Zero-variance test: sd below 1e-12 relative to the value scale.
pub(crate) fn is_constant(values: &[f64]) -> bool {
    if values.len() < 2 {
        return true;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = values.iter().map(|v| v.abs()).sum::<f64>() / n + 1.0;
    var.sqrt() < 1e-12 * scale
}

/// An immutable table of named, side-tagged columns.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    /// Build a dataset from columns, validating the structural invariants:
    /// unique names, equal lengths, at least 3 rows, both sides present.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.values.len());
        if n_rows < 3 {
            return Err(Error::TooFewRows { found: n_rows });
        }
        let mut seen = HashMap::new();
        for (i, col) in columns.iter().enumerate() {
            if col.values.len() != n_rows {
                return Err(Error::RaggedColumn {
                    column: col.name.clone(),
                    found: col.values.len(),
                    expected: n_rows,
                });
            }
            if seen.insert(col.name.clone(), i).is_some() {
                return Err(Error::DuplicateColumn {
                    name: col.name.clone(),
                });
            }
        }
        for side in [Side::X, Side::Y] {
            if !columns.iter().any(|c| c.side == side) {
                return Err(Error::EmptySide { side });
            }
        }
        Ok(Dataset { columns, n_rows })
    }

    /// Convenience constructor from `(name, side, values)` triples.
    pub fn from_parts(parts: Vec<(&str, Side, Vec<f64>)>) -> Result<Self> {
        Dataset::new(
            parts
                .into_iter()
                .map(|(name, side, values)| Column::new(name, side, values))
                .collect(),
        )
    }

    /// Load a CSV file with a header row. Every header must appear in the
    /// roles map; every cell must parse as a number.
    pub fn load_csv(path: impl AsRef<Path>, roles: &HashMap<String, Side>) -> Result<Self> {
        let path = path.as_ref();
        let path_str = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Csv {
                path: path_str.clone(),
                source: e,
            })?;

        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv {
                path: path_str.clone(),
                source: e,
            })?
            .iter()
            .map(|h| h.to_string())
            .collect();

        let mut sides = Vec::with_capacity(headers.len());
        for h in &headers {
            match roles.get(h) {
                Some(side) => sides.push(*side),
                None => return Err(Error::MissingRole { column: h.clone() }),
            }
        }

        let mut values: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row_idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Csv {
                path: path_str.clone(),
                source: e,
            })?;
            if record.len() != headers.len() {
                return Err(Error::RaggedColumn {
                    column: headers[record.len().min(headers.len() - 1)].clone(),
                    found: record.len(),
                    expected: headers.len(),
                });
            }
            for (col_idx, cell) in record.iter().enumerate() {
                let parsed: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                    row: row_idx + 1,
                    column: headers[col_idx].clone(),
                    value: cell.to_string(),
                })?;
                if !parsed.is_finite() {
                    return Err(Error::NonNumericCell {
                        row: row_idx + 1,
                        column: headers[col_idx].clone(),
                        value: cell.to_string(),
                    });
                }
                values[col_idx].push(parsed);
            }
        }

        let columns = headers
            .into_iter()
            .zip(sides)
            .zip(values)
            .map(|((name, side), vals)| Column::new(name, side, vals))
            .collect();
        Dataset::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn column_required(&self, name: &str) -> Result<&Column> {
        self.column(name).ok_or_else(|| Error::UnknownColumn {
            name: name.to_string(),
        })
    }

    /// Non-constant columns of one side, in dataset order. These are the
    /// columns that carry weights.
    pub fn active_columns(&self, side: Side) -> Vec<&Column> {
        self.columns
            .iter()
            .filter(|c| c.side == side && !c.constant)
            .collect()
    }

    pub fn active_names(&self, side: Side) -> Vec<String> {
        self.active_columns(side)
            .iter()
            .map(|c| c.name.clone())
            .collect()
    }

    /// Names of columns excluded from composites for having no variance.
    pub fn constant_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.constant)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Append a derived column computed element-wise from existing ones.
    pub fn add_derived(
        &self,
        kind: TransformKind,
        sources: &[&str],
        new_name: &str,
    ) -> Result<Self> {
        if self.column(new_name).is_some() {
            return Err(Error::DuplicateColumn {
                name: new_name.to_string(),
            });
        }
        if sources.len() != kind.arity() {
            return Err(Error::BadSourceCount {
                kind: kind.name(),
                expected: kind.arity(),
                found: sources.len(),
            });
        }
        let srcs: Vec<&Column> = sources
            .iter()
            .map(|s| self.column_required(s))
            .collect::<Result<_>>()?;

        let (values, side, undo) = match &kind {
            TransformKind::Square => {
                let v = srcs[0].values.iter().map(|x| x * x).collect();
                (v, srcs[0].side, None)
            }
            TransformKind::Log => {
                for (i, x) in srcs[0].values.iter().enumerate() {
                    if *x <= 0.0 {
                        return Err(Error::LogNonPositive {
                            column: srcs[0].name.clone(),
                            row: i + 1,
                            value: *x,
                        });
                    }
                }
                let v = srcs[0].values.iter().map(|x| x.ln()).collect();
                (v, srcs[0].side, None)
            }
            TransformKind::Product => {
                if srcs[0].side != srcs[1].side {
                    return Err(Error::ProductAcrossSides {
                        left: srcs[0].name.clone(),
                        right: srcs[1].name.clone(),
                    });
                }
                let v = srcs[0]
                    .values
                    .iter()
                    .zip(&srcs[1].values)
                    .map(|(x, y)| x * y)
                    .collect();
                (v, srcs[0].side, None)
            }
            TransformKind::SignFlip => {
                let v = srcs[0].values.iter().map(|x| -x).collect();
                (v, srcs[0].side, None)
            }
            TransformKind::Shift { constant } => {
                // Shifting back by the exact opposite constant must restore
                // the source bits, so remember them.
                let src = srcs[0];
                let values = if let Some(prev) = shift_inverse_of(src, *constant) {
                    prev
                } else {
                    src.values.iter().map(|x| x + constant).collect()
                };
                (values, src.side, Some(src.values.clone()))
            }
        };

        let mut step = TransformStep::new(kind, sources.iter().map(|s| s.to_string()).collect());
        step.undo = undo;
        let mut column = Column::new(new_name, side, values);
        column.lineage.push(step);

        let mut columns = self.columns.clone();
        columns.push(column);
        Dataset::new(columns)
    }

    /// Negate a column in place (in the returned copy). Flipping a second
    /// time undoes the first flip, lineage included.
    pub fn sign_flip(&self, name: &str) -> Result<Self> {
        let idx = self
            .columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn {
                name: name.to_string(),
            })?;

        let mut columns = self.columns.clone();
        let col = &mut columns[idx];
        let flipped: Vec<f64> = col.values.iter().map(|x| -x).collect();
        *col = col.with_values(flipped);

        let is_self_flip = |s: &TransformStep| {
            s.kind == TransformKind::SignFlip && s.sources == [name.to_string()]
        };
        if col.lineage.last().is_some_and(is_self_flip) {
            col.lineage.pop();
        } else {
            col.lineage.push(TransformStep::new(
                TransformKind::SignFlip,
                vec![name.to_string()],
            ));
        }
        Dataset::new(columns)
    }

    /// Multiply a column by a positive factor, as if its units of
    /// measurement changed. Used by the scale-invariance probes.
    pub fn scale_column(&self, name: &str, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::BadScaleFactor { factor });
        }
        let idx = self
            .columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn {
                name: name.to_string(),
            })?;
        let mut columns = self.columns.clone();
        let col = &mut columns[idx];
        let scaled: Vec<f64> = col.values.iter().map(|x| x * factor).collect();
        *col = col.with_values(scaled);
        Dataset::new(columns)
    }
}

/// When appending `shift(c)` to a column whose own step was `shift(-c)`,
/// return the stored pre-shift values so the round trip is bit-exact.
fn shift_inverse_of(src: &Column, constant: f64) -> Option<Vec<f64>> {
    let step = src.lineage.last()?;
    match step.kind {
        TransformKind::Shift { constant: prev } if prev == -constant => step.undo.clone(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn roles(pairs: &[(&str, Side)]) -> HashMap<String, Side> {
        pairs.iter().map(|(n, s)| (n.to_string(), *s)).collect()
    }

    fn small() -> Dataset {
        Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("x2", Side::X, vec![2.0, 2.0, 2.5]),
            ("y1", Side::Y, vec![-5.0, 0.0, 5.0]),
        ])
        .unwrap()
    }

    #[test]
    fn load_csv_basic() {
        let mut f = tempfile_csv("x1,x2,y1\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n");
        let ds = Dataset::load_csv(
            f.path(),
            &roles(&[("x1", Side::X), ("x2", Side::X), ("y1", Side::Y)]),
        )
        .unwrap();
        assert_eq!(ds.n_rows(), 5);
        assert_eq!(ds.active_columns(Side::X).len(), 2);
        assert_eq!(ds.active_columns(Side::Y).len(), 1);
        assert_eq!(ds.column("x2").unwrap().values(), &[2.0, 5.0, 8.0, 11.0, 14.0]);
        f.flush().unwrap();
    }

    #[test]
    fn load_csv_reports_bad_cell() {
        let f = tempfile_csv("x1,y1\n1,2\n3,4\nabc,6\n");
        let err = Dataset::load_csv(f.path(), &roles(&[("x1", Side::X), ("y1", Side::Y)]))
            .unwrap_err();
        match err {
            Error::NonNumericCell { row, column, value } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x1");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_csv_too_few_rows() {
        let f = tempfile_csv("x1,y1\n1,2\n3,4\n");
        let err = Dataset::load_csv(f.path(), &roles(&[("x1", Side::X), ("y1", Side::Y)]))
            .unwrap_err();
        assert!(matches!(err, Error::TooFewRows { found: 2 }));
    }

    #[test]
    fn load_csv_missing_role() {
        let f = tempfile_csv("x1,y1\n1,2\n3,4\n5,6\n");
        let err = Dataset::load_csv(f.path(), &roles(&[("x1", Side::X)])).unwrap_err();
        assert!(matches!(err, Error::MissingRole { column } if column == "y1"));
    }

    #[test]
    fn load_csv_duplicate_header() {
        let f = tempfile_csv("x1,x1,y1\n1,2,3\n4,5,6\n7,8,9\n");
        let err = Dataset::load_csv(
            f.path(),
            &roles(&[("x1", Side::X), ("y1", Side::Y)]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateColumn { name } if name == "x1"));
    }

    #[test]
    fn derived_square() {
        let ds = small()
            .add_derived(TransformKind::Square, &["x1"], "x1_sq")
            .unwrap();
        assert_eq!(ds.column("x1_sq").unwrap().values(), &[1.0, 4.0, 9.0]);
        assert_eq!(ds.column("x1_sq").unwrap().side, Side::X);
    }

    #[test]
    fn derived_shift() {
        let ds = small()
            .add_derived(TransformKind::Shift { constant: 10.0 }, &["y1"], "y1_pos")
            .unwrap();
        assert_eq!(ds.column("y1_pos").unwrap().values(), &[5.0, 10.0, 15.0]);
    }

    #[test]
    fn derived_product_same_side() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("x2", Side::X, vec![2.0, 2.0, 2.0]),
            ("y1", Side::Y, vec![1.0, 2.0, 4.0]),
        ])
        .unwrap();
        let ds = ds
            .add_derived(TransformKind::Product, &["x1", "x2"], "x1x2")
            .unwrap();
        assert_eq!(ds.column("x1x2").unwrap().values(), &[2.0, 4.0, 6.0]);

        let err = ds
            .add_derived(TransformKind::Product, &["x1", "y1"], "bad")
            .unwrap_err();
        assert!(matches!(err, Error::ProductAcrossSides { .. }));
    }

    #[test]
    fn derived_log_rejects_nonpositive() {
        let err = small()
            .add_derived(TransformKind::Log, &["y1"], "ly")
            .unwrap_err();
        match err {
            Error::LogNonPositive { column, row, .. } => {
                assert_eq!(column, "y1");
                assert_eq!(row, 1);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn derived_name_collision() {
        let err = small()
            .add_derived(TransformKind::Square, &["x1"], "x2")
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateColumn { .. }));
    }

    #[test]
    fn sign_flip_involution() {
        let ds = small();
        let flipped = ds.sign_flip("x1").unwrap();
        assert_eq!(flipped.column("x1").unwrap().values(), &[-1.0, -2.0, -3.0]);
        assert_eq!(flipped.column("x1").unwrap().lineage.len(), 1);
        // The original dataset is untouched.
        assert_eq!(ds.column("x1").unwrap().values(), &[1.0, 2.0, 3.0]);

        let restored = flipped.sign_flip("x1").unwrap();
        assert_eq!(restored.column("x1").unwrap().values(), &[1.0, 2.0, 3.0]);
        assert!(restored.column("x1").unwrap().lineage.is_empty());
    }

    #[test]
    fn shift_round_trip_is_bit_exact() {
        let values = vec![0.1, 1e-30, -7.25, 3.0];
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, values.clone()),
            ("y1", Side::Y, vec![1.0, 2.0, 3.0, 4.0]),
        ])
        .unwrap();
        let shifted = ds
            .add_derived(TransformKind::Shift { constant: 1.0 }, &["x1"], "s")
            .unwrap();
        let back = shifted
            .add_derived(TransformKind::Shift { constant: -1.0 }, &["s"], "t")
            .unwrap();
        let restored = back.column("t").unwrap().values();
        for (orig, got) in values.iter().zip(restored) {
            assert_eq!(orig.to_bits(), got.to_bits());
        }
    }

    #[test]
    fn constant_column_flagged() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("x2", Side::X, vec![4.0, 4.0, 4.0]),
            ("y1", Side::Y, vec![1.0, 0.0, 2.0]),
        ])
        .unwrap();
        assert_eq!(ds.constant_columns(), vec!["x2"]);
        assert_eq!(ds.active_names(Side::X), vec!["x1"]);
    }

    fn tempfile_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }
}
