//! Typed, immutable tables loaded from CSV against an explicit schema.
//!
//! Dialect: UTF-8, comma separated, double-quote escaping, header row
//! required. An empty cell is the missing marker for every column kind.
//! Continuous cells hold finite reals (`NaN` is the in-memory missing
//! marker); literals such as `inf` or `NaN` are rejected at load.
//! Categorical and ordinal cells are interned into dense codes per column.
//! Levels are sorted (ordinal levels numerically when every level parses as
//! a number, lexicographically otherwise) so codes do not depend on row order.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{sample_indices, Sampler};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("CSV header does not contain schema column `{0}`")]
    MissingHeader(String),
    #[error("CSV header lists column `{0}` more than once")]
    DuplicateHeader(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a decimal real")]
    Unparseable { line: u64, column: String, value: String },
    #[error("line {line}, column `{column}`: non-finite literal `{value}`")]
    NonFinite { line: u64, column: String, value: String },
    #[error("line {line}, column `{column}`: missing value in a column that does not allow missing values")]
    Missing { line: u64, column: String },
    #[error("column `{column}` has {found} values, expected {expected}")]
    Length {
        column: String,
        found: usize,
        expected: usize,
    },
    #[error("split needs at least 2 rows, table has {0}")]
    TooFewRows(usize),
    #[error("development fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("subsample size {n} is outside 1..={rows}")]
    SubsampleSize { n: usize, rows: usize },
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Ordinal,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Ordinal => "ordinal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub allow_missing: bool,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, allow_missing: bool) -> Self {
        Self {
            name: name.into(),
            kind,
            allow_missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kind: Option<TargetKind>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>, target: Option<&str>) -> Result<Self, TableError> {
        let schema = Self {
            columns,
            target: target.map(str::to_owned),
            target_kind: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self, TableError> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if c.name.is_empty() {
                return Err(TableError::Schema("column names must be non-empty".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        if let Some(t) = &self.target {
            if !seen.contains(t.as_str()) {
                return Err(TableError::Schema(format!("target `{t}` is not a schema column")));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Declared target kind, or the one implied by the target column's kind.
    pub fn target_kind(&self) -> Option<TargetKind> {
        let target = self.target.as_ref()?;
        Some(
            self.target_kind
                .unwrap_or_else(|| match self.column(target).map(|c| c.kind) {
                    Some(ColumnKind::Continuous) => TargetKind::Continuous,
                    _ => TargetKind::Categorical,
                }),
        )
    }

    /// The schema of new data instances: every column except the target.
    pub fn without_target(&self) -> Schema {
        Schema {
            columns: self
                .columns
                .iter()
                .filter(|c| Some(&c.name) != self.target.as_ref())
                .cloned()
                .collect(),
            target: None,
            target_kind: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ColumnData {
    /// Finite reals; `NaN` marks a missing cell.
    Continuous(Vec<f64>),
    /// Interned codes into `levels`; `None` marks a missing cell.
    Coded {
        codes: Vec<Option<u32>>,
        levels: Arc<Vec<String>>,
    },
}

impl PartialEq for ColumnData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ColumnData::Continuous(a), ColumnData::Continuous(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
            }
            (ColumnData::Coded { codes: a, levels: la }, ColumnData::Coded { codes: b, levels: lb }) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|(x, y)| x.map(|c| &la[c as usize]) == y.map(|c| &lb[c as usize]))
            }
            _ => false,
        }
    }
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Coded { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Continuous(v) => v[row].is_nan(),
            ColumnData::Coded { codes, .. } => codes[row].is_none(),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.is_missing(r)).count()
    }

    /// Cell rendered as it appears in CSV (empty when missing).
    pub fn cell_text(&self, row: usize) -> String {
        match self {
            ColumnData::Continuous(v) if v[row].is_nan() => String::new(),
            ColumnData::Continuous(v) => format!("{}", v[row]),
            ColumnData::Coded { codes, levels } => codes[row].map(|c| levels[c as usize].clone()).unwrap_or_default(),
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Continuous(v) => ColumnData::Continuous(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Coded { codes, levels } => ColumnData::Coded {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: Arc::clone(levels),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    columns: Vec<ColumnData>,
    row_count: usize,
}

impl Table {
    /// Assemble a table from already-typed columns in schema order.
    pub fn from_columns(schema: Schema, columns: Vec<ColumnData>) -> Result<Self, TableError> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(TableError::Schema(format!(
                "{} columns supplied for a schema of {}",
                columns.len(),
                schema.columns.len()
            )));
        }
        let row_count = columns.first().map_or(0, ColumnData::len);
        for (spec, data) in schema.columns.iter().zip(&columns) {
            if data.len() != row_count {
                return Err(TableError::Length {
                    column: spec.name.clone(),
                    found: data.len(),
                    expected: row_count,
                });
            }
            let kind_ok = matches!(
                (spec.kind, data),
                (ColumnKind::Continuous, ColumnData::Continuous(_))
                    | (ColumnKind::Categorical | ColumnKind::Ordinal, ColumnData::Coded { .. })
            );
            if !kind_ok {
                return Err(TableError::Schema(format!(
                    "column `{}` data does not match kind {}",
                    spec.name,
                    spec.kind.as_str()
                )));
            }
            match data {
                ColumnData::Continuous(v) => {
                    if let Some(x) = v.iter().find(|x| x.is_infinite()) {
                        return Err(TableError::NonFinite {
                            line: 0,
                            column: spec.name.clone(),
                            value: x.to_string(),
                        });
                    }
                }
                ColumnData::Coded { codes, levels } => {
                    if codes.iter().flatten().any(|&c| c as usize >= levels.len()) {
                        return Err(TableError::Schema(format!(
                            "column `{}` has a code outside its level dictionary",
                            spec.name
                        )));
                    }
                }
            }
            if !spec.allow_missing && data.missing_count() > 0 {
                return Err(TableError::Missing {
                    line: 0,
                    column: spec.name.clone(),
                });
            }
        }
        Ok(Self {
            schema,
            columns,
            row_count,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> impl Iterator<Item = (&ColumnSpec, &ColumnData)> {
        self.schema.columns.iter().zip(&self.columns)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn column_spec(&self, name: &str) -> Option<&ColumnSpec> {
        self.schema.column(name)
    }

    /// Target column, if the schema names one.
    pub fn target(&self) -> Option<&ColumnData> {
        self.schema.target.as_deref().and_then(|t| self.column(t))
    }

    /// New table holding `rows` (in the given order). Level dictionaries are shared.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            row_count: rows.len(),
        }
    }

    /// Same rows restricted to the columns of `schema` (which must be a subset).
    pub fn conform_to(&self, schema: &Schema) -> Result<Table, TableError> {
        let mut columns = Vec::with_capacity(schema.columns.len());
        for spec in &schema.columns {
            let idx = self
                .schema
                .index_of(&spec.name)
                .ok_or_else(|| TableError::MissingHeader(spec.name.clone()))?;
            if self.schema.columns[idx].kind != spec.kind {
                return Err(TableError::Schema(format!(
                    "column `{}` is {} but {} was expected",
                    spec.name,
                    self.schema.columns[idx].kind.as_str(),
                    spec.kind.as_str()
                )));
            }
            columns.push(self.columns[idx].clone());
        }
        Table::from_columns(schema.clone(), columns)
    }

    /// Write the table in the load dialect, columns in schema order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        for row in 0..self.row_count {
            w.write_record(self.columns.iter().map(|c| c.cell_text(row)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// Parse CSV bytes against `schema`. Extra CSV columns are ignored.
pub fn load_table<R: Read>(source: R, schema: &Schema) -> Result<Table, TableError> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.columns.len());
    for spec in &schema.columns {
        let mut found = header.iter().enumerate().filter(|(_, h)| *h == spec.name);
        let pos = found
            .next()
            .map(|(i, _)| i)
            .ok_or_else(|| TableError::MissingHeader(spec.name.clone()))?;
        if found.next().is_some() {
            return Err(TableError::DuplicateHeader(spec.name.clone()));
        }
        positions.push(pos);
    }

    let mut builders: Vec<ColumnBuilder> = schema.columns.iter().map(|c| ColumnBuilder::new(c.kind)).collect();
    let mut record = csv::StringRecord::new();
    let mut line = 1u64;
    while reader.read_record(&mut record)? {
        line += 1;
        for ((spec, &pos), builder) in schema.columns.iter().zip(&positions).zip(&mut builders) {
            let cell = record.get(pos).unwrap_or("");
            builder.push(cell, spec, line)?;
        }
    }
    let columns = builders
        .into_iter()
        .zip(&schema.columns)
        .map(|(b, spec)| b.finish(spec.kind))
        .collect();
    Table::from_columns(schema.clone(), columns)
}

enum ColumnBuilder {
    Continuous(Vec<f64>),
    Coded {
        codes: Vec<Option<u32>>,
        intern: HashMap<String, u32>,
        levels: Vec<String>,
    },
}

impl ColumnBuilder {
    fn new(kind: ColumnKind) -> Self {
        match kind {
            ColumnKind::Continuous => ColumnBuilder::Continuous(Vec::new()),
            _ => ColumnBuilder::Coded {
                codes: Vec::new(),
                intern: HashMap::new(),
                levels: Vec::new(),
            },
        }
    }

    fn push(&mut self, cell: &str, spec: &ColumnSpec, line: u64) -> Result<(), TableError> {
        if cell.is_empty() {
            if !spec.allow_missing {
                return Err(TableError::Missing {
                    line,
                    column: spec.name.clone(),
                });
            }
            match self {
                ColumnBuilder::Continuous(v) => v.push(f64::NAN),
                ColumnBuilder::Coded { codes, .. } => codes.push(None),
            }
            return Ok(());
        }
        match self {
            ColumnBuilder::Continuous(v) => {
                let x: f64 = cell.parse().map_err(|_| TableError::Unparseable {
                    line,
                    column: spec.name.clone(),
                    value: cell.to_owned(),
                })?;
                if !x.is_finite() {
                    return Err(TableError::NonFinite {
                        line,
                        column: spec.name.clone(),
                        value: cell.to_owned(),
                    });
                }
                v.push(x);
            }
            ColumnBuilder::Coded { codes, intern, levels } => {
                let code = match intern.get(cell) {
                    Some(&c) => c,
                    None => {
                        let c = levels.len() as u32;
                        levels.push(cell.to_owned());
                        intern.insert(cell.to_owned(), c);
                        c
                    }
                };
                codes.push(Some(code));
            }
        }
        Ok(())
    }

    fn finish(self, kind: ColumnKind) -> ColumnData {
        match self {
            ColumnBuilder::Continuous(v) => ColumnData::Continuous(v),
            ColumnBuilder::Coded { codes, levels, .. } => {
                let sorted = sort_levels(&levels, kind);
                let mut remap = vec![0u32; levels.len()];
                for (new, &old) in sorted.iter().enumerate() {
                    remap[old] = new as u32;
                }
                ColumnData::Coded {
                    codes: codes.into_iter().map(|c| c.map(|c| remap[c as usize])).collect(),
                    levels: Arc::new(sorted.into_iter().map(|i| levels[i].clone()).collect()),
                }
            }
        }
    }
}

/// Indices of `levels` in canonical order.
fn sort_levels(levels: &[String], kind: ColumnKind) -> Vec<usize> {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    let numeric: Option<Vec<f64>> = if kind == ColumnKind::Ordinal {
        levels
            .iter()
            .map(|l| l.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect()
    } else {
        None
    };
    match numeric {
        Some(vals) => order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then_with(|| levels[a].cmp(&levels[b]))),
        None => order.sort_by(|&a, &b| levels[a].cmp(&levels[b])),
    }
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub development: Table,
    pub holdout: Table,
    pub seed: u64,
    /// Parent row indices of each side, ascending.
    pub development_rows: Vec<usize>,
    pub holdout_rows: Vec<usize>,
}

/// Development size for a split: `round(fraction * rows)`, kept within `1..rows`.
pub fn development_size(rows: usize, fraction: f64) -> usize {
    ((fraction * rows as f64).round() as usize).clamp(1, rows - 1)
}

/// Uniform random partition into development and holdout rows.
pub fn split(table: &Table, dev_fraction: f64, seed: u64) -> Result<SplitPair, TableError> {
    let rows = table.row_count();
    if rows < 2 {
        return Err(TableError::TooFewRows(rows));
    }
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(TableError::Fraction(dev_fraction));
    }
    let dev_n = development_size(rows, dev_fraction);
    let perm = Sampler::new(seed).permutation(rows);
    let mut dev: Vec<usize> = perm[..dev_n].to_vec();
    let mut hold: Vec<usize> = perm[dev_n..].to_vec();
    dev.sort_unstable();
    hold.sort_unstable();
    Ok(SplitPair {
        development: table.select_rows(&dev),
        holdout: table.select_rows(&hold),
        seed,
        development_rows: dev,
        holdout_rows: hold,
    })
}

/// Row indices chosen by [`subsample`], in draw order.
pub fn subsample_indices(rows: usize, n: usize, seed: u64) -> Result<Vec<usize>, TableError> {
    if n == 0 || n > rows {
        return Err(TableError::SubsampleSize { n, rows });
    }
    Ok(sample_indices(rows, n, seed))
}

/// `n` rows drawn without replacement, in draw order.
pub fn subsample(table: &Table, n: usize, seed: u64) -> Result<Table, TableError> {
    let idx = subsample_indices(table.row_count(), n, seed)?;
    Ok(table.select_rows(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(
            vec![
                ColumnSpec::new("age", ColumnKind::Continuous, true),
                ColumnSpec::new("sex", ColumnKind::Categorical, false),
            ],
            Some("sex"),
        )
        .unwrap()
    }

    #[test]
    fn loads_with_missing_cell() {
        let csv = "age,sex\n31,m\n,f\n47.5,f\n";
        let t = load_table(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.row_count(), 3);
        let age = t.column("age").unwrap();
        assert_eq!(age.missing_count(), 1);
        assert!(age.is_missing(1));
        match t.column("sex").unwrap() {
            ColumnData::Coded { codes, levels } => {
                assert_eq!(levels.as_slice(), ["f", "m"]);
                assert_eq!(codes, &vec![Some(1), Some(0), Some(0)]);
            }
            _ => panic!("sex should be coded"),
        }
        assert_eq!(t.schema().target_kind(), Some(TargetKind::Categorical));
    }

    #[test]
    fn header_missing_schema_column() {
        let err = load_table("age\n1\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, TableError::MissingHeader(c) if c == "sex"));
    }

    #[test]
    fn rejects_bad_cells() {
        let s = schema();
        assert!(matches!(
            load_table("age,sex\nabc,m\n".as_bytes(), &s),
            Err(TableError::Unparseable { line: 2, .. })
        ));
        assert!(matches!(
            load_table("age,sex\ninf,m\n".as_bytes(), &s),
            Err(TableError::NonFinite { .. })
        ));
        assert!(matches!(
            load_table("age,sex\nNaN,m\n".as_bytes(), &s),
            Err(TableError::NonFinite { .. })
        ));
        assert!(matches!(
            load_table("age,sex\n1,\n".as_bytes(), &s),
            Err(TableError::Missing { .. })
        ));
    }

    #[test]
    fn extra_columns_and_quoting() {
        let csv = "note,sex,age\n\"a, b\",\"m\"\"x\",2\n";
        let t = load_table(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.column("sex").unwrap().cell_text(0), "m\"x");
        let back = load_table(t.to_csv_string().as_bytes(), &schema()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn schema_invariants() {
        assert!(Schema::new(vec![ColumnSpec::new("", ColumnKind::Continuous, false)], None).is_err());
        assert!(Schema::new(
            vec![
                ColumnSpec::new("a", ColumnKind::Continuous, false),
                ColumnSpec::new("a", ColumnKind::Ordinal, false)
            ],
            None
        )
        .is_err());
        assert!(Schema::new(vec![ColumnSpec::new("a", ColumnKind::Continuous, false)], Some("b")).is_err());
        let json = r#"{"columns":[{"name":"a","kind":"ordinal","allow_missing":true}],"target":"a","target_kind":"continuous"}"#;
        let s = Schema::from_json(json).unwrap();
        assert_eq!(s.target_kind(), Some(TargetKind::Continuous));
        assert_eq!(Schema::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn ordinal_levels_sort_numerically() {
        let s = Schema::new(vec![ColumnSpec::new("o", ColumnKind::Ordinal, false)], None).unwrap();
        let t = load_table("o\n10\n9\n100\n".as_bytes(), &s).unwrap();
        match t.column("o").unwrap() {
            ColumnData::Coded { levels, codes } => {
                assert_eq!(levels.as_slice(), ["9", "10", "100"]);
                assert_eq!(codes, &vec![Some(1), Some(0), Some(2)]);
            }
            _ => unreachable!(),
        }
    }

    fn numbered(rows: usize) -> Table {
        let s = Schema::new(vec![ColumnSpec::new("i", ColumnKind::Continuous, false)], None).unwrap();
        Table::from_columns(s, vec![ColumnData::Continuous((0..rows).map(|i| i as f64).collect())]).unwrap()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let t = numbered(10);
        let p = split(&t, 0.8, 7).unwrap();
        assert_eq!(p.development.row_count(), 8);
        assert_eq!(p.holdout.row_count(), 2);
        let mut all: Vec<usize> = p.development_rows.iter().chain(&p.holdout_rows).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split(&t, 0.8, 7).unwrap(), p);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split(&numbered(1), 0.5, 0), Err(TableError::TooFewRows(1))));
        assert!(matches!(split(&numbered(5), 0.0, 0), Err(TableError::Fraction(_))));
        assert!(matches!(split(&numbered(5), 1.0, 0), Err(TableError::Fraction(_))));
        // tiny fractions still leave one row on each side
        let p = split(&numbered(2), 0.01, 0).unwrap();
        assert_eq!((p.development.row_count(), p.holdout.row_count()), (1, 1));
    }

    #[test]
    fn subsample_bounds() {
        let t = numbered(5);
        assert!(subsample(&t, 0, 0).is_err());
        assert!(subsample(&t, 6, 0).is_err());
        assert_eq!(subsample(&t, 1, 0).unwrap().row_count(), 1);
        let full = subsample(&t, 5, 3).unwrap();
        let mut vals: Vec<String> = (0..5).map(|r| full.column("i").unwrap().cell_text(r)).collect();
        vals.sort();
        assert_eq!(vals, ["0", "1", "2", "3", "4"]);
    }
}
