//! Values flowing between transformer steps.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::StepError;
use crate::table::{ColumnData, ColumnKind, Table};

#[derive(Debug, Clone)]
pub enum Values {
    /// Reals; `NaN` is missing, infinities may appear after arithmetic.
    Numeric(Vec<f64>),
    Coded {
        codes: Vec<Option<u32>>,
        levels: Arc<Vec<String>>,
        ordinal: bool,
    },
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub values: Values,
}

/// How numeric interpretation treats coded columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodedAsNumber {
    /// Only ordinal columns whose levels all parse as numbers.
    OrdinalOnly,
    /// Any coded column whose levels all parse as numbers.
    AnyNumericLevels,
}

impl Series {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values: Values::Numeric(values),
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            Values::Numeric(v) => v.len(),
            Values::Coded { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_coded(&self) -> bool {
        matches!(self.values, Values::Coded { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.values {
            Values::Numeric(_) => "numeric",
            Values::Coded { ordinal: true, .. } => "ordinal",
            Values::Coded { ordinal: false, .. } => "categorical",
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.values {
            Values::Numeric(v) => v[row].is_nan(),
            Values::Coded { codes, .. } => codes[row].is_none(),
        }
    }

    pub fn from_column(name: &str, kind: ColumnKind, data: &ColumnData) -> Self {
        let values = match data {
            ColumnData::Continuous(v) => Values::Numeric(v.clone()),
            ColumnData::Coded { codes, levels } => Values::Coded {
                codes: codes.clone(),
                levels: Arc::clone(levels),
                ordinal: kind == ColumnKind::Ordinal,
            },
        };
        Self {
            name: name.to_owned(),
            values,
        }
    }

    /// Numeric view; coded columns are converted when `policy` allows it and
    /// every level parses as a finite number.
    pub fn as_numbers(&self, policy: CodedAsNumber, primitive: &str) -> Result<Cow<'_, [f64]>, StepError> {
        match &self.values {
            Values::Numeric(v) => Ok(Cow::Borrowed(v)),
            Values::Coded { codes, levels, ordinal } => {
                let allowed = *ordinal || policy == CodedAsNumber::AnyNumericLevels;
                let parsed: Option<Vec<f64>> = levels
                    .iter()
                    .map(|l| l.parse::<f64>().ok().filter(|x| x.is_finite()))
                    .collect();
                match parsed {
                    Some(parsed) if allowed => Ok(Cow::Owned(
                        codes
                            .iter()
                            .map(|c| c.map_or(f64::NAN, |c| parsed[c as usize]))
                            .collect(),
                    )),
                    _ => Err(StepError::UnsupportedKind {
                        primitive: primitive.to_owned(),
                        column: self.name.clone(),
                        kind: self.kind_name(),
                    }),
                }
            }
        }
    }

    /// Category of a cell, `None` when missing.
    pub fn category(&self, row: usize) -> Option<Category> {
        match &self.values {
            Values::Numeric(v) => {
                let x = v[row];
                (!x.is_nan()).then(|| Category::number(x))
            }
            Values::Coded { codes, levels, .. } => codes[row].map(|c| Category::Level(levels[c as usize].clone())),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Series {
        let values = match &self.values {
            Values::Numeric(v) => Values::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Values::Coded { codes, levels, ordinal } => Values::Coded {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: Arc::clone(levels),
                ordinal: *ordinal,
            },
        };
        Series {
            name: self.name.clone(),
            values,
        }
    }
}

/// A category key: a level string for coded columns, a number otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Category {
    Number(f64),
    Level(String),
}

impl Category {
    pub fn number(x: f64) -> Self {
        // -0 and 0 are the same category
        Category::Number(if x == 0.0 { 0.0 } else { x })
    }

    /// Hashable identity.
    pub fn key(&self) -> CategoryKey {
        match self {
            Category::Number(x) => CategoryKey::Number(x.to_bits()),
            Category::Level(s) => CategoryKey::Level(s.clone()),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Number(x) => write!(f, "{x}"),
            Category::Level(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CategoryKey {
    Number(u64),
    Level(String),
}

/// Distinct categories of a series in canonical order (level order for coded
/// columns, ascending for numeric ones) with their counts.
pub fn category_counts(series: &Series) -> Vec<(Category, usize)> {
    match &series.values {
        Values::Coded { codes, levels, .. } => {
            let mut counts = vec![0usize; levels.len()];
            for c in codes.iter().flatten() {
                counts[*c as usize] += 1;
            }
            counts
                .into_iter()
                .enumerate()
                .filter(|(_, n)| *n > 0)
                .map(|(i, n)| (Category::Level(levels[i].clone()), n))
                .collect()
        }
        Values::Numeric(v) => {
            let mut vals: Vec<f64> = v
                .iter()
                .copied()
                .filter(|x| !x.is_nan())
                .map(|x| if x == 0.0 { 0.0 } else { x })
                .collect();
            vals.sort_by(f64::total_cmp);
            let mut out: Vec<(Category, usize)> = Vec::new();
            for x in vals {
                match out.last_mut() {
                    Some((Category::Number(y), n)) if y.to_bits() == x.to_bits() => *n += 1,
                    _ => out.push((Category::Number(x), 1)),
                }
            }
            out
        }
    }
}

/// Index of each category for fast lookups.
pub fn category_index(categories: &[Category]) -> HashMap<CategoryKey, usize> {
    categories.iter().enumerate().map(|(i, c)| (c.key(), i)).collect()
}

#[derive(Debug, Clone)]
pub struct Frame {
    rows: usize,
    columns: Vec<Series>,
}

impl Frame {
    pub fn new(rows: usize, columns: Vec<Series>) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == rows));
        Self { rows, columns }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Series] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Series> {
        self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&Series> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Frame {
        Frame {
            rows: rows.len(),
            columns: self.columns.iter().map(|c| c.select_rows(rows)).collect(),
        }
    }

    /// Project the named raw columns out of a table.
    pub fn project(table: &Table, names: &[String]) -> Result<Frame, StepError> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let (spec, data) = table
                .columns()
                .find(|(s, _)| &s.name == name)
                .ok_or_else(|| StepError::Invalid(format!("input column `{name}` is not in the data")))?;
            columns.push(Series::from_column(name, spec.kind, data));
        }
        Ok(Frame::new(table.row_count(), columns))
    }
}

/// The value handed to, and returned by, a transformer step.
#[derive(Debug, Clone)]
pub enum Data {
    /// A single named column.
    Column(Series),
    /// Zero or more named columns.
    Table(Frame),
    /// Bare per-row numbers without a name, as produced by expressions.
    Scalars(Vec<f64>),
}

impl Data {
    /// The initial value for a feature: a column for a single input, a table otherwise.
    pub fn from_inputs(frame: Frame) -> Data {
        if frame.width() == 1 {
            Data::Column(frame.into_columns().pop().expect("one column"))
        } else {
            Data::Table(frame)
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Data::Column(s) => s.len(),
            Data::Table(f) => f.rows(),
            Data::Scalars(v) => v.len(),
        }
    }

    pub fn shape_name(&self) -> String {
        match self {
            Data::Column(_) => "a column".into(),
            Data::Table(f) => format!("a table of {} column(s)", f.width()),
            Data::Scalars(_) => "bare scalars".into(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Data {
        match self {
            Data::Column(s) => Data::Column(s.select_rows(rows)),
            Data::Table(f) => Data::Table(f.select_rows(rows)),
            Data::Scalars(v) => Data::Scalars(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    /// Named columns, with bare scalars named `fallback_name`.
    pub fn into_series(self, fallback_name: &str) -> Vec<Series> {
        match self {
            Data::Column(s) => vec![s],
            Data::Table(f) => f.into_columns(),
            Data::Scalars(v) => vec![Series::numeric(fallback_name, v)],
        }
    }

    /// Column-major numeric values of a feature output. Categorical (nominal)
    /// outputs are not feature values and are rejected.
    pub fn into_numeric(self) -> Result<Vec<Series>, StepError> {
        self.into_series("value")
            .into_iter()
            .map(|s| match &s.values {
                Values::Numeric(_) => Ok(s),
                Values::Coded { .. } => {
                    let numbers = s
                        .as_numbers(CodedAsNumber::OrdinalOnly, "output")
                        .map_err(|_| StepError::NonNumericOutput(s.name.clone()))?
                        .into_owned();
                    Ok(Series::numeric(s.name, numbers))
                }
            })
            .collect()
    }
}

/// Shape helpers used by primitives.
pub(crate) fn expect_single(data: &Data, primitive: &str) -> Result<Series, StepError> {
    match data {
        Data::Column(s) => Ok(s.clone()),
        other => Err(StepError::Incompatible(format!(
            "`{primitive}` expects a single column, got {}",
            other.shape_name()
        ))),
    }
}

pub(crate) fn expect_columns<'a>(data: &'a Data, primitive: &str) -> Result<Vec<&'a Series>, StepError> {
    match data {
        Data::Column(s) => Ok(vec![s]),
        Data::Table(f) => Ok(f.columns().iter().collect()),
        Data::Scalars(_) => Err(StepError::Incompatible(format!(
            "`{primitive}` expects named columns, got bare scalars"
        ))),
    }
}

pub(crate) fn expect_table<'a>(data: &'a Data, primitive: &str) -> Result<&'a Frame, StepError> {
    match data {
        Data::Table(f) => Ok(f),
        other => Err(StepError::Incompatible(format!(
            "`{primitive}` expects a table, got {}",
            other.shape_name()
        ))),
    }
}

/// Rebuild a value of the same shape as `like` from output columns.
pub(crate) fn same_shape(like: &Data, rows: usize, mut columns: Vec<Series>) -> Data {
    if matches!(like, Data::Column(_)) && columns.len() == 1 {
        Data::Column(columns.pop().expect("one column"))
    } else {
        Data::Table(Frame::new(rows, columns))
    }
}
