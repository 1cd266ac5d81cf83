//! Type recovery: when a step rejects the shape of its input, retry with a
//! fixed sequence of conversions until one is accepted.

use serde::{Deserialize, Serialize};

use super::data::{Data, Frame, Series};
use super::StepError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    /// The value as it is.
    Identity,
    /// A one-column table as a column.
    TableToColumn,
    /// A column as a one-column table.
    ColumnToTable,
    /// Bare per-row scalars as a named column.
    ScalarsToColumn,
}

impl Approach {
    pub const SEQUENCE: [Approach; 4] = [
        Approach::Identity,
        Approach::TableToColumn,
        Approach::ColumnToTable,
        Approach::ScalarsToColumn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Identity => "identity",
            Approach::TableToColumn => "table_to_column",
            Approach::ColumnToTable => "column_to_table",
            Approach::ScalarsToColumn => "scalars_to_column",
        }
    }

    /// The converted value, or `None` when the approach does not apply.
    /// Bare scalars become a column called `name`.
    pub fn convert(self, data: &Data, name: &str) -> Option<Data> {
        match (self, data) {
            (Approach::Identity, d) => Some(d.clone()),
            (Approach::TableToColumn, Data::Table(f)) if f.width() == 1 => Some(Data::Column(f.columns()[0].clone())),
            (Approach::ColumnToTable, Data::Column(s)) => Some(Data::Table(Frame::new(s.len(), vec![s.clone()]))),
            (Approach::ScalarsToColumn, Data::Scalars(v)) => Some(Data::Column(Series::numeric(name, v.clone()))),
            _ => None,
        }
    }
}

/// Run `op` on `data`, trying `preferred` first when given, then the full
/// sequence. Only [`StepError::Incompatible`] triggers a retry. Returns the
/// result with the approach that produced it; when every approach fails the
/// error of the unconverted attempt is returned with the full trace.
pub fn apply_with_recovery<T>(
    data: &Data,
    name: &str,
    preferred: Option<Approach>,
    mut op: impl FnMut(&Data) -> Result<T, StepError>,
) -> Result<(T, Approach), StepError> {
    if let Some(a) = preferred {
        if let Some(converted) = a.convert(data, name) {
            match op(&converted) {
                Ok(v) => return Ok((v, a)),
                Err(StepError::Incompatible(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let mut trace = Vec::with_capacity(Approach::SEQUENCE.len());
    let mut original = None;
    for a in Approach::SEQUENCE {
        let Some(converted) = a.convert(data, name) else {
            trace.push(format!("{}: not applicable to {}", a.as_str(), data.shape_name()));
            continue;
        };
        match op(&converted) {
            Ok(v) => return Ok((v, a)),
            Err(StepError::Incompatible(msg)) => {
                trace.push(format!("{}: {msg}", a.as_str()));
                original.get_or_insert(StepError::Incompatible(msg));
            }
            Err(e) => return Err(e),
        }
    }
    Err(StepError::Recovery {
        error: Box::new(original.expect("identity always applies")),
        trace,
    })
}
