//! Feature definition documents.
//!
//! A feature definition is one JSON object per document:
//!
//! ```json
//! {
//!   "name": "lot_area_unskewed",
//!   "author": "alice",
//!   "description": "conditionally unskew lot area, then mean-impute",
//!   "input": ["Lot Area"],
//!   "transformer": [
//!     {"primitive": "conditional", "params": {"check": {"skew_gt": 0.75}, "then": "log1p(x)"}},
//!     {"primitive": "impute", "params": {"strategy": "mean"}}
//!   ]
//! }
//! ```
//!
//! A transformer entry is a step object `{"primitive", "params"}`, a bare
//! expression string (sugar for an `expr` step) or a two-element array
//! `[[columns...], step]` (sugar for a `subset` step).

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::primitives::Catalog;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("a document must define exactly one feature object; {0}")]
    NotSingle(String),
    #[error("`{field}`: {message}")]
    Field { field: String, message: String },
    #[error("`{field}`: unknown primitive `{primitive}`")]
    UnknownPrimitive { field: String, primitive: String },
    #[error("`{field}`: invalid parameters for `{primitive}`: {message}")]
    Params {
        field: String,
        primitive: String,
        message: String,
    },
    #[error("feature reference `{0}` is not in the registry")]
    MissingReference(String),
    #[error("feature reference cycle: {0}")]
    Cycle(String),
    #[error("feature `{feature}` declares {declared} output name(s) but produces {produced} value(s)")]
    OutputLength {
        feature: String,
        declared: usize,
        produced: usize,
    },
    #[error("feature `{feature}` has duplicate output name `{name}`")]
    DuplicateOutput { feature: String, name: String },
}

impl FeatureError {
    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        FeatureError::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// `author/name`, the identity of a feature within a project.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub String);

impl FeatureId {
    pub fn new(author: &str, name: &str) -> Self {
        FeatureId(format!("{author}/{name}"))
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One entry of a transformer list, as written by the author.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformerSpec {
    /// `{"primitive": ..., "params": {...}}`
    Step {
        primitive: String,
        params: Map<String, Value>,
    },
    /// A bare expression string.
    Expression(String),
    /// `[[columns...], inner]`
    Subset(Vec<String>, Box<TransformerSpec>),
}

impl TransformerSpec {
    pub fn step(primitive: &str, params: Value) -> Self {
        let params = match params {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => panic!("params must be an object, got {other}"),
        };
        TransformerSpec::Step {
            primitive: primitive.to_owned(),
            params,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("spec serializes")
    }

    /// Parse one transformer entry; `field` locates it in error messages.
    pub fn from_value(value: &Value, field: &str) -> Result<Self, FeatureError> {
        match value {
            Value::String(s) => Ok(TransformerSpec::Expression(s.clone())),
            Value::Array(items) if items.len() == 2 && items[0].is_array() => {
                let cols = string_list(&items[0], &format!("{field}[0]"))?;
                if cols.is_empty() {
                    return Err(FeatureError::field(
                        format!("{field}[0]"),
                        "subset column list is empty",
                    ));
                }
                let inner = TransformerSpec::from_value(&items[1], &format!("{field}[1]"))?;
                Ok(TransformerSpec::Subset(cols, Box::new(inner)))
            }
            Value::Object(obj) => {
                for key in obj.keys() {
                    if key != "primitive" && key != "params" {
                        return Err(FeatureError::field(format!("{field}.{key}"), "unknown key"));
                    }
                }
                let primitive = match obj.get("primitive") {
                    Some(Value::String(s)) => s.clone(),
                    Some(_) => return Err(FeatureError::field(format!("{field}.primitive"), "must be a string")),
                    None => return Err(FeatureError::field(field, "missing `primitive`")),
                };
                let params = match obj.get("params") {
                    None | Some(Value::Null) => Map::new(),
                    Some(Value::Object(m)) => m.clone(),
                    Some(_) => return Err(FeatureError::field(format!("{field}.params"), "must be an object")),
                };
                Ok(TransformerSpec::Step { primitive, params })
            }
            _ => Err(FeatureError::field(
                field,
                "expected a step object, an expression string or a [columns, step] pair",
            )),
        }
    }
}

impl Serialize for TransformerSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            TransformerSpec::Expression(s) => serializer.serialize_str(s),
            TransformerSpec::Subset(cols, inner) => {
                let mut seq = serializer.serialize_seq(Some(2))?;
                seq.serialize_element(cols)?;
                seq.serialize_element(inner)?;
                seq.end()
            }
            TransformerSpec::Step { primitive, params } => {
                #[derive(Serialize)]
                struct Step<'a> {
                    primitive: &'a str,
                    #[serde(skip_serializing_if = "Map::is_empty")]
                    params: &'a Map<String, Value>,
                }
                Step { primitive, params }.serialize(serializer)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureDefinition {
    pub name: String,
    pub author: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub input: Vec<String>,
    pub transformer: Vec<TransformerSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<Vec<String>>,
    /// Provenance text, stored verbatim and never interpreted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl FeatureDefinition {
    pub fn id(&self) -> FeatureId {
        FeatureId::new(&self.author, &self.name)
    }

    /// Paths of features referenced by `feature_ref` steps, in order of appearance.
    pub fn references(&self) -> Vec<String> {
        let mut out = Vec::new();
        for spec in &self.transformer {
            collect_refs(spec, &mut out);
        }
        out
    }
}

fn collect_refs(spec: &TransformerSpec, out: &mut Vec<String>) {
    match spec {
        TransformerSpec::Step { primitive, params } if primitive == "feature_ref" => {
            if let Some(Value::String(p)) = params.get("path") {
                if !out.contains(p) {
                    out.push(p.clone());
                }
            }
        }
        TransformerSpec::Step { primitive, params } if primitive == "chain" => {
            if let Some(Value::Array(steps)) = params.get("steps") {
                for (i, s) in steps.iter().enumerate() {
                    if let Ok(spec) = TransformerSpec::from_value(s, &format!("steps[{i}]")) {
                        collect_refs(&spec, out);
                    }
                }
            }
        }
        _ => {}
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn string_list(value: &Value, field: &str) -> Result<Vec<String>, FeatureError> {
    let Value::Array(items) = value else {
        return Err(FeatureError::field(field, "must be an array of strings"));
    };
    items
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            Value::String(_) => Err(FeatureError::field(format!("{field}[{i}]"), "must be non-empty")),
            _ => Err(FeatureError::field(format!("{field}[{i}]"), "must be a string")),
        })
        .collect()
}

fn optional_string(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, FeatureError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(FeatureError::field(key, "must be a string")),
    }
}

fn identifier(obj: &Map<String, Value>, key: &str) -> Result<String, FeatureError> {
    match obj.get(key) {
        Some(Value::String(s)) if is_identifier(s) => Ok(s.clone()),
        Some(Value::String(s)) => Err(FeatureError::field(
            key,
            format!("`{s}` is not an identifier ([A-Za-z_][A-Za-z0-9_]*)"),
        )),
        Some(_) => Err(FeatureError::field(key, "must be a string")),
        None => Err(FeatureError::field(key, "is required")),
    }
}

/// Structural parse: exactly one well-formed feature object. Primitive names
/// and parameters are not checked against the catalog.
pub fn parse_document(document: &str) -> Result<FeatureDefinition, FeatureError> {
    let mut values = Vec::new();
    for v in serde_json::Deserializer::from_str(document).into_iter::<Value>() {
        values.push(v.map_err(|e| FeatureError::Json(e.to_string()))?);
    }
    let value = match values.len() {
        0 => return Err(FeatureError::NotSingle("the document is empty".into())),
        1 => values.pop().expect("one value"),
        n => return Err(FeatureError::NotSingle(format!("found {n} top-level JSON values"))),
    };
    FeatureDefinition::from_value(value)
}

impl FeatureDefinition {
    /// Structural parse of an already-decoded JSON value.
    pub fn from_value(value: Value) -> Result<FeatureDefinition, FeatureError> {
        parse_object(value)
    }
}

impl<'de> serde::Deserialize<'de> for FeatureDefinition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        FeatureDefinition::from_value(value).map_err(serde::de::Error::custom)
    }
}

fn parse_object(value: Value) -> Result<FeatureDefinition, FeatureError> {
    let obj = match value {
        Value::Object(obj) => obj,
        Value::Array(items) => {
            return Err(FeatureError::NotSingle(format!(
                "found an array of {} value(s)",
                items.len()
            )))
        }
        other => return Err(FeatureError::NotSingle(format!("found {}", json_kind(&other)))),
    };
    const KEYS: [&str; 7] = [
        "name",
        "author",
        "description",
        "input",
        "transformer",
        "output",
        "source",
    ];
    if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(FeatureError::field(k.as_str(), "unknown key"));
    }

    let name = identifier(&obj, "name")?;
    let author = identifier(&obj, "author")?;
    let description = optional_string(&obj, "description")?;
    let source = optional_string(&obj, "source")?;

    let input = string_list(obj.get("input").unwrap_or(&Value::Null), "input")?;
    if input.is_empty() {
        return Err(FeatureError::field("input", "must list at least one column"));
    }
    for (i, col) in input.iter().enumerate() {
        if input[..i].contains(col) {
            return Err(FeatureError::field(
                format!("input[{i}]"),
                format!("duplicate input `{col}`"),
            ));
        }
    }

    let transformer = match obj.get("transformer") {
        Some(Value::Array(items)) if !items.is_empty() => items
            .iter()
            .enumerate()
            .map(|(i, v)| TransformerSpec::from_value(v, &format!("transformer[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        Some(Value::Array(_)) => return Err(FeatureError::field("transformer", "must list at least one step")),
        Some(_) => return Err(FeatureError::field("transformer", "must be an array")),
        None => return Err(FeatureError::field("transformer", "is required")),
    };

    let output = match obj.get("output") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let names = string_list(v, "output")?;
            if names.is_empty() {
                return Err(FeatureError::field("output", "must not be empty when present"));
            }
            Some(names)
        }
    };

    Ok(FeatureDefinition {
        name,
        author,
        description,
        input,
        transformer,
        output,
        source,
    })
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Parse and validate a feature document against the standard primitive catalog.
pub fn parse_feature(document: &str) -> Result<FeatureDefinition, FeatureError> {
    let fd = parse_document(document)?;
    Catalog::standard().validate_definition(&fd)?;
    Ok(fd)
}

/// Canonical JSON: fixed key order, sorted parameter keys, two-space
/// indentation and a trailing newline.
pub fn serialize_feature(fd: &FeatureDefinition) -> String {
    let mut s = serde_json::to_string_pretty(fd).expect("feature serializes");
    s.push('\n');
    s
}

/// Feature documents addressable by repository-relative path.
pub type Registry = BTreeMap<String, FeatureDefinition>;

/// A definition with every `feature_ref` resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedFeature {
    pub definition: FeatureDefinition,
    /// Referenced features by path, in order of first reference.
    pub dependencies: Vec<(String, ResolvedFeature)>,
}

impl ResolvedFeature {
    pub fn id(&self) -> FeatureId {
        self.definition.id()
    }

    /// Edges `(dependent, dependency)` over the whole reference tree, deduplicated.
    pub fn edges(&self) -> Vec<(FeatureId, FeatureId)> {
        let mut out = Vec::new();
        self.collect_edges(&mut out);
        out
    }

    fn collect_edges(&self, out: &mut Vec<(FeatureId, FeatureId)>) {
        for (_, dep) in &self.dependencies {
            let edge = (self.id(), dep.id());
            if !out.contains(&edge) {
                out.push(edge);
            }
            dep.collect_edges(out);
        }
    }
}

pub fn resolve_references(fd: &FeatureDefinition, registry: &Registry) -> Result<ResolvedFeature, FeatureError> {
    let mut stack = Vec::new();
    resolve_inner(fd, registry, &mut stack)
}

fn resolve_inner(
    fd: &FeatureDefinition,
    registry: &Registry,
    stack: &mut Vec<FeatureId>,
) -> Result<ResolvedFeature, FeatureError> {
    let id = fd.id();
    if stack.contains(&id) {
        let mut chain: Vec<String> = stack.iter().map(|s| s.0.clone()).collect();
        chain.push(id.0);
        return Err(FeatureError::Cycle(chain.join(" -> ")));
    }
    stack.push(id);
    let mut dependencies = Vec::new();
    for path in fd.references() {
        let dep = registry
            .get(&path)
            .ok_or_else(|| FeatureError::MissingReference(path.clone()))?;
        dependencies.push((path, resolve_inner(dep, registry, stack)?));
    }
    stack.pop();
    Ok(ResolvedFeature {
        definition: fd.clone(),
        dependencies,
    })
}

/// Output column names for a fitted feature of dimension `fitted_dim`.
pub fn infer_output_names(fd: &FeatureDefinition, fitted_dim: usize) -> Result<Vec<String>, FeatureError> {
    let names = match &fd.output {
        Some(names) if names.len() == fitted_dim => names.clone(),
        Some(names) => {
            return Err(FeatureError::OutputLength {
                feature: fd.id().0,
                declared: names.len(),
                produced: fitted_dim,
            })
        }
        None if fitted_dim == 1 => vec![fd.name.clone()],
        None => (0..fitted_dim).map(|k| format!("{}_{k}", fd.name)).collect(),
    };
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(FeatureError::DuplicateOutput {
                feature: fd.id().0,
                name: n.clone(),
            });
        }
    }
    Ok(names)
}
