//! Feature-engineering primitives: the catalog, parameter contracts and
//! fit/transform semantics.
//!
//! Every step learns only from the data it is fitted on. Transforming a row
//! depends on nothing but the learned parameters and that row.

pub mod data;
mod fit;
pub mod recovery;
pub mod stats;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::expr::{parse_expression, ExprError, Expression};
use crate::feature::{FeatureDefinition, FeatureError, TransformerSpec};

pub use data::{Category, CodedAsNumber, Data, Frame, Series, Values};
pub use fit::{FittedStep, Learned, StepContext, TransformerStep};
pub use recovery::{apply_with_recovery, Approach};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    /// The value has the wrong shape for the step; type recovery may retry.
    #[error("incompatible input: {0}")]
    Incompatible(String),
    #[error("`{primitive}` does not support {kind} column `{column}`")]
    UnsupportedKind {
        primitive: String,
        column: String,
        kind: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("output column `{0}` is categorical; feature values must be numeric")]
    NonNumericOutput(String),
    #[error("`{0}` cannot be fitted on zero rows")]
    Empty(String),
    #[error("transform called on an unfitted step")]
    NotFitted,
    #[error("`{primitive}` found no observed values in column `{column}`")]
    NoObservedValues { primitive: String, column: String },
    #[error("column `{column}` has category `{category}` that was not seen during fit")]
    UnseenCategory { column: String, category: String },
    #[error("column `{column}` has value `{value}` with no mapping and no default")]
    Unmapped { column: String, value: String },
    #[error("groupwise `by` column `{0}` is not among the step inputs")]
    GroupByMissing(String),
    #[error("values of nested feature `{0}` are not available")]
    NestedUnavailable(String),
    #[error("step was fitted on {expected} column(s) but received {found}")]
    Arity { expected: usize, found: usize },
    #[error("{error} (type recovery tried: {})", trace.join("; "))]
    Recovery { error: Box<StepError>, trace: Vec<String> },
}

/// A transformer spec that does not instantiate. `path` locates the problem
/// relative to the transformer entry, e.g. `.params.steps[1]`.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{path}: unknown primitive `{primitive}`")]
    UnknownPrimitive { path: String, primitive: String },
    #[error("{path}: invalid parameters for `{primitive}`: {message}")]
    Params {
        path: String,
        primitive: String,
        message: String,
    },
}

impl SpecError {
    pub fn into_feature_error(self, field: &str) -> FeatureError {
        match self {
            SpecError::UnknownPrimitive { path, primitive } => FeatureError::UnknownPrimitive {
                field: format!("{field}{path}"),
                primitive,
            },
            SpecError::Params {
                path,
                primitive,
                message,
            } => FeatureError::Params {
                field: format!("{field}{path}"),
                primitive,
                message,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImputeStrategy {
    Mean,
    Median,
    MostFrequent,
    Constant(Category),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Standard,
    MinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownPolicy {
    Zeros,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    SkewGt,
    MissingFracGt,
    VarianceLt,
    CardinalityGt,
}

impl CheckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::SkewGt => "skew_gt",
            CheckKind::MissingFracGt => "missing_frac_gt",
            CheckKind::VarianceLt => "variance_lt",
            CheckKind::CardinalityGt => "cardinality_gt",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::SkewGt, Self::MissingFracGt, Self::VarianceLt, Self::CardinalityGt]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub kind: CheckKind,
    pub threshold: f64,
}

impl Check {
    /// `variance_lt` holds below the threshold; the others strictly above it.
    pub fn holds(&self, statistic: f64) -> bool {
        match self.kind {
            CheckKind::VarianceLt => statistic < self.threshold,
            _ => statistic > self.threshold,
        }
    }
}

/// An instantiated, unfitted primitive with validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Identity,
    Expr(Expression),
    Impute(ImputeStrategy),
    Scale(ScaleMode),
    OneHot {
        max_cardinality: Option<usize>,
        handle_unknown: UnknownPolicy,
    },
    ValueMap {
        mapping: Vec<(String, f64)>,
        default: Option<f64>,
    },
    NullIndicator,
    ClipQuantile {
        lo_q: f64,
        hi_q: f64,
    },
    Conditional {
        check: Check,
        then: Box<Primitive>,
        otherwise: Option<Box<Primitive>>,
    },
    Groupwise {
        by: String,
        inner: Box<Primitive>,
    },
    Subset {
        inputs: Vec<String>,
        inner: Box<Primitive>,
    },
    FeatureRef {
        path: String,
    },
    Chain(Vec<Primitive>),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Identity => "identity",
            Primitive::Expr(_) => "expr",
            Primitive::Impute(_) => "impute",
            Primitive::Scale(_) => "scale",
            Primitive::OneHot { .. } => "one_hot",
            Primitive::ValueMap { .. } => "value_map",
            Primitive::NullIndicator => "null_indicator",
            Primitive::ClipQuantile { .. } => "clip_quantile",
            Primitive::Conditional { .. } => "conditional",
            Primitive::Groupwise { .. } => "groupwise",
            Primitive::Subset { .. } => "subset",
            Primitive::FeatureRef { .. } => "feature_ref",
            Primitive::Chain(_) => "chain",
        }
    }

    /// Canonical spec: always the `{"primitive", "params"}` form.
    pub fn to_spec(&self) -> TransformerSpec {
        let mut p = Map::new();
        let mut put = |k: &str, v: Value| {
            p.insert(k.to_owned(), v);
        };
        match self {
            Primitive::Identity | Primitive::NullIndicator => {}
            Primitive::Expr(e) => put("expression", Value::from(e.source())),
            Primitive::Impute(s) => match s {
                ImputeStrategy::Mean => put("strategy", "mean".into()),
                ImputeStrategy::Median => put("strategy", "median".into()),
                ImputeStrategy::MostFrequent => put("strategy", "most_frequent".into()),
                ImputeStrategy::Constant(c) => {
                    put("strategy", "constant".into());
                    put("value", serde_json::to_value(c).expect("category serializes"));
                }
            },
            Primitive::Scale(m) => put(
                "mode",
                match m {
                    ScaleMode::Standard => "standard",
                    ScaleMode::MinMax => "minmax",
                }
                .into(),
            ),
            Primitive::OneHot {
                max_cardinality,
                handle_unknown,
            } => {
                if let Some(m) = max_cardinality {
                    put("max_cardinality", (*m).into());
                }
                put(
                    "handle_unknown",
                    match handle_unknown {
                        UnknownPolicy::Zeros => "zeros",
                        UnknownPolicy::Error => "error",
                    }
                    .into(),
                );
            }
            Primitive::ValueMap { mapping, default } => {
                let m: Map<String, Value> = mapping.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
                put("mapping", Value::Object(m));
                if let Some(d) = default {
                    put("default", Value::from(*d));
                }
            }
            Primitive::ClipQuantile { lo_q, hi_q } => {
                put("lo_q", Value::from(*lo_q));
                put("hi_q", Value::from(*hi_q));
            }
            Primitive::Conditional { check, then, otherwise } => {
                let mut c = Map::new();
                c.insert(check.kind.as_str().to_owned(), Value::from(check.threshold));
                put("check", Value::Object(c));
                put("then", then.to_spec().to_value());
                if let Some(o) = otherwise {
                    put("else", o.to_spec().to_value());
                }
            }
            Primitive::Groupwise { by, inner } => {
                put("by", by.as_str().into());
                put("inner", inner.to_spec().to_value());
            }
            Primitive::Subset { inputs, inner } => {
                put("inputs", inputs.clone().into());
                put("inner", inner.to_spec().to_value());
            }
            Primitive::FeatureRef { path } => put("path", path.as_str().into()),
            Primitive::Chain(steps) => put(
                "steps",
                Value::Array(steps.iter().map(|s| s.to_spec().to_value()).collect()),
            ),
        }
        TransformerSpec::Step {
            primitive: self.name().to_owned(),
            params: p,
        }
    }

    /// Visit this primitive and every nested one, with a flag telling whether
    /// a `feature_ref` would be allowed at that position.
    fn visit<'a>(&'a self, ref_allowed: bool, f: &mut impl FnMut(&'a Primitive, bool)) {
        f(self, ref_allowed);
        match self {
            Primitive::Conditional { then, otherwise, .. } => {
                then.visit(false, f);
                if let Some(o) = otherwise {
                    o.visit(false, f);
                }
            }
            Primitive::Groupwise { inner, .. } | Primitive::Subset { inner, .. } => inner.visit(false, f),
            Primitive::Chain(steps) => steps.iter().for_each(|s| s.visit(ref_allowed, f)),
            _ => {}
        }
    }
}

/// What a catalog entry accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    /// Whether fitting reads the target. No standard primitive does.
    pub supervised: bool,
    pub doc: &'static str,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    entries: BTreeMap<&'static str, CatalogEntry>,
}

const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "identity",
        required: &[],
        optional: &[],
        supervised: false,
        doc: "pass values through unchanged",
    },
    CatalogEntry {
        name: "expr",
        required: &["expression"],
        optional: &[],
        supervised: false,
        doc: "row-wise arithmetic expression",
    },
    CatalogEntry {
        name: "impute",
        required: &["strategy"],
        optional: &["value"],
        supervised: false,
        doc: "fill missing cells with a learned mean, median, most frequent value or a constant",
    },
    CatalogEntry {
        name: "scale",
        required: &[],
        optional: &["mode"],
        supervised: false,
        doc: "standardize (population std) or min-max scale",
    },
    CatalogEntry {
        name: "one_hot",
        required: &[],
        optional: &["max_cardinality", "handle_unknown"],
        supervised: false,
        doc: "indicator column per learned category",
    },
    CatalogEntry {
        name: "value_map",
        required: &["mapping"],
        optional: &["default"],
        supervised: false,
        doc: "map category labels to numbers",
    },
    CatalogEntry {
        name: "null_indicator",
        required: &[],
        optional: &[],
        supervised: false,
        doc: "1 where a cell is missing, else 0",
    },
    CatalogEntry {
        name: "clip_quantile",
        required: &["lo_q", "hi_q"],
        optional: &[],
        supervised: false,
        doc: "clip to learned quantiles",
    },
    CatalogEntry {
        name: "conditional",
        required: &["check", "then"],
        optional: &["else"],
        supervised: false,
        doc: "per column, apply `then` when a learned statistic passes the check, else `else` or nothing",
    },
    CatalogEntry {
        name: "groupwise",
        required: &["by", "inner"],
        optional: &[],
        supervised: false,
        doc: "fit `inner` separately within each group of `by`, with a global fallback",
    },
    CatalogEntry {
        name: "subset",
        required: &["inputs", "inner"],
        optional: &[],
        supervised: false,
        doc: "apply `inner` to some columns and pass the rest through",
    },
    CatalogEntry {
        name: "feature_ref",
        required: &["path"],
        optional: &[],
        supervised: false,
        doc: "append the values of another feature",
    },
    CatalogEntry {
        name: "chain",
        required: &["steps"],
        optional: &[],
        supervised: false,
        doc: "apply steps in sequence",
    },
];

impl Catalog {
    pub fn standard() -> &'static Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG.get_or_init(|| Catalog {
            entries: ENTRIES.iter().map(|e| (e.name, e.clone())).collect(),
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values()
    }

    pub fn get(&self, name: &str) -> Option<&CatalogEntry> {
        self.entries.get(name)
    }

    pub fn instantiate(&self, spec: &TransformerSpec) -> Result<Primitive, SpecError> {
        self.instantiate_at(spec, "")
    }

    fn instantiate_at(&self, spec: &TransformerSpec, path: &str) -> Result<Primitive, SpecError> {
        match spec {
            TransformerSpec::Expression(text) => Ok(Primitive::Expr(expression(text, path, "expr")?)),
            TransformerSpec::Subset(inputs, inner) => Ok(Primitive::Subset {
                inputs: inputs.clone(),
                inner: Box::new(self.instantiate_at(inner, &format!("{path}[1]"))?),
            }),
            TransformerSpec::Step { primitive, params } => {
                let entry = self
                    .entries
                    .get(primitive.as_str())
                    .ok_or_else(|| SpecError::UnknownPrimitive {
                        path: path.to_owned(),
                        primitive: primitive.clone(),
                    })?;
                let p = Params {
                    catalog: self,
                    primitive: entry.name,
                    path,
                    map: params,
                };
                p.check_keys(entry)?;
                p.build()
            }
        }
    }

    /// Instantiate every step of a definition and check expression variables
    /// and `feature_ref` placement.
    pub fn validate_definition(&self, fd: &FeatureDefinition) -> Result<Vec<Primitive>, FeatureError> {
        let mut steps = Vec::with_capacity(fd.transformer.len());
        for (i, spec) in fd.transformer.iter().enumerate() {
            let field = format!("transformer[{i}]");
            steps.push(self.instantiate(spec).map_err(|e| e.into_feature_error(&field))?);
        }
        let mut has_ref = false;
        let mut misplaced = None;
        for (i, step) in steps.iter().enumerate() {
            step.visit(true, &mut |p, allowed| {
                if matches!(p, Primitive::FeatureRef { .. }) {
                    has_ref = true;
                    if !allowed && misplaced.is_none() {
                        misplaced = Some(i);
                    }
                }
            });
        }
        if let Some(i) = misplaced {
            return Err(FeatureError::Params {
                field: format!("transformer[{i}]"),
                primitive: "feature_ref".into(),
                message: "feature_ref may only appear at the top level of a transformer or in a top-level chain".into(),
            });
        }
        // Nested feature outputs add columns whose names are only known
        // once the referenced feature is fitted.
        if !has_ref {
            for (i, step) in steps.iter().enumerate() {
                let mut bad = None;
                step.visit(true, &mut |p, _| {
                    if let Primitive::Expr(e) = p {
                        if bad.is_none() {
                            bad = parse_expression(e.source(), &fd.input).err();
                        }
                    }
                });
                if let Some(err) = bad {
                    return Err(FeatureError::Params {
                        field: format!("transformer[{i}]"),
                        primitive: "expr".into(),
                        message: err.to_string(),
                    });
                }
            }
        }
        Ok(steps)
    }

    /// Instantiate the transformer list of a definition as one chain.
    pub fn instantiate_definition(&self, fd: &FeatureDefinition) -> Result<Primitive, FeatureError> {
        let mut steps = self.validate_definition(fd)?;
        Ok(if steps.len() == 1 {
            steps.pop().expect("one step")
        } else {
            Primitive::Chain(steps)
        })
    }
}

fn expression(text: &str, path: &str, primitive: &str) -> Result<Expression, SpecError> {
    Expression::parse_unchecked(text).map_err(|e: ExprError| SpecError::Params {
        path: path.to_owned(),
        primitive: primitive.to_owned(),
        message: e.to_string(),
    })
}

struct Params<'a> {
    catalog: &'a Catalog,
    primitive: &'static str,
    path: &'a str,
    map: &'a Map<String, Value>,
}

impl Params<'_> {
    fn err(&self, message: impl Into<String>) -> SpecError {
        SpecError::Params {
            path: self.path.to_owned(),
            primitive: self.primitive.to_owned(),
            message: message.into(),
        }
    }

    fn check_keys(&self, entry: &CatalogEntry) -> Result<(), SpecError> {
        for key in self.map.keys() {
            if !entry.required.contains(&key.as_str()) && !entry.optional.contains(&key.as_str()) {
                return Err(self.err(format!("unknown parameter `{key}`")));
            }
        }
        for key in entry.required {
            if !self.map.contains_key(*key) {
                return Err(self.err(format!("missing parameter `{key}`")));
            }
        }
        Ok(())
    }

    fn string(&self, key: &str) -> Result<&str, SpecError> {
        match self.map.get(key) {
            Some(Value::String(s)) => Ok(s),
            _ => Err(self.err(format!("`{key}` must be a string"))),
        }
    }

    fn choice(&self, key: &str, default: &'static str, options: &[&str]) -> Result<String, SpecError> {
        let value = if self.map.contains_key(key) {
            self.string(key)?
        } else {
            default
        };
        if options.contains(&value) {
            Ok(value.to_owned())
        } else {
            Err(self.err(format!("`{key}` must be one of {}, got `{value}`", options.join(", "))))
        }
    }

    fn number(&self, key: &str) -> Result<f64, SpecError> {
        match self.map.get(key).and_then(Value::as_f64) {
            Some(x) if x.is_finite() => Ok(x),
            _ => Err(self.err(format!("`{key}` must be a number"))),
        }
    }

    fn nested(&self, key: &str) -> Result<Primitive, SpecError> {
        let value = self.map.get(key).expect("required key checked");
        nested_spec(self.catalog, value, &format!("{}.params.{key}", self.path))
    }

    fn build(&self) -> Result<Primitive, SpecError> {
        Ok(match self.primitive {
            "identity" => Primitive::Identity,
            "null_indicator" => Primitive::NullIndicator,
            "expr" => Primitive::Expr(expression(self.string("expression")?, self.path, "expr")?),
            "impute" => {
                let strategy = self.choice("strategy", "mean", &["mean", "median", "most_frequent", "constant"])?;
                let has_value = self.map.contains_key("value");
                let s = match strategy.as_str() {
                    "constant" => match self.map.get("value") {
                        Some(Value::String(s)) => ImputeStrategy::Constant(Category::Level(s.clone())),
                        Some(v) if v.as_f64().is_some_and(f64::is_finite) => {
                            ImputeStrategy::Constant(Category::number(v.as_f64().expect("number")))
                        }
                        _ => return Err(self.err("constant imputation needs a number or string `value`")),
                    },
                    _ if has_value => return Err(self.err("`value` is only used with strategy `constant`")),
                    "mean" => ImputeStrategy::Mean,
                    "median" => ImputeStrategy::Median,
                    _ => ImputeStrategy::MostFrequent,
                };
                Primitive::Impute(s)
            }
            "scale" => Primitive::Scale(
                match self.choice("mode", "standard", &["standard", "minmax"])?.as_str() {
                    "standard" => ScaleMode::Standard,
                    _ => ScaleMode::MinMax,
                },
            ),
            "one_hot" => {
                let max_cardinality = match self.map.get("max_cardinality") {
                    None | Some(Value::Null) => None,
                    Some(v) => match v.as_u64() {
                        Some(m) if m >= 1 => Some(m as usize),
                        _ => return Err(self.err("`max_cardinality` must be an integer >= 1")),
                    },
                };
                let handle_unknown = match self.choice("handle_unknown", "zeros", &["zeros", "error"])?.as_str() {
                    "zeros" => UnknownPolicy::Zeros,
                    _ => UnknownPolicy::Error,
                };
                Primitive::OneHot {
                    max_cardinality,
                    handle_unknown,
                }
            }
            "value_map" => {
                let Some(Value::Object(m)) = self.map.get("mapping") else {
                    return Err(self.err("`mapping` must be an object of label -> number"));
                };
                if m.is_empty() {
                    return Err(self.err("`mapping` is empty"));
                }
                let mut mapping = Vec::with_capacity(m.len());
                for (k, v) in m {
                    match v.as_f64() {
                        Some(x) if x.is_finite() => mapping.push((k.clone(), x)),
                        _ => return Err(self.err(format!("mapping for `{k}` must be a number"))),
                    }
                }
                let default = match self.map.get("default") {
                    None | Some(Value::Null) => None,
                    Some(_) => Some(self.number("default")?),
                };
                Primitive::ValueMap { mapping, default }
            }
            "clip_quantile" => {
                let lo_q = self.number("lo_q")?;
                let hi_q = self.number("hi_q")?;
                if !(0.0..=1.0).contains(&lo_q) || !(0.0..=1.0).contains(&hi_q) || lo_q > hi_q {
                    return Err(self.err("need 0 <= lo_q <= hi_q <= 1"));
                }
                Primitive::ClipQuantile { lo_q, hi_q }
            }
            "conditional" => {
                let check = match self.map.get("check") {
                    Some(Value::Object(c)) if c.len() == 1 => {
                        let (k, v) = c.iter().next().expect("one entry");
                        let kind = CheckKind::parse(k).ok_or_else(|| {
                            self.err(format!(
                                "unknown check `{k}`; expected skew_gt, missing_frac_gt, variance_lt or cardinality_gt"
                            ))
                        })?;
                        let threshold = v
                            .as_f64()
                            .filter(|t| t.is_finite())
                            .ok_or_else(|| self.err(format!("threshold of `{k}` must be a number")))?;
                        Check { kind, threshold }
                    }
                    _ => return Err(self.err("`check` must be an object with exactly one test")),
                };
                let otherwise = match self.map.get("else") {
                    None | Some(Value::Null) => None,
                    Some(_) => Some(Box::new(self.nested("else")?)),
                };
                Primitive::Conditional {
                    check,
                    then: Box::new(self.nested("then")?),
                    otherwise,
                }
            }
            "groupwise" => {
                let by = self.string("by")?;
                if by.is_empty() {
                    return Err(self.err("`by` must name a column"));
                }
                Primitive::Groupwise {
                    by: by.to_owned(),
                    inner: Box::new(self.nested("inner")?),
                }
            }
            "subset" => {
                let inputs = match self.map.get("inputs") {
                    Some(Value::Array(items)) if !items.is_empty() => items
                        .iter()
                        .map(|v| v.as_str().map(str::to_owned))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| self.err("`inputs` must be a list of column names"))?,
                    _ => return Err(self.err("`inputs` must be a non-empty list of column names")),
                };
                for (i, c) in inputs.iter().enumerate() {
                    if inputs[..i].contains(c) {
                        return Err(self.err(format!("duplicate input `{c}`")));
                    }
                }
                Primitive::Subset {
                    inputs,
                    inner: Box::new(self.nested("inner")?),
                }
            }
            "feature_ref" => {
                let path = self.string("path")?;
                if path.is_empty() {
                    return Err(self.err("`path` is empty"));
                }
                Primitive::FeatureRef { path: path.to_owned() }
            }
            "chain" => match self.map.get("steps") {
                Some(Value::Array(items)) if !items.is_empty() => Primitive::Chain(
                    items
                        .iter()
                        .enumerate()
                        .map(|(i, v)| nested_spec(self.catalog, v, &format!("{}.params.steps[{i}]", self.path)))
                        .collect::<Result<_, _>>()?,
                ),
                _ => return Err(self.err("`steps` must be a non-empty list")),
            },
            other => unreachable!("catalog entry `{other}` has no constructor"),
        })
    }
}

/// A spec embedded in parameters. Besides the forms allowed in a transformer
/// list, a plain list of specs means a chain.
fn nested_spec(catalog: &Catalog, value: &Value, path: &str) -> Result<Primitive, SpecError> {
    if let Value::Array(items) = value {
        let subset_sugar =
            items.len() == 2 && matches!(&items[0], Value::Array(cols) if cols.iter().all(Value::is_string));
        if !subset_sugar {
            if items.is_empty() {
                return Err(SpecError::Params {
                    path: path.to_owned(),
                    primitive: "chain".into(),
                    message: "empty step list".into(),
                });
            }
            return Ok(Primitive::Chain(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| nested_spec(catalog, v, &format!("{path}[{i}]")))
                    .collect::<Result<_, _>>()?,
            ));
        }
    }
    let spec = TransformerSpec::from_value(value, path).map_err(|e| SpecError::Params {
        path: path.to_owned(),
        primitive: "step".into(),
        message: e.to_string(),
    })?;
    catalog.instantiate_at(&spec, path)
}
