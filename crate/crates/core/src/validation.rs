//! Feature API validation: a fixed battery of 15 checks run on small
//! subsamples, each paired with advice for the author, plus structural
//! validation of a proposed change set.
//!
//! Subsamples used by the battery, all drawn with [`crate::table::subsample`]:
//!
//! | name | rows | drawn from | seed |
//! |------|------|------------|------|
//! | A | `dev_rows` (or all) | development | `seed` |
//! | B | `dev_rows` (or all) | development | `seed + 1` |
//! | H | `holdout_rows` (or all) | holdout | `seed` |
//! | one-row fit | 1 | development | `seed + 2` |
//! | one-row transform | 1 | holdout | `seed + 2` |
//!
//! Every check builds and fits its own pipeline, so one check cannot see
//! state left behind by another.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::{build_pipeline, fit_pipeline, transform_values, EngineError, FeatureValues, FittedPipeline};
use crate::feature::{
    is_identifier, parse_document, resolve_references, FeatureDefinition, FeatureError, FeatureId, Registry,
};
use crate::primitives::Catalog;
use crate::table::{subsample, Table};

pub const CHECK_NAMES: [&str; 15] = [
    "IsFeatureCheck",
    "HasCorrectInputTypeCheck",
    "HasTransformerInterfaceCheck",
    "CanFitCheck",
    "CanFitOneRowCheck",
    "CanFitTransformCheck",
    "CanTransformCheck",
    "CanTransformNewRowsCheck",
    "CanTransformOneRowCheck",
    "HasCorrectOutputDimensionsCheck",
    "CanMakeMapperCheck",
    "NoMissingValuesCheck",
    "NoInfiniteValuesCheck",
    "CanDeepcopyCheck",
    "CanPickleCheck",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub dev_rows: usize,
    pub holdout_rows: usize,
    pub seed: u64,
    /// Per-check time budget in milliseconds.
    pub budget_ms: u64,
    pub workers: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            dev_rows: 100,
            holdout_rows: 100,
            seed: 0,
            budget_ms: 10_000,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckOutcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub outcome: CheckOutcome,
    /// Empty when the check passed.
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub advice: String,
    pub detail: Value,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.outcome == CheckOutcome::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overall {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleInfo {
    pub dev_rows: usize,
    pub dev_seed: u64,
    pub dev_alt_seed: u64,
    pub holdout_rows: usize,
    pub holdout_seed: u64,
    pub one_row_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature: Option<FeatureId>,
    pub overall: Overall,
    pub checks: Vec<CheckResult>,
    pub subsamples: SubsampleInfo,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.overall == Overall::Accepted
    }

    pub fn failed(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

struct Failure {
    message: String,
    detail: Value,
    advice: Option<String>,
}

impl Failure {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            detail: Value::Null,
            advice: None,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn with_advice(mut self, advice: String) -> Self {
        self.advice = Some(advice);
        self
    }
}

type Outcome = Result<Value, Failure>;

fn advice(check: &str) -> &'static str {
    match check {
        "IsFeatureCheck" => {
            "The document must hold exactly one JSON object with `name`, `author`, `input` and `transformer`; \
             only `description`, `output` and `source` may be added."
        }
        "HasCorrectInputTypeCheck" => {
            "List raw column names from the project schema in `input`. The target column may not be used."
        }
        "HasTransformerInterfaceCheck" => {
            "Every transformer step must name a catalog primitive with valid parameters, and every \
             feature_ref must point to an existing feature document."
        }
        "CanFitCheck" => {
            "Fitting on development rows failed. Check that each step supports the kinds of columns it receives."
        }
        "CanFitOneRowCheck" => {
            "Fitting on a single row failed. Steps that learn from observed values need a fallback, \
             e.g. impute with strategy constant."
        }
        "CanFitTransformCheck" => "The fitted feature could not transform the rows it was fitted on.",
        "CanTransformCheck" => {
            "Transforming other development rows failed. Steps must cope with values not seen while \
             fitting, e.g. give value_map a default."
        }
        "CanTransformNewRowsCheck" => {
            "Transforming holdout rows failed. Steps must cope with values not seen while fitting, \
             e.g. one_hot with handle_unknown ignore or value_map with a default."
        }
        "CanTransformOneRowCheck" => {
            "Transforming a single row failed. The feature must work on one instance at a time."
        }
        "HasCorrectOutputDimensionsCheck" => {
            "Produce one output row per input row and the same number of columns on every call; \
             `output`, when given, needs one name per column."
        }
        "CanMakeMapperCheck" => {
            "The feature must build into a pipeline that runs on new rows, which carry no target column."
        }
        "NoMissingValuesCheck" => {
            "The feature produces missing values. End the transformer with an impute step, e.g. \
             {\"primitive\":\"impute\",\"params\":{\"strategy\":\"mean\"}}."
        }
        "NoInfiniteValuesCheck" => "The feature produces infinite values. Clip or rescale the step that overflows.",
        "CanDeepcopyCheck" => {
            "A copy of the fitted feature differs from the original or transforms differently; learned \
             parameters must be ordinary numbers (no NaN)."
        }
        "CanPickleCheck" => {
            "The fitted feature could not be saved and restored exactly; learned parameters must be finite numbers."
        }
        _ => "",
    }
}

struct Samples {
    a: Table,
    b: Table,
    h: Table,
    fit_one: Table,
    transform_one: Table,
}

fn draw(table: &Table, n: usize, seed: u64) -> Result<Table, String> {
    subsample(table, n.min(table.row_count()), seed).map_err(|e| e.to_string())
}

impl Samples {
    fn new(dev: &Table, holdout: &Table, cfg: &ValidationConfig) -> Result<Self, String> {
        let s = cfg.seed;
        Ok(Self {
            a: draw(dev, cfg.dev_rows, s)?,
            b: draw(dev, cfg.dev_rows, s.wrapping_add(1))?,
            h: draw(holdout, cfg.holdout_rows, s)?,
            fit_one: draw(dev, 1, s.wrapping_add(2))?,
            transform_one: draw(holdout, 1, s.wrapping_add(2))?,
        })
    }
}

struct Battery<'a> {
    fd: &'a FeatureDefinition,
    registry: &'a Registry,
    dev: &'a Table,
    samples: &'a Samples,
    workers: usize,
}

fn same_values(a: &FeatureValues, b: &FeatureValues) -> bool {
    a.names == b.names
        && a.columns.len() == b.columns.len()
        && a.columns
            .iter()
            .zip(&b.columns)
            .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p == q || (p.is_nan() && q.is_nan())))
}

impl Battery<'_> {
    fn fit(&self, on: &Table) -> Result<FittedPipeline, EngineError> {
        let p = build_pipeline(std::slice::from_ref(self.fd), self.registry, Some(self.dev.schema()))?;
        fit_pipeline(&p, on, self.workers)
    }

    fn fit_or_fail(&self, on: &Table, what: &str) -> Result<FittedPipeline, Failure> {
        self.fit(on)
            .map_err(|e| Failure::new(format!("fitting on {what} failed: {e}")))
    }

    fn values(&self, fp: &FittedPipeline, data: &Table, what: &str) -> Result<FeatureValues, Failure> {
        transform_values(fp, data, self.workers)
            .map(|mut v| v.remove(0))
            .map_err(|e| Failure::new(format!("transforming {what} failed: {e}")))
    }

    fn input_type(&self) -> Outcome {
        let schema = self.dev.schema();
        let unknown: Vec<&String> = self.fd.input.iter().filter(|c| schema.column(c).is_none()).collect();
        if !unknown.is_empty() {
            return Err(Failure::new(format!("unknown input column(s): {}", join(&unknown)))
                .with_detail(json!({ "unknown": unknown })));
        }
        if let Some(target) = schema.target.as_ref().filter(|t| self.fd.input.contains(t)) {
            return Err(
                Failure::new(format!("input `{target}` is the target column")).with_detail(json!({ "target": target }))
            );
        }
        let kinds: Vec<Value> = self
            .fd
            .input
            .iter()
            .map(|c| json!({ "column": c, "kind": schema.column(c).expect("checked").kind.as_str() }))
            .collect();
        Ok(json!({ "inputs": kinds }))
    }

    fn transformer_interface(&self) -> Outcome {
        let steps = Catalog::standard()
            .validate_definition(self.fd)
            .map_err(|e| Failure::new(e.to_string()))?;
        let resolved = resolve_references(self.fd, self.registry).map_err(|e| Failure::new(e.to_string()))?;
        Ok(json!({
            "steps": steps.iter().map(|s| s.name()).collect::<Vec<_>>(),
            "dependencies": resolved.edges().len(),
        }))
    }

    fn can_fit(&self) -> Outcome {
        let fp = self.fit_or_fail(&self.samples.a, "development rows")?;
        Ok(json!({ "rows": self.samples.a.row_count(), "outputs": fp.output_names() }))
    }

    fn can_fit_one_row(&self) -> Outcome {
        let one = &self.samples.fit_one;
        let fp = self.fit_or_fail(one, "one row")?;
        let v = self.values(&fp, one, "the row it was fitted on")?;
        let rows = v.columns.first().map_or(0, Vec::len);
        if rows != 1 {
            return Err(Failure::new(format!("expected 1 output row, got {rows}")));
        }
        Ok(json!({ "rows": 1 }))
    }

    fn fit_then(&self, data: &Table, what: &str) -> Outcome {
        let fp = self.fit_or_fail(&self.samples.a, "development rows")?;
        let v = self.values(&fp, data, what)?;
        Ok(json!({ "rows": data.row_count(), "columns": v.columns.len() }))
    }

    fn output_dimensions(&self) -> Outcome {
        let fp = match self.fit(&self.samples.a) {
            Ok(fp) => fp,
            Err(EngineError::Feature(e @ FeatureError::OutputLength { .. })) => {
                return Err(Failure::new(e.to_string()))
            }
            Err(e) => return Err(Failure::new(format!("fitting on development rows failed: {e}"))),
        };
        let expected = fp.output_names().len();
        if expected == 0 {
            return Err(Failure::new("the feature produces no output columns"));
        }
        let mut seen = Vec::new();
        for (data, what) in [
            (&self.samples.a, "A"),
            (&self.samples.b, "B"),
            (&self.samples.h, "H"),
            (&self.samples.transform_one, "one row"),
        ] {
            let v = self.values(&fp, data, what)?;
            if v.columns.len() != expected {
                return Err(Failure::new(format!(
                    "{what}: {} output columns, {expected} expected",
                    v.columns.len()
                )));
            }
            if let Some(c) = v.columns.iter().find(|c| c.len() != data.row_count()) {
                return Err(Failure::new(format!(
                    "{what}: {} output rows for {} input rows",
                    c.len(),
                    data.row_count()
                )));
            }
            seen.push(json!({ "sample": what, "rows": data.row_count() }));
        }
        Ok(json!({ "columns": expected, "samples": seen }))
    }

    fn make_mapper(&self) -> Outcome {
        let schema = self.dev.schema().without_target();
        let p = build_pipeline(std::slice::from_ref(self.fd), self.registry, Some(&schema))
            .map_err(|e| Failure::new(format!("pipeline for new rows could not be built: {e}")))?;
        let fp = fit_pipeline(&p, &self.samples.a, self.workers)
            .map_err(|e| Failure::new(format!("pipeline could not be fitted: {e}")))?;
        let new_rows = self
            .samples
            .h
            .conform_to(&schema)
            .map_err(|e| Failure::new(format!("holdout rows do not match the schema: {e}")))?;
        let values = transform_values(&fp, &new_rows, self.workers)
            .map_err(|e| Failure::new(format!("pipeline could not transform new rows: {e}")))?;
        Ok(json!({ "features": values.len(), "outputs": fp.output_names() }))
    }

    /// First cell in A or H rejected by `bad`.
    fn scan_values(&self, bad: fn(f64) -> bool, problem: &str, check: &str) -> Outcome {
        let fp = self.fit_or_fail(&self.samples.a, "development rows")?;
        for (data, what) in [(&self.samples.a, "development"), (&self.samples.h, "holdout")] {
            let v = self.values(&fp, data, what)?;
            for (name, col) in v.names.iter().zip(&v.columns) {
                let hits = col.iter().filter(|x| bad(**x)).count();
                if hits > 0 {
                    let row = col.iter().position(|x| bad(*x)).expect("counted");
                    return Err(Failure::new(format!(
                        "output column `{name}` has {hits} {problem} value(s) on {what} rows"
                    ))
                    .with_detail(json!({ "column": name, "sample": what, "count": hits, "first_row": row }))
                    .with_advice(format!(
                        "Output column `{name}` has {problem} values. {}",
                        advice(check)
                    )));
                }
            }
        }
        Ok(json!({ "columns": fp.output_names() }))
    }

    fn deepcopy(&self) -> Outcome {
        let fp = self.fit_or_fail(&self.samples.a, "development rows")?;
        let copy = fp.clone();
        if copy != fp {
            return Err(Failure::new("the copied fitted state does not equal the original"));
        }
        let a = self.values(&fp, &self.samples.h, "holdout rows with the original")?;
        let b = self.values(&copy, &self.samples.h, "holdout rows with the copy")?;
        if !same_values(&a, &b) {
            return Err(Failure::new("the copy transforms differently"));
        }
        Ok(json!({ "equal": true }))
    }

    fn pickle(&self) -> Outcome {
        let fp = self.fit_or_fail(&self.samples.a, "development rows")?;
        let text = fp.to_json();
        let restored =
            FittedPipeline::from_json(&text).map_err(|e| Failure::new(format!("fitted state did not restore: {e}")))?;
        if restored.to_json() != text {
            return Err(Failure::new("restored fitted state serializes differently"));
        }
        let a = self.values(&fp, &self.samples.h, "holdout rows with the original")?;
        let b = self.values(&restored, &self.samples.h, "holdout rows with the restored state")?;
        if !same_values(&a, &b) {
            return Err(Failure::new("the restored state transforms differently"));
        }
        Ok(json!({ "bytes": text.len() }))
    }

    fn run(&self, name: &str) -> Outcome {
        let s = self.samples;
        match name {
            "HasCorrectInputTypeCheck" => self.input_type(),
            "HasTransformerInterfaceCheck" => self.transformer_interface(),
            "CanFitCheck" => self.can_fit(),
            "CanFitOneRowCheck" => self.can_fit_one_row(),
            "CanFitTransformCheck" => self.fit_then(&s.a, "the rows it was fitted on"),
            "CanTransformCheck" => self.fit_then(&s.b, "other development rows"),
            "CanTransformNewRowsCheck" => self.fit_then(&s.h, "holdout rows"),
            "CanTransformOneRowCheck" => self.fit_then(&s.transform_one, "one holdout row"),
            "HasCorrectOutputDimensionsCheck" => self.output_dimensions(),
            "CanMakeMapperCheck" => self.make_mapper(),
            "NoMissingValuesCheck" => self.scan_values(f64::is_nan, "missing", name),
            "NoInfiniteValuesCheck" => self.scan_values(f64::is_infinite, "infinite", name),
            "CanDeepcopyCheck" => self.deepcopy(),
            "CanPickleCheck" => self.pickle(),
            other => unreachable!("unknown check {other}"),
        }
    }
}

fn join(items: &[&String]) -> String {
    items.iter().map(|s| format!("`{s}`")).collect::<Vec<_>>().join(", ")
}

fn result(name: &str, outcome: Outcome, elapsed: Duration, budget: Duration) -> CheckResult {
    let outcome = match outcome {
        Ok(_) if elapsed > budget => Err(Failure::new(format!(
            "check exceeded its time budget of {} ms",
            budget.as_millis()
        ))
        .with_advice(format!(
            "The check took longer than {} ms. Simplify the feature or reduce the work done per row.",
            budget.as_millis()
        ))),
        other => other,
    };
    match outcome {
        Ok(detail) => CheckResult {
            name: name.to_string(),
            outcome: CheckOutcome::Pass,
            advice: String::new(),
            detail,
        },
        Err(f) => {
            let mut detail = json!({ "error": f.message });
            if let (Value::Object(extra), Some(map)) = (f.detail, detail.as_object_mut()) {
                map.extend(extra);
            }
            CheckResult {
                name: name.to_string(),
                outcome: CheckOutcome::Fail,
                advice: f.advice.unwrap_or_else(|| advice(name).to_string()),
                detail,
            }
        }
    }
}

/// Run the battery on a feature document.
pub fn validate_document(
    document: &str,
    registry: &Registry,
    dev: &Table,
    holdout: &Table,
    cfg: &ValidationConfig,
) -> ValidationReport {
    let budget = Duration::from_millis(cfg.budget_ms);
    let subsamples = SubsampleInfo {
        dev_rows: cfg.dev_rows.min(dev.row_count()),
        dev_seed: cfg.seed,
        dev_alt_seed: cfg.seed.wrapping_add(1),
        holdout_rows: cfg.holdout_rows.min(holdout.row_count()),
        holdout_seed: cfg.seed,
        one_row_seed: cfg.seed.wrapping_add(2),
    };
    let mut checks = Vec::with_capacity(CHECK_NAMES.len());
    let started = Instant::now();
    let parsed = parse_document(document);
    let first = match &parsed {
        Ok(fd) => Ok(json!({ "feature": fd.id() })),
        Err(e) => Err(Failure::new(e.to_string())),
    };
    checks.push(result(CHECK_NAMES[0], first, started.elapsed(), budget));

    let samples = Samples::new(dev, holdout, cfg);
    for name in &CHECK_NAMES[1..] {
        let started = Instant::now();
        let outcome = match (&parsed, &samples) {
            (Err(_), _) => Err(Failure::new("no feature definition to check")),
            (Ok(_), Err(e)) => Err(Failure::new(format!("could not draw validation rows: {e}"))),
            (Ok(fd), Ok(samples)) => Battery {
                fd,
                registry,
                dev,
                samples,
                workers: cfg.workers,
            }
            .run(name),
        };
        checks.push(result(name, outcome, started.elapsed(), budget));
    }
    let overall = if checks.iter().all(CheckResult::passed) {
        Overall::Accepted
    } else {
        Overall::Rejected
    };
    ValidationReport {
        feature: parsed.ok().map(|fd| fd.id()),
        overall,
        checks,
        subsamples,
    }
}

/// Run the battery on an already parsed definition.
pub fn validate_feature_api(
    fd: &FeatureDefinition,
    registry: &Registry,
    dev: &Table,
    holdout: &Table,
    cfg: &ValidationConfig,
) -> ValidationReport {
    validate_document(&crate::feature::serialize_feature(fd), registry, dev, holdout, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Add,
    Modify,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub path: String,
    pub kind: ChangeKind,
    /// New file content; required for additions and modifications.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub changes: Vec<Change>,
}

impl Patch {
    /// A patch adding one file.
    pub fn add(path: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            changes: vec![Change {
                path: path.into(),
                kind: ChangeKind::Add,
                content: Some(content.into()),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("change to `{0}` has no content")]
    MissingContent(String),
}

/// Where contributed features live inside a project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub contrib_dir: String,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            contrib_dir: "features/contrib".into(),
        }
    }
}

impl Layout {
    /// `<contrib>/user_<login>/feature_<name>.json`.
    pub fn feature_path(&self, login: &str, name: &str) -> String {
        format!("{}/user_{login}/feature_{name}.json", self.contrib_dir)
    }

    /// The login of a path that follows the convention.
    pub fn login_of(&self, path: &str) -> Option<String> {
        let rest = path.strip_prefix(&self.contrib_dir)?.strip_prefix('/')?;
        let (dir, file) = rest.split_once('/')?;
        let login = dir.strip_prefix("user_")?;
        let name = file.strip_prefix("feature_")?.strip_suffix(".json")?;
        (is_login(login) && is_identifier(name)).then(|| login.to_string())
    }
}

fn is_login(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Repository-relative path with `.` segments removed, or why it is not one.
pub fn normalize_path(path: &str) -> Result<String, String> {
    if path.starts_with('/') || path.contains('\\') {
        return Err(format!("`{path}` is not a repository-relative path"));
    }
    let mut parts = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => return Err(format!("`{path}` leaves the repository")),
            s => parts.push(s),
        }
    }
    if parts.is_empty() {
        return Err("empty path".into());
    }
    Ok(parts.join("/"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub accepted: bool,
    pub reasons: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature: Option<FeatureId>,
}

/// Accept a patch only when it adds exactly one well-formed feature document
/// at `<contrib>/user_<login>/feature_<name>.json` whose author is `<login>`.
pub fn validate_patch(layout: &Layout, patch: &Patch) -> Result<StructureReport, PatchError> {
    let mut reasons = Vec::new();
    for c in &patch.changes {
        if c.kind != ChangeKind::Delete && c.content.is_none() {
            return Err(PatchError::MissingContent(c.path.clone()));
        }
    }
    if patch.changes.len() != 1 {
        reasons.push(format!(
            "a patch must add exactly one file; this one changes {}",
            patch.changes.len()
        ));
    }
    for c in patch.changes.iter().filter(|c| c.kind != ChangeKind::Add) {
        reasons.push(format!(
            "`{}` is a {}; only additions are accepted",
            c.path,
            match c.kind {
                ChangeKind::Modify => "modification",
                _ => "deletion",
            }
        ));
    }
    let mut path = None;
    let mut feature = None;
    if let [only] = patch.changes.as_slice() {
        match normalize_path(&only.path) {
            Err(e) => reasons.push(e),
            Ok(p) => {
                match layout.login_of(&p) {
                    None => reasons.push(format!(
                        "`{p}` does not follow the convention {}",
                        layout.feature_path("<login>", "<name>")
                    )),
                    Some(login) if only.kind == ChangeKind::Add => {
                        match parse_document(only.content.as_deref().expect("checked")) {
                            Err(e) => reasons.push(format!("`{p}` is not a feature definition: {e}")),
                            Ok(fd) => {
                                if fd.author != login {
                                    reasons.push(format!(
                                        "author `{}` does not match the login `{login}` in the path",
                                        fd.author
                                    ));
                                }
                                feature = Some(fd.id());
                            }
                        }
                    }
                    Some(_) => {}
                }
                path = Some(p);
            }
        }
    }
    Ok(StructureReport {
        accepted: reasons.is_empty(),
        reasons,
        path,
        feature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advice_exists_for_every_check() {
        for name in CHECK_NAMES {
            assert!(!advice(name).is_empty(), "{name}");
        }
    }

    #[test]
    fn path_normalization() {
        assert_eq!(
            normalize_path("./features//contrib/a.json").unwrap(),
            "features/contrib/a.json"
        );
        assert!(normalize_path("/etc/passwd").is_err());
        assert!(normalize_path("features/../x").is_err());
        assert!(normalize_path("").is_err());
    }

    #[test]
    fn convention_paths() {
        let l = Layout::default();
        assert_eq!(
            l.feature_path("bob", "arrival"),
            "features/contrib/user_bob/feature_arrival.json"
        );
        assert_eq!(
            l.login_of("features/contrib/user_bob/feature_arrival.json").as_deref(),
            Some("bob")
        );
        assert_eq!(l.login_of("features/contrib/user_bob/arrival.json"), None);
        assert_eq!(l.login_of("features/contrib/bob/feature_arrival.json"), None);
        assert_eq!(l.login_of("features/contrib/user_bob/x/feature_a.json"), None);
    }

    #[test]
    fn patch_needs_content() {
        let p = Patch {
            changes: vec![Change {
                path: "a".into(),
                kind: ChangeKind::Add,
                content: None,
            }],
        };
        assert_eq!(
            validate_patch(&Layout::default(), &p),
            Err(PatchError::MissingContent("a".into()))
        );
    }
}
