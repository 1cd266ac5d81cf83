//! Streaming feature-definition selection (SFDS) and the alternative
//! accepters.
//!
//! A feature `f` with `q` output columns is accepted when
//!
//! ```text
//! I(f; Y | F) > lambda1 + lambda2 * q                                  (strong)
//! I(f; Y | F - f') - I(f'; Y | F - f') > lambda1 + lambda2 * (q - q')  (weak, some f' in F)
//! ```
//!
//! with `F` the accepted set. After an acceptance each earlier feature `f'`
//! is dropped when `I(f'; Y | F - f') < lambda1 + lambda2 * q'`, scanning in
//! acceptance order against the set as it shrinks, in a single pass. The
//! weak rule also tries `f'` in acceptance order and stops at the first
//! success.
//!
//! Estimates use at most `subsample` rows drawn with `seed`, and conditioning
//! sets wider than `max_conditioning` columns are narrowed to their most
//! informative columns; the narrowing is recorded in every trace. Feature
//! value columns are treated as continuous; repeated values are handled by
//! the estimator's tie correction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{build_pipeline, fit_pipeline, transform_values};
use crate::feature::{FeatureDefinition, FeatureId, Registry};
use crate::infotheory::{
    compress_conditioning, estimate_cmi, estimate_mi, Compression, Estimator, EstimatorConfig, InfoError, Variable,
    VariableSet,
};
use crate::rng::sample_indices;
use crate::table::{ColumnData, Table, TargetKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("invalid selection parameters: {0}")]
    Params(String),
    #[error("the data has no target column")]
    NoTarget,
    #[error("target is missing in row {0}")]
    TargetMissing(usize),
    #[error("feature `{feature}` has {found} rows but the evaluation data has {expected}")]
    Misaligned {
        feature: FeatureId,
        expected: usize,
        found: usize,
    },
    #[error("feature `{0}` has no output columns")]
    EmptyFeature(FeatureId),
    #[error("feature `{feature}`, column {column}: values must be finite and present")]
    NonFinite { feature: FeatureId, column: usize },
    #[error("feature `{0}` is already accepted")]
    AlreadyAccepted(FeatureId),
    #[error("{context}: {source}")]
    Estimator {
        context: String,
        #[source]
        source: InfoError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompoundMode {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AccepterConfig {
    Sfds,
    Always,
    MutualInformation {
        threshold: f64,
    },
    VarianceThreshold {
        threshold: f64,
    },
    Compound {
        mode: CompoundMode,
        children: Vec<AccepterConfig>,
    },
}

impl AccepterConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            AccepterConfig::Sfds => "sfds",
            AccepterConfig::Always => "always",
            AccepterConfig::MutualInformation { .. } => "mutual_information",
            AccepterConfig::VarianceThreshold { .. } => "variance_threshold",
            AccepterConfig::Compound { .. } => "compound",
        }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        match self {
            AccepterConfig::Sfds | AccepterConfig::Always => Ok(()),
            AccepterConfig::MutualInformation { threshold } | AccepterConfig::VarianceThreshold { threshold } => {
                if threshold.is_finite() {
                    Ok(())
                } else {
                    Err(SelectionError::Params(format!(
                        "{} threshold must be finite",
                        self.kind()
                    )))
                }
            }
            AccepterConfig::Compound { children, .. } => {
                if children.is_empty() {
                    return Err(SelectionError::Params(
                        "compound accepter needs at least one child".into(),
                    ));
                }
                children.iter().try_for_each(AccepterConfig::validate)
            }
        }
    }

    /// Whether acceptance is followed by pruning.
    pub fn prunes(&self) -> bool {
        matches!(self, AccepterConfig::Sfds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    /// Nats charged per feature definition.
    pub lambda1: f64,
    /// Nats charged per feature value column.
    pub lambda2: f64,
    pub k: usize,
    pub seed: u64,
    /// Most rows used by one estimate.
    pub subsample: usize,
    /// Widest conditioning set before narrowing.
    pub max_conditioning: usize,
    pub rank_transform: bool,
    pub accepter: AccepterConfig,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            lambda1: 0.04,
            lambda2: 0.01,
            k: 3,
            seed: 0,
            subsample: 2000,
            max_conditioning: 10,
            rank_transform: true,
            accepter: AccepterConfig::Sfds,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |m: &str| Err(SelectionError::Params(m.to_string()));
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return bad("lambda1 must be a non-negative number");
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return bad("lambda2 must be a non-negative number");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.subsample == 0 {
            return bad("subsample must be at least 1");
        }
        if self.max_conditioning == 0 {
            return bad("max_conditioning must be at least 1");
        }
        self.accepter.validate()
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            k: self.k,
            rank_transform: self.rank_transform,
        }
    }

    /// `lambda1 + lambda2 * q`.
    pub fn threshold(&self, q: usize) -> f64 {
        self.lambda1 + self.lambda2 * q as f64
    }

    /// `lambda1 + lambda2 * (q - q_other)`.
    pub fn margin(&self, q: usize, q_other: usize) -> f64 {
        self.lambda1 + self.lambda2 * (q as f64 - q_other as f64)
    }

    /// Rows of an `n`-row evaluation dataset used by the estimates.
    pub fn evaluation_rows(&self, n: usize) -> Vec<usize> {
        if n <= self.subsample {
            (0..n).collect()
        } else {
            sample_indices(n, self.subsample, self.seed)
        }
    }
}

/// Target column of `table` as an estimator variable: categorical targets
/// are discrete, continuous ones continuous.
pub fn target_variable(table: &Table) -> Result<Variable, SelectionError> {
    let column = table.target().ok_or(SelectionError::NoTarget)?;
    if let Some(row) = (0..column.len()).find(|&r| column.is_missing(r)) {
        return Err(SelectionError::TargetMissing(row));
    }
    let values: Vec<f64> = match column {
        ColumnData::Continuous(v) => v.clone(),
        ColumnData::Coded { codes, .. } => codes.iter().map(|c| c.expect("checked") as f64).collect(),
    };
    Ok(match table.schema().target_kind() {
        Some(TargetKind::Continuous) => Variable::continuous(values),
        _ => Variable::discrete(values),
    })
}

/// A submission's values on the evaluation dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub definition: FeatureDefinition,
    /// One vector per output column.
    pub values: Vec<Vec<f64>>,
}

impl Candidate {
    pub fn new(definition: FeatureDefinition, values: Vec<Vec<f64>>) -> Self {
        Self { definition, values }
    }

    pub fn id(&self) -> FeatureId {
        self.definition.id()
    }

    /// Output dimensionality.
    pub fn q(&self) -> usize {
        self.values.len()
    }

    fn check(&self, rows: usize) -> Result<(), SelectionError> {
        if self.values.is_empty() {
            return Err(SelectionError::EmptyFeature(self.id()));
        }
        for (column, v) in self.values.iter().enumerate() {
            if v.len() != rows {
                return Err(SelectionError::Misaligned {
                    feature: self.id(),
                    expected: rows,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SelectionError::NonFinite {
                    feature: self.id(),
                    column,
                });
            }
        }
        Ok(())
    }

    fn variables(&self, rows: &[usize]) -> Vec<Variable> {
        self.values
            .iter()
            .map(|v| Variable::continuous(rows.iter().map(|&r| v[r]).collect()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    Strong,
    Weak { displaced: FeatureId },
    BelowThreshold,
}

/// The quantity a decision compared against its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    ConditionalMutualInformation,
    MutualInformation,
    MinVariance,
    None,
}

/// One threshold test made while deciding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// The accepted feature left out of the conditioning set, for weak tests.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub against: Option<FeatureId>,
    /// `I(f; Y | conditioning)`.
    pub cmi: f64,
    /// `I(f'; Y | conditioning)`, for weak tests.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub against_cmi: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
    pub estimator: Estimator,
    /// Conditioning columns before any narrowing.
    pub conditioning_columns: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub compression: Option<Compression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub rule: Rule,
    /// The statistic in nats (or variance units for the variance accepter).
    pub cmi: f64,
    pub threshold: f64,
    pub statistic: Statistic,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<Comparison>,
    /// Child decisions of a compound accepter, in evaluation order.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub parts: Vec<Decision>,
}

impl Decision {
    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accepted
    }

    fn simple(pass: bool, value: f64, threshold: f64, statistic: Statistic) -> Self {
        Self {
            outcome: if pass { Outcome::Accepted } else { Outcome::Rejected },
            rule: if pass { Rule::Strong } else { Rule::BelowThreshold },
            cmi: value,
            threshold,
            statistic,
            trace: Vec::new(),
            parts: Vec::new(),
        }
    }
}

/// A feature removed by pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub feature: FeatureId,
    pub cmi: f64,
    pub threshold: f64,
    pub estimator: Estimator,
    pub conditioning_columns: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub compression: Option<Compression>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Accepted,
    Rejected,
    Pruned,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Accepted => "accepted",
            EventKind::Rejected => "rejected",
            EventKind::Pruned => "pruned",
        })
    }
}

/// Why a submission was rejected without a threshold test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventError {
    /// `api`, `fit`, `values` or `duplicate`.
    pub stage: String,
    pub message: String,
}

/// Everything needed to replay a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    pub accepter: AccepterConfig,
    pub lambda1: f64,
    pub lambda2: f64,
    pub k: usize,
    pub rank_transform: bool,
    pub max_conditioning: usize,
    pub subsample_seed: u64,
    pub subsample_n: usize,
    pub rows: usize,
}

impl EventParams {
    fn new(params: &SelectionParams, rows: usize) -> Self {
        Self {
            accepter: params.accepter.clone(),
            lambda1: params.lambda1,
            lambda2: params.lambda2,
            k: params.k,
            rank_transform: params.rank_transform,
            max_conditioning: params.max_conditioning,
            subsample_seed: params.seed,
            subsample_n: rows.min(params.subsample),
            rows,
        }
    }
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub seq: usize,
    pub event: EventKind,
    pub feature: FeatureId,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision: Option<Decision>,
    /// For prune events, the feature whose acceptance triggered it.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pruned_by: Option<FeatureId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub removal: Option<Removal>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<EventError>,
    pub params: EventParams,
}

/// Serialize events as JSON lines.
pub fn log_to_jsonl(events: &[LogEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("log events serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<LogEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Accepted features in acceptance order, plus the decision log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub accepted: Vec<Candidate>,
    pub log: Vec<LogEvent>,
}

impl SelectionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ids(&self) -> Vec<FeatureId> {
        self.accepted.iter().map(Candidate::id).collect()
    }

    pub fn contains(&self, id: &FeatureId) -> bool {
        self.accepted.iter().any(|c| &c.id() == id)
    }

    fn push_event(&mut self, mut event: LogEvent) {
        event.seq = self.log.len();
        self.log.push(event);
    }

    /// Log a submission rejected before any threshold test.
    pub fn record_error(
        &mut self,
        feature: FeatureId,
        stage: &str,
        message: impl Into<String>,
        params: &SelectionParams,
        rows: usize,
    ) {
        self.push_event(LogEvent {
            seq: 0,
            event: EventKind::Rejected,
            feature,
            q: None,
            decision: None,
            pruned_by: None,
            removal: None,
            error: Some(EventError {
                stage: stage.to_string(),
                message: message.into(),
            }),
            params: EventParams::new(params, rows),
        });
    }
}

/// Evaluation rows and target shared by the estimates of one call.
struct Frame<'a> {
    rows: Vec<usize>,
    y: VariableSet,
    cfg: EstimatorConfig,
    params: &'a SelectionParams,
}

impl<'a> Frame<'a> {
    fn new(y: &Variable, params: &'a SelectionParams) -> Result<Self, SelectionError> {
        params.validate()?;
        let rows = params.evaluation_rows(y.values.len());
        let y = VariableSet::single(Variable {
            kind: y.kind,
            values: rows.iter().map(|&r| y.values[r]).collect(),
        })
        .map_err(|source| SelectionError::Estimator {
            context: "target".into(),
            source,
        })?;
        Ok(Self {
            rows,
            y,
            cfg: params.estimator(),
            params,
        })
    }

    fn set(&self, features: &[&Candidate]) -> VariableSet {
        let columns: Vec<Variable> = features.iter().flat_map(|c| c.variables(&self.rows)).collect();
        if columns.is_empty() {
            VariableSet::empty(self.rows.len())
        } else {
            VariableSet::new(columns).expect("candidates are checked before use")
        }
    }

    /// `I(f; Y | given)` with the conditioning set narrowed when too wide.
    fn cmi(&self, f: &Candidate, given: &[&Candidate], context: &str) -> Result<Conditional, SelectionError> {
        let wrap = |source| SelectionError::Estimator {
            context: context.to_string(),
            source,
        };
        let z = self.set(given);
        let conditioning_columns = z.width();
        let (z, compression) =
            compress_conditioning(&z, &self.y, self.params.max_conditioning, &self.cfg).map_err(wrap)?;
        let est = estimate_cmi(&self.set(&[f]), &self.y, &z, &self.cfg).map_err(wrap)?;
        Ok(Conditional {
            value: est.value,
            estimator: est.estimator,
            conditioning_columns,
            compression,
        })
    }
}

struct Conditional {
    value: f64,
    estimator: Estimator,
    conditioning_columns: usize,
    compression: Option<Compression>,
}

fn check_state(state: &SelectionState, rows: usize) -> Result<(), SelectionError> {
    state.accepted.iter().try_for_each(|c| c.check(rows))
}

/// The SFDS acceptance test for `f` against `state`.
pub fn accept(
    state: &SelectionState,
    f: &Candidate,
    y: &Variable,
    params: &SelectionParams,
) -> Result<Decision, SelectionError> {
    let n = y.values.len();
    f.check(n)?;
    check_state(state, n)?;
    let frame = Frame::new(y, params)?;
    let all: Vec<&Candidate> = state.accepted.iter().collect();
    let q = f.q();

    let strong = frame.cmi(f, &all, &format!("strong test for `{}`", f.id()))?;
    let threshold = params.threshold(q);
    let passed = strong.value > threshold;
    let mut trace = vec![Comparison {
        against: None,
        cmi: strong.value,
        against_cmi: None,
        threshold,
        passed,
        estimator: strong.estimator,
        conditioning_columns: strong.conditioning_columns,
        compression: strong.compression,
    }];
    let decision = |outcome, rule, trace| Decision {
        outcome,
        rule,
        cmi: strong.value,
        threshold,
        statistic: Statistic::ConditionalMutualInformation,
        trace,
        parts: Vec::new(),
    };
    if passed {
        return Ok(decision(Outcome::Accepted, Rule::Strong, trace));
    }

    for (i, other) in state.accepted.iter().enumerate() {
        let rest: Vec<&Candidate> = all
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, c)| *c)
            .collect();
        let context = format!("weak test for `{}` against `{}`", f.id(), other.id());
        let mine = frame.cmi(f, &rest, &context)?;
        let theirs = frame.cmi(other, &rest, &context)?;
        let margin = params.margin(q, other.q());
        let passed = mine.value - theirs.value > margin;
        trace.push(Comparison {
            against: Some(other.id()),
            cmi: mine.value,
            against_cmi: Some(theirs.value),
            threshold: margin,
            passed,
            estimator: mine.estimator,
            conditioning_columns: mine.conditioning_columns,
            compression: mine.compression,
        });
        if passed {
            return Ok(decision(Outcome::Accepted, Rule::Weak { displaced: other.id() }, trace));
        }
    }
    Ok(decision(Outcome::Rejected, Rule::BelowThreshold, trace))
}

/// Drop features made redundant by `new`, which must already be the last
/// accepted feature. Returns the removals in the order they happened.
pub fn prune(
    state: &mut SelectionState,
    new: &FeatureId,
    y: &Variable,
    params: &SelectionParams,
) -> Result<Vec<Removal>, SelectionError> {
    let n = y.values.len();
    check_state(state, n)?;
    let frame = Frame::new(y, params)?;
    let scan: Vec<FeatureId> = state.ids().into_iter().filter(|id| id != new).collect();
    let mut removed = Vec::new();
    for id in scan {
        let pos = state
            .accepted
            .iter()
            .position(|c| c.id() == id)
            .expect("scanned ids stay present until removed");
        let candidate = &state.accepted[pos];
        let rest: Vec<&Candidate> = state.accepted.iter().filter(|c| c.id() != id).collect();
        let cmi = frame.cmi(candidate, &rest, &format!("prune test for `{id}`"))?;
        let threshold = params.threshold(candidate.q());
        if cmi.value < threshold {
            state.accepted.remove(pos);
            removed.push(Removal {
                feature: id,
                cmi: cmi.value,
                threshold,
                estimator: cmi.estimator,
                conditioning_columns: cmi.conditioning_columns,
                compression: cmi.compression,
            });
        }
    }
    Ok(removed)
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Decide with `accepter` instead of the parameters' own accepter.
/// Variances are population variances over all rows.
pub fn evaluate_alternative(
    accepter: &AccepterConfig,
    f: &Candidate,
    y: &Variable,
    state: &SelectionState,
    params: &SelectionParams,
) -> Result<Decision, SelectionError> {
    accepter.validate()?;
    let n = y.values.len();
    f.check(n)?;
    match accepter {
        AccepterConfig::Sfds => accept(state, f, y, params),
        AccepterConfig::Always => Ok(Decision::simple(true, 0.0, 0.0, Statistic::None)),
        AccepterConfig::MutualInformation { threshold } => {
            let frame = Frame::new(y, params)?;
            let mi =
                estimate_mi(&frame.set(&[f]), &frame.y, &frame.cfg).map_err(|source| SelectionError::Estimator {
                    context: format!("mutual information of `{}`", f.id()),
                    source,
                })?;
            Ok(Decision::simple(
                mi.value > *threshold,
                mi.value,
                *threshold,
                Statistic::MutualInformation,
            ))
        }
        AccepterConfig::VarianceThreshold { threshold } => {
            let variances: Vec<f64> = f.values.iter().map(|v| population_variance(v)).collect();
            let min = variances.iter().copied().fold(f64::INFINITY, f64::min);
            let pass = variances.iter().all(|v| v > threshold);
            Ok(Decision::simple(pass, min, *threshold, Statistic::MinVariance))
        }
        AccepterConfig::Compound { mode, children } => {
            let mut parts = Vec::new();
            let mut result = None;
            for child in children {
                let d = evaluate_alternative(child, f, y, state, params)?;
                let stop = match mode {
                    CompoundMode::And => !d.accepted(),
                    CompoundMode::Or => d.accepted(),
                };
                parts.push(d);
                if stop {
                    result = Some(parts.len() - 1);
                    break;
                }
            }
            let deciding = &parts[result.unwrap_or(parts.len() - 1)];
            Ok(Decision {
                outcome: deciding.outcome,
                rule: deciding.rule.clone(),
                cmi: deciding.cmi,
                threshold: deciding.threshold,
                statistic: deciding.statistic,
                trace: Vec::new(),
                parts,
            })
        }
    }
}

/// What happened to one submission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSummary {
    pub feature: FeatureId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pruned: Vec<Removal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<EventError>,
}

impl EventSummary {
    pub fn accepted(&self) -> bool {
        self.decision.as_ref().is_some_and(Decision::accepted)
    }
}

/// Values of `definition` on `dev` after fitting on `dev`.
pub fn feature_values(
    definition: &FeatureDefinition,
    registry: &Registry,
    dev: &Table,
    workers: usize,
) -> Result<Vec<Vec<f64>>, String> {
    let pipeline =
        build_pipeline(std::slice::from_ref(definition), registry, Some(dev.schema())).map_err(|e| e.to_string())?;
    let fitted = fit_pipeline(&pipeline, dev, workers).map_err(|e| e.to_string())?;
    let mut values = transform_values(&fitted, dev, workers).map_err(|e| e.to_string())?;
    Ok(values.remove(0).columns)
}

/// Run one submission through the configured accepter, updating `state`
/// and its log. `values` are the submission's values on the evaluation
/// dataset, or the reason they could not be computed.
pub fn process_submission(
    state: &mut SelectionState,
    definition: &FeatureDefinition,
    values: Result<Vec<Vec<f64>>, String>,
    y: &Variable,
    params: &SelectionParams,
) -> Result<EventSummary, SelectionError> {
    params.validate()?;
    let id = definition.id();
    let rows = y.values.len();
    let reject = |state: &mut SelectionState, stage: &str, message: String| {
        state.record_error(id.clone(), stage, message.clone(), params, rows);
        EventSummary {
            feature: id.clone(),
            decision: None,
            pruned: Vec::new(),
            error: Some(EventError {
                stage: stage.to_string(),
                message,
            }),
        }
    };
    if state.contains(&id) {
        return Ok(reject(
            state,
            "duplicate",
            SelectionError::AlreadyAccepted(id.clone()).to_string(),
        ));
    }
    let values = match values {
        Ok(v) => v,
        Err(message) => return Ok(reject(state, "fit", message)),
    };
    let candidate = Candidate::new(definition.clone(), values);
    if let Err(e) = candidate.check(rows) {
        return Ok(reject(state, "values", e.to_string()));
    }
    let decision = evaluate_alternative(&params.accepter, &candidate, y, state, params)?;
    let event_params = EventParams::new(params, rows);
    let q = candidate.q();
    state.push_event(LogEvent {
        seq: 0,
        event: if decision.accepted() {
            EventKind::Accepted
        } else {
            EventKind::Rejected
        },
        feature: id.clone(),
        q: Some(q),
        decision: Some(decision.clone()),
        pruned_by: None,
        removal: None,
        error: None,
        params: event_params.clone(),
    });
    let mut pruned = Vec::new();
    if decision.accepted() {
        state.accepted.push(candidate);
        if params.accepter.prunes() {
            pruned = prune(state, &id, y, params)?;
            for r in &pruned {
                state.push_event(LogEvent {
                    seq: 0,
                    event: EventKind::Pruned,
                    feature: r.feature.clone(),
                    q: None,
                    decision: None,
                    pruned_by: Some(id.clone()),
                    removal: Some(r.clone()),
                    error: None,
                    params: event_params.clone(),
                });
            }
        }
    }
    Ok(EventSummary {
        feature: id,
        decision: Some(decision),
        pruned,
        error: None,
    })
}

/// Process `stream` in order against `dev` and its target, starting from
/// an empty state.
pub fn run_sfds(
    stream: &[FeatureDefinition],
    registry: &Registry,
    dev: &Table,
    params: &SelectionParams,
    workers: usize,
) -> Result<SelectionState, SelectionError> {
    let y = target_variable(dev)?;
    let mut state = SelectionState::new();
    for definition in stream {
        let values = feature_values(definition, registry, dev, workers);
        process_submission(&mut state, definition, values, &y, params)?;
    }
    Ok(state)
}
