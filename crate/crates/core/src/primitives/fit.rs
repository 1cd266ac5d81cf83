use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::data::{
    category_counts, category_index, expect_columns, expect_single, expect_table, same_shape, Category, CategoryKey,
    CodedAsNumber, Data, Frame, Series, Values,
};
use super::recovery::{apply_with_recovery, Approach};
use super::{stats, Catalog, CheckKind, ImputeStrategy, Primitive, ScaleMode, SpecError, StepError, UnknownPolicy};
use crate::expr::{Expression, CURRENT_COLUMN};
use crate::feature::TransformerSpec;

/// Per-call execution context.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    /// Name given to bare scalars when they must become a column.
    pub name: &'a str,
    /// Output values of referenced features, keyed by path, row-aligned
    /// with the data being processed.
    pub nested: Option<&'a BTreeMap<String, Vec<Series>>>,
}

impl<'a> StepContext<'a> {
    pub fn plain(name: &'a str) -> Self {
        Self { name, nested: None }
    }

    fn renamed(&self, name: &'a str) -> Self {
        Self { name, nested: None }
    }
}

/// Parameters learned by `fit`, one entry per input column where relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learned {
    Stateless,
    Impute {
        fills: Vec<Category>,
    },
    Scale {
        center: Vec<f64>,
        scale: Vec<f64>,
    },
    OneHot {
        categories: Vec<Category>,
        /// Seen during fit but beyond `max_cardinality`; encoded as zeros.
        infrequent: Vec<Category>,
    },
    Clip {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Conditional {
        columns: Vec<ConditionalColumn>,
    },
    Groupwise {
        groups: Vec<GroupFit>,
        fallback: Box<FittedStep>,
    },
    Subset {
        inner: Box<FittedStep>,
    },
    Chain {
        steps: Vec<FittedStep>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalColumn {
    pub statistic: f64,
    pub holds: bool,
    /// The fitted branch; `None` when the check failed and there is no `else`.
    pub branch: Option<FittedStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub group: Category,
    /// `None` when the inner step could not be fitted on this group alone.
    pub fitted: Option<FittedStep>,
}

/// A primitive together with its learned parameters and the input
/// conversion that succeeded at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FittedRepr", into = "FittedRepr")]
pub struct FittedStep {
    pub primitive: Primitive,
    pub learned: Learned,
    pub approach: Approach,
}

#[derive(Serialize, Deserialize)]
struct FittedRepr {
    primitive: Value,
    learned: Learned,
    approach: Approach,
}

impl From<FittedStep> for FittedRepr {
    fn from(f: FittedStep) -> Self {
        FittedRepr {
            primitive: f.primitive.to_spec().to_value(),
            learned: f.learned,
            approach: f.approach,
        }
    }
}

impl TryFrom<FittedRepr> for FittedStep {
    type Error = String;

    fn try_from(r: FittedRepr) -> Result<Self, String> {
        let spec = TransformerSpec::from_value(&r.primitive, "primitive").map_err(|e| e.to_string())?;
        let primitive = Catalog::standard()
            .instantiate(&spec)
            .map_err(|e: SpecError| e.to_string())?;
        Ok(FittedStep {
            primitive,
            learned: r.learned,
            approach: r.approach,
        })
    }
}

impl FittedStep {
    /// Fit `primitive` on `data` and return the fitted step with its output
    /// on that same data.
    pub fn fit(
        primitive: &Primitive,
        data: &Data,
        target: Option<&Series>,
        ctx: &StepContext<'_>,
    ) -> Result<(FittedStep, Data), StepError> {
        if data.rows() == 0 {
            return Err(StepError::Empty(primitive.name().to_owned()));
        }
        let ((learned, out), approach) =
            apply_with_recovery(data, ctx.name, None, |d| fit_raw(primitive, d, target, ctx))?;
        Ok((
            FittedStep {
                primitive: primitive.clone(),
                learned,
                approach,
            },
            out,
        ))
    }

    pub fn transform(&self, data: &Data, ctx: &StepContext<'_>) -> Result<Data, StepError> {
        apply_with_recovery(data, ctx.name, Some(self.approach), |d| {
            transform_raw(&self.primitive, &self.learned, d, ctx)
        })
        .map(|(out, _)| out)
    }
}

/// A step that is either unfitted or fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerStep {
    pub primitive: Primitive,
    pub fitted: Option<FittedStep>,
}

impl TransformerStep {
    pub fn new(primitive: Primitive) -> Self {
        Self {
            primitive,
            fitted: None,
        }
    }

    pub fn instantiate(spec: &TransformerSpec) -> Result<Self, SpecError> {
        Catalog::standard().instantiate(spec).map(Self::new)
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn fit(&self, inputs: &Data, target: Option<&Series>) -> Result<TransformerStep, StepError> {
        let (fitted, _) = FittedStep::fit(&self.primitive, inputs, target, &StepContext::plain("value"))?;
        Ok(TransformerStep {
            primitive: self.primitive.clone(),
            fitted: Some(fitted),
        })
    }

    pub fn transform(&self, inputs: &Data) -> Result<Data, StepError> {
        self.fitted
            .as_ref()
            .ok_or(StepError::NotFitted)?
            .transform(inputs, &StepContext::plain("value"))
    }
}

fn no_observed(primitive: &str, column: &str) -> StepError {
    StepError::NoObservedValues {
        primitive: primitive.to_owned(),
        column: column.to_owned(),
    }
}

fn check_arity(expected: usize, found: usize) -> Result<(), StepError> {
    if expected == found {
        Ok(())
    } else {
        Err(StepError::Arity { expected, found })
    }
}

fn fit_raw(
    primitive: &Primitive,
    data: &Data,
    target: Option<&Series>,
    ctx: &StepContext<'_>,
) -> Result<(Learned, Data), StepError> {
    let learned = match primitive {
        Primitive::Identity
        | Primitive::Expr(_)
        | Primitive::NullIndicator
        | Primitive::FeatureRef { .. }
        | Primitive::ValueMap { .. } => Learned::Stateless,
        Primitive::Impute(strategy) => {
            let mut fills = Vec::new();
            for col in expect_columns(data, "impute")? {
                let fill = match strategy {
                    ImputeStrategy::Mean => {
                        let v = col.as_numbers(CodedAsNumber::OrdinalOnly, "impute")?;
                        stats::mean(&v).map(Category::number)
                    }
                    ImputeStrategy::Median => {
                        let v = col.as_numbers(CodedAsNumber::OrdinalOnly, "impute")?;
                        stats::quantile(&v, 0.5).map(Category::number)
                    }
                    ImputeStrategy::MostFrequent => {
                        // first maximum in canonical order: ties go to the lowest code
                        let counts = category_counts(col);
                        let best = counts.iter().map(|(_, n)| *n).max();
                        counts.into_iter().find(|(_, n)| Some(*n) == best).map(|(c, _)| c)
                    }
                    ImputeStrategy::Constant(c) => Some(c.clone()),
                };
                fills.push(fill.ok_or_else(|| no_observed("impute", &col.name))?);
            }
            Learned::Impute { fills }
        }
        Primitive::Scale(mode) => {
            let (mut center, mut scale) = (Vec::new(), Vec::new());
            for col in expect_columns(data, "scale")? {
                let v = col.as_numbers(CodedAsNumber::OrdinalOnly, "scale")?;
                let (c, s) = match mode {
                    ScaleMode::Standard => {
                        let m = stats::mean(&v).ok_or_else(|| no_observed("scale", &col.name))?;
                        let sd = stats::variance(&v).expect("observed values").sqrt();
                        (m, sd)
                    }
                    ScaleMode::MinMax => {
                        let obs = stats::observed(&v);
                        if obs.is_empty() {
                            return Err(no_observed("scale", &col.name));
                        }
                        let lo = obs.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (lo, hi - lo)
                    }
                };
                center.push(c);
                scale.push(if s == 0.0 { 1.0 } else { s });
            }
            Learned::Scale { center, scale }
        }
        Primitive::OneHot { max_cardinality, .. } => {
            let col = expect_single(data, "one_hot")?;
            let counts = category_counts(&col);
            if counts.is_empty() {
                return Err(no_observed("one_hot", &col.name));
            }
            let keep = match max_cardinality {
                Some(m) if counts.len() > *m => {
                    let mut order: Vec<usize> = (0..counts.len()).collect();
                    order.sort_by(|&a, &b| counts[b].1.cmp(&counts[a].1).then(a.cmp(&b)));
                    let mut keep = vec![false; counts.len()];
                    for &i in &order[..*m] {
                        keep[i] = true;
                    }
                    keep
                }
                _ => vec![true; counts.len()],
            };
            let (mut categories, mut infrequent) = (Vec::new(), Vec::new());
            for ((c, _), k) in counts.into_iter().zip(keep) {
                if k {
                    categories.push(c);
                } else {
                    infrequent.push(c);
                }
            }
            Learned::OneHot { categories, infrequent }
        }
        Primitive::ClipQuantile { lo_q, hi_q } => {
            let (mut lower, mut upper) = (Vec::new(), Vec::new());
            for col in expect_columns(data, "clip_quantile")? {
                let v = col.as_numbers(CodedAsNumber::OrdinalOnly, "clip_quantile")?;
                lower.push(stats::quantile(&v, *lo_q).ok_or_else(|| no_observed("clip_quantile", &col.name))?);
                upper.push(stats::quantile(&v, *hi_q).expect("observed values"));
            }
            Learned::Clip { lower, upper }
        }
        Primitive::Conditional { check, then, otherwise } => {
            let cols = expect_columns(data, "conditional")?;
            let rows = data.rows();
            let mut columns = Vec::with_capacity(cols.len());
            let mut outputs = Vec::new();
            for col in cols {
                let statistic = check_statistic(check.kind, col)?;
                let holds = check.holds(statistic);
                let branch = if holds { Some(then) } else { otherwise.as_ref() };
                let branch = match branch {
                    Some(p) => {
                        let (fitted, out) =
                            FittedStep::fit(p, &Data::Column(col.clone()), target, &ctx.renamed(&col.name))?;
                        outputs.extend(out.into_series(&col.name));
                        Some(fitted)
                    }
                    None => {
                        outputs.push(col.clone());
                        None
                    }
                };
                columns.push(ConditionalColumn {
                    statistic,
                    holds,
                    branch,
                });
            }
            return Ok((Learned::Conditional { columns }, same_shape(data, rows, outputs)));
        }
        Primitive::Groupwise { by, inner } => {
            let (by_col, inner_data) = split_groupwise(data, by)?;
            let groups: Vec<Category> = category_counts(&by_col).into_iter().map(|(c, _)| c).collect();
            let index: HashMap<CategoryKey, usize> = category_index(&groups);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
            for r in 0..by_col.len() {
                if let Some(c) = by_col.category(r) {
                    members[index[&c.key()]].push(r);
                }
            }
            let inner_ctx = ctx.renamed(ctx.name);
            let fits = groups
                .into_iter()
                .zip(&members)
                .map(|(group, rows)| {
                    let sub = inner_data.select_rows(rows);
                    let t = target.map(|t| t.select_rows(rows));
                    let fitted = FittedStep::fit(inner, &sub, t.as_ref(), &inner_ctx)
                        .ok()
                        .map(|(f, _)| f);
                    GroupFit { group, fitted }
                })
                .collect();
            let (fallback, _) = FittedStep::fit(inner, &inner_data, target, &inner_ctx)?;
            Learned::Groupwise {
                groups: fits,
                fallback: Box::new(fallback),
            }
        }
        Primitive::Subset { inputs, inner } => {
            let (selected, rest) = split_subset(data, inputs)?;
            let name = subset_name(inputs, ctx);
            let (fitted, out) = FittedStep::fit(inner, &selected, target, &StepContext { name, ..*ctx })?;
            let mut columns = out.into_series(name);
            columns.extend(rest);
            return Ok((
                Learned::Subset {
                    inner: Box::new(fitted),
                },
                Data::Table(Frame::new(data.rows(), columns)),
            ));
        }
        Primitive::Chain(steps) => {
            let mut current = data.clone();
            let mut fitted = Vec::with_capacity(steps.len());
            for step in steps {
                let (f, out) = FittedStep::fit(step, &current, target, ctx)?;
                fitted.push(f);
                current = out;
            }
            return Ok((Learned::Chain { steps: fitted }, current));
        }
    };
    let out = transform_raw(primitive, &learned, data, ctx)?;
    Ok((learned, out))
}

fn check_statistic(kind: CheckKind, col: &Series) -> Result<f64, StepError> {
    Ok(match kind {
        CheckKind::SkewGt => stats::skewness(&col.as_numbers(CodedAsNumber::OrdinalOnly, "conditional")?),
        CheckKind::VarianceLt => {
            stats::variance(&col.as_numbers(CodedAsNumber::OrdinalOnly, "conditional")?).unwrap_or(0.0)
        }
        CheckKind::MissingFracGt => {
            if col.is_empty() {
                0.0
            } else {
                (0..col.len()).filter(|&r| col.is_missing(r)).count() as f64 / col.len() as f64
            }
        }
        CheckKind::CardinalityGt => category_counts(col).len() as f64,
    })
}

fn split_groupwise(data: &Data, by: &str) -> Result<(Series, Data), StepError> {
    let frame = expect_table(data, "groupwise")?;
    let by_col = frame
        .column(by)
        .ok_or_else(|| StepError::GroupByMissing(by.to_owned()))?
        .clone();
    let rest: Vec<Series> = frame.columns().iter().filter(|c| c.name != by).cloned().collect();
    if rest.is_empty() {
        return Err(StepError::Invalid(format!(
            "groupwise needs at least one column besides `{by}`"
        )));
    }
    Ok((by_col, Data::from_inputs(Frame::new(frame.rows(), rest))))
}

fn split_subset(data: &Data, inputs: &[String]) -> Result<(Data, Vec<Series>), StepError> {
    let frame = expect_table(data, "subset")?;
    let mut selected = Vec::with_capacity(inputs.len());
    for name in inputs {
        let col = frame
            .column(name)
            .ok_or_else(|| StepError::Invalid(format!("subset input `{name}` is not among the step's columns")))?;
        selected.push(col.clone());
    }
    let rest = frame
        .columns()
        .iter()
        .filter(|c| !inputs.contains(&c.name))
        .cloned()
        .collect();
    Ok((Data::from_inputs(Frame::new(frame.rows(), selected)), rest))
}

fn subset_name<'a>(inputs: &'a [String], ctx: &StepContext<'a>) -> &'a str {
    if inputs.len() == 1 {
        &inputs[0]
    } else {
        ctx.name
    }
}

fn transform_raw(
    primitive: &Primitive,
    learned: &Learned,
    data: &Data,
    ctx: &StepContext<'_>,
) -> Result<Data, StepError> {
    let rows = data.rows();
    match (primitive, learned) {
        (Primitive::Identity, _) => Ok(data.clone()),
        (Primitive::Expr(e), _) => evaluate_expression(e, data),
        (Primitive::NullIndicator, _) => {
            let out = expect_columns(data, "null_indicator")?
                .into_iter()
                .map(|c| {
                    Series::numeric(
                        format!("{}_missing", c.name),
                        (0..c.len()).map(|r| if c.is_missing(r) { 1.0 } else { 0.0 }).collect(),
                    )
                })
                .collect();
            Ok(same_shape(data, rows, out))
        }
        (Primitive::FeatureRef { path }, _) => {
            let mut columns: Vec<Series> = expect_columns(data, "feature_ref")?.into_iter().cloned().collect();
            let nested = ctx
                .nested
                .and_then(|n| n.get(path))
                .ok_or_else(|| StepError::NestedUnavailable(path.clone()))?;
            if nested.iter().any(|s| s.len() != rows) {
                return Err(StepError::Invalid(format!(
                    "values of nested feature `{path}` are not aligned with the current rows"
                )));
            }
            columns.extend(nested.iter().cloned());
            Ok(Data::Table(Frame::new(rows, columns)))
        }
        (Primitive::ValueMap { mapping, default }, _) => {
            let col = expect_single(data, "value_map")?;
            let mut out = Vec::with_capacity(rows);
            for r in 0..rows {
                let v = match col.category(r) {
                    None => f64::NAN,
                    Some(c) => match lookup(mapping, &c).or(*default) {
                        Some(v) => v,
                        None => {
                            return Err(StepError::Unmapped {
                                column: col.name.clone(),
                                value: c.to_string(),
                            })
                        }
                    },
                };
                out.push(v);
            }
            Ok(Data::Column(Series::numeric(col.name, out)))
        }
        (Primitive::Impute(_), Learned::Impute { fills }) => {
            let cols = expect_columns(data, "impute")?;
            check_arity(fills.len(), cols.len())?;
            let out = cols
                .into_iter()
                .zip(fills)
                .map(|(c, fill)| impute_column(c, fill))
                .collect::<Result<_, _>>()?;
            Ok(same_shape(data, rows, out))
        }
        (Primitive::Scale(_), Learned::Scale { center, scale }) => {
            let cols = expect_columns(data, "scale")?;
            check_arity(center.len(), cols.len())?;
            let mut out = Vec::with_capacity(cols.len());
            for (i, c) in cols.into_iter().enumerate() {
                let v = c.as_numbers(CodedAsNumber::OrdinalOnly, "scale")?;
                out.push(Series::numeric(
                    c.name.clone(),
                    v.iter().map(|x| (x - center[i]) / scale[i]).collect(),
                ));
            }
            Ok(same_shape(data, rows, out))
        }
        (Primitive::OneHot { handle_unknown, .. }, Learned::OneHot { categories, infrequent }) => {
            let col = expect_single(data, "one_hot")?;
            let index = category_index(categories);
            let rare = category_index(infrequent);
            let mut grid = vec![vec![0.0; rows]; categories.len()];
            #[allow(clippy::needless_range_loop)]
            for r in 0..rows {
                let Some(c) = col.category(r) else { continue };
                let key = c.key();
                match index.get(&key) {
                    Some(&k) => grid[k][r] = 1.0,
                    None if rare.contains_key(&key) || *handle_unknown == UnknownPolicy::Zeros => {}
                    None => {
                        return Err(StepError::UnseenCategory {
                            column: col.name.clone(),
                            category: c.to_string(),
                        })
                    }
                }
            }
            let out = categories
                .iter()
                .zip(grid)
                .map(|(c, v)| Series::numeric(format!("{}={c}", col.name), v))
                .collect();
            Ok(Data::Table(Frame::new(rows, out)))
        }
        (Primitive::ClipQuantile { .. }, Learned::Clip { lower, upper }) => {
            let cols = expect_columns(data, "clip_quantile")?;
            check_arity(lower.len(), cols.len())?;
            let mut out = Vec::with_capacity(cols.len());
            for (i, c) in cols.into_iter().enumerate() {
                let v = c.as_numbers(CodedAsNumber::OrdinalOnly, "clip_quantile")?;
                out.push(Series::numeric(
                    c.name.clone(),
                    v.iter().map(|x| x.clamp(lower[i], upper[i])).collect(),
                ));
            }
            Ok(same_shape(data, rows, out))
        }
        (Primitive::Conditional { .. }, Learned::Conditional { columns }) => {
            let cols = expect_columns(data, "conditional")?;
            check_arity(columns.len(), cols.len())?;
            let mut out = Vec::new();
            for (c, learned) in cols.into_iter().zip(columns) {
                match &learned.branch {
                    Some(f) => out.extend(
                        f.transform(&Data::Column(c.clone()), &ctx.renamed(&c.name))?
                            .into_series(&c.name),
                    ),
                    None => out.push(c.clone()),
                }
            }
            Ok(same_shape(data, rows, out))
        }
        (Primitive::Groupwise { by, .. }, Learned::Groupwise { groups, fallback }) => {
            let (by_col, inner_data) = split_groupwise(data, by)?;
            transform_groupwise(&by_col, &inner_data, groups, fallback, &ctx.renamed(ctx.name))
        }
        (Primitive::Subset { inputs, .. }, Learned::Subset { inner }) => {
            let (selected, rest) = split_subset(data, inputs)?;
            let name = subset_name(inputs, ctx);
            let mut columns = inner
                .transform(&selected, &StepContext { name, ..*ctx })?
                .into_series(name);
            columns.extend(rest);
            Ok(Data::Table(Frame::new(rows, columns)))
        }
        (Primitive::Chain(_), Learned::Chain { steps }) => {
            let mut current = data.clone();
            for step in steps {
                current = step.transform(&current, ctx)?;
            }
            Ok(current)
        }
        (p, l) => Err(StepError::Invalid(format!(
            "learned state {} does not belong to `{}`",
            serde_json::to_string(l).unwrap_or_default(),
            p.name()
        ))),
    }
}

fn lookup(mapping: &[(String, f64)], c: &Category) -> Option<f64> {
    mapping.iter().find_map(|(k, v)| {
        let hit = match c {
            Category::Level(s) => k == s,
            Category::Number(x) => k.parse::<f64>().is_ok_and(|y| y == *x),
        };
        hit.then_some(*v)
    })
}

fn impute_column(col: &Series, fill: &Category) -> Result<Series, StepError> {
    match (&col.values, fill) {
        (Values::Coded { codes, levels, ordinal }, Category::Level(level)) => {
            let (levels, code) = match levels.iter().position(|l| l == level) {
                Some(i) => (Arc::clone(levels), i as u32),
                None => {
                    let mut extended = levels.as_ref().clone();
                    extended.push(level.clone());
                    (Arc::new(extended), levels.len() as u32)
                }
            };
            Ok(Series {
                name: col.name.clone(),
                values: Values::Coded {
                    codes: codes.iter().map(|c| Some(c.unwrap_or(code))).collect(),
                    levels,
                    ordinal: *ordinal,
                },
            })
        }
        (Values::Numeric(_), Category::Level(level)) => Err(StepError::Invalid(format!(
            "cannot fill numeric column `{}` with text `{level}`",
            col.name
        ))),
        (_, Category::Number(x)) => {
            let v = col.as_numbers(CodedAsNumber::OrdinalOnly, "impute")?;
            Ok(Series::numeric(
                col.name.clone(),
                v.iter().map(|v| if v.is_nan() { *x } else { *v }).collect(),
            ))
        }
    }
}

fn transform_groupwise(
    by_col: &Series,
    inner_data: &Data,
    groups: &[GroupFit],
    fallback: &FittedStep,
    ctx: &StepContext<'_>,
) -> Result<Data, StepError> {
    let rows = by_col.len();
    let keys: Vec<Category> = groups.iter().map(|g| g.group.clone()).collect();
    let index = category_index(&keys);
    // bucket per group, then one for the fallback
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); groups.len() + 1];
    for r in 0..rows {
        let slot = by_col
            .category(r)
            .and_then(|c| index.get(&c.key()).copied())
            .filter(|&g| groups[g].fitted.is_some())
            .unwrap_or(groups.len());
        buckets[slot].push(r);
    }
    let mut names: Option<Vec<String>> = None;
    let mut grid: Vec<Vec<f64>> = Vec::new();
    for (slot, members) in buckets.iter().enumerate() {
        let is_fallback = slot == groups.len();
        if members.is_empty() && !(is_fallback && names.is_none()) {
            continue;
        }
        let fitted = if is_fallback {
            fallback
        } else {
            groups[slot].fitted.as_ref().expect("bucketed groups are fitted")
        };
        let out = fitted
            .transform(&inner_data.select_rows(members), ctx)?
            .into_numeric()?;
        match &names {
            None => {
                names = Some(out.iter().map(|s| s.name.clone()).collect());
                grid = vec![vec![f64::NAN; rows]; out.len()];
            }
            Some(n) if n.len() != out.len() => {
                return Err(StepError::Invalid(format!(
                    "groupwise inner step produced {} column(s) for one group and {} for another",
                    n.len(),
                    out.len()
                )))
            }
            Some(_) => {}
        }
        for (j, s) in out.iter().enumerate() {
            let Values::Numeric(v) = &s.values else {
                unreachable!("numeric output")
            };
            for (&r, &x) in members.iter().zip(v) {
                grid[j][r] = x;
            }
        }
    }
    let names = names.expect("fallback bucket always runs");
    let columns: Vec<Series> = names
        .into_iter()
        .zip(grid)
        .map(|(n, v)| Series::numeric(n, v))
        .collect();
    Ok(same_shape(inner_data, rows, columns))
}

/// Bind expression variables to columns and evaluate.
///
/// A variable binds to the column of the same name; `x` binds to the current
/// column when there is exactly one; and when there is exactly one column and
/// one distinct variable, that variable binds to it whatever its name.
fn evaluate_expression(e: &Expression, data: &Data) -> Result<Data, StepError> {
    let rows = data.rows();
    let scalars;
    let columns: Vec<&Series> = match data {
        Data::Scalars(v) => {
            scalars = Series::numeric(CURRENT_COLUMN, v.clone());
            vec![&scalars]
        }
        other => expect_columns(other, "expr")?,
    };
    let vars = e.variables();
    let positional = columns.len() == 1 && vars.len() == 1;
    let mut bound = Vec::with_capacity(vars.len());
    for var in vars {
        let col = if positional {
            columns[0]
        } else if let Some(c) = columns.iter().find(|c| &c.name == var) {
            c
        } else if var == CURRENT_COLUMN && columns.len() == 1 {
            columns[0]
        } else {
            return Err(StepError::Incompatible(format!(
                "expression variable `{var}` does not name a column of {}",
                data.shape_name()
            )));
        };
        bound.push(col.as_numbers(CodedAsNumber::AnyNumericLevels, "expr")?);
    }
    let slices: Vec<&[f64]> = bound.iter().map(|c| c.as_ref()).collect();
    Ok(Data::Scalars(e.evaluate(&slices, rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::TransformerSpec;
    use serde_json::json;

    fn prim(v: Value) -> Primitive {
        Catalog::standard()
            .instantiate(&TransformerSpec::from_value(&v, "t").unwrap())
            .unwrap()
    }

    fn col(name: &str, v: &[f64]) -> Data {
        Data::Column(Series::numeric(name, v.to_vec()))
    }

    fn coded(name: &str, values: &[Option<&str>]) -> Series {
        let mut levels: Vec<String> = values.iter().flatten().map(|s| s.to_string()).collect();
        levels.sort();
        levels.dedup();
        Series {
            name: name.into(),
            values: Values::Coded {
                codes: values
                    .iter()
                    .map(|v| v.map(|s| levels.iter().position(|l| l == s).unwrap() as u32))
                    .collect(),
                levels: Arc::new(levels),
                ordinal: false,
            },
        }
    }

    fn numbers(d: Data) -> Vec<Vec<f64>> {
        d.into_numeric()
            .unwrap()
            .into_iter()
            .map(|s| match s.values {
                Values::Numeric(v) => v,
                _ => unreachable!(),
            })
            .collect()
    }

    fn fit(p: &Primitive, d: &Data) -> Result<(FittedStep, Data), StepError> {
        FittedStep::fit(p, d, None, &StepContext::plain("f"))
    }

    fn apply(f: &FittedStep, d: &Data) -> Result<Data, StepError> {
        f.transform(d, &StepContext::plain("f"))
    }

    #[test]
    fn impute_mean_uses_fit_data_only() {
        let p = prim(json!({"primitive": "impute", "params": {"strategy": "mean"}}));
        let (f, _) = fit(&p, &col("a", &[1.0, f64::NAN, 3.0])).unwrap();
        assert_eq!(
            f.learned,
            Learned::Impute {
                fills: vec![Category::Number(2.0)]
            }
        );
        let out = apply(&f, &col("a", &[f64::NAN, 5.0])).unwrap();
        assert_eq!(numbers(out), vec![vec![2.0, 5.0]]);
    }

    #[test]
    fn one_hot_unseen_is_zeros() {
        let p = prim(json!({"primitive": "one_hot"}));
        let (f, _) = fit(&p, &Data::Column(coded("s", &[Some("a"), Some("b")]))).unwrap();
        let out = apply(&f, &Data::Column(coded("s", &[Some("b"), Some("a"), Some("c")]))).unwrap();
        let Data::Table(t) = &out else { panic!() };
        assert_eq!(t.columns()[0].name, "s=a");
        assert_eq!(numbers(out), vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
    }

    #[test]
    fn one_hot_error_policy_and_cardinality_cap() {
        let p = prim(json!({"primitive": "one_hot", "params": {"handle_unknown": "error", "max_cardinality": 2}}));
        let train = coded("s", &[Some("a"), Some("b"), Some("b"), Some("c"), Some("c"), None]);
        let (f, _) = fit(&p, &Data::Column(train)).unwrap();
        // counts a:1 b:2 c:2 keep b and c; a is seen but infrequent
        let Learned::OneHot { categories, infrequent } = &f.learned else {
            panic!()
        };
        assert_eq!(categories, &[Category::Level("b".into()), Category::Level("c".into())]);
        assert_eq!(infrequent, &[Category::Level("a".into())]);
        assert!(apply(&f, &Data::Column(coded("s", &[Some("a")]))).is_ok());
        assert!(matches!(
            apply(&f, &Data::Column(coded("s", &[Some("z")]))),
            Err(StepError::UnseenCategory { .. })
        ));
    }

    #[test]
    fn one_hot_without_observations_fails() {
        let p = prim(json!({"primitive": "one_hot"}));
        assert!(matches!(
            fit(&p, &col("a", &[f64::NAN])),
            Err(StepError::NoObservedValues { .. })
        ));
    }

    #[test]
    fn scale_standard_and_minmax() {
        let p = prim(json!({"primitive": "scale", "params": {"mode": "standard"}}));
        let (f, _) = fit(&p, &col("a", &[8.0, 12.0])).unwrap();
        assert_eq!(numbers(apply(&f, &col("a", &[12.0])).unwrap()), vec![vec![1.0]]);
        let p = prim(json!({"primitive": "scale", "params": {"mode": "minmax"}}));
        let (f, out) = fit(&p, &col("a", &[2.0, 4.0, 6.0])).unwrap();
        assert_eq!(numbers(out), vec![vec![0.0, 0.5, 1.0]]);
        assert_eq!(numbers(apply(&f, &col("a", &[8.0])).unwrap()), vec![vec![1.5]]);
        let (f, _) = fit(&p, &col("a", &[3.0, 3.0])).unwrap();
        assert_eq!(
            f.learned,
            Learned::Scale {
                center: vec![3.0],
                scale: vec![1.0]
            }
        );
    }

    #[test]
    fn scale_rejects_categorical() {
        let p = prim(json!({"primitive": "scale"}));
        assert!(matches!(
            fit(&p, &Data::Column(coded("s", &[Some("a")]))),
            Err(StepError::UnsupportedKind { .. })
        ));
    }

    #[test]
    fn most_frequent_ties_take_lowest_code() {
        let p = prim(json!({"primitive": "impute", "params": {"strategy": "most_frequent"}}));
        let (f, out) = fit(&p, &Data::Column(coded("s", &[Some("b"), Some("a"), None]))).unwrap();
        assert_eq!(
            f.learned,
            Learned::Impute {
                fills: vec![Category::Level("a".into())]
            }
        );
        let s = out.into_series("s").pop().unwrap();
        assert_eq!(s.category(2), Some(Category::Level("a".into())));
    }

    #[test]
    fn constant_fill_adds_a_level() {
        let p = prim(json!({"primitive": "impute", "params": {"strategy": "constant", "value": "none"}}));
        let (_, out) = fit(&p, &Data::Column(coded("s", &[Some("b"), None]))).unwrap();
        let s = out.into_series("s").pop().unwrap();
        assert_eq!(s.category(1), Some(Category::Level("none".into())));
        assert!(fit(&p, &col("a", &[1.0, f64::NAN])).is_err());
    }

    #[test]
    fn value_map_default_and_unmapped() {
        let p = prim(json!({"primitive": "value_map", "params": {"mapping": {"a": 1, "b": 2}}}));
        let d = Data::Column(coded("s", &[Some("a"), None, Some("b")]));
        let (_, out) = fit(&p, &d).unwrap();
        let v = numbers(out);
        assert_eq!((v[0][0], v[0][2]), (1.0, 2.0));
        assert!(v[0][1].is_nan());
        assert!(matches!(
            fit(&p, &Data::Column(coded("s", &[Some("c")]))),
            Err(StepError::Unmapped { .. })
        ));
        let p = prim(json!({"primitive": "value_map", "params": {"mapping": {"1": 10}, "default": -1}}));
        assert_eq!(
            numbers(fit(&p, &col("n", &[1.0, 2.0])).unwrap().1),
            vec![vec![10.0, -1.0]]
        );
    }

    #[test]
    fn null_indicator_and_clip() {
        let p = prim(json!({"primitive": "null_indicator"}));
        let (_, out) = fit(&p, &col("a", &[1.0, f64::NAN])).unwrap();
        let s = out.into_series("").pop().unwrap();
        assert_eq!(s.name, "a_missing");
        let p = prim(json!({"primitive": "clip_quantile", "params": {"lo_q": 0.25, "hi_q": 0.75}}));
        let (f, _) = fit(&p, &col("a", &[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert_eq!(
            numbers(apply(&f, &col("a", &[0.0, 3.5, 9.0])).unwrap()),
            vec![vec![2.0, 3.5, 4.0]]
        );
    }

    #[test]
    fn conditional_stores_statistic_and_decision() {
        let p = prim(json!({"primitive": "conditional",
            "params": {"check": {"skew_gt": 0.75}, "then": "log1p(x)"}}));
        let skewed = [1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 50.0];
        let (f, out) = fit(&p, &col("a", &skewed)).unwrap();
        let Learned::Conditional { columns } = &f.learned else {
            panic!()
        };
        assert!(columns[0].holds);
        assert_eq!(columns[0].statistic, stats::skewness(&skewed));
        assert_eq!(numbers(out)[0][6], 50f64.ln_1p());

        let symmetric = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (f, out) = fit(&p, &col("a", &symmetric)).unwrap();
        let Learned::Conditional { columns } = &f.learned else {
            panic!()
        };
        assert!(!columns[0].holds && columns[0].branch.is_none());
        assert_eq!(numbers(out), vec![symmetric.to_vec()]);
    }

    #[test]
    fn groupwise_learns_per_group_and_fallback() {
        let p = prim(json!({"primitive": "groupwise",
            "params": {"by": "sex", "inner": {"primitive": "impute", "params": {"strategy": "mean"}}}}));
        let sex = coded("sex", &[Some("f"), Some("f"), Some("m"), Some("m"), None]);
        let age = Series::numeric("age", vec![1.0, f64::NAN, 10.0, 20.0, 4.0]);
        let d = Data::Table(Frame::new(5, vec![sex, age]));
        let (f, out) = fit(&p, &d).unwrap();
        let Learned::Groupwise { groups, fallback } = &f.learned else {
            panic!()
        };
        assert_eq!(groups.len(), 2);
        assert_eq!(
            groups[0].fitted.as_ref().unwrap().learned,
            Learned::Impute {
                fills: vec![Category::Number(1.0)]
            }
        );
        assert_eq!(
            groups[1].fitted.as_ref().unwrap().learned,
            Learned::Impute {
                fills: vec![Category::Number(15.0)]
            }
        );
        assert_eq!(
            fallback.learned,
            Learned::Impute {
                fills: vec![Category::Number(8.75)]
            }
        );
        assert_eq!(numbers(out), vec![vec![1.0, 1.0, 10.0, 20.0, 4.0]]);

        let new = Data::Table(Frame::new(
            3,
            vec![
                coded("sex", &[Some("x"), Some("m"), None]),
                Series::numeric("age", vec![f64::NAN; 3]),
            ],
        ));
        assert_eq!(numbers(apply(&f, &new).unwrap()), vec![vec![8.75, 15.0, 8.75]]);
    }

    #[test]
    fn groupwise_requires_by() {
        let p = prim(json!({"primitive": "groupwise", "params": {"by": "g", "inner": "x"}}));
        let d = Data::Table(Frame::new(
            1,
            vec![Series::numeric("a", vec![1.0]), Series::numeric("b", vec![1.0])],
        ));
        assert_eq!(fit(&p, &d).unwrap_err(), StepError::GroupByMissing("g".into()));
    }

    #[test]
    fn subset_passes_other_columns_through() {
        let p = prim(json!([["b"], "x * 10"]));
        let d = Data::Table(Frame::new(
            2,
            vec![
                Series::numeric("a", vec![1.0, 2.0]),
                Series::numeric("b", vec![3.0, 4.0]),
            ],
        ));
        let (_, out) = fit(&p, &d).unwrap();
        let cols = out.into_series("");
        assert_eq!(cols.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(
            numbers(Data::Table(Frame::new(2, cols))),
            vec![vec![30.0, 40.0], vec![1.0, 2.0]]
        );
    }

    #[test]
    fn recovery_examples() {
        // one_hot needs a column, gets a one-column table
        let p = prim(json!({"primitive": "one_hot"}));
        let d = Data::Table(Frame::new(2, vec![Series::numeric("a", vec![1.0, 2.0])]));
        assert_eq!(fit(&p, &d).unwrap().0.approach, Approach::TableToColumn);
        // subset needs a table, gets a column
        let p = prim(json!([["a"], "x + 1"]));
        assert_eq!(fit(&p, &col("a", &[1.0])).unwrap().0.approach, Approach::ColumnToTable);
        // scale needs named columns, gets bare scalars
        let p = prim(json!({"primitive": "scale"}));
        assert_eq!(
            fit(&p, &Data::Scalars(vec![1.0, 2.0])).unwrap().0.approach,
            Approach::ScalarsToColumn
        );
        // two variables, one column: nothing works
        let p = prim(json!("a + b"));
        let StepError::Recovery { trace, .. } = fit(&p, &col("a", &[1.0])).unwrap_err() else {
            panic!()
        };
        assert_eq!(trace.len(), 4);
    }

    #[test]
    fn expression_binding() {
        let p = prim(json!("a * b"));
        let d = Data::Table(Frame::new(
            2,
            vec![
                Series::numeric("a", vec![1.0, 2.0]),
                Series::numeric("b", vec![3.0, 4.0]),
            ],
        ));
        assert_eq!(numbers(fit(&p, &d).unwrap().1), vec![vec![3.0, 8.0]]);
        // a single variable binds to a single column whatever its name
        let p = prim(json!("log1p(`Lot Area`)"));
        assert_eq!(numbers(fit(&p, &col("renamed", &[0.0])).unwrap().1), vec![vec![0.0]]);
        let p = prim(json!("x"));
        assert!(fit(&p, &d).is_err());
    }

    #[test]
    fn chain_and_unfitted_step() {
        let step = TransformerStep::instantiate(&TransformerSpec::from_value(
            &json!({"primitive": "chain", "params": {"steps": ["x * 2", {"primitive": "impute", "params": {"strategy": "median"}}]}}),
            "t",
        ).unwrap())
        .unwrap();
        assert_eq!(step.transform(&col("a", &[1.0])).unwrap_err(), StepError::NotFitted);
        let fitted = step.fit(&col("a", &[1.0, 3.0, f64::NAN, 5.0]), None).unwrap();
        assert_eq!(
            numbers(fitted.transform(&col("a", &[f64::NAN, 1.0])).unwrap()),
            vec![vec![6.0, 2.0]]
        );
    }

    #[test]
    fn fitted_state_round_trips_through_json() {
        let p = prim(json!({"primitive": "groupwise",
            "params": {"by": "g", "inner": [{"primitive": "conditional",
                "params": {"check": {"missing_frac_gt": 0.1}, "then": {"primitive": "impute", "params": {"strategy": "median"}}}},
                {"primitive": "scale"}]}}));
        let d = Data::Table(Frame::new(
            4,
            vec![
                coded("g", &[Some("a"), Some("a"), Some("b"), Some("b")]),
                Series::numeric("v", vec![1.0, f64::NAN, 3.0, 7.0]),
            ],
        ));
        let (f, _) = fit(&p, &d).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: FittedStep = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn non_finite_state_does_not_round_trip() {
        let p = prim(json!({"primitive": "scale"}));
        let (f, _) = fit(&p, &col("a", &[-1e200, 1e200])).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert!(serde_json::from_str::<FittedStep>(&text).is_err());
    }

    #[test]
    fn feature_ref_appends_nested_values() {
        let p = prim(json!({"primitive": "feature_ref", "params": {"path": "b.json"}}));
        let mut nested = BTreeMap::new();
        nested.insert("b.json".to_string(), vec![Series::numeric("b_out", vec![7.0, 8.0])]);
        let ctx = StepContext {
            name: "f",
            nested: Some(&nested),
        };
        let (_, out) = FittedStep::fit(&p, &col("a", &[1.0, 2.0]), None, &ctx).unwrap();
        assert_eq!(numbers(out), vec![vec![1.0, 2.0], vec![7.0, 8.0]]);
        assert_eq!(
            fit(&p, &col("a", &[1.0])).unwrap_err(),
            StepError::NestedUnavailable("b.json".into())
        );
    }
}
