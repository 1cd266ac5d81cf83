//! Feature-engineering pipelines: compose definitions, fit on development
//! data, transform new data into a feature matrix.
//!
//! Features that nest other features are executed after them; the nested
//! values are computed once per call and shared by every dependent. Within
//! one dependency level, features run concurrently on a worker pool and
//! write into pre-assigned slots, so results do not depend on the number
//! of workers.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::feature::{
    infer_output_names, resolve_references, FeatureDefinition, FeatureError, FeatureId, Registry, ResolvedFeature,
};
use crate::primitives::{Catalog, Data, FittedStep, Frame, Primitive, Series, StepContext, StepError, Values};
use crate::table::{Schema, Table};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("feature `{0}` appears more than once")]
    DuplicateFeature(FeatureId),
    #[error("feature `{feature}` reads column `{column}`, which is not in the data")]
    UnknownInput { feature: FeatureId, column: String },
    #[error("feature `{feature}`, step {step}: {error}")]
    Step {
        feature: FeatureId,
        step: usize,
        error: StepError,
    },
    #[error("feature `{feature}` was fitted with {expected} output(s) but produced {found}")]
    OutputDimension {
        feature: FeatureId,
        expected: usize,
        found: usize,
    },
    #[error("output column `{0}` is produced by more than one feature")]
    DuplicateOutput(String),
    #[error("data schema does not match the schema the pipeline was fitted on")]
    SchemaMismatch,
    #[error("feature matrix column `{column}` has a {problem} value in row {row}")]
    InvalidValue {
        column: String,
        row: usize,
        problem: &'static str,
    },
    #[error("could not start worker pool: {0}")]
    Workers(String),
    #[error("pipeline bundle: {0}")]
    Bundle(String),
}

/// One feature in the dependency graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineNode {
    pub definition: FeatureDefinition,
    pub steps: Vec<Primitive>,
    /// Referenced features: `(path, node index)`.
    pub dependencies: Vec<(String, usize)>,
    /// Length of the longest dependency chain below this node.
    pub level: usize,
}

impl PipelineNode {
    pub fn id(&self) -> FeatureId {
        self.definition.id()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    /// Requested features in declared order.
    pub features: Vec<ResolvedFeature>,
    /// Every feature that must run, requested or nested.
    pub nodes: Vec<PipelineNode>,
    /// Node indices with dependencies first.
    pub topo_order: Vec<usize>,
    /// Node index of each requested feature.
    pub outputs: Vec<usize>,
}

impl Pipeline {
    /// Dependency edges `(dependent, dependency)`.
    pub fn edges(&self) -> Vec<(FeatureId, FeatureId)> {
        self.nodes
            .iter()
            .flat_map(|n| n.dependencies.iter().map(move |(_, d)| (n.id(), self.nodes[*d].id())))
            .collect()
    }
}

/// Resolve, instantiate and order `features`. With a schema, every input
/// column is checked against it.
pub fn build_pipeline(
    features: &[FeatureDefinition],
    registry: &Registry,
    schema: Option<&Schema>,
) -> Result<Pipeline, EngineError> {
    let mut resolved = Vec::with_capacity(features.len());
    for (i, fd) in features.iter().enumerate() {
        if features[..i].iter().any(|f| f.id() == fd.id()) {
            return Err(EngineError::DuplicateFeature(fd.id()));
        }
        resolved.push(resolve_references(fd, registry)?);
    }
    let mut nodes: Vec<PipelineNode> = Vec::new();
    let mut outputs = Vec::with_capacity(resolved.len());
    for r in &resolved {
        outputs.push(add_node(r, &mut nodes)?);
    }
    if let Some(schema) = schema {
        for n in &nodes {
            if let Some(c) = n.definition.input.iter().find(|c| schema.column(c).is_none()) {
                return Err(EngineError::UnknownInput {
                    feature: n.id(),
                    column: c.clone(),
                });
            }
        }
    }
    let mut topo_order: Vec<usize> = (0..nodes.len()).collect();
    topo_order.sort_by_key(|&i| (nodes[i].level, i));
    Ok(Pipeline {
        features: resolved,
        nodes,
        topo_order,
        outputs,
    })
}

fn add_node(r: &ResolvedFeature, nodes: &mut Vec<PipelineNode>) -> Result<usize, EngineError> {
    if let Some(i) = nodes.iter().position(|n| n.id() == r.id()) {
        if nodes[i].definition != r.definition {
            return Err(EngineError::DuplicateFeature(r.id()));
        }
        return Ok(i);
    }
    let mut dependencies = Vec::with_capacity(r.dependencies.len());
    for (path, dep) in &r.dependencies {
        dependencies.push((path.clone(), add_node(dep, nodes)?));
    }
    let level = dependencies.iter().map(|(_, d)| nodes[*d].level + 1).max().unwrap_or(0);
    nodes.push(PipelineNode {
        definition: r.definition.clone(),
        steps: Catalog::standard().validate_definition(&r.definition)?,
        dependencies,
        level,
    });
    Ok(nodes.len() - 1)
}

/// Hex digest of the ordered `(name, kind)` list of non-target columns.
pub fn schema_fingerprint(schema: &Schema) -> String {
    let mut h = Sha256::new();
    for c in &schema.columns {
        if Some(&c.name) == schema.target.as_ref() {
            continue;
        }
        h.update(c.name.as_bytes());
        h.update([0]);
        h.update(c.kind.as_str().as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFeature {
    pub definition: FeatureDefinition,
    pub dependencies: Vec<(String, usize)>,
    pub level: usize,
    pub steps: Vec<FittedStep>,
    pub output_names: Vec<String>,
}

impl FittedFeature {
    pub fn id(&self) -> FeatureId {
        self.definition.id()
    }
}

/// Fitted features plus what is needed to apply them to new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub fingerprint: String,
    /// Every fitted feature, in the same order as the pipeline's nodes.
    pub features: Vec<FittedFeature>,
    pub topo_order: Vec<usize>,
    /// Indices of the features that make up the matrix, in column order.
    pub outputs: Vec<usize>,
}

/// Values of one requested feature, before the finiteness check.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureValues {
    pub id: FeatureId,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl FittedPipeline {
    pub fn output_names(&self) -> Vec<String> {
        self.outputs
            .iter()
            .flat_map(|&i| self.features[i].output_names.iter().cloned())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        serde_json::from_str(text).map_err(|e| EngineError::Bundle(e.to_string()))
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, EngineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EngineError::Workers(e.to_string()))
}

fn project(table: &Table, fd: &FeatureDefinition) -> Result<Data, EngineError> {
    for c in &fd.input {
        if table.column(c).is_none() {
            return Err(EngineError::UnknownInput {
                feature: fd.id(),
                column: c.clone(),
            });
        }
    }
    let frame = Frame::project(table, &fd.input).expect("inputs checked");
    Ok(Data::from_inputs(frame))
}

fn nested_values(dependencies: &[(String, usize)], slots: &[Option<Vec<Series>>]) -> BTreeMap<String, Vec<Series>> {
    dependencies
        .iter()
        .map(|(path, d)| (path.clone(), slots[*d].clone().expect("dependencies run first")))
        .collect()
}

fn numeric_output(out: Data, feature: &FeatureId, last_step: usize) -> Result<Vec<Series>, EngineError> {
    out.into_numeric().map_err(|error| EngineError::Step {
        feature: feature.clone(),
        step: last_step,
        error,
    })
}

/// Nested features are seen by their dependents under their output names.
fn name_outputs(values: &mut [Series], names: &[String]) {
    for (s, n) in values.iter_mut().zip(names) {
        s.name.clone_from(n);
    }
}

/// Run `run` over the nodes of each level concurrently, levels in order.
fn by_level<T: Send>(
    order: &[usize],
    levels: impl Fn(usize) -> usize,
    workers: usize,
    slots: &mut [Option<Vec<Series>>],
    results: &mut [Option<T>],
    run: impl Fn(usize, &[Option<Vec<Series>>]) -> Result<(T, Vec<Series>), EngineError> + Sync,
) -> Result<(), EngineError> {
    let pool = pool(workers)?;
    let mut start = 0;
    while start < order.len() {
        let level = levels(order[start]);
        let end = order[start..]
            .iter()
            .position(|&i| levels(i) != level)
            .map_or(order.len(), |p| start + p);
        let batch = &order[start..end];
        let done: Vec<Result<(T, Vec<Series>), EngineError>> = {
            let slots_ref: &[Option<Vec<Series>>] = slots;
            pool.install(|| batch.par_iter().map(|&i| run(i, slots_ref)).collect())
        };
        for (&i, r) in batch.iter().zip(done) {
            let (t, values) = r?;
            results[i] = Some(t);
            slots[i] = Some(values);
        }
        start = end;
    }
    Ok(())
}

/// Fit every feature on `dev` only.
pub fn fit_pipeline(p: &Pipeline, dev: &Table, workers: usize) -> Result<FittedPipeline, EngineError> {
    let target = dev.schema().target.as_ref().and_then(|name| {
        let spec = dev.column_spec(name)?;
        Some(Series::from_column(name, spec.kind, dev.column(name)?))
    });
    let n = p.nodes.len();
    let mut slots = vec![None; n];
    let mut fitted: Vec<Option<FittedFeature>> = vec![None; n];
    by_level(
        &p.topo_order,
        |i| p.nodes[i].level,
        workers,
        &mut slots,
        &mut fitted,
        |i, slots| {
            let node = &p.nodes[i];
            let id = node.id();
            let nested = nested_values(&node.dependencies, slots);
            let ctx = StepContext {
                name: &node.definition.name,
                nested: Some(&nested),
            };
            let mut current = project(dev, &node.definition)?;
            let mut steps = Vec::with_capacity(node.steps.len());
            for (k, step) in node.steps.iter().enumerate() {
                let (f, out) =
                    FittedStep::fit(step, &current, target.as_ref(), &ctx).map_err(|error| EngineError::Step {
                        feature: id.clone(),
                        step: k,
                        error,
                    })?;
                steps.push(f);
                current = out;
            }
            let mut values = numeric_output(current, &id, node.steps.len() - 1)?;
            let output_names = infer_output_names(&node.definition, values.len())?;
            name_outputs(&mut values, &output_names);
            Ok((
                FittedFeature {
                    definition: node.definition.clone(),
                    dependencies: node.dependencies.clone(),
                    level: node.level,
                    steps,
                    output_names,
                },
                values,
            ))
        },
    )?;
    let features: Vec<FittedFeature> = fitted.into_iter().map(|f| f.expect("every node fitted")).collect();
    let fp = FittedPipeline {
        fingerprint: schema_fingerprint(dev.schema()),
        features,
        topo_order: p.topo_order.clone(),
        outputs: p.outputs.clone(),
    };
    let names = fp.output_names();
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(EngineError::DuplicateOutput(name.clone()));
        }
    }
    Ok(fp)
}

/// Values of every requested feature on `data`, without the matrix-boundary
/// check for missing or infinite cells.
pub fn transform_values(fp: &FittedPipeline, data: &Table, workers: usize) -> Result<Vec<FeatureValues>, EngineError> {
    if schema_fingerprint(data.schema()) != fp.fingerprint {
        return Err(EngineError::SchemaMismatch);
    }
    let n = fp.features.len();
    let mut slots = vec![None; n];
    let mut done: Vec<Option<()>> = vec![None; n];
    by_level(
        &fp.topo_order,
        |i| fp.features[i].level,
        workers,
        &mut slots,
        &mut done,
        |i, slots| {
            let feature = &fp.features[i];
            let id = feature.id();
            let nested = nested_values(&feature.dependencies, slots);
            let ctx = StepContext {
                name: &feature.definition.name,
                nested: Some(&nested),
            };
            let mut current = project(data, &feature.definition)?;
            for (k, step) in feature.steps.iter().enumerate() {
                current = step.transform(&current, &ctx).map_err(|error| EngineError::Step {
                    feature: id.clone(),
                    step: k,
                    error,
                })?;
            }
            let mut values = numeric_output(current, &id, feature.steps.len() - 1)?;
            if values.len() != feature.output_names.len() {
                return Err(EngineError::OutputDimension {
                    feature: id,
                    expected: feature.output_names.len(),
                    found: values.len(),
                });
            }
            name_outputs(&mut values, &feature.output_names);
            Ok(((), values))
        },
    )?;
    Ok(fp
        .outputs
        .iter()
        .map(|&i| {
            let f = &fp.features[i];
            let columns = slots[i]
                .clone()
                .expect("every feature ran")
                .into_iter()
                .map(|s| match s.values {
                    Values::Numeric(v) => v,
                    Values::Coded { .. } => unreachable!("outputs are numeric"),
                })
                .collect();
            FeatureValues {
                id: f.id(),
                names: f.output_names.clone(),
                columns,
            }
        })
        .collect())
}

/// Apply a fitted pipeline to new data. Every cell of the result is finite.
pub fn transform(fp: &FittedPipeline, data: &Table, workers: usize) -> Result<FeatureMatrix, EngineError> {
    let values = transform_values(fp, data, workers)?;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for f in values {
        names.extend(f.names);
        columns.extend(f.columns);
    }
    for (name, col) in names.iter().zip(&columns) {
        if let Some(row) = col.iter().position(|x| !x.is_finite()) {
            return Err(EngineError::InvalidValue {
                column: name.clone(),
                row,
                problem: if col[row].is_nan() { "missing" } else { "infinite" },
            });
        }
    }
    Ok(FeatureMatrix {
        names,
        rows: data.row_count(),
        columns,
    })
}

/// A named, column-major grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// CSV with a header of output names and values in shortest round-trip
    /// decimal form. A matrix without columns is an empty header line
    /// followed by one empty line per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if self.columns.is_empty() {
            for _ in 0..=self.rows {
                out.write_all(b"\n")?;
            }
            return out.flush();
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.names)?;
        let mut record = Vec::with_capacity(self.columns.len());
        for r in 0..self.rows {
            record.clear();
            record.extend(self.columns.iter().map(|c| c[r].to_string()));
            w.write_record(&record)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::parse_feature;
    use crate::table::{ColumnData, ColumnKind, ColumnSpec};
    use std::sync::Arc;

    fn table(cols: &[(&str, Vec<f64>)]) -> Table {
        let schema = Schema::new(
            cols.iter()
                .map(|(n, _)| ColumnSpec::new(*n, ColumnKind::Continuous, true))
                .collect(),
            None,
        )
        .unwrap();
        Table::from_columns(
            schema,
            cols.iter().map(|(_, v)| ColumnData::Continuous(v.clone())).collect(),
        )
        .unwrap()
    }

    fn feature(name: &str, input: &[&str], transformer: &str) -> FeatureDefinition {
        let inputs: Vec<String> = input.iter().map(|s| format!("\"{s}\"")).collect();
        parse_feature(&format!(
            r#"{{"name":"{name}","author":"t","input":[{}],"transformer":{transformer}}}"#,
            inputs.join(",")
        ))
        .unwrap()
    }

    #[test]
    fn identity_feature_and_empty_pipeline() {
        let t = table(&[("a", vec![1.0, 2.0, 3.0])]);
        let p = build_pipeline(
            &[feature("a_ident", &["a"], r#"[{"primitive":"identity"}]"#)],
            &Registry::new(),
            None,
        )
        .unwrap();
        let fp = fit_pipeline(&p, &t, 1).unwrap();
        let m = transform(&fp, &t, 1).unwrap();
        assert_eq!(m.names(), ["a_ident"]);
        assert_eq!(m.column("a_ident").unwrap(), [1.0, 2.0, 3.0]);

        let p = build_pipeline(&[], &Registry::new(), None).unwrap();
        let fp = fit_pipeline(&p, &t, 1).unwrap();
        let m = transform(&fp, &t, 2).unwrap();
        assert_eq!((m.rows(), m.width()), (3, 0));
        assert_eq!(m.to_csv_string(), "\n\n\n\n");
    }

    #[test]
    fn concatenates_in_declared_order() {
        let t = table(&[("a", vec![1.0, 2.0]), ("b", vec![0.0, 5.0])]);
        let p = build_pipeline(
            &[
                feature("two", &["a", "b"], r#"[{"primitive":"identity"}]"#),
                feature("one", &["a"], r#"["x * 2"]"#),
            ],
            &Registry::new(),
            None,
        )
        .unwrap();
        let m = transform(&fit_pipeline(&p, &t, 1).unwrap(), &t, 1).unwrap();
        assert_eq!(m.names(), ["two_0", "two_1", "one"]);
        assert_eq!(m.to_csv_string(), "two_0,two_1,one\n1,0,2\n2,5,4\n");
    }

    #[test]
    fn nested_feature_runs_first() {
        let mut reg = Registry::new();
        reg.insert("b.json".into(), feature("b", &["a"], r#"["x + 100"]"#));
        let a = feature(
            "a",
            &["a"],
            r#"[{"primitive":"feature_ref","params":{"path":"b.json"}}, "a * b"]"#,
        );
        let p = build_pipeline(&[a], &reg, None).unwrap();
        assert_eq!(p.nodes.len(), 2);
        assert_eq!(p.nodes[p.topo_order[0]].definition.name, "b");
        assert_eq!(p.edges(), vec![(FeatureId("t/a".into()), FeatureId("t/b".into()))]);
        let t = table(&[("a", vec![1.0, 2.0])]);
        let m = transform(&fit_pipeline(&p, &t, 4).unwrap(), &t, 4).unwrap();
        assert_eq!(m.names(), ["a"]);
        assert_eq!(m.columns()[0], [101.0, 204.0]);
    }

    #[test]
    fn errors_are_attributed() {
        let t = table(&[("a", vec![1.0, 2.0])]);
        let p = build_pipeline(&[feature("f", &["zz"], r#"["x"]"#)], &Registry::new(), None).unwrap();
        assert!(matches!(fit_pipeline(&p, &t, 1), Err(EngineError::UnknownInput { column, .. }) if column == "zz"));
        assert!(matches!(
            build_pipeline(&[feature("f", &["zz"], r#"["x"]"#)], &Registry::new(), Some(t.schema())),
            Err(EngineError::UnknownInput { .. })
        ));
        let dup = feature("f", &["a"], r#"["x"]"#);
        assert!(matches!(
            build_pipeline(&[dup.clone(), dup], &Registry::new(), None),
            Err(EngineError::DuplicateFeature(_))
        ));
        let p = build_pipeline(
            &[feature(
                "f",
                &["a"],
                r#"["x", {"primitive":"one_hot"}, {"primitive":"scale"}]"#,
            )],
            &Registry::new(),
            None,
        )
        .unwrap();
        let t2 = table(&[("a", vec![1.0, 1.0])]);
        let fp = fit_pipeline(&p, &t2, 1).unwrap();
        assert_eq!(fp.features[0].output_names, ["f"]);
    }

    #[test]
    fn boundary_rejects_missing_values() {
        let t = table(&[("a", vec![1.0, f64::NAN])]);
        let p = build_pipeline(&[feature("f", &["a"], r#"["x"]"#)], &Registry::new(), None).unwrap();
        let fp = fit_pipeline(&p, &t, 1).unwrap();
        assert!(matches!(
            transform(&fp, &t, 1),
            Err(EngineError::InvalidValue {
                row: 1,
                problem: "missing",
                ..
            })
        ));
        assert!(transform_values(&fp, &t, 1).is_ok());
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let t = table(&[("a", vec![1.0])]);
        let p = build_pipeline(&[feature("f", &["a"], r#"["x"]"#)], &Registry::new(), None).unwrap();
        let fp = fit_pipeline(&p, &t, 1).unwrap();
        let other = table(&[("a", vec![1.0]), ("b", vec![2.0])]);
        assert_eq!(transform(&fp, &other, 1).unwrap_err(), EngineError::SchemaMismatch);
    }

    #[test]
    fn target_is_excluded_from_fingerprint() {
        let schema = Schema::new(
            vec![
                ColumnSpec::new("a", ColumnKind::Continuous, false),
                ColumnSpec::new("y", ColumnKind::Categorical, false),
            ],
            Some("y"),
        )
        .unwrap();
        let with_target = Table::from_columns(
            schema.clone(),
            vec![
                ColumnData::Continuous(vec![1.0]),
                ColumnData::Coded {
                    codes: vec![Some(0)],
                    levels: Arc::new(vec!["1".into()]),
                },
            ],
        )
        .unwrap();
        let new_rows = with_target.conform_to(&schema.without_target()).unwrap();
        assert_eq!(
            schema_fingerprint(with_target.schema()),
            schema_fingerprint(new_rows.schema())
        );
    }

    #[test]
    fn bundle_round_trip_is_byte_identical() {
        let t = table(&[("a", vec![1.0, 2.0, f64::NAN, 7.5])]);
        let p = build_pipeline(
            &[feature(
                "f",
                &["a"],
                r#"[{"primitive":"conditional","params":{"check":{"skew_gt":0.1},"then":"log1p(x)"}},
                    {"primitive":"impute","params":{"strategy":"mean"}}]"#,
            )],
            &Registry::new(),
            None,
        )
        .unwrap();
        let fp = fit_pipeline(&p, &t, 1).unwrap();
        let text = fp.to_json();
        let back = FittedPipeline::from_json(&text).unwrap();
        assert_eq!(back, fp);
        assert_eq!(back.to_json(), text);
        assert_eq!(transform(&back, &t, 1).unwrap(), transform(&fp, &t, 1).unwrap());
    }
}
