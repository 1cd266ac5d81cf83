//! On-disk projects: configuration, data, accepted feature documents, the
//! decision log and a cached fitted pipeline.
//!
//! ```text
//! featuregate.json                          configuration
//! README.md                                 contributor instructions
//! data/train.csv, data/schema.json          raw data and its schema
//! features/contrib/user_<login>/feature_<name>.json
//! features/attic/user_<login>/feature_<name>.json   pruned features
//! logs/decisions.jsonl                      selection log, one event per line
//! cache/pipeline.json                       fitted pipeline and its cache key
//! ```
//!
//! Only [`Project::submit`] and a committed [`Project::simulate`] change
//! accepted features or the log; both hold `.featuregate.lock` while they
//! run. The order of accepted features is the order of the decision log,
//! since pruning depends on it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{build_pipeline, fit_pipeline, transform, EngineError, FeatureMatrix, FittedPipeline};
use crate::feature::{parse_document, parse_feature, serialize_feature, FeatureDefinition, FeatureId, Registry};
use crate::infotheory::Variable;
use crate::selection::{
    feature_values, log_to_jsonl, parse_log, process_submission, target_variable, Candidate, EventKind, EventSummary,
    LogEvent, SelectionError, SelectionParams, SelectionState,
};
use crate::table::{load_table, split, Schema, SplitPair, Table, TableError};
use crate::validation::{
    validate_document, validate_patch, Change, ChangeKind, Layout, Patch, StructureReport, ValidationConfig,
    ValidationReport,
};

pub const CONFIG_FILE: &str = "featuregate.json";
pub const LOCK_FILE: &str = ".featuregate.lock";
pub const CONTRIB_DIR: &str = "features/contrib";
pub const ATTIC_DIR: &str = "features/attic";
pub const LOG_FILE: &str = "logs/decisions.jsonl";
pub const CACHE_FILE: &str = "cache/pipeline.json";
pub const TRAIN_FILE: &str = "data/train.csv";
pub const SCHEMA_FILE: &str = "data/schema.json";
/// Environment variable that replaces every seed in the configuration.
pub const SEED_ENV: &str = "FEATUREGATE_SEED";

const README_STUB: &str = "# {name}

Your task is to develop and submit feature definitions that help predict `{target}`.

A feature definition is a JSON document naming its input columns and a list of
transformer steps. Save yours as

    features/contrib/user_<login>/feature_<name>.json

with `author` set to your login, then check it with

    featuregate validate --feature <file>

and submit it with `featuregate submit --feature <file>`. Every submission runs
through a battery of API checks and is accepted only if it adds information
about the target beyond the features already accepted.
";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("destination {0} exists and is not empty")]
    NotEmpty(PathBuf),
    #[error("target `{0}` is not a column of the schema")]
    UnknownTarget(String),
    #[error("project is locked by another command ({0} exists)")]
    Locked(PathBuf),
    #[error("{SEED_ENV} must be an unsigned integer, got `{0}`")]
    Seed(String),
    #[error("stored feature {path} no longer evaluates: {message}")]
    Stored { path: String, message: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, message: impl ToString) -> ProjectError {
    ProjectError::Invalid {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Relative to the project root.
    pub train: String,
    pub schema: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of rows in the development split.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fraction: 0.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    pub data: DataPaths,
    pub target: String,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub selection: SelectionParams,
}

impl ProjectConfig {
    pub fn new(name: &str, target: &str) -> Self {
        Self {
            name: name.to_string(),
            data: DataPaths {
                train: TRAIN_FILE.into(),
                schema: SCHEMA_FILE.into(),
            },
            target: target.to_string(),
            split: SplitConfig::default(),
            validation: ValidationConfig::default(),
            selection: SelectionParams::default(),
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("`name` is empty".into());
        }
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return Err(format!(
                "split fraction must lie strictly between 0 and 1, got {}",
                self.split.fraction
            ));
        }
        self.selection.validate().map_err(|e| e.to_string())
    }

    /// Replace the split, validation and selection seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.validation.seed = seed;
        self.selection.seed = seed;
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// The seed given by [`SEED_ENV`], if set.
pub fn seed_from_env() -> Result<Option<u64>, ProjectError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| ProjectError::Seed(v)),
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredFeature {
    /// Repository-relative path with `/` separators.
    pub path: String,
    pub definition: FeatureDefinition,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectState {
    /// Accepted features in path order.
    pub features: Vec<StoredFeature>,
    /// Pruned features, keyed by their former contrib path.
    pub attic: Vec<StoredFeature>,
    pub log: Vec<LogEvent>,
}

#[derive(Debug, Clone)]
pub struct ScaffoldOptions<'a> {
    pub name: &'a str,
    pub target: &'a str,
    pub train: &'a Path,
    pub schema: &'a Path,
    pub destination: &'a Path,
}

/// Which stages an evaluation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stages {
    /// Structure check, API battery, full-data check and selection.
    All,
    /// Everything except selection.
    ApiOnly,
    /// Selection only.
    MlOnly,
}

/// The verdict on one submitted document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureId>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api: Option<ValidationReport>,
    /// Why the feature could not be evaluated on the full data, if it could not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<EventSummary>,
}

impl Evaluation {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("evaluations serialize");
        s.push('\n');
        s
    }
}

/// Result of running a stream of documents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub submitted: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub pruned: usize,
    /// Accepted features at the end of the stream, in acceptance order.
    pub selected: Vec<FeatureId>,
    #[serde(skip)]
    pub events: Vec<LogEvent>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: String,
    pipeline: FittedPipeline,
}

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Data shared by the stages of one command.
struct Context {
    split: SplitPair,
    registry: Registry,
    y: Variable,
    workers: usize,
}

#[derive(Debug, Clone)]
pub struct Project {
    root: PathBuf,
    config: ProjectConfig,
    schema: Schema,
    state: ProjectState,
    layout: Layout,
}

/// Create a new project from a training CSV and its schema.
pub fn scaffold(opts: &ScaffoldOptions) -> Result<Project, ProjectError> {
    let dest = opts.destination;
    match fs::read_dir(dest) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(ProjectError::NotEmpty(dest.to_path_buf()));
            }
        }
        Err(e) if e.kind() == ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(dest)(e)),
    }
    let schema_text = fs::read_to_string(opts.schema).map_err(io_err(opts.schema))?;
    let mut schema = Schema::from_json(&schema_text).map_err(|e| invalid(opts.schema, e))?;
    if schema.column(opts.target).is_none() {
        return Err(ProjectError::UnknownTarget(opts.target.to_string()));
    }
    if schema.target.as_deref() != Some(opts.target) {
        schema.target = Some(opts.target.to_string());
        schema.target_kind = None;
    }
    let train = fs::read(opts.train).map_err(io_err(opts.train))?;
    let config = ProjectConfig::new(opts.name, opts.target);
    config.check().map_err(|m| invalid(Path::new(CONFIG_FILE), m))?;
    let table = load_table(train.as_slice(), &schema).map_err(|e| invalid(opts.train, e))?;
    target_variable(&table).map_err(|e| invalid(opts.train, e))?;
    split(&table, config.split.fraction, config.split.seed).map_err(|e| invalid(opts.train, e))?;

    for dir in ["data", CONTRIB_DIR, ATTIC_DIR, "logs", "cache"] {
        let p = dest.join(dir);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let mut schema_json = schema.to_json();
    schema_json.push('\n');
    let config_json = config.to_json();
    let readme = README_STUB
        .replace("{name}", opts.name)
        .replace("{target}", opts.target);
    let files: [(&str, &[u8]); 5] = [
        (TRAIN_FILE, &train),
        (SCHEMA_FILE, schema_json.as_bytes()),
        (LOG_FILE, b""),
        ("README.md", readme.as_bytes()),
        (CONFIG_FILE, config_json.as_bytes()),
    ];
    for (rel, bytes) in files {
        let p = dest.join(rel);
        fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    Project::load_with_seed(dest, None)
}

/// Paths created by [`scaffold`], relative to the destination.
pub const SCAFFOLD_PATHS: [&str; 9] = [
    CONFIG_FILE,
    "README.md",
    TRAIN_FILE,
    SCHEMA_FILE,
    CONTRIB_DIR,
    ATTIC_DIR,
    LOG_FILE,
    "cache",
    "logs",
];

fn rel_string(base: &Path, path: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ProjectError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io_err(dir)(e)),
    };
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        if entry.file_type().map_err(io_err(&path))?.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Project {
    /// Load the project at `root`, honouring [`SEED_ENV`].
    pub fn load(root: &Path) -> Result<Self, ProjectError> {
        Self::load_with_seed(root, seed_from_env()?)
    }

    pub fn load_with_seed(root: &Path, seed: Option<u64>) -> Result<Self, ProjectError> {
        let config_path = root.join(CONFIG_FILE);
        let text = fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
        let mut config: ProjectConfig = serde_json::from_str(&text).map_err(|e| invalid(&config_path, e))?;
        config.check().map_err(|m| invalid(&config_path, m))?;
        if let Some(seed) = seed {
            config.override_seed(seed);
        }
        let schema_path = root.join(&config.data.schema);
        let text = fs::read_to_string(&schema_path).map_err(io_err(&schema_path))?;
        let mut schema = Schema::from_json(&text).map_err(|e| invalid(&schema_path, e))?;
        if schema.column(&config.target).is_none() {
            return Err(ProjectError::UnknownTarget(config.target.clone()));
        }
        if schema.target.as_deref() != Some(config.target.as_str()) {
            schema.target = Some(config.target.clone());
            schema.target_kind = None;
        }
        let train_path = root.join(&config.data.train);
        fs::metadata(&train_path).map_err(io_err(&train_path))?;
        let mut project = Self {
            root: root.to_path_buf(),
            config,
            schema,
            state: ProjectState::default(),
            layout: Layout::default(),
        };
        project.reload_state()?;
        Ok(project)
    }

    fn reload_state(&mut self) -> Result<(), ProjectError> {
        let features = self.stored_features(CONTRIB_DIR)?;
        let attic = self
            .stored_features(ATTIC_DIR)?
            .into_iter()
            .map(|mut f| {
                f.path = format!("{CONTRIB_DIR}{}", &f.path[ATTIC_DIR.len()..]);
                f
            })
            .collect();
        let log_path = self.root.join(LOG_FILE);
        let log = match fs::read_to_string(&log_path) {
            Ok(text) => parse_log(&text).map_err(|e| invalid(&log_path, e))?,
            Err(e) if e.kind() == ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&log_path)(e)),
        };
        self.state = ProjectState { features, attic, log };
        Ok(())
    }

    fn stored_features(&self, dir: &str) -> Result<Vec<StoredFeature>, ProjectError> {
        let mut files = Vec::new();
        files_under(&self.root.join(dir), &mut files)?;
        let attic_layout = Layout {
            contrib_dir: dir.to_string(),
        };
        let mut out = Vec::with_capacity(files.len());
        for file in files {
            let path = rel_string(&self.root, &file);
            let login = attic_layout.login_of(&path).ok_or_else(|| {
                invalid(
                    &file,
                    format!(
                        "path does not follow {}",
                        attic_layout.feature_path("<login>", "<name>")
                    ),
                )
            })?;
            let text = fs::read_to_string(&file).map_err(io_err(&file))?;
            let definition = parse_feature(&text).map_err(|e| invalid(&file, e))?;
            if definition.author != login {
                return Err(invalid(
                    &file,
                    format!("author `{}` does not match login `{login}`", definition.author),
                ));
            }
            out.push(StoredFeature { path, definition });
        }
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn state(&self) -> &ProjectState {
        &self.state
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Accepted features in the order they were accepted. Features the log
    /// does not mention follow in path order.
    pub fn accepted(&self) -> Vec<&StoredFeature> {
        let mut order: Vec<&FeatureId> = Vec::new();
        for e in &self.state.log {
            match e.event {
                EventKind::Accepted => {
                    order.retain(|id| *id != &e.feature);
                    order.push(&e.feature);
                }
                EventKind::Pruned => order.retain(|id| *id != &e.feature),
                EventKind::Rejected => {}
            }
        }
        let mut out: Vec<&StoredFeature> = order
            .iter()
            .filter_map(|id| self.state.features.iter().find(|f| &f.definition.id() == *id))
            .collect();
        for f in &self.state.features {
            if !out.iter().any(|o| o.path == f.path) {
                out.push(f);
            }
        }
        out
    }

    /// Every stored document by path; pruned features stay addressable by
    /// their former contrib path.
    pub fn registry(&self) -> Registry {
        let mut r = Registry::new();
        for f in self.state.attic.iter().chain(&self.state.features) {
            r.insert(f.path.clone(), f.definition.clone());
        }
        r
    }

    pub fn train_table(&self) -> Result<Table, ProjectError> {
        let path = self.root.join(&self.config.data.train);
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        load_table(std::io::BufReader::new(file), &self.schema).map_err(|e| invalid(&path, e))
    }

    pub fn split(&self) -> Result<SplitPair, ProjectError> {
        Ok(split(
            &self.train_table()?,
            self.config.split.fraction,
            self.config.split.seed,
        )?)
    }

    /// Load a CSV of new rows; the target column may be absent.
    pub fn read_input(&self, path: &Path) -> Result<Table, ProjectError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        match load_table(bytes.as_slice(), &self.schema) {
            Err(TableError::MissingHeader(c)) if Some(&c) == self.schema.target.as_ref() => {
                load_table(bytes.as_slice(), &self.schema.without_target()).map_err(|e| invalid(path, e))
            }
            other => other.map_err(|e| invalid(path, e)),
        }
    }

    fn context(&self, workers: usize) -> Result<Context, ProjectError> {
        let split = self.split()?;
        let y = target_variable(&split.development)?;
        Ok(Context {
            split,
            registry: self.registry(),
            y,
            workers,
        })
    }

    fn selection_state(&self, ctx: &Context) -> Result<SelectionState, ProjectError> {
        let mut state = SelectionState::new();
        for f in self.accepted() {
            let values = feature_values(&f.definition, &ctx.registry, &ctx.split.development, ctx.workers).map_err(
                |message| ProjectError::Stored {
                    path: f.path.clone(),
                    message,
                },
            )?;
            state.accepted.push(Candidate::new(f.definition.clone(), values));
        }
        state.log = self.state.log.clone();
        Ok(state)
    }

    fn lock(&self) -> Result<LockGuard, ProjectError> {
        let path = self.root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(ProjectError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn structure(&self, document: &str, paths: &BTreeMap<FeatureId, String>) -> StructureReport {
        let fd = match parse_document(document) {
            Ok(fd) => fd,
            Err(e) => {
                return StructureReport {
                    accepted: false,
                    reasons: vec![format!("the document is not a feature definition: {e}")],
                    path: None,
                    feature: None,
                }
            }
        };
        let path = paths
            .get(&fd.id())
            .cloned()
            .unwrap_or_else(|| self.layout.feature_path(&fd.author, &fd.name));
        let exists = paths.values().any(|p| *p == path) || self.root.join(&path).exists();
        let patch = Patch {
            changes: vec![Change {
                path,
                kind: if exists { ChangeKind::Modify } else { ChangeKind::Add },
                content: Some(document.to_string()),
            }],
        };
        validate_patch(&self.layout, &patch).expect("patch has content")
    }

    /// Run `document` through the requested stages, recording the outcome
    /// in `state`. `label` names the submission in the log when the
    /// document does not parse.
    fn evaluate_in(
        &self,
        ctx: &Context,
        state: &mut SelectionState,
        paths: &BTreeMap<FeatureId, String>,
        document: &str,
        label: &str,
        stages: Stages,
    ) -> Result<Evaluation, ProjectError> {
        let params = &self.config.selection;
        let rows = ctx.y.values.len();
        let parsed = parse_document(document).ok();
        let id = parsed
            .as_ref()
            .map(FeatureDefinition::id)
            .unwrap_or_else(|| FeatureId(format!("unparsed/{label}")));
        let mut ev = Evaluation {
            feature: parsed.as_ref().map(FeatureDefinition::id),
            accepted: false,
            structure: None,
            api: None,
            error: None,
            selection: None,
        };
        if stages != Stages::MlOnly {
            let structure = self.structure(document, paths);
            let cfg = ValidationConfig {
                workers: ctx.workers,
                ..self.config.validation.clone()
            };
            let api = validate_document(
                document,
                &ctx.registry,
                &ctx.split.development,
                &ctx.split.holdout,
                &cfg,
            );
            let (structure_ok, api_ok) = (structure.accepted, api.accepted());
            if !structure_ok {
                state.record_error(id.clone(), "structure", structure.reasons.join("; "), params, rows);
            } else if !api_ok {
                let failed: Vec<&str> = api.failed().iter().map(|c| c.name.as_str()).collect();
                state.record_error(id.clone(), "api", format!("failed {}", failed.join(", ")), params, rows);
            }
            ev.structure = Some(structure);
            ev.api = Some(api);
            if !(structure_ok && api_ok) {
                return Ok(ev);
            }
            let fd = parsed.as_ref().expect("api checks passed");
            if let Err(e) = self.full_data_check(fd, ctx) {
                state.record_error(id, "pipeline", e.clone(), params, rows);
                ev.error = Some(e);
                return Ok(ev);
            }
            if stages == Stages::ApiOnly {
                ev.accepted = true;
                return Ok(ev);
            }
        }
        let fd = match parse_feature(document) {
            Ok(fd) => fd,
            Err(e) => {
                let message = format!("the document is not a feature definition: {e}");
                state.record_error(id, "api", message.clone(), params, rows);
                ev.error = Some(message);
                return Ok(ev);
            }
        };
        let values = feature_values(&fd, &ctx.registry, &ctx.split.development, ctx.workers);
        let summary = process_submission(state, &fd, values, &ctx.y, params)?;
        ev.accepted = summary.accepted();
        ev.selection = Some(summary);
        Ok(ev)
    }

    /// Fit on the whole development split and transform the whole holdout,
    /// so that acceptance never breaks the pipeline.
    fn full_data_check(&self, fd: &FeatureDefinition, ctx: &Context) -> Result<(), String> {
        let workers = ctx.workers;
        let run = || -> Result<(), EngineError> {
            let p = build_pipeline(std::slice::from_ref(fd), &ctx.registry, Some(&self.schema))?;
            let fp = fit_pipeline(&p, &ctx.split.development, workers)?;
            transform(&fp, &ctx.split.development, workers)?;
            transform(&fp, &ctx.split.holdout, workers)?;
            Ok(())
        };
        run().map_err(|e| format!("the feature fails on the full data: {e}"))
    }

    fn paths(&self) -> BTreeMap<FeatureId, String> {
        self.state
            .features
            .iter()
            .map(|f| (f.definition.id(), f.path.clone()))
            .collect()
    }

    /// Evaluate a document without changing the project.
    pub fn evaluate(&self, document: &str, stages: Stages, workers: usize) -> Result<Evaluation, ProjectError> {
        let ctx = self.context(workers)?;
        let mut state = if stages == Stages::ApiOnly {
            SelectionState::new()
        } else {
            self.selection_state(&ctx)?
        };
        self.evaluate_in(&ctx, &mut state, &self.paths(), document, "document", stages)
    }

    /// Evaluate a document and, if it is accepted, store it, move pruned
    /// features to the attic and append the decision log. A rejected
    /// document leaves the project untouched.
    pub fn submit(&mut self, document: &str, workers: usize) -> Result<Evaluation, ProjectError> {
        let _lock = self.lock()?;
        let ctx = self.context(workers)?;
        let mut state = self.selection_state(&ctx)?;
        let before = state.log.len();
        let mut paths = self.paths();
        let ev = self.evaluate_in(&ctx, &mut state, &paths, document, "document", Stages::All)?;
        if ev.accepted {
            let summary = ev.selection.as_ref().expect("accepted by selection");
            let path = ev
                .structure
                .as_ref()
                .and_then(|s| s.path.clone())
                .expect("structure passed");
            self.apply(document, &path, summary, &mut paths)?;
            self.append_log(&state.log[before..])?;
            self.reload_state()?;
        }
        Ok(ev)
    }

    fn apply(
        &self,
        document: &str,
        path: &str,
        summary: &EventSummary,
        paths: &mut BTreeMap<FeatureId, String>,
    ) -> Result<(), ProjectError> {
        let target = self.root.join(path);
        if let Some(dir) = target.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&target, document).map_err(io_err(&target))?;
        paths.insert(summary.feature.clone(), path.to_string());
        for removal in &summary.pruned {
            let Some(from_rel) = paths.remove(&removal.feature) else {
                continue;
            };
            let to_rel = format!("{ATTIC_DIR}{}", &from_rel[CONTRIB_DIR.len()..]);
            let (from, to) = (self.root.join(&from_rel), self.root.join(&to_rel));
            if let Some(dir) = to.parent() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            fs::rename(&from, &to).map_err(io_err(&from))?;
        }
        Ok(())
    }

    fn append_log(&self, events: &[LogEvent]) -> Result<(), ProjectError> {
        let path = self.root.join(LOG_FILE);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.write_all(log_to_jsonl(events).as_bytes()).map_err(io_err(&path))
    }

    /// Run `stream` (label, document) in order, starting from the current
    /// accepted set. With `commit`, accepted and pruned features and the
    /// log are written to the project; otherwise nothing on disk changes.
    pub fn simulate(
        &mut self,
        stream: &[(String, String)],
        workers: usize,
        commit: bool,
    ) -> Result<Simulation, ProjectError> {
        let _lock = if commit { Some(self.lock()?) } else { None };
        let mut ctx = self.context(workers)?;
        let mut state = self.selection_state(&ctx)?;
        let before = state.log.len();
        let mut paths = self.paths();
        let mut sim = Simulation {
            submitted: stream.len(),
            accepted: 0,
            rejected: 0,
            pruned: 0,
            selected: Vec::new(),
            events: Vec::new(),
        };
        for (label, document) in stream {
            let ev = self.evaluate_in(&ctx, &mut state, &paths, document, label, Stages::All)?;
            if !ev.accepted {
                sim.rejected += 1;
                continue;
            }
            sim.accepted += 1;
            let summary = ev.selection.as_ref().expect("accepted by selection");
            sim.pruned += summary.pruned.len();
            let path = ev
                .structure
                .as_ref()
                .and_then(|s| s.path.clone())
                .expect("structure passed");
            ctx.registry
                .insert(path.clone(), parse_feature(document).expect("accepted documents parse"));
            if commit {
                self.apply(document, &path, summary, &mut paths)?;
            } else {
                paths.insert(summary.feature.clone(), path);
                for r in &summary.pruned {
                    paths.remove(&r.feature);
                }
            }
        }
        sim.events = state.log[before..].to_vec();
        sim.selected = state.ids();
        if commit {
            self.append_log(&sim.events)?;
            self.reload_state()?;
        }
        Ok(sim)
    }

    fn cache_key(&self, accepted: &[&StoredFeature]) -> Result<String, ProjectError> {
        let mut h = Sha256::new();
        for f in accepted {
            h.update(f.path.as_bytes());
            h.update([0]);
            h.update(serialize_feature(&f.definition).as_bytes());
        }
        h.update([1]);
        for f in &self.state.attic {
            h.update(f.path.as_bytes());
            h.update([0]);
            h.update(serialize_feature(&f.definition).as_bytes());
        }
        h.update([1]);
        for rel in [&self.config.data.train, &self.config.data.schema] {
            let path = self.root.join(rel);
            h.update(fs::read(&path).map_err(io_err(&path))?);
            h.update([0]);
        }
        h.update(self.config.split.fraction.to_le_bytes());
        h.update(self.config.split.seed.to_le_bytes());
        Ok(hex(&h.finalize()))
    }

    /// The accepted features fitted on the development split, reusing
    /// `cache/pipeline.json` while features and data are unchanged.
    pub fn fitted_pipeline(&self, workers: usize) -> Result<FittedPipeline, ProjectError> {
        let accepted = self.accepted();
        let key = self.cache_key(&accepted)?;
        let cache_path = self.root.join(CACHE_FILE);
        if let Ok(text) = fs::read_to_string(&cache_path) {
            if let Ok(cached) = serde_json::from_str::<CacheFile>(&text) {
                if cached.key == key {
                    return Ok(cached.pipeline);
                }
            }
        }
        let defs: Vec<FeatureDefinition> = accepted.iter().map(|f| f.definition.clone()).collect();
        let p = build_pipeline(&defs, &self.registry(), Some(&self.schema))?;
        let fp = fit_pipeline(&p, &self.split()?.development, workers)?;
        let cache = CacheFile { key, pipeline: fp };
        if let Some(dir) = cache_path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut text = serde_json::to_string(&cache).expect("cache serializes");
        text.push('\n');
        fs::write(&cache_path, text).map_err(io_err(&cache_path))?;
        Ok(cache.pipeline)
    }

    /// Apply the fitted pipeline to `input`.
    pub fn engineer(&self, input: &Table, workers: usize) -> Result<FeatureMatrix, ProjectError> {
        let fp = self.fitted_pipeline(workers)?;
        Ok(transform(&fp, input, workers)?)
    }
}

/// Feature documents in a directory, in lexicographic file-name order.
pub fn read_stream(dir: &Path) -> Result<Vec<(String, String)>, ProjectError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(dir))?.is_file() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') {
                names.push(name);
            }
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let path = dir.join(&name);
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            Ok((name, text))
        })
        .collect()
}
