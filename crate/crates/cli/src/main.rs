//! `featuregate`: create projects, validate and submit feature definitions,
//! replay submission streams and apply the accepted pipeline to new data.
//!
//! Exit codes: 0 success or accepted, 1 rejected (or a failed quickstart),
//! 2 operational error, 64 usage error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featuregate::project::{
    read_stream, scaffold, Evaluation, Project, ProjectError, ScaffoldOptions, Stages, CONFIG_FILE,
};
use featuregate::selection::{log_to_jsonl, Decision, Rule};

const USAGE: u8 = 64;
const REJECTED: u8 = 1;
const FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "featuregate", version, about = "Collaborative feature engineering projects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a new project from a training CSV and its schema.
    Quickstart {
        #[arg(long)]
        name: String,
        #[arg(long)]
        target: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        dest: PathBuf,
    },
    /// Check a feature definition without changing the project.
    Validate {
        #[arg(long)]
        feature: PathBuf,
        /// Structure and API checks only.
        #[arg(long, conflicts_with = "ml_only")]
        api_only: bool,
        /// Selection only.
        #[arg(long)]
        ml_only: bool,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Validate a feature definition and add it to the project if accepted.
    Submit {
        #[arg(long)]
        feature: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the accepted features on the development split and transform a CSV.
    Engineer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a directory of feature documents through validation and selection.
    Simulate {
        /// Documents are submitted in lexicographic file-name order.
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Write accepted and pruned features and the log to the project.
        #[arg(long)]
        commit: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Project directory; defaults to the nearest enclosing project.
    #[arg(long)]
    project: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    workers: u32,
}

impl Common {
    fn load(&self) -> Result<Project, String> {
        let root = match &self.project {
            Some(p) => p.clone(),
            None => find_root().ok_or_else(|| format!("no {CONFIG_FILE} in this directory or any parent"))?,
        };
        Project::load(&root).map_err(|e| e.to_string())
    }

    fn workers(&self) -> usize {
        self.workers as usize
    }
}

fn find_root() -> Option<PathBuf> {
    let cwd = std::env::current_dir().ok()?;
    cwd.ancestors()
        .find(|d| d.join(CONFIG_FILE).is_file())
        .map(Path::to_path_buf)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            FAILURE
        }
    };
    ExitCode::from(code)
}

fn run(command: Command) -> Result<u8, String> {
    match command {
        Command::Quickstart {
            name,
            target,
            train,
            schema,
            dest,
        } => {
            let opts = ScaffoldOptions {
                name: &name,
                target: &target,
                train: &train,
                schema: &schema,
                destination: &dest,
            };
            match scaffold(&opts) {
                Ok(_) => {
                    for rel in featuregate::project::SCAFFOLD_PATHS {
                        println!("created {}", dest.join(rel).display());
                    }
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(REJECTED)
                }
            }
        }
        Command::Validate {
            feature,
            api_only,
            ml_only,
            json,
            common,
        } => {
            let document = read_feature(&feature)?;
            let project = common.load()?;
            let stages = match (api_only, ml_only) {
                (true, _) => Stages::ApiOnly,
                (_, true) => Stages::MlOnly,
                _ => Stages::All,
            };
            let ev = project
                .evaluate(&document, stages, common.workers())
                .map_err(|e| e.to_string())?;
            print!("{}", if json { ev.to_json() } else { report(&ev) });
            Ok(if ev.accepted { 0 } else { REJECTED })
        }
        Command::Submit { feature, json, common } => {
            let document = read_feature(&feature)?;
            let mut project = common.load()?;
            let ev = project.submit(&document, common.workers()).map_err(|e| e.to_string())?;
            if json {
                print!("{}", ev.to_json());
            } else {
                print!("{}", report(&ev));
                if ev.accepted {
                    if let Some(path) = ev.structure.as_ref().and_then(|s| s.path.as_ref()) {
                        println!("stored {path}");
                    }
                }
            }
            Ok(if ev.accepted { 0 } else { REJECTED })
        }
        Command::Engineer { input, output, common } => {
            let project = common.load()?;
            let table = project.read_input(&input).map_err(|e| e.to_string())?;
            let matrix = project.engineer(&table, common.workers()).map_err(|e| e.to_string())?;
            fs::write(&output, matrix.to_csv_string()).map_err(|e| format!("{}: {e}", output.display()))?;
            println!(
                "wrote {} rows x {} columns to {}",
                matrix.rows(),
                matrix.width(),
                output.display()
            );
            Ok(0)
        }
        Command::Simulate {
            stream,
            log,
            commit,
            common,
        } => {
            let mut project = common.load()?;
            let docs = read_stream(&stream).map_err(|e| e.to_string())?;
            let sim = project
                .simulate(&docs, common.workers(), commit)
                .map_err(|e: ProjectError| e.to_string())?;
            fs::write(&log, log_to_jsonl(&sim.events)).map_err(|e| format!("{}: {e}", log.display()))?;
            println!(
                "submitted {} accepted {} rejected {} pruned {}",
                sim.submitted, sim.accepted, sim.rejected, sim.pruned
            );
            let selected: Vec<&str> = sim.selected.iter().map(|f| f.0.as_str()).collect();
            println!(
                "selected: {}",
                if selected.is_empty() {
                    "(none)".into()
                } else {
                    selected.join(", ")
                }
            );
            if !commit {
                println!("dry run: project unchanged");
            }
            Ok(0)
        }
    }
}

fn read_feature(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn rule(d: &Decision) -> String {
    match &d.rule {
        Rule::Strong => "strong".into(),
        Rule::Weak { displaced } => format!("weak, displacing {}", displaced.0),
        Rule::BelowThreshold => "below threshold".into(),
    }
}

/// Human-readable form of an evaluation.
fn report(ev: &Evaluation) -> String {
    let mut out = String::new();
    if let Some(id) = &ev.feature {
        writeln!(out, "feature {}", id.0).unwrap();
    }
    if let Some(s) = &ev.structure {
        writeln!(out, "structure: {}", if s.accepted { "ok" } else { "rejected" }).unwrap();
        for r in &s.reasons {
            writeln!(out, "  - {r}").unwrap();
        }
    }
    if let Some(api) = &ev.api {
        let passed = api.checks.iter().filter(|c| c.passed()).count();
        writeln!(out, "api checks: {passed}/{} passed", api.checks.len()).unwrap();
        for c in &api.checks {
            if c.passed() {
                writeln!(out, "  PASS {}", c.name).unwrap();
            } else {
                writeln!(out, "  FAIL {}", c.name).unwrap();
                if let Some(e) = c.detail.get("error").and_then(|v| v.as_str()) {
                    writeln!(out, "       error: {e}").unwrap();
                }
                writeln!(out, "       advice: {}", c.advice).unwrap();
            }
        }
    }
    if let Some(e) = &ev.error {
        writeln!(out, "error: {e}").unwrap();
    }
    if let Some(s) = &ev.selection {
        if let Some(d) = &s.decision {
            writeln!(
                out,
                "selection: {} ({}) cmi={:.4} threshold={:.4}",
                if d.accepted() { "accepted" } else { "rejected" },
                rule(d),
                d.cmi,
                d.threshold
            )
            .unwrap();
        }
        if let Some(e) = &s.error {
            writeln!(out, "selection: rejected ({}) {}", e.stage, e.message).unwrap();
        }
        for r in &s.pruned {
            writeln!(
                out,
                "  pruned {} cmi={:.4} threshold={:.4}",
                r.feature.0, r.cmi, r.threshold
            )
            .unwrap();
        }
    }
    writeln!(out, "result: {}", if ev.accepted { "accepted" } else { "rejected" }).unwrap();
    out
}
