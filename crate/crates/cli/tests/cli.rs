#[path = "../../core/tests/support/house.rs"]
mod house;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_featuregate"));
    c.env_remove("FEATUREGATE_SEED");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn quickstart(tmp: &TempDir, train: &Path, schema: &Path, target: &str) -> PathBuf {
    let dest = tmp.path().join("proj");
    let o = run(
        &[
            "quickstart",
            "--name",
            "demo",
            "--target",
            target,
            "--train",
            train.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--dest",
            dest.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dest
}

fn house_project(tmp: &TempDir, rows: usize) -> PathBuf {
    let (train, schema) = house::write(&tmp.path().join("src"), rows, 7);
    quickstart(tmp, &train, &schema, "SalePrice")
}

fn signal_project(tmp: &TempDir) -> PathBuf {
    let (train, schema) = house::write_signal(&tmp.path().join("src"), 1600, 3);
    quickstart(tmp, &train, &schema, "y")
}

fn write_doc(tmp: &TempDir, name: &str, text: &str) -> String {
    let p = tmp.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn quickstart_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let (train, schema) = house::write(&tmp.path().join("src"), 60, 1);
    let dest = quickstart(&tmp, &train, &schema, "SalePrice");
    assert!(dest.join("featuregate.json").exists());

    let o = run(
        &[
            "quickstart",
            "--name",
            "x",
            "--train",
            "a",
            "--schema",
            "b",
            "--dest",
            "c",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let args = [
        "quickstart",
        "--name",
        "again",
        "--target",
        "SalePrice",
        "--train",
        train.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--dest",
        dest.to_str().unwrap(),
    ];
    assert_eq!(code(&run(&args, tmp.path())), 1);
    let mut bad_target = args;
    bad_target[4] = "Price";
    bad_target[10] = "elsewhere";
    assert_eq!(code(&run(&bad_target, tmp.path())), 1);
}

#[test]
fn validate_golden_feature() {
    let tmp = TempDir::new().unwrap();
    let proj = house_project(&tmp, 400);
    let doc = write_doc(&tmp, "f.json", house::UNSKEW);
    let o = run(&["validate", "--feature", &doc], &proj);
    let out = stdout(&o);
    assert_eq!(code(&o), 0, "{out}");
    assert_eq!(out.matches("  PASS ").count(), 15, "{out}");
    assert!(out.contains("selection: accepted (strong)"), "{out}");
    assert!(out.contains("result: accepted"));
    // Validation never changes the project.
    assert!(!proj.join("features/contrib/user_alice").exists());
    assert_eq!(fs::read_to_string(proj.join("logs/decisions.jsonl")).unwrap(), "");
}

#[test]
fn validate_reports_advice_and_json_agrees() {
    let tmp = TempDir::new().unwrap();
    let proj = house_project(&tmp, 300);
    let doc = write_doc(&tmp, "raw.json", &house::identity("bob", "lot_raw", "LotArea"));
    let o = run(
        &["validate", "--feature", &doc, "--project", proj.to_str().unwrap()],
        tmp.path(),
    );
    let out = stdout(&o);
    assert_eq!(code(&o), 1, "{out}");
    assert!(out.contains("FAIL NoMissingValuesCheck"), "{out}");
    assert!(
        out.lines()
            .any(|l| l.trim_start().starts_with("advice:") && l.contains("`lot_raw")),
        "{out}"
    );

    let o = run(&["validate", "--feature", &doc, "--json"], &proj);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["accepted"], false);
    assert_eq!(v["feature"], "bob/lot_raw");
    let failed: Vec<&str> = v["api"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["outcome"] == "fail")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["NoMissingValuesCheck"]);
    for name in failed {
        assert!(out.contains(&format!("FAIL {name}")));
    }
}

#[test]
fn validate_operational_errors() {
    let tmp = TempDir::new().unwrap();
    let proj = house_project(&tmp, 100);
    let o = run(&["validate", "--feature", "missing.json"], &proj);
    assert_eq!(code(&o), 2);
    let doc = write_doc(&tmp, "f.json", house::UNSKEW);
    let o = run(&["validate", "--feature", &doc], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("featuregate.json"));
    let o = run(&["validate", "--feature", &doc, "--api-only", "--ml-only"], &proj);
    assert_eq!(code(&o), 64);
}

#[test]
fn validate_finds_the_project_from_a_subdirectory() {
    let tmp = TempDir::new().unwrap();
    let proj = house_project(&tmp, 200);
    let doc = write_doc(&tmp, "f.json", house::UNSKEW);
    let o = run(
        &["validate", "--feature", &doc, "--api-only"],
        &proj.join("features/contrib"),
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(!stdout(&o).contains("selection:"));
}

#[test]
fn ml_only_duplicate_prints_statistic_and_threshold() {
    let tmp = TempDir::new().unwrap();
    let proj = signal_project(&tmp);
    let first = write_doc(&tmp, "a.json", &house::identity("ann", "s", "s"));
    assert_eq!(code(&run(&["submit", "--feature", &first], &proj)), 0);
    let dup = write_doc(&tmp, "b.json", &house::identity("ben", "s_copy", "s"));
    let o = run(&["validate", "--feature", &dup, "--ml-only"], &proj);
    let out = stdout(&o);
    assert_eq!(code(&o), 1, "{out}");
    let line = out.lines().find(|l| l.starts_with("selection: rejected")).unwrap();
    assert!(line.contains("cmi=") && line.contains("threshold=0.0500"), "{line}");
    assert!(!out.contains("PASS"));
}

#[test]
fn submit_stores_prunes_and_leaves_rejections_alone() {
    let tmp = TempDir::new().unwrap();
    let proj = signal_project(&tmp);
    let noisy = write_doc(&tmp, "n.json", &house::identity("ann", "noisy", "noisy"));
    let o = run(&["submit", "--feature", &noisy], &proj);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("stored features/contrib/user_ann/feature_noisy.json"));
    assert!(proj.join("features/contrib/user_ann/feature_noisy.json").exists());

    let clean = write_doc(&tmp, "c.json", &house::identity("ben", "clean", "s"));
    let o = run(&["submit", "--feature", &clean], &proj);
    let out = stdout(&o);
    assert_eq!(code(&o), 0, "{out}");
    assert!(out.contains("pruned ann/noisy"), "{out}");
    assert!(proj.join("features/attic/user_ann/feature_noisy.json").exists());
    assert!(!proj.join("features/contrib/user_ann/feature_noisy.json").exists());
    let log = fs::read_to_string(proj.join("logs/decisions.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let before = fs::read(proj.join("logs/decisions.jsonl")).unwrap();
    let useless = write_doc(&tmp, "u.json", &house::identity("cat", "unrelated", "u"));
    let o = run(&["submit", "--feature", &useless], &proj);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(!proj.join("features/contrib/user_cat").exists());
    assert_eq!(fs::read(proj.join("logs/decisions.jsonl")).unwrap(), before);
}

#[test]
fn engineer_empty_and_identity_projects() {
    let tmp = TempDir::new().unwrap();
    let proj = signal_project(&tmp);
    let input = tmp.path().join("src/train.csv");
    let out = tmp.path().join("x.csv");
    let o = run(
        &[
            "engineer",
            "--input",
            input.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ],
        &proj,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), "\n".repeat(1601));

    let s = write_doc(&tmp, "s.json", &house::identity("ann", "s_feature", "s"));
    assert_eq!(code(&run(&["submit", "--feature", &s], &proj)), 0);
    let o = run(
        &[
            "engineer",
            "--input",
            input.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ],
        &proj,
    );
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    let raw = fs::read_to_string(&input).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s_feature"));
    for (got, row) in lines.zip(raw.lines().skip(1)) {
        let want: f64 = row.split(',').next().unwrap().parse().unwrap();
        assert_eq!(got.parse::<f64>().unwrap(), want);
    }

    let bad = write_doc(&tmp, "bad.csv", "s,u\n1,2\n");
    let o = run(&["engineer", "--input", &bad, "--output", out.to_str().unwrap()], &proj);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_logs_api_rejections_and_handles_empty_streams() {
    let tmp = TempDir::new().unwrap();
    let proj = signal_project(&tmp);
    let stream = tmp.path().join("stream");
    fs::create_dir_all(&stream).unwrap();
    let log = tmp.path().join("log.jsonl");
    let o = run(
        &[
            "simulate",
            "--stream",
            stream.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ],
        &proj,
    );
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("submitted 0 accepted 0 rejected 0 pruned 0"));
    assert_eq!(fs::read_to_string(&log).unwrap(), "");

    fs::write(stream.join("01.json"), house::identity("ann", "noisy", "noisy")).unwrap();
    fs::write(stream.join("02.json"), "{ not json").unwrap();
    fs::write(stream.join("03.json"), house::identity("ben", "ghost", "NoSuchColumn")).unwrap();
    fs::write(stream.join("04.json"), house::identity("cat", "clean", "s")).unwrap();
    let o = run(
        &[
            "simulate",
            "--stream",
            stream.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ],
        &proj,
    );
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("submitted 4 accepted 2 rejected 2 pruned 1"), "{out}");
    assert!(out.contains("selected: cat/clean"));
    assert!(out.contains("dry run"));
    let events: Vec<serde_json::Value> = fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(events.len(), 5);
    assert_eq!(events[2]["feature"], "ben/ghost");
    assert_eq!(events[2]["error"]["stage"], "api");
    assert!(!proj.join("features/contrib/user_cat").exists());

    let o = run(
        &[
            "simulate",
            "--stream",
            stream.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
            "--commit",
        ],
        &proj,
    );
    assert_eq!(code(&o), 0);
    assert!(proj.join("features/contrib/user_cat/feature_clean.json").exists());
    assert!(proj.join("features/attic/user_ann/feature_noisy.json").exists());
    assert_eq!(
        fs::read_to_string(proj.join("logs/decisions.jsonl")).unwrap(),
        fs::read_to_string(&log).unwrap()
    );

    let o = run(
        &["simulate", "--stream", "nowhere", "--log", log.to_str().unwrap()],
        &proj,
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn seed_variable_changes_the_split() {
    let tmp = TempDir::new().unwrap();
    let proj = signal_project(&tmp);
    let s = write_doc(&tmp, "s.json", &house::identity("ann", "s_feature", "s"));
    let json = |seed: Option<&str>| {
        let mut c = bin();
        c.args(["validate", "--feature", &s, "--json"]).current_dir(&proj);
        if let Some(seed) = seed {
            c.env("FEATUREGATE_SEED", seed);
        }
        let o = c.output().unwrap();
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    let base = json(None);
    let seeded = json(Some("5"));
    assert_eq!(base["api"]["subsamples"]["dev_seed"], 0);
    assert_eq!(seeded["api"]["subsamples"]["dev_seed"], 5);
    assert_ne!(
        base["selection"]["decision"]["cmi"],
        seeded["selection"]["decision"]["cmi"]
    );

    let mut c = bin();
    let o = c
        .args(["validate", "--feature", &s])
        .current_dir(&proj)
        .env("FEATUREGATE_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
