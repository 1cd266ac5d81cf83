//! A synthetic house-price table and the feature documents used against it.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const SCHEMA: &str = r#"{
  "columns": [
    {"name": "YrSold", "kind": "continuous"},
    {"name": "LotArea", "kind": "continuous", "allow_missing": true},
    {"name": "YearBuilt", "kind": "continuous"},
    {"name": "GarageYrBlt", "kind": "continuous", "allow_missing": true},
    {"name": "GarageCars", "kind": "continuous"},
    {"name": "GarageArea", "kind": "continuous"},
    {"name": "Neighborhood", "kind": "categorical"},
    {"name": "SalePrice", "kind": "continuous"}
  ]
}
"#;

pub const HEADER: &str = "YrSold,LotArea,YearBuilt,GarageYrBlt,GarageCars,GarageArea,Neighborhood,SalePrice";

/// `rows` houses; lot area is log-normal with about 6% missing, and houses
/// without a garage have no garage year.
pub fn csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = format!("{HEADER}\n");
    for _ in 0..rows {
        let z: f64 = StandardNormal.sample(&mut rng);
        let lot = (9.1 + 0.5 * z).exp();
        let sold = rng.random_range(2006..=2010);
        let built = rng.random_range(1900..=2008);
        let cars = if rng.random::<f64>() < 0.1 {
            0
        } else {
            rng.random_range(1..=3)
        };
        let area = if cars == 0 {
            0.0
        } else {
            (cars as f64 * 240.0 + 60.0 * rng.random::<f64>()).round()
        };
        let garage_year = if cars == 0 {
            String::new()
        } else {
            (built + rng.random_range(0..=10)).min(sold).to_string()
        };
        let hood = ["CollgCr", "Edwards", "NAmes", "OldTown", "Sawyer"][rng.random_range(0..5)];
        let e: f64 = StandardNormal.sample(&mut rng);
        let price = 30_000.0 + 25_000.0 * lot.ln() + 600.0 * (built - 1900) as f64 + 40.0 * area + 15_000.0 * e;
        let lot_text = if rng.random::<f64>() < 0.06 {
            String::new()
        } else {
            format!("{lot:.0}")
        };
        writeln!(
            out,
            "{sold},{lot_text},{built},{garage_year},{cars},{area},{hood},{price:.0}"
        )
        .unwrap();
    }
    out
}

/// Write `train.csv` and `schema.json` into `dir`.
pub fn write(dir: &Path, rows: usize, seed: u64) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir).unwrap();
    let train = dir.join("train.csv");
    let schema = dir.join("schema.json");
    std::fs::write(&train, csv(rows, seed)).unwrap();
    std::fs::write(&schema, SCHEMA).unwrap();
    (train, schema)
}

/// Log-transform lot area when skewed, then mean-impute.
pub const UNSKEW: &str = r#"{
  "name": "lot_area_unskewed",
  "author": "alice",
  "description": "Lot area, log-transformed if skewed, with missing values mean-imputed.",
  "input": ["LotArea"],
  "transformer": [
    {"primitive": "conditional", "params": {"check": {"skew_gt": 0.75}, "then": "log1p(x)"}},
    {"primitive": "impute", "params": {"strategy": "mean"}}
  ]
}
"#;

/// Four features over six raw variables.
pub const PIPELINE: [(&str, &str); 4] = [
    (
        "user_bob/feature_years_since_sold.json",
        r#"{
  "name": "years_since_sold",
  "author": "bob",
  "input": ["YrSold"],
  "transformer": ["2011 - x"]
}
"#,
    ),
    ("user_alice/feature_lot_area_unskewed.json", UNSKEW),
    (
        "user_carol/feature_year_built_fill.json",
        r#"{
  "name": "year_built_fill",
  "author": "carol",
  "input": ["YearBuilt", "GarageYrBlt"],
  "transformer": [
    "GarageYrBlt - YearBuilt",
    {"primitive": "impute", "params": {"strategy": "median"}}
  ]
}
"#,
    ),
    (
        "user_dave/feature_garage_area_per_car.json",
        r#"{
  "name": "garage_area_per_car",
  "author": "dave",
  "input": ["GarageArea", "GarageCars"],
  "transformer": [
    "GarageArea / GarageCars",
    {"primitive": "impute", "params": {"strategy": "constant", "value": 0}}
  ]
}
"#,
    ),
];

/// Place the four pipeline features directly into a project's contrib directory.
pub fn install_pipeline(root: &Path) {
    for (rel, doc) in PIPELINE {
        let path = root.join("features/contrib").join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, doc).unwrap();
    }
}

/// `y = s + 0.5 e1` with columns `s`, a noisy copy `s + e2` and an
/// unrelated `u`.
pub fn signal_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("s,noisy,u,y\n");
    for _ in 0..rows {
        let s: f64 = StandardNormal.sample(&mut rng);
        let e1: f64 = StandardNormal.sample(&mut rng);
        let e2: f64 = StandardNormal.sample(&mut rng);
        let u: f64 = StandardNormal.sample(&mut rng);
        writeln!(out, "{s},{},{u},{}", s + e2, s + 0.5 * e1).unwrap();
    }
    out
}

pub const SIGNAL_SCHEMA: &str = r#"{
  "columns": [
    {"name": "s", "kind": "continuous"},
    {"name": "noisy", "kind": "continuous"},
    {"name": "u", "kind": "continuous"},
    {"name": "y", "kind": "continuous"}
  ]
}
"#;

pub fn write_signal(dir: &Path, rows: usize, seed: u64) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir).unwrap();
    let train = dir.join("train.csv");
    let schema = dir.join("schema.json");
    std::fs::write(&train, signal_csv(rows, seed)).unwrap();
    std::fs::write(&schema, SIGNAL_SCHEMA).unwrap();
    (train, schema)
}

/// An identity feature over `column`.
pub fn identity(author: &str, name: &str, column: &str) -> String {
    format!(
        "{{\n  \"name\": \"{name}\",\n  \"author\": \"{author}\",\n  \"input\": [\"{column}\"],\n  \"transformer\": [\"x\"]\n}}\n"
    )
}
