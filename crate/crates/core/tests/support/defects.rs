//! A house-price table with planted defects, one feature document per
//! validation check that fails it, and a feature that passes every check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use featuregate::table::{load_table, subsample_indices, ColumnKind, ColumnSpec, Schema, Table};
use featuregate::validation::ValidationConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DEV_ROWS: usize = 300;
pub const HOLD_ROWS: usize = 200;

/// Rows that specific defects are planted in, derived from the battery's subsample seeds.
pub struct Plan {
    seed: u64,
    one_dev: usize,
    one_hold: usize,
    only_in_b: usize,
    in_h_not_one: usize,
}

impl Plan {
    fn find() -> Self {
        for seed in 0..100u64 {
            let a: BTreeSet<_> = subsample_indices(DEV_ROWS, 100, seed).unwrap().into_iter().collect();
            let b = subsample_indices(DEV_ROWS, 100, seed + 1).unwrap();
            let h = subsample_indices(HOLD_ROWS, 100, seed).unwrap();
            let one_dev = subsample_indices(DEV_ROWS, 1, seed + 2).unwrap()[0];
            let one_hold = subsample_indices(HOLD_ROWS, 1, seed + 2).unwrap()[0];
            if h.contains(&one_hold) {
                continue;
            }
            let Some(&only_in_b) = b.iter().find(|r| !a.contains(r) && **r != one_dev) else {
                continue;
            };
            return Plan {
                seed,
                one_dev,
                one_hold,
                only_in_b,
                in_h_not_one: h[0],
            };
        }
        panic!("no usable seed");
    }
}

pub struct House {
    pub dev: Table,
    pub holdout: Table,
    pub cfg: ValidationConfig,
}

pub fn schema() -> Schema {
    use ColumnKind::*;
    let cols = [
        ("LotArea", Continuous, true),
        ("YearBuilt", Continuous, false),
        ("PoolArea", Continuous, true),
        ("Neighborhood", Categorical, false),
        ("Alley", Categorical, true),
        ("RoofMatl", Categorical, false),
        ("Heating", Categorical, false),
        ("Electrical", Categorical, false),
        ("Huge", Continuous, false),
        ("Tiny", Continuous, false),
        ("SalePrice", Continuous, false),
    ];
    Schema::new(
        cols.iter().map(|(n, k, m)| ColumnSpec::new(*n, *k, *m)).collect(),
        Some("SalePrice"),
    )
    .unwrap()
}

pub fn house() -> House {
    let plan = Plan::find();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut make = |rows: usize, holdout: bool| {
        let mut csv = String::from(
            "LotArea,YearBuilt,PoolArea,Neighborhood,Alley,RoofMatl,Heating,Electrical,Huge,Tiny,SalePrice\n",
        );
        for i in 0..rows {
            let z: f64 = StandardNormal.sample(&mut rng);
            let lot = (9.0 + 0.6 * z).exp();
            let lot_missing = i % 10 == 3 && !(holdout || i == plan.one_dev);
            let year = 1900.0 + (rng.random::<f64>() * 110.0).round();
            let pool_present = i % 7 == 0 && (holdout || i != plan.one_dev);
            let hood = ["CollgCr", "Edwards", "NAmes", "OldTown", "Sawyer"][rng.random_range(0..5)];
            let alley = ["", "Grvl", "Pave"][i % 3];
            let roof = if !holdout && i == plan.only_in_b {
                "Membran"
            } else {
                "CompShg"
            };
            let heating = match (holdout && i == plan.in_h_not_one, i % 4) {
                (true, _) => "Floor",
                (_, 0) => "GasW",
                _ => "GasA",
            };
            let electrical = if holdout && i == plan.one_hold { "Mix" } else { "SBrkr" };
            let huge = if i % 2 == 0 { "1e200" } else { "-1e200" };
            let tiny = match (holdout, i % 2) {
                (true, 0) => "1",
                (_, 0) => "0",
                _ => "5e-324",
            };
            let price = 50_000.0 + 20.0 * lot.min(40_000.0) + 300.0 * (year - 1900.0) + 5000.0 * z;
            csv.push_str(&format!(
                "{},{year},{},{hood},{alley},{roof},{heating},{electrical},{huge},{tiny},{price:.0}\n",
                if lot_missing {
                    String::new()
                } else {
                    format!("{lot:.1}")
                },
                if pool_present {
                    format!("{}", 100 + i)
                } else {
                    String::new()
                },
            ));
        }
        load_table(csv.as_bytes(), &schema()).unwrap()
    };
    let dev = make(DEV_ROWS, false);
    let holdout = make(HOLD_ROWS, true);
    House {
        dev,
        holdout,
        cfg: ValidationConfig {
            seed: plan.seed,
            ..ValidationConfig::default()
        },
    }
}

pub fn feature(name: &str, input: &[&str], transformer: &str) -> String {
    let input: Vec<String> = input.iter().map(|c| format!("\"{c}\"")).collect();
    format!(
        r#"{{"name":"{name}","author":"alice","input":[{}],"transformer":{transformer}}}"#,
        input.join(",")
    )
}

pub const GOLDEN: &str = r#"{
  "name": "lot_area_log",
  "author": "alice",
  "description": "Log-transform lot area when it is skewed, then mean-impute missing values.",
  "input": ["LotArea"],
  "transformer": [
    {"primitive": "conditional", "params": {"check": {"skew_gt": 0.75}, "then": "log1p(x)"}},
    {"primitive": "impute", "params": {"strategy": "mean"}}
  ]
}"#;

pub fn defects() -> Vec<(&'static str, String)> {
    let imp = r#"{"primitive":"impute","params":{"strategy":"mean"}}"#;
    vec![
        (
            "IsFeatureCheck",
            format!(
                "[{},{}]",
                feature("a", &["YearBuilt"], "[\"x\"]"),
                feature("b", &["YearBuilt"], "[\"x\"]")
            ),
        ),
        (
            "HasCorrectInputTypeCheck",
            feature("ghost", &["NoSuchColumn"], "[\"x\"]"),
        ),
        (
            "HasTransformerInterfaceCheck",
            feature("frob", &["YearBuilt"], r#"[{"primitive":"frobnicate"}]"#),
        ),
        (
            "CanFitCheck",
            feature("scaled_hood", &["Neighborhood"], r#"[{"primitive":"scale"}]"#),
        ),
        ("CanFitOneRowCheck", feature("pool", &["PoolArea"], &format!("[{imp}]"))),
        (
            "CanFitTransformCheck",
            feature(
                "hood_code",
                &["Neighborhood"],
                r#"[{"primitive":"value_map","params":{"mapping":{"CollgCr":1,"Edwards":2,"NAmes":3,"OldTown":4}}}]"#,
            ),
        ),
        (
            "CanTransformCheck",
            feature(
                "roof",
                &["RoofMatl"],
                r#"[{"primitive":"one_hot","params":{"handle_unknown":"error"}}]"#,
            ),
        ),
        (
            "CanTransformNewRowsCheck",
            feature(
                "heating",
                &["Heating"],
                r#"[{"primitive":"one_hot","params":{"handle_unknown":"error"}}]"#,
            ),
        ),
        (
            "CanTransformOneRowCheck",
            feature(
                "electrical",
                &["Electrical"],
                r#"[{"primitive":"one_hot","params":{"handle_unknown":"error"}}]"#,
            ),
        ),
        (
            "HasCorrectOutputDimensionsCheck",
            r#"{"name":"year","author":"alice","input":["YearBuilt"],"transformer":["x"],"output":["a","b"]}"#
                .to_string(),
        ),
        ("CanMakeMapperCheck", feature("leak", &["SalePrice"], "[\"x\"]")),
        ("NoMissingValuesCheck", feature("lot_raw", &["LotArea"], "[\"x\"]")),
        (
            "NoInfiniteValuesCheck",
            feature(
                "tiny",
                &["Tiny"],
                r#"[{"primitive":"scale","params":{"mode":"minmax"}}]"#,
            ),
        ),
        (
            "CanDeepcopyCheck",
            feature(
                "huge_skew",
                &["Huge"],
                r#"[{"primitive":"conditional","params":{"check":{"skew_gt":0.75},"then":"x"}}]"#,
            ),
        ),
        (
            "CanPickleCheck",
            feature("huge_scaled", &["Huge"], r#"[{"primitive":"scale"}]"#),
        ),
    ]
}
