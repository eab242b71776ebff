#![allow(dead_code)]

use std::path::PathBuf;

use rgne_cli::{parse_config, ExperimentConfig};

pub fn shipped_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/section4.json")
}

pub fn shipped_text() -> String {
    std::fs::read_to_string(shipped_path()).unwrap()
}

pub fn shipped() -> ExperimentConfig {
    parse_config(&shipped_text()).unwrap()
}

/// Two agents on an edge sharing `x1 + x2 ≤ 4` with interval uncertainty;
/// solves in a few hundred iterations.
pub const SMALL: &str = r#"{
  "game": {
    "agents": [
      {"dim": 1, "hessian": [[1]], "linear": [-5], "local_set": {"box": {"lower": [0], "upper": [10]}}},
      {"dim": 1, "hessian": [[2]], "linear": [-6], "local_set": {"box": {"lower": [0], "upper": [10]}}}
    ],
    "coupling": [
      {"nominal": [[1], [1]], "perturbation": [[[0.5]], [[0.5]]], "resource": 4, "resource_perturbation": [1]}
    ],
    "uncertainty": {
      "local": [{"box": {"lower": [-1], "upper": [1]}}, {"box": {"lower": [-1], "upper": [1]}}],
      "global": {"box": {"lower": [-1], "upper": [1]}}
    }
  },
  "graph": {"topology": "path"},
  "solver": {"tolerance": 1e-9, "timing": false}
}"#;

pub fn small() -> ExperimentConfig {
    parse_config(SMALL).unwrap()
}

pub fn with(text: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    edit(&mut v);
    v.to_string()
}
