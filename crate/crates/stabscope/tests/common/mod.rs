#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Small 9-bus configuration: 36 scenarios, two fault buses, two ladder tiers.
pub const TINY: &str = r#"{
  "case": "wscc9.json",
  "seed": 3,
  "scenarios": {
    "demand_min": 0.7, "demand_max": 1.0, "demand_step": 0.1,
    "s_values": [0.0, 0.05], "r_values": [1.0],
    "displaceable": ["G3"],
    "res_siting": { "1": 5, "2": 8, "3": 6 }
  },
  "study": {
    "fault_buses": [7, 9],
    "search": { "coarse": 0.1, "fine": 0.01, "cap": 1.0 },
    "sim": { "step": 0.002, "post_clear_horizon": 2.0, "record_stride": 0 }
  },
  "ladder": {
    "tiers": ["cart", "random_forest"],
    "hyperparameters": { "random_forest": { "n_trees": 5, "max_depth": 6, "min_samples_leaf": 1 } },
    "theta": 0.05
  },
  "explain": {
    "method": "kernel", "budget": { "samples": 256 }, "background": 4, "top_k": 5,
    "dependence": [{ "voi": "SG_H_G3", "color": "SG_P_G3" }],
    "pfi_repeats": 2
  },
  "trends": { "vois": ["SG_H_G3"] },
  "interventions": [
    { "rule": { "kind": "forbid_displacement", "machine": "G3" }, "target_bus": 9 }
  ]
}"#;

/// Writes `config` and a copy of the 9-bus case into `dir`; returns the
/// config path.
pub fn fixture(dir: &Path, config: &str) -> PathBuf {
    std::fs::copy(repo_root().join("cases/wscc9.json"), dir.join("wscc9.json")).unwrap();
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    path
}

pub fn stabscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabscope"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn run(command: &str, config: &Path, out: &Path, jobs: usize) -> Output {
    stabscope(&[
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        &jobs.to_string(),
    ])
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `root`, by relative path, with its bytes.
pub fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                acc.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut acc = Vec::new();
    walk(root, root, &mut acc);
    acc.sort();
    acc
}
