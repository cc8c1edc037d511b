//! Helpers for driving the `dedpo` binary from integration tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small settings so every command finishes in seconds.
pub const TINY: &str = r#"
format_version = 1
seed = 3

[diffusion]
schedule_steps = 10
hidden = 16

[diffusion.pretrain]
steps = 40
batch_size = 32

[dataset]
n_pairs = 80
label_fraction = 0.25

[annotator]
kind = "biased"
accuracy = 0.8
sharpness = 0.1

[train]
steps = 6
batch_size = 8
eval_prompts = 8

[verification]
identity_instances = 100
logit_probe_steps = 3

[sweep]
rate_estimators = ["DeDPO", "OR"]

[sweep.matrix]
seeds = [0, 1]
n_labeled = 8
unlabeled_multiples = [1, 2]
accuracies = [0.6, 0.9]
estimators = ["DeDPO", "OR"]
schedule_steps = 10

[sweep.matrix.pretrain]
steps = 20
batch_size = 16

[sweep.matrix.train]
steps = 3
batch_size = 8
eval_prompts = 8

[sweep.rate]
sizes = [200, 400, 800, 1600]
replicates = 2
"#;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dedpo"));
    c.env_remove("DEDPO_OUT_DIR");
    c
}

/// Write `config` into `dir` and return its path.
pub fn write_config(dir: &Path, config: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, config).unwrap();
    path
}

pub fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

pub fn report_without_timing(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

/// Every file under `dir`, by relative path, with `report.json` timing removed.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let bytes = if p.file_name().unwrap() == "report.json" {
                serde_json::to_vec(&report_without_timing(&p)).unwrap()
            } else {
                fs::read(&p).unwrap()
            };
            files.push((rel, bytes));
        }
    }
    files.sort();
    files
}
