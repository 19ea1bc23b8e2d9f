#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn segclf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segclf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs and requires success, returning stderr for diagnostics.
pub fn ok(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = segclf(dir, args);
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "segclf {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

pub const PIPELINE: &[&[&str]] = &[
    &["synth", "--seed", "7", "--n-images", "300", "--out", "data"],
    &["featurize", "--segments", "data/segments.jsonl", "--kind", "area_sum", "--out", "features"],
    &[
        "cv", "--segments", "data/segments.jsonl", "--labels", "data/labels.csv", "--kind", "area_sum",
        "--learner", "boosted", "--grid", "grid.json", "--seed", "3", "--out", "cv",
    ],
    &[
        "train", "--segments", "data/segments.jsonl", "--labels", "data/labels.csv", "--kind", "area_sum",
        "--params", "cv/best_params.json", "--seed", "3", "--out", "model",
    ],
    &[
        "eval", "--model", "model/model.json", "--segments", "data/segments.jsonl", "--labels", "data/labels.csv",
        "--out", "eval",
    ],
    &[
        "importance", "--model", "model/model.json", "--segments", "data/segments.jsonl", "--labels",
        "data/labels.csv", "--categories", "banner,signboard,person,flag", "--repeats", "3", "--seed", "5",
        "--out", "importance",
    ],
];

pub const GRID: &str = r#"[{"max_depth": 2, "n_rounds": 20}, {"max_depth": 3, "n_rounds": 40, "learning_rate": 0.1}]"#;

/// Runs the scripted pipeline inside `dir` with the given global flags.
pub fn run_pipeline(dir: &Path, global: &[&str]) -> Result<(), String> {
    fs::write(dir.join("grid.json"), GRID).map_err(|e| e.to_string())?;
    for step in PIPELINE {
        let mut args: Vec<&str> = global.to_vec();
        args.extend_from_slice(step);
        ok(dir, &args)?;
    }
    Ok(())
}

/// Every file under `dir` keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// `run.json` with the wall-clock timestamp removed.
pub fn manifest_without_time(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("created_at");
    v
}

/// Compares two pipeline output trees: byte-identical files, and manifests
/// identical apart from their timestamps.
pub fn compare_runs(a: &Path, b: &Path) -> Result<usize, String> {
    let (sa, sb) = (snapshot(a), snapshot(b));
    if sa.keys().ne(sb.keys()) {
        return Err(format!("file sets differ: {:?} vs {:?}", sa.keys(), sb.keys()));
    }
    for (name, bytes) in &sa {
        let other = &sb[name];
        let same = if name.ends_with("run.json") {
            manifest_without_time(bytes) == manifest_without_time(other)
        } else {
            bytes == other
        };
        if !same {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(sa.len())
}
