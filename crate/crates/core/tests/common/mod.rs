#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const DGP_COLUMNS: [&str; 10] = [
    "--y",
    "y",
    "--q",
    "q",
    "--x",
    "x1,x2,x3",
    "--z",
    "x1,x2,x3,x4",
    "--tau",
    "0",
];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_diffmatch")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn schema(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(format!("{name}.schema.json"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn diffmatch")
}

/// Runs the binary, requires success and returns the parsed JSON.
pub fn run_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "diffmatch {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

/// Output text with the wall-clock duration removed.
pub fn without_duration(mut v: Value) -> String {
    v["manifest"]
        .as_object_mut()
        .expect("manifest")
        .remove("duration_ms");
    serde_json::to_string(&v).unwrap()
}

pub fn schema_errors(name: &str, v: &Value) -> Vec<String> {
    let text = std::fs::read_to_string(schema(name)).expect("schema file");
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("valid schema");
    validator.iter_errors(v).map(|e| e.to_string()).collect()
}

pub fn dgp_args<'a>(sub: &'a str, data: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec![sub, "--data", data];
    a.extend_from_slice(&DGP_COLUMNS);
    a.extend_from_slice(extra);
    a
}
