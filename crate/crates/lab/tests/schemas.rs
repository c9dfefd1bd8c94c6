//! The versioned schemas stay in step with the types that read and write
//! the documents they describe.

use std::collections::BTreeSet;
use std::path::Path;

use rwre_lab::config::{Experiment, ExperimentConfig};
use rwre_lab::run::{execute, MANIFEST_SCHEMA, REPORT_SCHEMA};
use serde_json::Value;

fn schema(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn strings(v: &Value) -> BTreeSet<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

#[test]
fn experiment_kinds_match() {
    let kinds: BTreeSet<String> = Experiment::KINDS.iter().map(|s| s.to_string()).collect();
    let config = schema("config.v1.json");
    let in_config: BTreeSet<String> = config["properties"]["experiment"]["oneOf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let name = r["$ref"].as_str().unwrap().rsplit('/').next().unwrap();
            config["$defs"][name]["properties"]["kind"]["const"].as_str().unwrap().to_string()
        })
        .collect();
    assert_eq!(in_config, kinds);
    assert_eq!(strings(&schema("manifest.v1.json")["properties"]["experiment"]["enum"]), kinds);
    assert_eq!(strings(&schema("report.v1.json")["properties"]["experiment"]["enum"]), kinds);
}

#[test]
fn schema_ids_match_emitted_tags() {
    assert_eq!(schema("report.v1.json")["properties"]["schema"]["const"], REPORT_SCHEMA);
    assert_eq!(schema("manifest.v1.json")["properties"]["schema"]["const"], MANIFEST_SCHEMA);
}

#[test]
fn report_envelope_keys_are_the_required_ones() {
    let cfg = ExperimentConfig::from_json(
        r#"{"schema_version": 1, "seed": 0,
            "experiment": {"kind": "constants", "hierarchy": {"d": 1, "l0": 10, "n0": 4, "nt0": 4, "k_max": 2}}}"#,
    )
    .unwrap();
    let payload = execute(&cfg).unwrap().payload;
    let keys: BTreeSet<String> = payload.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, strings(&schema("report.v1.json")["required"]));
}

#[test]
fn shipped_configs_parse_and_top_level_keys_are_declared() {
    let declared: BTreeSet<String> = schema("config.v1.json")["properties"]
        .as_object()
        .unwrap()
        .keys()
        .cloned()
        .collect();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        ExperimentConfig::from_json(&text).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v.as_object().unwrap().keys().all(|k| declared.contains(k)));
        seen += 1;
    }
    assert!(seen >= 5);
}
