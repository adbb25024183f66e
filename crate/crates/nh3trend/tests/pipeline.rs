//! File-plane integration: the JSON artifacts conform to the shipped
//! schemas, written datasets reload bit-for-bit, the file-based pipeline
//! equals the in-memory composition, and census counts survive an
//! independent recount.

use std::collections::BTreeMap;
use std::path::Path;

use nh3trend::cli::run_cli;
use nh3trend::io::{
    load_dataset, read_json, read_trend_records_csv, DatasetBundle, DatasetPaths, RunConfig,
    TrendRecord,
};
use nh3trend::report::run_pipeline;
use nh3trend::series::Provenance;
use nh3trend::synth::{generate_network, SpikeSpec, SynthGroundTruth, SynthSpec};
use serde_json::Value;

// ---------------------------------------------------------------------------
// JSON-schema subset validator
//
// The shipped schemas use a small draft-07 subset: $ref into definitions,
// type, enum, properties/required/additionalProperties, items,
// minItems/maxItems, and minimum. This walker enforces exactly that subset.
// ---------------------------------------------------------------------------

fn type_matches(name: &str, value: &Value) -> bool {
    match name {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.is_i64() || value.is_u64(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn resolve_ref<'a>(root: &'a Value, pointer: &str) -> Result<&'a Value, String> {
    let trimmed = pointer
        .strip_prefix("#/")
        .ok_or_else(|| format!("unsupported $ref {pointer}"))?;
    let mut node = root;
    for segment in trimmed.split('/') {
        node = node
            .get(segment)
            .ok_or_else(|| format!("dangling $ref {pointer}"))?;
    }
    Ok(node)
}

fn validate(instance: &Value, schema: &Value, root: &Value, path: &str) -> Result<(), String> {
    if let Some(reference) = schema.get("$ref").and_then(Value::as_str) {
        return validate(instance, resolve_ref(root, reference)?, root, path);
    }

    if let Some(expected) = schema.get("type") {
        let names: Vec<&str> = match expected {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
            _ => return Err(format!("{path}: malformed type keyword")),
        };
        if !names.iter().any(|n| type_matches(n, instance)) {
            return Err(format!("{path}: expected type {names:?}, got {instance}"));
        }
    }

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(instance) {
            return Err(format!("{path}: {instance} not in {allowed:?}"));
        }
    }

    if let Some(minimum) = schema.get("minimum").and_then(Value::as_f64) {
        if let Some(v) = instance.as_f64() {
            if v < minimum {
                return Err(format!("{path}: {v} below minimum {minimum}"));
            }
        }
    }

    if let Some(object) = instance.as_object() {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !object.contains_key(key) {
                    return Err(format!("{path}: missing required key {key}"));
                }
            }
        }
        let properties = schema.get("properties").and_then(Value::as_object);
        let additional = schema.get("additionalProperties");
        for (key, value) in object {
            let child_path = format!("{path}.{key}");
            match properties.and_then(|p| p.get(key)) {
                Some(child_schema) => validate(value, child_schema, root, &child_path)?,
                None => match additional {
                    Some(Value::Bool(false)) => {
                        return Err(format!("{path}: unexpected key {key}"))
                    }
                    Some(Value::Bool(true)) | None => {}
                    Some(child_schema) => validate(value, child_schema, root, &child_path)?,
                },
            }
        }
    }

    if let Some(items) = instance.as_array() {
        if let Some(min_items) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min_items {
                return Err(format!("{path}: fewer than {min_items} items"));
            }
        }
        if let Some(max_items) = schema.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max_items {
                return Err(format!("{path}: more than {max_items} items"));
            }
        }
        if let Some(item_schema) = schema.get("items") {
            for (index, item) in items.iter().enumerate() {
                validate(item, item_schema, root, &format!("{path}[{index}]"))?;
            }
        }
    }

    Ok(())
}

fn validate_root(instance: &Value, schema: &Value) -> Result<(), String> {
    validate(instance, schema, schema, "$")
}

fn load_schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {name}: {e}"))
}

/// Every `$ref` in a schema must resolve against the schema itself.
fn assert_refs_resolve(node: &Value, root: &Value) {
    match node {
        Value::Object(map) => {
            if let Some(reference) = map.get("$ref").and_then(Value::as_str) {
                resolve_ref(root, reference).unwrap_or_else(|e| panic!("{e}"));
            }
            for value in map.values() {
                assert_refs_resolve(value, root);
            }
        }
        Value::Array(list) => {
            for value in list {
                assert_refs_resolve(value, root);
            }
        }
        _ => {}
    }
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

fn small_spec() -> SynthSpec {
    SynthSpec {
        n_reference_stations: 5,
        n_area_stations: 18,
        n_months: 48,
        seed: 11,
        ..SynthSpec::default()
    }
}

fn run(args: &[&str]) -> i32 {
    run_cli(std::iter::once("nh3trend").chain(args.iter().copied()))
}

// ---------------------------------------------------------------------------
// Schema conformance
// ---------------------------------------------------------------------------

#[test]
fn report_json_conforms_to_shipped_schema() {
    let schema = load_schema("report.schema.json");
    assert_refs_resolve(&schema, &schema);

    let net = generate_network(&small_spec()).expect("valid spec");
    let artifacts = run_pipeline(&DatasetBundle::from_network(&net), &RunConfig::default())
        .expect("pipeline runs");
    let doc = serde_json::to_value(&artifacts.report).expect("serializable");
    validate_root(&doc, &schema).unwrap_or_else(|e| panic!("schema violation: {e}"));

    // The validator must actually bite: break the document three ways.
    let mut missing = doc.clone();
    missing.as_object_mut().unwrap().remove("censuses");
    assert!(validate_root(&missing, &schema).is_err(), "missing key accepted");

    let mut wrong_type = doc.clone();
    wrong_type["config"]["alpha"] = Value::String("high".into());
    assert!(validate_root(&wrong_type, &schema).is_err(), "wrong type accepted");

    let mut extra = doc.clone();
    extra
        .as_object_mut()
        .unwrap()
        .insert("unexpected".into(), Value::Bool(true));
    assert!(validate_root(&extra, &schema).is_err(), "unknown key accepted");
}

#[test]
fn ground_truth_json_conforms_to_shipped_schema() {
    let schema = load_schema("ground_truth.schema.json");
    assert_refs_resolve(&schema, &schema);

    let spec = SynthSpec {
        spike: Some(SpikeSpec {
            station: 1,
            month: 30,
            magnitude: 82.8,
        }),
        ..small_spec()
    };
    let net = generate_network(&spec).expect("valid spec");
    let doc = serde_json::to_value(&net.ground_truth).expect("serializable");
    validate_root(&doc, &schema).unwrap_or_else(|e| panic!("schema violation: {e}"));

    // Spike-free ground truth serializes `spike: null` and must also pass.
    let plain = generate_network(&small_spec()).expect("valid spec");
    let plain_doc = serde_json::to_value(&plain.ground_truth).expect("serializable");
    validate_root(&plain_doc, &schema).unwrap_or_else(|e| panic!("schema violation: {e}"));

    let mut broken = doc.clone();
    broken["gap_mask"] = serde_json::json!([[0, 1], [1, 0]]);
    assert!(validate_root(&broken, &schema).is_err(), "numeric gap mask accepted");
}

// ---------------------------------------------------------------------------
// Bit-exact reload of written datasets
// ---------------------------------------------------------------------------

#[test]
fn simulated_datasets_reload_bit_exact() {
    let dir = tempfile::tempdir().expect("temp dir");
    let sim = dir.path().join("sim");
    let path = |tail: &str| sim.join(tail).to_str().expect("utf-8").to_string();

    assert_eq!(
        run(&[
            "simulate",
            "--out",
            sim.to_str().expect("utf-8"),
            "--seed",
            "11",
            "--n-reference",
            "5",
            "--n-area",
            "18",
            "--n-months",
            "48",
        ]),
        0
    );

    let bundle = load_dataset(&DatasetPaths {
        reference: Some(path("reference.csv").into()),
        triplets: Some(path("triplets.csv").into()),
        man_raw: Some(path("man_raw.csv").into()),
        ..DatasetPaths::default()
    })
    .expect("reload");

    // The same spec regenerated in memory must match the files exactly:
    // values bit-for-bit, gaps in place, provenance preserved.
    let net = generate_network(&small_spec()).expect("valid spec");
    assert_eq!(bundle.reference, net.reference);
    assert_eq!(bundle.man_raw, net.raw_area);
    assert_eq!(bundle.observations, net.observations);

    let truth: SynthGroundTruth =
        read_json(sim.join("ground_truth.json")).expect("ground truth parses");
    assert_eq!(truth, net.ground_truth);
}

// ---------------------------------------------------------------------------
// File-based pipeline equals the in-memory composition
// ---------------------------------------------------------------------------

#[test]
fn file_pipeline_matches_in_memory_composition() {
    let dir = tempfile::tempdir().expect("temp dir");
    let root = dir.path();
    let path = |tail: &str| root.join(tail).to_str().expect("utf-8").to_string();

    assert_eq!(
        run(&[
            "simulate",
            "--out",
            &path("sim"),
            "--seed",
            "11",
            "--n-reference",
            "5",
            "--n-area",
            "18",
            "--n-months",
            "48",
        ]),
        0
    );
    assert_eq!(
        run(&[
            "calibrate",
            "--reference",
            &path("sim/reference.csv"),
            "--triplets",
            &path("sim/triplets.csv"),
            "--raw",
            &path("sim/man_raw.csv"),
            "--out",
            &path("cal"),
        ]),
        0
    );
    assert_eq!(
        run(&[
            "trend",
            "--input",
            &path("cal/calibrated.csv"),
            "--out",
            &path("trends.csv"),
        ]),
        0
    );
    let file_records = read_trend_records_csv(root.join("trends.csv")).expect("records parse");

    let net = generate_network(&small_spec()).expect("valid spec");
    let artifacts = run_pipeline(&DatasetBundle::from_network(&net), &RunConfig::default())
        .expect("pipeline runs");
    let memory: BTreeMap<&String, &TrendRecord> = artifacts
        .trend_records
        .iter()
        .filter(|r| r.provenance == Provenance::Calibrated)
        .map(|r| (&r.station_id, r))
        .collect();

    assert_eq!(file_records.len(), memory.len());
    for record in &file_records {
        let expected = memory[&record.station_id];
        assert_eq!(record.n_used, expected.n_used, "{}", record.station_id);
        for (label, got, want) in [
            ("theta0", record.theta0, expected.theta0),
            ("theta1", record.theta1, expected.theta1),
            ("se_naive", record.se_naive, expected.se_naive),
            ("se_adjusted", record.se_adjusted, expected.se_adjusted),
            ("p_naive", record.p_naive, expected.p_naive),
            ("p_adjusted", record.p_adjusted, expected.p_adjusted),
        ] {
            assert_eq!(
                got.to_bits(),
                want.to_bits(),
                "{} {label}: file {got} vs memory {want}",
                record.station_id
            );
        }
        assert_eq!(record.class, expected.class, "{}", record.station_id);
    }
}

// ---------------------------------------------------------------------------
// Census counts survive an independent recount
// ---------------------------------------------------------------------------

#[test]
fn census_counts_match_independent_recount() {
    let net = generate_network(&small_spec()).expect("valid spec");
    let artifacts = run_pipeline(&DatasetBundle::from_network(&net), &RunConfig::default())
        .expect("pipeline runs");
    assert!(artifacts.report.censuses.len() >= 3);

    for census in &artifacts.report.censuses {
        let (mut pos, mut neg, mut pos_sig, mut neg_sig, mut degenerate) = (0, 0, 0, 0, 0);
        for record in artifacts
            .trend_records
            .iter()
            .filter(|r| r.provenance == census.dataset_label)
        {
            let p = if census.adjusted {
                record.p_adjusted
            } else {
                record.p_naive
            };
            if record.theta1 > 0.0 {
                pos += 1;
                if p < census.alpha {
                    pos_sig += 1;
                }
            } else if record.theta1 < 0.0 {
                neg += 1;
                if p < census.alpha {
                    neg_sig += 1;
                }
            } else {
                degenerate += 1;
            }
        }
        let label = (census.dataset_label, census.adjusted);
        assert_eq!(census.positive, pos, "{label:?}");
        assert_eq!(census.negative, neg, "{label:?}");
        assert_eq!(census.positive_significant, pos_sig, "{label:?}");
        assert_eq!(census.negative_significant, neg_sig, "{label:?}");
        assert_eq!(census.degenerate, degenerate, "{label:?}");
    }
}

// ---------------------------------------------------------------------------
// CLI exit-code contract
// ---------------------------------------------------------------------------

#[test]
fn cli_exit_codes_follow_contract() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(
        run(&["trend", "--input", "/nonexistent/input.csv", "--out", "/nonexistent/out.csv"]),
        2
    );
}
