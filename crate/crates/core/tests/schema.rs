//! The shipped config schema must match the one derived from the config
//! types. Regenerate with `UPDATE_SCHEMA=1 cargo test -p nelson-lab --test schema`.

use std::path::PathBuf;

use nelson_lab::config::LabConfig;

fn schema_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schema/lab-config.schema.json")
}

#[test]
fn shipped_schema_is_current() {
    let schema = schemars::schema_for!(LabConfig);
    let mut text = serde_json::to_string_pretty(&schema).unwrap();
    text.push('\n');
    let path = schema_path();
    if std::env::var_os("UPDATE_SCHEMA").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let shipped = std::fs::read_to_string(&path).expect("schema file present");
    assert_eq!(shipped, text, "schema is stale; rerun with UPDATE_SCHEMA=1");
}

#[test]
fn default_config_round_trips_through_json() {
    let cfg = LabConfig::default();
    let text = serde_json::to_string(&cfg).unwrap();
    let back: LabConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
}
