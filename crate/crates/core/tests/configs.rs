//! The shipped configs and the published schema stay in step with the code.

use std::path::PathBuf;

use scgan_core::config::{config_schema, load_config, Preset};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn published_schema_is_current() {
    let path = configs_dir().join("schema.json");
    let generated = serde_json::to_string_pretty(&config_schema()).unwrap() + "\n";
    if std::env::var_os("SCGAN_BLESS").is_some() {
        std::fs::write(&path, &generated).unwrap();
    }
    let published = std::fs::read_to_string(&path).unwrap_or_default();
    assert!(
        published == generated,
        "{} is stale; rerun with SCGAN_BLESS=1 to regenerate",
        path.display()
    );
}

#[test]
fn shipped_configs_validate() {
    for (name, preset) in [("desk.json", Preset::Desk), ("paper.json", Preset::Paper)] {
        let cfg = load_config(&configs_dir().join(name))
            .unwrap()
            .unwrap_or_else(|e| panic!("{name}: {e:?}"));
        assert_eq!(cfg.preset, preset);
    }
}

#[test]
fn schema_requires_only_the_seed() {
    let s = config_schema();
    assert_eq!(s["required"], serde_json::json!(["seed"]));
    let text = s.to_string();
    assert!(text.contains("\"kind\""), "noise variants keep their tag");
}
