mod common;

use vibefuse::artifact::Manifest;
use vibefuse::config::PipelineConfig;
use vibefuse::pipeline::Pipeline;

fn config() -> PipelineConfig {
    let text = format!(
        r#"{{"seed": 3, "model": {}, "sampling": {{"count": 12}}, "split": {{"lf_train": 8, "hf_train": 4}}}}"#,
        serde_json::to_string(&common::strip_config()).unwrap()
    );
    PipelineConfig::from_json(&text).unwrap()
}

fn entry_hash(dir: &std::path::Path, name: &str) -> String {
    Manifest::open(dir).unwrap().files[name].config_hash.clone()
}

#[test]
fn downstream_settings_keep_upstream_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let first = Pipeline::new(config(), dir.path()).unwrap();
    let (hf, _) = first.datasets().unwrap();
    first.split().unwrap();
    assert_eq!(hf.len(), 12);
    assert_eq!(entry_hash(dir.path(), "hf.csv"), first.config_hash());

    let mut cfg = config();
    cfg.mfdf_cnn.epochs = 3;
    let second = Pipeline::new(cfg, dir.path()).unwrap();
    assert_ne!(second.config_hash(), first.config_hash());
    let (again, _) = second.datasets().unwrap();
    assert_eq!(again, hf);
    assert_eq!(entry_hash(dir.path(), "hf.csv"), first.config_hash());

    let mut cfg = config();
    cfg.sampling.std = 0.05;
    let third = Pipeline::new(cfg, dir.path()).unwrap();
    let (fresh, _) = third.datasets().unwrap();
    assert_ne!(fresh, hf);
    assert_eq!(entry_hash(dir.path(), "hf.csv"), third.config_hash());
}

#[test]
fn edited_artifacts_are_regenerated() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(), dir.path()).unwrap();
    let s = p.sample().unwrap();
    let path = dir.path().join("samples.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("\n\n");
    std::fs::write(&path, text).unwrap();
    let (hf, _) = p.datasets().unwrap();
    assert_eq!(hf.thetas, s);
    assert!(!std::fs::read_to_string(&path).unwrap().ends_with("\n\n"));
}
