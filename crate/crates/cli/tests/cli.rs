use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn scgan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scgan"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SCGAN_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A config small enough to run every stage in a few seconds.
fn tiny_config(dir: &Path, extra: Value) -> std::path::PathBuf {
    let mut doc = json!({
        "seed": 1,
        "out": dir.join("run"),
        "corpus": { "synthetic_count": 8, "held_out": 4 },
        "generator": { "depth": 3, "padding": 3, "mid_channels": 4 },
        "discriminator": { "layer_channels": [4, 4, 4, 1] },
        "schedule": { "ep1": 1, "ep2": 1, "ep3": 2, "batch_size": 2 },
        "denoiser": { "depth": 3, "mid_channels": 4, "epochs": 1, "batch_size": 2, "patch_size": 16 }
    });
    if let (Some(d), Some(e)) = (doc.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            d.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scgan(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scgan(&["synth"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn invalid_config_lists_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(
        tmp.path(),
        json!({ "schedule": { "ep1": 3, "ep2": 1, "w2_target": -1.0 } }),
    );
    let o = scgan(&["synth", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("ep1 <= ep2"), "{err}");
    assert!(err.contains("non-negativity"), "{err}");
}

#[test]
fn train_without_corpus_names_the_missing_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), json!({}));
    let o = scgan(&["train", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains(&tmp.path().join("run").join("corpus").display().to_string()),
        "{}",
        stderr(&o)
    );
}

#[test]
fn extract_without_checkpoint_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), json!({}));
    let c = cfg.to_str().unwrap();
    assert!(scgan(&["synth", "--config", c], tmp.path()).status.success());
    let o = scgan(&["extract", "--config", c], tmp.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = scgan(&["extract", "--config", c, "--checkpoint", "nowhere"], tmp.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn seed_and_out_flags_override_the_document() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), json!({}));
    let c = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(
        scgan(&["synth", "--config", c, "--out", a.to_str().unwrap()], tmp.path())
            .status
            .success()
    );
    assert!(scgan(
        &["synth", "--config", c, "--out", b.to_str().unwrap(), "--seed", "9"],
        tmp.path()
    )
    .status
    .success());
    let run: Value = serde_json::from_str(&fs::read_to_string(b.join("corpus/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 9);
    assert_eq!(run["command"], "synth");
    assert!(run["version"].is_string() && run["git"].is_string());
    assert_ne!(
        fs::read(a.join("corpus/noisy/0000.png")).unwrap(),
        fs::read(b.join("corpus/noisy/0000.png")).unwrap()
    );
}

#[test]
fn data_dir_prefixes_relative_source_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), json!({ "corpus": { "source_dir": "imgs", "held_out": 2 } }));
    let c = cfg.to_str().unwrap();
    // relative to the working directory the folder does not exist
    let o = scgan(&["synth", "--config", c], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("imgs"));

    let data = tmp.path().join("data");
    fs::create_dir_all(data.join("imgs")).unwrap();
    for i in 0..4u8 {
        let img = image::GrayImage::from_fn(32, 32, |x, y| image::Luma([(x * 4 + y * 2) as u8 + i * 10]));
        img.save(data.join("imgs").join(format!("{i}.png"))).unwrap();
    }
    let o = Command::new(env!("CARGO_BIN_EXE_scgan"))
        .args(["synth", "--config", c])
        .current_dir(tmp.path())
        .env("SCGAN_DATA_DIR", &data)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_dir(tmp.path().join("run/corpus/noisy")).unwrap().count(), 2);
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), json!({}));
    let c = cfg.to_str().unwrap();
    let run = tmp.path().join("run");
    let step = |args: &[&str]| {
        let mut full = args.to_vec();
        full.extend(["--config", c]);
        let o = scgan(&full, tmp.path());
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    };
    step(&["synth"]);
    step(&["train"]);
    assert!(run.join("train/checkpoints/epoch_0002/checkpoint.json").is_file());
    let metrics = fs::read_to_string(run.join("train/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,step,"));

    // resuming a finished run changes nothing
    step(&["train", "--resume"]);
    assert_eq!(fs::read_to_string(run.join("train/metrics.csv")).unwrap(), metrics);

    step(&["extract"]);
    assert!(run.join("extract/0000_noise.raw").is_file());
    assert!(run.join("extract/0000_estimate.png").is_file());
    step(&["pairs"]);
    assert!(run.join("pairs/manifest.json").is_file());
    step(&["denoise-train"]);
    assert!(run.join("denoiser/denoiser.json").is_file());
    let input = run.join("corpus/noisy");
    step(&["denoise", "--input", input.to_str().unwrap()]);
    assert!(run.join("denoised/0000.png").is_file());
    step(&["eval"]);
    let ev: Value = serde_json::from_str(&fs::read_to_string(run.join("eval/eval.json")).unwrap()).unwrap();
    assert!(ev["generator"]["stats"]["std"].is_number());
    assert!(ev["denoiser_psnr_gain_db"].is_number());
    step(&["report"]);
    assert!(run.join("report/index.html").is_file());
    for sub in [
        "corpus", "train", "extract", "pairs", "denoiser", "denoised", "eval", "report",
    ] {
        assert!(run.join(sub).join("run.json").is_file(), "{sub}");
    }
}

#[test]
fn ablate_then_report_covers_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(
        tmp.path(),
        json!({ "schedule": { "ep1": 1, "ep2": 1, "ep3": 1, "batch_size": 2 } }),
    );
    let c = cfg.to_str().unwrap();
    assert!(scgan(&["synth", "--config", c], tmp.path()).status.success());
    let o = scgan(&["ablate", "--config", c], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("run");
    let summary: Value = serde_json::from_str(&fs::read_to_string(run.join("ablate/summary.json")).unwrap()).unwrap();
    for v in ["net1", "net2", "net3"] {
        assert!(summary[v]["extracted_std"].is_number(), "{v}");
    }
    assert!(scgan(&["report", "--config", c], tmp.path()).status.success());
    for v in ["net1", "net2", "net3"] {
        assert!(run.join(format!("report/grid_{v}.png")).is_file(), "{v}");
    }
}
