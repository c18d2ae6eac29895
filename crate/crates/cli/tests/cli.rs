//! End-to-end checks of the `ritc` binary: exit codes, the full offline
//! pipeline, and agreement between the shipped config files and the
//! benchmark definitions.

use std::path::Path;
use std::process::{Command, Output};

use ritc_core::benchmark;
use ritc_core::training::TrainConfig;

fn ritc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ritc"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

#[test]
fn help_exits_zero() {
    let out = ritc(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["corpus", "dataset", "train", "eval", "viz"] {
        assert!(text.contains(sub), "help should mention `{sub}`");
    }
}

#[test]
fn unknown_subcommand_exits_two_with_one_line() {
    let out = ritc(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "diagnostic should be one line: {err}");
    assert!(err.contains("frobnicate") || err.contains("unrecognized"));
}

#[test]
fn invalid_flag_value_exits_two() {
    let out = ritc(&["dataset", "synth", "--out", "/tmp/x", "--classes", "banana"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one() {
    let out = ritc(&["corpus", "inspect", "--in", "/nonexistent/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn shipped_configs_match_benchmark_definitions() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let pretrain = TrainConfig::load(&root.join("configs/bench_pretrain.conf")).unwrap();
    assert_eq!(pretrain, benchmark::pretrain_config());
    let ritc_cfg = TrainConfig::load(&root.join("configs/bench_ritc.conf")).unwrap();
    assert_eq!(ritc_cfg, benchmark::ritc_config());
}

#[test]
fn external_backend_is_used_when_the_env_names_one() {
    let have_python = Command::new("python3")
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false);
    if !have_python {
        eprintln!("skipping: python3 not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let stub = dir.path().join("vqa_stub.py");
    std::fs::write(
        &stub,
        r#"import sys, json
for line in sys.stdin:
    json.loads(line)
    print(json.dumps({"answer": "stubbed thing"}), flush=True)
"#,
    )
    .unwrap();

    let synth = ritc(&[
        "dataset", "synth", "--out", dir.path().join("data").to_str().unwrap(), "--images",
        "2", "--classes", "2", "--seed", "1", "--size", "24",
    ]);
    assert!(synth.status.success());

    let out = Command::new(env!("CARGO_BIN_EXE_ritc"))
        .args([
            "corpus",
            "generate",
            "--images",
            dir.path().join("data").to_str().unwrap(),
            "--labels",
            dir.path().join("data/manifest.json").to_str().unwrap(),
            "--out",
            dir.path().join("corpus.jsonl").to_str().unwrap(),
        ])
        .env("RITC_VQA_CMD", format!("python3 {}", stub.display()))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let corpus = std::fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    assert!(corpus.contains("stubbed thing"));
    assert!(corpus.contains("external:python3"));
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let cfg_dir = dir.path();

    // Small configs so the smoke test stays fast.
    let pre_conf = cfg_dir.join("pre.conf");
    TrainConfig { lr: 0.05, epochs: 3, seed: 5, ..TrainConfig::default() }
        .save(&pre_conf)
        .unwrap();
    let ritc_conf = cfg_dir.join("ritc.conf");
    TrainConfig { lr: 0.01, epochs: 2, omega: 0.3, seed: 6, ..TrainConfig::default() }
        .save(&ritc_conf)
        .unwrap();

    let synth = ritc(&[
        "dataset", "synth", "--out", &d("data"), "--images", "8", "--classes", "2", "--seed",
        "3", "--size", "24",
    ]);
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    let stdout = String::from_utf8_lossy(&synth.stdout);
    assert!(stdout.contains("config fingerprint:"), "runs must print their fingerprint");

    let manifest = d("data/manifest.json");
    let corpus = ritc(&[
        "corpus", "generate", "--images", &d("data"), "--labels", &manifest, "--backend",
        "mock", "--out", &d("corpus.jsonl"),
    ]);
    assert!(corpus.status.success(), "{}", String::from_utf8_lossy(&corpus.stderr));

    let inspect = ritc(&["corpus", "inspect", "--in", &d("corpus.jsonl"), "--class", "ruby"]);
    assert!(inspect.status.success());
    assert!(String::from_utf8_lossy(&inspect.stdout).contains("a photo of"));

    let pretrain = ritc(&[
        "train", "pretrain", "--dataset", &manifest, "--config",
        pre_conf.to_str().unwrap(), "--out", &d("init.json"), "--channels", "8,12",
        "--strides", "1,2", "--metrics", &d("pre_metrics.jsonl"),
    ]);
    assert!(pretrain.status.success(), "{}", String::from_utf8_lossy(&pretrain.stderr));

    let train = ritc(&[
        "train", "ritc", "--dataset", &manifest, "--corpus", &d("corpus.jsonl"), "--config",
        ritc_conf.to_str().unwrap(), "--init", &d("init.json"), "--out", &d("model.json"),
        "--metrics", &d("metrics.jsonl"), "--encoder-dim", "16", "--encoder-grid", "4",
    ]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));

    let eval = ritc(&[
        "eval", "run", "--dataset", &manifest, "--checkpoint", &d("model.json"), "--report",
        &d("report.json"),
    ]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("mIoU"));

    // Overlay export for the first image.
    let viz = ritc(&[
        "viz", "overlay", "--image", &d("data/images/img_00000.png"), "--checkpoint",
        &d("model.json"), "--out", &d("viz"), "--dataset", &manifest, "--corpus",
        &d("corpus.jsonl"),
    ]);
    assert!(viz.status.success(), "{}", String::from_utf8_lossy(&viz.stderr));
    assert!(dir.path().join("viz").read_dir().unwrap().count() >= 2);

    // Metrics log exists and is one JSON object per line.
    let metrics = std::fs::read_to_string(d("metrics.jsonl")).unwrap();
    assert!(metrics.lines().count() >= 2);
    for line in metrics.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "step", "frc", "brc", "reg", "total", "lr"] {
            assert!(v.get(key).is_some(), "metrics record missing {key}");
        }
    }
}
