//! End-to-end runs of the built binary over a tiny generated dataset.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cubetrack"))
}

fn run_ok(args: &[&str]) -> String {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn full_pipeline_over_generated_scene() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let disc = root.path().join("disc");
    let data_s = data.to_str().unwrap();

    run_ok(&[
        "gen",
        "--out",
        data_s,
        "--scenes",
        "1",
        "--seed",
        "9",
        "--frames",
        "8",
        "--objects",
        "1",
    ]);
    let scene = data.join("scene_0000");
    assert!(scene.join("camera.json").exists());
    assert!(scene.join("gt.jsonl").exists());
    assert!(scene.join("meta.json").exists());
    assert!(scene.join("frame_0007.png").exists());

    run_ok(&[
        "discover",
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        disc.to_str().unwrap(),
    ]);
    assert!(disc.join("tracks.jsonl").exists());
    assert!(disc.join("report.json").exists());

    let eval_json = root.path().join("eval.json");
    run_ok(&[
        "eval",
        "--pred",
        disc.join("tracks.jsonl").to_str().unwrap(),
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        eval_json.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval_json).unwrap()).unwrap();
    assert!(report["mask_mean_iou"].as_f64().unwrap() > 0.5);

    let csv = root.path().join("surprise.csv");
    let png = root.path().join("surprise.png");
    run_ok(&[
        "surprise",
        "--tracks",
        disc.join("tracks.jsonl").to_str().unwrap(),
        "--scene",
        scene.to_str().unwrap(),
        "--out-csv",
        csv.to_str().unwrap(),
        "--out-png",
        png.to_str().unwrap(),
    ]);
    assert!(csv.exists() && png.exists());

    let loss_json = root.path().join("loss.json");
    run_ok(&[
        "eval-loss",
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        loss_json.to_str().unwrap(),
    ]);
    let loss: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&loss_json).unwrap()).unwrap();
    assert!(loss["image_loss"].as_f64().unwrap().is_finite());

    let segs = root.path().join("segs");
    run_ok(&[
        "segment",
        "--image",
        scene.join("frame_0000.png").to_str().unwrap(),
        "--out",
        segs.to_str().unwrap(),
    ]);
    assert!(segs.join("manifest.json").exists());
    assert!(segs.join("slot_0.png").exists());
}

#[test]
fn pair_experiment_oracle() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("pairs");
    run_ok(&[
        "gen",
        "--out",
        data.to_str().unwrap(),
        "--scenes",
        "2",
        "--seed",
        "3",
        "--frames",
        "12",
        "--preset",
        "pair-disappear",
    ]);
    let out = root.path().join("pair.json");
    let stdout = run_ok(&[
        "pair-exp",
        "--dataset",
        data.to_str().unwrap(),
        "--oracle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        stdout.contains("relative accuracy 1.000"),
        "stdout: {stdout}"
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["relative_accuracy"].as_f64().unwrap(), 1.0);
}

#[test]
fn exit_codes_distinguish_contract_and_io_failures() {
    // Missing scene directory: I/O error, exit code 1.
    let status = bin()
        .args([
            "discover",
            "--scene",
            "/nonexistent/scene",
            "--out",
            "/tmp/x",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // Invalid configuration: contract violation, exit code 2.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[segmenter]\nkind = \"external\"\n").unwrap();
    let status = bin()
        .args([
            "discover",
            "--scene",
            dir.path().to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn default_config_template_round_trips() {
    let stdout = run_ok(&["--emit-default-config"]);
    assert!(stdout.contains("[segmenter]"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    std::fs::write(&path, &stdout).unwrap();
    // The emitted template must be loadable again.
    let data = dir.path().join("d");
    run_ok(&[
        "gen",
        "--out",
        data.to_str().unwrap(),
        "--scenes",
        "1",
        "--frames",
        "4",
        "--objects",
        "1",
    ]);
    run_ok(&[
        "discover",
        "--scene",
        data.join("scene_0000").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--config",
        path.to_str().unwrap(),
    ]);
}
