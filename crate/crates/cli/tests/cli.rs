use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SCENES: [&str; 4] = ["furnished-room", "lounge-room", "study-room", "box-room"];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spaceblender"))
}

fn render_inputs(dir: &Path) -> Vec<PathBuf> {
    SCENES
        .iter()
        .map(|id| {
            let path = dir.join(format!("{id}.png"));
            let out = bin()
                .args(["scene", "--id", id, "--size", "512", "--out"])
                .arg(&path)
                .output()
                .unwrap();
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            path
        })
        .collect()
}

fn run(images: &[PathBuf], out: &Path, extra: &[&str]) -> Output {
    let list = images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
    bin()
        .args(["run", "--images", &list, "--seed", "7", "--out"])
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let images = render_inputs(dir.path());
    let first = dir.path().join("scene.ply");
    let out = run(&images, &first, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(first.exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scene.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["intermediate_submeshes"], 0);
    assert!(dir.path().join("scene.trajectory.json").exists());

    let second = dir.path().join("again.ply");
    assert!(run(&images, &second, &[]).status.success());
    assert!(std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap(), "PLY output differs between runs");
}

#[test]
fn remote_without_endpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.png");
    let out = run(&[img], &dir.path().join("x.ply"), &["--backend", "remote"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("endpoint"));
}

#[test]
fn bad_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.png");
    let out = run(std::slice::from_ref(&img), &dir.path().join("x.ply"), &["--weights", "0.6,0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[img], &dir.path().join("x.ply"), &["--diameter=-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_image_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[dir.path().join("nope.png")], &dir.path().join("x.ply"), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scene_command_writes_png_and_rejects_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("box.png");
    let ok = bin().args(["scene", "--id", "box-room", "--size", "64", "--out"]).arg(&path).output().unwrap();
    assert!(ok.status.success());
    assert_eq!(&std::fs::read(&path).unwrap()[1..4], b"PNG");
    let bad = bin().args(["scene", "--id", "castle", "--out"]).arg(&path).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_values_apply() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "input_paths = [\"a.png\"]\nseed = 4\nbackend = \"remote\"\n").unwrap();
    // Remote mode with no endpoint: the config was read and validated.
    let out = bin().args(["run", "--config"]).arg(dir.path().join("run.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "seeed = 4\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(dir.path().join("bad.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
