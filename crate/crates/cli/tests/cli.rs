use std::path::Path;
use std::process::{Command, Output};

use trajmap_core::GraphDocument;

fn trajmap(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_trajmap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "trajmap {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_all_then_abstract_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model.bvae");
    let (out1, out2) = (dir.path().join("out1"), dir.path().join("out2"));

    trajmap(&["synth", "--out", p(&data), "--episodes", "2", "--frames", "120", "--side", "8", "--seed", "3"]);
    let manifest = data.join("manifest.json");
    assert!(manifest.exists());

    let all = trajmap(&[
        "all", "--manifest", p(&manifest), "--checkpoint", p(&model), "--out", p(&out1),
        "--epochs", "3", "--layout-iterations", "50", "--seed", "9", "--application", "moving-dot",
    ]);
    assert!(String::from_utf8_lossy(&all.stdout).contains("nodes"));
    assert!(model.exists());
    let doc = GraphDocument::load(&out1.join("graph.json")).unwrap();
    doc.validate().unwrap();
    assert_eq!(doc.application, "moving-dot");
    assert_eq!(doc.trajectories.len(), 2);

    // same checkpoint, same seed and flags: byte-identical export
    trajmap(&[
        "abstract", "--manifest", p(&manifest), "--checkpoint", p(&model), "--out", p(&out2),
        "--layout-iterations", "50", "--seed", "9", "--application", "moving-dot",
    ]);
    assert_eq!(
        std::fs::read(out1.join("graph.json")).unwrap(),
        std::fs::read(out2.join("graph.json")).unwrap()
    );
}

#[test]
fn train_writes_a_checkpoint_and_flags_reach_clustering() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("m.bvae");
    trajmap(&["synth", "--out", p(&data), "--frames", "60", "--side", "8"]);
    let manifest = data.join("manifest.json");
    trajmap(&["train", "--manifest", p(&manifest), "--checkpoint", p(&model), "--epochs", "2"]);
    assert!(model.exists());

    let out = dir.path().join("out");
    let run = trajmap(&[
        "abstract", "--manifest", p(&manifest), "--checkpoint", p(&model), "--out", p(&out),
        "--min-pts", "100000", "--eps-spatial", "0.1", "--eps-temporal", "2",
    ]);
    assert!(String::from_utf8_lossy(&run.stderr).contains("noise"));
    let doc = GraphDocument::load(&out.join("graph.json")).unwrap();
    assert!(doc.nodes.is_empty());
    assert!(doc.trajectories["ep-0"].node_ids.is_empty());
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_trajmap"))
        .args(["abstract", "--manifest", "missing.json", "--checkpoint", "m.bvae", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("load"));
}
