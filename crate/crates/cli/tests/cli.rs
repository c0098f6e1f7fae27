use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 11

[synth]
size = 128
lesions = [1, 3]
vessels = 3

[cnn]
max_epochs = 1
single_precision = true

[forest]
trees = 10
grid = []
"#;

fn redlesion(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redlesion"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("the binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = redlesion(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    redlesion(dir, args).status.code().expect("exited normally")
}

fn workspace(images: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    ok(dir.path(), &["--config", "tiny.toml", "synth", "data", "-n", images]);
    dir
}

fn read(dir: &Path, p: &str) -> Vec<u8> {
    std::fs::read(dir.join(p)).unwrap_or_else(|e| panic!("{p}: {e}"))
}

#[test]
fn synth_fov_and_candidates() {
    let dir = workspace("2");
    let d = dir.path();
    let manifest = String::from_utf8(read(d, "data/manifest.toml")).unwrap();
    assert_eq!(manifest.matches("[[record]]").count(), 2);

    let out = ok(d, &["fov", "data/images/synth_0000.png", "-o", "fov.png"]);
    assert!(out.starts_with("fov_width = "), "{out}");
    let out = ok(
        d,
        &["detect-candidates", "data/images/synth_0000.png", "--fov", "data/annotations/synth_0000_fov.png", "-o", "cands.png", "--csv", "cands.csv"],
    );
    let n: usize = out.trim().trim_start_matches("candidates = ").parse().unwrap();
    assert!(n > 0);
    let csv = String::from_utf8(read(d, "cands.csv")).unwrap();
    assert_eq!(csv.lines().count(), n + 1);
}

#[test]
fn hand_crafted_flow_end_to_end() {
    let dir = workspace("4");
    let d = dir.path();
    let c = ["--config", "tiny.toml"];
    let run = |args: &[&str]| ok(d, &[&c[..], args].concat());

    run(&["features", "data/manifest.toml", "-o", "hcf.csv"]);
    let header = String::from_utf8(read(d, "hcf.csv")).unwrap();
    assert!(header.starts_with("image_id,candidate_id,label,m_R,"));
    let out = run(&["train-rf", "hcf.csv", "-o", "hcf.rf"]);
    assert!(out.contains("mode = \"hcf\""), "{out}");
    run(&["detect", "data/manifest.toml", "--forest", "hcf.rf", "--mode", "hcf", "-o", "det"]);
    let out = run(&["eval-lesion", "det", "--manifest", "data/manifest.toml", "--summary", "-o", "froc.csv", "--report", "lesion.toml"]);
    assert!(out.contains("cpm = ") && out.contains("sensitivity = "), "{out}");
    assert!(String::from_utf8(read(d, "froc.csv")).unwrap().starts_with("threshold,fpi,sensitivity\n"));
    assert_eq!(String::from_utf8(read(d, "lesion.toml")).unwrap(), out);

    // the synthetic set may hold only lesion images; image-level
    // evaluation then reports the single class as a numeric failure
    let labels = String::from_utf8(read(d, "data/manifest.toml")).unwrap();
    let ev = redlesion(d, &[&c[..], &["eval-image", "det", "--manifest", "data/manifest.toml", "--summary"]].concat());
    if labels.contains("label = 0") && labels.contains("label = 1") {
        assert!(ev.status.success());
        assert!(String::from_utf8(ev.stdout).unwrap().contains("auc = "));
    } else {
        assert_eq!(ev.status.code(), Some(3));
    }

    // reruns give identical outputs
    run(&["detect", "data/manifest.toml", "--forest", "hcf.rf", "--mode", "hcf", "-o", "det2"]);
    assert_eq!(read(d, "det/detections.csv"), read(d, "det2/detections.csv"));
    run(&["train-rf", "hcf.csv", "-o", "hcf2.rf"]);
    assert_eq!(read(d, "hcf.rf"), read(d, "hcf2.rf"));
}

#[test]
fn cnn_and_hybrid_flow() {
    let dir = workspace("3");
    let d = dir.path();
    let c = ["--config", "tiny.toml"];
    let run = |args: &[&str]| ok(d, &[&c[..], args].concat());

    let out = run(&["build-patches", "data/manifest.toml", "-o", "p.rlps"]);
    assert!(out.starts_with("patches = "), "{out}");
    let out = run(&["train-cnn", "p.rlps", "-o", "cnn.model", "--log", "epochs.csv"]);
    assert!(out.contains("epochs = 1"), "{out}");
    assert_eq!(String::from_utf8(read(d, "epochs.csv")).unwrap().lines().count(), 2);
    run(&["cnn-features", "data/manifest.toml", "--model", "cnn.model", "-o", "cnn.csv"]);
    run(&["features", "data/manifest.toml", "-o", "hcf.csv"]);

    // the hybrid vector needs the hand-crafted block first
    assert_eq!(code(d, &[&c[..], &["train-rf", "cnn.csv", "hcf.csv", "-o", "bad.rf"]].concat()), 2);
    let out = run(&["train-rf", "hcf.csv", "cnn.csv", "-o", "hybrid.rf"]);
    assert!(out.contains("mode = \"hybrid\""), "{out}");
    run(&["detect", "data/manifest.toml", "--forest", "hybrid.rf", "--cnn", "cnn.model", "--mode", "hybrid", "-o", "det"]);
    let rows = String::from_utf8(read(d, "det/detections.csv")).unwrap();
    let hcf_rows = String::from_utf8(read(d, "hcf.csv")).unwrap();
    assert_eq!(rows.lines().count(), hcf_rows.lines().count());

    // a hybrid forest cannot score the hand-crafted vector alone
    assert_eq!(code(d, &[&c[..], &["detect", "data/manifest.toml", "--forest", "hybrid.rf", "--mode", "hcf", "-o", "x"]].concat()), 2);
    assert_eq!(code(d, &[&c[..], &["detect", "data/manifest.toml", "--forest", "hybrid.rf", "--mode", "hybrid", "-o", "x"]].concat()), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["fov", "missing.png", "-o", "x.png"]), 2);
    assert_eq!(code(d, &["no-such-verb"]), 2);
    std::fs::write(d.join("bad.toml"), "fov_threshold = 7.0\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.toml", "synth", "s", "-n", "1"]), 2);
    assert_eq!(code(d, &["--threads", "0", "synth", "s", "-n", "1"]), 2);

    // one class only: the forest cannot be trained
    let names: Vec<String> = redlesion_core::HCF_NAMES.iter().map(|s| s.to_string()).collect();
    let mut csv = format!("image_id,candidate_id,label,{}\n", names.join(","));
    for k in 0..4 {
        let vals: Vec<String> = (0..names.len()).map(|j| ((j + k) as f64).to_string()).collect();
        csv.push_str(&format!("a,{k},0,{}\n", vals.join(",")));
    }
    std::fs::write(d.join("one.csv"), csv).unwrap();
    assert_eq!(code(d, &["train-rf", "one.csv", "-o", "f.rf"]), 3);
    std::fs::write(d.join("junk.csv"), "a,b\n1,2\n").unwrap();
    assert_eq!(code(d, &["train-rf", "junk.csv", "-o", "f.rf"]), 2);
}

#[test]
fn seeds_reproduce_datasets() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        std::fs::write(d.join("tiny.toml"), TINY).unwrap();
        ok(d, &["--config", "tiny.toml", "--seed", "99", "--threads", "1", "synth", "s", "-n", "2"]);
    }
    let files = ["s/manifest.toml", "s/images/synth_0001.png", "s/annotations/synth_0001_lesions.png"];
    for f in files {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    std::fs::write(c.path().join("tiny.toml"), TINY).unwrap();
    ok(c.path(), &["--config", "tiny.toml", "--seed", "100", "synth", "s", "-n", "2"]);
    assert_ne!(read(a.path(), files[1]), read(c.path(), files[1]));
}
