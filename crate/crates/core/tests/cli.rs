use std::path::Path;
use std::process::Command;

use wann::store::load_dataset;

fn wann(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wann")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = wann(args);
    assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn end_to_end_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth", "--dim", "4", "--classes", "3", "--per-class", "40", "--mean-scale", "3", "--seed", "1",
        "--out", &p(d, "train.evec"), "--test-out", &p(d, "test.evec"), "--test-per-class", "10",
    ]);
    assert_eq!(load_dataset(p(d, "train.evec")).unwrap().len(), 120);

    ok(&[
        "noise", "--input", &p(d, "train.evec"), "--out", &p(d, "noisy.evec"), "--noise", "asymmetric",
        "--rate", "0.5", "--flip-map", "circular", "--mask-out", &p(d, "mask.csv"),
    ]);
    let mask = std::fs::read_to_string(p(d, "mask.csv")).unwrap();
    assert_eq!(mask.lines().next(), Some("id,clean,noisy,flipped"));
    assert_eq!(mask.lines().count(), 121);

    let rel = ok(&["reliability", "--train", &p(d, "noisy.evec"), "--kmin", "3", "--kmax", "11"]);
    assert_eq!(rel.lines().next(), Some("id,eta,k_star"));
    assert_eq!(rel.lines().count(), 121);

    let preds = ok(&[
        "classify", "--train", &p(d, "noisy.evec"), "--test", &p(d, "test.evec"), "--method", "wann", "--kmin",
        "3", "--kmax", "11", "--json", &p(d, "preds.json"),
    ]);
    assert_eq!(preds.lines().next(), Some("query_index,label,k_used"));
    assert_eq!(preds.lines().count(), 31);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p(d, "preds.json")).unwrap()).unwrap();
    assert!(json.is_array() || json.is_object());

    ok(&[
        "dimred", "--train", &p(d, "noisy.evec"), "--reduction", "flda", "--kmin", "3", "--kmax", "11", "--out",
        &p(d, "proj.eprj"), "--train-out", &p(d, "train2.evec"), "--test", &p(d, "test.evec"), "--test-out",
        &p(d, "test2.evec"),
    ]);
    assert_eq!(load_dataset(p(d, "test2.evec")).unwrap().dim(), 2);

    let nb = ok(&["neighbors", "--train", &p(d, "train.evec"), "--test", &p(d, "test.evec"), "--k", "2"]);
    assert_eq!(nb.lines().count(), 61);

    let report = ok(&[
        "experiment", "--train", &p(d, "train.evec"), "--test", &p(d, "test.evec"), "--method", "knn:5", "--noise",
        "symmetric", "--rate", "0.2", "--seed", "0,1", "--reduction", "pca:2",
    ]);
    assert!(report.starts_with("method,noise,rate,reduction,seed,accuracy"));
    assert_eq!(report.lines().filter(|l| l.starts_with("knn:5,symmetric,0.2,pca:2,")).count(), 3);

    let jsonl = ok(&[
        "experiment", "--train", &p(d, "train.evec"), "--test", &p(d, "test.evec"), "--method", "ann", "--kmin", "3",
        "--kmax", "11", "--format", "jsonl",
    ]);
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["method"], "ann");
}

#[test]
fn ingest_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("x.csv"), "id,label,x0,x1\n5,0,1.0,2.0\n9,1,3.0,4.0\n").unwrap();
    ok(&["ingest", "--csv", &p(d, "x.csv"), "--out", &p(d, "x.evec"), "--class-names", "a,b"]);
    let ds = load_dataset(p(d, "x.evec")).unwrap();
    assert_eq!(ds.ids(), &[5, 9]);
    assert_eq!(ds.row(1), &[3.0, 4.0]);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = wann(&["reliability", "--train", &p(dir.path(), "missing.evec")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.evec"));
    let out = wann(&["classify", "--train", "a", "--test", "b", "--method", "knn"]);
    assert!(!out.status.success());
    let out = wann(&["reliability", "--train", "a", "--kmin", "4"]);
    assert!(!out.status.success());
}
