use std::path::Path;

use parasynth::cli::run;
use parasynth::metrics::EvalReport;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) {
    let mut argv = vec!["parasynth"];
    argv.extend_from_slice(args);
    assert_eq!(run(argv), 0, "parasynth {}", args.join(" "));
}

fn code(args: &[&str]) -> i32 {
    let mut argv = vec!["parasynth"];
    argv.extend_from_slice(args);
    run(argv)
}

fn small_corpus(root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    ok(&["mix", "--synth-desk", s(&root.join("corpus")), "--desk-utterances", "7", "--splits", "10,2,2", "--out", s(&root.join("m0.jsonl")), "--jobs", "1"]);
    (root.join("corpus/clean"), root.join("corpus/noise"))
}

#[test]
fn mix_is_deterministic_and_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noise) = small_corpus(dir.path());
    for name in ["a.jsonl", "b.jsonl"] {
        ok(&["mix", "--clean-dir", s(&clean), "--noise-dir", s(&noise), "--seed", "7", "--splits", "10,2,2", "--out", s(&dir.path().join(name))]);
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 14);
    let prov = std::fs::read_to_string(dir.path().join("a.jsonl.provenance.json")).unwrap();
    assert!(prov.contains("\"seed\": 7"));
}

#[test]
fn clean_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let reports = dir.path().join("reports");
    ok(&["eval", "--manifest", s(&dir.path().join("m0.jsonl")), "--system", "clean", "--out", s(&reports), "--jobs", "1"]);
    let r = EvalReport::from_json(&std::fs::read_to_string(reports.join("clean.json")).unwrap()).unwrap();
    assert_eq!(r.evaluated, 2);
    assert_eq!(r.mean.mcd_db, Some(0.0));
    assert_eq!(r.mean.vuv_pct, Some(0.0));
    assert!((r.mean.stoi.unwrap() - 1.0).abs() < 1e-6);
    ok(&["report", s(&reports.join("clean.json")), "--by-speaker", "--out", s(&dir.path().join("table.txt"))]);
    assert!(std::fs::read_to_string(dir.path().join("table.txt")).unwrap().starts_with("system"));
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&["enhance", "--bogus"]), 2);
    assert_eq!(code(&["eval", "--manifest", s(&d.join("missing.jsonl")), "--system", "clean"]), 3);

    small_corpus(d);
    let m = d.join("m0.jsonl");
    let store = d.join("store");
    ok(&["prepare", "--manifest", s(&m), "--store", s(&store), "--jobs", "1"]);
    let ckpt = d.join("irm.pvc");
    ok(&[
        "train", "--manifest", s(&m), "--store", s(&store), "--system", "dnn_irm", "--hidden-width", "8",
        "--hidden-layers", "1", "--max-epochs", "1", "--out", s(&ckpt), "--jobs", "1",
    ]);
    // wrong model kind, and an IRM checkpoint offered as a PR model
    let out = d.join("o");
    let base = ["enhance", "--manifest", s(&m), "--store", s(&store), "--checkpoint", s(&ckpt), "--out", s(&out)];
    let with = |extra: &[&'static str]| -> i32 {
        let mut a: Vec<&str> = base.to_vec();
        a.extend_from_slice(extra);
        code(&a)
    };
    assert_eq!(with(&["--system", "dnn_irm", "--kind", "recurrent"]), 4);
    assert_eq!(with(&["--system", "pr"]), 4);
    assert_eq!(with(&["--system", "dnn_irm", "--kind", "feedforward"]), 0);
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 3); // 2 wavs + provenance

    // a truncated manifest line is a data error
    std::fs::write(d.join("bad.jsonl"), "{\"utt_id\": 3\n").unwrap();
    assert_eq!(code(&["prepare", "--manifest", s(&d.join("bad.jsonl")), "--store", s(&store)]), 5);

    // a vanished clean file is a partial prepare failure
    let entries = std::fs::read_to_string(&m).unwrap();
    let first: serde_json::Value = serde_json::from_str(entries.lines().next().unwrap()).unwrap();
    std::fs::remove_file(first["clean_path"].as_str().unwrap()).unwrap();
    assert_eq!(code(&["prepare", "--manifest", s(&m), "--store", s(&d.join("store2")), "--jobs", "1"]), 8);
}

#[test]
fn resynth_single_file() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let input = dir.path().join("corpus/clean/male/0001.wav");
    let out = dir.path().join("ved.wav");
    ok(&["resynth", "--input", s(&input), "--output", s(&out)]);
    let a = parasynth::corpus::load_wav(&input).unwrap();
    let b = parasynth::corpus::load_wav(&out).unwrap();
    assert_eq!(a.len(), b.len());
}

#[test]
fn store_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let store = dir.path().join("envstore");
    // only this test touches the variable
    std::env::set_var(parasynth::cli::STORE_ENV, &store);
    let c = code(&["prepare", "--manifest", s(&dir.path().join("m0.jsonl")), "--jobs", "1"]);
    std::env::remove_var(parasynth::cli::STORE_ENV);
    assert_eq!(c, 0);
    assert!(store.join("store.json").is_file());
}
