//! Drive the `parasynth` command line in-process: build a tiny corpus,
//! prepare it and score the noisy mixtures.

fn main() {
    let root = std::env::temp_dir().join("parasynth-cli-example");
    let r = |p: &str| root.join(p).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["mix".into(), "--synth-desk".into(), r("corpus"), "--desk-utterances".into(), "5".into(), "--splits".into(), "6,2,2".into(), "--out".into(), r("m.jsonl")],
        vec!["prepare".into(), "--manifest".into(), r("m.jsonl"), "--store".into(), r("store")],
        vec!["enhance".into(), "--system".into(), "owm".into(), "--manifest".into(), r("m.jsonl"), "--out".into(), r("enhanced")],
        vec!["eval".into(), "--manifest".into(), r("m.jsonl"), "--system".into(), "owm".into(), "--outputs".into(), r("enhanced"), "--out".into(), r("reports")],
        vec!["eval".into(), "--manifest".into(), r("m.jsonl"), "--system".into(), "noisy".into(), "--out".into(), r("reports")],
        vec!["report".into(), r("reports/owm.json"), r("reports/noisy.json")],
    ];
    for args in steps {
        println!("$ parasynth {}", args.join(" "));
        let code = parasynth::cli::run(std::iter::once("parasynth".to_string()).chain(args));
        if code != 0 {
            std::process::exit(code);
        }
    }
}
