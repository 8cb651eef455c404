//! Write a small synthetic corpus, build a seeded manifest and render one
//! mixture.

use parasynth::corpus::{build_manifest, render_mixture, write_desk_corpus, DeskCorpusConfig, Split, SplitCounts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("parasynth-mix-example");
    let cfg = DeskCorpusConfig {
        utterances_per_speaker: 7,
        ..DeskCorpusConfig::default()
    };
    let corpus = write_desk_corpus(&root, &cfg)?;
    let counts: SplitCounts = "10,2,2".parse()?;
    let manifest = build_manifest(&corpus.clean_dir, &corpus.noise_dir, 7, counts)?;
    let path = root.join("manifest.jsonl");
    manifest.save(&path)?;
    println!("{} entries -> {}", manifest.entries.len(), path.display());

    for split in Split::ALL {
        let ids: Vec<&str> = manifest.split(split).map(|e| e.utt_id.as_str()).collect();
        println!("{split:>5}: {}", ids.join(" "));
    }
    let e = manifest.split(Split::Test).next().ok_or("empty test split")?;
    let (clean, m) = render_mixture(e)?;
    println!(
        "{}: noise {} ch {} @ {}, SNR {:.2} dB (clean rms {:.3}, noisy rms {:.3})",
        e.utt_id,
        e.noise_path.display(),
        e.noise_channel,
        e.noise_offset,
        m.snr_db,
        clean.rms(),
        m.noisy.rms()
    );
    Ok(())
}
