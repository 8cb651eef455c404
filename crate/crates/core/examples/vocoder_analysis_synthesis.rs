//! Vocoder round trip (VED) of a male and a female synthetic talker.

use parasynth::corpus::save_wav;
use parasynth::metrics::{f0_metrics, mcd};
use parasynth::signals::{vowel_sequence, SpeakerProfile};
use parasynth::vocoder::{analyze, encode_decode, VocoderConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = VocoderConfig::default();
    let out = std::env::temp_dir();
    for (seed, sp) in [(1, SpeakerProfile::female()), (2, SpeakerProfile::male())] {
        let x = vowel_sequence(&mut ChaCha8Rng::seed_from_u64(seed), &sp, 1.5);
        let track = analyze(&x, &cfg)?;
        println!(
            "{}: {} frames, {:.0}% voiced, mcep {:?}, bap {:?}",
            sp.name,
            track.n_frames(),
            100.0 * track.vuv.iter().filter(|&&v| v).count() as f64 / track.n_frames() as f64,
            track.mcep.dim(),
            track.bap.dim()
        );

        let y = encode_decode(&x, &cfg, seed)?;
        let again = analyze(&y, &cfg)?;
        let hop = cfg.frame.hop_secs();
        let f0 = f0_metrics(&track.f0_track(hop), &again.f0_track(hop))?;
        println!(
            "  resynthesized: MCD {:.2} dB, F0 RMSE {:.2} Hz, CORR {:.3}, VUV {:.1}%",
            mcd(track.mcep.view(), again.mcep.view())?,
            f0.rmse_hz,
            f0.corr,
            f0.vuv_pct
        );
        let path = out.join(format!("ved_{}.wav", sp.name));
        save_wav(&path, &y.limit_peak(0.99))?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
