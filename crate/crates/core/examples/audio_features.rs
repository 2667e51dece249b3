//! Audio skills without a microphone: synthesize a tone, chunk it, extract
//! MFCC and prosody features, classify sentiment with the bundled model and
//! tokenize a transcript.
//!
//! ```text
//! cargo run --example audio_features
//! ```

use socialbot::audio::dsp::{SAMPLE_RATE, WINDOW};
use socialbot::audio::synth::{sine, white_noise};
use socialbot::audio::{bundled_model, chunk_signal, extract_features, tokenize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = bundled_model();
    for (what, x) in [
        ("220 Hz tone", sine(220.0, 0.4, WINDOW, SAMPLE_RATE)),
        ("330 Hz tone", sine(330.0, 0.8, WINDOW, SAMPLE_RATE)),
        ("white noise", white_noise(0.3, WINDOW, 7)),
    ] {
        let f = extract_features(&x, SAMPLE_RATE)?;
        let p = model.predict(&f.to_array())?;
        println!(
            "{what:<12} f0={:<10} rms={:.3} zcr={:.3} c0={:+.2} c1={:+.2} -> {} ({:.2})",
            f.f0_hz.map_or("unvoiced".to_string(), |h| format!("{h:.1} Hz")),
            f.energy_rms,
            f.zcr,
            f.mfcc[0],
            f.mfcc[1],
            p.label,
            p.votes[p.index],
        );
    }

    let second: Vec<i16> = sine(440.0, 0.5, SAMPLE_RATE as usize, SAMPLE_RATE)
        .iter()
        .map(|v| (v * i16::MAX as f64) as i16)
        .collect();
    let chunks = chunk_signal(&second, SAMPLE_RATE, WINDOW, 0);
    println!("one second of audio -> {} chunks of {WINDOW} samples", chunks.len());

    println!("tokens: {:?}", tokenize("سلام، حال‌تان چطور است؟ hello robot!"));
    Ok(())
}
