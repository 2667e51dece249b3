//! Regenerates the bundled audio assets: the 30-row sentiment training
//! set, the 10-tree model trained on it, the labels that model assigns to
//! its own training rows, and the speech-to-text fixture recordings.
//!
//! ```text
//! cargo run --example train_sentiment [-- <assets/audio dir>]
//! ```

use std::path::PathBuf;

use socialbot::audio::adapters::{write_wav, TextToSpeech, ToneTts};
use socialbot::audio::dsp::SAMPLE_RATE;
use socialbot::audio::synth::{fixtures_to_csv, sentiment_fixtures};
use socialbot::audio::{train_forest, TrainConfig, LABELS};

const UTTERANCES: [(&str, &str); 3] = [("u1", "سلام ربات"), ("u2", "حالت چطوره؟"), ("u3", "hello robot")];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/audio"));
    std::fs::create_dir_all(dir.join("stt"))?;

    let samples = sentiment_fixtures();
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let y: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let model = train_forest(&x, &y, &LABELS, &TrainConfig::default())?;
    let predicted: Vec<String> = x.iter().map(|r| model.predict(r).map(|p| p.label)).collect::<Result<_, _>>()?;
    let agree = predicted.iter().zip(&y).filter(|(p, &l)| p.as_str() == LABELS[l]).count();

    std::fs::write(dir.join("sentiment_train.csv"), fixtures_to_csv(&samples))?;
    std::fs::write(dir.join("sentiment.model"), model.to_text())?;
    std::fs::write(dir.join("sentiment_expected.txt"), predicted.join("\n") + "\n")?;
    println!("trained {} trees on {} rows; {agree}/{} match the generating label", model.trees.len(), x.len(), x.len());

    let mut index = String::new();
    for (id, text) in UTTERANCES {
        let pcm = ToneTts.synthesize(text)?;
        write_wav(dir.join("stt").join(format!("{id}.wav")), &pcm, SAMPLE_RATE)?;
        index.push_str(&format!("[[utterance]]\nid = \"{id}\"\nfile = \"{id}.wav\"\ntext = \"{text}\"\n\n"));
    }
    std::fs::write(dir.join("stt/transcripts.toml"), index)?;
    println!("wrote {} speech fixtures to {}", UTTERANCES.len(), dir.join("stt").display());
    Ok(())
}
