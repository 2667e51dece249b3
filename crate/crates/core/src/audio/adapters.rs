//! Speech-to-text, text-to-speech and dialogue seams with deterministic
//! stub backends.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::chunk::{chunk_signal, AudioChunk, DEFAULT_CHUNK};
use super::dsp::SAMPLE_RATE;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter unavailable: {0}")]
    Unavailable(String),
    #[error("bad audio: {0}")]
    BadAudio(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub text: String,
    /// False when the backend could not recognize the audio.
    pub confident: bool,
}

pub trait SpeechToText: Send + Sync {
    fn transcribe(&self, pcm: &[i16], sample_rate: u32) -> Result<Transcript, AdapterError>;
}

pub trait TextToSpeech: Send + Sync {
    /// Mono PCM at [`SAMPLE_RATE`].
    fn synthesize(&self, text: &str) -> Result<Vec<i16>, AdapterError>;

    fn synthesize_chunks(&self, text: &str) -> Result<Vec<AudioChunk>, AdapterError> {
        Ok(chunk_signal(&self.synthesize(text)?, SAMPLE_RATE, DEFAULT_CHUNK, 0))
    }
}

pub trait Dialogue: Send + Sync {
    fn respond(&self, utterance: &str) -> Result<String, AdapterError>;
}

/// Backend slot with nothing configured.
#[derive(Debug, Clone)]
pub struct Unconfigured(pub &'static str);

impl SpeechToText for Unconfigured {
    fn transcribe(&self, _: &[i16], _: u32) -> Result<Transcript, AdapterError> {
        Err(AdapterError::Unavailable(self.0.to_string()))
    }
}

impl TextToSpeech for Unconfigured {
    fn synthesize(&self, _: &str) -> Result<Vec<i16>, AdapterError> {
        Err(AdapterError::Unavailable(self.0.to_string()))
    }
}

impl Dialogue for Unconfigured {
    fn respond(&self, _: &str) -> Result<String, AdapterError> {
        Err(AdapterError::Unavailable(self.0.to_string()))
    }
}

fn pcm_digest(pcm: &[i16]) -> [u8; 32] {
    let mut h = Sha256::new();
    for s in pcm {
        h.update(s.to_le_bytes());
    }
    h.finalize().into()
}

#[derive(Debug, Deserialize)]
struct UtteranceIndex {
    utterance: Vec<UtteranceEntry>,
}

#[derive(Debug, Deserialize)]
struct UtteranceEntry {
    id: String,
    file: PathBuf,
    text: String,
}

/// Recognizes only known fixture recordings, matched by exact content.
#[derive(Debug, Default, Clone)]
pub struct FixtureStt {
    by_digest: HashMap<[u8; 32], (String, String)>,
}

impl FixtureStt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, pcm: &[i16], text: &str) {
        self.by_digest.insert(pcm_digest(pcm), (id.to_string(), text.to_string()));
    }

    /// Loads `transcripts.toml` (`[[utterance]] id, file, text`) and the
    /// WAV files it names from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, AdapterError> {
        let dir = dir.as_ref();
        let index_path = dir.join("transcripts.toml");
        let text = std::fs::read_to_string(&index_path)
            .map_err(|e| AdapterError::Unavailable(format!("{}: {e}", index_path.display())))?;
        let index: UtteranceIndex =
            toml::from_str(&text).map_err(|e| AdapterError::Unavailable(format!("{}: {e}", index_path.display())))?;
        let mut stt = FixtureStt::new();
        for u in index.utterance {
            let (pcm, _) = read_wav(dir.join(&u.file))?;
            stt.insert(&u.id, &pcm, &u.text);
        }
        Ok(stt)
    }

    /// Id of the fixture matching `pcm`.
    pub fn identify(&self, pcm: &[i16]) -> Option<&str> {
        self.by_digest.get(&pcm_digest(pcm)).map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }
}

impl SpeechToText for FixtureStt {
    fn transcribe(&self, pcm: &[i16], _sample_rate: u32) -> Result<Transcript, AdapterError> {
        Ok(match self.by_digest.get(&pcm_digest(pcm)) {
            Some((_, text)) => Transcript { text: text.clone(), confident: true },
            None => Transcript { text: String::new(), confident: false },
        })
    }
}

/// Speaks each word as a short tone whose pitch comes from a hash of the
/// word; words are separated by silence.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToneTts;

const TONE_MS: usize = 120;
const GAP_MS: usize = 30;

impl TextToSpeech for ToneTts {
    fn synthesize(&self, text: &str) -> Result<Vec<i16>, AdapterError> {
        let per_ms = SAMPLE_RATE as usize / 1000;
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let d = Sha256::digest(word.as_bytes());
            let hz = 180.0 + 2.0 * d[0] as f64;
            let amp = 0.3 + 0.2 * d[1] as f64 / 255.0;
            let n = TONE_MS * per_ms;
            for i in 0..n {
                let ramp = (i.min(n - 1 - i) as f64 / (5 * per_ms) as f64).min(1.0);
                let v = amp * ramp * (2.0 * PI * hz * i as f64 / SAMPLE_RATE as f64).sin();
                out.push((v * 32767.0).round() as i16);
            }
            out.extend(std::iter::repeat_n(0, GAP_MS * per_ms));
        }
        Ok(out)
    }
}

/// Repeats the utterance back.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoDialogue;

impl Dialogue for EchoDialogue {
    fn respond(&self, utterance: &str) -> Result<String, AdapterError> {
        Ok(utterance.trim().to_string())
    }
}

/// Reads a 16-bit mono WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<i16>, u32), AdapterError> {
    let path = path.as_ref();
    let unavailable = |e: hound::Error| AdapterError::Unavailable(format!("{}: {e}", path.display()));
    let reader = hound::WavReader::open(path).map_err(unavailable)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(AdapterError::BadAudio(format!("{}: expected 16-bit mono PCM", path.display())));
    }
    let samples = reader.into_samples::<i16>().collect::<Result<Vec<_>, _>>().map_err(unavailable)?;
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: impl AsRef<Path>, pcm: &[i16], sample_rate: u32) -> Result<(), AdapterError> {
    let path = path.as_ref();
    let fail = |e: hound::Error| AdapterError::Unavailable(format!("{}: {e}", path.display()));
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec).map_err(fail)?;
    for &s in pcm {
        w.write_sample(s).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}

/// Directory holding the bundled STT fixtures.
pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/audio/stt")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_lookup() {
        let stt = FixtureStt::load_dir(fixture_dir()).unwrap();
        let (pcm, rate) = read_wav(fixture_dir().join("u1.wav")).unwrap();
        assert_eq!(rate, SAMPLE_RATE);
        let t = stt.transcribe(&pcm, rate).unwrap();
        assert!(t.confident && !t.text.is_empty());
        assert_eq!(stt.identify(&pcm), Some("u1"));
        let unknown = stt.transcribe(&[1, 2, 3], rate).unwrap();
        assert_eq!(unknown, Transcript { text: String::new(), confident: false });
    }

    #[test]
    fn tts_is_deterministic() {
        let a = ToneTts.synthesize("a").unwrap();
        assert_eq!(a, ToneTts.synthesize("a").unwrap());
        assert_ne!(a, ToneTts.synthesize("b").unwrap());
        let chunks = ToneTts.synthesize_chunks("a b").unwrap();
        assert!(chunks.iter().all(|c| c.samples.len() == DEFAULT_CHUNK));
    }

    #[test]
    fn stubs() {
        assert_eq!(EchoDialogue.respond(" salam ").unwrap(), "salam");
        assert!(matches!(Unconfigured("stt").transcribe(&[], 16_000), Err(AdapterError::Unavailable(_))));
        assert!(FixtureStt::load_dir("/nonexistent").is_err());
    }
}
