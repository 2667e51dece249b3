//! Builtin audio nodes: `audio_stream` publishes `audio_raw`,
//! `audio_features` turns each chunk into a 16-value f64 array on
//! `audio_features`, and `audio_sentiment` publishes a label on
//! `audio_sentiment`.

use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::time::{Duration, Instant};

use super::adapters::read_wav;
use super::chunk::{chunk_signal, AudioChunk, DEFAULT_CHUNK};
use super::dsp::{extract_features_with, pcm_to_f64, DEFAULT_VOICING, FEATURE_LEN, SAMPLE_RATE};
use super::model::{bundled_model, TreeEnsemble};
use super::synth::{sine, to_pcm};
use crate::bus::{BusError, Node, ParamError, Params, ParamsExt, Publisher};
use crate::codec::std_schemas as names;
use crate::codec::{FlatArray, FlatData, Header, NdArrayFrame, StringMsg, TypedMessage};
use crate::launch::{sleep_unless, LaunchError, NodeFactories, NodeTask, RunningNode};

pub const AUDIO_RAW: &str = "audio_raw";
pub const AUDIO_FEATURES: &str = "audio_features";
pub const AUDIO_SENTIMENT: &str = "audio_sentiment";

pub fn register(f: &mut NodeFactories) {
    f.insert("audio_stream", |p| AudioConfig::from_params(p).map(drop), start_stream);
    f.insert("audio_features", |p| voicing(p).and(queue(p)).map(drop), start_features);
    f.insert("audio_sentiment", |p| queue(p).and(model_param(p)).map(drop), start_sentiment);
}

fn bad(key: &str, reason: impl Into<String>) -> ParamError {
    ParamError { key: key.into(), reason: reason.into() }
}

fn queue(p: &Params) -> Result<usize, ParamError> {
    match p.u64_or("queue", 64)? {
        0 => Err(bad("queue", "must be at least 1")),
        n => Ok(n as usize),
    }
}

fn voicing(p: &Params) -> Result<f64, ParamError> {
    let v = p.f64_or("voicing", DEFAULT_VOICING)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(bad("voicing", "must be within [0, 1]"))
    }
}

fn model_param(p: &Params) -> Result<Option<PathBuf>, ParamError> {
    Ok(match p.str_or("model", "")? {
        "" => None,
        path => Some(PathBuf::from(path)),
    })
}

fn bus_err(node: &Node) -> impl Fn(BusError) -> LaunchError + '_ {
    move |source| LaunchError::Bus { entry: node.name().to_string(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AudioSource {
    Tone { hz: f64, amplitude: f64 },
    Silence,
    Wav(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioConfig {
    pub source: AudioSource,
    pub chunk: usize,
    /// Length of generated sources; 0 streams until stopped.
    pub duration_ms: u64,
    /// Pace chunks at their playback duration instead of as fast as possible.
    pub realtime: bool,
    pub start_delay: Duration,
}

impl AudioConfig {
    pub fn from_params(p: &Params) -> Result<Self, ParamError> {
        let source = match p.str_or("source", "tone")? {
            "tone" => AudioSource::Tone { hz: p.f64_or("tone_hz", 220.0)?, amplitude: p.f64_or("amplitude", 0.3)? },
            "silence" => AudioSource::Silence,
            "wav" => match p.str_or("path", "")? {
                "" => return Err(bad("path", "required when source = \"wav\"")),
                path => AudioSource::Wav(PathBuf::from(path)),
            },
            other => return Err(bad("source", format!("unknown source {other:?}"))),
        };
        let chunk = p.u64_or("chunk", DEFAULT_CHUNK as u64)? as usize;
        if !(1..=1 << 16).contains(&chunk) {
            return Err(bad("chunk", "must be within 1..=65536"));
        }
        if p.u64_or("sample_rate", SAMPLE_RATE as u64)? != SAMPLE_RATE as u64 {
            return Err(bad("sample_rate", format!("only {SAMPLE_RATE} is supported")));
        }
        Ok(AudioConfig {
            source,
            chunk,
            duration_ms: p.u64_or("duration_ms", 0)?,
            realtime: p.bool_or("realtime", true)?,
            start_delay: Duration::from_millis(p.u64_or("start_delay_ms", 0)?),
        })
    }
}

fn start_stream(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let cfg = AudioConfig::from_params(node.params())
        .map_err(|source| LaunchError::BadParam { entry: node.name().into(), source })?;
    let fixed = match &cfg.source {
        AudioSource::Wav(path) => {
            let (pcm, rate) = read_wav(path).map_err(|e| LaunchError::Start {
                entry: node.name().into(),
                message: format!("audio source unavailable: {e}"),
            })?;
            if rate != SAMPLE_RATE {
                return Err(LaunchError::Start {
                    entry: node.name().into(),
                    message: format!("{}: sample rate {rate}, expected {SAMPLE_RATE}", path.display()),
                });
            }
            Some(pcm)
        }
        _ if cfg.duration_ms > 0 => {
            let n = (cfg.duration_ms * SAMPLE_RATE as u64 / 1000) as usize;
            Some(generate(&cfg.source, n))
        }
        _ => None,
    };
    let out = node.advertise(AUDIO_RAW, names::AUDIO_CHUNK).map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).spawn("audio", move |stop| run_stream(&cfg, fixed, &out, &stop)).boxed())
}

fn generate(source: &AudioSource, len: usize) -> Vec<i16> {
    match source {
        AudioSource::Tone { hz, amplitude } => to_pcm(&sine(*hz, *amplitude, len, SAMPLE_RATE)),
        _ => vec![0; len],
    }
}

fn run_stream(cfg: &AudioConfig, fixed: Option<Vec<i16>>, out: &Publisher, stop: &AtomicBool) {
    if !sleep_unless(stop, cfg.start_delay) {
        return;
    }
    let period = Duration::from_secs_f64(cfg.chunk as f64 / SAMPLE_RATE as f64);
    let start = Instant::now();
    let pace = |seq: u64| -> bool {
        if cfg.realtime {
            let due = start + period.mul_f64(seq as f64);
            sleep_unless(stop, due.saturating_duration_since(Instant::now()))
        } else {
            !stop.load(std::sync::atomic::Ordering::SeqCst)
        }
    };
    match fixed {
        Some(pcm) => {
            for chunk in chunk_signal(&pcm, SAMPLE_RATE, cfg.chunk, 0) {
                if !pace(chunk.sequence) || out.publish_typed(&chunk).is_err() {
                    return;
                }
            }
        }
        None => {
            let mut seq = 0u64;
            loop {
                if !pace(seq) {
                    return;
                }
                let samples = match &cfg.source {
                    AudioSource::Tone { hz, amplitude } => {
                        let t0 = seq as usize * cfg.chunk;
                        to_pcm(
                            &(0..cfg.chunk)
                                .map(|n| {
                                    let t = (t0 + n) as f64 / SAMPLE_RATE as f64;
                                    amplitude * (2.0 * std::f64::consts::PI * hz * t).sin()
                                })
                                .collect::<Vec<_>>(),
                        )
                    }
                    _ => vec![0; cfg.chunk],
                };
                let chunk = AudioChunk { sample_rate: SAMPLE_RATE, channels: 1, sequence: seq, padded: false, samples };
                if out.publish_typed(&chunk).is_err() {
                    return;
                }
                seq += 1;
            }
        }
    }
}

fn start_features(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let badp = |source| LaunchError::BadParam { entry: entry.clone(), source };
    let cap = queue(node.params()).map_err(badp)?;
    let voicing = voicing(node.params()).map_err(badp)?;
    let out = node.advertise(AUDIO_FEATURES, names::NDARRAY).map_err(bus_err(&node))?;
    let sub = node
        .subscribe(AUDIO_RAW, names::AUDIO_CHUNK, cap, move |m| {
            let Ok(chunk) = AudioChunk::from_message(&m) else { return };
            let Ok(f) = extract_features_with(&pcm_to_f64(&chunk.samples), chunk.sample_rate, voicing) else { return };
            let array = FlatArray::new(vec![FEATURE_LEN], FlatData::F64(f.to_array().to_vec())).expect("shape");
            let frame = NdArrayFrame { header: Header::new(chunk.sequence, 0), array };
            let _ = out.publish_typed(&frame);
        })
        .map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).hold(sub).boxed())
}

fn start_sentiment(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let badp = |source| LaunchError::BadParam { entry: entry.clone(), source };
    let cap = queue(node.params()).map_err(badp)?;
    let model = match model_param(node.params()).map_err(badp)? {
        None => bundled_model(),
        Some(path) => TreeEnsemble::load(&path)
            .map_err(|e| LaunchError::Start { entry: entry.clone(), message: e.to_string() })?,
    };
    if model.n_features != FEATURE_LEN {
        return Err(LaunchError::Start {
            entry,
            message: format!("model expects {} features, pipeline produces {FEATURE_LEN}", model.n_features),
        });
    }
    let out = node.advertise(AUDIO_SENTIMENT, names::STRING).map_err(bus_err(&node))?;
    let sub = node
        .subscribe(AUDIO_FEATURES, names::NDARRAY, cap, move |m| {
            let Ok(frame) = NdArrayFrame::from_message(&m) else { return };
            let FlatData::F64(x) = &frame.array.data else { return };
            if let Ok(p) = model.predict(x) {
                let _ = out.publish_typed(&StringMsg::new(p.label));
            }
        })
        .map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).hold(sub).boxed())
}
