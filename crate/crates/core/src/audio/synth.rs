//! Deterministic test signals and the sentiment fixture set.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dsp::{extract_features, FeatureVector, FEATURE_LEN, SAMPLE_RATE, WINDOW};
use super::model::{ModelError, LABELS};

pub fn sine(hz: f64, amplitude: f64, len: usize, sample_rate: u32) -> Vec<f64> {
    (0..len).map(|n| amplitude * (2.0 * PI * hz * n as f64 / sample_rate as f64).sin()).collect()
}

/// Five-harmonic voiced sound with a little seeded noise, peak near
/// `amplitude`.
pub fn voice(f0: f64, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let norm: f64 = (1..=5).map(|h| 1.0 / h as f64).sum();
    (0..WINDOW)
        .map(|n| {
            let t = n as f64 / SAMPLE_RATE as f64;
            let harmonic: f64 = (1..=5).map(|h| (2.0 * PI * f0 * h as f64 * t + phase * h as f64).sin() / h as f64).sum();
            amplitude * (harmonic / norm + rng.gen_range(-0.02..0.02))
        })
        .collect()
}

pub fn white_noise(amplitude: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-amplitude..amplitude)).collect()
}

pub fn to_pcm(x: &[f64]) -> Vec<i16> {
    x.iter().map(|v| (v * 32767.0).round().clamp(-32768.0, 32767.0) as i16).collect()
}

/// One labeled training row.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentSample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Thirty voiced windows, ten per label: low and quiet reads as negative,
/// mid-range as neutral, high and loud as positive.
pub fn sentiment_fixtures() -> Vec<SentimentSample> {
    const PROFILES: [(f64, f64, f64, f64); 3] = [(95.0, 140.0, 0.04, 0.12), (150.0, 210.0, 0.15, 0.3), (230.0, 340.0, 0.35, 0.7)];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::with_capacity(30);
    for (label, &(f_lo, f_hi, a_lo, a_hi)) in PROFILES.iter().enumerate() {
        for _ in 0..10 {
            let (f0, amp, seed) = (rng.gen_range(f_lo..f_hi), rng.gen_range(a_lo..a_hi), rng.gen::<u64>());
            let x = voice(f0, amp, seed);
            let features = extract_features(&x, SAMPLE_RATE).expect("fixture window").to_array().to_vec();
            out.push(SentimentSample { features, label });
        }
    }
    out
}

/// CSV with a header line, 16 feature columns and a label column. Floats
/// use shortest round-trip notation.
pub fn fixtures_to_csv(samples: &[SentimentSample]) -> String {
    let mut out = String::from("c0,c1,c2,c3,c4,c5,c6,c7,c8,c9,c10,c11,c12,f0_hz,energy_rms,zcr,label\n");
    for s in samples {
        let cols: Vec<String> = s.features.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{},{}", cols.join(","), LABELS[s.label]);
    }
    out
}

pub fn fixtures_from_csv(text: &str) -> Result<Vec<SentimentSample>, ModelError> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |reason: &str| ModelError::Parse { line: i + 1, reason: reason.into() };
            let cols: Vec<&str> = l.trim().split(',').collect();
            if cols.len() != FEATURE_LEN + 1 {
                return Err(err("wrong column count"));
            }
            let features = cols[..FEATURE_LEN]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| err("bad number")))
                .collect::<Result<Vec<_>, _>>()?;
            let label = LABELS.iter().position(|l| *l == cols[FEATURE_LEN]).ok_or_else(|| err("unknown label"))?;
            Ok(SentimentSample { features, label })
        })
        .collect()
}

pub fn bundled_fixtures() -> Vec<SentimentSample> {
    fixtures_from_csv(include_str!("../../assets/audio/sentiment_train.csv")).expect("bundled fixtures parse")
}

/// Labels the bundled model produced for the bundled fixtures when it was
/// trained.
pub fn bundled_expected_labels() -> Vec<&'static str> {
    include_str!("../../assets/audio/sentiment_expected.txt").lines().filter(|l| !l.is_empty()).collect()
}

pub fn features_of(sample: &SentimentSample) -> FeatureVector {
    FeatureVector::from_array(&sample.features).expect("fixture arity")
}
