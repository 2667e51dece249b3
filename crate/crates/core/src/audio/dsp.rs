//! MFCC and prosody features for one 512-sample window.
//!
//! Chain: pre-emphasis (0.97), Hamming window, 512-point FFT magnitude,
//! 26 triangular mel filters over 0..8 kHz, natural log floored at 1e-10,
//! orthonormal DCT-II keeping c0..c12. Pitch is the first strong peak of
//! the normalized cross-correlation over lags 32..=320 (500..50 Hz at
//! 16 kHz), refined by parabolic interpolation.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub const WINDOW: usize = 512;
pub const SAMPLE_RATE: u32 = 16_000;
pub const N_MFCC: usize = 13;
pub const N_MEL: usize = 26;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const LOG_FLOOR: f64 = 1e-10;
pub const MEL_LOW_HZ: f64 = 0.0;
pub const MEL_HIGH_HZ: f64 = 8_000.0;
pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 500.0;
pub const DEFAULT_VOICING: f64 = 0.3;
/// Length of [`FeatureVector::to_array`].
pub const FEATURE_LEN: usize = N_MFCC + 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("window must be {WINDOW} samples at {SAMPLE_RATE} Hz, got {len} at {rate} Hz")]
    BadWindow { len: usize, rate: u32 },
    #[error("feature array must have {FEATURE_LEN} values, got {0}")]
    BadArray(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub mfcc: [f64; N_MFCC],
    pub f0_hz: Option<f64>,
    pub energy_rms: f64,
    pub zcr: f64,
}

impl FeatureVector {
    /// `[c0..c12, f0 (0 when unvoiced), energy_rms, zcr]`.
    pub fn to_array(&self) -> [f64; FEATURE_LEN] {
        let mut a = [0.0; FEATURE_LEN];
        a[..N_MFCC].copy_from_slice(&self.mfcc);
        a[N_MFCC] = self.f0_hz.unwrap_or(0.0);
        a[N_MFCC + 1] = self.energy_rms;
        a[N_MFCC + 2] = self.zcr;
        a
    }

    pub fn from_array(a: &[f64]) -> Result<Self, FeatureError> {
        if a.len() != FEATURE_LEN {
            return Err(FeatureError::BadArray(a.len()));
        }
        let mut mfcc = [0.0; N_MFCC];
        mfcc.copy_from_slice(&a[..N_MFCC]);
        let f0 = a[N_MFCC];
        Ok(FeatureVector {
            mfcc,
            f0_hz: (f0 > 0.0).then_some(f0),
            energy_rms: a[N_MFCC + 1],
            zcr: a[N_MFCC + 2],
        })
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `N_MEL` rows of `WINDOW / 2 + 1` weights. Filter `m` rises from edge
/// `m` to edge `m + 1` and falls to edge `m + 2`; edges are equally spaced
/// in mel and bins sit at `k * sr / WINDOW` Hz.
pub fn mel_filterbank(sample_rate: u32) -> Vec<Vec<f64>> {
    let (lo, hi) = (hz_to_mel(MEL_LOW_HZ), hz_to_mel(MEL_HIGH_HZ));
    let edges: Vec<f64> = (0..N_MEL + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MEL + 1) as f64)).collect();
    let bins = WINDOW / 2 + 1;
    (0..N_MEL)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / WINDOW as f64;
                    if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

struct Plan {
    fft: Arc<dyn Fft<f64>>,
    hamming: Vec<f64>,
    filters: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
}

fn plan() -> &'static Plan {
    static PLAN: OnceLock<Plan> = OnceLock::new();
    PLAN.get_or_init(|| {
        let hamming = (0..WINDOW).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (WINDOW - 1) as f64).cos()).collect();
        let dct = (0..N_MFCC)
            .map(|i| {
                let s = if i == 0 { (1.0 / N_MEL as f64).sqrt() } else { (2.0 / N_MEL as f64).sqrt() };
                (0..N_MEL).map(|m| s * (PI * i as f64 * (m as f64 + 0.5) / N_MEL as f64).cos()).collect()
            })
            .collect();
        Plan {
            fft: FftPlanner::new().plan_fft_forward(WINDOW),
            hamming,
            filters: mel_filterbank(SAMPLE_RATE),
            dct,
        }
    })
}

pub fn mfcc(x: &[f64]) -> Result<[f64; N_MFCC], FeatureError> {
    if x.len() != WINDOW {
        return Err(FeatureError::BadWindow { len: x.len(), rate: SAMPLE_RATE });
    }
    let p = plan();
    let mut buf: Vec<Complex<f64>> = (0..WINDOW)
        .map(|n| {
            let y = if n == 0 { x[0] } else { x[n] - PRE_EMPHASIS * x[n - 1] };
            Complex::new(y * p.hamming[n], 0.0)
        })
        .collect();
    p.fft.process(&mut buf);
    let mag: Vec<f64> = buf[..WINDOW / 2 + 1].iter().map(|c| c.norm()).collect();
    let log_mel: Vec<f64> = p
        .filters
        .iter()
        .map(|w| w.iter().zip(&mag).map(|(a, b)| a * b).sum::<f64>().max(LOG_FLOOR).ln())
        .collect();
    let mut out = [0.0; N_MFCC];
    for (o, row) in out.iter_mut().zip(&p.dct) {
        *o = row.iter().zip(&log_mel).map(|(a, b)| a * b).sum();
    }
    Ok(out)
}

/// Normalized cross-correlation at integer `lag`.
pub fn nccf(x: &[f64], lag: usize) -> f64 {
    if lag >= x.len() {
        return 0.0;
    }
    let (a, b) = (&x[..x.len() - lag], &x[lag..]);
    let num: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let den = (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Fundamental frequency, or `None` when the best correlation is below
/// `voicing`. Picks the shortest-lag local maximum within 90% of the best
/// one, which avoids locking onto period multiples.
pub fn pitch(x: &[f64], sample_rate: u32, voicing: f64) -> Option<f64> {
    let sr = sample_rate as f64;
    let min_lag = (sr / F0_MAX_HZ).floor() as usize;
    let max_lag = ((sr / F0_MIN_HZ).ceil() as usize).min(x.len().saturating_sub(2));
    if min_lag < 1 || max_lag <= min_lag {
        return None;
    }
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(|l| nccf(x, l)).collect();
    let at = |lag: usize| r[lag + 1 - min_lag];
    let best = (min_lag..=max_lag).map(at).fold(f64::NEG_INFINITY, f64::max);
    if best.is_nan() || best < voicing {
        return None;
    }
    let lag = (min_lag..=max_lag).find(|&l| {
        let v = at(l);
        v >= 0.9 * best && v >= at(l - 1) && v >= at(l + 1)
    })?;
    let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let f0 = sr / (lag as f64 + shift);
    (F0_MIN_HZ..=F0_MAX_HZ).contains(&f0).then_some(f0)
}

pub fn energy_rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Fraction of adjacent pairs whose signs differ; zero counts as positive.
pub fn zcr(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let crossings = x.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
    crossings as f64 / (x.len() - 1) as f64
}

/// Features of one window of samples scaled to `[-1, 1)`.
pub fn extract_features(x: &[f64], sample_rate: u32) -> Result<FeatureVector, FeatureError> {
    extract_features_with(x, sample_rate, DEFAULT_VOICING)
}

pub fn extract_features_with(x: &[f64], sample_rate: u32, voicing: f64) -> Result<FeatureVector, FeatureError> {
    if x.len() != WINDOW || sample_rate != SAMPLE_RATE {
        return Err(FeatureError::BadWindow { len: x.len(), rate: sample_rate });
    }
    Ok(FeatureVector {
        mfcc: mfcc(x)?,
        f0_hz: pitch(x, sample_rate, voicing),
        energy_rms: energy_rms(x),
        zcr: zcr(x),
    })
}

pub fn pcm_to_f64(samples: &[i16]) -> Vec<f64> {
    samples.iter().map(|&s| s as f64 / 32768.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(hz: f64, amp: f64) -> Vec<f64> {
        (0..WINDOW).map(|n| amp * (2.0 * PI * hz * n as f64 / SAMPLE_RATE as f64).sin()).collect()
    }

    #[test]
    fn silence() {
        let f = extract_features(&[0.0; WINDOW], SAMPLE_RATE).unwrap();
        assert_eq!(f.energy_rms, 0.0);
        assert_eq!(f.f0_hz, None);
        assert_eq!(f.zcr, 0.0);
        let floor = (N_MEL as f64).sqrt() * LOG_FLOOR.ln();
        assert!((f.mfcc[0] - floor).abs() < 1e-9);
    }

    #[test]
    fn bad_window() {
        assert_eq!(
            extract_features(&[0.0; 100], SAMPLE_RATE),
            Err(FeatureError::BadWindow { len: 100, rate: SAMPLE_RATE })
        );
        assert!(extract_features(&[0.0; WINDOW], 8000).is_err());
    }

    #[test]
    fn tone_sweep_pitch() {
        for hz in (100..=400).step_by(10) {
            let f0 = pitch(&tone(hz as f64, 0.5), SAMPLE_RATE, DEFAULT_VOICING).unwrap();
            assert!((f0 - hz as f64).abs() <= 5.0, "{hz} -> {f0}");
        }
    }

    #[test]
    fn unit_square_wave_basics() {
        let x: Vec<f64> = (0..WINDOW).map(|n| if (n / 20) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = extract_features(&x, SAMPLE_RATE).unwrap();
        assert!((f.energy_rms - 1.0).abs() < 1e-12);
        assert!((f.zcr - 25.0 / 511.0).abs() < 1e-12);
        assert!((f.f0_hz.unwrap() - 400.0).abs() < 5.0);
    }

    #[test]
    fn filterbank_shape() {
        let fb = mel_filterbank(SAMPLE_RATE);
        assert_eq!(fb.len(), N_MEL);
        for row in &fb {
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(row.iter().any(|&w| w > 0.0));
        }
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn array_roundtrip() {
        let f = extract_features(&tone(220.0, 0.3), SAMPLE_RATE).unwrap();
        assert_eq!(FeatureVector::from_array(&f.to_array()).unwrap(), f);
        assert_eq!(FeatureVector::from_array(&[0.0; 3]), Err(FeatureError::BadArray(3)));
    }
}
