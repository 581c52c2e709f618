//! Seeded signal generators standing in for recorded corpora: a speech-like
//! source (voiced harmonic syllables with formant envelopes, fricative bursts
//! and pauses) and a family of noise types.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, Error, Result};
use crate::signal::Waveform;

const SPEECH_RMS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Speech,
    White,
    Pink,
    Brown,
    Babble,
    Hum,
}

impl GeneratorKind {
    pub const NOISES: [GeneratorKind; 5] = [
        GeneratorKind::White,
        GeneratorKind::Pink,
        GeneratorKind::Brown,
        GeneratorKind::Babble,
        GeneratorKind::Hum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Speech => "speech",
            GeneratorKind::White => "white",
            GeneratorKind::Pink => "pink",
            GeneratorKind::Brown => "brown",
            GeneratorKind::Babble => "babble",
            GeneratorKind::Hum => "hum",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "speech" => GeneratorKind::Speech,
            "white" => GeneratorKind::White,
            "pink" => GeneratorKind::Pink,
            "brown" => GeneratorKind::Brown,
            "babble" => GeneratorKind::Babble,
            "hum" => GeneratorKind::Hum,
            other => return Err(invalid_config(format!("unknown generator '{other}'"))),
        })
    }
}

/// A reproducible synthetic source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub seed: u64,
    pub seconds: f64,
}

impl GeneratorSpec {
    pub fn render(&self, sample_rate: u32) -> Waveform {
        let len = (self.seconds * sample_rate as f64).round() as usize;
        let samples = match self.kind {
            GeneratorKind::Speech => synth_speech(len, sample_rate, self.seed),
            GeneratorKind::White => white(len, self.seed),
            GeneratorKind::Pink => pink(len, self.seed),
            GeneratorKind::Brown => brown(len, self.seed),
            GeneratorKind::Babble => babble(len, sample_rate, self.seed),
            GeneratorKind::Hum => hum(len, sample_rate, self.seed),
        };
        Waveform {
            samples: samples.into_iter().map(|v| v as f32).collect(),
            sample_rate,
        }
    }
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Speech-like signal: alternating pauses and syllables. Voiced syllables are
/// harmonic series on a gliding pitch, weighted by three gliding formant
/// resonances; unvoiced ones are resonator-filtered noise bursts.
pub fn synth_speech(len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let fs = sample_rate as f64;
    let nyq = fs / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let lead = (0.08 * fs) as usize;
    let tail = (0.2 * fs) as usize;
    let speaker_f0: f64 = rng.random_range(95.0..220.0);
    let mut pos = lead;
    while pos + tail < len {
        let dur = ((rng.random_range(0.12..0.32)) * fs) as usize;
        let end = (pos + dur).min(len - tail);
        if end <= pos + 16 {
            break;
        }
        let n = end - pos;
        let voiced = rng.random_bool(0.8);
        let attack = (0.02 * fs) as usize;
        let release = (0.05 * fs) as usize;
        let envelope = |i: usize| -> f64 {
            let a = if i < attack { 0.5 - 0.5 * (PI * i as f64 / attack as f64).cos() } else { 1.0 };
            let r = if n - i < release {
                0.5 - 0.5 * (PI * (n - i) as f64 / release as f64).cos()
            } else {
                1.0
            };
            a * r
        };
        let level = rng.random_range(0.5..1.0);
        if voiced {
            let f0a: f64 = speaker_f0 * rng.random_range(0.85..1.2);
            let f0b: f64 = f0a * rng.random_range(0.8..1.2);
            let fa: [f64; 3] = [
                rng.random_range(300.0..850.0),
                rng.random_range(900.0..2300.0),
                rng.random_range(2300.0..3300.0),
            ];
            let fb = [
                (fa[0] * rng.random_range(0.8..1.25)).clamp(250.0, 900.0),
                (fa[1] * rng.random_range(0.8..1.25)).clamp(850.0, 2500.0),
                (fa[2] * rng.random_range(0.9..1.1)).clamp(2200.0, 3500.0),
            ];
            let bw = [90.0, 130.0, 200.0];
            let mut phase = 0.0f64;
            let max_h = (nyq * 0.95 / f0a.min(f0b)) as usize;
            for i in 0..n {
                let frac = i as f64 / n as f64;
                let f0 = f0a + (f0b - f0a) * frac;
                phase += 2.0 * PI * f0 / fs;
                let formants: [f64; 3] = std::array::from_fn(|k| fa[k] + (fb[k] - fa[k]) * frac);
                let mut s = 0.0;
                for h in 1..=max_h {
                    let fh = h as f64 * f0;
                    if fh >= nyq * 0.95 {
                        break;
                    }
                    let gain: f64 = formants
                        .iter()
                        .zip(&bw)
                        .enumerate()
                        .map(|(k, (&fc, &b))| {
                            let w = [1.0, 0.6, 0.3][k];
                            w / (1.0 + ((fh - fc) / b).powi(2))
                        })
                        .sum();
                    s += gain * (h as f64 * phase).sin();
                }
                out[pos + i] += level * envelope(i) * s;
            }
        } else {
            // two-pole resonator on white noise
            let fc = rng.random_range(2200.0..3600.0);
            let r: f64 = 0.9;
            let a1 = 2.0 * r * (2.0 * PI * fc / fs).cos();
            let a2 = -r * r;
            let (mut y1, mut y2) = (0.0, 0.0);
            for i in 0..n {
                let y = gaussian(&mut rng) * 0.15 + a1 * y1 + a2 * y2;
                y2 = y1;
                y1 = y;
                out[pos + i] += 0.6 * level * envelope(i) * y;
            }
        }
        pos = end + ((rng.random_range(0.03..0.2)) * fs) as usize;
    }
    normalize_rms(&mut out, SPEECH_RMS);
    out
}

fn white(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..len).map(|_| gaussian(&mut rng)).collect();
    normalize_rms(&mut x, SPEECH_RMS);
    x
}

/// Paul Kellet's refined pink filter.
fn pink(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = [0.0f64; 7];
    let mut x: Vec<f64> = (0..len)
        .map(|_| {
            let w = gaussian(&mut rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect();
    normalize_rms(&mut x, SPEECH_RMS);
    x
}

fn brown(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    let mut x: Vec<f64> = (0..len)
        .map(|_| {
            acc = 0.995 * acc + gaussian(&mut rng);
            acc
        })
        .collect();
    normalize_rms(&mut x, SPEECH_RMS);
    x
}

fn babble(len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; len];
    for _ in 0..6 {
        // talkers start at random offsets so their pauses do not line up
        let shift = rng.random_range(0..(sample_rate as usize / 2).max(1));
        let talker = synth_speech(len + shift, sample_rate, rng.random());
        for (o, v) in x.iter_mut().zip(&talker[shift..]) {
            *o += v;
        }
    }
    normalize_rms(&mut x, SPEECH_RMS);
    x
}

/// Mains-like hum with harmonics and a broadband floor.
fn hum(len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let f0 = rng.random_range(48.0..62.0);
    let phases: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut x: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            let tonal: f64 = phases
                .iter()
                .enumerate()
                .map(|(h, p)| (2.0 * PI * f0 * (h + 1) as f64 * t + p).sin() / (h + 1) as f64)
                .sum();
            tonal + 0.3 * gaussian(&mut rng)
        })
        .collect();
    normalize_rms(&mut x, SPEECH_RMS);
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded_and_finite() {
        for kind in GeneratorKind::NOISES.into_iter().chain([GeneratorKind::Speech]) {
            let spec = GeneratorSpec { kind, seed: 5, seconds: 0.5 };
            let a = spec.render(8000);
            assert_eq!(a.len(), 4000);
            assert_eq!(a, spec.render(8000), "{kind} not deterministic");
            assert!(a.samples.iter().all(|s| s.is_finite()));
            assert!((a.rms() - SPEECH_RMS).abs() < 1e-3, "{kind} rms {}", a.rms());
            let other = GeneratorSpec { seed: 6, ..spec }.render(8000);
            assert_ne!(a, other);
        }
    }

    #[test]
    fn speech_has_pauses() {
        let x = synth_speech(16000, 8000, 3);
        let frame = 160;
        let energies: Vec<f64> = x.chunks(frame).map(|c| c.iter().map(|v| v * v).sum()).collect();
        let max = energies.iter().cloned().fold(0.0, f64::max);
        let quiet = energies.iter().filter(|&&e| e < max * 1e-3).count();
        assert!(quiet >= 5, "only {quiet} quiet frames");
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in GeneratorKind::NOISES {
            assert_eq!(kind.name().parse::<GeneratorKind>().unwrap(), kind);
        }
        assert!("static".parse::<GeneratorKind>().is_err());
    }
}
