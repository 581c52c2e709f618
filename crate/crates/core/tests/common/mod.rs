//! Slow, straightforward 64-bit reference versions of the objective
//! measures, written without the library's fast paths: LPC by Gaussian
//! elimination on the full normal equations, cepstra by a dense DFT of the
//! log model spectrum, quadratic forms over explicit Toeplitz matrices.

#![allow(dead_code)]

use std::f64::consts::PI;

use derevkit::roomsim::synth::{synth_speech, GeneratorKind, GeneratorSpec};
use derevkit::roomsim::{convolve, generate_rir, RoomSpec};
use derevkit::Waveform;

pub const ORDER: usize = 10;
pub const CEPS: usize = 20;
const DFT_POINTS: usize = 4096;

fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / len as f64).cos())).collect()
}

fn autocorr(x: &[f64]) -> Vec<f64> {
    (0..=ORDER)
        .map(|k| (k..x.len()).map(|n| x[n] * x[n - k]).sum::<f64>() / x.len() as f64)
        .collect()
}

fn toeplitz(r: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| r[i.abs_diff(j)]).collect()).collect()
}

/// Solves `m x = y` by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut y: Vec<f64>) -> Option<Vec<f64>> {
    let n = y.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        y.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            y[row] -= f * y[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (y[i] - s) / m[i][i];
    }
    Some(x)
}

/// Inverse-filter polynomial `[1, -a1, ..., -ap]` and the autocorrelation.
fn lpc(frame: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let r = autocorr(frame);
    if !(r[0] > 0.0) {
        return None;
    }
    let a = solve(toeplitz(&r, ORDER), r[1..].to_vec())?;
    let poly = std::iter::once(1.0).chain(a.iter().map(|v| -v)).collect();
    Some((poly, r))
}

/// Cepstrum of the all-pole model 1/A from the sampled log magnitude.
fn cepstrum(poly: &[f64]) -> Vec<f64> {
    let log_mag: Vec<f64> = (0..DFT_POINTS)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / DFT_POINTS as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &p) in poly.iter().enumerate() {
                re += p * (w * n as f64).cos();
                im -= p * (w * n as f64).sin();
            }
            -0.5 * (re * re + im * im).ln()
        })
        .collect();
    (1..=CEPS)
        .map(|n| {
            let s: f64 = log_mag
                .iter()
                .enumerate()
                .map(|(k, v)| v * (2.0 * PI * (k * n) as f64 / DFT_POINTS as f64).cos())
                .sum();
            2.0 * s / DFT_POINTS as f64
        })
        .collect()
}

fn quad(r: &[f64], a: &[f64]) -> f64 {
    let m = toeplitz(r, a.len());
    let ma: Vec<f64> = m.iter().map(|row| row.iter().zip(a).map(|(x, y)| x * y).sum()).collect();
    a.iter().zip(&ma).map(|(x, y)| x * y).sum()
}

pub struct Reference {
    pub cd: f64,
    pub llr: f64,
    pub si_sdr: f64,
}

/// CD and LLR over Hann 32/16 ms frames where the reference is within 40 dB
/// of its loudest frame; LLR keeps the best 95% of frames.
pub fn reference_measures(reference: &Waveform, test: &Waveform) -> Reference {
    let fs = reference.sample_rate as f64;
    let len = (0.032 * fs).round() as usize;
    let hop = len / 2;
    let win = hann(len);
    let x: Vec<f64> = reference.samples.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = (0..x.len()).map(|n| test.samples.get(n).map_or(0.0, |&v| v as f64)).collect();
    let frames = if x.len() <= len { 1 } else { (x.len() - len) / hop + 1 };
    let cut = |s: &[f64], i: usize| -> Vec<f64> {
        (0..len).map(|n| win[n] * s.get(i * hop + n).copied().unwrap_or(0.0)).collect()
    };
    let energy: Vec<f64> = (0..frames).map(|i| cut(&x, i).iter().map(|v| v * v).sum()).collect();
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    let mut cds = Vec::new();
    let mut llrs = Vec::new();
    for i in 0..frames {
        if energy[i] < peak * 1e-4 {
            continue;
        }
        let Some((ar, rr)) = lpc(&cut(&x, i)) else { continue };
        match lpc(&cut(&y, i)) {
            None => {
                cds.push(10.0);
                llrs.push(2.0);
            }
            Some((at, _)) => {
                let d: f64 = cepstrum(&ar).iter().zip(cepstrum(&at)).map(|(a, b)| (a - b).powi(2)).sum();
                cds.push((10.0 / 10f64.ln() * (2.0 * d).sqrt()).min(10.0));
                llrs.push((quad(&rr, &at) / quad(&rr, &ar)).ln().clamp(0.0, 2.0));
            }
        }
    }
    llrs.sort_by(f64::total_cmp);
    let keep = ((0.95 * llrs.len() as f64).round() as usize).max(1);
    let cd = cds.iter().sum::<f64>() / cds.len() as f64;
    let llr = llrs[..keep].iter().sum::<f64>() / keep as f64;

    // SI-SDR from the correlation coefficient of the centred signals.
    let yt: Vec<f64> = test.samples.iter().map(|&v| v as f64).collect();
    let centre = |s: &[f64]| -> Vec<f64> {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| v - m).collect()
    };
    let (a, b) = (centre(&x), centre(&yt));
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).sum::<f64>();
    let rho2 = dot(&a, &b).powi(2) / (dot(&a, &a) * dot(&b, &b));
    let si_sdr = (10.0 * (rho2 / (1.0 - rho2)).log10()).clamp(-60.0, 60.0);
    Reference { cd, llr, si_sdr }
}

fn wave(samples: Vec<f64>) -> Waveform {
    Waveform::new(samples.into_iter().map(|v| v as f32).collect(), 8000).unwrap()
}

fn noise(kind: GeneratorKind, seed: u64, len: usize) -> Vec<f64> {
    let w = GeneratorSpec { kind, seed, seconds: len as f64 / 8000.0 }.render(8000);
    w.samples.iter().map(|&v| v as f64).collect()
}

/// Ten (name, reference, test) pairs covering identity, scaling, additive
/// noise, filtering, reverberation, delay, clipping, dropouts and mismatch.
pub fn fixture_pairs() -> Vec<(&'static str, Waveform, Waveform)> {
    let len = 12_000;
    let clean = synth_speech(len, 8000, 21);
    let other = synth_speech(len, 8000, 22);
    let white = noise(GeneratorKind::White, 5, len);
    let babble = noise(GeneratorKind::Babble, 6, len);
    let add = |n: &[f64], g: f64| -> Vec<f64> { clean.iter().zip(n).map(|(s, v)| s + g * v).collect() };
    let mut smooth = clean.clone();
    for i in (1..len).rev() {
        smooth[i] = 0.6 * smooth[i] + 0.4 * smooth[i - 1];
    }
    let rir = generate_rir(&RoomSpec {
        dims: [6.0, 4.0, 3.0],
        src_pos: [1.8, 1.4, 1.5],
        mic_pos: [3.9, 2.7, 1.3],
        rt60: 0.5,
        sample_rate: 8000,
    })
    .unwrap();
    let reverberant = convolve(&wave(clean.clone()), &rir).unwrap().fit_to(len);
    let mut delayed = vec![0.0; 40];
    delayed.extend_from_slice(&clean[..len - 40]);
    let peak = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let clipped = clean.iter().map(|v| v.clamp(-0.3 * peak, 0.3 * peak)).collect();
    let mut gaps = add(&white, 0.02);
    for (i, v) in gaps.iter_mut().enumerate() {
        if (i / 1000) % 3 == 1 {
            *v = 0.0;
        }
    }
    let reference = wave(clean.clone());
    vec![
        ("identity", reference.clone(), reference.clone()),
        ("scaled", reference.clone(), wave(clean.iter().map(|v| -0.25 * v).collect())),
        ("white 10 dB", reference.clone(), wave(add(&white, 0.05))),
        ("babble 0 dB", reference.clone(), wave(add(&babble, 0.2))),
        ("lowpass", reference.clone(), wave(smooth)),
        ("reverberant", reference.clone(), reverberant),
        ("delayed", reference.clone(), wave(delayed)),
        ("clipped", reference.clone(), wave(clipped)),
        ("dropouts", reference.clone(), wave(gaps)),
        ("other talker", reference, wave(other)),
    ]
}
