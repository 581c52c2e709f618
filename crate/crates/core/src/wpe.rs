//! Weighted prediction error dereverberation, single channel, per band.
//!
//! For every frequency bin a delayed linear predictor estimates the late
//! reverberation from frames `t - delay ... t - delay - taps + 1` and
//! subtracts it. Predictor and per-frame variance are re-estimated
//! alternately for a fixed number of iterations.

use ndarray::Array2;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::signal::{stft, ComplexSpectrogram, Waveform};

type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WpeConfig {
    pub taps: usize,
    pub delay: usize,
    pub iterations: usize,
    /// Variance floor and diagonal loading of the normal equations.
    pub regularization: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        WpeConfig {
            taps: 10,
            delay: 3,
            iterations: 3,
            regularization: 1e-8,
        }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || self.iterations == 0 {
            return Err(invalid_config("wpe taps, delay and iterations must all be at least 1"));
        }
        if !(self.regularization > 0.0) || !self.regularization.is_finite() {
            return Err(invalid_config("wpe regularization must be positive"));
        }
        Ok(())
    }
}

/// Weighted prediction-error objective `sum |x|^2 / lambda + ln lambda`.
fn objective(x: &[C64], lambda: &[f64]) -> f64 {
    x.iter().zip(lambda).map(|(v, &l)| v.norm_sqr() / l + l.ln()).sum()
}

/// Solves `R g = r` for Hermitian positive definite `R` (row-major K x K).
fn cholesky_solve(r: &mut [C64], rhs: &[C64]) -> Vec<C64> {
    let k = rhs.len();
    // In-place lower factor L with R = L L^H.
    for j in 0..k {
        let mut d = r[j * k + j].re;
        for p in 0..j {
            d -= r[j * k + p].norm_sqr();
        }
        let d = d.max(f64::MIN_POSITIVE).sqrt();
        r[j * k + j] = C64::new(d, 0.0);
        for i in j + 1..k {
            let mut s = r[i * k + j];
            for p in 0..j {
                s -= r[i * k + p] * r[j * k + p].conj();
            }
            r[i * k + j] = s / d;
        }
    }
    let mut y = vec![C64::new(0.0, 0.0); k];
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= r[i * k + p] * y[p];
        }
        y[i] = s / r[i * k + i].re;
    }
    let mut g = vec![C64::new(0.0, 0.0); k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in i + 1..k {
            s -= r[p * k + i].conj() * g[p];
        }
        g[i] = s / r[i * k + i].re;
    }
    g
}

/// Dereverberates one band; returns the estimate and the objective after
/// initialization and after each iteration.
fn dereverb_band(y: &[C64], cfg: &WpeConfig) -> (Vec<C64>, Vec<f64>) {
    let t_len = y.len();
    let (k, delay, eps) = (cfg.taps, cfg.delay, cfg.regularization);
    let history = |t: usize, j: usize| -> C64 {
        let back = delay + j;
        if t >= back {
            y[t - back]
        } else {
            C64::new(0.0, 0.0)
        }
    };
    let mut x = y.to_vec();
    let mut lambda: Vec<f64> = x.iter().map(|v| v.norm_sqr().max(eps)).collect();
    let mut trace = vec![objective(&x, &lambda)];
    let mut stack = vec![C64::new(0.0, 0.0); k];
    for _ in 0..cfg.iterations {
        let mut r = vec![C64::new(0.0, 0.0); k * k];
        let mut rhs = vec![C64::new(0.0, 0.0); k];
        for t in 0..t_len {
            let w = 1.0 / lambda[t];
            for (j, s) in stack.iter_mut().enumerate() {
                *s = history(t, j);
            }
            for i in 0..k {
                let si = stack[i] * w;
                rhs[i] += si * y[t].conj();
                for j in 0..=i {
                    r[i * k + j] += si * stack[j].conj();
                }
            }
        }
        for i in 0..k {
            r[i * k + i] += eps;
            for j in 0..i {
                r[j * k + i] = r[i * k + j].conj();
            }
        }
        let g = cholesky_solve(&mut r, &rhs);
        for t in 0..t_len {
            let mut pred = C64::new(0.0, 0.0);
            for (j, gj) in g.iter().enumerate() {
                pred += gj.conj() * history(t, j);
            }
            x[t] = y[t] - pred;
        }
        for (l, v) in lambda.iter_mut().zip(&x) {
            *l = v.norm_sqr().max(eps);
        }
        trace.push(objective(&x, &lambda));
    }
    (x, trace)
}

/// Like [`wpe_dereverb`], also returning the per-band objective trace.
pub fn wpe_dereverb_traced(
    spec: &ComplexSpectrogram<f32>,
    cfg: &WpeConfig,
) -> Result<(ComplexSpectrogram<f32>, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let (frames, bins) = spec.frames.dim();
    if frames <= cfg.taps + cfg.delay {
        return Err(invalid_input(format!(
            "wpe needs more than taps + delay = {} frames, got {frames}",
            cfg.taps + cfg.delay
        )));
    }
    let bands: Vec<(Vec<C64>, Vec<f64>)> = (0..bins)
        .into_par_iter()
        .map(|f| {
            let y: Vec<C64> = spec.frames.column(f).iter().map(|c| C64::new(c.re as f64, c.im as f64)).collect();
            dereverb_band(&y, cfg)
        })
        .collect();
    let mut out = Array2::from_elem((frames, bins), Complex::new(0.0f32, 0.0));
    let mut traces = Vec::with_capacity(bins);
    for (f, (x, trace)) in bands.into_iter().enumerate() {
        debug_assert!(
            trace.windows(2).all(|w| w[1] <= w[0] + 1e-6 * w[0].abs().max(1.0)),
            "wpe objective increased in band {f}: {trace:?}"
        );
        for (t, v) in x.into_iter().enumerate() {
            out[[t, f]] = Complex::new(v.re as f32, v.im as f32);
        }
        traces.push(trace);
    }
    Ok((
        ComplexSpectrogram {
            frames: out,
            ..spec.clone()
        },
        traces,
    ))
}

pub fn wpe_dereverb(spec: &ComplexSpectrogram<f32>, cfg: &WpeConfig) -> Result<ComplexSpectrogram<f32>> {
    wpe_dereverb_traced(spec, cfg).map(|(s, _)| s)
}

/// STFT, per-band dereverberation and resynthesis at the input length.
pub fn wpe_enhance_wave(wave: &Waveform, cfg: &WpeConfig) -> Result<Waveform> {
    let plan = crate::neural::features::analysis_plan(wave.sample_rate)?;
    let spec = stft(wave, plan.frame_len(), plan.hop())?;
    let out = wpe_dereverb(&spec, cfg)?;
    crate::signal::istft(&out, wave.len())
}
