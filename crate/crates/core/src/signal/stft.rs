use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    /// Periodic Hamming, 0.54 - 0.46 cos(2 pi n / N).
    Hamming,
    /// Periodic Hann.
    Hann,
}

impl WindowKind {
    pub fn coefficients<T: Real>(self, len: usize) -> Vec<T> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / n;
                let w = match self {
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                };
                T::of(w)
            })
            .collect()
    }
}

/// One-sided short-time spectrum, `frames` is T x F with F = frame_len/2 + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T = f32> {
    pub frames: Array2<Complex<T>>,
    pub frame_len: usize,
    pub hop: usize,
    pub window_kind: WindowKind,
    pub sample_rate: u32,
}

impl<T: Real> ComplexSpectrogram<T> {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn magnitude(&self) -> Array2<T> {
        self.frames.mapv(|c| c.norm())
    }

    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.frames.mapv_inplace(|c| c * factor);
        out
    }

    pub(crate) fn check_consistent(&self) -> Result<()> {
        if self.frames.ncols() != self.frame_len / 2 + 1 {
            return Err(invalid_input(format!(
                "spectrogram has {} bins, frame length {} implies {}",
                self.frames.ncols(),
                self.frame_len,
                self.frame_len / 2 + 1
            )));
        }
        Ok(())
    }
}

/// Pre-planned analysis/synthesis pair for one frame length and hop.
///
/// The signal is padded with `frame_len - hop` zeros on the left so that every
/// input sample is covered by the same number of windows; synthesis is a
/// weighted overlap-add normalised by the summed squared window.
pub struct StftPlan<T: Real> {
    frame_len: usize,
    hop: usize,
    window_kind: WindowKind,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> StftPlan<T> {
    pub fn new(frame_len: usize, hop: usize, window_kind: WindowKind) -> Result<Self> {
        if frame_len == 0 || frame_len % 2 != 0 {
            return Err(invalid_config(format!(
                "frame length must be even and positive, got {frame_len}"
            )));
        }
        if hop == 0 || hop > frame_len {
            return Err(invalid_config(format!(
                "hop must satisfy 0 < hop <= frame length ({frame_len}), got {hop}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(StftPlan {
            frame_len,
            hop,
            window_kind,
            window: window_kind.coefficients(frame_len),
            forward: planner.plan_fft_forward(frame_len),
            inverse: planner.plan_fft_inverse(frame_len),
        })
    }

    /// 32 ms Hamming window with a 16 ms hop at the given rate.
    pub fn speech_default(sample_rate: u32) -> Result<Self> {
        let frame_len = (sample_rate as usize * 32 / 1000) & !1;
        Self::new(frame_len, frame_len / 2, WindowKind::Hamming)
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    fn pad(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        (len + self.pad()).div_ceil(self.hop)
    }

    pub fn analyze(&self, samples: &[T], sample_rate: u32) -> Result<ComplexSpectrogram<T>> {
        if samples.is_empty() {
            return Err(invalid_input("cannot analyse an empty waveform"));
        }
        let pad = self.pad();
        let n_frames = self.num_frames(samples.len());
        let bins = self.num_bins();
        let mut frames = Array2::from_elem((n_frames, bins), Complex::new(T::zero(), T::zero()));
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.frame_len];
        let mut scratch =
            vec![Complex::new(T::zero(), T::zero()); self.forward.get_inplace_scratch_len()];
        for t in 0..n_frames {
            let start = t * self.hop;
            for (n, slot) in buf.iter_mut().enumerate() {
                // position in the unpadded signal
                let idx = (start + n).wrapping_sub(pad);
                let x = if start + n >= pad && idx < samples.len() {
                    samples[idx]
                } else {
                    T::zero()
                };
                *slot = Complex::new(x * self.window[n], T::zero());
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in buf.iter().take(bins).enumerate() {
                frames[[t, k]] = *v;
            }
        }
        Ok(ComplexSpectrogram {
            frames,
            frame_len: self.frame_len,
            hop: self.hop,
            window_kind: self.window_kind,
            sample_rate,
        })
    }

    pub fn synthesize(&self, spec: &ComplexSpectrogram<T>, out_len: usize) -> Result<Vec<T>> {
        spec.check_consistent()?;
        if spec.frame_len != self.frame_len || spec.hop != self.hop {
            return Err(invalid_input(format!(
                "spectrogram framing {}/{} does not match plan {}/{}",
                spec.frame_len, spec.hop, self.frame_len, self.hop
            )));
        }
        let pad = self.pad();
        let n_frames = spec.num_frames();
        let total = (n_frames.max(1) - 1) * self.hop + self.frame_len;
        let mut acc = vec![T::zero(); total];
        let mut env = vec![T::zero(); total];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.frame_len];
        let mut scratch =
            vec![Complex::new(T::zero(), T::zero()); self.inverse.get_inplace_scratch_len()];
        let scale = T::one() / T::of(self.frame_len as f64);
        let bins = self.num_bins();
        for t in 0..n_frames {
            for k in 0..bins {
                buf[k] = spec.frames[[t, k]];
            }
            // Hermitian completion of the one-sided spectrum.
            for k in bins..self.frame_len {
                buf[k] = spec.frames[[t, self.frame_len - k]].conj();
            }
            buf[0].im = T::zero();
            buf[self.frame_len / 2].im = T::zero();
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * self.hop;
            for n in 0..self.frame_len {
                let w = self.window[n];
                acc[start + n] += buf[n].re * scale * w;
                env[start + n] += w * w;
            }
        }
        let floor = T::of(1e-10);
        let mut out = vec![T::zero(); out_len];
        for (i, o) in out.iter_mut().enumerate() {
            let j = i + pad;
            if j >= total {
                break;
            }
            if env[j] < floor {
                return Err(Error::Numeric(format!(
                    "synthesis window envelope vanishes at sample {i}"
                )));
            }
            *o = acc[j] / env[j];
        }
        Ok(out)
    }
}

/// Forward STFT of a waveform with a periodic Hamming window.
pub fn stft(wave: &Waveform, frame_len: usize, hop: usize) -> Result<ComplexSpectrogram<f32>> {
    StftPlan::<f32>::new(frame_len, hop, WindowKind::Hamming)?.analyze(&wave.samples, wave.sample_rate)
}

/// Inverse of [`stft`]; the output is truncated or zero-padded to `out_len`.
pub fn istft(spec: &ComplexSpectrogram<f32>, out_len: usize) -> Result<Waveform> {
    let plan = StftPlan::<f32>::new(spec.frame_len, spec.hop, spec.window_kind)?;
    let samples = plan.synthesize(spec, out_len)?;
    Waveform::new(samples, spec.sample_rate)
}
