use ndarray::{Array2, Zip};
use num_complex::Complex;

use super::{ComplexSpectrogram, StftPlan, Waveform};
use crate::error::{invalid_input, Result};
use crate::real::Real;

/// Non-negative T x F gain matrix. Values are not bounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix<T = f32> {
    pub values: Array2<T>,
}

impl<T: Real> MaskMatrix<T> {
    pub fn new(values: Array2<T>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(invalid_input("mask entries must be finite and non-negative"));
        }
        Ok(MaskMatrix { values })
    }

    pub fn ones(frames: usize, bins: usize) -> Self {
        MaskMatrix {
            values: Array2::from_elem((frames, bins), T::one()),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Elementwise product of a magnitude spectrogram and a mask.
pub fn apply_mask<T: Real>(mag: &Array2<T>, mask: &MaskMatrix<T>) -> Result<Array2<T>> {
    if mag.dim() != mask.values.dim() {
        return Err(invalid_input(format!(
            "magnitude shape {:?} does not match mask shape {:?}",
            mag.dim(),
            mask.values.dim()
        )));
    }
    Ok(mag * &mask.values)
}

/// Attaches the phase of `phase_source` to `est_mag` and resynthesises.
pub fn reconstruct_with_phase(
    est_mag: &Array2<f32>,
    phase_source: &ComplexSpectrogram<f32>,
    out_len: usize,
) -> Result<Waveform> {
    let spec = combine_with_phase(est_mag, phase_source)?;
    let plan = StftPlan::<f32>::new(spec.frame_len, spec.hop, spec.window_kind)?;
    Waveform::new(plan.synthesize(&spec, out_len)?, spec.sample_rate)
}

pub(crate) fn combine_with_phase<T: Real>(
    est_mag: &Array2<T>,
    phase_source: &ComplexSpectrogram<T>,
) -> Result<ComplexSpectrogram<T>> {
    if est_mag.dim() != phase_source.frames.dim() {
        return Err(invalid_input(format!(
            "estimated magnitude shape {:?} does not match spectrogram shape {:?}",
            est_mag.dim(),
            phase_source.frames.dim()
        )));
    }
    let mut out = phase_source.clone();
    Zip::from(&mut out.frames)
        .and(est_mag)
        .for_each(|c, &m| *c = Complex::from_polar(m, c.arg()));
    Ok(out)
}
