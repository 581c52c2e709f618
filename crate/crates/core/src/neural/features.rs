use ndarray::{Array1, Array2, Axis};

use crate::error::Result;
use crate::real::Real;
use crate::roomsim::{make_indicator, MixtureSample, DEFAULT_FLOOR_DB};
use crate::signal::{ComplexSpectrogram, StftPlan, Waveform};

/// `log(1 + |Y|)`, then per-utterance zero mean and unit variance per bin.
pub fn log_mag_features<T: Real>(mag: &Array2<T>) -> Array2<T> {
    let mut x = mag.mapv(|v| v.ln_1p());
    let frames = T::of(x.nrows().max(1) as f64);
    let mean = x.sum_axis(Axis(0)) / frames;
    x -= &mean;
    let var = x.mapv(|v| v * v).sum_axis(Axis(0)) / frames;
    let std = var.mapv(|v| v.sqrt().max(T::of(1e-5)));
    x /= &std;
    x
}

/// Analysis used by the networks: 32 ms Hamming frames, 16 ms hop.
pub fn analysis_plan(sample_rate: u32) -> Result<StftPlan<f32>> {
    StftPlan::speech_default(sample_rate)
}

pub fn spectrogram(wave: &Waveform) -> Result<ComplexSpectrogram<f32>> {
    analysis_plan(wave.sample_rate)?.analyze(&wave.samples, wave.sample_rate)
}

/// One training utterance in network form.
#[derive(Debug, Clone)]
pub struct Example<T = f32> {
    pub id: String,
    /// Normalized log-magnitude features, T x F.
    pub features: Array2<T>,
    pub noisy_mag: Array2<T>,
    /// Magnitude of the time-aligned anechoic target.
    pub clean_mag: Array2<T>,
    /// One-hot dominance labels, TF x 2.
    pub indicator: Array2<T>,
    pub weights: Array1<T>,
}

impl<T: Real> Example<T> {
    pub fn frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn bins(&self) -> usize {
        self.features.ncols()
    }

    pub fn from_sample(id: impl Into<String>, sample: &MixtureSample) -> Result<Self> {
        let noisy = spectrogram(&sample.mixture)?.magnitude();
        let clean = spectrogram(&sample.anechoic_target)?.magnitude();
        let residual = spectrogram(&sample.residual_reverberation())?.magnitude();
        let ind = make_indicator(&clean, &residual, DEFAULT_FLOOR_DB)?;
        let cast2 = |a: &Array2<f32>| a.mapv(|v| T::of(v as f64));
        Ok(Example {
            id: id.into(),
            features: cast2(&log_mag_features(&noisy)),
            noisy_mag: cast2(&noisy),
            clean_mag: cast2(&clean),
            indicator: cast2(&ind.values),
            weights: ind.weights.mapv(|v| T::of(v as f64)),
        })
    }

    pub fn cast<U: Real>(&self) -> Example<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::of(v.as_f64()));
        Example {
            id: self.id.clone(),
            features: c2(&self.features),
            noisy_mag: c2(&self.noisy_mag),
            clean_mag: c2(&self.clean_mag),
            indicator: c2(&self.indicator),
            weights: self.weights.mapv(|v| U::of(v.as_f64())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn features_are_standardized_per_bin() {
        let mag = arr2(&[[1.0f64, 0.0], [3.0, 0.0], [0.5, 0.0], [7.0, 0.0]]);
        let x = log_mag_features(&mag);
        let col = x.column(0);
        let mean = col.sum() / 4.0;
        let var = col.mapv(|v| (v - mean).powi(2)).sum() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        // a silent bin stays at zero rather than dividing by zero
        assert!(x.column(1).iter().all(|&v| v == 0.0));
    }
}
