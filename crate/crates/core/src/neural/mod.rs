//! Recurrent networks for embedding extraction and mask estimation, their
//! losses, training loops and checkpoint format.

pub mod checkpoint;
pub mod features;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod model;
pub mod network;
pub mod optim;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use features::{log_mag_features, Example};
pub use gradcheck::{grad_check, synthetic_example, GradCheckReport};
pub use loss::{dc_loss, joint_loss, LossValue};
pub use lstm::{blstm_backward, blstm_forward, BlstmParams};
pub use model::{Hyper, ModelKind, ModelParams};
pub use network::{forward_embedding, forward_mask, predict_mask, EmbeddingMatrix};
pub use train::{
    train_baseline_blstm, train_stage1_dc, train_stage2_joint, Dataset, Stage, TrainConfig, TrainLog, TrainOutcome,
};

use crate::error::{invalid_input, Result};
use crate::signal::{apply_mask, reconstruct_with_phase, Waveform};

/// Masks the mixture magnitude and resynthesizes with the mixture phase.
pub fn enhance(params: &ModelParams<f32>, wave: &Waveform) -> Result<Waveform> {
    if wave.is_empty() {
        return Err(invalid_input("cannot enhance an empty waveform"));
    }
    let spec = features::spectrogram(wave)?;
    if spec.num_bins() != params.hyper.freq_bins {
        return Err(invalid_input(format!(
            "model expects {} bins, signal analysis gives {}",
            params.hyper.freq_bins,
            spec.num_bins()
        )));
    }
    let mag = spec.magnitude();
    let mask = predict_mask(params, &log_mag_features(&mag))?;
    let est = apply_mask(&mag, &mask)?;
    reconstruct_with_phase(&est, &spec, wave.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_in_silence_out() {
        let p = ModelParams::<f32>::new(Hyper::proposed(129, 4, 8), 1);
        let out = enhance(&p, &Waveform::zeros(4000, 8000)).unwrap();
        assert_eq!(out.len(), 4000);
        assert!(out.rms() < 1e-4);
    }

    #[test]
    fn output_length_and_determinism() {
        let p = ModelParams::<f32>::new(Hyper::baseline(129, 8), 1);
        let samples: Vec<f32> = (0..3001).map(|i| (i as f32 * 0.07).sin() * 0.3).collect();
        let w = Waveform::new(samples, 8000).unwrap();
        let a = enhance(&p, &w).unwrap();
        assert_eq!(a.len(), 3001);
        assert_eq!(a, enhance(&p, &w).unwrap());
    }
}
