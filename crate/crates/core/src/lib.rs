//! Monaural speech denoising and dereverberation.
//!
//! The crate is organised around the processing chain:
//!
//! - [`signal`]: STFT/ISTFT, magnitude masking and WAV I/O.
//! - [`roomsim`]: image-source room impulse responses, SNR mixing, training
//!   targets and dataset manifests.
//! - [`wpe`]: weighted prediction error dereverberation baseline.
//! - [`neural`]: a from-scratch BLSTM engine with a deep-clustering embedding
//!   stage, a supervised mask stage and their joint training.
//! - [`metrics`]: cepstral distance, log-likelihood ratio and SI-SDR, plus
//!   corpus-level reports.
//! - [`cli`]: the config-driven commands behind the `derevkit` binary.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod real;
pub mod roomsim;
pub mod signal;
pub mod wpe;

pub use error::{Error, Result};
pub use real::Real;
pub use signal::{ComplexSpectrogram, MaskMatrix, Waveform};

/// Default sample rate for every waveform handled by the toolkit.
pub const SAMPLE_RATE: u32 = 8000;
