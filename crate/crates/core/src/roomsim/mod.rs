//! Room acoustics simulation and training-data synthesis.
//!
//! Impulse responses come from the image-source method with a uniform wall
//! reflection coefficient derived from Eyring's formula. Mixtures follow
//! `y = x * h + n` with the noise scaled against the reverberant speech.

mod convolve;
mod indicator;
pub mod manifest;
mod mix;
mod rir;
pub mod synth;

pub use convolve::{convolve, convolve_samples};
pub use indicator::{make_indicator, IndicatorMatrix, DEFAULT_FLOOR_DB};
pub use manifest::{build_manifest, ManifestRow, SimulationConfig, SplitConfig};
pub use mix::{direct_path_target, measure_snr_db, mix_at_snr, synthesize_sample, MixtureSample, ScaledNoise};
pub use rir::{generate_rir, measure_rt60, DirectPath, Rir, RoomSpec, SINC_TAPS, SPEED_OF_SOUND};
