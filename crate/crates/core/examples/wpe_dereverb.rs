//! Single-channel WPE on a noise-free reverberant utterance, scored against
//! the direct-path target before and after.

use derevkit::metrics::{cd_and_llr, si_sdr};
use derevkit::roomsim::synth::synth_speech;
use derevkit::roomsim::{convolve, direct_path_target, generate_rir, RoomSpec};
use derevkit::wpe::{wpe_dereverb_traced, wpe_enhance_wave, WpeConfig};
use derevkit::signal::stft;
use derevkit::{Result, Waveform, SAMPLE_RATE};

fn main() -> Result<()> {
    let rt60: f64 = std::env::args().nth(1).map_or(Ok(0.7), |s| s.parse()).expect("RT60 in seconds");
    let clean = synth_speech(16_000, SAMPLE_RATE, 11);
    let clean = Waveform::new(clean.iter().map(|&v| v as f32).collect(), SAMPLE_RATE)?;
    let rir = generate_rir(&RoomSpec {
        dims: [6.0, 4.0, 3.0],
        src_pos: [1.5, 1.2, 1.5],
        mic_pos: [4.3, 2.9, 1.5],
        rt60,
        sample_rate: SAMPLE_RATE,
    })?;
    let reverberant = convolve(&clean, &rir)?.fit_to(clean.len());
    let target = direct_path_target(&clean, &rir)?.fit_to(clean.len());

    let cfg = WpeConfig::default();
    let (_, objective) = wpe_dereverb_traced(&stft(&reverberant, 256, 128)?, &cfg)?;
    let band = 20;
    println!("objective of band {band} per iteration: {:.2?}", objective[band]);

    let out = wpe_enhance_wave(&reverberant, &cfg)?;
    for (name, w) in [("reverberant", &reverberant), ("wpe", &out)] {
        let (cd, llr) = cd_and_llr(&target, w)?;
        println!("{name:>12}: CD {cd:.3} dB  LLR {llr:.3}  SI-SDR {:.2} dB", si_sdr(&target, w)?);
    }
    Ok(())
}
