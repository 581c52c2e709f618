//! Analysis/synthesis round trip with the 32 ms Hamming front end, plus a
//! masked resynthesis that reuses the mixture phase.

use derevkit::roomsim::synth::synth_speech;
use derevkit::signal::{apply_mask, reconstruct_with_phase, stft, StftPlan};
use derevkit::{MaskMatrix, Result, Waveform, SAMPLE_RATE};

fn main() -> Result<()> {
    let x = synth_speech(12_000, SAMPLE_RATE, 3);
    let plan = StftPlan::<f64>::speech_default(SAMPLE_RATE)?;
    let spec = plan.analyze(&x, SAMPLE_RATE)?;
    println!(
        "{} samples -> {} frames x {} bins (frame {}, hop {})",
        x.len(),
        spec.num_frames(),
        spec.num_bins(),
        plan.frame_len(),
        plan.hop()
    );
    let y = plan.synthesize(&spec, x.len())?;
    let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip max abs error: {err:.3e}");

    // Halve every bin above 2 kHz and resynthesize with the original phase.
    let wave = Waveform::new(x.iter().map(|&v| v as f32).collect(), SAMPLE_RATE)?;
    let spec = stft(&wave, 256, 128)?;
    let cut = 2000 * 256 / SAMPLE_RATE as usize;
    let mut mask = MaskMatrix::<f32>::ones(spec.num_frames(), spec.num_bins());
    mask.values.columns_mut().into_iter().skip(cut).for_each(|mut c| c.fill(0.5));
    let shaped = apply_mask(&spec.magnitude(), &mask)?;
    let out = reconstruct_with_phase(&shaped, &spec, wave.len())?;
    println!("energy after high-band attenuation: {:.1}%", 100.0 * out.energy() / wave.energy());
    Ok(())
}
