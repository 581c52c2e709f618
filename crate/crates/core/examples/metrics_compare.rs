//! Cepstral distance, log-likelihood ratio and SI-SDR for a few degradations
//! of the same utterance.

use derevkit::metrics::{cd_and_llr, lpc_analyze, si_sdr, LPC_ORDER};
use derevkit::roomsim::synth::{synth_speech, GeneratorKind, GeneratorSpec};
use derevkit::{Result, Waveform, SAMPLE_RATE};

fn main() -> Result<()> {
    let reference = Waveform::new(
        synth_speech(12_000, SAMPLE_RATE, 5).iter().map(|&v| v as f32).collect(),
        SAMPLE_RATE,
    )?;
    let noise = GeneratorSpec {
        kind: GeneratorKind::White,
        seed: 9,
        seconds: 1.5,
    }
    .render(SAMPLE_RATE);
    let add_noise = |gain: f32| -> Waveform {
        let samples = reference.samples.iter().zip(&noise.samples).map(|(s, n)| s + gain * n).collect();
        Waveform { samples, sample_rate: SAMPLE_RATE }
    };
    let mut lowpass = reference.clone();
    for i in (1..lowpass.len()).rev() {
        lowpass.samples[i] = 0.5 * (lowpass.samples[i] + lowpass.samples[i - 1]);
    }

    println!("{:>16} {:>8} {:>8} {:>10}", "condition", "CD dB", "LLR", "SI-SDR dB");
    let cases = [
        ("identical", reference.clone()),
        ("scaled x0.3", reference.scaled(0.3)),
        ("noise, light", add_noise(0.01)),
        ("noise, heavy", add_noise(0.1)),
        ("two-tap lowpass", lowpass),
    ];
    for (name, test) in &cases {
        let (cd, llr) = cd_and_llr(&reference, test)?;
        println!("{name:>16} {cd:>8.3} {llr:>8.3} {:>10.2}", si_sdr(&reference, test)?);
    }

    let frame: Vec<f64> = reference.samples[4000..4256].iter().map(|&v| v as f64).collect();
    if let Some(lpc) = lpc_analyze(&frame, LPC_ORDER) {
        println!("order-{LPC_ORDER} LPC of one voiced frame: {:.3?}", lpc.coefficients);
    }
    Ok(())
}
