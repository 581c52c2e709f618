//! Image-source impulse responses for one room at several reverberation
//! times, with the decay re-measured from each response.
//!
//! Pass an output directory to also write the responses as WAV files.

use derevkit::roomsim::{generate_rir, measure_rt60, RoomSpec};
use derevkit::signal::wav::write_wav_f32;
use derevkit::{Result, Waveform, SAMPLE_RATE};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    println!("{:>8} {:>10} {:>8} {:>10} {:>12}", "target", "measured", "taps", "direct", "D/R (dB)");
    for rt60 in [0.3, 0.5, 0.8] {
        let room = RoomSpec {
            dims: [6.0, 4.0, 3.0],
            src_pos: [2.0, 1.5, 1.6],
            mic_pos: [4.1, 2.6, 1.4],
            rt60,
            sample_rate: SAMPLE_RATE,
        };
        let rir = generate_rir(&room)?;
        let measured = measure_rt60(&rir)?;
        let direct = rir.direct_only().energy();
        let drr = 10.0 * (direct / (rir.energy() - direct)).log10();
        println!(
            "{rt60:>8.2} {measured:>10.3} {:>8} {:>10} {drr:>12.2}",
            rir.taps.len(),
            rir.direct_index
        );
        if let Some(dir) = &out {
            let w = Waveform::new(rir.taps.clone(), SAMPLE_RATE)?;
            write_wav_f32(dir.join(format!("rir_{:03}ms.wav", (rt60 * 1000.0) as u32)), &w)?;
        }
    }
    Ok(())
}
