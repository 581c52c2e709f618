use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{convolve, ManifestRow, Rir};
use crate::error::{invalid_input, Result};
use crate::signal::Waveform;

/// Peak level of the mixture after synthesis; all components share the gain.
const MIXTURE_PEAK: f64 = 0.9;

/// One simulated utterance: `mixture = reverberant_speech + noise` samplewise.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSample {
    pub mixture: Waveform,
    /// Direct-path component of the reverberant speech (delay and level preserved).
    pub anechoic_target: Waveform,
    pub reverberant_speech: Waveform,
    pub noise: Waveform,
    pub snr_db: f64,
    pub rt60: f64,
    pub noise_id: String,
    pub rir_id: String,
}

impl MixtureSample {
    /// Late reverberation plus early reflections: everything but the direct path.
    pub fn residual_reverberation(&self) -> Waveform {
        Waveform {
            samples: self
                .reverberant_speech
                .samples
                .iter()
                .zip(&self.anechoic_target.samples)
                .map(|(r, a)| r - a)
                .collect(),
            sample_rate: self.reverberant_speech.sample_rate,
        }
    }
}

/// Clean speech convolved with the direct-path pulse of `h` only.
pub fn direct_path_target(x: &Waveform, h: &Rir) -> Result<Waveform> {
    convolve(x, &h.direct_only())
}

/// Result of [`mix_at_snr`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledNoise {
    pub noise: Waveform,
    pub mixture: Waveform,
    pub gain: f64,
    /// Start of the noise segment that was cut from the source.
    pub offset: usize,
}

/// 10 log10(E_speech / E_noise).
pub fn measure_snr_db(speech: &Waveform, noise: &Waveform) -> f64 {
    10.0 * (speech.energy() / noise.energy()).log10()
}

/// Cuts a random noise segment as long as the speech and scales it to the
/// requested SNR against the reverberant speech.
pub fn mix_at_snr<R: Rng + ?Sized>(
    reverberant_speech: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    rng: &mut R,
) -> Result<ScaledNoise> {
    let n = reverberant_speech.len();
    if noise.sample_rate != reverberant_speech.sample_rate {
        return Err(invalid_input("speech and noise sample rates differ"));
    }
    if noise.len() < n {
        return Err(invalid_input(format!(
            "noise has {} samples, speech needs {n}",
            noise.len()
        )));
    }
    if !snr_db.is_finite() {
        return Err(invalid_input("SNR must be finite"));
    }
    let speech_energy = reverberant_speech.energy();
    if speech_energy <= 0.0 {
        return Err(invalid_input("speech is silent"));
    }
    let offset = if noise.len() > n {
        rng.random_range(0..=noise.len() - n)
    } else {
        0
    };
    let segment = &noise.samples[offset..offset + n];
    let noise_energy: f64 = segment.iter().map(|&v| (v as f64).powi(2)).sum();
    if noise_energy <= 0.0 {
        return Err(invalid_input("noise segment is silent"));
    }
    let gain = (speech_energy / (noise_energy * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f32> = segment.iter().map(|&v| (v as f64 * gain) as f32).collect();
    let mixture: Vec<f32> = reverberant_speech
        .samples
        .iter()
        .zip(&scaled)
        .map(|(s, v)| s + v)
        .collect();
    let rate = reverberant_speech.sample_rate;
    Ok(ScaledNoise {
        noise: Waveform::new(scaled, rate)?,
        mixture: Waveform::new(mixture, rate)?,
        gain,
        offset,
    })
}

/// Builds a complete training/test utterance for one manifest row. All
/// signals are cut to the clean-speech length and share one gain that puts
/// the mixture peak at a fixed level.
pub fn synthesize_sample(
    clean: &Waveform,
    rir: &Rir,
    noise: &Waveform,
    row: &ManifestRow,
) -> Result<MixtureSample> {
    let len = clean.len();
    let reverberant = convolve(clean, rir)?.fit_to(len);
    let target = direct_path_target(clean, rir)?.fit_to(len);
    let mut rng = ChaCha8Rng::seed_from_u64(row.seed);
    let mixed = mix_at_snr(&reverberant, noise, row.snr_db, &mut rng)?;

    let peak = mixed
        .mixture
        .samples
        .iter()
        .fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    let gain = if peak > 0.0 { (MIXTURE_PEAK / peak) as f32 } else { 1.0 };
    let reverberant_speech = reverberant.scaled(gain);
    let noise = mixed.noise.scaled(gain);
    let mixture = Waveform {
        samples: reverberant_speech
            .samples
            .iter()
            .zip(&noise.samples)
            .map(|(s, n)| s + n)
            .collect(),
        sample_rate: clean.sample_rate,
    };
    Ok(MixtureSample {
        mixture,
        anechoic_target: target.scaled(gain),
        reverberant_speech,
        noise,
        snr_db: row.snr_db,
        rt60: row.rt60,
        noise_id: row.noise_id(),
        rir_id: row.rir_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roomsim::{generate_rir, RoomSpec};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..len)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                (0.1 * v) as f32
            })
            .collect();
        Waveform::new(s, 8000).unwrap()
    }

    #[test]
    fn zero_db_equalises_energy() {
        let s = noise(4000, 1);
        let n = noise(6000, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = mix_at_snr(&s, &n, 0.0, &mut rng).unwrap();
        assert!((m.noise.energy() / s.energy() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ten_db_ratio() {
        let s = noise(4000, 4);
        let n = noise(4000, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = mix_at_snr(&s, &n, 10.0, &mut rng).unwrap();
        assert!((s.energy() / m.noise.energy() - 10.0).abs() < 1e-4);
    }

    #[test]
    fn silent_or_short_inputs_are_rejected() {
        let s = noise(4000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mix_at_snr(&Waveform::zeros(4000, 8000), &s, 0.0, &mut rng).is_err());
        assert!(mix_at_snr(&s, &Waveform::zeros(4000, 8000), 0.0, &mut rng).is_err());
        assert!(mix_at_snr(&s, &noise(100, 2), 0.0, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn mixture_is_exact_sum_and_snr_holds(seed in 0u64..500, snr in -10.0f64..20.0) {
            let s = noise(2000, seed);
            let n = noise(3000, seed + 1000);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = mix_at_snr(&s, &n, snr, &mut rng).unwrap();
            for i in 0..s.len() {
                prop_assert_eq!(m.mixture.samples[i], s.samples[i] + m.noise.samples[i]);
            }
            prop_assert!((measure_snr_db(&s, &m.noise) - snr).abs() < 0.01);
        }
    }

    fn test_room(rt60: f64) -> RoomSpec {
        RoomSpec {
            dims: [6.0, 4.0, 3.0],
            src_pos: [1.5, 1.2, 1.5],
            mic_pos: [3.8, 2.7, 1.4],
            rt60,
            sample_rate: 8000,
        }
    }

    #[test]
    fn anechoic_room_target_equals_reverberant() {
        let x = noise(3000, 9);
        let rir = generate_rir(&test_room(0.0)).unwrap();
        let target = direct_path_target(&x, &rir).unwrap();
        let rev = convolve(&x, &rir).unwrap();
        assert_eq!(target, rev);
    }

    #[test]
    fn unit_impulse_target_is_input() {
        let x = noise(500, 10);
        let rir = Rir::from_taps(vec![1.0, 0.3, 0.1], 8000).unwrap();
        let target = direct_path_target(&x, &rir).unwrap().fit_to(x.len());
        for (a, b) in target.samples.iter().zip(&x.samples) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn target_has_less_energy_than_reverberant() {
        let x = noise(8000, 11);
        for rt60 in [0.3, 0.6, 1.0] {
            let rir = generate_rir(&test_room(rt60)).unwrap();
            let target = direct_path_target(&x, &rir).unwrap();
            let rev = convolve(&x, &rir).unwrap();
            assert!(target.energy() / rev.energy() < 1.0);
        }
    }
}
