use num_complex::Complex;
use rustfft::FftPlanner;

use super::Rir;
use crate::error::{invalid_input, Result};
use crate::signal::Waveform;

/// Full linear convolution (length `x.len() + h.len() - 1`) by FFT overlap-add.
pub fn convolve_samples(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let fft_len = (2 * h.len()).next_power_of_two().max(256);
    let block = fft_len - h.len() + 1;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut h_spec: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    h_spec.resize(fft_len, Complex::new(0.0, 0.0));
    fwd.process(&mut h_spec);

    let scale = 1.0 / fft_len as f64;
    let mut out = vec![0.0; out_len];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    for start in (0..x.len()).step_by(block) {
        let end = (start + block).min(x.len());
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(&x[start..end]) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, hs) in buf.iter_mut().zip(&h_spec) {
            *b *= hs;
        }
        inv.process(&mut buf);
        let valid = (end - start + h.len() - 1).min(out_len - start);
        for (o, b) in out[start..start + valid].iter_mut().zip(&buf) {
            *o += b.re * scale;
        }
    }
    out
}

/// Convolves a waveform with an impulse response; rates must agree.
pub fn convolve(x: &Waveform, h: &Rir) -> Result<Waveform> {
    if x.sample_rate != h.sample_rate {
        return Err(invalid_input(format!(
            "sample rate mismatch: signal {} Hz, impulse response {} Hz",
            x.sample_rate, h.sample_rate
        )));
    }
    let xs: Vec<f64> = x.samples.iter().map(|&v| v as f64).collect();
    let hs: Vec<f64> = h.taps.iter().map(|&v| v as f64).collect();
    let y = convolve_samples(&xs, &hs);
    Waveform::new(y.into_iter().map(|v| v as f32).collect(), x.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for (i, &xv) in x.iter().enumerate() {
            for (j, &hv) in h.iter().enumerate() {
                y[i + j] += xv * hv;
            }
        }
        y
    }

    fn random(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(1000, &mut rng);
        let h = random(200, &mut rng);
        let fast = convolve_samples(&x, &h);
        let slow = naive(&x, &h);
        let peak = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() / peak < 1e-6);
        }
    }

    #[test]
    fn impulse_identities() {
        let x = Waveform::new(vec![0.5, -0.25, 1.0, 0.125], 8000).unwrap();
        let unit = Rir::from_taps(vec![1.0], 8000).unwrap();
        assert_eq!(convolve(&x, &unit).unwrap().samples, x.samples);

        let shifted = Rir::from_taps(vec![0.0, 0.0, 0.0, 0.5], 8000).unwrap();
        let y = convolve(&x, &shifted).unwrap();
        assert_eq!(y.len(), 7);
        assert!(y.samples[..3].iter().all(|v| v.abs() < 1e-12));
        for (a, b) in y.samples[3..].iter().zip(&x.samples) {
            assert!((a - 0.5 * b).abs() < 1e-7);
        }
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let x = Waveform::zeros(10, 8000);
        let h = Rir::from_taps(vec![1.0], 16000).unwrap();
        assert!(convolve(&x, &h).is_err());
    }

    proptest! {
        #[test]
        fn distributes_over_addition(seed in 0u64..1000, nx in 1usize..400, nh in 1usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x1 = random(nx, &mut rng);
            let x2 = random(nx, &mut rng);
            let h = random(nh, &mut rng);
            let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
            let lhs = convolve_samples(&sum, &h);
            let a = convolve_samples(&x1, &h);
            let b = convolve_samples(&x2, &h);
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - a[i] - b[i]).abs() < 1e-6);
            }
        }
    }
}
