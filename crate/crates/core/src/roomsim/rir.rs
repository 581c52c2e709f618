use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Length of the windowed-sinc fractional delay kernel.
pub const SINC_TAPS: usize = 81;
const HALF_TAPS: isize = (SINC_TAPS / 2) as isize;

/// Shoebox room with one source and one microphone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dims: [f64; 3],
    pub src_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    pub rt60: f64,
    pub sample_rate: u32,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            let l = self.dims[axis];
            if !(l > 0.0) {
                return Err(invalid_input(format!("room dimension {axis} must be positive")));
            }
            for (name, p) in [("source", self.src_pos), ("microphone", self.mic_pos)] {
                if !(p[axis] > 0.0 && p[axis] < l) {
                    return Err(invalid_input(format!(
                        "{name} coordinate {axis} = {} lies outside the room (0, {l})",
                        p[axis]
                    )));
                }
            }
        }
        if self.distance() <= 0.0 {
            return Err(invalid_input("source and microphone coincide"));
        }
        if !(0.0..=2.0).contains(&self.rt60) {
            return Err(invalid_input(format!("rt60 {} outside [0, 2] s", self.rt60)));
        }
        if self.rt60 > 0.0 && self.rt60 < 0.1 {
            return Err(invalid_input("rt60 must be 0 (anechoic) or at least 0.1 s"));
        }
        if self.sample_rate == 0 {
            return Err(invalid_input("sample rate must be positive"));
        }
        Ok(())
    }

    pub fn distance(&self) -> f64 {
        dist(self.src_pos, self.mic_pos)
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform pressure reflection coefficient from Eyring's reverberation formula.
    pub fn reflection_coefficient(&self) -> Result<f64> {
        if self.rt60 == 0.0 {
            return Ok(0.0);
        }
        // RT60 = 0.161 V / (-S ln(1 - alpha)), beta = sqrt(1 - alpha)
        let beta = (-0.161 * self.volume() / (2.0 * self.surface() * self.rt60)).exp();
        if !beta.is_finite() || beta >= 1.0 {
            return Err(Error::Infeasible(format!(
                "rt60 {} s is not reachable in a {:?} m room",
                self.rt60, self.dims
            )));
        }
        Ok(beta)
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Location and gain of the direct-path pulse inside an impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectPath {
    /// Fractional delay in samples.
    pub delay: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f32>,
    pub sample_rate: u32,
    /// Sample index of the direct-path peak.
    pub direct_index: usize,
    pub direct: DirectPath,
}

impl Rir {
    /// Wraps measured or hand-made taps; the largest tap is taken as the direct path.
    pub fn from_taps(taps: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(invalid_input("impulse response must be non-empty and finite"));
        }
        let (idx, &peak) = taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty");
        Ok(Rir {
            direct_index: idx,
            direct: DirectPath {
                delay: idx as f64,
                gain: peak as f64,
            },
            taps,
            sample_rate,
        })
    }

    /// Impulse response containing only the direct-path pulse.
    pub fn direct_only(&self) -> Rir {
        let mut acc = vec![0.0f64; self.taps.len()];
        add_pulse(&mut acc, self.direct.delay, self.direct.gain, &SincKernel::new());
        Rir {
            taps: acc.into_iter().map(|v| v as f32).collect(),
            sample_rate: self.sample_rate,
            direct_index: self.direct_index,
            direct: self.direct,
        }
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|&t| (t as f64).powi(2)).sum()
    }
}

/// Hann-windowed sinc interpolator with cached window terms.
struct SincKernel {
    cos_k: Vec<f64>,
    sin_k: Vec<f64>,
}

impl SincKernel {
    fn new() -> Self {
        let w = 2.0 * PI / SINC_TAPS as f64;
        let ks = -HALF_TAPS - 1..=HALF_TAPS + 1;
        SincKernel {
            cos_k: ks.clone().map(|k| (w * k as f64).cos()).collect(),
            sin_k: ks.map(|k| (w * k as f64).sin()).collect(),
        }
    }
}

fn add_pulse(acc: &mut [f64], delay: f64, gain: f64, kernel: &SincKernel) {
    let base = delay.floor();
    let frac = delay - base;
    let base = base as isize;
    let w = 2.0 * PI / SINC_TAPS as f64;
    let (cf, sf) = ((w * frac).cos(), (w * frac).sin());
    let s0 = (PI * frac).sin();
    let half = SINC_TAPS as f64 / 2.0;
    for k in -HALF_TAPS..=HALF_TAPS + 1 {
        let n = base + k;
        if n < 0 || n as usize >= acc.len() {
            continue;
        }
        // u = n - delay = k - frac
        let u = k as f64 - frac;
        if u.abs() >= half {
            continue;
        }
        let ki = (k + HALF_TAPS + 1) as usize;
        // cos(w (k - frac)) via angle subtraction
        let window = 0.5 * (1.0 + kernel.cos_k[ki] * cf + kernel.sin_k[ki] * sf);
        let sinc = if u == 0.0 {
            1.0
        } else {
            // sin(pi (k - frac)) = (-1)^(k+1) sin(pi frac)
            let sign = if k.rem_euclid(2) == 0 { -1.0 } else { 1.0 };
            sign * s0 / (PI * u)
        };
        acc[n as usize] += gain * window * sinc;
    }
}

/// Image-source impulse response for a shoebox room.
pub fn generate_rir(room: &RoomSpec) -> Result<Rir> {
    room.validate()?;
    let beta = room.reflection_coefficient()?;
    let fs = room.sample_rate as f64;
    let d0 = room.distance();
    let direct_delay = d0 / SPEED_OF_SOUND * fs;
    let body = ((room.rt60 * fs).ceil() as usize).max(direct_delay.ceil() as usize + 1);
    let len = body + SINC_TAPS;
    let mut acc = vec![0.0f64; len];
    let kernel = SincKernel::new();
    let direct = DirectPath {
        delay: direct_delay,
        gain: 1.0 / (4.0 * PI * d0),
    };

    if room.rt60 == 0.0 {
        add_pulse(&mut acc, direct.delay, direct.gain, &kernel);
    } else {
        let images = enumerate_images(room, len);
        let ln_beta = calibrate_ln_beta(&images, beta.ln(), room.rt60, direct_delay, len, fs);
        for im in &images {
            let gain = (im.reflections as f64 * ln_beta).exp() / (4.0 * PI * im.distance);
            add_pulse(&mut acc, im.delay, gain, &kernel);
        }
    }

    let taps: Vec<f32> = acc.into_iter().map(|v| v as f32).collect();
    let direct_index = (direct.delay.round() as usize).min(taps.len() - 1);
    Ok(Rir {
        taps,
        sample_rate: room.sample_rate,
        direct_index,
        direct,
    })
}

struct Image {
    delay: f64,
    distance: f64,
    reflections: u32,
}

/// Image sources up to `c * rt60 * 1.1` metres whose pulse lands inside `len`.
fn enumerate_images(room: &RoomSpec, len: usize) -> Vec<Image> {
    let fs = room.sample_rate as f64;
    let max_dist = SPEED_OF_SOUND * room.rt60 * 1.1;
    let bounds: Vec<i64> = room
        .dims
        .iter()
        .map(|l| (max_dist / (2.0 * l)).ceil() as i64 + 1)
        .collect();
    // Per-axis image offsets and reflection counts.
    let axis_images = |axis: usize| -> Vec<(f64, i64)> {
        let l = room.dims[axis];
        let s = room.src_pos[axis];
        let m = room.mic_pos[axis];
        let mut out = Vec::new();
        for n in -bounds[axis]..=bounds[axis] {
            for q in 0..2i64 {
                let pos = (1 - 2 * q) as f64 * s + 2.0 * n as f64 * l;
                out.push((pos - m, (n - q).abs() + n.abs()));
            }
        }
        out
    };
    let (xs, ys, zs) = (axis_images(0), axis_images(1), axis_images(2));
    let max_sq = max_dist * max_dist;
    let mut images = Vec::new();
    for &(dx, rx) in &xs {
        if dx * dx > max_sq {
            continue;
        }
        for &(dy, ry) in &ys {
            let dxy = dx * dx + dy * dy;
            if dxy > max_sq {
                continue;
            }
            for &(dz, rz) in &zs {
                let d2 = dxy + dz * dz;
                if d2 > max_sq {
                    continue;
                }
                let d = d2.sqrt();
                let delay = d / SPEED_OF_SOUND * fs;
                if delay - (HALF_TAPS as f64) >= len as f64 {
                    continue;
                }
                images.push(Image {
                    delay,
                    distance: d,
                    reflections: (rx + ry + rz) as u32,
                });
            }
        }
    }
    images
}

/// Adjusts the log reflection coefficient so the Schroeder decay of the
/// image set matches `rt60`.
///
/// Eyring's value assumes a diffuse field; a shoebox image lattice decays
/// non-exponentially (paths grazing the long axis reflect rarely) and comes
/// out noticeably longer, so Eyring is only the starting point. Energy is
/// binned per sample without the interpolation kernel, which leaves the
/// decay slope unchanged.
fn calibrate_ln_beta(
    images: &[Image],
    eyring_ln_beta: f64,
    rt60: f64,
    direct_delay: f64,
    len: usize,
    fs: f64,
) -> f64 {
    let start = direct_delay.round() as usize;
    // Pulses are summed as amplitudes: with a positive reflection coefficient
    // overlapping late images add coherently. Amplitudes are pre-summed per
    // (sample, reflection count) so each trial is a short polynomial per sample.
    let max_refl = images.iter().map(|im| im.reflections).max().unwrap_or(0) as usize;
    let stride = max_refl + 1;
    let mut table = vec![0.0f64; (len + 1) * stride];
    for im in images {
        let base = im.delay.floor();
        let frac = im.delay - base;
        let bin = base as usize;
        if bin < len {
            let g = 1.0 / (4.0 * PI * im.distance);
            let r = im.reflections as usize;
            table[bin * stride + r] += g * (1.0 - frac);
            table[(bin + 1) * stride + r] += g * frac;
        }
    }
    let measure = |ln_beta: f64| -> Option<f64> {
        let powers: Vec<f64> = (0..stride).map(|r| (r as f64 * ln_beta).exp()).collect();
        let energy: Vec<f64> = table[start.min(len - 1) * stride..len * stride]
            .chunks_exact(stride)
            .map(|row| {
                let a: f64 = row.iter().zip(&powers).map(|(x, p)| x * p).sum();
                a * a
            })
            .collect();
        schroeder_fit(&energy, fs).ok()
    };
    // Measured decay shrinks as the Eyring exponent is scaled up by e^k.
    // Step away from k = 0 until the target is bracketed, then bisect.
    let above = |k: f64| measure(eyring_ln_beta * k.exp()).map(|t| t > rt60);
    let (mut lo, mut hi) = match above(0.0) {
        Some(true) => {
            let mut k = 0.0;
            loop {
                k += 0.25;
                match above(k) {
                    Some(false) => break (k - 0.25, k),
                    Some(true) if k < 3.0 => {}
                    _ => return eyring_ln_beta,
                }
            }
        }
        Some(false) => {
            let mut k = 0.0;
            loop {
                k -= 0.25;
                match above(k) {
                    Some(true) => break (k, k + 0.25),
                    Some(false) if k > -1.0 => {}
                    _ => return eyring_ln_beta,
                }
            }
        }
        None => return eyring_ln_beta,
    };
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        match above(mid) {
            Some(true) => lo = mid,
            _ => hi = mid,
        }
    }
    eyring_ln_beta * (0.5 * (lo + hi)).exp()
}

/// Reverberation time from Schroeder backward integration, fitted on the
/// -5 dB to -25 dB range of the decay curve and extrapolated to 60 dB.
pub fn measure_rt60(rir: &Rir) -> Result<f64> {
    let energy: Vec<f64> = rir.taps[rir.direct_index..]
        .iter()
        .map(|&t| (t as f64).powi(2))
        .collect();
    schroeder_fit(&energy, rir.sample_rate as f64)
}

/// Schroeder fit on per-sample energies starting at the direct path.
fn schroeder_fit(energy: &[f64], fs: f64) -> Result<f64> {
    let mut edc = vec![0.0f64; energy.len()];
    let mut acc = 0.0;
    for i in (0..energy.len()).rev() {
        acc += energy[i];
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return Err(Error::InsufficientDecay { range_db: 0.0 });
    }
    let db: Vec<f64> = edc
        .iter()
        .map(|&e| if e > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect();
    let i5 = db.iter().position(|&v| v <= -5.0);
    let i25 = db.iter().position(|&v| v <= -25.0);
    let (i5, i25) = match (i5, i25) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let floor = db.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::min);
            return Err(Error::InsufficientDecay { range_db: -floor });
        }
    };
    // A decay that completes inside the direct-path kernel carries no reverberation.
    if i25 <= HALF_TAPS as usize || i25 <= i5 + 1 {
        return Err(Error::InsufficientDecay {
            range_db: -db[(HALF_TAPS as usize + 1).min(db.len() - 1)].max(-300.0),
        });
    }
    let pts: Vec<(f64, f64)> = (i5..i25)
        .filter(|&i| db[i].is_finite())
        .map(|i| (i as f64, db[i]))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope_per_sample = sxy / sxx;
    if !(slope_per_sample < 0.0) {
        return Err(Error::Numeric("decay curve does not decrease".into()));
    }
    Ok(-60.0 / (slope_per_sample * fs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn room(rt60: f64) -> RoomSpec {
        RoomSpec {
            dims: [6.0, 4.0, 3.0],
            src_pos: [2.0, 1.5, 1.6],
            mic_pos: [4.1, 2.6, 1.3],
            rt60,
            sample_rate: 8000,
        }
    }

    #[test]
    fn anechoic_rir_is_single_pulse() {
        let r = room(0.0);
        let rir = generate_rir(&r).unwrap();
        let d = r.distance();
        let delay = d / SPEED_OF_SOUND * 8000.0;
        let mut expected = vec![0.0f64; rir.taps.len()];
        add_pulse(&mut expected, delay, 1.0 / (4.0 * PI * d), &SincKernel::new());
        for (a, b) in rir.taps.iter().zip(&expected) {
            assert!((*a as f64 - b).abs() < 1e-7);
        }
        assert_eq!(rir.direct_index, delay.round() as usize);
        let nonzero = rir.taps.iter().filter(|t| t.abs() > 0.0).count();
        assert!(nonzero <= SINC_TAPS);
    }

    #[test]
    fn integer_delay_pulse_is_exact_impulse() {
        let mut acc = vec![0.0; 100];
        add_pulse(&mut acc, 50.0, 0.7, &SincKernel::new());
        for (i, v) in acc.iter().enumerate() {
            if i == 50 {
                assert!((v - 0.7).abs() < 1e-15);
            } else {
                assert!(v.abs() < 1e-15, "tap {i} = {v}");
            }
        }
    }

    #[test]
    fn measured_rt60_tracks_target() {
        let rir = generate_rir(&room(0.5)).unwrap();
        let t = measure_rt60(&rir).unwrap();
        assert!((0.4..=0.6).contains(&t), "measured {t}");
        for target in [0.3, 0.8, 1.0] {
            let t = measure_rt60(&generate_rir(&room(target)).unwrap()).unwrap();
            assert!((t / target - 1.0).abs() <= 0.2, "target {target} measured {t}");
        }
    }

    #[test]
    fn rt60_sweep_gives_distinct_rirs() {
        let rirs: Vec<Rir> = (1..=10).map(|k| generate_rir(&room(0.2 * k as f64)).unwrap()).collect();
        for i in 0..rirs.len() {
            for j in i + 1..rirs.len() {
                assert_ne!(rirs[i].taps, rirs[j].taps);
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_rir(&room(0.4)).unwrap(), generate_rir(&room(0.4)).unwrap());
    }

    #[test]
    fn invalid_rooms_are_rejected() {
        let mut r = room(0.5);
        r.src_pos[0] = 6.5;
        assert!(generate_rir(&r).is_err());
        let mut r = room(0.5);
        r.mic_pos = r.src_pos;
        assert!(generate_rir(&r).is_err());
        assert!(generate_rir(&room(2.5)).is_err());
        assert!(generate_rir(&room(0.05)).is_err());
    }

    fn decaying_noise(rt60: f64, seconds: f64, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (seconds * 8000.0) as usize;
        (0..n)
            .map(|i| {
                let t = i as f64 / 8000.0;
                let g: f64 = StandardNormal.sample(&mut rng);
                (g * (-6.9 * t / rt60).exp()) as f32
            })
            .collect()
    }

    #[test]
    fn exponential_decay_oracle() {
        let rir = Rir::from_taps(decaying_noise(0.5, 1.0, 11), 8000).unwrap();
        let t = measure_rt60(&rir).unwrap();
        assert!((t - 0.5).abs() <= 0.05, "measured {t}");
    }

    #[test]
    fn leading_silence_does_not_change_estimate() {
        let taps = decaying_noise(0.5, 1.0, 12);
        let a = measure_rt60(&Rir::from_taps(taps.clone(), 8000).unwrap()).unwrap();
        let mut shifted = vec![0.0f32; 1600];
        shifted.extend(taps);
        let b = measure_rt60(&Rir::from_taps(shifted, 8000).unwrap()).unwrap();
        assert!(((a - b) / a).abs() < 0.01);
    }

    #[test]
    fn direct_only_has_insufficient_decay() {
        let rir = generate_rir(&room(0.0)).unwrap();
        assert!(matches!(measure_rt60(&rir), Err(Error::InsufficientDecay { .. })));
    }
}
