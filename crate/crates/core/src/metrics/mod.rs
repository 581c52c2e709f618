//! Cepstral distance, log-likelihood ratio and SI-SDR, plus corpus reports.

pub mod lpc;
pub mod report;

pub use lpc::{lpc_analyze, lpc_cepstrum, LpcFrame};
pub use report::{evaluate_corpus, Aggregate, MetricsReport, RowError, RowMeta, UtteranceScore};

use crate::error::{invalid_input, Result};
use crate::signal::{Waveform, WindowKind};

pub const LPC_ORDER: usize = 10;
pub const CEPSTRUM_ORDER: usize = 20;
pub const CD_MAX_DB: f64 = 10.0;
pub const LLR_MAX: f64 = 2.0;
/// Reference frames quieter than this relative to the loudest are skipped.
pub const ACTIVITY_FLOOR_DB: f64 = -40.0;
pub const SI_SDR_CAP_DB: f64 = 60.0;
/// Share of the lowest LLR frames kept in the utterance average.
pub const LLR_KEEP: f64 = 0.95;

/// LPC analyses of one frame pair; `test` is `None` for a silent test frame.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub reference: LpcFrame,
    pub test: Option<LpcFrame>,
}

fn frame_geometry(sample_rate: u32) -> (usize, usize) {
    let len = (0.032 * sample_rate as f64).round() as usize;
    (len, len / 2)
}

/// Hann-windowed 32 ms / 16 ms frames of both signals, analysed where the
/// reference is active. The test signal is zero padded or truncated to the
/// reference length.
pub fn analysis_frames(reference: &Waveform, test: &Waveform) -> Result<Vec<FramePair>> {
    if reference.sample_rate != test.sample_rate {
        return Err(invalid_input(format!(
            "sample rates differ: {} vs {}",
            reference.sample_rate, test.sample_rate
        )));
    }
    let (len, hop) = frame_geometry(reference.sample_rate);
    let window: Vec<f64> = WindowKind::Hann.coefficients(len);
    let r: Vec<f64> = reference.samples.iter().map(|&v| v as f64).collect();
    let mut t: Vec<f64> = test.samples.iter().map(|&v| v as f64).collect();
    t.resize(r.len(), 0.0);
    let count = if r.len() <= len { 1 } else { 1 + (r.len() - len) / hop };
    let frame = |x: &[f64], i: usize| -> Vec<f64> {
        (0..len)
            .map(|n| x.get(i * hop + n).copied().unwrap_or(0.0) * window[n])
            .collect()
    };
    let ref_frames: Vec<Vec<f64>> = (0..count).map(|i| frame(&r, i)).collect();
    let energies: Vec<f64> = ref_frames.iter().map(|f| f.iter().map(|v| v * v).sum()).collect();
    let peak = energies.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(invalid_input("reference signal is silent"));
    }
    let floor = peak * 10f64.powf(ACTIVITY_FLOOR_DB / 10.0);
    let mut out = Vec::new();
    for (i, (rf, e)) in ref_frames.iter().zip(&energies).enumerate() {
        if *e < floor {
            continue;
        }
        let Some(reference) = lpc_analyze(rf, LPC_ORDER) else {
            continue;
        };
        out.push(FramePair {
            reference,
            test: lpc_analyze(&frame(&t, i), LPC_ORDER),
        });
    }
    if out.is_empty() {
        return Err(invalid_input("reference has no analysable frames"));
    }
    Ok(out)
}

pub fn frame_cd(pair: &FramePair) -> f64 {
    let Some(test) = &pair.test else {
        return CD_MAX_DB;
    };
    let cr = lpc_cepstrum(&pair.reference.coefficients, CEPSTRUM_ORDER);
    let ct = lpc_cepstrum(&test.coefficients, CEPSTRUM_ORDER);
    let sq: f64 = cr.iter().zip(&ct).map(|(a, b)| (a - b).powi(2)).sum();
    (10.0 / std::f64::consts::LN_10 * (2.0 * sq).sqrt()).clamp(0.0, CD_MAX_DB)
}

fn quadratic_form(r: &[f64], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i] * r[i.abs_diff(j)] * a[j];
        }
    }
    s
}

pub fn frame_llr(pair: &FramePair) -> f64 {
    let Some(test) = &pair.test else {
        return LLR_MAX;
    };
    let r = &pair.reference.autocorr;
    let num = quadratic_form(r, &test.polynomial());
    let den = quadratic_form(r, &pair.reference.polynomial());
    if !(den > 0.0) {
        return LLR_MAX;
    }
    (num / den).ln().clamp(0.0, LLR_MAX)
}

/// Mean frame cepstral distance in dB over active reference frames.
pub fn cepstral_distance(reference: &Waveform, test: &Waveform) -> Result<f64> {
    let frames = analysis_frames(reference, test)?;
    Ok(frames.iter().map(frame_cd).sum::<f64>() / frames.len() as f64)
}

fn trimmed_llr(frames: &[FramePair]) -> f64 {
    let mut v: Vec<f64> = frames.iter().map(frame_llr).collect();
    v.sort_by(f64::total_cmp);
    let keep = ((LLR_KEEP * v.len() as f64).round() as usize).clamp(1, v.len());
    v[..keep].iter().sum::<f64>() / keep as f64
}

/// Log-likelihood ratio averaged over the lowest 95% of active frames.
pub fn llr(reference: &Waveform, test: &Waveform) -> Result<f64> {
    Ok(trimmed_llr(&analysis_frames(reference, test)?))
}

/// Both LPC measures from one framing pass.
pub fn cd_and_llr(reference: &Waveform, test: &Waveform) -> Result<(f64, f64)> {
    let frames = analysis_frames(reference, test)?;
    let cd = frames.iter().map(frame_cd).sum::<f64>() / frames.len() as f64;
    Ok((cd, trimmed_llr(&frames)))
}

/// Scale-invariant SDR on zero-mean signals, limited to +-60 dB.
pub fn si_sdr(reference: &Waveform, test: &Waveform) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(invalid_input(format!(
            "si-sdr needs equal lengths, got {} and {}",
            reference.len(),
            test.len()
        )));
    }
    let zero_mean = |w: &Waveform| -> Vec<f64> {
        let m = w.samples.iter().map(|&v| v as f64).sum::<f64>() / w.len().max(1) as f64;
        w.samples.iter().map(|&v| v as f64 - m).collect()
    };
    let r = zero_mean(reference);
    let t = zero_mean(test);
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if !(rr > 0.0) {
        return Err(invalid_input("si-sdr reference is silent"));
    }
    let alpha = r.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let err: f64 = r.iter().zip(&t).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    if !(err > 0.0) {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / err).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}
