//! Autocorrelation-method linear prediction.

/// Predictor `A(z) = 1 - sum a_i z^-i` of one analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcFrame {
    /// `a_1 .. a_p`.
    pub coefficients: Vec<f64>,
    /// Prediction error power.
    pub gain: f64,
    /// `r_0 .. r_p`, normalized by the frame length.
    pub autocorr: Vec<f64>,
    pub reflection: Vec<f64>,
}

impl LpcFrame {
    /// `[1, -a_1, ..., -a_p]`.
    pub fn polynomial(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.coefficients.iter().map(|a| -a)).collect()
    }
}

pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let n = frame.len().max(1) as f64;
    (0..=max_lag)
        .map(|k| {
            if k >= frame.len() {
                0.0
            } else {
                frame[..frame.len() - k].iter().zip(&frame[k..]).map(|(a, b)| a * b).sum::<f64>() / n
            }
        })
        .collect()
}

/// Levinson-Durbin recursion. `None` for a silent or degenerate frame.
pub fn levinson(r: &[f64], order: usize) -> Option<LpcFrame> {
    if r.len() <= order || !(r[0] > 0.0) || !r[0].is_finite() {
        return None;
    }
    let mut a = vec![0.0; order];
    let mut err = r[0];
    let mut reflection = Vec::with_capacity(order);
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        if !(k.abs() < 1.0) {
            return None;
        }
        let prev = a.clone();
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        reflection.push(k);
    }
    Some(LpcFrame {
        coefficients: a,
        gain: err,
        autocorr: r[..=order].to_vec(),
        reflection,
    })
}

/// Autocorrelation method on an already windowed frame.
pub fn lpc_analyze(frame: &[f64], order: usize) -> Option<LpcFrame> {
    if frame.len() <= order {
        return None;
    }
    levinson(&autocorrelation(frame, order), order)
}

/// Cepstrum `c_1 .. c_q` of the all-pole model `1 / A(z)`.
pub fn lpc_cepstrum(a: &[f64], q: usize) -> Vec<f64> {
    let p = a.len();
    let mut c = vec![0.0; q + 1];
    for n in 1..=q {
        let mut v = if n <= p { a[n - 1] } else { 0.0 };
        for k in 1..n {
            if n - k <= p {
                v += (k as f64 / n as f64) * c[k] * a[n - k - 1];
            }
        }
        c[n] = v;
    }
    c.split_off(1)
}
