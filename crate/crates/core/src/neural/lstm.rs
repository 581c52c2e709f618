//! Bidirectional LSTM layer with hand-written backpropagation through time.
//!
//! Gate rows are stacked as `[input, forget, cell, output]`, each `hidden`
//! rows tall. The layer output concatenates the forward-time and
//! backward-time hidden states, giving `T x 2H`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection<T> {
    /// 4H x input
    pub w_ih: Array2<T>,
    /// 4H x H
    pub w_hh: Array2<T>,
    /// 4H
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlstmParams<T> {
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> LstmDirection<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmDirection {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound_ih = 1.0 / (input as f64).sqrt();
        let bound_hh = 1.0 / (hidden as f64).sqrt();
        let mut d = Self::zeros(input, hidden);
        d.w_ih.mapv_inplace(|_| T::of(rng.random_range(-bound_ih..bound_ih)));
        d.w_hh.mapv_inplace(|_| T::of(rng.random_range(-bound_hh..bound_hh)));
        d.bias.slice_mut(s![hidden..2 * hidden]).fill(T::one());
        d
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.ncols()
    }

    fn run(&self, x: ArrayView2<T>, reverse: bool) -> DirectionCache<T> {
        let steps = x.nrows();
        let h = self.hidden();
        let pre = x.dot(&self.w_ih.t()) + &self.bias;
        let mut gates = Array2::<T>::zeros((steps, 4 * h));
        let mut cell = Array2::<T>::zeros((steps, h));
        let mut tanh_c = Array2::<T>::zeros((steps, h));
        let mut hid = Array2::<T>::zeros((steps, h));
        let mut h_prev = Array1::<T>::zeros(h);
        let mut c_prev = Array1::<T>::zeros(h);
        for k in 0..steps {
            let t = if reverse { steps - 1 - k } else { k };
            let z = &pre.row(t) + &self.w_hh.dot(&h_prev);
            let mut g = gates.row_mut(t);
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let c_g = z[2 * h + j].tanh();
                let o_g = sigmoid(z[3 * h + j]);
                g[j] = i_g;
                g[h + j] = f_g;
                g[2 * h + j] = c_g;
                g[3 * h + j] = o_g;
                let c = f_g * c_prev[j] + i_g * c_g;
                let tc = c.tanh();
                cell[[t, j]] = c;
                tanh_c[[t, j]] = tc;
                hid[[t, j]] = o_g * tc;
            }
            h_prev.assign(&hid.row(t));
            c_prev.assign(&cell.row(t));
        }
        DirectionCache {
            gates,
            cell,
            tanh_c,
            hidden: hid,
            reverse,
        }
    }

    /// Accumulates parameter gradients into `grad` and returns d(input).
    fn backprop(
        &self,
        cache: &DirectionCache<T>,
        x: ArrayView2<T>,
        d_hidden: ArrayView2<T>,
        grad: &mut LstmDirection<T>,
    ) -> Array2<T> {
        let steps = x.nrows();
        let h = self.hidden();
        let mut d_pre = Array2::<T>::zeros((steps, 4 * h));
        // h_{t-1} in processing order, row-aligned with d_pre
        let mut h_prev_rows = Array2::<T>::zeros((steps, h));
        let mut dh_rec = Array1::<T>::zeros(h);
        let mut dc_rec = Array1::<T>::zeros(h);
        let one = T::one();
        for k in (0..steps).rev() {
            let t = if cache.reverse { steps - 1 - k } else { k };
            let prev = if k == 0 {
                None
            } else if cache.reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            if let Some(p) = prev {
                h_prev_rows.row_mut(t).assign(&cache.hidden.row(p));
            }
            let g = cache.gates.row(t);
            let mut dp = d_pre.row_mut(t);
            for j in 0..h {
                let i_g = g[j];
                let f_g = g[h + j];
                let c_g = g[2 * h + j];
                let o_g = g[3 * h + j];
                let tc = cache.tanh_c[[t, j]];
                let c_prev = prev.map_or(T::zero(), |p| cache.cell[[p, j]]);
                let dh = d_hidden[[t, j]] + dh_rec[j];
                let d_o = dh * tc;
                let dc = dh * o_g * (one - tc * tc) + dc_rec[j];
                dp[j] = dc * c_g * i_g * (one - i_g);
                dp[h + j] = dc * c_prev * f_g * (one - f_g);
                dp[2 * h + j] = dc * i_g * (one - c_g * c_g);
                dp[3 * h + j] = d_o * o_g * (one - o_g);
                dc_rec[j] = dc * f_g;
            }
            dh_rec = self.w_hh.t().dot(&d_pre.row(t));
        }
        grad.w_ih += &d_pre.t().dot(&x);
        grad.w_hh += &d_pre.t().dot(&h_prev_rows);
        grad.bias += &d_pre.sum_axis(Axis(0));
        d_pre.dot(&self.w_ih)
    }

    pub fn cast<U: Real>(&self) -> LstmDirection<U> {
        LstmDirection {
            w_ih: self.w_ih.mapv(|v| U::of(v.as_f64())),
            w_hh: self.w_hh.mapv(|v| U::of(v.as_f64())),
            bias: self.bias.mapv(|v| U::of(v.as_f64())),
        }
    }
}

#[derive(Debug, Clone)]
struct DirectionCache<T> {
    /// post-activation gates, T x 4H
    gates: Array2<T>,
    cell: Array2<T>,
    tanh_c: Array2<T>,
    hidden: Array2<T>,
    reverse: bool,
}

/// Activations retained by [`blstm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct BlstmCache<T> {
    input: Array2<T>,
    fwd: DirectionCache<T>,
    bwd: DirectionCache<T>,
}

impl<T: Real> BlstmParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BlstmParams {
            forward: LstmDirection::zeros(input, hidden),
            backward: LstmDirection::zeros(input, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        BlstmParams {
            forward: LstmDirection::init(input, hidden, rng),
            backward: LstmDirection::init(input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input(&self) -> usize {
        self.forward.input()
    }

    pub fn num_params(&self) -> usize {
        2 * (self.forward.w_ih.len() + self.forward.w_hh.len() + self.forward.bias.len())
    }

    pub fn cast<U: Real>(&self) -> BlstmParams<U> {
        BlstmParams {
            forward: self.forward.cast(),
            backward: self.backward.cast(),
        }
    }
}

/// Runs both directions over `features` (T x input) and concatenates them.
pub fn blstm_forward<T: Real>(
    params: &BlstmParams<T>,
    features: &Array2<T>,
) -> Result<(Array2<T>, BlstmCache<T>)> {
    if features.ncols() != params.input() {
        return Err(Error::InvalidInput(format!(
            "BLSTM expects {} input features, got {}",
            params.input(),
            features.ncols()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite BLSTM input".into()));
    }
    let fwd = params.forward.run(features.view(), false);
    let bwd = params.backward.run(features.view(), true);
    let out = concatenate![Axis(1), fwd.hidden, bwd.hidden];
    Ok((
        out,
        BlstmCache {
            input: features.clone(),
            fwd,
            bwd,
        },
    ))
}

/// Backward pass of [`blstm_forward`]; returns the gradient w.r.t. the input.
pub fn blstm_backward<T: Real>(
    params: &BlstmParams<T>,
    cache: &BlstmCache<T>,
    d_out: &Array2<T>,
    grad: &mut BlstmParams<T>,
) -> Array2<T> {
    let h = params.hidden();
    let dx_f = params.forward.backprop(
        &cache.fwd,
        cache.input.view(),
        d_out.slice(s![.., ..h]),
        &mut grad.forward,
    );
    let dx_b = params.backward.backprop(
        &cache.bwd,
        cache.input.view(),
        d_out.slice(s![.., h..]),
        &mut grad.backward,
    );
    dx_f + dx_b
}
