//! Forward passes of both topologies plus the matching backward pass.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{blstm_backward, blstm_forward, BlstmCache, BlstmParams};
use super::model::{ModelKind, ModelParams};
use crate::error::{invalid_input, Error, Result};
use crate::real::Real;
use crate::signal::MaskMatrix;

/// Unit-norm embeddings, one row per T-F bin (row `t * F + f`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T = f32> {
    pub rows: Array2<T>,
    pub frames: usize,
    pub bins: usize,
}

impl<T: Real> EmbeddingMatrix<T> {
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Largest deviation of a row norm from one.
    pub fn max_norm_error(&self) -> f64 {
        self.rows
            .rows()
            .into_iter()
            .map(|r| (r.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Inverted dropout on layer outputs. `None` disables it (inference).
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

fn dropout_mask<T: Real>(shape: (usize, usize), dropout: &mut Option<Dropout<'_>>) -> Option<Array2<T>> {
    let d = dropout.as_mut()?;
    if d.rate <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - d.rate));
    let rate = d.rate;
    Some(Array2::from_shape_simple_fn(shape, || {
        if d.rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    }))
}

/// Row-major reshape that tolerates any input memory layout.
fn reshape<T: Real>(a: Array2<T>, shape: (usize, usize)) -> Result<Array2<T>> {
    let a = if a.is_standard_layout() { a } else { a.as_standard_layout().into_owned() };
    a.into_shape_with_order(shape).map_err(|e| Error::Numeric(e.to_string()))
}

struct LayerTrace<T> {
    cache: BlstmCache<T>,
    mask: Option<Array2<T>>,
}

/// Runs a stack of BLSTM layers, applying dropout after each layer output.
fn run_stack<T: Real>(
    layers: &[BlstmParams<T>],
    mut x: Array2<T>,
    dropout: &mut Option<Dropout<'_>>,
) -> Result<(Array2<T>, Vec<LayerTrace<T>>)> {
    let mut traces = Vec::with_capacity(layers.len());
    for layer in layers {
        let (mut out, cache) = blstm_forward(layer, &x)?;
        let mask = dropout_mask(out.dim(), dropout);
        if let Some(m) = &mask {
            out *= m;
        }
        traces.push(LayerTrace { cache, mask });
        x = out;
    }
    Ok((x, traces))
}

fn backprop_stack<T: Real>(
    layers: &[BlstmParams<T>],
    traces: &[LayerTrace<T>],
    mut d: Array2<T>,
    grads: &mut [BlstmParams<T>],
) -> Array2<T> {
    for ((layer, trace), grad) in layers.iter().zip(traces).zip(grads.iter_mut()).rev() {
        if let Some(m) = &trace.mask {
            d *= m;
        }
        d = blstm_backward(layer, &trace.cache, &d, grad);
    }
    d
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace<T> {
    frames: usize,
    dc: Vec<LayerTrace<T>>,
    /// Input to the embedding projection.
    dc_out: Option<Array2<T>>,
    /// tanh output, T x (F*D).
    tanh_out: Option<Array2<T>>,
    norms: Option<Array1<T>>,
    pub embedding: Option<EmbeddingMatrix<T>>,
    mask_stack: Vec<LayerTrace<T>>,
    mask_in: Option<Array2<T>>,
    mask_hidden: Option<Array2<T>>,
    pre_relu: Option<Array2<T>>,
    pub mask: Option<MaskMatrix<T>>,
}

fn check_features<T: Real>(params: &ModelParams<T>, features: &Array2<T>) -> Result<()> {
    if features.ncols() != params.hyper.freq_bins {
        return Err(invalid_input(format!(
            "model expects {} frequency bins, features have {}",
            params.hyper.freq_bins,
            features.ncols()
        )));
    }
    if features.nrows() == 0 {
        return Err(invalid_input("features have no frames"));
    }
    Ok(())
}

/// Forward pass with retained activations. `with_mask = false` stops the
/// proposed model after the embedding (enough for the clustering loss).
pub fn forward_trace<T: Real>(
    params: &ModelParams<T>,
    features: &Array2<T>,
    mut dropout: Option<Dropout<'_>>,
    with_mask: bool,
) -> Result<Trace<T>> {
    check_features(params, features)?;
    let frames = features.nrows();
    let mut trace = Trace {
        frames,
        dc: Vec::new(),
        dc_out: None,
        tanh_out: None,
        norms: None,
        embedding: None,
        mask_stack: Vec::new(),
        mask_in: None,
        mask_hidden: None,
        pre_relu: None,
        mask: None,
    };
    let mask_input = match params.hyper.kind {
        ModelKind::Proposed => {
            let proj = params.embed_proj.as_ref().ok_or_else(|| invalid_input("missing embedding projection"))?;
            let (hidden, dc) = run_stack(&params.dc_layers, features.clone(), &mut dropout)?;
            let tanh_out = proj.forward(&hidden).mapv(|v| v.tanh());
            let (f, d) = (params.hyper.freq_bins, params.hyper.embed_dim);
            let z = reshape(tanh_out.clone(), (frames * f, d))?;
            let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(T::of(1e-12)));
            let mut v = z;
            Zip::from(v.rows_mut()).and(&norms).for_each(|mut r, &n| r /= n);
            trace.dc = dc;
            trace.dc_out = Some(hidden);
            trace.tanh_out = Some(tanh_out);
            trace.norms = Some(norms);
            let input = if with_mask {
                Some(reshape(v.clone(), (frames, f * d))?)
            } else {
                None
            };
            trace.embedding = Some(EmbeddingMatrix { rows: v, frames, bins: f });
            input
        }
        ModelKind::BaselineBlstm => Some(features.clone()),
    };
    if let Some(input) = mask_input {
        let (hidden, stack) = run_stack(&params.mask_layers, input.clone(), &mut dropout)?;
        let pre = params.mask_proj.forward(&hidden);
        let mask = pre.mapv(|v| if v > T::zero() { v } else { T::zero() });
        trace.mask_stack = stack;
        trace.mask_in = Some(input);
        trace.mask_hidden = Some(hidden);
        trace.pre_relu = Some(pre);
        trace.mask = Some(MaskMatrix { values: mask });
    }
    Ok(trace)
}

/// Accumulates parameter gradients for upstream gradients on the embedding
/// rows (TF x D) and/or the mask (T x F).
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    trace: &Trace<T>,
    d_embedding: Option<&Array2<T>>,
    d_mask: Option<&Array2<T>>,
    grad: &mut ModelParams<T>,
) -> Result<()> {
    let frames = trace.frames;
    let mut d_v: Option<Array2<T>> = d_embedding.cloned();
    if let Some(dm) = d_mask {
        let pre = trace.pre_relu.as_ref().ok_or_else(|| invalid_input("trace has no mask stage"))?;
        let mut d_pre = dm.clone();
        Zip::from(&mut d_pre).and(pre).for_each(|g, &p| {
            if p <= T::zero() {
                *g = T::zero();
            }
        });
        let hidden = trace.mask_hidden.as_ref().expect("mask stage cached");
        let d_hidden = params.mask_proj.backward(hidden, &d_pre, &mut grad.mask_proj);
        let d_in = backprop_stack(&params.mask_layers, &trace.mask_stack, d_hidden, &mut grad.mask_layers);
        if params.hyper.kind == ModelKind::Proposed {
            let d = params.hyper.embed_dim;
            let rows = reshape(d_in, (frames * params.hyper.freq_bins, d))?;
            d_v = Some(match d_v {
                Some(acc) => acc + rows,
                None => rows,
            });
        }
    }
    if let Some(dv) = d_v {
        let emb = trace.embedding.as_ref().ok_or_else(|| invalid_input("trace has no embedding"))?;
        let norms = trace.norms.as_ref().expect("embedding cached");
        // d z = (d v - v (v . d v)) / |z|
        let mut dz = dv;
        Zip::from(dz.rows_mut())
            .and(emb.rows.rows())
            .and(norms)
            .for_each(|mut g, v, &n| {
                let proj = v.dot(&g);
                Zip::from(&mut g).and(&v).for_each(|gi, &vi| *gi = (*gi - vi * proj) / n);
            });
        let tanh_out = trace.tanh_out.as_ref().expect("embedding cached");
        let mut d_pre = reshape(dz, tanh_out.dim())?;
        Zip::from(&mut d_pre).and(tanh_out).for_each(|g, &y| *g *= T::one() - y * y);
        let proj = params.embed_proj.as_ref().expect("proposed model");
        let grad_proj = grad.embed_proj.as_mut().expect("proposed model");
        let hidden = trace.dc_out.as_ref().expect("embedding cached");
        let d_hidden = proj.backward(hidden, &d_pre, grad_proj);
        backprop_stack(&params.dc_layers, &trace.dc, d_hidden, &mut grad.dc_layers);
    }
    Ok(())
}

/// Inference-mode embedding of normalized log-magnitude features (T x F).
pub fn forward_embedding<T: Real>(params: &ModelParams<T>, features: &Array2<T>) -> Result<EmbeddingMatrix<T>> {
    if params.hyper.kind != ModelKind::Proposed {
        return Err(invalid_input("the single-stage baseline has no embedding stage"));
    }
    forward_trace(params, features, None, false)?
        .embedding
        .ok_or_else(|| invalid_input("embedding missing"))
}

/// Inference-mode mask stage of the proposed model on embeddings `v`.
pub fn forward_mask<T: Real>(params: &ModelParams<T>, v: &EmbeddingMatrix<T>, frames: usize) -> Result<MaskMatrix<T>> {
    let (f, d) = (params.hyper.freq_bins, params.hyper.embed_dim);
    if params.hyper.kind != ModelKind::Proposed || v.rows.dim() != (frames * f, d) {
        return Err(invalid_input(format!(
            "embedding of shape {:?} cannot be arranged as {frames} x {}",
            v.rows.dim(),
            f * d
        )));
    }
    let input = reshape(v.rows.clone(), (frames, f * d))?;
    let (hidden, _) = run_stack(&params.mask_layers, input, &mut None)?;
    let pre = params.mask_proj.forward(&hidden);
    Ok(MaskMatrix {
        values: pre.mapv(|v| if v > T::zero() { v } else { T::zero() }),
    })
}

/// Inference-mode mask from features for either topology.
pub fn predict_mask<T: Real>(params: &ModelParams<T>, features: &Array2<T>) -> Result<MaskMatrix<T>> {
    forward_trace(params, features, None, true)?
        .mask
        .ok_or_else(|| invalid_input("mask missing"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::Hyper;
    use rand::SeedableRng;

    fn random_features(t: usize, f: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((t, f), || rng.random_range(-1.5..1.5))
    }

    #[test]
    fn embeddings_are_unit_norm() {
        for d in [10, 20, 30, 40] {
            let p = ModelParams::<f32>::new(Hyper::proposed(9, d, 6), 4);
            let x = random_features(7, 9, d as u64).mapv(|v| v as f32);
            let v = forward_embedding(&p, &x).unwrap();
            assert_eq!(v.rows.dim(), (63, d));
            assert!(v.max_norm_error() < 1e-5);
        }
    }

    #[test]
    fn time_order_matters() {
        let p = ModelParams::<f64>::new(Hyper::proposed(9, 4, 6), 5);
        let x = random_features(6, 9, 1);
        let perm = [3, 0, 5, 1, 4, 2];
        let mut xp = x.clone();
        for (i, &j) in perm.iter().enumerate() {
            xp.row_mut(i).assign(&x.row(j));
        }
        let v = forward_embedding(&p, &x).unwrap();
        let vp = forward_embedding(&p, &xp).unwrap();
        let mut max_diff: f64 = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            for f in 0..9 {
                let a = vp.rows.row(i * 9 + f);
                let b = v.rows.row(j * 9 + f);
                max_diff = max_diff.max((&a - &b).iter().fold(0.0, |m, x| m.max(x.abs())));
            }
        }
        assert!(max_diff > 1e-6);
    }

    #[test]
    fn mask_is_non_negative_and_constant_for_zero_projection() {
        let mut p = ModelParams::<f64>::new(Hyper::proposed(9, 4, 6), 6);
        let x = random_features(5, 9, 2);
        let v = forward_embedding(&p, &x).unwrap();
        let m = forward_mask(&p, &v, 5).unwrap();
        assert!(m.values.iter().all(|&x| x >= 0.0));
        p.mask_proj.weight.fill(0.0);
        p.mask_proj.bias.fill(0.3);
        let m = forward_mask(&p, &v, 5).unwrap();
        assert!(m.values.iter().all(|&x| x == 0.3));
        assert!(forward_mask(&p, &v, 4).is_err());
    }

    #[test]
    fn mask_gradient_wrt_projection_matches_differences() {
        let p = ModelParams::<f64>::new(Hyper::proposed(9, 4, 6), 7);
        let x = random_features(5, 9, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = Array2::from_shape_simple_fn((5, 9), || rng.random_range(-1.0..1.0));
        let objective = |p: &ModelParams<f64>| (&predict_mask(p, &x).unwrap().values * &r).sum();
        let trace = forward_trace(&p, &x, None, true).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &trace, None, Some(&r), &mut g).unwrap();
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for idx in 0..p.mask_proj.weight.len() {
            let (i, j) = (idx / 12, idx % 12);
            let mut a = p.clone();
            a.mask_proj.weight[[i, j]] += eps;
            let mut b = p.clone();
            b.mask_proj.weight[[i, j]] -= eps;
            let num = (objective(&a) - objective(&b)) / (2.0 * eps);
            let ana = g.mask_proj.weight[[i, j]];
            worst = worst.max((num - ana).abs());
            scale = scale.max(num.abs()).max(ana.abs());
        }
        assert!(worst / scale < 1e-4, "{worst} / {scale}");
    }

    #[test]
    fn baseline_has_no_embedding() {
        let p = ModelParams::<f64>::new(Hyper::baseline(9, 6), 8);
        let x = random_features(5, 9, 4);
        assert!(forward_embedding(&p, &x).is_err());
        let m = predict_mask(&p, &x).unwrap();
        assert_eq!(m.values.dim(), (5, 9));
    }

    #[test]
    fn wrong_feature_width_is_rejected() {
        let p = ModelParams::<f64>::new(Hyper::proposed(9, 4, 6), 8);
        assert!(forward_embedding(&p, &random_features(5, 8, 4)).is_err());
    }
}
