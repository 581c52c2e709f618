use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linear::Linear;
use super::lstm::{BlstmParams, LstmDirection};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Deep-clustering embedding stage followed by a BLSTM mask stage.
    Proposed,
    /// Three stacked BLSTM layers straight to the mask.
    BaselineBlstm,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Proposed => 1,
            ModelKind::BaselineBlstm => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ModelKind::Proposed),
            2 => Some(ModelKind::BaselineBlstm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Proposed => "proposed",
            ModelKind::BaselineBlstm => "baseline-blstm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hyper {
    pub kind: ModelKind,
    /// Frequency bins F.
    pub freq_bins: usize,
    /// Embedding dimension D (unused by the baseline).
    pub embed_dim: usize,
    /// Hidden units per direction.
    pub hidden: usize,
}

impl Hyper {
    pub fn proposed(freq_bins: usize, embed_dim: usize, hidden: usize) -> Self {
        Hyper {
            kind: ModelKind::Proposed,
            freq_bins,
            embed_dim,
            hidden,
        }
    }

    pub fn baseline(freq_bins: usize, hidden: usize) -> Self {
        Hyper {
            kind: ModelKind::BaselineBlstm,
            freq_bins,
            embed_dim: 0,
            hidden,
        }
    }
}

/// All trainable weights of either topology.
///
/// Proposed: 2 `dc_layers` -> `embed_proj` (to F*D, tanh, unit rows) ->
/// 1 `mask_layers` -> `mask_proj` (to F, ReLU).
/// Baseline: no `dc_layers`, 3 `mask_layers` on the features -> `mask_proj`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub hyper: Hyper,
    pub dc_layers: Vec<BlstmParams<T>>,
    pub embed_proj: Option<Linear<T>>,
    pub mask_layers: Vec<BlstmParams<T>>,
    pub mask_proj: Linear<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(hyper: Hyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, d, h) = (hyper.freq_bins, hyper.embed_dim, hyper.hidden);
        match hyper.kind {
            ModelKind::Proposed => ModelParams {
                hyper,
                dc_layers: vec![
                    BlstmParams::init(f, h, &mut rng),
                    BlstmParams::init(2 * h, h, &mut rng),
                ],
                embed_proj: Some(Linear::init(2 * h, f * d, &mut rng)),
                mask_layers: vec![BlstmParams::init(f * d, h, &mut rng)],
                mask_proj: Linear::init(2 * h, f, &mut rng),
            },
            ModelKind::BaselineBlstm => ModelParams {
                hyper,
                dc_layers: Vec::new(),
                embed_proj: None,
                mask_layers: vec![
                    BlstmParams::init(f, h, &mut rng),
                    BlstmParams::init(2 * h, h, &mut rng),
                    BlstmParams::init(2 * h, h, &mut rng),
                ],
                mask_proj: Linear::init(2 * h, f, &mut rng),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let blstm = |l: &BlstmParams<T>| BlstmParams::zeros(l.input(), l.hidden());
        ModelParams {
            hyper: self.hyper,
            dc_layers: self.dc_layers.iter().map(blstm).collect(),
            embed_proj: self.embed_proj.as_ref().map(|l| Linear::zeros(l.input(), l.output())),
            mask_layers: self.mask_layers.iter().map(blstm).collect(),
            mask_proj: Linear::zeros(self.mask_proj.input(), self.mask_proj.output()),
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            hyper: self.hyper,
            dc_layers: self.dc_layers.iter().map(|l| l.cast()).collect(),
            embed_proj: self.embed_proj.as_ref().map(|l| l.cast()),
            mask_layers: self.mask_layers.iter().map(|l| l.cast()).collect(),
            mask_proj: self.mask_proj.cast(),
        }
    }

    /// Named parameter tensors in their fixed declaration order.
    pub fn groups(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.dc_layers.iter().enumerate() {
            push_dir(&mut out, format!("dc{i}.fwd"), &l.forward);
            push_dir(&mut out, format!("dc{i}.bwd"), &l.backward);
        }
        if let Some(p) = &self.embed_proj {
            out.push(("embed_proj.weight".into(), slice(&p.weight)));
            out.push(("embed_proj.bias".into(), slice1(&p.bias)));
        }
        for (i, l) in self.mask_layers.iter().enumerate() {
            push_dir(&mut out, format!("mask{i}.fwd"), &l.forward);
            push_dir(&mut out, format!("mask{i}.bwd"), &l.backward);
        }
        out.push(("mask_proj.weight".into(), slice(&self.mask_proj.weight)));
        out.push(("mask_proj.bias".into(), slice1(&self.mask_proj.bias)));
        out
    }

    /// Mutable counterpart of [`ModelParams::groups`], same order.
    pub fn groups_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::new();
        for (i, l) in self.dc_layers.iter_mut().enumerate() {
            push_dir_mut(&mut out, format!("dc{i}.fwd"), &mut l.forward);
            push_dir_mut(&mut out, format!("dc{i}.bwd"), &mut l.backward);
        }
        if let Some(p) = &mut self.embed_proj {
            out.push(("embed_proj.weight".into(), p.weight.as_slice_mut().expect("standard layout")));
            out.push(("embed_proj.bias".into(), p.bias.as_slice_mut().expect("standard layout")));
        }
        for (i, l) in self.mask_layers.iter_mut().enumerate() {
            push_dir_mut(&mut out, format!("mask{i}.fwd"), &mut l.forward);
            push_dir_mut(&mut out, format!("mask{i}.bwd"), &mut l.backward);
        }
        out.push((
            "mask_proj.weight".into(),
            self.mask_proj.weight.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            "mask_proj.bias".into(),
            self.mask_proj.bias.as_slice_mut().expect("standard layout"),
        ));
        out
    }

    pub fn num_params(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    /// Parameters inside recurrent layers only.
    pub fn num_recurrent_params(&self) -> usize {
        self.dc_layers.iter().chain(&self.mask_layers).map(|l| l.num_params()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for (_, g) in self.groups_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn slice<T>(a: &ndarray::Array2<T>) -> &[T] {
    a.as_slice().expect("standard layout")
}

fn slice1<T>(a: &ndarray::Array1<T>) -> &[T] {
    a.as_slice().expect("standard layout")
}

fn push_dir<'a, T>(out: &mut Vec<(String, &'a [T])>, name: String, d: &'a LstmDirection<T>) {
    out.push((format!("{name}.w_ih"), slice(&d.w_ih)));
    out.push((format!("{name}.w_hh"), slice(&d.w_hh)));
    out.push((format!("{name}.bias"), slice1(&d.bias)));
}

fn push_dir_mut<'a, T>(out: &mut Vec<(String, &'a mut [T])>, name: String, d: &'a mut LstmDirection<T>) {
    out.push((format!("{name}.w_ih"), d.w_ih.as_slice_mut().expect("standard layout")));
    out.push((format!("{name}.w_hh"), d.w_hh.as_slice_mut().expect("standard layout")));
    out.push((format!("{name}.bias"), d.bias.as_slice_mut().expect("standard layout")));
}
