//! Central-difference verification of the analytic gradients.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{log_mag_features, Example};
use super::model::ModelParams;
use super::train::{example_loss, Objective};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub objective: &'static str,
    pub group: String,
    pub max_analytic: f64,
    pub max_numeric: f64,
    /// max |analytic - numeric| over the group divided by the larger of the
    /// two maxima; absolute when both maxima are below 1e-8.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.error).fold(0.0, f64::max)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<10} {:<24} {:>12} {:>12} {:>12}\n", "loss", "group", "|analytic|", "|numeric|", "rel err");
        for g in &self.groups {
            s += &format!(
                "{:<10} {:<24} {:>12.3e} {:>12.3e} {:>12.3e}\n",
                g.objective, g.group, g.max_analytic, g.max_numeric, g.error
            );
        }
        s += &format!("max relative error {:.3e} at epsilon {:.1e}\n", self.max_error(), self.epsilon);
        s
    }
}

/// Random utterance with consistent magnitudes and labels for a model of
/// `bins` frequency bins.
pub fn synthetic_example(frames: usize, bins: usize, seed: u64) -> Example<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean: Array2<f64> = Array2::from_shape_simple_fn((frames, bins), || rng.random_range(0.0..1.0));
    let resid: Array2<f64> = Array2::from_shape_simple_fn((frames, bins), || rng.random_range(0.0..1.0));
    let noisy = &clean + &resid;
    let mut indicator = Array2::zeros((frames * bins, 2));
    let mut weights = Array1::zeros(frames * bins);
    for (i, (c, r)) in clean.iter().zip(resid.iter()).enumerate() {
        indicator[[i, if c >= r { 0 } else { 1 }]] = 1.0;
        weights[i] = if c.max(*r) > 0.05 { 1.0 } else { 0.0 };
    }
    Example {
        id: format!("gradcheck-{seed}"),
        features: log_mag_features(&noisy),
        noisy_mag: noisy,
        clean_mag: clean,
        indicator,
        weights,
    }
}

/// Compares analytic and central-difference gradients for every parameter
/// group under both objectives (the baseline only has the magnitude loss).
pub fn grad_check(params: &ModelParams<f64>, example: &Example<f64>, epsilon: f64) -> Result<GradCheckReport> {
    let mut objectives = vec![(Objective::Magnitude, "joint")];
    if params.embed_proj.is_some() {
        objectives.insert(0, (Objective::Clustering, "dc"));
    }
    let mut groups = Vec::new();
    for (objective, label) in objectives {
        let analytic = example_loss(params, example, objective, None, true)?
            .gradients
            .expect("gradient requested");
        let names: Vec<String> = params.groups().into_iter().map(|g| g.0).collect();
        for (gi, name) in names.iter().enumerate() {
            let a = analytic.groups()[gi].1.to_vec();
            let mut numeric = vec![0.0; a.len()];
            let mut probe = params.clone();
            for (k, slot) in numeric.iter_mut().enumerate() {
                let orig = probe.groups()[gi].1[k];
                probe.groups_mut()[gi].1[k] = orig + epsilon;
                let up = example_loss(&probe, example, objective, None, false)?.scalar;
                probe.groups_mut()[gi].1[k] = orig - epsilon;
                let down = example_loss(&probe, example, objective, None, false)?.scalar;
                probe.groups_mut()[gi].1[k] = orig;
                *slot = (up - down) / (2.0 * epsilon);
            }
            let max_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let max_n = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = a.iter().zip(&numeric).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            let scale = max_a.max(max_n);
            let error = if scale < 1e-8 { diff } else { diff / scale };
            groups.push(GroupError {
                objective: label,
                group: name.clone(),
                max_analytic: max_a,
                max_numeric: max_n,
                error,
            });
        }
    }
    Ok(GradCheckReport { epsilon, groups })
}
