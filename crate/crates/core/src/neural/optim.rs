use super::model::ModelParams;
use crate::real::Real;

/// Adam with bias correction, updating only groups accepted by a name filter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ModelParams<f32>,
    v: ModelParams<f32>,
    step: i32,
}

impl Adam {
    pub fn new(params: &ModelParams<f32>, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(
        &mut self,
        params: &mut ModelParams<f32>,
        grad: &ModelParams<f32>,
        lr: f64,
        trainable: impl Fn(&str) -> bool,
    ) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (lr / c1) as f32;
        let inv_c2 = (1.0 / c2) as f32;
        let eps = self.eps as f32;
        let groups = params
            .groups_mut()
            .into_iter()
            .zip(grad.groups())
            .zip(self.m.groups_mut())
            .zip(self.v.groups_mut());
        for ((((name, p), (_, g)), (_, m)), (_, v)) in groups {
            if !trainable(&name) {
                continue;
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / ((v[i] * inv_c2).sqrt() + eps);
            }
        }
    }
}

/// Multiplies the learning rate by `decay` whenever the dev loss rises.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    pub lr: f64,
    pub decay: f64,
    previous: Option<f64>,
}

impl LrSchedule {
    pub fn new(lr: f64, decay: f64) -> Self {
        LrSchedule {
            lr,
            decay,
            previous: None,
        }
    }

    /// Records a dev loss and returns the learning rate for the next epoch.
    pub fn observe(&mut self, dev_loss: f64) -> f64 {
        if let Some(prev) = self.previous {
            if dev_loss > prev {
                self.lr *= self.decay;
            }
        }
        self.previous = Some(dev_loss);
        self.lr
    }
}

/// Rescales `grad` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Real>(grad: &mut ModelParams<T>, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grad.scale(T::of(max_norm / norm));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::Hyper;

    #[test]
    fn two_increases_scale_twice() {
        let mut s = LrSchedule::new(0.0005, 0.7);
        s.observe(1.0);
        s.observe(1.1);
        s.observe(0.9);
        let lr = s.observe(0.95);
        assert!((lr - 0.0005 * 0.49).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = ModelParams::<f32>::new(Hyper::baseline(3, 2), 0);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.mask_proj.bias.fill(0.5);
        let mut adam = Adam::new(&p, 0.9, 0.999, 1e-8);
        adam.update(&mut p, &g, 0.01, |n| n.starts_with("mask_proj"));
        for (a, b) in p.mask_proj.bias.iter().zip(&before.mask_proj.bias) {
            assert!((b - a - 0.01).abs() < 1e-6);
        }
        assert_eq!(p.mask_layers, before.mask_layers);
    }

    #[test]
    fn clipping_bounds_norm() {
        let p = ModelParams::<f64>::new(Hyper::baseline(3, 2), 0);
        let mut g = p.clone();
        let n = clip_global_norm(&mut g, 0.5);
        assert!(n > 0.5);
        assert!((g.global_norm() - 0.5).abs() < 1e-12);
    }
}
