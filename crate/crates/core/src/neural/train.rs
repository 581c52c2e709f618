//! Minibatch training for both stages and the single-stage baseline.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::Example;
use super::loss::{dc_loss, joint_loss, LossValue};
use super::model::{Hyper, ModelKind, ModelParams};
use super::network::{backward, forward_trace, Dropout};
use super::optim::{clip_global_norm, Adam, LrSchedule};
use crate::error::{invalid_config, Error, Result};
use crate::real::Real;
use crate::roomsim::manifest::{synthesize_rows, ManifestRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Clustering loss on the embedding stage only.
    DcPretrain,
    /// Magnitude loss through both stages.
    Joint,
    /// Magnitude loss on the single-stage baseline.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub dropout: f64,
    pub batch_utterances: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    /// Training stops once past `min_epochs` with the rate below this.
    pub min_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// 1 runs strictly sequentially; 0 uses every core.
    pub threads: usize,
    /// Joint stage only: keep the embedding stage fixed.
    pub freeze_dc: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0005,
            lr_decay: 0.7,
            dropout: 0.5,
            batch_utterances: 20,
            min_epochs: 30,
            max_epochs: 60,
            min_lr: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 5.0,
            seed: 0,
            threads: 1,
            freeze_dc: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid_config("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid_config("dropout must lie in [0, 1)"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(invalid_config("lr_decay must lie in (0, 1]"));
        }
        if self.batch_utterances == 0 {
            return Err(invalid_config("batch_utterances must be at least 1"));
        }
        if self.max_epochs == 0 || self.max_epochs < self.min_epochs {
            return Err(invalid_config("max_epochs must be positive and at least min_epochs"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(invalid_config("adam betas must lie in [0, 1) and eps be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split,loss,lr\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{}", e.epoch, e.split, e.loss, e.lr);
        }
        s
    }

    pub fn dev_losses(&self) -> Vec<f64> {
        self.entries.iter().filter(|e| e.split == "dev").map(|e| e.loss).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest dev loss seen (including initialization).
    pub params: ModelParams<f32>,
    pub log: TrainLog,
    pub initial_dev_loss: f64,
    pub best_dev_loss: f64,
    pub final_lr: f64,
    pub epochs: usize,
    /// Utterances consumed by each optimizer step, in order.
    pub batch_sizes: Vec<usize>,
}

/// Training and development utterances.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<Example<f32>>,
    pub dev: Vec<Example<f32>>,
}

impl Dataset {
    /// Renders the train and dev rows of a manifest into examples.
    pub fn from_manifest(rows: &[ManifestRow], sample_rate: u32) -> Result<Dataset> {
        let pick = |split: &str| -> Result<Vec<Example<f32>>> {
            let rows: Vec<ManifestRow> = rows.iter().filter(|r| r.split == split).cloned().collect();
            synthesize_rows(&rows, sample_rate)
                .into_iter()
                .zip(&rows)
                .map(|(s, r)| Example::from_sample(r.id.clone(), &s?))
                .collect()
        };
        Ok(Dataset {
            train: pick("train")?,
            dev: pick("dev")?,
        })
    }

    fn check(&self, bins: usize) -> Result<()> {
        if self.train.is_empty() || self.dev.is_empty() {
            return Err(invalid_config("training needs non-empty train and dev splits"));
        }
        if let Some(ex) = self.train.iter().chain(&self.dev).find(|e| e.bins() != bins) {
            return Err(invalid_config(format!(
                "utterance {} has {} bins, model expects {bins}",
                ex.id,
                ex.bins()
            )));
        }
        Ok(())
    }
}

/// Which scalar an utterance contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Clustering loss divided by the squared number of active bins.
    Clustering,
    /// Magnitude MSE of the masked mixture.
    Magnitude,
}

/// Loss of one utterance and, if requested, its parameter gradient.
pub fn example_loss<T: Real>(
    params: &ModelParams<T>,
    ex: &Example<T>,
    objective: Objective,
    dropout: Option<Dropout<'_>>,
    with_grad: bool,
) -> Result<LossValue<Option<ModelParams<T>>>> {
    let with_mask = objective == Objective::Magnitude;
    let trace = forward_trace(params, &ex.features, dropout, with_mask)?;
    let (scalar, d_emb, d_mask) = match objective {
        Objective::Clustering => {
            let v = trace
                .embedding
                .as_ref()
                .ok_or_else(|| invalid_config("clustering loss needs the proposed model"))?;
            let active = ex.weights.iter().filter(|w| **w > T::zero()).count().max(1) as f64;
            let norm = 1.0 / (active * active);
            let mut l = dc_loss(&v.rows, &ex.indicator, &ex.weights)?;
            l.gradients.mapv_inplace(|g| g * T::of(norm));
            (l.scalar * norm, Some(l.gradients), None)
        }
        Objective::Magnitude => {
            let m = trace.mask.as_ref().expect("mask requested");
            let l = joint_loss(&m.values, &ex.noisy_mag, &ex.clean_mag)?;
            (l.scalar, None, Some(l.gradients))
        }
    };
    if !scalar.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss on {}", ex.id)));
    }
    let gradients = if with_grad {
        let mut g = params.zeros_like();
        backward(params, &trace, d_emb.as_ref(), d_mask.as_ref(), &mut g)?;
        Some(g)
    } else {
        None
    };
    Ok(LossValue { scalar, gradients })
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Pool(Option<rayon::ThreadPool>);

impl Pool {
    fn new(threads: usize) -> Result<Self> {
        if threads == 1 {
            return Ok(Pool(None));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(|p| Pool(Some(p)))
            .map_err(|e| invalid_config(format!("thread pool: {e}")))
    }

    /// Evaluates `f` on every index and returns results in index order.
    fn map<R: Send>(&self, n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
        match &self.0 {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

fn mean_loss(params: &ModelParams<f32>, set: &[Example<f32>], objective: Objective, pool: &Pool) -> Result<f64> {
    let losses = pool.map(set.len(), |i| example_loss(params, &set[i], objective, None, false).map(|l| l.scalar));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / set.len() as f64)
}

fn run(
    mut params: ModelParams<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    objective: Objective,
    salt: u64,
    trainable: impl Fn(&str) -> bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.check(params.hyper.freq_bins)?;
    let pool = Pool::new(cfg.threads)?;
    let mut adam = Adam::new(&params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut schedule = LrSchedule::new(cfg.lr, cfg.lr_decay);
    let mut log = TrainLog::default();
    let initial = mean_loss(&params, &data.dev, objective, &pool)?;
    schedule.observe(initial);
    log.entries.push(LogEntry {
        epoch: 0,
        split: "dev",
        loss: initial,
        lr: cfg.lr,
    });
    let mut best = (initial, params.clone());
    let mut batch_sizes = Vec::new();
    let seed = mix(cfg.seed, salt);
    let mut epoch = 0;
    while epoch < cfg.max_epochs && (epoch < cfg.min_epochs || schedule.lr >= cfg.min_lr) {
        epoch += 1;
        let lr = schedule.lr;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, epoch as u64)));
        let mut train_total = 0.0;
        for (step, batch) in order.chunks(cfg.batch_utterances).enumerate() {
            let step_seed = mix(mix(seed, epoch as u64), step as u64 + 1);
            let results = pool.map(batch.len(), |k| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(step_seed, batch[k] as u64));
                let dropout = Dropout {
                    rate: cfg.dropout,
                    rng: &mut rng,
                };
                example_loss(&params, &data.train[batch[k]], objective, Some(dropout), true)
            });
            let mut grad = params.zeros_like();
            for r in results {
                let l = r?;
                train_total += l.scalar;
                grad.add_assign(l.gradients.as_ref().expect("gradient requested"));
            }
            grad.scale(1.0 / batch.len() as f32);
            clip_global_norm(&mut grad, cfg.clip_norm);
            adam.update(&mut params, &grad, lr, &trainable);
            if !params.is_finite() {
                return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
            }
            batch_sizes.push(batch.len());
        }
        let dev = mean_loss(&params, &data.dev, objective, &pool)?;
        log.entries.push(LogEntry {
            epoch,
            split: "train",
            loss: train_total / data.train.len() as f64,
            lr,
        });
        log.entries.push(LogEntry {
            epoch,
            split: "dev",
            loss: dev,
            lr,
        });
        if dev < best.0 {
            best = (dev, params.clone());
        }
        schedule.observe(dev);
    }
    Ok(TrainOutcome {
        params: best.1,
        log,
        initial_dev_loss: initial,
        best_dev_loss: best.0,
        final_lr: schedule.lr,
        epochs: epoch,
        batch_sizes,
    })
}

fn is_embedding_group(name: &str) -> bool {
    name.starts_with("dc") || name.starts_with("embed_proj")
}

/// Stage 1: clustering loss on the embedding stage of a fresh proposed model.
pub fn train_stage1_dc(data: &Dataset, hyper: Hyper, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if hyper.kind != ModelKind::Proposed {
        return Err(invalid_config("stage 1 trains the proposed model"));
    }
    let params = ModelParams::new(hyper, cfg.seed);
    run(params, data, cfg, Objective::Clustering, 1, is_embedding_group)
}

/// Stage 2: magnitude loss through both stages, starting from stage 1.
pub fn train_stage2_joint(data: &Dataset, cfg: &TrainConfig, init: ModelParams<f32>) -> Result<TrainOutcome> {
    if init.hyper.kind != ModelKind::Proposed {
        return Err(Error::InvalidCheckpoint("joint training needs a proposed-model checkpoint".into()));
    }
    if let Some(ex) = data.train.first() {
        if ex.bins() != init.hyper.freq_bins {
            return Err(Error::InvalidCheckpoint(format!(
                "checkpoint has {} bins, data has {}",
                init.hyper.freq_bins,
                ex.bins()
            )));
        }
    }
    let freeze = cfg.freeze_dc;
    run(init, data, cfg, Objective::Magnitude, 2, move |n| !(freeze && is_embedding_group(n)))
}

/// Single-stage BLSTM baseline trained on the magnitude loss.
pub fn train_baseline_blstm(data: &Dataset, hyper: Hyper, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if hyper.kind != ModelKind::BaselineBlstm {
        return Err(invalid_config("baseline training needs the baseline topology"));
    }
    let params = ModelParams::new(hyper, cfg.seed);
    run(params, data, cfg, Objective::Magnitude, 3, |_| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::Rng;

    fn toy_example(id: usize, frames: usize, bins: usize) -> Example<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(id as u64);
        let clean = Array2::from_shape_simple_fn((frames, bins), || rng.random_range(0.0f32..1.0));
        let noise = Array2::from_shape_simple_fn((frames, bins), || rng.random_range(0.0f32..0.6));
        let noisy = &clean + &noise;
        let mut indicator = Array2::zeros((frames * bins, 2));
        for (i, (c, n)) in clean.iter().zip(noise.iter()).enumerate() {
            indicator[[i, if c >= n { 0 } else { 1 }]] = 1.0;
        }
        Example {
            id: format!("u{id}"),
            features: super::super::features::log_mag_features(&noisy),
            noisy_mag: noisy,
            clean_mag: clean,
            indicator,
            weights: Array1::ones(frames * bins),
        }
    }

    fn toy_data() -> Dataset {
        Dataset {
            train: (0..6).map(|i| toy_example(i, 6, 5)).collect(),
            dev: (10..12).map(|i| toy_example(i, 6, 5)).collect(),
        }
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            lr: 0.01,
            batch_utterances: 4,
            min_epochs: 3,
            max_epochs: 3,
            dropout: 0.2,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { max_epochs: 2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn empty_splits_are_rejected() {
        let data = Dataset {
            train: Vec::new(),
            dev: toy_data().dev,
        };
        let err = train_stage1_dc(&data, Hyper::proposed(5, 3, 4), &quick_cfg()).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn batches_and_log_shape() {
        let out = train_stage1_dc(&toy_data(), Hyper::proposed(5, 3, 4), &quick_cfg()).unwrap();
        assert_eq!(out.batch_sizes, vec![4, 2, 4, 2, 4, 2]);
        assert_eq!(out.log.entries.len(), 1 + 2 * 3);
        assert!(out.log.to_csv().starts_with("epoch,split,loss,lr\n0,dev,"));
        assert!(out.best_dev_loss <= out.initial_dev_loss);
    }

    #[test]
    fn stage1_leaves_mask_stage_untouched() {
        let hyper = Hyper::proposed(5, 3, 4);
        let out = train_stage1_dc(&toy_data(), hyper, &quick_cfg()).unwrap();
        let fresh = ModelParams::<f32>::new(hyper, quick_cfg().seed);
        assert_eq!(out.params.mask_layers, fresh.mask_layers);
        assert_eq!(out.params.mask_proj, fresh.mask_proj);
    }

    #[test]
    fn freezing_keeps_embedding_stage() {
        let hyper = Hyper::proposed(5, 3, 4);
        let init = ModelParams::<f32>::new(hyper, 1);
        let cfg = TrainConfig {
            freeze_dc: true,
            ..quick_cfg()
        };
        let out = train_stage2_joint(&toy_data(), &cfg, init.clone()).unwrap();
        assert_eq!(out.params.dc_layers, init.dc_layers);
        assert_eq!(out.params.embed_proj, init.embed_proj);
    }

    #[test]
    fn threaded_run_matches_sequential() {
        let hyper = Hyper::baseline(5, 4);
        let a = train_baseline_blstm(&toy_data(), hyper, &quick_cfg()).unwrap();
        let b = train_baseline_blstm(&toy_data(), hyper, &TrainConfig { threads: 3, ..quick_cfg() }).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn joint_rejects_baseline_checkpoint() {
        let init = ModelParams::<f32>::new(Hyper::baseline(5, 4), 1);
        let err = train_stage2_joint(&toy_data(), &quick_cfg(), init).unwrap_err();
        assert!(matches!(err, Error::InvalidCheckpoint(_)));
    }
}
