//! One training session: losses, the epoch loop, and the stopping rules.
//!
//! Both methods optimize with Adam at the configured rate (first-moment
//! decay 0.9 for the plain U-Net, 0.5 for the cGAN pair). A session stops as
//! soon as one of three rules fires, checked at epoch granularity with this
//! priority:
//!
//! 1. *early stop* — the epoch-mean training L1 (in the activation range)
//!    reaches `early_stop_l1`;
//! 2. *discriminator force stop* (cGAN only) — the discriminator loss fell
//!    strictly while the generator's total loss rose strictly for
//!    `disc_win_patience` consecutive epoch transitions;
//! 3. *max-epoch force stop* — the epoch cap.

use ndarray::{Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SliceSample;
use crate::error::{Error, Result};
use crate::nets::{Discriminator, Generator, NetworkConfig};
use crate::nn::ops::{sigmoid, OutputActivation};
use crate::nn::{Adam, HasParams, Tensor};

/// Which model family a session trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Unet,
    Cgan,
}

/// Session hyperparameters. Defaults follow the reference protocol:
/// learning rate 2e-4, batch 20, epoch cap 500, early-stop L1 0.01 and
/// L1 weight 10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_l1: f64,
    /// The adversarial-vs-L1 weight of the cGAN generator loss.
    pub l1_weight: f64,
    pub disc_win_patience: usize,
    pub method: ModelKind,
    pub seed: u64,
    pub adam_beta1_unet: f64,
    pub adam_beta1_cgan: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0002,
            batch_size: 20,
            max_epochs: 500,
            early_stop_l1: 0.01,
            l1_weight: 10.0,
            disc_win_patience: 10,
            method: ModelKind::Unet,
            seed: 0,
            adam_beta1_unet: 0.9,
            adam_beta1_cgan: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.batch_size == 0
            || self.max_epochs == 0
            || self.early_stop_l1 <= 0.0
        {
            return Err(Error::InvalidArgument(
                "learning_rate, batch_size, max_epochs and early_stop_l1 must be positive".into(),
            ));
        }
        if self.l1_weight < 0.0 {
            return Err(Error::InvalidArgument("l1_weight must be non-negative".into()));
        }
        if self.disc_win_patience == 0 {
            return Err(Error::InvalidArgument("disc_win_patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses. `gen_adv`/`disc_loss` are present for cGAN sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gen_l1: f64,
    pub gen_adv: Option<f64>,
    pub disc_loss: Option<f64>,
}

impl EpochRecord {
    /// Generator total loss: adversarial + beta * L1 for cGAN, plain L1
    /// otherwise.
    pub fn gen_total(&self, l1_weight: f64) -> f64 {
        match self.gen_adv {
            Some(adv) => adv + l1_weight * self.gen_l1,
            None => self.gen_l1,
        }
    }
}

/// Loss trajectory of one session; epochs run from 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub records: Vec<EpochRecord>,
}

impl LossCurve {
    pub fn push(&mut self, record: EpochRecord) {
        debug_assert_eq!(record.epoch, self.records.len() + 1);
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV rows `epoch,gen_l1,gen_adv,disc_loss` (optional cells empty).
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| {
            Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
        })?;
        w.write_record(["epoch", "gen_l1", "gen_adv", "disc_loss"])
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        for r in &self.records {
            let adv = r.gen_adv.map(|v| v.to_string()).unwrap_or_default();
            let dl = r.disc_loss.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([r.epoch.to_string(), r.gen_l1.to_string(), adv, dl])
                .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<LossCurve> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| {
            Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
        })?;
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| {
                Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
            })?;
            let parse = |s: &str| -> Option<f64> {
                if s.is_empty() {
                    None
                } else {
                    s.parse().ok()
                }
            };
            records.push(EpochRecord {
                epoch: row.get(0).and_then(|s| s.parse().ok()).unwrap_or(0),
                gen_l1: row.get(1).and_then(parse).unwrap_or(f64::NAN),
                gen_adv: row.get(2).and_then(parse),
                disc_loss: row.get(3).and_then(parse),
            });
        }
        Ok(LossCurve { records })
    }
}

/// Why a session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochForce,
    DiscriminatorForce,
}

/// The stopping outcome of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopDecision {
    pub reason: StopReason,
    pub epoch: usize,
}

/// Mean absolute difference over all elements.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.dim()),
            actual: format!("{:?}", pred.dim()),
        });
    }
    Ok((pred - target).mapv(f64::abs).mean().unwrap_or(0.0))
}

/// Gradient of [`l1_loss`] with respect to `pred`.
fn l1_grad(pred: &Tensor, target: &Tensor) -> Tensor {
    let n = pred.len() as f64;
    ndarray::Zip::from(pred)
        .and(target)
        .map_collect(|&p, &t| (p - t).signum() / n)
}

/// Binary cross-entropy of probability scores against a constant label.
pub fn bce_loss(scores: &Tensor, real: bool) -> f64 {
    const EPS: f64 = 1e-12;
    let total: f64 = scores
        .iter()
        .map(|&s| {
            if real {
                -(s.max(EPS)).ln()
            } else {
                -((1.0 - s).max(EPS)).ln()
            }
        })
        .sum();
    total / scores.len() as f64
}

/// cGAN generator objective: BCE of the adversarial scores against the
/// "real" label plus `beta` times the L1 term. `adv_scores` are
/// probabilities in `[0, 1]`.
pub fn cgan_generator_loss(
    adv_scores: &Tensor,
    pred: &Tensor,
    target: &Tensor,
    beta: f64,
) -> Result<f64> {
    if beta < 0.0 {
        return Err(Error::InvalidArgument("beta must be non-negative".into()));
    }
    if adv_scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite adversarial scores".into()));
    }
    Ok(bce_loss(adv_scores, true) + beta * l1_loss(pred, target)?)
}

/// Evaluates the stopping rules on a loss curve. `None` means continue.
pub fn check_stop(curve: &LossCurve, config: &TrainConfig) -> Option<StopDecision> {
    let last = curve.last()?;
    if last.gen_l1 <= config.early_stop_l1 {
        return Some(StopDecision {
            reason: StopReason::EarlyStop,
            epoch: last.epoch,
        });
    }
    if config.method == ModelKind::Cgan {
        let n = config.disc_win_patience;
        let records = &curve.records;
        if records.len() >= n + 1 {
            let tail = &records[records.len() - (n + 1)..];
            let disc_wins = tail.windows(2).all(|w| {
                let (prev, next) = (&w[0], &w[1]);
                match (prev.disc_loss, next.disc_loss) {
                    (Some(dp), Some(dn)) => {
                        dn < dp
                            && next.gen_total(config.l1_weight) > prev.gen_total(config.l1_weight)
                    }
                    _ => false,
                }
            });
            if disc_wins {
                return Some(StopDecision {
                    reason: StopReason::DiscriminatorForce,
                    epoch: last.epoch,
                });
            }
        }
    }
    if last.epoch >= config.max_epochs {
        return Some(StopDecision {
            reason: StopReason::MaxEpochForce,
            epoch: last.epoch,
        });
    }
    None
}

/// A trained session: the generator, its loss curve and why it stopped.
pub struct SessionOutcome {
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    pub curve: LossCurve,
    pub stop: StopDecision,
}

fn to_activation_range(v: f64, act: OutputActivation) -> f64 {
    match act {
        OutputActivation::Tanh => v / 127.5 - 1.0,
        OutputActivation::Sigmoid => v / 255.0,
    }
}

/// Maps a network output back to `[0, 255]`.
pub fn from_activation_range(v: f64, act: OutputActivation) -> f64 {
    let out = match act {
        OutputActivation::Tanh => (v + 1.0) * 127.5,
        OutputActivation::Sigmoid => v * 255.0,
    };
    out.clamp(0.0, 255.0)
}

/// Assembles `(inputs, stacked targets)` network tensors for a batch of
/// samples, mapped into the activation range.
pub fn assemble_batch(
    samples: &[&SliceSample],
    act: OutputActivation,
) -> Result<(Tensor, Tensor)> {
    let realized: Vec<_> = samples
        .par_iter()
        .map(|s| -> Result<_> { Ok((s.input()?, s.targets()?)) })
        .collect::<Result<_>>()?;
    let n = realized.len();
    let (_, h, w) = realized[0].0.dim();
    let t_ch = 3 * realized[0].1.len();
    let mut x = Array4::zeros((n, 3, h, w));
    let mut y = Array4::zeros((n, t_ch, h, w));
    for (i, (input, targets)) in realized.iter().enumerate() {
        x.index_axis_mut(Axis(0), i)
            .assign(&input.mapv(|v| to_activation_range(v, act)));
        let mut lane = y.index_axis_mut(Axis(0), i);
        for (t_idx, t) in targets.iter().enumerate() {
            lane.slice_mut(ndarray::s![3 * t_idx..3 * (t_idx + 1), .., ..])
                .assign(&t.mapv(|v| to_activation_range(v, act)));
        }
    }
    Ok((x, y))
}

/// Runs one session. The generator (and discriminator, for cGAN) are built
/// from `net_cfg` with seeds derived from `config.seed`; sample order is
/// reshuffled every epoch with the same seed stream, so a fixed seed
/// reproduces the loss curve exactly.
pub fn train_session(
    samples: &[SliceSample],
    net_cfg: &NetworkConfig,
    config: &TrainConfig,
    mut on_epoch: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<SessionOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet("train_session needs samples".into()));
    }
    if let Ok(device) = std::env::var("MTI_DEVICE") {
        if !device.is_empty() && device != "cpu" {
            return Err(Error::InvalidArgument(format!(
                "MTI_DEVICE={device} is not available in this build (cpu only)"
            )));
        }
    }
    let expected_tasks = net_cfg.tasks();
    if samples.iter().any(|s| s.task_count() != expected_tasks) {
        return Err(Error::InvalidArgument(format!(
            "network expects {expected_tasks} task(s) but samples disagree"
        )));
    }

    let mut generator = Generator::build(net_cfg, config.seed)?;
    let mut discriminator = match config.method {
        ModelKind::Cgan => Some(Discriminator::build(net_cfg, config.seed.wrapping_add(1))?),
        ModelKind::Unet => None,
    };
    let beta1 = match config.method {
        ModelKind::Unet => config.adam_beta1_unet,
        ModelKind::Cgan => config.adam_beta1_cgan,
    };
    let mut opt_g = Adam::new(config.learning_rate, beta1);
    let mut opt_d = Adam::new(config.learning_rate, config.adam_beta1_cgan);

    let act = net_cfg.output_activation;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = LossCurve::default();

    loop {
        let epoch = curve.records.len() + 1;
        order.shuffle(&mut rng);
        let mut l1_sum = 0.0;
        let mut adv_sum = 0.0;
        let mut disc_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&SliceSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (x, y) = assemble_batch(&batch, act)?;
            let b = chunk.len() as f64;
            match (&config.method, discriminator.as_mut()) {
                (ModelKind::Unet, _) => {
                    let (pred, cache) = generator.forward_train(&x);
                    let l1 = l1_loss(&pred, &y)?;
                    if !l1.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            epoch,
                            batch: batch_idx,
                            value: l1,
                        });
                    }
                    generator.zero_grads();
                    let grad = l1_grad(&pred, &y);
                    generator.backward(&cache, &grad);
                    opt_g.step(&mut generator);
                    l1_sum += l1 * b;
                }
                (ModelKind::Cgan, Some(disc)) => {
                    let (fake, gcache) = generator.forward_train(&x);

                    // discriminator update on (real) and (detached fake)
                    let (logits_r, dcache_r) = disc.forward_train(&x, &y);
                    let (logits_f, dcache_f) = disc.forward_train(&x, &fake);
                    let s_r = logits_r.mapv(sigmoid);
                    let s_f = logits_f.mapv(sigmoid);
                    let d_loss = bce_loss(&s_r, true) + bce_loss(&s_f, false);
                    disc.zero_grads();
                    let nr = s_r.len() as f64;
                    disc.backward(&dcache_r, &s_r.mapv(|s| (s - 1.0) / nr));
                    let nf = s_f.len() as f64;
                    disc.backward(&dcache_f, &s_f.mapv(|s| s / nf));
                    opt_d.step(disc);

                    // generator update against the refreshed discriminator
                    let (logits_g, dcache_g) = disc.forward_train(&x, &fake);
                    let s_g = logits_g.mapv(sigmoid);
                    let adv = bce_loss(&s_g, true);
                    let l1 = l1_loss(&fake, &y)?;
                    let total = adv + config.l1_weight * l1;
                    if !total.is_finite() || !d_loss.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            epoch,
                            batch: batch_idx,
                            value: total,
                        });
                    }
                    disc.zero_grads();
                    let ng = s_g.len() as f64;
                    let mut d_fake = disc.backward(&dcache_g, &s_g.mapv(|s| (s - 1.0) / ng));
                    disc.zero_grads();
                    d_fake
                        .iter_mut()
                        .zip(l1_grad(&fake, &y).iter())
                        .for_each(|(g, &lg)| *g += config.l1_weight * lg);
                    generator.zero_grads();
                    generator.backward(&gcache, &d_fake);
                    opt_g.step(&mut generator);

                    l1_sum += l1 * b;
                    adv_sum += adv * b;
                    disc_sum += d_loss * b;
                }
                (ModelKind::Cgan, None) => unreachable!(),
            }
            seen += chunk.len();
        }
        let record = EpochRecord {
            epoch,
            gen_l1: l1_sum / seen as f64,
            gen_adv: (config.method == ModelKind::Cgan).then(|| adv_sum / seen as f64),
            disc_loss: (config.method == ModelKind::Cgan).then(|| disc_sum / seen as f64),
        };
        if let Some(cb) = on_epoch.as_deref_mut() {
            cb(&record);
        }
        curve.push(record);
        if let Some(stop) = check_stop(&curve, config) {
            return Ok(SessionOutcome {
                generator,
                discriminator,
                curve,
                stop,
            });
        }
    }
}
