//! Network construction: the U-Net generator shared by both methods, the
//! patch discriminator of the conditional GAN, and parameter accounting.
//!
//! The generator is an encoder/decoder with skip concatenations. Encoder
//! stage `i` (0-based) is a stride-2 `same` convolution to
//! `base_filters * min(2^i, 8)` channels, batch-normalized except for the
//! first stage, with leaky-ReLU(0.2). Decoder stages mirror the encoder:
//! nearest 2x upsampling followed by a stride-1 convolution, batch norm and
//! ReLU, consuming the concatenation of the previous decoder output and the
//! matching encoder output. The final stage upsamples, convolves down to
//! `out_channels` and applies the configured output activation. The
//! multitask variant differs from single-task only in `out_channels`
//! (3 per task, stacked), so only the final layer grows.
//!
//! The discriminator scores (input, candidate) channel stacks with a
//! patch-level convolutional classifier: three stride-2 stages, one stride-1
//! stage, then a 1-channel logit map.


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{
    concat_channels, leaky_relu, leaky_relu_backward, relu, relu_backward, split_channels,
    upsample2x, upsample2x_backward, OutputActivation,
};
use crate::nn::{BatchNorm2d, BnCache, Conv2d, HasParams, ParamSlot, Tensor};

const LEAK: f64 = 0.2;

/// Hyperparameters shared by the generator and discriminator builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub in_channels: usize,
    /// 3 for single-task, 6 for multitask (stacked RGB targets).
    pub out_channels: usize,
    pub base_filters: usize,
    /// Number of stride-2 encoder stages.
    pub depth: usize,
    pub kernel_size: usize,
    pub slice_size: usize,
    pub output_activation: OutputActivation,
    /// First-layer width of the discriminator; defaults to 64 at full scale.
    pub disc_base_filters: usize,
}

impl Default for NetworkConfig {
    /// Full-scale configuration calibrated against the reference parameter
    /// totals (see [`generator_breakdown`]).
    fn default() -> Self {
        NetworkConfig {
            in_channels: 3,
            out_channels: 3,
            base_filters: 100,
            depth: 8,
            kernel_size: 3,
            slice_size: 512,
            output_activation: OutputActivation::Tanh,
            disc_base_filters: 64,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidArgument("depth must be >= 1".into()));
        }
        if self.slice_size == 0 || self.slice_size % (1 << self.depth) != 0 {
            return Err(Error::InvalidArgument(format!(
                "slice_size {} not divisible by 2^depth = {}",
                self.slice_size,
                1usize << self.depth
            )));
        }
        if self.out_channels % 3 != 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "out_channels must be 3 * task count, got {}",
                self.out_channels
            )));
        }
        if self.base_filters == 0 || self.disc_base_filters == 0 {
            return Err(Error::InvalidArgument("filter counts must be positive".into()));
        }
        if self.kernel_size == 0 {
            return Err(Error::InvalidArgument("kernel_size must be positive".into()));
        }
        Ok(())
    }

    /// Encoder stage widths, shallow to deep (multiplier capped at 8).
    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..self.depth)
            .map(|i| self.base_filters * (1usize << i.min(3)))
            .collect()
    }

    pub fn tasks(&self) -> usize {
        self.out_channels / 3
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncStage {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DecStage {
    conv: Conv2d,
    bn: BatchNorm2d,
}

/// U-Net generator; also the cGAN generator (the trunk is identical).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generator {
    pub config: NetworkConfig,
    enc: Vec<EncStage>,
    dec: Vec<DecStage>,
    final_conv: Conv2d,
}

/// Intermediate values kept by a training-mode forward pass.
pub struct GenCache {
    enc_inputs: Vec<Tensor>,
    enc_bn: Vec<Option<BnCache>>,
    enc_preact: Vec<Tensor>,
    dec_convin: Vec<Tensor>,
    dec_bn: Vec<BnCache>,
    dec_preact: Vec<Tensor>,
    final_convin: Tensor,
    output: Tensor,
}

impl Generator {
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel_size;
        let ch = config.encoder_channels();
        let mut enc = Vec::with_capacity(config.depth);
        let mut prev = config.in_channels;
        for (i, &c) in ch.iter().enumerate() {
            let conv = Conv2d::new(prev, c, k, 2, &mut rng);
            let bn = (i > 0).then(|| BatchNorm2d::new(c));
            enc.push(EncStage { conv, bn });
            prev = c;
        }
        let mut dec = Vec::new();
        for idx in 0..config.depth.saturating_sub(1) {
            let skip_ch = ch[config.depth - 1 - idx];
            let in_ch = if idx == 0 { ch[config.depth - 1] } else { 2 * skip_ch };
            let out_ch = ch[config.depth - 2 - idx];
            dec.push(DecStage {
                conv: Conv2d::new(in_ch, out_ch, k, 1, &mut rng),
                bn: BatchNorm2d::new(out_ch),
            });
        }
        let final_in = if config.depth > 1 { 2 * ch[0] } else { ch[0] };
        let final_conv = Conv2d::new(final_in, config.out_channels, k, 1, &mut rng);
        Ok(Generator {
            config: config.clone(),
            enc,
            dec,
            final_conv,
        })
    }

    /// Forward pass with batch statistics, returning caches for backprop.
    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, GenCache) {
        let depth = self.config.depth;
        let mut enc_inputs = Vec::with_capacity(depth);
        let mut enc_bn = Vec::with_capacity(depth);
        let mut enc_preact = Vec::with_capacity(depth);
        let mut skips = Vec::with_capacity(depth);
        let mut cur = x.clone();
        for stage in &mut self.enc {
            enc_inputs.push(cur.clone());
            let conv_out = stage.conv.forward(&cur);
            let (pre, cache) = match &mut stage.bn {
                Some(bn) => {
                    let (y, c) = bn.forward_train(&conv_out);
                    (y, Some(c))
                }
                None => (conv_out, None),
            };
            enc_bn.push(cache);
            cur = leaky_relu(&pre, LEAK);
            enc_preact.push(pre);
            skips.push(cur.clone());
        }
        let mut dec_convin = Vec::new();
        let mut dec_bn = Vec::new();
        let mut dec_preact = Vec::new();
        for (idx, stage) in self.dec.iter_mut().enumerate() {
            let input = if idx == 0 {
                cur.clone()
            } else {
                concat_channels(&cur, &skips[depth - 1 - idx])
            };
            let up = upsample2x(&input);
            let conv_out = stage.conv.forward(&up);
            dec_convin.push(up);
            let (pre, cache) = stage.bn.forward_train(&conv_out);
            dec_bn.push(cache);
            cur = relu(&pre);
            dec_preact.push(pre);
        }
        let final_in = if depth > 1 {
            concat_channels(&cur, &skips[0])
        } else {
            cur
        };
        let up = upsample2x(&final_in);
        let logits = self.final_conv.forward(&up);
        let output = self.config.output_activation.apply(&logits);
        let cache = GenCache {
            enc_inputs,
            enc_bn,
            enc_preact,
            dec_convin,
            dec_bn,
            dec_preact,
            final_convin: up,
            output: output.clone(),
        };
        (output, cache)
    }

    /// Inference pass using running batch-norm statistics.
    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let depth = self.config.depth;
        let mut skips = Vec::with_capacity(depth);
        let mut cur = x.clone();
        for stage in &self.enc {
            let conv_out = stage.conv.forward(&cur);
            let pre = match &stage.bn {
                Some(bn) => bn.forward_eval(&conv_out),
                None => conv_out,
            };
            cur = leaky_relu(&pre, LEAK);
            skips.push(cur.clone());
        }
        for (idx, stage) in self.dec.iter().enumerate() {
            let input = if idx == 0 {
                cur.clone()
            } else {
                concat_channels(&cur, &skips[depth - 1 - idx])
            };
            let up = upsample2x(&input);
            let pre = stage.bn.forward_eval(&stage.conv.forward(&up));
            cur = relu(&pre);
        }
        let final_in = if depth > 1 {
            concat_channels(&cur, &skips[0])
        } else {
            cur
        };
        self.config
            .output_activation
            .apply(&self.final_conv.forward(&upsample2x(&final_in)))
    }

    /// Backward pass; accumulates parameter gradients, returns the gradient
    /// with respect to the network input.
    pub fn backward(&mut self, cache: &GenCache, dout: &Tensor) -> Tensor {
        let depth = self.config.depth;
        let ch = self.config.encoder_channels();
        // grad reaching each encoder stage's activated output
        let mut enc_out_grad: Vec<Option<Tensor>> = vec![None; depth];

        let d_logits = self.config.output_activation.backward(&cache.output, dout);
        let d_up = self.final_conv.backward(&cache.final_convin, &d_logits);
        let d_final_in = upsample2x_backward(&d_up);
        let mut carry = if depth > 1 {
            let (d_prev, d_skip) = split_channels(&d_final_in, ch[0]);
            accumulate(&mut enc_out_grad[0], d_skip);
            d_prev
        } else {
            d_final_in
        };

        for idx in (0..self.dec.len()).rev() {
            let stage = &mut self.dec[idx];
            let d_pre = relu_backward(&cache.dec_preact[idx], &carry);
            let d_conv = stage.bn.backward(&cache.dec_bn[idx], &d_pre);
            let d_up = stage.conv.backward(&cache.dec_convin[idx], &d_conv);
            let d_input = upsample2x_backward(&d_up);
            if idx == 0 {
                accumulate(&mut enc_out_grad[depth - 1], d_input);
                carry = Tensor::zeros((0, 0, 0, 0)); // unused past this point
            } else {
                let prev_ch = ch[depth - 1 - idx];
                let (d_prev, d_skip) = split_channels(&d_input, prev_ch);
                accumulate(&mut enc_out_grad[depth - 1 - idx], d_skip);
                carry = d_prev;
            }
        }
        if self.dec.is_empty() {
            accumulate(&mut enc_out_grad[depth - 1], carry);
        }

        let mut d_down: Option<Tensor> = None;
        for i in (0..depth).rev() {
            let mut d_out = enc_out_grad[i].take().unwrap_or_else(|| {
                Tensor::zeros(cache.enc_preact[i].dim())
            });
            if let Some(d) = d_down.take() {
                d_out += &d;
            }
            let stage = &mut self.enc[i];
            let d_pre = leaky_relu_backward(&cache.enc_preact[i], &d_out, LEAK);
            let d_conv = match (&mut stage.bn, &cache.enc_bn[i]) {
                (Some(bn), Some(c)) => bn.backward(c, &d_pre),
                _ => d_pre,
            };
            d_down = Some(stage.conv.backward(&cache.enc_inputs[i], &d_conv));
        }
        d_down.expect("depth >= 1")
    }

    /// Restores gradient buffers after deserialization.
    pub fn ensure_grads(&mut self) {
        for s in &mut self.enc {
            s.conv.ensure_grads();
            if let Some(bn) = &mut s.bn {
                bn.ensure_grads();
            }
        }
        for s in &mut self.dec {
            s.conv.ensure_grads();
            s.bn.ensure_grads();
        }
        self.final_conv.ensure_grads();
    }

    /// Non-trainable running-statistic scalars held by norm layers.
    pub fn running_stat_count(&self) -> usize {
        let enc: usize = self
            .enc
            .iter()
            .filter_map(|s| s.bn.as_ref())
            .map(|b| b.running_stat_count())
            .sum();
        let dec: usize = self.dec.iter().map(|s| s.bn.running_stat_count()).sum();
        enc + dec
    }
}

impl HasParams for Generator {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        for s in &mut self.enc {
            s.conv.visit_params(f);
            if let Some(bn) = &mut s.bn {
                bn.visit_params(f);
            }
        }
        for s in &mut self.dec {
            s.conv.visit_params(f);
            s.bn.visit_params(f);
        }
        self.final_conv.visit_params(f);
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: Tensor) {
    match slot {
        Some(acc) => *acc += &grad,
        None => *slot = Some(grad),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiscStage {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

/// Patch-level real/fake classifier over `(input, candidate targets)` stacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discriminator {
    pub config: NetworkConfig,
    layers: Vec<DiscStage>,
}

pub struct DiscCache {
    conv_inputs: Vec<Tensor>,
    bn: Vec<Option<BnCache>>,
    preact: Vec<Tensor>,
}

impl Discriminator {
    /// Channel plan: three stride-2 stages, one stride-1 stage, then the
    /// 1-channel logit map. Widths double up from `disc_base_filters`.
    fn plan(config: &NetworkConfig) -> Vec<(usize, usize, usize, bool)> {
        let ndf = config.disc_base_filters;
        let cin = config.in_channels + config.out_channels;
        vec![
            // (in, out, stride, batch_norm)
            (cin, ndf, 2, false),
            (ndf, 2 * ndf, 2, true),
            (2 * ndf, 4 * ndf, 2, true),
            (4 * ndf, 8 * ndf, 1, true),
            (8 * ndf, 1, 1, false),
        ]
    }

    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.slice_size < 8 {
            return Err(Error::InvalidArgument(
                "slice_size must be >= 8 for the patch discriminator".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Self::plan(config)
            .into_iter()
            .map(|(cin, cout, stride, norm)| DiscStage {
                conv: Conv2d::new(cin, cout, config.kernel_size, stride, &mut rng),
                bn: norm.then(|| BatchNorm2d::new(cout)),
            })
            .collect();
        Ok(Discriminator {
            config: config.clone(),
            layers,
        })
    }

    /// Scores a conditioned candidate; `input` and `candidate` are
    /// concatenated on channels. Returns patch logits `[N, 1, h, w]`.
    pub fn forward_train(&mut self, input: &Tensor, candidate: &Tensor) -> (Tensor, DiscCache) {
        let x = concat_channels(input, candidate);
        let mut conv_inputs = Vec::new();
        let mut bn_caches = Vec::new();
        let mut preact = Vec::new();
        let mut cur = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            conv_inputs.push(cur.clone());
            let conv_out = layer.conv.forward(&cur);
            let (pre, cache) = match &mut layer.bn {
                Some(bn) => {
                    let (y, c) = bn.forward_train(&conv_out);
                    (y, Some(c))
                }
                None => (conv_out, None),
            };
            bn_caches.push(cache);
            if i < last {
                cur = leaky_relu(&pre, LEAK);
            } else {
                cur = pre.clone();
            }
            preact.push(pre);
        }
        (
            cur,
            DiscCache {
                conv_inputs,
                bn: bn_caches,
                preact,
            },
        )
    }

    pub fn forward_eval(&self, input: &Tensor, candidate: &Tensor) -> Tensor {
        let mut cur = concat_channels(input, candidate);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let conv_out = layer.conv.forward(&cur);
            let pre = match &layer.bn {
                Some(bn) => bn.forward_eval(&conv_out),
                None => conv_out,
            };
            cur = if i < last { leaky_relu(&pre, LEAK) } else { pre };
        }
        cur
    }

    /// Backward from patch-logit gradients; returns the gradient with respect
    /// to the *candidate* part of the input stack.
    pub fn backward(&mut self, cache: &DiscCache, d_logits: &Tensor) -> Tensor {
        let last = self.layers.len() - 1;
        let mut carry = d_logits.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                carry = leaky_relu_backward(&cache.preact[i], &carry, LEAK);
            }
            let layer = &mut self.layers[i];
            let d_conv = match (&mut layer.bn, &cache.bn[i]) {
                (Some(bn), Some(c)) => bn.backward(c, &carry),
                _ => carry,
            };
            carry = layer.conv.backward(&cache.conv_inputs[i], &d_conv);
        }
        let (_, d_candidate) = split_channels(&carry, self.config.in_channels);
        d_candidate
    }

    pub fn ensure_grads(&mut self) {
        for l in &mut self.layers {
            l.conv.ensure_grads();
            if let Some(bn) = &mut l.bn {
                bn.ensure_grads();
            }
        }
    }

    pub fn running_stat_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.bn.as_ref())
            .map(|b| b.running_stat_count())
            .sum()
    }
}

impl HasParams for Discriminator {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        for l in &mut self.layers {
            l.conv.visit_params(f);
            if let Some(bn) = &mut l.bn {
                bn.visit_params(f);
            }
        }
    }
}

/// Counts trainable scalars of any parameterized model.
pub fn count_parameters(model: &mut impl HasParams) -> usize {
    model.param_count()
}

/// One line of a structural parameter tally.
#[derive(Debug, Clone, Serialize)]
pub struct LayerCount {
    pub name: String,
    pub trainable: usize,
    pub running_stats: usize,
}

/// Structural per-layer parameter tally for the generator, computed from the
/// configuration without allocating weights. `trainable` covers conv
/// weights/biases and norm scale/offset; `running_stats` covers norm moving
/// mean/variance, which some toolkits fold into their reported totals.
pub fn generator_breakdown(config: &NetworkConfig) -> Vec<LayerCount> {
    let k2 = config.kernel_size * config.kernel_size;
    let ch = config.encoder_channels();
    let mut out = Vec::new();
    let mut prev = config.in_channels;
    for (i, &c) in ch.iter().enumerate() {
        let bn = i > 0;
        out.push(LayerCount {
            name: format!("enc{}", i + 1),
            trainable: k2 * prev * c + c + if bn { 2 * c } else { 0 },
            running_stats: if bn { 2 * c } else { 0 },
        });
        prev = c;
    }
    for idx in 0..config.depth.saturating_sub(1) {
        let skip_ch = ch[config.depth - 1 - idx];
        let cin = if idx == 0 { ch[config.depth - 1] } else { 2 * skip_ch };
        let cout = ch[config.depth - 2 - idx];
        out.push(LayerCount {
            name: format!("dec{}", config.depth - idx),
            trainable: k2 * cin * cout + cout + 2 * cout,
            running_stats: 2 * cout,
        });
    }
    let fin = if config.depth > 1 { 2 * ch[0] } else { ch[0] };
    out.push(LayerCount {
        name: "final".into(),
        trainable: k2 * fin * config.out_channels + config.out_channels,
        running_stats: 0,
    });
    out
}

/// Structural per-layer tally for the discriminator.
pub fn discriminator_breakdown(config: &NetworkConfig) -> Vec<LayerCount> {
    let k2 = config.kernel_size * config.kernel_size;
    Discriminator::plan(config)
        .into_iter()
        .enumerate()
        .map(|(i, (cin, cout, _, norm))| LayerCount {
            name: format!("disc{}", i + 1),
            trainable: k2 * cin * cout + cout + if norm { 2 * cout } else { 0 },
            running_stats: if norm { 2 * cout } else { 0 },
        })
        .collect()
}

pub fn breakdown_totals(layers: &[LayerCount]) -> (usize, usize) {
    let trainable = layers.iter().map(|l| l.trainable).sum();
    let stats = layers.iter().map(|l| l.running_stats).sum();
    (trainable, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn toy_config() -> NetworkConfig {
        NetworkConfig {
            in_channels: 3,
            out_channels: 3,
            base_filters: 4,
            depth: 2,
            kernel_size: 3,
            slice_size: 64,
            output_activation: OutputActivation::Tanh,
            disc_base_filters: 4,
        }
    }

    #[test]
    fn rejects_indivisible_slice_size() {
        let cfg = NetworkConfig {
            slice_size: 100,
            depth: 3,
            ..toy_config()
        };
        assert!(Generator::build(&cfg, 0).is_err());
    }

    #[test]
    fn forward_shape_and_range() {
        let cfg = toy_config();
        let mut gen = Generator::build(&cfg, 42).unwrap();
        let x = Array4::zeros((1, 3, 64, 64));
        let (y, _) = gen.forward_train(&x);
        assert_eq!(y.dim(), (1, 3, 64, 64));
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
        let y2 = gen.forward_eval(&x);
        assert_eq!(y2.dim(), (1, 3, 64, 64));
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = toy_config();
        let mut a = Generator::build(&cfg, 7).unwrap();
        let mut b = Generator::build(&cfg, 7).unwrap();
        let mut va = Vec::new();
        a.visit_params(&mut |s| va.extend(s.value.iter().copied()));
        let mut vb = Vec::new();
        b.visit_params(&mut |s| vb.extend(s.value.iter().copied()));
        assert_eq!(va, vb);
        let mut c = Generator::build(&cfg, 8).unwrap();
        let mut vc = Vec::new();
        c.visit_params(&mut |s| vc.extend(s.value.iter().copied()));
        assert_ne!(va, vc);
    }

    #[test]
    fn structural_count_matches_built_model() {
        for cfg in [
            toy_config(),
            NetworkConfig {
                out_channels: 6,
                depth: 3,
                base_filters: 5,
                ..toy_config()
            },
        ] {
            let mut gen = Generator::build(&cfg, 1).unwrap();
            let (trainable, stats) = breakdown_totals(&generator_breakdown(&cfg));
            assert_eq!(count_parameters(&mut gen), trainable);
            assert_eq!(gen.running_stat_count(), stats);
            let mut disc = Discriminator::build(&cfg, 1).unwrap();
            let (dt, ds) = breakdown_totals(&discriminator_breakdown(&cfg));
            assert_eq!(count_parameters(&mut disc), dt);
            assert_eq!(disc.running_stat_count(), ds);
        }
    }

    #[test]
    fn multitask_grows_only_final_layer() {
        let st = toy_config();
        let mt = NetworkConfig {
            out_channels: 6,
            ..st.clone()
        };
        let bst = generator_breakdown(&st);
        let bmt = generator_breakdown(&mt);
        assert_eq!(bst.len(), bmt.len());
        for (a, b) in bst.iter().zip(&bmt) {
            if a.name == "final" {
                let k2 = st.kernel_size * st.kernel_size;
                let fin = 2 * st.base_filters;
                assert_eq!(b.trainable - a.trainable, 3 * (k2 * fin + 1));
            } else {
                assert_eq!(a.trainable, b.trainable, "layer {}", a.name);
            }
        }
    }

    #[test]
    fn full_scale_reference_totals() {
        // Generator totals with running stats folded in reproduce the
        // reference totals exactly; the multitask delta is 5,403 and the
        // discriminator delta 1,728.
        let st = NetworkConfig::default();
        let (t, s) = breakdown_totals(&generator_breakdown(&st));
        assert_eq!(t + s, 74_750_703);
        let mt = NetworkConfig {
            out_channels: 6,
            ..NetworkConfig::default()
        };
        let (t2, s2) = breakdown_totals(&generator_breakdown(&mt));
        assert_eq!(t2 + s2, 74_756_106);
        assert_eq!(t2 - t, 5_403);
        let (d1, _) = breakdown_totals(&discriminator_breakdown(&st));
        let (d2, _) = breakdown_totals(&discriminator_breakdown(&mt));
        assert_eq!(d2 - d1, 1_728);
    }

    #[test]
    fn single_conv_count_example() {
        // kernel 3x3, 2 -> 4 channels with bias: 3*3*2*4 + 4 = 76
        let mut conv = Conv2d::new(2, 4, 3, 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(count_parameters(&mut conv), 76);
    }

    #[test]
    fn discriminator_patch_grid() {
        let cfg = toy_config();
        let mut disc = Discriminator::build(&cfg, 3).unwrap();
        let x = Array4::zeros((2, 3, 64, 64));
        let y = Array4::zeros((2, 3, 64, 64));
        let (logits, _) = disc.forward_train(&x, &y);
        assert_eq!(logits.dim(), (2, 1, 8, 8));
        assert!(logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn discriminator_multitask_input_channels() {
        let mt = NetworkConfig {
            out_channels: 6,
            ..toy_config()
        };
        let plan = Discriminator::plan(&mt);
        assert_eq!(plan[0].0, mt.in_channels + 6);
    }

    #[test]
    fn discriminator_distinguishes_inputs() {
        // scores must differ between a real target and a fresh generator's output
        let cfg = toy_config();
        let mut disc = Discriminator::build(&cfg, 5).unwrap();
        let mut gen = Generator::build(&cfg, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array4::from_shape_simple_fn((1, 3, 64, 64), || {
            rand::Rng::gen_range(&mut rng, -1.0..1.0)
        });
        let real = x.mapv(|v: f64| (v * 0.9).clamp(-1.0, 1.0));
        let fake = gen.forward_eval(&x);
        let s_real = disc.forward_eval(&x, &real);
        let s_fake = disc.forward_eval(&x, &fake);
        assert!(
            (&s_real - &s_fake).mapv(f64::abs).sum() > 1e-9,
            "discriminator is constant over differing candidates"
        );
    }

    #[test]
    fn serde_roundtrip_preserves_outputs() {
        let cfg = toy_config();
        let gen = Generator::build(&cfg, 11).unwrap();
        let x = Array4::from_elem((1, 3, 64, 64), 0.25);
        let before = gen.forward_eval(&x);
        let json = serde_json::to_string(&gen).unwrap();
        let mut back: Generator = serde_json::from_str(&json).unwrap();
        back.ensure_grads();
        let after = back.forward_eval(&x);
        assert_eq!(before, after);
    }

    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;
}
