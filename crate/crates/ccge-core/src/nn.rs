//! Dense MLP kernel: exact reverse-mode gradients for the fixed
//! ReLU-hidden / linear-output topology, AdamW, gradient clipping, polyak
//! averaging, and a portable JSON checkpoint format.
//!
//! The topology set in this project is small and closed, so gradients are
//! hand-coded rather than taped. Everything is `f64` end to end, which lets
//! finite-difference checks run at tight tolerances against the exact same
//! arithmetic used in training.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;

/// Feedforward network with ReLU hidden layers and a linear output layer.
///
/// Layer `l` maps `sizes[l]` inputs to `sizes[l+1]` outputs; weights are
/// row-major `(out, in)`. AdamW moments live alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: u64,
}

/// Gradients for every parameter array of an [`Mlp`], same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Mlp) -> Self {
        GradientSet {
            w: net.w.iter().map(|l| vec![0.0; l.len()]).collect(),
            b: net.b.iter().map(|l| vec![0.0; l.len()]).collect(),
        }
    }

    /// Global L2 norm over all entries.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for l in self.w.iter().chain(self.b.iter()) {
            sq += math::dot(l, l);
        }
        math::sqrt(sq)
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(self.b.iter())
            .all(|l| l.iter().all(|x| x.is_finite()))
    }

    fn congruent_with(&self, net: &Mlp) -> bool {
        self.w.len() == net.w.len()
            && self.b.len() == net.b.len()
            && self.w.iter().zip(&net.w).all(|(a, b)| a.len() == b.len())
            && self.b.iter().zip(&net.b).all(|(a, b)| a.len() == b.len())
    }
}

/// Scales `grads` in place so its global L2 norm is at most `max_norm`.
/// Direction is preserved; a no-op when the norm is already within bounds.
pub fn clip_grad_norm(grads: &mut GradientSet, max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for l in grads.w.iter_mut().chain(grads.b.iter_mut()) {
            for x in l.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// AdamW hyperparameters. The decay is decoupled: it multiplies parameters
/// directly instead of entering the moment estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 4e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl Mlp {
    /// Uniform fan-in initialization: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    /// The final layer is additionally scaled by `final_layer_scale`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R, final_layer_scale: f64) -> Result<Self, CoreError> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.len() - 1;
        let mut w = Vec::with_capacity(layers);
        let mut b = Vec::with_capacity(layers);
        for l in 0..layers {
            let fan_in = sizes[l];
            let bound = 1.0 / math::sqrt(fan_in as f64);
            let scale = if l == layers - 1 { final_layer_scale } else { 1.0 };
            let mut wl = vec![0.0; sizes[l + 1] * sizes[l]];
            let mut bl = vec![0.0; sizes[l + 1]];
            for x in wl.iter_mut() {
                *x = rng.gen_range(-bound..bound) * scale;
            }
            for x in bl.iter_mut() {
                *x = rng.gen_range(-bound..bound) * scale;
            }
            w.push(wl);
            b.push(bl);
        }
        let m_w = w.iter().map(|l| vec![0.0; l.len()]).collect();
        let v_w = w.iter().map(|l| vec![0.0; l.len()]).collect();
        let m_b = b.iter().map(|l| vec![0.0; l.len()]).collect();
        let v_b = b.iter().map(|l| vec![0.0; l.len()]).collect();
        Ok(Mlp { sizes: sizes.to_vec(), w, b, m_w, v_w, m_b, v_b, step: 0 })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn check_input(&self, x: &[f64]) -> Result<(), CoreError> {
        if x.len() != self.input_dim() {
            return Err(CoreError::Shape(format!(
                "input length {} does not match first layer size {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, CoreError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let layers = self.w.len();
        for l in 0..layers {
            let out_dim = self.sizes[l + 1];
            let in_dim = self.sizes[l];
            let mut next = vec![0.0; out_dim];
            for (o, next_o) in next.iter_mut().enumerate() {
                let row = &self.w[l][o * in_dim..(o + 1) * in_dim];
                let z = math::dot(row, &cur) + self.b[l][o];
                *next_o = if l + 1 < layers && z < 0.0 { 0.0 } else { z };
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Forward pass for a batch, one output row per input row.
    pub fn forward_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, CoreError> {
        inputs.iter().map(|x| self.forward(x)).collect()
    }

    /// Exact reverse-mode gradients of the batch-mean loss.
    ///
    /// `out_grads[i]` is the per-sample gradient of sample `i`'s loss with
    /// respect to the network output. Returns the parameter gradients of
    /// `(1/B) * sum_i loss_i` plus, for each sample, the *unscaled* gradient
    /// of `loss_i` with respect to that sample's input (used to chain losses
    /// through a critic into the actor).
    pub fn backward_batch(
        &self,
        inputs: &[Vec<f64>],
        out_grads: &[Vec<f64>],
    ) -> Result<(GradientSet, Vec<Vec<f64>>), CoreError> {
        if inputs.len() != out_grads.len() {
            return Err(CoreError::Shape(format!(
                "batch of {} inputs but {} output gradients",
                inputs.len(),
                out_grads.len()
            )));
        }
        let layers = self.w.len();
        let mut grads = GradientSet::zeros_like(self);
        let mut input_grads = Vec::with_capacity(inputs.len());
        // activations[0] = input, activations[l+1] = output of layer l
        let mut acts: Vec<Vec<f64>> = self.sizes.iter().map(|&s| vec![0.0; s]).collect();
        for (x, g_out) in inputs.iter().zip(out_grads) {
            self.check_input(x)?;
            if g_out.len() != self.output_dim() {
                return Err(CoreError::Shape(format!(
                    "output gradient length {} does not match last layer size {}",
                    g_out.len(),
                    self.output_dim()
                )));
            }
            if !g_out.iter().all(|v| v.is_finite()) {
                return Err(CoreError::NonFinite("upstream gradient".to_string()));
            }
            // forward, storing post-activations
            acts[0].copy_from_slice(x);
            for l in 0..layers {
                let in_dim = self.sizes[l];
                let (prev, rest) = acts.split_at_mut(l + 1);
                let (prev, cur) = (&prev[l], &mut rest[0]);
                for (o, cur_o) in cur.iter_mut().enumerate() {
                    let row = &self.w[l][o * in_dim..(o + 1) * in_dim];
                    let z = math::dot(row, prev) + self.b[l][o];
                    *cur_o = if l + 1 < layers && z < 0.0 { 0.0 } else { z };
                }
            }
            // backward
            let mut delta = g_out.clone();
            for l in (0..layers).rev() {
                let in_dim = self.sizes[l];
                let prev = &acts[l];
                let gw = &mut grads.w[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &mut gw[o * in_dim..(o + 1) * in_dim];
                        for (ri, &pi) in row.iter_mut().zip(prev.iter()) {
                            *ri += d * pi;
                        }
                        grads.b[l][o] += d;
                    }
                }
                // gradient into layer input; ReLU mask for hidden activations
                let mut prev_delta = vec![0.0; in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &self.w[l][o * in_dim..(o + 1) * in_dim];
                        for (pd, &wv) in prev_delta.iter_mut().zip(row.iter()) {
                            *pd += d * wv;
                        }
                    }
                }
                if l > 0 {
                    for (pd, &a) in prev_delta.iter_mut().zip(prev.iter()) {
                        if a <= 0.0 {
                            *pd = 0.0;
                        }
                    }
                }
                delta = prev_delta;
            }
            input_grads.push(delta);
        }
        let inv_b = 1.0 / inputs.len().max(1) as f64;
        for l in grads.w.iter_mut().chain(grads.b.iter_mut()) {
            for x in l.iter_mut() {
                *x *= inv_b;
            }
        }
        Ok((grads, input_grads))
    }

    /// One AdamW update with decoupled weight decay; increments the step counter.
    pub fn adamw_step(&mut self, grads: &GradientSet, opt: &AdamW) -> Result<(), CoreError> {
        if !grads.congruent_with(self) {
            return Err(CoreError::Shape("gradient set does not match network".to_string()));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(opt.beta1, t);
        let bc2 = 1.0 - libm::pow(opt.beta2, t);
        let layers = self.w.len();
        for l in 0..layers {
            adamw_update(&mut self.w[l], &grads.w[l], &mut self.m_w[l], &mut self.v_w[l], opt, bc1, bc2);
            adamw_update(&mut self.b[l], &grads.b[l], &mut self.m_b[l], &mut self.v_b[l], opt, bc1, bc2);
        }
        Ok(())
    }

    /// target <- tau * online + (1 - tau) * target, elementwise.
    pub fn polyak_from(&mut self, online: &Mlp, tau: f64) -> Result<(), CoreError> {
        if self.sizes != online.sizes {
            return Err(CoreError::Shape(format!(
                "polyak between architectures {:?} and {:?}",
                self.sizes, online.sizes
            )));
        }
        for (tl, ol) in self.w.iter_mut().zip(&online.w).chain(self.b.iter_mut().zip(&online.b)) {
            for (t, &o) in tl.iter_mut().zip(ol.iter()) {
                *t = tau * o + (1.0 - tau) * *t;
            }
        }
        Ok(())
    }

    // Flat parameter view, used by finite-difference checks.

    pub fn flat_len(&self) -> usize {
        self.w.iter().map(|l| l.len()).sum::<usize>() + self.b.iter().map(|l| l.len()).sum::<usize>()
    }

    pub fn get_flat(&self, idx: usize) -> f64 {
        let mut i = idx;
        for l in self.w.iter().chain(self.b.iter()) {
            if i < l.len() {
                return l[i];
            }
            i -= l.len();
        }
        panic!("flat index {idx} out of range");
    }

    pub fn add_flat(&mut self, idx: usize, dv: f64) {
        let mut i = idx;
        for l in self.w.iter_mut().chain(self.b.iter_mut()) {
            if i < l.len() {
                l[i] += dv;
                return;
            }
            i -= l.len();
        }
        panic!("flat index {idx} out of range");
    }

    /// Flat view of a [`GradientSet`] in the same order as [`Mlp::get_flat`].
    pub fn grad_flat(grads: &GradientSet, idx: usize) -> f64 {
        let mut i = idx;
        for l in grads.w.iter().chain(grads.b.iter()) {
            if i < l.len() {
                return l[i];
            }
            i -= l.len();
        }
        panic!("flat index {idx} out of range");
    }
}

fn adamw_update(params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], opt: &AdamW, bc1: f64, bc2: f64) {
    for i in 0..params.len() {
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= opt.lr * (m_hat / (math::sqrt(v_hat) + opt.eps) + opt.weight_decay * params[i]);
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetRecord {
    pub layer_sizes: Vec<usize>,
    pub tensors: BTreeMap<String, TensorRecord>,
}

/// A single JSON document holding any number of named networks plus scalar
/// values (e.g. the entropy temperature). Round-trips are bit-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub nets: BTreeMap<String, NetRecord>,
    pub scalars: BTreeMap<String, f64>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, nets: BTreeMap::new(), scalars: BTreeMap::new() }
    }

    pub fn insert_net(&mut self, name: &str, net: &Mlp) {
        self.nets.insert(name.to_string(), net.to_record());
    }

    pub fn net(&self, name: &str) -> Result<Mlp, CoreError> {
        let record = self
            .nets
            .get(name)
            .ok_or_else(|| CoreError::CheckpointCorrupt(format!("missing network '{name}'")))?;
        Mlp::from_record(record)
    }

    /// Like [`Checkpoint::net`] but also enforces an expected architecture.
    pub fn net_expecting(&self, name: &str, expected_sizes: &[usize]) -> Result<Mlp, CoreError> {
        let net = self.net(name)?;
        if net.sizes != expected_sizes {
            return Err(CoreError::Shape(format!(
                "network '{name}' has layer sizes {:?}, expected {:?} (tensor '{name}/w0')",
                net.sizes, expected_sizes
            )));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        let ckpt: Checkpoint = serde_json::from_str(text)
            .map_err(|e| CoreError::CheckpointCorrupt(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CoreError::CheckpointVersion { found: ckpt.version, expected: CHECKPOINT_VERSION });
        }
        Ok(ckpt)
    }
}

impl Mlp {
    pub fn to_record(&self) -> NetRecord {
        let mut tensors = BTreeMap::new();
        for l in 0..self.w.len() {
            let wshape = vec![self.sizes[l + 1], self.sizes[l]];
            let bshape = vec![self.sizes[l + 1]];
            tensors.insert(format!("w{l}"), TensorRecord { shape: wshape.clone(), data: self.w[l].clone() });
            tensors.insert(format!("b{l}"), TensorRecord { shape: bshape.clone(), data: self.b[l].clone() });
            tensors.insert(format!("m_w{l}"), TensorRecord { shape: wshape.clone(), data: self.m_w[l].clone() });
            tensors.insert(format!("v_w{l}"), TensorRecord { shape: wshape, data: self.v_w[l].clone() });
            tensors.insert(format!("m_b{l}"), TensorRecord { shape: bshape.clone(), data: self.m_b[l].clone() });
            tensors.insert(format!("v_b{l}"), TensorRecord { shape: bshape, data: self.v_b[l].clone() });
        }
        tensors.insert(
            "step".to_string(),
            TensorRecord { shape: vec![1], data: vec![self.step as f64] },
        );
        NetRecord { layer_sizes: self.sizes.clone(), tensors }
    }

    pub fn from_record(record: &NetRecord) -> Result<Self, CoreError> {
        let sizes = &record.layer_sizes;
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::CheckpointCorrupt(format!("invalid layer_sizes {sizes:?}")));
        }
        let layers = sizes.len() - 1;
        let fetch = |name: &str, shape: &[usize]| -> Result<Vec<f64>, CoreError> {
            let t = record
                .tensors
                .get(name)
                .ok_or_else(|| CoreError::CheckpointCorrupt(format!("missing tensor '{name}'")))?;
            let expected_len: usize = shape.iter().product();
            if t.shape != shape || t.data.len() != expected_len {
                return Err(CoreError::Shape(format!(
                    "tensor '{name}' has shape {:?} with {} values, expected {:?}",
                    t.shape,
                    t.data.len(),
                    shape
                )));
            }
            Ok(t.data.clone())
        };
        let mut net = Mlp {
            sizes: sizes.clone(),
            w: Vec::with_capacity(layers),
            b: Vec::with_capacity(layers),
            m_w: Vec::with_capacity(layers),
            v_w: Vec::with_capacity(layers),
            m_b: Vec::with_capacity(layers),
            v_b: Vec::with_capacity(layers),
            step: record
                .tensors
                .get("step")
                .map(|t| t.data.first().copied().unwrap_or(0.0) as u64)
                .unwrap_or(0),
        };
        for l in 0..layers {
            let wshape = [sizes[l + 1], sizes[l]];
            let bshape = [sizes[l + 1]];
            net.w.push(fetch(&format!("w{l}"), &wshape)?);
            net.b.push(fetch(&format!("b{l}"), &bshape)?);
            net.m_w.push(fetch(&format!("m_w{l}"), &wshape)?);
            net.v_w.push(fetch(&format!("v_w{l}"), &wshape)?);
            net.m_b.push(fetch(&format!("m_b{l}"), &bshape)?);
            net.v_b.push(fetch(&format!("v_b{l}"), &bshape)?);
        }
        Ok(net)
    }
}
