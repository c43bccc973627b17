//! A small pre-norm causal transformer with hand-written backward pass.
//!
//! Parameters live in one flat `Vec<f64>`; [`Layout`] records where each tensor sits.
//! Gradients use the same layout, which keeps the optimizer, snapshots and
//! finite-difference checks oblivious to the architecture.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::linalg::*;
use super::optim::AdamState;
use super::vocab::{TokenId, Vocab};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub context_length: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 192,
            context_length: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.context_length < 2 {
            return Err(Error::Config("context_length must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Matrices receive weight decay; gains, biases and embeddings do not.
    pub decay: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    w_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
    tok_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    w_out: usize,
    b_out: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig, vocab_size: usize) -> Self {
        let (d, f, v) = (cfg.d_model, cfg.d_ff, vocab_size);
        let mut tensors = Vec::new();
        let mut off = 0;
        let mut push = |name: String, shape: Vec<usize>, decay: bool| {
            let spec = TensorSpec {
                name,
                shape,
                offset: off,
                decay,
            };
            off += spec.len();
            let o = spec.offset;
            tensors.push(spec);
            o
        };
        let tok_emb = push("tok_emb".into(), vec![v, d], false);
        let pos_emb = push("pos_emb".into(), vec![cfg.context_length, d], false);
        let layers = (0..cfg.n_layers)
            .map(|l| LayerOffsets {
                ln1_g: push(format!("layers.{l}.ln1.g"), vec![d], false),
                ln1_b: push(format!("layers.{l}.ln1.b"), vec![d], false),
                w_qkv: push(format!("layers.{l}.attn.w_qkv"), vec![d, 3 * d], true),
                w_o: push(format!("layers.{l}.attn.w_o"), vec![d, d], true),
                ln2_g: push(format!("layers.{l}.ln2.g"), vec![d], false),
                ln2_b: push(format!("layers.{l}.ln2.b"), vec![d], false),
                w1: push(format!("layers.{l}.mlp.w1"), vec![d, f], true),
                b1: push(format!("layers.{l}.mlp.b1"), vec![f], false),
                w2: push(format!("layers.{l}.mlp.w2"), vec![f, d], true),
                b2: push(format!("layers.{l}.mlp.b2"), vec![d], false),
            })
            .collect();
        let lnf_g = push("lnf.g".into(), vec![d], false);
        let lnf_b = push("lnf.b".into(), vec![d], false);
        let w_out = push("head.w".into(), vec![d, v], true);
        let b_out = push("head.b".into(), vec![v], false);
        Self {
            tensors,
            total: off,
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
        }
    }
}

/// A trained or trainable model: parameters, vocabulary and optimizer bookkeeping.
#[derive(Clone, Debug)]
pub struct ModelHandle {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Vec<f64>,
    pub step_counter: u64,
    pub(crate) layout: Layout,
    pub(crate) optim: Option<AdamState>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct Forward {
    pub len: usize,
    /// First position whose logits were computed.
    pub logits_from: usize,
    /// Raw logits, `(len - logits_from) × vocab`.
    pub logits: Vec<f64>,
    ids: Vec<TokenId>,
    layers: Vec<LayerCache>,
    x_final: Vec<f64>,
    lnf_out: Vec<f64>,
    lnf_mean: Vec<f64>,
    lnf_rstd: Vec<f64>,
}

struct LayerCache {
    x_in: Vec<f64>,
    h1: Vec<f64>,
    ln1_mean: Vec<f64>,
    ln1_rstd: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    attn: Vec<f64>,
    x_mid: Vec<f64>,
    h2: Vec<f64>,
    ln2_mean: Vec<f64>,
    ln2_rstd: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
}

impl ModelHandle {
    /// Initializes parameters deterministically from `seed`.
    pub fn init(vocab: Vocab, config: ModelConfig, seed: u64) -> Result<Self> {
        Self::init_with_std(vocab, config, seed, 0.02)
    }

    /// All-zero weights with unit layer-norm gains: every next-token distribution is uniform.
    pub fn uniform(vocab: Vocab, config: ModelConfig) -> Result<Self> {
        Self::init_with_std(vocab, config, 0, 0.0)
    }

    pub fn init_with_std(vocab: Vocab, config: ModelConfig, seed: u64, std: f64) -> Result<Self> {
        config.validate()?;
        if vocab.len() < 3 {
            return Err(Error::Config("vocabulary needs at least one word".into()));
        }
        let layout = Layout::new(&config, vocab.len());
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let residual_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        for t in &layout.tensors {
            let r = t.range();
            if t.name.ends_with(".g") {
                params[r].fill(1.0);
            } else if t.shape.len() == 2 && std > 0.0 {
                let s = if t.name.ends_with("w_o") || t.name.ends_with("w2") {
                    std * residual_scale
                } else {
                    std
                };
                let normal = Normal::new(0.0, s).expect("positive std");
                for p in &mut params[r] {
                    *p = normal.sample(&mut rng);
                }
            }
        }
        Ok(Self {
            config,
            vocab,
            params,
            step_counter: 0,
            layout,
            optim: None,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, vocab: Vocab, params: Vec<f64>, step_counter: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config, vocab.len());
        if params.len() != layout.total {
            return Err(Error::Snapshot(format!(
                "parameter count {} does not match layout {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            vocab,
            params,
            step_counter,
            layout,
            optim: None,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// SHA-256 of the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len > self.config.context_length {
            return Err(Error::Length {
                len,
                context: self.config.context_length,
            });
        }
        Ok(())
    }

    /// Runs the network over `ids`, computing logits only for positions `logits_from..`.
    pub fn forward(&self, ids: &[TokenId], logits_from: usize) -> Result<Forward> {
        let t_len = ids.len();
        self.check_len(t_len)?;
        if t_len == 0 || logits_from > t_len {
            return Err(Error::InvalidArgument("empty forward input".into()));
        }
        let ModelConfig {
            d_model: d,
            n_heads,
            d_ff: f,
            ..
        } = self.config;
        let v = self.vocab.len();
        let p = &self.params;
        let lay = &self.layout;

        let mut x = vec![0.0; t_len * d];
        for (t, &id) in ids.iter().enumerate() {
            let id = (id as usize).min(v - 1);
            let te = &p[lay.tok_emb + id * d..lay.tok_emb + (id + 1) * d];
            let pe = &p[lay.pos_emb + t * d..lay.pos_emb + (t + 1) * d];
            for i in 0..d {
                x[t * d + i] = te[i] + pe[i];
            }
        }

        let dh = d / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for lo in &lay.layers {
            let x_in = x;
            let mut h1 = vec![0.0; t_len * d];
            let (mut m1, mut r1) = (vec![0.0; t_len], vec![0.0; t_len]);
            layer_norm(
                t_len,
                d,
                &x_in,
                &p[lo.ln1_g..lo.ln1_g + d],
                &p[lo.ln1_b..lo.ln1_b + d],
                &mut h1,
                &mut m1,
                &mut r1,
            );
            let mut qkv = vec![0.0; t_len * 3 * d];
            matmul(t_len, d, 3 * d, &h1, &p[lo.w_qkv..lo.w_qkv + d * 3 * d], 0.0, &mut qkv);

            let mut probs = vec![0.0; n_heads * t_len * t_len];
            let mut attn = vec![0.0; t_len * d];
            for h in 0..n_heads {
                for i in 0..t_len {
                    let q = &qkv[i * 3 * d + h * dh..i * 3 * d + (h + 1) * dh];
                    let row = &mut probs[(h * t_len + i) * t_len..(h * t_len + i + 1) * t_len];
                    let mut mx = f64::NEG_INFINITY;
                    for j in 0..=i {
                        let k = &qkv[j * 3 * d + d + h * dh..j * 3 * d + d + (h + 1) * dh];
                        let s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                        row[j] = s;
                        mx = mx.max(s);
                    }
                    let mut z = 0.0;
                    for r in row.iter_mut().take(i + 1) {
                        *r = (*r - mx).exp();
                        z += *r;
                    }
                    let out = &mut attn[i * d + h * dh..i * d + (h + 1) * dh];
                    for j in 0..=i {
                        row[j] /= z;
                        let pij = row[j];
                        let vj = &qkv[j * 3 * d + 2 * d + h * dh..j * 3 * d + 2 * d + (h + 1) * dh];
                        for (o, vv) in out.iter_mut().zip(vj) {
                            *o += pij * vv;
                        }
                    }
                }
            }
            let mut x_mid = x_in.clone();
            matmul(t_len, d, d, &attn, &p[lo.w_o..lo.w_o + d * d], 1.0, &mut x_mid);

            let mut h2 = vec![0.0; t_len * d];
            let (mut m2, mut r2) = (vec![0.0; t_len], vec![0.0; t_len]);
            layer_norm(
                t_len,
                d,
                &x_mid,
                &p[lo.ln2_g..lo.ln2_g + d],
                &p[lo.ln2_b..lo.ln2_b + d],
                &mut h2,
                &mut m2,
                &mut r2,
            );
            let mut u = vec![0.0; t_len * f];
            matmul(t_len, d, f, &h2, &p[lo.w1..lo.w1 + d * f], 0.0, &mut u);
            add_row_bias(t_len, f, &mut u, &p[lo.b1..lo.b1 + f]);
            let g: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
            let mut x_out = x_mid.clone();
            matmul(t_len, f, d, &g, &p[lo.w2..lo.w2 + f * d], 1.0, &mut x_out);
            add_row_bias(t_len, d, &mut x_out, &p[lo.b2..lo.b2 + d]);

            layers.push(LayerCache {
                x_in,
                h1,
                ln1_mean: m1,
                ln1_rstd: r1,
                qkv,
                probs,
                attn,
                x_mid,
                h2,
                ln2_mean: m2,
                ln2_rstd: r2,
                u,
                g,
            });
            x = x_out;
        }

        let mut lnf_out = vec![0.0; t_len * d];
        let (mut mf, mut rf) = (vec![0.0; t_len], vec![0.0; t_len]);
        layer_norm(
            t_len,
            d,
            &x,
            &p[lay.lnf_g..lay.lnf_g + d],
            &p[lay.lnf_b..lay.lnf_b + d],
            &mut lnf_out,
            &mut mf,
            &mut rf,
        );
        let rows = t_len - logits_from;
        let mut logits = vec![0.0; rows * v];
        matmul(
            rows,
            d,
            v,
            &lnf_out[logits_from * d..],
            &p[lay.w_out..lay.w_out + d * v],
            0.0,
            &mut logits,
        );
        add_row_bias(rows, v, &mut logits, &p[lay.b_out..lay.b_out + v]);

        Ok(Forward {
            len: t_len,
            logits_from,
            logits,
            ids: ids.to_vec(),
            layers,
            x_final: x,
            lnf_out,
            lnf_mean: mf,
            lnf_rstd: rf,
        })
    }

    /// Accumulates parameter gradients into `grads` given `dlogits` shaped like `fw.logits`.
    pub fn backward(&self, fw: &Forward, dlogits: &[f64], grads: &mut [f64]) {
        let ModelConfig {
            d_model: d,
            n_heads,
            d_ff: f,
            ..
        } = self.config;
        let v = self.vocab.len();
        let t_len = fw.len;
        let p = &self.params;
        let lay = &self.layout;
        let rows = t_len - fw.logits_from;
        debug_assert_eq!(dlogits.len(), rows * v);
        debug_assert_eq!(grads.len(), lay.total);

        matmul_at_b_acc(
            rows,
            d,
            v,
            &fw.lnf_out[fw.logits_from * d..],
            dlogits,
            &mut grads[lay.w_out..lay.w_out + d * v],
        );
        col_sum_acc(rows, v, dlogits, &mut grads[lay.b_out..lay.b_out + v]);
        let mut dlnf = vec![0.0; t_len * d];
        matmul_a_bt_acc(
            rows,
            v,
            d,
            dlogits,
            &p[lay.w_out..lay.w_out + d * v],
            &mut dlnf[fw.logits_from * d..],
        );

        let mut dx = vec![0.0; t_len * d];
        {
            let (gg, rest) = grads[lay.lnf_g..].split_at_mut(d);
            let gb = &mut rest[..d];
            layer_norm_backward(
                t_len,
                d,
                &dlnf,
                &fw.x_final,
                &p[lay.lnf_g..lay.lnf_g + d],
                &fw.lnf_mean,
                &fw.lnf_rstd,
                &mut dx,
                gg,
                gb,
            );
        }

        let dh = d / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for (lo, c) in lay.layers.iter().zip(&fw.layers).rev() {
            // MLP block: x_out = x_mid + gelu(h2 W1 + b1) W2 + b2
            matmul_at_b_acc(t_len, f, d, &c.g, &dx, &mut grads[lo.w2..lo.w2 + f * d]);
            col_sum_acc(t_len, d, &dx, &mut grads[lo.b2..lo.b2 + d]);
            let mut du = vec![0.0; t_len * f];
            matmul_a_bt_acc(t_len, d, f, &dx, &p[lo.w2..lo.w2 + f * d], &mut du);
            for (g, &u) in du.iter_mut().zip(&c.u) {
                *g *= gelu_grad(u);
            }
            matmul_at_b_acc(t_len, d, f, &c.h2, &du, &mut grads[lo.w1..lo.w1 + d * f]);
            col_sum_acc(t_len, f, &du, &mut grads[lo.b1..lo.b1 + f]);
            let mut dh2 = vec![0.0; t_len * d];
            matmul_a_bt_acc(t_len, f, d, &du, &p[lo.w1..lo.w1 + d * f], &mut dh2);
            let mut dx_mid = dx;
            {
                let (gg, rest) = grads[lo.ln2_g..].split_at_mut(d);
                let gb = &mut rest[..d];
                layer_norm_backward(
                    t_len,
                    d,
                    &dh2,
                    &c.x_mid,
                    &p[lo.ln2_g..lo.ln2_g + d],
                    &c.ln2_mean,
                    &c.ln2_rstd,
                    &mut dx_mid,
                    gg,
                    gb,
                );
            }

            // Attention block: x_mid = x_in + attn W_o
            matmul_at_b_acc(t_len, d, d, &c.attn, &dx_mid, &mut grads[lo.w_o..lo.w_o + d * d]);
            let mut dattn = vec![0.0; t_len * d];
            matmul_a_bt_acc(t_len, d, d, &dx_mid, &p[lo.w_o..lo.w_o + d * d], &mut dattn);
            let mut dqkv = vec![0.0; t_len * 3 * d];
            let mut dp = vec![0.0; t_len];
            for h in 0..n_heads {
                for i in 0..t_len {
                    let row = &c.probs[(h * t_len + i) * t_len..(h * t_len + i + 1) * t_len];
                    let dout = &dattn[i * d + h * dh..i * d + (h + 1) * dh];
                    let mut dot = 0.0;
                    for j in 0..=i {
                        let vo = j * 3 * d + 2 * d + h * dh;
                        let vj = &c.qkv[vo..vo + dh];
                        dp[j] = dout.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dot += row[j] * dp[j];
                        for (dv, g) in dqkv[vo..vo + dh].iter_mut().zip(dout) {
                            *dv += row[j] * g;
                        }
                    }
                    let qo = i * 3 * d + h * dh;
                    for j in 0..=i {
                        let ds = row[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let ko = j * 3 * d + d + h * dh;
                        for e in 0..dh {
                            dqkv[qo + e] += ds * c.qkv[ko + e];
                            dqkv[ko + e] += ds * c.qkv[qo + e];
                        }
                    }
                }
            }
            matmul_at_b_acc(
                t_len,
                d,
                3 * d,
                &c.h1,
                &dqkv,
                &mut grads[lo.w_qkv..lo.w_qkv + d * 3 * d],
            );
            let mut dh1 = vec![0.0; t_len * d];
            matmul_a_bt_acc(t_len, 3 * d, d, &dqkv, &p[lo.w_qkv..lo.w_qkv + d * 3 * d], &mut dh1);
            let mut dx_in = dx_mid;
            {
                let (gg, rest) = grads[lo.ln1_g..].split_at_mut(d);
                let gb = &mut rest[..d];
                layer_norm_backward(
                    t_len,
                    d,
                    &dh1,
                    &c.x_in,
                    &p[lo.ln1_g..lo.ln1_g + d],
                    &c.ln1_mean,
                    &c.ln1_rstd,
                    &mut dx_in,
                    gg,
                    gb,
                );
            }
            dx = dx_in;
        }

        for (t, &id) in fw.ids.iter().enumerate() {
            let id = (id as usize).min(v - 1);
            let src = &dx[t * d..(t + 1) * d];
            for (g, s) in grads[lay.tok_emb + id * d..lay.tok_emb + (id + 1) * d]
                .iter_mut()
                .zip(src)
            {
                *g += s;
            }
            for (g, s) in grads[lay.pos_emb + t * d..lay.pos_emb + (t + 1) * d]
                .iter_mut()
                .zip(src)
            {
                *g += s;
            }
        }
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.layout.total]
    }

    pub fn decoder(&self) -> Decoder<'_> {
        Decoder {
            model: self,
            keys: vec![Vec::new(); self.config.n_layers],
            values: vec![Vec::new(); self.config.n_layers],
            pos: 0,
        }
    }
}

/// Incremental single-sequence inference with a key/value cache.
pub struct Decoder<'a> {
    model: &'a ModelHandle,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    pos: usize,
}

impl Decoder<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Feeds one token and returns the next-token logits.
    pub fn step(&mut self, token: TokenId) -> Result<Vec<f64>> {
        let m = self.model;
        m.check_len(self.pos + 1)?;
        let ModelConfig {
            d_model: d,
            n_heads,
            d_ff: f,
            ..
        } = m.config;
        let v = m.vocab.len();
        let p = &m.params;
        let lay = &m.layout;
        let id = (token as usize).min(v - 1);
        let t = self.pos;
        let mut x: Vec<f64> = (0..d)
            .map(|i| p[lay.tok_emb + id * d + i] + p[lay.pos_emb + t * d + i])
            .collect();
        let dh = d / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (mut mean, mut rstd) = ([0.0], [0.0]);
        for (l, lo) in lay.layers.iter().enumerate() {
            let mut h = vec![0.0; d];
            layer_norm(
                1,
                d,
                &x,
                &p[lo.ln1_g..lo.ln1_g + d],
                &p[lo.ln1_b..lo.ln1_b + d],
                &mut h,
                &mut mean,
                &mut rstd,
            );
            let mut qkv = vec![0.0; 3 * d];
            matmul(1, d, 3 * d, &h, &p[lo.w_qkv..lo.w_qkv + 3 * d * d], 0.0, &mut qkv);
            self.keys[l].extend_from_slice(&qkv[d..2 * d]);
            self.values[l].extend_from_slice(&qkv[2 * d..]);
            let n = t + 1;
            let mut attn = vec![0.0; d];
            let mut s = vec![0.0; n];
            for hd in 0..n_heads {
                let q = &qkv[hd * dh..(hd + 1) * dh];
                let mut mx = f64::NEG_INFINITY;
                for (j, sj) in s.iter_mut().enumerate() {
                    let k = &self.keys[l][j * d + hd * dh..j * d + (hd + 1) * dh];
                    *sj = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                    mx = mx.max(*sj);
                }
                let mut z = 0.0;
                for sj in s.iter_mut() {
                    *sj = (*sj - mx).exp();
                    z += *sj;
                }
                let out = &mut attn[hd * dh..(hd + 1) * dh];
                for (j, sj) in s.iter().enumerate() {
                    let vj = &self.values[l][j * d + hd * dh..j * d + (hd + 1) * dh];
                    for (o, vv) in out.iter_mut().zip(vj) {
                        *o += sj / z * vv;
                    }
                }
            }
            matmul(1, d, d, &attn, &p[lo.w_o..lo.w_o + d * d], 1.0, &mut x);
            let mut h2 = vec![0.0; d];
            layer_norm(
                1,
                d,
                &x,
                &p[lo.ln2_g..lo.ln2_g + d],
                &p[lo.ln2_b..lo.ln2_b + d],
                &mut h2,
                &mut mean,
                &mut rstd,
            );
            let mut u = p[lo.b1..lo.b1 + f].to_vec();
            matmul(1, d, f, &h2, &p[lo.w1..lo.w1 + d * f], 1.0, &mut u);
            for z in &mut u {
                *z = gelu(*z);
            }
            matmul(1, f, d, &u, &p[lo.w2..lo.w2 + f * d], 1.0, &mut x);
            for (xi, b) in x.iter_mut().zip(&p[lo.b2..lo.b2 + d]) {
                *xi += b;
            }
        }
        let mut hf = vec![0.0; d];
        layer_norm(
            1,
            d,
            &x,
            &p[lay.lnf_g..lay.lnf_g + d],
            &p[lay.lnf_b..lay.lnf_b + d],
            &mut hf,
            &mut mean,
            &mut rstd,
        );
        let mut logits = p[lay.b_out..lay.b_out + v].to_vec();
        matmul(1, d, v, &hf, &p[lay.w_out..lay.w_out + d * v], 1.0, &mut logits);
        self.pos += 1;
        Ok(logits)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny() -> ModelHandle {
        let vocab = Vocab::build(["a b c d e f g h i j ."]);
        let cfg = ModelConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 12,
            context_length: 12,
        };
        ModelHandle::init_with_std(vocab, cfg, 3, 0.3).unwrap()
    }

    fn loss_of(m: &ModelHandle, ids: &[TokenId], w: &[f64]) -> f64 {
        let fw = m.forward(ids, 0).unwrap();
        fw.logits.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut m = tiny();
        let ids = [2, 5, 3, 7, 4, 6];
        let v = m.vocab_size();
        let w: Vec<f64> = (0..ids.len() * v)
            .map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5)
            .collect();
        let fw = m.forward(&ids, 0).unwrap();
        let mut grads = m.zero_grads();
        m.backward(&fw, &w, &mut grads);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in (0..m.n_params()).step_by(3) {
            let orig = m.params[i];
            m.params[i] = orig + h;
            let up = loss_of(&m, &ids, &w);
            m.params[i] = orig - h;
            let down = loss_of(&m, &ids, &w);
            m.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn decoder_matches_full_forward() {
        let m = tiny();
        let ids = [2, 5, 3, 7, 4];
        let fw = m.forward(&ids, 0).unwrap();
        let mut dec = m.decoder();
        let v = m.vocab_size();
        for (t, &id) in ids.iter().enumerate() {
            let logits = dec.step(id).unwrap();
            for (a, b) in logits.iter().zip(&fw.logits[t * v..(t + 1) * v]) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn partial_logits_agree_with_full() {
        let m = tiny();
        let ids = [2, 5, 3, 7, 4];
        let full = m.forward(&ids, 0).unwrap();
        let part = m.forward(&ids, 3).unwrap();
        let v = m.vocab_size();
        assert_eq!(part.logits.len(), 2 * v);
        assert_eq!(&full.logits[3 * v..], &part.logits[..]);
    }

    #[test]
    fn overlong_input_is_a_length_error() {
        let m = tiny();
        let ids = vec![2; 13];
        assert!(matches!(
            m.forward(&ids, 0),
            Err(Error::Length { len: 13, context: 12 })
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn config_validation() {
        let bad = ModelConfig {
            d_model: 10,
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
