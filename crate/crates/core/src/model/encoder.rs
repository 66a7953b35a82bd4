//! Forward and backward passes of the encoder classifier.
//!
//! Parameters are stored as f32; all activations and gradients are computed in
//! f64. Linear weights are laid out `[in, out]` so a projection is `x · W + b`,
//! except the classification head which is `[labels, d]` and computes `W · h + b`.
//!
//! Each encoder layer is post-norm:
//!
//! ```text
//! a  = MultiHeadAttention(x)
//! y1 = LayerNorm1(x + a)
//! y2 = LayerNorm2(y1 + Down(gelu(Up(y1))))
//! ```

use std::collections::BTreeMap;

use crate::error::Result;
use crate::model::{ModelArchitecture, TokenSequence};
use crate::tensor::{ParameterSet, Tensor};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

// ---------------------------------------------------------------------------
// small row-major f64 kernels

/// `a[m×k] · b[k×n]`
fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
fn add_matmul_tn(out: &mut [f64], a: &[f64], m: usize, k: usize, b: &[f64], n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `a[m×n] · b[k×n]ᵀ`
fn matmul_nt(a: &[f64], m: usize, n: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            out[i * k + j] = arow.iter().zip(&b[j * n..(j + 1) * n]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn add_col_sums(out: &mut [f64], x: &[f64]) {
    for row in x.chunks(out.len()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

/// Token embeddings are multiplied by `sqrt(d)` before positions are added.
pub fn embed_scale(d: usize) -> f64 {
    (d as f64).sqrt()
}

/// Fixed sinusoidal position encoding for position `t`.
pub fn position_encoding(t: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let i = (j / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * i / d as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// weights

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

struct Linear {
    w: Vec<f64>,
    b: Vec<f64>,
}

struct LayerWeights {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    up: Linear,
    down: Linear,
    ln1_gamma: Vec<f64>,
    ln1_beta: Vec<f64>,
    ln2_gamma: Vec<f64>,
    ln2_beta: Vec<f64>,
}

/// Parameters unpacked for computation. The embedding table stays f32 and is
/// read row by row.
pub(crate) struct Weights<'a> {
    arch: &'a ModelArchitecture,
    embed: &'a [f32],
    layers: Vec<LayerWeights>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
    positions: Vec<Vec<f64>>,
}

impl<'a> Weights<'a> {
    /// Assumes `params` already passed the shape check against `arch`.
    pub(crate) fn new(arch: &'a ModelArchitecture, params: &'a ParameterSet) -> Result<Self> {
        let get = |n: &str| params.require(n).map(to_f64);
        let lin = |prefix: &str| -> Result<Linear> {
            Ok(Linear {
                w: get(&format!("{prefix}.weight"))?,
                b: get(&format!("{prefix}.bias"))?,
            })
        };
        let mut layers = Vec::with_capacity(arch.num_encoder_layers);
        for l in 0..arch.num_encoder_layers {
            let p = |s: &str| format!("encoder.{l}.{s}");
            layers.push(LayerWeights {
                q: lin(&p("attn.q"))?,
                k: lin(&p("attn.k"))?,
                v: lin(&p("attn.v"))?,
                o: lin(&p("attn.o"))?,
                up: lin(&p("ffn.up"))?,
                down: lin(&p("ffn.down"))?,
                ln1_gamma: get(&p("ln1.gamma"))?,
                ln1_beta: get(&p("ln1.beta"))?,
                ln2_gamma: get(&p("ln2.gamma"))?,
                ln2_beta: get(&p("ln2.beta"))?,
            });
        }
        Ok(Self {
            arch,
            embed: params.require("embed.tokens")?.data(),
            layers,
            head_w: get("head.weight")?,
            head_b: get("head.bias")?,
            positions: (0..arch.max_seq_len)
                .map(|t| position_encoding(t, arch.embed_dim))
                .collect(),
        })
    }
}

// ---------------------------------------------------------------------------
// forward

struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &[f64], d: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, NormCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat[r * d + j] = h;
            y[r * d + j] = gamma[j] * h + beta[j];
        }
    }
    (y, NormCache { xhat, inv_std })
}

/// Returns gradient w.r.t. the norm input; accumulates gamma/beta grads.
fn layer_norm_backward(
    dy: &[f64],
    d: usize,
    gamma: &[f64],
    cache: &NormCache,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for j in 0..d {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[r * d + j] = cache.inv_std[r] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

struct LayerCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `[head][query][key]` attention weights.
    probs: Vec<f64>,
    context: Vec<f64>,
    norm1: NormCache,
    y1: Vec<f64>,
    up: Vec<f64>,
    act: Vec<f64>,
    norm2: NormCache,
}

fn layer_forward(w: &LayerWeights, arch: &ModelArchitecture, x: &[f64]) -> (Vec<f64>, LayerCache) {
    let d = arch.embed_dim;
    let f = arch.ffn_dim();
    let heads = arch.num_heads;
    let dh = arch.head_dim();
    let len = x.len() / d;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut q = matmul(x, len, d, &w.q.w, d);
    add_bias(&mut q, &w.q.b);
    let mut k = matmul(x, len, d, &w.k.w, d);
    add_bias(&mut k, &w.k.b);
    let mut v = matmul(x, len, d, &w.v.w, d);
    add_bias(&mut v, &w.v.b);

    let mut probs = vec![0.0; heads * len * len];
    let mut context = vec![0.0; len * d];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..len {
            let row = &mut probs[(h * len + i) * len..(h * len + i + 1) * len];
            let qi = &q[i * d + off..i * d + off + dh];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k[j * d + off..j * d + off + dh];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(row);
            let ctx = &mut context[i * d + off..i * d + off + dh];
            for (j, &p) in row.iter().enumerate() {
                for (c, &vv) in ctx.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                    *c += p * vv;
                }
            }
        }
    }

    let mut attn = matmul(&context, len, d, &w.o.w, d);
    add_bias(&mut attn, &w.o.b);
    let resid1: Vec<f64> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
    let (y1, norm1) = layer_norm(&resid1, d, &w.ln1_gamma, &w.ln1_beta);

    let mut up = matmul(&y1, len, d, &w.up.w, f);
    add_bias(&mut up, &w.up.b);
    let act: Vec<f64> = up.iter().map(|&u| gelu(u)).collect();
    let mut down = matmul(&act, len, f, &w.down.w, d);
    add_bias(&mut down, &w.down.b);
    let resid2: Vec<f64> = y1.iter().zip(&down).map(|(a, b)| a + b).collect();
    let (out, norm2) = layer_norm(&resid2, d, &w.ln2_gamma, &w.ln2_beta);

    let cache = LayerCache {
        input: x.to_vec(),
        q,
        k,
        v,
        probs,
        context,
        norm1,
        y1,
        up,
        act,
        norm2,
    };
    (out, cache)
}

pub(crate) struct ForwardCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    cls_hidden: Vec<f64>,
    pub(crate) probs: [f64; 2],
}

pub(crate) fn forward(w: &Weights, seq: &TokenSequence) -> ForwardCache {
    let arch = w.arch;
    let d = arch.embed_dim;
    let ids = seq.ids();
    let scale = embed_scale(d);
    let mut x = Vec::with_capacity(ids.len() * d);
    for (t, &id) in ids.iter().enumerate() {
        let row = &w.embed[id as usize * d..(id as usize + 1) * d];
        x.extend(row.iter().zip(&w.positions[t]).map(|(&e, p)| e as f64 * scale + p));
    }
    let mut layers = Vec::with_capacity(w.layers.len());
    for lw in &w.layers {
        let (out, cache) = layer_forward(lw, arch, &x);
        layers.push(cache);
        x = out;
    }
    let cls_hidden = x[..d].to_vec();
    let mut logits = [0.0f64; 2];
    for (c, logit) in logits.iter_mut().enumerate() {
        *logit = w.head_b[c]
            + w.head_w[c * d..(c + 1) * d]
                .iter()
                .zip(&cls_hidden)
                .map(|(a, b)| a * b)
                .sum::<f64>();
    }
    softmax_in_place(&mut logits);
    ForwardCache {
        ids: ids.to_vec(),
        layers,
        cls_hidden,
        probs: logits,
    }
}

// ---------------------------------------------------------------------------
// backward

#[derive(Clone)]
struct LinearGrad {
    w: Vec<f64>,
    b: Vec<f64>,
}

impl LinearGrad {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }
}

#[derive(Clone)]
struct LayerGrad {
    q: LinearGrad,
    k: LinearGrad,
    v: LinearGrad,
    o: LinearGrad,
    up: LinearGrad,
    down: LinearGrad,
    ln1_gamma: Vec<f64>,
    ln1_beta: Vec<f64>,
    ln2_gamma: Vec<f64>,
    ln2_beta: Vec<f64>,
}

/// Gradient accumulator. Embedding gradients are kept sparse by token id.
pub(crate) struct Grads {
    embed: BTreeMap<u32, Vec<f64>>,
    layers: Vec<LayerGrad>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

impl Grads {
    pub(crate) fn zeros(arch: &ModelArchitecture) -> Self {
        let d = arch.embed_dim;
        let f = arch.ffn_dim();
        let layer = LayerGrad {
            q: LinearGrad::zeros(d, d),
            k: LinearGrad::zeros(d, d),
            v: LinearGrad::zeros(d, d),
            o: LinearGrad::zeros(d, d),
            up: LinearGrad::zeros(d, f),
            down: LinearGrad::zeros(f, d),
            ln1_gamma: vec![0.0; d],
            ln1_beta: vec![0.0; d],
            ln2_gamma: vec![0.0; d],
            ln2_beta: vec![0.0; d],
        };
        Self {
            embed: BTreeMap::new(),
            layers: vec![layer; arch.num_encoder_layers],
            head_w: vec![0.0; arch.num_labels * d],
            head_b: vec![0.0; arch.num_labels],
        }
    }

    /// Dense f32 parameter set holding `scale * grads`.
    pub(crate) fn into_parameter_set(
        self,
        arch: &ModelArchitecture,
        like: &ParameterSet,
        scale: f64,
    ) -> ParameterSet {
        let d = arch.embed_dim;
        let mut out = ParameterSet::new(like.base_id(), like.arch_hash());
        let tensor = |shape: Vec<usize>, v: &[f64]| {
            Tensor::new(shape, v.iter().map(|x| (x * scale) as f32).collect())
                .expect("gradient shapes follow the architecture")
        };
        let mut embed = vec![0.0f32; arch.vocab_size * d];
        for (id, row) in &self.embed {
            let start = *id as usize * d;
            for (o, g) in embed[start..start + d].iter_mut().zip(row) {
                *o = (g * scale) as f32;
            }
        }
        out.insert(
            "embed.tokens",
            Tensor::new(vec![arch.vocab_size, d], embed).expect("embedding shape"),
        );
        out.insert("head.weight", tensor(vec![arch.num_labels, d], &self.head_w));
        out.insert("head.bias", tensor(vec![arch.num_labels], &self.head_b));
        let f = arch.ffn_dim();
        for (l, g) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("encoder.{l}.{s}");
            for (name, lg, n_in, n_out) in [
                ("attn.q", &g.q, d, d),
                ("attn.k", &g.k, d, d),
                ("attn.v", &g.v, d, d),
                ("attn.o", &g.o, d, d),
                ("ffn.up", &g.up, d, f),
                ("ffn.down", &g.down, f, d),
            ] {
                out.insert(p(&format!("{name}.weight")), tensor(vec![n_in, n_out], &lg.w));
                out.insert(p(&format!("{name}.bias")), tensor(vec![n_out], &lg.b));
            }
            out.insert(p("ln1.gamma"), tensor(vec![d], &g.ln1_gamma));
            out.insert(p("ln1.beta"), tensor(vec![d], &g.ln1_beta));
            out.insert(p("ln2.gamma"), tensor(vec![d], &g.ln2_gamma));
            out.insert(p("ln2.beta"), tensor(vec![d], &g.ln2_beta));
        }
        out
    }
}

fn linear_backward(
    grad: &mut LinearGrad,
    weight: &[f64],
    input: &[f64],
    dout: &[f64],
    rows: usize,
    n_in: usize,
    n_out: usize,
) -> Vec<f64> {
    add_matmul_tn(&mut grad.w, input, rows, n_in, dout, n_out);
    add_col_sums(&mut grad.b, dout);
    matmul_nt(dout, rows, n_out, weight, n_in)
}

fn layer_backward(
    w: &LayerWeights,
    g: &mut LayerGrad,
    arch: &ModelArchitecture,
    c: &LayerCache,
    dout: &[f64],
) -> Vec<f64> {
    let d = arch.embed_dim;
    let f = arch.ffn_dim();
    let heads = arch.num_heads;
    let dh = arch.head_dim();
    let len = dout.len() / d;
    let scale = 1.0 / (dh as f64).sqrt();

    // second sub-block
    let dresid2 = layer_norm_backward(dout, d, &w.ln2_gamma, &c.norm2, &mut g.ln2_gamma, &mut g.ln2_beta);
    let dact = linear_backward(&mut g.down, &w.down.w, &c.act, &dresid2, len, f, d);
    let dup: Vec<f64> = dact.iter().zip(&c.up).map(|(da, &u)| da * gelu_grad(u)).collect();
    let dy1_ffn = linear_backward(&mut g.up, &w.up.w, &c.y1, &dup, len, d, f);
    let dy1: Vec<f64> = dresid2.iter().zip(&dy1_ffn).map(|(a, b)| a + b).collect();

    // first sub-block
    let dresid1 = layer_norm_backward(&dy1, d, &w.ln1_gamma, &c.norm1, &mut g.ln1_gamma, &mut g.ln1_beta);
    let dcontext = linear_backward(&mut g.o, &w.o.w, &c.context, &dresid1, len, d, d);

    let mut dq = vec![0.0; len * d];
    let mut dk = vec![0.0; len * d];
    let mut dv = vec![0.0; len * d];
    let mut dp = vec![0.0; len];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..len {
            let p = &c.probs[(h * len + i) * len..(h * len + i + 1) * len];
            let dci = &dcontext[i * d + off..i * d + off + dh];
            if dci.iter().all(|&x| x == 0.0) {
                continue;
            }
            for j in 0..len {
                let vj = &c.v[j * d + off..j * d + off + dh];
                dp[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                for (dvv, &dc) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                    *dvv += p[j] * dc;
                }
            }
            let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for j in 0..len {
                let ds = p[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for t in 0..dh {
                    dq[i * d + off + t] += ds * c.k[j * d + off + t];
                    dk[j * d + off + t] += ds * c.q[i * d + off + t];
                }
            }
        }
    }

    let mut dx = dresid1;
    for (lg, lw, dproj) in [(&mut g.q, &w.q, &dq), (&mut g.k, &w.k, &dk), (&mut g.v, &w.v, &dv)] {
        let part = linear_backward(lg, &lw.w, &c.input, dproj, len, d, d);
        for (a, b) in dx.iter_mut().zip(&part) {
            *a += b;
        }
    }
    dx
}

/// Accumulates gradients of `-ln p[label]` for one example into `grads`.
pub(crate) fn backward(w: &Weights, cache: &ForwardCache, label: usize, grads: &mut Grads) {
    let arch = w.arch;
    let d = arch.embed_dim;
    let mut dlogits = cache.probs;
    dlogits[label] -= 1.0;

    let mut dh = vec![0.0; d];
    for (c, &dl) in dlogits.iter().enumerate() {
        grads.head_b[c] += dl;
        let wrow = &w.head_w[c * d..(c + 1) * d];
        for j in 0..d {
            grads.head_w[c * d + j] += dl * cache.cls_hidden[j];
            dh[j] += dl * wrow[j];
        }
    }

    let len = cache.ids.len();
    let mut dx = vec![0.0; len * d];
    dx[..d].copy_from_slice(&dh);
    for (l, lc) in cache.layers.iter().enumerate().rev() {
        dx = layer_backward(&w.layers[l], &mut grads.layers[l], arch, lc, &dx);
    }
    let scale = embed_scale(d);
    for (t, &id) in cache.ids.iter().enumerate() {
        let row = grads.embed.entry(id).or_insert_with(|| vec![0.0; d]);
        for (r, g) in row.iter_mut().zip(&dx[t * d..(t + 1) * d]) {
            *r += g * scale;
        }
    }
}
