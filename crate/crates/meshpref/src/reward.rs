//! Trainable reward scorer over patchified meshes and hashed text tokens.
//!
//! Architecture: per-patch slot features are flattened to 640 values and
//! linearly projected to 128 dims; a learnable 128-d class token, seeded
//! with the mean of the projected patch tokens so the fused class row
//! carries global mesh context, heads the 257-token query sequence of a
//! single-head scaled dot-product cross-attention against 16 text tokens
//! (keys and values); the class row after the residual feeds a 2-layer
//! tanh MLP producing an unbounded scalar reward.
//!
//! Only the class row influences the reward: attention outputs for the
//! patch-query rows are algebraically dead downstream and are therefore
//! not materialized. The computed class row is bit-identical to the full
//! 257-row formulation. All gradients are exact analytic derivatives and
//! finite-difference verified.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csdiv::{cs_divergence_grad, EmbeddingBatch, KernelConfig};
use crate::error::{Error, Result};
use crate::features::{featurize, FEATURE_DIM};
use crate::mesh::TriangleMesh;
use crate::prep::{patchify, PatchTensor, N_PATCHES, SLOTS_PER_PATCH};
use crate::synth::{Label, PrefDataset};

/// Hash seed used by `score` and dataset preparation.
pub const DEFAULT_TEXT_SEED: u64 = 0;

pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_model: usize,
    pub n_patches: usize,
    pub patch_feature_dim: usize,
    pub text_tokens: usize,
    pub text_dim: usize,
    pub head_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d_model: 128,
            n_patches: N_PATCHES,
            patch_feature_dim: SLOTS_PER_PATCH * FEATURE_DIM,
            text_tokens: 16,
            text_dim: 128,
            head_hidden: 64,
        }
    }
}

impl ModelDims {
    fn field_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("patch_projection", vec![self.patch_feature_dim, self.d_model]),
            ("patch_projection_bias", vec![self.d_model]),
            ("class_token", vec![self.d_model]),
            ("attention_query", vec![self.d_model, self.d_model]),
            ("attention_key", vec![self.text_dim, self.d_model]),
            ("attention_value", vec![self.text_dim, self.d_model]),
            ("attention_output", vec![self.d_model, self.d_model]),
            ("head_hidden_weight", vec![self.d_model, self.head_hidden]),
            ("head_hidden_bias", vec![self.head_hidden]),
            ("head_output_weight", vec![self.head_hidden]),
            ("head_output_bias", vec![1]),
        ]
    }

    fn total_len(&self) -> usize {
        self.field_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// All trainable parameters in one flat buffer; field order and row-major
/// layout are fixed by `ModelDims::field_shapes`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    pub dims: ModelDims,
    pub data: Vec<f64>,
}

macro_rules! field_accessors {
    ($get:ident, $name:literal) => {
        pub fn $get(&self) -> &[f64] {
            let (off, len) = self.field_span($name);
            &self.data[off..off + len]
        }
    };
}

impl RewardParams {
    pub fn zeros(dims: ModelDims) -> Self {
        RewardParams {
            dims,
            data: vec![0.0; dims.total_len()],
        }
    }

    fn field_span(&self, name: &str) -> (usize, usize) {
        let mut off = 0;
        for (n, shape) in self.dims.field_shapes() {
            let len = shape.iter().product();
            if n == name {
                return (off, len);
            }
            off += len;
        }
        unreachable!("unknown field {name}")
    }

    fn field_mut(&mut self, name: &str) -> &mut [f64] {
        let (off, len) = self.field_span(name);
        &mut self.data[off..off + len]
    }

    field_accessors!(w_proj, "patch_projection");
    field_accessors!(b_proj, "patch_projection_bias");
    field_accessors!(class_token, "class_token");
    field_accessors!(w_q, "attention_query");
    field_accessors!(w_k, "attention_key");
    field_accessors!(w_v, "attention_value");
    field_accessors!(w_o, "attention_output");
    field_accessors!(w_h1, "head_hidden_weight");
    field_accessors!(b_h1, "head_hidden_bias");
    field_accessors!(w_h2, "head_output_weight");
    field_accessors!(b_h2, "head_output_bias");

    /// Cheap content fingerprint for stale-cache detection.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mix = |h: &mut u64, v: u64| {
            *h ^= v;
            *h = h.wrapping_mul(0x1000_0000_01b3);
        };
        mix(&mut h, self.data.len() as u64);
        let mut i = 0;
        while i < self.data.len() {
            mix(&mut h, self.data[i].to_bits());
            i += 101;
        }
        if let Some(last) = self.data.last() {
            mix(&mut h, last.to_bits());
        }
        h
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct File<'a> {
            format_version: u32,
            dims: ModelDims,
            fields: BTreeMap<&'a str, FieldOut<'a>>,
        }
        #[derive(Serialize)]
        struct FieldOut<'a> {
            shape: Vec<usize>,
            values: &'a [f64],
        }
        let mut fields = BTreeMap::new();
        let mut off = 0;
        for (name, shape) in self.dims.field_shapes() {
            let len: usize = shape.iter().product();
            fields.insert(
                name,
                FieldOut {
                    shape,
                    values: &self.data[off..off + len],
                },
            );
            off += len;
        }
        Ok(serde_json::to_vec_pretty(&File {
            format_version: PARAMS_FORMAT_VERSION,
            dims: self.dims,
            fields,
        })?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            format_version: u32,
            dims: ModelDims,
            fields: BTreeMap<String, FieldIn>,
        }
        #[derive(Deserialize)]
        struct FieldIn {
            shape: Vec<usize>,
            values: Vec<f64>,
        }
        let file: File = serde_json::from_slice(bytes)?;
        if file.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported params format version {}",
                file.format_version
            )));
        }
        let mut params = RewardParams::zeros(file.dims);
        let mut off = 0;
        for (name, shape) in file.dims.field_shapes() {
            let len: usize = shape.iter().product();
            let field = file.fields.get(name).ok_or_else(|| {
                Error::Format(format!("params file missing field '{name}'"))
            })?;
            if field.shape != shape || field.values.len() != len {
                return Err(Error::ShapeMismatch(format!(
                    "field '{name}': expected shape {shape:?}"
                )));
            }
            params.data[off..off + len].copy_from_slice(&field.values);
            off += len;
        }
        Ok(params)
    }
}

/// Deterministic initialization: weights uniform in ±1/sqrt(fan_in) from a
/// ChaCha8 stream seeded by `seed`, biases zero, fields filled in layout
/// order.
pub fn init_params(seed: u64, dims: ModelDims) -> RewardParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = RewardParams::zeros(dims);
    let fills: Vec<(&str, Option<usize>)> = vec![
        ("patch_projection", Some(dims.patch_feature_dim)),
        ("patch_projection_bias", None),
        ("class_token", Some(dims.d_model)),
        ("attention_query", Some(dims.d_model)),
        ("attention_key", Some(dims.text_dim)),
        ("attention_value", Some(dims.text_dim)),
        ("attention_output", Some(dims.d_model)),
        ("head_hidden_weight", Some(dims.d_model)),
        ("head_hidden_bias", None),
        ("head_output_weight", Some(dims.head_hidden)),
        ("head_output_bias", None),
    ];
    for (name, fan_in) in fills {
        if let Some(fan_in) = fan_in {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in params.field_mut(name) {
                *v = s * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
    }
    params
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextTokens {
    pub tokens: usize,
    pub dim: usize,
    /// Row-major tokens x dim; unused rows are zero.
    pub data: Vec<f64>,
}

impl TextTokens {
    #[inline]
    fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Deterministic hashing text featurizer: lowercase whitespace words, each
/// mapped through FNV-1a (xor-mixed with `seed`) to a seeded pseudo-random
/// unit vector. The first 16 words are kept; shorter prompts zero-pad.
pub fn text_featurize(prompt: &str, seed: u64) -> TextTokens {
    let dims = ModelDims::default();
    let mut out = TextTokens {
        tokens: dims.text_tokens,
        dim: dims.text_dim,
        data: vec![0.0; dims.text_tokens * dims.text_dim],
    };
    for (t, word) in prompt
        .to_lowercase()
        .split_whitespace()
        .take(dims.text_tokens)
        .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()) ^ seed);
        let row = &mut out.data[t * dims.text_dim..(t + 1) * dims.text_dim];
        for v in row.iter_mut() {
            *v = 2.0 * rng.gen::<f64>() - 1.0;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    out
}

/// Intermediates needed to backpropagate the reward exactly.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    params_fingerprint: u64,
    /// Per slot-feature column, the sum of values over all patches.
    col_sums: Vec<f64>,
    mask: Vec<bool>,
    text: Vec<f64>,
    z0: Vec<f64>,
    q0: Vec<f64>,
    a0: Vec<f64>,
    /// Attention-weighted text row: sum_t a0[t] * text_t.
    s_text: Vec<f64>,
    /// s_text * W_v (the value aggregate before the output projection).
    sv: Vec<f64>,
    h: Vec<f64>,
    tanh_out: Vec<f64>,
}

#[inline]
fn matvec_left(x: &[f64], w: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    // out = x * W for row-major W (rows x cols), x of length rows
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for (a, &xa) in x.iter().enumerate().take(rows) {
        if xa == 0.0 {
            continue;
        }
        let row = &w[a * cols..(a + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xa * wv;
        }
    }
}

#[inline]
fn matvec_right(w: &[f64], x: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    // out = W * x for row-major W (rows x cols), x of length cols
    for (a, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[a * cols..(a + 1) * cols];
        *o = row.iter().zip(x).map(|(wv, xv)| wv * xv).sum();
    }
}

fn check_shapes(params: &RewardParams, patch: &PatchTensor, text: &TextTokens) -> Result<()> {
    let dims = params.dims;
    if patch.data.len() != dims.n_patches * dims.patch_feature_dim
        || patch.mask.len() * FEATURE_DIM != patch.data.len()
    {
        return Err(Error::ShapeMismatch(format!(
            "patch tensor has {} values, expected {}",
            patch.data.len(),
            dims.n_patches * dims.patch_feature_dim
        )));
    }
    if text.tokens != dims.text_tokens || text.dim != dims.text_dim {
        return Err(Error::ShapeMismatch(format!(
            "text tokens {}x{}, expected {}x{}",
            text.tokens, text.dim, dims.text_tokens, dims.text_dim
        )));
    }
    Ok(())
}

/// Runs the scorer; returns (reward, fused class embedding, cache).
pub fn forward(
    params: &RewardParams,
    patch: &PatchTensor,
    text: &TextTokens,
) -> Result<(f64, Vec<f64>, ForwardCache)> {
    check_shapes(params, patch, text)?;
    let dims = params.dims;
    let dm = dims.d_model;
    let pfd = dims.patch_feature_dim;

    // mean projected patch token; only occupied slots contribute beyond the
    // bias, and the bias enters once per patch
    let w_proj = params.w_proj();
    let mut col_sums = vec![0.0; pfd];
    let mut mean_x = vec![0.0; dm];
    for p in 0..dims.n_patches {
        for k in 0..SLOTS_PER_PATCH {
            if !patch.mask[p * SLOTS_PER_PATCH + k] {
                continue;
            }
            let base = (p * SLOTS_PER_PATCH + k) * FEATURE_DIM;
            for f in 0..FEATURE_DIM {
                let v = patch.data[base + f];
                if v == 0.0 {
                    continue;
                }
                let row = k * FEATURE_DIM + f;
                col_sums[row] += v;
                let wrow = &w_proj[row * dm..(row + 1) * dm];
                for (o, &wv) in mean_x.iter_mut().zip(wrow) {
                    *o += v * wv;
                }
            }
        }
    }
    let inv_n = 1.0 / dims.n_patches as f64;
    for (o, (&b, &c)) in mean_x
        .iter_mut()
        .zip(params.b_proj().iter().zip(params.class_token()))
    {
        *o = *o * inv_n + b + c;
    }
    let z0 = mean_x; // class token + mean patch token

    // class-row attention over text keys/values, reassociated:
    // logit_t = (z0 Wq / sqrt(d)) . (text_t Wk) = text_t . (Wk (z0 Wq)/sqrt(d))
    let scale = 1.0 / (dm as f64).sqrt();
    let mut q0 = vec![0.0; dm];
    matvec_left(&z0, params.w_q(), dm, dm, &mut q0);
    for v in q0.iter_mut() {
        *v *= scale;
    }
    let mut key_map = vec![0.0; dims.text_dim];
    matvec_right(params.w_k(), &q0, dims.text_dim, dm, &mut key_map);
    let mut logits = vec![0.0; dims.text_tokens];
    for t in 0..dims.text_tokens {
        logits[t] = text.row(t).iter().zip(&key_map).map(|(a, b)| a * b).sum();
    }
    let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut a0: Vec<f64> = logits.iter().map(|l| (l - max_logit).exp()).collect();
    let denom: f64 = a0.iter().sum();
    for v in a0.iter_mut() {
        *v /= denom;
    }

    let mut s_text = vec![0.0; dims.text_dim];
    for t in 0..dims.text_tokens {
        let w = a0[t];
        for (o, &tv) in s_text.iter_mut().zip(text.row(t)) {
            *o += w * tv;
        }
    }
    let mut sv = vec![0.0; dm];
    matvec_left(&s_text, params.w_v(), dims.text_dim, dm, &mut sv);
    let mut attn_out = vec![0.0; dm];
    matvec_left(&sv, params.w_o(), dm, dm, &mut attn_out);

    let h: Vec<f64> = z0.iter().zip(&attn_out).map(|(a, b)| a + b).collect();

    let hh = dims.head_hidden;
    let mut u = params.b_h1().to_vec();
    for (a, &ha) in h.iter().enumerate() {
        let row = &params.w_h1()[a * hh..(a + 1) * hh];
        for (o, &wv) in u.iter_mut().zip(row) {
            *o += ha * wv;
        }
    }
    let tanh_out: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
    let reward = params.b_h2()[0]
        + tanh_out
            .iter()
            .zip(params.w_h2())
            .map(|(t, w)| t * w)
            .sum::<f64>();
    if !reward.is_finite() {
        return Err(Error::NonFinite("reward output".into()));
    }

    let cache = ForwardCache {
        params_fingerprint: params.fingerprint(),
        col_sums,
        mask: patch.mask.clone(),
        text: text.data.clone(),
        z0: z0.clone(),
        q0,
        a0,
        s_text,
        sv,
        h: h.clone(),
        tanh_out,
    };
    Ok((reward, h, cache))
}

/// Upstream cotangents for `backward`: the scalar loss's derivative with
/// respect to the reward and, optionally, the class embedding.
#[derive(Debug, Clone)]
pub struct Upstream<'a> {
    pub d_reward: f64,
    pub d_class_embedding: Option<&'a [f64]>,
}

/// Exact gradients of `d_reward * reward + d_class . class_embedding` with
/// respect to every parameter and every patch-tensor entry. Accumulates
/// into `grads` and, when given, `input_grads` (patch-tensor layout; masked
/// slots stay zero).
pub fn backward_into(
    params: &RewardParams,
    cache: &ForwardCache,
    upstream: &Upstream,
    grads: &mut RewardParams,
    mut input_grads: Option<&mut [f64]>,
) -> Result<()> {
    if cache.params_fingerprint != params.fingerprint() {
        return Err(Error::Format(
            "stale forward cache: parameters changed since the forward pass".into(),
        ));
    }
    if grads.dims != params.dims {
        return Err(Error::ShapeMismatch("gradient dims".into()));
    }
    let dims = params.dims;
    let dm = dims.d_model;
    let hh = dims.head_hidden;
    let scale = 1.0 / (dm as f64).sqrt();
    let dr = upstream.d_reward;

    // head
    let mut dh = vec![0.0; dm];
    if let Some(dc) = upstream.d_class_embedding {
        if dc.len() != dm {
            return Err(Error::ShapeMismatch("class embedding cotangent".into()));
        }
        dh.copy_from_slice(dc);
    }
    if dr != 0.0 {
        grads.field_mut("head_output_bias")[0] += dr;
        let du: Vec<f64> = cache
            .tanh_out
            .iter()
            .zip(params.w_h2())
            .map(|(t, w)| w * dr * (1.0 - t * t))
            .collect();
        {
            let g_w2 = grads.field_mut("head_output_weight");
            for (g, &t) in g_w2.iter_mut().zip(&cache.tanh_out) {
                *g += t * dr;
            }
        }
        {
            let g_b1 = grads.field_mut("head_hidden_bias");
            for (g, &d) in g_b1.iter_mut().zip(&du) {
                *g += d;
            }
        }
        {
            let g_w1 = grads.field_mut("head_hidden_weight");
            for (a, &ha) in cache.h.iter().enumerate() {
                if ha != 0.0 {
                    let row = &mut g_w1[a * hh..(a + 1) * hh];
                    for (g, &d) in row.iter_mut().zip(&du) {
                        *g += ha * d;
                    }
                }
            }
        }
        for (a, o) in dh.iter_mut().enumerate() {
            let row = &params.w_h1()[a * hh..(a + 1) * hh];
            *o += row.iter().zip(&du).map(|(w, d)| w * d).sum::<f64>();
        }
    }

    // residual: dh reaches both z0 and the attention output row
    let mut dz0 = dh.clone();
    let dp0 = &dh;

    // attention output path (all cotangents are rank-1 in the class row)
    let mut g1 = vec![0.0; dm]; // d sv = dP0 * Wo^T
    matvec_right(params.w_o(), dp0, dm, dm, &mut g1);
    {
        let g_wo = grads.field_mut("attention_output");
        for (a, &sva) in cache.sv.iter().enumerate() {
            if sva != 0.0 {
                let row = &mut g_wo[a * dm..(a + 1) * dm];
                for (g, &d) in row.iter_mut().zip(dp0) {
                    *g += sva * d;
                }
            }
        }
    }
    let mut g2 = vec![0.0; dims.text_dim]; // d s_text = g1 * Wv^T
    matvec_right(params.w_v(), &g1, dims.text_dim, dm, &mut g2);
    {
        let g_wv = grads.field_mut("attention_value");
        for (a, &sa) in cache.s_text.iter().enumerate() {
            if sa != 0.0 {
                let row = &mut g_wv[a * dm..(a + 1) * dm];
                for (g, &d) in row.iter_mut().zip(&g1) {
                    *g += sa * d;
                }
            }
        }
    }

    // softmax jacobian on the class attention row
    let text_row = |t: usize| &cache.text[t * dims.text_dim..(t + 1) * dims.text_dim];
    let da0: Vec<f64> = (0..dims.text_tokens)
        .map(|t| text_row(t).iter().zip(&g2).map(|(a, b)| a * b).sum())
        .collect();
    let inner: f64 = da0.iter().zip(&cache.a0).map(|(d, a)| d * a).sum();
    let dl0: Vec<f64> = da0
        .iter()
        .zip(&cache.a0)
        .map(|(d, a)| a * (d - inner))
        .collect();

    // logits_t = text_t . (Wk q0): pull back through Wk and Wq
    let mut tv = vec![0.0; dims.text_dim]; // sum_t dl0[t] text_t
    for (t, &d) in dl0.iter().enumerate() {
        if d != 0.0 {
            for (o, &x) in tv.iter_mut().zip(text_row(t)) {
                *o += d * x;
            }
        }
    }
    {
        let g_wk = grads.field_mut("attention_key");
        for (a, &ta) in tv.iter().enumerate() {
            if ta != 0.0 {
                let row = &mut g_wk[a * dm..(a + 1) * dm];
                for (g, &q) in row.iter_mut().zip(&cache.q0) {
                    *g += ta * q;
                }
            }
        }
    }
    let mut dq0 = vec![0.0; dm]; // Wk^T tv
    for (a, &ta) in tv.iter().enumerate() {
        if ta != 0.0 {
            let row = &params.w_k()[a * dm..(a + 1) * dm];
            for (o, &wv) in dq0.iter_mut().zip(row) {
                *o += ta * wv;
            }
        }
    }
    {
        let g_wq = grads.field_mut("attention_query");
        for (a, &za) in cache.z0.iter().enumerate() {
            if za != 0.0 {
                let row = &mut g_wq[a * dm..(a + 1) * dm];
                for (g, &d) in row.iter_mut().zip(&dq0) {
                    *g += za * d * scale;
                }
            }
        }
    }
    {
        let wq = params.w_q();
        for (a, o) in dz0.iter_mut().enumerate() {
            let row = &wq[a * dm..(a + 1) * dm];
            *o += scale * row.iter().zip(&dq0).map(|(w, d)| w * d).sum::<f64>();
        }
    }

    // z0 = class_token + bias + mean of patch tokens
    {
        let g_class = grads.field_mut("class_token");
        for (g, &d) in g_class.iter_mut().zip(&dz0) {
            *g += d;
        }
    }
    {
        let g_bias = grads.field_mut("patch_projection_bias");
        for (g, &d) in g_bias.iter_mut().zip(&dz0) {
            *g += d;
        }
    }
    let inv_n = 1.0 / dims.n_patches as f64;
    let g_patch: Vec<f64> = dz0.iter().map(|d| d * inv_n).collect();
    {
        let w_proj_len = dims.patch_feature_dim * dm;
        let (off, _) = params.field_span("patch_projection");
        let g_wp = &mut grads.data[off..off + w_proj_len];
        for (row, &cs) in cache.col_sums.iter().enumerate() {
            if cs != 0.0 {
                let slice = &mut g_wp[row * dm..(row + 1) * dm];
                for (g, &d) in slice.iter_mut().zip(&g_patch) {
                    *g += cs * d;
                }
            }
        }
    }
    if let Some(input_grads) = input_grads.as_deref_mut() {
        if input_grads.len() != dims.n_patches * dims.patch_feature_dim {
            return Err(Error::ShapeMismatch("input gradient buffer".into()));
        }
        // every occupied slot sees the same cotangent row, precomputable once
        let w_proj = params.w_proj();
        let mut wg = vec![0.0; dims.patch_feature_dim];
        for (row, o) in wg.iter_mut().enumerate() {
            let slice = &w_proj[row * dm..(row + 1) * dm];
            *o = slice.iter().zip(&g_patch).map(|(w, d)| w * d).sum();
        }
        for p in 0..dims.n_patches {
            for k in 0..SLOTS_PER_PATCH {
                if !cache.mask[p * SLOTS_PER_PATCH + k] {
                    continue;
                }
                let base = (p * SLOTS_PER_PATCH + k) * FEATURE_DIM;
                for f in 0..FEATURE_DIM {
                    input_grads[base + f] += wg[k * FEATURE_DIM + f];
                }
            }
        }
    }
    Ok(())
}

/// Allocation-friendly wrapper returning fresh gradient buffers.
pub fn backward(
    params: &RewardParams,
    cache: &ForwardCache,
    upstream: &Upstream,
) -> Result<(RewardParams, Vec<f64>)> {
    let mut grads = RewardParams::zeros(params.dims);
    let mut input_grads = vec![0.0; params.dims.n_patches * params.dims.patch_feature_dim];
    backward_into(params, cache, upstream, &mut grads, Some(&mut input_grads))?;
    Ok((grads, input_grads))
}

#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub patch: &'a PatchTensor,
    pub text: &'a TextTokens,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub cs_value: f64,
}

/// Batch objective: MSE over the union minus lambda times the CS divergence
/// between the preferred and dispreferred class embeddings. The kernel
/// bandwidth (when `Median`) is resolved per batch and treated as constant
/// during differentiation; finite-difference checks therefore use an
/// explicit bandwidth.
pub fn loss_batch(
    params: &RewardParams,
    preferred: &[BatchItem],
    dispreferred: &[BatchItem],
    lambda: f64,
    kernel: KernelConfig,
) -> Result<(LossParts, RewardParams)> {
    if preferred.is_empty() {
        return Err(Error::EmptyPopulation("preferred"));
    }
    if dispreferred.is_empty() {
        return Err(Error::EmptyPopulation("dispreferred"));
    }
    let n_total = (preferred.len() + dispreferred.len()) as f64;

    let mut rewards = Vec::new();
    let mut caches = Vec::new();
    let mut pref_emb = Vec::new();
    let mut disp_emb = Vec::new();
    for (list, embs) in [(preferred, &mut pref_emb), (dispreferred, &mut disp_emb)] {
        for item in list {
            let (r, h, cache) = forward(params, item.patch, item.text)?;
            rewards.push(r);
            caches.push(cache);
            embs.push(h);
        }
    }

    let mut mse = 0.0;
    for (i, item) in preferred.iter().chain(dispreferred.iter()).enumerate() {
        let e = rewards[i] - item.score;
        mse += e * e;
    }
    mse /= n_total;

    let (cs_value, d_pref, d_disp) = if lambda != 0.0 {
        let x = EmbeddingBatch::from_rows(&pref_emb)?;
        let y = EmbeddingBatch::from_rows(&disp_emb)?;
        let report = cs_divergence_grad(&x, &y, kernel)?;
        (
            report.value,
            report.grad_x.unwrap(),
            report.grad_y.unwrap(),
        )
    } else {
        (0.0, Vec::new(), Vec::new())
    };

    let mut grads = RewardParams::zeros(params.dims);
    for (i, item) in preferred.iter().chain(dispreferred.iter()).enumerate() {
        let d_reward = 2.0 * (rewards[i] - item.score) / n_total;
        let d_class: Option<Vec<f64>> = if lambda != 0.0 {
            let g = if i < preferred.len() {
                &d_pref[i]
            } else {
                &d_disp[i - preferred.len()]
            };
            Some(g.iter().map(|v| -lambda * v).collect())
        } else {
            None
        };
        let upstream = Upstream {
            d_reward,
            d_class_embedding: d_class.as_deref(),
        };
        backward_into(params, &caches[i], &upstream, &mut grads, None)?;
    }

    Ok((
        LossParts {
            total: mse - lambda * cs_value,
            mse,
            cs_value,
        },
        grads,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_preferred: usize,
    pub batch_dispreferred: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub kernel: KernelConfig,
    pub text_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            lr: 1e-3,
            epochs: 100,
            batch_preferred: 8,
            batch_dispreferred: 8,
            weight_decay: 0.01,
            seed: 0,
            kernel: KernelConfig::Median,
            text_seed: DEFAULT_TEXT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mse: f64,
    pub cs_value: f64,
    pub total: f64,
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    fn new(len: usize) -> Self {
        AdamW {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * (mhat / (vhat.sqrt() + EPS) + weight_decay * params[i]);
        }
    }
}

/// A dataset item prepared for training: features patchified and the prompt
/// hashed to tokens.
#[derive(Debug, Clone)]
pub struct PreparedItem {
    pub patch: PatchTensor,
    pub text: TextTokens,
    pub score: f64,
    pub preferred: bool,
}

pub fn prepare_item(
    mesh: &TriangleMesh,
    prompt: &str,
    text_seed: u64,
    score: f64,
    preferred: bool,
) -> Result<PreparedItem> {
    let features = featurize(mesh)?;
    let (patch, _) = patchify(mesh, &features)?;
    Ok(PreparedItem {
        patch,
        text: text_featurize(prompt, text_seed),
        score,
        preferred,
    })
}

/// Prepares every non-excluded item of a dataset.
pub fn prepare_dataset(dataset: &PrefDataset, text_seed: u64) -> Result<Vec<PreparedItem>> {
    let mut out = Vec::new();
    for item in &dataset.items {
        let preferred = match item.label {
            Label::Preferred => true,
            Label::Dispreferred => false,
            Label::Excluded => continue,
        };
        out.push(prepare_item(
            &item.mesh,
            &item.prompt,
            text_seed,
            item.score,
            preferred,
        )?);
    }
    Ok(out)
}

/// Mini-batch AdamW training of Eq.-style objective MSE - lambda * CS.
///
/// Each batch is stratified: `batch_preferred` preferred and
/// `batch_dispreferred` dispreferred items, cycling (with wraparound) over
/// per-epoch shuffles of both populations. Deterministic given the seed.
pub fn train(dataset: &PrefDataset, cfg: &TrainConfig) -> Result<(RewardParams, Vec<EpochStats>)> {
    let items = prepare_dataset(dataset, cfg.text_seed)?;
    train_prepared(&items, cfg)
}

pub fn train_prepared(
    items: &[PreparedItem],
    cfg: &TrainConfig,
) -> Result<(RewardParams, Vec<EpochStats>)> {
    let pref_idx: Vec<usize> = items
        .iter()
        .enumerate()
        .filter_map(|(i, it)| it.preferred.then_some(i))
        .collect();
    let disp_idx: Vec<usize> = items
        .iter()
        .enumerate()
        .filter_map(|(i, it)| (!it.preferred).then_some(i))
        .collect();
    if pref_idx.is_empty() {
        return Err(Error::SinglePopulation("preferred"));
    }
    if disp_idx.is_empty() {
        return Err(Error::SinglePopulation("dispreferred"));
    }

    let mut params = init_params(cfg.seed, ModelDims::default());
    let mut opt = AdamW::new(params.data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e5e_d0d0_aaaa_1111);
    let mut history = Vec::with_capacity(cfg.epochs);

    let steps_per_epoch = pref_idx
        .len()
        .div_ceil(cfg.batch_preferred)
        .max(disp_idx.len().div_ceil(cfg.batch_dispreferred));

    for epoch in 0..cfg.epochs {
        let mut pref = pref_idx.clone();
        let mut disp = disp_idx.clone();
        shuffle(&mut pref, &mut rng);
        shuffle(&mut disp, &mut rng);

        let mut mse_sum = 0.0;
        let mut cs_sum = 0.0;
        let mut total_sum = 0.0;
        for step in 0..steps_per_epoch {
            let batch_p: Vec<BatchItem> = (0..cfg.batch_preferred)
                .map(|j| {
                    let it = &items[pref[(step * cfg.batch_preferred + j) % pref.len()]];
                    BatchItem {
                        patch: &it.patch,
                        text: &it.text,
                        score: it.score,
                    }
                })
                .collect();
            let batch_d: Vec<BatchItem> = (0..cfg.batch_dispreferred)
                .map(|j| {
                    let it = &items[disp[(step * cfg.batch_dispreferred + j) % disp.len()]];
                    BatchItem {
                        patch: &it.patch,
                        text: &it.text,
                        score: it.score,
                    }
                })
                .collect();
            let (parts, grads) =
                loss_batch(&params, &batch_p, &batch_d, cfg.lambda, cfg.kernel)?;
            opt.step(&mut params.data, &grads.data, cfg.lr, cfg.weight_decay);
            mse_sum += parts.mse;
            cs_sum += parts.cs_value;
            total_sum += parts.total;
        }
        let n = steps_per_epoch as f64;
        history.push(EpochStats {
            epoch,
            mse: mse_sum / n,
            cs_value: cs_sum / n,
            total: total_sum / n,
        });
    }
    Ok((params, history))
}

/// Fisher-Yates with a caller-supplied generator (index order fixed).
fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

/// Scores a raw mesh: featurize, patchify, hash the prompt, run the model.
pub fn score(params: &RewardParams, mesh: &TriangleMesh, prompt: &str) -> Result<f64> {
    let features = featurize(mesh)?;
    let (patch, _) = patchify(mesh, &features)?;
    let text = text_featurize(prompt, DEFAULT_TEXT_SEED);
    let (reward, _, _) = forward(params, &patch, &text)?;
    Ok(reward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn random_patch(rng: &mut ChaCha8Rng, occupied: usize) -> PatchTensor {
        let mut patch = PatchTensor {
            data: vec![0.0; N_PATCHES * SLOTS_PER_PATCH * FEATURE_DIM],
            mask: vec![false; N_PATCHES * SLOTS_PER_PATCH],
        };
        let mut placed = 0;
        while placed < occupied {
            let p = rng.gen_range(0..N_PATCHES);
            let k = rng.gen_range(0..SLOTS_PER_PATCH);
            if patch.mask[p * SLOTS_PER_PATCH + k] {
                continue;
            }
            patch.mask[p * SLOTS_PER_PATCH + k] = true;
            let base = (p * SLOTS_PER_PATCH + k) * FEATURE_DIM;
            for f in 0..FEATURE_DIM {
                patch.data[base + f] = 2.0 * rng.gen::<f64>() - 1.0;
            }
            placed += 1;
        }
        patch
    }

    fn random_text(rng: &mut ChaCha8Rng) -> TextTokens {
        let dims = ModelDims::default();
        let mut t = TextTokens {
            tokens: dims.text_tokens,
            dim: dims.text_dim,
            data: vec![0.0; dims.text_tokens * dims.text_dim],
        };
        for v in t.data.iter_mut() {
            *v = 2.0 * rng.gen::<f64>() - 1.0;
        }
        t
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = init_params(42, ModelDims::default());
        let b = init_params(42, ModelDims::default());
        let c = init_params(43, ModelDims::default());
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
        assert!(a.data.iter().all(|v| v.is_finite() && v.abs() < 1.0));
    }

    #[test]
    fn params_json_round_trip() {
        let p = init_params(7, ModelDims::default());
        let bytes = p.to_json().unwrap();
        let q = RewardParams::from_json(&bytes).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn text_featurize_empty_prompt_is_zero() {
        let t = text_featurize("", 0);
        assert!(t.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn text_featurize_deterministic_and_word_local() {
        let a = text_featurize("a cat", 0);
        let b = text_featurize("a cat", 0);
        let c = text_featurize("a dog", 0);
        assert_eq!(a.data, b.data);
        assert_eq!(a.row(0), c.row(0), "shared word keeps its row");
        assert_ne!(a.row(1), c.row(1), "differing word changes its row");
        for t in 2..16 {
            assert!(a.row(t).iter().all(|&v| v == 0.0));
            assert!(c.row(t).iter().all(|&v| v == 0.0));
        }
        let norm: f64 = a.row(1).iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12, "word vectors are unit length");
    }

    #[test]
    fn zero_params_reward_is_head_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = RewardParams::zeros(ModelDims::default());
        params.field_mut("head_output_bias")[0] = 1.75;
        let p1 = random_patch(&mut rng, 30);
        let p2 = random_patch(&mut rng, 50);
        let t1 = random_text(&mut rng);
        let t2 = random_text(&mut rng);
        let (r1, _, _) = forward(&params, &p1, &t1).unwrap();
        let (r2, _, _) = forward(&params, &p2, &t2).unwrap();
        assert_eq!(r1, 1.75);
        assert_eq!(r2, 1.75);
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = init_params(5, ModelDims::default());
        let patch = random_patch(&mut rng, 40);
        let text = random_text(&mut rng);
        let (r1, h1, _) = forward(&params, &patch, &text).unwrap();
        let (r2, h2, _) = forward(&params, &patch, &text).unwrap();
        assert_eq!(r1.to_bits(), r2.to_bits());
        assert_eq!(h1, h2);
    }

    #[test]
    fn patch_permutation_leaves_reward_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = init_params(9, ModelDims::default());
        let patch = random_patch(&mut rng, 60);
        let text = random_text(&mut rng);
        let (r1, _, _) = forward(&params, &patch, &text).unwrap();

        // rotate patch blocks by 17
        let block = SLOTS_PER_PATCH * FEATURE_DIM;
        let mut permuted = patch.clone();
        for p in 0..N_PATCHES {
            let q = (p + 17) % N_PATCHES;
            permuted.data[q * block..(q + 1) * block]
                .copy_from_slice(&patch.data[p * block..(p + 1) * block]);
            for k in 0..SLOTS_PER_PATCH {
                permuted.mask[q * SLOTS_PER_PATCH + k] = patch.mask[p * SLOTS_PER_PATCH + k];
            }
        }
        let (r2, _, _) = forward(&params, &permuted, &text).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    /// Scalar probe used by the finite-difference checks: a fixed linear
    /// functional of (reward, class embedding).
    fn probe(
        params: &RewardParams,
        patch: &PatchTensor,
        text: &TextTokens,
        cr: f64,
        cw: &[f64],
    ) -> f64 {
        let (r, h, _) = forward(params, patch, text).unwrap();
        cr * r + h.iter().zip(cw).map(|(a, b)| a * b).sum::<f64>()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let mut params = init_params(rng.gen(), ModelDims::default());
            let patch = random_patch(&mut rng, 25);
            let text = random_text(&mut rng);
            let cr = 0.7;
            let cw: Vec<f64> = (0..128).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();

            let (_, _, cache) = forward(&params, &patch, &text).unwrap();
            let upstream = Upstream {
                d_reward: cr,
                d_class_embedding: Some(&cw),
            };
            let (grads, input_grads) = backward(&params, &cache, &upstream).unwrap();

            let h = 1e-5;
            // sampled parameter coordinates across every field
            for _ in 0..40 {
                let i = rng.gen_range(0..params.data.len());
                let orig = params.data[i];
                params.data[i] = orig + h;
                let fp = probe(&params, &patch, &text, cr, &cw);
                params.data[i] = orig - h;
                let fm = probe(&params, &patch, &text, cr, &cw);
                params.data[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    rel_err(fd, grads.data[i]) < 1e-5,
                    "param coord {i}: fd {fd} vs analytic {}",
                    grads.data[i]
                );
            }
            // sampled occupied input coordinates
            let occupied: Vec<usize> = (0..patch.mask.len())
                .filter(|&s| patch.mask[s])
                .collect();
            let mut patch_fd = patch.clone();
            for _ in 0..15 {
                let slot = occupied[rng.gen_range(0..occupied.len())];
                let i = slot * FEATURE_DIM + rng.gen_range(0..FEATURE_DIM);
                let orig = patch_fd.data[i];
                patch_fd.data[i] = orig + h;
                let fp = probe(&params, &patch_fd, &text, cr, &cw);
                patch_fd.data[i] = orig - h;
                let fm = probe(&params, &patch_fd, &text, cr, &cw);
                patch_fd.data[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    rel_err(fd, input_grads[i]) < 1e-5,
                    "input coord {i}: fd {fd} vs analytic {}",
                    input_grads[i]
                );
            }
        }
    }

    #[test]
    fn masked_slots_get_zero_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = init_params(3, ModelDims::default());
        let patch = random_patch(&mut rng, 10);
        let text = random_text(&mut rng);
        let (_, _, cache) = forward(&params, &patch, &text).unwrap();
        let (_, input_grads) = backward(
            &params,
            &cache,
            &Upstream {
                d_reward: 1.0,
                d_class_embedding: None,
            },
        )
        .unwrap();
        for s in 0..patch.mask.len() {
            if !patch.mask[s] {
                for f in 0..FEATURE_DIM {
                    assert_eq!(input_grads[s * FEATURE_DIM + f], 0.0);
                }
            }
        }
        // occupied slots do receive gradient somewhere
        assert!(input_grads.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = init_params(4, ModelDims::default());
        let patch = random_patch(&mut rng, 12);
        let text = random_text(&mut rng);
        let (_, _, cache) = forward(&params, &patch, &text).unwrap();
        let zeros = vec![0.0; 128];
        let (grads, input_grads) = backward(
            &params,
            &cache,
            &Upstream {
                d_reward: 0.0,
                d_class_embedding: Some(&zeros),
            },
        )
        .unwrap();
        assert!(grads.data.iter().all(|&g| g == 0.0));
        assert!(input_grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut params = init_params(6, ModelDims::default());
        let patch = random_patch(&mut rng, 8);
        let text = random_text(&mut rng);
        let (_, _, cache) = forward(&params, &patch, &text).unwrap();
        params.data[0] += 1.0;
        let err = backward(
            &params,
            &cache,
            &Upstream {
                d_reward: 1.0,
                d_class_embedding: None,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn loss_batch_lambda_zero_is_plain_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = init_params(8, ModelDims::default());
        let patches: Vec<PatchTensor> = (0..4).map(|_| random_patch(&mut rng, 15)).collect();
        let texts: Vec<TextTokens> = (0..4).map(|_| random_text(&mut rng)).collect();
        let items: Vec<BatchItem> = (0..4)
            .map(|i| BatchItem {
                patch: &patches[i],
                text: &texts[i],
                score: i as f64,
            })
            .collect();
        let (parts, _) = loss_batch(
            &params,
            &items[..2],
            &items[2..],
            0.0,
            KernelConfig::Explicit(1.0),
        )
        .unwrap();
        let mut expected = 0.0;
        for item in &items {
            let (r, _, _) = forward(&params, item.patch, item.text).unwrap();
            expected += (r - item.score) * (r - item.score);
        }
        expected /= 4.0;
        assert!((parts.mse - expected).abs() < 1e-12);
        assert_eq!(parts.cs_value, 0.0);
        assert!((parts.total - parts.mse).abs() < 1e-15);
    }

    #[test]
    fn loss_batch_identical_populations_zero_cs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let params = init_params(10, ModelDims::default());
        let patch = random_patch(&mut rng, 20);
        let text = random_text(&mut rng);
        let item = BatchItem {
            patch: &patch,
            text: &text,
            score: 2.0,
        };
        let (parts, _) = loss_batch(
            &params,
            &[item, item],
            &[item, item],
            1.0,
            KernelConfig::Explicit(1.0),
        )
        .unwrap();
        assert!(parts.cs_value.abs() < 1e-12);
        assert!((parts.total - parts.mse).abs() < 1e-12);
    }

    #[test]
    fn loss_batch_empty_population_errors() {
        let params = init_params(1, ModelDims::default());
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let patch = random_patch(&mut rng, 5);
        let text = random_text(&mut rng);
        let item = BatchItem {
            patch: &patch,
            text: &text,
            score: 1.0,
        };
        assert!(matches!(
            loss_batch(&params, &[], &[item], 1.0, KernelConfig::Median).unwrap_err(),
            Error::EmptyPopulation("preferred")
        ));
        assert!(matches!(
            loss_batch(&params, &[item], &[], 1.0, KernelConfig::Median).unwrap_err(),
            Error::EmptyPopulation("dispreferred")
        ));
    }

    #[test]
    fn loss_batch_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut params = init_params(12, ModelDims::default());
        let patches: Vec<PatchTensor> = (0..7).map(|_| random_patch(&mut rng, 12)).collect();
        let texts: Vec<TextTokens> = (0..7).map(|_| random_text(&mut rng)).collect();
        let items: Vec<BatchItem> = (0..7)
            .map(|i| BatchItem {
                patch: &patches[i],
                text: &texts[i],
                score: 0.5 * i as f64,
            })
            .collect();
        let kernel = KernelConfig::Explicit(0.8);
        let lambda = 1.0;
        let (_, grads) = loss_batch(&params, &items[..4], &items[4..], lambda, kernel).unwrap();

        let h = 1e-5;
        for _ in 0..30 {
            let i = rng.gen_range(0..params.data.len());
            let orig = params.data[i];
            params.data[i] = orig + h;
            let (lp, _) = loss_batch(&params, &items[..4], &items[4..], lambda, kernel).unwrap();
            params.data[i] = orig - h;
            let (lm, _) = loss_batch(&params, &items[..4], &items[4..], lambda, kernel).unwrap();
            params.data[i] = orig;
            let fd = (lp.total - lm.total) / (2.0 * h);
            assert!(
                rel_err(fd, grads.data[i]) < 1e-5,
                "coord {i}: fd {fd} vs analytic {}",
                grads.data[i]
            );
        }
    }

    /// Small linear-target dataset: score is an affine function of the
    /// uniform feature value filling each mesh's occupied slots.
    fn linear_target_items() -> Vec<PreparedItem> {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut items = Vec::new();
        for i in 0..24 {
            let value = i as f64 / 23.0;
            let mut patch = random_patch(&mut rng, 16);
            for s in 0..patch.mask.len() {
                if patch.mask[s] {
                    for f in 0..FEATURE_DIM {
                        patch.data[s * FEATURE_DIM + f] = value;
                    }
                }
            }
            let score = 5.0 * value;
            items.push(PreparedItem {
                patch,
                text: text_featurize("target", 0),
                score,
                preferred: score >= 4.0,
            });
        }
        items
    }

    #[test]
    fn train_learns_linear_target() {
        let items = linear_target_items();
        let cfg = TrainConfig {
            lambda: 0.0,
            lr: 1e-2,
            epochs: 100,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, history) = train_prepared(&items, &cfg).unwrap();
        let initial = history.first().unwrap().mse;
        let fin = history.last().unwrap().mse;
        assert!(
            fin < 0.1 * initial,
            "mse {initial} -> {fin} did not drop below 10%"
        );
    }

    #[test]
    fn train_same_seed_identical_history() {
        let items = linear_target_items();
        let cfg = TrainConfig {
            lambda: 1.0,
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let (p1, h1) = train_prepared(&items, &cfg).unwrap();
        let (p2, h2) = train_prepared(&items, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1.data, p2.data);
    }

    #[test]
    fn train_single_population_errors() {
        let mut items = linear_target_items();
        for it in items.iter_mut() {
            it.preferred = true;
        }
        let cfg = TrainConfig::default();
        assert!(matches!(
            train_prepared(&items, &cfg).unwrap_err(),
            Error::SinglePopulation("dispreferred")
        ));
    }

    #[test]
    fn score_is_translation_invariant() {
        let params = init_params(2, ModelDims::default());
        let mesh = shapes::icosphere(1);
        let mut moved = mesh.clone();
        for v in &mut moved.vertices {
            v[0] += 3.0;
            v[1] -= 1.5;
        }
        let a = score(&params, &mesh, "a sphere").unwrap();
        let b = score(&params, &moved, "a sphere").unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn score_rejects_oversized_mesh() {
        let params = init_params(2, ModelDims::default());
        let mesh = shapes::flat_grid(91, 1.0); // 16562 faces
        assert!(matches!(
            score(&params, &mesh, "grid").unwrap_err(),
            Error::Capacity { .. }
        ));
    }
}
