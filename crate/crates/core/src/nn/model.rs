//! Causal transformer over trajectory tokens with an actor head and two
//! action-conditioned critic heads.
//!
//! Two execution paths share one parameter set: a taped path used for
//! training (gradients via `Tape::backward`) and a tape-free incremental
//! path with per-layer key/value caches used for rollouts. Both are
//! deterministic; in evaluation mode they produce identical outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NnError, NodeId, Tape};

const LN_EPS: f64 = 1e-8;
const MASK_NEG: f64 = -1e30;
/// Scalar channels fed to the timestep encoder besides the two embeddings:
/// previous reward, previous cost, RTG, CTG.
const N_SCALAR_CHANNELS: usize = 4;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_seq_len: usize,
    pub dropout_attn: f64,
    pub dropout_resid: f64,
    pub dropout_embed: f64,
    /// Number of distinct observable states (grid cells).
    pub state_vocab: usize,
    pub n_actions: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.embedding_dim == 0
            || self.hidden_dim == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.max_seq_len == 0
            || self.state_vocab == 0
            || self.n_actions == 0
        {
            return Err(NnError::InvalidSpec("all dimensions must be >= 1".into()));
        }
        if self.embedding_dim % self.n_heads != 0 {
            return Err(NnError::InvalidSpec(format!(
                "embedding_dim {} not divisible by n_heads {}",
                self.embedding_dim, self.n_heads
            )));
        }
        for (name, p) in [
            ("attention", self.dropout_attn),
            ("residual", self.dropout_resid),
            ("embedding", self.dropout_embed),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(NnError::InvalidSpec(format!("{name} dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Action-vocabulary size including the "no previous action" sentinel.
    pub fn action_vocab(&self) -> usize {
        self.n_actions + 1
    }

    /// Sentinel index fed as `prev_action` on the first token of a history.
    pub fn no_action(&self) -> usize {
        self.n_actions
    }
}

/// Named dense tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }
}

/// Full parameter set in a fixed, named order (the checkpoint contract).
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn index_of(&self, name: &str) -> usize {
        self.entries
            .iter()
            .position(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.entries[self.index_of(name)].1
    }

    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.data.len()).sum()
    }

    /// SHA-256 over the little-endian bytes of every tensor in order.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (name, t) in &self.entries {
            hasher.update(name.as_bytes());
            for &v in &t.data {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `self = (1 - rate) * self + rate * other`, elementwise over all
    /// tensors. Shapes must already agree.
    pub fn polyak_toward(&mut self, other: &Params, rate: f64) {
        for ((_, t), (_, o)) in self.entries.iter_mut().zip(&other.entries) {
            for (dst, &src) in t.data.iter_mut().zip(&o.data) {
                *dst = (1.0 - rate) * *dst + rate * src;
            }
        }
    }
}

fn layout(spec: &ModelSpec) -> Vec<(String, usize, usize)> {
    let e = spec.embedding_dim;
    let h = spec.hidden_dim;
    let a = spec.n_actions;
    let mut out = vec![
        ("embed_state".into(), spec.state_vocab, e),
        ("embed_action".into(), spec.action_vocab(), e),
        ("embed_pos".into(), spec.max_seq_len, e),
        ("enc_w1".into(), 2 * e + N_SCALAR_CHANNELS, h),
        ("enc_b1".into(), 1, h),
        ("enc_w2".into(), h, e),
        ("enc_b2".into(), 1, e),
    ];
    for l in 0..spec.n_layers {
        for (suffix, rows, cols) in [
            ("ln1_g", 1, e),
            ("ln1_b", 1, e),
            ("attn_wq", e, e),
            ("attn_bq", 1, e),
            ("attn_wk", e, e),
            ("attn_bk", 1, e),
            ("attn_wv", e, e),
            ("attn_bv", 1, e),
            ("attn_wo", e, e),
            ("attn_bo", 1, e),
            ("ln2_g", 1, e),
            ("ln2_b", 1, e),
            ("mlp_w1", e, 4 * e),
            ("mlp_b1", 1, 4 * e),
            ("mlp_w2", 4 * e, e),
            ("mlp_b2", 1, e),
        ] {
            out.push((format!("layer{l}.{suffix}"), rows, cols));
        }
    }
    out.push(("ln_f_g".into(), 1, e));
    out.push(("ln_f_b".into(), 1, e));
    out.push(("actor_w".into(), e, a));
    out.push(("actor_b".into(), 1, a));
    for critic in ["critic_r", "critic_c"] {
        out.push((format!("{critic}_w1"), 2 * e, h));
        out.push((format!("{critic}_b1"), 1, h));
        out.push((format!("{critic}_w2"), h, 1));
        out.push((format!("{critic}_b2"), 1, 1));
    }
    out
}

/// One trajectory token. `prev_*` fields describe the transition that led
/// into `state`; the first token of a history uses the no-action sentinel
/// and zero reward/cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStep {
    pub state: usize,
    pub prev_action: usize,
    pub prev_reward: f64,
    pub prev_cost: f64,
    pub rtg: f64,
    pub ctg: f64,
}

/// Which critic head to query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Critic {
    Reward,
    Cost,
}

impl Critic {
    fn prefix(self) -> &'static str {
        match self {
            Critic::Reward => "critic_r",
            Critic::Cost => "critic_c",
        }
    }
}

/// Parameter leaves registered on a tape, aligned with `Params::entries`.
pub struct Binding {
    pub ids: Vec<NodeId>,
}

impl Binding {
    /// Named gradients after a backward pass, validated finite.
    pub fn gradients(&self, tape: &Tape, params: &Params) -> Result<Vec<(String, Vec<f64>)>, NnError> {
        let mut out = Vec::with_capacity(self.ids.len());
        for (id, (name, _)) in self.ids.iter().zip(&params.entries) {
            let g = tape.grad(*id).to_vec();
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient { name: name.clone() });
            }
            out.push((name.clone(), g));
        }
        Ok(out)
    }
}

/// Attention parameter nodes for one layer.
pub struct AttnParams {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
}

/// Multi-head self-attention with a strict causal mask: output row t sees
/// input rows <= t only.
pub fn causal_self_attention<R: Rng>(
    tape: &mut Tape,
    x: NodeId,
    p: &AttnParams,
    n_heads: usize,
    dropout_attn: f64,
    train: bool,
    rng: &mut R,
) -> Result<NodeId, NnError> {
    let (t_len, e) = tape.shape(x);
    let dh = e / n_heads;
    let q0 = tape.matmul(x, p.wq, false, false)?;
    let q = tape.add_row(q0, p.bq)?;
    let k0 = tape.matmul(x, p.wk, false, false)?;
    let k = tape.add_row(k0, p.bk)?;
    let v0 = tape.matmul(x, p.wv, false, false)?;
    let v = tape.add_row(v0, p.bv)?;
    let mut mask = vec![0.0; t_len * t_len];
    for i in 0..t_len {
        for j in (i + 1)..t_len {
            mask[i * t_len + j] = MASK_NEG;
        }
    }
    let mask = tape.leaf(t_len, t_len, mask);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let scores0 = tape.matmul(qh, kh, false, true)?;
        let scores1 = tape.scale(scores0, scale);
        let scores = tape.add(scores1, mask)?;
        let probs0 = tape.softmax_rows(scores);
        let probs = tape.dropout(probs0, dropout_attn, train, rng);
        heads.push(tape.matmul(probs, vh, false, false)?);
    }
    let cat = tape.concat_cols(&heads)?;
    let out0 = tape.matmul(cat, p.wo, false, false)?;
    tape.add_row(out0, p.bo)
}

/// Taped forward outputs for one token sequence.
pub struct SeqOutput {
    /// `(T, n_actions)` actor logits.
    pub logits: NodeId,
    /// `(T, embedding_dim)` final-layer encodings feeding the critics.
    pub encodings: NodeId,
}

pub struct Model {
    pub spec: ModelSpec,
    pub params: Params,
}

impl Model {
    /// Scaled-uniform initialization (`±1/sqrt(fan_in)` for weights, zeros
    /// for biases, ones for layernorm gains), deterministic given the RNG.
    pub fn init<R: Rng>(spec: ModelSpec, rng: &mut R) -> Result<Self, NnError> {
        spec.validate()?;
        let mut entries = Vec::new();
        for (name, rows, cols) in layout(&spec) {
            let mut t = Tensor::zeros(rows, cols);
            let is_gain = name.ends_with("_g");
            let is_bias = name.ends_with('b') || name.ends_with("_b") || name.contains("_b");
            if is_gain {
                t.data.fill(1.0);
            } else if is_bias && rows == 1 && !name.starts_with("embed") {
                // biases stay zero
            } else {
                let fan_in = rows.max(1) as f64;
                let bound = 1.0 / fan_in.sqrt();
                for v in &mut t.data {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            entries.push((name, t));
        }
        Ok(Self { spec, params: Params { entries } })
    }

    /// Register every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        let ids = self
            .params
            .entries
            .iter()
            .map(|(_, t)| tape.leaf(t.rows, t.cols, t.data.clone()))
            .collect();
        Binding { ids }
    }

    fn node(&self, binding: &Binding, name: &str) -> NodeId {
        binding.ids[self.params.index_of(name)]
    }

    /// Full taped forward pass over a token sequence.
    pub fn forward_seq<R: Rng>(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        tokens: &[TokenStep],
        train: bool,
        rng: &mut R,
    ) -> Result<SeqOutput, NnError> {
        let t_len = tokens.len();
        if t_len > self.spec.max_seq_len {
            return Err(NnError::SequenceTooLong { len: t_len, max: self.spec.max_seq_len });
        }
        let state_idx: Vec<usize> = tokens.iter().map(|t| t.state).collect();
        let action_idx: Vec<usize> = tokens.iter().map(|t| t.prev_action).collect();
        let scalars: Vec<f64> = tokens
            .iter()
            .flat_map(|t| [t.prev_reward, t.prev_cost, t.rtg, t.ctg])
            .collect();

        let embed_state = self.node(binding, "embed_state");
        let embed_action = self.node(binding, "embed_action");
        let s_emb = tape.gather_rows(embed_state, &state_idx)?;
        let a_emb = tape.gather_rows(embed_action, &action_idx)?;
        let sc = tape.leaf(t_len, N_SCALAR_CHANNELS, scalars);
        let feat = tape.concat_cols(&[s_emb, a_emb, sc])?;

        let w1 = self.node(binding, "enc_w1");
        let b1 = self.node(binding, "enc_b1");
        let w2 = self.node(binding, "enc_w2");
        let b2 = self.node(binding, "enc_b2");
        let h0 = tape.matmul(feat, w1, false, false)?;
        let h1 = tape.add_row(h0, b1)?;
        let h2 = tape.gelu(h1);
        let h3 = tape.matmul(h2, w2, false, false)?;
        let enc = tape.add_row(h3, b2)?;

        let embed_pos = self.node(binding, "embed_pos");
        let pos_idx: Vec<usize> = (0..t_len).collect();
        let pos = tape.gather_rows(embed_pos, &pos_idx)?;
        let x0 = tape.add(enc, pos)?;
        let mut x = tape.dropout(x0, self.spec.dropout_embed, train, rng);

        for l in 0..self.spec.n_layers {
            let name = |s: &str| format!("layer{l}.{s}");
            let ln1 = self.affine_layernorm(tape, binding, x, &name("ln1_g"), &name("ln1_b"))?;
            let attn_p = AttnParams {
                wq: self.node(binding, &name("attn_wq")),
                bq: self.node(binding, &name("attn_bq")),
                wk: self.node(binding, &name("attn_wk")),
                bk: self.node(binding, &name("attn_bk")),
                wv: self.node(binding, &name("attn_wv")),
                bv: self.node(binding, &name("attn_bv")),
                wo: self.node(binding, &name("attn_wo")),
                bo: self.node(binding, &name("attn_bo")),
            };
            let attn = causal_self_attention(
                tape,
                ln1,
                &attn_p,
                self.spec.n_heads,
                self.spec.dropout_attn,
                train,
                rng,
            )?;
            let attn = tape.dropout(attn, self.spec.dropout_resid, train, rng);
            x = tape.add(x, attn)?;

            let ln2 = self.affine_layernorm(tape, binding, x, &name("ln2_g"), &name("ln2_b"))?;
            let mw1 = self.node(binding, &name("mlp_w1"));
            let mb1 = self.node(binding, &name("mlp_b1"));
            let mw2 = self.node(binding, &name("mlp_w2"));
            let mb2 = self.node(binding, &name("mlp_b2"));
            let m0 = tape.matmul(ln2, mw1, false, false)?;
            let m1 = tape.add_row(m0, mb1)?;
            let m2 = tape.gelu(m1);
            let m3 = tape.matmul(m2, mw2, false, false)?;
            let m4 = tape.add_row(m3, mb2)?;
            let m5 = tape.dropout(m4, self.spec.dropout_resid, train, rng);
            x = tape.add(x, m5)?;
        }

        let xf = self.affine_layernorm(tape, binding, x, "ln_f_g", "ln_f_b")?;
        let aw = self.node(binding, "actor_w");
        let ab = self.node(binding, "actor_b");
        let logits0 = tape.matmul(xf, aw, false, false)?;
        let logits = tape.add_row(logits0, ab)?;
        tape.assert_finite(logits, "forward_seq")?;
        Ok(SeqOutput { logits, encodings: xf })
    }

    fn affine_layernorm(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        x: NodeId,
        gain: &str,
        bias: &str,
    ) -> Result<NodeId, NnError> {
        let g = self.node(binding, gain);
        let b = self.node(binding, bias);
        let n = tape.layernorm_rows(x, LN_EPS);
        let n = tape.mul_row(n, g)?;
        tape.add_row(n, b)
    }

    fn critic_mlp(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        input: NodeId,
        critic: Critic,
    ) -> Result<NodeId, NnError> {
        let prefix = critic.prefix();
        let w1 = self.node(binding, &format!("{prefix}_w1"));
        let b1 = self.node(binding, &format!("{prefix}_b1"));
        let w2 = self.node(binding, &format!("{prefix}_w2"));
        let b2 = self.node(binding, &format!("{prefix}_b2"));
        let h0 = tape.matmul(input, w1, false, false)?;
        let h1 = tape.add_row(h0, b1)?;
        let h2 = tape.gelu(h1);
        let h3 = tape.matmul(h2, w2, false, false)?;
        tape.add_row(h3, b2)
    }

    /// `(T, n_actions)` Q-values for every action at every position.
    pub fn critic_all_actions(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        encodings: NodeId,
        critic: Critic,
    ) -> Result<NodeId, NnError> {
        let (t_len, _) = tape.shape(encodings);
        let a = self.spec.n_actions;
        let rep: Vec<usize> = (0..t_len * a).map(|i| i / a).collect();
        let tile: Vec<usize> = (0..t_len * a).map(|i| i % a).collect();
        let enc_rep = tape.gather_rows(encodings, &rep)?;
        let embed_action = self.node(binding, "embed_action");
        let act_emb = tape.gather_rows(embed_action, &tile)?;
        let input = tape.concat_cols(&[enc_rep, act_emb])?;
        let q = self.critic_mlp(tape, binding, input, critic)?;
        tape.reshape(q, t_len, a)
    }

    /// `(T, 1)` Q-values for the logged actions.
    pub fn critic_taken(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        encodings: NodeId,
        actions: &[usize],
        critic: Critic,
    ) -> Result<NodeId, NnError> {
        let embed_action = self.node(binding, "embed_action");
        let act_emb = tape.gather_rows(embed_action, actions)?;
        let input = tape.concat_cols(&[encodings, act_emb])?;
        self.critic_mlp(tape, binding, input, critic)
    }
}

// ---------------------------------------------------------------------------
// Tape-free incremental inference with key/value caching.

struct LayerKv {
    /// `pos * embedding_dim`, head-contiguous like the taped projections.
    k: Vec<f64>,
    v: Vec<f64>,
}

/// Growing rollout context for [`Model::infer_step`].
pub struct InferenceContext {
    pos: usize,
    layers: Vec<LayerKv>,
}

impl InferenceContext {
    pub fn len(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == 0
    }
}

/// One inference step's outputs.
pub struct InferStep {
    pub logits: Vec<f64>,
    pub encoding: Vec<f64>,
}

fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    debug_assert_eq!(x.len(), w.rows);
    let mut out = vec![0.0; w.cols];
    for (p, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &w.data[p * w.cols..(p + 1) * w.cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xv * wv;
        }
    }
    out
}

fn add_assign(x: &mut [f64], y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

fn layernorm_vec(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&v, (&g, &b))| (v - mean) * rstd * g + b)
        .collect()
}

fn gelu_vec(x: &mut [f64]) {
    for v in x.iter_mut() {
        let u = (2.0 / std::f64::consts::PI).sqrt() * (*v + 0.044715 * *v * *v * *v);
        *v = 0.5 * *v * (1.0 + u.tanh());
    }
}

impl Model {
    pub fn infer_begin(&self) -> InferenceContext {
        InferenceContext {
            pos: 0,
            layers: (0..self.spec.n_layers)
                .map(|_| LayerKv { k: Vec::new(), v: Vec::new() })
                .collect(),
        }
    }

    /// Feed one token; equals the evaluation-mode taped forward at this
    /// position exactly.
    pub fn infer_step(
        &self,
        ctx: &mut InferenceContext,
        token: &TokenStep,
    ) -> Result<InferStep, NnError> {
        let t = ctx.pos;
        if t >= self.spec.max_seq_len {
            return Err(NnError::SequenceTooLong { len: t + 1, max: self.spec.max_seq_len });
        }
        let e = self.spec.embedding_dim;
        let p = &self.params;

        let mut feat = Vec::with_capacity(2 * e + N_SCALAR_CHANNELS);
        let es = p.get("embed_state");
        if token.state >= es.rows {
            return Err(NnError::IndexOutOfRange {
                op: "infer_step state",
                index: token.state,
                len: es.rows,
            });
        }
        feat.extend_from_slice(&es.data[token.state * e..(token.state + 1) * e]);
        let ea = p.get("embed_action");
        if token.prev_action >= ea.rows {
            return Err(NnError::IndexOutOfRange {
                op: "infer_step action",
                index: token.prev_action,
                len: ea.rows,
            });
        }
        feat.extend_from_slice(&ea.data[token.prev_action * e..(token.prev_action + 1) * e]);
        feat.extend_from_slice(&[token.prev_reward, token.prev_cost, token.rtg, token.ctg]);

        let mut h = vec_mat(&feat, p.get("enc_w1"));
        add_assign(&mut h, &p.get("enc_b1").data);
        gelu_vec(&mut h);
        let mut x = vec_mat(&h, p.get("enc_w2"));
        add_assign(&mut x, &p.get("enc_b2").data);
        let ep = p.get("embed_pos");
        add_assign(&mut x, &ep.data[t * e..(t + 1) * e]);

        let n_heads = self.spec.n_heads;
        let dh = e / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for l in 0..self.spec.n_layers {
            let name = |s: &str| format!("layer{l}.{s}");
            let ln1 = layernorm_vec(
                &x,
                &p.get(&name("ln1_g")).data,
                &p.get(&name("ln1_b")).data,
            );
            let mut q = vec_mat(&ln1, p.get(&name("attn_wq")));
            add_assign(&mut q, &p.get(&name("attn_bq")).data);
            let mut k = vec_mat(&ln1, p.get(&name("attn_wk")));
            add_assign(&mut k, &p.get(&name("attn_bk")).data);
            let mut v = vec_mat(&ln1, p.get(&name("attn_wv")));
            add_assign(&mut v, &p.get(&name("attn_bv")).data);
            let cache = &mut ctx.layers[l];
            cache.k.extend_from_slice(&k);
            cache.v.extend_from_slice(&v);
            let n_keys = t + 1;
            let mut attn_out = vec![0.0; e];
            for hh in 0..n_heads {
                let (lo, hi) = (hh * dh, (hh + 1) * dh);
                let qh = &q[lo..hi];
                let mut scores = Vec::with_capacity(n_keys);
                for j in 0..n_keys {
                    let kj = &cache.k[j * e + lo..j * e + hi];
                    scores.push(qh.iter().zip(kj).map(|(&a, &b)| a * b).sum::<f64>() * scale);
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for ev in &mut exps {
                    *ev /= z;
                }
                for (j, &pj) in exps.iter().enumerate() {
                    let vj = &cache.v[j * e + lo..j * e + hi];
                    for (o, &vv) in attn_out[lo..hi].iter_mut().zip(vj) {
                        *o += pj * vv;
                    }
                }
            }
            let mut proj = vec_mat(&attn_out, p.get(&name("attn_wo")));
            add_assign(&mut proj, &p.get(&name("attn_bo")).data);
            add_assign(&mut x, &proj);

            let ln2 = layernorm_vec(
                &x,
                &p.get(&name("ln2_g")).data,
                &p.get(&name("ln2_b")).data,
            );
            let mut m = vec_mat(&ln2, p.get(&name("mlp_w1")));
            add_assign(&mut m, &p.get(&name("mlp_b1")).data);
            gelu_vec(&mut m);
            let mut m2 = vec_mat(&m, p.get(&name("mlp_w2")));
            add_assign(&mut m2, &p.get(&name("mlp_b2")).data);
            add_assign(&mut x, &m2);
        }

        let xf = layernorm_vec(&x, &p.get("ln_f_g").data, &p.get("ln_f_b").data);
        let mut logits = vec_mat(&xf, p.get("actor_w"));
        add_assign(&mut logits, &p.get("actor_b").data);
        ctx.pos += 1;
        Ok(InferStep { logits, encoding: xf })
    }

    /// Tape-free critic query for a single (encoding, action) pair.
    pub fn infer_q(&self, encoding: &[f64], action: usize, critic: Critic) -> f64 {
        let p = &self.params;
        let e = self.spec.embedding_dim;
        let ea = p.get("embed_action");
        let mut input = Vec::with_capacity(2 * e);
        input.extend_from_slice(encoding);
        input.extend_from_slice(&ea.data[action * e..(action + 1) * e]);
        let prefix = critic.prefix();
        let mut h = vec_mat(&input, p.get(&format!("{prefix}_w1")));
        add_assign(&mut h, &p.get(&format!("{prefix}_b1")).data);
        gelu_vec(&mut h);
        let mut q = vec_mat(&h, p.get(&format!("{prefix}_w2")));
        add_assign(&mut q, &p.get(&format!("{prefix}_b2")).data);
        q[0]
    }
}

/// Greedy argmax with lowest-index tie-break.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of a logit slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_spec(n_layers: usize) -> ModelSpec {
        ModelSpec {
            embedding_dim: 8,
            hidden_dim: 12,
            n_layers,
            n_heads: 2,
            max_seq_len: 16,
            dropout_attn: 0.0,
            dropout_resid: 0.0,
            dropout_embed: 0.0,
            state_vocab: 25,
            n_actions: 5,
        }
    }

    fn random_tokens(n: usize, rng: &mut ChaCha8Rng) -> Vec<TokenStep> {
        (0..n)
            .map(|i| TokenStep {
                state: rng.gen_range(0..25),
                prev_action: if i == 0 { 5 } else { rng.gen_range(0..5) },
                prev_reward: rng.gen_range(0.0..1.0),
                prev_cost: rng.gen_range(0.0..1.0),
                rtg: rng.gen_range(0.0..3.0),
                ctg: rng.gen_range(0.0..5.0),
            })
            .collect()
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec(1);
        s.n_heads = 3;
        assert!(matches!(s.validate(), Err(NnError::InvalidSpec(_))));
        s.n_heads = 2;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn causality_bit_for_bit() {
        for n_layers in [1, 2, 4] {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let model = Model::init(small_spec(n_layers), &mut rng).unwrap();
            let tokens = random_tokens(6, &mut rng);
            let run = |tokens: &[TokenStep]| {
                let mut tape = Tape::new();
                let binding = model.bind(&mut tape);
                let mut drng = ChaCha8Rng::seed_from_u64(0);
                let out = model
                    .forward_seq(&mut tape, &binding, tokens, false, &mut drng)
                    .unwrap();
                tape.value(out.logits).to_vec()
            };
            let base = run(&tokens);
            for perturb_at in 2..6 {
                let mut modified = tokens.clone();
                modified[perturb_at].state = (modified[perturb_at].state + 3) % 25;
                modified[perturb_at].ctg += 1.0;
                let changed = run(&modified);
                let a = 5;
                for t in 0..perturb_at {
                    assert_eq!(
                        &base[t * a..(t + 1) * a],
                        &changed[t * a..(t + 1) * a],
                        "layer count {n_layers}, position {t} leaked from {perturb_at}"
                    );
                }
            }
        }
    }

    #[test]
    fn attention_seq1_is_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = 8;
        let mut tape = Tape::new();
        let mk = |tape: &mut Tape, rng: &mut ChaCha8Rng, r: usize, c: usize| {
            let vals: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            tape.leaf(r, c, vals)
        };
        let x = mk(&mut tape, &mut rng, 1, e);
        let p = AttnParams {
            wq: mk(&mut tape, &mut rng, e, e),
            bq: mk(&mut tape, &mut rng, 1, e),
            wk: mk(&mut tape, &mut rng, e, e),
            bk: mk(&mut tape, &mut rng, 1, e),
            wv: mk(&mut tape, &mut rng, e, e),
            bv: mk(&mut tape, &mut rng, 1, e),
            wo: mk(&mut tape, &mut rng, e, e),
            bo: mk(&mut tape, &mut rng, 1, e),
        };
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let out = causal_self_attention(&mut tape, x, &p, 2, 0.0, false, &mut drng).unwrap();
        // expected: (x Wv + bv) Wo + bo, since softmax over one key is 1
        let v0 = tape.matmul(x, p.wv, false, false).unwrap();
        let v = tape.add_row(v0, p.bv).unwrap();
        let e0 = tape.matmul(v, p.wo, false, false).unwrap();
        let expect = tape.add_row(e0, p.bo).unwrap();
        for (a, b) in tape.value(out).iter().zip(tape.value(expect)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_determinism_and_ctg_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = Model::init(small_spec(1), &mut rng).unwrap();
        let tok = TokenStep {
            state: 7,
            prev_action: 5,
            prev_reward: 0.0,
            prev_cost: 0.0,
            rtg: 0.0,
            ctg: 3.0,
        };
        let run = |tok: TokenStep| {
            let mut ctx = model.infer_begin();
            model.infer_step(&mut ctx, &tok).unwrap().encoding
        };
        assert_eq!(run(tok), run(tok));
        let mut other = tok;
        other.ctg = 4.0;
        assert_ne!(run(tok), run(other));
    }

    #[test]
    fn infer_matches_taped_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let model = Model::init(small_spec(2), &mut rng).unwrap();
        let tokens = random_tokens(10, &mut rng);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let out = model
            .forward_seq(&mut tape, &binding, &tokens, false, &mut drng)
            .unwrap();
        let taped_logits = tape.value(out.logits).to_vec();
        let taped_enc = tape.value(out.encodings).to_vec();
        let mut ctx = model.infer_begin();
        let a = model.spec.n_actions;
        let e = model.spec.embedding_dim;
        for (t, tok) in tokens.iter().enumerate() {
            let step = model.infer_step(&mut ctx, tok).unwrap();
            for (x, y) in step.logits.iter().zip(&taped_logits[t * a..(t + 1) * a]) {
                assert!((x - y).abs() < 1e-10, "logit mismatch at {t}");
            }
            for (x, y) in step.encoding.iter().zip(&taped_enc[t * e..(t + 1) * e]) {
                assert!((x - y).abs() < 1e-10, "encoding mismatch at {t}");
            }
        }
    }

    #[test]
    fn critic_all_actions_matches_taken_and_infer() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let model = Model::init(small_spec(1), &mut rng).unwrap();
        let tokens = random_tokens(4, &mut rng);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let out = model
            .forward_seq(&mut tape, &binding, &tokens, false, &mut drng)
            .unwrap();
        let all = model
            .critic_all_actions(&mut tape, &binding, out.encodings, Critic::Cost)
            .unwrap();
        let actions = [1usize, 4, 0, 2];
        let taken = model
            .critic_taken(&mut tape, &binding, out.encodings, &actions, Critic::Cost)
            .unwrap();
        let a = model.spec.n_actions;
        let e = model.spec.embedding_dim;
        let enc = tape.value(out.encodings).to_vec();
        for (t, &act) in actions.iter().enumerate() {
            let from_all = tape.value(all)[t * a + act];
            let from_taken = tape.value(taken)[t];
            assert!((from_all - from_taken).abs() < 1e-12);
            let from_infer = model.infer_q(&enc[t * e..(t + 1) * e], act, Critic::Cost);
            assert!((from_all - from_infer).abs() < 1e-10);
        }
    }

    #[test]
    fn sequence_overflow_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = Model::init(small_spec(1), &mut rng).unwrap();
        let tokens = random_tokens(17, &mut rng);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let r = model.forward_seq(&mut tape, &binding, &tokens, false, &mut drng);
        assert!(matches!(r, Err(NnError::SequenceTooLong { len: 17, max: 16 })));
    }

    #[test]
    fn checksum_changes_with_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = Model::init(small_spec(1), &mut rng).unwrap();
        let c1 = model.params.checksum();
        let mut p2 = model.params.clone();
        p2.entries[3].1.data[0] += 1e-9;
        assert_ne!(c1, p2.checksum());
        assert_eq!(c1, model.params.checksum());
    }

    #[test]
    fn overfits_sixteen_fixed_sequences() {
        use crate::nn::adam::{Adam, AdamConfig};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut model = Model::init(small_spec(2), &mut rng).unwrap();
        let seqs: Vec<(Vec<TokenStep>, Vec<usize>)> = (0..16)
            .map(|_| {
                let toks = random_tokens(6, &mut rng);
                let targets = (0..6).map(|_| rng.gen_range(0..5)).collect();
                (toks, targets)
            })
            .collect();
        let mut opt = Adam::new(AdamConfig { lr: 3e-3, ..AdamConfig::default() }, &model.params);
        let mut last_ce = f64::INFINITY;
        for step in 0..2000 {
            let mut tape = Tape::new();
            let binding = model.bind(&mut tape);
            let mut drng = ChaCha8Rng::seed_from_u64(step);
            let mut per_seq = Vec::new();
            for (toks, targets) in &seqs {
                let out = model
                    .forward_seq(&mut tape, &binding, toks, false, &mut drng)
                    .unwrap();
                let lsm = tape.log_softmax_rows(out.logits);
                let picked = tape.pick(lsm, targets).unwrap();
                per_seq.push(tape.mean_all(picked));
            }
            let stacked = tape.concat_cols(&per_seq).unwrap();
            let mean = tape.mean_all(stacked);
            let loss = tape.scale(mean, -1.0);
            last_ce = tape.value(loss)[0];
            if last_ce < 0.01 {
                return;
            }
            tape.backward(loss).unwrap();
            let grads = binding.gradients(&tape, &model.params).unwrap();
            opt.step(&mut model.params, &grads).unwrap();
        }
        panic!("failed to memorize: final cross-entropy {last_ce}");
    }

    #[test]
    fn full_model_gradient_check() {
        // central finite differences through the actor cross-entropy on a
        // subset of parameters from every group
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut model = Model::init(small_spec(1), &mut rng).unwrap();
        let tokens = random_tokens(4, &mut rng);
        let targets = [0usize, 2, 4, 1];
        let loss = |model: &Model| -> f64 {
            let mut tape = Tape::new();
            let binding = model.bind(&mut tape);
            let mut drng = ChaCha8Rng::seed_from_u64(0);
            let out = model
                .forward_seq(&mut tape, &binding, &tokens, false, &mut drng)
                .unwrap();
            let lsm = tape.log_softmax_rows(out.logits);
            let picked = tape.pick(lsm, &targets).unwrap();
            let mean = tape.mean_all(picked);
            let neg = tape.scale(mean, -1.0);
            tape.value(neg)[0]
        };
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let out = model
            .forward_seq(&mut tape, &binding, &tokens, false, &mut drng)
            .unwrap();
        let lsm = tape.log_softmax_rows(out.logits);
        let picked = tape.pick(lsm, &targets).unwrap();
        let mean = tape.mean_all(picked);
        let neg = tape.scale(mean, -1.0);
        tape.backward(neg).unwrap();
        let grads = binding.gradients(&tape, &model.params).unwrap();
        let h = 1e-5;
        let mut checked = 0;
        for (pi, (name, g)) in grads.iter().enumerate() {
            // probe a few entries per tensor
            let len = g.len();
            for &k in &[0, len / 2, len - 1] {
                let orig = model.params.entries[pi].1.data[k];
                model.params.entries[pi].1.data[k] = orig + h;
                let up = loss(&model);
                model.params.entries[pi].1.data[k] = orig - h;
                let down = loss(&model);
                model.params.entries[pi].1.data[k] = orig;
                let fd = (up - down) / (2.0 * h);
                let denom = fd.abs().max(g[k].abs()).max(1e-6);
                assert!(
                    (fd - g[k]).abs() / denom <= 1e-4,
                    "{name}[{k}]: analytic {} vs fd {fd}",
                    g[k]
                );
                checked += 1;
            }
        }
        assert!(checked > 60);
    }
}
