//! Safe reinforcement pretraining: a context-conditioned categorical actor
//! with reward and cost critics, target networks, replay of multi-episode
//! histories, and a single exact-penalty multiplier.
//!
//! Each outer step collects one history from a freshly sampled
//! center-oriented task, then updates critics (one-step TD against the
//! targets), the actor (exact expectation of `-Q + lambda * v_e * Q^c` over
//! the categorical policy, with critic outputs held constant), and the
//! multiplier (projected ascent on the batch-mean of per-history maximum
//! constraint gaps).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Action;
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::model::{softmax, Critic, Model, ModelSpec, TokenStep};
use crate::nn::tape::{NnError, Tape};
use crate::penalty::hinge;
use crate::taskgen::{build_distribution, sample_task, Orientation, SpawnDistribution, TaskGenError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    TaskGen(#[from] TaskGenError),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step}; last good checkpoint retained")]
    NanAbort { step: usize },
}

/// Full training configuration. Defaults follow the reference
/// hyperparameters for the 9x9 grid task.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub delta: f64,
    /// Outer training steps (collect + update).
    pub n_updates: usize,
    pub batch_size: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub ctg_min: f64,
    pub ctg_max: f64,
    pub eta: f64,
    pub lambda_cap: f64,
    pub polyak: f64,
    pub buffer_capacity: usize,
    pub grid_size: usize,
    pub n_obstacles: usize,
    pub time_limit: usize,
    /// Sharpness of the center-oriented training task distribution.
    pub alpha: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub model: ModelSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            delta: 2.5,
            n_updates: 30_000,
            batch_size: 32,
            k_min: 50,
            k_max: 50,
            ctg_min: 1.0,
            ctg_max: 15.0,
            eta: 0.05,
            lambda_cap: 100.0,
            polyak: 0.005,
            buffer_capacity: 100_000,
            grid_size: 9,
            n_obstacles: 8,
            time_limit: 30,
            alpha: 0.5,
            seed: 0,
            adam: AdamConfig::default(),
            model: ModelSpec {
                embedding_dim: 64,
                hidden_dim: 128,
                n_layers: 4,
                n_heads: 8,
                max_seq_len: 1500,
                dropout_attn: 0.0,
                dropout_resid: 0.0,
                dropout_embed: 0.05,
                state_vocab: 81,
                n_actions: 5,
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(TrainError::InvalidConfig(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(TrainError::InvalidConfig("need 1 <= k_min <= k_max".into()));
        }
        if self.ctg_min > self.ctg_max {
            return Err(TrainError::InvalidConfig("ctg_min > ctg_max".into()));
        }
        if self.eta <= 0.0 || self.lambda_cap < 0.0 || self.polyak <= 0.0 {
            return Err(TrainError::InvalidConfig("eta, polyak must be positive".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.time_limit == 0 {
            return Err(TrainError::InvalidConfig("batch, buffer, time_limit must be >= 1".into()));
        }
        if self.k_max * self.time_limit > self.model.max_seq_len {
            return Err(TrainError::InvalidConfig(format!(
                "k_max * time_limit = {} exceeds max_seq_len {}",
                self.k_max * self.time_limit,
                self.model.max_seq_len
            )));
        }
        if self.model.state_vocab < self.grid_size * self.grid_size {
            return Err(TrainError::InvalidConfig("state_vocab smaller than grid".into()));
        }
        Ok(())
    }
}

/// One collected multi-episode history with training annotations.
#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub tokens: Vec<TokenStep>,
    /// Action taken at each token position.
    pub actions: Vec<usize>,
    /// Reward observed after the action at each position.
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    /// Episode-terminal flag per position (zero bootstrap target).
    pub dones: Vec<bool>,
    /// Episode index per position.
    pub episode_of: Vec<usize>,
    /// Realized total cost per episode.
    pub episode_costs: Vec<f64>,
    /// Realized total return per episode.
    pub episode_returns: Vec<f64>,
    pub ctg0: f64,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `max_k (C_k - delta)` over this history's episodes.
    pub fn max_gap(&self, delta: f64) -> f64 {
        self.episode_costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - delta
    }

    /// Per-episode constraint-violation indicators `1{C_e > delta}`.
    pub fn violation_flags(&self, delta: f64) -> Vec<f64> {
        self.episode_costs.iter().map(|&c| if c > delta { 1.0 } else { 0.0 }).collect()
    }
}

/// Bounded FIFO of histories.
pub struct ReplayBuffer {
    items: std::collections::VecDeque<TrainHistory>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { items: std::collections::VecDeque::new(), capacity }
    }

    pub fn push(&mut self, h: TrainHistory) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(h);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &TrainHistory {
        &self.items[i]
    }

    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Roll out one history: a fresh center-oriented task, `K ~ U[k_min,
/// k_max]` episodes sharing one sampled CTG budget, context persisting
/// across episodes, actions sampled from the actor.
pub fn collect_history<R: Rng>(
    model: &Model,
    dist: &SpawnDistribution,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainHistory, TrainError> {
    let task = sample_task(dist, config.n_obstacles, config.time_limit, rng)?;
    let k = rng.gen_range(config.k_min..=config.k_max);
    let ctg0 = rng.gen_range(config.ctg_min..=config.ctg_max);
    let mut env = crate::grid::DarkRoom::new(task);
    let mut ctx = model.infer_begin();
    let g = config.grid_size;

    let mut h = TrainHistory {
        tokens: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        costs: Vec::new(),
        dones: Vec::new(),
        episode_of: Vec::new(),
        episode_costs: Vec::new(),
        episode_returns: Vec::new(),
        ctg0,
    };
    let mut prev_action = model.spec.no_action();
    let mut prev_reward = 0.0;
    let mut prev_cost = 0.0;
    for episode in 0..k {
        let mut pos = env.reset();
        let mut ctg = ctg0;
        let mut ep_return = 0.0;
        let mut ep_cost = 0.0;
        loop {
            let token = TokenStep {
                state: pos.index(g),
                prev_action,
                prev_reward,
                prev_cost,
                rtg: 0.0,
                ctg,
            };
            let step = model.infer_step(&mut ctx, &token)?;
            let probs = softmax(&step.logits);
            let a = sample_categorical(&probs, rng);
            let action = Action::from_id(a).expect("actor logits cover the action space");
            let (next, r, c, done) = env.step(action).expect("episode still running");
            h.tokens.push(token);
            h.actions.push(a);
            h.rewards.push(r);
            h.costs.push(c);
            h.dones.push(done);
            h.episode_of.push(episode);
            ctg -= c;
            ep_return += r;
            ep_cost += c;
            prev_action = a;
            prev_reward = r;
            prev_cost = c;
            pos = next;
            if done {
                break;
            }
        }
        h.episode_costs.push(ep_cost);
        h.episode_returns.push(ep_return);
    }
    Ok(h)
}

/// One-step TD targets with zero bootstrap at terminals.
pub fn td_targets(rewards: &[f64], bootstrap: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(bootstrap)
        .zip(dones)
        .map(|((&r, &q), &done)| if done { r } else { r + gamma * q })
        .collect()
}

/// Projected, capped multiplier ascent on the batch statistic.
pub fn lambda_update(gaps: &[f64], lambda: f64, eta: f64, cap: f64) -> f64 {
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    hinge(lambda + eta * mean_gap).min(cap)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub mean_return: f64,
    pub mean_cost: f64,
    pub lambda: f64,
    pub loss_v: f64,
    pub loss_c: f64,
    pub loss_p: f64,
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("step,mean_return,mean_cost,lambda,loss_v,loss_c,loss_p\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step, r.mean_return, r.mean_cost, r.lambda, r.loss_v, r.loss_c, r.loss_p
        ));
    }
    out
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
}

/// Mutable training state, exposed so callers can drive the loop manually.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub target: Model,
    pub lambda: f64,
    pub buffer: ReplayBuffer,
    pub opt: Adam,
    pub rng: ChaCha8Rng,
    pub dist: SpawnDistribution,
    pub step: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::init(config.model.clone(), &mut rng)?;
        let target = Model { spec: model.spec.clone(), params: model.params.clone() };
        let opt = Adam::new(config.adam, &model.params);
        let dist = build_distribution(config.grid_size, config.alpha, Orientation::Center)?;
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            lambda: 0.0,
            opt,
            rng,
            dist,
            model,
            target,
            step: 0,
            config,
        })
    }

    /// One outer step: collect, update critics/actor/multiplier, soft-sync
    /// targets. Returns the step's metrics.
    pub fn train_step(&mut self) -> Result<MetricsRow, TrainError> {
        let cfg = self.config.clone();
        let fresh = collect_history(&self.model, &self.dist, &cfg, &mut self.rng)?;
        let mean_return =
            fresh.episode_returns.iter().sum::<f64>() / fresh.episode_returns.len() as f64;
        let mean_cost =
            fresh.episode_costs.iter().sum::<f64>() / fresh.episode_costs.len() as f64;
        self.buffer.push(fresh);

        let idx = self.buffer.sample_indices(cfg.batch_size, &mut self.rng);
        let mut tape = Tape::new();
        let binding = self.model.bind(&mut tape);
        let mut loss_v_nodes = Vec::new();
        let mut loss_c_nodes = Vec::new();
        let mut loss_p_nodes = Vec::new();
        let mut gaps = Vec::new();
        for &i in &idx {
            let h = self.buffer.get(i).clone();
            gaps.push(h.max_gap(cfg.delta));
            let t_len = h.len();

            let out = self.model.forward_seq(&mut tape, &binding, &h.tokens, true, &mut self.rng)?;

            // targets from the target networks, no gradient
            let mut tctx = self.target.infer_begin();
            let mut target_enc = Vec::with_capacity(t_len);
            let mut target_logits = Vec::with_capacity(t_len);
            for tok in &h.tokens {
                let s = self.target.infer_step(&mut tctx, tok)?;
                target_enc.push(s.encoding);
                target_logits.push(s.logits);
            }
            let mut boot_r = vec![0.0; t_len];
            let mut boot_c = vec![0.0; t_len];
            for t in 0..t_len {
                if h.dones[t] || t + 1 >= t_len {
                    continue;
                }
                let probs = softmax(&target_logits[t + 1]);
                let a_next = sample_categorical(&probs, &mut self.rng);
                boot_r[t] = self.target.infer_q(&target_enc[t + 1], a_next, Critic::Reward);
                boot_c[t] = self.target.infer_q(&target_enc[t + 1], a_next, Critic::Cost);
            }
            let targ_r = td_targets(&h.rewards, &boot_r, &h.dones, cfg.gamma);
            let targ_c = td_targets(&h.costs, &boot_c, &h.dones, cfg.gamma);

            let q_r = self.model.critic_taken(&mut tape, &binding, out.encodings, &h.actions, Critic::Reward)?;
            let q_c = self.model.critic_taken(&mut tape, &binding, out.encodings, &h.actions, Critic::Cost)?;
            for (node, targ) in [(q_r, targ_r), (q_c, targ_c)] {
                let t_leaf = tape.leaf(t_len, 1, targ);
                let neg = tape.scale(t_leaf, -1.0);
                let diff = tape.add(node, neg)?;
                let sq = tape.mul(diff, diff)?;
                let loss = tape.mean_all(sq);
                if node == q_r {
                    loss_v_nodes.push(loss);
                } else {
                    loss_c_nodes.push(loss);
                }
            }

            // actor loss with the critic heads' outputs as constants: the
            // expectation over actions is exact and the only gradient path
            // is through the policy logits
            let flags = h.violation_flags(cfg.delta);
            let enc_vals = tape.value(out.encodings).to_vec();
            let e_dim = self.model.spec.embedding_dim;
            let a_dim = self.model.spec.n_actions;
            let mut coef = Vec::with_capacity(t_len * a_dim);
            for t in 0..t_len {
                let enc_t = &enc_vals[t * e_dim..(t + 1) * e_dim];
                let v_e = flags[h.episode_of[t]];
                for a in 0..a_dim {
                    let qr = self.model.infer_q(enc_t, a, Critic::Reward);
                    let qc = self.model.infer_q(enc_t, a, Critic::Cost);
                    coef.push(-qr + self.lambda * v_e * qc);
                }
            }
            let probs = tape.softmax_rows(out.logits);
            let coef_leaf = tape.leaf(t_len, a_dim, coef);
            let weighted = tape.dot_sum(probs, coef_leaf)?;
            loss_p_nodes.push(tape.scale(weighted, 1.0 / t_len as f64));
        }

        let stack = |tape: &mut Tape, nodes: &[crate::nn::NodeId]| {
            let cat = tape.concat_cols(nodes).expect("scalar stack");
            tape.mean_all(cat)
        };
        let lv = stack(&mut tape, &loss_v_nodes);
        let lc = stack(&mut tape, &loss_c_nodes);
        let lp = stack(&mut tape, &loss_p_nodes);
        let (loss_v, loss_c, loss_p) =
            (tape.value(lv)[0], tape.value(lc)[0], tape.value(lp)[0]);
        if !(loss_v.is_finite() && loss_c.is_finite() && loss_p.is_finite()) {
            return Err(TrainError::NanAbort { step: self.step });
        }
        let vc = tape.add(lv, lc)?;
        let total = tape.add(vc, lp)?;
        tape.backward(total)?;
        let grads = binding.gradients(&tape, &self.model.params)?;
        self.opt.step(&mut self.model.params, &grads)?;

        self.lambda = lambda_update(&gaps, self.lambda, cfg.eta, cfg.lambda_cap);
        self.target.params.polyak_toward(&self.model.params, cfg.polyak);
        self.step += 1;
        Ok(MetricsRow {
            step: self.step,
            mean_return,
            mean_cost,
            lambda: self.lambda,
            loss_v,
            loss_c,
            loss_p,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec: self.model.spec.clone(),
            params: self.model.params.clone(),
            rng: self.rng.clone(),
            meta: serde_json::json!({
                "step": self.step,
                "lambda": self.lambda,
                "delta": self.config.delta,
            }),
        }
    }
}

/// Run the full configured loop.
pub fn train(config: TrainConfig) -> Result<TrainOutput, TrainError> {
    let n = config.n_updates;
    let mut trainer = Trainer::new(config)?;
    let mut metrics = Vec::with_capacity(n);
    for _ in 0..n {
        match trainer.train_step() {
            Ok(row) => metrics.push(row),
            Err(TrainError::NanAbort { step }) => {
                return Err(TrainError::NanAbort { step });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOutput { checkpoint: trainer.checkpoint(), metrics })
}
