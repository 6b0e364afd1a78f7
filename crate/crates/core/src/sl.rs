//! Safe supervised pretraining: dataset generation from a tabular source
//! learner, the perturbed-optimal-policy (AD-EPS) variant, RTG/CTG
//! conditioned imitation losses, and phase-stratified context subsampling.
//!
//! The source learner is Lagrangian Q-learning: reward and cost Q tables,
//! epsilon-greedy behavior on the penalized value `Q - lambda * Q^c`, and
//! multiplier ascent on the per-episode cost overshoot. Its entire learning
//! history is logged so the sequence model imitates a learning process, not
//! a fixed policy.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Action, DarkRoom, GridPos, TaskSpec};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::model::{Binding, Model, ModelSpec, TokenStep};
use crate::nn::tape::{NnError, NodeId, Tape};
use crate::penalty::hinge;
use crate::taskgen::{build_distribution, sample_task, Orientation, TaskGenError};

#[derive(Debug, Error)]
pub enum SlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    TaskGen(#[from] TaskGenError),
    #[error("trajectory has no complete episode")]
    EmptyTrajectory,
    #[error("inconsistent annotations at step {step}: {detail}")]
    BadAnnotation { step: usize, detail: String },
    #[error("dataset shows no learning signal at cost limit {limit}: first {first:.3} vs later {later:.3}")]
    NoLearningSignal { limit: f64, first: f64, later: f64 },
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset decode: {0}")]
    Decode(String),
}

/// One logged source-learner step with return/cost-to-go annotations
/// (inclusive suffix sums within the episode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlStep {
    pub episode: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub cost: f64,
    pub next_state: usize,
    pub done: bool,
    pub rtg: f64,
    pub ctg: f64,
}

/// A complete learning history on one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlTrajectory {
    pub task: TaskSpec,
    pub cost_limit: f64,
    pub steps: Vec<SlStep>,
}

impl SlTrajectory {
    pub fn n_episodes(&self) -> usize {
        self.steps.last().map_or(0, |s| s.episode + 1)
    }

    /// Start indices of every episode.
    pub fn episode_starts(&self) -> Vec<usize> {
        let mut starts = Vec::new();
        let mut prev = usize::MAX;
        for (i, s) in self.steps.iter().enumerate() {
            if s.episode != prev {
                starts.push(i);
                prev = s.episode;
            }
        }
        starts
    }

    /// Total reward per episode, in order.
    pub fn episode_returns(&self) -> Vec<f64> {
        let n = self.n_episodes();
        let mut out = vec![0.0; n];
        for s in &self.steps {
            out[s.episode] += s.reward;
        }
        out
    }

    /// Telescoping consistency of the annotations: within each episode,
    /// `rtg(t) = reward(t) + rtg(t+1)` and the same for costs.
    pub fn validate_annotations(&self) -> Result<(), SlError> {
        for (i, w) in self.steps.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            if a.episode == b.episode {
                for (name, ann, nxt, step_val) in [
                    ("rtg", a.rtg, b.rtg, a.reward),
                    ("ctg", a.ctg, b.ctg, a.cost),
                ] {
                    if (ann - step_val - nxt).abs() > 1e-9 {
                        return Err(SlError::BadAnnotation {
                            step: i,
                            detail: format!("{name} {ann} != {step_val} + {nxt}"),
                        });
                    }
                }
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            let last_of_episode =
                self.steps.get(i + 1).map_or(true, |n| n.episode != s.episode);
            if last_of_episode
                && ((s.rtg - s.reward).abs() > 1e-9 || (s.ctg - s.cost).abs() > 1e-9)
            {
                return Err(SlError::BadAnnotation {
                    step: i,
                    detail: "episode tail annotation must equal its own step".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SlDataset {
    pub trajectories: Vec<SlTrajectory>,
}

impl SlDataset {
    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(|t| t.steps.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// Source learner.

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QLearnerConfig {
    pub lr: f64,
    pub gamma: f64,
    pub lambda_lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Episodes over which epsilon decays linearly.
    pub eps_decay_episodes: usize,
}

impl Default for QLearnerConfig {
    fn default() -> Self {
        Self {
            lr: 0.2,
            gamma: 0.99,
            lambda_lr: 0.05,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_episodes: 40,
        }
    }
}

/// Tabular Lagrangian Q-learning over grid-cell states.
pub struct LagrangianQLearner {
    cfg: QLearnerConfig,
    cost_limit: f64,
    q: Vec<[f64; 5]>,
    qc: Vec<[f64; 5]>,
    lambda: f64,
    episodes_done: usize,
}

impl LagrangianQLearner {
    pub fn new(n_states: usize, cost_limit: f64, cfg: QLearnerConfig) -> Self {
        Self {
            cfg,
            cost_limit,
            q: vec![[0.0; 5]; n_states],
            qc: vec![[0.0; 5]; n_states],
            lambda: 0.0,
            episodes_done: 0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        let frac =
            (self.episodes_done as f64 / self.cfg.eps_decay_episodes.max(1) as f64).min(1.0);
        self.cfg.eps_start + frac * (self.cfg.eps_end - self.cfg.eps_start)
    }

    fn greedy(&self, state: usize) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for a in 0..5 {
            let v = self.q[state][a] - self.lambda * self.qc[state][a];
            if v > best_v {
                best_v = v;
                best = a;
            }
        }
        best
    }

    pub fn act<R: Rng>(&self, state: usize, rng: &mut R) -> usize {
        if rng.gen::<f64>() < self.epsilon() {
            rng.gen_range(0..5)
        } else {
            self.greedy(state)
        }
    }

    pub fn observe(&mut self, s: usize, a: usize, r: f64, c: f64, s2: usize, done: bool) {
        let (boot_r, boot_c) = if done {
            (0.0, 0.0)
        } else {
            let g = self.greedy(s2);
            (self.q[s2][g], self.qc[s2][g])
        };
        self.q[s][a] += self.cfg.lr * (r + self.cfg.gamma * boot_r - self.q[s][a]);
        self.qc[s][a] += self.cfg.lr * (c + self.cfg.gamma * boot_c - self.qc[s][a]);
    }

    pub fn end_episode(&mut self, total_cost: f64) {
        self.lambda = hinge(self.lambda + self.cfg.lambda_lr * (total_cost - self.cost_limit));
        self.episodes_done += 1;
    }
}

// ---------------------------------------------------------------------------
// Dataset generation.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub grid_size: usize,
    pub n_obstacles: usize,
    pub time_limit: usize,
    pub alpha: f64,
    pub cost_limits: Vec<f64>,
    /// Logged environment steps per cost limit.
    pub steps_per_limit: usize,
    /// Learner episodes per sampled task (one trajectory).
    pub episodes_per_task: usize,
    pub learner: QLearnerConfig,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            grid_size: 5,
            n_obstacles: 6,
            time_limit: 12,
            alpha: 0.5,
            cost_limits: vec![0.0, 2.5, 5.0],
            steps_per_limit: 5_000,
            episodes_per_task: 60,
            learner: QLearnerConfig::default(),
            seed: 0,
        }
    }
}

fn annotate(steps: &mut [SlStep]) {
    let mut i = steps.len();
    let mut rtg = 0.0;
    let mut ctg = 0.0;
    let mut episode = usize::MAX;
    while i > 0 {
        i -= 1;
        if steps[i].episode != episode {
            episode = steps[i].episode;
            rtg = 0.0;
            ctg = 0.0;
        }
        rtg += steps[i].reward;
        ctg += steps[i].cost;
        steps[i].rtg = rtg;
        steps[i].ctg = ctg;
    }
}

fn run_learner_trajectory<R: Rng>(
    task: TaskSpec,
    cost_limit: f64,
    cfg: &GenConfig,
    rng: &mut R,
) -> SlTrajectory {
    let g = task.grid_size();
    let mut learner = LagrangianQLearner::new(g * g, cost_limit, cfg.learner);
    let mut env = DarkRoom::new(task.clone());
    let mut steps = Vec::new();
    for episode in 0..cfg.episodes_per_task {
        let mut pos = env.reset();
        let mut ep_cost = 0.0;
        loop {
            let s = pos.index(g);
            let a = learner.act(s, rng);
            let action = Action::from_id(a).expect("valid action id");
            let (next, r, c, done) = env.step(action).expect("episode running");
            let s2 = next.index(g);
            learner.observe(s, a, r, c, s2, done);
            steps.push(SlStep {
                episode,
                state: s,
                action: a,
                reward: r,
                cost: c,
                next_state: s2,
                done,
                rtg: 0.0,
                ctg: 0.0,
            });
            ep_cost += c;
            pos = next;
            if done {
                break;
            }
        }
        learner.end_episode(ep_cost);
    }
    let mut traj = SlTrajectory { task, cost_limit, steps };
    annotate(&mut traj.steps);
    traj
}

fn learning_signal_check(dataset: &SlDataset, limit: f64) -> Result<(), SlError> {
    let mut first = Vec::new();
    let mut later = Vec::new();
    for traj in dataset.trajectories.iter().filter(|t| t.cost_limit == limit) {
        let returns = traj.episode_returns();
        let cut = (returns.len() / 10).max(1);
        first.extend_from_slice(&returns[..cut]);
        later.extend_from_slice(&returns[cut..]);
    }
    if first.is_empty() || later.is_empty() {
        return Ok(());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mf, ml) = (mean(&first), mean(&later));
    if ml <= mf {
        return Err(SlError::NoLearningSignal { limit, first: mf, later: ml });
    }
    Ok(())
}

/// Generate full learning histories for every cost limit. Rejects the
/// dataset if later episodes do not improve on the first 10%.
pub fn generate_dataset(cfg: &GenConfig) -> Result<SlDataset, SlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dist = build_distribution(cfg.grid_size, cfg.alpha, Orientation::Center)?;
    let mut dataset = SlDataset::default();
    for &limit in &cfg.cost_limits {
        let mut steps = 0usize;
        while steps < cfg.steps_per_limit {
            let task = sample_task(&dist, cfg.n_obstacles, cfg.time_limit, &mut rng)?;
            let traj = run_learner_trajectory(task, limit, cfg, &mut rng);
            steps += traj.steps.len();
            dataset.trajectories.push(traj);
        }
        learning_signal_check(&dataset, limit)?;
    }
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// AD-EPS: artificial histories from a perturbed optimal policy.

/// Deterministic optimal policy under a hard integer cost budget, by
/// dynamic programming over (step, cell, cost spent).
pub struct BudgetPolicy {
    grid_size: usize,
    budget: usize,
    /// `[t][cell][spent] -> action id`
    act: Vec<Vec<Vec<usize>>>,
}

impl BudgetPolicy {
    pub fn new(task: &TaskSpec, budget: usize) -> Self {
        let g = task.grid_size();
        let n = g * g;
        let t_max = task.time_limit();
        let goal = task.goal();
        let step_to = |pos: GridPos, a: usize| {
            let action = Action::from_id(a).unwrap();
            let (dr, dc) = match action {
                Action::Up => (-1i64, 0i64),
                Action::Down => (1, 0),
                Action::Left => (0, -1),
                Action::Right => (0, 1),
                Action::Stay => (0, 0),
            };
            let r = (pos.row as i64 + dr).clamp(0, g as i64 - 1) as usize;
            let c = (pos.col as i64 + dc).clamp(0, g as i64 - 1) as usize;
            GridPos { row: r, col: c }
        };
        let mut value = vec![vec![0.0f64; budget + 1]; n];
        let mut act = vec![vec![vec![Action::Stay.id(); budget + 1]; n]; t_max];
        for t in (0..t_max).rev() {
            let mut next_value = vec![vec![f64::NEG_INFINITY; budget + 1]; n];
            for cell in 0..n {
                let pos = GridPos { row: cell / g, col: cell % g };
                for spent in 0..=budget {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_a = Action::Stay.id();
                    for a in 0..5 {
                        let nxt = step_to(pos, a);
                        let cost = usize::from(task.obstacles().contains(&nxt));
                        if spent + cost > budget {
                            continue;
                        }
                        let v = if nxt == goal {
                            1.0
                        } else if t + 1 < t_max {
                            value[nxt.index(g)][spent + cost]
                        } else {
                            0.0
                        };
                        if v > best {
                            best = v;
                            best_a = a;
                        }
                    }
                    if best == f64::NEG_INFINITY {
                        // over budget whatever we do; minimize further cost
                        best = 0.0;
                        best_a = Action::Stay.id();
                    }
                    next_value[cell][spent] = best;
                    act[t][cell][spent] = best_a;
                }
            }
            value = next_value;
        }
        Self { grid_size: g, budget, act }
    }

    pub fn action(&self, t: usize, pos: GridPos, spent: usize) -> usize {
        self.act[t][pos.index(self.grid_size)][spent.min(self.budget)]
    }
}

/// Artificial learning histories: episode `k` follows the budgeted optimal
/// policy with probability `1 - eps_k`, uniform otherwise, with `eps`
/// decaying linearly from `eps_hi` to `eps_lo` across episodes.
pub fn ad_eps_dataset(cfg: &GenConfig, eps_hi: f64, eps_lo: f64) -> Result<SlDataset, SlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dist = build_distribution(cfg.grid_size, cfg.alpha, Orientation::Center)?;
    let mut dataset = SlDataset::default();
    for &limit in &cfg.cost_limits {
        let mut steps = 0usize;
        while steps < cfg.steps_per_limit {
            let task = sample_task(&dist, cfg.n_obstacles, cfg.time_limit, &mut rng)?;
            let policy = BudgetPolicy::new(&task, limit.floor().max(0.0) as usize);
            let g = task.grid_size();
            let mut env = DarkRoom::new(task.clone());
            let mut traj_steps = Vec::new();
            let k = cfg.episodes_per_task;
            for episode in 0..k {
                let eps = if k <= 1 {
                    eps_lo
                } else {
                    eps_hi + (eps_lo - eps_hi) * episode as f64 / (k - 1) as f64
                };
                let mut pos = env.reset();
                let mut spent = 0usize;
                let mut t = 0usize;
                loop {
                    let a = if rng.gen::<f64>() < eps {
                        rng.gen_range(0..5)
                    } else {
                        policy.action(t, pos, spent)
                    };
                    let action = Action::from_id(a).expect("valid action id");
                    let (next, r, c, done) = env.step(action).expect("episode running");
                    traj_steps.push(SlStep {
                        episode,
                        state: pos.index(g),
                        action: a,
                        reward: r,
                        cost: c,
                        next_state: next.index(g),
                        done,
                        rtg: 0.0,
                        ctg: 0.0,
                    });
                    spent += c as usize;
                    t += 1;
                    pos = next;
                    if done {
                        break;
                    }
                }
            }
            annotate(&mut traj_steps);
            steps += traj_steps.len();
            dataset.trajectories.push(SlTrajectory { task, cost_limit: limit, steps: traj_steps });
        }
    }
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Disk format: one newline-delimited JSON file per trajectory + manifest.

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    task: TaskSpec,
    cost_limit: f64,
    n_steps: usize,
    n_episodes: usize,
    mean_return_first: f64,
    mean_return_last: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: serde_json::Value,
    trajectories: Vec<ManifestEntry>,
}

pub fn save_dataset(
    dir: &Path,
    dataset: &SlDataset,
    config: &serde_json::Value,
) -> Result<(), SlError> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest { config: config.clone(), trajectories: Vec::new() };
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        let file = format!("trajectory_{i:05}.ndjson");
        let mut body = String::new();
        for step in &traj.steps {
            body.push_str(
                &serde_json::to_string(step).map_err(|e| SlError::Decode(e.to_string()))?,
            );
            body.push('\n');
        }
        fs::write(dir.join(&file), body)?;
        let returns = traj.episode_returns();
        let cut = (returns.len() / 10).max(1).min(returns.len());
        let mean = |v: &[f64]| {
            if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
        };
        manifest.trajectories.push(ManifestEntry {
            file,
            task: traj.task.clone(),
            cost_limit: traj.cost_limit,
            n_steps: traj.steps.len(),
            n_episodes: traj.n_episodes(),
            mean_return_first: mean(&returns[..cut]),
            mean_return_last: mean(&returns[returns.len() - cut..]),
        });
    }
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SlError::Decode(e.to_string()))?;
    fs::write(dir.join("manifest.json"), manifest_json)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<SlDataset, SlError> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)
            .map_err(|e| SlError::Decode(e.to_string()))?;
    let mut dataset = SlDataset::default();
    for entry in &manifest.trajectories {
        let body = fs::read_to_string(dir.join(&entry.file))?;
        let mut steps = Vec::with_capacity(entry.n_steps);
        for line in body.lines() {
            steps.push(
                serde_json::from_str(line).map_err(|e| SlError::Decode(e.to_string()))?,
            );
        }
        let traj =
            SlTrajectory { task: entry.task.clone(), cost_limit: entry.cost_limit, steps };
        traj.validate_annotations()?;
        dataset.trajectories.push(traj);
    }
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Context subsampling and imitation losses.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Early,
    Middle,
    Expert,
}

/// Contiguous window of steps starting at an episode boundary, drawn with
/// equal probability mass over the early/middle/expert thirds of the
/// learning history, truncated to `max_len` steps (the cut tail may be a
/// partial episode).
pub fn subsample_context<'a, R: Rng>(
    traj: &'a SlTrajectory,
    max_len: usize,
    rng: &mut R,
) -> Result<(&'a [SlStep], Phase), SlError> {
    let starts = traj.episode_starts();
    if starts.is_empty() {
        return Err(SlError::EmptyTrajectory);
    }
    if max_len >= traj.steps.len() {
        return Ok((&traj.steps, Phase::Early));
    }
    let n = starts.len();
    let phase_id = rng.gen_range(0..3);
    let (lo, hi, phase) = match phase_id {
        0 => (0, n / 3, Phase::Early),
        1 => (n / 3, 2 * n / 3, Phase::Middle),
        _ => (2 * n / 3, n, Phase::Expert),
    };
    let (lo, hi) = if lo >= hi { (0, n) } else { (lo, hi) };
    let start = starts[rng.gen_range(lo..hi)];
    let end = (start + max_len).min(traj.steps.len());
    Ok((&traj.steps[start..end], phase))
}

/// Tokens and logged actions for a training window.
pub fn window_tokens(spec: &ModelSpec, steps: &[SlStep]) -> (Vec<TokenStep>, Vec<usize>) {
    let mut tokens = Vec::with_capacity(steps.len());
    let mut actions = Vec::with_capacity(steps.len());
    let mut prev_action = spec.no_action();
    let mut prev_reward = 0.0;
    let mut prev_cost = 0.0;
    for s in steps {
        tokens.push(TokenStep {
            state: s.state,
            prev_action,
            prev_reward,
            prev_cost,
            rtg: s.rtg,
            ctg: s.ctg,
        });
        actions.push(s.action);
        prev_action = s.action;
        prev_reward = s.reward;
        prev_cost = s.cost;
    }
    (tokens, actions)
}

/// Mean cross-entropy of logged actions under the actor logits.
pub fn sl_loss_discrete(
    tape: &mut Tape,
    logits: NodeId,
    actions: &[usize],
) -> Result<NodeId, NnError> {
    let lsm = tape.log_softmax_rows(logits);
    let picked = tape.pick(lsm, actions)?;
    let mean = tape.mean_all(picked);
    Ok(tape.scale(mean, -1.0))
}

/// Mean squared error per row between predictions and targets (continuous
/// action heads).
pub fn sl_loss_continuous(
    tape: &mut Tape,
    pred: NodeId,
    target: NodeId,
) -> Result<NodeId, NnError> {
    let neg = tape.scale(target, -1.0);
    let diff = tape.add(pred, neg)?;
    let sq = tape.mul(diff, diff)?;
    let (rows, _) = tape.shape(sq);
    let total = tape.sum_all(sq);
    Ok(tape.scale(total, 1.0 / rows as f64))
}

// ---------------------------------------------------------------------------
// Supervised training loop.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SlTrainConfig {
    pub n_updates: usize,
    pub batch_size: usize,
    /// Maximum window length in environment steps.
    pub window_len: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub model: ModelSpec,
}

impl Default for SlTrainConfig {
    fn default() -> Self {
        Self {
            n_updates: 20_000,
            batch_size: 64,
            window_len: 100,
            seed: 0,
            adam: AdamConfig::default(),
            model: ModelSpec {
                embedding_dim: 32,
                hidden_dim: 128,
                n_layers: 4,
                n_heads: 2,
                max_seq_len: 100,
                dropout_attn: 0.0,
                dropout_resid: 0.0,
                dropout_embed: 0.05,
                state_vocab: 25,
                n_actions: 5,
            },
        }
    }
}

pub struct SlTrainOutput {
    pub checkpoint: Checkpoint,
    /// `(step, cross_entropy)` pairs.
    pub losses: Vec<(usize, f64)>,
}

fn batch_loss<R: Rng>(
    model: &Model,
    tape: &mut Tape,
    binding: &Binding,
    windows: &[(Vec<TokenStep>, Vec<usize>)],
    train: bool,
    rng: &mut R,
) -> Result<NodeId, NnError> {
    let mut per_window = Vec::with_capacity(windows.len());
    for (tokens, actions) in windows {
        let out = model.forward_seq(tape, binding, tokens, train, rng)?;
        per_window.push(sl_loss_discrete(tape, out.logits, actions)?);
    }
    let cat = tape.concat_cols(&per_window)?;
    Ok(tape.mean_all(cat))
}

/// Train the sequence model by imitation over subsampled windows.
pub fn train_sl(dataset: &SlDataset, cfg: &SlTrainConfig) -> Result<SlTrainOutput, SlError> {
    if dataset.trajectories.is_empty() {
        return Err(SlError::EmptyTrajectory);
    }
    for traj in &dataset.trajectories {
        traj.validate_annotations()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(cfg.model.clone(), &mut rng)?;
    let mut opt = Adam::new(cfg.adam, &model.params);
    let mut losses = Vec::new();
    for step in 0..cfg.n_updates {
        let mut windows = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let traj = &dataset.trajectories[rng.gen_range(0..dataset.trajectories.len())];
            let (steps, _) = subsample_context(traj, cfg.window_len, &mut rng)?;
            windows.push(window_tokens(&cfg.model, steps));
        }
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let loss = batch_loss(&model, &mut tape, &binding, &windows, true, &mut rng)?;
        let loss_val = tape.value(loss)[0];
        losses.push((step, loss_val));
        tape.backward(loss)?;
        let grads = binding.gradients(&tape, &model.params)?;
        opt.step(&mut model.params, &grads)?;
    }
    Ok(SlTrainOutput {
        checkpoint: Checkpoint {
            spec: model.spec.clone(),
            params: model.params,
            rng: rng.clone(),
            meta: serde_json::json!({"mode": "supervised", "updates": cfg.n_updates}),
        },
        losses,
    })
}
