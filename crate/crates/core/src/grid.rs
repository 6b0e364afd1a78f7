//! SafeDarkRoom grid world: episodes, histories, returns and costs.
//!
//! The agent only observes its own `(row, col)` position. A single reward is
//! given on reaching the goal, which also terminates the episode. Entering an
//! obstacle cell incurs a cost of 1 per entry. Goal and obstacle locations are
//! never part of the observation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("step index {index} out of range for episode of length {len}")]
    StepOutOfRange { index: usize, len: usize },
}

/// A cell on the grid. Row 0 is the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPos {
    pub row: usize,
    pub col: usize,
}

impl GridPos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn in_grid(&self, grid_size: usize) -> bool {
        self.row < grid_size && self.col < grid_size
    }

    /// Flat index used for state encodings.
    pub fn index(&self, grid_size: usize) -> usize {
        self.row * grid_size + self.col
    }
}

/// The five movement actions. `Stay` permits cost-free waiting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

pub const N_ACTIONS: usize = 5;

impl Action {
    pub const ALL: [Action; N_ACTIONS] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn id(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    pub fn from_id(id: usize) -> Option<Action> {
        Action::ALL.get(id).copied()
    }
}

/// A concrete SafeDarkRoom instance.
///
/// Serializes to `{grid_size, start:[r,c], goal:[r,c], obstacles:[[r,c],...], time_limit}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TaskSpecRaw", into = "TaskSpecRaw")]
pub struct TaskSpec {
    grid_size: usize,
    start: GridPos,
    goal: GridPos,
    obstacles: BTreeSet<GridPos>,
    time_limit: usize,
}

#[derive(Serialize, Deserialize)]
struct TaskSpecRaw {
    grid_size: usize,
    start: [usize; 2],
    goal: [usize; 2],
    obstacles: Vec<[usize; 2]>,
    time_limit: usize,
}

impl TryFrom<TaskSpecRaw> for TaskSpec {
    type Error = GridError;

    fn try_from(raw: TaskSpecRaw) -> Result<Self, GridError> {
        TaskSpec::new(
            raw.grid_size,
            GridPos::new(raw.goal[0], raw.goal[1]),
            raw.obstacles
                .into_iter()
                .map(|[r, c]| GridPos::new(r, c))
                .collect(),
            raw.time_limit,
        )
        .and_then(|spec| {
            let start = GridPos::new(raw.start[0], raw.start[1]);
            if start != spec.start {
                Err(GridError::InvalidTask("start must be the map center".into()))
            } else {
                Ok(spec)
            }
        })
    }
}

impl From<TaskSpec> for TaskSpecRaw {
    fn from(spec: TaskSpec) -> Self {
        TaskSpecRaw {
            grid_size: spec.grid_size,
            start: [spec.start.row, spec.start.col],
            goal: [spec.goal.row, spec.goal.col],
            obstacles: spec.obstacles.iter().map(|p| [p.row, p.col]).collect(),
            time_limit: spec.time_limit,
        }
    }
}

/// Integer center cell used as the spawn position.
pub fn center_cell(grid_size: usize) -> GridPos {
    GridPos::new((grid_size - 1) / 2, (grid_size - 1) / 2)
}

impl TaskSpec {
    /// Builds a task. The start is always the map center; the goal may not sit
    /// on the start or on an obstacle, and the start may not hold an obstacle.
    pub fn new(
        grid_size: usize,
        goal: GridPos,
        obstacles: BTreeSet<GridPos>,
        time_limit: usize,
    ) -> Result<Self, GridError> {
        if grid_size < 2 {
            return Err(GridError::InvalidTask("grid_size must be at least 2".into()));
        }
        if time_limit < 1 {
            return Err(GridError::InvalidTask("time_limit must be at least 1".into()));
        }
        let start = center_cell(grid_size);
        if !goal.in_grid(grid_size) {
            return Err(GridError::InvalidTask("goal outside grid".into()));
        }
        if goal == start {
            return Err(GridError::InvalidTask("goal may not be the start cell".into()));
        }
        for p in &obstacles {
            if !p.in_grid(grid_size) {
                return Err(GridError::InvalidTask("obstacle outside grid".into()));
            }
        }
        if obstacles.contains(&goal) {
            return Err(GridError::InvalidTask("goal may not be an obstacle".into()));
        }
        if obstacles.contains(&start) {
            return Err(GridError::InvalidTask("start may not be an obstacle".into()));
        }
        Ok(Self { grid_size, start, goal, obstacles, time_limit })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn start(&self) -> GridPos {
        self.start
    }

    pub fn goal(&self) -> GridPos {
        self.goal
    }

    pub fn obstacles(&self) -> &BTreeSet<GridPos> {
        &self.obstacles
    }

    pub fn time_limit(&self) -> usize {
        self.time_limit
    }

    pub fn n_states(&self) -> usize {
        self.grid_size * self.grid_size
    }
}

/// One environment step as stored in episode logs.
///
/// `ctg_at_step` is the remaining cost budget when the action was taken; it is
/// bookkeeping filled in by collectors, not part of the environment dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: GridPos,
    pub action: Action,
    pub reward: f64,
    pub cost: f64,
    pub next_state: GridPos,
    pub done: bool,
    pub ctg_at_step: f64,
}

/// A complete or partial episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub task_id: u64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Sum of rewards and sum of costs.
    pub fn totals(&self) -> (f64, f64) {
        let ret: f64 = self.transitions.iter().map(|t| t.reward).sum();
        let cost: f64 = self.transitions.iter().map(|t| t.cost).sum();
        (ret, cost)
    }

    /// Return-to-go and cost-to-go after step `t`: suffix sums over the
    /// transitions strictly after index `t`.
    pub fn to_go(&self, t: usize) -> Result<(f64, f64), GridError> {
        if t >= self.transitions.len() {
            return Err(GridError::StepOutOfRange { index: t, len: self.transitions.len() });
        }
        let rtg: f64 = self.transitions[t + 1..].iter().map(|x| x.reward).sum();
        let ctg: f64 = self.transitions[t + 1..].iter().map(|x| x.cost).sum();
        Ok((rtg, ctg))
    }
}

/// Multi-episode context: completed episodes plus the current partial one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub episodes: Vec<Episode>,
    pub current: Episode,
}

impl History {
    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum::<usize>() + self.current.len()
    }

    /// Completed episodes followed by the current partial episode, flattened.
    pub fn iter_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes
            .iter()
            .flat_map(|e| e.transitions.iter())
            .chain(self.current.transitions.iter())
    }

    /// Finish the current episode and start a fresh one.
    pub fn commit_current(&mut self) {
        let done = std::mem::take(&mut self.current);
        if !done.is_empty() {
            self.episodes.push(done);
        }
    }

    /// Drop oldest complete episodes until the total length fits `max_len`.
    /// Episodes are never split.
    pub fn evict_to_fit(&mut self, max_len: usize) {
        while self.total_transitions() > max_len && !self.episodes.is_empty() {
            self.episodes.remove(0);
        }
    }
}

/// A SafeDarkRoom environment instance. Not safe for concurrent stepping;
/// callers serialize steps per instance.
#[derive(Debug, Clone)]
pub struct DarkRoom {
    task: TaskSpec,
    pos: GridPos,
    steps: usize,
    done: bool,
}

impl DarkRoom {
    pub fn new(task: TaskSpec) -> Self {
        let pos = task.start();
        Self { task, pos, steps: 0, done: false }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    /// Reset to the start cell and return the initial observation.
    pub fn reset(&mut self) -> GridPos {
        self.pos = self.task.start();
        self.steps = 0;
        self.done = false;
        self.pos
    }

    pub fn position(&self) -> GridPos {
        self.pos
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Move one cell in the action direction, clamped at the boundary.
    /// Cost is assessed on the cell entered (including via `Stay`).
    pub fn step(&mut self, action: Action) -> Result<(GridPos, f64, f64, bool), GridError> {
        if self.done {
            return Err(GridError::EpisodeFinished);
        }
        let g = self.task.grid_size();
        let (r, c) = (self.pos.row as isize, self.pos.col as isize);
        let (nr, nc) = match action {
            Action::Up => (r - 1, c),
            Action::Down => (r + 1, c),
            Action::Left => (r, c - 1),
            Action::Right => (r, c + 1),
            Action::Stay => (r, c),
        };
        let next = GridPos::new(
            nr.clamp(0, g as isize - 1) as usize,
            nc.clamp(0, g as isize - 1) as usize,
        );
        self.pos = next;
        self.steps += 1;
        let reward = if next == self.task.goal() { 1.0 } else { 0.0 };
        let cost = if self.task.obstacles().contains(&next) { 1.0 } else { 0.0 };
        let done = reward > 0.0 || self.steps >= self.task.time_limit();
        self.done = done;
        Ok((next, reward, cost, done))
    }
}

/// Write an episode as newline-delimited JSON, one transition per line.
pub fn write_episode_ndjson<W: std::io::Write>(
    w: &mut W,
    episode: &Episode,
) -> std::io::Result<()> {
    for t in &episode.transitions {
        serde_json::to_writer(&mut *w, t)?;
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task_5x5(goal: (usize, usize), obstacles: &[(usize, usize)]) -> TaskSpec {
        TaskSpec::new(
            5,
            GridPos::new(goal.0, goal.1),
            obstacles.iter().map(|&(r, c)| GridPos::new(r, c)).collect(),
            12,
        )
        .unwrap()
    }

    #[test]
    fn reset_returns_center() {
        let t9 = TaskSpec::new(9, GridPos::new(0, 0), BTreeSet::new(), 30).unwrap();
        let mut env = DarkRoom::new(t9);
        assert_eq!(env.reset(), GridPos::new(4, 4));

        let mut env5 = DarkRoom::new(task_5x5((0, 0), &[]));
        assert_eq!(env5.reset(), GridPos::new(2, 2));
        // reset is deterministic
        assert_eq!(env5.reset(), env5.reset());
    }

    #[test]
    fn boundary_clamp() {
        let mut env = DarkRoom::new(task_5x5((4, 4), &[]));
        env.reset();
        // walk to the top-left corner, then push against the wall
        for _ in 0..2 {
            env.step(Action::Up).unwrap();
            env.step(Action::Left).unwrap();
        }
        assert_eq!(env.position(), GridPos::new(0, 0));
        let (obs, reward, _, _) = env.step(Action::Up).unwrap();
        assert_eq!(obs, GridPos::new(0, 0));
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn obstacle_incurs_cost_without_termination() {
        let mut env = DarkRoom::new(task_5x5((0, 0), &[(2, 3)]));
        env.reset();
        let (obs, reward, cost, done) = env.step(Action::Right).unwrap();
        assert_eq!(obs, GridPos::new(2, 3));
        assert_eq!((reward, cost, done), (0.0, 1.0, false));
        // staying on the obstacle re-enters it and costs again
        let (_, _, cost2, _) = env.step(Action::Stay).unwrap();
        assert_eq!(cost2, 1.0);
    }

    #[test]
    fn goal_gives_reward_and_terminates() {
        let mut env = DarkRoom::new(task_5x5((2, 3), &[]));
        env.reset();
        let (obs, reward, cost, done) = env.step(Action::Right).unwrap();
        assert_eq!(obs, GridPos::new(2, 3));
        assert_eq!((reward, cost, done), (1.0, 0.0, true));
        assert_eq!(env.step(Action::Stay), Err(GridError::EpisodeFinished));
    }

    #[test]
    fn time_limit_terminates() {
        let mut env = DarkRoom::new(task_5x5((0, 0), &[]));
        env.reset();
        for i in 0..12 {
            let (_, _, _, done) = env.step(Action::Stay).unwrap();
            assert_eq!(done, i == 11);
        }
    }

    fn episode_from(rewards: &[f64], costs: &[f64]) -> Episode {
        let transitions = rewards
            .iter()
            .zip(costs)
            .map(|(&reward, &cost)| Transition {
                state: GridPos::new(0, 0),
                action: Action::Stay,
                reward,
                cost,
                next_state: GridPos::new(0, 0),
                done: false,
                ctg_at_step: 0.0,
            })
            .collect();
        Episode { transitions, task_id: 0 }
    }

    #[test]
    fn episode_totals() {
        let e = episode_from(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]);
        assert_eq!(e.totals(), (1.0, 1.0));
        assert_eq!(Episode::default().totals(), (0.0, 0.0));
    }

    #[test]
    fn to_go_suffix_sums() {
        let e = episode_from(&[0.0, 0.0, 1.0], &[1.0, 1.0, 0.0]);
        assert_eq!(e.to_go(0).unwrap(), (1.0, 1.0));
        // ctg(1) consumes only the final transition's cost
        assert_eq!(e.to_go(1).unwrap(), (1.0, 0.0));
        assert_eq!(e.to_go(2).unwrap(), (0.0, 0.0));
        assert!(matches!(e.to_go(3), Err(GridError::StepOutOfRange { .. })));
    }

    #[test]
    fn task_spec_json_round_trip() {
        let task = task_5x5((0, 4), &[(1, 1), (3, 2)]);
        let json = serde_json::to_string(&task).unwrap();
        assert!(json.contains("\"grid_size\":5"));
        let back: TaskSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(task, back);
    }

    #[test]
    fn invalid_tasks_rejected() {
        assert!(TaskSpec::new(5, GridPos::new(2, 2), BTreeSet::new(), 12).is_err());
        let obs: BTreeSet<_> = [GridPos::new(0, 0)].into();
        assert!(TaskSpec::new(5, GridPos::new(0, 0), obs, 12).is_err());
        let obs: BTreeSet<_> = [GridPos::new(2, 2)].into();
        assert!(TaskSpec::new(5, GridPos::new(0, 0), obs, 12).is_err());
        assert!(TaskSpec::new(5, GridPos::new(0, 0), BTreeSet::new(), 0).is_err());
    }

    #[test]
    fn history_eviction_is_episode_granular() {
        let mut h = History::default();
        for _ in 0..3 {
            h.current = episode_from(&[0.0; 4], &[0.0; 4]);
            h.commit_current();
        }
        h.current = episode_from(&[0.0; 2], &[0.0; 2]);
        assert_eq!(h.total_transitions(), 14);
        h.evict_to_fit(10);
        assert_eq!(h.episodes.len(), 2);
        assert_eq!(h.total_transitions(), 10);
    }
}
