//! Center- and edge-oriented task distributions and their exact divergences.
//!
//! Cell probabilities are proportional to `exp(-alpha * d^2)` (center) or
//! `exp(alpha * d^2)` (edge), where `d^2` is the squared Euclidean distance to
//! the map center. Pretraining draws tasks from the center orientation;
//! evaluation from the edge orientation. Total variation and KL between the two
//! are computed by exact summation, certifying the train/test separation.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{center_cell, GridPos, TaskSpec};

#[derive(Debug, Error, PartialEq)]
pub enum TaskGenError {
    #[error("alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("grid_size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("cannot place {requested} obstacles plus start and goal on a {grid_size}x{grid_size} grid")]
    TooManyObstacles { requested: usize, grid_size: usize },
    #[error("mismatched grids: {0} vs {1}")]
    GridMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Center,
    Edge,
}

/// A normalized spawn distribution over grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SpawnDistribution {
    grid_size: usize,
    alpha: f64,
    orientation: Orientation,
    /// Row-major cell probabilities; sums to 1.
    probs: Vec<f64>,
}

/// Build the normalized table. The center is the exact half-integer center
/// `((gs-1)/2, (gs-1)/2)`, so even grid sizes are handled without bias.
pub fn build_distribution(
    grid_size: usize,
    alpha: f64,
    orientation: Orientation,
) -> Result<SpawnDistribution, TaskGenError> {
    if grid_size < 2 {
        return Err(TaskGenError::GridTooSmall(grid_size));
    }
    if !(alpha > 0.0) {
        return Err(TaskGenError::NonPositiveAlpha(alpha));
    }
    let center = (grid_size as f64 - 1.0) / 2.0;
    let sign = match orientation {
        Orientation::Center => -1.0,
        Orientation::Edge => 1.0,
    };
    // Work in log space: exp(alpha * d^2) overflows for large alpha otherwise.
    let mut logits = Vec::with_capacity(grid_size * grid_size);
    for row in 0..grid_size {
        for col in 0..grid_size {
            let d2 = (row as f64 - center).powi(2) + (col as f64 - center).powi(2);
            logits.push(sign * alpha * d2);
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    Ok(SpawnDistribution { grid_size, alpha, orientation, probs })
}

impl SpawnDistribution {
    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn prob(&self, pos: GridPos) -> f64 {
        self.probs[pos.index(self.grid_size)]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Dump the probability grid as CSV, one row per grid row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in 0..self.grid_size {
            let cells: Vec<String> = (0..self.grid_size)
                .map(|col| format!("{:.17e}", self.probs[row * self.grid_size + col]))
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Draw one cell from `weights` restricted to cells not in `taken`,
/// renormalizing over the remaining mass.
fn draw_excluding<R: Rng>(
    dist: &SpawnDistribution,
    taken: &BTreeSet<GridPos>,
    rng: &mut R,
) -> GridPos {
    let g = dist.grid_size;
    let total: f64 = (0..g * g)
        .filter(|&i| !taken.contains(&GridPos::new(i / g, i % g)))
        .map(|i| dist.probs[i])
        .sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = None;
    for i in 0..g * g {
        let pos = GridPos::new(i / g, i % g);
        if taken.contains(&pos) {
            continue;
        }
        last = Some(pos);
        u -= dist.probs[i];
        if u <= 0.0 {
            return pos;
        }
    }
    last.expect("at least one free cell")
}

/// Sample a task: obstacles without replacement from the distribution
/// (excluding the start cell), then the goal excluding start and obstacles.
/// The start is always the map center.
pub fn sample_task<R: Rng>(
    dist: &SpawnDistribution,
    n_obstacles: usize,
    time_limit: usize,
    rng: &mut R,
) -> Result<TaskSpec, TaskGenError> {
    let g = dist.grid_size;
    if n_obstacles + 2 > g * g {
        return Err(TaskGenError::TooManyObstacles { requested: n_obstacles, grid_size: g });
    }
    let start = center_cell(g);
    let mut taken: BTreeSet<GridPos> = [start].into();
    let mut obstacles = BTreeSet::new();
    for _ in 0..n_obstacles {
        let cell = draw_excluding(dist, &taken, rng);
        taken.insert(cell);
        obstacles.insert(cell);
    }
    let goal = draw_excluding(dist, &taken, rng);
    Ok(TaskSpec::new(g, goal, obstacles, time_limit).expect("sampled task is valid"))
}

/// Exact total variation distance: `0.5 * sum |p - q|`.
pub fn tv_distance(p: &SpawnDistribution, q: &SpawnDistribution) -> Result<f64, TaskGenError> {
    if p.grid_size != q.grid_size {
        return Err(TaskGenError::GridMismatch(p.grid_size, q.grid_size));
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Exact KL divergence `sum p log(p/q)`. Finite alpha keeps `q` strictly
/// positive, so no special casing is needed.
pub fn kl_divergence(p: &SpawnDistribution, q: &SpawnDistribution) -> Result<f64, TaskGenError> {
    if p.grid_size != q.grid_size {
        return Err(TaskGenError::GridMismatch(p.grid_size, q.grid_size));
    }
    Ok(p
        .probs
        .iter()
        .zip(&q.probs)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum())
}

/// Divergence certificate of an evaluation suite versus its paired
/// pretraining distribution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DivergenceCertificate {
    pub tv: f64,
    pub kl: f64,
}

/// A set of sampled tasks plus the metadata needed to audit its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSuite {
    pub alpha: f64,
    pub orientation: Orientation,
    pub certificate: DivergenceCertificate,
    pub tasks: Vec<TaskSpec>,
}

/// Sample `n_tasks` tasks from the given orientation and attach the exact
/// divergence of that orientation versus the center-oriented distribution.
pub fn generate_suite<R: Rng>(
    grid_size: usize,
    alpha: f64,
    orientation: Orientation,
    n_tasks: usize,
    n_obstacles: usize,
    time_limit: usize,
    rng: &mut R,
) -> Result<TaskSuite, TaskGenError> {
    let dist = build_distribution(grid_size, alpha, orientation)?;
    let center = build_distribution(grid_size, alpha, Orientation::Center)?;
    let certificate = DivergenceCertificate {
        tv: tv_distance(&center, &dist)?,
        kl: kl_divergence(&center, &dist)?,
    };
    let tasks = (0..n_tasks)
        .map(|_| sample_task(&dist, n_obstacles, time_limit, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TaskSuite { alpha, orientation, certificate, tasks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_distribution(9, 0.0, Orientation::Center).is_err());
        assert!(build_distribution(9, -1.0, Orientation::Center).is_err());
        assert!(build_distribution(1, 1.0, Orientation::Center).is_err());
    }

    #[test]
    fn tiny_alpha_is_nearly_uniform() {
        let d = build_distribution(7, 1e-9, Orientation::Center).unwrap();
        for &p in d.probs() {
            assert_relative_eq!(p, 1.0 / 49.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn center_orientation_peaks_at_center() {
        let d = build_distribution(9, 1.0, Orientation::Center).unwrap();
        let center = d.prob(GridPos::new(4, 4));
        for row in 0..9 {
            for col in 0..9 {
                if (row, col) != (4, 4) {
                    assert!(d.prob(GridPos::new(row, col)) < center);
                }
            }
        }
    }

    #[test]
    fn three_by_three_center_corner_ratio() {
        // corner d^2 = 2, center d^2 = 0, so the ratio is e^{alpha * 2}.
        let d = build_distribution(3, 1.0, Orientation::Center).unwrap();
        let ratio = d.prob(GridPos::new(1, 1)) / d.prob(GridPos::new(0, 0));
        assert_relative_eq!(ratio, (2.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn normalization_within_1e12() {
        for &alpha in &[0.25, 0.5, 1.0, 2.0, 5.0, 10.0] {
            for orientation in [Orientation::Center, Orientation::Edge] {
                let d = build_distribution(9, alpha, orientation).unwrap();
                assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dihedral_symmetry() {
        let d = build_distribution(8, 0.7, Orientation::Edge).unwrap();
        let g = 8;
        for row in 0..g {
            for col in 0..g {
                let p = d.prob(GridPos::new(row, col));
                // reflections about both axes and the transpose
                for &(r2, c2) in &[
                    (g - 1 - row, col),
                    (row, g - 1 - col),
                    (col, row),
                    (g - 1 - col, g - 1 - row),
                ] {
                    assert_relative_eq!(p, d.prob(GridPos::new(r2, c2)), max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn sample_task_counts_and_determinism() {
        let d = build_distribution(9, 0.5, Orientation::Center).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let task = sample_task(&d, 25, 30, &mut rng).unwrap();
        assert_eq!(task.obstacles().len(), 25);
        assert!(!task.obstacles().contains(&task.start()));
        assert!(!task.obstacles().contains(&task.goal()));

        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let task2 = sample_task(&d, 25, 30, &mut rng2).unwrap();
        assert_eq!(task, task2);

        let empty = sample_task(&d, 0, 30, &mut rng).unwrap();
        assert!(empty.obstacles().is_empty());

        assert!(sample_task(&d, 80, 30, &mut rng).is_err());
    }

    #[test]
    fn tv_identity_and_bounds() {
        let p = build_distribution(9, 1.0, Orientation::Center).unwrap();
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

        let q5 = build_distribution(5, 1.0, Orientation::Edge).unwrap();
        assert!(tv_distance(&p, &q5).is_err());
    }

    // Two cells at squared distances {0, 1} from the center: with
    // alpha = ln 3 the center-oriented law is (3/4, 1/4) and the
    // edge-oriented law is (1/4, 3/4). Closed forms:
    //   TV = 1/2,  KL = (3/4) ln 3 + (1/4) ln(1/3) = (1/2) ln 3.
    // Realized on a 1x2 line via the same exponent formula.
    fn two_cell(alpha_sign: f64) -> Vec<f64> {
        let alpha = 3.0f64.ln();
        let w: Vec<f64> = [0.0, 1.0].iter().map(|d2| (alpha_sign * alpha * d2).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    }

    #[test]
    fn two_cell_closed_forms() {
        let p = two_cell(-1.0);
        let q = two_cell(1.0);
        assert_relative_eq!(p[0], 0.75, max_relative = 1e-14);
        assert_relative_eq!(q[0], 0.25, max_relative = 1e-14);
        let tv = 0.5 * ((p[0] - q[0]).abs() + (p[1] - q[1]).abs());
        let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
        assert_relative_eq!(tv, 0.5, max_relative = 1e-12);
        assert_relative_eq!(kl, 0.5 * 3.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn divergences_monotone_in_alpha_and_large_at_alpha_ten() {
        let alphas = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0];
        let mut prev_tv = 0.0;
        let mut prev_kl = 0.0;
        for &alpha in &alphas {
            let p = build_distribution(9, alpha, Orientation::Center).unwrap();
            let q = build_distribution(9, alpha, Orientation::Edge).unwrap();
            let tv = tv_distance(&p, &q).unwrap();
            let kl = kl_divergence(&p, &q).unwrap();
            assert!(tv >= prev_tv, "TV not monotone at alpha {alpha}");
            assert!(kl >= prev_kl, "KL not monotone at alpha {alpha}");
            assert!((0.0..=1.0).contains(&tv));
            prev_tv = tv;
            prev_kl = kl;
        }
        assert!(prev_tv >= 0.999);
        assert!(prev_kl >= 10.0);
    }

    #[test]
    fn empirical_cell_frequency_matches_probs() {
        let d = build_distribution(5, 0.5, Orientation::Center).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000usize;
        let mut counts = vec![0usize; 25];
        let empty = BTreeSet::new();
        for _ in 0..n {
            let cell = draw_excluding(&d, &empty, &mut rng);
            counts[cell.index(5)] += 1;
        }
        for i in 0..25 {
            let p = d.probs()[i];
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = counts[i] as f64 / n as f64;
            assert!(
                (freq - p).abs() <= 3.0 * se + 1e-9,
                "cell {i}: freq {freq} vs prob {p}"
            );
        }
    }

    #[test]
    fn suite_has_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let suite =
            generate_suite(9, 10.0, Orientation::Edge, 4, 25, 30, &mut rng).unwrap();
        assert_eq!(suite.tasks.len(), 4);
        assert!(suite.certificate.tv >= 0.999);
        let json = serde_json::to_string(&suite).unwrap();
        let back: TaskSuite = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tasks, suite.tasks);
    }

    #[test]
    fn csv_dump_shape() {
        let d = build_distribution(3, 1.0, Orientation::Center).unwrap();
        let csv = d.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 3);
    }
}
