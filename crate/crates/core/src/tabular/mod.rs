//! Exact solvers for small finite-horizon tabular CMDPs.
//!
//! These are the ground truth for the penalty iteration: policy evaluation by
//! dynamic programming, the constrained optimum by a time-expanded
//! occupancy-measure LP, and exhaustive search over deterministic
//! time-indexed policies.

mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use simplex::{solve_lp_max, LpError, LpOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum TabularError {
    #[error("invalid CMDP: {0}")]
    InvalidModel(String),
    #[error("policy shape does not match CMDP ({0})")]
    ShapeMismatch(String),
    #[error("instance too large for exhaustive search: {0} policies exceed the guard of {1}")]
    TooLarge(u128, u128),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// An explicit finite-horizon CMDP with dense tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`
    pub reward: Vec<Vec<f64>>,
    /// `cost[s][a]`
    pub cost: Vec<Vec<f64>>,
    /// Initial state distribution.
    pub initial: Vec<f64>,
    pub horizon: usize,
}

/// A time-indexed stochastic policy `probs[t][s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl TabularPolicy {
    /// Deterministic policy from per-(t, s) action choices.
    pub fn deterministic(choices: &[Vec<usize>], n_actions: usize) -> Self {
        let probs = choices
            .iter()
            .map(|per_state| {
                per_state
                    .iter()
                    .map(|&a| {
                        let mut row = vec![0.0; n_actions];
                        row[a] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        Self { probs }
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }
}

/// Exact LP solution of the constrained problem.
#[derive(Debug, Clone)]
pub enum ConstrainedSolution {
    Optimal {
        j_star: f64,
        /// `occupancy[t][s][a]`
        occupancy: Vec<Vec<Vec<f64>>>,
        /// Minimal optimal dual value of the cost constraint.
        lambda_star: f64,
    },
    Infeasible,
}

impl TabularCmdp {
    /// Check the structural invariants: stochastic transition rows, a proper
    /// initial distribution, and finite tables.
    pub fn validate(&self) -> Result<(), TabularError> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 || self.horizon == 0 {
            return Err(TabularError::InvalidModel("empty dimensions".into()));
        }
        let check_table = |t: &Vec<Vec<f64>>, name: &str| -> Result<(), TabularError> {
            if t.len() != ns || t.iter().any(|row| row.len() != na) {
                return Err(TabularError::InvalidModel(format!("{name} has wrong shape")));
            }
            if t.iter().flatten().any(|v| !v.is_finite()) {
                return Err(TabularError::InvalidModel(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        check_table(&self.reward, "reward")?;
        check_table(&self.cost, "cost")?;
        if self.transition.len() != ns {
            return Err(TabularError::InvalidModel("transition has wrong shape".into()));
        }
        for (s, per_a) in self.transition.iter().enumerate() {
            if per_a.len() != na {
                return Err(TabularError::InvalidModel("transition has wrong shape".into()));
            }
            for (a, row) in per_a.iter().enumerate() {
                if row.len() != ns {
                    return Err(TabularError::InvalidModel("transition has wrong shape".into()));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < -1e-12) {
                    return Err(TabularError::InvalidModel(format!(
                        "transition[{s}][{a}] is not a distribution"
                    )));
                }
            }
        }
        if self.initial.len() != ns
            || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9
            || self.initial.iter().any(|&p| p < -1e-12)
        {
            return Err(TabularError::InvalidModel("initial is not a distribution".into()));
        }
        Ok(())
    }

    fn check_policy(&self, pi: &TabularPolicy) -> Result<(), TabularError> {
        if pi.probs.len() != self.horizon {
            return Err(TabularError::ShapeMismatch(format!(
                "policy horizon {} vs {}",
                pi.probs.len(),
                self.horizon
            )));
        }
        for per_s in &pi.probs {
            if per_s.len() != self.n_states || per_s.iter().any(|row| row.len() != self.n_actions) {
                return Err(TabularError::ShapeMismatch("state/action dims".into()));
            }
        }
        Ok(())
    }

    /// Exact expected return and expected cost of a policy by forward DP.
    pub fn evaluate_policy(&self, pi: &TabularPolicy) -> Result<(f64, f64), TabularError> {
        self.check_policy(pi)?;
        let occ = self.occupancy_of(pi)?;
        let mut j = 0.0;
        let mut jc = 0.0;
        for per_s in &occ {
            for (s, per_a) in per_s.iter().enumerate() {
                for (a, &mu) in per_a.iter().enumerate() {
                    j += mu * self.reward[s][a];
                    jc += mu * self.cost[s][a];
                }
            }
        }
        Ok((j, jc))
    }

    /// Occupancy measure `mu[t][s][a]` induced by a policy.
    pub fn occupancy_of(&self, pi: &TabularPolicy) -> Result<Vec<Vec<Vec<f64>>>, TabularError> {
        self.check_policy(pi)?;
        let mut dist = self.initial.clone();
        let mut occ = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            let mut mu_t = vec![vec![0.0; self.n_actions]; self.n_states];
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    mu_t[s][a] = dist[s] * pi.probs[t][s][a];
                }
            }
            let mut next = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    let mass = mu_t[s][a];
                    if mass > 0.0 {
                        for (s2, &p) in self.transition[s][a].iter().enumerate() {
                            next[s2] += mass * p;
                        }
                    }
                }
            }
            occ.push(mu_t);
            dist = next;
        }
        Ok(occ)
    }

    /// Unconstrained finite-horizon DP under an arbitrary per-(s, a) payoff.
    /// Returns the optimal value and a greedy deterministic policy.
    pub fn dp_optimum(&self, payoff: &dyn Fn(usize, usize) -> f64) -> (f64, TabularPolicy) {
        let mut value = vec![0.0; self.n_states];
        let mut choices = vec![vec![0usize; self.n_states]; self.horizon];
        for t in (0..self.horizon).rev() {
            let mut new_value = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for a in 0..self.n_actions {
                    let q = payoff(s, a)
                        + self.transition[s][a]
                            .iter()
                            .zip(&value)
                            .map(|(&p, &v)| p * v)
                            .sum::<f64>();
                    if q > best {
                        best = q;
                        best_a = a;
                    }
                }
                new_value[s] = best;
                choices[t][s] = best_a;
            }
            value = new_value;
        }
        let v0: f64 = self.initial.iter().zip(&value).map(|(&p, &v)| p * v).sum();
        (v0, TabularPolicy::deterministic(&choices, self.n_actions))
    }

    /// Optimal unconstrained expected return.
    pub fn dp_reward_optimum(&self) -> (f64, TabularPolicy) {
        self.dp_optimum(&|s, a| self.reward[s][a])
    }

    /// Solve the time-expanded occupancy-measure LP:
    /// `max sum mu r` subject to flow conservation, the initial-distribution
    /// rows, `sum mu c <= delta`, and `mu >= 0`.
    pub fn solve_constrained_lp(&self, delta: f64) -> Result<ConstrainedSolution, TabularError> {
        self.validate()?;
        let (ns, na, t_max) = (self.n_states, self.n_actions, self.horizon);
        let n_mu = t_max * ns * na;
        let n_vars = n_mu + 1; // + cost slack
        let idx = |t: usize, s: usize, a: usize| (t * ns + s) * na + a;

        let mut a_mat: Vec<Vec<f64>> = Vec::new();
        let mut b_vec: Vec<f64> = Vec::new();
        // initial rows: sum_a mu_0(s, a) = p0(s)
        for s in 0..ns {
            let mut row = vec![0.0; n_vars];
            for a in 0..na {
                row[idx(0, s, a)] = 1.0;
            }
            a_mat.push(row);
            b_vec.push(self.initial[s]);
        }
        // flow rows: sum_a mu_{t}(s', a) = sum_{s,a} mu_{t-1}(s, a) P[s][a][s']
        for t in 1..t_max {
            for s2 in 0..ns {
                let mut row = vec![0.0; n_vars];
                for a in 0..na {
                    row[idx(t, s2, a)] = 1.0;
                }
                for s in 0..ns {
                    for a in 0..na {
                        row[idx(t - 1, s, a)] -= self.transition[s][a][s2];
                    }
                }
                a_mat.push(row);
                b_vec.push(0.0);
            }
        }
        // cost row: sum mu c + slack = delta
        let mut cost_row = vec![0.0; n_vars];
        for t in 0..t_max {
            for s in 0..ns {
                for a in 0..na {
                    cost_row[idx(t, s, a)] = self.cost[s][a];
                }
            }
        }
        cost_row[n_mu] = 1.0;
        a_mat.push(cost_row);
        b_vec.push(delta);

        let mut obj = vec![0.0; n_vars];
        for t in 0..t_max {
            for s in 0..ns {
                for a in 0..na {
                    obj[idx(t, s, a)] = self.reward[s][a];
                }
            }
        }

        match solve_lp_max(&a_mat, &b_vec, &obj)? {
            LpOutcome::Infeasible => Ok(ConstrainedSolution::Infeasible),
            LpOutcome::Optimal { x, objective } => {
                let mut occupancy = vec![vec![vec![0.0; na]; ns]; t_max];
                for t in 0..t_max {
                    for s in 0..ns {
                        for a in 0..na {
                            occupancy[t][s][a] = x[idx(t, s, a)].max(0.0);
                        }
                    }
                }
                let lambda_star = self.minimal_optimal_dual(delta, objective);
                Ok(ConstrainedSolution::Optimal { j_star: objective, occupancy, lambda_star })
            }
        }
    }

    /// The dual function `q(lambda) = max_pi [J - lambda (Jc - delta)]` is
    /// convex and piecewise linear; its optimal set is the interval where it
    /// touches `j_star`. Bisection on the left edge yields the minimal
    /// optimal dual, which is what the fixed-point converse needs.
    fn minimal_optimal_dual(&self, delta: f64, j_star: f64) -> f64 {
        let q = |lambda: f64| -> f64 {
            let (v, _) = self.dp_optimum(&|s, a| self.reward[s][a] - lambda * self.cost[s][a]);
            v + lambda * delta
        };
        let tol = 1e-9;
        if q(0.0) <= j_star + tol {
            return 0.0;
        }
        // Find any dual-optimal point by ternary search on the convex q,
        // enlarging the bracket until the minimum is inside it.
        let mut upper = 1.0;
        let mut anchor = loop {
            let (mut lo, mut hi) = (0.0, upper);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if q(m1) <= q(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let mid = 0.5 * (lo + hi);
            if q(mid) <= j_star + tol {
                break mid;
            }
            upper *= 4.0;
            if upper > 1e12 {
                break mid; // should not happen for feasible instances
            }
        };
        // Left edge of the optimal interval: q > j_star strictly below it.
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + anchor);
            if q(mid) <= j_star + tol {
                anchor = mid;
            } else {
                lo = mid;
            }
        }
        anchor
    }

    /// Count of deterministic time-indexed policies, saturating.
    pub fn n_deterministic_policies(&self) -> u128 {
        let slots = (self.n_states * self.horizon) as u32;
        (self.n_actions as u128).checked_pow(slots).unwrap_or(u128::MAX)
    }

    /// Best feasible deterministic time-indexed policy by exhaustive search.
    /// Returns `None` when no deterministic policy is feasible (the CMDP may
    /// still be feasible through stochastic policies).
    pub fn brute_force_optimum(
        &self,
        delta: f64,
    ) -> Result<Option<(f64, TabularPolicy)>, TabularError> {
        const GUARD: u128 = 1_000_000;
        let count = self.n_deterministic_policies();
        if count > GUARD {
            return Err(TabularError::TooLarge(count, GUARD));
        }
        let slots = self.n_states * self.horizon;
        let mut best: Option<(f64, TabularPolicy)> = None;
        let mut digits = vec![0usize; slots];
        for _ in 0..count {
            let choices: Vec<Vec<usize>> = (0..self.horizon)
                .map(|t| digits[t * self.n_states..(t + 1) * self.n_states].to_vec())
                .collect();
            let pi = TabularPolicy::deterministic(&choices, self.n_actions);
            let (j, jc) = self.evaluate_policy(&pi)?;
            if jc <= delta + 1e-9 && best.as_ref().map_or(true, |(bj, _)| j > *bj) {
                best = Some((j, pi));
            }
            // increment base-n_actions counter
            for d in digits.iter_mut() {
                *d += 1;
                if *d < self.n_actions {
                    break;
                }
                *d = 0;
            }
        }
        Ok(best)
    }

    /// Recover a time-indexed policy from an occupancy measure. States with
    /// zero visitation mass get a uniform row.
    pub fn policy_from_occupancy(&self, occupancy: &[Vec<Vec<f64>>]) -> TabularPolicy {
        let probs = occupancy
            .iter()
            .map(|per_s| {
                per_s
                    .iter()
                    .map(|per_a| {
                        let mass: f64 = per_a.iter().sum();
                        if mass > 1e-12 {
                            per_a.iter().map(|&m| m / mass).collect()
                        } else {
                            vec![1.0 / self.n_actions as f64; self.n_actions]
                        }
                    })
                    .collect()
            })
            .collect();
        TabularPolicy { probs }
    }
}

/// All (J, Jc) pairs of deterministic policies, in enumeration order.
/// Shared by the penalty iteration's exact inner solver and the fixed-point
/// certificate.
pub fn deterministic_policy_values(
    m: &TabularCmdp,
) -> Result<Vec<(TabularPolicy, f64, f64)>, TabularError> {
    const GUARD: u128 = 1_000_000;
    let count = m.n_deterministic_policies();
    if count > GUARD {
        return Err(TabularError::TooLarge(count, GUARD));
    }
    let slots = m.n_states * m.horizon;
    let mut digits = vec![0usize; slots];
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let choices: Vec<Vec<usize>> = (0..m.horizon)
            .map(|t| digits[t * m.n_states..(t + 1) * m.n_states].to_vec())
            .collect();
        let pi = TabularPolicy::deterministic(&choices, m.n_actions);
        let (j, jc) = m.evaluate_policy(&pi)?;
        out.push((pi, j, jc));
        for d in digits.iter_mut() {
            *d += 1;
            if *d < m.n_actions {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}
