//! Exact-penalty policy optimization on tabular CMDPs.
//!
//! The surrogate replaces the per-episode Lagrangian terms with a single
//! multiplier on the hinge of each episode's constraint gap, then alternates
//! an argmax policy step with projected multiplier ascent. In the tabular
//! instantiation all episodes share one CMDP, so the per-episode gaps
//! coincide and the surrogate reduces to
//! `L = K * (J - lambda * max(Jc - delta, 0))`.
//!
//! Fixed points are certified against the occupancy-measure LP and an
//! exhaustive candidate search, which are independent of the iteration.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{
    deterministic_policy_values, ConstrainedSolution, TabularCmdp, TabularError, TabularPolicy,
};

#[derive(Debug, Error)]
pub enum PenaltyError {
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error("constrained problem is infeasible")]
    Infeasible,
    #[error("inner solver did not reach tolerance {tol} (best improvement step {gap})")]
    InnerNotConverged { tol: f64, gap: f64 },
}

/// `[x]_+ = max(x, 0)`.
pub fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Shared-CMDP constraint gap `g(pi) = Jc(pi) - delta`.
pub fn constraint_gap(
    m: &TabularCmdp,
    pi: &TabularPolicy,
    delta: f64,
) -> Result<f64, PenaltyError> {
    let (_, jc) = m.evaluate_policy(pi)?;
    Ok(jc - delta)
}

/// Surrogate objective `K * J - lambda * K * [Jc - delta]_+`.
pub fn surrogate_objective(
    m: &TabularCmdp,
    pi: &TabularPolicy,
    lambda: f64,
    delta: f64,
    k: usize,
) -> Result<f64, PenaltyError> {
    let (j, jc) = m.evaluate_policy(pi)?;
    Ok(k as f64 * (j - lambda * hinge(jc - delta)))
}

/// Projected multiplier ascent `[lambda + eta * max_gap]_+`.
pub fn multiplier_update(lambda: f64, eta: f64, max_gap: f64) -> f64 {
    hinge(lambda + eta * max_gap)
}

/// Inner argmax method for the policy step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Exhaustive search over deterministic policies plus pairwise
    /// cost-boundary mixtures. Exact: the surrogate is concave and piecewise
    /// linear over the occupancy polytope, so its maximum sits at a vertex
    /// (a deterministic policy) or on an edge crossing the cost boundary.
    ExactSearch,
    /// Softmax-parameterized gradient ascent; fallback for instances with
    /// more than 10^4 deterministic policies.
    GradientAscent,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    j: f64,
    jc: f64,
    kind: CandidateKind,
}

#[derive(Debug, Clone, Copy)]
enum CandidateKind {
    Det(usize),
    Mix { lo: usize, hi: usize, beta: f64 },
}

fn surrogate_value(j: f64, jc: f64, lambda: f64, delta: f64) -> f64 {
    j - lambda * hinge(jc - delta)
}

const TIE_EPS: f64 = 1e-9;

/// Best candidate for `max_pi [J - lambda * hinge(Jc - delta)]` over the
/// deterministic vertices and their cost-boundary mixtures.
///
/// The argmax is set-valued; ties are broken toward the maximizer whose gap
/// keeps the multiplier stationary (`Jc = delta` when `lambda > 0`, any
/// feasible gap when `lambda = 0`), so the iteration settles on a fixed
/// point instead of cycling through equal-value selections.
fn best_candidate(dets: &[(TabularPolicy, f64, f64)], lambda: f64, delta: f64) -> Candidate {
    let tie_key = |jc: f64| if lambda > 0.0 { (jc - delta).abs() } else { hinge(jc - delta) };
    let mut best = Candidate { j: f64::NEG_INFINITY, jc: 0.0, kind: CandidateKind::Det(0) };
    let mut best_val = f64::NEG_INFINITY;
    let consider = |cand: Candidate, val: f64, best: &mut Candidate, best_val: &mut f64| {
        if val > *best_val + TIE_EPS
            || (val > *best_val - TIE_EPS && tie_key(cand.jc) < tie_key(best.jc))
        {
            *best_val = val.max(*best_val);
            *best = cand;
        }
    };
    for (i, (_, j, jc)) in dets.iter().enumerate() {
        let cand = Candidate { j: *j, jc: *jc, kind: CandidateKind::Det(i) };
        let v = surrogate_value(*j, *jc, lambda, delta);
        consider(cand, v, &mut best, &mut best_val);
    }
    for (i, (_, j1, jc1)) in dets.iter().enumerate() {
        if *jc1 >= delta {
            continue;
        }
        for (k, (_, j2, jc2)) in dets.iter().enumerate() {
            if *jc2 <= delta {
                continue;
            }
            let beta = (delta - jc1) / (jc2 - jc1);
            let j = j1 + beta * (j2 - j1);
            let cand = Candidate { j, jc: delta, kind: CandidateKind::Mix { lo: i, hi: k, beta } };
            consider(cand, j, &mut best, &mut best_val);
        }
    }
    best
}

fn materialize(
    m: &TabularCmdp,
    dets: &[(TabularPolicy, f64, f64)],
    cand: &Candidate,
) -> Result<TabularPolicy, PenaltyError> {
    match cand.kind {
        CandidateKind::Det(i) => Ok(dets[i].0.clone()),
        CandidateKind::Mix { lo, hi, beta } => {
            let occ_lo = m.occupancy_of(&dets[lo].0)?;
            let occ_hi = m.occupancy_of(&dets[hi].0)?;
            let mixed: Vec<Vec<Vec<f64>>> = occ_lo
                .iter()
                .zip(&occ_hi)
                .map(|(a_t, b_t)| {
                    a_t.iter()
                        .zip(b_t)
                        .map(|(a_s, b_s)| {
                            a_s.iter()
                                .zip(b_s)
                                .map(|(&a, &b)| (1.0 - beta) * a + beta * b)
                                .collect()
                        })
                        .collect()
                })
                .collect();
            Ok(m.policy_from_occupancy(&mixed))
        }
    }
}

const GRADIENT_STEPS: usize = 2000;
const GRADIENT_LR: f64 = 0.5;
const GRADIENT_RESTARTS: usize = 5;
const EXACT_SEARCH_LIMIT: u128 = 10_000;

/// Softmax-parameterized exact-gradient ascent on the surrogate.
fn gradient_ascent_argmax<R: Rng>(
    m: &TabularCmdp,
    lambda: f64,
    delta: f64,
    rng: &mut R,
) -> Result<(TabularPolicy, f64, f64), PenaltyError> {
    let (ns, na, t_max) = (m.n_states, m.n_actions, m.horizon);
    let mut best: Option<(TabularPolicy, f64, f64, f64)> = None;
    for restart in 0..GRADIENT_RESTARTS {
        let mut theta = vec![vec![vec![0.0f64; na]; ns]; t_max];
        if restart > 0 {
            for row in theta.iter_mut().flatten().flatten() {
                *row = rng.gen_range(-1.0..1.0);
            }
        }
        for step in 0..GRADIENT_STEPS {
            let lr = GRADIENT_LR / (1.0 + step as f64 / 200.0);
            let pi = softmax_policy(&theta);
            let (_, jc) = m.evaluate_policy(&pi)?;
            let grad_j = exact_policy_gradient(m, &pi, &|s, a| m.reward[s][a]);
            let active = jc > delta;
            let grad_c = if active {
                exact_policy_gradient(m, &pi, &|s, a| m.cost[s][a])
            } else {
                vec![vec![vec![0.0; na]; ns]; t_max]
            };
            for t in 0..t_max {
                for s in 0..ns {
                    // chain rule through the softmax row
                    let row_pi = &pi.probs[t][s];
                    let g_row: Vec<f64> = (0..na)
                        .map(|a| grad_j[t][s][a] - if active { lambda * grad_c[t][s][a] } else { 0.0 })
                        .collect();
                    let mean: f64 = row_pi.iter().zip(&g_row).map(|(&p, &g)| p * g).sum();
                    for a in 0..na {
                        theta[t][s][a] += lr * row_pi[a] * (g_row[a] - mean);
                    }
                }
            }
        }
        let pi = softmax_policy(&theta);
        let (j, jc) = m.evaluate_policy(&pi)?;
        let val = surrogate_value(j, jc, lambda, delta);
        if best.as_ref().map_or(true, |(_, _, _, bv)| val > *bv) {
            best = Some((pi, j, jc, val));
        }
    }
    let (pi, j, jc, _) = best.expect("at least one restart");
    Ok((pi, j, jc))
}

fn softmax_policy(theta: &[Vec<Vec<f64>>]) -> TabularPolicy {
    let probs = theta
        .iter()
        .map(|per_s| {
            per_s
                .iter()
                .map(|row| {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    exps.iter().map(|&e| e / z).collect()
                })
                .collect()
        })
        .collect();
    TabularPolicy { probs }
}

/// `d/d pi_t(s, a)` of the expected total payoff: visitation times Q-value.
fn exact_policy_gradient(
    m: &TabularCmdp,
    pi: &TabularPolicy,
    payoff: &dyn Fn(usize, usize) -> f64,
) -> Vec<Vec<Vec<f64>>> {
    let (ns, na, t_max) = (m.n_states, m.n_actions, m.horizon);
    // backward values under pi
    let mut v = vec![0.0; ns];
    let mut q_all = vec![vec![vec![0.0; na]; ns]; t_max];
    for t in (0..t_max).rev() {
        let mut v_new = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let q = payoff(s, a)
                    + m.transition[s][a].iter().zip(&v).map(|(&p, &vv)| p * vv).sum::<f64>();
                q_all[t][s][a] = q;
                v_new[s] += pi.probs[t][s][a] * q;
            }
        }
        v = v_new;
    }
    // forward visitation
    let mut dist = m.initial.clone();
    let mut grad = vec![vec![vec![0.0; na]; ns]; t_max];
    for t in 0..t_max {
        for s in 0..ns {
            for a in 0..na {
                grad[t][s][a] = dist[s] * q_all[t][s][a];
            }
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let mass = dist[s] * pi.probs[t][s][a];
                if mass > 0.0 {
                    for (s2, &p) in m.transition[s][a].iter().enumerate() {
                        next[s2] += mass * p;
                    }
                }
            }
        }
        dist = next;
    }
    grad
}

/// One logged iterate of a penalty run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterateRow {
    pub iter: usize,
    pub j: f64,
    pub jc: f64,
    pub lambda: f64,
    pub l_sigma: f64,
}

/// Trajectory of a tabular EPPO run.
#[derive(Debug, Clone)]
pub struct EppoRun {
    pub iterates: Vec<IterateRow>,
    pub final_policy: TabularPolicy,
    pub final_lambda: f64,
}

/// Configuration for the tabular iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EppoConfig {
    pub delta: f64,
    pub eta: f64,
    pub k: usize,
    pub n_iters: usize,
    pub lambda_cap: f64,
    pub inner: InnerSolver,
}

impl EppoConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            eta: 0.05,
            k: 1,
            n_iters: 500,
            lambda_cap: 100.0,
            inner: InnerSolver::ExactSearch,
        }
    }
}

/// Run the iterative updates: policy argmax against the current multiplier,
/// then projected (and capped) multiplier ascent on the constraint gap.
pub fn eppo_tabular<R: Rng>(
    m: &TabularCmdp,
    config: &EppoConfig,
    rng: &mut R,
) -> Result<EppoRun, PenaltyError> {
    m.validate()?;
    let use_exact = config.inner == InnerSolver::ExactSearch
        && m.n_deterministic_policies() <= EXACT_SEARCH_LIMIT;
    let dets = if use_exact { Some(deterministic_policy_values(m)?) } else { None };

    let mut lambda = 0.0f64;
    let mut iterates = Vec::with_capacity(config.n_iters);
    let mut policy = None;
    for iter in 0..config.n_iters {
        let (pi, j, jc) = match &dets {
            Some(dets) => {
                let cand = best_candidate(dets, lambda, config.delta);
                let pi = materialize(m, dets, &cand)?;
                (pi, cand.j, cand.jc)
            }
            None => gradient_ascent_argmax(m, lambda, config.delta, rng)?,
        };
        let gap = jc - config.delta;
        iterates.push(IterateRow {
            iter,
            j,
            jc,
            lambda,
            l_sigma: config.k as f64 * surrogate_value(j, jc, lambda, config.delta),
        });
        lambda = multiplier_update(lambda, config.eta, gap).min(config.lambda_cap);
        policy = Some(pi);
    }
    Ok(EppoRun {
        iterates,
        final_policy: policy.expect("n_iters >= 1"),
        final_lambda: lambda,
    })
}

/// Naive per-episode primal-dual baseline: K multipliers, each updated by its
/// own gap. In the shared-CMDP case every gap coincides, so the multipliers
/// stay equal; the point of the baseline is its un-hinged policy objective.
pub fn naive_primal_dual(
    m: &TabularCmdp,
    config: &EppoConfig,
) -> Result<(Vec<IterateRow>, Vec<f64>), PenaltyError> {
    m.validate()?;
    let dets = deterministic_policy_values(m)?;
    let mut lambdas = vec![0.0f64; config.k];
    let mut iterates = Vec::with_capacity(config.n_iters);
    for iter in 0..config.n_iters {
        let total_lambda: f64 = lambdas.iter().sum();
        // L(pi, lambda_vec) = K J - sum_k lambda_k (Jc - delta): linear in the
        // occupancy, so a deterministic vertex attains the max.
        let (j, jc) = dets
            .iter()
            .map(|(_, j, jc)| (*j, *jc))
            .max_by(|a, b| {
                let va = config.k as f64 * a.0 - total_lambda * (a.1 - config.delta);
                let vb = config.k as f64 * b.0 - total_lambda * (b.1 - config.delta);
                va.partial_cmp(&vb).unwrap()
            })
            .expect("nonempty policy set");
        iterates.push(IterateRow {
            iter,
            j,
            jc,
            lambda: lambdas[0],
            l_sigma: config.k as f64 * j - total_lambda * (jc - config.delta),
        });
        let gap = jc - config.delta;
        for l in &mut lambdas {
            *l = multiplier_update(*l, config.eta, gap).min(config.lambda_cap);
        }
    }
    Ok((iterates, lambdas))
}

/// Outcome of the argmax-membership check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgmaxCheck {
    Pass,
    Fail,
    /// Instance too large for exhaustive verification.
    Unverifiable,
}

/// Slack values backing the certificate's three checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateGaps {
    pub max_gap: f64,
    pub stationarity: f64,
    pub argmax_slack: f64,
    pub j_minus_lp: f64,
    pub feasibility_slack: f64,
}

/// Certificate that `(pi, lambda)` is a fixed point of the iteration and
/// that the policy is feasible and primal-optimal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointCertificate {
    pub lemma1: bool,
    pub argmax: ArgmaxCheck,
    pub primal_optimal: bool,
    pub gaps: CertificateGaps,
}

impl FixedPointCertificate {
    pub fn passes(&self) -> bool {
        self.lemma1 && self.argmax != ArgmaxCheck::Fail && self.primal_optimal
    }
}

/// Certify a candidate fixed point:
/// (a) multiplier stationarity conditions,
/// (b) argmax membership against exhaustive candidates,
/// (c) feasibility and primal optimality against the LP.
pub fn is_fixed_point(
    m: &TabularCmdp,
    pi: &TabularPolicy,
    lambda: f64,
    delta: f64,
    tol: f64,
) -> Result<FixedPointCertificate, PenaltyError> {
    let (j, jc) = m.evaluate_policy(pi)?;
    let max_gap = jc - delta;
    let stationarity = (lambda * max_gap).abs();
    let lemma1 = lambda >= 0.0 && max_gap <= tol && stationarity <= tol;

    let own = surrogate_value(j, jc, lambda, delta);
    let (argmax, argmax_slack) = if m.n_deterministic_policies() <= EXACT_SEARCH_LIMIT {
        let dets = deterministic_policy_values(m)?;
        let best = best_candidate(&dets, lambda, delta);
        let slack = surrogate_value(best.j, best.jc, lambda, delta) - own;
        (if slack <= tol { ArgmaxCheck::Pass } else { ArgmaxCheck::Fail }, slack)
    } else {
        (ArgmaxCheck::Unverifiable, f64::NAN)
    };

    let (j_minus_lp, primal_optimal) = match m.solve_constrained_lp(delta)? {
        ConstrainedSolution::Optimal { j_star, .. } => {
            let diff = j - j_star;
            (diff, diff.abs() <= tol && jc <= delta + tol)
        }
        ConstrainedSolution::Infeasible => (f64::NAN, false),
    };

    Ok(FixedPointCertificate {
        lemma1,
        argmax,
        primal_optimal,
        gaps: CertificateGaps {
            max_gap,
            stationarity,
            argmax_slack,
            j_minus_lp,
            feasibility_slack: jc - delta,
        },
    })
}

/// Iterate log as CSV with the interface columns.
pub fn iterates_to_csv(rows: &[IterateRow]) -> String {
    let mut out = String::from("iter,J,Jc,lambda,L_sigma\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.iter, r.j, r.jc, r.lambda, r.l_sigma));
    }
    out
}

/// Random small CMDP instance plus a feasible cost threshold, for fuzz
/// suites. Transition rows are normalized uniforms; `delta` is drawn between
/// the minimum achievable expected cost and the maximum, so the constrained
/// problem is always feasible.
pub fn fuzz_instance<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
) -> (TabularCmdp, f64) {
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for per_a in &mut transition {
        for row in per_a {
            let mut total = 0.0;
            for p in row.iter_mut() {
                *p = rng.gen::<f64>() + 1e-3;
                total += *p;
            }
            for p in row.iter_mut() {
                *p /= total;
            }
        }
    }
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.gen::<f64>()).collect())
        .collect();
    // sparse binary-ish costs keep the constraint interesting
    let cost: Vec<Vec<f64>> = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    let m = TabularCmdp {
        n_states,
        n_actions,
        transition,
        reward,
        cost: cost.clone(),
        initial,
        horizon,
    };
    let (neg_min_cost, _) = m.dp_optimum(&|s, a| -m.cost[s][a]);
    let (max_cost, _) = m.dp_optimum(&|s, a| m.cost[s][a]);
    let min_cost = -neg_min_cost;
    let delta = min_cost + rng.gen::<f64>() * (max_cost - min_cost).max(1e-6);
    (m, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixing() -> TabularCmdp {
        serde_json::from_str(include_str!("../fixtures/mixing.json")).unwrap()
    }

    fn two_state() -> TabularCmdp {
        serde_json::from_str(include_str!("../fixtures/two_state.json")).unwrap()
    }

    fn chain() -> TabularCmdp {
        serde_json::from_str(include_str!("../fixtures/chain.json")).unwrap()
    }

    #[test]
    fn hinge_values() {
        assert_eq!(hinge(-3.0), 0.0);
        assert_eq!(hinge(0.0), 0.0);
        assert_eq!(hinge(2.5), 2.5);
    }

    #[test]
    fn multiplier_update_values() {
        assert_eq!(multiplier_update(1.0, 0.1, -20.0), 0.0);
        assert_eq!(multiplier_update(0.0, 0.1, -1.0), 0.0);
        assert_relative_eq!(multiplier_update(2.0, 0.5, 3.0), 3.5);
    }

    #[test]
    fn constraint_gap_zero_cost() {
        let mut m = two_state();
        m.cost = vec![vec![0.0; 2]; 2];
        let pi = TabularPolicy::deterministic(&vec![vec![0, 0]; 2], 2);
        assert_relative_eq!(constraint_gap(&m, &pi, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn surrogate_feasible_policy_is_lambda_independent() {
        let m = two_state();
        let pi = TabularPolicy::deterministic(&vec![vec![0, 0]; 2], 2);
        let (j, jc) = m.evaluate_policy(&pi).unwrap();
        let delta = jc + 0.5; // strictly feasible
        let k = 7;
        let a = surrogate_objective(&m, &pi, 0.0, delta, k).unwrap();
        let b = surrogate_objective(&m, &pi, 42.0, delta, k).unwrap();
        assert_relative_eq!(a, b);
        assert_relative_eq!(a, k as f64 * j);
    }

    #[test]
    fn surrogate_infeasible_matches_direct_formula() {
        let m = two_state();
        let pi = TabularPolicy::deterministic(&vec![vec![1, 1]; 2], 2);
        let (j, jc) = m.evaluate_policy(&pi).unwrap();
        let delta = jc - 0.25; // infeasible by 0.25
        let lambda = 2.0;
        let k = 3;
        let got = surrogate_objective(&m, &pi, lambda, delta, k).unwrap();
        let expected = k as f64 * (j - lambda * (jc - delta));
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn eppo_unconstrained_fixture_keeps_lambda_zero() {
        let m = two_state();
        let config = EppoConfig::new(m.horizon as f64 * 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = eppo_tabular(&m, &config, &mut rng).unwrap();
        assert!(run.iterates.iter().all(|r| r.lambda == 0.0));
        let (dp_opt, _) = m.dp_reward_optimum();
        let last = run.iterates.last().unwrap();
        assert_relative_eq!(last.j, dp_opt, max_relative = 1e-10);
    }

    #[test]
    fn eppo_mixing_fixture_reaches_lp_optimum() {
        let m = mixing();
        let config = EppoConfig::new(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = eppo_tabular(&m, &config, &mut rng).unwrap();
        let last = run.iterates.last().unwrap();
        assert!((last.j - 0.5).abs() < 1e-3, "J = {}", last.j);
        assert!(last.jc <= 1.0 + 1e-3);
    }

    #[test]
    fn eppo_fuzz_reaches_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..20 {
            let mut inst_rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, delta) = fuzz_instance(&mut inst_rng, 3, 2, 3);
            let mut config = EppoConfig::new(delta);
            // small constraint gaps make the default step crawl toward
            // lambda*; a bigger step still freezes once it crosses
            config.eta = 0.5;
            config.n_iters = 2000;
            let run = eppo_tabular(&m, &config, &mut rng).unwrap();
            let cert =
                is_fixed_point(&m, &run.final_policy, run.final_lambda, delta, 1e-3).unwrap();
            assert!(cert.passes(), "seed {seed}: {cert:?}");
        }
    }

    #[test]
    fn certificate_detects_violations() {
        let m = chain();
        let delta = 0.0;
        // infeasible policy with lambda = 0 fails the stationarity check
        let advance = TabularPolicy::deterministic(&vec![vec![0, 0]; 2], 2);
        let cert = is_fixed_point(&m, &advance, 0.0, delta, 1e-6).unwrap();
        assert!(!cert.lemma1);

        // feasible but suboptimal under a big lambda fails the argmax check
        let m2 = two_state();
        let stay = TabularPolicy::deterministic(&vec![vec![0, 0]; 2], 2);
        let (_, jc) = m2.evaluate_policy(&stay).unwrap();
        let big_delta = m2.horizon as f64 * 10.0;
        assert!(jc <= big_delta);
        let cert2 = is_fixed_point(&m2, &stay, 5.0, big_delta, 1e-6).unwrap();
        assert_eq!(cert2.argmax, ArgmaxCheck::Fail);
        assert!(!cert2.passes());
    }

    #[test]
    fn lp_optimum_with_dual_norm_is_fixed_point() {
        let m = mixing();
        let delta = 1.0;
        let (j_star, occ, lambda_star) = match m.solve_constrained_lp(delta).unwrap() {
            ConstrainedSolution::Optimal { j_star, occupancy, lambda_star } => {
                (j_star, occupancy, lambda_star)
            }
            ConstrainedSolution::Infeasible => panic!("feasible"),
        };
        let pi = m.policy_from_occupancy(&occ);
        let cert = is_fixed_point(&m, &pi, lambda_star, delta, 1e-6).unwrap();
        assert!(cert.passes(), "{cert:?}");
        let _ = j_star;
    }

    #[test]
    fn monotone_multiplier_under_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let lambda: f64 = rng.gen::<f64>() * 10.0;
            let eta: f64 = rng.gen::<f64>() * 0.5 + 1e-3;
            let gap: f64 = rng.gen::<f64>() * 3.0 + 1e-9; // violation
            assert!(multiplier_update(lambda, eta, gap) >= lambda);
        }
    }

    #[test]
    fn exact_penalty_threshold_on_fixtures() {
        // any maximizer of the surrogate at lambda >= lambda* is feasible
        // and primal-optimal
        for (m, delta) in [(mixing(), 1.0), (chain(), 0.0), (two_state(), 0.8)] {
            let (j_star, lambda_star) = match m.solve_constrained_lp(delta).unwrap() {
                ConstrainedSolution::Optimal { j_star, lambda_star, .. } => (j_star, lambda_star),
                ConstrainedSolution::Infeasible => panic!("feasible"),
            };
            let dets = deterministic_policy_values(&m).unwrap();
            // at lambda* itself the max surrogate value already equals J*
            let at_star = best_candidate(&dets, lambda_star, delta);
            let val_at_star = surrogate_value(at_star.j, at_star.jc, lambda_star, delta);
            assert!((val_at_star - j_star).abs() <= 1e-5, "value {val_at_star} vs {j_star}");
            // strictly beyond lambda* every selected maximizer is feasible
            // and primal optimal
            for &bump in &[0.5, 2.0] {
                let lambda = lambda_star + bump;
                let cand = best_candidate(&dets, lambda, delta);
                assert!(cand.jc <= delta + 1e-6, "infeasible maximizer at lambda {lambda}");
                assert!((cand.j - j_star).abs() <= 1e-6, "suboptimal maximizer");
            }
        }
    }

    #[test]
    fn naive_primal_dual_multipliers_stay_equal() {
        let m = chain();
        let mut config = EppoConfig::new(0.5);
        config.k = 4;
        config.n_iters = 50;
        let (rows, lambdas) = naive_primal_dual(&m, &config).unwrap();
        assert_eq!(rows.len(), 50);
        let first = lambdas[0];
        assert!(lambdas.iter().all(|&l| (l - first).abs() < 1e-15));
    }

    #[test]
    fn naive_primal_dual_stationary_when_feasible() {
        let m = two_state();
        let mut config = EppoConfig::new(m.horizon as f64 * 10.0);
        config.k = 3;
        config.n_iters = 20;
        let (_, lambdas) = naive_primal_dual(&m, &config).unwrap();
        assert!(lambdas.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn gradient_ascent_agrees_with_exact_search() {
        let m = two_state();
        let delta = 0.8;
        let dets = deterministic_policy_values(&m).unwrap();
        let lambda = 1.5;
        let exact = best_candidate(&dets, lambda, delta);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (_, j, jc) = gradient_ascent_argmax(&m, lambda, delta, &mut rng).unwrap();
        let exact_val = surrogate_value(exact.j, exact.jc, lambda, delta);
        let grad_val = surrogate_value(j, jc, lambda, delta);
        assert!(grad_val >= exact_val - 5e-3, "gradient {grad_val} vs exact {exact_val}");
    }

    #[test]
    fn csv_log_format() {
        let rows = vec![IterateRow { iter: 0, j: 1.0, jc: 0.5, lambda: 0.0, l_sigma: 1.0 }];
        let csv = iterates_to_csv(&rows);
        assert!(csv.starts_with("iter,J,Jc,lambda,L_sigma\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
