//! Gradient-based policy iteration: Monte Carlo estimation of performance
//! gradients from sample paths, the mass-preserving multiplicative update,
//! and exact counterparts on enumerated MDPs for validation.
//!
//! The performance gradient of a weight table σ with row masses Σ(s) is
//!
//! ```text
//! ∂J/∂σ_t(s,a) = π_t(s) · Σ_b ∂p(b|s)/∂σ_t(s,a) · (r_t(s,b) + V_t(s,b))
//! ```
//!
//! with the two-case derivative of the normalized action probability
//! p(b|s) = σ(s,b)/Σ(s). The update σ ← σ − γ ⊙ ∇J with step size
//! γ(s,a) = σ(s,a)/Σ(s) leaves every row mass unchanged and never moves a
//! zero (masked) entry.

use std::io::Write;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::env::{mix_seed, McEnvironment, RolloutOutcome};
use crate::error::{CoreError, Result};
use crate::oracle::EnumeratedMdp;
use crate::policy::{PolicyRow, StochasticPolicy};

/// Learner knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbpiConfig {
    /// Sample paths |W| per iteration.
    pub n_paths: usize,
    /// Stopping threshold on the 2-norm of the estimated gradient.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Gradient entries with fewer visits are omitted from the update.
    pub min_visits: usize,
    pub seed: u64,
    /// Scenarios in the fixed held-out set used for the per-iteration trace.
    pub heldout_scenarios: usize,
    /// Regeneration budget per path slot before giving up.
    pub max_attempts_per_path: usize,
}

impl Default for GbpiConfig {
    fn default() -> Self {
        Self {
            n_paths: 2000,
            epsilon: 1e-3,
            max_iterations: 30,
            min_visits: 10,
            seed: 0,
            heldout_scenarios: 100,
            max_attempts_per_path: 50,
        }
    }
}

impl GbpiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(CoreError::Config("n_paths must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(CoreError::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-action statistics and gradient entry at one (stage, state).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionStat {
    pub action: u32,
    /// |I_t(s, a)|, zero for exact gradients.
    pub visits: usize,
    /// r̂_t(s, a): mean stage cost over visiting paths (exact value for
    /// exact gradients).
    pub mean_cost: f64,
    /// V̂_t(s, a): mean path-suffix cost after stage t (exact tail for exact
    /// gradients).
    pub mean_tail: f64,
    /// ∂J/∂σ_t(s, a); `None` when omitted by the visit threshold.
    pub grad: Option<f64>,
}

/// All statistics collected at one (stage, state).
#[derive(Debug, Clone, PartialEq)]
pub struct StateGradient {
    /// |I_t(s)|, zero for exact gradients.
    pub visits: usize,
    /// π̂_t(s) (exact occupancy for exact gradients).
    pub pi_hat: f64,
    pub actions: Vec<ActionStat>,
}

/// Sparse gradient table over visited (stage, state, action) triples.
#[derive(Debug, Clone, Default)]
pub struct GradientEstimate {
    pub stages: Vec<BTreeMap<u32, StateGradient>>,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|m| m.values())
            .flat_map(|sg| sg.actions.iter())
            .filter_map(|a| a.grad)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn entry(&self, stage: usize, state: u32, action: u32) -> Option<f64> {
        self.stages[stage]
            .get(&state)?
            .actions
            .iter()
            .find(|a| a.action == action)?
            .grad
    }

    pub fn entry_count(&self) -> usize {
        self.stages
            .iter()
            .flat_map(|m| m.values())
            .map(|sg| sg.actions.iter().filter(|a| a.grad.is_some()).count())
            .sum()
    }
}

/// The two-case derivative ∂p(b|s)/∂σ(s,a) of the normalized action
/// probability with respect to one weight entry.
pub fn dp_dsigma(row: &PolicyRow, b: usize, a: usize) -> f64 {
    let mass = row.mass;
    if b == a {
        (mass - row.weights[a]) / (mass * mass)
    } else {
        -row.weights[b] / (mass * mass)
    }
}

#[derive(Default, Clone)]
struct ActionAgg {
    visits: usize,
    cost_sum: f64,
    tail_sum: f64,
}

#[derive(Default, Clone)]
struct StateAgg {
    visits: usize,
    actions: BTreeMap<u32, ActionAgg>,
}

/// Estimate performance gradients by the Monte Carlo method: generate
/// `n_paths` feasible sample paths, apply the comfort masks they discovered,
/// count the visit index sets, average stage and suffix costs, and assemble
/// the gradient from the two-case formula.
///
/// Unvisited in-support actions contribute nothing to the row average, which
/// is renormalized over the emitted entries; this keeps the row-mass
/// preservation identity of the update exact under incomplete coverage and
/// coincides with the closed form once every in-support action is visited.
pub fn estimate_gradient<E: McEnvironment>(
    env: &E,
    policy: &mut StochasticPolicy,
    cfg: &GbpiConfig,
    base_seed: u64,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    let outcomes = generate_paths(env, policy, cfg, base_seed)?;
    apply_mask_events(policy, &outcomes);

    // Count occurrences and accumulate cost statistics in path order.
    let horizon = env.horizon();
    let mut aggs: Vec<BTreeMap<u32, StateAgg>> = vec![BTreeMap::new(); horizon];
    for outcome in &outcomes {
        for step in &outcome.path.steps {
            let agg = aggs[step.stage].entry(step.state).or_default();
            agg.visits += 1;
            let a = agg.actions.entry(step.action).or_default();
            a.visits += 1;
            a.cost_sum += step.cost;
            a.tail_sum += outcome.path.tail_cost(step.stage);
        }
    }

    let n_paths = outcomes.len() as f64;
    let mut stages = Vec::with_capacity(horizon);
    for (t, stage_aggs) in aggs.into_iter().enumerate() {
        let mut table = BTreeMap::new();
        for (state, agg) in stage_aggs {
            let pi_hat = agg.visits as f64 / n_paths;
            let row = policy.row(t, state);
            let mut actions: Vec<ActionStat> = agg
                .actions
                .iter()
                .map(|(&action, a)| ActionStat {
                    action,
                    visits: a.visits,
                    mean_cost: a.cost_sum / a.visits as f64,
                    mean_tail: a.tail_sum / a.visits as f64,
                    grad: None,
                })
                .collect();

            if let Some(row) = row {
                if row.mass > 0.0 {
                    // Emitted set: enough visits and still unmasked.
                    let emitted: Vec<usize> = actions
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| {
                            a.visits >= cfg.min_visits && row.weights[a.action as usize] > 0.0
                        })
                        .map(|(i, _)| i)
                        .collect();
                    let weight_sum: f64 = emitted
                        .iter()
                        .map(|&i| row.weights[actions[i].action as usize])
                        .sum();
                    if !emitted.is_empty() && weight_sum > 0.0 {
                        let mean_a: f64 = emitted
                            .iter()
                            .map(|&i| {
                                let a = &actions[i];
                                row.weights[a.action as usize] * (a.mean_cost + a.mean_tail)
                            })
                            .sum::<f64>()
                            / weight_sum;
                        for &i in &emitted {
                            let a_value = actions[i].mean_cost + actions[i].mean_tail;
                            actions[i].grad = Some(pi_hat / row.mass * (a_value - mean_a));
                        }
                    }
                }
            }
            table.insert(state, StateGradient { visits: agg.visits, pi_hat, actions });
        }
        stages.push(table);
    }
    Ok(GradientEstimate { stages })
}

/// Generate the per-iteration wave of feasible paths. Each path slot owns a
/// seed derived from (base_seed, slot, attempt), so results do not depend on
/// worker scheduling; infeasible paths are regenerated with fresh seeds up
/// to the configured budget.
fn generate_paths<E: McEnvironment>(
    env: &E,
    policy: &StochasticPolicy,
    cfg: &GbpiConfig,
    base_seed: u64,
) -> Result<Vec<RolloutOutcome>> {
    let results: Vec<Result<RolloutOutcome>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|slot| {
            for attempt in 0..cfg.max_attempts_per_path {
                let seed = mix_seed(base_seed, (slot + attempt * cfg.n_paths) as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match env.rollout(policy, &mut rng) {
                    Ok(outcome) => return Ok(outcome),
                    Err(CoreError::Infeasible { .. }) | Err(CoreError::DeadState { .. }) => {
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(CoreError::NoPaths {
                wanted: cfg.n_paths,
                attempts: cfg.max_attempts_per_path,
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Apply discovered repair and mask events to the policy (single writer,
/// between waves). Unmasks resurrect all-zero rows as a deterministic rule;
/// masks win when both touch the same entry.
fn apply_mask_events(policy: &mut StochasticPolicy, outcomes: &[RolloutOutcome]) {
    let mut unmasks: Vec<_> = outcomes.iter().flat_map(|o| o.unmasks.iter().copied()).collect();
    unmasks.sort_unstable();
    unmasks.dedup();
    for u in unmasks {
        let mut weights = vec![0.0; policy.action_count];
        weights[u.action as usize] = 1.0;
        policy.set_row(u.stage, u.state, PolicyRow { weights, mass: 1.0 });
    }
    let mut masks: Vec<_> = outcomes.iter().flat_map(|o| o.masks.iter().copied()).collect();
    masks.sort_unstable();
    masks.dedup();
    for m in masks {
        policy.mask_infeasible(m.stage, m.state, m.action);
    }
}

/// Exact performance gradient on an enumerated MDP: occupancy by forward
/// recursion, potentials by backward recursion, then the closed form with
/// the two-case derivative. Entries are emitted for every action, including
/// currently zero-weight ones.
pub fn exact_gradient(
    mdp: &EnumeratedMdp,
    policy: &StochasticPolicy,
) -> Result<GradientEstimate> {
    mdp.guard_enumerable()?;
    let occupancy = mdp.occupancy(policy)?;
    let potentials = mdp.potentials(policy)?;

    let mut stages = Vec::with_capacity(mdp.stages);
    for t in 0..mdp.stages {
        let mut table = BTreeMap::new();
        for s in 0..mdp.state_counts[t] {
            let row = policy
                .row(t, s as u32)
                .ok_or(CoreError::DeadState { stage: t, state: s as u32 })?;
            let pi = occupancy[t][s];
            let a_values: Vec<f64> = (0..mdp.action_count)
                .map(|b| mdp.cost(t, s, b) + mdp.action_tail(t, s, b, &potentials))
                .collect();
            let actions = (0..mdp.action_count)
                .map(|a| {
                    let grad: f64 = (0..mdp.action_count)
                        .map(|b| dp_dsigma(row, b, a) * a_values[b])
                        .sum::<f64>()
                        * pi;
                    ActionStat {
                        action: a as u32,
                        visits: 0,
                        mean_cost: mdp.cost(t, s, a),
                        mean_tail: a_values[a] - mdp.cost(t, s, a),
                        grad: Some(grad),
                    }
                })
                .collect();
            table.insert(s as u32, StateGradient { visits: 0, pi_hat: pi, actions });
        }
        stages.push(table);
    }
    Ok(GradientEstimate { stages })
}

/// Outcome of one policy update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateStats {
    pub rows_updated: usize,
    /// Entries that had to be clamped back into [0, 1].
    pub clamp_events: usize,
    /// Rows where clamping fired (their mass was rescaled, not preserved).
    pub clamped_rows: Vec<(usize, u32)>,
}

/// One descent step: σ ← σ − γ ⊙ ∇J with γ(s,a) = σ(s,a)/Σ(s). Entries are
/// clamped to [0, 1] and the row rescaled to restore its mass if clamping
/// fired; the event count is reported.
pub fn update_policy(policy: &mut StochasticPolicy, grad: &GradientEstimate) -> UpdateStats {
    let mut stats = UpdateStats::default();
    for (t, table) in grad.stages.iter().enumerate() {
        for (&state, sg) in table {
            let Some(row) = policy.row_mut(t, state) else { continue };
            let mass = row.mass;
            if mass <= 0.0 {
                continue;
            }
            let mut touched = false;
            let mut clamped = false;
            for stat in &sg.actions {
                let Some(g) = stat.grad else { continue };
                let a = stat.action as usize;
                let step = row.weights[a] / mass * g;
                let mut next = row.weights[a] - step;
                if next < 0.0 || next > 1.0 {
                    next = next.clamp(0.0, 1.0);
                    clamped = true;
                    stats.clamp_events += 1;
                }
                row.weights[a] = next;
                touched = true;
            }
            if touched {
                stats.rows_updated += 1;
                if clamped {
                    stats.clamped_rows.push((t, state));
                }
                if clamped {
                    let sum: f64 = row.weights.iter().sum();
                    if sum > 0.0 {
                        let scale = mass / sum;
                        for w in row.weights.iter_mut() {
                            *w = (*w * scale).min(1.0);
                        }
                    }
                }
                row.recompute_mass();
            }
        }
    }
    stats
}

/// One line of the iteration log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean cost of the updated policy on the fixed held-out scenario set.
    pub mean_cost: f64,
    pub grad_norm: f64,
    pub clamp_events: usize,
    pub wall_time_s: f64,
}

/// Append records as JSON lines.
pub fn write_iteration_log<W: Write>(records: &[IterationRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| CoreError::Corrupt(format!("log encode: {e}")))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Result of a learning run.
#[derive(Debug, Clone)]
pub struct GbpiRun {
    pub policy: StochasticPolicy,
    pub trace: Vec<IterationRecord>,
}

/// Monte Carlo GBPI: iterate gradient estimation and the mass-preserving
/// update until the gradient norm drops below epsilon or the iteration
/// budget runs out.
pub fn run_gbpi<E: McEnvironment>(
    env: &E,
    mut policy: StochasticPolicy,
    cfg: &GbpiConfig,
) -> Result<GbpiRun> {
    cfg.validate()?;
    let heldout_seed = mix_seed(cfg.seed, HELDOUT_SEED_TAG);
    let mut trace = Vec::new();
    for k in 0..cfg.max_iterations {
        let started = Instant::now();
        let base_seed = mix_seed(cfg.seed, k as u64);
        let grad = estimate_gradient(env, &mut policy, cfg, base_seed)?;
        let norm = grad.norm();
        let stats = update_policy(&mut policy, &grad);
        let mean_cost = env.heldout_cost(&policy, heldout_seed, cfg.heldout_scenarios)?;
        trace.push(IterationRecord {
            iteration: k,
            mean_cost,
            grad_norm: norm,
            clamp_events: stats.clamp_events,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if norm <= cfg.epsilon {
            break;
        }
    }
    Ok(GbpiRun { policy, trace })
}

/// GBPI with exact gradients on an enumerated MDP; the trace carries exact
/// expected costs.
pub fn run_gbpi_exact(
    mdp: &EnumeratedMdp,
    mut policy: StochasticPolicy,
    cfg: &GbpiConfig,
) -> Result<GbpiRun> {
    cfg.validate()?;
    let mut trace = Vec::new();
    for k in 0..cfg.max_iterations {
        let started = Instant::now();
        let grad = exact_gradient(mdp, &policy)?;
        let norm = grad.norm();
        let stats = update_policy(&mut policy, &grad);
        let mean_cost = mdp.policy_value(&policy)?;
        trace.push(IterationRecord {
            iteration: k,
            mean_cost,
            grad_norm: norm,
            clamp_events: stats.clamp_events,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if norm <= cfg.epsilon {
            break;
        }
    }
    Ok(GbpiRun { policy, trace })
}

/// Seed-derivation tag for the fixed held-out scenario set, kept disjoint
/// from the per-iteration path seeds.
const HELDOUT_SEED_TAG: u64 = 0x6865_6c64_6f75_7421;

/// The performance-difference value between two policies on an enumerated
/// MDP:
///
/// ```text
/// J(μ) - J(σ) = Σ_t π^μ_t [ (r^μ_t - r^σ_t) + (P^μ_t - P^σ_t) V^σ_{t+1} ]
/// ```
///
/// evaluated directly from the formula; callers cross-check it against the
/// directly evaluated cost difference.
pub fn performance_difference(
    mdp: &EnumeratedMdp,
    mu: &StochasticPolicy,
    sigma: &StochasticPolicy,
) -> Result<f64> {
    mdp.guard_enumerable()?;
    let occupancy_mu = mdp.occupancy(mu)?;
    let potentials_sigma = mdp.potentials(sigma)?;

    let action_probs = |policy: &StochasticPolicy, t: usize, s: usize| -> Result<Vec<f64>> {
        let row = policy
            .row(t, s as u32)
            .ok_or(CoreError::DeadState { stage: t, state: s as u32 })?;
        if row.mass <= 0.0 {
            return Err(CoreError::DeadState { stage: t, state: s as u32 });
        }
        Ok(row.weights.iter().map(|&w| w / row.mass).collect())
    };

    let mut total = 0.0;
    for t in 0..mdp.stages {
        for s in 0..mdp.state_counts[t] {
            let pi = occupancy_mu[t][s];
            if pi == 0.0 {
                continue;
            }
            let p_mu = action_probs(mu, t, s)?;
            let p_sigma = action_probs(sigma, t, s)?;
            let mut term = 0.0;
            for a in 0..mdp.action_count {
                let dp = p_mu[a] - p_sigma[a];
                if dp == 0.0 {
                    continue;
                }
                term += dp * (mdp.cost(t, s, a) + mdp.action_tail(t, s, a, &potentials_sigma));
            }
            total += pi * term;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyRow;
    use rand::Rng;

    fn random_mdp(stages: usize, states: usize, actions: usize, seed: u64) -> EnumeratedMdp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transitions = Vec::new();
        for _ in 0..stages - 1 {
            let mut tensor = vec![0.0; states * actions * states];
            for row in 0..states * actions {
                let mut total = 0.0;
                for sn in 0..states {
                    let w: f64 = rng.random::<f64>() + 0.05;
                    tensor[row * states + sn] = w;
                    total += w;
                }
                for sn in 0..states {
                    tensor[row * states + sn] /= total;
                }
            }
            transitions.push(tensor);
        }
        let costs = (0..stages)
            .map(|_| (0..states * actions).map(|_| rng.random::<f64>() * 0.05).collect())
            .collect();
        EnumeratedMdp {
            stages,
            state_counts: vec![states; stages],
            action_count: actions,
            transitions,
            costs,
            initial_state: 0,
        }
    }

    fn random_policy(mdp: &EnumeratedMdp, seed: u64) -> StochasticPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = StochasticPolicy::uniform(&mdp.state_counts, mdp.action_count);
        for t in 0..mdp.stages {
            for s in 0..mdp.state_counts[t] {
                let row = policy.row_mut(t, s as u32).unwrap();
                let mut total = 0.0;
                for w in row.weights.iter_mut() {
                    *w = rng.random::<f64>() + 0.05;
                    total += *w;
                }
                for w in row.weights.iter_mut() {
                    *w /= total;
                }
                row.recompute_mass();
            }
        }
        policy
    }

    #[test]
    fn dp_dsigma_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.random_range(2..9);
            let mut row = PolicyRow {
                weights: (0..n).map(|_| rng.random::<f64>()).collect(),
                mass: 0.0,
            };
            row.recompute_mass();
            for a in 0..n {
                let sum: f64 = (0..n).map(|b| dp_dsigma(&row, b, a)).sum();
                assert!(sum.abs() <= 1e-12, "sum = {sum}");
            }
        }
    }

    #[test]
    fn exact_gradient_matches_central_finite_differences() {
        let mdp = random_mdp(3, 3, 3, 21);
        let policy = random_policy(&mdp, 22);
        let grad = exact_gradient(&mdp, &policy).unwrap();

        let h = 1e-6;
        for t in 0..mdp.stages {
            for s in 0..mdp.state_counts[t] {
                for a in 0..mdp.action_count {
                    let mut plus = policy.clone();
                    let row = plus.row_mut(t, s as u32).unwrap();
                    row.weights[a] += h;
                    row.recompute_mass();
                    let jp = mdp.policy_value(&plus).unwrap();

                    let mut minus = policy.clone();
                    let row = minus.row_mut(t, s as u32).unwrap();
                    row.weights[a] -= h;
                    row.recompute_mass();
                    let jm = mdp.policy_value(&minus).unwrap();

                    let fd = (jp - jm) / (2.0 * h);
                    let g = grad.entry(t, s as u32, a as u32).unwrap();
                    assert!((fd - g).abs() < 1e-6, "t{t} s{s} a{a}: fd {fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn uniform_costs_make_the_gradient_vanish() {
        let mut mdp = random_mdp(3, 3, 3, 31);
        for t in 0..mdp.stages {
            for c in mdp.costs[t].iter_mut() {
                *c = 0.02 * (t + 1) as f64;
            }
        }
        let policy = random_policy(&mdp, 32);
        let grad = exact_gradient(&mdp, &policy).unwrap();
        assert!(grad.norm() < 1e-12);
    }

    #[test]
    fn single_action_mdp_has_zero_gradient() {
        let mdp = random_mdp(3, 3, 1, 41);
        let policy = StochasticPolicy::uniform(&mdp.state_counts, 1);
        let grad = exact_gradient(&mdp, &policy).unwrap();
        assert!(grad.norm() == 0.0);
    }

    #[test]
    fn deterministic_model_gives_zero_variance_tail_estimates() {
        // Deterministic transitions and a one-hot policy: the MC tail equals
        // the exact tail at every visited pair.
        let stages = 3;
        let states = 2;
        let actions = 2;
        let mut transitions = Vec::new();
        for _ in 0..stages - 1 {
            let mut tensor = vec![0.0; states * actions * states];
            for s in 0..states {
                tensor[(s * actions) * states + s] = 1.0;
                tensor[(s * actions + 1) * states + (1 - s)] = 1.0;
            }
            transitions.push(tensor);
        }
        let mdp = EnumeratedMdp {
            stages,
            state_counts: vec![states; stages],
            action_count: actions,
            transitions,
            costs: vec![
                vec![0.3, 0.1, 0.0, 0.0],
                vec![0.2, 0.5, 0.6, 0.7],
                vec![0.05, 0.15, 0.25, 0.35],
            ],
            initial_state: 0,
        };
        let mut policy = StochasticPolicy::uniform(&mdp.state_counts, actions);
        for t in 0..stages {
            for s in 0..states {
                policy.set_row(
                    t,
                    s as u32,
                    PolicyRow { weights: vec![0.0, 1.0], mass: 1.0 },
                );
            }
        }
        let potentials = mdp.potentials(&policy).unwrap();
        let mut cfg = GbpiConfig { n_paths: 64, min_visits: 1, ..Default::default() };
        cfg.seed = 5;
        let grad = estimate_gradient(&mdp, &mut policy, &cfg, 99).unwrap();
        for (t, table) in grad.stages.iter().enumerate() {
            for (&s, sg) in table {
                for a in &sg.actions {
                    let exact = mdp.action_tail(t, s as usize, a.action as usize, &potentials);
                    assert!(
                        (a.mean_tail - exact).abs() < 1e-12,
                        "tail mismatch at t{t} s{s}"
                    );
                }
            }
        }
    }

    #[test]
    fn visit_counts_are_consistent() {
        let mdp = random_mdp(4, 3, 3, 51);
        let mut policy = random_policy(&mdp, 52);
        let cfg = GbpiConfig { n_paths: 500, min_visits: 1, ..Default::default() };
        let grad = estimate_gradient(&mdp, &mut policy, &cfg, 4).unwrap();
        for table in &grad.stages {
            let mut stage_total = 0usize;
            for sg in table.values() {
                let action_total: usize = sg.actions.iter().map(|a| a.visits).sum();
                assert_eq!(action_total, sg.visits);
                stage_total += sg.visits;
            }
            assert_eq!(stage_total, 500);
        }
    }

    #[test]
    fn mc_gradient_approaches_exact() {
        let mdp = random_mdp(2, 2, 2, 61);
        let mut policy = random_policy(&mdp, 62);
        let exact = exact_gradient(&mdp, &policy).unwrap();
        let cfg = GbpiConfig { n_paths: 10_000, min_visits: 1, ..Default::default() };
        let mc = estimate_gradient(&mdp, &mut policy, &cfg, 63).unwrap();
        for (t, table) in mc.stages.iter().enumerate() {
            for (&s, sg) in table {
                for a in &sg.actions {
                    if a.visits < 100 {
                        continue;
                    }
                    let g_exact = exact.entry(t, s, a.action).unwrap();
                    let g_mc = a.grad.unwrap();
                    let rel = (g_mc - g_exact).abs() / g_exact.abs().max(1e-9);
                    assert!(rel < 0.05, "t{t} s{s} a{}: {g_mc} vs {g_exact}", a.action);
                }
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_policy_unchanged() {
        let mdp = random_mdp(3, 2, 2, 71);
        let mut policy = random_policy(&mdp, 72);
        let before = policy.clone();
        let mut grad = exact_gradient(&mdp, &policy).unwrap();
        for table in grad.stages.iter_mut() {
            for sg in table.values_mut() {
                for a in sg.actions.iter_mut() {
                    a.grad = Some(0.0);
                }
            }
        }
        update_policy(&mut policy, &grad);
        assert_eq!(policy, before);
    }

    #[test]
    fn update_preserves_row_mass_without_clamping() {
        let mdp = random_mdp(4, 3, 3, 81);
        let mut policy = random_policy(&mdp, 82);
        for _ in 0..5 {
            let masses: Vec<Vec<f64>> = (0..mdp.stages)
                .map(|t| {
                    (0..mdp.state_counts[t])
                        .map(|s| policy.row(t, s as u32).unwrap().mass)
                        .collect()
                })
                .collect();
            let grad = exact_gradient(&mdp, &policy).unwrap();
            let stats = update_policy(&mut policy, &grad);
            assert_eq!(stats.clamp_events, 0, "costs are scaled to avoid clamping");
            for t in 0..mdp.stages {
                for s in 0..mdp.state_counts[t] {
                    let new_mass = policy.row(t, s as u32).unwrap().mass;
                    assert!((new_mass - masses[t][s]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn masked_entries_stay_zero_through_updates() {
        let mdp = random_mdp(3, 2, 3, 91);
        let mut policy = random_policy(&mdp, 92);
        policy.mask_infeasible(1, 0, 2);
        for _ in 0..10 {
            let grad = exact_gradient(&mdp, &policy).unwrap();
            update_policy(&mut policy, &grad);
            assert_eq!(policy.row(1, 0).unwrap().weights[2], 0.0);
        }
    }

    #[test]
    fn exact_descent_is_monotone_and_reaches_dp_optimum() {
        let mdp = random_mdp(4, 3, 3, 101);
        let mut policy = StochasticPolicy::uniform(&mdp.state_counts, mdp.action_count);
        let vstar = mdp.solve_dp().unwrap().optimal_cost(0);
        let cfg = GbpiConfig {
            epsilon: 1e-14,
            max_iterations: 4000,
            ..Default::default()
        };
        // The multiplicative update drains suboptimal weight geometrically,
        // with the slowest rate set by the least-visited state; run in
        // blocks until the optimality gap closes.
        let mut gap = f64::INFINITY;
        for _ in 0..20 {
            let run = run_gbpi_exact(&mdp, policy, &cfg).unwrap();
            for pair in run.trace.windows(2) {
                assert!(pair[1].mean_cost <= pair[0].mean_cost + 1e-12);
            }
            policy = run.policy;
            gap = mdp.policy_value(&policy).unwrap() - vstar;
            if gap.abs() < 1e-6 {
                break;
            }
        }
        assert!(gap.abs() < 1e-6, "residual optimality gap {gap}");
    }

    #[test]
    fn huge_epsilon_stops_after_one_iteration() {
        let mdp = random_mdp(3, 2, 2, 111);
        let policy = StochasticPolicy::uniform(&mdp.state_counts, mdp.action_count);
        let cfg = GbpiConfig { epsilon: 1e9, ..Default::default() };
        let run = run_gbpi_exact(&mdp, policy, &cfg).unwrap();
        assert_eq!(run.trace.len(), 1);
    }

    #[test]
    fn performance_difference_identities() {
        let mdp = random_mdp(3, 3, 2, 121);
        let sigma = random_policy(&mdp, 122);
        assert!(performance_difference(&mdp, &sigma, &sigma).unwrap().abs() < 1e-15);

        let mu = random_policy(&mdp, 123);
        let formula = performance_difference(&mdp, &mu, &sigma).unwrap();
        let direct = mdp.policy_value(&mu).unwrap() - mdp.policy_value(&sigma).unwrap();
        assert!((formula - direct).abs() < 1e-10, "{formula} vs {direct}");

        let swapped = performance_difference(&mdp, &sigma, &mu).unwrap();
        assert!((formula + swapped).abs() < 1e-10);
    }

    #[test]
    fn iteration_log_is_json_lines() {
        let records = vec![IterationRecord {
            iteration: 0,
            mean_cost: 1.25,
            grad_norm: 0.5,
            clamp_events: 2,
            wall_time_s: 0.01,
        }];
        let mut buf = Vec::new();
        write_iteration_log(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: IterationRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(parsed.iteration, 0);
        assert_eq!(parsed.clamp_events, 2);
    }
}
