//! Ground-truth solvers: exact backward-induction DP on enumerated MDPs,
//! exact policy evaluation, and a perfect-information optimizer that plans
//! on a fully revealed exogenous day.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::comfort::ComfortModel;
use crate::env::{McEnvironment, RolloutOutcome, SamplePath, StepRecord};
use crate::error::{CoreError, Result};
use crate::grid::LevelGrid;
use crate::policy::StochasticPolicy;
use crate::spaces::ActionSpace;
use crate::thermal::{
    stage_cost, step_dynamics, ContinuousState, ControlInput, ExogenousSample, HvacParams,
    RoomParams,
};

/// Exact-solve size guard: total state-action pairs across the horizon.
const ENUMERATION_LIMIT: usize = 1_000_000;

/// A fully tabulated finite-horizon MDP with (possibly penalty-augmented)
/// stage costs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedMdp {
    pub stages: usize,
    /// States per stage, length `stages`.
    pub state_counts: Vec<usize>,
    pub action_count: usize,
    /// `transitions[t]` is row-major `[s][a][s']` with `s'` indexing stage
    /// `t + 1`; length `stages - 1`.
    pub transitions: Vec<Vec<f64>>,
    /// `costs[t]` is row-major `[s][a]`; length `stages`.
    pub costs: Vec<Vec<f64>>,
    pub initial_state: u32,
}

/// Backward-induction result: optimal values per stage and the deterministic
/// argmin policy (ties broken toward the lowest action index).
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub values: Vec<Vec<f64>>,
    pub actions: Vec<Vec<u32>>,
}

impl DpSolution {
    pub fn optimal_cost(&self, initial_state: u32) -> f64 {
        self.values[0][initial_state as usize]
    }
}

impl EnumeratedMdp {
    pub fn validate(&self) -> Result<()> {
        if self.state_counts.len() != self.stages
            || self.transitions.len() + 1 != self.stages
            || self.costs.len() != self.stages
        {
            return Err(CoreError::GridMismatch("inconsistent stage lists".into()));
        }
        if (self.initial_state as usize) >= self.state_counts[0] {
            return Err(CoreError::OutOfRange("initial state outside stage 0".into()));
        }
        for t in 0..self.stages {
            if self.costs[t].len() != self.state_counts[t] * self.action_count {
                return Err(CoreError::GridMismatch(format!("cost table size at stage {t}")));
            }
            if t + 1 < self.stages {
                let expect = self.state_counts[t] * self.action_count * self.state_counts[t + 1];
                if self.transitions[t].len() != expect {
                    return Err(CoreError::GridMismatch(format!(
                        "transition tensor size at stage {t}"
                    )));
                }
                let next = self.state_counts[t + 1];
                for row in 0..self.state_counts[t] * self.action_count {
                    let p = &self.transitions[t][row * next..(row + 1) * next];
                    let sum: f64 = p.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| !(0.0..=1.0 + 1e-12).contains(&x)) {
                        return Err(CoreError::GridMismatch(format!(
                            "transition row {row} at stage {t} sums to {sum}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn guard_enumerable(&self) -> Result<()> {
        let pairs: usize = self
            .state_counts
            .iter()
            .map(|&s| s * self.action_count)
            .sum();
        if pairs > ENUMERATION_LIMIT {
            return Err(CoreError::TooLarge(format!(
                "{pairs} state-action pairs exceed the enumeration limit"
            )));
        }
        Ok(())
    }

    fn transition_row(&self, t: usize, s: usize, a: usize) -> &[f64] {
        let next = self.state_counts[t + 1];
        let row = (s * self.action_count + a) * next;
        &self.transitions[t][row..row + next]
    }

    pub fn cost(&self, t: usize, s: usize, a: usize) -> f64 {
        self.costs[t][s * self.action_count + a]
    }

    /// Action distribution of `policy` at (t, s): weights normalized by the
    /// row mass.
    fn action_probs(&self, policy: &StochasticPolicy, t: usize, s: usize) -> Result<Vec<f64>> {
        let row = policy
            .row(t, s as u32)
            .ok_or(CoreError::DeadState { stage: t, state: s as u32 })?;
        if row.mass <= 0.0 {
            return Err(CoreError::DeadState { stage: t, state: s as u32 });
        }
        Ok(row.weights.iter().map(|&w| w / row.mass).collect())
    }

    /// Performance potentials V_t(s) under `policy`: expected cost of stages
    /// t..T-1 from state s (V_T = 0).
    pub fn potentials(&self, policy: &StochasticPolicy) -> Result<Vec<Vec<f64>>> {
        let mut values = vec![Vec::new(); self.stages + 1];
        values[self.stages] = vec![0.0; 0];
        let mut next_values = vec![0.0; *self.state_counts.last().unwrap()];
        // Stage T has no states of its own: tail after the last action is 0.
        for t in (0..self.stages).rev() {
            let mut v = vec![0.0; self.state_counts[t]];
            for (s, value) in v.iter_mut().enumerate() {
                let probs = self.action_probs(policy, t, s)?;
                let mut acc = 0.0;
                for (a, &pa) in probs.iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    let mut q = self.cost(t, s, a);
                    if t + 1 < self.stages {
                        q += self
                            .transition_row(t, s, a)
                            .iter()
                            .zip(&next_values)
                            .map(|(&p, &vn)| p * vn)
                            .sum::<f64>();
                    }
                    acc += pa * q;
                }
                *value = acc;
            }
            next_values = v.clone();
            values[t] = v;
        }
        values.pop();
        Ok(values)
    }

    /// Expected tail cost after taking action `a` at (t, s), excluding the
    /// stage-t cost itself.
    pub fn action_tail(&self, t: usize, s: usize, a: usize, potentials: &[Vec<f64>]) -> f64 {
        if t + 1 >= self.stages {
            return 0.0;
        }
        self.transition_row(t, s, a)
            .iter()
            .zip(&potentials[t + 1])
            .map(|(&p, &v)| p * v)
            .sum()
    }

    /// Exact J(policy; initial_state).
    pub fn policy_value(&self, policy: &StochasticPolicy) -> Result<f64> {
        let potentials = self.potentials(policy)?;
        Ok(potentials[0][self.initial_state as usize])
    }

    /// Exact state distribution under `policy` from the initial state.
    pub fn occupancy(&self, policy: &StochasticPolicy) -> Result<Vec<Vec<f64>>> {
        let mut pi = vec![vec![0.0; self.state_counts[0]]; 1];
        pi[0][self.initial_state as usize] = 1.0;
        for t in 0..self.stages - 1 {
            let mut next = vec![0.0; self.state_counts[t + 1]];
            for s in 0..self.state_counts[t] {
                if pi[t][s] == 0.0 {
                    continue;
                }
                let probs = self.action_probs(policy, t, s)?;
                for (a, &pa) in probs.iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for (sn, &p) in self.transition_row(t, s, a).iter().enumerate() {
                        next[sn] += pi[t][s] * pa * p;
                    }
                }
            }
            pi.push(next);
        }
        Ok(pi)
    }

    /// Backward induction: V_t(s) = min_a [ r_t(s,a) + sum p V_{t+1} ].
    pub fn solve_dp(&self) -> Result<DpSolution> {
        self.validate()?;
        self.guard_enumerable()?;
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.stages];
        let mut actions: Vec<Vec<u32>> = vec![Vec::new(); self.stages];
        let mut next_values: Vec<f64> = Vec::new();
        for t in (0..self.stages).rev() {
            let mut v = vec![f64::INFINITY; self.state_counts[t]];
            let mut act = vec![0u32; self.state_counts[t]];
            for s in 0..self.state_counts[t] {
                let mut best = f64::INFINITY;
                let mut best_a = 0u32;
                for a in 0..self.action_count {
                    let mut q = self.cost(t, s, a);
                    if t + 1 < self.stages {
                        q += self
                            .transition_row(t, s, a)
                            .iter()
                            .zip(&next_values)
                            .map(|(&p, &vn)| p * vn)
                            .sum::<f64>();
                    }
                    if q < best {
                        best = q;
                        best_a = a as u32;
                    }
                }
                v[s] = best;
                act[s] = best_a;
            }
            next_values = v.clone();
            values[t] = v;
            actions[t] = act;
        }
        Ok(DpSolution { values, actions })
    }
}

impl McEnvironment for EnumeratedMdp {
    fn horizon(&self) -> usize {
        self.stages
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn rollout(&self, policy: &StochasticPolicy, rng: &mut ChaCha8Rng) -> Result<RolloutOutcome> {
        let mut state = self.initial_state as usize;
        let mut steps = Vec::with_capacity(self.stages);
        for t in 0..self.stages {
            let action = policy.sample_action(t, state as u32, rng)? as usize;
            steps.push(StepRecord {
                stage: t,
                state: state as u32,
                action: action as u32,
                cost: self.cost(t, state, action),
                pmv: None,
                comfortable: true,
            });
            if t + 1 < self.stages {
                state = crate::chains::draw_row(self.transition_row(t, state, action), rng);
            }
        }
        Ok(RolloutOutcome { path: SamplePath { steps }, masks: Vec::new(), unmasks: Vec::new() })
    }

    fn heldout_cost(&self, policy: &StochasticPolicy, _seed: u64, _scenarios: usize) -> Result<f64> {
        // Enumerable model: the held-out trace is the exact expectation.
        self.policy_value(policy)
    }
}

/// Quantization grids and physics for the perfect-information planner: the
/// continuous room state is snapped to (indoor temp, indoor RH, left wall,
/// right wall) levels after every step, re-using the learner's indoor grids.
#[derive(Debug, Clone)]
pub struct QuantizedRoomDp {
    pub room: RoomParams,
    pub hvac: HvacParams,
    pub actions: ActionSpace,
    pub comfort: ComfortModel,
    pub in_temp: LevelGrid,
    pub in_humid: LevelGrid,
    pub wall: LevelGrid,
    pub dt: f64,
}

/// One fully revealed exogenous day.
#[derive(Debug, Clone)]
pub struct RevealedScenario {
    pub exo: Vec<ExogenousSample>,
    pub initial: ContinuousState,
}

/// Plan found by [`solve_perfect_information`].
#[derive(Debug, Clone)]
pub struct PerfectInfoSolution {
    pub controls: Vec<ControlInput>,
    /// Optimal total energy cost on the quantized model.
    pub cost: f64,
    /// Quantized state trajectory, length T + 1.
    pub states: Vec<ContinuousState>,
}

impl QuantizedRoomDp {
    fn state_count(&self) -> usize {
        self.in_temp.count * self.in_humid.count * self.wall.count * self.wall.count
    }

    fn snap(&self, s: &ContinuousState) -> usize {
        let it = self.in_temp.quantize(s.t_indoor);
        let ih = self.in_humid.quantize(s.rh_indoor);
        let wl = self.wall.quantize(s.t_wall_left);
        let wr = self.wall.quantize(s.t_wall_right);
        ((it * self.in_humid.count + ih) * self.wall.count + wl) * self.wall.count + wr
    }

    fn unsnap(&self, idx: usize) -> ContinuousState {
        let wr = idx % self.wall.count;
        let rest = idx / self.wall.count;
        let wl = rest % self.wall.count;
        let rest = rest / self.wall.count;
        let ih = rest % self.in_humid.count;
        let it = rest / self.in_humid.count;
        ContinuousState {
            t_indoor: self.in_temp.value(it),
            rh_indoor: self.in_humid.value(ih),
            t_wall_left: self.wall.value(wl),
            t_wall_right: self.wall.value(wr),
        }
    }

    /// Step from a grid point and snap back, rejecting results that leave
    /// the indoor grids by more than one step (the quantized model does not
    /// extrapolate past its own range).
    fn quantized_step(
        &self,
        state: &ContinuousState,
        exo: &ExogenousSample,
        u: &ControlInput,
    ) -> Option<(usize, f64)> {
        let next = step_dynamics(&self.room, &self.hvac, state, exo, u, self.dt).ok()?;
        if next.t_indoor < self.in_temp.lo - self.in_temp.step
            || next.t_indoor > self.in_temp.hi() + self.in_temp.step
            || next.rh_indoor < self.in_humid.lo - self.in_humid.step
            || next.rh_indoor > self.in_humid.hi() + self.in_humid.step
        {
            return None;
        }
        let cost = stage_cost(&self.room, &self.hvac, state, exo, u, self.dt);
        Some((self.snap(&next), cost))
    }
}

/// Deterministic optimal control for one revealed scenario, by stagewise
/// backward induction on the quantized continuous state subject to the PMV
/// band at every post-action state.
pub fn solve_perfect_information(
    cfg: &QuantizedRoomDp,
    scenario: &RevealedScenario,
) -> Result<PerfectInfoSolution> {
    let stages = scenario.exo.len();
    let n = cfg.state_count();
    if n * cfg.actions.len() * stages > 40 * ENUMERATION_LIMIT {
        return Err(CoreError::TooLarge(format!(
            "{} quantized state-action-stage triples",
            n * cfg.actions.len() * stages
        )));
    }

    // Comfort of every indoor grid point; walls do not enter the PMV.
    let comfort_ok: Vec<bool> = (0..cfg.in_temp.count * cfg.in_humid.count)
        .map(|k| {
            let it = k / cfg.in_humid.count;
            let ih = k % cfg.in_humid.count;
            cfg.comfort
                .comfortable(cfg.in_temp.value(it), cfg.in_humid.value(ih))
        })
        .collect();
    let idx_comfortable = |idx: usize| {
        let pair = idx / (cfg.wall.count * cfg.wall.count);
        comfort_ok[pair]
    };

    let controls: Vec<ControlInput> = (0..cfg.actions.len())
        .map(|a| cfg.actions.decode(a as u32).expect("action within space"))
        .collect();

    let mut value = vec![0.0f64; n];
    let mut best_action: Vec<Vec<u32>> = Vec::with_capacity(stages);
    for t in (0..stages).rev() {
        let exo = &scenario.exo[t];
        let stage: Vec<(f64, u32)> = (0..n)
            .into_par_iter()
            .map(|s| {
                let from = cfg.unsnap(s);
                let mut best = (f64::INFINITY, 0u32);
                for (a, u) in controls.iter().enumerate() {
                    let Some((next, cost)) = cfg.quantized_step(&from, exo, u) else {
                        continue;
                    };
                    if !idx_comfortable(next) {
                        continue;
                    }
                    let q = cost + value[next];
                    if q < best.0 {
                        best = (q, a as u32);
                    }
                }
                best
            })
            .collect();
        value = stage.iter().map(|&(v, _)| v).collect();
        best_action.push(stage.iter().map(|&(_, a)| a).collect());
    }
    best_action.reverse();

    let start = cfg.snap(&scenario.initial);
    if !value[start].is_finite() {
        return Err(CoreError::Infeasible { stage: 0, state: start as u32 });
    }

    // Forward pass replays the argmin plan on the quantized model.
    let mut states = vec![cfg.unsnap(start)];
    let mut plan = Vec::with_capacity(stages);
    let mut cost = 0.0;
    let mut idx = start;
    for t in 0..stages {
        let a = best_action[t][idx];
        let u = controls[a as usize];
        let (next, c) = cfg
            .quantized_step(&states[t], &scenario.exo[t], &u)
            .expect("planned action is feasible");
        plan.push(u);
        cost += c;
        idx = next;
        states.push(cfg.unsnap(next));
    }
    Ok(PerfectInfoSolution { controls: plan, cost, states })
}
