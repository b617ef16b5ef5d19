//! The room control environment: hybrid discrete/continuous simulation of
//! one day under a stochastic policy.
//!
//! The policy observes the quantized state (outdoor temp, outdoor RH, indoor
//! temp, indoor RH, occupancy); the simulator carries the continuous room
//! state between stages. Learning rollouts enforce the comfort band by the
//! mask-and-regenerate loop: an action whose resulting state leaves the PMV
//! band is zeroed at the visited pair and another action is drawn, so every
//! emitted training path is comfortable at all stages. Evaluation replays
//! draw exactly one action per stage and record violations honestly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{ExogenousLevels, MarkovChainSet};
use crate::comfort::{is_comfortable, ComfortModel};
use crate::env::{mix_seed, MaskEvent, McEnvironment, RolloutOutcome, SamplePath, StepRecord, UnmaskEvent};
use crate::error::{CoreError, Result};
use crate::oracle::RevealedScenario;
use crate::policy::{PolicyRow, StochasticPolicy};
use crate::spaces::{ActionSpace, StateSpace, StateTuple};
use crate::thermal::{
    stage_cost, step_dynamics, ContinuousState, ControlInput, ExogenousSample, HvacParams,
    RoomParams,
};

/// Starting point of every simulated day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub out_temp_level: usize,
    pub out_humid_level: usize,
    pub occ_level: usize,
    pub room: ContinuousState,
}

/// Everything needed to simulate the controlled room for one day.
#[derive(Debug, Clone)]
pub struct HvacEnv {
    pub room: RoomParams,
    pub hvac: HvacParams,
    pub chains: MarkovChainSet,
    pub states: StateSpace,
    pub actions: ActionSpace,
    pub comfort: ComfortModel,
    /// Stage length in seconds.
    pub dt: f64,
    /// Solar radiation density on the wall per stage, W/m².
    pub solar: Vec<f64>,
    /// Electricity price per stage, currency/kWh.
    pub price: Vec<f64>,
    /// Device heat gain per occupant, J/s.
    pub device_heat: f64,
    pub initial: InitialCondition,
    /// Comfort-violation penalty used when ranking fallback actions.
    pub penalty: f64,
    /// Decoded control for every action index.
    action_inputs: Vec<ControlInput>,
}

/// Replay of a policy on one revealed scenario without regeneration.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub path: SamplePath,
    pub violations: usize,
}

/// Cost and comfort statistics of a policy over sampled scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenarios: usize,
    pub mean_cost: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    /// Fraction of stage records with PMV inside the band.
    pub comfort_frequency: f64,
    pub violations: usize,
    pub records: usize,
    pub scenario_costs: Vec<f64>,
}

impl HvacEnv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        room: RoomParams,
        hvac: HvacParams,
        chains: MarkovChainSet,
        states: StateSpace,
        actions: ActionSpace,
        comfort: ComfortModel,
        dt: f64,
        solar: Vec<f64>,
        price: Vec<f64>,
        device_heat: f64,
        initial: InitialCondition,
        penalty: f64,
    ) -> Result<Self> {
        room.validate()?;
        hvac.validate()?;
        chains.validate()?;
        let stages = chains.stages;
        if states.stages != stages || solar.len() != stages || price.len() != stages {
            return Err(CoreError::Config(format!(
                "stage counts disagree: chains {stages}, states {}, solar {}, price {}",
                states.stages,
                solar.len(),
                price.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(CoreError::Config("dt must be > 0".into()));
        }
        let action_inputs = (0..actions.len() as u32)
            .map(|a| actions.decode(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            room,
            hvac,
            chains,
            states,
            actions,
            comfort,
            dt,
            solar,
            price,
            device_heat,
            initial,
            penalty,
            action_inputs,
        })
    }

    pub fn stages(&self) -> usize {
        self.chains.stages
    }

    fn initial_levels(&self) -> (usize, usize, usize) {
        (
            self.initial.out_temp_level,
            self.initial.out_humid_level,
            self.initial.occ_level,
        )
    }

    /// Physical exogenous values for the given stage and levels.
    pub fn exo_at(&self, stage: usize, temp: usize, humid: usize, occ: usize) -> ExogenousSample {
        ExogenousSample {
            t_outdoor: self.chains.temp_grid.value(temp),
            rh_outdoor: self.chains.humid_grid.value(humid),
            occupants: self.chains.occ_grid.value(occ),
            solar_wall: self.solar[stage],
            device_heat_per_occupant: self.device_heat,
            price: self.price[stage],
        }
    }

    fn observe(&self, stage: usize, exo: &ExogenousLevels, shadow: &ContinuousState) -> (StateTuple, u32) {
        let tuple = StateTuple {
            out_temp: exo.temp[stage],
            out_humid: exo.humid[stage],
            in_temp: self.states.in_temp.quantize(shadow.t_indoor),
            in_humid: self.states.in_humid.quantize(shadow.rh_indoor),
            occ: exo.occ[stage],
        };
        let idx = self.states.encode(stage, &tuple);
        (tuple, idx)
    }

    /// One candidate action evaluated from the current shadow state.
    fn try_action(
        &self,
        action: u32,
        shadow: &ContinuousState,
        exo: &ExogenousSample,
    ) -> Result<(ContinuousState, f64, f64, bool)> {
        let u = &self.action_inputs[action as usize];
        let next = step_dynamics(&self.room, &self.hvac, shadow, exo, u, self.dt)?;
        let pmv = self.comfort.pmv(next.t_indoor, next.rh_indoor);
        let comfortable = is_comfortable(pmv, &self.comfort.band);
        let cost = stage_cost(&self.room, &self.hvac, shadow, exo, u, self.dt);
        Ok((next, cost, pmv, comfortable))
    }

    /// The least-bad untried action ranked by penalized one-step cost.
    fn least_bad(
        &self,
        banned: &[bool],
        shadow: &ContinuousState,
        exo: &ExogenousSample,
    ) -> Result<Option<u32>> {
        let mut best: Option<(f64, u32)> = None;
        for a in 0..self.action_inputs.len() as u32 {
            if banned[a as usize] {
                continue;
            }
            let (_, cost, _, comfortable) = self.try_action(a, shadow, exo)?;
            let ranked = cost + if comfortable { 0.0 } else { self.penalty };
            if best.map_or(true, |(b, _)| ranked < b) {
                best = Some((ranked, a));
            }
        }
        Ok(best.map(|(_, a)| a))
    }

    /// Learning rollout on a fixed exogenous day: mask-and-regenerate until
    /// every stage is comfortable, or report the visited state as
    /// infeasible.
    pub fn rollout_on(
        &self,
        policy: &StochasticPolicy,
        exo_levels: &ExogenousLevels,
        rng: &mut ChaCha8Rng,
    ) -> Result<RolloutOutcome> {
        let stages = self.stages();
        let mut shadow = self.initial.room;
        let mut steps = Vec::with_capacity(stages);
        let mut masks = Vec::new();
        let mut unmasks = Vec::new();

        for t in 0..stages {
            let (tuple, state_idx) = self.observe(t, exo_levels, &shadow);
            let exo = self.exo_at(t, tuple.out_temp, tuple.out_humid, tuple.occ);
            let row = policy.row(t, state_idx);
            let mut banned = vec![false; self.action_inputs.len()];
            let row_alive = row.map_or(false, |r| r.mass > 0.0);

            loop {
                let drawn = if row_alive {
                    row.and_then(|r| r.draw_excluding(&banned, rng)).map(|a| a as u32)
                } else {
                    None
                };
                let (action, fallback) = match drawn {
                    Some(a) => (a, false),
                    None => match self.least_bad(&banned, &shadow, &exo)? {
                        Some(a) => (a, true),
                        None => {
                            return Err(CoreError::Infeasible { stage: t, state: state_idx })
                        }
                    },
                };

                let (next, cost, pmv, comfortable) = self.try_action(action, &shadow, &exo)?;
                if comfortable {
                    if fallback && !row_alive {
                        unmasks.push(UnmaskEvent { stage: t, state: state_idx, action });
                    }
                    steps.push(StepRecord {
                        stage: t,
                        state: state_idx,
                        action,
                        cost,
                        pmv: Some(pmv),
                        comfortable: true,
                    });
                    shadow = next;
                    break;
                }
                banned[action as usize] = true;
                if row.map_or(false, |r| r.weights[action as usize] > 0.0) {
                    masks.push(MaskEvent { stage: t, state: state_idx, action });
                }
            }
        }
        Ok(RolloutOutcome { path: SamplePath { steps }, masks, unmasks })
    }

    /// Deployment-style replay: draw one action per stage (dead states fall
    /// back to the least-bad action) and record comfort honestly.
    pub fn replay_on(
        &self,
        policy: &StochasticPolicy,
        exo_levels: &ExogenousLevels,
        rng: &mut ChaCha8Rng,
    ) -> Result<ReplayOutcome> {
        let stages = self.stages();
        let mut shadow = self.initial.room;
        let mut steps = Vec::with_capacity(stages);
        let mut violations = 0usize;
        for t in 0..stages {
            let (tuple, state_idx) = self.observe(t, exo_levels, &shadow);
            let exo = self.exo_at(t, tuple.out_temp, tuple.out_humid, tuple.occ);
            let action = match policy.sample_action(t, state_idx, rng) {
                Ok(a) => a,
                Err(CoreError::DeadState { .. }) => self
                    .least_bad(&vec![false; self.action_inputs.len()], &shadow, &exo)?
                    .expect("non-empty action space"),
                Err(e) => return Err(e),
            };
            let (next, cost, pmv, comfortable) = self.try_action(action, &shadow, &exo)?;
            if !comfortable {
                violations += 1;
            }
            steps.push(StepRecord {
                stage: t,
                state: state_idx,
                action,
                cost,
                pmv: Some(pmv),
                comfortable,
            });
            shadow = next;
        }
        Ok(ReplayOutcome { path: SamplePath { steps }, violations })
    }

    /// Sample the exogenous day for scenario `index` of the set identified
    /// by `seed`.
    pub fn scenario_levels(&self, seed: u64, index: usize) -> ExogenousLevels {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64));
        self.chains.sample_day(self.initial_levels(), &mut rng)
    }

    /// The same scenario expressed as fully revealed physical values for the
    /// perfect-information planner.
    pub fn reveal(&self, levels: &ExogenousLevels) -> RevealedScenario {
        let exo = (0..self.stages())
            .map(|t| self.exo_at(t, levels.temp[t], levels.humid[t], levels.occ[t]))
            .collect();
        RevealedScenario { exo, initial: self.initial.room }
    }

    /// Monte Carlo policy evaluation over `scenarios` sampled days: mean and
    /// quantiles of the daily energy cost plus comfort statistics.
    pub fn evaluate_policy(
        &self,
        policy: &StochasticPolicy,
        scenarios: usize,
        seed: u64,
    ) -> Result<EvalSummary> {
        if scenarios == 0 {
            return Err(CoreError::Config("scenarios must be >= 1".into()));
        }
        let replays: Vec<Result<ReplayOutcome>> = (0..scenarios)
            .into_par_iter()
            .map(|i| {
                let levels = self.scenario_levels(seed, i);
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 0x5eed, i as u64));
                self.replay_on(policy, &levels, &mut rng)
            })
            .collect();
        let replays = replays.into_iter().collect::<Result<Vec<_>>>()?;

        let mut costs: Vec<f64> = replays.iter().map(|r| r.path.total_cost()).collect();
        let violations: usize = replays.iter().map(|r| r.violations).sum();
        let records = scenarios * self.stages();
        let mean_cost = costs.iter().sum::<f64>() / scenarios as f64;
        let scenario_costs = costs.clone();
        costs.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| costs[((p * (costs.len() - 1) as f64).round() as usize).min(costs.len() - 1)];
        Ok(EvalSummary {
            scenarios,
            mean_cost,
            p10: q(0.10),
            p25: q(0.25),
            p50: q(0.50),
            p75: q(0.75),
            p90: q(0.90),
            comfort_frequency: 1.0 - violations as f64 / records as f64,
            violations,
            records,
            scenario_costs,
        })
    }

    /// Uniform initial policy over every active state.
    pub fn init_policy_uniform(&self) -> StochasticPolicy {
        let mut policy = StochasticPolicy::empty(self.stages(), self.actions.len());
        for t in 0..self.stages() {
            for idx in 0..self.states.count(t) as u32 {
                policy.set_row(t, idx, PolicyRow::uniform(self.actions.len()));
            }
        }
        policy
    }

    /// Initial policy with infeasible-looking pairs zeroed: uniform weight
    /// over the actions whose one-step result stays inside the given indoor
    /// temperature and humidity boxes (walls assumed at air temperature for
    /// the screen). Rows whose every action fails stay all-zero and are
    /// repaired on first visit.
    pub fn init_policy_screened(
        &self,
        temp_band: (f64, f64),
        rh_band: (f64, f64),
    ) -> StochasticPolicy {
        let mut policy = StochasticPolicy::empty(self.stages(), self.actions.len());
        for t in 0..self.stages() {
            let count = self.states.count(t);
            let rows: Vec<(u32, PolicyRow)> = (0..count as u32)
                .into_par_iter()
                .map(|idx| {
                    let tuple = self.states.decode(t, idx).expect("index within count");
                    let t_in = self.states.in_temp.value(tuple.in_temp);
                    let shadow = ContinuousState {
                        t_indoor: t_in,
                        rh_indoor: self.states.in_humid.value(tuple.in_humid),
                        t_wall_left: t_in,
                        t_wall_right: t_in,
                    };
                    let exo = self.exo_at(t, tuple.out_temp, tuple.out_humid, tuple.occ);
                    let allowed: Vec<bool> = (0..self.actions.len())
                        .map(|a| {
                            let u = &self.action_inputs[a];
                            match step_dynamics(&self.room, &self.hvac, &shadow, &exo, u, self.dt) {
                                Ok(next) => {
                                    next.t_indoor >= temp_band.0
                                        && next.t_indoor <= temp_band.1
                                        && next.rh_indoor >= rh_band.0
                                        && next.rh_indoor <= rh_band.1
                                }
                                Err(_) => false,
                            }
                        })
                        .collect();
                    (idx, PolicyRow::uniform_over(self.actions.len(), &allowed))
                })
                .collect();
            for (idx, row) in rows {
                policy.set_row(t, idx, row);
            }
        }
        policy
    }
}


impl McEnvironment for HvacEnv {
    fn horizon(&self) -> usize {
        self.stages()
    }

    fn action_count(&self) -> usize {
        self.actions.len()
    }

    fn rollout(&self, policy: &StochasticPolicy, rng: &mut ChaCha8Rng) -> Result<RolloutOutcome> {
        let levels = self.chains.sample_day(self.initial_levels(), rng);
        self.rollout_on(policy, &levels, rng)
    }

    fn heldout_cost(&self, policy: &StochasticPolicy, seed: u64, scenarios: usize) -> Result<f64> {
        let costs: Vec<Result<f64>> = (0..scenarios)
            .into_par_iter()
            .map(|i| {
                let levels = self.scenario_levels(seed, i);
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 0x5eed, i as u64));
                Ok(self.replay_on(policy, &levels, &mut rng)?.path.total_cost())
            })
            .collect();
        let costs = costs.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(costs.iter().sum::<f64>() / scenarios.max(1) as f64)
    }
}
