//! The Monte Carlo environment abstraction shared by the learner.
//!
//! Both the full room environment and enumerated test MDPs generate sample
//! paths under a stochastic policy; the learner only needs paths, the
//! comfort-mask events discovered along the way, and a held-out cost
//! evaluation for its per-iteration trace.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::policy::StochasticPolicy;

/// One stage of a sample path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub stage: usize,
    pub state: u32,
    pub action: u32,
    pub cost: f64,
    /// Comfort index of the resulting room state; absent for abstract MDPs.
    pub pmv: Option<f64>,
    pub comfortable: bool,
}

/// A full simulated day: one record per stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SamplePath {
    pub steps: Vec<StepRecord>,
}

impl SamplePath {
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    /// Sum of stage costs strictly after `stage`.
    pub fn tail_cost(&self, stage: usize) -> f64 {
        self.steps[stage + 1..].iter().map(|s| s.cost).sum()
    }
}

/// A state-action pair that violated the comfort constraint during path
/// generation and must be zeroed in the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MaskEvent {
    pub stage: usize,
    pub state: u32,
    pub action: u32,
}

/// A dead-state repair: the all-zero row at (stage, state) was given the
/// least-bad action as a fresh deterministic rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct UnmaskEvent {
    pub stage: usize,
    pub state: u32,
    pub action: u32,
}

/// Result of one rollout.
#[derive(Debug, Clone, Default)]
pub struct RolloutOutcome {
    pub path: SamplePath,
    pub masks: Vec<MaskEvent>,
    pub unmasks: Vec<UnmaskEvent>,
}

/// An environment the Monte Carlo learner can sample.
pub trait McEnvironment: Sync {
    /// Number of decision stages T.
    fn horizon(&self) -> usize;

    /// Size of the action space.
    fn action_count(&self) -> usize;

    /// Generate one feasible sample path by executing `policy`.
    fn rollout(&self, policy: &StochasticPolicy, rng: &mut ChaCha8Rng) -> Result<RolloutOutcome>;

    /// Mean policy cost on a fixed held-out scenario set (exact where the
    /// model is enumerable); equal seeds must give the same scenario set so
    /// per-iteration traces are comparable.
    fn heldout_cost(&self, policy: &StochasticPolicy, seed: u64, scenarios: usize) -> Result<f64>;
}

/// SplitMix64 step, used to derive independent per-path seeds from a master
/// seed so parallel generation is scheduling-independent.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
