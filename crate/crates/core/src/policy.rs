//! Stochastic policy tables: per-stage weight rows over actions, masking,
//! sampling, and the versioned on-disk format.
//!
//! A row holds one weight per action in [0, 1] plus its recorded mass Σ (the
//! row sum). Σ is carried explicitly: the learner's update step preserves it
//! rather than assuming 1, and masking re-records it. Draws normalize by the
//! current mass, so masked entries (exactly 0) are never sampled.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::spaces::{ActionSpace, StateSpace};

const POLICY_MAGIC: &str = "hvac-mdp-policy v1";

/// One state's weights over the action space.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRow {
    pub weights: Vec<f64>,
    /// Recorded row mass Σ; kept equal to the weight sum by every mutation.
    pub mass: f64,
}

impl PolicyRow {
    pub fn uniform(actions: usize) -> Self {
        Self {
            weights: vec![1.0 / actions as f64; actions],
            mass: 1.0,
        }
    }

    /// Uniform over `allowed` entries, zero elsewhere, mass 1 (empty
    /// `allowed` gives the all-zero row).
    pub fn uniform_over(actions: usize, allowed: &[bool]) -> Self {
        let n = allowed.iter().filter(|&&a| a).count();
        if n == 0 {
            return Self { weights: vec![0.0; actions], mass: 0.0 };
        }
        let w = 1.0 / n as f64;
        let weights = (0..actions).map(|a| if allowed[a] { w } else { 0.0 }).collect();
        Self { weights, mass: 1.0 }
    }

    pub fn recompute_mass(&mut self) {
        self.mass = self.weights.iter().sum();
    }

    /// Categorical draw proportional to the weights; `None` when no mass.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        self.draw_excluding(&[], rng)
    }

    /// Draw over the entries not listed in `banned` (a bitmask when
    /// non-empty); `None` when the surviving mass is zero.
    pub fn draw_excluding(&self, banned: &[bool], rng: &mut ChaCha8Rng) -> Option<usize> {
        let allowed_weight = |a: usize| {
            if banned.get(a).copied().unwrap_or(false) {
                0.0
            } else {
                self.weights[a]
            }
        };
        let total: f64 = (0..self.weights.len()).map(allowed_weight).sum();
        if total <= 0.0 {
            return None;
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = None;
        for a in 0..self.weights.len() {
            let w = allowed_weight(a);
            if w > 0.0 {
                acc += w;
                last_positive = Some(a);
                if u < acc {
                    return Some(a);
                }
            }
        }
        last_positive
    }
}

/// Per-stage tables mapping state indices to weight rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    pub action_count: usize,
    pub stages: Vec<BTreeMap<u32, PolicyRow>>,
}

impl StochasticPolicy {
    pub fn empty(stages: usize, action_count: usize) -> Self {
        Self {
            action_count,
            stages: vec![BTreeMap::new(); stages],
        }
    }

    /// Dense uniform policy over enumerated per-stage state counts.
    pub fn uniform(state_counts: &[usize], action_count: usize) -> Self {
        let stages = state_counts
            .iter()
            .map(|&n| {
                (0..n as u32)
                    .map(|s| (s, PolicyRow::uniform(action_count)))
                    .collect()
            })
            .collect();
        Self { action_count, stages }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn row(&self, stage: usize, state: u32) -> Option<&PolicyRow> {
        self.stages[stage].get(&state)
    }

    pub fn row_mut(&mut self, stage: usize, state: u32) -> Option<&mut PolicyRow> {
        self.stages[stage].get_mut(&state)
    }

    pub fn set_row(&mut self, stage: usize, state: u32, row: PolicyRow) {
        self.stages[stage].insert(state, row);
    }

    /// Draw an action at (stage, state). Fails with `DeadState` when the row
    /// is missing or carries no mass.
    pub fn sample_action(&self, stage: usize, state: u32, rng: &mut ChaCha8Rng) -> Result<u32> {
        let row = self
            .row(stage, state)
            .ok_or(CoreError::DeadState { stage, state })?;
        row.draw(rng)
            .map(|a| a as u32)
            .ok_or(CoreError::DeadState { stage, state })
    }

    /// Zero the weight of (stage, state, action) and re-record the row mass.
    /// Masking an already-zero entry is a no-op.
    pub fn mask_infeasible(&mut self, stage: usize, state: u32, action: u32) {
        if let Some(row) = self.stages[stage].get_mut(&state) {
            if row.weights[action as usize] != 0.0 {
                row.weights[action as usize] = 0.0;
                row.recompute_mass();
            }
        }
    }

    /// Total number of materialized rows.
    pub fn row_count(&self) -> usize {
        self.stages.iter().map(|m| m.len()).sum()
    }
}

/// Self-describing header of a policy file. The grids and action levels are
/// embedded so a loaded policy can be checked against the runtime config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFileHeader {
    pub stages: usize,
    pub action_count: usize,
    pub state_space: Option<StateSpace>,
    pub action_space: Option<ActionSpace>,
}

/// Write the versioned policy file: magic line, JSON header line, then
/// sparse rows in deterministic (stage, state, action) order. Weights use
/// the shortest exact decimal form, so save -> load -> save is byte-stable.
pub fn write_policy<W: Write>(
    policy: &StochasticPolicy,
    header: &PolicyFileHeader,
    mut out: W,
) -> Result<()> {
    if header.stages != policy.horizon() || header.action_count != policy.action_count {
        return Err(CoreError::Config("header does not match policy shape".into()));
    }
    writeln!(out, "{POLICY_MAGIC}")?;
    let header_json = serde_json::to_string(header)
        .map_err(|e| CoreError::Corrupt(format!("header encode: {e}")))?;
    writeln!(out, "{header_json}")?;
    for (t, table) in policy.stages.iter().enumerate() {
        for (&state, row) in table {
            writeln!(out, "row {t} {state} {}", row.mass)?;
            for (a, &w) in row.weights.iter().enumerate() {
                if w != 0.0 {
                    writeln!(out, "w {a} {w}")?;
                }
            }
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

/// Read a policy file written by [`write_policy`].
pub fn read_policy<R: Read>(input: R) -> Result<(StochasticPolicy, PolicyFileHeader)> {
    let mut lines = BufReader::new(input).lines();
    let magic = lines
        .next()
        .ok_or_else(|| CoreError::Corrupt("empty policy file".into()))??;
    if magic != POLICY_MAGIC {
        return Err(CoreError::VersionMismatch(format!(
            "expected {POLICY_MAGIC:?}, found {magic:?}"
        )));
    }
    let header_line = lines
        .next()
        .ok_or_else(|| CoreError::Corrupt("missing header".into()))??;
    let header: PolicyFileHeader = serde_json::from_str(&header_line)
        .map_err(|e| CoreError::Corrupt(format!("header decode: {e}")))?;

    let mut policy = StochasticPolicy::empty(header.stages, header.action_count);
    let mut current: Option<(usize, u32)> = None;
    let mut terminated = false;
    for line in lines {
        let line = line?;
        if line == "end" {
            terminated = true;
            break;
        }
        let mut parts = line.split_ascii_whitespace();
        match parts.next() {
            Some("row") => {
                let t: usize = parse_field(parts.next(), "stage")?;
                let state: u32 = parse_field(parts.next(), "state")?;
                let mass: f64 = parse_field(parts.next(), "mass")?;
                if t >= header.stages {
                    return Err(CoreError::Corrupt(format!("stage {t} outside horizon")));
                }
                policy.stages[t].insert(
                    state,
                    PolicyRow { weights: vec![0.0; header.action_count], mass },
                );
                current = Some((t, state));
            }
            Some("w") => {
                let (t, state) = current
                    .ok_or_else(|| CoreError::Corrupt("weight before any row".into()))?;
                let a: usize = parse_field(parts.next(), "action")?;
                let w: f64 = parse_field(parts.next(), "weight")?;
                if a >= header.action_count {
                    return Err(CoreError::Corrupt(format!("action {a} outside space")));
                }
                let row = policy.stages[t].get_mut(&state).expect("current row exists");
                row.weights[a] = w;
            }
            other => {
                return Err(CoreError::Corrupt(format!("unexpected line {other:?}")));
            }
        }
    }
    if !terminated {
        return Err(CoreError::Corrupt("missing end marker (truncated file)".into()));
    }
    for table in &policy.stages {
        for (state, row) in table {
            let sum: f64 = row.weights.iter().sum();
            if (sum - row.mass).abs() > 1e-9 {
                return Err(CoreError::Corrupt(format!(
                    "row {state}: recorded mass {} but weights sum to {sum}",
                    row.mass
                )));
            }
        }
    }
    Ok((policy, header))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .ok_or_else(|| CoreError::Corrupt(format!("missing {name}")))?
        .parse()
        .map_err(|_| CoreError::Corrupt(format!("unparseable {name}")))
}

pub fn save_policy(policy: &StochasticPolicy, header: &PolicyFileHeader, path: &Path) -> Result<()> {
    write_policy(policy, header, std::fs::File::create(path)?)
}

/// Load and verify the embedded header against the expected one; a grid or
/// action-level difference is a version mismatch.
pub fn load_policy_checked(
    path: &Path,
    expected: &PolicyFileHeader,
) -> Result<StochasticPolicy> {
    let (policy, header) = read_policy(std::fs::File::open(path)?)?;
    if &header != expected {
        return Err(CoreError::VersionMismatch(
            "policy file header does not match the configured spaces".into(),
        ));
    }
    Ok(policy)
}

pub fn load_policy(path: &Path) -> Result<(StochasticPolicy, PolicyFileHeader)> {
    read_policy(std::fs::File::open(path)?)
}
