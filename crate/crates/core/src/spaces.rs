//! Discretized state and action spaces with flat index codecs.
//!
//! The state at stage `t` is the level tuple (outdoor temp, outdoor RH,
//! indoor temp, indoor RH, occupancy). Outdoor components can be restricted,
//! per stage, to the levels observed in the estimation data plus a margin;
//! levels outside the window map to the nearest active one, so the flat
//! index codec is a bijection on the active subset.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::LevelGrid;
use crate::thermal::{ControlInput, HvacParams};

/// Level tuple identifying a discretized system state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateTuple {
    pub out_temp: usize,
    pub out_humid: usize,
    pub in_temp: usize,
    pub in_humid: usize,
    pub occ: usize,
}

/// The five component grids plus per-stage active windows for the outdoor
/// components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub stages: usize,
    pub out_temp: LevelGrid,
    pub out_humid: LevelGrid,
    pub in_temp: LevelGrid,
    pub in_humid: LevelGrid,
    pub occ: LevelGrid,
    /// Active outdoor-temperature levels per stage, sorted ascending.
    active_temp: Vec<Vec<usize>>,
    /// Active outdoor-humidity levels per stage, sorted ascending.
    active_humid: Vec<Vec<usize>>,
}

impl StateSpace {
    /// All levels active at every stage.
    pub fn full(
        stages: usize,
        out_temp: LevelGrid,
        out_humid: LevelGrid,
        in_temp: LevelGrid,
        in_humid: LevelGrid,
        occ: LevelGrid,
    ) -> Self {
        Self {
            stages,
            out_temp,
            out_humid,
            in_temp,
            in_humid,
            occ,
            active_temp: vec![(0..out_temp.count).collect(); stages],
            active_humid: vec![(0..out_humid.count).collect(); stages],
        }
    }

    /// Restrict the outdoor components to the per-stage levels seen in the
    /// data, widened by `margin` levels on each side. Stages with no
    /// observations keep the full range.
    pub fn windowed(
        stages: usize,
        out_temp: LevelGrid,
        out_humid: LevelGrid,
        in_temp: LevelGrid,
        in_humid: LevelGrid,
        occ: LevelGrid,
        observed_temp: &[Vec<usize>],
        observed_humid: &[Vec<usize>],
        margin: usize,
    ) -> Result<Self> {
        if observed_temp.len() != stages || observed_humid.len() != stages {
            return Err(CoreError::GridMismatch(format!(
                "observed level lists cover {} / {} stages, expected {stages}",
                observed_temp.len(),
                observed_humid.len()
            )));
        }
        let widen = |obs: &[usize], count: usize| -> Vec<usize> {
            if obs.is_empty() {
                return (0..count).collect();
            }
            let mut active = vec![false; count];
            for &l in obs {
                let lo = l.saturating_sub(margin);
                let hi = (l + margin).min(count - 1);
                for a in active.iter_mut().take(hi + 1).skip(lo) {
                    *a = true;
                }
            }
            (0..count).filter(|&l| active[l]).collect()
        };
        Ok(Self {
            stages,
            out_temp,
            out_humid,
            in_temp,
            in_humid,
            occ,
            active_temp: observed_temp
                .iter()
                .map(|obs| widen(obs, out_temp.count))
                .collect(),
            active_humid: observed_humid
                .iter()
                .map(|obs| widen(obs, out_humid.count))
                .collect(),
        })
    }

    pub fn active_temp_levels(&self, stage: usize) -> &[usize] {
        &self.active_temp[stage]
    }

    pub fn active_humid_levels(&self, stage: usize) -> &[usize] {
        &self.active_humid[stage]
    }

    /// Number of indexable states at `stage`.
    pub fn count(&self, stage: usize) -> usize {
        self.active_temp[stage].len()
            * self.active_humid[stage].len()
            * self.in_temp.count
            * self.in_humid.count
            * self.occ.count
    }

    fn nearest_position(active: &[usize], level: usize) -> usize {
        match active.binary_search(&level) {
            Ok(pos) => pos,
            Err(ins) => {
                if ins == 0 {
                    0
                } else if ins == active.len() {
                    active.len() - 1
                } else {
                    // Between two active levels: pick the closer one.
                    let below = active[ins - 1];
                    let above = active[ins];
                    if level - below <= above - level {
                        ins - 1
                    } else {
                        ins
                    }
                }
            }
        }
    }

    /// Flat index of a tuple at `stage`; outdoor levels outside the active
    /// window snap to the nearest active level first.
    pub fn encode(&self, stage: usize, s: &StateTuple) -> u32 {
        let pt = Self::nearest_position(&self.active_temp[stage], s.out_temp);
        let ph = Self::nearest_position(&self.active_humid[stage], s.out_humid);
        let mut idx = pt;
        idx = idx * self.active_humid[stage].len() + ph;
        idx = idx * self.in_temp.count + s.in_temp.min(self.in_temp.count - 1);
        idx = idx * self.in_humid.count + s.in_humid.min(self.in_humid.count - 1);
        idx = idx * self.occ.count + s.occ.min(self.occ.count - 1);
        idx as u32
    }

    pub fn decode(&self, stage: usize, idx: u32) -> Result<StateTuple> {
        if (idx as usize) >= self.count(stage) {
            return Err(CoreError::OutOfRange(format!(
                "state index {idx} outside stage {stage} space of {}",
                self.count(stage)
            )));
        }
        let mut rest = idx as usize;
        let occ = rest % self.occ.count;
        rest /= self.occ.count;
        let in_humid = rest % self.in_humid.count;
        rest /= self.in_humid.count;
        let in_temp = rest % self.in_temp.count;
        rest /= self.in_temp.count;
        let ph = rest % self.active_humid[stage].len();
        let pt = rest / self.active_humid[stage].len();
        Ok(StateTuple {
            out_temp: self.active_temp[stage][pt],
            out_humid: self.active_humid[stage][ph],
            in_temp,
            in_humid,
            occ,
        })
    }

    /// Iterate all tuples of the active subset at `stage` in index order.
    pub fn iter_active(&self, stage: usize) -> impl Iterator<Item = StateTuple> + '_ {
        let n = self.count(stage);
        (0..n as u32).map(move |i| self.decode(stage, i).expect("index within count"))
    }
}

/// Discretized action space: one level list per control, row-major codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub fau_flows: Vec<f64>,
    pub fau_temps: Vec<f64>,
    pub fcu_flows: Vec<f64>,
    pub fcu_temps: Vec<f64>,
}

/// `n` equally spaced values spanning [lo, hi].
fn equal_levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

impl ActionSpace {
    /// Build from supply-temperature lists and equally divided flow ranges.
    pub fn new(
        hvac: &HvacParams,
        fau_flow_levels: usize,
        fcu_flow_levels: usize,
        fau_temps: Vec<f64>,
        fcu_temps: Vec<f64>,
    ) -> Result<Self> {
        let space = Self {
            fau_flows: equal_levels(hvac.fau_flow_bounds.lo, hvac.fau_flow_bounds.hi, fau_flow_levels),
            fau_temps,
            fcu_flows: equal_levels(hvac.fcu_flow_bounds.lo, hvac.fcu_flow_bounds.hi, fcu_flow_levels),
            fcu_temps,
        };
        for k in 0..space.len() {
            let u = space.decode(k as u32)?;
            if !u.within(hvac) {
                return Err(CoreError::Config(format!(
                    "decoded action {u:?} violates actuator bounds"
                )));
            }
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.fau_flows.len() * self.fau_temps.len() * self.fcu_flows.len() * self.fcu_temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decode(&self, idx: u32) -> Result<ControlInput> {
        if (idx as usize) >= self.len() {
            return Err(CoreError::OutOfRange(format!(
                "action index {idx} outside space of {}",
                self.len()
            )));
        }
        let mut rest = idx as usize;
        let t_fcu = self.fcu_temps[rest % self.fcu_temps.len()];
        rest /= self.fcu_temps.len();
        let g_fcu = self.fcu_flows[rest % self.fcu_flows.len()];
        rest /= self.fcu_flows.len();
        let t_fau = self.fau_temps[rest % self.fau_temps.len()];
        rest /= self.fau_temps.len();
        let g_fau = self.fau_flows[rest];
        Ok(ControlInput { g_fau, t_fau, g_fcu, t_fcu })
    }

    pub fn encode(&self, gf: usize, tf: usize, gc: usize, tc: usize) -> u32 {
        let mut idx = gf;
        idx = idx * self.fau_temps.len() + tf;
        idx = idx * self.fcu_flows.len() + gc;
        idx = idx * self.fcu_temps.len() + tc;
        idx as u32
    }
}
