//! Per-stage Markov chains for outdoor temperature, outdoor humidity, and
//! occupancy: counting estimators, scenario sampling, and synthetic
//! occupancy traces.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::LevelGrid;
use crate::weather::WeatherSeries;

/// Row-stochastic per-stage transition matrices for the three exogenous
/// quantities, together with the level grids they are defined on.
///
/// `temp[t]` is the `L x L` row-major matrix governing the level transition
/// from stage `t` to `t + 1`; there are `stages - 1` of them per quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChainSet {
    pub stages: usize,
    pub temp_grid: LevelGrid,
    pub humid_grid: LevelGrid,
    pub occ_grid: LevelGrid,
    pub temp: Vec<Vec<f64>>,
    pub humid: Vec<Vec<f64>>,
    pub occ: Vec<Vec<f64>>,
}

/// One sampled day of exogenous levels, each of length `stages`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousLevels {
    pub temp: Vec<usize>,
    pub humid: Vec<usize>,
    pub occ: Vec<usize>,
}

const ROW_SUM_TOL: f64 = 1e-9;

/// Maximum-likelihood counting estimator for one quantity:
/// `p[t][i][j] = count(i at t, j at t+1) / count(i at t)`.
/// Levels never visited at a stage fall back to the self-transition row.
pub fn estimate_stage_transitions(
    level_days: &[Vec<usize>],
    levels: usize,
    stages: usize,
) -> Result<Vec<Vec<f64>>> {
    if level_days.is_empty() {
        return Err(CoreError::EmptyData("no days to estimate from".into()));
    }
    for (d, day) in level_days.iter().enumerate() {
        if day.len() != stages {
            return Err(CoreError::GridMismatch(format!(
                "day {d} has {} stages, expected {stages}",
                day.len()
            )));
        }
        if let Some(&bad) = day.iter().find(|&&l| l >= levels) {
            return Err(CoreError::GridMismatch(format!(
                "day {d} contains level {bad} outside grid of {levels}"
            )));
        }
    }

    let mut matrices = Vec::with_capacity(stages - 1);
    for t in 0..stages - 1 {
        let mut counts = vec![0u64; levels * levels];
        for day in level_days {
            counts[day[t] * levels + day[t + 1]] += 1;
        }
        let mut matrix = vec![0.0; levels * levels];
        for i in 0..levels {
            let row_total: u64 = counts[i * levels..(i + 1) * levels].iter().sum();
            if row_total == 0 {
                matrix[i * levels + i] = 1.0;
            } else {
                for j in 0..levels {
                    matrix[i * levels + j] = counts[i * levels + j] as f64 / row_total as f64;
                }
            }
        }
        matrices.push(matrix);
    }
    Ok(matrices)
}

/// Estimate all three chains from weather data and occupancy level traces.
///
/// Weather days are resampled to `stages` windows and quantized on the
/// grids; occupancy traces are already level sequences of length `stages`.
pub fn estimate_chains(
    weather: &WeatherSeries,
    occupancy_days: &[Vec<usize>],
    temp_grid: LevelGrid,
    humid_grid: LevelGrid,
    occ_grid: LevelGrid,
    stages: usize,
) -> Result<MarkovChainSet> {
    let stage_days = weather.resample(stages)?;
    let temp_days: Vec<Vec<usize>> = stage_days
        .iter()
        .map(|d| d.temp_c.iter().map(|&x| temp_grid.quantize(x)).collect())
        .collect();
    let humid_days: Vec<Vec<usize>> = stage_days
        .iter()
        .map(|d| d.rh.iter().map(|&x| humid_grid.quantize(x)).collect())
        .collect();

    let set = MarkovChainSet {
        stages,
        temp_grid,
        humid_grid,
        occ_grid,
        temp: estimate_stage_transitions(&temp_days, temp_grid.count, stages)?,
        humid: estimate_stage_transitions(&humid_days, humid_grid.count, stages)?,
        occ: estimate_stage_transitions(occupancy_days, occ_grid.count, stages)?,
    };
    set.validate()?;
    Ok(set)
}

/// Per-stage levels of outdoor temperature observed in the estimation data,
/// used to restrict the learner's state space to levels that actually occur.
pub fn observed_levels(
    level_days: &[Vec<usize>],
    levels: usize,
    stages: usize,
) -> Vec<Vec<usize>> {
    let mut seen = vec![vec![false; levels]; stages];
    for day in level_days {
        for (t, &l) in day.iter().enumerate().take(stages) {
            seen[t][l] = true;
        }
    }
    seen.into_iter()
        .map(|row| (0..levels).filter(|&l| row[l]).collect())
        .collect()
}

impl MarkovChainSet {
    pub fn validate(&self) -> Result<()> {
        for (name, grid, matrices) in [
            ("temp", &self.temp_grid, &self.temp),
            ("humid", &self.humid_grid, &self.humid),
            ("occ", &self.occ_grid, &self.occ),
        ] {
            if matrices.len() != self.stages - 1 {
                return Err(CoreError::GridMismatch(format!(
                    "{name}: {} matrices for {} stages",
                    matrices.len(),
                    self.stages
                )));
            }
            let l = grid.count;
            for (t, m) in matrices.iter().enumerate() {
                if m.len() != l * l {
                    return Err(CoreError::GridMismatch(format!(
                        "{name}[{t}]: {} entries, expected {}",
                        m.len(),
                        l * l
                    )));
                }
                for i in 0..l {
                    let row = &m[i * l..(i + 1) * l];
                    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                        return Err(CoreError::GridMismatch(format!(
                            "{name}[{t}] row {i} has entries outside [0, 1]"
                        )));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        return Err(CoreError::GridMismatch(format!(
                            "{name}[{t}] row {i} sums to {sum}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Draw one day of exogenous levels by per-stage categorical sampling.
    pub fn sample_day(
        &self,
        initial: (usize, usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> ExogenousLevels {
        let mut temp = Vec::with_capacity(self.stages);
        let mut humid = Vec::with_capacity(self.stages);
        let mut occ = Vec::with_capacity(self.stages);
        temp.push(initial.0.min(self.temp_grid.count - 1));
        humid.push(initial.1.min(self.humid_grid.count - 1));
        occ.push(initial.2.min(self.occ_grid.count - 1));
        for t in 0..self.stages - 1 {
            let l = self.temp_grid.count;
            temp.push(draw_row(&self.temp[t][temp[t] * l..(temp[t] + 1) * l], rng));
            let l = self.humid_grid.count;
            humid.push(draw_row(&self.humid[t][humid[t] * l..(humid[t] + 1) * l], rng));
            let l = self.occ_grid.count;
            occ.push(draw_row(&self.occ[t][occ[t] * l..(occ[t] + 1) * l], rng));
        }
        ExogenousLevels { temp, humid, occ }
    }

    /// [`Self::sample_day`] with a fresh seeded generator; equal seeds give
    /// equal trajectories.
    pub fn sample_day_seeded(&self, initial: (usize, usize, usize), seed: u64) -> ExogenousLevels {
        self.sample_day(initial, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Categorical draw from a probability row summing to one.
pub(crate) fn draw_row(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Guard against accumulated rounding at u ~ 1.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

const CHAINS_MAGIC: &str = "hvac-mdp-chains v1";

/// Persist the chain set as versioned structured text: a magic line, the
/// JSON body, and an end marker for truncation detection.
pub fn write_chains<W: std::io::Write>(set: &MarkovChainSet, mut out: W) -> Result<()> {
    writeln!(out, "{CHAINS_MAGIC}")?;
    let body = serde_json::to_string(set)
        .map_err(|e| CoreError::Corrupt(format!("chains encode: {e}")))?;
    writeln!(out, "{body}")?;
    writeln!(out, "end")?;
    Ok(())
}

pub fn read_chains<R: std::io::Read>(input: R) -> Result<MarkovChainSet> {
    let mut lines = std::io::BufRead::lines(std::io::BufReader::new(input));
    let magic = lines
        .next()
        .ok_or_else(|| CoreError::Corrupt("empty chain file".into()))??;
    if magic != CHAINS_MAGIC {
        return Err(CoreError::VersionMismatch(format!(
            "expected {CHAINS_MAGIC:?}, found {magic:?}"
        )));
    }
    let body = lines
        .next()
        .ok_or_else(|| CoreError::Corrupt("missing chain body".into()))??;
    let terminated = matches!(lines.next(), Some(Ok(line)) if line == "end");
    if !terminated {
        return Err(CoreError::Corrupt("missing end marker (truncated file)".into()));
    }
    let set: MarkovChainSet = serde_json::from_str(&body)
        .map_err(|e| CoreError::Corrupt(format!("chains decode: {e}")))?;
    set.validate()?;
    Ok(set)
}

pub fn save_chains(set: &MarkovChainSet, path: &std::path::Path) -> Result<()> {
    write_chains(set, std::fs::File::create(path)?)
}

pub fn load_chains(path: &std::path::Path) -> Result<MarkovChainSet> {
    read_chains(std::fs::File::open(path)?)
}

/// Synthetic office occupancy traces: empty at night, a ramp from 8:00, a
/// lunch dip, full staffing possible in the cool morning hours, decay after
/// 18:00.
pub fn synth_occupancy(
    grid: &LevelGrid,
    n_days: usize,
    stages: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = grid.count - 1;
    (0..n_days)
        .map(|_| {
            (0..stages)
                .map(|w| {
                    let hour = 24.0 * w as f64 / stages as f64;
                    let base: usize = match hour {
                        h if h < 8.0 => 0,
                        h if h < 9.0 => 1,
                        h if h < 12.0 => 3,
                        h if h < 15.0 => 2,
                        h if h < 17.0 => 3,
                        h if h < 18.0 => 2,
                        h if h < 20.0 => 1,
                        _ => 0,
                    };
                    if base == 0 {
                        return 0;
                    }
                    let u: f64 = rng.random();
                    // Mild jitter; full staffing only outside the hottest hours.
                    let jittered = if u < 0.05 {
                        base.saturating_sub(1)
                    } else if u > 0.95 && hour < 10.0 {
                        base + 1
                    } else {
                        base
                    };
                    jittered.min(top)
                })
                .collect()
        })
        .collect()
}
