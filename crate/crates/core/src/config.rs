//! Experiment configuration: TOML-backed, fully defaulted, with the three
//! case presets wired to the room, HVAC, grid, and learner settings used in
//! the case studies. A bare preset number reproduces a whole experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chains::{estimate_chains, observed_levels, synth_occupancy};
use crate::comfort::ComfortModel;
use crate::error::{CoreError, Result};
use crate::gbpi::GbpiConfig;
use crate::grid::LevelGrid;
use crate::hvac_env::{HvacEnv, InitialCondition};
use crate::policy::PolicyFileHeader;
use crate::spaces::{ActionSpace, StateSpace};
use crate::thermal::{default_penalty, ContinuousState, HvacParams, RoomParams};
use crate::weather::{read_weather_csv_path, synth_weather, SynthWeatherProfile, WeatherSeries};

/// Top-level experiment identity and sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Case preset: 1, 2, or 3.
    pub case_preset: u8,
    pub seed: u64,
    /// Decision stages per day.
    pub stages: usize,
    /// Stage length in seconds.
    pub dt_s: f64,
    /// Days of training data behind the chain estimates.
    pub train_days: usize,
    /// Widening, in levels, of the per-stage active outdoor windows.
    pub window_margin: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            case_preset: 2,
            seed: 0,
            stages: 48,
            dt_s: 1800.0,
            train_days: 60,
            window_margin: 1,
        }
    }
}

/// Initial-policy screening boxes: state-action pairs whose one-step result
/// leaves these indoor ranges start with zero weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningSection {
    pub enabled: bool,
    pub temp_low: f64,
    pub temp_high: f64,
    pub rh_low: f64,
    pub rh_high: f64,
}

impl Default for ScreeningSection {
    fn default() -> Self {
        Self {
            enabled: true,
            temp_low: 23.0,
            temp_high: 28.0,
            rh_low: 0.40,
            rh_high: 0.70,
        }
    }
}

/// Two-tier time-of-use tariff.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TouSchedule {
    /// Off-peak price, currency/kWh.
    pub off_peak: f64,
    /// Peak price, currency/kWh.
    pub peak: f64,
    pub peak_start_hour: f64,
    pub peak_end_hour: f64,
}

impl Default for TouSchedule {
    fn default() -> Self {
        Self {
            off_peak: 0.24,
            peak: 0.36,
            peak_start_hour: 9.0,
            peak_end_hour: 21.0,
        }
    }
}

impl TouSchedule {
    pub fn price_at_hour(&self, hour: f64) -> f64 {
        if hour >= self.peak_start_hour && hour < self.peak_end_hour {
            self.peak
        } else {
            self.off_peak
        }
    }
}

/// Internal loads and the initial thermal condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadsSection {
    /// Device heat gain per occupant, J/s.
    pub device_heat_per_occupant: f64,
    /// Wall temperature at the start of the day, °C (walls integrate days
    /// of history, so they start warm).
    pub initial_wall_temp: f64,
}

impl Default for LoadsSection {
    fn default() -> Self {
        // 50 J/s per occupant keeps a fully staffed room within the plant's
        // sensible capacity at peak outdoor temperature.
        Self {
            device_heat_per_occupant: 50.0,
            initial_wall_temp: 29.0,
        }
    }
}

/// A complete, reproducible experiment definition.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub room: RoomParams,
    pub hvac: HvacParams,
    pub comfort: ComfortModel,
    pub screening: ScreeningSection,
    pub pricing: TouSchedule,
    pub weather: SynthWeatherProfile,
    pub gbpi: GbpiConfig,
    pub loads: LoadsSection,
}

/// The five level grids of a case preset.
#[derive(Debug, Clone, Copy)]
pub struct CaseGrids {
    pub out_temp: LevelGrid,
    pub out_humid: LevelGrid,
    pub in_temp: LevelGrid,
    pub in_humid: LevelGrid,
    pub occ: LevelGrid,
}

/// Where the estimation data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Synthetic weather and occupancy generated from the config.
    Synthetic,
    /// Recorded weather CSV (occupancy stays synthetic).
    WeatherCsv(PathBuf),
    /// Previously estimated chains; outdoor windows stay unrestricted.
    ChainsFile(PathBuf),
}

impl ExperimentConfig {
    /// Preset for one of the three cases; the sample-path budget follows the
    /// case (1000 / 2000 / 5000).
    pub fn for_case(case: u8) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.experiment.case_preset = case;
        cfg.gbpi.n_paths = match case {
            1 => 2000,
            2 => 4000,
            3 => 8000,
            _ => return Err(CoreError::Config(format!("unknown case preset {case}"))),
        };
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CoreError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CoreError::Config(format!("config encode: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.hvac.validate()?;
        self.gbpi.validate()?;
        if !(1..=3).contains(&self.experiment.case_preset) {
            return Err(CoreError::Config(format!(
                "case_preset must be 1, 2, or 3, got {}",
                self.experiment.case_preset
            )));
        }
        if self.experiment.stages < 2 {
            return Err(CoreError::Config("stages must be >= 2".into()));
        }
        if !(self.experiment.dt_s > 0.0) {
            return Err(CoreError::Config("dt_s must be > 0".into()));
        }
        if self.pricing.off_peak < 0.0 || self.pricing.peak < 0.0 {
            return Err(CoreError::Config("prices must be >= 0".into()));
        }
        Ok(())
    }

    /// Grid resolutions per case: 2 °C / 10 % for cases 1 and 2, 1 °C / 5 %
    /// for case 3.
    pub fn grids(&self) -> Result<CaseGrids> {
        let fine = self.experiment.case_preset == 3;
        let (t_step, h_step) = if fine { (1.0, 0.05) } else { (2.0, 0.10) };
        Ok(CaseGrids {
            out_temp: LevelGrid::spanning(self.weather.temp_lo, self.weather.temp_hi, t_step)?,
            out_humid: LevelGrid::spanning(self.weather.rh_lo, self.weather.rh_hi, h_step)?,
            in_temp: LevelGrid::spanning(22.0, 30.0, t_step)?,
            in_humid: LevelGrid::spanning(0.40, 0.80, h_step)?,
            occ: LevelGrid::new(0.0, 1.25, 5)?,
        })
    }

    /// Action grids per case: case 1 has variable supply temperatures
    /// {12, 14, 16} °C and 3 flow levels per unit; cases 2 and 3 fix the
    /// supply temperature at 15 °C with 5 flow levels per unit.
    pub fn action_space(&self) -> Result<ActionSpace> {
        match self.experiment.case_preset {
            1 => ActionSpace::new(
                &self.hvac,
                3,
                3,
                vec![12.0, 14.0, 16.0],
                vec![12.0, 14.0, 16.0],
            ),
            2 | 3 => ActionSpace::new(&self.hvac, 5, 5, vec![15.0], vec![15.0]),
            c => Err(CoreError::Config(format!("unknown case preset {c}"))),
        }
    }

    pub fn price_schedule(&self) -> Vec<f64> {
        let stages = self.experiment.stages;
        (0..stages)
            .map(|t| self.pricing.price_at_hour(24.0 * t as f64 / stages as f64))
            .collect()
    }

    pub fn solar_schedule(&self) -> Vec<f64> {
        let stages = self.experiment.stages;
        (0..stages)
            .map(|t| self.weather.solar_at_hour(24.0 * t as f64 / stages as f64))
            .collect()
    }

    fn weather_profile(&self) -> SynthWeatherProfile {
        SynthWeatherProfile {
            stages_per_day: self.experiment.stages,
            ..self.weather.clone()
        }
    }

    /// Synthetic training weather for this config.
    pub fn training_weather(&self) -> WeatherSeries {
        synth_weather(
            &self.weather_profile(),
            self.experiment.train_days,
            crate::env::mix_seed(self.experiment.seed, WEATHER_SEED_TAG),
        )
    }

    /// Synthetic training occupancy traces for this config.
    pub fn training_occupancy(&self, occ_grid: &LevelGrid) -> Vec<Vec<usize>> {
        synth_occupancy(
            occ_grid,
            self.experiment.train_days,
            self.experiment.stages,
            crate::env::mix_seed(self.experiment.seed, OCCUPANCY_SEED_TAG),
        )
    }

    /// Assemble the full environment: estimate (or load) the chains, build
    /// the windowed state space, and bind the physics.
    pub fn build_env(&self, source: &DataSource) -> Result<HvacEnv> {
        self.validate()?;
        let grids = self.grids()?;
        let stages = self.experiment.stages;

        let (chains, windows) = match source {
            DataSource::ChainsFile(path) => {
                let chains = crate::chains::load_chains(path)?;
                if chains.stages != stages {
                    return Err(CoreError::GridMismatch(format!(
                        "chain file covers {} stages, config expects {stages}",
                        chains.stages
                    )));
                }
                (chains, None)
            }
            DataSource::Synthetic | DataSource::WeatherCsv(_) => {
                let weather = match source {
                    DataSource::WeatherCsv(path) => read_weather_csv_path(path)?,
                    _ => self.training_weather(),
                };
                let occupancy = self.training_occupancy(&grids.occ);
                let chains = estimate_chains(
                    &weather,
                    &occupancy,
                    grids.out_temp,
                    grids.out_humid,
                    grids.occ,
                    stages,
                )?;
                let stage_days = weather.resample(stages)?;
                let temp_days: Vec<Vec<usize>> = stage_days
                    .iter()
                    .map(|d| d.temp_c.iter().map(|&x| grids.out_temp.quantize(x)).collect())
                    .collect();
                let humid_days: Vec<Vec<usize>> = stage_days
                    .iter()
                    .map(|d| d.rh.iter().map(|&x| grids.out_humid.quantize(x)).collect())
                    .collect();
                let windows = (
                    observed_levels(&temp_days, grids.out_temp.count, stages),
                    observed_levels(&humid_days, grids.out_humid.count, stages),
                );
                (chains, Some(windows))
            }
        };

        let states = match &windows {
            Some((temp_obs, humid_obs)) => StateSpace::windowed(
                stages,
                grids.out_temp,
                grids.out_humid,
                grids.in_temp,
                grids.in_humid,
                grids.occ,
                temp_obs,
                humid_obs,
                self.experiment.window_margin,
            )?,
            None => StateSpace::full(
                stages,
                grids.out_temp,
                grids.out_humid,
                grids.in_temp,
                grids.in_humid,
                grids.occ,
            ),
        };

        let initial = self.initial_condition(&states, &grids);
        HvacEnv::new(
            self.room.clone(),
            self.hvac.clone(),
            chains,
            states,
            self.action_space()?,
            self.comfort,
            self.experiment.dt_s,
            self.solar_schedule(),
            self.price_schedule(),
            self.loads.device_heat_per_occupant,
            initial,
            default_penalty(self.pricing.peak),
        )
    }

    /// Day start: outdoor components at the middle of the stage-0 window,
    /// nobody in the room, indoor air at the grid midpoints, walls at the
    /// configured warm start.
    fn initial_condition(&self, states: &StateSpace, grids: &CaseGrids) -> InitialCondition {
        let mid = |levels: &[usize]| levels[levels.len() / 2];
        let in_temp_level = grids.in_temp.count / 2;
        let in_humid_level = grids.in_humid.count / 2;
        InitialCondition {
            out_temp_level: mid(states.active_temp_levels(0)),
            out_humid_level: mid(states.active_humid_levels(0)),
            occ_level: 0,
            room: ContinuousState {
                t_indoor: grids.in_temp.value(in_temp_level),
                rh_indoor: grids.in_humid.value(in_humid_level),
                t_wall_left: self.loads.initial_wall_temp,
                t_wall_right: self.loads.initial_wall_temp,
            },
        }
    }

    /// The perfect-information planner for this experiment: the indoor
    /// state quantizes on the same case grids the learner uses, walls get a
    /// dedicated coarse grid.
    pub fn oracle_dp(&self) -> Result<crate::oracle::QuantizedRoomDp> {
        let grids = self.grids()?;
        Ok(crate::oracle::QuantizedRoomDp {
            room: self.room.clone(),
            hvac: self.hvac.clone(),
            actions: self.action_space()?,
            comfort: self.comfort,
            in_temp: grids.in_temp,
            in_humid: grids.in_humid,
            wall: LevelGrid::spanning(20.0, 38.0, 2.0)?,
            dt: self.experiment.dt_s,
        })
    }

    /// The header a policy trained under this environment is saved with.
    pub fn policy_header(&self, env: &HvacEnv) -> PolicyFileHeader {
        PolicyFileHeader {
            stages: env.stages(),
            action_count: env.actions.len(),
            state_space: Some(env.states.clone()),
            action_space: Some(env.actions.clone()),
        }
    }

    /// The initial policy: screened when screening is enabled, uniform
    /// otherwise.
    pub fn initial_policy(&self, env: &HvacEnv) -> crate::policy::StochasticPolicy {
        if self.screening.enabled {
            env.init_policy_screened(
                (self.screening.temp_low, self.screening.temp_high),
                (self.screening.rh_low, self.screening.rh_high),
            )
        } else {
            env.init_policy_uniform()
        }
    }
}

const WEATHER_SEED_TAG: u64 = 0x7765_6174_6865_72;
const OCCUPANCY_SEED_TAG: u64 = 0x6f63_6375_7061;
