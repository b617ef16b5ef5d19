//! Gray-box room thermal and humidity dynamics, HVAC electrical power, and
//! stage energy cost.
//!
//! The room model is a lumped energy/mass balance: indoor air exchanges heat
//! with a glass window, two wall masses (the right wall also absorbs solar),
//! internal gains from occupants and their devices, and the supply air of two
//! handling units (FAU for fresh outdoor air, FCU for recirculated air). One
//! call to [`step_dynamics`] advances a single explicit forward-difference
//! step of length `dt`.
//!
//! Temperatures are °C, flows kg/s, relative humidity a fraction in [0, 1].
//! Mass balances and latent-heat terms run on the humidity ratio; conversions
//! go through [`crate::psychro`].

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::psychro;

/// An ordered closed interval used for actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(CoreError::Config(format!("bounds out of order: [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Structural and occupant parameters of the room.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomParams {
    /// Air specific heat, J/(kg·K).
    pub cp_air: f64,
    /// Mass of indoor air, kg.
    pub m_air: f64,
    /// Mass of the left wall, kg.
    pub m_wall_left: f64,
    /// Mass of the right wall, kg.
    pub m_wall_right: f64,
    /// Wall heat capacity, J/(kg·K).
    pub c_wall: f64,
    /// Window heat transfer coefficient, W/(m²·K).
    pub h_glass: f64,
    /// Window area, m².
    pub a_glass: f64,
    /// Wall heat transfer coefficient, W/(m²·K).
    pub h_wall: f64,
    /// Left wall area, m².
    pub a_wall_left: f64,
    /// Right wall area, m².
    pub a_wall_right: f64,
    /// Solar absorptance of the wall, dimensionless in [0, 1].
    pub alpha_wall: f64,
    /// Internal heat gain per occupant, J/s.
    pub q_occupant: f64,
    /// Moisture generation per occupant, kg/s.
    pub h_gen: f64,
    /// Atmospheric pressure used for psychrometric conversions, Pa.
    pub pressure_pa: f64,
}

impl Default for RoomParams {
    fn default() -> Self {
        Self::office()
    }
}

impl RoomParams {
    /// The 6 m x 5 m x 4 m office room used throughout the case studies.
    pub fn office() -> Self {
        Self {
            cp_air: 1012.0,
            m_air: 144.6,
            m_wall_left: 7.2e3,
            m_wall_right: 8.64e3,
            c_wall: 1.05e3,
            h_glass: 2.5,
            a_glass: 10.0,
            h_wall: 0.8,
            a_wall_left: 20.0,
            a_wall_right: 24.0,
            alpha_wall: 0.4,
            q_occupant: 40.0,
            h_gen: 3.0e-5,
            pressure_pa: 1.01e5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cp_air", self.cp_air),
            ("m_air", self.m_air),
            ("m_wall_left", self.m_wall_left),
            ("m_wall_right", self.m_wall_right),
            ("c_wall", self.c_wall),
            ("a_glass", self.a_glass),
            ("a_wall_left", self.a_wall_left),
            ("a_wall_right", self.a_wall_right),
            ("pressure_pa", self.pressure_pa),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(CoreError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha_wall) {
            return Err(CoreError::Config(format!(
                "alpha_wall must be in [0, 1], got {}",
                self.alpha_wall
            )));
        }
        Ok(())
    }
}

/// Ratings and actuator limits of the two air handling units.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HvacParams {
    pub fau_flow_bounds: Bounds,
    pub fcu_flow_bounds: Bounds,
    pub fau_temp_bounds: Bounds,
    pub fcu_temp_bounds: Bounds,
    /// Nominal FAU air flow, kg/s.
    pub fau_rated_flow: f64,
    /// Nominal FCU air flow, kg/s.
    pub fcu_rated_flow: f64,
    /// Nominal FAU fan power, kW.
    pub fau_rated_fan_power: f64,
    /// Nominal FCU fan power, kW.
    pub fcu_rated_fan_power: f64,
    /// Reciprocal of the chiller coefficient of performance.
    pub eta: f64,
    /// Relative humidity of air leaving the FAU coil, fraction of saturation
    /// at the supply temperature.
    pub fau_supply_humidity_saturation: f64,
}

impl Default for HvacParams {
    fn default() -> Self {
        Self::desk_unit()
    }
}

impl HvacParams {
    /// Nominal two-unit system of the case studies (COP 2.7, supply
    /// temperatures limited to 12..16 °C, flows limited by the rated fans).
    pub fn desk_unit() -> Self {
        Self {
            fau_flow_bounds: Bounds { lo: 0.0, hi: 0.01 },
            fcu_flow_bounds: Bounds { lo: 0.0, hi: 0.05 },
            fau_temp_bounds: Bounds { lo: 12.0, hi: 16.0 },
            fcu_temp_bounds: Bounds { lo: 12.0, hi: 16.0 },
            fau_rated_flow: 0.01,
            fcu_rated_flow: 0.05,
            fau_rated_fan_power: 0.1,
            fcu_rated_fan_power: 0.1,
            eta: 1.0 / 2.7,
            fau_supply_humidity_saturation: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fau_rated_flow", self.fau_rated_flow),
            ("fcu_rated_flow", self.fcu_rated_flow),
            ("fau_rated_fan_power", self.fau_rated_fan_power),
            ("fcu_rated_fan_power", self.fcu_rated_fan_power),
            ("eta", self.eta),
        ] {
            if !(v > 0.0) {
                return Err(CoreError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.fau_supply_humidity_saturation) {
            return Err(CoreError::Config(
                "fau_supply_humidity_saturation must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Continuous room state carried alongside the discretized MDP state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousState {
    /// Indoor air temperature, °C.
    pub t_indoor: f64,
    /// Indoor relative humidity, fraction in [0, 1].
    pub rh_indoor: f64,
    /// Left wall temperature, °C.
    pub t_wall_left: f64,
    /// Right wall temperature, °C.
    pub t_wall_right: f64,
}

/// Everything the room does not control: weather, occupancy, tariffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSample {
    /// Outdoor temperature, °C.
    pub t_outdoor: f64,
    /// Outdoor relative humidity, fraction.
    pub rh_outdoor: f64,
    /// Number of occupants (fractional after window averaging).
    pub occupants: f64,
    /// Solar radiation density on the right wall, W/m².
    pub solar_wall: f64,
    /// Device heat gain per occupant, J/s.
    pub device_heat_per_occupant: f64,
    /// Electricity price, currency per kWh.
    pub price: f64,
}

/// HVAC set levels: supply flows and supply temperatures of both units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// FAU supply air flow, kg/s.
    pub g_fau: f64,
    /// FAU supply temperature, °C.
    pub t_fau: f64,
    /// FCU supply air flow, kg/s.
    pub g_fcu: f64,
    /// FCU supply temperature, °C.
    pub t_fcu: f64,
}

impl ControlInput {
    pub const OFF: ControlInput = ControlInput {
        g_fau: 0.0,
        t_fau: 0.0,
        g_fcu: 0.0,
        t_fcu: 0.0,
    };

    pub fn within(&self, hvac: &HvacParams) -> bool {
        hvac.fau_flow_bounds.contains(self.g_fau)
            && hvac.fcu_flow_bounds.contains(self.g_fcu)
            && (self.g_fau == 0.0 || hvac.fau_temp_bounds.contains(self.t_fau))
            && (self.g_fcu == 0.0 || hvac.fcu_temp_bounds.contains(self.t_fcu))
    }
}

/// Electrical power decomposition of one HVAC operating point, all kW.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub cooling_fcu: f64,
    pub cooling_fau: f64,
    pub fan_fcu: f64,
    pub fan_fau: f64,
}

impl PowerBreakdown {
    /// Total electrical power in kW: cooling scaled by 1/COP, fans as-is.
    pub fn total_electrical(&self, eta: f64) -> f64 {
        eta * (self.cooling_fcu + self.cooling_fau) + self.fan_fcu + self.fan_fau
    }
}

/// Humidity ratio of the FAU supply air: outdoor moisture capped at the
/// coil's saturation point for the supply temperature.
fn fau_supply_ratio(room: &RoomParams, hvac: &HvacParams, exo: &ExogenousSample, u: &ControlInput) -> f64 {
    let outdoor = psychro::humidity_ratio(exo.t_outdoor, exo.rh_outdoor, room.pressure_pa);
    let cap = psychro::humidity_ratio(
        u.t_fau,
        hvac.fau_supply_humidity_saturation,
        room.pressure_pa,
    );
    outdoor.min(cap)
}

/// Humidity ratio of the FCU supply air: the coil dehumidifies return air
/// only when its dew point sits above the coil temperature.
fn fcu_supply_ratio(room: &RoomParams, state: &ContinuousState, u: &ControlInput) -> f64 {
    let indoor = psychro::humidity_ratio(state.t_indoor, state.rh_indoor, room.pressure_pa);
    let sat = psychro::saturation_humidity_ratio(u.t_fcu, room.pressure_pa);
    indoor.min(sat)
}

/// Advance the room by one explicit forward-difference step of `dt` seconds.
///
/// The temperature balance collects occupant and device gains, window and
/// wall conduction, and the advective supply-air terms of both units; wall
/// masses follow their own balances with solar absorbed by the right wall
/// only. The moisture balance runs on humidity ratios and converts back to
/// relative humidity at the new air temperature, clamped to [0, 1]
/// (condensation).
pub fn step_dynamics(
    room: &RoomParams,
    hvac: &HvacParams,
    state: &ContinuousState,
    exo: &ExogenousSample,
    u: &ControlInput,
    dt: f64,
) -> Result<ContinuousState> {
    if !(dt > 0.0) {
        return Err(CoreError::OutOfRange(format!("dt must be > 0, got {dt}")));
    }

    let heat_flux = exo.occupants * room.q_occupant
        + exo.occupants * exo.device_heat_per_occupant
        + room.h_glass * room.a_glass * (exo.t_outdoor - state.t_indoor)
        + room.h_wall * room.a_wall_left * (state.t_wall_left - state.t_indoor)
        + room.h_wall * room.a_wall_right * (state.t_wall_right - state.t_indoor)
        + room.cp_air * u.g_fau * (u.t_fau - state.t_indoor)
        + room.cp_air * u.g_fcu * (u.t_fcu - state.t_indoor);
    let t_indoor = state.t_indoor + heat_flux * dt / (room.cp_air * room.m_air);

    let t_wall_left = state.t_wall_left
        + room.h_wall * room.a_wall_left * (state.t_indoor - state.t_wall_left) * dt
            / (room.c_wall * room.m_wall_left);
    let t_wall_right = state.t_wall_right
        + (room.h_wall * room.a_wall_right * (state.t_indoor - state.t_wall_right)
            + room.alpha_wall * room.a_wall_right * exo.solar_wall)
            * dt
            / (room.c_wall * room.m_wall_right);

    let w_indoor = psychro::humidity_ratio(state.t_indoor, state.rh_indoor, room.pressure_pa);
    let moisture_flux = exo.occupants * room.h_gen
        + u.g_fau * (fau_supply_ratio(room, hvac, exo, u) - w_indoor)
        + u.g_fcu * (fcu_supply_ratio(room, state, u) - w_indoor);
    let w_next = w_indoor + moisture_flux * dt / room.m_air;
    let rh_indoor = if w_next == w_indoor && t_indoor == state.t_indoor {
        state.rh_indoor
    } else {
        psychro::relative_humidity(t_indoor, w_next.max(0.0), room.pressure_pa).clamp(0.0, 1.0)
    };

    let next = ContinuousState {
        t_indoor,
        rh_indoor,
        t_wall_left,
        t_wall_right,
    };
    if !(next.t_indoor.is_finite()
        && next.rh_indoor.is_finite()
        && next.t_wall_left.is_finite()
        && next.t_wall_right.is_finite())
    {
        return Err(CoreError::NonFinite(format!("{next:?}")));
    }
    Ok(next)
}

/// Electrical power of one operating point.
///
/// Each unit's coil load is sensible heat plus the latent enthalpy removed
/// from its own air stream (return air for the FCU, outdoor air for the FAU),
/// clamped at zero since only the cooling mode is modeled. Fan power follows
/// the cubic affinity law against the rated point.
pub fn hvac_power(
    room: &RoomParams,
    hvac: &HvacParams,
    state: &ContinuousState,
    exo: &ExogenousSample,
    u: &ControlInput,
) -> PowerBreakdown {
    let cp_kj = room.cp_air / 1000.0;
    let w_indoor = psychro::humidity_ratio(state.t_indoor, state.rh_indoor, room.pressure_pa);
    let w_outdoor = psychro::humidity_ratio(exo.t_outdoor, exo.rh_outdoor, room.pressure_pa);
    let w_fcu = fcu_supply_ratio(room, state, u);
    let w_fau = fau_supply_ratio(room, hvac, exo, u);

    let cooling_fcu = u.g_fcu
        * (cp_kj * (state.t_indoor - u.t_fcu) + w_indoor * psychro::vapor_enthalpy(state.t_indoor)
            - w_fcu * psychro::vapor_enthalpy(u.t_fcu));
    let cooling_fau = u.g_fau
        * (cp_kj * (exo.t_outdoor - u.t_fau) + w_outdoor * psychro::vapor_enthalpy(exo.t_outdoor)
            - w_fau * psychro::vapor_enthalpy(u.t_fau));

    let cube = |flow: f64, rated: f64| (flow / rated).powi(3);
    PowerBreakdown {
        cooling_fcu: cooling_fcu.max(0.0),
        cooling_fau: cooling_fau.max(0.0),
        fan_fcu: hvac.fcu_rated_fan_power * cube(u.g_fcu, hvac.fcu_rated_flow),
        fan_fau: hvac.fau_rated_fan_power * cube(u.g_fau, hvac.fau_rated_flow),
    }
}

/// Energy cost of one stage: price times total electrical power times the
/// stage length in hours.
pub fn stage_cost(
    room: &RoomParams,
    hvac: &HvacParams,
    state: &ContinuousState,
    exo: &ExogenousSample,
    u: &ControlInput,
    dt: f64,
) -> f64 {
    let power = hvac_power(room, hvac, state, exo, u);
    exo.price * power.total_electrical(hvac.eta) * (dt / 3600.0)
}

/// Stage cost augmented with the comfort-violation indicator penalty.
///
/// The penalty route is used by the oracle and the exact evaluator; the
/// learner handles feasibility by masking instead.
pub fn penalized_stage_cost(
    room: &RoomParams,
    hvac: &HvacParams,
    state: &ContinuousState,
    exo: &ExogenousSample,
    u: &ControlInput,
    dt: f64,
    comfortable: bool,
    penalty: f64,
) -> f64 {
    stage_cost(room, hvac, state, exo, u, dt) + if comfortable { 0.0 } else { penalty }
}

/// Default comfort-violation penalty: large enough to dominate any plausible
/// daily energy bill at peak tariff.
pub fn default_penalty(peak_price: f64) -> f64 {
    // 10 x (max price x max plausible daily energy): two units at about
    // 1 kW electrical around the clock.
    10.0 * peak_price * 24.0
}
