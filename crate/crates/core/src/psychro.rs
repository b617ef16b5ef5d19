//! Moist-air property helpers shared by the room simulator and the comfort
//! model.
//!
//! Relative humidity is a fraction in [0, 1] everywhere in this crate; the
//! mass balances and latent-heat terms work on the humidity ratio
//! (kg water vapor per kg dry air), so conversions funnel through here.

/// Ratio of molar masses of water vapor and dry air.
const EPSILON: f64 = 0.622;

/// Saturation vapor pressure over liquid water, in Pa.
///
/// Magnus form with the Alduchov–Eskridge coefficients; good to a fraction
/// of a percent over the building-climate range.
pub fn saturation_pressure(temp_c: f64) -> f64 {
    610.94 * (17.625 * temp_c / (temp_c + 243.04)).exp()
}

/// Water vapor partial pressure, in Pa, for relative humidity `rh` in [0, 1].
pub fn vapor_pressure(temp_c: f64, rh: f64) -> f64 {
    rh * saturation_pressure(temp_c)
}

/// Humidity ratio (kg vapor / kg dry air) from relative humidity.
pub fn humidity_ratio(temp_c: f64, rh: f64, pressure_pa: f64) -> f64 {
    let pv = vapor_pressure(temp_c, rh);
    EPSILON * pv / (pressure_pa - pv)
}

/// Humidity ratio of saturated air at `temp_c`.
pub fn saturation_humidity_ratio(temp_c: f64, pressure_pa: f64) -> f64 {
    humidity_ratio(temp_c, 1.0, pressure_pa)
}

/// Relative humidity (fraction) back from a humidity ratio.
///
/// The result is not clamped; values above 1 signal super-saturation and are
/// handled by callers.
pub fn relative_humidity(temp_c: f64, humidity_ratio: f64, pressure_pa: f64) -> f64 {
    let pv = pressure_pa * humidity_ratio / (EPSILON + humidity_ratio);
    pv / saturation_pressure(temp_c)
}

/// Specific enthalpy of the vapor component, kJ per kg of vapor.
///
/// Latent heat of vaporization plus sensible heat of the vapor at `temp_c`.
pub fn vapor_enthalpy(temp_c: f64) -> f64 {
    2500.0 + 1.84 * temp_c
}
