//! Predicted-mean-vote thermal comfort: the Fanger heat-balance model and
//! the comfort band check.
//!
//! The PMV index maps an indoor condition to average thermal sensation on
//! [-3, 3] (0 neutral). The clothing surface temperature has no closed form;
//! it is found by a damped fixed-point iteration with the convective term
//! handled implicitly, which keeps the scheme contractive at low air speeds
//! and heavy clothing.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::psychro;

/// Metabolic unit, W/m² of body surface.
const MET_TO_W_M2: f64 = 58.15;
/// Clothing unit, m²K/W.
const CLO_TO_M2KW: f64 = 0.155;

/// Inputs to the PMV model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmvInputs {
    /// Metabolic rate, met.
    pub metabolic_rate: f64,
    /// External mechanical work, W/m².
    pub mechanical_work: f64,
    /// Air temperature, °C.
    pub t_air: f64,
    /// Relative humidity, fraction in [0, 1].
    pub rh: f64,
    /// Mean radiant temperature, °C.
    pub t_radiant: f64,
    /// Air velocity, m/s.
    pub air_velocity: f64,
    /// Clothing insulation, clo.
    pub clothing_insulation: f64,
    /// Atmospheric pressure, Pa (carried with the parameter set; the vapor
    /// pressure entering the model depends only on temperature and RH).
    pub pressure: f64,
}

impl PmvInputs {
    /// The office operating point of the case studies: seated activity,
    /// light tropical clothing, 0.2 m/s air movement, radiant temperature
    /// two degrees above air.
    pub fn office(t_air: f64, rh: f64) -> Self {
        Self {
            metabolic_rate: 1.0,
            mechanical_work: 0.0,
            t_air,
            rh,
            t_radiant: mean_radiant_temp(t_air),
            air_velocity: 0.2,
            clothing_insulation: 0.5,
            pressure: 1.01e5,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.metabolic_rate > 0.0) {
            return Err(CoreError::OutOfRange("metabolic_rate must be > 0".into()));
        }
        if self.air_velocity < 0.0 {
            return Err(CoreError::OutOfRange("air_velocity must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.rh) {
            return Err(CoreError::OutOfRange(format!("rh {} not in [0, 1]", self.rh)));
        }
        if !(10.0..=40.0).contains(&self.t_air) {
            return Err(CoreError::OutOfRange(format!(
                "t_air {} outside supported [10, 40] °C",
                self.t_air
            )));
        }
        Ok(())
    }
}

/// Acceptable PMV interval, boundaries inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortBand {
    pub pmv_low: f64,
    pub pmv_high: f64,
}

impl Default for ComfortBand {
    fn default() -> Self {
        Self { pmv_low: -0.5, pmv_high: 0.5 }
    }
}

impl ComfortBand {
    pub fn new(pmv_low: f64, pmv_high: f64) -> Result<Self> {
        if !(pmv_low < pmv_high) {
            return Err(CoreError::Config(format!(
                "comfort band out of order: [{pmv_low}, {pmv_high}]"
            )));
        }
        Ok(Self { pmv_low, pmv_high })
    }
}

/// Mean radiant temperature estimated from air temperature: the interior
/// surfaces run two degrees warmer.
pub fn mean_radiant_temp(t_air: f64) -> f64 {
    t_air + 2.0
}

/// `pmv_low <= pmv <= pmv_high`, boundaries inclusive.
pub fn is_comfortable(pmv: f64, band: &ComfortBand) -> bool {
    band.pmv_low <= pmv && pmv <= band.pmv_high
}

/// Fanger PMV. Deterministic; result clamped to [-3.5, 3.5].
pub fn compute_pmv(inputs: &PmvInputs) -> Result<f64> {
    pmv_with_iteration_cap(inputs, 150)
}

/// PMV with an explicit iteration cap on the clothing-temperature fixed
/// point; exposed for exercising the non-convergence path.
pub fn pmv_with_iteration_cap(inputs: &PmvInputs, max_iterations: usize) -> Result<f64> {
    inputs.validate()?;

    let m = inputs.metabolic_rate * MET_TO_W_M2;
    let w = inputs.mechanical_work;
    let mw = m - w;
    let icl = CLO_TO_M2KW * inputs.clothing_insulation;
    let fcl = if icl <= 0.078 { 1.0 + 1.29 * icl } else { 1.05 + 0.645 * icl };
    let pa = psychro::vapor_pressure(inputs.t_air, inputs.rh);
    let hcf = 12.1 * inputs.air_velocity.sqrt();

    let ta = inputs.t_air;
    let tra_k = inputs.t_radiant + 273.0;
    let rad = |tcl: f64| 3.96e-8 * fcl * ((tcl + 273.0).powi(4) - tra_k.powi(4));

    // Damped fixed point on the clothing surface temperature. The balance
    //   tcl = 35.7 - 0.028 MW - icl (R(tcl) + fcl hc (tcl - ta))
    // is solved with the convective part implicit and the radiative part
    // lagged, then averaged with the previous iterate (damping 0.5).
    let mut tcl = ta + (35.5 - ta) / (3.5 * icl + 0.1);
    let mut hc = hcf;
    let mut converged = false;
    for _ in 0..max_iterations {
        let hcn = 2.38 * (tcl - ta).abs().powf(0.25);
        hc = hcf.max(hcn);
        let implicit = (35.7 - 0.028 * mw - icl * rad(tcl) + icl * fcl * hc * ta)
            / (1.0 + icl * fcl * hc);
        let next = 0.5 * tcl + 0.5 * implicit;
        let delta = (next - tcl).abs();
        tcl = next;
        if delta < 1e-5 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoreError::NonConvergence(max_iterations));
    }

    // Heat losses: skin diffusion, sweat, latent and dry respiration,
    // radiation, convection.
    let hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa);
    let hl2 = if mw > MET_TO_W_M2 { 0.42 * (mw - MET_TO_W_M2) } else { 0.0 };
    let hl3 = 1.7e-5 * m * (5867.0 - pa);
    let hl4 = 0.0014 * m * (34.0 - ta);
    let hl5 = rad(tcl);
    let hl6 = fcl * hc * (tcl - ta);

    let ts = 0.303 * (-0.036 * m).exp() + 0.028;
    let pmv = ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6);
    Ok(pmv.clamp(-3.5, 3.5))
}

/// A fixed activity/clothing operating point evaluated against a comfort
/// band; the indoor condition varies, the rest is parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComfortModel {
    pub band: ComfortBand,
    pub metabolic_rate: f64,
    pub mechanical_work: f64,
    pub air_velocity: f64,
    pub clothing_insulation: f64,
    pub pressure: f64,
}

impl Default for ComfortModel {
    fn default() -> Self {
        Self::office()
    }
}

impl ComfortModel {
    pub fn office() -> Self {
        Self {
            band: ComfortBand::default(),
            metabolic_rate: 1.0,
            mechanical_work: 0.0,
            air_velocity: 0.2,
            clothing_insulation: 0.5,
            pressure: 1.01e5,
        }
    }

    /// PMV of an indoor condition, radiant temperature two degrees above
    /// air. Conditions outside the supported air-temperature envelope are
    /// reported as saturated votes rather than errors.
    pub fn pmv(&self, t_air: f64, rh: f64) -> f64 {
        if t_air > 40.0 {
            return 3.5;
        }
        if t_air < 10.0 {
            return -3.5;
        }
        let inputs = PmvInputs {
            metabolic_rate: self.metabolic_rate,
            mechanical_work: self.mechanical_work,
            t_air,
            rh: rh.clamp(0.0, 1.0),
            t_radiant: mean_radiant_temp(t_air),
            air_velocity: self.air_velocity,
            clothing_insulation: self.clothing_insulation,
            pressure: self.pressure,
        };
        // The damped iteration converges across the whole validated
        // envelope; a non-converged vote is treated as discomfort.
        compute_pmv(&inputs).unwrap_or(3.5)
    }

    pub fn comfortable(&self, t_air: f64, rh: f64) -> bool {
        is_comfortable(self.pmv(t_air, rh), &self.band)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radiant_offset_rule() {
        assert_eq!(mean_radiant_temp(25.0), 27.0);
        assert_eq!(mean_radiant_temp(0.0), 2.0);
        assert_eq!(mean_radiant_temp(-2.0), 0.0);
    }

    #[test]
    fn band_check_is_boundary_inclusive() {
        let band = ComfortBand::default();
        assert!(is_comfortable(0.0, &band));
        assert!(is_comfortable(0.5, &band));
        assert!(is_comfortable(-0.5, &band));
        assert!(!is_comfortable(0.6, &band));
        assert!(!is_comfortable(-0.51, &band));
    }

    #[test]
    fn deterministic() {
        let inputs = PmvInputs::office(25.0, 0.5);
        let a = compute_pmv(&inputs).unwrap();
        let b = compute_pmv(&inputs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monotone_in_air_temperature() {
        let warm = compute_pmv(&PmvInputs::office(30.0, 0.5)).unwrap();
        let cool = compute_pmv(&PmvInputs::office(24.0, 0.5)).unwrap();
        assert!(warm > cool);

        let mut prev = f64::NEG_INFINITY;
        let mut t = 18.0;
        while t <= 32.0 {
            let pmv = compute_pmv(&PmvInputs::office(t, 0.5)).unwrap();
            assert!(pmv > prev, "pmv not increasing at {t} °C");
            prev = pmv;
            t += 0.5;
        }
    }

    #[test]
    fn monotone_in_radiant_temperature_and_humidity() {
        let base = PmvInputs::office(27.0, 0.5);
        let hot_walls = PmvInputs { t_radiant: base.t_radiant + 3.0, ..base };
        assert!(compute_pmv(&hot_walls).unwrap() > compute_pmv(&base).unwrap());

        let humid = PmvInputs { rh: 0.8, ..base };
        assert!(compute_pmv(&humid).unwrap() > compute_pmv(&base).unwrap());
    }

    #[test]
    fn rejects_out_of_range_air_temperature() {
        let inputs = PmvInputs::office(25.0, 0.5);
        let cold = PmvInputs { t_air: 5.0, ..inputs };
        assert!(matches!(compute_pmv(&cold), Err(CoreError::OutOfRange(_))));
        let hot = PmvInputs { t_air: 45.0, ..inputs };
        assert!(compute_pmv(&hot).is_err());
        let bad_rh = PmvInputs { rh: 1.2, ..inputs };
        assert!(compute_pmv(&bad_rh).is_err());
    }

    #[test]
    fn reports_non_convergence_under_tight_cap() {
        let inputs = PmvInputs::office(32.0, 0.7);
        match pmv_with_iteration_cap(&inputs, 1) {
            Err(CoreError::NonConvergence(1)) => {}
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn converges_across_the_supported_envelope() {
        for t10 in 100..=400 {
            let t = t10 as f64 / 10.0;
            for rh in [0.0, 0.3, 0.7, 1.0] {
                compute_pmv(&PmvInputs::office(t, rh)).unwrap();
            }
        }
        // Heavy clothing and still air stress the fixed point the most.
        let heavy = PmvInputs {
            clothing_insulation: 2.5,
            air_velocity: 0.0,
            ..PmvInputs::office(18.0, 0.5)
        };
        compute_pmv(&heavy).unwrap();
    }
}
