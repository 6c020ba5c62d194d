//! Rotary-wing propulsion power as a function of forward speed.
//!
//! The curve is the usual blade-profile + induced + parasite decomposition:
//! it falls from the hover value, bottoms out at a moderate cruise speed and
//! then grows cubically. Communication power is ignored throughout.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Result};
use crate::optim::{golden_section_min, grid_then_golden};

/// Airframe constants of the forward-flight power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    /// Blade profile power in hover, W.
    pub blade_profile: f64,
    /// Induced power in hover, W.
    pub induced: f64,
    /// Rotor blade tip speed, m/s.
    pub tip_speed: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub hover_induced_velocity: f64,
    /// Lumped fuselage drag coefficient `d0 * rho * s * A / 2`, kg/m.
    pub fuselage_drag: f64,
}

impl PowerParams {
    pub fn new(
        blade_profile: f64,
        induced: f64,
        tip_speed: f64,
        hover_induced_velocity: f64,
        fuselage_drag: f64,
    ) -> Result<Self> {
        Ok(Self {
            blade_profile: check_positive("blade_profile", blade_profile)?,
            induced: check_positive("induced", induced)?,
            tip_speed: check_positive("tip_speed", tip_speed)?,
            hover_induced_velocity: check_positive(
                "hover_induced_velocity",
                hover_induced_velocity,
            )?,
            fuselage_drag: check_positive("fuselage_drag", fuselage_drag)?,
        })
    }

    /// Builds the parameters from the drag ratio, air density, rotor solidity
    /// and rotor disc area instead of the lumped drag coefficient.
    #[allow(clippy::too_many_arguments)]
    pub fn from_airframe(
        blade_profile: f64,
        induced: f64,
        tip_speed: f64,
        hover_induced_velocity: f64,
        drag_ratio: f64,
        air_density: f64,
        solidity: f64,
        disc_area: f64,
    ) -> Result<Self> {
        let beta = check_positive("drag_ratio", drag_ratio)?
            * check_positive("air_density", air_density)?
            * check_positive("solidity", solidity)?
            * check_positive("disc_area", disc_area)?
            / 2.0;
        Self::new(
            blade_profile,
            induced,
            tip_speed,
            hover_induced_velocity,
            beta,
        )
    }

    /// Small quadrotor: 20 N weight, 0.4 m rotors, tip speed 120 m/s.
    pub fn small_quadrotor() -> Self {
        Self::from_airframe(79.86, 88.63, 120.0, 4.03, 0.6, 1.225, 0.05, 0.503)
            .expect("static parameters are valid")
    }

    /// Heavier airframe whose curve bottoms out near 21 m/s at roughly 0.94 kW.
    pub fn heavy_lift() -> Self {
        Self::from_airframe(580.65, 790.6715, 200.0, 7.2, 0.3, 1.225, 0.05, 0.79)
            .expect("static parameters are valid")
    }

    /// Power at speed `v` without argument checks. `v` must be non-negative.
    #[inline]
    pub fn power_at(&self, v: f64) -> f64 {
        let v2 = v * v;
        let x = v2 / (2.0 * self.hover_induced_velocity * self.hover_induced_velocity);
        // sqrt(1 + x²) - x, rewritten to avoid cancellation at high speed.
        let induced_factor = (1.0 / ((1.0 + x * x).sqrt() + x)).sqrt();
        self.blade_profile * (1.0 + 3.0 * v2 / (self.tip_speed * self.tip_speed))
            + self.induced * induced_factor
            + self.fuselage_drag * v2 * v
    }

    pub fn hover_power(&self) -> f64 {
        self.blade_profile + self.induced
    }
}

impl Default for PowerParams {
    fn default() -> Self {
        Self::small_quadrotor()
    }
}

pub fn mobility_power(v: f64, params: &PowerParams) -> Result<f64> {
    let v = check_non_negative("V", v)?;
    Ok(params.power_at(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinPower {
    pub speed: f64,
    pub power: f64,
}

const SCAN_STEP: f64 = 0.05;

/// Speed in `[0, v_max]` that minimizes propulsion power. The curve is not
/// convex, so a bracketing scan precedes the golden-section refinement.
pub fn min_power_speed(params: &PowerParams, v_max: f64) -> Result<MinPower> {
    let v_max = check_positive("v_max", v_max)?;
    let (speed, power) = grid_then_golden(|v| params.power_at(v), 0.0, v_max, SCAN_STEP, 1e-7);
    Ok(MinPower { speed, power })
}

/// Whether the curve on `[0, v_max]` first falls and then rises (either
/// phase may be empty).
pub fn is_unimodal(params: &PowerParams, v_max: f64) -> bool {
    let steps = ((v_max / 0.01).ceil() as usize).max(1);
    let h = v_max / steps as f64;
    let mut rising = false;
    let mut prev = params.power_at(0.0);
    for i in 1..=steps {
        let p = params.power_at(i as f64 * h);
        if p > prev {
            rising = true;
        } else if rising && p < prev - 1e-12 * prev.abs() {
            return false;
        }
        prev = p;
    }
    true
}

/// A power curve bundled with its speed limit and cached minimum, so hot
/// loops do not repeat the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCurve {
    pub params: PowerParams,
    pub v_max: f64,
    pub min: MinPower,
    pub unimodal: bool,
}

impl PowerCurve {
    pub fn new(params: PowerParams, v_max: f64) -> Result<Self> {
        let min = min_power_speed(&params, v_max)?;
        Ok(Self {
            params,
            v_max,
            min,
            unimodal: is_unimodal(&params, v_max),
        })
    }

    #[inline]
    pub fn power(&self, v: f64) -> f64 {
        self.params.power_at(v)
    }

    /// Cheapest speed within `[lo, hi]`.
    pub fn min_on(&self, lo: f64, hi: f64) -> MinPower {
        if self.unimodal {
            let speed = self.min.speed.clamp(lo, hi);
            return MinPower {
                speed,
                power: self.power(speed),
            };
        }
        let (speed, power) = if hi - lo < SCAN_STEP {
            golden_section_min(|v| self.power(v), lo, hi, 1e-9)
        } else {
            grid_then_golden(|v| self.power(v), lo, hi, SCAN_STEP, 1e-9)
        };
        MinPower { speed, power }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_argmin(params: &PowerParams, v_max: f64, step: f64) -> (f64, f64) {
        let n = (v_max / step).round() as usize;
        (0..=n)
            .map(|i| {
                let v = i as f64 * step;
                (v, params.power_at(v))
            })
            .fold((0.0, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            })
    }

    #[test]
    fn hover_power_is_exact() {
        let p = PowerParams::default();
        assert_eq!(
            mobility_power(0.0, &p).unwrap(),
            p.blade_profile + p.induced
        );
    }

    #[test]
    fn negative_speed_rejected() {
        assert!(mobility_power(-1.0, &PowerParams::default()).is_err());
    }

    #[test]
    fn cubic_term_dominates_at_high_speed() {
        let p = PowerParams::default();
        let ratio = p.power_at(200.0) / (p.fuselage_drag * 200f64.powi(3));
        assert!(ratio > 1.0 && ratio < 1.1, "{ratio}");
        let ratio_far = p.power_at(2000.0) / (p.fuselage_drag * 2000f64.powi(3));
        assert!((ratio_far - 1.0).abs() < ratio - 1.0);
    }

    #[test]
    fn min_speed_matches_grid_oracle() {
        for p in [PowerParams::small_quadrotor(), PowerParams::heavy_lift()] {
            let m = min_power_speed(&p, 55.0).unwrap();
            let (v_grid, p_grid) = grid_argmin(&p, 55.0, 0.01);
            assert!(
                (m.speed - v_grid).abs() <= 0.01,
                "{} vs {}",
                m.speed,
                v_grid
            );
            assert!(m.power <= p_grid + 1e-9);
            assert!(m.power <= p.power_at(0.0));
        }
    }

    #[test]
    fn hover_optimal_curve_gives_zero_speed() {
        let p = PowerParams::new(10.0, 1e-6, 120.0, 4.0, 50.0).unwrap();
        let m = min_power_speed(&p, 55.0).unwrap();
        assert_eq!(m.speed, 0.0);
    }

    #[test]
    fn default_curve_shape() {
        let p = PowerParams::default();
        let m = min_power_speed(&p, 55.0).unwrap();
        assert!(m.power < p.power_at(0.0));
        assert!(p.power_at(55.0) > m.power);
        for i in 0..=550 {
            assert!(p.power_at(i as f64 * 0.1) >= m.power - 1e-6);
        }
        assert!(is_unimodal(&p, 55.0));
    }

    #[test]
    fn from_airframe_matches_direct_beta() {
        let p = PowerParams::small_quadrotor();
        assert!((p.fuselage_drag - 0.6 * 1.225 * 0.05 * 0.503 / 2.0).abs() < 1e-15);
    }
}
