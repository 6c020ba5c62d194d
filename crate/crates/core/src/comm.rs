//! Delay and energy of one decode-and-forward communication phase.
//!
//! A phase is four operations: fly to the receive point, hover while the
//! ground node uploads, fly to the relay point, hover while forwarding to the
//! base station. All angles here are relative to the UAV, which sits at angle
//! zero when the phase starts.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Error, Result};
use crate::geometry::{chord, chord_distance, PolarPos};
use crate::power::PowerParams;

/// Link budget and payload. SNRs are linear (not dB) and referenced at 1 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub bandwidth: f64,
    pub snr_gu: f64,
    pub snr_ub: f64,
    pub uav_height: f64,
    pub bs_height: f64,
    pub payload_bits: f64,
}

impl ChannelParams {
    pub fn new(
        bandwidth: f64,
        snr_gu: f64,
        snr_ub: f64,
        uav_height: f64,
        bs_height: f64,
        payload_bits: f64,
    ) -> Result<Self> {
        let ch = Self {
            bandwidth: check_positive("bandwidth", bandwidth)?,
            snr_gu: check_positive("snr_gu", snr_gu)?,
            snr_ub: check_positive("snr_ub", snr_ub)?,
            uav_height: check_positive("uav_height", uav_height)?,
            bs_height: check_positive("bs_height", bs_height)?,
            payload_bits: check_positive("payload_bits", payload_bits)?,
        };
        if ch.uav_height <= ch.bs_height {
            return Err(Error::InvalidArgument {
                name: "uav_height",
                requirement: "above the base station antenna",
                value: ch.uav_height,
            });
        }
        Ok(ch)
    }

    /// Seconds to upload the payload over a ground-to-UAV link whose squared
    /// 3-D length is `d_sq`.
    #[inline]
    pub(crate) fn upload_time_sq(&self, d_sq: f64) -> f64 {
        self.payload_bits / shannon_rate(self.bandwidth, self.snr_gu, d_sq)
    }

    /// Seconds to forward the payload to the base station from ground radius `r_ub`.
    #[inline]
    pub(crate) fn relay_time(&self, r_ub: f64) -> f64 {
        let dh = self.uav_height - self.bs_height;
        self.payload_bits / shannon_rate(self.bandwidth, self.snr_ub, dh * dh + r_ub * r_ub)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
fn shannon_rate(bandwidth: f64, snr_ref: f64, d_sq: f64) -> f64 {
    bandwidth * (snr_ref / d_sq).ln_1p() / std::f64::consts::LN_2
}

fn check_distance(d: f64) -> Result<f64> {
    check_positive("distance", d)
}

/// Ground-node-to-UAV rate in bit/s at 3-D distance `d_gu`.
pub fn rate_gu(d_gu: f64, ch: &ChannelParams) -> Result<f64> {
    let d = check_distance(d_gu)?;
    Ok(shannon_rate(ch.bandwidth, ch.snr_gu, d * d))
}

/// UAV-to-base-station rate in bit/s at 3-D distance `d_ub`.
pub fn rate_ub(d_ub: f64, ch: &ChannelParams) -> Result<f64> {
    let d = check_distance(d_ub)?;
    Ok(shannon_rate(ch.bandwidth, ch.snr_ub, d * d))
}

/// 3-D distance between a UAV hovering at `q_gu` and the ground node `gn`.
pub fn gu_distance(q_gu: PolarPos, gn: PolarPos, ch: &ChannelParams) -> f64 {
    let ground = chord_distance(q_gu, gn);
    (ch.uav_height * ch.uav_height + ground * ground).sqrt()
}

#[inline]
pub(crate) fn gu_distance_sq(r_gu: f64, psi_gu: f64, gn: PolarPos, ch: &ChannelParams) -> f64 {
    let ground = chord(r_gu, gn.r(), psi_gu - gn.psi());
    ch.uav_height * ch.uav_height + ground * ground
}

/// 3-D distance from a UAV at ground radius `r_ub` to the base station antenna.
pub fn ub_distance(r_ub: f64, ch: &ChannelParams) -> Result<f64> {
    let r = check_non_negative("r_ub", r_ub)?;
    let dh = ch.uav_height - ch.bs_height;
    Ok((dh * dh + r * r).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommAction {
    /// Where the UAV hovers to receive the payload.
    pub q_gu: PolarPos,
    /// Speed of the first leg.
    pub v1: f64,
    /// Where the UAV hovers to relay the payload.
    pub q_ub: PolarPos,
    /// Speed of the second leg.
    pub v3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub delta_c: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub e_c: f64,
}

/// Duration and energy of one flight leg. A zero-length leg is free whatever
/// the speed; otherwise the speed must lie in `(0, v_max]`.
fn leg(
    length: f64,
    v: f64,
    v_max: f64,
    pw: &PowerParams,
    name: &'static str,
) -> Result<(f64, f64)> {
    if length == 0.0 {
        return Ok((0.0, 0.0));
    }
    if !(v > 0.0 && v <= v_max) {
        return Err(Error::InvalidArgument {
            name,
            requirement: "in (0, v_max]",
            value: v,
        });
    }
    let t = length / v;
    Ok((t, t * pw.power_at(v)))
}

/// Delay and energy of serving ground node `gn` from UAV radius `r_u` with `action`.
pub fn phase_cost(
    r_u: f64,
    gn: PolarPos,
    action: &CommAction,
    ch: &ChannelParams,
    pw: &PowerParams,
    v_max: f64,
) -> Result<PhaseCost> {
    let q_u = PolarPos::new(r_u, 0.0)?;
    let (d1, e1) = leg(chord_distance(q_u, action.q_gu), action.v1, v_max, pw, "v1")?;
    let d2 = ch.payload_bits / rate_gu(gu_distance(action.q_gu, gn, ch), ch)?;
    let (d3, e3) = leg(
        chord_distance(action.q_gu, action.q_ub),
        action.v3,
        v_max,
        pw,
        "v3",
    )?;
    let d4 = ch.payload_bits / rate_ub(ub_distance(action.q_ub.r(), ch)?, ch)?;
    let hover = pw.hover_power();
    let (e2, e4) = (d2 * hover, d4 * hover);
    Ok(PhaseCost {
        d1,
        d2,
        d3,
        d4,
        delta_c: d1 + d2 + d3 + d4,
        e1,
        e2,
        e3,
        e4,
        e_c: e1 + e3 + (d2 + d4) * hover,
    })
}
