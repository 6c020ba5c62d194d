//! Baseline trajectories: hover at the center, start and end every phase at
//! the center, and direct ground-to-base-station transmission.

use serde::{Deserialize, Serialize};

use crate::comm::{ChannelParams, CommAction};
use crate::config::SystemConfig;
use crate::error::{check_positive, Error, Result};
use crate::geometry::PolarPos;
use crate::optim::{adaptive_simpson, grid_then_golden};
use crate::power::PowerCurve;
use crate::smdp::{
    policy_metrics, CommDecision, InnerRule, Metrics, Policy, StateGrid, WaitingDecision,
    POLICY_FORMAT_VERSION,
};

const QUAD_TOL: f64 = 1e-9;

/// Mean over a uniform request location in a disc of radius `a` of `f(r)`.
fn disc_mean(f: impl Fn(f64) -> f64, a: f64) -> f64 {
    adaptive_simpson(|r| 2.0 * r / (a * a) * f(r), 0.0, a, QUAD_TOL)
}

/// Mean delay per request when the UAV never leaves the center.
pub fn hover_center_delay(cfg: &SystemConfig) -> f64 {
    let ch = &cfg.channel;
    let h2 = ch.uav_height * ch.uav_height;
    disc_mean(|r| ch.upload_time_sq(h2 + r * r), cfg.cell_radius) + ch.relay_time(0.0)
}

/// [`hover_center_delay`] with requests drawn from the ground-node grid.
pub fn hover_center_delay_on_grid(grid: &StateGrid, ch: &ChannelParams) -> f64 {
    let h2 = ch.uav_height * ch.uav_height;
    let upload: f64 = grid
        .gn_nodes
        .iter()
        .zip(&grid.gn_weights)
        .map(|(n, w)| w * ch.upload_time_sq(h2 + n.r() * n.r()))
        .sum();
    upload + ch.relay_time(0.0)
}

/// Mean delay per request if ground nodes uploaded straight to the base
/// station over the same path-loss model.
pub fn direct_to_bs_delay(cfg: &SystemConfig) -> f64 {
    let ch = &cfg.channel;
    let direct = ChannelParams {
        uav_height: ch.bs_height,
        ..*ch
    };
    let h2 = ch.bs_height * ch.bs_height;
    disc_mean(|r| direct.upload_time_sq(h2 + r * r), cfg.cell_radius)
}

/// Receive radius on the node's ray minimizing the out-and-back delay for a
/// node at radius `r_g`, flying at `speed`.
pub fn receive_radius(r_g: f64, speed: f64, ch: &ChannelParams) -> f64 {
    if r_g == 0.0 {
        return 0.0;
    }
    let h2 = ch.uav_height * ch.uav_height;
    let delay = |x: f64| 2.0 * x / speed + ch.upload_time_sq(h2 + (r_g - x) * (r_g - x));
    let step = r_g / 256.0;
    let (coarse, _) = grid_then_golden(delay, 0.0, r_g, step, step / 4.0);
    // Polish on the derivative so the result is smooth in r_g.
    let slope = |x: f64| {
        let u = r_g - x;
        let s = h2 + u * u;
        let ln = (ch.snr_gu / s).ln_1p();
        let dt_ds = ch.payload_bits * std::f64::consts::LN_2 / ch.bandwidth * ch.snr_gu
            / (ln * ln * s * (s + ch.snr_gu));
        2.0 / speed - 2.0 * u * dt_ds
    };
    let (mut lo, mut hi) = ((coarse - step).max(0.0), (coarse + step).min(r_g));
    if slope(lo) >= 0.0 || slope(hi) <= 0.0 {
        return coarse;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Start-end-at-center action for a node at `gn`, relative to a UAV at `(r_u, 0)`.
pub fn start_end_center_action(gn: PolarPos, speed: f64, ch: &ChannelParams) -> CommAction {
    let x = receive_radius(gn.r(), speed, ch);
    CommAction {
        q_gu: PolarPos::new(x, gn.psi()).expect("receive point on the node ray"),
        v1: speed,
        q_ub: PolarPos::ORIGIN,
        v3: speed,
    }
}

fn center_policy(
    grid: &StateGrid,
    inner: InnerRule,
    action: impl Fn(PolarPos) -> CommAction,
    sha: &str,
) -> Policy {
    let hold = grid.n_vr() / 2;
    let waiting = vec![
        WaitingDecision {
            vr_index: hold,
            v_r: grid.v_r[hold],
            theta_c: 0.0,
        };
        grid.n_radii()
    ];
    let per_node: Vec<CommAction> = grid.gn_nodes.iter().map(|&gn| action(gn)).collect();
    let comm = (0..grid.n_radii())
        .flat_map(|_| per_node.iter())
        .map(|&action| CommDecision {
            end_radius: 0,
            action,
        })
        .collect();
    Policy {
        version: POLICY_FORMAT_VERSION,
        config_sha256: sha.to_string(),
        inner,
        n_radii: grid.n_radii(),
        n_nodes: grid.n_nodes(),
        waiting,
        comm,
    }
}

/// Policy that hovers at the center between requests and serves each request
/// by flying out along the node's ray at `speed`, receiving, and returning
/// to the center to relay.
pub fn start_end_center_policy(speed: f64, grid: &StateGrid, cfg: &SystemConfig) -> Result<Policy> {
    check_speed(speed, cfg.v_max)?;
    let ch = cfg.channel;
    Ok(center_policy(
        grid,
        InnerRule::StartEndCenter { speed },
        |gn| start_end_center_action(gn, speed, &ch),
        &cfg.sha256(),
    ))
}

/// Policy that receives and relays at the center.
pub fn hover_center_policy(grid: &StateGrid, cfg: &SystemConfig) -> Policy {
    let speed = cfg.v_max;
    center_policy(
        grid,
        InnerRule::HoverCenter { speed },
        |_| CommAction {
            q_gu: PolarPos::ORIGIN,
            v1: speed,
            q_ub: PolarPos::ORIGIN,
            v3: speed,
        },
        &cfg.sha256(),
    )
}

fn check_speed(speed: f64, v_max: f64) -> Result<f64> {
    let v = check_positive("v", speed)?;
    if v > v_max {
        return Err(Error::InvalidArgument {
            name: "v",
            requirement: "<= v_max",
            value: v,
        });
    }
    Ok(v)
}

/// Long-run averages of one heuristic operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicPoint {
    pub speed: f64,
    /// Mean delay per request, s.
    pub delay: f64,
    /// Long-run average power, W.
    pub power: f64,
    /// Mean energy per cycle, J.
    pub energy: f64,
    /// Mean cycle duration, s.
    pub cycle_time: f64,
}

fn renewal_point(
    speed: f64,
    travel: f64,
    upload: f64,
    cfg: &SystemConfig,
    curve: &PowerCurve,
    delta_0: f64,
    p_ww: f64,
) -> HeuristicPoint {
    let relay = cfg.channel.relay_time(0.0);
    let hover = curve.power(0.0);
    let waiting = delta_0 / (1.0 - p_ww);
    let delay = travel + upload + relay;
    let energy = waiting * hover + travel * curve.power(speed) + (upload + relay) * hover;
    let cycle_time = waiting + delay;
    HeuristicPoint {
        speed,
        delay,
        power: energy / cycle_time,
        energy,
        cycle_time,
    }
}

/// Renewal-reward averages of the start-end-at-center heuristic with
/// requests uniform over the disc.
pub fn start_end_center_renewal(speed: f64, cfg: &SystemConfig) -> Result<HeuristicPoint> {
    check_speed(speed, cfg.v_max)?;
    let ch = &cfg.channel;
    let curve = PowerCurve::new(cfg.power, cfg.v_max)?;
    let h2 = ch.uav_height * ch.uav_height;
    let a = cfg.cell_radius;
    let travel = disc_mean(|r| 2.0 * receive_radius(r, speed, ch) / speed, a);
    let upload = disc_mean(
        |r| {
            let x = receive_radius(r, speed, ch);
            ch.upload_time_sq(h2 + (r - x) * (r - x))
        },
        a,
    );
    let delta_0 = -cfg.grid.p_ww.ln() / cfg.total_arrival_rate();
    Ok(renewal_point(
        speed,
        travel,
        upload,
        cfg,
        &curve,
        delta_0,
        cfg.grid.p_ww,
    ))
}

/// Renewal-reward averages of the heuristic with requests on the node grid.
pub fn start_end_center_on_grid(
    speed: f64,
    grid: &StateGrid,
    cfg: &SystemConfig,
) -> Result<HeuristicPoint> {
    check_speed(speed, cfg.v_max)?;
    let ch = &cfg.channel;
    let curve = PowerCurve::new(cfg.power, cfg.v_max)?;
    let h2 = ch.uav_height * ch.uav_height;
    let (mut travel, mut upload) = (0.0, 0.0);
    for (gn, w) in grid.gn_nodes.iter().zip(&grid.gn_weights) {
        let x = receive_radius(gn.r(), speed, ch);
        travel += w * 2.0 * x / speed;
        upload += w * ch.upload_time_sq(h2 + (gn.r() - x) * (gn.r() - x));
    }
    Ok(renewal_point(
        speed,
        travel,
        upload,
        cfg,
        &curve,
        grid.delta_0,
        grid.p_ww,
    ))
}

/// The heuristic's power-delay trade-off over `speeds`, from the renewal
/// averages on the continuum.
pub fn heuristic_power_delay_sweep(
    cfg: &SystemConfig,
    speeds: &[f64],
) -> Result<Vec<HeuristicPoint>> {
    speeds
        .iter()
        .map(|&v| start_end_center_renewal(v, cfg))
        .collect()
}

/// The heuristic on the node grid at the speed, on the efficient side of its
/// power minimum, where its average power equals `power`. `None` when no
/// speed up to `v_max` reaches exactly that power.
pub fn start_end_center_at_power(
    power: f64,
    grid: &StateGrid,
    cfg: &SystemConfig,
) -> Result<Option<HeuristicPoint>> {
    let at = |v: f64| start_end_center_on_grid(v, grid, cfg);
    let (v0, _) = grid_then_golden(
        |v| at(v).map_or(f64::INFINITY, |p| p.power),
        0.5,
        cfg.v_max,
        0.5,
        1e-6,
    );
    let (low, high) = (at(v0)?, at(cfg.v_max)?);
    if power < low.power || power > high.power {
        return Ok(None);
    }
    let (mut lo, mut hi) = (v0, cfg.v_max);
    let mut best = low;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        best = at(mid)?;
        if (best.power - power).abs() <= 1e-10 * power || hi - lo < 1e-12 {
            break;
        }
        if best.power < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(best))
}

/// Exact metrics of the heuristic policy on the state grid.
pub fn start_end_center_metrics(
    speed: f64,
    grid: &StateGrid,
    cfg: &SystemConfig,
) -> Result<Metrics> {
    let policy = start_end_center_policy(speed, grid, cfg)?;
    let curve = PowerCurve::new(cfg.power, cfg.v_max)?;
    policy_metrics(grid, &policy, &cfg.channel, &curve, "start-end-center/grid")
}
