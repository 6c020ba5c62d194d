//! Greedy inner scale of the two-scale policy.
//!
//! The outer dynamic program only chooses the radial velocity of waiting
//! steps and the end radius of communication phases, because those are the
//! only action components that move the state distribution. Everything else
//! (angular velocity while waiting; receive point, relay angle and leg speeds
//! while communicating) is chosen here by minimizing the per-stage Lagrangian
//! cost.
//!
//! Two exact reductions keep the communication search small:
//!
//! * each flight leg costs `length * c(v)` with
//!   `c(v) = ((1 - nu*P_avg) + nu*P(v)) / v`, so both legs use the same speed
//!   `argmin c`, whatever the endpoints;
//! * the relay link only depends on the relay radius, and the second leg is
//!   shortest when the relay point lies on the receive point's ray, so only
//!   the receive point needs a 2-D search.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comm::{gu_distance_sq, ChannelParams, CommAction};
use crate::config::{SearchGrids, SystemConfig};
use crate::error::{check_non_negative, check_positive, Error, Result};
use crate::geometry::{chord, PolarPos, RelativeState};
use crate::optim::grid_then_golden;
use crate::power::PowerCurve;
use crate::smdp::StateGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianParams {
    /// Multiplier on the power constraint, s/J.
    pub nu: f64,
    pub p_avg: f64,
    /// Duration of one waiting step, s.
    pub delta_0: f64,
}

impl LagrangianParams {
    pub fn new(nu: f64, p_avg: f64, delta_0: f64) -> Result<Self> {
        Ok(Self {
            nu: check_non_negative("nu", nu)?,
            p_avg: check_positive("p_avg", p_avg)?,
            delta_0: check_positive("delta_0", delta_0)?,
        })
    }
}

/// Largest multiplier for which flying and hovering still cost more than
/// they save. `None` when every multiplier is admissible.
pub fn admissible_nu_cap(p_avg: f64, curve: &PowerCurve) -> Option<f64> {
    let slack = p_avg - curve.min.power;
    (slack > 0.0).then(|| 1.0 / slack)
}

/// Per-stage weights of the communication objective after the speed reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelCoefficients {
    /// Cost per second of hovering: `(1 - nu*P_avg) + nu*P(0)`.
    pub hover: f64,
    /// Common speed of both legs.
    pub speed: f64,
    /// Cost per meter flown at `speed`.
    pub per_meter: f64,
}

pub fn travel_coefficients(
    lp: &LagrangianParams,
    curve: &PowerCurve,
    speed_step: f64,
) -> Result<TravelCoefficients> {
    let base = 1.0 - lp.nu * lp.p_avg;
    let hover = base + lp.nu * curve.power(0.0);
    if base + lp.nu * curve.min.power <= 0.0 || hover <= 0.0 {
        return Err(Error::InadmissibleDual {
            nu: lp.nu,
            cap: admissible_nu_cap(lp.p_avg, curve).unwrap_or(f64::INFINITY),
        });
    }
    let per_meter = |v: f64| (base + lp.nu * curve.power(v)) / v;
    let lo = speed_step.min(curve.v_max);
    let (speed, cost) = grid_then_golden(per_meter, lo, curve.v_max, speed_step, 1e-10);
    Ok(TravelCoefficients {
        hover,
        speed,
        per_meter: cost,
    })
}

/// Angular rate that makes waiting flight cheapest for radial velocity `v_r`
/// at radius `r_u`. At the center the angular rate cannot change the speed
/// and is taken as zero.
pub fn waiting_theta_star(v_r: f64, r_u: f64, curve: &PowerCurve) -> Result<f64> {
    if !v_r.is_finite() || v_r.abs() > curve.v_max * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument {
            name: "v_r",
            requirement: "|v_r| <= v_max",
            value: v_r,
        });
    }
    check_non_negative("r_u", r_u)?;
    let vr = v_r.abs().min(curve.v_max);
    if r_u == 0.0 {
        return Ok(0.0);
    }
    let target = if curve.unimodal {
        if vr >= curve.min.speed {
            return Ok(0.0);
        }
        curve.min.speed
    } else {
        curve.min_on(vr, curve.v_max).speed
    };
    Ok((target * target - vr * vr).max(0.0).sqrt() / r_u)
}

#[inline]
pub fn waiting_speed(v_r: f64, r_u: f64, theta_c: f64) -> f64 {
    (v_r * v_r + r_u * r_u * theta_c * theta_c).sqrt()
}

/// Lagrangian cost of one waiting step with the cheapest angular rate.
pub fn waiting_ell(v_r: f64, r_u: f64, lp: &LagrangianParams, curve: &PowerCurve) -> Result<f64> {
    let theta = waiting_theta_star(v_r, r_u, curve)?;
    let speed = waiting_speed(v_r, r_u, theta).min(curve.v_max);
    Ok(lp.nu * (curve.power(speed) - lp.p_avg) * lp.delta_0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommGreedyResult {
    pub ell_star: f64,
    pub q_gu_star: PolarPos,
    pub v1_star: f64,
    pub v3_star: f64,
    pub theta_ub_star: f64,
    pub r_ub: f64,
    pub delay: f64,
    pub energy: f64,
}

impl CommGreedyResult {
    pub fn action(&self) -> CommAction {
        CommAction {
            q_gu: self.q_gu_star,
            v1: self.v1_star,
            q_ub: PolarPos::new(self.r_ub, self.theta_ub_star).expect("valid relay point"),
            v3: self.v3_star,
        }
    }
}

/// Candidate receive points of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveGrid {
    pub points: Vec<PolarPos>,
}

impl ReceiveGrid {
    pub fn new(search: &SearchGrids) -> Self {
        let mut points = vec![PolarPos::ORIGIN];
        for i in 1..search.radii {
            let r = search.max_radius * i as f64 / (search.radii - 1) as f64;
            for k in 0..search.angles {
                points.push(
                    PolarPos::new(r, TAU * k as f64 / search.angles as f64)
                        .expect("valid grid point"),
                );
            }
        }
        Self { points }
    }
}

/// Flight distance to every receive point from a UAV at `(r_u, 0)`.
fn approach_lengths(r_u: f64, points: &[PolarPos]) -> Vec<f64> {
    points.iter().map(|q| chord(r_u, q.r(), q.psi())).collect()
}

/// Upload time from `gn` at every receive point.
fn upload_times(gn: PolarPos, points: &[PolarPos], ch: &ChannelParams) -> Vec<f64> {
    points
        .iter()
        .map(|q| ch.upload_time_sq(gu_distance_sq(q.r(), q.psi(), gn, ch)))
        .collect()
}

/// For each relay radius, the receive point minimizing the reduced objective.
fn best_receive_points(
    approach: &[f64],
    upload: &[f64],
    points: &[PolarPos],
    co: &TravelCoefficients,
    relay_radii: &[f64],
    relay_times: &[f64],
) -> Vec<(f64, u32)> {
    let mut best = vec![(f64::INFINITY, 0u32); relay_radii.len()];
    for (k, q) in points.iter().enumerate() {
        let base = co.per_meter * approach[k] + co.hover * upload[k];
        for (j, b) in best.iter_mut().enumerate() {
            let v =
                base + co.per_meter * (q.r() - relay_radii[j]).abs() + co.hover * relay_times[j];
            if v < b.0 {
                *b = (v, k as u32);
            }
        }
    }
    best
}

fn assemble(
    r_u: f64,
    q: PolarPos,
    ell: f64,
    r_ub: f64,
    upload: f64,
    relay: f64,
    co: &TravelCoefficients,
    curve: &PowerCurve,
) -> CommGreedyResult {
    let flown = chord(r_u, q.r(), q.psi()) + (q.r() - r_ub).abs();
    let flight_time = flown / co.speed;
    CommGreedyResult {
        ell_star: ell,
        q_gu_star: q,
        v1_star: co.speed,
        v3_star: co.speed,
        theta_ub_star: q.psi(),
        r_ub,
        delay: flight_time + upload + relay,
        energy: flight_time * curve.power(co.speed) + (upload + relay) * curve.power(0.0),
    }
}

/// Greedy communication action for the relative state `s` and end radius `r_ub`.
pub fn comm_greedy(
    s: RelativeState,
    r_ub: f64,
    lp: &LagrangianParams,
    ch: &ChannelParams,
    curve: &PowerCurve,
    search: &SearchGrids,
) -> Result<CommGreedyResult> {
    check_non_negative("r_ub", r_ub)?;
    let co = travel_coefficients(lp, curve, search.speed_step)?;
    let grid = ReceiveGrid::new(search);
    comm_greedy_with(s, &[r_ub], &co, ch, curve, &grid).map(|mut v| v.remove(0))
}

/// Greedy actions for several end radii at once, reusing precomputed coefficients.
pub fn comm_greedy_with(
    s: RelativeState,
    relay_radii: &[f64],
    co: &TravelCoefficients,
    ch: &ChannelParams,
    curve: &PowerCurve,
    grid: &ReceiveGrid,
) -> Result<Vec<CommGreedyResult>> {
    for &r in relay_radii {
        check_non_negative("r_ub", r)?;
    }
    let gn = PolarPos::new(s.r_g, s.theta_g)?;
    let approach = approach_lengths(s.r_u, &grid.points);
    let upload = upload_times(gn, &grid.points, ch);
    let relay: Vec<f64> = relay_radii.iter().map(|&r| ch.relay_time(r)).collect();
    let best = best_receive_points(&approach, &upload, &grid.points, co, relay_radii, &relay);
    Ok(best
        .iter()
        .zip(relay_radii.iter().zip(&relay))
        .map(|(&(ell, k), (&r_ub, &t4))| {
            let k = k as usize;
            assemble(s.r_u, grid.points[k], ell, r_ub, upload[k], t4, co, curve)
        })
        .collect())
}

/// Stage costs of the outer problem on the discretized state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub n_radii: usize,
    pub n_nodes: usize,
    pub n_vr: usize,
    /// `[radius][v_r]`
    pub waiting: Vec<f64>,
    /// `[radius][node][end radius]`
    pub comm: Vec<f64>,
}

impl StageCosts {
    pub fn constant(n_radii: usize, n_nodes: usize, n_vr: usize, c: f64) -> Self {
        Self {
            n_radii,
            n_nodes,
            n_vr,
            waiting: vec![c; n_radii * n_vr],
            comm: vec![c; n_radii * n_nodes * n_radii],
        }
    }

    #[inline]
    pub fn waiting(&self, radius: usize, vr: usize) -> f64 {
        self.waiting[radius * self.n_vr + vr]
    }

    #[inline]
    pub fn comm(&self, radius: usize, node: usize, end: usize) -> f64 {
        self.comm[(radius * self.n_nodes + node) * self.n_radii + end]
    }

    #[inline]
    pub fn comm_index(&self, radius: usize, node: usize, end: usize) -> usize {
        (radius * self.n_nodes + node) * self.n_radii + end
    }
}

/// Multiplier-independent part of the receive-point search over a state grid.
#[derive(Debug, Clone)]
pub struct ReceiveGeometry {
    pub grid: ReceiveGrid,
    approach: Vec<Vec<f64>>,
    upload: Vec<Vec<f64>>,
    relay: Vec<f64>,
}

impl ReceiveGeometry {
    pub fn new(state: &StateGrid, ch: &ChannelParams, search: &SearchGrids) -> Self {
        let grid = ReceiveGrid::new(search);
        let approach = state
            .radii
            .par_iter()
            .map(|&r| approach_lengths(r, &grid.points))
            .collect();
        let upload = state
            .gn_nodes
            .par_iter()
            .map(|&gn| upload_times(gn, &grid.points, ch))
            .collect();
        let relay = state.radii.iter().map(|&r| ch.relay_time(r)).collect();
        Self {
            grid,
            approach,
            upload,
            relay,
        }
    }
}

/// Dense greedy tables for one multiplier value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyTables {
    pub lagrangian: LagrangianParams,
    pub coefficients: TravelCoefficients,
    pub costs: StageCosts,
    /// Best angular rate, `[radius][v_r]`.
    pub waiting_theta: Vec<f64>,
    /// Chosen receive point, indexing `receive_points`, `[radius][node][end radius]`.
    pub comm_receive: Vec<u32>,
    pub receive_points: Vec<PolarPos>,
}

impl GreedyTables {
    /// The communication result stored for `(radius, node, end)`, expanded to a full action.
    pub fn comm_result(
        &self,
        state: &StateGrid,
        ch: &ChannelParams,
        curve: &PowerCurve,
        radius: usize,
        node: usize,
        end: usize,
    ) -> CommGreedyResult {
        let idx = self.costs.comm_index(radius, node, end);
        let q = self.receive_points[self.comm_receive[idx] as usize];
        let gn = state.gn_nodes[node];
        let upload = ch.upload_time_sq(gu_distance_sq(q.r(), q.psi(), gn, ch));
        let r_ub = state.radii[end];
        assemble(
            state.radii[radius],
            q,
            self.costs.comm[idx],
            r_ub,
            upload,
            ch.relay_time(r_ub),
            &self.coefficients,
            curve,
        )
    }
}

/// Builds the greedy tables for every discrete `(state, outer action)` pair.
pub fn build_tables(
    state: &StateGrid,
    lp: &LagrangianParams,
    cfg: &SystemConfig,
) -> Result<GreedyTables> {
    let curve = PowerCurve::new(cfg.power, cfg.v_max)?;
    let geometry = ReceiveGeometry::new(state, &cfg.channel, &cfg.search);
    build_tables_with(state, &geometry, lp, &curve, cfg.search.speed_step)
}

pub fn build_tables_with(
    state: &StateGrid,
    geometry: &ReceiveGeometry,
    lp: &LagrangianParams,
    curve: &PowerCurve,
    speed_step: f64,
) -> Result<GreedyTables> {
    let co = travel_coefficients(lp, curve, speed_step)?;
    let (n, g, k) = (state.n_radii(), state.n_nodes(), state.n_vr());

    let mut waiting = Vec::with_capacity(n * k);
    let mut waiting_theta = Vec::with_capacity(n * k);
    for &r in &state.radii {
        for &v in &state.v_r {
            waiting.push(waiting_ell(v, r, lp, curve)?);
            waiting_theta.push(waiting_theta_star(v, r, curve)?);
        }
    }

    let blocks: Vec<Vec<(f64, u32)>> = (0..n * g)
        .into_par_iter()
        .map(|ix| {
            let (i, node) = (ix / g, ix % g);
            best_receive_points(
                &geometry.approach[i],
                &geometry.upload[node],
                &geometry.grid.points,
                &co,
                &state.radii,
                &geometry.relay,
            )
        })
        .collect();
    let mut comm = Vec::with_capacity(n * g * n);
    let mut comm_receive = Vec::with_capacity(n * g * n);
    for block in blocks {
        for (ell, kk) in block {
            comm.push(ell);
            comm_receive.push(kk);
        }
    }

    Ok(GreedyTables {
        lagrangian: *lp,
        coefficients: co,
        costs: StageCosts {
            n_radii: n,
            n_nodes: g,
            n_vr: k,
            waiting,
            comm,
        },
        waiting_theta,
        comm_receive,
        receive_points: geometry.grid.points.clone(),
    })
}
