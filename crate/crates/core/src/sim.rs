//! Discrete-event Monte Carlo of the relay process under a fixed policy.
//!
//! Requests arrive as one Poisson stream over the whole cell. While waiting,
//! the UAV moves in steps of `delta_0`; a request arriving during a step is
//! served once the step completes, and any further arrivals in that step or
//! during the ensuing communication phase are dropped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::comm::{phase_cost, CommAction};
use crate::config::{SimMode, SystemConfig};
use crate::error::{Error, Result};
use crate::geometry::{sample_request, PolarPos, RelativeState};
use crate::heuristics::start_end_center_action;
use crate::inner::{
    comm_greedy_with, travel_coefficients, waiting_speed, waiting_theta_star, LagrangianParams,
    ReceiveGrid, TravelCoefficients,
};
use crate::power::PowerCurve;
use crate::smdp::{InnerRule, Policy, StateGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    StepEnd,
    /// End of one operation inside a communication phase.
    OperationEnd,
    PhaseEnd,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::StepEnd => "step-end",
            EventKind::OperationEnd => "operation-end",
            EventKind::PhaseEnd => "phase-end",
        }
    }
}

/// A logged event. `power` is the propulsion power in effect since the
/// previous power-carrying event (zero for arrivals, which change nothing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    /// UAV ground radius after the event.
    pub radius: f64,
    /// Flight speed during the interval ending at the event.
    pub speed: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub cycles: usize,
    pub warmup_cycles: usize,
    pub batches: usize,
    pub mode: SimMode,
    pub keep_log: bool,
    /// Stops the episode after this many waiting steps even if fewer cycles completed.
    pub max_waiting_steps: Option<usize>,
}

impl SimOptions {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            cycles: cfg.sim.cycles,
            warmup_cycles: cfg.sim.warmup_cycles,
            batches: cfg.sim.batches,
            mode: cfg.sim.mode,
            keep_log: false,
            max_waiting_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub seed: u64,
    pub mode: SimMode,
    pub arrivals: u64,
    pub served: u64,
    pub dropped: u64,
    /// Cycles used for the estimates (after warm-up).
    pub cycles: usize,
    pub delay: f64,
    pub power: f64,
    pub energy: f64,
    pub cycle_time: f64,
    pub ci95_delay: f64,
    pub ci95_power: f64,
    pub ci95_energy: f64,
    pub ci95_cycle_time: f64,
    /// Fraction of decision stages that were communication phases.
    pub comm_stage_fraction: f64,
    pub stages: u64,
    pub total_time: f64,
    pub total_energy: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub metrics: SimMetrics,
    pub log: Vec<SimEvent>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Cycle {
    delay: f64,
    energy: f64,
    time: f64,
}

enum ContinuumInner {
    Greedy {
        co: TravelCoefficients,
        grid: ReceiveGrid,
    },
    StartEndCenter {
        speed: f64,
    },
    HoverCenter {
        speed: f64,
    },
}

struct Runner<'a> {
    policy: &'a Policy,
    grid: &'a StateGrid,
    cfg: &'a SystemConfig,
    curve: PowerCurve,
    opts: SimOptions,
    inner: Option<ContinuumInner>,
    rng: ChaCha8Rng,
    gaps: Exp<f64>,
    next_arrival: f64,
    t: f64,
    log: Vec<SimEvent>,
    arrivals: u64,
    served: u64,
    stages: u64,
    comm_stages: u64,
    energy_total: f64,
}

impl<'a> Runner<'a> {
    fn event(&mut self, kind: EventKind, radius: f64, speed: f64, power: f64) {
        if self.opts.keep_log {
            self.log.push(SimEvent {
                time: self.t,
                kind,
                radius,
                speed,
                power,
            });
        }
    }

    /// Advances the clock by `dt` at constant `speed`, logging arrivals.
    /// Returns the number of arrivals in the interval.
    fn advance(&mut self, dt: f64, speed: f64, radius: f64, kind: EventKind) -> u64 {
        let end = self.t + dt;
        let mut count = 0;
        while self.next_arrival <= end {
            count += 1;
            if self.opts.keep_log {
                self.log.push(SimEvent {
                    time: self.next_arrival,
                    kind: EventKind::Arrival,
                    radius,
                    speed,
                    power: 0.0,
                });
            }
            self.next_arrival += self.gaps.sample(&mut self.rng);
        }
        let power = self.curve.power(speed);
        self.energy_total += power * dt;
        self.t = end;
        self.event(kind, radius, speed, power);
        self.arrivals += count;
        count
    }

    fn comm_action(
        &self,
        r_u: f64,
        gn: PolarPos,
        radius: usize,
        node: usize,
    ) -> Result<CommAction> {
        let decision = self.policy.comm(radius, node);
        match &self.inner {
            None => Ok(decision.action),
            Some(ContinuumInner::Greedy { co, grid }) => {
                let s = RelativeState {
                    r_u,
                    r_g: gn.r(),
                    theta_g: gn.psi(),
                };
                let r_ub = self.grid.radii[decision.end_radius];
                let res = comm_greedy_with(s, &[r_ub], co, &self.cfg.channel, &self.curve, grid)?;
                Ok(res[0].action())
            }
            Some(ContinuumInner::StartEndCenter { speed }) => {
                Ok(start_end_center_action(gn, *speed, &self.cfg.channel))
            }
            Some(ContinuumInner::HoverCenter { speed }) => Ok(CommAction {
                q_gu: PolarPos::ORIGIN,
                v1: *speed,
                q_ub: PolarPos::ORIGIN,
                v3: *speed,
            }),
        }
    }

    fn run(mut self) -> Result<Episode> {
        let grid = self.grid;
        let continuum = self.opts.mode == SimMode::Continuum;
        let total_cycles = self.opts.warmup_cycles + self.opts.cycles;
        let mut radius_ix = 0usize;
        let mut radius = 0.0f64;
        let mut cycles: Vec<Cycle> = Vec::with_capacity(self.opts.cycles);
        let mut current = Cycle::default();
        let mut done = 0usize;
        let mut steps = 0usize;
        self.event(EventKind::StepEnd, radius, 0.0, 0.0);
        while done < total_cycles {
            if self.opts.max_waiting_steps.is_some_and(|m| steps >= m) {
                break;
            }
            steps += 1;
            // Waiting step.
            let w = *self.policy.waiting(radius_ix);
            let theta = if continuum && matches!(self.policy.inner, InnerRule::Greedy { .. }) {
                waiting_theta_star(w.v_r, radius, &self.curve)?
            } else {
                w.theta_c
            };
            let speed = waiting_speed(w.v_r, radius, theta).min(self.curve.v_max);
            let next = (radius + w.v_r * grid.delta_0).clamp(0.0, grid.cell_radius);
            let e_before = self.energy_total;
            let arrived = self.advance(grid.delta_0, speed, next, EventKind::StepEnd);
            current.energy += self.energy_total - e_before;
            current.time += grid.delta_0;
            self.stages += 1;
            if continuum {
                radius = next;
                radius_ix = grid.nearest_radius(radius);
            } else {
                let split = grid.next_radius(radius_ix, w.v_r);
                radius_ix = if split.w_hi > 0.0 && self.rng.random::<f64>() < split.w_hi {
                    split.hi
                } else {
                    split.lo
                };
                radius = grid.radii[radius_ix];
            }
            if arrived == 0 {
                continue;
            }
            self.served += 1;

            // Communication phase.
            let (gn, node) = if continuum {
                let gn = sample_request(&mut self.rng, grid.cell_radius);
                (gn, grid.nearest_node(gn))
            } else {
                let node = sample_index(&mut self.rng, &grid.gn_weights);
                (grid.gn_nodes[node], node)
            };
            let action = self.comm_action(radius, gn, radius_ix, node)?;
            let cost = phase_cost(
                radius,
                gn,
                &action,
                &self.cfg.channel,
                &self.curve.params,
                self.curve.v_max,
            )?;
            let e_before = self.energy_total;
            let ops = [
                (cost.d1, action.v1, action.q_gu.r(), EventKind::OperationEnd),
                (cost.d2, 0.0, action.q_gu.r(), EventKind::OperationEnd),
                (cost.d3, action.v3, action.q_ub.r(), EventKind::OperationEnd),
                (cost.d4, 0.0, action.q_ub.r(), EventKind::PhaseEnd),
            ];
            for (dt, v, r, kind) in ops {
                let speed = if dt == 0.0 { 0.0 } else { v };
                self.advance(dt, speed, r, kind);
            }
            current.energy += self.energy_total - e_before;
            current.delay = cost.delta_c;
            current.time += cost.delta_c;
            self.stages += 1;
            self.comm_stages += 1;
            radius = action.q_ub.r();
            radius_ix = if continuum {
                grid.nearest_radius(radius)
            } else {
                self.policy.comm(radius_ix, node).end_radius
            };
            if !continuum {
                radius = grid.radii[radius_ix];
            }
            done += 1;
            if done > self.opts.warmup_cycles {
                cycles.push(current);
            }
            current = Cycle::default();
        }

        let metrics = summarize(&self, &cycles);
        Ok(Episode {
            metrics,
            log: self.log,
        })
    }
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn t_quantile(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

fn summarize(run: &Runner<'_>, cycles: &[Cycle]) -> SimMetrics {
    let n = cycles.len();
    let sum = |f: fn(&Cycle) -> f64| cycles.iter().map(f).sum::<f64>();
    let (d, e, t) = (sum(|c| c.delay), sum(|c| c.energy), sum(|c| c.time));
    let mut warning = None;
    if n < 30 {
        warning = Some(format!(
            "only {n} cycles completed; estimates are unreliable below 30"
        ));
    }
    let batches = run.opts.batches.min(n);
    let (mut ci_d, mut ci_p, mut ci_e, mut ci_t) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    if batches >= 2 {
        let size = n / batches;
        let mut bd = Vec::with_capacity(batches);
        let mut bp = Vec::with_capacity(batches);
        let mut be = Vec::with_capacity(batches);
        let mut bt = Vec::with_capacity(batches);
        for b in 0..batches {
            let chunk = &cycles[b * size..(b + 1) * size];
            let k = chunk.len() as f64;
            let (sd, se, st) = chunk.iter().fold((0.0, 0.0, 0.0), |acc, c| {
                (acc.0 + c.delay, acc.1 + c.energy, acc.2 + c.time)
            });
            bd.push(sd / k);
            be.push(se / k);
            bt.push(st / k);
            bp.push(se / st);
        }
        let q = t_quantile(batches - 1);
        ci_d = q * std_error(&bd);
        ci_p = q * std_error(&bp);
        ci_e = q * std_error(&be);
        ci_t = q * std_error(&bt);
    }
    let nf = n as f64;
    SimMetrics {
        seed: 0,
        mode: run.opts.mode,
        arrivals: run.arrivals,
        served: run.served,
        dropped: run.arrivals - run.served,
        cycles: n,
        delay: if n > 0 { d / nf } else { f64::NAN },
        power: if n > 0 {
            e / t
        } else {
            run.energy_total / run.t
        },
        energy: if n > 0 { e / nf } else { f64::NAN },
        cycle_time: if n > 0 { t / nf } else { f64::NAN },
        ci95_delay: ci_d,
        ci95_power: ci_p,
        ci95_energy: ci_e,
        ci95_cycle_time: ci_t,
        comm_stage_fraction: run.comm_stages as f64 / run.stages.max(1) as f64,
        stages: run.stages,
        total_time: run.t,
        total_energy: run.energy_total,
        warning,
    }
}

fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Simulates one episode of `policy` with its own random stream.
pub fn run_episode(
    policy: &Policy,
    grid: &StateGrid,
    cfg: &SystemConfig,
    opts: &SimOptions,
    seed: u64,
) -> Result<Episode> {
    policy.check_grid(grid)?;
    let curve = PowerCurve::new(cfg.power, cfg.v_max)?;
    let inner = match (opts.mode, policy.inner) {
        (SimMode::Grid, _) => None,
        (SimMode::Continuum, InnerRule::Greedy { nu, p_avg }) => {
            let lp = LagrangianParams::new(nu, p_avg, grid.delta_0)?;
            Some(ContinuumInner::Greedy {
                co: travel_coefficients(&lp, &curve, cfg.search.speed_step)?,
                grid: ReceiveGrid::new(&cfg.search),
            })
        }
        (SimMode::Continuum, InnerRule::StartEndCenter { speed }) => {
            Some(ContinuumInner::StartEndCenter { speed })
        }
        (SimMode::Continuum, InnerRule::HoverCenter { speed }) => {
            Some(ContinuumInner::HoverCenter { speed })
        }
    };
    let rate = cfg.total_arrival_rate();
    let gaps = Exp::new(rate).map_err(|_| Error::InvalidArgument {
        name: "arrival_rate",
        requirement: "finite and > 0",
        value: rate,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = gaps.sample(&mut rng);
    let runner = Runner {
        policy,
        grid,
        cfg,
        curve,
        opts: *opts,
        inner,
        rng,
        gaps,
        next_arrival: first,
        t: 0.0,
        log: Vec::new(),
        arrivals: 0,
        served: 0,
        stages: 0,
        comm_stages: 0,
        energy_total: 0.0,
    };
    let mut episode = runner.run()?;
    episode.metrics.seed = seed;
    Ok(episode)
}

/// Integral of the logged piecewise-constant power profile.
pub fn audit_energy(log: &[SimEvent]) -> f64 {
    let mut last = match log.first() {
        Some(e) => e.time,
        None => return 0.0,
    };
    let mut total = 0.0;
    for e in log.iter().skip(1).filter(|e| e.kind != EventKind::Arrival) {
        total += (e.time - last) * e.power;
        last = e.time;
    }
    total
}

pub fn write_event_log(log: &[SimEvent], mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "time,kind,radius,speed,power")?;
    for e in log {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.time,
            e.kind.as_str(),
            e.radius,
            e.speed,
            e.power
        )?;
    }
    Ok(())
}

/// Across-replication summary of one estimated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci95: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = std_error(xs);
        Self {
            mean,
            std_error: se,
            ci95: t_quantile(n - 1) * se,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.ci95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    /// Per-seed results, sorted by seed.
    pub runs: Vec<SimMetrics>,
    pub delay: Estimate,
    pub power: Estimate,
    pub energy: Estimate,
    pub cycle_time: Estimate,
    pub drop_fraction: Estimate,
    pub comm_stage_fraction: Estimate,
}

/// Independent replications, one per seed, run concurrently.
pub fn replicate(
    policy: &Policy,
    grid: &StateGrid,
    cfg: &SystemConfig,
    opts: &SimOptions,
    seeds: &[u64],
) -> Result<Replication> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument {
            name: "seeds",
            requirement: "at least 2",
            value: seeds.len() as f64,
        });
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let opts = SimOptions {
        keep_log: false,
        ..*opts
    };
    let runs: Vec<SimMetrics> = sorted
        .par_iter()
        .map(|&s| run_episode(policy, grid, cfg, &opts, s).map(|e| e.metrics))
        .collect::<Result<_>>()?;
    let pick =
        |f: fn(&SimMetrics) -> f64| Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(Replication {
        delay: pick(|m| m.delay),
        power: pick(|m| m.power),
        energy: pick(|m| m.energy),
        cycle_time: pick(|m| m.cycle_time),
        drop_fraction: pick(|m| m.dropped as f64 / m.arrivals.max(1) as f64),
        comm_stage_fraction: pick(|m| m.comm_stage_fraction),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{
        hover_center_delay, hover_center_policy, start_end_center_policy, start_end_center_renewal,
    };
    use crate::smdp::build_grid;

    fn setup() -> (SystemConfig, StateGrid) {
        let cfg = SystemConfig::default();
        let grid = build_grid(&cfg).unwrap();
        (cfg, grid)
    }

    fn opts(cycles: usize, mode: SimMode) -> SimOptions {
        SimOptions {
            cycles,
            warmup_cycles: 10,
            batches: 20,
            mode,
            keep_log: true,
            max_waiting_steps: None,
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (cfg, grid) = setup();
        let p = start_end_center_policy(30.0, &grid, &cfg).unwrap();
        let a = run_episode(&p, &grid, &cfg, &opts(200, SimMode::Grid), 7).unwrap();
        let b = run_episode(&p, &grid, &cfg, &opts(200, SimMode::Grid), 7).unwrap();
        assert_eq!(a, b);
        let c = run_episode(&p, &grid, &cfg, &opts(200, SimMode::Grid), 8).unwrap();
        assert_ne!(a.metrics.delay, c.metrics.delay);
    }

    #[test]
    fn energy_log_audit_balances() {
        let (cfg, grid) = setup();
        let p = start_end_center_policy(25.0, &grid, &cfg).unwrap();
        for mode in [SimMode::Grid, SimMode::Continuum] {
            let e = run_episode(&p, &grid, &cfg, &opts(300, mode), 3).unwrap();
            let audit = audit_energy(&e.log);
            assert!((audit - e.metrics.total_energy).abs() <= 1e-9 * audit);
            assert!(e.log.windows(2).all(|w| w[0].time <= w[1].time));
            assert_eq!(e.metrics.served + e.metrics.dropped, e.metrics.arrivals);
        }
    }

    #[test]
    fn hover_center_continuum_matches_analytic_delay() {
        let (cfg, grid) = setup();
        let p = hover_center_policy(&grid, &cfg);
        let r = replicate(
            &p,
            &grid,
            &cfg,
            &opts(3000, SimMode::Continuum),
            &(0..10).collect::<Vec<_>>(),
        )
        .unwrap();
        let want = hover_center_delay(&cfg);
        assert!(r.delay.contains(want), "{:?} vs {want}", r.delay);
    }

    #[test]
    fn renewal_and_simulation_agree_for_start_end_center() {
        let (cfg, grid) = setup();
        let v = 35.0;
        let p = start_end_center_policy(v, &grid, &cfg).unwrap();
        let r = replicate(
            &p,
            &grid,
            &cfg,
            &opts(3000, SimMode::Continuum),
            &(0..10).collect::<Vec<_>>(),
        )
        .unwrap();
        let want = start_end_center_renewal(v, &cfg).unwrap();
        assert!(
            r.delay.contains(want.delay),
            "{:?} vs {}",
            r.delay,
            want.delay
        );
        assert!(
            r.power.contains(want.power),
            "{:?} vs {}",
            r.power,
            want.power
        );
    }

    #[test]
    fn nearly_silent_cell_only_waits() {
        let (cfg, _) = setup();
        let quiet = cfg.with_file_edit(|f| f.grid.p_ww = 1.0 - 1e-12).unwrap();
        let grid = build_grid(&quiet).unwrap();
        let p = start_end_center_policy(30.0, &grid, &quiet).unwrap();
        let mut o = opts(100, SimMode::Grid);
        o.max_waiting_steps = Some(1000);
        let e = run_episode(&p, &grid, &quiet, &o, 1).unwrap();
        assert_eq!(e.metrics.served, 0);
        assert!(e.metrics.warning.is_some());
        assert!((e.metrics.power - quiet.power.power_at(0.0)).abs() < 1e-9);
    }

    #[test]
    fn replicate_ignores_seed_order_and_shrinks_error() {
        let (cfg, grid) = setup();
        let p = start_end_center_policy(40.0, &grid, &cfg).unwrap();
        let o = opts(300, SimMode::Grid);
        let a = replicate(&p, &grid, &cfg, &o, &[5, 1, 9, 3]).unwrap();
        let b = replicate(&p, &grid, &cfg, &o, &[9, 3, 5, 1]).unwrap();
        assert_eq!(a, b);
        assert!(replicate(&p, &grid, &cfg, &o, &[1]).is_err());
    }

    #[test]
    fn comm_stage_frequency_matches_phase_probability() {
        let (cfg, grid) = setup();
        let p = start_end_center_policy(30.0, &grid, &cfg).unwrap();
        let e = run_episode(&p, &grid, &cfg, &opts(20_000, SimMode::Grid), 4).unwrap();
        let (_, pi_c) = grid.phase_probs();
        let n = e.metrics.stages as f64;
        let sd = (pi_c * (1.0 - pi_c) / n).sqrt();
        assert!((e.metrics.comm_stage_fraction - pi_c).abs() < 3.0 * sd);
    }
}
