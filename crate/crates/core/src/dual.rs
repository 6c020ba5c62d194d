//! Lagrangian dual of the power-constrained delay problem.
//!
//! For a multiplier `nu >= 0` the dual function is the optimal average
//! per-cycle value of `delay + nu * (energy - P_avg * time)`, which the
//! two-scale solver computes. It is concave and piecewise linear in `nu`;
//! `energy - P_avg * time` of the minimizing policy is a supergradient.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DualMethod, SystemConfig};
use crate::error::{Error, Result};
use crate::geometry::RelativeState;
use crate::inner::{
    admissible_nu_cap, build_tables_with, comm_greedy_with, travel_coefficients, CommGreedyResult,
    LagrangianParams, ReceiveGeometry, ReceiveGrid,
};
use crate::power::PowerCurve;
use crate::smdp::{
    build_grid, policy_metrics, relative_value_iteration, DpSolution, Metrics, StateGrid,
};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEvaluation {
    pub nu: f64,
    /// Dual function value, s per request.
    pub value: f64,
    /// `energy - P_avg * time` per cycle of the minimizing policy, J.
    pub subgradient: f64,
    pub metrics: Metrics,
    pub solution: DpSolution,
}

/// One row of the optimizer trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub phase: TracePhase,
    pub nu: f64,
    pub dual_value: f64,
    pub subgradient: f64,
    pub delay: f64,
    pub power: f64,
    pub rvi_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TracePhase {
    Zero,
    Feasibility,
    Sweep,
    Golden,
    Subgradient,
    Bisection,
}

impl TracePhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            TracePhase::Zero => "zero",
            TracePhase::Feasibility => "feasibility",
            TracePhase::Sweep => "sweep",
            TracePhase::Golden => "golden",
            TracePhase::Subgradient => "subgradient",
            TracePhase::Bisection => "bisection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualResult {
    /// Multiplier with the best dual value found.
    pub nu_star: f64,
    pub dual_value: f64,
    /// Lowest-delay evaluated policy that meets the power target.
    pub primal: Arc<DualEvaluation>,
    /// Primal delay minus best dual value.
    pub duality_gap: f64,
    pub trace: Vec<TraceRow>,
}

/// Everything about one configuration that does not depend on the multiplier.
pub struct DualProblem {
    pub cfg: SystemConfig,
    pub grid: StateGrid,
    pub curve: PowerCurve,
    pub config_sha256: String,
    geometry: ReceiveGeometry,
    evaluated: Mutex<Vec<Arc<DualEvaluation>>>,
}

impl DualProblem {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        let grid = build_grid(cfg)?;
        let curve = PowerCurve::new(cfg.power, cfg.v_max)?;
        let geometry = ReceiveGeometry::new(&grid, &cfg.channel, &cfg.search);
        Ok(Self {
            cfg: cfg.clone(),
            grid,
            curve,
            config_sha256: cfg.sha256(),
            geometry,
            evaluated: Mutex::new(Vec::new()),
        })
    }

    /// Same multiplier-independent data, different power target.
    pub fn with_p_avg(&self, p_avg: f64) -> Result<Self> {
        let cfg = self.cfg.with_p_avg(p_avg)?;
        Ok(Self {
            config_sha256: cfg.sha256(),
            cfg,
            grid: self.grid.clone(),
            curve: self.curve,
            geometry: self.geometry.clone(),
            evaluated: Mutex::new(Vec::new()),
        })
    }

    /// Largest multiplier searched, just inside the admissible range.
    pub fn nu_cap(&self) -> Option<f64> {
        admissible_nu_cap(self.cfg.p_avg, &self.curve)
            .map(|c| c * (1.0 - self.cfg.solver.nu_cap_margin))
    }

    /// Solves the inner and outer problems at `nu`. Results are memoized.
    pub fn evaluate(&self, nu: f64) -> Result<Arc<DualEvaluation>> {
        if let Some(e) = self.lookup(nu) {
            return Ok(e);
        }
        let lp = LagrangianParams::new(nu, self.cfg.p_avg, self.grid.delta_0)?;
        let tables = build_tables_with(
            &self.grid,
            &self.geometry,
            &lp,
            &self.curve,
            self.cfg.search.speed_step,
        )?;
        let solution = relative_value_iteration(
            &self.grid,
            &tables,
            &self.cfg.channel,
            &self.curve,
            &self.cfg.solver,
            &self.config_sha256,
        )?;
        let metrics = policy_metrics(
            &self.grid,
            &solution.policy,
            &self.cfg.channel,
            &self.curve,
            "dp-grid",
        )?;
        let e = Arc::new(DualEvaluation {
            nu,
            value: solution.g,
            subgradient: metrics.energy - self.cfg.p_avg * metrics.cycle_time,
            metrics,
            solution,
        });
        let mut all = self.evaluated.lock().expect("evaluation cache poisoned");
        if let Some(existing) = all.iter().find(|x| x.nu.to_bits() == nu.to_bits()) {
            return Ok(existing.clone());
        }
        all.push(e.clone());
        Ok(e)
    }

    fn lookup(&self, nu: f64) -> Option<Arc<DualEvaluation>> {
        let all = self.evaluated.lock().expect("evaluation cache poisoned");
        all.iter().find(|x| x.nu.to_bits() == nu.to_bits()).cloned()
    }

    /// All evaluations so far, sorted by multiplier.
    pub fn evaluations(&self) -> Vec<Arc<DualEvaluation>> {
        let mut all = self
            .evaluated
            .lock()
            .expect("evaluation cache poisoned")
            .clone();
        all.sort_by(|a, b| a.nu.total_cmp(&b.nu));
        all
    }

    /// Average power of the policy at the largest admissible multiplier,
    /// which is close to the least power any policy can draw. Fails if even
    /// that policy exceeds the target.
    pub fn feasibility_check(&self) -> Result<Arc<DualEvaluation>> {
        let p_avg = self.cfg.p_avg;
        let Some(cap) = self.nu_cap() else {
            return Err(Error::Infeasible {
                p_avg,
                min_power: self.curve.min.power,
            });
        };
        let e = self.evaluate(cap)?;
        if e.metrics.power > p_avg * (1.0 + self.cfg.solver.feasibility_tolerance) {
            return Err(Error::Infeasible {
                p_avg,
                min_power: e.metrics.power,
            });
        }
        Ok(e)
    }

    fn row(&self, step: usize, phase: TracePhase, e: &DualEvaluation) -> TraceRow {
        TraceRow {
            step,
            phase,
            nu: e.nu,
            dual_value: e.value,
            subgradient: e.subgradient,
            delay: e.metrics.delay,
            power: e.metrics.power,
            rvi_iterations: e.solution.iterations,
        }
    }

    fn recover_primal(&self, best: &DualEvaluation) -> Result<(Arc<DualEvaluation>, f64)> {
        let limit = self.cfg.p_avg * (1.0 + self.cfg.solver.feasibility_tolerance);
        let all = self.evaluations();
        let mut feasible: Option<Arc<DualEvaluation>> = None;
        for e in &all {
            if e.metrics.power <= limit
                && feasible
                    .as_ref()
                    .is_none_or(|f| e.metrics.delay < f.metrics.delay)
            {
                feasible = Some(e.clone());
            }
        }
        match feasible {
            Some(f) => {
                let gap = f.metrics.delay - best.value;
                Ok((f, gap))
            }
            None => {
                let least = all
                    .iter()
                    .min_by(|a, b| a.metrics.power.total_cmp(&b.metrics.power))
                    .expect("at least one evaluation");
                Err(Error::NoFeasiblePolicy {
                    p_avg: self.cfg.p_avg,
                    least_power: least.metrics.power,
                    least_nu: least.nu,
                })
            }
        }
    }
}

/// Evaluates the dual function once for a fresh configuration.
pub fn evaluate_dual(nu: f64, cfg: &SystemConfig) -> Result<DualEvaluation> {
    let problem = DualProblem::new(cfg)?;
    Ok((*problem.evaluate(nu)?).clone())
}

/// Maximizes the dual function over `[0, cap]` and recovers a primal policy.
pub fn maximize_dual(problem: &DualProblem) -> Result<DualResult> {
    let mut trace = Vec::new();
    let zero = problem.evaluate(0.0)?;
    trace.push(problem.row(0, TracePhase::Zero, &zero));
    if zero.subgradient <= 0.0 {
        return Ok(DualResult {
            nu_star: 0.0,
            dual_value: zero.value,
            duality_gap: zero.metrics.delay - zero.value,
            primal: zero,
            trace,
        });
    }
    let cap_eval = problem.feasibility_check()?;
    trace.push(problem.row(trace.len(), TracePhase::Feasibility, &cap_eval));
    let cap = cap_eval.nu;

    let best = match problem.cfg.solver.dual_method {
        DualMethod::Golden => golden_search(problem, cap, &mut trace)?,
        DualMethod::Subgradient => subgradient_ascent(problem, cap, zero.subgradient, &mut trace)?,
    };
    let (primal, gap) = problem.recover_primal(&best)?;
    Ok(DualResult {
        nu_star: best.nu,
        dual_value: best.value,
        primal,
        duality_gap: gap,
        trace,
    })
}

fn golden_search(
    problem: &DualProblem,
    cap: f64,
    trace: &mut Vec<TraceRow>,
) -> Result<Arc<DualEvaluation>> {
    let m = problem.cfg.solver.dual_sweep_points;
    let lo = cap * 1e-4;
    let mut points = vec![0.0];
    points.extend((0..m).map(|i| lo * (cap / lo).powf(i as f64 / (m - 1) as f64)));
    *points.last_mut().expect("non-empty") = cap;
    let sweep: Vec<Arc<DualEvaluation>> = points[1..]
        .par_iter()
        .map(|&nu| problem.evaluate(nu))
        .collect::<Result<_>>()?;
    for e in &sweep {
        trace.push(problem.row(trace.len(), TracePhase::Sweep, e));
    }
    let mut values = vec![problem.evaluate(0.0)?];
    values.extend(sweep);
    let mut best_ix = 0;
    for (i, e) in values.iter().enumerate() {
        if e.value > values[best_ix].value {
            best_ix = i;
        }
    }
    let mut a = points[best_ix.saturating_sub(1)];
    let mut b = points[(best_ix + 1).min(points.len() - 1)];
    let mut best = values[best_ix].clone();
    let tol = problem.cfg.solver.dual_tolerance;

    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = problem.evaluate(x1)?;
    let mut f2 = problem.evaluate(x2)?;
    trace.push(problem.row(trace.len(), TracePhase::Golden, &f1));
    trace.push(problem.row(trace.len(), TracePhase::Golden, &f2));
    while b - a > tol * b.max(f64::MIN_POSITIVE) {
        if f1.value >= f2.value {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = problem.evaluate(x1)?;
            trace.push(problem.row(trace.len(), TracePhase::Golden, &f1));
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = problem.evaluate(x2)?;
            trace.push(problem.row(trace.len(), TracePhase::Golden, &f2));
        }
    }
    for e in [f1, f2] {
        if e.value > best.value {
            best = e;
        }
    }
    Ok(best)
}

fn subgradient_ascent(
    problem: &DualProblem,
    cap: f64,
    subgradient_at_zero: f64,
    trace: &mut Vec<TraceRow>,
) -> Result<Arc<DualEvaluation>> {
    let step0 = 0.5 * cap / subgradient_at_zero.abs().max(1.0);
    let mut nu = 0.0;
    let mut best = problem.evaluate(0.0)?;
    for k in 1..=problem.cfg.solver.subgradient_iterations {
        let e = problem.evaluate(nu)?;
        if k > 1 {
            trace.push(problem.row(trace.len(), TracePhase::Subgradient, &e));
        }
        if e.value > best.value {
            best = e.clone();
        }
        nu = (nu + step0 / k as f64 * e.subgradient).clamp(0.0, cap);
    }
    Ok(best)
}

/// Finds the multiplier where the supergradient changes sign by bisection.
pub fn bisect_dual(
    problem: &DualProblem,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<Arc<DualEvaluation>> {
    let mut best = problem.evaluate(lo)?;
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        let e = problem.evaluate(mid)?;
        if e.subgradient > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if e.value > best.value {
            best = e;
        }
    }
    for nu in [lo, hi] {
        let e = problem.evaluate(nu)?;
        if e.value > best.value {
            best = e;
        }
    }
    Ok(best)
}

/// Communication decision of an evaluated policy for one ground node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeDecision {
    pub theta_g: f64,
    pub node_radius: f64,
    /// Grid index of the chosen end radius.
    pub end_radius: usize,
    /// Inner action recomputed at the exact probe radii.
    pub greedy: CommGreedyResult,
}

/// Decisions for a UAV at radius `r_u` and every grid node on the ring
/// closest to `r_g`, with node angles measured from the UAV.
pub fn probe_comm_policy(
    problem: &DualProblem,
    eval: &DualEvaluation,
    r_u: f64,
    r_g: f64,
) -> Result<Vec<ProbeDecision>> {
    let grid = &problem.grid;
    let cfg = &problem.cfg;
    let policy = &eval.solution.policy;
    let i = grid.nearest_radius(r_u);
    let ring = grid
        .gn_nodes
        .iter()
        .map(|g| (g.r() - r_g).abs())
        .fold(f64::INFINITY, f64::min);
    let lp = LagrangianParams::new(eval.nu, cfg.p_avg, grid.delta_0)?;
    let co = travel_coefficients(&lp, &problem.curve, cfg.search.speed_step)?;
    let rgrid = ReceiveGrid::new(&cfg.search);
    let mut out = Vec::new();
    for (n, g) in grid.gn_nodes.iter().enumerate() {
        if (g.r() - r_g).abs() > ring + 1e-9 {
            continue;
        }
        let end = policy.comm(i, n).end_radius;
        let s = RelativeState {
            r_u,
            r_g,
            theta_g: g.psi(),
        };
        let greedy = comm_greedy_with(
            s,
            &[grid.radii[end]],
            &co,
            &cfg.channel,
            &problem.curve,
            &rgrid,
        )?
        .remove(0);
        out.push(ProbeDecision {
            theta_g: g.psi(),
            node_radius: g.r(),
            end_radius: end,
            greedy,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p_avg: f64) -> SystemConfig {
        SystemConfig::default()
            .with_file_edit(|f| {
                f.scenario.p_avg_w = p_avg;
                f.grid.search_radii = 20;
                f.grid.search_angles = 24;
                f.solver.dual_sweep_points = 8;
                f.solver.dual_tolerance = 1e-3;
            })
            .unwrap()
    }

    #[test]
    fn generous_budget_needs_no_multiplier() {
        let p = DualProblem::new(&cfg(5000.0)).unwrap();
        let r = maximize_dual(&p).unwrap();
        assert_eq!(r.nu_star, 0.0);
        assert!(r.primal.metrics.power <= 5000.0);
        assert!(r.duality_gap.abs() < 1e-6 * r.dual_value);
    }

    #[test]
    fn budget_below_minimum_power_is_infeasible() {
        let p = DualProblem::new(&cfg(100.0)).unwrap();
        assert!(matches!(maximize_dual(&p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn dual_bounds_every_feasible_policy() {
        let p = DualProblem::new(&cfg(160.0)).unwrap();
        let r = maximize_dual(&p).unwrap();
        assert!(r.nu_star > 0.0);
        assert!(r.primal.metrics.power <= 160.0 * 1.001);
        // Weak duality, allowing for the small power overshoot the primal may have.
        let overshoot = r.nu_star * r.primal.subgradient.max(0.0);
        assert!(
            r.duality_gap >= -overshoot - 1e-9 * r.dual_value,
            "{}",
            r.duality_gap
        );
        for e in p.evaluations() {
            assert!(e.value <= r.dual_value + 1e-9 * r.dual_value);
        }
        let all = p.evaluations();
        for w in all.windows(3) {
            // Concavity along the sorted evaluations.
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let t = (b.nu - a.nu) / (c.nu - a.nu);
            assert!(b.value >= a.value + t * (c.value - a.value) - 1e-7 * b.value.abs());
        }
    }

    #[test]
    fn bisection_agrees_with_golden_search() {
        let p = DualProblem::new(&cfg(160.0)).unwrap();
        let r = maximize_dual(&p).unwrap();
        let q = DualProblem::new(&cfg(160.0)).unwrap();
        let b = bisect_dual(&q, 0.0, q.nu_cap().unwrap(), 1e-6).unwrap();
        assert!(
            (b.value - r.dual_value).abs() <= 1e-3 * r.dual_value,
            "{} vs {}",
            b.value,
            r.dual_value
        );
    }

    #[test]
    fn subgradient_mode_moves_towards_the_optimum() {
        let golden = maximize_dual(&DualProblem::new(&cfg(160.0)).unwrap()).unwrap();
        let sub_cfg = cfg(160.0)
            .with_file_edit(|f| {
                f.solver.dual_method = DualMethod::Subgradient;
                f.solver.subgradient_iterations = 30;
            })
            .unwrap();
        let sub = maximize_dual(&DualProblem::new(&sub_cfg).unwrap()).unwrap();
        assert!(sub.dual_value <= golden.dual_value + 1e-9 * golden.dual_value);
        let path: Vec<_> = sub
            .trace
            .iter()
            .filter(|r| r.phase == TracePhase::Subgradient)
            .collect();
        let first = (path[0].nu - golden.nu_star).abs();
        let last = (path.last().unwrap().nu - golden.nu_star).abs();
        assert!(last < first);
        assert!(path.last().unwrap().dual_value > path[0].dual_value);
    }
}
