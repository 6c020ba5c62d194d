use serde::{Deserialize, Serialize};

use crate::comm::{phase_cost, ChannelParams};
use crate::error::Result;
use crate::inner::waiting_speed;
use crate::power::PowerCurve;

use super::{Policy, StateGrid};

/// Long-run distribution of a row-stochastic matrix started from state 0.
///
/// Uses repeated squaring of the lazy chain `(P + I) / 2`, which has the same
/// stationary law and no periodicity.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let m = p.len();
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| 0.5 * p[i][j] + if i == j { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    for _ in 0..64 {
        let mut next = vec![vec![0.0; m]; m];
        for i in 0..m {
            for k in 0..m {
                let aik = a[i][k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..m {
                    next[i][j] += aik * a[k][j];
                }
            }
            let total: f64 = next[i].iter().sum();
            next[i].iter_mut().for_each(|x| *x /= total);
        }
        a = next;
    }
    a.swap_remove(0)
}

/// Duration, energy and delay of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub duration: f64,
    pub energy: f64,
    pub delay: f64,
}

/// Long-run performance of a stationary policy, per communication phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean communication delay per request, s.
    pub delay: f64,
    /// Mean energy per cycle (waiting time plus one communication phase), J.
    pub energy: f64,
    /// Mean cycle duration, s.
    pub cycle_time: f64,
    /// Long-run average propulsion power, W.
    pub power: f64,
    pub pi_wait: f64,
    pub pi_comm: f64,
    /// Stationary probability of each waiting radius.
    pub waiting_occupancy: Vec<f64>,
    /// Stationary probability of each communication state, `[radius][node]`.
    pub comm_occupancy: Vec<f64>,
    /// Where the numbers come from, e.g. `dp-grid` or `start-end-center/grid`.
    pub provenance: String,
}

impl Metrics {
    /// Expected value of a per-state quantity under the stationary law.
    pub fn expectation(
        &self,
        waiting: impl Fn(usize) -> f64,
        comm: impl Fn(usize, usize) -> f64,
    ) -> f64 {
        let g = self.comm_occupancy.len() / self.waiting_occupancy.len().max(1);
        let w: f64 = self
            .waiting_occupancy
            .iter()
            .enumerate()
            .map(|(i, p)| p * waiting(i))
            .sum();
        let c: f64 = self
            .comm_occupancy
            .iter()
            .enumerate()
            .map(|(ix, p)| {
                if *p == 0.0 {
                    0.0
                } else {
                    p * comm(ix / g, ix % g)
                }
            })
            .sum();
        w + c
    }
}

/// Exact stationary metrics of `policy` on `grid`.
pub fn policy_metrics(
    grid: &StateGrid,
    policy: &Policy,
    ch: &ChannelParams,
    curve: &PowerCurve,
    provenance: &str,
) -> Result<Metrics> {
    policy.check_grid(grid)?;
    let (n, g) = (grid.n_radii(), grid.n_nodes());
    let p = grid.p_ww;
    let (pi_wait, pi_comm) = grid.phase_probs();

    let moves: Vec<_> = (0..n)
        .map(|i| grid.next_radius(i, policy.waiting(i).v_r))
        .collect();
    // Waiting-to-waiting chain with communication phases folded in.
    let mut q = vec![vec![0.0; n]; n];
    for (i, s) in moves.iter().enumerate() {
        for (r, w) in [(s.lo, s.w_lo), (s.hi, s.w_hi)] {
            if w == 0.0 {
                continue;
            }
            q[i][r] += w * p;
            for node in 0..g {
                q[i][policy.comm(r, node).end_radius] += w * (1.0 - p) * grid.gn_weights[node];
            }
        }
    }
    let y = stationary_distribution(&q);
    let waiting_occupancy: Vec<f64> = y.iter().map(|v| pi_wait * v).collect();
    let mut comm_occupancy = vec![0.0; n * g];
    for (i, s) in moves.iter().enumerate() {
        for (r, w) in [(s.lo, s.w_lo), (s.hi, s.w_hi)] {
            let mass = waiting_occupancy[i] * (1.0 - p) * w;
            for node in 0..g {
                comm_occupancy[r * g + node] += mass * grid.gn_weights[node];
            }
        }
    }

    let mut time = 0.0;
    let mut energy = 0.0;
    let mut delay = 0.0;
    for i in 0..n {
        let o = waiting_outcome(grid, policy, curve, i);
        time += waiting_occupancy[i] * o.duration;
        energy += waiting_occupancy[i] * o.energy;
    }
    for i in 0..n {
        for node in 0..g {
            let mass = comm_occupancy[i * g + node];
            if mass == 0.0 {
                continue;
            }
            let o = comm_outcome(grid, policy, ch, curve, i, node)?;
            time += mass * o.duration;
            energy += mass * o.energy;
            delay += mass * o.delay;
        }
    }
    Ok(Metrics {
        delay: delay / pi_comm,
        energy: energy / pi_comm,
        cycle_time: time / pi_comm,
        power: energy / time,
        pi_wait,
        pi_comm,
        waiting_occupancy,
        comm_occupancy,
        provenance: provenance.to_string(),
    })
}

pub(crate) fn waiting_outcome(
    grid: &StateGrid,
    policy: &Policy,
    curve: &PowerCurve,
    radius: usize,
) -> StageOutcome {
    let w = policy.waiting(radius);
    let speed = waiting_speed(w.v_r, grid.radii[radius], w.theta_c).min(curve.v_max);
    StageOutcome {
        duration: grid.delta_0,
        energy: curve.power(speed) * grid.delta_0,
        delay: 0.0,
    }
}

pub(crate) fn comm_outcome(
    grid: &StateGrid,
    policy: &Policy,
    ch: &ChannelParams,
    curve: &PowerCurve,
    radius: usize,
    node: usize,
) -> Result<StageOutcome> {
    let c = phase_cost(
        grid.radii[radius],
        grid.gn_nodes[node],
        &policy.comm(radius, node).action,
        ch,
        &curve.params,
        curve.v_max,
    )?;
    Ok(StageOutcome {
        duration: c.delta_c,
        energy: c.e_c,
        delay: c.delta_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::inner::{build_tables, LagrangianParams};
    use crate::smdp::{build_grid, relative_value_iteration, SmdpState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SystemConfig {
        SystemConfig::default()
            .with_file_edit(|f| {
                f.grid.search_radii = 20;
                f.grid.search_angles = 24;
            })
            .unwrap()
    }

    #[test]
    fn stationary_of_two_state_chain() {
        let pi = stationary_distribution(&[vec![0.9, 0.1], vec![0.3, 0.7]]);
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
        let periodic = stationary_distribution(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!((periodic[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stage_cost_average_equals_rho_and_lemma_holds() {
        let cfg = small_cfg();
        let grid = build_grid(&cfg).unwrap();
        let curve = PowerCurve::new(cfg.power, cfg.v_max).unwrap();
        let lp = LagrangianParams::new(4e-4, cfg.p_avg, grid.delta_0).unwrap();
        let tables = build_tables(&grid, &lp, &cfg).unwrap();
        let sol = relative_value_iteration(&grid, &tables, &cfg.channel, &curve, &cfg.solver, "")
            .unwrap();
        let m = policy_metrics(&grid, &sol.policy, &cfg.channel, &curve, "dp-grid").unwrap();
        let comm_mass: f64 = m.comm_occupancy.iter().sum();
        let wait_mass: f64 = m.waiting_occupancy.iter().sum();
        assert!((comm_mass - m.pi_comm).abs() < 1e-12);
        assert!((wait_mass - m.pi_wait).abs() < 1e-12);
        let ell = m.expectation(
            |i| tables.costs.waiting(i, sol.policy.waiting(i).vr_index),
            |i, n| tables.costs.comm(i, n, sol.policy.comm(i, n).end_radius),
        );
        assert!(
            (ell - sol.rho).abs() < 1e-7 * sol.rho.abs().max(1.0),
            "{ell} vs {}",
            sol.rho
        );
        let lagrangian = m.delay + lp.nu * (m.energy - lp.p_avg * m.cycle_time);
        assert!(
            (lagrangian - sol.g).abs() < 1e-6 * sol.g.abs(),
            "{lagrangian} vs {}",
            sol.g
        );
    }

    #[test]
    fn rollout_matches_phase_probabilities() {
        let cfg = small_cfg();
        let grid = build_grid(&cfg).unwrap();
        let curve = PowerCurve::new(cfg.power, cfg.v_max).unwrap();
        let lp = LagrangianParams::new(2e-4, cfg.p_avg, grid.delta_0).unwrap();
        let tables = build_tables(&grid, &lp, &cfg).unwrap();
        let sol = relative_value_iteration(&grid, &tables, &cfg.channel, &curve, &cfg.solver, "")
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = SmdpState::Waiting { radius: 0 };
        let steps = 1_000_000;
        let mut comm = 0usize;
        for _ in 0..steps {
            state = match state {
                SmdpState::Waiting { radius } => {
                    let t = grid.waiting_transitions(radius, sol.policy.waiting(radius).vr_index);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut next = t.last().unwrap().0;
                    for (s, p) in t {
                        acc += p;
                        if u < acc {
                            next = s;
                            break;
                        }
                    }
                    next
                }
                SmdpState::Comm { radius, node } => {
                    comm += 1;
                    grid.comm_transitions(sol.policy.comm(radius, node).end_radius)
                        .0
                }
            };
        }
        let freq = comm as f64 / steps as f64;
        let (_, pi_c) = grid.phase_probs();
        let sd = (pi_c * (1.0 - pi_c) / steps as f64).sqrt();
        assert!((freq - pi_c).abs() < 6.0 * sd, "{freq} vs {pi_c}");
    }

    #[test]
    fn power_slack_decreases_with_multiplier() {
        // g(nu) is concave, so its slope (the power slack) decreases with nu.
        let cfg = small_cfg();
        let grid = build_grid(&cfg).unwrap();
        let curve = PowerCurve::new(cfg.power, cfg.v_max).unwrap();
        let mut prev_slack = f64::INFINITY;
        for nu in [0.0, 2e-4, 6e-4, 1e-3] {
            let lp = LagrangianParams::new(nu, cfg.p_avg, grid.delta_0).unwrap();
            let tables = build_tables(&grid, &lp, &cfg).unwrap();
            let sol =
                relative_value_iteration(&grid, &tables, &cfg.channel, &curve, &cfg.solver, "")
                    .unwrap();
            let m = policy_metrics(&grid, &sol.policy, &cfg.channel, &curve, "dp-grid").unwrap();
            let slack = m.energy - cfg.p_avg * m.cycle_time;
            assert!(slack <= prev_slack + 1e-6 * prev_slack.abs().min(1e9));
            prev_slack = slack;
        }
    }
}
