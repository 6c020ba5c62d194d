use serde::{Deserialize, Serialize};

use crate::comm::ChannelParams;
use crate::config::SolverSettings;
use crate::error::{Error, Result};
use crate::inner::{GreedyTables, StageCosts};
use crate::power::PowerCurve;

use super::{CommDecision, InnerRule, Policy, StateGrid, WaitingDecision, POLICY_FORMAT_VERSION};

/// Raw output of relative value iteration on a cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RviSolution {
    /// Optimal average cost per stage.
    pub rho: f64,
    /// Relative values of waiting states, normalized so the center is 0.
    pub h_wait: Vec<f64>,
    /// Relative values of communication states, `[radius][node]`.
    pub h_comm: Vec<f64>,
    pub waiting_choice: Vec<usize>,
    pub comm_choice: Vec<usize>,
    pub iterations: usize,
    pub span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub rho: f64,
    /// Optimal average cost per communication phase.
    pub g: f64,
    pub h_wait: Vec<f64>,
    pub h_comm: Vec<f64>,
    pub policy: Policy,
    pub iterations: usize,
    pub span: f64,
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

struct Bellman<'a> {
    grid: &'a StateGrid,
    costs: &'a StageCosts,
    /// Interpolated successor of every `(radius, v_r)` pair.
    next: Vec<super::RadiusSplit>,
}

impl<'a> Bellman<'a> {
    fn new(grid: &'a StateGrid, costs: &'a StageCosts) -> Self {
        let next = (0..grid.n_radii())
            .flat_map(|i| (0..grid.n_vr()).map(move |k| (i, k)))
            .map(|(i, k)| grid.next_radius(i, grid.v_r[k]))
            .collect();
        Self { grid, costs, next }
    }

    /// Applies the Bellman operator, writing updated values and greedy choices.
    fn apply(
        &self,
        h_wait: &[f64],
        h_comm: &[f64],
        th_wait: &mut [f64],
        th_comm: &mut [f64],
        wait_choice: &mut [usize],
        comm_choice: &mut [usize],
    ) {
        let (n, g, k) = (self.grid.n_radii(), self.grid.n_nodes(), self.grid.n_vr());
        let p = self.grid.p_ww;
        let after: Vec<f64> = (0..n)
            .map(|r| {
                let avg: f64 = (0..g)
                    .map(|node| self.grid.gn_weights[node] * h_comm[r * g + node])
                    .sum();
                p * h_wait[r] + (1.0 - p) * avg
            })
            .collect();
        for i in 0..n {
            let (best, v) = argmin((0..k).map(|kk| {
                let s = self.next[i * k + kk];
                self.costs.waiting(i, kk) + s.w_lo * after[s.lo] + s.w_hi * after[s.hi]
            }));
            th_wait[i] = v;
            wait_choice[i] = best;
            for node in 0..g {
                let (best, v) = argmin((0..n).map(|j| self.costs.comm(i, node, j) + h_wait[j]));
                th_comm[i * g + node] = v;
                comm_choice[i * g + node] = best;
            }
        }
    }
}

/// Relative value iteration with an aperiodicity transform.
///
/// Each sweep computes `d = Th - h`, whose extremes bracket the optimal
/// average stage cost, and moves `h` a fraction `aperiodicity` towards `Th`.
pub fn solve_costs(
    grid: &StateGrid,
    costs: &StageCosts,
    settings: &SolverSettings,
) -> Result<RviSolution> {
    let (n, g) = (grid.n_radii(), grid.n_nodes());
    let bellman = Bellman::new(grid, costs);
    let tau = settings.aperiodicity;
    let mut h_wait = vec![0.0; n];
    let mut h_comm = vec![0.0; n * g];
    let mut th_wait = vec![0.0; n];
    let mut th_comm = vec![0.0; n * g];
    let mut wait_choice = vec![0; n];
    let mut comm_choice = vec![0; n * g];
    let mut span = f64::INFINITY;
    for it in 1..=settings.rvi_max_iterations {
        bellman.apply(
            &h_wait,
            &h_comm,
            &mut th_wait,
            &mut th_comm,
            &mut wait_choice,
            &mut comm_choice,
        );
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (t, h) in th_wait
            .iter()
            .zip(&h_wait)
            .chain(th_comm.iter().zip(&h_comm))
        {
            let d = t - h;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        if span <= settings.rvi_tolerance {
            return Ok(RviSolution {
                rho: 0.5 * (lo + hi),
                h_wait,
                h_comm,
                waiting_choice: wait_choice,
                comm_choice,
                iterations: it,
                span,
            });
        }
        let shift = h_wait[0] + tau * (th_wait[0] - h_wait[0]);
        for (h, t) in h_wait.iter_mut().zip(&th_wait) {
            *h += tau * (t - *h) - shift;
        }
        for (h, t) in h_comm.iter_mut().zip(&th_comm) {
            *h += tau * (t - *h) - shift;
        }
    }
    Err(Error::NotConverged {
        iterations: settings.rvi_max_iterations,
        span,
    })
}

/// Solves the outer problem for the greedy stage costs and expands the
/// optimal choices into a full policy.
pub fn relative_value_iteration(
    grid: &StateGrid,
    tables: &GreedyTables,
    ch: &ChannelParams,
    curve: &PowerCurve,
    settings: &SolverSettings,
    config_sha256: &str,
) -> Result<DpSolution> {
    let sol = solve_costs(grid, &tables.costs, settings)?;
    let (n, g, k) = (grid.n_radii(), grid.n_nodes(), grid.n_vr());
    let waiting = sol
        .waiting_choice
        .iter()
        .enumerate()
        .map(|(i, &kk)| WaitingDecision {
            vr_index: kk,
            v_r: grid.v_r[kk],
            theta_c: tables.waiting_theta[i * k + kk],
        })
        .collect();
    let comm = (0..n * g)
        .map(|ix| {
            let (i, node) = (ix / g, ix % g);
            let end = sol.comm_choice[ix];
            CommDecision {
                end_radius: end,
                action: tables.comm_result(grid, ch, curve, i, node, end).action(),
            }
        })
        .collect();
    let (_, pi_comm) = grid.phase_probs();
    Ok(DpSolution {
        rho: sol.rho,
        g: sol.rho / pi_comm,
        h_wait: sol.h_wait,
        h_comm: sol.h_comm,
        policy: Policy {
            version: POLICY_FORMAT_VERSION,
            config_sha256: config_sha256.to_string(),
            inner: InnerRule::Greedy {
                nu: tables.lagrangian.nu,
                p_avg: tables.lagrangian.p_avg,
            },
            n_radii: n,
            n_nodes: g,
            waiting,
            comm,
        },
        iterations: sol.iterations,
        span: sol.span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::geometry::PolarPos;
    use crate::smdp::stationary_distribution;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings() -> SolverSettings {
        SystemConfig::default().solver
    }

    fn tiny_grid(n: usize, g: usize, v_r: Vec<f64>, p_ww: f64) -> StateGrid {
        StateGrid {
            radii: (0..n).map(|i| 100.0 * i as f64).collect(),
            gn_nodes: (0..g)
                .map(|i| PolarPos::new(50.0 * i as f64, 0.0).unwrap())
                .collect(),
            gn_weights: vec![1.0 / g as f64; g],
            v_r,
            delta_0: 1.0,
            p_ww,
            cell_radius: 100.0 * (n - 1) as f64,
        }
    }

    /// Average stage cost of one deterministic policy from the stationary law
    /// of the full chain.
    fn policy_cost(grid: &StateGrid, costs: &StageCosts, wait: &[usize], comm: &[usize]) -> f64 {
        let (n, g) = (grid.n_radii(), grid.n_nodes());
        let m = grid.n_states();
        let mut p = vec![vec![0.0; m]; m];
        let mut c = vec![0.0; m];
        for i in 0..n {
            for (s, w) in grid.waiting_transitions(i, wait[i]) {
                p[i][grid.state_index(s)] += w;
            }
            c[i] = costs.waiting(i, wait[i]);
            for node in 0..g {
                let ix = grid.state_index(crate::smdp::SmdpState::Comm { radius: i, node });
                p[ix][comm[i * g + node]] = 1.0;
                c[ix] = costs.comm(i, node, comm[i * g + node]);
            }
        }
        let pi = stationary_distribution(&p);
        pi.iter().zip(&c).map(|(a, b)| a * b).sum()
    }

    fn random_costs(rng: &mut ChaCha8Rng, n: usize, g: usize, k: usize) -> StageCosts {
        let mut c = StageCosts::constant(n, g, k, 0.0);
        c.waiting
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-1.0..1.0));
        c.comm
            .iter_mut()
            .for_each(|x| *x = rng.random_range(0.0..5.0));
        c
    }

    #[test]
    fn constant_cost_gives_that_average() {
        let grid = crate::smdp::build_grid(&SystemConfig::default()).unwrap();
        let costs = StageCosts::constant(grid.n_radii(), grid.n_nodes(), grid.n_vr(), 2.5);
        let sol = solve_costs(&grid, &costs, &settings()).unwrap();
        assert!((sol.rho - 2.5).abs() < 1e-9);
        assert!(sol.h_wait.iter().chain(&sol.h_comm).all(|h| h.abs() < 1e-9));
    }

    #[test]
    fn two_radius_hand_case() {
        // Waiting is free at radius 0 and costs 1 at radius 1; ending a phase
        // at radius 1 is cheaper by 0.2. The optimum stays at radius 0 when
        // the saving is smaller than the extra waiting cost.
        let grid = tiny_grid(2, 1, vec![0.0], 0.5);
        let mut costs = StageCosts::constant(2, 1, 1, 0.0);
        costs.waiting = vec![0.0, 1.0];
        costs.comm = vec![1.0, 0.8, 1.0, 0.8];
        let sol = solve_costs(&grid, &costs, &settings()).unwrap();
        // Stationary stage fractions: waiting 2/3, comm 1/3.
        assert!((sol.rho - 1.0 / 3.0).abs() < 1e-9, "{}", sol.rho);
        assert_eq!(sol.comm_choice, vec![0, 0]);
    }

    #[test]
    fn matches_policy_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (n, g, v_r) in [
            (3, 1, vec![-100.0, 0.0, 100.0]),
            (2, 2, vec![-60.0, 0.0, 60.0]),
            (3, 2, vec![-150.0, 0.0, 35.0]),
        ] {
            let k = v_r.len();
            let grid = tiny_grid(n, g, v_r, 0.7);
            for _ in 0..4 {
                let costs = random_costs(&mut rng, n, g, k);
                let sol = solve_costs(&grid, &costs, &settings()).unwrap();
                let mut best = f64::INFINITY;
                let n_wait = k.pow(n as u32);
                let n_comm = n.pow((n * g) as u32);
                for a in 0..n_wait {
                    let wait: Vec<usize> = (0..n).map(|i| a / k.pow(i as u32) % k).collect();
                    for b in 0..n_comm {
                        let comm: Vec<usize> =
                            (0..n * g).map(|i| b / n.pow(i as u32) % n).collect();
                        best = best.min(policy_cost(&grid, &costs, &wait, &comm));
                    }
                }
                assert!((sol.rho - best).abs() < 1e-8, "{} vs {}", sol.rho, best);
                let chosen = policy_cost(&grid, &costs, &sol.waiting_choice, &sol.comm_choice);
                assert!((chosen - best).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reports_non_convergence() {
        let grid = crate::smdp::build_grid(&SystemConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let costs = random_costs(&mut rng, grid.n_radii(), grid.n_nodes(), grid.n_vr());
        let mut s = settings();
        s.rvi_max_iterations = 2;
        assert!(matches!(
            solve_costs(&grid, &costs, &s),
            Err(Error::NotConverged { iterations: 2, .. })
        ));
    }
}
