use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::config::{RingLayout, SystemConfig};
use crate::error::{Error, Result};
use crate::geometry::PolarPos;

/// Discretized state and action spaces.
///
/// Ground-node positions are stored in the UAV-relative frame: a node at
/// `(r_G, theta_G)` is a request whose angle is measured from the UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    /// UAV radii, ascending, first is the center.
    pub radii: Vec<f64>,
    pub gn_nodes: Vec<PolarPos>,
    /// Probability of each node given that a request arrived. Sums to 1.
    pub gn_weights: Vec<f64>,
    /// Radial velocity choices in waiting states, ascending.
    pub v_r: Vec<f64>,
    pub delta_0: f64,
    pub p_ww: f64,
    pub cell_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SmdpState {
    Waiting { radius: usize },
    Comm { radius: usize, node: usize },
}

/// Two-point linear interpolation of an off-grid radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusSplit {
    pub lo: usize,
    pub hi: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

pub fn build_grid(cfg: &SystemConfig) -> Result<StateGrid> {
    let spec = cfg.grid;
    let bad = |key: &str, reason: String| Error::Config {
        key: key.into(),
        reason,
    };
    if spec.radii < 2 {
        return Err(bad(
            "grid.radii",
            format!("must be >= 2, got {}", spec.radii),
        ));
    }
    if spec.angular_step < 1 {
        return Err(bad("grid.angular_step", "must be >= 1".into()));
    }
    if spec.radial_velocities % 2 == 0 {
        return Err(bad("grid.radial_velocities", "must be odd".into()));
    }
    let a = cfg.cell_radius;
    let n = spec.radii;
    let radii: Vec<f64> = (0..n).map(|j| j as f64 * a / (n - 1) as f64).collect();

    let rings = match spec.ring_layout {
        RingLayout::SharedRadii => n - 1,
        RingLayout::ExtraRing => n,
    };
    let mut gn_nodes = vec![PolarPos::ORIGIN];
    for j in 1..=rings {
        let count = j * spec.angular_step;
        let r = match spec.ring_layout {
            RingLayout::SharedRadii => radii[j],
            RingLayout::ExtraRing => j as f64 * a / n as f64,
        };
        for k in 0..count {
            gn_nodes.push(PolarPos::new(r, TAU * k as f64 / count as f64)?);
        }
    }
    let w = 1.0 / gn_nodes.len() as f64;
    let gn_weights = vec![w; gn_nodes.len()];

    let k = spec.radial_velocities;
    let half = (k / 2) as f64;
    let v_r = (0..k)
        .map(|i| {
            if k == 1 {
                0.0
            } else {
                cfg.v_max * (i as f64 - half) / half
            }
        })
        .collect();

    let delta_0 = -spec.p_ww.ln() / cfg.total_arrival_rate();
    Ok(StateGrid {
        radii,
        gn_nodes,
        gn_weights,
        v_r,
        delta_0,
        p_ww: spec.p_ww,
        cell_radius: a,
    })
}

/// Long-run fractions of SMDP stages spent waiting and communicating.
/// Independent of the policy because every waiting state ends with the same
/// no-arrival probability and every communication state returns to waiting.
pub fn steady_state_phase_probs(p_ww: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p_ww) {
        return Err(Error::InvalidArgument {
            name: "p_ww",
            requirement: "in [0, 1]",
            value: p_ww,
        });
    }
    let denom = 2.0 - p_ww;
    Ok((1.0 / denom, (1.0 - p_ww) / denom))
}

impl StateGrid {
    pub fn n_radii(&self) -> usize {
        self.radii.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.gn_nodes.len()
    }

    pub fn n_vr(&self) -> usize {
        self.v_r.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_radii() * (1 + self.n_nodes())
    }

    pub fn phase_probs(&self) -> (f64, f64) {
        steady_state_phase_probs(self.p_ww).expect("p_ww validated at construction")
    }

    pub fn state_index(&self, s: SmdpState) -> usize {
        match s {
            SmdpState::Waiting { radius } => radius,
            SmdpState::Comm { radius, node } => self.n_radii() + radius * self.n_nodes() + node,
        }
    }

    pub fn state_at(&self, index: usize) -> SmdpState {
        let n = self.n_radii();
        if index < n {
            SmdpState::Waiting { radius: index }
        } else {
            let i = index - n;
            SmdpState::Comm {
                radius: i / self.n_nodes(),
                node: i % self.n_nodes(),
            }
        }
    }

    /// Splits `r` (clamped to the cell) over its two neighboring grid radii.
    pub fn split_radius(&self, r: f64) -> RadiusSplit {
        let last = self.n_radii() - 1;
        let r = r.clamp(0.0, self.radii[last]);
        if last == 0 {
            return RadiusSplit {
                lo: 0,
                hi: 0,
                w_lo: 1.0,
                w_hi: 0.0,
            };
        }
        let hi = self.radii.partition_point(|&x| x < r).clamp(1, last);
        let lo = hi - 1;
        let span = self.radii[hi] - self.radii[lo];
        let w_hi = ((r - self.radii[lo]) / span).clamp(0.0, 1.0);
        if w_hi == 1.0 {
            return RadiusSplit {
                lo: hi,
                hi,
                w_lo: 1.0,
                w_hi: 0.0,
            };
        }
        RadiusSplit {
            lo,
            hi,
            w_lo: 1.0 - w_hi,
            w_hi,
        }
    }

    /// Radius reached after one waiting step at radial velocity `v_r`.
    pub fn next_radius(&self, radius: usize, v_r: f64) -> RadiusSplit {
        self.split_radius(self.radii[radius] + v_r * self.delta_0)
    }

    pub fn nearest_radius(&self, r: f64) -> usize {
        let s = self.split_radius(r);
        if s.w_hi > s.w_lo {
            s.hi
        } else {
            s.lo
        }
    }

    /// Successor distribution of a waiting state under radial velocity index `vr_index`.
    pub fn waiting_transitions(&self, radius: usize, vr_index: usize) -> Vec<(SmdpState, f64)> {
        let split = self.next_radius(radius, self.v_r[vr_index]);
        let mut out = Vec::with_capacity(2 * (1 + self.n_nodes()));
        for (r, w) in [(split.lo, split.w_lo), (split.hi, split.w_hi)] {
            if w == 0.0 {
                continue;
            }
            out.push((SmdpState::Waiting { radius: r }, w * self.p_ww));
            for (node, gw) in self.gn_weights.iter().enumerate() {
                out.push((
                    SmdpState::Comm { radius: r, node },
                    w * (1.0 - self.p_ww) * gw,
                ));
            }
        }
        out
    }

    /// A communication phase always ends in the waiting state at the relay radius.
    pub fn comm_transitions(&self, r_ub_index: usize) -> (SmdpState, f64) {
        (SmdpState::Waiting { radius: r_ub_index }, 1.0)
    }

    /// Ground node closest to a relative position.
    pub fn nearest_node(&self, gn: PolarPos) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, node) in self.gn_nodes.iter().enumerate() {
            let d = crate::geometry::chord_distance(*node, gn);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}
