use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comm::CommAction;
use crate::error::{Error, Result};

use super::StateGrid;

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitingDecision {
    pub vr_index: usize,
    pub v_r: f64,
    /// Angular rate, rad/s.
    pub theta_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommDecision {
    /// Grid index of the radius the phase ends at.
    pub end_radius: usize,
    pub action: CommAction,
}

/// How the continuous part of an action is chosen off the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InnerRule {
    /// Minimize the Lagrangian stage cost at multiplier `nu`.
    Greedy { nu: f64, p_avg: f64 },
    /// Receive on the node's ray, relay from the center, fly at `speed`.
    StartEndCenter { speed: f64 },
    /// Receive and relay at the center, flying there at `speed` if needed.
    HoverCenter { speed: f64 },
}

/// A stationary deterministic policy on the state grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub version: u32,
    pub config_sha256: String,
    pub inner: InnerRule,
    pub n_radii: usize,
    pub n_nodes: usize,
    /// One entry per waiting radius.
    pub waiting: Vec<WaitingDecision>,
    /// `[radius][node]`
    pub comm: Vec<CommDecision>,
}

impl Policy {
    pub fn waiting(&self, radius: usize) -> &WaitingDecision {
        &self.waiting[radius]
    }

    pub fn comm(&self, radius: usize, node: usize) -> &CommDecision {
        &self.comm[radius * self.n_nodes + node]
    }

    pub fn check_grid(&self, grid: &StateGrid) -> Result<()> {
        if self.n_radii != grid.n_radii()
            || self.n_nodes != grid.n_nodes()
            || self.waiting.len() != self.n_radii
            || self.comm.len() != self.n_radii * self.n_nodes
        {
            return Err(Error::PolicyMismatch(format!(
                "policy has {} radii x {} nodes, grid has {} x {}",
                self.n_radii,
                self.n_nodes,
                grid.n_radii(),
                grid.n_nodes()
            )));
        }
        if let Some(w) = self.waiting.iter().find(|w| w.vr_index >= grid.n_vr()) {
            return Err(Error::PolicyMismatch(format!(
                "radial velocity index {} out of range",
                w.vr_index
            )));
        }
        if let Some(c) = self.comm.iter().find(|c| c.end_radius >= grid.n_radii()) {
            return Err(Error::PolicyMismatch(format!(
                "end radius index {} out of range",
                c.end_radius
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != POLICY_FORMAT_VERSION {
            return Err(Error::PolicyVersion(header.version));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolarPos;

    fn tiny() -> Policy {
        let action = CommAction {
            q_gu: PolarPos::new(3.0, 1.0).unwrap(),
            v1: 10.0,
            q_ub: PolarPos::ORIGIN,
            v3: 10.0,
        };
        Policy {
            version: POLICY_FORMAT_VERSION,
            config_sha256: "abc".into(),
            inner: InnerRule::Greedy {
                nu: 1e-3,
                p_avg: 900.0,
            },
            n_radii: 2,
            n_nodes: 1,
            waiting: vec![
                WaitingDecision {
                    vr_index: 0,
                    v_r: 0.0,
                    theta_c: 0.1
                };
                2
            ],
            comm: vec![
                CommDecision {
                    end_radius: 1,
                    action
                };
                2
            ],
        }
    }

    #[test]
    fn json_round_trip() {
        let p = tiny();
        assert_eq!(Policy::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    #[test]
    fn rejects_other_versions() {
        let mut p = tiny();
        p.version = 99;
        let text = serde_json::to_string(&p).unwrap();
        assert!(matches!(
            Policy::from_json(&text),
            Err(Error::PolicyVersion(99))
        ));
    }
}
