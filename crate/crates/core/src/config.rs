//! Scenario configuration.
//!
//! The on-disk form is TOML with one section per concern. SNRs are written in
//! dB and the drag coefficient may be given either lumped (`fuselage_drag`)
//! or as its four airframe factors; [`SystemConfig`] holds the resolved,
//! linear-unit values used everywhere else.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comm::{db_to_linear, ChannelParams};
use crate::error::{Error, Result};
use crate::power::PowerParams;

/// How ground-node grid rings are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RingLayout {
    /// Center node plus rings on UAV radii `1..N-1`, ring `j` holding `j*M` nodes.
    #[default]
    SharedRadii,
    /// Center node plus `N` rings at radii `j*a/N`, ring `j` holding `j*M` nodes.
    ExtraRing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DualMethod {
    /// Log-spaced bracketing sweep followed by golden-section refinement.
    #[default]
    Golden,
    /// Projected subgradient ascent with diminishing steps.
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Arrivals snapped to grid nodes and radii snapped to grid points with
    /// the DP's interpolation weights.
    #[default]
    Grid,
    /// True request locations and radii; the policy is looked up at the
    /// nearest grid state.
    Continuum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub bandwidth_hz: f64,
    pub snr_gu_db: f64,
    pub snr_ub_db: f64,
    pub uav_height_m: f64,
    pub bs_height_m: f64,
    pub payload_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub blade_profile_w: f64,
    pub induced_w: f64,
    pub tip_speed_mps: f64,
    pub hover_induced_velocity_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fuselage_drag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub air_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solidity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_area_m2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub cell_radius_m: f64,
    /// Request rate per unit area, requests/s/m².
    pub arrival_density: f64,
    pub v_max_mps: f64,
    pub p_avg_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub radii: usize,
    pub angular_step: usize,
    pub radial_velocities: usize,
    /// Probability that a waiting step ends without a request.
    pub p_ww: f64,
    #[serde(default)]
    pub ring_layout: RingLayout,
    pub search_radii: usize,
    pub search_angles: usize,
    pub speed_step_mps: f64,
    /// The receive-point search covers radii up to this multiple of the cell radius.
    #[serde(default = "one")]
    pub search_extent: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub rvi_tolerance: f64,
    pub rvi_max_iterations: usize,
    /// Self-loop weight `tau` of the aperiodicity transform.
    pub aperiodicity: f64,
    #[serde(default)]
    pub dual_method: DualMethod,
    pub dual_sweep_points: usize,
    /// Relative width at which golden-section refinement of the multiplier stops.
    pub dual_tolerance: f64,
    pub feasibility_tolerance: f64,
    /// The multiplier is kept at or below `(1 - margin)` times its admissible cap.
    pub nu_cap_margin: f64,
    pub subgradient_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub cycles: usize,
    pub replications: usize,
    pub warmup_cycles: usize,
    pub batches: usize,
    #[serde(default)]
    pub mode: SimMode,
}

/// The config file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub channel: ChannelSection,
    pub power: PowerSection,
    pub scenario: ScenarioSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub simulation: SimulationSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            channel: ChannelSection {
                bandwidth_hz: 1e6,
                snr_gu_db: 40.0,
                snr_ub_db: 40.0,
                uav_height_m: 120.0,
                bs_height_m: 60.0,
                payload_bits: 1e6,
            },
            power: PowerSection {
                blade_profile_w: 79.86,
                induced_w: 88.63,
                tip_speed_mps: 120.0,
                hover_induced_velocity_mps: 4.03,
                fuselage_drag: None,
                drag_ratio: Some(0.6),
                air_density: Some(1.225),
                solidity: Some(0.05),
                disc_area_m2: Some(0.503),
            },
            scenario: ScenarioSection {
                cell_radius_m: 1600.0,
                arrival_density: 2.693e-9,
                v_max_mps: 55.0,
                p_avg_w: 1000.0,
            },
            grid: GridSection {
                radii: 10,
                angular_step: 3,
                radial_velocities: 13,
                p_ww: 0.93,
                ring_layout: RingLayout::SharedRadii,
                search_radii: 60,
                search_angles: 72,
                speed_step_mps: 0.5,
                search_extent: 1.0,
            },
            solver: SolverSection {
                rvi_tolerance: 1e-9,
                rvi_max_iterations: 500_000,
                aperiodicity: 0.5,
                dual_method: DualMethod::Golden,
                dual_sweep_points: 20,
                dual_tolerance: 1e-4,
                feasibility_tolerance: 1e-3,
                nu_cap_margin: 1e-3,
                subgradient_iterations: 200,
            },
            simulation: SimulationSection {
                cycles: 3000,
                replications: 10,
                warmup_cycles: 50,
                batches: 20,
                mode: SimMode::Grid,
            },
        }
    }
}

/// Discretization of the state and action spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radii: usize,
    pub angular_step: usize,
    pub radial_velocities: usize,
    pub p_ww: f64,
    pub ring_layout: RingLayout,
}

/// Resolution of the exhaustive receive-point search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrids {
    pub radii: usize,
    pub angles: usize,
    pub speed_step: f64,
    /// Largest receive radius searched, m.
    pub max_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub rvi_tolerance: f64,
    pub rvi_max_iterations: usize,
    pub aperiodicity: f64,
    pub dual_method: DualMethod,
    pub dual_sweep_points: usize,
    pub dual_tolerance: f64,
    pub feasibility_tolerance: f64,
    pub nu_cap_margin: f64,
    pub subgradient_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub cycles: usize,
    pub replications: usize,
    pub warmup_cycles: usize,
    pub batches: usize,
    pub mode: SimMode,
}

/// Every scenario constant, in internal (linear, SI) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub channel: ChannelParams,
    pub power: PowerParams,
    pub cell_radius: f64,
    pub arrival_density: f64,
    pub v_max: f64,
    pub p_avg: f64,
    pub grid: GridSpec,
    pub search: SearchGrids,
    pub solver: SolverSettings,
    pub sim: SimSettings,
    source: ConfigFile,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::from_file(ConfigFile::default()).expect("default config is valid")
    }
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be finite, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(bad(key, format!("must be >= {min}, got {v}")))
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let c = &file.channel;
        let bandwidth = positive("channel.bandwidth_hz", c.bandwidth_hz)?;
        let snr_gu = db_to_linear(finite("channel.snr_gu_db", c.snr_gu_db)?);
        let snr_ub = db_to_linear(finite("channel.snr_ub_db", c.snr_ub_db)?);
        let uav_height = positive("channel.uav_height_m", c.uav_height_m)?;
        let bs_height = positive("channel.bs_height_m", c.bs_height_m)?;
        if uav_height <= bs_height {
            return Err(bad(
                "channel.uav_height_m",
                format!("must exceed channel.bs_height_m ({bs_height}), got {uav_height}"),
            ));
        }
        let payload = positive("channel.payload_bits", c.payload_bits)?;
        let channel = ChannelParams::new(bandwidth, snr_gu, snr_ub, uav_height, bs_height, payload)
            .map_err(|e| bad("channel", e.to_string()))?;

        let p = &file.power;
        let p0 = positive("power.blade_profile_w", p.blade_profile_w)?;
        let pi = positive("power.induced_w", p.induced_w)?;
        let tip = positive("power.tip_speed_mps", p.tip_speed_mps)?;
        let v0 = positive(
            "power.hover_induced_velocity_mps",
            p.hover_induced_velocity_mps,
        )?;
        let factors = [p.drag_ratio, p.air_density, p.solidity, p.disc_area_m2];
        let beta = match (p.fuselage_drag, factors) {
            (Some(beta), [None, None, None, None]) => positive("power.fuselage_drag", beta)?,
            (None, [Some(d0), Some(rho), Some(s), Some(area)]) => {
                positive("power.drag_ratio", d0)?
                    * positive("power.air_density", rho)?
                    * positive("power.solidity", s)?
                    * positive("power.disc_area_m2", area)?
                    / 2.0
            }
            (Some(_), _) => {
                return Err(bad(
                    "power.fuselage_drag",
                    "give either fuselage_drag or drag_ratio/air_density/solidity/disc_area_m2, not both",
                ))
            }
            (None, _) => {
                return Err(bad(
                    "power.fuselage_drag",
                    "missing: give fuselage_drag or all of drag_ratio, air_density, solidity, disc_area_m2",
                ))
            }
        };
        let power =
            PowerParams::new(p0, pi, tip, v0, beta).map_err(|e| bad("power", e.to_string()))?;

        let s = &file.scenario;
        let cell_radius = positive("scenario.cell_radius_m", s.cell_radius_m)?;
        let arrival_density = positive("scenario.arrival_density", s.arrival_density)?;
        let v_max = positive("scenario.v_max_mps", s.v_max_mps)?;
        let p_avg = positive("scenario.p_avg_w", s.p_avg_w)?;

        let g = &file.grid;
        let radial_velocities = at_least("grid.radial_velocities", g.radial_velocities, 1)?;
        if radial_velocities % 2 == 0 {
            return Err(bad(
                "grid.radial_velocities",
                format!("must be odd so that 0 is included, got {radial_velocities}"),
            ));
        }
        if !(g.p_ww > 0.0 && g.p_ww < 1.0) {
            return Err(bad(
                "grid.p_ww",
                format!("must lie in (0, 1), got {}", g.p_ww),
            ));
        }
        let grid = GridSpec {
            radii: at_least("grid.radii", g.radii, 2)?,
            angular_step: at_least("grid.angular_step", g.angular_step, 1)?,
            radial_velocities,
            p_ww: g.p_ww,
            ring_layout: g.ring_layout,
        };
        let extent = positive("grid.search_extent", g.search_extent)?;
        if extent < 1.0 {
            return Err(bad(
                "grid.search_extent",
                format!("must be >= 1, got {extent}"),
            ));
        }
        let search = SearchGrids {
            radii: at_least("grid.search_radii", g.search_radii, 2)?,
            angles: at_least("grid.search_angles", g.search_angles, 1)?,
            speed_step: positive("grid.speed_step_mps", g.speed_step_mps)?,
            max_radius: cell_radius * extent,
        };

        let so = &file.solver;
        if !(so.aperiodicity > 0.0 && so.aperiodicity <= 1.0) {
            return Err(bad(
                "solver.aperiodicity",
                format!("must lie in (0, 1], got {}", so.aperiodicity),
            ));
        }
        if !(so.nu_cap_margin > 0.0 && so.nu_cap_margin < 1.0) {
            return Err(bad(
                "solver.nu_cap_margin",
                format!("must lie in (0, 1), got {}", so.nu_cap_margin),
            ));
        }
        let solver = SolverSettings {
            rvi_tolerance: positive("solver.rvi_tolerance", so.rvi_tolerance)?,
            rvi_max_iterations: at_least("solver.rvi_max_iterations", so.rvi_max_iterations, 1)?,
            aperiodicity: so.aperiodicity,
            dual_method: so.dual_method,
            dual_sweep_points: at_least("solver.dual_sweep_points", so.dual_sweep_points, 3)?,
            dual_tolerance: positive("solver.dual_tolerance", so.dual_tolerance)?,
            feasibility_tolerance: positive(
                "solver.feasibility_tolerance",
                so.feasibility_tolerance,
            )?,
            nu_cap_margin: so.nu_cap_margin,
            subgradient_iterations: at_least(
                "solver.subgradient_iterations",
                so.subgradient_iterations,
                1,
            )?,
        };

        let si = &file.simulation;
        let sim = SimSettings {
            cycles: at_least("simulation.cycles", si.cycles, 1)?,
            replications: at_least("simulation.replications", si.replications, 1)?,
            warmup_cycles: si.warmup_cycles,
            batches: at_least("simulation.batches", si.batches, 2)?,
            mode: si.mode,
        };

        Ok(Self {
            channel,
            power,
            cell_radius,
            arrival_density,
            v_max,
            p_avg,
            grid,
            search,
            solver,
            sim,
            source: file,
        })
    }

    /// The file form this config was resolved from, with any overrides applied.
    pub fn file(&self) -> &ConfigFile {
        &self.source
    }

    /// Applies an edit to the file form and re-validates.
    pub fn with_file_edit(&self, edit: impl FnOnce(&mut ConfigFile)) -> Result<Self> {
        let mut file = self.source.clone();
        edit(&mut file);
        Self::from_file(file)
    }

    pub fn with_p_avg(&self, p_avg: f64) -> Result<Self> {
        self.with_file_edit(|f| f.scenario.p_avg_w = p_avg)
    }

    pub fn with_payload_bits(&self, bits: f64) -> Result<Self> {
        self.with_file_edit(|f| f.channel.payload_bits = bits)
    }

    pub fn with_power(&self, params: &PowerParams) -> Result<Self> {
        self.with_file_edit(|f| {
            f.power = PowerSection {
                blade_profile_w: params.blade_profile,
                induced_w: params.induced,
                tip_speed_mps: params.tip_speed,
                hover_induced_velocity_mps: params.hover_induced_velocity,
                fuselage_drag: Some(params.fuselage_drag),
                drag_ratio: None,
                air_density: None,
                solidity: None,
                disc_area_m2: None,
            }
        })
    }

    /// Canonical TOML text of the config; identical configs give identical text.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.source).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Total request rate over the cell, requests/s.
    pub fn total_arrival_rate(&self) -> f64 {
        std::f64::consts::PI * self.cell_radius * self.cell_radius * self.arrival_density
    }
}
