//! Command-line front end.
//!
//! Every command writes its files plus a `manifest.json` holding the
//! effective configuration, seed and command, so `replay` can regenerate the
//! same bytes.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SimMode, SystemConfig};
use crate::dual::{maximize_dual, probe_comm_policy, DualProblem, DualResult};
use crate::error::{Error, Result};
use crate::heuristics::{
    direct_to_bs_delay, hover_center_delay, hover_center_delay_on_grid, start_end_center_at_power,
    start_end_center_on_grid, start_end_center_policy, start_end_center_renewal, HeuristicPoint,
};
use crate::inner::waiting_speed;
use crate::output::{Cell, Manifest, OutputDir, MANIFEST_FILE, MANIFEST_FORMAT_VERSION};
use crate::power::{min_power_speed, PowerCurve};
use crate::sim::{audit_energy, replicate, run_episode, write_event_log, Replication, SimOptions};
use crate::smdp::{build_grid, Policy};

#[derive(Debug, Parser)]
#[command(
    name = "uav-relay",
    version,
    about = "Delay-optimal UAV relay trajectories under a power budget"
)]
pub struct Cli {
    /// Scenario file (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Overrides `scenario.p_avg_w`.
    #[arg(long, global = true)]
    pub p_avg: Option<f64>,
    /// Overrides `channel.payload_bits`.
    #[arg(long, global = true)]
    pub payload_bits: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Propulsion power against speed.
    PowerCurve {
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
    /// Optimal policy at the configured power budget.
    Solve {
        /// UAV radius and node radius (m) for the communication-policy table.
        #[arg(long, default_value = "710,1600")]
        probe_state: String,
    },
    /// Monte Carlo evaluation of a policy.
    Simulate {
        /// Policy file; the optimal policy is solved for when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Simulate start-end-at-center at this speed instead.
        #[arg(long, conflicts_with = "policy")]
        heuristic_speed: Option<f64>,
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<SimMode>,
        /// Also write the event log of the first replication.
        #[arg(long)]
        event_log: bool,
    },
    /// Baseline policies: hover-at-center, direct-to-BS and start-end-at-center.
    Heuristics {
        /// Speeds (m/s) for start-end-at-center.
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
        /// Add simulated estimates with confidence intervals.
        #[arg(long)]
        simulate: bool,
    },
    /// Optimal delay across power budgets, with the heuristic at matched power.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<f64>>,
        #[arg(long, default_value_t = 875.0)]
        from: f64,
        #[arg(long, default_value_t = 1850.0)]
        to: f64,
        #[arg(long, default_value_t = 6)]
        points: usize,
    },
    /// Analytic policy metrics against simulation.
    Validate {
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Re-run the command recorded in a manifest and compare outputs.
    #[serde(skip)]
    Replay { manifest: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::PowerCurve { .. } => "power-curve",
            Command::Solve { .. } => "solve",
            Command::Simulate { .. } => "simulate",
            Command::Heuristics { .. } => "heuristics",
            Command::Sweep { .. } => "sweep",
            Command::Validate { .. } => "validate",
            Command::Replay { .. } => "replay",
        }
    }
}

pub type RunManifest = Manifest<Command>;

fn effective_config(cli: &Cli) -> Result<SystemConfig> {
    let mut cfg = match &cli.config {
        Some(path) => SystemConfig::load(path)?,
        None => SystemConfig::default(),
    };
    if let Some(p) = cli.p_avg {
        cfg = cfg.with_p_avg(p)?;
    }
    if let Some(b) = cli.payload_bits {
        cfg = cfg.with_payload_bits(b)?;
    }
    Ok(cfg)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &cli.out_dir);
    }
    let cfg = effective_config(cli)?;
    execute(&cli.command, &cfg, cli.seed, &cli.out_dir)
}

/// Runs `command` and writes its outputs and manifest into `out_dir`.
pub fn execute(
    command: &Command,
    cfg: &SystemConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<RunManifest> {
    let sha = cfg.sha256();
    let tag = format!(
        "uav-relay {} config_sha256={sha} seed={seed}",
        command.name()
    );
    let mut out = OutputDir::create(out_dir, tag)?;
    match command {
        Command::PowerCurve { step } => power_curve(cfg, *step, &mut out)?,
        Command::Solve { probe_state } => solve(cfg, probe_state, &mut out).map(|_| ())?,
        Command::Simulate {
            policy,
            heuristic_speed,
            cycles,
            replications,
            mode,
            event_log,
        } => {
            let grid = build_grid(cfg)?;
            let policy = match (policy, heuristic_speed) {
                (Some(path), _) => Policy::read_json(path)?,
                (None, Some(v)) => start_end_center_policy(*v, &grid, cfg)?,
                (None, None) => solve_quiet(cfg)?.primal.solution.policy.clone(),
            };
            let mut opts = SimOptions::from_config(cfg);
            opts.cycles = cycles.unwrap_or(opts.cycles);
            opts.mode = mode.unwrap_or(opts.mode);
            let reps = replications.unwrap_or(cfg.sim.replications);
            let seeds = seed_list(seed, reps);
            let rep = replicate(&policy, &grid, cfg, &opts, &seeds)?;
            warn_short(&rep);
            out.json("simulation.json", &rep)?;
            write_runs(&mut out, &rep)?;
            if *event_log {
                let ep = run_episode(
                    &policy,
                    &grid,
                    cfg,
                    &SimOptions {
                        keep_log: true,
                        ..opts
                    },
                    seeds[0],
                )?;
                log::info!(
                    "event log energy audit: {} J logged, {} J accumulated",
                    audit_energy(&ep.log),
                    ep.metrics.total_energy
                );
                let mut buf = format!("# {}\n", out_tag(command.name(), &sha, seed)).into_bytes();
                write_event_log(&ep.log, &mut buf)?;
                out.write("event_log.csv", &buf)?;
            }
        }
        Command::Heuristics { speeds, simulate } => {
            heuristics(cfg, speeds.as_deref(), *simulate, seed, &mut out)?
        }
        Command::Sweep {
            budgets,
            from,
            to,
            points,
        } => {
            let list = match budgets {
                Some(b) => b.clone(),
                None => linspace(*from, *to, *points),
            };
            sweep(cfg, &list, &mut out)?;
        }
        Command::Validate {
            cycles,
            replications,
        } => validate(cfg, *cycles, *replications, seed, &mut out)?,
        Command::Replay { .. } => unreachable!("handled by run"),
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT_VERSION,
        tool: "uav-relay".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config_sha256: sha,
        config: cfg.to_toml_string(),
        command: command.clone(),
        outputs: out.into_files(),
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Re-runs a recorded command into `out_dir` and checks every output digest.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<RunManifest> {
    let recorded = RunManifest::read(manifest_path)?;
    let cfg = SystemConfig::from_toml_str(&recorded.config)?;
    if cfg.sha256() != recorded.config_sha256 {
        return Err(Error::ReplayMismatch(
            "embedded config does not match its digest".into(),
        ));
    }
    let fresh = execute(&recorded.command, &cfg, recorded.seed, out_dir)?;
    let differing: Vec<&str> = recorded
        .outputs
        .iter()
        .filter(|f| !fresh.outputs.contains(f))
        .map(|f| f.path.as_str())
        .collect();
    if !differing.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
        return Err(Error::ReplayMismatch(differing.join(", ")));
    }
    Ok(fresh)
}

fn out_tag(name: &str, sha: &str, seed: u64) -> String {
    format!("uav-relay {name} config_sha256={sha} seed={seed}")
}

fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..n)
            .map(|k| from + (to - from) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn seed_list(seed: u64, n: usize) -> Vec<u64> {
    (0..n.max(2) as u64).map(|k| seed.wrapping_add(k)).collect()
}

fn warn_short(rep: &Replication) {
    if let Some(w) = rep.runs.iter().find_map(|r| r.warning.as_ref()) {
        log::warn!("{w}");
    }
}

fn power_curve(cfg: &SystemConfig, step: f64, out: &mut OutputDir) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument {
            name: "step",
            requirement: "finite and > 0",
            value: step,
        });
    }
    let curve = PowerCurve::new(cfg.power, cfg.v_max)?;
    let n = (cfg.v_max / step).floor() as usize;
    let rows = (0..=n).map(|k| {
        let v = (k as f64 * step).min(cfg.v_max);
        vec![Cell::from(v), Cell::from(curve.power(v))]
    });
    out.csv("power_curve.csv", &["speed_mps", "power_w"], rows)?;
    let min = min_power_speed(&cfg.power, cfg.v_max)?;
    out.json(
        "power_summary.json",
        &serde_json::json!({
            "hover_power_w": curve.power(0.0),
            "min_power_speed_mps": min.speed,
            "min_power_w": min.power,
            "v_max_mps": cfg.v_max,
        }),
    )
}

fn solve_quiet(cfg: &SystemConfig) -> Result<DualResult> {
    maximize_dual(&DualProblem::new(cfg)?)
}

fn parse_probe(text: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidArgument {
        name: "probe_state",
        requirement: "two comma-separated radii `r_u,r_g` in metres",
        value: f64::NAN,
    };
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let r_u: f64 = a.trim().parse().map_err(|_| bad())?;
    let r_g: f64 = b.trim().parse().map_err(|_| bad())?;
    if r_u.is_finite() && r_g.is_finite() && r_u >= 0.0 && r_g >= 0.0 {
        Ok((r_u, r_g))
    } else {
        Err(bad())
    }
}

fn write_trace(out: &mut OutputDir, res: &DualResult) -> Result<()> {
    let rows = res.trace.iter().map(|t| {
        vec![
            Cell::from(t.step),
            t.phase.as_str().into(),
            t.nu.into(),
            t.dual_value.into(),
            t.subgradient.into(),
            t.delay.into(),
            t.power.into(),
            t.rvi_iterations.into(),
        ]
    });
    out.csv(
        "dual_trace.csv",
        &[
            "step",
            "phase",
            "nu",
            "dual_value",
            "subgradient",
            "delay_s",
            "power_w",
            "rvi_iterations",
        ],
        rows,
    )
}

fn solve(cfg: &SystemConfig, probe: &str, out: &mut OutputDir) -> Result<DualResult> {
    let (r_u, r_g) = parse_probe(probe)?;
    let problem = DualProblem::new(cfg)?;
    let res = maximize_dual(&problem)?;
    let sol = &res.primal.solution;
    let policy = &sol.policy;
    let grid = &problem.grid;
    out.json("policy.json", policy)?;
    write_trace(out, &res)?;

    let waiting = (0..grid.n_radii()).map(|i| {
        let w = policy.waiting(i);
        let r = grid.radii[i];
        vec![
            Cell::from(r),
            w.vr_index.into(),
            w.v_r.into(),
            w.theta_c.into(),
            waiting_speed(w.v_r, r, w.theta_c).into(),
        ]
    });
    out.csv(
        "waiting_policy.csv",
        &[
            "radius_m",
            "vr_index",
            "v_r_mps",
            "theta_c_radps",
            "speed_mps",
        ],
        waiting,
    )?;

    let i = grid.nearest_radius(r_u);
    let rows = probe_comm_policy(&problem, &res.primal, r_u, r_g)?
        .into_iter()
        .map(|p| {
            let c = p.greedy;
            vec![
                Cell::from(p.theta_g),
                p.node_radius.into(),
                p.end_radius.into(),
                c.r_ub.into(),
                c.q_gu_star.r().into(),
                c.q_gu_star.psi().into(),
                c.theta_ub_star.into(),
                c.v1_star.into(),
                c.v3_star.into(),
                c.delay.into(),
                c.energy.into(),
            ]
        });
    out.csv(
        "comm_policy.csv",
        &[
            "theta_g_rad",
            "node_radius_m",
            "end_radius_index",
            "r_ub_m",
            "q_gu_r_m",
            "q_gu_psi_rad",
            "theta_ub_rad",
            "v1_mps",
            "v3_mps",
            "delay_s",
            "energy_j",
        ],
        rows,
    )?;

    let m = &res.primal.metrics;
    out.json(
        "solution.json",
        &serde_json::json!({
            "config_sha256": problem.config_sha256,
            "p_avg_w": cfg.p_avg,
            "nu_star": res.nu_star,
            "dual_value": res.dual_value,
            "duality_gap": res.duality_gap,
            "policy_nu": res.primal.nu,
            "delay_s": m.delay,
            "power_w": m.power,
            "energy_per_cycle_j": m.energy,
            "cycle_time_s": m.cycle_time,
            "pi_comm": m.pi_comm,
            "rvi_iterations": sol.iterations,
            "rvi_span": sol.span,
            "probe": { "r_u_m": r_u, "r_g_m": r_g, "grid_radius_m": grid.radii[i] },
        }),
    )?;
    Ok(res)
}

fn write_runs(out: &mut OutputDir, rep: &Replication) -> Result<()> {
    let rows = rep.runs.iter().map(|r| {
        vec![
            Cell::from(r.seed),
            r.cycles.into(),
            r.arrivals.into(),
            r.served.into(),
            r.dropped.into(),
            r.delay.into(),
            r.ci95_delay.into(),
            r.power.into(),
            r.ci95_power.into(),
            r.energy.into(),
            r.cycle_time.into(),
            r.comm_stage_fraction.into(),
        ]
    });
    out.csv(
        "simulation_runs.csv",
        &[
            "seed",
            "cycles",
            "arrivals",
            "served",
            "dropped",
            "delay_s",
            "delay_ci95",
            "power_w",
            "power_ci95",
            "energy_per_cycle_j",
            "cycle_time_s",
            "comm_stage_fraction",
        ],
        rows,
    )
}

fn default_speeds(cfg: &SystemConfig) -> Vec<f64> {
    let mut v: Vec<f64> = (1..)
        .map(|k| 5.0 * k as f64)
        .take_while(|&s| s <= cfg.v_max)
        .collect();
    if v.last().is_some_and(|&s| s < cfg.v_max) {
        v.push(cfg.v_max);
    }
    v
}

fn heuristics(
    cfg: &SystemConfig,
    speeds: Option<&[f64]>,
    simulate: bool,
    seed: u64,
    out: &mut OutputDir,
) -> Result<()> {
    let grid = build_grid(cfg)?;
    let speeds = speeds.map_or_else(|| default_speeds(cfg), <[f64]>::to_vec);
    let points: Vec<(HeuristicPoint, HeuristicPoint)> = speeds
        .par_iter()
        .map(|&v| {
            Ok((
                start_end_center_renewal(v, cfg)?,
                start_end_center_on_grid(v, &grid, cfg)?,
            ))
        })
        .collect::<Result<_>>()?;
    let sims: Vec<Option<Replication>> = if simulate {
        let mut opts = SimOptions::from_config(cfg);
        opts.mode = SimMode::Continuum;
        let seeds = seed_list(seed, cfg.sim.replications);
        speeds
            .iter()
            .map(|&v| {
                let p = start_end_center_policy(v, &grid, cfg)?;
                let rep = replicate(&p, &grid, cfg, &opts, &seeds)?;
                warn_short(&rep);
                Ok(Some(rep))
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; speeds.len()]
    };
    let rows = points.iter().zip(&sims).map(|((c, g), s)| {
        let mut row = vec![
            Cell::from(c.speed),
            c.power.into(),
            c.delay.into(),
            c.cycle_time.into(),
            g.power.into(),
            g.delay.into(),
        ];
        if simulate {
            let s = s.as_ref().expect("simulated");
            row.extend([
                Cell::from(s.power.mean),
                s.power.ci95.into(),
                s.delay.mean.into(),
                s.delay.ci95.into(),
            ]);
        }
        row
    });
    let mut header = vec![
        "speed_mps",
        "power_w",
        "delay_s",
        "cycle_time_s",
        "grid_power_w",
        "grid_delay_s",
    ];
    if simulate {
        header.extend([
            "sim_power_w",
            "sim_power_ci95",
            "sim_delay_s",
            "sim_delay_ci95",
        ]);
    }
    out.csv("start_end_center.csv", &header, rows)?;
    out.json(
        "baselines.json",
        &serde_json::json!({
            "hover_center_delay_s": hover_center_delay(cfg),
            "hover_center_grid_delay_s": hover_center_delay_on_grid(&grid, &cfg.channel),
            "direct_to_bs_delay_s": direct_to_bs_delay(cfg),
            "hover_power_w": cfg.power.power_at(0.0),
        }),
    )
}

fn sweep(cfg: &SystemConfig, budgets: &[f64], out: &mut OutputDir) -> Result<()> {
    let base = DualProblem::new(cfg)?;
    let grid = &base.grid;
    let speeds: Vec<f64> = (1..=(cfg.v_max.floor() as usize))
        .map(|v| v as f64)
        .collect();
    let curve: Vec<HeuristicPoint> = speeds
        .par_iter()
        .map(|&v| start_end_center_on_grid(v, grid, cfg))
        .collect::<Result<_>>()?;
    let results: Vec<Result<DualResult>> = budgets
        .par_iter()
        .map(|&p| base.with_p_avg(p).and_then(|pr| maximize_dual(&pr)))
        .collect();
    let matched = |power: f64| -> Result<Cell> {
        Ok(start_end_center_at_power(power, grid, cfg)?
            .map(|h| h.delay)
            .into())
    };
    let hover = hover_center_delay(cfg);
    let mut rows = Vec::new();
    for (&p, r) in budgets.iter().zip(results) {
        match r {
            Ok(r) => {
                let m = &r.primal.metrics;
                rows.push(vec![
                    Cell::from(p),
                    "ok".into(),
                    r.nu_star.into(),
                    r.primal.nu.into(),
                    m.delay.into(),
                    m.power.into(),
                    r.dual_value.into(),
                    r.duality_gap.into(),
                    matched(m.power)?,
                    hover.into(),
                ]);
            }
            Err(e @ (Error::Infeasible { .. } | Error::NoFeasiblePolicy { .. })) => {
                log::warn!("budget {p} W: {e}");
                let mut row = vec![Cell::from(p), "infeasible".into()];
                row.extend(std::iter::repeat_n(Cell::Empty, 7));
                row.push(hover.into());
                rows.push(row);
            }
            Err(e) => return Err(e),
        }
    }
    out.csv(
        "sweep.csv",
        &[
            "p_avg_w",
            "status",
            "nu_star",
            "policy_nu",
            "delay_s",
            "power_w",
            "dual_value",
            "duality_gap",
            "start_end_center_delay_at_power_s",
            "hover_center_delay_s",
        ],
        rows,
    )?;
    let rows = curve.iter().map(|h| {
        vec![
            Cell::from(h.speed),
            h.power.into(),
            h.delay.into(),
            h.energy.into(),
            h.cycle_time.into(),
        ]
    });
    out.csv(
        "start_end_center_grid.csv",
        &[
            "speed_mps",
            "power_w",
            "delay_s",
            "energy_per_cycle_j",
            "cycle_time_s",
        ],
        rows,
    )
}

fn validate(
    cfg: &SystemConfig,
    cycles: Option<usize>,
    reps: Option<usize>,
    seed: u64,
    out: &mut OutputDir,
) -> Result<()> {
    let problem = DualProblem::new(cfg)?;
    let res = maximize_dual(&problem)?;
    let predicted = &res.primal.metrics;
    let policy = &res.primal.solution.policy;
    let mut opts = SimOptions::from_config(cfg);
    opts.cycles = cycles.unwrap_or(opts.cycles);
    let seeds = seed_list(seed, reps.unwrap_or(cfg.sim.replications));
    let mut rows = Vec::new();
    let mut report = Vec::new();
    for mode in [SimMode::Grid, SimMode::Continuum] {
        opts.mode = mode;
        let rep = replicate(policy, &problem.grid, cfg, &opts, &seeds)?;
        warn_short(&rep);
        let mode_name = match mode {
            SimMode::Grid => "grid",
            SimMode::Continuum => "continuum",
        };
        for (name, want, est) in [
            ("delay_s", predicted.delay, rep.delay),
            ("power_w", predicted.power, rep.power),
            ("energy_per_cycle_j", predicted.energy, rep.energy),
            ("cycle_time_s", predicted.cycle_time, rep.cycle_time),
            (
                "comm_stage_fraction",
                predicted.pi_comm,
                rep.comm_stage_fraction,
            ),
        ] {
            let within = est.contains(want);
            rows.push(vec![
                Cell::from(mode_name),
                name.into(),
                want.into(),
                est.mean.into(),
                est.ci95.into(),
                if within { "yes" } else { "no" }.into(),
            ]);
            report.push(serde_json::json!({
                "mode": mode_name,
                "quantity": name,
                "predicted": want,
                "simulated": est.mean,
                "ci95": est.ci95,
                "within_ci": within,
            }));
        }
    }
    out.csv(
        "validate.csv",
        &[
            "mode",
            "quantity",
            "predicted",
            "simulated",
            "ci95",
            "within_ci",
        ],
        rows,
    )?;
    out.json(
        "validate.json",
        &serde_json::json!({
            "config_sha256": problem.config_sha256,
            "nu": res.primal.nu,
            "cycles": opts.cycles,
            "seeds": seeds,
            "checks": report,
        }),
    )
}

/// Path of the manifest inside an output directory.
pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join(MANIFEST_FILE)
}
