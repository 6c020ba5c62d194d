use std::f64::consts::TAU;

use proptest::prelude::*;

use uav_relay::comm::{phase_cost, CommAction};
use uav_relay::geometry::{chord_distance, request_from_uniforms, PolarPos, RelativeState};
use uav_relay::inner::{admissible_nu_cap, comm_greedy, waiting_ell, LagrangianParams};
use uav_relay::power::{min_power_speed, mobility_power, PowerCurve};
use uav_relay::smdp::{build_grid, steady_state_phase_probs};
use uav_relay::SystemConfig;

fn lagrangian(delay: f64, energy: f64, nu: f64, p_avg: f64) -> f64 {
    delay + nu * (energy - p_avg * delay)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_never_below_minimum(v in 0.0..55.0f64) {
        let cfg = SystemConfig::default();
        let min = min_power_speed(&cfg.power, cfg.v_max).unwrap();
        let p = mobility_power(v, &cfg.power).unwrap();
        prop_assert!(p > 0.0);
        prop_assert!(p >= min.power - 1e-9);
    }

    #[test]
    fn chord_is_a_metric(
        r1 in 0.0..2000.0f64, a1 in 0.0..TAU,
        r2 in 0.0..2000.0f64, a2 in 0.0..TAU,
        r3 in 0.0..2000.0f64, a3 in 0.0..TAU,
    ) {
        let p = PolarPos::new(r1, a1).unwrap();
        let q = PolarPos::new(r2, a2).unwrap();
        let s = PolarPos::new(r3, a3).unwrap();
        prop_assert!((chord_distance(p, q) - chord_distance(q, p)).abs() < 1e-9);
        prop_assert!(chord_distance(p, p) < 1e-9);
        prop_assert!(chord_distance(p, s) <= chord_distance(p, q) + chord_distance(q, s) + 1e-9);
    }

    #[test]
    fn requests_fall_inside_the_cell(u in 0.0..1.0f64, w in 0.0..1.0f64) {
        let p = request_from_uniforms(u, w, 2000.0);
        prop_assert!(p.r() >= 0.0 && p.r() <= 2000.0);
        prop_assert!(p.psi() >= 0.0 && p.psi() < TAU);
    }

    #[test]
    fn phase_probabilities_sum_to_one(p_ww in 0.0..0.999_999f64) {
        let (pw, pc) = steady_state_phase_probs(p_ww).unwrap();
        prop_assert!((pw + pc - 1.0).abs() < 1e-12);
        prop_assert!(pc > 0.0 && pc <= 0.5);
    }

    #[test]
    fn waiting_transitions_are_distributions(radius in 0usize..10, vr in 0usize..13) {
        let grid = build_grid(&SystemConfig::default()).unwrap();
        let vr = vr % grid.n_vr();
        let total: f64 = grid.waiting_transitions(radius, vr).iter().map(|t| t.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn waiting_cost_is_minimal_over_speeds(
        v_r in -55.0..55.0f64, r in 0.0..2000.0f64, nu in 0.0..1e-3f64,
    ) {
        let cfg = SystemConfig::default();
        let curve = PowerCurve::new(cfg.power, cfg.v_max).unwrap();
        let lp = LagrangianParams::new(nu, cfg.p_avg, 5.0).unwrap();
        let ell = waiting_ell(v_r, r, &lp, &curve).unwrap();
        let straight = lp.nu * (curve.power(v_r.abs()) - lp.p_avg) * lp.delta_0;
        prop_assert!(ell <= straight + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn greedy_matches_its_own_cost_and_beats_center_service(
        r_u in 0.0..2000.0f64, r_g in 0.0..2000.0f64, theta in 0.0..TAU,
        r_ub in 0.0..2000.0f64, frac in 0.0..0.99f64, k in 1usize..110,
    ) {
        let cfg = SystemConfig::default();
        let curve = PowerCurve::new(cfg.power, cfg.v_max).unwrap();
        let nu = frac * admissible_nu_cap(cfg.p_avg, &curve).unwrap_or(1e-3);
        let lp = LagrangianParams::new(nu, cfg.p_avg, 5.0).unwrap();
        let s = RelativeState { r_u, r_g, theta_g: theta };
        let g = comm_greedy(s, r_ub, &lp, &cfg.channel, &curve, &cfg.search).unwrap();
        let gn = PolarPos::new(r_g, theta).unwrap();

        let own = phase_cost(r_u, gn, &g.action(), &cfg.channel, &cfg.power, cfg.v_max).unwrap();
        let own_value = lagrangian(own.delta_c, own.e_c, nu, cfg.p_avg);
        prop_assert!((own_value - g.ell_star).abs() <= 1e-9 * own_value.abs().max(1.0));

        let v = k as f64 * cfg.search.speed_step;
        let center = CommAction {
            q_gu: PolarPos::new(0.0, 0.0).unwrap(),
            v1: v,
            q_ub: PolarPos::new(r_ub, 0.0).unwrap(),
            v3: v,
        };
        let alt = phase_cost(r_u, gn, &center, &cfg.channel, &cfg.power, cfg.v_max).unwrap();
        let alt_value = lagrangian(alt.delta_c, alt.e_c, nu, cfg.p_avg);
        prop_assert!(g.ell_star <= alt_value + 1e-9 * alt_value.abs());
    }

    #[test]
    fn config_text_round_trips(p_avg in 200.0..2000.0f64, bits in 1e4..1e8f64) {
        let cfg = SystemConfig::default()
            .with_p_avg(p_avg).unwrap()
            .with_payload_bits(bits).unwrap();
        let back = SystemConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back.sha256(), cfg.sha256());
        prop_assert_eq!(back.p_avg, p_avg);
    }
}
