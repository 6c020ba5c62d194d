use uav_relay::dual::{maximize_dual, probe_comm_policy, DualProblem};
use uav_relay::power::PowerParams;
use uav_relay::smdp::Policy;
use uav_relay::SystemConfig;

fn heavy_policy(payload_bits: f64) -> (DualProblem, Policy, f64) {
    let cfg = SystemConfig::default()
        .with_power(&PowerParams::heavy_lift())
        .unwrap()
        .with_p_avg(1200.0)
        .unwrap()
        .with_payload_bits(payload_bits)
        .unwrap();
    let problem = DualProblem::new(&cfg).unwrap();
    let res = maximize_dual(&problem).unwrap();
    let nu = res.primal.nu;
    (problem, res.primal.solution.policy.clone(), nu)
}

#[test]
fn small_payload_loiters_at_center() {
    let (_, policy, nu) = heavy_policy(1e5);
    assert!(nu < 1e-12);
    assert!(policy.waiting.iter().all(|w| w.v_r <= 0.0));
}

#[test]
fn medium_payload_heads_for_center() {
    let (_, policy, nu) = heavy_policy(1e6);
    assert!(nu > 1e-9);
    assert!(policy.waiting.iter().all(|w| w.v_r < 0.0));
}

#[test]
fn large_payload_circles_at_positive_radius() {
    let (problem, policy, nu) = heavy_policy(1e7);
    assert!(nu > 1e-9);
    let radii = &problem.grid.radii;
    let ring = policy
        .waiting
        .iter()
        .position(|w| w.v_r == 0.0 && w.theta_c > 0.0)
        .expect("a circling radius");
    assert!((radii[ring] - 177.8).abs() < 1.0, "ring at {}", radii[ring]);
    assert!(policy.waiting[..ring].iter().all(|w| w.v_r > 0.0));
    assert!(policy.waiting[ring + 1..].iter().all(|w| w.v_r < 0.0));
}

#[test]
fn relay_point_and_speeds_do_not_depend_on_node_angle() {
    let cfg = SystemConfig::default()
        .with_power(&PowerParams::heavy_lift())
        .unwrap();
    let problem = DualProblem::new(&cfg).unwrap();
    let res = maximize_dual(&problem).unwrap();
    let rows = probe_comm_policy(&problem, &res.primal, 710.0, 1600.0).unwrap();
    assert!(rows.len() > 8);
    let g = rows[0].greedy;
    assert!((g.r_ub - 177.8).abs() < 1.0);
    assert_eq!(g.v1_star, g.v3_star);
    assert!((g.v1_star - 29.1).abs() < 1.0);
    for r in &rows {
        assert_eq!(r.end_radius, rows[0].end_radius);
        assert_eq!(r.greedy.r_ub, g.r_ub);
        assert_eq!(r.greedy.v1_star, g.v1_star);
        assert_eq!(r.greedy.v3_star, g.v3_star);
    }
    let mut angles: Vec<f64> = rows.iter().map(|r| r.theta_g).collect();
    angles.dedup();
    assert_eq!(angles.len(), rows.len());
}
