use std::sync::Arc;

use hallunav::bench::{aggregate_report, generate_world, generate_worlds, run_suite, Arm, WorldGenParams};
use hallunav::geom::{Configuration, Point};
use hallunav::learn::{Hyper, Mlp, Policy};
use hallunav::nav::global::plan_global;
use hallunav::nav::{navigate_episode, navigate_episode_traced, DwaParams, NavConfig, PlannerKind, StepPhase};
use hallunav::sim::{in_collision, FOOTPRINT_RADIUS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_policy(seed: u64) -> Arc<Policy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::<f32>::standard(2.0, 0.02, &mut rng);
    Arc::new(Policy::new(net, Hyper::default(), "untrained".into(), vec![]))
}

fn named(worlds: Vec<hallunav::sim::World>) -> Vec<(String, hallunav::sim::World)> {
    worlds.into_iter().enumerate().map(|(i, w)| (format!("w{i}"), w)).collect()
}

#[test]
fn generated_worlds_follow_the_layout() {
    let p = WorldGenParams::new(4);
    for (i, w) in generate_worlds(&p, 5).unwrap().iter().enumerate() {
        assert_eq!(w.obstacles.primitives().len(), 10, "world {i}: round(0.4 * 8 * 3) discs");
        assert_eq!(w.start.position(), Point::new(0.5, 0.0));
        assert_eq!(w.goal.position(), Point::new(7.5, 0.0));
        for end in [w.start.position(), w.goal.position()] {
            // Keep-out is measured to the disc edge.
            assert!(w.obstacles.distance(end) >= 0.5 - 1e-12, "world {i}");
        }
        assert!(plan_global(w, 0.05, FOOTPRINT_RADIUS).is_ok(), "world {i} must be solvable");
    }
    assert_eq!(generate_world(&p).unwrap(), generate_worlds(&p, 1).unwrap()[0]);
}

#[test]
fn dwa_episodes_are_deterministic_and_collision_free() {
    let worlds = generate_worlds(&WorldGenParams::new(9), 3).unwrap();
    let cfg = NavConfig::new(PlannerKind::Dwa(DwaParams::default()));
    for w in &worlds {
        let mut trace = Vec::new();
        let a = navigate_episode_traced(w, &cfg, 60.0, Some(&mut trace)).unwrap();
        let b = navigate_episode(w, &cfg, 60.0).unwrap();
        assert_eq!(a, b);
        assert!(a.success, "{a:?}");
        assert!(a.path_length >= 6.0);
        for s in &trace {
            let pose = Configuration::new(s.pose[0], s.pose[1], s.pose[2]);
            assert!(!in_collision(w, &pose, FOOTPRINT_RADIUS) || a.collisions > 0);
            assert!(s.cmd[0] <= 1.0 && s.cmd[1].abs() <= 1.57);
        }
    }
}

#[test]
fn speed_cap_limits_every_nominal_command() {
    let world = generate_worlds(&WorldGenParams::new(2), 1).unwrap().remove(0);
    let mut cfg = NavConfig::new(PlannerKind::Lfh(random_policy(1)));
    cfg.speed_cap = Some(0.6);
    let mut trace = Vec::new();
    navigate_episode_traced(&world, &cfg, 10.0, Some(&mut trace)).unwrap();
    assert!(!trace.is_empty());
    for s in trace.iter().filter(|s| s.phase == StepPhase::Nominal) {
        assert!(s.cmd[0] <= 0.6 + 1e-12, "{s:?}");
    }
}

#[test]
fn suite_is_independent_of_worker_count() {
    let worlds = named(generate_worlds(&WorldGenParams::new(21), 3).unwrap());
    let arms = vec![
        Arm::new("DWA", PlannerKind::Dwa(DwaParams::default()), None),
        Arm::new("HLSD", PlannerKind::Hlsd(random_policy(3)), None),
        Arm::new("LfH", PlannerKind::Lfh(random_policy(4)), Some(0.6)),
    ];
    let one = run_suite(&worlds, &arms, 6.0, 1).unwrap();
    let many = run_suite(&worlds, &arms, 6.0, 3).unwrap();
    assert_eq!(one, many);
    assert_eq!(one.arms.iter().map(|a| a.name.as_str()).collect::<Vec<_>>(), ["DWA", "HLSD", "LfH"]);
    assert!(one.arms.iter().all(|a| a.results.len() == 3));
    let (r1, r2) = (aggregate_report(&one), aggregate_report(&many));
    assert_eq!(r1.table, r2.table);
    assert_eq!(r1.csv, r2.csv);
    assert_eq!(r1.csv.lines().count(), 1 + 9);
}

#[test]
fn each_arm_matches_a_solo_episode() {
    let worlds = named(generate_worlds(&WorldGenParams::new(30), 2).unwrap());
    let arm = Arm::new("HLSD", PlannerKind::Hlsd(random_policy(8)), None);
    let report = run_suite(&worlds, std::slice::from_ref(&arm), 5.0, 2).unwrap();
    for ((_, w), r) in worlds.iter().zip(&report.arms[0].results) {
        assert_eq!(&navigate_episode(w, &arm.config, 5.0).unwrap(), r);
    }
}
