//! Independent oracles shared by the property and acceptance suites. They use
//! only membership tests and brute-force stepping, never the analytic paths.
#![allow(dead_code)]

use std::f64::consts::PI;

use hallunav::geom::{ChordSide, Point, Primitive, Ray, Region};
use hallunav::sim::{Command, Limits, RobotState, World};
use rand::Rng;

pub const MARCH_STEP: f64 = 1e-4;

/// First entry and last exit found by stepping along the ray.
pub fn march_distances(ray: &Ray, region: &Region, max_range: f64) -> (Option<f64>, Option<f64>) {
    let n = (max_range / MARCH_STEP).round() as usize;
    let mut first_hit = None;
    let mut last_exit = None;
    let mut prev_inside = false;
    for k in 0..=n {
        let t = k as f64 * MARCH_STEP;
        let inside = region.contains(ray.at(t));
        if inside && first_hit.is_none() {
            first_hit = Some(t);
        }
        if prev_inside && !inside {
            last_exit = Some(t);
        }
        prev_inside = inside;
    }
    (first_hit, last_exit)
}

/// One beam of a LiDAR reading found by stepping until an obstacle or wall.
pub fn march_beam(world: &World, ray: &Ray, max_range: f64) -> f64 {
    let n = (max_range / MARCH_STEP).round() as usize;
    for k in 0..=n {
        let t = k as f64 * MARCH_STEP;
        let p = ray.at(t);
        if world.obstacles.contains(p) || !world.bounds.contains(p) {
            return t;
        }
    }
    max_range
}

pub fn random_primitive<R: Rng>(rng: &mut R, extent: f64) -> Primitive {
    let pt = |rng: &mut R| Point::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent));
    match rng.random_range(0..3) {
        0 => Primitive::disc(pt(rng), rng.random_range(0.05..0.8)),
        1 => Primitive::stadium(pt(rng), pt(rng), rng.random_range(0.05..0.5)),
        _ => {
            let center = pt(rng);
            let radius = rng.random_range(0.1..1.0);
            let a0 = rng.random_range(-PI..PI);
            let a1 = a0 + rng.random_range(0.3..(2.0 * PI - 0.3));
            let on = |a: f64| center + Point::from_angle(a) * radius;
            let side = if rng.random_bool(0.5) { ChordSide::Left } else { ChordSide::Right };
            Primitive::CircularSegment { center, radius, chord: (on(a0), on(a1)), side }
        }
    }
}

pub fn random_region<R: Rng>(rng: &mut R, extent: f64) -> Region {
    let n = rng.random_range(1..=4);
    Region::new((0..n).map(|_| random_primitive(rng, extent)).collect()).expect("valid primitives")
}

/// Minimum distance between the held-command rollout and the points, found by
/// sub-stepping each control period with midpoint-heading integration.
pub fn rollout_oracle_distance(
    points: &[Point],
    state: &RobotState,
    cmd: Command,
    horizon: f64,
    dt: f64,
    limits: &Limits,
    substep: f64,
) -> f64 {
    let steps = (horizon / dt).round() as usize;
    let subs = (dt / substep).round() as usize;
    let h = dt / subs as f64;
    let (mut x, mut y, mut psi) = (0.0f64, 0.0f64, 0.0f64);
    let (mut v, mut w) = (state.v, state.omega);
    let nearest = |x: f64, y: f64| points.iter().map(|p| p.dist(Point::new(x, y))).fold(f64::INFINITY, f64::min);
    let mut best = nearest(x, y);
    for _ in 0..steps {
        let dv = limits.accel_v * dt;
        let dw = limits.accel_omega * dt;
        v = (v + (cmd.v - v).clamp(-dv, dv)).clamp(limits.v_min, limits.v_max);
        w = (w + (cmd.omega - w).clamp(-dw, dw)).clamp(-limits.omega_max, limits.omega_max);
        for _ in 0..subs {
            let mid = psi + w * h / 2.0;
            x += v * h * mid.cos();
            y += v * h * mid.sin();
            psi += w * h;
            best = best.min(nearest(x, y));
        }
    }
    best
}
