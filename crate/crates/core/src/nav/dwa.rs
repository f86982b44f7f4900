//! Dynamic-window baseline local planner.

use serde::{Deserialize, Serialize};

use super::global::{local_goal, polyline_distance, GlobalPath};
use crate::geom::{arc_pieces, Configuration, Point};
use crate::sim::{Command, Limits, RobotState, Scan, CONTROL_DT, FOOTPRINT_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwaParams {
    pub v_samples: usize,
    pub omega_samples: usize,
    pub v_max: f64,
    /// Lowest sampled linear velocity; DWA never plans backwards.
    pub v_min: f64,
    pub sim_time: f64,
    /// Period over which the acceleration window is reachable.
    pub window_dt: f64,
    pub w_goal: f64,
    pub w_path: f64,
    pub w_obstacle: f64,
    /// Clearance beyond this stops earning score; the sensor cannot see further.
    pub clearance_cap: f64,
    pub lookahead: f64,
    pub footprint_r: f64,
}

impl Default for DwaParams {
    fn default() -> Self {
        Self {
            v_samples: 12,
            omega_samples: 40,
            v_max: 1.0,
            v_min: 0.0,
            sim_time: 1.0,
            window_dt: CONTROL_DT,
            w_goal: 2.0,
            w_path: 1.0,
            w_obstacle: 1.0,
            clearance_cap: 1.0,
            lookahead: 1.0,
            footprint_r: FOOTPRINT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaCandidate {
    pub cmd: Command,
    pub goal_progress: f64,
    pub path_distance: f64,
    /// Distance beyond the footprint to the nearest scan endpoint, capped.
    pub clearance: f64,
    pub feasible: bool,
}

/// Evenly spaced samples, exactly symmetric about the window centre.
fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    (0..n).map(move |k| if n == 1 { mid } else { mid + half * (2.0 * k as f64 - (n - 1) as f64) / (n - 1) as f64 })
}

/// Rolls every candidate in the dynamic window forward and measures its terms.
/// Geometry is in the robot frame.
pub fn dwa_candidates(
    scan: &Scan,
    state: &RobotState,
    goal_rel: Point,
    path_rel: &[Point],
    params: &DwaParams,
    limits: &Limits,
) -> Vec<DwaCandidate> {
    let dv = limits.accel_v * params.window_dt;
    let dw = limits.accel_omega * params.window_dt;
    let v_lo = (state.v - dv).max(params.v_min.max(limits.v_min));
    let v_hi = (state.v + dv).min(params.v_max.min(limits.v_max)).max(v_lo);
    let w_lo = (state.omega - dw).max(-limits.omega_max);
    let w_hi = (state.omega + dw).min(limits.omega_max).max(w_lo);
    let points = scan.obstacle_points();
    let origin = Configuration::default();
    let start_dist = goal_rel.norm();

    let mut out = Vec::with_capacity(params.v_samples * params.omega_samples);
    for v in linspace(v_lo, v_hi, params.v_samples) {
        for omega in linspace(w_lo, w_hi, params.omega_samples) {
            let arcs = arc_pieces(&origin, v, omega, params.sim_time);
            let end = arcs.last().expect("at least one piece").end();
            let nearest = points
                .iter()
                .flat_map(|p| arcs.iter().map(move |a| a.distance(*p)))
                .fold(f64::INFINITY, f64::min);
            out.push(DwaCandidate {
                cmd: Command::new(v, omega),
                goal_progress: start_dist - goal_rel.dist(end),
                path_distance: polyline_distance(path_rel, end),
                clearance: (nearest - params.footprint_r).min(params.clearance_cap),
                feasible: nearest >= params.footprint_r,
            });
        }
    }
    out
}

fn normalizer(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    move |x| if hi - lo > 1e-12 { (x - lo) / (hi - lo) } else { 0.0 }
}

/// Weighted score of each feasible candidate, terms min-max normalized over
/// the feasible set. Infeasible candidates score `None`.
pub fn dwa_scores(cands: &[DwaCandidate], params: &DwaParams) -> Vec<Option<f64>> {
    let feasible = cands.iter().filter(|c| c.feasible);
    let ng = normalizer(feasible.clone().map(|c| c.goal_progress));
    let np = normalizer(feasible.clone().map(|c| -c.path_distance));
    let no = normalizer(feasible.map(|c| c.clearance));
    cands
        .iter()
        .map(|c| {
            c.feasible.then(|| {
                params.w_goal * ng(c.goal_progress)
                    + params.w_path * np(-c.path_distance)
                    + params.w_obstacle * no(c.clearance)
            })
        })
        .collect()
}

/// Highest score; ties go to the smaller |ω|, then the smaller index.
pub fn select_best(scores: &[Option<f64>], cands: &[DwaCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bs = scores[b].expect("best is feasible");
                s > bs || (s == bs && cands[i].cmd.omega.abs() < cands[b].cmd.omega.abs())
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// DWA command toward the local goal on `path`. `None` when every candidate
/// collides, which hands control to recovery.
pub fn dwa_command(
    scan: &Scan,
    state: &RobotState,
    path: &GlobalPath,
    params: &DwaParams,
    limits: &Limits,
) -> Option<Command> {
    let pose = &state.pose;
    let goal = local_goal(path, pose, params.lookahead).position();
    let s = path.project(pose.position()).s;
    let path_rel: Vec<Point> = path
        .slice(s, s + params.lookahead + params.v_max * params.sim_time)
        .into_iter()
        .map(|p| pose.to_local(p))
        .collect();
    let cands = dwa_candidates(scan, state, pose.to_local(goal), &path_rel, params, limits);
    let scores = dwa_scores(&cands, params);
    select_best(&scores, &cands).map(|i| cands[i].cmd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SensorConfig;

    fn straight_path() -> GlobalPath {
        GlobalPath::new(vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0)], 0.05).unwrap()
    }

    #[test]
    fn grid_has_480_candidates() {
        let c = dwa_candidates(
            &Scan::open(SensorConfig::default()),
            &RobotState::default(),
            Point::new(1.0, 0.0),
            &[],
            &DwaParams::default(),
            &Limits::default(),
        );
        assert_eq!(c.len(), 480);
    }

    #[test]
    fn open_space_goes_fast_and_straight() {
        let params = DwaParams::default();
        let limits = Limits::default();
        let state = RobotState { v: 0.5, ..Default::default() };
        let scan = Scan::open(SensorConfig::default());
        let cmd = dwa_command(&scan, &state, &straight_path(), &params, &limits).unwrap();
        let cands = dwa_candidates(&scan, &state, Point::new(1.0, 0.0), &[], &params, &limits);
        let v_top = cands.iter().map(|c| c.cmd.v).fold(f64::MIN, f64::max);
        assert_eq!(cmd.v, v_top, "{cmd:?}");
        let w_min = cands.iter().map(|c| c.cmd.omega.abs()).fold(f64::MAX, f64::min);
        assert_eq!(cmd.omega.abs(), w_min);
        assert!(cmd.omega.abs() < 0.01);
    }

    #[test]
    fn wall_in_front_gives_sentinel() {
        let cfg = SensorConfig::default();
        let mut scan = Scan::open(cfg);
        for (i, off) in cfg.beam_offsets().into_iter().enumerate() {
            if off.abs() < 1.2 {
                scan.ranges[i] = (0.1 / off.cos()).min(1.0);
            }
        }
        let out = dwa_command(&scan, &RobotState::default(), &straight_path(), &DwaParams::default(), &Limits::default());
        assert_eq!(out, None);
    }

    #[test]
    fn argmax_survives_affine_rescaling() {
        let params = DwaParams::default();
        let limits = Limits::default();
        let mut scan = Scan::open(SensorConfig::default());
        scan.ranges[300] = 0.9;
        scan.ranges[430] = 0.8;
        let state = RobotState { v: 0.4, omega: 0.3, ..Default::default() };
        let cands = dwa_candidates(&scan, &state, Point::new(0.8, 0.6), &[Point::new(0.0, 0.0), Point::new(0.8, 0.6)], &params, &limits);
        let scores = dwa_scores(&cands, &params);
        let best = select_best(&scores, &cands);
        assert!(best.is_some());
        for (a, b) in [(3.0, -7.0), (0.25, 100.0), (1.0, 0.0)] {
            let scaled: Vec<_> = scores.iter().map(|s| s.map(|x| a * x + b)).collect();
            assert_eq!(select_best(&scaled, &cands), best);
        }
    }

    #[test]
    fn ties_prefer_small_omega_then_index() {
        let cand = |omega| DwaCandidate {
            cmd: Command::new(0.5, omega),
            goal_progress: 0.0,
            path_distance: 0.0,
            clearance: 0.0,
            feasible: true,
        };
        let cands = [cand(0.3), cand(-0.1), cand(0.1), cand(0.2)];
        let scores = [Some(1.0), Some(1.0), Some(1.0), Some(0.5)];
        assert_eq!(select_best(&scores, &cands), Some(1));
    }
}
