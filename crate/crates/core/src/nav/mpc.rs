//! Forward-rollout collision veto against scan endpoints.

use serde::{Deserialize, Serialize};

use crate::geom::{ArcPiece, Configuration, Point};
use crate::sim::{integrate_unicycle, Command, Limits, RobotState, Scan, FOOTPRINT_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcParams {
    pub horizon: f64,
    pub dt: f64,
    pub footprint_r: f64,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self { horizon: 1.0, dt: 0.05, footprint_r: FOOTPRINT_RADIUS }
    }
}

/// Arc pieces swept when `cmd` is held from the robot-frame origin. Velocities
/// change by one acceleration step at the start of each rollout step.
pub fn rollout_arcs(state: &RobotState, cmd: Command, params: &MpcParams, limits: &Limits) -> Vec<ArcPiece> {
    let steps = (params.horizon / params.dt).round().max(1.0) as usize;
    let mut s = RobotState { pose: Configuration::default(), ..*state };
    let mut arcs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = integrate_unicycle(&s, cmd, params.dt, limits);
        arcs.push(ArcPiece::new(&s.pose, next.v, next.omega, params.dt));
        s = next;
    }
    arcs
}

/// Smallest distance between the swept rollout and any scan endpoint.
pub fn rollout_clearance(points: &[Point], arcs: &[ArcPiece]) -> f64 {
    let mut best = f64::INFINITY;
    for p in points {
        for a in arcs {
            best = best.min(a.distance(*p));
        }
    }
    best
}

/// Whether holding `cmd` for the horizon keeps the footprint off every scan
/// endpoint. The whole continuous path is checked, not just the step poses.
pub fn mpc_safe(scan: &Scan, state: &RobotState, cmd: Command, params: &MpcParams, limits: &Limits) -> bool {
    let points = scan.obstacle_points();
    if points.is_empty() {
        return true;
    }
    let arcs = rollout_arcs(state, cmd, params, limits);
    points.iter().all(|p| arcs.iter().all(|a| a.distance(*p) >= params.footprint_r))
}
