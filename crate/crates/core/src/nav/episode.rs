//! The closed-loop deployment episode.

use std::sync::Arc;

use serde::Serialize;

use super::dwa::{dwa_command, DwaParams};
use super::global::{local_goal, plan_global, plan_global_from, GlobalPath, DEFAULT_RESOLUTION};
use super::mpc::{mpc_safe, MpcParams};
use super::recovery::{recovery_command, RecoveryParams, RecoveryPhase};
use crate::error::{Error, Result};
use crate::geom::Configuration;
use crate::halluc::corridor_scan;
use crate::learn::Policy;
use crate::sim::{
    in_collision, integrate_unicycle, lidar_scan, Command, Limits, RobotState, Scan, SensorConfig, World,
    CONTROL_DT, FOOTPRINT_RADIUS,
};

#[derive(Debug, Clone)]
pub enum PlannerKind {
    /// Learned policy on the real scan.
    Hlsd(Arc<Policy>),
    /// Learned policy on a scan hallucinated from the global path.
    Lfh(Arc<Policy>),
    Dwa(DwaParams),
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Hlsd(_) => "hlsd",
            Self::Lfh(_) => "lfh",
            Self::Dwa(_) => "dwa",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NavConfig {
    pub planner: PlannerKind,
    /// Upper bound applied to the planner's linear velocity.
    pub speed_cap: Option<f64>,
    pub mpc: MpcParams,
    pub recovery: RecoveryParams,
    pub sensor: SensorConfig,
    pub limits: Limits,
    pub goal_tolerance: f64,
    pub lookahead: f64,
    pub resolution: f64,
    pub footprint_r: f64,
    pub max_collisions: u32,
}

impl NavConfig {
    pub fn new(planner: PlannerKind) -> Self {
        Self {
            planner,
            speed_cap: None,
            mpc: MpcParams::default(),
            recovery: RecoveryParams::default(),
            sensor: SensorConfig::default(),
            limits: Limits::default(),
            goal_tolerance: 0.3,
            lookahead: 1.0,
            resolution: DEFAULT_RESOLUTION,
            footprint_r: FOOTPRINT_RADIUS,
            max_collisions: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(cap) = self.speed_cap {
            if !(cap > 0.0 && cap <= self.limits.v_max) {
                return Err(Error::InvalidConfig(format!("speed cap {cap} outside (0, {}]", self.limits.v_max)));
            }
        }
        if self.recovery.backup_speed < self.limits.v_min || self.recovery.rotate_speed > self.limits.omega_max {
            return Err(Error::InvalidConfig("recovery commands exceed the command limits".into()));
        }
        self.sensor.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    /// Simulated seconds to reach the goal; infinite on failure.
    pub time: f64,
    pub collisions: u32,
    pub recovery_invocations: u32,
    pub path_length: f64,
}

impl EpisodeResult {
    pub fn failure() -> Self {
        Self { success: false, time: f64::INFINITY, collisions: 0, recovery_invocations: 0, path_length: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPhase {
    Nominal,
    Align,
    BackUp,
}

impl From<Option<RecoveryPhase>> for StepPhase {
    fn from(p: Option<RecoveryPhase>) -> Self {
        match p {
            None => Self::Nominal,
            Some(RecoveryPhase::Align) => Self::Align,
            Some(RecoveryPhase::BackUp) => Self::BackUp,
        }
    }
}

/// One line of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: f64,
    pub pose: [f64; 3],
    pub cmd: [f64; 2],
    /// Whether the planner's command passed the safety check.
    pub safe: bool,
    pub phase: StepPhase,
}

/// Scan of the corridor around the next `lookahead` metres of path, seen from
/// `pose`. The robot position is prepended so the corridor always contains it.
pub fn lfh_runtime_scan(
    path: &GlobalPath,
    pose: &Configuration,
    cfg: &SensorConfig,
    r: f64,
    lookahead: f64,
) -> Result<Scan> {
    let s = path.project(pose.position()).s;
    let traj: Vec<Configuration> = std::iter::once(pose.position())
        .chain(path.slice(s, s + lookahead))
        .map(|p| Configuration { x: p.x, y: p.y, psi: 0.0 })
        .collect();
    corridor_scan(pose, &traj, cfg, r)
}

fn planner_command(
    cfg: &NavConfig,
    path: &GlobalPath,
    state: &RobotState,
    scan: &Scan,
) -> Result<Option<Command>> {
    let goal_rel = || state.pose.to_local(local_goal(path, &state.pose, cfg.lookahead).position());
    let vel = [state.v, state.omega];
    let cmd = match &cfg.planner {
        PlannerKind::Hlsd(policy) => Some(policy.predict_action(scan, goal_rel(), vel)?),
        PlannerKind::Lfh(policy) => {
            let halluc = lfh_runtime_scan(path, &state.pose, &cfg.sensor, cfg.footprint_r, cfg.lookahead)?;
            Some(policy.predict_action(&halluc, goal_rel(), vel)?)
        }
        PlannerKind::Dwa(params) => dwa_command(scan, state, path, params, &cfg.limits),
    };
    Ok(cmd.map(|c| match cfg.speed_cap {
        Some(cap) => Command::new(c.v.min(cap), c.omega),
        None => c,
    }))
}

pub fn navigate_episode(world: &World, cfg: &NavConfig, timeout: f64) -> Result<EpisodeResult> {
    navigate_episode_traced(world, cfg, timeout, None)
}

/// Runs one episode at the control rate. Planner commands that fail the
/// safety check hand control to recovery; every new contact forces a back-up.
pub fn navigate_episode_traced(
    world: &World,
    cfg: &NavConfig,
    timeout: f64,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let r = cfg.footprint_r;
    let mut path = plan_global(world, cfg.resolution, r)?;
    let goal = world.goal.position();
    let mut state = RobotState::at_rest(world.start);
    let mut mode: Option<RecoveryPhase> = None;
    let mut backup_time = 0.0;
    let mut collisions = 0u32;
    let mut recoveries = 0u32;
    let mut in_contact = in_collision(world, &state.pose, r);
    let mut travelled = 0.0;
    let max_steps = (timeout / CONTROL_DT + 1e-9).floor() as usize;
    let safe_check = |scan: &Scan, state: &RobotState, c: Command| mpc_safe(scan, state, c, &cfg.mpc, &cfg.limits);

    for _ in 0..=max_steps {
        if state.pose.position().dist(goal) <= cfg.goal_tolerance {
            return Ok(EpisodeResult {
                success: true,
                time: state.t,
                collisions,
                recovery_invocations: recoveries,
                path_length: travelled,
            });
        }
        if state.t >= timeout - 1e-9 {
            break;
        }
        let scan = lidar_scan(world, &state.pose, &cfg.sensor);
        let raw = planner_command(cfg, &path, &state, &scan)?;
        let safe = raw.is_some_and(|c| safe_check(&scan, &state, c));

        if safe && mode.is_some() {
            mode = None;
            if let Ok(p) = plan_global_from(world, state.pose.position(), cfg.resolution, r) {
                path = p;
            }
        } else if !safe && mode.is_none() {
            recoveries += 1;
            mode = Some(RecoveryPhase::Align);
        }
        if mode == Some(RecoveryPhase::BackUp) && backup_time >= cfg.recovery.max_backup_time - 1e-9 {
            mode = Some(RecoveryPhase::Align);
        }
        let cmd = match mode {
            None => raw.expect("safe implies a command"),
            Some(phase) => {
                let (cmd, next) =
                    recovery_command(phase, &state.pose, &path, &cfg.recovery, |c| safe_check(&scan, &state, c));
                if next == Some(RecoveryPhase::BackUp) && phase != RecoveryPhase::BackUp {
                    backup_time = 0.0;
                }
                mode = next;
                cmd
            }
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceStep {
                t: state.t,
                pose: [state.pose.x, state.pose.y, state.pose.psi],
                cmd: [cmd.v, cmd.omega],
                safe,
                phase: mode.into(),
            });
        }
        if mode == Some(RecoveryPhase::BackUp) {
            backup_time += CONTROL_DT;
        }

        let next = integrate_unicycle(&state, cmd, CONTROL_DT, &cfg.limits);
        travelled += next.pose.position().dist(state.pose.position());
        state = next;
        let contact = in_collision(world, &state.pose, r);
        if contact && !in_contact {
            collisions += 1;
            if collisions > cfg.max_collisions {
                break;
            }
            if mode.is_none() {
                recoveries += 1;
            }
            mode = Some(RecoveryPhase::BackUp);
            backup_time = 0.0;
        }
        in_contact = contact;
    }
    Ok(EpisodeResult { success: false, time: f64::INFINITY, collisions, recovery_invocations: recoveries, path_length: travelled })
}
