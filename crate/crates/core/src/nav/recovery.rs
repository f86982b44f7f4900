//! Two-phase recovery: rotate onto the path tangent, then back up.

use serde::{Deserialize, Serialize};

use super::global::GlobalPath;
use crate::geom::{wrap_angle, Configuration};
use crate::sim::Command;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryPhase {
    Align,
    BackUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryParams {
    pub align_tolerance: f64,
    pub rotate_speed: f64,
    pub backup_speed: f64,
    /// Forward command tried once aligned; recovery ends when it is safe.
    pub probe: Command,
    /// Backing up longer than this returns to Align.
    pub max_backup_time: f64,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        Self {
            align_tolerance: 0.1,
            rotate_speed: 1.57,
            backup_speed: -0.2,
            probe: Command::new(0.3, 0.0),
            max_backup_time: 1.5,
        }
    }
}

/// Signed angle from the robot heading to the path tangent at the projection.
pub fn heading_error(pose: &Configuration, path: &GlobalPath) -> f64 {
    let s = path.project(pose.position()).s;
    wrap_angle(path.tangent_at(s) - pose.psi)
}

/// One recovery step. `probe_safe` is consulted only when aligned. A `None`
/// phase means recovery is over and the returned command is the probe.
pub fn recovery_command(
    phase: RecoveryPhase,
    pose: &Configuration,
    path: &GlobalPath,
    params: &RecoveryParams,
    probe_safe: impl FnOnce(Command) -> bool,
) -> (Command, Option<RecoveryPhase>) {
    match phase {
        RecoveryPhase::BackUp => (Command::new(params.backup_speed, 0.0), Some(RecoveryPhase::BackUp)),
        RecoveryPhase::Align => {
            let err = heading_error(pose, path);
            if err.abs() >= params.align_tolerance {
                let omega = if err > 0.0 { params.rotate_speed } else { -params.rotate_speed };
                (Command::new(0.0, omega), Some(RecoveryPhase::Align))
            } else if probe_safe(params.probe) {
                (params.probe, None)
            } else {
                (Command::new(params.backup_speed, 0.0), Some(RecoveryPhase::BackUp))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;

    fn path() -> GlobalPath {
        GlobalPath::new(vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0)], 0.05).unwrap()
    }

    #[test]
    fn align_turns_toward_the_tangent() {
        let p = RecoveryParams::default();
        let (cmd, next) = recovery_command(RecoveryPhase::Align, &Configuration::new(1.0, 0.0, -0.5), &path(), &p, |_| unreachable!());
        assert_eq!((cmd, next), (Command::new(0.0, 1.57), Some(RecoveryPhase::Align)));
        let (cmd, _) = recovery_command(RecoveryPhase::Align, &Configuration::new(1.0, 0.0, 0.5), &path(), &p, |_| unreachable!());
        assert_eq!(cmd, Command::new(0.0, -1.57));
    }

    #[test]
    fn aligned_but_blocked_backs_up() {
        let p = RecoveryParams::default();
        let (cmd, next) = recovery_command(RecoveryPhase::Align, &Configuration::new(1.0, 0.0, -0.05), &path(), &p, |_| false);
        assert_eq!(next, Some(RecoveryPhase::BackUp));
        assert_eq!(cmd, Command::new(-0.2, 0.0));
    }

    #[test]
    fn aligned_and_clear_exits() {
        let p = RecoveryParams::default();
        let (cmd, next) = recovery_command(RecoveryPhase::Align, &Configuration::new(1.0, 0.0, 0.05), &path(), &p, |_| true);
        assert_eq!((cmd, next), (p.probe, None));
    }

    #[test]
    fn backup_command() {
        let (cmd, next) = recovery_command(RecoveryPhase::BackUp, &Configuration::default(), &path(), &RecoveryParams::default(), |_| true);
        assert_eq!((cmd, next), (Command::new(-0.2, 0.0), Some(RecoveryPhase::BackUp)));
    }
}
