//! Random exploration in obstacle-free space and the raw trajectory log.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Configuration;
use crate::sim::{integrate_unicycle, Command, Limits, RobotState, World, CONTROL_DT, CONTROL_RATE_HZ};

pub const RAW_SCHEMA: &str = "hallunav.raw/1";

/// Velocity tolerance for declaring an exploration target reached.
pub const REACHED_V_TOL: f64 = 0.02;
pub const REACHED_OMEGA_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Uniformly varying linear and angular targets.
    Varying,
    /// Linear target fixed at 0.4 m/s, angular target random.
    Constant04,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationParams {
    pub v_range: (f64, f64),
    pub omega_range: (f64, f64),
    /// When set, every linear target takes this value.
    pub fixed_v: Option<f64>,
    pub hold_probability: f64,
    pub seed: u64,
    pub duration: f64,
}

impl ExplorationParams {
    pub fn preset(preset: Preset, seed: u64, duration: f64) -> Self {
        Self {
            v_range: (0.0, 1.0),
            omega_range: (-1.57, 1.57),
            fixed_v: match preset {
                Preset::Varying => None,
                Preset::Constant04 => Some(0.4),
            },
            hold_probability: 0.95,
            seed,
            duration,
        }
    }

    pub fn validate(&self, limits: &Limits) -> Result<()> {
        let ok = self.v_range.0 <= self.v_range.1
            && self.v_range.0 >= limits.v_min
            && self.v_range.1 <= limits.v_max
            && self.omega_range.0 <= self.omega_range.1
            && self.omega_range.0 >= -limits.omega_max
            && self.omega_range.1 <= limits.omega_max
            && (0.0..1.0).contains(&self.hold_probability)
            && self.duration > 0.0
            && self.fixed_v.is_none_or(|v| v >= self.v_range.0 && v <= self.v_range.1);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("exploration params {self:?}")))
        }
    }

    fn draw_target<R: Rng>(&self, rng: &mut R) -> Command {
        let v = rng.random_range(self.v_range.0..=self.v_range.1);
        let omega = rng.random_range(self.omega_range.0..=self.omega_range.1);
        Command::new(self.fixed_v.unwrap_or(v), omega)
    }
}

/// One logged simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    /// Measured velocities.
    pub v: f64,
    pub omega: f64,
    /// Command issued at this step.
    pub v_cmd: f64,
    pub omega_cmd: f64,
}

impl RawRecord {
    pub fn pose(&self) -> Configuration {
        Configuration { x: self.x, y: self.y, psi: self.psi }
    }

    pub fn command(&self) -> Command {
        Command::new(self.v_cmd, self.omega_cmd)
    }
}

/// One decision of the random exploration policy: keep approaching the current
/// target, and once it is reached either hold it or draw a fresh one.
pub fn pi_rand_step<R: Rng>(
    rng: &mut R,
    state: &RobotState,
    target: Command,
    params: &ExplorationParams,
) -> (Command, Command) {
    let reached = (state.v - target.v).abs() <= REACHED_V_TOL
        && (state.omega - target.omega).abs() <= REACHED_OMEGA_TOL;
    let next = if reached && rng.random::<f64>() >= params.hold_probability {
        params.draw_target(rng)
    } else {
        target
    };
    (next, next)
}

pub fn record_count(duration: f64) -> usize {
    (duration * CONTROL_RATE_HZ + 1e-9).floor() as usize
}

/// Drives the robot from the origin with the random policy in an empty plane
/// and logs one record per control step.
pub fn run_exploration(params: &ExplorationParams) -> Vec<RawRecord> {
    let limits = Limits::default();
    let world = World::open();
    assert!(world.obstacles.is_empty(), "exploration must run in free space");

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = RobotState::at_rest(world.start);
    let mut target = params.draw_target(&mut rng);
    let n = record_count(params.duration);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let (cmd, next_target) = pi_rand_step(&mut rng, &state, target, params);
        target = next_target;
        records.push(RawRecord {
            t: i as f64 * CONTROL_DT,
            x: state.pose.x,
            y: state.pose.y,
            psi: state.pose.psi,
            v: state.v,
            omega: state.omega,
            v_cmd: cmd.v,
            omega_cmd: cmd.omega,
        });
        state = integrate_unicycle(&state, cmd, CONTROL_DT, &limits);
    }
    records
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub schema: String,
    pub params: ExplorationParams,
}

pub fn write_raw<W: Write>(mut out: W, params: &ExplorationParams, records: &[RawRecord]) -> Result<()> {
    let header = RawHeader { schema: RAW_SCHEMA.to_string(), params: *params };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_raw<R: BufRead>(input: R) -> Result<(RawHeader, Vec<RawRecord>)> {
    let mut lines = input.lines();
    let header: RawHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Format("missing raw dataset header".into())),
    };
    if header.schema != RAW_SCHEMA {
        return Err(Error::Format(format!("unsupported schema {}", header.schema)));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approach_phase_keeps_target() {
        let params = ExplorationParams::preset(Preset::Varying, 1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = Command::new(0.8, 1.0);
        for _ in 0..100 {
            let (cmd, next) = pi_rand_step(&mut rng, &RobotState::default(), target, &params);
            assert_eq!((cmd, next), (target, target));
        }
    }

    #[test]
    fn targets_cover_the_limits() {
        let params = ExplorationParams { hold_probability: 0.0, ..ExplorationParams::preset(Preset::Varying, 0, 1.0) };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (mut vmin, mut vmax, mut wmin, mut wmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        let mut target = Command::STOP;
        for _ in 0..100_000 {
            // Pretend the robot already tracks the target so a new one is drawn.
            let state = RobotState { v: target.v, omega: target.omega, ..Default::default() };
            target = pi_rand_step(&mut rng, &state, target, &params).1;
            vmin = vmin.min(target.v);
            vmax = vmax.max(target.v);
            wmin = wmin.min(target.omega);
            wmax = wmax.max(target.omega);
        }
        assert!(vmin >= 0.0 && vmax <= 1.0 && wmin >= -1.57 && wmax <= 1.57);
        assert!(vmin < 0.01 && vmax > 0.99 && wmin < -1.55 && wmax > 1.55);
    }

    #[test]
    fn seeded_exploration_is_reproducible() {
        let params = ExplorationParams::preset(Preset::Varying, 42, 20.0);
        let a = run_exploration(&params);
        let b = run_exploration(&params);
        assert_eq!(a, b);
        let other = run_exploration(&ExplorationParams { seed: 43, ..params });
        assert_ne!(a, other);
    }

    #[test]
    fn record_counts() {
        assert_eq!(record_count(505.0), 12625);
        assert_eq!(record_count(1.0), 25);
        assert_eq!(run_exploration(&ExplorationParams::preset(Preset::Varying, 3, 1.0)).len(), 25);
    }

    #[test]
    fn constant_preset_settles_at_04() {
        let recs = run_exploration(&ExplorationParams::preset(Preset::Constant04, 9, 30.0));
        assert!(recs.iter().all(|r| r.v_cmd == 0.4));
        assert!(recs[25..].iter().all(|r| (r.v - 0.4).abs() < 1e-9));
    }

    #[test]
    fn accel_limits_between_records() {
        let limits = Limits::default();
        let recs = run_exploration(&ExplorationParams::preset(Preset::Varying, 5, 60.0));
        for w in recs.windows(2) {
            assert!((w[1].v - w[0].v).abs() <= limits.accel_v * CONTROL_DT + 1e-12);
            assert!((w[1].omega - w[0].omega).abs() <= limits.accel_omega * CONTROL_DT + 1e-12);
            assert!(w[1].v >= 0.0 && w[1].v <= 1.0 && w[1].omega.abs() <= 1.57);
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let params = ExplorationParams::preset(Preset::Varying, 11, 2.0);
        let recs = run_exploration(&params);
        let mut buf = Vec::new();
        write_raw(&mut buf, &params, &recs).unwrap();
        let (header, back) = read_raw(buf.as_slice()).unwrap();
        assert_eq!(header.params, params);
        assert_eq!(back, recs);
    }
}
