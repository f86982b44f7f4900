//! Differential-drive simulation: kinematics, worlds, collision checks and a
//! ray-cast planar LiDAR.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{advance_pose, Configuration, Point, Primitive, Ray, Region};

/// Control, sensing and physics period (25 Hz).
pub const CONTROL_DT: f64 = 0.04;
pub const CONTROL_RATE_HZ: f64 = 25.0;
/// Radius of the circular robot footprint.
pub const FOOTPRINT_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub v: f64,
    pub omega: f64,
}

impl Command {
    pub const STOP: Command = Command { v: 0.0, omega: 0.0 };

    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState {
    pub pose: Configuration,
    pub v: f64,
    pub omega: f64,
    pub t: f64,
}

impl RobotState {
    pub fn at_rest(pose: Configuration) -> Self {
        Self { pose, ..Self::default() }
    }
}

/// Acceleration and velocity limits of the platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub accel_v: f64,
    pub accel_omega: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for Limits {
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        Self { accel_v: 2.0, accel_omega: 3.14, v_min: -0.2, v_max: 1.0, omega_max: 1.57 }
    }
}

fn approach(current: f64, target: f64, max_step: f64) -> f64 {
    current + (target - current).clamp(-max_step, max_step)
}

/// Advances the robot by `dt` under `cmd`. Velocities move toward the command
/// by at most one acceleration step, then the pose follows the exact arc for
/// the resulting constant velocities.
pub fn integrate_unicycle(state: &RobotState, cmd: Command, dt: f64, limits: &Limits) -> RobotState {
    debug_assert!(dt > 0.0 && dt <= 0.1, "dt {dt} out of (0, 0.1]");
    let v = approach(state.v, cmd.v, limits.accel_v * dt).clamp(limits.v_min, limits.v_max);
    let omega = approach(state.omega, cmd.omega, limits.accel_omega * dt)
        .clamp(-limits.omega_max, limits.omega_max);
    RobotState { pose: advance_pose(&state.pose, v, omega, dt), v, omega, t: state.t + dt }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn unbounded() -> Self {
        Self {
            xmin: f64::NEG_INFINITY,
            ymin: f64::NEG_INFINITY,
            xmax: f64::INFINITY,
            ymax: f64::INFINITY,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Distance from an interior point to the nearest wall.
    pub fn wall_clearance(&self, p: Point) -> f64 {
        (p.x - self.xmin).min(self.xmax - p.x).min(p.y - self.ymin).min(self.ymax - p.y)
    }

    /// Distance along the ray from an interior origin to the wall it leaves through.
    fn exit_distance(&self, origin: Point, angle: f64) -> f64 {
        let (s, c) = angle.sin_cos();
        let mut t = f64::INFINITY;
        if c > 0.0 {
            t = t.min((self.xmax - origin.x) / c);
        } else if c < 0.0 {
            t = t.min((self.xmin - origin.x) / c);
        }
        if s > 0.0 {
            t = t.min((self.ymax - origin.y) / s);
        } else if s < 0.0 {
            t = t.min((self.ymin - origin.y) / s);
        }
        t.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub bounds: Bounds,
    pub obstacles: Region,
    pub start: Configuration,
    pub goal: Configuration,
}

impl World {
    /// Obstacle-free, wall-free plane.
    pub fn open() -> Self {
        Self {
            bounds: Bounds::unbounded(),
            obstacles: Region::empty(),
            start: Configuration::default(),
            goal: Configuration::default(),
        }
    }

    /// Checks the world invariants for a robot of radius `r`.
    pub fn validate(&self, r: f64) -> Result<()> {
        let b = &self.bounds;
        if !(b.xmin < b.xmax && b.ymin < b.ymax) {
            return Err(Error::InvalidConfig(format!("empty bounds {b:?}")));
        }
        for prim in self.obstacles.primitives() {
            let inside = match *prim {
                Primitive::Disc { center, radius } => {
                    b.contains(center) && b.wall_clearance(center) >= radius
                }
                Primitive::Stadium { a, b: end, radius } => {
                    b.wall_clearance(a) >= radius && b.wall_clearance(end) >= radius
                        && b.contains(a)
                        && b.contains(end)
                }
                Primitive::CircularSegment { center, radius, .. } => {
                    b.contains(center) && b.wall_clearance(center) >= radius
                }
            };
            if !inside {
                return Err(Error::InvalidConfig(format!("obstacle {prim:?} outside bounds")));
            }
        }
        for (name, c) in [("start", &self.start), ("goal", &self.goal)] {
            if in_collision(self, c, r) {
                return Err(Error::InvalidConfig(format!("{name} {c:?} is not collision-free")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: WorldFile = serde_json::from_str(&text)?;
        let world = file.into_world()?;
        world.validate(FOOTPRINT_RADIUS)?;
        Ok(world)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&WorldFile::from_world(self)?)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// On-disk world document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub bounds: Bounds,
    pub obstacles: Vec<ObstacleSpec>,
    pub start: PoseSpec,
    pub goal: PoseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleSpec {
    Disc { cx: f64, cy: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl WorldFile {
    pub fn into_world(self) -> Result<World> {
        let primitives = self
            .obstacles
            .iter()
            .map(|o| match *o {
                ObstacleSpec::Disc { cx, cy, r } => Primitive::disc(Point::new(cx, cy), r),
            })
            .collect();
        Ok(World {
            bounds: self.bounds,
            obstacles: Region::new(primitives)?,
            start: Configuration::new(self.start.x, self.start.y, self.start.psi),
            goal: Configuration::new(self.goal.x, self.goal.y, self.goal.psi),
        })
    }

    pub fn from_world(world: &World) -> Result<Self> {
        let obstacles = world
            .obstacles
            .primitives()
            .iter()
            .map(|p| match *p {
                Primitive::Disc { center, radius } => {
                    Ok(ObstacleSpec::Disc { cx: center.x, cy: center.y, r: radius })
                }
                other => Err(Error::InvalidConfig(format!(
                    "world files only hold discs, found {other:?}"
                ))),
            })
            .collect::<Result<_>>()?;
        let pose = |c: &Configuration| PoseSpec { x: c.x, y: c.y, psi: c.psi };
        Ok(Self { bounds: world.bounds, obstacles, start: pose(&world.start), goal: pose(&world.goal) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub beam_count: usize,
    /// Field of view in radians, symmetric about the heading.
    pub fov: f64,
    pub max_range: f64,
    pub min_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { beam_count: 720, fov: 1.5 * PI, max_range: 1.0, min_range: 0.0 }
    }
}

impl SensorConfig {
    /// Beam angle relative to the heading. Offsets are exactly antisymmetric:
    /// `beam_offset(i) == -beam_offset(n - 1 - i)`.
    pub fn beam_offset(&self, i: usize) -> f64 {
        let step = self.fov / (self.beam_count - 1) as f64;
        (i as f64 - (self.beam_count - 1) as f64 / 2.0) * step
    }

    pub fn beam_offsets(&self) -> Vec<f64> {
        (0..self.beam_count).map(|i| self.beam_offset(i)).collect()
    }

    pub fn beam_rays(&self, pose: &Configuration) -> impl Iterator<Item = Ray> + '_ {
        let origin = pose.position();
        let psi = pose.psi;
        (0..self.beam_count).map(move |i| Ray::new(origin, psi + self.beam_offset(i)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_count < 2 || !(self.fov > 0.0) || !(self.max_range > self.min_range) {
            return Err(Error::InvalidConfig(format!("bad sensor config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub ranges: Vec<f64>,
    pub config: SensorConfig,
}

impl Scan {
    /// A scan reading `max_range` on every beam.
    pub fn open(config: SensorConfig) -> Self {
        Self { ranges: vec![config.max_range; config.beam_count], config }
    }

    /// Beam endpoints closer than `max_range`, in the sensor frame.
    pub fn obstacle_points(&self) -> Vec<Point> {
        self.ranges
            .iter()
            .enumerate()
            .filter(|(_, &r)| r < self.config.max_range)
            .map(|(i, &r)| Point::from_angle(self.config.beam_offset(i)) * r)
            .collect()
    }
}

/// Simulated LiDAR reading from `pose`.
pub fn lidar_scan(world: &World, pose: &Configuration, cfg: &SensorConfig) -> Scan {
    let ranges = cfg
        .beam_rays(pose)
        .map(|ray| {
            let hit = world.obstacles.ray_spans(&ray, cfg.max_range).first_hit();
            let wall = world.bounds.exit_distance(ray.origin, ray.angle);
            hit.unwrap_or(f64::INFINITY).min(wall).min(cfg.max_range).max(cfg.min_range)
        })
        .collect();
    Scan { ranges, config: *cfg }
}

/// Whether a robot disc of radius `r` at `pose` overlaps an obstacle interior
/// or pokes through the bounds. Tangency does not count.
pub fn in_collision(world: &World, pose: &Configuration, r: f64) -> bool {
    let p = pose.position();
    world.bounds.wall_clearance(p) < r
        || world.obstacles.primitives().iter().any(|prim| prim.penetrated_by_disc(p, r))
}
