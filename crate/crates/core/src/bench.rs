//! Procedural corridor worlds, multi-planner suites and their reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Configuration, Point, Primitive, Region};
use crate::learn::Policy;
use crate::nav::{navigate_episode, plan_global, DwaParams, EpisodeResult, NavConfig, PlannerKind};
use crate::sim::{Bounds, World, FOOTPRINT_RADIUS};

pub const MAX_WORLD_ATTEMPTS: u64 = 100;
const MAX_PLACEMENT_TRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldGenParams {
    pub seed: u64,
    pub length: f64,
    pub width: f64,
    /// Discs per square metre of corridor.
    pub density: f64,
    pub radius_range: (f64, f64),
    /// Keep-out radius around start and goal.
    pub clearance: f64,
}

impl WorldGenParams {
    pub fn new(seed: u64) -> Self {
        Self { seed, length: 8.0, width: 3.0, density: 0.4, radius_range: (0.1, 0.2), clearance: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.radius_range;
        let ok = self.density >= 0.0
            && lo > 0.0
            && lo <= hi
            && self.clearance >= 0.0
            && self.width > 2.0 * hi
            && self.length > 2.0 * self.clearance.max(FOOTPRINT_RADIUS);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("world generation params {self:?}")))
        }
    }
}

fn sample_world(p: &WorldGenParams, rng: &mut ChaCha8Rng) -> World {
    let half = p.width / 2.0;
    let start = Configuration::new(p.clearance.max(FOOTPRINT_RADIUS), 0.0, 0.0);
    let goal = Configuration::new(p.length - p.clearance.max(FOOTPRINT_RADIUS), 0.0, 0.0);
    let count = (p.density * p.length * p.width).round() as usize;
    let mut discs = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..MAX_PLACEMENT_TRIES {
            let r = rng.random_range(p.radius_range.0..=p.radius_range.1);
            let c = Point::new(rng.random_range(r..=p.length - r), rng.random_range(-half + r..=half - r));
            let keep_out = p.clearance + r;
            if c.dist(start.position()) >= keep_out && c.dist(goal.position()) >= keep_out {
                discs.push(Primitive::disc(c, r));
                break;
            }
        }
    }
    World {
        bounds: Bounds { xmin: 0.0, ymin: -half, xmax: p.length, ymax: half },
        obstacles: Region::new(discs).expect("discs have positive radii"),
        start,
        goal,
    }
}

/// Scatters discs along a walled corridor, resampling on a fresh stream until
/// the goal is reachable.
pub fn generate_world(params: &WorldGenParams) -> Result<World> {
    params.validate()?;
    for attempt in 0..MAX_WORLD_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(attempt);
        let world = sample_world(params, &mut rng);
        if world.validate(FOOTPRINT_RADIUS).is_ok() && plan_global(&world, 0.05, FOOTPRINT_RADIUS).is_ok() {
            return Ok(world);
        }
    }
    Err(Error::Infeasible { attempts: MAX_WORLD_ATTEMPTS as usize })
}

/// `count` worlds seeded `base.seed`, `base.seed + 1`, ...
pub fn generate_worlds(base: &WorldGenParams, count: usize) -> Result<Vec<World>> {
    (0..count as u64)
        .map(|i| generate_world(&WorldGenParams { seed: base.seed.wrapping_add(i), ..*base }))
        .collect()
}

pub fn world_file_name(index: usize) -> String {
    format!("world_{index:03}.json")
}

/// Loads every `*.json` in `dir`, ordered by file name.
pub fn load_worlds(dir: impl AsRef<Path>) -> Result<Vec<(String, World)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, World::load(&p)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerName {
    Hlsd,
    Lfh,
    Dwa,
}

/// One planner arm as written in an arms file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub name: String,
    pub planner: PlannerName,
    /// Weights file, relative to the arms file.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub speed_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsFile {
    pub arms: Vec<ArmSpec>,
}

#[derive(Debug, Clone)]
pub struct Arm {
    pub name: String,
    pub config: NavConfig,
}

impl Arm {
    pub fn new(name: impl Into<String>, planner: PlannerKind, speed_cap: Option<f64>) -> Self {
        let mut config = NavConfig::new(planner);
        config.speed_cap = speed_cap;
        Self { name: name.into(), config }
    }
}

pub fn load_arms(path: impl AsRef<Path>) -> Result<Vec<Arm>> {
    let path = path.as_ref();
    let file: ArmsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    file.arms
        .into_iter()
        .map(|spec| {
            let policy = || -> Result<Arc<Policy>> {
                let w = spec
                    .weights
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig(format!("arm {} needs weights", spec.name)))?;
                Ok(Arc::new(Policy::load(dir.join(w))?))
            };
            let planner = match spec.planner {
                PlannerName::Hlsd => PlannerKind::Hlsd(policy()?),
                PlannerName::Lfh => PlannerKind::Lfh(policy()?),
                PlannerName::Dwa => PlannerKind::Dwa(DwaParams::default()),
            };
            let arm = Arm::new(spec.name, planner, spec.speed_cap);
            arm.config.validate()?;
            Ok(arm)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResults {
    pub name: String,
    /// One result per world, in world order.
    pub results: Vec<EpisodeResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub world_names: Vec<String>,
    pub arms: Vec<ArmResults>,
}

/// Runs every (arm, world) episode on up to `workers` threads. Episode errors
/// count as failures.
pub fn run_suite(
    worlds: &[(String, World)],
    arms: &[Arm],
    timeout: f64,
    workers: usize,
) -> Result<SuiteReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, usize)> =
        (0..arms.len()).flat_map(|a| (0..worlds.len()).map(move |w| (a, w))).collect();
    let results: Vec<EpisodeResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(a, w)| navigate_episode(&worlds[w].1, &arms[a].config, timeout).unwrap_or_else(|_| EpisodeResult::failure()))
            .collect()
    });
    let arms = arms
        .iter()
        .zip(results.chunks(worlds.len().max(1)))
        .map(|(arm, chunk)| ArmResults { name: arm.name.clone(), results: chunk.to_vec() })
        .collect();
    Ok(SuiteReport { world_names: worlds.iter().map(|(n, _)| n.clone()).collect(), arms })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSummary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean over successful episodes; infinite when none succeeded.
    pub mean_time: f64,
    /// Population standard deviation over successful episodes.
    pub std_time: f64,
    pub collisions: u64,
    pub recoveries: u64,
}

pub fn summarize(results: &[EpisodeResult]) -> ArmSummary {
    let times: Vec<f64> = results.iter().filter(|r| r.success).map(|r| r.time).collect();
    let n = times.len();
    let (mean_time, std_time) = if n == 0 {
        (f64::INFINITY, 0.0)
    } else {
        let mean = times.iter().sum::<f64>() / n as f64;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    ArmSummary {
        episodes: results.len(),
        successes: n,
        success_rate: if results.is_empty() { 0.0 } else { n as f64 / results.len() as f64 },
        mean_time,
        std_time,
        collisions: results.iter().map(|r| r.collisions as u64).sum(),
        recoveries: results.iter().map(|r| r.recovery_invocations as u64).sum(),
    }
}

pub fn format_time(s: &ArmSummary) -> String {
    if s.mean_time.is_finite() {
        format!("{:.1}±{:.1}", s.mean_time, s.std_time)
    } else {
        "inf".to_string()
    }
}

fn format_seconds(t: f64) -> String {
    if t.is_finite() {
        format!("{t}")
    } else {
        "inf".to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub table: String,
    pub csv: String,
}

pub const CSV_HEADER: &str = "arm,world,success,time,collisions,recoveries,path_length";

pub fn aggregate_report(report: &SuiteReport) -> RenderedReport {
    let mut table = String::new();
    let width = report.arms.iter().map(|a| a.name.len()).max().unwrap_or(0).max(3);
    writeln!(
        table,
        "{:<width$}  {:>8}  {:>7}  {:>8}  {:>12}  {:>10}  {:>10}",
        "arm", "episodes", "success", "failures", "time_s", "collisions", "recoveries"
    )
    .unwrap();
    for arm in &report.arms {
        let s = summarize(&arm.results);
        writeln!(
            table,
            "{:<width$}  {:>8}  {:>6.1}%  {:>8}  {:>12}  {:>10}  {:>10}",
            arm.name,
            s.episodes,
            100.0 * s.success_rate,
            s.episodes - s.successes,
            format_time(&s),
            s.collisions,
            s.recoveries
        )
        .unwrap();
    }

    let mut csv = String::new();
    writeln!(csv, "{CSV_HEADER}").unwrap();
    for arm in &report.arms {
        for (i, r) in arm.results.iter().enumerate() {
            let world = report.world_names.get(i).cloned().unwrap_or_else(|| i.to_string());
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                arm.name,
                world,
                r.success,
                format_seconds(r.time),
                r.collisions,
                r.recovery_invocations,
                r.path_length
            )
            .unwrap();
        }
    }
    RenderedReport { table, csv }
}
