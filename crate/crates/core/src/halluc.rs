//! Obstacle hallucination for plans recorded in free space.
//!
//! Each raw trajectory window is turned into synthetic LiDAR scans of worlds in
//! which the recorded plan would have been optimal:
//!
//! * the *most constrained* world, where everything outside the robot's swept
//!   corridor is obstacle, so the recorded plan is the only feasible one;
//! * a *minimal* world, a circular segment mirrored across the start-goal chord
//!   that blocks the straight shortcut, augmented by random ranges drawn between
//!   the corridor boundary and that segment (or the sensor limit).

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::RawRecord;
use crate::error::{Error, Result};
use crate::geom::{
    circle_through_three_points, reflect_across_chord, segment_distance, swept_corridor, wrap_angle,
    ChordSide, Configuration, Point, Primitive, Region, CHORD_EPS,
};
use crate::sim::{Command, Scan, SensorConfig, FOOTPRINT_RADIUS};

pub const TRAIN_SCHEMA: &str = "hallunav.train/1";

/// Lateral offset of the midpoint below which a plan counts as straight.
pub const STRAIGHT_PLAN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationParams {
    pub sampling_count: usize,
    pub alpha: f64,
    pub offset_lo_v: f64,
    pub offset_hi_v: f64,
    pub offset_max: f64,
    pub v_empty_threshold: f64,
    pub v_constrained_threshold: f64,
    pub footprint_r: f64,
    pub lookahead: f64,
    /// Total samples emitted per window in minimal mode.
    pub samples_per_window: usize,
}

impl Default for HallucinationParams {
    fn default() -> Self {
        Self {
            sampling_count: 10,
            alpha: 0.48,
            offset_lo_v: 0.3,
            offset_hi_v: 1.0,
            offset_max: 1.0,
            v_empty_threshold: 0.8,
            v_constrained_threshold: 0.3,
            footprint_r: FOOTPRINT_RADIUS,
            lookahead: 1.0,
            samples_per_window: 12,
        }
    }
}

impl HallucinationParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.v_constrained_threshold
            && self.v_constrained_threshold <= self.offset_lo_v
            && self.offset_lo_v <= self.v_empty_threshold
            && self.v_empty_threshold <= self.offset_hi_v
            && (0.0..=1.0).contains(&self.alpha)
            && self.offset_max >= 0.0
            && self.footprint_r > 0.0
            && self.lookahead > 0.0
            && self.sampling_count >= 1
            && self.samples_per_window > self.sampling_count;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("hallucination params {self:?}")))
        }
    }
}

/// A recorded plan segment: from the current configuration to the point one
/// lookahead of arc length ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanWindow {
    pub c_c: Configuration,
    pub c_m: Configuration,
    pub c_g: Configuration,
    pub trajectory: Vec<Configuration>,
    pub label: Command,
    pub v_current: f64,
    pub omega_current: f64,
}

impl PlanWindow {
    /// Goal expressed in the frame of `c_c`.
    pub fn goal_rel(&self) -> Point {
        self.c_c.to_local(self.c_g.position())
    }

    pub fn mirror_x(&self) -> Self {
        Self {
            c_c: self.c_c.mirror_x(),
            c_m: self.c_m.mirror_x(),
            c_g: self.c_g.mirror_x(),
            trajectory: self.trajectory.iter().map(Configuration::mirror_x).collect(),
            label: Command::new(self.label.v, -self.label.omega),
            v_current: self.v_current,
            omega_current: -self.omega_current,
        }
    }
}

fn lerp_pose(a: &Configuration, b: &Configuration, f: f64) -> Configuration {
    let dpsi = wrap_angle(b.psi - a.psi);
    Configuration::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f, a.psi + dpsi * f)
}

/// Pose at arc length `s` along the polyline, given cumulative lengths.
fn pose_at(poses: &[Configuration], cum: &[f64], s: f64) -> (usize, Configuration) {
    let j = cum.partition_point(|&c| c < s).clamp(1, poses.len() - 1);
    let seg = cum[j] - cum[j - 1];
    let f = if seg > 0.0 { ((s - cum[j - 1]) / seg).clamp(0.0, 1.0) } else { 1.0 };
    (j, lerp_pose(&poses[j - 1], &poses[j], f))
}

/// Cuts the raw log into lookahead windows, one per record that still has a
/// full lookahead of path ahead of it.
pub fn extract_windows(d_raw: &[RawRecord], params: &HallucinationParams) -> Vec<PlanWindow> {
    let lookahead = params.lookahead;
    let poses: Vec<Configuration> = d_raw.iter().map(RawRecord::pose).collect();
    let mut cum = Vec::with_capacity(poses.len());
    let mut acc = 0.0;
    for (k, p) in poses.iter().enumerate() {
        if k > 0 {
            acc += p.position().dist(poses[k - 1].position());
        }
        cum.push(acc);
    }
    let mut windows = Vec::new();
    for i in 0..poses.len() {
        // Floating sums of exact steps may land a hair short of the lookahead.
        let goal_s = cum[i] + lookahead;
        if acc < goal_s - 1e-9 {
            break;
        }
        let (j, c_g) = pose_at(&poses, &cum, goal_s.min(acc));
        let (_, c_m) = pose_at(&poses, &cum, cum[i] + 0.5 * lookahead);
        let mut trajectory: Vec<Configuration> = poses[i..j].to_vec();
        trajectory.push(c_g);
        let rec = &d_raw[i];
        windows.push(PlanWindow {
            c_c: poses[i],
            c_m,
            c_g,
            trajectory,
            label: rec.command(),
            v_current: rec.v,
            omega_current: rec.omega,
        });
    }
    windows
}

/// Speed-dependent clearance added to the lower range bound.
pub fn offset_fn(v: f64, params: &HallucinationParams) -> f64 {
    if v <= params.offset_lo_v {
        0.0
    } else if v >= params.offset_hi_v {
        params.offset_max
    } else {
        (v - params.offset_lo_v) / (params.offset_hi_v - params.offset_lo_v) * params.offset_max
    }
}

/// Scan of the most constrained world: every beam stops where it first leaves
/// the swept corridor.
pub fn most_constrained_scan(
    window: &PlanWindow,
    cfg: &SensorConfig,
    params: &HallucinationParams,
) -> Result<Scan> {
    corridor_scan(&window.c_c, &window.trajectory, cfg, params.footprint_r)
}

/// Scan from `pose` of a world whose free space is the corridor around `trajectory`.
pub fn corridor_scan(
    pose: &Configuration,
    trajectory: &[Configuration],
    cfg: &SensorConfig,
    r: f64,
) -> Result<Scan> {
    let corridor = swept_corridor(trajectory, r)?;
    let ranges = cfg
        .beam_rays(pose)
        .map(|ray| {
            let spans = corridor.ray_spans(&ray, cfg.max_range);
            match spans.first_hit() {
                Some(h) if h <= 0.0 => spans.first_exit().unwrap_or(cfg.max_range),
                // Sensor outside the corridor: the obstacle is right here.
                _ => 0.0,
            }
        })
        .collect();
    Ok(Scan { ranges, config: *cfg })
}

/// The circular segment mirrored across the start-goal chord that blocks the
/// shortcut. Empty for straight plans.
pub fn build_minimal_region(window: &PlanWindow) -> Result<Region> {
    let a = window.c_c.position();
    let b = window.c_g.position();
    let chord = b - a;
    let len = chord.norm();
    if len < CHORD_EPS {
        return Err(Error::DegenerateChord(len));
    }
    let lateral = chord.cross(window.c_m.position() - a).abs() / len;
    if lateral < STRAIGHT_PLAN_EPS {
        return Ok(Region::empty());
    }
    let mirrored = reflect_across_chord(&window.c_c, &window.c_g, &window.c_m)?;
    let Some(circle) = circle_through_three_points(a, mirrored, b) else {
        return Ok(Region::empty());
    };
    Region::new(vec![Primitive::CircularSegment {
        center: circle.center,
        radius: circle.radius,
        chord: (a, b),
        side: ChordSide::of(a, b, mirrored),
    }])
}

/// Per-beam lower and upper range bounds for sampled scans of `window`.
pub fn beam_bounds(
    window: &PlanWindow,
    region: &Region,
    cfg: &SensorConfig,
    params: &HallucinationParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let corridor = swept_corridor(&window.trajectory, params.footprint_r)?;
    Ok(beam_bounds_from(&window.c_c, &corridor, region, cfg, offset_fn(window.v_current, params)))
}

/// Bounds for a sensor at `pose`: the lower bound is the point past which the
/// beam never re-enters the corridor (plus `offset`), the upper bound is the
/// first hit on `region` or the sensor limit. Neither bound is ever inside the
/// corridor.
pub fn beam_bounds_from(
    pose: &Configuration,
    corridor: &Region,
    region: &Region,
    cfg: &SensorConfig,
    offset: f64,
) -> (Vec<f64>, Vec<f64>) {
    cfg.beam_rays(pose)
        .map(|ray| {
            let raw_min = corridor.ray_spans(&ray, cfg.max_range).clear_beyond();
            let max = match region.ray_spans(&ray, cfg.max_range).first_hit() {
                Some(hit) => hit.max(raw_min),
                None => cfg.max_range,
            };
            ((raw_min + offset).min(max), max)
        })
        .unzip()
}

/// Draws one scan between per-beam bounds, blending each beam with its
/// predecessor by `alpha`.
pub fn sample_scan<R: Rng>(rng: &mut R, min: &[f64], max: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if min.len() != max.len() {
        return Err(Error::DimensionMismatch { expected: min.len(), actual: max.len() });
    }
    if let Some(beam) = (0..min.len()).find(|&i| !(min[i] <= max[i])) {
        return Err(Error::BoundsViolation { beam, min: min[beam], max: max[beam] });
    }
    let mut out: Vec<f64> = Vec::with_capacity(min.len());
    for i in 0..min.len() {
        let u: f64 = rng.random();
        let fresh = min[i] + (max[i] - min[i]) * u;
        let s = match out.last() {
            None => fresh,
            Some(&prev) => alpha * prev + (1.0 - alpha) * fresh,
        };
        out.push(s.clamp(min[i], max[i]));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    Minimal,
    Empty,
    MostConstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub scan: Vec<f32>,
    pub goal_rel: [f64; 2],
    pub vel_in: [f64; 2],
    pub label: Command,
    pub kind: SampleKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HallucinationMode {
    Minimal,
    MostConstrained,
}

fn make_sample(window: &PlanWindow, ranges: &[f64], kind: SampleKind) -> TrainSample {
    let g = window.goal_rel();
    TrainSample {
        scan: ranges.iter().map(|&r| r as f32).collect(),
        goal_rel: [g.x, g.y],
        vel_in: [window.v_current, window.omega_current],
        label: window.label,
        kind,
    }
}

/// RNG stream for one window; independent of evaluation order.
pub fn window_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// All samples of one window in minimal mode.
pub fn synthesize_window<R: Rng>(
    window: &PlanWindow,
    cfg: &SensorConfig,
    params: &HallucinationParams,
    rng: &mut R,
) -> Result<Vec<TrainSample>> {
    let region = build_minimal_region(window)?;
    let (min, max) = beam_bounds(window, &region, cfg, params)?;
    let mut samples = Vec::with_capacity(params.samples_per_window);
    for _ in 0..params.sampling_count {
        samples.push(make_sample(window, &sample_scan(rng, &min, &max, params.alpha)?, SampleKind::Minimal));
    }
    if window.v_current > params.v_empty_threshold {
        samples.push(make_sample(window, &Scan::open(*cfg).ranges, SampleKind::Empty));
    } else if window.v_current < params.v_constrained_threshold {
        let mc = most_constrained_scan(window, cfg, params)?;
        samples.push(make_sample(window, &mc.ranges, SampleKind::MostConstrained));
    }
    while samples.len() < params.samples_per_window {
        samples.push(make_sample(window, &sample_scan(rng, &min, &max, params.alpha)?, SampleKind::Minimal));
    }
    Ok(samples)
}

/// Builds the minimal-mode training set: a fixed number of samples per window.
pub fn synthesize_dataset(
    d_raw: &[RawRecord],
    cfg: &SensorConfig,
    params: &HallucinationParams,
    seed: u64,
) -> Result<Vec<TrainSample>> {
    params.validate()?;
    if d_raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let windows = extract_windows(d_raw, params);
    let per_window = windows
        .par_iter()
        .enumerate()
        .map(|(k, w)| synthesize_window(w, cfg, params, &mut window_rng(seed, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

/// Builds the most-constrained training set: one deterministic sample per window.
pub fn synthesize_most_constrained(
    d_raw: &[RawRecord],
    cfg: &SensorConfig,
    params: &HallucinationParams,
) -> Result<Vec<TrainSample>> {
    params.validate()?;
    if d_raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    extract_windows(d_raw, params)
        .par_iter()
        .map(|w| {
            let scan = most_constrained_scan(w, cfg, params)?;
            Ok(make_sample(w, &scan.ranges, SampleKind::MostConstrained))
        })
        .collect()
}

/// Number of beam endpoints (ranges below the sensor limit) that fall strictly
/// inside the window's swept corridor, deeper than `tol`.
pub fn corridor_intrusions(
    window: &PlanWindow,
    ranges: &[f32],
    cfg: &SensorConfig,
    r: f64,
    tol: f64,
) -> usize {
    let pts: Vec<Point> = window.trajectory.iter().map(Configuration::position).collect();
    let dist_to_path = |p: Point| {
        if pts.len() == 1 {
            return p.dist(pts[0]);
        }
        pts.windows(2).map(|w| segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
    };
    cfg.beam_rays(&window.c_c)
        .zip(ranges)
        .filter(|(_, &range)| (range as f64) < cfg.max_range)
        .filter(|(ray, &range)| dist_to_path(ray.at(range as f64)) < r - tol)
        .count()
}

pub fn digest_records(d_raw: &[RawRecord]) -> String {
    let mut h = Sha256::new();
    for r in d_raw {
        h.update(serde_json::to_vec(r).expect("records serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHeader {
    pub schema: String,
    pub mode: HallucinationMode,
    pub params: HallucinationParams,
    pub sensor: SensorConfig,
    pub seed: u64,
    pub source_digest: String,
    pub samples: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    scan: Vec<f32>,
    goal: [f64; 2],
    vel: [f64; 2],
    label: [f64; 2],
    kind: SampleKind,
}

pub fn write_train<W: Write>(mut out: W, header: &TrainHeader, samples: &[TrainSample]) -> Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for s in samples {
        let line = SampleLine {
            scan: s.scan.clone(),
            goal: s.goal_rel,
            vel: s.vel_in,
            label: [s.label.v, s.label.omega],
            kind: s.kind,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_train<R: BufRead>(input: R) -> Result<(TrainHeader, Vec<TrainSample>)> {
    let mut lines = input.lines();
    let header: TrainHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Format("missing training dataset header".into())),
    };
    if header.schema != TRAIN_SCHEMA {
        return Err(Error::Format(format!("unsupported schema {}", header.schema)));
    }
    let mut samples = Vec::with_capacity(header.samples);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SampleLine = serde_json::from_str(&line)?;
        if s.scan.len() != header.sensor.beam_count {
            return Err(Error::DimensionMismatch { expected: header.sensor.beam_count, actual: s.scan.len() });
        }
        samples.push(TrainSample {
            scan: s.scan,
            goal_rel: s.goal,
            vel_in: s.vel,
            label: Command::new(s.label[0], s.label[1]),
            kind: s.kind,
        });
    }
    Ok((header, samples))
}
