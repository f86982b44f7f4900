//! Grid A* global planning and path geometry.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::{segment_distance, Configuration, Point};
use crate::sim::{in_collision, World};

pub const DEFAULT_RESOLUTION: f64 = 0.05;

/// A polyline from start to goal with arc-length bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPath {
    waypoints: Vec<Point>,
    cumulative: Vec<f64>,
    pub resolution: f64,
}

/// Nearest point on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length from the path start.
    pub s: f64,
    pub point: Point,
    pub distance: f64,
}

impl GlobalPath {
    pub fn new(waypoints: Vec<Point>, resolution: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidConfig("path without waypoints".into()));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in waypoints.windows(2) {
            acc += w[0].dist(w[1]);
            cumulative.push(acc);
        }
        Ok(Self { waypoints, cumulative, resolution })
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn goal(&self) -> Point {
        *self.waypoints.last().expect("non-empty")
    }

    pub fn project(&self, p: Point) -> Projection {
        if self.waypoints.len() == 1 {
            let point = self.waypoints[0];
            return Projection { s: 0.0, point, distance: p.dist(point) };
        }
        let mut best = Projection { s: 0.0, point: self.waypoints[0], distance: f64::INFINITY };
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let d = w[1] - w[0];
            let len_sq = d.norm_sq();
            let t = if len_sq > 0.0 { ((p - w[0]).dot(d) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
            let q = w[0] + d * t;
            let dist = p.dist(q);
            if dist < best.distance {
                best = Projection { s: self.cumulative[i] + t * len_sq.sqrt(), point: q, distance: dist };
            }
        }
        best
    }

    fn segment_at(&self, s: f64) -> usize {
        let n = self.waypoints.len();
        if n < 2 {
            return 0;
        }
        self.cumulative.partition_point(|&c| c <= s).clamp(1, n - 1) - 1
    }

    /// Point at arc length `s`, clamped to the path ends.
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        if self.waypoints.len() < 2 {
            return self.waypoints[0];
        }
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let len = self.cumulative[i + 1] - self.cumulative[i];
        if len <= 0.0 {
            return a;
        }
        a + (b - a) * ((s - self.cumulative[i]) / len)
    }

    /// Direction of travel at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> f64 {
        let n = self.waypoints.len();
        if n < 2 {
            return 0.0;
        }
        let mut i = self.segment_at(s.clamp(0.0, self.length()));
        // Skip zero-length segments.
        while i + 1 < n - 1 && self.waypoints[i].dist(self.waypoints[i + 1]) == 0.0 {
            i += 1;
        }
        let d = self.waypoints[i + 1] - self.waypoints[i];
        d.y.atan2(d.x)
    }

    /// Polyline from arc length `s0` to `s1`, including interior waypoints.
    pub fn slice(&self, s0: f64, s1: f64) -> Vec<Point> {
        let (s0, s1) = (s0.clamp(0.0, self.length()), s1.clamp(0.0, self.length()));
        let mut out = vec![self.point_at(s0)];
        for (w, &c) in self.waypoints.iter().zip(&self.cumulative) {
            if c > s0 && c < s1 {
                out.push(*w);
            }
        }
        if s1 > s0 {
            out.push(self.point_at(s1));
        }
        out
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        self.project(p).distance
    }
}

/// Walks `lookahead` metres along the path from the projection of `pose`,
/// stopping at the goal. The heading is the path tangent there.
pub fn local_goal(path: &GlobalPath, pose: &Configuration, lookahead: f64) -> Configuration {
    let proj = path.project(pose.position());
    let s = (proj.s + lookahead).min(path.length());
    let p = path.point_at(s);
    Configuration::new(p.x, p.y, path.tangent_at(s))
}

/// Occupancy grid of footprint-dilated obstacles.
struct Grid {
    origin: Point,
    res: f64,
    nx: usize,
    ny: usize,
    blocked: Vec<bool>,
}

impl Grid {
    fn build(world: &World, res: f64, r: f64) -> Result<Self> {
        let b = &world.bounds;
        if ![b.xmin, b.xmax, b.ymin, b.ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("global planning needs finite bounds".into()));
        }
        let nx = ((b.xmax - b.xmin) / res).ceil() as usize;
        let ny = ((b.ymax - b.ymin) / res).ceil() as usize;
        let origin = Point::new(b.xmin, b.ymin);
        let mut grid = Self { origin, res, nx, ny, blocked: vec![false; nx * ny] };
        for iy in 0..ny {
            for ix in 0..nx {
                let c = grid.center(ix, iy);
                grid.blocked[iy * nx + ix] = in_collision(world, &Configuration::new(c.x, c.y, 0.0), r);
            }
        }
        Ok(grid)
    }

    fn center(&self, ix: usize, iy: usize) -> Point {
        self.origin + Point::new((ix as f64 + 0.5) * self.res, (iy as f64 + 0.5) * self.res)
    }

    fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.res).floor();
        let fy = ((p.y - self.origin.y) / self.res).floor();
        (fx >= 0.0 && fy >= 0.0 && (fx as usize) < self.nx && (fy as usize) < self.ny)
            .then_some((fx as usize, fy as usize))
    }

    fn free(&self, ix: isize, iy: isize) -> bool {
        ix >= 0
            && iy >= 0
            && (ix as usize) < self.nx
            && (iy as usize) < self.ny
            && !self.blocked[iy as usize * self.nx + ix as usize]
    }

    /// The free cell nearest to `p` within two cells, if any.
    fn free_cell_near(&self, p: Point) -> Option<(usize, usize)> {
        let (cx, cy) = self.cell_of(p)?;
        let mut best: Option<((usize, usize), f64)> = None;
        for dy in -2isize..=2 {
            for dx in -2isize..=2 {
                let (ix, iy) = (cx as isize + dx, cy as isize + dy);
                if !self.free(ix, iy) {
                    continue;
                }
                let d = self.center(ix as usize, iy as usize).dist(p);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some(((ix as usize, iy as usize), d));
                }
            }
        }
        best.map(|(c, _)| c)
    }
}

#[derive(Debug, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, ties toward larger g, then lower index for determinism.
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(dx: f64, dy: f64) -> f64 {
    let (dx, dy) = (dx.abs(), dy.abs());
    dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
}

fn astar(grid: &Grid, start: (usize, usize), goal: (usize, usize)) -> Option<Vec<(usize, usize)>> {
    let nx = grid.nx;
    let idx = |(x, y): (usize, usize)| y * nx + x;
    let h = |i: usize| octile((i % nx) as f64 - goal.0 as f64, (i / nx) as f64 - goal.1 as f64) * grid.res;
    let mut g = vec![f64::INFINITY; grid.blocked.len()];
    let mut parent = vec![usize::MAX; grid.blocked.len()];
    let mut closed = vec![false; grid.blocked.len()];
    let (s, t) = (idx(start), idx(goal));
    g[s] = 0.0;
    let mut open = BinaryHeap::new();
    open.push(Open { f: h(s), g: 0.0, idx: s });
    while let Some(Open { idx: i, .. }) = open.pop() {
        if closed[i] {
            continue;
        }
        if i == t {
            let mut cells = vec![(i % nx, i / nx)];
            let mut c = i;
            while c != s {
                c = parent[c];
                cells.push((c % nx, c / nx));
            }
            cells.reverse();
            return Some(cells);
        }
        closed[i] = true;
        let (x, y) = ((i % nx) as isize, (i / nx) as isize);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if (dx, dy) == (0, 0) || !grid.free(x + dx, y + dy) {
                    continue;
                }
                // No corner cutting past blocked cells.
                if dx != 0 && dy != 0 && !(grid.free(x + dx, y) && grid.free(x, y + dy)) {
                    continue;
                }
                let j = (y + dy) as usize * nx + (x + dx) as usize;
                let step = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 } * grid.res;
                let cand = g[i] + step;
                if cand < g[j] {
                    g[j] = cand;
                    parent[j] = i;
                    open.push(Open { f: cand + h(j), g: cand, idx: j });
                }
            }
        }
    }
    None
}

/// Whether a footprint of radius `r` sliding from `a` to `b` stays collision-free,
/// checked at quarter-resolution spacing.
pub fn segment_free(world: &World, a: Point, b: Point, r: f64, res: f64) -> bool {
    let n = ((a.dist(b) / (res / 4.0)).ceil() as usize).max(1);
    (0..=n).all(|k| {
        let p = a + (b - a) * (k as f64 / n as f64);
        !in_collision(world, &Configuration::new(p.x, p.y, 0.0), r)
    })
}

fn shortcut(world: &World, pts: &[Point], r: f64, res: f64) -> Vec<Point> {
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let j = (i + 2..pts.len()).rev().find(|&j| segment_free(world, pts[i], pts[j], r, res)).unwrap_or(i + 1);
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Inserts points so consecutive waypoints are at most `spacing` apart.
fn densify(pts: &[Point], spacing: f64) -> Vec<Point> {
    let mut out = vec![pts[0]];
    for w in pts.windows(2) {
        let n = ((w[0].dist(w[1]) / spacing).ceil() as usize).max(1);
        for k in 1..=n {
            out.push(w[0] + (w[1] - w[0]) * (k as f64 / n as f64));
        }
    }
    out
}

/// Plans from `start` to the world goal on a grid of footprint-dilated obstacles.
pub fn plan_global_from(world: &World, start: Point, resolution: f64, r: f64) -> Result<GlobalPath> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidConfig(format!("resolution {resolution}")));
    }
    let grid = Grid::build(world, resolution, r)?;
    let goal = world.goal.position();
    let s = grid.free_cell_near(start).ok_or(Error::NoPath)?;
    let t = grid.free_cell_near(goal).ok_or(Error::NoPath)?;
    let cells = astar(&grid, s, t).ok_or(Error::NoPath)?;

    let mut raw = Vec::with_capacity(cells.len() + 2);
    raw.push(start);
    raw.extend(cells.iter().map(|&(x, y)| grid.center(x, y)));
    raw.push(goal);
    let mut pts = shortcut(world, &raw, r, resolution);
    loop {
        let next = shortcut(world, &pts, r, resolution);
        if next.len() == pts.len() {
            break;
        }
        pts = next;
    }
    GlobalPath::new(densify(&pts, resolution), resolution)
}

pub fn plan_global(world: &World, resolution: f64, r: f64) -> Result<GlobalPath> {
    plan_global_from(world, world.start.position(), resolution, r)
}

/// Smallest distance from the robot footprint along the path to any obstacle.
pub fn path_clearance(world: &World, path: &GlobalPath) -> f64 {
    path.waypoints()
        .iter()
        .map(|&p| {
            let wall = world.bounds.wall_clearance(p);
            world.obstacles.distance(p).min(wall)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Distance from `p` to the polyline; a helper for scoring against local path pieces.
pub fn polyline_distance(pts: &[Point], p: Point) -> f64 {
    match pts {
        [] => f64::INFINITY,
        [a] => p.dist(*a),
        _ => pts.windows(2).map(|w| segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min),
    }
}
