//! Exact planar geometry: points, poses, analytic obstacle regions and ray casting.
//!
//! Regions are unions of three convex primitives (discs, stadiums and circular
//! segments). Every primitive intersects a line in a single closed interval, so
//! casting a ray against a region reduces to merging per-primitive intervals.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chord endpoints closer than this are treated as coincident.
pub const CHORD_EPS: f64 = 1e-9;
/// Triangles with a smaller area are collinear for circle fitting.
pub const COLLINEAR_AREA_EPS: f64 = 1e-9;
/// Tolerance for chord endpoints lying on their circle.
pub const ON_CIRCLE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Mirror image across the x-axis.
    pub fn mirror_x(self) -> Self {
        Self::new(self.x, -self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(TAU) - PI;
    if wrapped <= -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

/// Planar robot pose. The heading is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Configuration {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi: wrap_angle(psi) }
    }

    pub fn at(p: Point, psi: f64) -> Self {
        Self::new(p.x, p.y, psi)
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point {
        Point::from_angle(self.psi)
    }

    /// Expresses a world point in this pose's frame.
    pub fn to_local(&self, p: Point) -> Point {
        let d = p - self.position();
        let (s, c) = self.psi.sin_cos();
        Point::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    /// Maps a point in this pose's frame back into the world.
    pub fn to_world(&self, p: Point) -> Point {
        let (s, c) = self.psi.sin_cos();
        Point::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    pub fn mirror_x(&self) -> Self {
        Self::new(self.x, -self.y, -self.psi)
    }
}

/// Mirror image of `c_m` across the line through `c_c` and `c_g`.
pub fn reflect_across_chord(
    c_c: &Configuration,
    c_g: &Configuration,
    c_m: &Configuration,
) -> Result<Point> {
    let a = c_c.position();
    let d = c_g.position() - a;
    let len_sq = d.norm_sq();
    if len_sq.sqrt() <= CHORD_EPS {
        return Err(Error::DegenerateChord(len_sq.sqrt()));
    }
    let m = c_m.position();
    let foot = a + d * ((m - a).dot(d) / len_sq);
    Ok(foot * 2.0 - m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

/// Circumscribed circle of a triangle, or `None` when the points are collinear
/// (triangle area below [`COLLINEAR_AREA_EPS`]).
pub fn circle_through_three_points(a: Point, b: Point, c: Point) -> Option<Circle> {
    let ab = b - a;
    let ac = c - a;
    let cross = ab.cross(ac);
    if 0.5 * cross.abs() < COLLINEAR_AREA_EPS {
        return None;
    }
    let d = 2.0 * cross;
    let (ab2, ac2) = (ab.norm_sq(), ac.norm_sq());
    let u = Point::new((ac.y * ab2 - ab.y * ac2) / d, (ab.x * ac2 - ac.x * ab2) / d);
    Some(Circle { center: a + u, radius: u.norm() })
}

/// Which side of a directed chord a circular segment occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChordSide {
    Left,
    Right,
}

impl ChordSide {
    pub fn of(a: Point, b: Point, p: Point) -> Self {
        if (b - a).cross(p - a) >= 0.0 {
            ChordSide::Left
        } else {
            ChordSide::Right
        }
    }

    fn sign(self) -> f64 {
        match self {
            ChordSide::Left => 1.0,
            ChordSide::Right => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ChordSide::Left => ChordSide::Right,
            ChordSide::Right => ChordSide::Left,
        }
    }
}

/// A closed convex obstacle primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Disc { center: Point, radius: f64 },
    /// All points within `radius` of the segment `a`-`b`.
    Stadium { a: Point, b: Point, radius: f64 },
    /// The part of a disc on one side of a chord whose endpoints lie on the circle.
    CircularSegment { center: Point, radius: f64, chord: (Point, Point), side: ChordSide },
}

/// Closed interval of a line parameter.
type Span = (f64, f64);

fn intersect(a: Span, b: Span) -> Option<Span> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo <= hi).then_some((lo, hi))
}

/// Parameters where `p0 + t*q` lies in `[lo, hi]`.
fn slab(p0: f64, q: f64, lo: f64, hi: f64) -> Option<Span> {
    if q.abs() < 1e-300 {
        return (p0 >= lo && p0 <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let t1 = (lo - p0) / q;
    let t2 = (hi - p0) / q;
    Some(if t1 <= t2 { (t1, t2) } else { (t2, t1) })
}

fn disc_span(origin: Point, dir: Point, center: Point, radius: f64) -> Option<Span> {
    let f = origin - center;
    let b = f.dot(dir);
    let c = f.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

/// Distance from `p` to the segment `a`-`b`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

impl Primitive {
    pub fn disc(center: Point, radius: f64) -> Self {
        Primitive::Disc { center, radius }
    }

    pub fn stadium(a: Point, b: Point, radius: f64) -> Self {
        Primitive::Stadium { a, b, radius }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPrimitive(msg));
        match *self {
            Primitive::Disc { center, radius } => {
                if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
                    return bad(format!("disc radius {radius} at {center:?}"));
                }
            }
            Primitive::Stadium { a, b, radius } => {
                if !(radius > 0.0 && radius.is_finite()) || !a.is_finite() || !b.is_finite() {
                    return bad(format!("stadium radius {radius}"));
                }
            }
            Primitive::CircularSegment { center, radius, chord, .. } => {
                if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
                    return bad(format!("segment radius {radius}"));
                }
                for end in [chord.0, chord.1] {
                    let off = (end.dist(center) - radius).abs();
                    if off > ON_CIRCLE_EPS * radius.max(1.0) {
                        return bad(format!("chord endpoint {end:?} is {off:e} m off its circle"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed membership test.
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Primitive::Disc { center, radius } => p.dist(center) <= radius,
            Primitive::Stadium { a, b, radius } => segment_distance(p, a, b) <= radius,
            Primitive::CircularSegment { center, radius, chord, side } => {
                p.dist(center) <= radius
                    && side.sign() * (chord.1 - chord.0).cross(p - chord.0) >= 0.0
            }
        }
    }

    /// Euclidean distance from `p` to the primitive (zero inside).
    pub fn distance(&self, p: Point) -> f64 {
        match *self {
            Primitive::Disc { center, radius } => (p.dist(center) - radius).max(0.0),
            Primitive::Stadium { a, b, radius } => (segment_distance(p, a, b) - radius).max(0.0),
            Primitive::CircularSegment { center, radius, chord, side } => {
                if self.contains(p) {
                    return 0.0;
                }
                let to_chord = segment_distance(p, chord.0, chord.1);
                let r = p - center;
                let rn = r.norm();
                let to_arc = if rn > 0.0 {
                    let on_circle = center + r * (radius / rn);
                    if side.sign() * (chord.1 - chord.0).cross(on_circle - chord.0) >= 0.0 {
                        (rn - radius).abs()
                    } else {
                        p.dist(chord.0).min(p.dist(chord.1))
                    }
                } else {
                    radius
                };
                to_chord.min(to_arc)
            }
        }
    }

    /// True when a disc of radius `r` at `p` overlaps the primitive's interior.
    /// Exact tangency is not an overlap.
    pub fn penetrated_by_disc(&self, p: Point, r: f64) -> bool {
        match *self {
            Primitive::Disc { center, radius } => p.dist(center) < radius + r,
            Primitive::Stadium { a, b, radius } => segment_distance(p, a, b) < radius + r,
            Primitive::CircularSegment { .. } => self.distance(p) < r,
        }
    }

    /// Closed parameter interval where the line `origin + t*dir` (unit `dir`)
    /// lies inside the primitive.
    fn line_span(&self, origin: Point, dir: Point) -> Option<Span> {
        match *self {
            Primitive::Disc { center, radius } => disc_span(origin, dir, center, radius),
            Primitive::Stadium { a, b, radius } => {
                let ab = b - a;
                let len = ab.norm();
                // Quick reject: the line misses the stadium's bounding circle.
                let mid = a + ab * 0.5;
                let reach = 0.5 * len + radius;
                if (mid - origin).cross(dir).abs() > reach {
                    return None;
                }
                let cap_a = disc_span(origin, dir, a, radius);
                if len < 1e-12 {
                    return cap_a;
                }
                let u = ab * (1.0 / len);
                let n = Point::new(-u.y, u.x);
                let rel = origin - a;
                let body = slab(rel.dot(u), dir.dot(u), 0.0, len)
                    .and_then(|s| intersect(s, slab(rel.dot(n), dir.dot(n), -radius, radius)?));
                let cap_b = disc_span(origin, dir, b, radius);
                [cap_a, body, cap_b]
                    .into_iter()
                    .flatten()
                    .reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)))
            }
            Primitive::CircularSegment { center, radius, chord, side } => {
                let disc = disc_span(origin, dir, center, radius)?;
                let u = chord.1 - chord.0;
                let s = side.sign();
                // s * cross(u, origin + t dir - chord.0) >= 0
                let half = slab(
                    s * u.cross(origin - chord.0),
                    s * u.cross(dir),
                    0.0,
                    f64::INFINITY,
                )?;
                intersect(disc, half)
            }
        }
    }

    pub fn mirror_x(&self) -> Self {
        match *self {
            Primitive::Disc { center, radius } => Primitive::Disc { center: center.mirror_x(), radius },
            Primitive::Stadium { a, b, radius } => {
                Primitive::Stadium { a: a.mirror_x(), b: b.mirror_x(), radius }
            }
            Primitive::CircularSegment { center, radius, chord, side } => Primitive::CircularSegment {
                center: center.mirror_x(),
                radius,
                chord: (chord.0.mirror_x(), chord.1.mirror_x()),
                side: side.flipped(),
            },
        }
    }
}

/// A closed planar region: the union of its primitives. The empty list is the
/// empty region.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Region {
    primitives: Vec<Primitive>,
}

impl Region {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        for p in &primitives {
            p.validate()?;
        }
        Ok(Self { primitives })
    }

    pub fn push(&mut self, primitive: Primitive) -> Result<()> {
        primitive.validate()?;
        self.primitives.push(primitive);
        Ok(())
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.primitives.iter().any(|prim| prim.contains(p))
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.primitives.iter().map(|prim| prim.distance(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn mirror_x(&self) -> Self {
        Self { primitives: self.primitives.iter().map(Primitive::mirror_x).collect() }
    }

    /// Disjoint, sorted intervals of `[0, max_range]` covered by the region
    /// along the ray.
    pub fn ray_spans(&self, ray: &Ray, max_range: f64) -> RaySpans {
        let dir = Point::from_angle(ray.angle);
        let mut raw: Vec<Span> = self
            .primitives
            .iter()
            .filter_map(|p| p.line_span(ray.origin, dir))
            .filter_map(|s| intersect(s, (0.0, max_range)))
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut spans: Vec<Span> = Vec::with_capacity(raw.len());
        for s in raw {
            match spans.last_mut() {
                Some(last) if s.0 <= last.1 => last.1 = last.1.max(s.1),
                _ => spans.push(s),
            }
        }
        RaySpans { spans, max_range }
    }
}

/// Half-line starting at `origin` in direction `angle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point,
    pub angle: f64,
}

impl Ray {
    pub fn new(origin: Point, angle: f64) -> Self {
        Self { origin, angle }
    }

    pub fn at(&self, t: f64) -> Point {
        self.origin + Point::from_angle(self.angle) * t
    }
}

/// Covered parts of a ray, clipped to `[0, max_range]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySpans {
    spans: Vec<Span>,
    max_range: f64,
}

impl RaySpans {
    pub fn spans(&self) -> &[(f64, f64)] {
        &self.spans
    }

    /// Where the ray first enters the region. An origin inside the region counts
    /// as a hit at zero.
    pub fn first_hit(&self) -> Option<f64> {
        self.spans.first().map(|s| s.0)
    }

    /// First point where the ray leaves the region within range.
    pub fn first_exit(&self) -> Option<f64> {
        self.spans.iter().map(|s| s.1).find(|&t| t < self.max_range)
    }

    /// Last point where the ray leaves the region within range.
    pub fn last_exit(&self) -> Option<f64> {
        self.spans.iter().rev().map(|s| s.1).find(|&t| t < self.max_range)
    }

    /// Whether the ray is still inside the region at `max_range`.
    pub fn covers_max(&self) -> bool {
        self.spans.last().is_some_and(|s| s.1 >= self.max_range)
    }

    /// Distance beyond which the ray never re-enters the region within range.
    pub fn clear_beyond(&self) -> f64 {
        if self.covers_max() {
            self.max_range
        } else {
            self.last_exit().unwrap_or(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayDistances {
    pub first_hit: Option<f64>,
    pub last_exit: Option<f64>,
}

/// Entry and exit distances of a ray against a region within `max_range`.
pub fn ray_region_distances(ray: &Ray, region: &Region, max_range: f64) -> RayDistances {
    let spans = region.ray_spans(ray, max_range);
    RayDistances { first_hit: spans.first_hit(), last_exit: spans.last_exit() }
}

/// The area swept by a disc of radius `r` moving along the trajectory.
pub fn swept_corridor(trajectory: &[Configuration], r: f64) -> Result<Region> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut points: Vec<Point> = Vec::with_capacity(trajectory.len());
    for c in trajectory {
        let p = c.position();
        if points.last() != Some(&p) {
            points.push(p);
        }
    }
    let primitives = if points.len() == 1 {
        vec![Primitive::disc(points[0], r)]
    } else {
        points.windows(2).map(|w| Primitive::stadium(w[0], w[1], r)).collect()
    };
    Region::new(primitives)
}

/// A constant-velocity unicycle arc subtending at most a quarter turn,
/// prepared for repeated point-distance queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcPiece {
    origin: Point,
    end: Point,
    shape: ArcShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ArcShape {
    Point,
    Line,
    Circle { center: Point, rho: f64, sgn: f64, s: Point, e: Point },
}

impl ArcPiece {
    pub fn new(start: &Configuration, v: f64, omega: f64, duration: f64) -> Self {
        let origin = start.position();
        let sweep = omega * duration;
        debug_assert!(sweep.abs() <= PI / 2.0 + 1e-12, "arc piece sweep {sweep}");
        if v.abs() * duration < 1e-12 {
            return Self { origin, end: origin, shape: ArcShape::Point };
        }
        if sweep.abs() < 1e-9 {
            let end = origin + start.heading() * (v * duration);
            return Self { origin, end, shape: ArcShape::Line };
        }
        let rho = v / omega;
        let center = origin + Point::new(-start.psi.sin(), start.psi.cos()) * rho;
        let end = advance_pose(start, v, omega, duration).position();
        let shape = ArcShape::Circle {
            center,
            rho: rho.abs(),
            sgn: sweep.signum(),
            s: origin - center,
            e: end - center,
        };
        Self { origin, end, shape }
    }

    pub fn end(&self) -> Point {
        self.end
    }

    pub fn distance(&self, p: Point) -> f64 {
        match self.shape {
            ArcShape::Point => p.dist(self.origin),
            ArcShape::Line => segment_distance(p, self.origin, self.end),
            ArcShape::Circle { center, rho, sgn, s, e } => {
                let q = p - center;
                if sgn * s.cross(q) >= 0.0 && sgn * q.cross(e) >= 0.0 {
                    (q.norm() - rho).abs()
                } else {
                    p.dist(self.origin).min(p.dist(self.end))
                }
            }
        }
    }
}

/// Splits a constant-velocity arc into pieces of at most a quarter turn.
pub fn arc_pieces(start: &Configuration, v: f64, omega: f64, duration: f64) -> Vec<ArcPiece> {
    let sweep = (omega * duration).abs();
    let pieces = if sweep > PI / 2.0 { (sweep / (PI / 2.0)).ceil() as usize } else { 1 };
    let dt = duration / pieces as f64;
    let mut pose = *start;
    let mut out = Vec::with_capacity(pieces);
    for _ in 0..pieces {
        out.push(ArcPiece::new(&pose, v, omega, dt));
        pose = advance_pose(&pose, v, omega, dt);
    }
    out
}

/// Minimum distance from `p` to the arc traced by a unicycle starting at
/// `start` with constant `(v, omega)` for `duration` seconds.
pub fn arc_point_distance(start: &Configuration, v: f64, omega: f64, duration: f64, p: Point) -> f64 {
    arc_pieces(start, v, omega, duration)
        .iter()
        .map(|a| a.distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Closed-form pose after moving with constant `(v, omega)` for `dt` seconds.
pub fn advance_pose(pose: &Configuration, v: f64, omega: f64, dt: f64) -> Configuration {
    let psi = pose.psi;
    if omega.abs() < 1e-9 {
        return Configuration::new(
            pose.x + v * dt * psi.cos(),
            pose.y + v * dt * psi.sin(),
            psi + omega * dt,
        );
    }
    let next = psi + omega * dt;
    let rho = v / omega;
    Configuration::new(
        pose.x + rho * (next.sin() - psi.sin()),
        pose.y - rho * (next.cos() - psi.cos()),
        next,
    )
}
