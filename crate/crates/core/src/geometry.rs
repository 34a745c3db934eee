//! Planar primitives and exact shape tests. All tests are boundary-inclusive:
//! touching counts as intersecting.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    // The branches for |a| < 3π make wrap(-a) == -wrap(a) exactly, which
    // keeps the planning metric bit-symmetric.
    let mut r = if (-PI..PI).contains(&a) {
        a
    } else if (PI..3.0 * PI).contains(&a) {
        a - two_pi
    } else if (-3.0 * PI..-PI).contains(&a) {
        a + two_pi
    } else {
        a - two_pi * ((a + PI) / two_pi).floor()
    };
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn of_points(pts: impl IntoIterator<Item = Vec2>) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    /// Strict interior test.
    pub fn contains_strictly(&self, p: Vec2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    aabb: Aabb,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ShapeError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex and counter-clockwise at vertex {0}")]
    NotConvexCcw(usize),
    #[error("circle radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, ShapeError> {
        let n = vertices.len();
        if n < 3 {
            return Err(ShapeError::TooFewVertices(n));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(ShapeError::NonFinite);
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) <= 0.0 {
                return Err(ShapeError::NotConvexCcw((i + 1) % n));
            }
        }
        // Turning left at every vertex still admits self-winding stars; the
        // total turning must be exactly one revolution.
        let winding: f64 = (0..n)
            .map(|i| {
                let a = vertices[(i + 1) % n] - vertices[i];
                let b = vertices[(i + 2) % n] - vertices[(i + 1) % n];
                a.cross(b).atan2(a.dot(b))
            })
            .sum();
        if (winding - 2.0 * PI).abs() > 1e-6 {
            return Err(ShapeError::NotConvexCcw(0));
        }
        let aabb = Aabb::of_points(vertices.iter().copied());
        Ok(Self { vertices, aabb })
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(min: Vec2, max: Vec2) -> Result<Self, ShapeError> {
        Self::new(vec![min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn aabb(&self) -> &Aabb {
        &self.aabb
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        if !(p.x >= self.aabb.min.x && p.x <= self.aabb.max.x && p.y >= self.aabb.min.y && p.y <= self.aabb.max.y) {
            return false;
        }
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= 0.0)
    }

    /// Separating-axis test between the polygon and the closed segment `p`–`q`.
    pub fn intersects_segment(&self, p: Vec2, q: Vec2) -> bool {
        if !self.aabb.overlaps(&Aabb::of_points([p, q])) {
            return false;
        }
        let separated_on = |axis: Vec2| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in &self.vertices {
                let d = axis.dot(*v);
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let (dp, dq) = (axis.dot(p), axis.dot(q));
            dp.max(dq) < lo || dp.min(dq) > hi
        };
        if self.edges().any(|(a, b)| {
            let e = b - a;
            separated_on(Vec2::new(e.y, -e.x))
        }) {
            return false;
        }
        let d = q - p;
        if d.norm_sq() > 0.0 && separated_on(Vec2::new(-d.y, d.x)) {
            return false;
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vec2, radius: f64) -> Result<Self, ShapeError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ShapeError::BadRadius(radius));
        }
        if !center.x.is_finite() || !center.y.is_finite() {
            return Err(ShapeError::NonFinite);
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (p - self.center).norm_sq() <= self.radius * self.radius
    }

    pub fn intersects_segment(&self, p: Vec2, q: Vec2) -> bool {
        segment_point_dist_sq(p, q, self.center) <= self.radius * self.radius
    }

    pub fn aabb(&self) -> Aabb {
        let r = Vec2::new(self.radius, self.radius);
        Aabb {
            min: self.center - r,
            max: self.center + r,
        }
    }
}

/// Squared distance from `c` to the closed segment `p`–`q`.
pub fn segment_point_dist_sq(p: Vec2, q: Vec2, c: Vec2) -> f64 {
    let d = q - p;
    let len_sq = d.norm_sq();
    let t = if len_sq > 0.0 {
        ((c - p).dot(d) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p + d * t - c).norm_sq()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ConvexPolygon {
        ConvexPolygon::rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).unwrap()
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(-6.0) - (2.0 * PI - 6.0)).abs() < 1e-15);
        assert!((wrap_angle(7.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        for k in -50..50 {
            let w = wrap_angle(k as f64 * 0.37);
            assert!((-PI..PI).contains(&w));
        }
    }

    #[test]
    fn polygon_validation() {
        assert_eq!(
            ConvexPolygon::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)]).unwrap_err(),
            ShapeError::TooFewVertices(2)
        );
        // clockwise
        assert!(ConvexPolygon::new(vec![Vec2::ZERO, Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)]).is_err());
        // collinear
        assert!(ConvexPolygon::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]).is_err());
        // pentagram winds twice
        let star: Vec<Vec2> = (0..5)
            .map(|i| {
                let a = i as f64 * 4.0 * PI / 5.0;
                Vec2::new(a.cos(), a.sin())
            })
            .collect();
        assert!(ConvexPolygon::new(star).is_err());
        assert!(Circle::new(Vec2::ZERO, 0.0).is_err());
    }

    #[test]
    fn point_containment_is_inclusive() {
        let s = square();
        assert!(s.contains(Vec2::new(0.5, 0.5)));
        assert!(s.contains(Vec2::new(1.0, 0.5)));
        assert!(s.contains(Vec2::new(0.0, 0.0)));
        assert!(!s.contains(Vec2::new(1.0 + 1e-12, 0.5)));
        let c = Circle::new(Vec2::ZERO, 1.0).unwrap();
        assert!(c.contains(Vec2::new(1.0, 0.0)));
        assert!(!c.contains(Vec2::new(0.8, 0.8)));
    }

    #[test]
    fn segment_tests() {
        let s = square();
        // crosses without endpoints inside
        assert!(s.intersects_segment(Vec2::new(-1.0, 0.5), Vec2::new(2.0, 0.5)));
        // passes beside
        assert!(!s.intersects_segment(Vec2::new(-1.0, 1.5), Vec2::new(2.0, 1.5)));
        // diagonal missing the corner
        assert!(!s.intersects_segment(Vec2::new(1.2, 2.0), Vec2::new(2.0, 1.2)));
        // touching a corner
        assert!(s.intersects_segment(Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)));
        // degenerate segment
        assert!(s.intersects_segment(Vec2::new(0.5, 0.5), Vec2::new(0.5, 0.5)));
        let c = Circle::new(Vec2::ZERO, 1.0).unwrap();
        assert!(c.intersects_segment(Vec2::new(-2.0, 0.5), Vec2::new(2.0, 0.5)));
        assert!(!c.intersects_segment(Vec2::new(-2.0, 1.5), Vec2::new(2.0, 1.5)));
        assert!(c.intersects_segment(Vec2::new(-2.0, 1.0), Vec2::new(2.0, 1.0)));
    }
}
