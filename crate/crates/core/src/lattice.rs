//! Lattice points, Euclidean balls and internal boundaries.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A site of the square lattice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
}

/// Unit steps in the order east, north, west, south.
pub const DIRECTIONS: [LatticePoint; 4] = [
    LatticePoint { x: 1, y: 0 },
    LatticePoint { x: 0, y: 1 },
    LatticePoint { x: -1, y: 0 },
    LatticePoint { x: 0, y: -1 },
];

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x: 0, y: 0 };

    #[inline]
    pub const fn new(x: i64, y: i64) -> Self {
        LatticePoint { x, y }
    }

    #[inline]
    pub fn is_origin(self) -> bool {
        self.x == 0 && self.y == 0
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        let (x, y) = (self.x as f64, self.y as f64);
        x * x + y * y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Exact squared norm; used where ball membership must not depend on rounding.
    #[inline]
    pub fn norm_sq_exact(self) -> i128 {
        let (x, y) = (self.x as i128, self.y as i128);
        x * x + y * y
    }

    #[inline]
    pub fn neighbours(self) -> [LatticePoint; 4] {
        DIRECTIONS.map(|d| self + d)
    }

    #[inline]
    pub fn is_neighbour(self, other: LatticePoint) -> bool {
        (self.x - other.x).abs() + (self.y - other.y).abs() == 1
    }

    #[inline]
    pub fn distance(self, other: LatticePoint) -> f64 {
        (self - other).norm()
    }

    /// Representative in the octant `0 <= y <= x`.
    #[inline]
    pub fn octant(self) -> (u64, u64) {
        let (a, b) = (self.x.unsigned_abs(), self.y.unsigned_abs());
        if a >= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

impl Add for LatticePoint {
    type Output = LatticePoint;
    #[inline]
    fn add(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for LatticePoint {
    type Output = LatticePoint;
    #[inline]
    fn sub(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for LatticePoint {
    type Output = LatticePoint;
    #[inline]
    fn neg(self) -> LatticePoint {
        LatticePoint::new(-self.x, -self.y)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl From<(i64, i64)> for LatticePoint {
    fn from((x, y): (i64, i64)) -> Self {
        LatticePoint::new(x, y)
    }
}

/// Closed Euclidean ball `{p : |p - center| <= radius}` with a real center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: (f64, f64),
    pub radius: f64,
}

impl Ball {
    pub fn new(center: (f64, f64), radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn around(center: LatticePoint, radius: f64) -> Self {
        Ball { center: (center.x as f64, center.y as f64), radius }
    }

    pub fn origin(radius: f64) -> Self {
        Ball { center: (0.0, 0.0), radius }
    }

    #[inline]
    pub fn contains(&self, p: LatticePoint) -> bool {
        let dx = p.x as f64 - self.center.0;
        let dy = p.y as f64 - self.center.1;
        dx * dx + dy * dy <= self.radius * self.radius
    }

    /// Whether `p` is a member with at least one neighbour outside.
    #[inline]
    pub fn on_boundary(&self, p: LatticePoint) -> bool {
        self.contains(p) && p.neighbours().iter().any(|&q| !self.contains(q))
    }

    /// Member columns of row `y`, as an inclusive range, or `None` if the row misses the ball.
    fn row_span(&self, y: i64) -> Option<(i64, i64)> {
        let dy = y as f64 - self.center.1;
        let w2 = self.radius * self.radius - dy * dy;
        if w2 < 0.0 {
            return None;
        }
        let w = w2.sqrt();
        let mut lo = (self.center.0 - w).ceil() as i64;
        let mut hi = (self.center.0 + w).floor() as i64;
        // the float estimate can be off by one at exact boundary hits
        while self.contains(LatticePoint::new(lo - 1, y)) {
            lo -= 1;
        }
        while lo <= hi && !self.contains(LatticePoint::new(lo, y)) {
            lo += 1;
        }
        while self.contains(LatticePoint::new(hi + 1, y)) {
            hi += 1;
        }
        while hi >= lo && !self.contains(LatticePoint::new(hi, y)) {
            hi -= 1;
        }
        (lo <= hi).then_some((lo, hi))
    }

    fn row_range(&self) -> (i64, i64) {
        (
            (self.center.1 - self.radius).floor() as i64 - 1,
            (self.center.1 + self.radius).ceil() as i64 + 1,
        )
    }

    /// All member sites in lexicographic order.
    pub fn sites(&self) -> Vec<LatticePoint> {
        let mut out = Vec::new();
        let (y0, y1) = self.row_range();
        let spans: Vec<_> = (y0..=y1).map(|y| (y, self.row_span(y))).collect();
        for &(y, span) in &spans {
            if let Some((lo, hi)) = span {
                out.extend((lo..=hi).map(|x| LatticePoint::new(x, y)));
            }
        }
        out.sort_unstable();
        out
    }

    /// Number of member sites.
    pub fn count(&self) -> u64 {
        let (y0, y1) = self.row_range();
        (y0..=y1)
            .filter_map(|y| self.row_span(y))
            .map(|(lo, hi)| (hi - lo + 1) as u64)
            .sum()
    }

    /// Internal boundary: members with a neighbour outside, lexicographic order.
    pub fn boundary_sites(&self) -> Vec<LatticePoint> {
        let (y0, y1) = self.row_range();
        let spans: Vec<Option<(i64, i64)>> = (y0 - 1..=y1 + 1).map(|y| self.row_span(y)).collect();
        let mut out = Vec::new();
        for (k, y) in (y0..=y1).enumerate() {
            let Some((lo, hi)) = spans[k + 1] else { continue };
            let below = spans[k];
            let above = spans[k + 2];
            let inside = |span: Option<(i64, i64)>, x: i64| span.is_some_and(|(a, b)| a <= x && x <= b);
            for x in lo..=hi {
                if x == lo || x == hi || !inside(below, x) || !inside(above, x) {
                    out.push(LatticePoint::new(x, y));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Internal boundary of a ball.
pub fn boundary_sites(ball: &Ball) -> Vec<LatticePoint> {
    ball.boundary_sites()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_boundary(ball: &Ball) -> Vec<LatticePoint> {
        let r = ball.radius.ceil() as i64 + 2;
        let (cx, cy) = (ball.center.0.round() as i64, ball.center.1.round() as i64);
        let mut v = Vec::new();
        for x in cx - r..=cx + r {
            for y in cy - r..=cy + r {
                let p = LatticePoint::new(x, y);
                if ball.contains(p) && p.neighbours().iter().any(|q| !ball.contains(*q)) {
                    v.push(p);
                }
            }
        }
        v.sort_unstable();
        v
    }

    #[test]
    fn unit_ball_boundary_is_the_four_neighbours() {
        let b = boundary_sites(&Ball::origin(1.0));
        assert_eq!(b, vec![(-1, 0).into(), (0, -1).into(), (0, 1).into(), (1, 0).into()]);
    }

    #[test]
    fn degenerate_ball_is_its_own_boundary() {
        assert_eq!(boundary_sites(&Ball::origin(0.0)), vec![LatticePoint::ORIGIN]);
    }

    #[test]
    fn boundary_of_radius_100() {
        let ball = Ball::origin(100.0);
        let fast = ball.boundary_sites();
        assert_eq!(fast, brute_boundary(&ball));
        assert_eq!(fast.len(), 564);
    }

    #[test]
    fn row_boundary_matches_brute_force() {
        for &(c, r) in &[((0.0, 0.0), 2.5), ((0.3, -1.7), 7.2), ((5.0, 5.0), 13.0), ((0.0, 0.0), 50.0)] {
            let ball = Ball::new(c, r);
            assert_eq!(ball.boundary_sites(), brute_boundary(&ball), "{c:?} {r}");
        }
    }

    #[test]
    fn neighbours_are_at_unit_distance() {
        let p = LatticePoint::new(-3, 8);
        for q in p.neighbours() {
            assert!(p.is_neighbour(q));
            assert_eq!((q - p).norm(), 1.0);
        }
    }

    #[test]
    fn site_count_matches_enumeration() {
        let ball = Ball::origin(10.0);
        assert_eq!(ball.count() as usize, ball.sites().len());
        assert_eq!(ball.count(), 317);
    }
}
