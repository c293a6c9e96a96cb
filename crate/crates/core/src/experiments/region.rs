//! Planar regions and the escape-path test for "does not surround the origin".

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;
use crate::walk::Target;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    /// Axis-aligned closed box.
    Box { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Closed disk.
    Disk { cx: f64, cy: f64, r: f64 },
    /// `{r_in <= |u| <= r_out, angle in [t0, t1]}`, angles in radians, `t0 < t1 <= t0 + 2 pi`.
    Sector { r_in: f64, r_out: f64, t0: f64, t1: f64 },
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Box { x0, y0, x1, y1 } => x0 <= x1 && y0 <= y1,
            Shape::Disk { r, .. } => r >= 0.0,
            Shape::Sector { r_in, r_out, t0, t1 } => 0.0 <= r_in && r_in <= r_out && t0 < t1 && t1 - t0 <= 2.0 * PI,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("degenerate shape {self:?}"))
        }
    }

    /// Euclidean distance from `u` to the shape (0 inside).
    pub fn distance(&self, u: (f64, f64)) -> f64 {
        match *self {
            Shape::Box { x0, y0, x1, y1 } => {
                let dx = (x0 - u.0).max(u.0 - x1).max(0.0);
                let dy = (y0 - u.1).max(u.1 - y1).max(0.0);
                dx.hypot(dy)
            }
            Shape::Disk { cx, cy, r } => ((u.0 - cx).hypot(u.1 - cy) - r).max(0.0),
            Shape::Sector { r_in, r_out, t0, t1 } => {
                let rho = u.0.hypot(u.1);
                let ang = u.1.atan2(u.0);
                let within = (0..3).any(|k| {
                    let a = ang + 2.0 * PI * (k as f64 - 1.0);
                    t0 <= a && a <= t1
                });
                if within {
                    (r_in - rho).max(rho - r_out).max(0.0)
                } else {
                    let edge = |t: f64| {
                        let (s, c) = t.sin_cos();
                        segment_distance(u, (r_in * c, r_in * s), (r_out * c, r_out * s))
                    };
                    edge(t0).min(edge(t1))
                }
            }
        }
    }

    /// Largest norm of a point of the shape.
    fn extent(&self) -> f64 {
        match *self {
            Shape::Box { x0, y0, x1, y1 } => [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
                .iter()
                .map(|&(a, b)| a.hypot(b))
                .fold(0.0, f64::max),
            Shape::Disk { cx, cy, r } => cx.hypot(cy) + r,
            Shape::Sector { r_out, .. } => r_out,
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;
    /// `box:x0,y0,x1,y1`, `disk:cx,cy,r` or `sector:r_in,r_out,t0,t1`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| Error::Parse(format!("bad shape '{s}'")))?;
        let v: Vec<f64> = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}' in '{s}'"))))
            .collect::<Result<_>>()?;
        let shape = match (kind, v.len()) {
            ("box", 4) => Shape::Box { x0: v[0], y0: v[1], x1: v[2], y1: v[3] },
            ("disk", 3) => Shape::Disk { cx: v[0], cy: v[1], r: v[2] },
            ("sector", 4) => Shape::Sector { r_in: v[0], r_out: v[1], t0: v[2], t1: v[3] },
            _ => return Err(Error::Parse(format!("bad shape '{s}'"))),
        };
        shape.validate()?;
        Ok(shape)
    }
}

/// A bounded planar region `G` (a union of shapes) with outer radius `c1` and clearance `c3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionG {
    pub shapes: Vec<Shape>,
    pub c1: f64,
    pub c3: f64,
    pub witness_path: Option<Vec<(f64, f64)>>,
}

impl RegionG {
    /// `c1` is taken as the smallest radius whose disk contains every shape.
    pub fn new(shapes: Vec<Shape>, c3: f64) -> Result<Self> {
        if shapes.is_empty() {
            return invalid("region has no shapes");
        }
        if !(c3 > 0.0) {
            return invalid("clearance c3 must be positive");
        }
        for s in &shapes {
            s.validate()?;
        }
        let c1 = shapes.iter().map(Shape::extent).fold(0.0, f64::max);
        if !(c1 > 0.0) {
            return invalid("region must extend beyond the origin");
        }
        Ok(RegionG { shapes, c1, c3, witness_path: None })
    }

    /// Parses `;`-separated shapes.
    pub fn parse(spec: &str, c3: f64) -> Result<Self> {
        let shapes = spec.split(';').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse()).collect::<Result<_>>()?;
        Self::new(shapes, c3)
    }

    pub fn distance(&self, u: (f64, f64)) -> f64 {
        self.shapes.iter().map(|s| s.distance(u)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, u: (f64, f64)) -> bool {
        self.distance(u) == 0.0
    }

    /// The lattice sites of `k G`.
    pub fn scaled(&self, k: f64) -> ScaledRegion<'_> {
        ScaledRegion { region: self, k }
    }
}

/// `k G` as a walk target.
#[derive(Clone, Copy, Debug)]
pub struct ScaledRegion<'a> {
    region: &'a RegionG,
    k: f64,
}

impl Target for ScaledRegion<'_> {
    #[inline]
    fn contains(&self, p: LatticePoint) -> bool {
        self.region.contains((p.x as f64 / self.k, p.y as f64 / self.k))
    }

    #[inline]
    fn distance_lower_bound(&self, p: LatticePoint) -> f64 {
        self.k * self.region.distance((p.x as f64 / self.k, p.y as f64 / self.k))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurroundCheck {
    /// `true` when an escape path was found, i.e. `G` does not surround the origin.
    pub ok: bool,
    pub witness: Option<Vec<(f64, f64)>>,
    /// Bound on `|f1'| + |f2'|` for the witness parametrized proportionally to arc length.
    pub speed_bound: Option<f64>,
}

/// Searches a path from the origin to the circle of radius `c1` keeping distance
/// at least `c3` from `G`, by breadth-first search on a grid of pitch `c3/4`.
pub fn surrounds_origin_check(g: &RegionG) -> Result<SurroundCheck> {
    if !(g.c3 > 0.0) {
        return invalid("clearance c3 must be positive");
    }
    let h = g.c3 / 4.0;
    // nodes keep clearance c3 + h so that the interpolated endpoint keeps c3
    let clear = g.c3 + h;
    let m = ((g.c1 + g.c3) / h).ceil() as i64 + 2;
    let side = (2 * m + 1) as usize;
    if side * side > 50_000_000 {
        return Err(Error::Resource("witness grid too large; increase c3".into()));
    }
    let id = |i: i64, j: i64| ((i + m) as usize) * side + (j + m) as usize;
    let node = |i: i64, j: i64| (i as f64 * h, j as f64 * h);
    let failed = SurroundCheck { ok: false, witness: None, speed_bound: None };
    if g.distance((0.0, 0.0)) < clear {
        return Ok(failed);
    }
    let mut parent = vec![usize::MAX; side * side];
    let mut free = vec![0u8; side * side]; // 0 unknown, 1 free, 2 blocked
    let start = id(0, 0);
    parent[start] = start;
    let mut queue = VecDeque::from([(0i64, 0i64)]);
    let mut exit = None;
    while let Some((i, j)) = queue.pop_front() {
        let u = node(i, j);
        if u.0.hypot(u.1) >= g.c1 {
            exit = Some((i, j));
            break;
        }
        for (di, dj) in [(-1, 0), (0, -1), (1, 0), (0, 1)] {
            let (a, b) = (i + di, j + dj);
            if a.abs() > m || b.abs() > m {
                continue;
            }
            let k = id(a, b);
            if parent[k] != usize::MAX {
                continue;
            }
            if free[k] == 0 {
                free[k] = if g.distance(node(a, b)) >= clear { 1 } else { 2 };
            }
            if free[k] == 1 {
                parent[k] = id(i, j);
                queue.push_back((a, b));
            }
        }
    }
    let Some((ei, ej)) = exit else { return Ok(failed) };
    let mut path = Vec::new();
    let mut k = id(ei, ej);
    loop {
        let (i, j) = ((k / side) as i64 - m, (k % side) as i64 - m);
        path.push(node(i, j));
        if k == start {
            break;
        }
        k = parent[k];
    }
    path.reverse();
    // end exactly on the circle of radius c1
    if path.len() >= 2 {
        let (a, b) = (path[path.len() - 2], path[path.len() - 1]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let (qa, qb, qc) = (dx * dx + dy * dy, 2.0 * (a.0 * dx + a.1 * dy), a.0 * a.0 + a.1 * a.1 - g.c1 * g.c1);
        let t = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        let last = path.len() - 1;
        path[last] = (a.0 + t * dx, a.1 + t * dy);
    }
    // drop interior vertices of straight runs
    let mut simple: Vec<(f64, f64)> = Vec::with_capacity(path.len());
    for &p in &path {
        while simple.len() >= 2 {
            let (a, b) = (simple[simple.len() - 2], simple[simple.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - b.1) - (b.1 - a.1) * (p.0 - b.0);
            let dot = (b.0 - a.0) * (p.0 - b.0) + (b.1 - a.1) * (p.1 - b.1);
            if cross.abs() < 1e-12 * h * h && dot > 0.0 {
                simple.pop();
            } else {
                break;
            }
        }
        simple.push(p);
    }
    let length: f64 = simple.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum();
    Ok(SurroundCheck { ok: true, witness: Some(simple), speed_bound: Some(std::f64::consts::SQRT_2 * length) })
}
