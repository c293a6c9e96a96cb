//! Step laws and path sampling for the simple and the conditioned walk.

mod engine;
mod resolve;

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::PotentialKernel;
use crate::lattice::{Ball, LatticePoint};
use crate::rng::RandomSource;

pub use engine::{WalkOutcome, Walker};
pub use resolve::{
    entry_shell_range, never_return_probability, resolve_never_return, sample_reentry_point, DecisionRecord, Reentry, ReentryConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkKind {
    Simple,
    Conditioned,
}

/// Naive mode simulates every step. Fast mode replaces the walk inside a disk
/// of radius at least `min_jump` that is free of all stopping triggers and
/// watched sites by a single draw of the disk exit point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acceleration {
    Naive,
    Fast { min_jump: u32 },
}

impl Acceleration {
    pub const FAST: Acceleration = Acceleration::Fast { min_jump: 64 };
}

impl Default for Acceleration {
    fn default() -> Self {
        Acceleration::FAST
    }
}

/// A set of sites the walk may be asked to hit.
pub trait Target: Sync {
    fn contains(&self, p: LatticePoint) -> bool;
    /// Lower bound on the Euclidean distance from `p` to the nearest member.
    fn distance_lower_bound(&self, p: LatticePoint) -> f64;
}

/// Internal boundary of the origin-centred ball of the given radius.
#[derive(Clone, Copy, Debug)]
pub struct BallBoundary {
    ball: Ball,
}

impl BallBoundary {
    pub fn new(radius: f64) -> Self {
        BallBoundary { ball: Ball::origin(radius) }
    }

    pub fn radius(&self) -> f64 {
        self.ball.radius
    }
}

impl Target for BallBoundary {
    #[inline]
    fn contains(&self, p: LatticePoint) -> bool {
        let r = self.ball.radius;
        let n = p.norm();
        n > r - 1.0 - 1e-9 && self.ball.on_boundary(p)
    }

    #[inline]
    fn distance_lower_bound(&self, p: LatticePoint) -> f64 {
        // members have norm in (r - 1, r]
        let r = self.ball.radius;
        let n = p.norm();
        if n > r {
            n - r
        } else {
            (r - 1.0 - n).max(0.0)
        }
    }
}

/// Stopping rules; the walk stops after the first move that satisfies any of them.
#[derive(Clone, Copy)]
pub struct StoppingSpec<'a> {
    pub target_site: Option<LatticePoint>,
    pub target_set: Option<&'a dyn Target>,
    /// Stop on the first site with norm strictly greater than this radius.
    pub exit_radius: Option<f64>,
    /// Stop on the first site inside this ball.
    pub enter: Option<Ball>,
    /// Maximal number of moves; a distant jump counts as one move.
    pub step_cap: u64,
}

pub const DEFAULT_STEP_CAP: u64 = 1 << 40;

impl Default for StoppingSpec<'_> {
    fn default() -> Self {
        StoppingSpec { target_site: None, target_set: None, exit_radius: None, enter: None, step_cap: DEFAULT_STEP_CAP }
    }
}

impl<'a> StoppingSpec<'a> {
    pub fn exit(radius: f64) -> Self {
        StoppingSpec { exit_radius: Some(radius), ..Default::default() }
    }

    pub fn with_target_site(mut self, p: LatticePoint) -> Self {
        self.target_site = Some(p);
        self
    }

    pub fn with_target_set(mut self, t: &'a dyn Target) -> Self {
        self.target_set = Some(t);
        self
    }

    pub fn with_exit(mut self, radius: f64) -> Self {
        self.exit_radius = Some(radius);
        self
    }

    pub fn with_enter(mut self, ball: Ball) -> Self {
        self.enter = Some(ball);
        self
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = cap;
        self
    }

    pub(crate) fn validate(&self, start: LatticePoint) -> Result<()> {
        if self.step_cap == 0 {
            return invalid("step cap must be positive");
        }
        let any = self.target_site.is_some() || self.target_set.is_some() || self.exit_radius.is_some() || self.enter.is_some();
        if !any && self.step_cap >= DEFAULT_STEP_CAP {
            return invalid("no stopping rule given");
        }
        if let Some(r) = self.exit_radius {
            if !(start.norm() <= r) {
                return invalid(format!("start {start} already outside exit radius {r}"));
            }
        }
        if let Some(b) = self.enter {
            if b.contains(start) {
                return invalid(format!("start {start} already inside the entry ball"));
            }
            if let Some(r) = self.exit_radius {
                if b.center == (0.0, 0.0) && b.radius >= r {
                    return invalid("entry radius must be below the exit radius");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    HitTarget,
    HitSet,
    ExitedRadius,
    EnteredRadius,
    StepCap,
    ResolvedNeverReturn,
}

/// Receives the sites a walk visits near a watched region.
pub trait Observer {
    /// Lower bound on the distance from `p` to any site of interest;
    /// `f64::INFINITY` when nothing is watched.
    fn watched_distance(&self, p: LatticePoint) -> f64;
    /// Called for every site entered while the walk is within the watched range.
    fn on_site(&mut self, p: LatticePoint);
}

/// Observes nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoObserver;

impl Observer for NoObserver {
    #[inline]
    fn watched_distance(&self, _: LatticePoint) -> f64 {
        f64::INFINITY
    }
    #[inline]
    fn on_site(&mut self, _: LatticePoint) {}
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    #[inline]
    fn watched_distance(&self, p: LatticePoint) -> f64 {
        self.0.watched_distance(p).min(self.1.watched_distance(p))
    }
    #[inline]
    fn on_site(&mut self, p: LatticePoint) {
        self.0.on_site(p);
        self.1.on_site(p);
    }
}

impl<O: Observer + ?Sized> Observer for &mut O {
    #[inline]
    fn watched_distance(&self, p: LatticePoint) -> f64 {
        (**self).watched_distance(p)
    }
    #[inline]
    fn on_site(&mut self, p: LatticePoint) {
        (**self).on_site(p)
    }
}

/// Records every site in order.
#[derive(Clone, Debug, Default)]
pub struct PathRecorder {
    pub steps: Vec<LatticePoint>,
}

impl Observer for PathRecorder {
    #[inline]
    fn watched_distance(&self, _: LatticePoint) -> f64 {
        0.0
    }
    #[inline]
    fn on_site(&mut self, p: LatticePoint) {
        self.steps.push(p);
    }
}

/// Collects the distinct sites visited.
#[derive(Clone, Debug, Default)]
pub struct SiteCollector {
    pub sites: HashSet<LatticePoint>,
    pub limit: Option<usize>,
    pub overflowed: bool,
}

impl Observer for SiteCollector {
    #[inline]
    fn watched_distance(&self, _: LatticePoint) -> f64 {
        0.0
    }
    #[inline]
    fn on_site(&mut self, p: LatticePoint) {
        if self.limit.is_some_and(|l| self.sites.len() >= l) {
            self.overflowed = true;
            return;
        }
        self.sites.insert(p);
    }
}

/// Transition probabilities from one site to its four neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub origin_site: LatticePoint,
    pub neighbours: [LatticePoint; 4],
    pub weights: [f64; 4],
}

/// `P(x, y) = a(y) / (4 a(x))` for the four neighbours `y` of `x`.
pub fn conditioned_step(kernel: &PotentialKernel, x: LatticePoint) -> Result<StepDistribution> {
    if x.is_origin() {
        return invalid("the conditioned walk is not defined at the origin");
    }
    let ax = kernel.value(x);
    let neighbours = x.neighbours();
    let weights = neighbours.map(|y| kernel.value(y) / (4.0 * ax));
    Ok(StepDistribution { origin_site: x, neighbours, weights })
}

/// A recorded nearest-neighbour path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: LatticePoint,
    pub steps: Vec<LatticePoint>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn end(&self) -> LatticePoint {
        self.steps.last().copied().unwrap_or(self.start)
    }

    /// Distinct sites of the path, including the start.
    pub fn visited(&self) -> HashSet<LatticePoint> {
        let mut s: HashSet<LatticePoint> = self.steps.iter().copied().collect();
        s.insert(self.start);
        s
    }

    /// CSV rows `step,x,y`, row 0 being the start.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "x", "y"])?;
        for (i, p) in std::iter::once(&self.start).chain(self.steps.iter()).enumerate() {
            w.write_record([i.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates a walk step by step and records the full path.
pub fn sample_path(
    kernel: &PotentialKernel,
    start: LatticePoint,
    stop: &StoppingSpec<'_>,
    kind: WalkKind,
    rng: &mut RandomSource,
) -> Result<Trajectory> {
    let walker = Walker::new(kernel, kind, Acceleration::Naive);
    let mut rec = PathRecorder::default();
    let out = walker.run(start, stop, rng, &mut rec)?;
    Ok(Trajectory { start, steps: rec.steps, stop_reason: out.reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn step_law_at_first_neighbour() {
        let k = PotentialKernel::build(10.0).unwrap();
        let d = conditioned_step(&k, LatticePoint::new(1, 0)).unwrap();
        let w: std::collections::HashMap<_, _> = d.neighbours.iter().copied().zip(d.weights).collect();
        assert!((w[&LatticePoint::new(2, 0)] - (4.0 - 8.0 / PI) / 4.0).abs() < 1e-12);
        assert!((w[&LatticePoint::new(1, 1)] - 1.0 / PI).abs() < 1e-12);
        assert!((w[&LatticePoint::new(1, -1)] - 1.0 / PI).abs() < 1e-12);
        assert_eq!(w[&LatticePoint::ORIGIN], 0.0);
        assert!(conditioned_step(&k, LatticePoint::ORIGIN).is_err());
    }

    #[test]
    fn recorded_path_is_connected_and_avoids_origin() {
        let k = PotentialKernel::build(40.0).unwrap();
        let mut rng = RandomSource::new(3, 0);
        let t = sample_path(&k, (1, 0).into(), &StoppingSpec::exit(30.0), WalkKind::Conditioned, &mut rng).unwrap();
        assert_eq!(t.stop_reason, StopReason::ExitedRadius);
        let mut prev = t.start;
        for &p in &t.steps {
            assert!(prev.is_neighbour(p));
            assert!(!p.is_origin());
            prev = p;
        }
        let r = t.end().norm();
        assert!(r > 30.0 && r <= 31.0);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), t.steps.len() + 2);
    }

    #[test]
    fn identical_sources_give_identical_paths() {
        let k = PotentialKernel::build(40.0).unwrap();
        let stop = StoppingSpec::exit(25.0);
        let a = sample_path(&k, (2, 3).into(), &stop, WalkKind::Conditioned, &mut RandomSource::new(5, 1)).unwrap();
        let b = sample_path(&k, (2, 3).into(), &stop, WalkKind::Conditioned, &mut RandomSource::new(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stopping_validation() {
        let k = PotentialKernel::build(10.0).unwrap();
        let mut rng = RandomSource::new(1, 1);
        let none = StoppingSpec::default();
        assert!(sample_path(&k, (1, 0).into(), &none, WalkKind::Simple, &mut rng).is_err());
        let outside = StoppingSpec::exit(2.0);
        assert!(sample_path(&k, (5, 0).into(), &outside, WalkKind::Simple, &mut rng).is_err());
        let inside = StoppingSpec::exit(20.0).with_enter(Ball::origin(6.0));
        assert!(sample_path(&k, (5, 0).into(), &inside, WalkKind::Simple, &mut rng).is_err());
        let at_origin = StoppingSpec::exit(5.0);
        assert!(sample_path(&k, LatticePoint::ORIGIN, &at_origin, WalkKind::Conditioned, &mut rng).is_err());
    }

    #[test]
    fn step_cap_stops_the_walk() {
        let k = PotentialKernel::build(10.0).unwrap();
        let stop = StoppingSpec::exit(1e9).with_step_cap(100);
        let t = sample_path(&k, (1, 0).into(), &stop, WalkKind::Simple, &mut RandomSource::new(2, 2)).unwrap();
        assert_eq!(t.stop_reason, StopReason::StepCap);
        assert_eq!(t.steps.len(), 100);
    }

    #[test]
    fn ball_boundary_target() {
        let t = BallBoundary::new(10.0);
        for p in Ball::origin(10.0).boundary_sites() {
            assert!(t.contains(p));
            assert_eq!(t.distance_lower_bound(p), 0.0);
        }
        assert!(!t.contains(LatticePoint::new(3, 0)));
        for x in -14..=14 {
            for y in -14..=14 {
                let p = LatticePoint::new(x, y);
                let d = Ball::origin(10.0)
                    .boundary_sites()
                    .iter()
                    .map(|&q| p.distance(q))
                    .fold(f64::INFINITY, f64::min);
                assert!(t.distance_lower_bound(p) <= d + 1e-12);
            }
        }
    }
}
