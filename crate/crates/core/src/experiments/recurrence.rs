//! Recurrence of infinite sets: the adaptive radius schedule and per-scale
//! hitting frequencies; visit counts for finite sets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::stats::mean_se;
use super::{sample_stream, Check, ExperimentRun};
use crate::error::{invalid, Error, Result};
use crate::hitting::cond_hit_before_exit;
use crate::kernel::PotentialKernel;
use crate::lattice::{Ball, LatticePoint};
use crate::par::{map_indexed, Execution};
use crate::range::{SetSpec, SiteSet};
use crate::rng::RandomSource;
use crate::walk::{
    resolve_never_return, sample_reentry_point, Acceleration, NoObserver, Observer, ReentryConfig, StopReason,
    StoppingSpec, Target, WalkKind, Walker,
};
use crate::VERSION;

/// Largest radius the schedule may use; lattice coordinates stay exactly representable in `f64`.
pub const DEFAULT_RADIUS_CAP: f64 = 1_125_899_906_842_624.0; // 2^50

/// Per-scale guarantee of the schedule.
pub const SCHEDULE_LEVEL: f64 = 1.0 / 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// The positive horizontal half-axis.
    Axis,
    Finite { set: SetSpec },
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<SetSpec>()? {
            SetSpec::Axis => Ok(Family::Axis),
            set => Ok(Family::Finite { set }),
        }
    }
}

/// `{(k, 0) : k >= 1}`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PositiveAxis;

impl Target for PositiveAxis {
    #[inline]
    fn contains(&self, p: LatticePoint) -> bool {
        p.y == 0 && p.x >= 1
    }

    #[inline]
    fn distance_lower_bound(&self, p: LatticePoint) -> f64 {
        if p.x >= 1 {
            (p.y as f64).abs()
        } else {
            ((p.x - 1) as f64).hypot(p.y as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub k: usize,
    /// `R_(k-1)`, or the norm of the start site for `k = 0`.
    pub previous_radius: f64,
    pub target: LatticePoint,
    pub radius: f64,
    /// Smallest formula value over the starting shell.
    pub min_probability: f64,
}

/// Representative sites of `∂B(r)`: all of them for moderate `r`, otherwise
/// 4096 equally spaced directions.
fn shell_sites(r: f64) -> Vec<LatticePoint> {
    if r <= 4096.0 {
        return Ball::origin(r).boundary_sites();
    }
    (0..4096)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / 4096.0;
            let mut p = LatticePoint::new(((r - 0.5) * t.cos()).round() as i64, ((r - 0.5) * t.sin()).round() as i64);
            let (sx, sy) = (p.x.signum(), p.y.signum());
            while p.norm() > r {
                if p.x.abs() >= p.y.abs() { p.x -= sx } else { p.y -= sy }
            }
            while p.norm() <= r - 1.0 {
                if p.x.abs() >= p.y.abs() { p.x += sx.max(1) } else { p.y += sy.max(1) }
            }
            p
        })
        .collect()
}

fn min_over(kernel: &PotentialKernel, starts: &[LatticePoint], y: LatticePoint, radius: f64) -> Result<f64> {
    let mut m = f64::INFINITY;
    for &x in starts {
        let p = cond_hit_before_exit(kernel, x, y, radius)?.value;
        m = m.min(p);
    }
    Ok(m)
}

/// Builds `R_0 < R_1 < ...` and targets `y_k` on the positive axis: from every
/// site of `∂B(R_(k-1))` the walk hits `y_k` before `∂B(R_k)` with formula
/// probability at least 1/3. The target is the first axis site outside
/// `B(R_(k-1))`; the radius doubles until the bound holds.
pub fn adaptive_schedule(kernel: &PotentialKernel, start: LatticePoint, scales: usize, radius_cap: f64) -> Result<Vec<ScheduleEntry>> {
    if start.is_origin() {
        return invalid("the start must differ from the origin");
    }
    let mut out: Vec<ScheduleEntry> = Vec::with_capacity(scales);
    for k in 0..scales {
        let (prev, starts, target) = match out.last() {
            None => {
                let r = start.norm();
                (r, vec![start], LatticePoint::new(r.floor() as i64 + 1, 0))
            }
            Some(e) => (e.radius, shell_sites(e.radius), LatticePoint::new(e.radius.floor() as i64 + 1, 0)),
        };
        let mut radius = (2.0 * target.norm()).max(4.0);
        loop {
            if radius > radius_cap {
                return Err(Error::Runtime(format!(
                    "schedule search at scale {k} exceeded the radius cap {radius_cap:.3e} (R_(k-1) = {prev:.6e})"
                )));
            }
            let p = min_over(kernel, &starts, target, radius)?;
            if p >= SCHEDULE_LEVEL {
                out.push(ScheduleEntry { k, previous_radius: prev, target, radius, min_probability: p });
                break;
            }
            radius *= 2.0;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceParams {
    pub family: Family,
    pub scales: usize,
    pub samples: usize,
    pub start: LatticePoint,
    pub radius_cap: f64,
    pub accel: Acceleration,
}

impl RecurrenceParams {
    pub fn new(family: Family, scales: usize, samples: usize) -> Self {
        RecurrenceParams {
            family,
            scales,
            samples,
            start: LatticePoint::new(1, 0),
            radius_cap: DEFAULT_RADIUS_CAP,
            accel: Acceleration::FAST,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSample {
    pub index: usize,
    /// Per scale: `y_k` was hit before `∂B(R_k)`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hit_target: Vec<bool>,
    /// Per scale: the set was hit before `∂B(R_k)`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hit_set: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visits: Option<u64>,
    /// Number of returns from the escape shell that were simulated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub returns: Option<u32>,
    /// Return cycle during which the last visit happened.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_visit_cycle: Option<u32>,
    /// Radius of the escape shell beyond which the walk never came back.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_radius: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub k: usize,
    pub hit_target: f64,
    pub hit_target_se: f64,
    pub hit_set: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSummary {
    pub schedule: Vec<ScheduleEntry>,
    pub scales: Vec<ScaleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_visits: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_visits: Option<f64>,
}

pub type RecurrenceRun = ExperimentRun<RecurrenceParams, RecurrenceSample, RecurrenceSummary>;

fn axis_sample(walker: &Walker<'_>, schedule: &[ScheduleEntry], start: LatticePoint, rng: &mut RandomSource) -> Result<RecurrenceSample> {
    let mut pos = start;
    let mut s = RecurrenceSample::default();
    for e in schedule {
        let exit = e.radius - 1.0;
        let mut hit_set = false;
        let mut hit_target = false;
        loop {
            let mut stop = StoppingSpec::exit(exit);
            if !hit_target {
                stop = stop.with_target_site(e.target);
            }
            if !hit_set {
                stop = stop.with_target_set(&PositiveAxis);
            }
            let out = walker.run(pos, &stop, rng, &mut NoObserver)?;
            pos = out.end;
            match out.reason {
                StopReason::ExitedRadius => break,
                StopReason::HitTarget => {
                    hit_target = true;
                    hit_set = true;
                }
                StopReason::HitSet => {
                    hit_set = true;
                    hit_target |= pos == e.target;
                }
                other => return Err(Error::Runtime(format!("recurrence walk stopped unexpectedly: {other:?}"))),
            }
        }
        s.hit_target.push(hit_target);
        s.hit_set.push(hit_set);
    }
    Ok(s)
}

struct VisitCounter<'a> {
    set: &'a SiteSet,
    visits: u64,
    cycle: u32,
    last_cycle: Option<u32>,
}

impl Observer for VisitCounter<'_> {
    fn watched_distance(&self, p: LatticePoint) -> f64 {
        self.set.distance_lower_bound(p)
    }

    fn on_site(&mut self, p: LatticePoint) {
        if self.set.index_of(p).is_some() {
            self.visits += 1;
            self.last_cycle = Some(self.cycle);
        }
    }
}

fn finite_sample(
    kernel: &PotentialKernel,
    walker: &Walker<'_>,
    set: &SiteSet,
    start: LatticePoint,
    rng: &mut RandomSource,
) -> Result<RecurrenceSample> {
    let inner = (set.max_norm() + 1.0).max(start.norm() + 1.0);
    let escape = 64.0 * inner;
    let mut counter = VisitCounter { set, visits: 0, cycle: 0, last_cycle: None };
    let mut pos = start;
    let reentry = ReentryConfig::default();
    if set.index_of(start).is_some() {
        counter.on_site(start);
    }
    loop {
        let out = walker.run(pos, &StoppingSpec::exit(escape), rng, &mut counter)?;
        if out.reason != StopReason::ExitedRadius {
            return Err(Error::Runtime(format!("finite-set walk stopped unexpectedly: {:?}", out.reason)));
        }
        if resolve_never_return(kernel, out.end, inner, rng)?.never_returns {
            break;
        }
        pos = sample_reentry_point(kernel, out.end, inner, rng, &reentry)?.point;
        counter.cycle += 1;
    }
    Ok(RecurrenceSample {
        visits: Some(counter.visits),
        returns: Some(counter.cycle),
        last_visit_cycle: counter.last_cycle,
        escape_radius: Some(escape),
        ..Default::default()
    })
}

pub fn run_recurrence(kernel: &PotentialKernel, params: &RecurrenceParams, seed: u64, exec: Execution) -> Result<RecurrenceRun> {
    if params.samples < 2 {
        return invalid("at least two samples are required");
    }
    let walker = Walker::new(kernel, WalkKind::Conditioned, params.accel);
    let (samples, summary, checks) = match &params.family {
        Family::Axis => {
            if params.scales == 0 {
                return invalid("at least one scale is required");
            }
            let schedule = adaptive_schedule(kernel, params.start, params.scales, params.radius_cap)?;
            let samples = map_indexed(params.samples, exec, |i| {
                let mut rng = sample_stream(seed, "recurrence", i);
                let mut s = axis_sample(&walker, &schedule, params.start, &mut rng)?;
                s.index = i;
                Ok(s)
            })?;
            let mut scales = Vec::new();
            let mut checks = Vec::new();
            for k in 0..schedule.len() {
                let v: Vec<f64> = samples.iter().map(|s| s.hit_target[k] as u8 as f64).collect();
                let (m, se) = mean_se(&v);
                let hs = samples.iter().filter(|s| s.hit_set[k]).count() as f64 / samples.len() as f64;
                scales.push(ScaleSummary { k, hit_target: m, hit_target_se: se, hit_set: hs });
                checks.push(Check::at_least(&format!("hit_frequency[{k}]"), m, 0.33 - 3.0 * se));
            }
            (samples, RecurrenceSummary { schedule, scales, ..Default::default() }, checks)
        }
        Family::Finite { set } => {
            let set = set.build()?;
            if set.is_empty() || set.sites().iter().any(|p| p.is_origin()) {
                return invalid("the finite set must be nonempty and avoid the origin");
            }
            let samples = map_indexed(params.samples, exec, |i| {
                let mut rng = sample_stream(seed, "recurrence-finite", i);
                let mut s = finite_sample(kernel, &walker, &set, params.start, &mut rng)?;
                s.index = i;
                Ok(s)
            })?;
            let visits: Vec<u64> = samples.iter().filter_map(|s| s.visits).collect();
            let summary = RecurrenceSummary {
                max_visits: visits.iter().copied().max(),
                mean_visits: Some(visits.iter().sum::<u64>() as f64 / visits.len() as f64),
                ..Default::default()
            };
            (samples, summary, Vec::new())
        }
    };
    Ok(ExperimentRun {
        experiment_id: "recurrence".into(),
        version: VERSION.into(),
        seed,
        params: params.clone(),
        samples,
        summary,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_target() {
        assert!(PositiveAxis.contains(LatticePoint::new(3, 0)));
        assert!(!PositiveAxis.contains(LatticePoint::new(0, 0)));
        assert_eq!(PositiveAxis.distance_lower_bound(LatticePoint::new(-2, 0)), 3.0);
        assert_eq!(PositiveAxis.distance_lower_bound(LatticePoint::new(5, -4)), 4.0);
    }

    #[test]
    fn schedule_is_increasing_and_meets_level() {
        let k = PotentialKernel::build(64.0).unwrap();
        let s = adaptive_schedule(&k, LatticePoint::new(1, 0), 2, DEFAULT_RADIUS_CAP).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].radius < s[1].radius);
        assert!(s.iter().all(|e| e.min_probability >= SCHEDULE_LEVEL && e.target.norm() > e.previous_radius));
    }

    #[test]
    fn schedule_cap_reports_scale() {
        let k = PotentialKernel::build(64.0).unwrap();
        let err = adaptive_schedule(&k, LatticePoint::new(1, 0), 3, 1e6).unwrap_err();
        assert!(err.to_string().contains("scale 1"), "{err}");
        // the radius roughly squares from one scale to the next
        let err = adaptive_schedule(&k, LatticePoint::new(1, 0), 3, DEFAULT_RADIUS_CAP).unwrap_err();
        assert!(err.to_string().contains("scale 2"), "{err}");
    }

    #[test]
    fn shell_representatives_lie_on_the_shell() {
        for p in shell_sites(10_000.5) {
            assert!(p.norm() <= 10_000.5 && p.norm() > 9_999.5);
        }
    }

    #[test]
    fn finite_set_visits_are_finite() {
        let k = PotentialKernel::build(64.0).unwrap();
        let dir = std::env::temp_dir().join(format!("condwalk-finite-{}.csv", std::process::id()));
        std::fs::write(&dir, "x,y\n2,0\n").unwrap();
        let fam = Family::Finite { set: SetSpec::Points { path: dir.display().to_string() } };
        let run = run_recurrence(&k, &RecurrenceParams::new(fam, 0, 50), 9, Execution::Sequential).unwrap();
        assert!(run.samples.iter().all(|s| s.visits.is_some() && s.escape_radius.is_some()));
        std::fs::remove_file(dir).ok();
    }
}
