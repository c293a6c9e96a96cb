use std::f64::consts::{FRAC_2_PI, PI};

use serde::{Deserialize, Serialize};

use super::{Acceleration, Observer, StopReason, StoppingSpec, WalkKind};
use crate::error::{invalid, Result};
use crate::kernel::{asym, PotentialKernel, GLOBAL_DEVIATION};
use crate::lattice::{LatticePoint, DIRECTIONS};
use crate::rng::RandomSource;

/// How a walk ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkOutcome {
    pub end: LatticePoint,
    pub reason: StopReason,
    /// Single lattice steps taken.
    pub steps: u64,
    /// Distant jumps taken.
    pub jumps: u64,
}

/// Samples paths of one walk kind with a fixed acceleration policy.
#[derive(Clone, Debug)]
pub struct Walker<'k> {
    kernel: &'k PotentialKernel,
    kind: WalkKind,
    accel: Acceleration,
    /// `asymptotic_a(2^e)` for `e = 0..64`.
    octave: [f64; 64],
    extent: i64,
}

/// Smallest value of `asym(s) - C/s^2` over norms `>= s`.
#[inline]
fn a_lower(s: f64) -> f64 {
    asym(s) - GLOBAL_DEVIATION / (s * s)
}

/// Largest value of `asym(s) + C/s^2` over norms `<= s`.
#[inline]
fn a_upper(s: f64) -> f64 {
    asym(s) + GLOBAL_DEVIATION / (s * s)
}

impl<'k> Walker<'k> {
    pub fn new(kernel: &'k PotentialKernel, kind: WalkKind, accel: Acceleration) -> Self {
        let mut octave = [0.0; 64];
        for (e, o) in octave.iter_mut().enumerate() {
            *o = asym((e as f64).exp2());
        }
        Walker { kernel, kind, accel, octave, extent: kernel.table_extent() as i64 }
    }

    pub fn kind(&self) -> WalkKind {
        self.kind
    }

    pub fn acceleration(&self) -> Acceleration {
        self.accel
    }

    pub fn kernel(&self) -> &'k PotentialKernel {
        self.kernel
    }

    /// Runs from `start` until a stopping rule fires. Sites entered while the
    /// walk is close to the observer's region are reported to it; the start
    /// site is not.
    pub fn run<O: Observer + ?Sized>(
        &self,
        start: LatticePoint,
        stop: &StoppingSpec<'_>,
        rng: &mut RandomSource,
        obs: &mut O,
    ) -> Result<WalkOutcome> {
        if self.kind == WalkKind::Conditioned && start.is_origin() {
            return invalid("the conditioned walk cannot start at the origin");
        }
        stop.validate(start)?;
        let min_jump = match self.accel {
            Acceleration::Naive => f64::INFINITY,
            Acceleration::Fast { min_jump } => (min_jump.max(2)) as f64,
        };
        let mut pos = start;
        let mut moves: u64 = 0;
        let mut steps: u64 = 0;
        let mut jumps: u64 = 0;
        loop {
            if moves >= stop.step_cap {
                return Ok(WalkOutcome { end: pos, reason: StopReason::StepCap, steps, jumps });
            }
            let clearance = self.clearance(pos, stop, obs);
            let jump_radius = match self.kind {
                // the disk must keep the origin outside for the h-transform identity
                WalkKind::Conditioned => clearance.min(pos.norm()) - 2.0,
                WalkKind::Simple => clearance - 2.0,
            };
            if jump_radius >= min_jump {
                pos = self.jump(pos, jump_radius.floor(), rng);
                moves += 1;
                jumps += 1;
                continue;
            }
            // `clearance` bounds the Euclidean distance to every trigger; no
            // trigger can fire within ceil(clearance) - 1 steps
            let silent = if clearance.is_finite() { (clearance.ceil() - 1.0).max(0.0) as u64 } else { u64::MAX };
            let silent = silent.min(stop.step_cap - moves);
            if silent > 0 {
                for _ in 0..silent {
                    pos = self.step(pos, rng);
                }
                moves += silent;
                steps += silent;
                continue;
            }
            pos = self.step(pos, rng);
            moves += 1;
            steps += 1;
            if obs.watched_distance(pos) <= 0.0 {
                obs.on_site(pos);
            }
            if let Some(reason) = Self::triggered(pos, stop) {
                return Ok(WalkOutcome { end: pos, reason, steps, jumps });
            }
        }
    }

    #[inline]
    fn triggered(pos: LatticePoint, stop: &StoppingSpec<'_>) -> Option<StopReason> {
        if stop.target_site == Some(pos) {
            return Some(StopReason::HitTarget);
        }
        if let Some(t) = stop.target_set {
            if t.contains(pos) {
                return Some(StopReason::HitSet);
            }
        }
        if let Some(b) = stop.enter {
            if b.contains(pos) {
                return Some(StopReason::EnteredRadius);
            }
        }
        if let Some(r) = stop.exit_radius {
            if pos.norm_sq() > r * r {
                return Some(StopReason::ExitedRadius);
            }
        }
        None
    }

    /// Lower bound on the distance from `pos` to anything that must be simulated exactly.
    #[inline]
    fn clearance<O: Observer + ?Sized>(&self, pos: LatticePoint, stop: &StoppingSpec<'_>, obs: &O) -> f64 {
        let mut d = obs.watched_distance(pos);
        let r = pos.norm();
        if let Some(t) = stop.target_site {
            d = d.min(pos.distance(t));
        }
        if let Some(t) = stop.target_set {
            d = d.min(t.distance_lower_bound(pos));
        }
        if let Some(b) = stop.enter {
            let dx = pos.x as f64 - b.center.0;
            let dy = pos.y as f64 - b.center.1;
            d = d.min(dx.hypot(dy) - b.radius);
        }
        if let Some(rad) = stop.exit_radius {
            // exit fires only once the norm exceeds rad, so floor(rad - r) steps are safe
            d = d.min((rad - r).floor() + 1.0);
        }
        d
    }

    #[inline]
    pub(crate) fn step(&self, p: LatticePoint, rng: &mut RandomSource) -> LatticePoint {
        match self.kind {
            WalkKind::Simple => p + DIRECTIONS[rng.direction()],
            WalkKind::Conditioned => self.conditioned_step(p, rng),
        }
    }

    #[inline]
    fn conditioned_step(&self, p: LatticePoint, rng: &mut RandomSource) -> LatticePoint {
        if p.x.abs() < self.extent && p.y.abs() < self.extent {
            let k = self.kernel;
            let nb = p.neighbours();
            let w0 = k.table_value(nb[0]);
            let w1 = k.table_value(nb[1]);
            let w2 = k.table_value(nb[2]);
            let w3 = k.table_value(nb[3]);
            let u = rng.uniform() * (w0 + w1 + w2 + w3);
            if u < w0 {
                nb[0]
            } else if u < w0 + w1 {
                nb[1]
            } else if u < w0 + w1 + w2 {
                nb[2]
            } else {
                nb[3]
            }
        } else {
            self.conditioned_step_far(p, rng)
        }
    }

    /// Rejection from the uniform proposal with acceptance `a(y)/M`; a squeeze
    /// accepts without evaluating `a` in all but a `O(1/(r ln r))` fraction of draws.
    fn conditioned_step_far(&self, p: LatticePoint, rng: &mut RandomSource) -> LatticePoint {
        let r = p.norm();
        let s = r - 1.0;
        let e = ((s.to_bits() >> 52) & 0x7ff) as i64 - 1023;
        let floor_a = self.octave[e.clamp(0, 63) as usize];
        let thr = 1.0 - (2.0 * FRAC_2_PI / s + 2.0 * GLOBAL_DEVIATION / (s * s)) / floor_a;
        let m = a_upper(r + 1.0);
        loop {
            let y = p + DIRECTIONS[rng.direction()];
            let u = rng.uniform();
            if u < thr || u * m < self.kernel.value(y) {
                return y;
            }
        }
    }

    /// Exit point of the disk of radius `d` around `p`, drawn uniformly in
    /// angle and rounded to the lattice; for the conditioned walk reweighted by
    /// `a(exit)` through rejection.
    fn jump(&self, p: LatticePoint, d: f64, rng: &mut RandomSource) -> LatticePoint {
        let (lo, hi) = match self.kind {
            WalkKind::Simple => (f64::INFINITY, f64::INFINITY),
            WalkKind::Conditioned => {
                let r = p.norm();
                (a_lower(r - d - 1.0), a_upper(r + d + 1.0))
            }
        };
        loop {
            let (sin, cos) = (2.0 * PI * rng.uniform()).sin_cos();
            let z = p + LatticePoint::new((d * cos).round() as i64, (d * sin).round() as i64);
            if self.kind == WalkKind::Simple {
                return z;
            }
            let u = rng.uniform() * hi;
            if u <= lo || u < self.kernel.value(z) {
                return z;
            }
        }
    }
}
