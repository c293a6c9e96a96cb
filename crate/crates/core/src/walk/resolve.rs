//! Infinite-horizon decisions: will the walk ever come back, and where.

use serde::{Deserialize, Serialize};

use super::{Acceleration, NoObserver, StopReason, StoppingSpec, WalkKind, Walker};
use crate::error::{invalid, Error, Result};
use crate::kernel::{asym, asymptotic_radius, PotentialKernel, GLOBAL_DEVIATION};
use crate::lattice::{Ball, LatticePoint};
use crate::rng::RandomSource;

/// Radii up to which the entry shell is enumerated site by site.
const ENUMERATE_SHELL_UP_TO: f64 = 64.0;

/// Range `[lo, hi]` of `a` over the sites through which the walk first
/// enters `B(r)` from outside, i.e. over the internal boundary of `B(r)`.
pub fn entry_shell_range(kernel: &PotentialKernel, r: f64) -> (f64, f64) {
    if r <= ENUMERATE_SHELL_UP_TO {
        let sites = Ball::origin(r).boundary_sites();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in sites.into_iter().filter(|p| !p.is_origin()) {
            let v = kernel.value(p);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    } else {
        let s = r - 1.0;
        (asym(s) - GLOBAL_DEVIATION / (s * s), asym(r) + GLOBAL_DEVIATION / (r * r))
    }
}

/// Outcome of a never-return draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub site: LatticePoint,
    pub inner_radius: f64,
    pub never_returns: bool,
    pub probability_used: f64,
    pub bias_bound: f64,
}

/// Probability used by [`resolve_never_return`] and its bias bound.
pub fn never_return_probability(kernel: &PotentialKernel, z: LatticePoint, inner_radius: f64) -> Result<(f64, f64)> {
    if !(inner_radius >= 1.0) || !(z.norm() > inner_radius) {
        return invalid(format!("need |z| > inner radius >= 1, got z = {z}, r = {inner_radius}"));
    }
    let (lo, hi) = entry_shell_range(kernel, inner_radius);
    let az = kernel.value(z);
    let mid = 0.5 * (lo + hi);
    let p = (1.0 - mid / az).clamp(0.0, 1.0);
    Ok((p, 0.5 * (hi - lo) / az + kernel.error_bound(z) / az))
}

/// Decides whether the conditioned walk started at `z` ever enters `B(inner_radius)`.
///
/// By optional stopping of `1/a` the return probability equals `a(z)^-1`
/// divided by the mean of `1/a` over the entry site, so it lies between
/// `lo/a(z)` and `hi/a(z)` with `[lo, hi]` the range of `a` on the entry
/// shell. The draw uses the midpoint and reports the half-width as its bias.
pub fn resolve_never_return(
    kernel: &PotentialKernel,
    z: LatticePoint,
    inner_radius: f64,
    rng: &mut RandomSource,
) -> Result<DecisionRecord> {
    let (p, bias) = never_return_probability(kernel, z, inner_radius)?;
    let never_returns = rng.bernoulli(p);
    Ok(DecisionRecord { site: z, inner_radius, never_returns, probability_used: p, bias_bound: bias })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReentryConfig {
    /// The rejection radius `R` is chosen with `a(R) >= reject_factor * a(z)`.
    pub reject_factor: f64,
    pub max_rejections: u32,
    pub accel: Acceleration,
    /// Largest admissible rejection radius.
    pub radius_cap: f64,
}

impl Default for ReentryConfig {
    fn default() -> Self {
        ReentryConfig { reject_factor: 2.0, max_rejections: 10_000, accel: Acceleration::FAST, radius_cap: 1e15 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reentry {
    pub point: LatticePoint,
    pub rejections: u32,
    pub reject_radius: f64,
    /// Upper bound on the fraction of returning paths that pass beyond the
    /// rejection radius first and are therefore not represented.
    pub bias_bound: f64,
}

/// Samples the entry site into `B(inner_radius)` of the conditioned walk
/// from `z`, given that it returns, by rejecting paths that reach the
/// rejection radius first.
pub fn sample_reentry_point(
    kernel: &PotentialKernel,
    z: LatticePoint,
    inner_radius: f64,
    rng: &mut RandomSource,
    cfg: &ReentryConfig,
) -> Result<Reentry> {
    if !(inner_radius >= 2.0) || !(z.norm() > inner_radius) {
        return invalid(format!("need |z| > inner radius >= 2, got z = {z}, r = {inner_radius}"));
    }
    let az = kernel.value(z);
    let reject_radius = asymptotic_radius(cfg.reject_factor * az).max(2.0 * z.norm() + 2.0).ceil();
    if reject_radius > cfg.radius_cap {
        return Err(Error::Resource(format!("rejection radius {reject_radius:.3e} exceeds cap {:.3e}", cfg.radius_cap)));
    }
    let walker = Walker::new(kernel, WalkKind::Conditioned, cfg.accel);
    let stop = StoppingSpec::exit(reject_radius).with_enter(Ball::origin(inner_radius));
    let mut rejections = 0;
    loop {
        let out = walker.run(z, &stop, rng, &mut NoObserver)?;
        match out.reason {
            StopReason::EnteredRadius => {
                let (lo, _) = entry_shell_range(kernel, inner_radius);
                let inv_lo = 1.0 / lo;
                let inv_z = 1.0 / az;
                let inv_rej = 1.0 / asym(reject_radius);
                // P[exit first] * P[return from the rejection shell] / P[return]
                let p_exit = ((inv_lo - inv_z) / (inv_lo - inv_rej)).clamp(0.0, 1.0);
                let bias = (p_exit * az / asym(reject_radius)).min(1.0);
                return Ok(Reentry { point: out.end, rejections, reject_radius, bias_bound: bias });
            }
            StopReason::ExitedRadius => {
                rejections += 1;
                if rejections > cfg.max_rejections {
                    return Err(Error::Runtime(format!(
                        "re-entry sampling from {z} into radius {inner_radius} rejected {rejections} times"
                    )));
                }
            }
            other => return Err(Error::Runtime(format!("unexpected stop {other:?} during re-entry sampling"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn never_return_to_first_neighbours() {
        let k = PotentialKernel::build(20.0).unwrap();
        let d = resolve_never_return(&k, LatticePoint::new(1, 1), 1.0, &mut RandomSource::new(0, 0)).unwrap();
        assert!((d.probability_used - (1.0 - PI / 4.0)).abs() < 1e-12);
        assert!(d.bias_bound < 1e-12);
    }

    #[test]
    fn escape_tends_to_one_far_away() {
        let k = PotentialKernel::build(20.0).unwrap();
        let d = resolve_never_return(&k, LatticePoint::new(1 << 40, 0), 2.0, &mut RandomSource::new(0, 0)).unwrap();
        assert!(d.probability_used > 0.9);
    }

    #[test]
    fn scale_two_escape_value() {
        let k = PotentialKernel::build(100.0).unwrap();
        let z = LatticePoint::new(64, 0);
        let d = resolve_never_return(&k, z, 32.0, &mut RandomSource::new(0, 0)).unwrap();
        assert!((d.probability_used - 1.0 / (6.0 + crate::kernel::GAMMA_STAR)).abs() < 0.01 + d.bias_bound);
    }

    #[test]
    fn resolver_rejects_bad_radii() {
        let k = PotentialKernel::build(20.0).unwrap();
        assert!(resolve_never_return(&k, LatticePoint::new(3, 0), 5.0, &mut RandomSource::new(0, 0)).is_err());
        assert!(resolve_never_return(&k, LatticePoint::new(3, 0), 0.5, &mut RandomSource::new(0, 0)).is_err());
    }

    #[test]
    fn reentry_lands_on_boundary() {
        let k = PotentialKernel::build(100.0).unwrap();
        let ball = Ball::origin(20.0);
        for s in 0..50 {
            let r = sample_reentry_point(&k, LatticePoint::new(90, 0), 20.0, &mut RandomSource::new(8, s), &ReentryConfig::default())
                .unwrap();
            assert!(ball.on_boundary(r.point));
            assert!(r.bias_bound < 0.5);
        }
    }
}
