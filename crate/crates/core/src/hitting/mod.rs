//! Closed-form hitting and escape probabilities.
//!
//! Every asymptotic formula comes with an absolute error bound. The bounds are
//! obtained by optional stopping of `a(S - y)` for the simple walk or of
//! `1/a(S)` for the conditioned walk: the stopped value is a mean over the
//! stopping shell, so the exact probability lies between the formula evaluated
//! at the smallest and at the largest value of `a` on that shell.

mod exact;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{asym, PotentialKernel, GLOBAL_DEVIATION};
use crate::lattice::{Ball, LatticePoint};
use crate::walk::entry_shell_range;

pub use exact::{ball_domain, solve_boundary_values, solve_hitting_exact, ExactHitting, MAX_EXACT_SITES};

const CLAMP_TOLERANCE: f64 = 1e-9;

/// A probability and an absolute bound on its deviation from the exact value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityWithError {
    pub value: f64,
    pub error_bound: f64,
    pub formula_id: String,
}

impl ProbabilityWithError {
    fn new(value: f64, error_bound: f64, formula_id: &str) -> Result<Self> {
        Ok(ProbabilityWithError { value: clamp_probability(value)?, error_bound, formula_id: formula_id.into() })
    }

    pub fn lower(&self) -> f64 {
        (self.value - self.error_bound).max(0.0)
    }

    pub fn upper(&self) -> f64 {
        (self.value + self.error_bound).min(1.0)
    }

    pub fn contains(&self, p: f64) -> bool {
        (p - self.value).abs() <= self.error_bound
    }
}

/// Clamps to `[0, 1]`, refusing corrections larger than float noise.
pub fn clamp_probability(p: f64) -> Result<f64> {
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&p) {
        return Err(Error::Inconsistent(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Range of `a` over sites whose norm lies in `[s0, s1]`.
fn shell_range(s0: f64, s1: f64) -> (f64, f64) {
    let s0 = s0.max(1.0);
    let lo = asym(s0) - GLOBAL_DEVIATION / (s0 * s0);
    let hi = asym(s1) + GLOBAL_DEVIATION / (s1 * s1);
    (lo, hi)
}

/// Range of `a` on the sites where a walk first leaves `B(R)` or first hits
/// its internal boundary, shifted by up to `shift`.
fn outer_shell_range(radius: f64, shift: f64) -> (f64, f64) {
    shell_range(radius - 1.0 - shift, radius + 1.0 + shift)
}

/// Probability that the conditioned walk started at `x` ever returns to `x`: `1 - 1/(2 a(x))`.
pub fn prob_return_same_site(kernel: &PotentialKernel, x: LatticePoint) -> Result<f64> {
    if x.is_origin() {
        return invalid("x must differ from the origin");
    }
    Ok(1.0 - 1.0 / (2.0 * kernel.value(x)))
}

/// Probability that the conditioned walk from `x` ever hits `y != x`:
/// `(a(x) + a(y) - a(x - y)) / (2 a(x))`.
pub fn prob_hit_other_site(kernel: &PotentialKernel, x: LatticePoint, y: LatticePoint) -> Result<f64> {
    if x == y {
        return invalid("x = y: use prob_return_same_site");
    }
    if x.is_origin() || y.is_origin() {
        return invalid("arguments must differ from the origin");
    }
    let ax = kernel.value(x);
    clamp_probability((ax + kernel.value(y) - kernel.value(x - y)) / (2.0 * ax))
}

/// Simple walk from `x`: probability of hitting `y` before leaving `B(R)`, `1 - a(x - y)/a(R)`.
pub fn srw_hit_before_exit(kernel: &PotentialKernel, x: LatticePoint, y: LatticePoint, radius: f64) -> Result<ProbabilityWithError> {
    if x == y || x.norm() > radius / 2.0 || y.norm() > radius / 2.0 || !(radius >= 4.0) {
        return invalid("need x != y and x, y in B(R/2)");
    }
    let axy = kernel.value(x - y);
    let value = 1.0 - axy / asym(radius);
    let (lo, hi) = outer_shell_range(radius, y.norm());
    let err = ((1.0 - axy / hi) - value).abs().max(((1.0 - axy / lo) - value).abs());
    ProbabilityWithError::new(value, err, "srw-annulus")
}

/// Conditioned walk from `x`: probability of leaving `B(R)` before entering `B(r)`,
/// `(1/a(r) - 1/a(x)) / (1/a(r) - 1/a(R))`.
pub fn cond_exit_before_inner(kernel: &PotentialKernel, x: LatticePoint, r: f64, radius: f64) -> Result<ProbabilityWithError> {
    let nx = x.norm();
    if !(r > 1.0 && r <= nx && nx <= radius && r < radius) {
        return invalid(format!("need 1 < r <= |x| <= R, got r = {r}, |x| = {nx}, R = {radius}"));
    }
    let inv_x = 1.0 / kernel.value(x);
    let (ilo, ihi) = entry_shell_range(kernel, r);
    let (olo, ohi) = outer_shell_range(radius, 0.0);
    let f = |inner: f64, outer: f64| ((1.0 / inner - inv_x) / (1.0 / inner - 1.0 / outer)).clamp(0.0, 1.0);
    let value = f(asym(r), asym(radius));
    let corners = [f(ilo, olo), f(ilo, ohi), f(ihi, olo), f(ihi, ohi)];
    let err = corners.iter().map(|c| (c - value).abs()).fold(0.0, f64::max);
    ProbabilityWithError::new(value, err, "exit-inner")
}

/// Conditioned walk from `x`: probability of never entering `B(r)`, `1 - a(r)/a(x)`.
pub fn cond_never_hit_disk(kernel: &PotentialKernel, x: LatticePoint, r: f64) -> Result<ProbabilityWithError> {
    if !(r >= 1.0 && r <= x.norm()) {
        return invalid(format!("need 1 <= r <= |x|, got r = {r}, |x| = {}", x.norm()));
    }
    let (lo, hi) = entry_shell_range(kernel, r);
    let ax = kernel.value(x);
    let value = 1.0 - 0.5 * (lo + hi) / ax;
    let err = 0.5 * (hi - lo) / ax + kernel.error_bound(x) / ax;
    ProbabilityWithError::new(value.max(0.0), err, "never-hit-disk")
}

/// The two-target decomposition for the simple walk killed on leaving a ball,
/// with target 1 at the origin and target 2 at `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoTargetQuantities {
    pub h1: f64,
    pub h2: f64,
    pub q12: f64,
    pub q21: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Splits hitting probabilities `h1, h2` into first-hit probabilities given the
/// cross probabilities `q12` (from target 1 to 2) and `q21`.
pub fn two_target_split(h1: f64, h2: f64, q12: f64, q21: f64) -> Result<TwoTargetQuantities> {
    for (name, v) in [("h1", h1), ("h2", h2), ("q12", q12), ("q21", q21)] {
        if !(0.0..=1.0).contains(&v) {
            return invalid(format!("{name} = {v} is not a probability"));
        }
    }
    let det = 1.0 - q12 * q21;
    if det <= 0.0 {
        return Err(Error::Singular("q12 * q21 = 1".into()));
    }
    let p1 = clamp_probability((h1 - h2 * q21) / det)?;
    let p2 = clamp_probability((h2 - h1 * q12) / det)?;
    Ok(TwoTargetQuantities { h1, h2, q12, q21, p1, p2 })
}

fn split_unchecked(h1: f64, h2: f64, q12: f64, q21: f64) -> f64 {
    (h2 - h1 * q12) / (1.0 - q12 * q21)
}

/// Conditioned walk from `x`: probability of hitting `y` before leaving `B(R)`,
/// `[a(x)a(R) + a(y)a(R) - a(x-y)a(R) - a(x)a(y)] / [a(x)(2a(R) - a(y))]`.
pub fn cond_hit_before_exit(kernel: &PotentialKernel, x: LatticePoint, y: LatticePoint, radius: f64) -> Result<ProbabilityWithError> {
    if x.is_origin() || y.is_origin() {
        return invalid("arguments must differ from the origin");
    }
    if !(x.norm() <= radius && y.norm() < radius) {
        return invalid("x and y must lie in B(R)");
    }
    if x == y {
        return ProbabilityWithError::new(1.0, 0.0, "excursion-hit");
    }
    let ax = kernel.value(x);
    let ay = kernel.value(y);
    let axy = kernel.value(x - y);
    let ar = asym(radius);
    let value = (ax * ar + ay * ar - axy * ar - ax * ay) / (ax * (2.0 * ar - ay));

    // exact value = a(y)/a(x) * p2 with p2 built from simple-walk quantities
    let (lo0, hi0) = outer_shell_range(radius, 0.0);
    let (lo1, hi1) = outer_shell_range(radius, y.norm());
    let h1 = |a: f64| 1.0 - ax / a;
    let h2 = |a: f64| 1.0 - axy / a;
    let q12 = |a: f64| 1.0 - ay / a;
    let q21 = |a: f64| 1.0 - ay / a;
    // p2 increases with h2 and q21 and decreases with h1 and q12
    let p2_min = split_unchecked(h1(hi0), h2(lo1), q12(hi1), q21(lo0));
    let p2_max = split_unchecked(h1(lo0), h2(hi1), q12(lo1), q21(hi0));
    let lo = (ay / ax * p2_min).clamp(0.0, 1.0);
    let hi = (ay / ax * p2_max).clamp(0.0, 1.0);
    // near the outer shell the asymptotic value can leave [0, 1]; the enclosure cannot
    let value = value.clamp(0.0, 1.0);
    let err = (value - lo).abs().max((hi - value).abs());
    ProbabilityWithError::new(value, err, "excursion-hit")
}

/// Inner and outer radii `n ln n` and `n ln^2 n` of the excursion annulus.
pub fn annulus_radii(n: f64) -> (f64, f64) {
    let l = n.ln();
    (n * l, n * l * l)
}

/// Probability that an excursion started at `x` hits `y` before leaving
/// `B(n ln^2 n)`, for `|x| >= n ln^-m0 n` and `y` in `B(n) \ B(n ln^-m0 n)`.
pub fn excursion_hit_prob_with(kernel: &PotentialKernel, x: LatticePoint, y: LatticePoint, n: f64, m0: f64) -> Result<ProbabilityWithError> {
    if !(n >= 16.0) || !(m0 > 0.0) {
        return invalid("need n >= 16 and M0 > 0");
    }
    let inner = n / n.ln().powf(m0);
    let (_, r_out) = annulus_radii(n);
    if x.norm() < inner || x.norm() > r_out {
        return invalid(format!("|x| = {} outside [{inner}, {r_out}]", x.norm()));
    }
    if y.norm() < inner || y.norm() > n {
        return invalid(format!("|y| = {} outside [{inner}, {n}]", y.norm()));
    }
    cond_hit_before_exit(kernel, x, y, r_out)
}

/// [`excursion_hit_prob_with`] with `M0 = 1`.
pub fn excursion_hit_prob(kernel: &PotentialKernel, x: LatticePoint, y: LatticePoint, n: f64) -> Result<ProbabilityWithError> {
    excursion_hit_prob_with(kernel, x, y, n, 1.0)
}

/// The displayed closed form `ln ln n / (ln n + 2 ln ln n)` of the per-excursion
/// escape probability. Its error bound is the distance to the value
/// `1 - a(n ln n)/a(n ln^2 n)` (which keeps the constant of `a`), plus the
/// lattice shell width.
pub fn psi_n(n: f64) -> Result<ProbabilityWithError> {
    if !(n >= 16.0) {
        return invalid("psi_n needs n >= 16");
    }
    let (l, ll) = (n.ln(), n.ln().ln());
    let value = ll / (l + 2.0 * ll);
    let def = psi_asymptotic(n);
    let (r_in, r_out) = annulus_radii(n);
    let shell = std::f64::consts::FRAC_1_PI / (r_in - 1.0) / asym(r_out) + 2.0 * GLOBAL_DEVIATION / (r_out * r_out);
    ProbabilityWithError::new(value, (value - def).abs() + shell, "psi")
}

/// `1 - a(n ln n) / a(n ln^2 n)` with the asymptotic `a`.
pub fn psi_asymptotic(n: f64) -> f64 {
    let (r_in, r_out) = annulus_radii(n);
    1.0 - asym(r_in) / asym(r_out)
}

/// Minimum over the internal boundary of `B(n ln^2 n)` of the probability of
/// never entering `B(n ln n)`; a lower bound for every excursion's escape
/// probability, which is what the geometric coupling requires.
pub fn psi_min(kernel: &PotentialKernel, n: f64) -> Result<ProbabilityWithError> {
    if !(n >= 16.0) {
        return invalid("psi needs n >= 16");
    }
    let (r_in, r_out) = annulus_radii(n);
    let (lo_in, hi_in) = entry_shell_range(kernel, r_in);
    let a_in = 0.5 * (lo_in + hi_in);
    let (a_min, err_min) = if r_out <= 1e5 {
        let mut best = f64::INFINITY;
        let mut err: f64 = 0.0;
        for p in Ball::origin(r_out).boundary_sites() {
            let v = kernel.value(p);
            if v < best {
                best = v;
                err = kernel.error_bound(p);
            }
        }
        (best, err)
    } else {
        let s = r_out - 1.0;
        let lo = asym(s) - GLOBAL_DEVIATION / (s * s);
        (lo, asym(r_out) - lo)
    };
    let value = 1.0 - a_in / a_min;
    let err = 0.5 * (hi_in - lo_in) / a_min + a_in * err_min / (a_min * a_min);
    ProbabilityWithError::new(value, err, "psi-min")
}
