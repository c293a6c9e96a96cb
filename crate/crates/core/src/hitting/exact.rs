//! Exact hitting probabilities on finite domains by solving the discrete
//! Dirichlet problem.
//!
//! Both walks are reversible: the simple walk with unit conductances, the
//! conditioned walk with conductances `a(x) a(y)`. The harmonic equations
//! therefore form a symmetric positive definite system, solved by
//! Jacobi-preconditioned conjugate gradients.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernel::PotentialKernel;
use crate::lattice::LatticePoint;
use crate::walk::WalkKind;

pub const MAX_EXACT_SITES: usize = 100_000;
const RELATIVE_TOLERANCE: f64 = 1e-15;
const ACCEPTED_RESIDUAL: f64 = 1e-12;

/// Hitting probabilities of each absorbing class from every domain site.
#[derive(Clone, Debug, Serialize)]
pub struct ExactHitting {
    pub sites: Vec<LatticePoint>,
    /// `probabilities[c][i]`: probability that the walk from `sites[i]` is absorbed in class `c`.
    pub probabilities: Vec<Vec<f64>>,
    #[serde(skip)]
    index: HashMap<LatticePoint, usize>,
}

impl ExactHitting {
    pub fn probability(&self, p: LatticePoint, class: usize) -> Option<f64> {
        self.index.get(&p).map(|&i| self.probabilities[class][i])
    }
}

struct System {
    sites: Vec<LatticePoint>,
    index: HashMap<LatticePoint, usize>,
    diag: Vec<f64>,
    /// Interior couplings `(j, c)` per row.
    off: Vec<Vec<(usize, f64)>>,
    /// Boundary couplings `(boundary site, c)` per row.
    bnd: Vec<Vec<(LatticePoint, f64)>>,
}

fn conductance(kernel: &PotentialKernel, kind: WalkKind, x: LatticePoint, y: LatticePoint) -> f64 {
    match kind {
        WalkKind::Simple => 1.0,
        WalkKind::Conditioned => kernel.value(x) * kernel.value(y),
    }
}

fn assemble(
    kernel: &PotentialKernel,
    domain: &[LatticePoint],
    is_boundary: &dyn Fn(LatticePoint) -> bool,
    kind: WalkKind,
) -> Result<System> {
    if domain.is_empty() {
        return invalid("empty domain");
    }
    if domain.len() > MAX_EXACT_SITES {
        return Err(Error::Resource(format!("{} sites exceed the limit of {MAX_EXACT_SITES}", domain.len())));
    }
    let mut sites = domain.to_vec();
    sites.sort_unstable();
    sites.dedup();
    let index: HashMap<LatticePoint, usize> = sites.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    if kind == WalkKind::Conditioned && index.contains_key(&LatticePoint::ORIGIN) {
        return invalid("the conditioned walk's domain cannot contain the origin");
    }
    let mut diag = vec![0.0; sites.len()];
    let mut off = vec![Vec::new(); sites.len()];
    let mut bnd = vec![Vec::new(); sites.len()];
    for (i, &x) in sites.iter().enumerate() {
        if is_boundary(x) {
            return invalid(format!("site {x} is both interior and absorbing"));
        }
        for y in x.neighbours() {
            let c = conductance(kernel, kind, x, y);
            if c == 0.0 {
                continue;
            }
            diag[i] += c;
            if let Some(&j) = index.get(&y) {
                off[i].push((j, c));
            } else if is_boundary(y) {
                bnd[i].push((y, c));
            } else {
                return invalid(format!("neighbour {y} of {x} is neither in the domain nor absorbing"));
            }
        }
    }
    // every component must reach the boundary, otherwise the system is singular
    let mut seen = vec![false; sites.len()];
    for s in 0..sites.len() {
        if seen[s] {
            continue;
        }
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        let mut touches = false;
        while let Some(i) = queue.pop_front() {
            touches |= !bnd[i].is_empty();
            for &(j, _) in &off[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if !touches {
            return Err(Error::Singular(format!("component of {} never reaches the absorbing set", sites[s])));
        }
    }
    Ok(System { sites, index, diag, off, bnd })
}

impl System {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..u.len() {
            let mut v = self.diag[i] * u[i];
            for &(j, c) in &self.off[i] {
                v -= c * u[j];
            }
            out[i] = v;
        }
    }

    fn solve(&self, values: &dyn Fn(LatticePoint) -> f64) -> Result<Vec<f64>> {
        let n = self.sites.len();
        let b: Vec<f64> = (0..n).map(|i| self.bnd[i].iter().map(|&(y, c)| c * values(y)).sum()).collect();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut u: Vec<f64> = (0..n).map(|i| b[i] / self.diag[i]).collect();
        let mut r = vec![0.0; n];
        self.apply(&u, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let mut z: Vec<f64> = (0..n).map(|i| r[i] / self.diag[i]).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 20 * n + 1000;
        let mut best = f64::INFINITY;
        for _ in 0..max_iter {
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
            best = best.min(rnorm);
            if rnorm <= RELATIVE_TOLERANCE {
                return Ok(u);
            }
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                u[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
                z[i] = r[i] / self.diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        // recompute the true residual; stagnation at float noise is acceptable
        self.apply(&u, &mut ap);
        let res = (0..n).map(|i| (b[i] - ap[i]).powi(2)).sum::<f64>().sqrt() / bnorm;
        if res <= ACCEPTED_RESIDUAL {
            Ok(u)
        } else {
            Err(Error::Numeric(format!("conjugate gradients stalled at relative residual {res:.3e} (best {best:.3e})")))
        }
    }
}

/// Probability of absorption in each class of `absorbing`, from every site of `domain`.
pub fn solve_hitting_exact(
    kernel: &PotentialKernel,
    domain: &[LatticePoint],
    absorbing: &[Vec<LatticePoint>],
    kind: WalkKind,
) -> Result<ExactHitting> {
    if absorbing.is_empty() || absorbing.iter().any(|c| c.is_empty()) {
        return invalid("absorbing classes must be nonempty");
    }
    let mut class_of: HashMap<LatticePoint, usize> = HashMap::new();
    for (c, class) in absorbing.iter().enumerate() {
        for &p in class {
            if class_of.insert(p, c).is_some_and(|old| old != c) {
                return invalid(format!("site {p} belongs to two absorbing classes"));
            }
        }
    }
    let sys = assemble(kernel, domain, &|p| class_of.contains_key(&p), kind)?;
    let mut probabilities = Vec::with_capacity(absorbing.len());
    for c in 0..absorbing.len() {
        let u = sys.solve(&|p| if class_of.get(&p) == Some(&c) { 1.0 } else { 0.0 })?;
        probabilities.push(u.into_iter().map(|v| v.clamp(0.0, 1.0)).collect());
    }
    Ok(ExactHitting { sites: sys.sites, probabilities, index: sys.index })
}

/// Solves `u = f` on the boundary, `u` harmonic for the walk on the domain;
/// returns `E_x[f(X_stop)]` for every domain site.
pub fn solve_boundary_values(
    kernel: &PotentialKernel,
    domain: &[LatticePoint],
    boundary: &HashMap<LatticePoint, f64>,
    kind: WalkKind,
) -> Result<HashMap<LatticePoint, f64>> {
    let sys = assemble(kernel, domain, &|p| boundary.contains_key(&p), kind)?;
    let u = sys.solve(&|p| boundary[&p])?;
    Ok(sys.sites.iter().copied().zip(u).collect())
}

/// Sites of `B(r)` minus its internal boundary, the boundary, and optionally
/// with a set of excluded sites moved to the boundary.
pub fn ball_domain(r: f64, exclude: &HashSet<LatticePoint>) -> (Vec<LatticePoint>, Vec<LatticePoint>) {
    let ball = crate::lattice::Ball::origin(r);
    let boundary = ball.boundary_sites();
    let bset: HashSet<_> = boundary.iter().copied().collect();
    let interior = ball.sites().into_iter().filter(|p| !bset.contains(p) && !exclude.contains(p)).collect();
    (interior, boundary)
}
