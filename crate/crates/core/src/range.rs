//! Target sets and statistics of the visited range.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, LatticePoint};
use crate::walk::{Observer, Target};

const DENSE_INDEX_LIMIT: i128 = 1 << 24;

#[derive(Clone, Debug)]
enum SiteIndex {
    Dense { x0: i64, y0: i64, width: i64, height: i64, cells: Vec<u32> },
    Hashed(HashMap<LatticePoint, u32>),
}

/// A finite set of lattice sites with fast membership and distance bounds.
#[derive(Clone, Debug)]
pub struct SiteSet {
    label: String,
    sites: Vec<LatticePoint>,
    index: SiteIndex,
    min_norm: f64,
    max_norm: f64,
    bbox: (i64, i64, i64, i64),
}

impl SiteSet {
    pub fn new(label: impl Into<String>, mut sites: Vec<LatticePoint>) -> Result<Self> {
        sites.sort_unstable();
        sites.dedup();
        if sites.is_empty() {
            return invalid("site set is empty");
        }
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        let (mut min_norm, mut max_norm) = (f64::INFINITY, 0.0f64);
        for p in &sites {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
            min_norm = min_norm.min(p.norm());
            max_norm = max_norm.max(p.norm());
        }
        let area = (x1 - x0 + 1) as i128 * (y1 - y0 + 1) as i128;
        let index = if area <= DENSE_INDEX_LIMIT {
            let (width, height) = (x1 - x0 + 1, y1 - y0 + 1);
            let mut cells = vec![u32::MAX; (width * height) as usize];
            for (i, p) in sites.iter().enumerate() {
                cells[((p.y - y0) * width + (p.x - x0)) as usize] = i as u32;
            }
            SiteIndex::Dense { x0, y0, width, height, cells }
        } else {
            SiteIndex::Hashed(sites.iter().enumerate().map(|(i, &p)| (p, i as u32)).collect())
        };
        Ok(SiteSet { label: label.into(), sites, index, min_norm, max_norm, bbox: (x0, y0, x1, y1) })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sites(&self) -> &[LatticePoint] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn min_norm(&self) -> f64 {
        self.min_norm
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    #[inline]
    pub fn index_of(&self, p: LatticePoint) -> Option<usize> {
        match &self.index {
            SiteIndex::Dense { x0, y0, width, height, cells } => {
                let (dx, dy) = (p.x - x0, p.y - y0);
                if dx < 0 || dy < 0 || dx >= *width || dy >= *height {
                    return None;
                }
                let c = cells[(dy * width + dx) as usize];
                (c != u32::MAX).then_some(c as usize)
            }
            SiteIndex::Hashed(m) => m.get(&p).map(|&i| i as usize),
        }
    }
}

impl Target for SiteSet {
    #[inline]
    fn contains(&self, p: LatticePoint) -> bool {
        self.index_of(p).is_some()
    }

    #[inline]
    fn distance_lower_bound(&self, p: LatticePoint) -> f64 {
        let r = p.norm();
        let radial = if r > self.max_norm {
            r - self.max_norm
        } else if r < self.min_norm {
            self.min_norm - r
        } else {
            0.0
        };
        let (x0, y0, x1, y1) = self.bbox;
        let dx = (x0 - p.x).max(p.x - x1).max(0) as f64;
        let dy = (y0 - p.y).max(p.y - y1).max(0) as f64;
        radial.max(dx.hypot(dy))
    }
}

/// Target set descriptors: `circle:r`, `annulus:r1,r2`, `axis`, `points:FILE`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetSpec {
    /// Internal boundary of `B(r)`.
    Circle { r: f64 },
    /// `B(r2) \ B(r1)`.
    Annulus { r1: f64, r2: f64 },
    /// The positive horizontal half-axis `{(k, 0) : k >= 1}`.
    Axis,
    /// Sites listed as `x,y` lines in a file.
    Points { path: String },
}

impl std::str::FromStr for SetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}' in set spec '{s}'")));
        match kind {
            "circle" => Ok(SetSpec::Circle { r: num(rest)? }),
            "annulus" => {
                let (a, b) = rest.split_once(',').ok_or_else(|| Error::Parse(format!("annulus needs r1,r2: '{s}'")))?;
                Ok(SetSpec::Annulus { r1: num(a)?, r2: num(b)? })
            }
            "axis" if rest.is_empty() => Ok(SetSpec::Axis),
            "points" if !rest.is_empty() => Ok(SetSpec::Points { path: rest.to_string() }),
            _ => Err(Error::Parse(format!("unknown set spec '{s}'"))),
        }
    }
}

impl std::fmt::Display for SetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SetSpec::Circle { r } => write!(f, "circle:{r}"),
            SetSpec::Annulus { r1, r2 } => write!(f, "annulus:{r1},{r2}"),
            SetSpec::Axis => write!(f, "axis"),
            SetSpec::Points { path } => write!(f, "points:{path}"),
        }
    }
}

impl SetSpec {
    pub fn build(&self) -> Result<SiteSet> {
        let sites = match self {
            SetSpec::Circle { r } => Ball::origin(*r).boundary_sites(),
            SetSpec::Annulus { r1, r2 } => {
                if r1 >= r2 {
                    return invalid("annulus needs r1 < r2");
                }
                let inner = Ball::origin(*r1);
                Ball::origin(*r2).sites().into_iter().filter(|&p| !inner.contains(p)).collect()
            }
            SetSpec::Axis => return invalid("the axis is infinite"),
            SetSpec::Points { path } => read_points(Path::new(path))?,
        };
        SiteSet::new(self.to_string(), sites)
    }
}

fn read_points(path: &Path) -> Result<Vec<LatticePoint>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "x,y" {
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| Error::Parse(format!("line {}: expected x,y", ln + 1)))?;
        let p = |t: &str| t.trim().parse::<i64>().map_err(|_| Error::Parse(format!("line {}: bad integer '{t}'", ln + 1)));
        out.push(LatticePoint::new(p(a)?, p(b)?));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    /// Visited fraction `R`.
    pub visited: f64,
    /// Unvisited fraction `V = 1 - R`.
    pub unvisited: f64,
}

/// Fractions of `a` inside and outside `range`.
pub fn visited_fraction(a: &SiteSet, range: &HashSet<LatticePoint>) -> Result<Fractions> {
    if a.is_empty() {
        return invalid("empty target set");
    }
    let hit = a.sites().iter().filter(|p| range.contains(p)).count();
    let visited = hit as f64 / a.len() as f64;
    Ok(Fractions { visited, unvisited: 1.0 - visited })
}

/// Clustering functional: the largest fraction of `a` inside a ball of radius
/// `n ln^-m0 n` centred at a site of `a`.
pub fn ell_a(a: &SiteSet, n: f64, m0: f64) -> Result<f64> {
    if !(n >= 16.0) || !(m0 > 0.0) {
        return invalid("ell_A needs n >= 16 and M0 > 0");
    }
    let rho = n / n.ln().powf(m0);
    let rho2 = rho * rho;
    let sites = a.sites();
    let (x0, y0, x1, y1) = a.bbox;
    let width = (x1 - x0 + 1) as i128;
    let height = (y1 - y0 + 1) as i128;
    let best = if width * height <= DENSE_INDEX_LIMIT * 4 {
        // per-row prefix counts: each ball is a stack of row intervals
        let (w, h) = (width as usize, height as usize);
        let mut prefix = vec![0u32; h * (w + 1)];
        for p in sites {
            prefix[(p.y - y0) as usize * (w + 1) + (p.x - x0) as usize + 1] += 1;
        }
        for row in 0..h {
            let base = row * (w + 1);
            for i in 1..=w {
                prefix[base + i] += prefix[base + i - 1];
            }
        }
        let reach = rho.floor() as i64;
        let mut best = 0u64;
        for p in sites {
            let mut count = 0u64;
            for dy in -reach..=reach {
                let y = p.y + dy;
                if y < y0 || y > y1 {
                    continue;
                }
                let span = (rho2 - (dy * dy) as f64).sqrt().floor() as i64;
                let lo = (p.x - span).max(x0);
                let hi = (p.x + span).min(x1);
                if lo > hi {
                    continue;
                }
                let base = (y - y0) as usize * (w + 1);
                count += (prefix[base + (hi - x0) as usize + 1] - prefix[base + (lo - x0) as usize]) as u64;
            }
            best = best.max(count);
        }
        best
    } else {
        let mut buckets: HashMap<(i64, i64), Vec<LatticePoint>> = HashMap::new();
        let cell = rho.max(1.0);
        let key = |p: &LatticePoint| ((p.x as f64 / cell).floor() as i64, (p.y as f64 / cell).floor() as i64);
        for p in sites {
            buckets.entry(key(p)).or_default().push(*p);
        }
        let mut best = 0u64;
        for p in sites {
            let (cx, cy) = key(p);
            let mut count = 0u64;
            for i in -1..=1 {
                for j in -1..=1 {
                    if let Some(v) = buckets.get(&(cx + i, cy + j)) {
                        count += v.iter().filter(|q| (**q - *p).norm_sq() <= rho2).count() as u64;
                    }
                }
            }
            best = best.max(count);
        }
        best
    };
    Ok(best as f64 / sites.len() as f64)
}

/// Leading-order probability that a fixed site of `B(n)` is unvisited after
/// `k` excursions: `exp(-k ln ln n / ln n)`.
pub fn survival_curve_mu(k: u64, n: f64) -> Result<f64> {
    if !(n >= 16.0) {
        return invalid("survival curve needs n >= 16");
    }
    Ok((-(k as f64) * n.ln().ln() / n.ln()).exp())
}

/// Unvisited fraction after each excursion; `ks[i]` counts excursions, 0 being the initial piece.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub ks: Vec<u64>,
    pub fractions: Vec<f64>,
}

impl CoverageCurve {
    pub fn is_nonincreasing(&self) -> bool {
        self.fractions.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "V"])?;
        for (k, v) in self.ks.iter().zip(&self.fractions) {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least `k` whose unvisited fraction is at most `s`.
pub fn phi_s(curve: &CoverageCurve, s: f64) -> Result<Option<u64>> {
    if !(s > 0.0 && s <= 1.0) {
        return invalid(format!("s = {s} outside (0, 1]"));
    }
    Ok(curve.ks.iter().zip(&curve.fractions).find(|(_, &v)| v <= s).map(|(&k, _)| k))
}

/// Records, for every site of a target set, the index of the excursion during
/// which it was first visited.
#[derive(Clone, Debug)]
pub struct CoverageTracker<'a> {
    set: &'a SiteSet,
    first_visit: Vec<u32>,
    covered: usize,
    current: u32,
}

pub const NEVER: u32 = u32::MAX;

impl<'a> CoverageTracker<'a> {
    pub fn new(set: &'a SiteSet) -> Self {
        CoverageTracker { set, first_visit: vec![NEVER; set.len()], covered: 0, current: 0 }
    }

    pub fn set_piece(&mut self, k: u32) {
        self.current = k;
    }

    pub fn covered(&self) -> usize {
        self.covered
    }

    pub fn first_visits(&self) -> &[u32] {
        &self.first_visit
    }

    pub fn into_first_visits(self) -> Vec<u32> {
        self.first_visit
    }

    pub fn unvisited_fraction(&self) -> f64 {
        1.0 - self.covered as f64 / self.set.len() as f64
    }

    /// Unvisited fraction after pieces `0..=k` for `k = 0..=last`.
    pub fn curve(&self, last: u32) -> CoverageCurve {
        curve_from_first_visits(&self.first_visit, last)
    }
}

/// Coverage curve from first-visit indices.
pub fn curve_from_first_visits(first_visit: &[u32], last: u32) -> CoverageCurve {
    let mut per_piece = vec![0u64; last as usize + 1];
    for &f in first_visit {
        if f <= last {
            per_piece[f as usize] += 1;
        }
    }
    let total = first_visit.len() as f64;
    let mut covered = 0u64;
    let mut curve = CoverageCurve::default();
    for (k, c) in per_piece.into_iter().enumerate() {
        covered += c;
        curve.ks.push(k as u64);
        curve.fractions.push(1.0 - covered as f64 / total);
    }
    curve
}

impl Observer for CoverageTracker<'_> {
    #[inline]
    fn watched_distance(&self, p: LatticePoint) -> f64 {
        if self.covered == self.first_visit.len() {
            f64::INFINITY
        } else {
            self.set.distance_lower_bound(p)
        }
    }

    #[inline]
    fn on_site(&mut self, p: LatticePoint) {
        if let Some(i) = self.set.index_of(p) {
            if self.first_visit[i] == NEVER {
                self.first_visit[i] = self.current;
                self.covered += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub k: u32,
    pub chains: usize,
    pub pairs: usize,
    pub min_separation: f64,
    pub max_covariance: f64,
    /// Monte Carlo standard error of the pair attaining the maximum.
    pub standard_error: f64,
    pub mean_covariance: f64,
}

/// Covariance of the unvisited indicators `1{first_visit > k}` over pairs of
/// sites at distance at least `min_separation`; at most `max_pairs` pairs,
/// chosen by a deterministic stride.
pub fn pairwise_covariance_probe(
    a: &SiteSet,
    first_visits: &[Vec<u32>],
    k: u32,
    min_separation: f64,
    max_pairs: usize,
) -> Result<CovarianceSummary> {
    let m = first_visits.len();
    if m < 100 {
        return invalid(format!("covariance probe needs at least 100 chains, got {m}"));
    }
    if first_visits.iter().any(|f| f.len() != a.len()) {
        return invalid("first-visit vectors do not match the target set");
    }
    let sites = a.sites();
    let mut pairs = Vec::new();
    let total = sites.len() * sites.len();
    let stride = (total / (4 * max_pairs.max(1))).max(1);
    let mut idx = 0usize;
    while idx < total && pairs.len() < max_pairs {
        let (i, j) = (idx / sites.len(), idx % sites.len());
        if i < j && sites[i].distance(sites[j]) >= min_separation {
            pairs.push((i, j));
        }
        idx += stride;
    }
    let mf = m as f64;
    let mut max_cov = f64::NEG_INFINITY;
    let mut se_at_max = 0.0;
    let mut sum = 0.0;
    for &(i, j) in &pairs {
        let (mut si, mut sj, mut sij) = (0.0, 0.0, 0.0);
        for f in first_visits {
            let xi = (f[i] > k) as u8 as f64;
            let xj = (f[j] > k) as u8 as f64;
            si += xi;
            sj += xj;
            sij += xi * xj;
        }
        let (mi, mj) = (si / mf, sj / mf);
        let cov = sij / mf - mi * mj;
        // delta-method standard error of the product-moment estimate
        let var = (mi * (1.0 - mi) * mj * (1.0 - mj) + cov * (1.0 - 2.0 * mi) * (1.0 - 2.0 * mj) - cov * cov).max(0.0);
        let se = (var / mf).sqrt().max(1.0 / mf);
        sum += cov;
        if cov > max_cov {
            max_cov = cov;
            se_at_max = se;
        }
    }
    if pairs.is_empty() {
        return invalid("no site pairs at the requested separation");
    }
    Ok(CovarianceSummary {
        k,
        chains: m,
        pairs: pairs.len(),
        min_separation,
        max_covariance: max_cov,
        standard_error: se_at_max,
        mean_covariance: sum / pairs.len() as f64,
    })
}
