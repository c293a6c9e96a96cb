//! The potential kernel `a` of the planar simple random walk.
//!
//! Values are tabulated on the octant `0 <= y <= x <= N` by numerical
//! quadrature of the Fourier representation, with the diagonal filled from its
//! closed form. Beyond the table the two-term asymptotic expansion is used.

use std::f64::consts::{FRAC_2_PI, LN_2, PI};
use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Additive constant of the asymptotic expansion, `(2 gamma + 3 ln 2) / pi`.
pub const KAPPA: f64 = (2.0 * EULER_GAMMA + 3.0 * LN_2) / PI;
/// `(2 gamma + 3 ln 2) / (2 ln 2)`.
pub const GAMMA_STAR: f64 = (2.0 * EULER_GAMMA + 3.0 * LN_2) / (2.0 * LN_2);

/// Bound on `|a(x) - asymptotic_a(|x|)| * |x|^2` valid for every `x != 0`.
pub const GLOBAL_DEVIATION: f64 = 0.1;
/// Bound on `|a(x) - corrected(x)| * |x|^4` for `|x| >= 16`, where `corrected`
/// includes the anisotropic `|x|^-2` term.
pub const CORRECTED_DEVIATION: f64 = 0.2;

const DEFAULT_MEMORY_CAP: usize = 1 << 30;
const GL_ORDER: usize = 24;

/// `(2/pi) ln r + kappa`.
pub fn asymptotic_a(r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return invalid(format!("asymptotic_a needs r >= 1, got {r}"));
    }
    Ok(asym(r))
}

#[inline]
pub(crate) fn asym(r: f64) -> f64 {
    FRAC_2_PI * r.ln() + KAPPA
}

/// Inverse of the asymptotic form: the radius at which it reaches `value`.
pub fn asymptotic_radius(value: f64) -> f64 {
    ((value - KAPPA) / FRAC_2_PI).exp()
}

/// Asymptotic value with the leading anisotropic correction `-cos(4 phi) / (6 pi r^2)`.
#[inline]
pub(crate) fn corrected_asym(p: LatticePoint) -> f64 {
    let (x, y) = (p.x as f64, p.y as f64);
    let r2 = x * x + y * y;
    let (x2, y2) = (x * x, y * y);
    let cos4 = (x2 * x2 - 6.0 * x2 * y2 + y2 * y2) / (r2 * r2);
    0.5 * FRAC_2_PI * r2.ln() + KAPPA - cos4 / (6.0 * PI * r2)
}

/// `a(n, n) = (4/pi) sum_{j=1..n} 1/(2j-1)`.
pub fn diagonal_value(n: u64) -> f64 {
    let s: f64 = (1..=n).map(|j| 1.0 / (2 * j - 1) as f64).sum();
    4.0 / PI * s
}

/// A kernel value together with its absolute error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub error_bound: f64,
    /// `true` when the value came from the table.
    pub exact: bool,
}

/// Tabulated potential kernel. Immutable after construction.
#[derive(Clone, Debug)]
pub struct PotentialKernel {
    /// Largest tabulated coordinate `N`; the octant `0 <= y <= x <= N` is stored.
    n: u64,
    max_radius: f64,
    table: Vec<f64>,
    c0: f64,
}

#[inline]
fn tri(i: u64, j: u64) -> usize {
    (i * (i + 1) / 2 + j) as usize
}

impl PotentialKernel {
    /// Tabulates every site with norm at most `max_radius`.
    pub fn build(max_radius: f64) -> Result<Self> {
        Self::build_with_cap(max_radius, DEFAULT_MEMORY_CAP)
    }

    pub fn build_with_cap(max_radius: f64, memory_cap_bytes: usize) -> Result<Self> {
        if !(max_radius >= 2.0) || !max_radius.is_finite() {
            return invalid(format!("kernel radius must be at least 2, got {max_radius}"));
        }
        let n = max_radius.floor() as u64 + 1;
        let len = tri(n, n) + 1;
        let bytes = len.saturating_mul(std::mem::size_of::<f64>());
        if bytes > memory_cap_bytes {
            return Err(Error::Resource(format!(
                "kernel table of radius {max_radius} needs {bytes} bytes (cap {memory_cap_bytes})"
            )));
        }
        let columns: Vec<Vec<f64>> = crate::par::map_range(n as usize + 1, |i| column(i as u64));
        let mut table = Vec::with_capacity(len);
        for col in columns {
            table.extend(col);
        }
        let mut k = PotentialKernel { n, max_radius, table, c0: 0.0 };
        k.c0 = k.measure_c0();
        Ok(k)
    }

    /// Rebuilds a kernel from CSV rows `x,y,a` covering the octant.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut entries = Vec::new();
        let mut n = 0u64;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("expected 3 fields, got {}", rec.len())));
            }
            let parse_i = |s: &str| s.trim().parse::<u64>().map_err(|e| Error::Parse(e.to_string()));
            let (i, j) = (parse_i(&rec[0])?, parse_i(&rec[1])?);
            let v: f64 = rec[2].trim().parse().map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?;
            if j > i {
                return Err(Error::Parse(format!("row ({i},{j}) is outside the octant")));
            }
            n = n.max(i);
            entries.push((i, j, v));
        }
        if n < 3 {
            return Err(Error::Parse("kernel table too small".into()));
        }
        let len = tri(n, n) + 1;
        if entries.len() != len {
            return Err(Error::Parse(format!("expected {len} rows, found {}", entries.len())));
        }
        let mut table = vec![f64::NAN; len];
        for (i, j, v) in entries {
            table[tri(i, j)] = v;
        }
        if table.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse("duplicate or missing rows".into()));
        }
        let mut k = PotentialKernel { n, max_radius: (n - 1) as f64, table, c0: 0.0 };
        k.c0 = k.measure_c0();
        Ok(k)
    }

    /// Writes the octant table as CSV rows `x,y,a` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "a"])?;
        for i in 0..=self.n {
            for j in 0..=i {
                w.write_record([i.to_string(), j.to_string(), format_sig17(self.table[tri(i, j)])])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    /// Largest coordinate covered by the table.
    pub fn table_extent(&self) -> u64 {
        self.n
    }

    /// Measured `max |a(x) - asymptotic_a(|x|)| * |x|^2` over tabulated `|x| >= 10`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn gamma(&self) -> f64 {
        EULER_GAMMA
    }

    pub fn kappa(&self) -> f64 {
        KAPPA
    }

    pub fn gamma_star(&self) -> f64 {
        GAMMA_STAR
    }

    #[inline]
    pub fn in_table(&self, p: LatticePoint) -> bool {
        let (i, _) = p.octant();
        i <= self.n
    }

    /// Table lookup; the caller guarantees `in_table(p)`.
    #[inline]
    pub(crate) fn table_value(&self, p: LatticePoint) -> f64 {
        let (i, j) = p.octant();
        self.table[tri(i, j)]
    }

    /// `a(p)`: exact inside the table, corrected asymptotics outside.
    #[inline]
    pub fn value(&self, p: LatticePoint) -> f64 {
        let (i, j) = p.octant();
        if i <= self.n {
            self.table[tri(i, j)]
        } else {
            corrected_asym(p)
        }
    }

    pub fn get(&self, p: LatticePoint) -> KernelValue {
        if self.in_table(p) {
            KernelValue { value: self.table_value(p), error_bound: 0.0, exact: true }
        } else {
            let r2 = p.norm_sq();
            KernelValue { value: corrected_asym(p), error_bound: CORRECTED_DEVIATION / (r2 * r2), exact: false }
        }
    }

    /// Upper bound on `|value(p) - a(p)|`.
    #[inline]
    pub fn error_bound(&self, p: LatticePoint) -> f64 {
        if self.in_table(p) {
            0.0
        } else {
            let r2 = p.norm_sq();
            CORRECTED_DEVIATION / (r2 * r2)
        }
    }

    /// `|mean of neighbour values - a(p)|`, when all neighbours are tabulated.
    pub fn harmonicity_residual(&self, p: LatticePoint) -> Option<f64> {
        if p.is_origin() || !p.neighbours().iter().all(|&q| self.in_table(q)) {
            return None;
        }
        let mean = p.neighbours().iter().map(|&q| self.table_value(q)).sum::<f64>() / 4.0;
        Some((mean - self.table_value(p)).abs())
    }

    fn measure_c0(&self) -> f64 {
        let mut c0: f64 = 0.0;
        let r_max = self.max_radius;
        for i in 0..=self.n {
            for j in 0..=i {
                let p = LatticePoint::new(i as i64, j as i64);
                let r2 = p.norm_sq();
                if r2 < 100.0 || r2 > r_max * r_max {
                    continue;
                }
                let d = (self.table[tri(i, j)] - asym(r2.sqrt())).abs() * r2;
                c0 = c0.max(d);
            }
        }
        c0
    }
}

/// Formats with 17 significant digits in plain decimal notation.
pub fn format_sig17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let e = v.abs().log10().floor() as i32;
    if !(-5..=16).contains(&e) {
        return format!("{v:.16e}");
    }
    let decimals = (16 - e).max(0) as usize;
    format!("{v:.decimals$}")
}

fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static GL: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    GL.get_or_init(|| {
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        let n = GL_ORDER;
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Values `a(i, j)` for `j = 0..=i`.
///
/// Uses `a(i, j) = (2/pi) int_0^pi (1 - cos(j t) s(t)^i) / sinh(u(t)) dt` where
/// `cosh u = 2 - cos t` and `s = e^{-u}`; the integrand is smooth but varies on the
/// scale `1/i` near zero, hence the geometrically graded panels.
fn column(i: u64) -> Vec<f64> {
    if i == 0 {
        return vec![0.0];
    }
    let (gx, gw) = gauss_legendre();
    let h = 1.0 / (i as f64 + 1.0);
    let mut edges = vec![0.0, h];
    let mut e = h;
    while 2.0 * e < PI {
        e *= 2.0;
        edges.push(e);
    }
    edges.push(PI);

    let mut theta = Vec::with_capacity(edges.len() * GL_ORDER);
    let mut base = Vec::with_capacity(theta.capacity());
    let mut em = Vec::with_capacity(theta.capacity());
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for k in 0..GL_ORDER {
            let t = mid + half * gx[k];
            let sh = (0.5 * t).sin();
            let one_minus_cos = 2.0 * sh * sh;
            let s = sh * (2.0 * (2.0 + one_minus_cos)).sqrt();
            let lt = (one_minus_cos - s).ln_1p();
            theta.push(t);
            base.push(half * gw[k] / s);
            em.push((i as f64 * lt).exp_m1());
        }
    }

    let mut out = Vec::with_capacity(i as usize + 1);
    for j in 0..=i {
        let v = if j == i {
            diagonal_value(i)
        } else if i == 1 && j == 0 {
            1.0
        } else {
            let jf = j as f64;
            let mut acc = 0.0;
            for k in 0..theta.len() {
                let sj = (0.5 * jf * theta[k]).sin();
                let one_minus_cos_j = 2.0 * sj * sj;
                let num = one_minus_cos_j - (1.0 - one_minus_cos_j) * em[k];
                acc += base[k] * num;
            }
            FRAC_2_PI * acc
        };
        out.push(v);
    }
    out
}

/// Kernel values on `0 <= y <= x <= n` by the classical recurrence that
/// starts from the diagonal and the axis value `a(1,0) = 1` and propagates the
/// harmonic equation. Accurate only for small `n`; kept as an independent check.
pub fn recurrence_table(n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0f64; n + 1]; n + 1];
    let get = |a: &Vec<Vec<f64>>, x: i64, y: i64| -> f64 {
        let (p, q) = (x.unsigned_abs() as usize, y.unsigned_abs() as usize);
        if p >= q {
            a[p][q]
        } else {
            a[q][p]
        }
    };
    if n >= 1 {
        a[1][0] = 1.0;
        a[1][1] = diagonal_value(1);
    }
    for m in 2..=n {
        a[m][m] = diagonal_value(m as u64);
        // harmonicity at (m-1, m-1) and its mirror image
        a[m][m - 1] = 2.0 * a[m - 1][m - 1] - a[m - 1][m - 2];
        for j in (0..m - 1).rev() {
            // harmonicity at (m-1, j)
            let (cx, cy) = ((m - 1) as i64, j as i64);
            a[m][j] = 4.0 * get(&a, cx, cy) - get(&a, cx - 1, cy) - get(&a, cx, cy + 1) - get(&a, cx, cy - 1);
        }
    }
    (0..=n).map(|i| a[i][..=i].to_vec()).collect()
}
