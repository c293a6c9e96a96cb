//! Goodness-of-fit statistics and the Kochen–Stone ratio.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub ks: f64,
    /// Half-width of the 95% Dvoretzky–Kiefer–Wolfowitz band.
    pub dkw_epsilon_95: f64,
}

/// `sqrt(ln(2/alpha) / (2m))`.
pub fn dkw_epsilon(m: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * m as f64)).sqrt()
}

/// Kolmogorov–Smirnov distance of the empirical law of `samples` to Uniform[0, 1].
pub fn ks_statistic(samples: &[f64]) -> Result<KsResult> {
    if samples.len() < 2 {
        return invalid("KS statistic needs at least two samples");
    }
    if samples.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("KS samples must lie in [0, 1]");
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        d = d.max((i + 1) as f64 / m - x).max(x - i as f64 / m);
    }
    Ok(KsResult { ks: d, dkw_epsilon_95: dkw_epsilon(s.len(), 0.05) })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Empirical CDF of `samples` evaluated at `points`.
pub fn empirical_cdf(samples: &[f64], points: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    points.iter().map(|&t| s.partition_point(|&v| v <= t) as f64 / s.len() as f64).collect()
}

/// Mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `(sum p)^2 / sum pjoint` over the full index range: the finite-sample
/// version of the Kochen–Stone lower bound on the probability that infinitely
/// many of the events occur.
pub fn kochen_stone_bound(p: &[f64], pjoint: &[Vec<f64>]) -> Result<f64> {
    const TOL: f64 = 1e-12;
    let k = p.len();
    if k == 0 || pjoint.len() != k || pjoint.iter().any(|r| r.len() != k) {
        return invalid("pjoint must be a square matrix matching p");
    }
    for i in 0..k {
        if !(0.0..=1.0).contains(&p[i]) {
            return invalid(format!("p[{i}] = {} is not a probability", p[i]));
        }
        if (pjoint[i][i] - p[i]).abs() > TOL {
            return invalid(format!("pjoint[{i}][{i}] differs from p[{i}]"));
        }
        for j in 0..k {
            let v = pjoint[i][j];
            if (v - pjoint[j][i]).abs() > TOL {
                return invalid("pjoint is not symmetric");
            }
            if v < (p[i] + p[j] - 1.0).max(0.0) - TOL || v > p[i].min(p[j]) + TOL {
                return invalid(format!("pjoint[{i}][{j}] = {v} is inconsistent with p"));
            }
        }
    }
    let s: f64 = p.iter().sum();
    let t: f64 = pjoint.iter().flatten().sum();
    if t <= 0.0 {
        return Ok(0.0);
    }
    Ok(s * s / t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_point_mass() {
        assert_eq!(ks_statistic(&[0.5; 10]).unwrap().ks, 0.5);
    }

    #[test]
    fn dkw_value() {
        assert!((dkw_epsilon(10_000, 0.05) - 0.013_58).abs() < 1e-5);
    }

    #[test]
    fn ks_uniform_grid() {
        let m = 999;
        let s: Vec<f64> = (1..=m).map(|i| i as f64 / (m + 1) as f64).collect();
        let r = ks_statistic(&s).unwrap();
        assert!(r.ks <= 1.0 / (m + 1) as f64 + 1.0 / m as f64);
        assert!(ks_statistic(&[0.1, 1.5]).is_err());
    }

    #[test]
    fn kochen_stone_examples() {
        assert_eq!(kochen_stone_bound(&[0.5], &[vec![0.5]]).unwrap(), 0.5);
        let p = [1.0, 0.5, 1.0 / 3.0];
        let pj: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { p[i] } else { p[i] * p[j] }).collect()).collect();
        let b = kochen_stone_bound(&p, &pj).unwrap();
        assert!((b - 1.833_333_333_333_333_3f64.powi(2) / 3.833_333_333_333_333).abs() < 1e-12);
        assert!((b - 0.8768).abs() < 1e-4);
        let same = vec![vec![0.3; 4]; 4];
        assert!((kochen_stone_bound(&[0.3; 4], &same).unwrap() - 0.3).abs() < 1e-12);
        let bad = vec![vec![0.5, 0.9], vec![0.9, 0.5]];
        assert!(kochen_stone_bound(&[0.5, 0.5], &bad).is_err());
    }

    #[test]
    fn two_sample_ks() {
        assert_eq!(ks_two_sample(&[0.1, 0.2], &[0.1, 0.2]), 0.0);
        assert_eq!(ks_two_sample(&[0.1, 0.2], &[0.3, 0.4]), 1.0);
    }

    #[test]
    fn cdf_and_median() {
        assert_eq!(empirical_cdf(&[0.1, 0.5, 0.9], &[0.0, 0.5, 1.0]), vec![0.0, 2.0 / 3.0, 1.0]);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
