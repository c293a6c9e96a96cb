//! Uniform law of the unvisited fraction of a target set.

use serde::{Deserialize, Serialize};

use super::stats::{empirical_cdf, ks_statistic, mean_se};
use super::{sample_stream, Check, ExperimentRun};
use crate::error::{invalid, Result};
use crate::excursions::{AnnulusSpec, ChainConfig, ChainMode, ChainSampler};
use crate::kernel::PotentialKernel;
use crate::lattice::LatticePoint;
use crate::par::{map_indexed, Execution};
use crate::range::{ell_a, survival_curve_mu, CoverageTracker, SetSpec, SiteSet};
use crate::walk::Acceleration;
use crate::VERSION;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformLawParams {
    pub n: f64,
    pub set: SetSpec,
    pub samples: usize,
    pub m0: f64,
    pub mode: ChainMode,
    pub accel: Acceleration,
    pub start: LatticePoint,
    /// Largest admissible KS distance.
    pub ks_threshold: f64,
}

impl UniformLawParams {
    pub fn new(n: f64, set: SetSpec, samples: usize) -> Self {
        UniformLawParams {
            n,
            set,
            samples,
            m0: 1.0,
            mode: ChainMode::Direct,
            accel: Acceleration::FAST,
            start: LatticePoint::new(1, 0),
            ks_threshold: 0.20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformSample {
    pub index: usize,
    /// Unvisited fraction of the set.
    pub v: f64,
    pub excursions: u32,
    pub steps: u64,
    pub jumps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformSummary {
    pub set_size: usize,
    pub ks: f64,
    pub dkw_epsilon_95: f64,
    pub mean_v: f64,
    pub mean_v_se: f64,
    pub mean_excursions: f64,
    /// Empirical CDF of `V` at `s = 0, 0.05, ..., 1`.
    pub cdf: Vec<[f64; 2]>,
    pub ell_a: f64,
    /// `(ln ln n / ln n)^(1/3)`, the coefficient of the unknown constant `c1`.
    pub bound_term_c1: f64,
    /// `ell_A (ln ln n / ln n)^(-2/3)`, the coefficient of `c2`.
    pub bound_term_c2: f64,
}

pub type UniformRun = ExperimentRun<UniformLawParams, UniformSample, UniformSummary>;

fn admissible_set(params: &UniformLawParams) -> Result<SiteSet> {
    if params.samples < 100 {
        return invalid(format!("at least 100 samples are required, got {}", params.samples));
    }
    if !(params.m0 > 0.0) {
        return invalid("M0 must be positive");
    }
    let set = params.set.build()?;
    if set.is_empty() {
        return invalid("target set is empty");
    }
    let lo = params.n / params.n.ln().powf(params.m0);
    if set.max_norm() > params.n || set.min_norm() <= lo {
        return invalid(format!(
            "target set must lie in B({}) minus B({lo:.3}); its norms span [{:.3}, {:.3}]",
            params.n,
            set.min_norm(),
            set.max_norm()
        ));
    }
    Ok(set)
}

pub fn run_uniform_law(kernel: &PotentialKernel, params: &UniformLawParams, seed: u64, exec: Execution) -> Result<UniformRun> {
    let set = admissible_set(params)?;
    let spec = AnnulusSpec::new(params.n)?;
    let cfg = ChainConfig { mode: params.mode, accel: params.accel, ..Default::default() };
    let sampler = ChainSampler::new(kernel, spec, cfg)?;
    let samples = map_indexed(params.samples, exec, |i| {
        let mut rng = sample_stream(seed, "uniform-law", i);
        let mut tracker = CoverageTracker::new(&set);
        let chain = sampler.sample(params.start, &mut rng, &mut tracker)?;
        let pieces = std::iter::once(&chain.initial_piece).chain(&chain.excursions);
        let (steps, jumps) = pieces.fold((0, 0), |(s, j), e| (s + e.steps, j + e.jumps));
        Ok(UniformSample { index: i, v: tracker.unvisited_fraction(), excursions: chain.count, steps, jumps })
    })?;
    let vs: Vec<f64> = samples.iter().map(|s| s.v).collect();
    let ks = ks_statistic(&vs)?;
    let (mean_v, mean_v_se) = mean_se(&vs);
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let cdf = grid.iter().zip(empirical_cdf(&vs, &grid)).map(|(&s, f)| [s, f]).collect();
    let ratio = params.n.ln().ln() / params.n.ln();
    let ell = ell_a(&set, params.n, params.m0)?;
    let summary = UniformSummary {
        set_size: set.len(),
        ks: ks.ks,
        dkw_epsilon_95: ks.dkw_epsilon_95,
        mean_v,
        mean_v_se,
        mean_excursions: samples.iter().map(|s| s.excursions as f64).sum::<f64>() / samples.len() as f64,
        cdf,
        ell_a: ell,
        bound_term_c1: ratio.cbrt(),
        bound_term_c2: ell * ratio.powf(-2.0 / 3.0),
    };
    let checks = vec![Check::at_most("ks", ks.ks, params.ks_threshold)];
    Ok(ExperimentRun {
        experiment_id: "uniform-law".into(),
        version: VERSION.into(),
        seed,
        params: params.clone(),
        samples,
        summary,
        checks,
    })
}

/// Probability that a site of `∂B(n)` is missed by the initial piece and the
/// first `k` excursions, averaged over the sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub k: u32,
    pub unvisited: f64,
    pub standard_error: f64,
    /// `exp(-k ln ln n / ln n)`.
    pub predicted: f64,
}

pub fn run_survival_curve(
    kernel: &PotentialKernel,
    n: f64,
    k_max: u32,
    chains: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SurvivalPoint>> {
    if k_max == 0 || chains < 2 {
        return invalid("need k_max >= 1 and at least two chains");
    }
    let set = SetSpec::Circle { r: n }.build()?;
    let spec = AnnulusSpec::new(n)?;
    let cfg = ChainConfig { mode: ChainMode::Fixed(k_max), ..Default::default() };
    let sampler = ChainSampler::new(kernel, spec, cfg)?;
    let per_chain = map_indexed(chains, exec, |i| {
        let mut rng = sample_stream(seed, "survival", i);
        let mut tracker = CoverageTracker::new(&set);
        sampler.sample(LatticePoint::new(1, 0), &mut rng, &mut tracker)?;
        Ok(tracker.curve(k_max).fractions)
    })?;
    (1..=k_max)
        .map(|k| {
            let col: Vec<f64> = per_chain.iter().map(|f| f[k as usize]).collect();
            let (m, se) = mean_se(&col);
            Ok(SurvivalPoint { k, unvisited: m, standard_error: se, predicted: survival_curve_mu(k as u64, n)? })
        })
        .collect()
}
