//! Experiment drivers, region geometry and statistics.
//!
//! Every driver takes a master seed and derives one random stream per sample
//! from `(seed, experiment tag, sample index)`, so results are identical for
//! any thread count.

pub mod big_holes;
pub mod recurrence;
pub mod region;
pub mod stats;
pub mod uniform;

use serde::{Deserialize, Serialize};

pub use big_holes::{run_big_holes, BigHolesParams, BigHolesSample, BigHolesSummary};
pub use recurrence::{
    adaptive_schedule, run_recurrence, Family, RecurrenceParams, RecurrenceSample, RecurrenceSummary, ScheduleEntry,
};
pub use region::{surrounds_origin_check, RegionG, ScaledRegion, Shape, SurroundCheck};
pub use stats::{dkw_epsilon, empirical_cdf, kochen_stone_bound, ks_statistic, ks_two_sample, mean_se, median, KsResult};
pub use uniform::{run_survival_curve, run_uniform_law, SurvivalPoint, UniformLawParams, UniformSample, UniformSummary};

use crate::error::Result;
use crate::rng::RandomSource;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_160_101;

/// One threshold check of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value >= threshold }
    }
}

/// Seed, parameters, per-sample outputs and summary of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun<P, S, T> {
    pub experiment_id: String,
    pub version: String,
    pub seed: u64,
    pub params: P,
    pub samples: Vec<S>,
    pub summary: T,
    pub checks: Vec<Check>,
}

impl<P: Serialize, S: Serialize, T: Serialize> ExperimentRun<P, S, T> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Random stream of sample `index` of the experiment identified by `tag`.
pub(crate) fn sample_stream(seed: u64, tag: &str, index: usize) -> RandomSource {
    let tag = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    RandomSource::derived(seed, &[tag, index as u64])
}
