//! Simulation and exact computation for the planar simple random walk
//! conditioned never to hit the origin.
//!
//! The conditioned walk moves from `x` to a neighbour `y` with probability
//! `a(y) / (4 a(x))`, where `a` is the potential kernel of the simple random
//! walk. The crate provides the kernel, step samplers with distant-jump
//! acceleration, closed-form hitting probabilities with explicit error bounds,
//! an exact linear-solve oracle, excursion chains between annuli, range
//! statistics and three experiment drivers.

pub mod error;
pub mod excursions;
pub mod experiments;
pub mod hitting;
pub mod kernel;
pub mod lattice;
pub mod par;
pub mod range;
pub mod rng;
pub mod walk;

pub use error::{Error, Result};
pub use kernel::{asymptotic_a, KernelValue, PotentialKernel};
pub use lattice::{Ball, LatticePoint};
pub use rng::RandomSource;

/// Version stamp embedded in every serialized result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
