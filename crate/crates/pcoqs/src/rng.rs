//! Seeded, splittable random streams.
//!
//! Every randomized operation in this crate takes an explicit generator, and
//! the harness derives one independent stream per replication so that
//! replications can run in parallel and still replay bit-for-bit.
//!
//! The generator is pinned to `ChaCha12Rng` (rand_chacha 0.9): a counter-based
//! stream cipher whose 64-bit stream id gives 2^64 independent streams per
//! seed. Gaussian variates come from `rand_distr`'s ziggurat-based
//! `StandardNormal`; together with the pinned generator this makes seeded
//! replays bit-stable for a fixed dependency version. Golden tests freeze
//! values produced by this stack and will flag any version drift.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The pinned generator type used throughout the crate.
pub type Stream = ChaCha12Rng;

/// Phases of a single replication, each on its own stream.
///
/// Keeping data generation, model noise and mechanism noise on separate
/// streams means that (for a fixed seed and replication index) the dataset is
/// identical across methods and sweep values, so rows of a sweep are paired
/// comparisons rather than independent re-draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Data = 0,
    Model = 1,
    Mechanism = 2,
}

const PHASES_PER_REPLICATION: u64 = 4; // one spare

/// A stream identified by `(base_seed, index)`.
pub fn stream(base_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// The stream for one phase of one replication.
pub fn replication_stream(base_seed: u64, replication: u64, phase: Phase) -> Stream {
    stream(
        base_seed,
        replication
            .wrapping_mul(PHASES_PER_REPLICATION)
            .wrapping_add(phase as u64),
    )
}
