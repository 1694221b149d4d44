//! Skeleton-pose human activity recognition.
//!
//! The crate covers the whole experimental pipeline for the CAD-60 data-set:
//!
//! - [`dataset`]: CAD-60 parsing, a JSON corpus cache, synthetic corpora,
//!   leave-one-subject-out splits and per-scene subsets.
//! - [`precondition`]: hip centring, mirroring, neck-torso normalisation,
//!   velocities and sliding windows.
//! - [`gas`]: Growing Neural Gas and Growing-When-Required networks.
//! - [`hierarchy`]: the two-branch, three-layer gas hierarchy used as a
//!   classifier.
//! - [`baselines`]: exact k-nearest neighbours and a one-vs-rest linear SVM.
//! - [`eval`]: confusion matrices, the scene/subject accuracy aggregation and
//!   the LOSO experiment driver, plus CSV/JSON/SVG report writers.

pub mod baselines;
pub mod dataset;
pub mod eval;
pub mod gas;
pub mod hierarchy;
pub mod precondition;

mod linalg;

pub use dataset::{ActivityLabel, Corpus, Scene, SkeletonFrame};
pub use precondition::PreconditionMode;

/// Derives an independent stream seed from a base seed and a tag.
///
/// SplitMix64 finalizer; used so that folds, layers and classes never share
/// a random stream while staying a pure function of the run seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
