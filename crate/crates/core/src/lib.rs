//! Noisy-label detection and correction for relation-triplet datasets,
//! multi-teacher distillation targets, OOD split construction and recall
//! metrics.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the synthetic
//! corpus generator and the command line live in the `nicest` crate.
//!
//! Pipeline overview:
//!
//! * [`neg_nsd`] mines missing annotations among negatives with a
//!   confidence-branch classifier and assigns pseudo labels.
//! * [`pos_nsd`] ranks positives by local density inside each predicate and
//!   splits them into subsets with 1-D k-means; the lowest-density subset is
//!   flagged noisy.
//! * [`nsc`] reassigns flagged samples a two-entry soft label using
//!   Gaussian-weighted nearest neighbours from the same subject/object pair.
//! * [`nist`] fuses a head-biased and a tail-biased teacher into a single
//!   distillation target.
//! * [`ood_split`] builds a train/test split with diverging per-pair predicate
//!   distributions and measures the divergence.
//! * [`metrics`] computes R@K, mR@K and their mean.
#![no_std]
// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod dataset;
mod dist;
mod error;
pub mod math;
pub mod metrics;
pub mod neg_nsd;
pub mod nist;
pub mod nsc;
pub mod ood_split;
pub mod pos_nsd;
mod vocab;

pub use dataset::{Dataset, PartitionTag, Polarity, Sample, SampleId, SampleState};
pub use dist::{Distribution, SoftLabel, SUM_TOLERANCE};
pub use error::{Error, Result};
pub use vocab::{group_predicates, CategoryGroup, GroupThresholds, GroupValues, PredicateId, PredicateVocabulary};
