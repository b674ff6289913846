//! Core library of the `sapcap` toolkit.
//!
//! The toolkit covers the stages of a semantic-aware dense video captioning
//! pipeline that operate on precomputed clip features and caption
//! annotations:
//!
//! - [`corpus`]: annotation loading, tokenization, deterministic dataset
//!   splits, and the SAPF binary clip-feature format.
//! - [`concepts`]: semantic-concept vocabularies (top-N content words) and
//!   multi-hot concept targets for captions and clips.
//! - [`objective`]: the multi-task pretraining objective (action cross
//!   entropy + temporal region cross entropy + asymmetric semantic loss) with
//!   analytic gradients, trained as linear probes over fixed features.
//! - [`metrics`]: temporal IoU, proposal precision/recall, BLEU-4, CIDEr, and
//!   the threshold-averaged dense captioning evaluation protocol.
//! - [`ensemble`]: best-caption selection across model runs by unique concept
//!   count and max unigram IDF.
//! - [`combo`]: channel-wise feature concatenation and exhaustive
//!   feature-combination search under a pluggable scorer.
//! - [`synth`]: a deterministic synthetic dataset generator for desk-scale
//!   smoke and acceptance runs.
//! - [`pipeline`]: end-to-end orchestration with provenance sidecars.
//!
//! All randomness flows through the pinned [`rng::SplitMix64`] generator so
//! every stage is reproducible from a seed.

pub mod combo;
pub mod concepts;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod objective;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
