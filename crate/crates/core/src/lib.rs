//! Toolkit for compression-distance analysis of live-cell signaling movies.
//!
//! The pipeline turns multichannel microscopy volumes into per-cell signaling
//! summaries and compares whole movies without hand-crafted features:
//!
//! 1. blob-style nuclear detection with a separable scale-normalized LoG filter
//!    ([`logfilter`], [`tracking`]),
//! 2. a signed cytoplasm-vs-nucleus signaling score sampled at each centroid
//!    ([`ssf`]),
//! 3. sparse space-time summaries ("kymographs") quantized against a cohort
//!    ([`kymograph`]),
//! 4. pairwise normalized compression distance and a metric embedding of the
//!    resulting matrix ([`ncd`], [`embedding`]),
//! 5. cluster self-consistency scores and paired statistics ([`stats`]),
//!    plus a synthetic benchmark generator ([`synthbench`]) and a file-based
//!    pipeline driver ([`pipeline`]).
//!
//! All stages are deterministic: seeded generators, fixed compressor
//! parameters, and stable orderings everywhere.

pub mod embedding;
pub mod kymograph;
mod rngutil;
pub mod logfilter;
pub mod ncd;
pub mod pipeline;
pub mod plot;
pub mod ssf;
pub mod stats;
pub mod synthbench;
pub mod tracking;
pub mod volume;
