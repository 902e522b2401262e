//! Core library for an interactive multimodal video-retrieval engine.
//!
//! The crate is organised bottom-up:
//!
//! * [`catalog`] holds the frame/clip/space catalog every other module reads.
//! * [`matrix`] stores per-space embeddings and the dot-product kernel.
//! * [`store`] reads and writes every on-disk format and performs ingest.
//! * [`dedup`] removes near-duplicate keyframes within each video.
//! * [`index`] provides flat, IVF and IVF-PQ top-T inner-product search.
//! * [`filter`] turns detected object classes into candidate masks.
//! * [`fusion`] aggregates per-space score vectors.
//! * [`engine`] composes all of the above into one search call.
//! * [`synth`] writes seeded synthetic corpora for demos and tests.

pub mod catalog;
pub mod dedup;
pub mod embed;
pub mod engine;
pub mod filter;
pub mod fusion;
pub mod index;
pub mod matrix;
pub mod store;
pub mod synth;

pub use catalog::{Catalog, ClipRecord, FrameRecord, Granularity, ModelSpace};
pub use matrix::EmbeddingMatrix;
