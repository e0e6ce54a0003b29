//! Emotion-cause pair extraction in conversations.
//!
//! Each conversation becomes a speaker-aware utterance graph. Two independent
//! attention encoders produce emotion-side and cause-side node representations,
//! which are aligned with fused Gromov-Wasserstein optimal transport. The
//! sharpened transport plan is fused with a local pairwise classifier to score
//! every ordered `(emotion, cause)` utterance pair.
//!
//! The crate is an inference and evaluation engine: parameters are loaded from
//! a params file or materialized from a seed, never trained.
//!
//! Module map:
//!
//! * [`matrix`] dense row-major matrices and the small numeric kernels
//! * [`rng`] the documented seeded initializer
//! * [`corpus`], [`params`], [`hyper`] data model and file formats
//! * [`graph`] conversation graph construction
//! * [`encoder`] attention message passing and induced adjacencies
//! * [`align`] fused Gromov-Wasserstein alignment with a log-domain Sinkhorn solver
//! * [`predict`] pair scoring, score fusion, extraction heads and losses
//! * [`eval`] corpus metrics and the multi-cause protocol
//! * [`pipeline`] end-to-end orchestration used by the `ecpec` binary

pub mod align;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hyper;
pub mod matrix;
pub mod params;
pub mod pipeline;
pub mod predict;
pub mod rng;

pub use align::{fgw_align, sinkhorn, TransportPlan};
pub use corpus::{ConversationRecord, Corpus, Utterance};
pub use encoder::{encode, EncoderOutput, Space};
pub use error::{Error, Result};
pub use eval::{score_pairs, EvalReport};
pub use graph::{build_graph, ConversationGraph, EdgeType};
pub use hyper::HyperParams;
pub use matrix::DenseMatrix;
pub use params::ModelParams;
pub use predict::{LossReport, PairPredictionSet};
