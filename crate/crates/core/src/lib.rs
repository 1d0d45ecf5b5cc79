//! Batch toolkit for building and scoring context-dependent paraphrase
//! annotations over dialog transcripts.
//!
//! The pipeline covers:
//!
//! * [`corpus`] - transcript ingestion, two-person filtering, (guest, host)
//!   pair extraction, seeded sampling and train/dev/test splits;
//! * [`annotations`] - the annotation data model, validation, and
//!   majority-vote aggregation into gold labels and highlights;
//! * [`metrics`] - inter-annotator agreement statistics (Krippendorff's
//!   alpha, leave-one-out majority accuracy, per-word unitizing alpha,
//!   pairwise highlight Jaccard, k-rater reliability, binary entropy);
//! * [`allocation`] - simulation of annotator-allocation strategies over a
//!   recorded pool, with cost/fidelity scoring;
//! * [`response_parser`] - parsing generative-model responses and resolving
//!   quoted spans to word indices, with a typed extraction-error taxonomy;
//! * [`evaluation`] - scoring predictions against aggregated gold.
//!
//! All operations are deterministic functions of their inputs and a single
//! seed; per-item random streams are derived in [`seed`] so parallel and
//! serial runs produce identical results.

pub mod allocation;
pub mod annotations;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod jsonl;
pub mod metrics;
pub mod response_parser;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
