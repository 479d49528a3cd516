//! Offline evaluation of ranked recommendation logs at per-customer
//! cutoffs.
//!
//! The pipeline reads impression and interaction logs, groups
//! impressions into sessions, derives each customer's cutoff N as the
//! median of per-session maximum scroll ranks over a trailing history
//! window, and scores ranked lists at those cutoffs (or at a classic
//! static N, or at pooled per-segment cutoffs). Population-level
//! analyses describe how the cutoffs and their within-customer spread
//! are distributed. A seeded generator produces synthetic populations
//! for end-to-end checks.
//!
//! History strictly precedes the evaluation cutoff; relevance comes
//! only from interactions at or after it.

pub mod cli;
pub mod cohort;
pub mod customer_n;
pub mod event;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod synth;

pub use cohort::{BucketedSeries, CohortError, CohortOptions, Histogram};
pub use customer_n::{CustomerNConfig, CustomerNError, MedianMode};
pub use event::{
    CustomerProfile, ImpressionEvent, InteractionEvent, InteractionKind, RankedList,
    RelevanceSet, RowError, RowErrorKind, Session,
};
pub use ingest::{IngestError, IngestOptions, TimelineSplit};
pub use metrics::{
    AggregateReport, EvalCutoff, EvaluateOptions, MetricError, MetricKind, PerCustomerResult,
    ReportMode,
};
pub use synth::{DepthModel, GeneratedPopulation, PopulationSpec, RecommendStrategy, SynthError};
