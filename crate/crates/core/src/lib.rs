//! Diffusion-based top-N recommendation on user-item bipartite graphs with
//! two-way rank aggregation (TWRA) re-ranking, plus the offline evaluation
//! harness around it.
//!
//! The pipeline is
//! [`dataset`] → [`scorers`] → [`ranking`] → [`metrics`], orchestrated by
//! [`harness`]. Per-user scoring, per-item ranking and the Hamming pair loop
//! run on rayon when the `parallel` feature is enabled (the default).

pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod ranking;
pub mod scorers;
pub mod synth;

pub use dataset::{
    build_graph, parse_ratings, split, BipartiteGraph, ProbeSet, RatingFormat, RatingRecord, SplitDataset,
};
pub use error::{Error, Result};
pub use harness::ExperimentConfig;
pub use metrics::{gini_coefficient, hamming_distance, precision_at_l, HammingMode, MetricsReport};
pub use ranking::{recommend, twra_aggregate, AggregationSpec, RankTables, RankedInput, RecommendationLists};
pub use scorers::{score_matrix, score_matrix_with, ScoreMatrix, ScorePrecision, ScorerSpec, UserStep};
