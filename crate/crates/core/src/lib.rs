//! Local group bias detection for classifier audits.
//!
//! Clusters instance embeddings under a composite objective that trades off
//! clustering quality against within-cluster performance gaps between two
//! groups, optionally constrained to group patients of similar acuity, then
//! flags and characterizes the biased clusters.

pub mod audit;
pub mod cohort;
pub mod engine;
pub mod error;
pub mod report;
pub mod synth;
pub mod tuning;

pub use audit::{
    audit_clusters, bootstrap_thresholds, characterize, normalized_inertia, AuditReport,
    BiasThresholds, CharacterizationEntry, ClusterAudit, Method,
};
pub use cohort::{load_cohort, relabel_groups, save_cohort, Cohort, CohortFormat, Group, Instance};
pub use engine::{
    bias_term, clustering_cost, fit, init_centroids, severity_term, total_objective,
    ClusteringResult, Hyperparams,
};
pub use error::{Error, Result};
pub use synth::{generate, recall_score, ComponentSpec, SyntheticSpec, TRUTH_ATTRIBUTE};
pub use tuning::{grid_search, GridCell, GridSearchOutcome, GridSpec};
