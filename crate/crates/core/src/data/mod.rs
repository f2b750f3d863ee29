//! Synthetic instances, covariance construction, and recovery metrics.

pub mod covariance;
pub mod metrics;
pub mod synthetic;

pub use covariance::{log_entropy_covariances, sample_covariance, sample_covariances};
pub use metrics::{edge_metrics, nnz_by_mass, objective_difference, EdgeMetrics};
pub use synthetic::{gen_nearest_neighbour, mutual_knn_graph, sample_gaussian, SyntheticInstance};
