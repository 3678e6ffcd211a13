//! An in-memory IVF-PQ vector index built around two ideas: redundancy-aware
//! list assignment (each vector may join a second inverted list chosen to
//! cover queries its first list would miss) and a shared-cell list layout
//! that stores doubly-assigned vectors once instead of twice.

pub mod assign;
pub mod bench;
pub mod cli;
pub mod coarse;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod index;
mod kmeans;
pub mod metric;
pub mod pq;
pub mod seil;
pub mod verify;

pub use assign::{multi_assign, rair_assign, Assignment, StrategyConfig, StrategyKind};
pub use bench::{
    per_query_recall, recall_at, sweep, write_cdf_csv, write_report_csv, BenchPoint, BenchReport,
    SweepOptions,
};
pub use coarse::{train_kmeans, CoarseQuantizer};
pub use dataset::{generate_synthetic, load_vectors, FileFormat, VectorSet};
pub use error::{Error, Result};
pub use exact::{exact_knn, GroundTruth};
pub use index::{
    default_k_factor, BuildParams, GroupedTrace, QueryStats, RairsIndex, SearchOutput,
    SearchParams,
};
pub use metric::Metric;
pub use pq::{scan_block, train_pq, PackedBlock, PQCodebook, LUT};
pub use seil::{
    cell_stats, seil_delete, seil_insert, seil_search, CellStats, DeleteReport, RefEntry,
    ScanOutcome, SeilList, StoredID,
};
pub use verify::{
    assignment_overlap, make_candidates, sin_power_integral, verify_air, AirVerifyResult,
};
