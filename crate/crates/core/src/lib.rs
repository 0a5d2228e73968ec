//! Hash-index approximate nearest neighbor search.
//!
//! Binary codes (random-projection LSH or imported from any other hasher)
//! are searched with one of three locate procedures, followed by exact
//! re-ranking:
//!
//! * hamming ranking over all codes,
//! * multi-table hash bucket search with an increasing hamming radius,
//! * quantized hamming ranking restricted to the nearest kmeans clusters.
//!
//! A KmeansQI baseline, a brute-force ground truth and a recall–time sweep
//! harness put different hashers on the same footing.

pub mod codes;
pub mod error;
pub mod eval;
pub mod hashers;
pub mod index;
pub mod io;
pub mod matrix;
pub mod persist;
pub mod quantizer;
pub mod search;
pub mod synthetic;

pub use codes::{hamming_distance, hamming_to_all, pack_codes, BitCode, PackedCodes};
pub use error::{Error, Result};
pub use eval::{
    brute_force_ground_truth, recall, run_sweep, GroundTruth, SweepOptions, SweepRecord,
};
pub use hashers::{train_rplsh, ProjectionMatrix};
pub use index::{BuildConfig, HashIndex};
pub use matrix::Matrix;
pub use persist::{load_index, save_index};
pub use quantizer::{kmeans_train, KmeansPartition};
pub use search::{
    bucket_search_locate, buckets_at_radius, hamming_ranking_locate, kmeansqi_locate,
    quantized_locate, rerank, search, search_with, BucketDirectory, ModeSet, QueryRecord,
    SearchMode, SearchParams, SearchScratch,
};
