//! ZOR filters: static approximate-membership filters built by
//! deterministic peeling.
//!
//! A ZOR filter is a fuse-style XOR filter whose construction never fails:
//! instead of restarting when peeling blocks, it abandons a small fraction
//! of keys and restores false-positive-only semantics by covering the
//! abandoned remainder with a compact auxiliary structure (a 4-wise fuse
//! filter by default, a sorted fingerprint list for tiny remainders, or a
//! second peel stage). With one cell per key the main structure spends
//! exactly the fingerprint width per key, which puts the total space within
//! a few percent of the information-theoretic bound.
//!
//! ```
//! use zor::{FilterParams, ZorFilter};
//!
//! let keys: Vec<[u8; 8]> = (0u64..100_000).map(|i| i.to_le_bytes()).collect();
//! let filter = ZorFilter::build(&keys, &FilterParams::default()).unwrap();
//! for key in &keys {
//!     assert!(filter.contains(key));
//! }
//! let bytes = filter.to_bytes();
//! let decoded = ZorFilter::from_bytes(&bytes).unwrap();
//! assert!(decoded.contains(&keys[0]));
//! ```

pub mod analysis;
pub mod build;
mod error;
pub mod filter;
pub mod fuse;
pub mod hashing;
mod serial;
mod table;

pub use build::{query_main, BuildGraph, InterventionScore, Policy};
pub use error::{Error, Result};
pub use filter::{
    auto_segment_len, digest_keys, AggregateMeta, AuxMode, Auxiliary, BuildMeta, FilterParams,
    FingerprintList, PartitionedZorFilter, SizeReport, ZorFilter,
};
pub use fuse::FuseFilter;
pub use hashing::{
    digest, fingerprint, locations, mix64, partition_of, synthetic_key, KeyDigest, Locations,
    SegmentGeometry,
};
pub use table::CellTable;
