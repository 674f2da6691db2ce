//! Distributed fully-out-of-core graph processing engine.
//!
//! The graph is partitioned two ways: contiguous vertex ranges across node
//! ranks, and fixed-size vertex batches within each rank. Edges live on the
//! destination rank as adaptive CSR/DCSR chunks grouped by (source
//! partition, destination batch). Computation is vertex-centric push:
//! `process_vertices` runs a per-vertex function over batches, and
//! `process_edges` runs a signal/slot pair through four pipelined phases
//! (generate, inter-node pass, intra-node dispatch, process) with sorted
//! message blocks, pre-computed filter lists, and adaptive dispatching.
//! Vertex data lives in batch-granular copy-on-write blocks with
//! checkpoint lineage, so a crashed run loses at most one call.

pub mod calls;
pub mod edgefile;
pub mod error;
pub mod extsort;
pub mod manifest;
pub mod layout;
pub mod partition;
pub mod preprocess;
pub mod storage;
pub mod encoding;
pub mod util;

#[doc(hidden)]
pub mod testgraphs;

pub use error::{EngineError, Result};
