//! The preprocessed-graph manifest: everything the runtime needs to find
//! chunks, filter lists, dispatching structures and degree files. Stored as
//! JSON at `<graph dir>/manifest.json` with paths relative to the graph
//! directory; round-trips losslessly.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, IoContext, Result};
use crate::layout::{BatchLayout, GraphMeta, PartitionLayout};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub src_partition: usize,
    pub node: usize,
    pub batch: usize,
    pub edge_count: u64,
    /// Number of distinct sources with edges in this chunk.
    pub dcsr_len: u64,
    pub has_csr: bool,
    pub dcsr_path: Option<String>,
    pub csr_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterRecord {
    pub from: usize,
    pub to: usize,
    pub len: u64,
    pub path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PullListRecord {
    pub batch: usize,
    pub len: u64,
    pub path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub src_partition: usize,
    pub node: usize,
    /// Edges in the dispatching graph: (source vertex, batch) pairs.
    pub pair_count: u64,
    pub dcsr_len: u64,
    pub has_csr: bool,
    pub dcsr_path: Option<String>,
    pub csr_path: Option<String>,
    pub pull_lists: Vec<PullListRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionStats {
    pub vertices: u64,
    pub in_edges: u64,
    pub out_edges: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub meta: GraphMeta,
    pub layout: PartitionLayout,
    pub batching: BatchLayout,
    pub partition_stats: Vec<PartitionStats>,
    pub chunks: Vec<ChunkRecord>,
    pub filters: Vec<FilterRecord>,
    pub dispatch: Vec<DispatchRecord>,
    /// Per-node out-degree file (u64 LE per local vertex).
    pub degree_paths: Vec<String>,
    /// Subdirectory holding the reversed graph, when preprocessed with it.
    pub reversed: Option<String>,
}

impl Manifest {
    pub fn save(&self, graph_dir: &Path) -> Result<()> {
        let path = graph_dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| EngineError::State(format!("serializing manifest: {}", e)))?;
        crate::util::atomic_write(&path, json.as_bytes())
            .io_ctx(format!("writing {}", path.display()))
    }

    pub fn load(graph_dir: &Path) -> Result<Self> {
        let path = graph_dir.join(MANIFEST_FILE);
        let data = std::fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                EngineError::Config(format!("no manifest at {}", path.display()))
            } else {
                EngineError::io(format!("reading {}", path.display()), e)
            }
        })?;
        let m: Manifest = serde_json::from_slice(&data).map_err(|e| EngineError::Corrupt {
            path: path.clone(),
            detail: format!("manifest parse error: {}", e),
        })?;
        m.meta.validate()?;
        Ok(m)
    }

    pub fn chunk_index(&self) -> HashMap<(usize, usize, usize), &ChunkRecord> {
        self.chunks.iter().map(|c| ((c.src_partition, c.node, c.batch), c)).collect()
    }

    pub fn dispatch_for(&self, src_partition: usize, node: usize) -> Option<&DispatchRecord> {
        self.dispatch.iter().find(|d| d.src_partition == src_partition && d.node == node)
    }

    pub fn filter_for(&self, from: usize, to: usize) -> Option<&FilterRecord> {
        self.filters.iter().find(|f| f.from == from && f.to == to)
    }

    pub fn num_batches(&self, node: usize) -> usize {
        self.batching.num_batches(self.layout.len(node))
    }

    pub fn resolve(&self, graph_dir: &Path, rel: &str) -> PathBuf {
        graph_dir.join(rel)
    }
}

/// Sorted vertex-ID list files (filter lists and pull lists): raw u64 LE.
pub fn read_id_list(path: &Path) -> Result<Vec<u64>> {
    let bytes = std::fs::read(path).io_ctx(format!("reading id list {}", path.display()))?;
    if bytes.len() % 8 != 0 {
        return Err(EngineError::Corrupt {
            path: path.to_path_buf(),
            detail: "id list not a multiple of 8 bytes".into(),
        });
    }
    Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_id_list(path: &Path, ids: &[u64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(ids.len() * 8);
    for id in ids {
        bytes.extend_from_slice(&id.to_le_bytes());
    }
    std::fs::write(path, bytes).io_ctx(format!("writing id list {}", path.display()))
}
