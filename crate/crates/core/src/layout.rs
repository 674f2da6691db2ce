//! Global vertex-ID space: partition ranges across nodes, fixed-size batches
//! within a node, and per-vertex degree bookkeeping.
//!
//! Everything here is immutable after construction and shared freely across
//! threads.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

pub type VertexId = u64;

/// Graph-wide parameters fixed at preprocess time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphMeta {
    pub num_vertices: u64,
    pub num_edges: u64,
    /// Size of per-edge data in bytes; 0 for unweighted graphs.
    pub edge_payload_bytes: u32,
    pub num_partitions: usize,
    /// Balance coefficient for partitioning; defaults to 2P-1.
    pub alpha: u64,
    /// Build CSR for a chunk when |V_src|/|E_chunk| <= this ratio.
    pub csr_inflate_ratio: u64,
    /// Seek-cost coefficient: one seek costs the same as scanning gamma
    /// offset entries.
    pub gamma: u64,
    /// Send unfiltered when |L_ij|/|M_i| >= this ratio.
    pub filter_skip_ratio: f64,
}

pub const DEFAULT_CSR_INFLATE_RATIO: u64 = 32;
pub const DEFAULT_GAMMA: u64 = 1024;
pub const DEFAULT_FILTER_SKIP_RATIO: f64 = 2.0;

pub fn default_alpha(num_partitions: usize) -> u64 {
    (2 * num_partitions - 1) as u64
}

impl GraphMeta {
    pub fn validate(&self) -> Result<()> {
        if self.num_vertices == 0 {
            return Err(EngineError::Config("num_vertices must be >= 1".into()));
        }
        if self.num_partitions == 0 {
            return Err(EngineError::Config("num_partitions must be >= 1".into()));
        }
        if self.csr_inflate_ratio == 0 {
            return Err(EngineError::Config("csr_inflate_ratio must be >= 1".into()));
        }
        if self.gamma == 0 {
            return Err(EngineError::Config("gamma must be >= 1".into()));
        }
        if !(self.filter_skip_ratio > 0.0) {
            return Err(EngineError::Config("filter_skip_ratio must be > 0".into()));
        }
        Ok(())
    }
}

/// Contiguous vertex ranges across partitions: partition `i` owns IDs
/// `[boundaries[i], boundaries[i+1])`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionLayout {
    pub boundaries: Vec<u64>,
}

impl PartitionLayout {
    pub fn new(boundaries: Vec<u64>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(EngineError::Config("partition boundaries must start at 0".into()));
        }
        if boundaries.windows(2).any(|w| w[0] > w[1]) {
            return Err(EngineError::Config("partition boundaries must be non-decreasing".into()));
        }
        Ok(Self { boundaries })
    }

    pub fn num_partitions(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn num_vertices(&self) -> u64 {
        *self.boundaries.last().unwrap()
    }

    pub fn range(&self, partition: usize) -> std::ops::Range<u64> {
        self.boundaries[partition]..self.boundaries[partition + 1]
    }

    pub fn len(&self, partition: usize) -> u64 {
        self.boundaries[partition + 1] - self.boundaries[partition]
    }

    /// Partition owning vertex `v`.
    pub fn partition_of(&self, v: VertexId) -> usize {
        debug_assert!(v < self.num_vertices());
        // boundaries is ascending; find the last boundary <= v.
        match self.boundaries.binary_search(&v) {
            Ok(mut i) => {
                // Equal boundaries mark empty partitions; v belongs to the
                // first non-empty one starting at this ID.
                while self.boundaries[i + 1] == v {
                    i += 1;
                }
                i
            }
            Err(i) => i - 1,
        }
    }
}

/// Fixed-size batches within each partition; the last batch of a partition
/// may be smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchLayout {
    pub batch_size: u64,
}

impl BatchLayout {
    pub fn new(batch_size: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(EngineError::Config("batch_size must be >= 1".into()));
        }
        Ok(Self { batch_size })
    }

    pub fn num_batches(&self, partition_len: u64) -> usize {
        if partition_len == 0 {
            0
        } else {
            ((partition_len + self.batch_size - 1) / self.batch_size) as usize
        }
    }

    /// `[lo, hi)` vertex range of batch `b` of a partition spanning
    /// `partition_range`.
    pub fn batch_range(
        &self,
        partition_range: std::ops::Range<u64>,
        batch: usize,
    ) -> std::ops::Range<u64> {
        let lo = partition_range.start + batch as u64 * self.batch_size;
        let hi = (lo + self.batch_size).min(partition_range.end);
        lo..hi
    }

    pub fn batches_of(&self, partition_range: std::ops::Range<u64>) -> Vec<std::ops::Range<u64>> {
        let n = self.num_batches(partition_range.end - partition_range.start);
        (0..n).map(|b| self.batch_range(partition_range.clone(), b)).collect()
    }
}

/// Location of a vertex: which partition, which batch inside it, and the
/// offset inside that batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexLocation {
    pub partition: usize,
    pub batch: usize,
    pub offset: u64,
}

/// Map a vertex ID to (partition, batch, offset). Inverse of range
/// enumeration.
pub fn locate(v: VertexId, layout: &PartitionLayout, batching: &BatchLayout) -> Result<VertexLocation> {
    if v >= layout.num_vertices() {
        return Err(EngineError::InvalidInput(format!(
            "vertex {} out of range (|V| = {})",
            v,
            layout.num_vertices()
        )));
    }
    let partition = layout.partition_of(v);
    let local = v - layout.boundaries[partition];
    Ok(VertexLocation {
        partition,
        batch: (local / batching.batch_size) as usize,
        offset: local % batching.batch_size,
    })
}

/// Per-vertex in/out degrees plus per-partition edge aggregates.
#[derive(Debug, Clone)]
pub struct DegreeTable {
    pub out_degree: Vec<u32>,
    pub in_degree: Vec<u32>,
}

impl DegreeTable {
    pub fn new(num_vertices: u64) -> Self {
        Self {
            out_degree: vec![0; num_vertices as usize],
            in_degree: vec![0; num_vertices as usize],
        }
    }

    pub fn count_edge(&mut self, src: VertexId, dst: VertexId) {
        self.out_degree[src as usize] += 1;
        self.in_degree[dst as usize] += 1;
    }

    pub fn num_edges(&self) -> u64 {
        self.out_degree.iter().map(|&d| d as u64).sum()
    }

    /// Outgoing edges of partition `i` under `layout` (|E_i^o|).
    pub fn partition_out_edges(&self, layout: &PartitionLayout, i: usize) -> u64 {
        let r = layout.range(i);
        self.out_degree[r.start as usize..r.end as usize].iter().map(|&d| d as u64).sum()
    }

    /// Incoming edges of partition `i` under `layout` (|E_i^i|).
    pub fn partition_in_edges(&self, layout: &PartitionLayout, i: usize) -> u64 {
        let r = layout.range(i);
        self.in_degree[r.start as usize..r.end as usize].iter().map(|&d| d as u64).sum()
    }
}

/// Weight a single vertex contributes to partition balancing:
/// alpha + in_degree(v) + out_degree(v).
pub fn vertex_weight(v: VertexId, alpha: u64, degrees: &DegreeTable) -> u64 {
    alpha + degrees.in_degree[v as usize] as u64 + degrees.out_degree[v as usize] as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g7_degrees() -> DegreeTable {
        let mut d = DegreeTable::new(7);
        for (s, t) in crate::testgraphs::G7_EDGES {
            d.count_edge(*s, *t);
        }
        d
    }

    #[test]
    fn locate_examples() {
        let layout = PartitionLayout::new(vec![0, 3, 7]).unwrap();
        let batching = BatchLayout::new(2).unwrap();
        let loc = |v| locate(v, &layout, &batching).unwrap();
        assert_eq!(loc(0), VertexLocation { partition: 0, batch: 0, offset: 0 });
        assert_eq!(loc(4), VertexLocation { partition: 1, batch: 0, offset: 1 });
        assert_eq!(loc(6), VertexLocation { partition: 1, batch: 1, offset: 1 });
        assert!(locate(7, &layout, &batching).is_err());
    }

    #[test]
    fn vertex_weight_examples() {
        let d = g7_degrees();
        // v2: out 2 (2->3, 2->5), in 1 (0->2)
        assert_eq!(vertex_weight(2, 3, &d), 6);
        // v1: out 1, in 1 with alpha 3
        assert_eq!(vertex_weight(1, 3, &d), 5);
        let mut iso = DegreeTable::new(1);
        let _ = &mut iso;
        assert_eq!(vertex_weight(0, 0, &iso), 0);
    }

    #[test]
    fn g7_weights_match_hand_enumeration() {
        let d = g7_degrees();
        let w: Vec<u64> = (0..7).map(|v| vertex_weight(v, 3, &d)).collect();
        assert_eq!(w, vec![6, 5, 6, 6, 5, 6, 5]);
        assert_eq!(w.iter().sum::<u64>(), 39);
    }

    #[test]
    fn degree_aggregates() {
        let d = g7_degrees();
        let layout = PartitionLayout::new(vec![0, 3, 7]).unwrap();
        assert_eq!(d.num_edges(), 9);
        assert_eq!(d.partition_out_edges(&layout, 0) + d.partition_out_edges(&layout, 1), 9);
        assert_eq!(d.partition_in_edges(&layout, 0) + d.partition_in_edges(&layout, 1), 9);
    }

    #[test]
    fn batches_tile_partition() {
        let layout = PartitionLayout::new(vec![0, 3, 7]).unwrap();
        let batching = BatchLayout::new(2).unwrap();
        let b1 = batching.batches_of(layout.range(1));
        assert_eq!(b1, vec![3..5, 5..7]);
    }

    proptest! {
        #[test]
        fn locate_inverts_enumeration(
            splits in proptest::collection::vec(1u64..50, 1..6),
            batch_size in 1u64..17,
        ) {
            let mut boundaries = vec![0u64];
            for s in &splits { boundaries.push(boundaries.last().unwrap() + s); }
            let layout = PartitionLayout::new(boundaries).unwrap();
            let batching = BatchLayout::new(batch_size).unwrap();
            // Enumerate every (partition, batch, offset) and check locate inverts it,
            // and that ranges tile [0, |V|) without gap or overlap.
            let mut seen = 0u64;
            for p in 0..layout.num_partitions() {
                for (b, range) in batching.batches_of(layout.range(p)).iter().enumerate() {
                    for (off, v) in range.clone().enumerate() {
                        prop_assert_eq!(v, seen);
                        seen += 1;
                        let loc = locate(v, &layout, &batching).unwrap();
                        prop_assert_eq!(loc, VertexLocation { partition: p, batch: b, offset: off as u64 });
                    }
                }
            }
            prop_assert_eq!(seen, layout.num_vertices());
        }
    }
}
