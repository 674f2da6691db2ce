//! Preprocessing: turn a sorted binary edge list into the on-disk graph.
//!
//! One streaming pass computes degrees and validates ordering, the balanced
//! partition layout is solved from the degree weights, then edges are routed
//! into per-(source partition, destination batch) temp files (a subsequence
//! of a sorted stream stays sorted), each chunk is streamed into DCSR and
//! optionally CSR files, and pull lists, dispatching graphs and filter lists
//! fall out of the per-chunk source runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::edgefile::{EdgeFileReader, EdgeFileWriter};
use crate::encoding::{should_build_csr, ChunkFileWriter, ReprChoice};
use crate::error::{EngineError, IoContext, Result};
use crate::extsort::sort_edge_file;
use crate::layout::{BatchLayout, DegreeTable, GraphMeta, PartitionLayout};
use crate::manifest::{
    write_id_list, ChunkRecord, DispatchRecord, FilterRecord, Manifest, PartitionStats,
    PullListRecord,
};
use crate::partition::{choose_batch_size, partition_vertices, OocMode};

/// Most chunk-temp writers kept open per routing stage; beyond this the
/// router falls back to a two-level split.
const MAX_OPEN_WRITERS: usize = 2048;
const ROUTE_BUF: usize = 32 * 1024;

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub num_vertices: u64,
    pub payload_bytes: u32,
    pub num_partitions: usize,
    pub alpha: Option<u64>,
    /// Explicit batch size; otherwise derived from the mode rule.
    pub batch_size: Option<u64>,
    pub memory_budget: u64,
    pub threads: usize,
    pub mode: OocMode,
    /// Per-vertex record size assumed by the fully-out-of-core batch rule.
    pub vertex_record_bytes: u64,
    pub csr_inflate_ratio: u64,
    pub gamma: u64,
    pub filter_skip_ratio: f64,
    pub build_reversed: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            num_vertices: 0,
            payload_bytes: 0,
            num_partitions: 1,
            alpha: None,
            batch_size: None,
            memory_budget: 256 << 20,
            threads: 1,
            mode: OocMode::Semi,
            vertex_record_bytes: 16,
            csr_inflate_ratio: crate::layout::DEFAULT_CSR_INFLATE_RATIO,
            gamma: crate::layout::DEFAULT_GAMMA,
            filter_skip_ratio: crate::layout::DEFAULT_FILTER_SKIP_RATIO,
            build_reversed: false,
        }
    }
}

/// Scan the input once: degree table, edge count, sortedness and ID range
/// validation. The first offending record is reported by ordinal.
pub fn scan_degrees(
    input: &Path,
    num_vertices: u64,
    payload_bytes: u32,
) -> Result<(DegreeTable, u64)> {
    let mut r = EdgeFileReader::open(input, payload_bytes)?;
    let mut degrees = DegreeTable::new(num_vertices);
    let mut prev: Option<(u64, u64)> = None;
    let mut count = 0u64;
    while let Some((s, d, _)) = r.next()? {
        if s >= num_vertices || d >= num_vertices {
            return Err(EngineError::InvalidInput(format!(
                "record {}: edge ({}, {}) outside vertex range 0..{}",
                r.ordinal, s, d, num_vertices
            )));
        }
        if let Some(p) = prev {
            if (s, d) < p {
                return Err(EngineError::InvalidInput(format!(
                    "record {}: input not sorted by (src, dst)",
                    r.ordinal
                )));
            }
        }
        prev = Some((s, d));
        degrees.count_edge(s, d);
        count += 1;
    }
    Ok((degrees, count))
}

pub fn preprocess(input: &Path, out_dir: &Path, opts: &PreprocessOptions) -> Result<Manifest> {
    if opts.num_vertices == 0 {
        return Err(EngineError::Config("--vertices must be >= 1".into()));
    }
    let (degrees, num_edges) = scan_degrees(input, opts.num_vertices, opts.payload_bytes)?;
    let alpha = opts.alpha.unwrap_or_else(|| crate::layout::default_alpha(opts.num_partitions));
    let layout = partition_vertices(&degrees, opts.num_partitions, alpha)?;
    let partition_sizes: Vec<u64> =
        (0..opts.num_partitions).map(|p| layout.len(p)).collect();
    let batching = match opts.batch_size {
        Some(b) => BatchLayout::new(b)?,
        None => choose_batch_size(
            opts.mode,
            opts.memory_budget,
            opts.threads,
            opts.vertex_record_bytes,
            &partition_sizes,
        )?,
    };
    let meta = GraphMeta {
        num_vertices: opts.num_vertices,
        num_edges,
        edge_payload_bytes: opts.payload_bytes,
        num_partitions: opts.num_partitions,
        alpha,
        csr_inflate_ratio: opts.csr_inflate_ratio,
        gamma: opts.gamma,
        filter_skip_ratio: opts.filter_skip_ratio,
    };
    meta.validate()?;

    std::fs::create_dir_all(out_dir).io_ctx("creating graph dir")?;
    let mut manifest = build_graph_dir(input, out_dir, &meta, &layout, &batching, &degrees)?;

    if opts.build_reversed {
        let rev_dir = out_dir.join("reversed");
        std::fs::create_dir_all(&rev_dir).io_ctx("creating reversed dir")?;
        let tmp = out_dir.join("tmp_rev_unsorted.bin");
        let sorted = out_dir.join("tmp_rev_sorted.bin");
        {
            let mut r = EdgeFileReader::open(input, opts.payload_bytes)?;
            let mut w = EdgeFileWriter::create(&tmp, opts.payload_bytes)?;
            while let Some((s, d, p)) = r.next()? {
                w.write(d, s, p)?;
            }
            w.finish()?;
        }
        sort_edge_file(&tmp, &sorted, opts.payload_bytes, opts.memory_budget, &out_dir.join("tmp_sort"))?;
        std::fs::remove_file(&tmp).ok();
        // reversed degrees swap roles
        let mut rev_degrees = DegreeTable::new(opts.num_vertices);
        rev_degrees.out_degree.copy_from_slice(&degrees.in_degree);
        rev_degrees.in_degree.copy_from_slice(&degrees.out_degree);
        let rev_manifest =
            build_graph_dir(&sorted, &rev_dir, &meta, &layout, &batching, &rev_degrees)?;
        rev_manifest.save(&rev_dir)?;
        std::fs::remove_file(&sorted).ok();
        let _ = std::fs::remove_dir_all(out_dir.join("tmp_sort"));
        manifest.reversed = Some("reversed".into());
    }

    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Run the chunk/dispatch/filter pipeline for one edge orientation into
/// `dir`, using an already-decided layout so vertex arrays interoperate
/// between the forward and reversed graphs.
pub fn build_graph_dir(
    input: &Path,
    dir: &Path,
    meta: &GraphMeta,
    layout: &PartitionLayout,
    batching: &BatchLayout,
    degrees: &DegreeTable,
) -> Result<Manifest> {
    let parts = layout.num_partitions();
    for j in 0..parts {
        for sub in ["chunks", "dispatch", "filter"] {
            std::fs::create_dir_all(dir.join(format!("r{}", j)).join(sub))
                .io_ctx("creating node dirs")?;
        }
    }

    // per-node out-degree files
    let mut degree_paths = Vec::new();
    for j in 0..parts {
        let r = layout.range(j);
        let rel = format!("r{}/out_degree.u64", j);
        let mut bytes = Vec::with_capacity(((r.end - r.start) * 8) as usize);
        for v in r.clone() {
            bytes.extend_from_slice(&(degrees.out_degree[v as usize] as u64).to_le_bytes());
        }
        std::fs::write(dir.join(&rel), bytes).io_ctx("writing degree file")?;
        degree_paths.push(rel);
    }

    let tmp_dir = dir.join("tmp_route");
    std::fs::create_dir_all(&tmp_dir).io_ctx("creating route dir")?;
    let slots = route_edges(input, &tmp_dir, meta, layout, batching)?;

    let mut chunks = Vec::new();
    let mut dispatch = Vec::new();
    let mut filters = Vec::new();
    for p in 0..parts {
        for j in 0..parts {
            let (chunk_recs, pull_files) =
                encode_node_chunks(dir, meta, layout, batching, &slots, p, j)?;
            chunks.extend(chunk_recs);
            let (disp, filter_ids) = build_dispatch_for(dir, meta, layout, p, j, pull_files)?;
            dispatch.push(disp);
            if p != j {
                let rel = format!("r{}/filter/to_r{}.ids", p, j);
                let record = if filter_ids.is_empty() {
                    FilterRecord { from: p, to: j, len: 0, path: None }
                } else {
                    write_id_list(&dir.join(&rel), &filter_ids)?;
                    FilterRecord { from: p, to: j, len: filter_ids.len() as u64, path: Some(rel) }
                };
                filters.push(record);
            }
        }
    }
    let _ = std::fs::remove_dir_all(&tmp_dir);

    let partition_stats = (0..parts)
        .map(|i| PartitionStats {
            vertices: layout.len(i),
            in_edges: degrees.partition_in_edges(layout, i),
            out_edges: degrees.partition_out_edges(layout, i),
        })
        .collect();

    Ok(Manifest {
        meta: meta.clone(),
        layout: layout.clone(),
        batching: *batching,
        partition_stats,
        chunks,
        filters,
        dispatch,
        degree_paths,
        reversed: None,
    })
}

type SlotKey = (usize, usize, usize); // (src partition, node, batch)

/// Route sorted edges into per-chunk temp files. Returns the set of
/// non-empty slots. Falls back to grouping by destination node first when
/// the direct fan-out would need too many open writers.
fn route_edges(
    input: &Path,
    tmp_dir: &Path,
    meta: &GraphMeta,
    layout: &PartitionLayout,
    batching: &BatchLayout,
) -> Result<HashMap<SlotKey, PathBuf>> {
    let parts = layout.num_partitions();
    let total_slots: usize =
        (0..parts).map(|j| batching.num_batches(layout.len(j))).sum::<usize>() * parts;
    let mut slots: HashMap<SlotKey, PathBuf> = HashMap::new();

    if total_slots <= MAX_OPEN_WRITERS {
        let mut writers: HashMap<SlotKey, EdgeFileWriter> = HashMap::new();
        let mut r = EdgeFileReader::open(input, meta.edge_payload_bytes)?;
        while let Some((s, d, payload)) = r.next()? {
            let p = layout.partition_of(s);
            let j = layout.partition_of(d);
            let b = ((d - layout.boundaries[j]) / batching.batch_size) as usize;
            let key = (p, j, b);
            let w = match writers.entry(key) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let path = tmp_dir.join(format!("p{}_j{}_b{}.edges", p, j, b));
                    slots.insert(key, path.clone());
                    e.insert(edge_writer(&path, meta.edge_payload_bytes)?)
                }
            };
            w.write(s, d, payload)?;
        }
        for (_, w) in writers {
            w.finish()?;
        }
        return Ok(slots);
    }

    // two-level: (p, j) first, then per batch inside each pair file
    let mut pair_writers: HashMap<(usize, usize), EdgeFileWriter> = HashMap::new();
    let mut pair_paths: HashMap<(usize, usize), PathBuf> = HashMap::new();
    {
        let mut r = EdgeFileReader::open(input, meta.edge_payload_bytes)?;
        while let Some((s, d, payload)) = r.next()? {
            let p = layout.partition_of(s);
            let j = layout.partition_of(d);
            let w = match pair_writers.entry((p, j)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let path = tmp_dir.join(format!("pair_p{}_j{}.edges", p, j));
                    pair_paths.insert((p, j), path.clone());
                    e.insert(edge_writer(&path, meta.edge_payload_bytes)?)
                }
            };
            w.write(s, d, payload)?;
        }
        for (_, w) in pair_writers {
            w.finish()?;
        }
    }
    for ((p, j), pair_path) in pair_paths {
        let nb = batching.num_batches(layout.len(j));
        if nb > MAX_OPEN_WRITERS {
            return Err(EngineError::Config(format!(
                "node {} would need {} batch files per source partition; increase the batch size",
                j, nb
            )));
        }
        let mut writers: HashMap<usize, EdgeFileWriter> = HashMap::new();
        let mut r = EdgeFileReader::open(&pair_path, meta.edge_payload_bytes)?;
        while let Some((s, d, payload)) = r.next()? {
            let b = ((d - layout.boundaries[j]) / batching.batch_size) as usize;
            let w = match writers.entry(b) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let path = tmp_dir.join(format!("p{}_j{}_b{}.edges", p, j, b));
                    slots.insert((p, j, b), path.clone());
                    e.insert(edge_writer(&path, meta.edge_payload_bytes)?)
                }
            };
            w.write(s, d, payload)?;
        }
        for (_, w) in writers {
            w.finish()?;
        }
        std::fs::remove_file(&pair_path).ok();
    }
    Ok(slots)
}

fn edge_writer(path: &Path, payload_bytes: u32) -> Result<EdgeFileWriter> {
    // small buffers: many of these can be open at once
    let f = std::fs::File::create(path).io_ctx(format!("creating {}", path.display()))?;
    Ok(EdgeFileWriter::from_file(f, payload_bytes, ROUTE_BUF))
}

/// Encode every chunk of (source partition p -> node j): always DCSR, CSR
/// when dense enough. Writes pull lists as a by-product (each chunk's
/// distinct sources are exactly the sources its batch needs) and returns
/// their records for the dispatch build.
fn encode_node_chunks(
    dir: &Path,
    meta: &GraphMeta,
    layout: &PartitionLayout,
    batching: &BatchLayout,
    slots: &HashMap<SlotKey, PathBuf>,
    p: usize,
    j: usize,
) -> Result<(Vec<ChunkRecord>, Vec<PullListRecord>)> {
    let nb = batching.num_batches(layout.len(j));
    let src_range = layout.range(p);
    let v_src = src_range.end - src_range.start;
    let mut records = Vec::with_capacity(nb);
    let mut pull_records = Vec::with_capacity(nb);
    for b in 0..nb {
        let pull_rel = format!("r{}/dispatch/from_p{}_b{}.pull", j, p, b);
        let Some(tmp) = slots.get(&(p, j, b)) else {
            records.push(ChunkRecord {
                src_partition: p,
                node: j,
                batch: b,
                edge_count: 0,
                dcsr_len: 0,
                has_csr: false,
                dcsr_path: None,
                csr_path: None,
            });
            pull_records.push(PullListRecord { batch: b, len: 0, path: None });
            continue;
        };
        // pass 1: source runs
        let batch_range = batching.batch_range(layout.range(j), b);
        let mut runs: Vec<(u64, u64)> = Vec::new();
        {
            let mut r = EdgeFileReader::open(tmp, meta.edge_payload_bytes)?;
            while let Some((s, d, _)) = r.next()? {
                debug_assert!(src_range.contains(&s) && batch_range.contains(&d));
                match runs.last_mut() {
                    Some((rs, rc)) if *rs == s => *rc += 1,
                    _ => runs.push((s, 1)),
                }
            }
        }
        let edge_count: u64 = runs.iter().map(|r| r.1).sum();
        let dcsr_rel = format!("r{}/chunks/p{}_b{}.dcsr", j, p, b);
        let csr_rel = format!("r{}/chunks/p{}_b{}.csr", j, p, b);
        let has_csr = should_build_csr(v_src, edge_count, meta.csr_inflate_ratio);

        let mut dcsr_w = ChunkFileWriter::create(
            &dir.join(&dcsr_rel),
            ReprChoice::Dcsr,
            src_range.clone(),
            meta.edge_payload_bytes,
            &runs,
        )?;
        let mut csr_w = if has_csr {
            Some(ChunkFileWriter::create(
                &dir.join(&csr_rel),
                ReprChoice::Csr,
                src_range.clone(),
                meta.edge_payload_bytes,
                &runs,
            )?)
        } else {
            None
        };
        // pass 2: dst + payload columns
        {
            let mut r = EdgeFileReader::open(tmp, meta.edge_payload_bytes)?;
            while let Some((_, d, payload)) = r.next()? {
                dcsr_w.append_edge(d, payload)?;
                if let Some(w) = csr_w.as_mut() {
                    w.append_edge(d, payload)?;
                }
            }
        }
        dcsr_w.finish()?;
        if let Some(w) = csr_w {
            w.finish()?;
        }
        let _ = std::fs::remove_file(tmp);

        let pull_ids: Vec<u64> = runs.iter().map(|r| r.0).collect();
        write_id_list(&dir.join(&pull_rel), &pull_ids)?;
        pull_records.push(PullListRecord {
            batch: b,
            len: pull_ids.len() as u64,
            path: Some(pull_rel),
        });
        records.push(ChunkRecord {
            src_partition: p,
            node: j,
            batch: b,
            edge_count,
            dcsr_len: runs.len() as u64,
            has_csr,
            dcsr_path: Some(dcsr_rel),
            csr_path: has_csr.then_some(csr_rel),
        });
    }
    Ok((records, pull_records))
}

/// Merge the per-batch pull lists of (partition p -> node j) into the
/// dispatching graph: edges (source vertex -> local batch), sorted by
/// (src, batch), streamed from the pull files twice (runs, then columns).
/// The filter list L_pj is the deduplicated source set of the same stream.
fn build_dispatch_for(
    dir: &Path,
    meta: &GraphMeta,
    layout: &PartitionLayout,
    p: usize,
    j: usize,
    pull_lists: Vec<PullListRecord>,
) -> Result<(DispatchRecord, Vec<u64>)> {
    let src_range = layout.range(p);
    let v_src = src_range.end - src_range.start;

    let mut runs: Vec<(u64, u64)> = Vec::new();
    let mut filter_ids: Vec<u64> = Vec::new();
    let mut pair_count = 0u64;
    merge_pull_streams(dir, &pull_lists, |s, _b| {
        pair_count += 1;
        match runs.last_mut() {
            Some((rs, rc)) if *rs == s => *rc += 1,
            _ => {
                runs.push((s, 1));
                filter_ids.push(s);
            }
        }
        Ok(())
    })?;

    let has_csr = pair_count > 0 && should_build_csr(v_src, pair_count, meta.csr_inflate_ratio);
    let dcsr_rel = format!("r{}/dispatch/from_p{}.dcsr", j, p);
    let csr_rel = format!("r{}/dispatch/from_p{}.csr", j, p);
    let (dcsr_path, csr_path) = if pair_count > 0 {
        let mut dcsr_w = ChunkFileWriter::create(
            &dir.join(&dcsr_rel),
            ReprChoice::Dcsr,
            src_range.clone(),
            0,
            &runs,
        )?;
        let mut csr_w = if has_csr {
            Some(ChunkFileWriter::create(
                &dir.join(&csr_rel),
                ReprChoice::Csr,
                src_range.clone(),
                0,
                &runs,
            )?)
        } else {
            None
        };
        merge_pull_streams(dir, &pull_lists, |_s, b| {
            dcsr_w.append_edge(b, &[])?;
            if let Some(w) = csr_w.as_mut() {
                w.append_edge(b, &[])?;
            }
            Ok(())
        })?;
        dcsr_w.finish()?;
        if let Some(w) = csr_w {
            w.finish()?;
        }
        (Some(dcsr_rel), has_csr.then_some(csr_rel))
    } else {
        (None, None)
    };

    Ok((
        DispatchRecord {
            src_partition: p,
            node: j,
            pair_count,
            dcsr_len: runs.len() as u64,
            has_csr,
            dcsr_path,
            csr_path,
            pull_lists,
        },
        filter_ids,
    ))
}

/// K-way merge of the ascending per-batch pull lists, emitting (src, batch)
/// in (src, batch) order without materializing the pair list.
fn merge_pull_streams(
    dir: &Path,
    pull_lists: &[PullListRecord],
    mut emit: impl FnMut(u64, u64) -> Result<()>,
) -> Result<()> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    use std::io::BufReader;

    struct Cursor {
        r: BufReader<std::fs::File>,
        batch: u64,
    }
    impl Cursor {
        fn next(&mut self) -> Result<Option<u64>> {
            let mut b = [0u8; 8];
            match crate::util::read_exact_or_eof(&mut self.r, &mut b) {
                Ok(true) => Ok(Some(u64::from_le_bytes(b))),
                Ok(false) => Ok(None),
                Err(e) => Err(EngineError::io("reading pull list", e)),
            }
        }
    }

    let mut cursors = Vec::new();
    let mut heap: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    for rec in pull_lists {
        let Some(rel) = &rec.path else { continue };
        let f = std::fs::File::open(dir.join(rel)).io_ctx("opening pull list")?;
        let mut c = Cursor { r: BufReader::with_capacity(8192, f), batch: rec.batch as u64 };
        if let Some(s) = c.next()? {
            let idx = cursors.len();
            heap.push(Reverse((s, c.batch, idx)));
            cursors.push(c);
        }
    }
    while let Some(Reverse((s, b, idx))) = heap.pop() {
        emit(s, b)?;
        if let Some(ns) = cursors[idx].next()? {
            heap.push(Reverse((ns, b, idx)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
