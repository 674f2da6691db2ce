use std::collections::BTreeSet;
use std::path::Path;

use super::*;
use crate::edgefile::write_all_edges;
use crate::encoding::load_chunk;
use crate::manifest::read_id_list;
use crate::testgraphs;

pub(crate) fn g7_options(parts: usize, batch: u64) -> PreprocessOptions {
    PreprocessOptions {
        num_vertices: testgraphs::G7_VERTICES,
        payload_bytes: 0,
        num_partitions: parts,
        alpha: None,
        batch_size: Some(batch),
        ..Default::default()
    }
}

fn write_g7(dir: &Path) -> std::path::PathBuf {
    let input = dir.join("g7.bin");
    let edges: Vec<(u64, u64, Vec<u8>)> =
        testgraphs::g7_sorted().into_iter().map(|(s, d)| (s, d, Vec::new())).collect();
    write_all_edges(&input, 0, &edges).unwrap();
    input
}

/// Decode every chunk of a graph dir back into a plain edge list.
pub fn decode_all_edges(graph_dir: &Path, m: &Manifest) -> Result<Vec<(u64, u64, Vec<u8>)>> {
    let mut out = Vec::new();
    for c in &m.chunks {
        let Some(rel) = &c.dcsr_path else { continue };
        let repr = load_chunk(&graph_dir.join(rel))?;
        for e in crate::encoding::decode(&repr)? {
            out.push((e.src, e.dst, e.payload));
        }
    }
    Ok(out)
}

#[test]
fn g7_layout_and_chunks_match_hand_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_g7(dir.path());
    let out = dir.path().join("graph");
    let m = preprocess(&input, &out, &g7_options(2, 2)).unwrap();

    assert_eq!(m.layout.boundaries, vec![0, 3, 7]);
    assert_eq!(m.meta.alpha, 3); // 2P-1
    assert_eq!(m.meta.num_edges, 9);

    // 2 partitions x (2 + 2) batches = 8 chunk records, edge counts sum to 9
    assert_eq!(m.chunks.len(), 8);
    assert_eq!(m.chunks.iter().map(|c| c.edge_count).sum::<u64>(), 9);

    let idx = m.chunk_index();
    let edges_of = |p: usize, j: usize, b: usize| -> Vec<(u64, u64)> {
        let rec = idx[&(p, j, b)];
        match &rec.dcsr_path {
            None => Vec::new(),
            Some(rel) => crate::encoding::decode(&load_chunk(&out.join(rel)).unwrap())
                .unwrap()
                .into_iter()
                .map(|e| (e.src, e.dst))
                .collect(),
        }
    };
    // node 1
    assert_eq!(edges_of(0, 1, 0), vec![(1, 3), (2, 3)]);
    assert_eq!(edges_of(0, 1, 1), vec![(2, 5)]);
    assert_eq!(edges_of(1, 1, 0), vec![(3, 4)]);
    assert_eq!(edges_of(1, 1, 1), vec![(4, 5), (5, 6)]);
    // node 0
    assert_eq!(edges_of(0, 0, 0), vec![(0, 1)]);
    assert_eq!(edges_of(0, 0, 1), vec![(0, 2)]);
    assert_eq!(edges_of(1, 0, 0), vec![(6, 0)]);
    assert_eq!(edges_of(1, 0, 1), vec![]);
    assert!(idx[&(1, 0, 1)].dcsr_path.is_none()); // empty chunk: record, no file
}

#[test]
fn g7_filter_lists() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_g7(dir.path());
    let out = dir.path().join("graph");
    let m = preprocess(&input, &out, &g7_options(2, 2)).unwrap();

    let l01 = m.filter_for(0, 1).unwrap();
    assert_eq!(l01.len, 2);
    assert_eq!(read_id_list(&out.join(l01.path.as_ref().unwrap())).unwrap(), vec![1, 2]);
    let l10 = m.filter_for(1, 0).unwrap();
    assert_eq!(read_id_list(&out.join(l10.path.as_ref().unwrap())).unwrap(), vec![6]);
}

#[test]
fn g7_dispatch_structures() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_g7(dir.path());
    let out = dir.path().join("graph");
    let m = preprocess(&input, &out, &g7_options(2, 2)).unwrap();

    // node 1 from partition 0: {1 -> batch0, 2 -> batch0, 2 -> batch1}
    let d = m.dispatch_for(0, 1).unwrap();
    assert_eq!(d.pair_count, 3);
    let repr = load_chunk(&out.join(d.dcsr_path.as_ref().unwrap())).unwrap();
    let pairs: Vec<(u64, u64)> = crate::encoding::decode(&repr)
        .unwrap()
        .into_iter()
        .map(|e| (e.src, e.dst))
        .collect();
    assert_eq!(pairs, vec![(1, 0), (2, 0), (2, 1)]);
    // pull list of node 1 batch 1 from partition 0 = [2]
    let pl = &d.pull_lists[1];
    assert_eq!(read_id_list(&out.join(pl.path.as_ref().unwrap())).unwrap(), vec![2]);
    assert_eq!(read_id_list(&out.join(d.pull_lists[0].path.as_ref().unwrap())).unwrap(), vec![1, 2]);
}

#[test]
fn single_batch_node_maps_everything_to_batch_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_g7(dir.path());
    let out = dir.path().join("graph");
    // batch size >= partition size: one batch per node
    let m = preprocess(&input, &out, &g7_options(2, 64)).unwrap();
    for d in &m.dispatch {
        for e in d.dcsr_path.iter() {
            let pairs = crate::encoding::decode(&load_chunk(&out.join(e)).unwrap()).unwrap();
            assert!(pairs.iter().all(|p| p.dst == 0));
        }
    }
}

#[test]
fn reversed_graph_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_g7(dir.path());
    let out = dir.path().join("graph");
    let opts = PreprocessOptions { build_reversed: true, ..g7_options(2, 2) };
    let m = preprocess(&input, &out, &opts).unwrap();
    let rev_dir = out.join(m.reversed.as_ref().unwrap());
    let rm = Manifest::load(&rev_dir).unwrap();
    assert_eq!(rm.meta.num_edges, 9);
    assert_eq!(rm.layout, m.layout); // shared layout

    let rev_edges: BTreeSet<(u64, u64)> =
        decode_all_edges(&rev_dir, &rm).unwrap().into_iter().map(|e| (e.0, e.1)).collect();
    assert!(rev_edges.contains(&(1, 0)));
    let want: BTreeSet<(u64, u64)> =
        testgraphs::G7_EDGES.iter().map(|&(s, d)| (d, s)).collect();
    assert_eq!(rev_edges, want);
}

#[test]
fn empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.bin");
    write_all_edges(&input, 0, &[]).unwrap();
    let out = dir.path().join("graph");
    let opts = PreprocessOptions {
        num_vertices: 10,
        num_partitions: 2,
        batch_size: Some(4),
        ..Default::default()
    };
    let m = preprocess(&input, &out, &opts).unwrap();
    assert_eq!(m.meta.num_edges, 0);
    assert!(m.chunks.iter().all(|c| c.edge_count == 0 && c.dcsr_path.is_none()));
}

#[test]
fn unsorted_input_rejected_with_ordinal() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.bin");
    write_all_edges(&input, 0, &[(3, 0, vec![]), (1, 2, vec![])]).unwrap();
    let out = dir.path().join("graph");
    let err = preprocess(
        &input,
        &out,
        &PreprocessOptions { num_vertices: 5, ..Default::default() },
    )
    .unwrap_err();
    assert!(err.to_string().contains("record 2"), "{}", err);
}

#[test]
fn out_of_range_ids_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.bin");
    write_all_edges(&input, 0, &[(0, 9, vec![])]).unwrap();
    let err = preprocess(
        &input,
        &dir.path().join("g"),
        &PreprocessOptions { num_vertices: 5, ..Default::default() },
    )
    .unwrap_err();
    assert!(err.to_string().contains("outside vertex range"), "{}", err);
}

#[test]
fn end_to_end_random_graph_chunks_reproduce_input() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for trial in 0..6 {
        let n = rng.gen_range(1..400u64);
        let e = rng.gen_range(0..3000usize);
        let pb = [0u32, 4][trial % 2];
        let mut edges: Vec<(u64, u64, Vec<u8>)> = (0..e)
            .map(|_| {
                let payload = (0..pb).map(|_| rng.gen::<u8>()).collect();
                (rng.gen_range(0..n), rng.gen_range(0..n), payload)
            })
            .collect();
        edges.sort();
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.bin");
        write_all_edges(&input, pb, &edges).unwrap();
        let parts = rng.gen_range(1..=4usize.min(n as usize));
        let opts = PreprocessOptions {
            num_vertices: n,
            payload_bytes: pb,
            num_partitions: parts,
            batch_size: Some(rng.gen_range(1..80)),
            ..Default::default()
        };
        let out = dir.path().join("g");
        let m = preprocess(&input, &out, &opts).unwrap();
        let mut got = decode_all_edges(&out, &m).unwrap();
        got.sort();
        assert_eq!(got, edges, "trial {}", trial);
        // filter lists and dispatch graphs agree with the chunk contents
        for f in &m.filters {
            let ids = match &f.path {
                None => Vec::new(),
                Some(p) => read_id_list(&out.join(p)).unwrap(),
            };
            let want: BTreeSet<u64> = edges
                .iter()
                .filter(|(s, d, _)| {
                    m.layout.partition_of(*s) == f.from && m.layout.partition_of(*d) == f.to
                })
                .map(|(s, _, _)| *s)
                .collect();
            assert_eq!(ids, want.into_iter().collect::<Vec<_>>());
            assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn csr_built_iff_ratio_allows() {
    // sweep chunk densities around the threshold
    let dir = tempfile::tempdir().unwrap();
    let n = 256u64;
    for edge_count in [1usize, 4, 7, 8, 9, 64] {
        // single partition, single batch: one chunk of v_src = 256
        let edges: Vec<(u64, u64, Vec<u8>)> =
            (0..edge_count).map(|i| (i as u64 % n, (i as u64 * 7) % n, vec![])).collect();
        let mut sorted = edges.clone();
        sorted.sort();
        let input = dir.path().join(format!("in{}.bin", edge_count));
        write_all_edges(&input, 0, &sorted).unwrap();
        let out = dir.path().join(format!("g{}", edge_count));
        let m = preprocess(
            &input,
            &out,
            &PreprocessOptions {
                num_vertices: n,
                num_partitions: 1,
                batch_size: Some(n),
                ..Default::default()
            },
        )
        .unwrap();
        let rec = &m.chunks[0];
        let want = 256.0 / edge_count as f64 <= 32.0;
        assert_eq!(rec.has_csr, want, "edges {}", edge_count);
        assert_eq!(rec.csr_path.is_some(), want);
        if let Some(p) = &rec.csr_path {
            assert!(out.join(p).exists());
        }
    }
}
