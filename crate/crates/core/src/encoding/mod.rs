//! Edge chunk representations.
//!
//! Every non-empty chunk is stored as DCSR; CSR is additionally built when
//! the chunk is dense enough (|V_src|/|E| <= the CSR inflate ratio). At read
//! time the cheaper representation is chosen from the message count using a
//! seek-cost model: a CSR seek costs the same as scanning `gamma` offset
//! entries, while DCSR always scans its (src, idx) array.

mod file;

pub use file::{
    load_chunk, write_csr_file, write_dcsr_file, ChunkCursor, ChunkFileWriter, CHUNK_MAGIC,
    CHUNK_VERSION, HEADER_LEN,
};

use crate::error::{EngineError, Result};

/// One edge record inside a chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeRec {
    pub src: u64,
    pub dst: u64,
    pub payload: Vec<u8>,
}

impl EdgeRec {
    pub fn new(src: u64, dst: u64) -> Self {
        Self { src, dst, payload: Vec::new() }
    }
}

/// Edges sharing one (source partition, destination batch) pair, sorted by
/// (src, dst).
#[derive(Debug, Clone)]
pub struct EdgeChunk {
    pub src_lo: u64,
    pub src_hi: u64,
    pub payload_bytes: u32,
    pub edges: Vec<EdgeRec>,
}

impl EdgeChunk {
    pub fn new(src_range: std::ops::Range<u64>, payload_bytes: u32, edges: Vec<EdgeRec>) -> Result<Self> {
        let chunk = Self { src_lo: src_range.start, src_hi: src_range.end, payload_bytes, edges };
        chunk.check_sorted()?;
        Ok(chunk)
    }

    pub fn v_src(&self) -> u64 {
        self.src_hi - self.src_lo
    }

    pub fn edge_count(&self) -> u64 {
        self.edges.len() as u64
    }

    fn check_sorted(&self) -> Result<()> {
        for w in self.edges.windows(2) {
            if (w[1].src, w[1].dst) < (w[0].src, w[0].dst) {
                return Err(EngineError::InvalidInput(
                    "chunk edges must be sorted by (src, dst)".into(),
                ));
            }
        }
        for e in &self.edges {
            if e.src < self.src_lo || e.src >= self.src_hi {
                return Err(EngineError::InvalidInput(format!(
                    "edge source {} outside chunk range [{}, {})",
                    e.src, self.src_lo, self.src_hi
                )));
            }
            if e.payload.len() != self.payload_bytes as usize {
                return Err(EngineError::InvalidInput("edge payload size mismatch".into()));
            }
        }
        Ok(())
    }
}

/// CSR: one offset per possible source in the range, plus an end sentinel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrChunk {
    pub src_lo: u64,
    pub src_hi: u64,
    pub payload_bytes: u32,
    /// |V_src| + 1 offsets; edges of local source s occupy dst[idx[s]..idx[s+1]).
    pub idx: Vec<u64>,
    pub dst: Vec<u64>,
    pub payload: Vec<u8>,
}

/// DCSR: offsets only for sources that actually have edges in the chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DcsrChunk {
    pub src_lo: u64,
    pub src_hi: u64,
    pub payload_bytes: u32,
    /// Strictly increasing source IDs with >= 1 edge here.
    pub srcs: Vec<u64>,
    /// srcs.len() + 1 offsets, last one closes the final run.
    pub offsets: Vec<u64>,
    pub dst: Vec<u64>,
    pub payload: Vec<u8>,
}

impl DcsrChunk {
    pub fn len(&self) -> u64 {
        self.srcs.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.srcs.is_empty()
    }
}

pub fn encode_csr(chunk: &EdgeChunk) -> Result<CsrChunk> {
    chunk.check_sorted()?;
    let v = chunk.v_src() as usize;
    let mut idx = vec![0u64; v + 1];
    for e in &chunk.edges {
        idx[(e.src - chunk.src_lo) as usize + 1] += 1;
    }
    for i in 1..=v {
        idx[i] += idx[i - 1];
    }
    let mut dst = Vec::with_capacity(chunk.edges.len());
    let mut payload = Vec::with_capacity(chunk.edges.len() * chunk.payload_bytes as usize);
    for e in &chunk.edges {
        dst.push(e.dst);
        payload.extend_from_slice(&e.payload);
    }
    Ok(CsrChunk {
        src_lo: chunk.src_lo,
        src_hi: chunk.src_hi,
        payload_bytes: chunk.payload_bytes,
        idx,
        dst,
        payload,
    })
}

pub fn encode_dcsr(chunk: &EdgeChunk) -> Result<DcsrChunk> {
    chunk.check_sorted()?;
    let mut srcs = Vec::new();
    let mut offsets = Vec::new();
    let mut dst = Vec::with_capacity(chunk.edges.len());
    let mut payload = Vec::with_capacity(chunk.edges.len() * chunk.payload_bytes as usize);
    for e in &chunk.edges {
        if srcs.last() != Some(&e.src) {
            srcs.push(e.src);
            offsets.push(dst.len() as u64);
        }
        dst.push(e.dst);
        payload.extend_from_slice(&e.payload);
    }
    offsets.push(dst.len() as u64);
    Ok(DcsrChunk {
        src_lo: chunk.src_lo,
        src_hi: chunk.src_hi,
        payload_bytes: chunk.payload_bytes,
        srcs,
        offsets,
        dst,
        payload,
    })
}

/// Build CSR in addition to DCSR when the chunk is dense enough:
/// e > 0 and v_src / e <= ratio (real-valued division).
pub fn should_build_csr(v_src: u64, e: u64, ratio: u64) -> bool {
    e > 0 && v_src as f64 / e as f64 <= ratio as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprChoice {
    Csr,
    Dcsr,
}

/// Pick the representation to read: CSR when available and its seek cost
/// min(gamma*|M|, |V_src|) does not exceed DCSR's scan cost 2*dcsr_len.
/// Ties prefer CSR for its cheaper scan path.
pub fn choose_read_representation(
    msg_count: u64,
    v_src: u64,
    dcsr_len: u64,
    gamma: u64,
    csr_available: bool,
) -> ReprChoice {
    if !csr_available {
        return ReprChoice::Dcsr;
    }
    let csr_cost = (gamma as u128 * msg_count as u128).min(v_src as u128);
    let dcsr_cost = 2 * dcsr_len as u128;
    if csr_cost <= dcsr_cost {
        ReprChoice::Csr
    } else {
        ReprChoice::Dcsr
    }
}

/// Either in-memory representation, for decode-style access.
#[derive(Debug, Clone)]
pub enum Repr {
    Csr(CsrChunk),
    Dcsr(DcsrChunk),
}

impl Repr {
    pub fn src_range(&self) -> std::ops::Range<u64> {
        match self {
            Repr::Csr(c) => c.src_lo..c.src_hi,
            Repr::Dcsr(d) => d.src_lo..d.src_hi,
        }
    }

    pub fn payload_bytes(&self) -> u32 {
        match self {
            Repr::Csr(c) => c.payload_bytes,
            Repr::Dcsr(d) => d.payload_bytes,
        }
    }
}

/// Emit the edges whose source appears in the ascending `sources` stream, in
/// (src, dst) order. The CSR path seeks by source; the DCSR path merges the
/// stream with the (src, idx) array.
pub fn iterate_edges_for_sources(
    repr: &Repr,
    sources: impl IntoIterator<Item = u64>,
    mut sink: impl FnMut(u64, u64, &[u8]),
) -> Result<()> {
    let range = repr.src_range();
    let pb = repr.payload_bytes() as usize;
    let mut prev: Option<u64> = None;
    match repr {
        Repr::Csr(c) => {
            for s in sources {
                check_source(s, &range, &mut prev)?;
                let local = (s - c.src_lo) as usize;
                let (lo, hi) = (c.idx[local] as usize, c.idx[local + 1] as usize);
                for i in lo..hi {
                    sink(s, c.dst[i], &c.payload[i * pb..(i + 1) * pb]);
                }
            }
        }
        Repr::Dcsr(d) => {
            let mut cursor = 0usize;
            for s in sources {
                check_source(s, &range, &mut prev)?;
                while cursor < d.srcs.len() && d.srcs[cursor] < s {
                    cursor += 1;
                }
                if cursor < d.srcs.len() && d.srcs[cursor] == s {
                    let (lo, hi) = (d.offsets[cursor] as usize, d.offsets[cursor + 1] as usize);
                    for i in lo..hi {
                        sink(s, d.dst[i], &d.payload[i * pb..(i + 1) * pb]);
                    }
                }
            }
        }
    }
    Ok(())
}

fn check_source(s: u64, range: &std::ops::Range<u64>, prev: &mut Option<u64>) -> Result<()> {
    if s < range.start || s >= range.end {
        return Err(EngineError::InvalidInput(format!(
            "source {} outside chunk range [{}, {})",
            s, range.start, range.end
        )));
    }
    if let Some(p) = *prev {
        if s < p {
            return Err(EngineError::InvalidInput("source stream must be ascending".into()));
        }
    }
    *prev = Some(s);
    Ok(())
}

/// Full decode: iterate every source of the range.
pub fn decode(repr: &Repr) -> Result<Vec<EdgeRec>> {
    let mut out = Vec::new();
    let range = repr.src_range();
    iterate_edges_for_sources(repr, range, |src, dst, payload| {
        out.push(EdgeRec { src, dst, payload: payload.to_vec() });
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chunk_2edges() -> EdgeChunk {
        EdgeChunk::new(0..3, 0, vec![EdgeRec::new(1, 3), EdgeRec::new(2, 3)]).unwrap()
    }

    #[test]
    fn encode_csr_example() {
        let c = encode_csr(&chunk_2edges()).unwrap();
        assert_eq!(c.idx, vec![0, 0, 1, 2]);
        assert_eq!(c.dst, vec![3, 3]);
    }

    #[test]
    fn encode_dcsr_example() {
        let d = encode_dcsr(&chunk_2edges()).unwrap();
        assert_eq!(d.srcs, vec![1, 2]);
        assert_eq!(d.offsets, vec![0, 1, 2]);
        assert_eq!(d.dst, vec![3, 3]);
    }

    #[test]
    fn encode_empty_chunk() {
        let empty = EdgeChunk::new(0..4, 0, vec![]).unwrap();
        let c = encode_csr(&empty).unwrap();
        assert_eq!(c.idx, vec![0, 0, 0, 0, 0]);
        assert!(c.dst.is_empty());
        let d = encode_dcsr(&empty).unwrap();
        assert!(d.srcs.is_empty());
        assert!(d.dst.is_empty());
    }

    #[test]
    fn unsorted_input_rejected() {
        let r = EdgeChunk::new(0..3, 0, vec![EdgeRec::new(2, 3), EdgeRec::new(1, 3)]);
        assert!(r.is_err());
    }

    #[test]
    fn should_build_csr_examples() {
        assert!(should_build_csr(100, 4, 32));
        assert!(!should_build_csr(100, 2, 32));
        assert!(should_build_csr(64, 2, 32)); // boundary: 32 <= 32
        assert!(!should_build_csr(100, 0, 32)); // empty chunk never gets CSR
    }

    #[test]
    fn choose_read_representation_examples() {
        assert_eq!(choose_read_representation(1, 2_000_000, 1000, 1024, true), ReprChoice::Csr);
        // tie 100_000 == 100_000 resolves to CSR
        assert_eq!(choose_read_representation(10_000, 100_000, 50_000, 1024, true), ReprChoice::Csr);
        assert_eq!(choose_read_representation(5, 10, 1, 1024, false), ReprChoice::Dcsr);
    }

    #[test]
    fn iterate_examples() {
        let chunk = chunk_2edges();
        let csr = Repr::Csr(encode_csr(&chunk).unwrap());
        let dcsr = Repr::Dcsr(encode_dcsr(&chunk).unwrap());

        let mut got = Vec::new();
        iterate_edges_for_sources(&csr, [2], |s, d, _| got.push((s, d))).unwrap();
        assert_eq!(got, vec![(2, 3)]);

        let mut got = Vec::new();
        iterate_edges_for_sources(&dcsr, [0], |s, d, _| got.push((s, d))).unwrap();
        assert!(got.is_empty());

        assert_eq!(decode(&csr).unwrap(), chunk.edges);
        assert_eq!(decode(&dcsr).unwrap(), chunk.edges);
    }

    #[test]
    fn descending_sources_rejected() {
        let chunk = chunk_2edges();
        let csr = Repr::Csr(encode_csr(&chunk).unwrap());
        let r = iterate_edges_for_sources(&csr, [2, 1], |_, _, _| {});
        assert!(r.is_err());
    }

    fn arb_chunk() -> impl Strategy<Value = EdgeChunk> {
        (1u64..40, 0u32..3).prop_flat_map(|(v_src, pb)| {
            proptest::collection::vec((0..v_src, 0u64..100, proptest::collection::vec(any::<u8>(), pb as usize)), 0..200)
                .prop_map(move |mut triples| {
                    triples.sort_by_key(|t| (t.0, t.1));
                    let edges = triples
                        .into_iter()
                        .map(|(src, dst, payload)| EdgeRec { src, dst, payload })
                        .collect();
                    EdgeChunk::new(0..v_src, pb, edges).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn roundtrip_and_equivalence(chunk in arb_chunk(), subset_mask in any::<u64>()) {
            let csr = Repr::Csr(encode_csr(&chunk).unwrap());
            let dcsr = Repr::Dcsr(encode_dcsr(&chunk).unwrap());
            prop_assert_eq!(decode(&csr).unwrap(), chunk.edges.clone());
            prop_assert_eq!(decode(&dcsr).unwrap(), chunk.edges.clone());

            // Any source subset yields identical streams from both forms.
            let sources: Vec<u64> = (0..chunk.v_src()).filter(|s| subset_mask >> (s % 64) & 1 == 1).collect();
            let mut a = Vec::new();
            iterate_edges_for_sources(&csr, sources.iter().copied(), |s, d, p| a.push((s, d, p.to_vec()))).unwrap();
            let mut b = Vec::new();
            iterate_edges_for_sources(&dcsr, sources.iter().copied(), |s, d, p| b.push((s, d, p.to_vec()))).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn csr_policy_monotone_in_edges(v_src in 1u64..1000, e in 0u64..1000, ratio in 1u64..64) {
            // increasing e never flips true -> false
            if should_build_csr(v_src, e, ratio) {
                prop_assert!(should_build_csr(v_src, e + 1, ratio));
            }
        }

        #[test]
        fn size_invariants(chunk in arb_chunk()) {
            let csr = encode_csr(&chunk).unwrap();
            let dcsr = encode_dcsr(&chunk).unwrap();
            prop_assert_eq!(csr.idx.len() as u64, chunk.v_src() + 1);
            prop_assert!(dcsr.len() <= chunk.v_src().min(chunk.edge_count()));
            prop_assert_eq!(dcsr.offsets.len(), dcsr.srcs.len() + 1);
        }
    }
}
