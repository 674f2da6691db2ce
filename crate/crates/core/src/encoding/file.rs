//! On-disk chunk layout, little-endian throughout:
//! header {magic "DFOC", version u32, form u8 (0=CSR, 1=DCSR), src_lo u64,
//! src_hi u64, edge_count u64, payload_bytes u32}, then the offsets array,
//! then (DCSR only) the source-ID array, then the dst array, then the
//! payload array. The DCSR entry count is recovered from the file size.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use super::{CsrChunk, DcsrChunk, Repr, ReprChoice};
use crate::error::{EngineError, IoContext, Result};

pub const CHUNK_MAGIC: [u8; 4] = *b"DFOC";
pub const CHUNK_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 37;

const FORM_CSR: u8 = 0;
const FORM_DCSR: u8 = 1;

/// Read buffer size for each streaming section cursor.
pub const CURSOR_BUF_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy)]
struct Header {
    form: u8,
    src_lo: u64,
    src_hi: u64,
    edge_count: u64,
    payload_bytes: u32,
}

impl Header {
    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&CHUNK_MAGIC);
        b[4..8].copy_from_slice(&CHUNK_VERSION.to_le_bytes());
        b[8] = self.form;
        b[9..17].copy_from_slice(&self.src_lo.to_le_bytes());
        b[17..25].copy_from_slice(&self.src_hi.to_le_bytes());
        b[25..33].copy_from_slice(&self.edge_count.to_le_bytes());
        b[33..37].copy_from_slice(&self.payload_bytes.to_le_bytes());
        b
    }

    fn decode(b: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |detail: &str| EngineError::Corrupt {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        if b.len() < HEADER_LEN as usize {
            return Err(corrupt("file shorter than chunk header"));
        }
        if b[0..4] != CHUNK_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(b[4..8].try_into().unwrap());
        if version != CHUNK_VERSION {
            return Err(corrupt(&format!("unsupported version {}", version)));
        }
        let form = b[8];
        if form != FORM_CSR && form != FORM_DCSR {
            return Err(corrupt(&format!("unknown form {}", form)));
        }
        let src_lo = u64::from_le_bytes(b[9..17].try_into().unwrap());
        let src_hi = u64::from_le_bytes(b[17..25].try_into().unwrap());
        if src_hi < src_lo {
            return Err(corrupt("src_hi < src_lo"));
        }
        Ok(Header {
            form,
            src_lo,
            src_hi,
            edge_count: u64::from_le_bytes(b[25..33].try_into().unwrap()),
            payload_bytes: u32::from_le_bytes(b[33..37].try_into().unwrap()),
        })
    }
}

fn write_u64s<W: Write>(w: &mut W, vals: impl IntoIterator<Item = u64>) -> std::io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_csr_file(path: &Path, chunk: &CsrChunk) -> Result<()> {
    let ctx = || format!("writing CSR chunk {}", path.display());
    let mut w = BufWriter::new(File::create(path).io_ctx(ctx())?);
    let header = Header {
        form: FORM_CSR,
        src_lo: chunk.src_lo,
        src_hi: chunk.src_hi,
        edge_count: chunk.dst.len() as u64,
        payload_bytes: chunk.payload_bytes,
    };
    w.write_all(&header.encode()).io_ctx(ctx())?;
    write_u64s(&mut w, chunk.idx.iter().copied()).io_ctx(ctx())?;
    write_u64s(&mut w, chunk.dst.iter().copied()).io_ctx(ctx())?;
    w.write_all(&chunk.payload).io_ctx(ctx())?;
    w.flush().io_ctx(ctx())
}

pub fn write_dcsr_file(path: &Path, chunk: &DcsrChunk) -> Result<()> {
    let ctx = || format!("writing DCSR chunk {}", path.display());
    let mut w = BufWriter::new(File::create(path).io_ctx(ctx())?);
    let header = Header {
        form: FORM_DCSR,
        src_lo: chunk.src_lo,
        src_hi: chunk.src_hi,
        edge_count: chunk.dst.len() as u64,
        payload_bytes: chunk.payload_bytes,
    };
    w.write_all(&header.encode()).io_ctx(ctx())?;
    write_u64s(&mut w, chunk.offsets.iter().copied()).io_ctx(ctx())?;
    write_u64s(&mut w, chunk.srcs.iter().copied()).io_ctx(ctx())?;
    write_u64s(&mut w, chunk.dst.iter().copied()).io_ctx(ctx())?;
    w.write_all(&chunk.payload).io_ctx(ctx())?;
    w.flush().io_ctx(ctx())
}

/// Load a whole chunk file into memory. Used by preprocessing verification,
/// the oracle path and tests; the runtime streams with [`ChunkCursor`].
pub fn load_chunk(path: &Path) -> Result<Repr> {
    let ctx = || format!("reading chunk {}", path.display());
    let mut bytes = Vec::new();
    File::open(path).io_ctx(ctx())?.read_to_end(&mut bytes).io_ctx(ctx())?;
    let h = Header::decode(&bytes, path)?;
    let corrupt = |detail: String| EngineError::Corrupt { path: path.to_path_buf(), detail };
    let body = &bytes[HEADER_LEN as usize..];
    let read_arr = |off: usize, n: usize| -> Result<Vec<u64>> {
        let end = off + n * 8;
        if end > body.len() {
            return Err(corrupt("truncated section".into()));
        }
        Ok(body[off..end]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let e = h.edge_count as usize;
    let pb = h.payload_bytes as usize;
    match h.form {
        FORM_CSR => {
            let v = (h.src_hi - h.src_lo) as usize;
            let idx = read_arr(0, v + 1)?;
            let dst = read_arr((v + 1) * 8, e)?;
            let p_off = (v + 1 + e) * 8;
            if body.len() != p_off + e * pb {
                return Err(corrupt(format!("CSR size mismatch: {} body bytes", body.len())));
            }
            Ok(Repr::Csr(CsrChunk {
                src_lo: h.src_lo,
                src_hi: h.src_hi,
                payload_bytes: h.payload_bytes,
                idx,
                dst,
                payload: body[p_off..].to_vec(),
            }))
        }
        FORM_DCSR => {
            let fixed = 8 + e * 8 + e * pb; // sentinel offset + dst + payload
            if body.len() < fixed || (body.len() - fixed) % 16 != 0 {
                return Err(corrupt(format!("DCSR size mismatch: {} body bytes", body.len())));
            }
            let l = (body.len() - fixed) / 16;
            let offsets = read_arr(0, l + 1)?;
            let srcs = read_arr((l + 1) * 8, l)?;
            let dst = read_arr((2 * l + 1) * 8, e)?;
            let p_off = (2 * l + 1 + e) * 8;
            Ok(Repr::Dcsr(DcsrChunk {
                src_lo: h.src_lo,
                src_hi: h.src_hi,
                payload_bytes: h.payload_bytes,
                srcs,
                offsets,
                dst,
                payload: body[p_off..].to_vec(),
            }))
        }
        _ => unreachable!(),
    }
}

/// Streaming chunk writer used by preprocessing: the run list (source,
/// degree) comes from a first pass over the sorted chunk edges, then dst and
/// payload columns are appended edge by edge without materializing the
/// chunk.
pub struct ChunkFileWriter {
    path: PathBuf,
    dst_w: BufWriter<File>,
    payload_w: Option<BufWriter<File>>,
    edge_count: u64,
    written: u64,
}

impl ChunkFileWriter {
    /// `runs` are (source ID, edge count) pairs, strictly ascending by
    /// source, covering every source with >= 1 edge in the chunk.
    pub fn create(
        path: &Path,
        form: ReprChoice,
        src_range: std::ops::Range<u64>,
        payload_bytes: u32,
        runs: &[(u64, u64)],
    ) -> Result<Self> {
        let ctx = || format!("creating chunk {}", path.display());
        let edge_count: u64 = runs.iter().map(|r| r.1).sum();
        let mut head = BufWriter::new(File::create(path).io_ctx(ctx())?);
        let header = Header {
            form: match form {
                ReprChoice::Csr => FORM_CSR,
                ReprChoice::Dcsr => FORM_DCSR,
            },
            src_lo: src_range.start,
            src_hi: src_range.end,
            edge_count,
            payload_bytes,
        };
        head.write_all(&header.encode()).io_ctx(ctx())?;
        let mut meta_len = HEADER_LEN;
        match form {
            ReprChoice::Csr => {
                // one offset per possible source plus the end sentinel
                let mut cum = 0u64;
                let mut run = runs.iter().peekable();
                for s in src_range.clone() {
                    head.write_all(&cum.to_le_bytes()).io_ctx(ctx())?;
                    if let Some(&&(rs, rc)) = run.peek() {
                        if rs == s {
                            cum += rc;
                            run.next();
                        }
                    }
                }
                head.write_all(&cum.to_le_bytes()).io_ctx(ctx())?;
                meta_len += 8 * (src_range.end - src_range.start + 1);
            }
            ReprChoice::Dcsr => {
                let mut cum = 0u64;
                for &(_, c) in runs {
                    head.write_all(&cum.to_le_bytes()).io_ctx(ctx())?;
                    cum += c;
                }
                head.write_all(&cum.to_le_bytes()).io_ctx(ctx())?;
                for &(s, _) in runs {
                    head.write_all(&s.to_le_bytes()).io_ctx(ctx())?;
                }
                meta_len += 16 * runs.len() as u64 + 8;
            }
        }
        head.flush().io_ctx(ctx())?;
        drop(head);

        let dst_pos = meta_len;
        let payload_pos = dst_pos + 8 * edge_count;
        let mut dst_f = File::options().write(true).open(path).io_ctx(ctx())?;
        dst_f.seek(SeekFrom::Start(dst_pos)).io_ctx(ctx())?;
        let payload_w = if payload_bytes > 0 {
            let mut f = File::options().write(true).open(path).io_ctx(ctx())?;
            f.seek(SeekFrom::Start(payload_pos)).io_ctx(ctx())?;
            Some(BufWriter::new(f))
        } else {
            None
        };
        Ok(Self {
            path: path.to_path_buf(),
            dst_w: BufWriter::new(dst_f),
            payload_w,
            edge_count,
            written: 0,
        })
    }

    pub fn append_edge(&mut self, dst: u64, payload: &[u8]) -> Result<()> {
        let ctx = || format!("appending to chunk {}", self.path.display());
        self.dst_w.write_all(&dst.to_le_bytes()).io_ctx(ctx())?;
        if let Some(w) = self.payload_w.as_mut() {
            w.write_all(payload).io_ctx(ctx())?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.edge_count {
            return Err(EngineError::State(format!(
                "chunk {}: wrote {} edges, declared {}",
                self.path.display(),
                self.written,
                self.edge_count
            )));
        }
        let ctx = || format!("finishing chunk {}", self.path.display());
        self.dst_w.flush().io_ctx(ctx())?;
        if let Some(w) = self.payload_w.as_mut() {
            w.flush().io_ctx(ctx())?;
        }
        Ok(())
    }
}

/// How the CSR offsets section is traversed: `Seek` pays one seek per
/// visited source, `Scan` walks the whole array sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsrMode {
    Seek,
    Scan,
}

struct SectionCursor {
    r: BufReader<File>,
    consumed: u64,
}

impl SectionCursor {
    fn open(path: &Path, start: u64) -> Result<Self> {
        let mut f = File::open(path).io_ctx(format!("opening {}", path.display()))?;
        f.seek(SeekFrom::Start(start)).io_ctx("seeking section")?;
        Ok(Self { r: BufReader::with_capacity(CURSOR_BUF_BYTES, f), consumed: 0 })
    }

    fn read_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.r.read_exact(&mut b).io_ctx("reading chunk section")?;
        self.consumed += 8;
        Ok(u64::from_le_bytes(b))
    }

    fn read_bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r.read_exact(buf).io_ctx("reading chunk section")?;
        self.consumed += buf.len() as u64;
        Ok(())
    }

    fn skip(&mut self, bytes: u64) -> Result<()> {
        self.r.seek_relative(bytes as i64).io_ctx("skipping chunk section")?;
        self.consumed += bytes;
        Ok(())
    }
}

enum CursorKind {
    CsrSeek {
        file: File,
        next_local: u64, // ascending-visit guard
    },
    CsrScan {
        idx: SectionCursor,
        data: SectionCursor,
        payload: Option<SectionCursor>,
        next_local: u64,
        cum: u64,      // idx[next_local], already consumed
        data_row: u64, // rows consumed from the dst column
    },
    Dcsr {
        offsets: SectionCursor,
        srcs: SectionCursor,
        data: SectionCursor,
        payload: Option<SectionCursor>,
        entries_left: u64,
        cur: Option<(u64, u64)>, // (source, start offset) of the current entry
        next_off: u64,
        data_row: u64,
        last_visited: Option<u64>,
    },
}

/// Streaming edge access for one chunk file, visiting sources in ascending
/// order. Nothing larger than the fixed section buffers is held in memory.
pub struct ChunkCursor {
    path: PathBuf,
    src_lo: u64,
    src_hi: u64,
    edge_count: u64,
    payload_bytes: u32,
    kind: CursorKind,
    seek_bytes: u64,
}

impl ChunkCursor {
    pub fn open(path: &Path, form: ReprChoice, csr_mode: CsrMode) -> Result<Self> {
        let mut hdr = [0u8; HEADER_LEN as usize];
        {
            let mut f = File::open(path).io_ctx(format!("opening chunk {}", path.display()))?;
            f.read_exact(&mut hdr).io_ctx(format!("reading header of {}", path.display()))?;
        }
        let h = Header::decode(&hdr, path)?;
        let want_form = match form {
            ReprChoice::Csr => FORM_CSR,
            ReprChoice::Dcsr => FORM_DCSR,
        };
        if h.form != want_form {
            return Err(EngineError::Corrupt {
                path: path.to_path_buf(),
                detail: format!("expected form {}, found {}", want_form, h.form),
            });
        }
        let v = h.src_hi - h.src_lo;
        let e = h.edge_count;
        let pb = h.payload_bytes as u64;
        let kind = match (form, csr_mode) {
            (ReprChoice::Csr, CsrMode::Seek) => CursorKind::CsrSeek {
                file: File::open(path).io_ctx("opening chunk")?,
                next_local: 0,
            },
            (ReprChoice::Csr, CsrMode::Scan) => {
                let mut idx = SectionCursor::open(path, HEADER_LEN)?;
                let cum = idx.read_u64()?;
                let data = SectionCursor::open(path, HEADER_LEN + 8 * (v + 1))?;
                let payload = if pb > 0 {
                    Some(SectionCursor::open(path, HEADER_LEN + 8 * (v + 1) + 8 * e)?)
                } else {
                    None
                };
                CursorKind::CsrScan { idx, data, payload, next_local: 0, cum, data_row: 0 }
            }
            (ReprChoice::Dcsr, _) => {
                let file_len = std::fs::metadata(path).io_ctx("stat chunk")?.len();
                let fixed = HEADER_LEN + 8 + 8 * e + e * pb;
                if file_len < fixed || (file_len - fixed) % 16 != 0 {
                    return Err(EngineError::Corrupt {
                        path: path.to_path_buf(),
                        detail: "DCSR size mismatch".into(),
                    });
                }
                let l = (file_len - fixed) / 16;
                let mut offsets = SectionCursor::open(path, HEADER_LEN)?;
                let srcs = SectionCursor::open(path, HEADER_LEN + 8 * (l + 1))?;
                let data = SectionCursor::open(path, HEADER_LEN + 8 * (2 * l + 1))?;
                let payload = if pb > 0 {
                    Some(SectionCursor::open(path, HEADER_LEN + 8 * (2 * l + 1) + 8 * e)?)
                } else {
                    None
                };
                let next_off = offsets.read_u64()?;
                CursorKind::Dcsr {
                    offsets,
                    srcs,
                    data,
                    payload,
                    entries_left: l,
                    cur: None,
                    next_off,
                    data_row: 0,
                    last_visited: None,
                }
            }
        };
        Ok(Self {
            path: path.to_path_buf(),
            src_lo: h.src_lo,
            src_hi: h.src_hi,
            edge_count: h.edge_count,
            payload_bytes: h.payload_bytes,
            kind,
            seek_bytes: 0,
        })
    }

    pub fn payload_bytes(&self) -> u32 {
        self.payload_bytes
    }

    /// Total bytes pulled from the file so far, for the I/O counters.
    pub fn bytes_read(&self) -> u64 {
        self.seek_bytes
            + match &self.kind {
                CursorKind::CsrSeek { .. } => 0,
                CursorKind::CsrScan { idx, data, payload, .. } => {
                    idx.consumed
                        + data.consumed
                        + payload.as_ref().map_or(0, |p| p.consumed)
                }
                CursorKind::Dcsr { offsets, srcs, data, payload, .. } => {
                    offsets.consumed
                        + srcs.consumed
                        + data.consumed
                        + payload.as_ref().map_or(0, |p| p.consumed)
                }
            }
    }

    /// Visit every edge of `src`, calling `sink(dst, payload)`. Sources must
    /// arrive in ascending order across calls.
    pub fn visit_edges_of(
        &mut self,
        src: u64,
        mut sink: impl FnMut(u64, &[u8]) -> Result<()>,
    ) -> Result<()> {
        if src < self.src_lo || src >= self.src_hi {
            return Err(EngineError::InvalidInput(format!(
                "source {} outside chunk range [{}, {}) in {}",
                src,
                self.src_lo,
                self.src_hi,
                self.path.display()
            )));
        }
        let local = src - self.src_lo;
        let pb = self.payload_bytes as usize;
        match &mut self.kind {
            CursorKind::CsrSeek { file, next_local } => {
                if local < *next_local {
                    return Err(EngineError::State("descending source visit".into()));
                }
                *next_local = local + 1;
                let v = self.src_hi - self.src_lo;
                let mut b = [0u8; 16];
                file.read_exact_at(&mut b, HEADER_LEN + 8 * local)
                    .io_ctx("reading CSR offsets")?;
                self.seek_bytes += 16;
                let lo = u64::from_le_bytes(b[0..8].try_into().unwrap());
                let hi = u64::from_le_bytes(b[8..16].try_into().unwrap());
                if hi < lo || hi > self.edge_count {
                    return Err(EngineError::Corrupt {
                        path: self.path.clone(),
                        detail: "non-monotone CSR offsets".into(),
                    });
                }
                let dst_pos = HEADER_LEN + 8 * (v + 1);
                let payload_pos = dst_pos + 8 * self.edge_count;
                let mut row = lo;
                let mut dbuf = [0u8; 8 * 512];
                let mut pbuf = vec![0u8; pb * 512];
                while row < hi {
                    let n = ((hi - row) as usize).min(512);
                    file.read_exact_at(&mut dbuf[..8 * n], dst_pos + 8 * row)
                        .io_ctx("reading CSR dst rows")?;
                    self.seek_bytes += 8 * n as u64;
                    if pb > 0 {
                        file.read_exact_at(&mut pbuf[..pb * n], payload_pos + pb as u64 * row)
                            .io_ctx("reading CSR payload rows")?;
                        self.seek_bytes += (pb * n) as u64;
                    }
                    for i in 0..n {
                        let d = u64::from_le_bytes(dbuf[8 * i..8 * i + 8].try_into().unwrap());
                        sink(d, &pbuf[pb * i..pb * (i + 1)])?;
                    }
                    row += n as u64;
                }
            }
            CursorKind::CsrScan { idx, data, payload, next_local, cum, data_row } => {
                if local < *next_local {
                    return Err(EngineError::State("descending source visit".into()));
                }
                // advance idx to row `local`: after the loop, cum == idx[local]
                while *next_local < local {
                    *cum = idx.read_u64()?;
                    *next_local += 1;
                }
                let lo = *cum;
                let hi = idx.read_u64()?;
                *cum = hi;
                *next_local = local + 1;
                if hi < lo || lo < *data_row {
                    return Err(EngineError::Corrupt {
                        path: self.path.clone(),
                        detail: "non-monotone CSR offsets".into(),
                    });
                }
                data.skip(8 * (lo - *data_row))?;
                if let Some(p) = payload.as_mut() {
                    p.skip(pb as u64 * (lo - *data_row))?;
                }
                let mut pbuf = vec![0u8; pb];
                for _ in lo..hi {
                    let mut b = [0u8; 8];
                    data.read_bytes(&mut b)?;
                    if let Some(p) = payload.as_mut() {
                        p.read_bytes(&mut pbuf)?;
                    }
                    sink(u64::from_le_bytes(b), &pbuf)?;
                }
                *data_row = hi;
            }
            CursorKind::Dcsr {
                offsets,
                srcs,
                data,
                payload,
                entries_left,
                cur,
                next_off,
                data_row,
                last_visited,
            } => {
                if let Some(p) = *last_visited {
                    if src <= p {
                        return Err(EngineError::State("descending source visit".into()));
                    }
                }
                *last_visited = Some(src);
                // advance entries until cur.source >= src
                loop {
                    match cur {
                        Some((s, _)) if *s >= src => break,
                        Some(_) | None => {
                            if *entries_left == 0 {
                                *cur = None;
                                break;
                            }
                            let s = srcs.read_u64()?;
                            let start = *next_off;
                            *next_off = offsets.read_u64()?;
                            *entries_left -= 1;
                            *cur = Some((s, start));
                        }
                    }
                    if let Some((s, _)) = cur {
                        if *s >= src {
                            break;
                        }
                    }
                }
                if let Some((s, start)) = *cur {
                    if s == src {
                        let (lo, hi) = (start, *next_off);
                        if hi < lo || lo < *data_row {
                            return Err(EngineError::Corrupt {
                                path: self.path.clone(),
                                detail: "non-monotone DCSR offsets".into(),
                            });
                        }
                        data.skip(8 * (lo - *data_row))?;
                        if let Some(p) = payload.as_mut() {
                            p.skip(pb as u64 * (lo - *data_row))?;
                        }
                        let mut pbuf = vec![0u8; pb];
                        for _ in lo..hi {
                            let mut b = [0u8; 8];
                            data.read_bytes(&mut b)?;
                            if let Some(p) = payload.as_mut() {
                                p.read_bytes(&mut pbuf)?;
                            }
                            sink(u64::from_le_bytes(b), &pbuf)?;
                        }
                        *data_row = hi;
                        *cur = None; // consumed; next visit advances
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode_csr, encode_dcsr, EdgeChunk, EdgeRec};
    use proptest::prelude::*;

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{:02x}", b)).collect()
    }

    #[test]
    fn golden_csr_file_bytes() {
        let chunk =
            EdgeChunk::new(0..3, 0, vec![EdgeRec::new(1, 3), EdgeRec::new(2, 3)]).unwrap();
        let csr = encode_csr(&chunk).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csr");
        write_csr_file(&path, &csr).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // header: magic, version 1, form 0, lo 0, hi 3, edges 2, payload 0
        // idx [0,0,1,2], dst [3,3]
        let want = concat!(
            "44464f43",         // "DFOC"
            "01000000",         // version
            "00",               // form = CSR
            "0000000000000000", // src_lo
            "0300000000000000", // src_hi
            "0200000000000000", // edge_count
            "00000000",         // payload_bytes
            "0000000000000000", // idx[0]
            "0000000000000000", // idx[1]
            "0100000000000000", // idx[2]
            "0200000000000000", // idx[3]
            "0300000000000000", // dst[0]
            "0300000000000000", // dst[1]
        );
        assert_eq!(hex(&bytes), want);
    }

    #[test]
    fn golden_dcsr_file_bytes() {
        let chunk =
            EdgeChunk::new(0..3, 0, vec![EdgeRec::new(1, 3), EdgeRec::new(2, 3)]).unwrap();
        let dcsr = encode_dcsr(&chunk).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.dcsr");
        write_dcsr_file(&path, &dcsr).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let want = concat!(
            "44464f43",
            "01000000",
            "01", // form = DCSR
            "0000000000000000",
            "0300000000000000",
            "0200000000000000",
            "00000000",
            "0000000000000000", // offsets[0]
            "0100000000000000", // offsets[1]
            "0200000000000000", // offsets[2] (sentinel)
            "0100000000000000", // srcs[0]
            "0200000000000000", // srcs[1]
            "0300000000000000", // dst[0]
            "0300000000000000", // dst[1]
        );
        assert_eq!(hex(&bytes), want);
    }

    #[test]
    fn load_roundtrips_both_forms() {
        let chunk = EdgeChunk::new(
            2..9,
            4,
            vec![
                EdgeRec { src: 3, dst: 1, payload: vec![1, 2, 3, 4] },
                EdgeRec { src: 3, dst: 5, payload: vec![5, 6, 7, 8] },
                EdgeRec { src: 7, dst: 0, payload: vec![9, 9, 9, 9] },
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("c.csr");
        let dp = dir.path().join("c.dcsr");
        write_csr_file(&cp, &encode_csr(&chunk).unwrap()).unwrap();
        write_dcsr_file(&dp, &encode_dcsr(&chunk).unwrap()).unwrap();
        match load_chunk(&cp).unwrap() {
            Repr::Csr(c) => assert_eq!(c, encode_csr(&chunk).unwrap()),
            _ => panic!("wrong form"),
        }
        match load_chunk(&dp).unwrap() {
            Repr::Dcsr(d) => assert_eq!(d, encode_dcsr(&chunk).unwrap()),
            _ => panic!("wrong form"),
        }
    }

    #[test]
    fn streaming_writer_matches_bulk_writer() {
        let chunk = EdgeChunk::new(
            0..5,
            2,
            vec![
                EdgeRec { src: 1, dst: 4, payload: vec![7, 8] },
                EdgeRec { src: 1, dst: 6, payload: vec![1, 1] },
                EdgeRec { src: 4, dst: 2, payload: vec![0, 3] },
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bulk_csr = dir.path().join("b.csr");
        let bulk_dcsr = dir.path().join("b.dcsr");
        write_csr_file(&bulk_csr, &encode_csr(&chunk).unwrap()).unwrap();
        write_dcsr_file(&bulk_dcsr, &encode_dcsr(&chunk).unwrap()).unwrap();

        let runs = vec![(1u64, 2u64), (4, 1)];
        for (form, bulk) in [(ReprChoice::Csr, &bulk_csr), (ReprChoice::Dcsr, &bulk_dcsr)] {
            let p = dir.path().join(format!("s.{:?}", form));
            let mut w = ChunkFileWriter::create(&p, form, 0..5, 2, &runs).unwrap();
            for e in &chunk.edges {
                w.append_edge(e.dst, &e.payload).unwrap();
            }
            w.finish().unwrap();
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(bulk).unwrap());
        }
    }

    fn arb_chunk() -> impl Strategy<Value = EdgeChunk> {
        (1u64..30, 0u32..3).prop_flat_map(|(v, pb)| {
            proptest::collection::vec(
                (0..v, 0u64..50, proptest::collection::vec(any::<u8>(), pb as usize)),
                0..120,
            )
            .prop_map(move |mut t| {
                t.sort_by_key(|x| (x.0, x.1));
                EdgeChunk::new(
                    0..v,
                    pb,
                    t.into_iter().map(|(src, dst, payload)| EdgeRec { src, dst, payload }).collect(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn cursor_matches_in_memory_iteration(chunk in arb_chunk(), mask in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let cp = dir.path().join("c.csr");
            let dp = dir.path().join("c.dcsr");
            write_csr_file(&cp, &encode_csr(&chunk).unwrap()).unwrap();
            write_dcsr_file(&dp, &encode_dcsr(&chunk).unwrap()).unwrap();
            let sources: Vec<u64> = (0..chunk.v_src()).filter(|s| mask >> (s % 64) & 1 == 1).collect();

            let mut want = Vec::new();
            crate::encoding::iterate_edges_for_sources(
                &Repr::Csr(encode_csr(&chunk).unwrap()),
                sources.iter().copied(),
                |s, d, p| want.push((s, d, p.to_vec())),
            ).unwrap();

            for (path, form, mode) in [
                (&cp, ReprChoice::Csr, CsrMode::Seek),
                (&cp, ReprChoice::Csr, CsrMode::Scan),
                (&dp, ReprChoice::Dcsr, CsrMode::Scan),
            ] {
                let mut cursor = ChunkCursor::open(path, form, mode).unwrap();
                let mut got = Vec::new();
                for &s in &sources {
                    cursor.visit_edges_of(s, |d, p| { got.push((s, d, p.to_vec())); Ok(()) }).unwrap();
                }
                prop_assert_eq!(&got, &want);
            }
        }
    }
}
