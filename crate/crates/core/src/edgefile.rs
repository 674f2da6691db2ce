//! Binary edge files: records of {src u64 LE, dst u64 LE, payload bytes}.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{EngineError, IoContext, Result};
use crate::util::read_exact_or_eof;

pub fn record_len(payload_bytes: u32) -> usize {
    16 + payload_bytes as usize
}

/// Streaming reader over an edge file.
pub struct EdgeFileReader {
    r: BufReader<File>,
    rec: Vec<u8>,
    payload_bytes: u32,
    pub ordinal: u64,
}

impl EdgeFileReader {
    pub fn open(path: &Path, payload_bytes: u32) -> Result<Self> {
        let len = std::fs::metadata(path).io_ctx(format!("stat {}", path.display()))?.len();
        let rl = record_len(payload_bytes) as u64;
        if len % rl != 0 {
            return Err(EngineError::InvalidInput(format!(
                "{}: size {} is not a multiple of the {}-byte record",
                path.display(),
                len,
                rl
            )));
        }
        let f = File::open(path).io_ctx(format!("opening {}", path.display()))?;
        Ok(Self {
            r: BufReader::with_capacity(256 * 1024, f),
            rec: vec![0u8; record_len(payload_bytes)],
            payload_bytes,
            ordinal: 0,
        })
    }

    /// Next record as (src, dst, payload). Returns None at EOF.
    pub fn next(&mut self) -> Result<Option<(u64, u64, &[u8])>> {
        if !read_exact_or_eof(&mut self.r, &mut self.rec).io_ctx("reading edge record")? {
            return Ok(None);
        }
        self.ordinal += 1;
        let src = u64::from_le_bytes(self.rec[0..8].try_into().unwrap());
        let dst = u64::from_le_bytes(self.rec[8..16].try_into().unwrap());
        Ok(Some((src, dst, &self.rec[16..16 + self.payload_bytes as usize])))
    }
}

pub struct EdgeFileWriter {
    w: BufWriter<File>,
    payload_bytes: u32,
    pub count: u64,
}

impl EdgeFileWriter {
    pub fn create(path: &Path, payload_bytes: u32) -> Result<Self> {
        let f = File::create(path).io_ctx(format!("creating {}", path.display()))?;
        Ok(Self { w: BufWriter::with_capacity(256 * 1024, f), payload_bytes, count: 0 })
    }

    /// Wrap an already-open file with a caller-chosen buffer size; used when
    /// many writers are open at once.
    pub fn from_file(f: File, payload_bytes: u32, buf_bytes: usize) -> Self {
        Self { w: BufWriter::with_capacity(buf_bytes, f), payload_bytes, count: 0 }
    }

    pub fn write(&mut self, src: u64, dst: u64, payload: &[u8]) -> Result<()> {
        debug_assert_eq!(payload.len(), self.payload_bytes as usize);
        self.w.write_all(&src.to_le_bytes()).io_ctx("writing edge")?;
        self.w.write_all(&dst.to_le_bytes()).io_ctx("writing edge")?;
        self.w.write_all(payload).io_ctx("writing edge")?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.w.flush().io_ctx("flushing edge file")?;
        Ok(self.count)
    }
}

/// Convenience for tests and the oracle path: load every edge.
pub fn read_all_edges(path: &Path, payload_bytes: u32) -> Result<Vec<(u64, u64, Vec<u8>)>> {
    let mut r = EdgeFileReader::open(path, payload_bytes)?;
    let mut out = Vec::new();
    while let Some((s, d, p)) = r.next()? {
        out.push((s, d, p.to_vec()));
    }
    Ok(out)
}

/// Write edges from an in-memory list, mostly for tests and generators.
pub fn write_all_edges(path: &Path, payload_bytes: u32, edges: &[(u64, u64, Vec<u8>)]) -> Result<()> {
    let mut w = EdgeFileWriter::create(path, payload_bytes)?;
    for (s, d, p) in edges {
        w.write(*s, *d, p)?;
    }
    w.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        let edges = vec![(0u64, 1u64, vec![9u8, 8]), (5, 2, vec![1, 2])];
        write_all_edges(&p, 2, &edges).unwrap();
        assert_eq!(read_all_edges(&p, 2).unwrap(), edges);
    }

    #[test]
    fn bad_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        std::fs::write(&p, [0u8; 17]).unwrap();
        assert!(EdgeFileReader::open(&p, 0).is_err());
    }
}
