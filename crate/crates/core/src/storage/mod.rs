//! Batch-granular vertex storage with copy-on-write blocks and checkpoint
//! lineage.
//!
//! Blocks live in an append-only data file with 4 KiB-aligned starts and are
//! never rewritten once committed; every Process call stages fresh blocks
//! for the batches it writes. Commit is two-step: blocks and a pending
//! lineage snapshot are made durable first, then the coordinator journals
//! the call; recovery promotes or discards the pending state against the
//! journal, losing at most one call.
//!
//! Lineage snapshots and the journal share one record framing:
//! `[payload length u32 LE][crc32 u32 LE][JSON payload]`.

pub mod journal;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, IoContext, Result};
use crate::util::{atomic_write, crc32};

pub const BLOCK_ALIGN: u64 = 4096;

/// Write one framed record.
pub fn frame_record(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Parse framed records; a torn or corrupt tail ends the stream silently so
/// a crash mid-append loses only the unfinished record.
pub fn parse_records(bytes: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut off = 0usize;
    while off + 8 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        let Some(end) = off.checked_add(8 + len) else { break };
        if end > bytes.len() {
            break;
        }
        let payload = &bytes[off + 8..end];
        if crc32(payload) != crc {
            break;
        }
        out.push(payload);
        off = end;
    }
    out
}

/// Element layout of a vertex array: fixed-width bytes per vertex, or one
/// bit per vertex packed into 64-bit-aligned bitmap blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElemKind {
    Fixed(u32),
    Bit,
}

impl ElemKind {
    pub fn batch_bytes(&self, batch_len: u64) -> usize {
        match self {
            ElemKind::Fixed(b) => (batch_len * *b as u64) as usize,
            ElemKind::Bit => crate::util::bitmap_bytes(batch_len),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockInfo {
    offset: u64,
    len: u64,
    crc: u32,
    refs: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointEntry {
    ordinal: u64,
    blocks: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayMeta {
    elem: ElemKind,
    batch_lens: Vec<u64>,
    checkpoints: Vec<CheckpointEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StagedBlock {
    offset: u64,
    len: u64,
    crc: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
struct PendingDelta {
    ordinal: u64,
    /// (array, batch) -> staged block, with block IDs assigned at promote.
    updates: Vec<(String, usize, StagedBlock)>,
    data_len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaState {
    arrays: BTreeMap<String, ArrayMeta>,
    blocks: BTreeMap<u64, BlockInfo>,
    free: BTreeSet<(u64, u64)>, // (len, offset)
    data_len: u64,
    next_block: u64,
    last_committed: u64,
    pending: Option<PendingDelta>,
}

impl Default for MetaState {
    fn default() -> Self {
        Self {
            arrays: BTreeMap::new(),
            blocks: BTreeMap::new(),
            free: BTreeSet::new(),
            data_len: 0,
            next_block: 1,
            last_committed: 0,
            pending: None,
        }
    }
}

struct StoreInner {
    state: MetaState,
    staged: HashMap<(String, usize), StagedBlock>,
    in_call: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub dir: PathBuf,
    pub checkpointing: bool,
    /// Checkpoints retained per array after GC.
    pub keep: usize,
}

/// One rank's vertex-block store.
pub struct NodeStore {
    cfg: StoreConfig,
    data: File,
    inner: Mutex<StoreInner>,
}

const SNAP_FILE: &str = "meta.snap";
const PENDING_FILE: &str = "meta.pending";
const DATA_FILE: &str = "blocks.dat";

fn align_up(v: u64) -> u64 {
    (v + BLOCK_ALIGN - 1) / BLOCK_ALIGN * BLOCK_ALIGN
}

impl NodeStore {
    pub fn open(cfg: StoreConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.dir).io_ctx("creating store dir")?;
        let data_path = cfg.dir.join(DATA_FILE);
        let data = File::options()
            .read(true)
            .write(true)
            .create(true)
            .open(&data_path)
            .io_ctx(format!("opening {}", data_path.display()))?;

        let mut state = MetaState::default();
        if cfg.checkpointing {
            let snap = cfg.dir.join(SNAP_FILE);
            if snap.exists() {
                state = load_meta(&snap)?;
                state.pending = None;
            }
            let pending = cfg.dir.join(PENDING_FILE);
            if pending.exists() {
                let p = load_meta(&pending)?;
                // the pending file holds the full committed state plus the delta
                if p.pending.is_some() {
                    state = p;
                }
            }
        }
        Ok(Self {
            cfg,
            data,
            inner: Mutex::new(StoreInner { state, staged: HashMap::new(), in_call: None }),
        })
    }

    pub fn checkpointing(&self) -> bool {
        self.cfg.checkpointing
    }

    pub fn last_committed(&self) -> u64 {
        self.inner.lock().state.last_committed
    }

    /// Ordinal of the loaded pending commit, if the store crashed inside the
    /// commit window.
    pub fn pending_ordinal(&self) -> Option<u64> {
        self.inner.lock().state.pending.as_ref().map(|p| p.ordinal)
    }

    pub fn array_exists(&self, name: &str) -> bool {
        self.inner.lock().state.arrays.contains_key(name)
    }

    pub fn array_elem(&self, name: &str) -> Option<ElemKind> {
        self.inner.lock().state.arrays.get(name).map(|a| a.elem)
    }

    /// Create and materialize every batch of a new array at `ordinal`.
    /// `init` fills the batch buffer, which arrives zeroed.
    pub fn create_array(
        &self,
        name: &str,
        elem: ElemKind,
        batch_lens: &[u64],
        ordinal: u64,
        mut init: impl FnMut(usize, &mut [u8]),
    ) -> Result<()> {
        if self.array_exists(name) {
            return Err(EngineError::State(format!("array {} already exists", name)));
        }
        let mut blocks = Vec::with_capacity(batch_lens.len());
        let mut buf = Vec::new();
        for (b, &len) in batch_lens.iter().enumerate() {
            let bytes = elem.batch_bytes(len);
            buf.clear();
            buf.resize(bytes, 0);
            init(b, &mut buf);
            let (offset, _) = self.alloc_and_write(&buf)?;
            let crc = crc32(&buf);
            let mut inner = self.inner.lock();
            let id = inner.state.next_block;
            inner.state.next_block += 1;
            inner
                .state
                .blocks
                .insert(id, BlockInfo { offset, len: bytes as u64, crc, refs: 1 });
            blocks.push(id);
        }
        {
            let mut inner = self.inner.lock();
            inner.state.arrays.insert(
                name.to_string(),
                ArrayMeta {
                    elem,
                    batch_lens: batch_lens.to_vec(),
                    checkpoints: vec![CheckpointEntry { ordinal, blocks }],
                },
            );
        }
        if self.cfg.checkpointing {
            self.data.sync_data().io_ctx("syncing block data")?;
            self.write_snapshot()?;
        }
        Ok(())
    }

    fn alloc_extent(inner: &mut StoreInner, len: u64) -> (u64, u64) {
        let need = align_up(len.max(1));
        // smallest free extent that fits
        let found = inner
            .state
            .free
            .range((need, 0)..)
            .next()
            .copied();
        if let Some((flen, foff)) = found {
            inner.state.free.remove(&(flen, foff));
            if flen > need {
                inner.state.free.insert((flen - need, foff + need));
            }
            return (foff, need);
        }
        let off = align_up(inner.state.data_len);
        inner.state.data_len = off + need;
        (off, need)
    }

    fn alloc_and_write(&self, bytes: &[u8]) -> Result<(u64, u64)> {
        let (offset, span) = {
            let mut inner = self.inner.lock();
            Self::alloc_extent(&mut inner, bytes.len() as u64)
        };
        self.data.write_all_at(bytes, offset).io_ctx("writing block")?;
        Ok((offset, span))
    }

    fn read_at(&self, info_offset: u64, len: u64, crc: u32, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len as usize];
        self.data.read_exact_at(&mut buf, info_offset).io_ctx("reading block")?;
        if crc32(&buf) != crc {
            return Err(EngineError::Corrupt {
                path: self.cfg.dir.join(DATA_FILE),
                detail: format!("checksum mismatch reading {}", what),
            });
        }
        Ok(buf)
    }

    /// Read a batch at the newest state visible to the current call: the
    /// call's own staged write if present, else the latest checkpoint.
    pub fn read_batch(&self, name: &str, batch: usize) -> Result<Vec<u8>> {
        let (offset, len, crc) = {
            let inner = self.inner.lock();
            if let Some(s) = inner.staged.get(&(name.to_string(), batch)) {
                (s.offset, s.len, s.crc)
            } else {
                let a = inner
                    .state
                    .arrays
                    .get(name)
                    .ok_or_else(|| EngineError::State(format!("no array {}", name)))?;
                let cp = a.checkpoints.last().ok_or_else(|| {
                    EngineError::Unrecoverable(format!("array {} has no checkpoints", name))
                })?;
                let id = cp.blocks[batch];
                let info = &inner.state.blocks[&id];
                (info.offset, info.len, info.crc)
            }
        };
        self.read_at(offset, len, crc, &format!("{}[{}]", name, batch))
    }

    /// Read a batch under a specific retained checkpoint.
    pub fn read_batch_at(&self, name: &str, batch: usize, ordinal: u64) -> Result<Vec<u8>> {
        let (offset, len, crc) = {
            let inner = self.inner.lock();
            let a = inner
                .state
                .arrays
                .get(name)
                .ok_or_else(|| EngineError::State(format!("no array {}", name)))?;
            let cp = a
                .checkpoints
                .iter()
                .rev()
                .find(|c| c.ordinal <= ordinal)
                .ok_or_else(|| EngineError::State(format!("no checkpoint <= {}", ordinal)))?;
            let info = &inner.state.blocks[&cp.blocks[batch]];
            (info.offset, info.len, info.crc)
        };
        self.read_at(offset, len, crc, &format!("{}[{}]@{}", name, batch, ordinal))
    }

    pub fn begin_call(&self, ordinal: u64) -> Result<()> {
        let mut inner = self.inner.lock();
        if inner.in_call.is_some() {
            return Err(EngineError::State("a Process call is already open".into()));
        }
        inner.in_call = Some(ordinal);
        Ok(())
    }

    /// Copy-on-write batch write inside an open call. With checkpointing
    /// off, the latest block is overwritten in place instead.
    pub fn write_batch_cow(&self, name: &str, batch: usize, bytes: &[u8]) -> Result<()> {
        {
            let inner = self.inner.lock();
            if inner.in_call.is_none() {
                return Err(EngineError::State(
                    "batch write outside an open Process call".into(),
                ));
            }
            let a = inner
                .state
                .arrays
                .get(name)
                .ok_or_else(|| EngineError::State(format!("no array {}", name)))?;
            let want = a.elem.batch_bytes(a.batch_lens[batch]);
            if bytes.len() != want {
                return Err(EngineError::State(format!(
                    "batch {} of {} is {} bytes, write has {}",
                    batch,
                    name,
                    want,
                    bytes.len()
                )));
            }
        }
        let crc = crc32(bytes);
        let key = (name.to_string(), batch);
        if !self.cfg.checkpointing {
            // reuse the live block in place
            let (offset, len) = {
                let inner = self.inner.lock();
                let a = &inner.state.arrays[name];
                let id = a.checkpoints.last().unwrap().blocks[batch];
                let info = &inner.state.blocks[&id];
                (info.offset, info.len)
            };
            debug_assert_eq!(len as usize, bytes.len());
            self.data.write_all_at(bytes, offset).io_ctx("writing block")?;
            let mut inner = self.inner.lock();
            let a = inner.state.arrays.get(name).unwrap();
            let id = a.checkpoints.last().unwrap().blocks[batch];
            inner.state.blocks.get_mut(&id).unwrap().crc = crc;
            return Ok(());
        }
        // last writer within a call wins: reuse the staged extent
        let existing = self.inner.lock().staged.get(&key).map(|s| (s.offset, s.len));
        let (offset, _span) = match existing {
            Some((offset, len)) if len == bytes.len() as u64 => (offset, len),
            _ => {
                let (offset, span) = {
                    let mut inner = self.inner.lock();
                    Self::alloc_extent(&mut inner, bytes.len() as u64)
                };
                (offset, span)
            }
        };
        self.data.write_all_at(bytes, offset).io_ctx("writing block")?;
        self.inner
            .lock()
            .staged
            .insert(key, StagedBlock { offset, len: bytes.len() as u64, crc });
        Ok(())
    }

    /// Names of arrays written by the open call so far.
    pub fn touched_arrays(&self) -> Vec<String> {
        let inner = self.inner.lock();
        let mut names: Vec<String> =
            inner.staged.keys().map(|(n, _)| n.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    /// Step one of commit: make blocks and the pending lineage durable.
    pub fn prepare_commit(&self, ordinal: u64) -> Result<()> {
        if !self.cfg.checkpointing {
            return Ok(());
        }
        self.data.sync_data().io_ctx("syncing block data")?;
        let mut inner = self.inner.lock();
        if inner.in_call != Some(ordinal) {
            return Err(EngineError::State("prepare_commit without matching call".into()));
        }
        let mut updates: Vec<(String, usize, StagedBlock)> = inner
            .staged
            .iter()
            .map(|((n, b), s)| (n.clone(), *b, s.clone()))
            .collect();
        updates.sort_by(|a, b| (a.0.as_str(), a.1).cmp(&(b.0.as_str(), b.1)));
        inner.state.pending =
            Some(PendingDelta { ordinal, updates, data_len: inner.state.data_len });
        let bytes = serialize_meta(&inner.state)?;
        drop(inner);
        atomic_write(&self.cfg.dir.join(PENDING_FILE), &bytes).io_ctx("writing pending meta")
    }

    /// Step two: the call is journaled, promote the pending checkpoint, GC
    /// old checkpoints and persist the committed snapshot.
    pub fn finalize_commit(&self, ordinal: u64) -> Result<()> {
        {
            let mut inner = self.inner.lock();
            if inner.in_call != Some(ordinal) {
                return Err(EngineError::State("finalize_commit without matching call".into()));
            }
            Self::promote_locked(&mut inner, ordinal, self.cfg.keep)?;
            inner.staged.clear();
            inner.in_call = None;
        }
        if self.cfg.checkpointing {
            self.write_snapshot()?;
            let _ = std::fs::remove_file(self.cfg.dir.join(PENDING_FILE));
        }
        Ok(())
    }

    fn promote_locked(inner: &mut StoreInner, ordinal: u64, keep: usize) -> Result<()> {
        let pending = match inner.state.pending.take() {
            Some(p) if p.ordinal == ordinal => p,
            Some(p) => {
                return Err(EngineError::State(format!(
                    "pending ordinal {} does not match {}",
                    p.ordinal, ordinal
                )))
            }
            None => PendingDelta {
                ordinal,
                updates: inner
                    .staged
                    .iter()
                    .map(|((n, b), s)| (n.clone(), *b, s.clone()))
                    .collect(),
                data_len: inner.state.data_len,
            },
        };
        // group staged updates per array
        let mut per_array: BTreeMap<String, Vec<(usize, StagedBlock)>> = BTreeMap::new();
        for (n, b, s) in pending.updates {
            per_array.entry(n).or_default().push((b, s));
        }
        for (name, updates) in per_array {
            let mut new_blocks = {
                let a = inner
                    .state
                    .arrays
                    .get(&name)
                    .ok_or_else(|| EngineError::State(format!("no array {}", name)))?;
                a.checkpoints.last().unwrap().blocks.clone()
            };
            for (b, s) in updates {
                let id = inner.state.next_block;
                inner.state.next_block += 1;
                inner
                    .state
                    .blocks
                    .insert(id, BlockInfo { offset: s.offset, len: s.len, crc: s.crc, refs: 0 });
                new_blocks[b] = id;
            }
            for &id in &new_blocks {
                inner.state.blocks.get_mut(&id).unwrap().refs += 1;
            }
            let a = inner.state.arrays.get_mut(&name).unwrap();
            a.checkpoints.push(CheckpointEntry { ordinal, blocks: new_blocks });
        }
        inner.state.last_committed = ordinal;
        Self::gc_locked(inner, keep);
        Ok(())
    }

    fn gc_locked(inner: &mut StoreInner, keep: usize) {
        let keep = keep.max(1);
        let names: Vec<String> = inner.state.arrays.keys().cloned().collect();
        for name in names {
            loop {
                let drop_entry = {
                    let a = &inner.state.arrays[&name];
                    if a.checkpoints.len() > keep {
                        Some(a.checkpoints[0].clone())
                    } else {
                        None
                    }
                };
                let Some(entry) = drop_entry else { break };
                inner.state.arrays.get_mut(&name).unwrap().checkpoints.remove(0);
                for id in entry.blocks {
                    Self::deref_block(&mut inner.state, id);
                }
            }
        }
    }

    fn deref_block(state: &mut MetaState, id: u64) {
        let info = state.blocks.get_mut(&id).expect("block table entry");
        info.refs -= 1;
        if info.refs == 0 {
            let info = state.blocks.remove(&id).unwrap();
            state.free.insert((align_up(info.len.max(1)), info.offset));
        }
    }

    /// Abort the open call: staged extents are returned to the free list.
    pub fn abort_call(&self) {
        let mut inner = self.inner.lock();
        let staged: Vec<StagedBlock> = inner.staged.drain().map(|(_, s)| s).collect();
        for s in staged {
            inner.state.free.insert((align_up(s.len.max(1)), s.offset));
        }
        inner.state.pending = None;
        inner.in_call = None;
    }

    /// Recovery: promote or discard the pending commit against the journal
    /// decision, and drop any state newer than `journal_last`.
    pub fn reconcile(&self, journal_last: u64) -> Result<()> {
        {
            let mut inner = self.inner.lock();
            let pending_ord = inner.state.pending.as_ref().map(|p| p.ordinal);
            match pending_ord {
                Some(n) if n <= journal_last => {
                    inner.in_call = Some(n);
                    Self::promote_locked(&mut inner, n, self.cfg.keep)?;
                    inner.in_call = None;
                }
                Some(_) => {
                    // journal never saw it: reload the committed snapshot
                    drop(inner);
                    let snap = self.cfg.dir.join(SNAP_FILE);
                    let state = if snap.exists() { load_meta(&snap)? } else { MetaState::default() };
                    self.inner.lock().state = state;
                }
                None => {}
            }
        }
        {
            let mut inner = self.inner.lock();
            // drop arrays created after the journal horizon and any
            // checkpoints past it
            let names: Vec<String> = inner.state.arrays.keys().cloned().collect();
            for name in names {
                let created_after = inner.state.arrays[&name]
                    .checkpoints
                    .first()
                    .map(|c| c.ordinal > journal_last)
                    .unwrap_or(true);
                if created_after {
                    let entries = inner.state.arrays.remove(&name).unwrap().checkpoints;
                    for e in entries {
                        for id in e.blocks {
                            Self::deref_block(&mut inner.state, id);
                        }
                    }
                    continue;
                }
                loop {
                    let drop_entry = {
                        let a = &inner.state.arrays[&name];
                        match a.checkpoints.last() {
                            Some(c) if c.ordinal > journal_last => Some(a.checkpoints.len() - 1),
                            _ => None,
                        }
                    };
                    let Some(idx) = drop_entry else { break };
                    let e = inner.state.arrays.get_mut(&name).unwrap().checkpoints.remove(idx);
                    for id in e.blocks {
                        Self::deref_block(&mut inner.state, id);
                    }
                }
                if inner.state.arrays[&name].checkpoints.is_empty() {
                    return Err(EngineError::Unrecoverable(format!(
                        "array {} has no checkpoint at or before call {}",
                        name, journal_last
                    )));
                }
            }
            inner.state.last_committed = inner.state.last_committed.min(journal_last);
        }
        if self.cfg.checkpointing {
            self.write_snapshot()?;
            let _ = std::fs::remove_file(self.cfg.dir.join(PENDING_FILE));
        }
        Ok(())
    }

    fn write_snapshot(&self) -> Result<()> {
        let bytes = {
            let inner = self.inner.lock();
            serialize_meta(&inner.state)?
        };
        atomic_write(&self.cfg.dir.join(SNAP_FILE), &bytes).io_ctx("writing meta snapshot")
    }

    /// Bytes held by live (committed or staged) blocks, for space-bound
    /// assertions.
    pub fn occupied_bytes(&self) -> u64 {
        let inner = self.inner.lock();
        inner.state.blocks.values().map(|b| align_up(b.len.max(1))).sum::<u64>()
            + inner.staged.values().map(|s| align_up(s.len.max(1))).sum::<u64>()
    }

    /// (ordinal, per-batch block IDs) pairs of an array's retained lineage.
    pub fn lineage(&self, name: &str) -> Vec<(u64, Vec<u64>)> {
        let inner = self.inner.lock();
        inner
            .state
            .arrays
            .get(name)
            .map(|a| a.checkpoints.iter().map(|c| (c.ordinal, c.blocks.clone())).collect())
            .unwrap_or_default()
    }

    pub fn array_names(&self) -> Vec<String> {
        self.inner.lock().state.arrays.keys().cloned().collect()
    }

    pub fn batch_lens(&self, name: &str) -> Option<Vec<u64>> {
        self.inner.lock().state.arrays.get(name).map(|a| a.batch_lens.clone())
    }

    /// Flush OS buffers for the data file; used before exporting results.
    pub fn sync(&self) -> Result<()> {
        self.data.sync_data().io_ctx("syncing block data")
    }
}

fn serialize_meta(state: &MetaState) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(state)
        .map_err(|e| EngineError::State(format!("serializing store meta: {}", e)))?;
    Ok(frame_record(&payload))
}

fn load_meta(path: &Path) -> Result<MetaState> {
    let bytes = std::fs::read(path).io_ctx(format!("reading {}", path.display()))?;
    let records = parse_records(&bytes);
    let Some(payload) = records.first() else {
        return Err(EngineError::Corrupt {
            path: path.to_path_buf(),
            detail: "no valid meta record".into(),
        });
    };
    serde_json::from_slice(payload).map_err(|e| EngineError::Corrupt {
        path: path.to_path_buf(),
        detail: format!("meta parse error: {}", e),
    })
}

/// Write a whole array out as one raw little-endian binary file, batches in
/// order. The export format for algorithm outputs.
pub fn export_array(store: &NodeStore, name: &str, path: &Path) -> Result<()> {
    let lens = store
        .batch_lens(name)
        .ok_or_else(|| EngineError::State(format!("no array {}", name)))?;
    let mut f = std::io::BufWriter::new(
        File::create(path).io_ctx(format!("creating {}", path.display()))?,
    );
    for b in 0..lens.len() {
        let data = store.read_batch(name, b)?;
        f.write_all(&data).io_ctx("writing export")?;
    }
    f.flush().io_ctx("flushing export")?;
    Ok(())
}
