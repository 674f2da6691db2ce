//! Cluster membership and streaming inter-node message passing.
//!
//! One long-lived TCP connection per ordered rank pair, established by a
//! hello handshake at startup. Each outbound connection has one writer;
//! each inbound connection has one reader thread that hands message frames
//! to a bounded per-peer queue (back-pressuring the sender through TCP) and
//! control frames to an unbounded side channel. Rank 0 coordinates barriers,
//! rank-ordered reductions and the commit/journal broadcast.

pub mod frame;

use std::io::BufWriter;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam::channel::{bounded, unbounded, Receiver, Sender};
use parking_lot::Mutex;

use crate::calls::{combine_rank_ordered, ReduceValue};
use crate::error::{EngineError, Result};
use frame::{control, Frame, FrameKind};

/// Peers in the order node `i` sends to: i+1, ..., P-1, 0, ..., i-1.
pub fn round_robin_targets(rank: usize, parts: usize) -> Vec<usize> {
    (1..parts).map(|k| (rank + k) % parts).collect()
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub endpoints: Vec<(String, u16)>,
    pub rank: usize,
    pub connect_timeout: Duration,
    pub io_timeout: Option<Duration>,
    /// Received message frames buffered per peer before back-pressure.
    pub queue_depth: usize,
}

impl ClusterConfig {
    pub fn single() -> Self {
        Self {
            endpoints: vec![("127.0.0.1".into(), 0)],
            rank: 0,
            connect_timeout: Duration::from_secs(30),
            io_timeout: None,
            queue_depth: 4,
        }
    }

    /// Parse a hostfile: one `host:port` per line, line number = rank.
    pub fn parse_hostfile(text: &str) -> Result<Vec<(String, u16)>> {
        let mut endpoints = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (host, port) = line.rsplit_once(':').ok_or_else(|| {
                EngineError::Config(format!("hostfile line {}: expected host:port", i + 1))
            })?;
            let port: u16 = port.parse().map_err(|_| {
                EngineError::Config(format!("hostfile line {}: bad port {:?}", i + 1, port))
            })?;
            endpoints.push((host.to_string(), port));
        }
        if endpoints.is_empty() {
            return Err(EngineError::Config("hostfile has no endpoints".into()));
        }
        Ok(endpoints)
    }
}

struct Inbound {
    /// Message-block and terminal frames, bounded.
    data: Receiver<std::result::Result<Frame, String>>,
    /// Control, reduction and journal frames.
    ctrl: Receiver<std::result::Result<Frame, String>>,
}

/// A connected member of the cluster.
pub struct Cluster {
    rank: usize,
    parts: usize,
    outbound: Vec<Option<Mutex<BufWriter<TcpStream>>>>,
    inbound: Vec<Option<Inbound>>,
    shutdown: Arc<AtomicBool>,
    reader_handles: Vec<std::thread::JoinHandle<()>>,
}

impl Cluster {
    pub fn single() -> Self {
        Self {
            rank: 0,
            parts: 1,
            outbound: vec![None],
            inbound: vec![None],
            shutdown: Arc::new(AtomicBool::new(false)),
            reader_handles: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    /// Bind the local endpoint, dial every peer and wait for every peer to
    /// dial us. Returns once all 2(P-1) connections are up.
    pub fn connect(cfg: &ClusterConfig) -> Result<Self> {
        let parts = cfg.endpoints.len();
        if cfg.rank >= parts {
            return Err(EngineError::Config(format!(
                "rank {} outside hostfile of {} endpoints",
                cfg.rank, parts
            )));
        }
        if parts == 1 {
            return Ok(Self::single());
        }
        let (host, port) = &cfg.endpoints[cfg.rank];
        let listener = TcpListener::bind((host.as_str(), *port))
            .map_err(|e| EngineError::Transport(format!("binding {}:{}: {}", host, port, e)))?;
        listener.set_nonblocking(true).ok();

        // dial everyone in a background thread while we accept
        let deadline = Instant::now() + cfg.connect_timeout;
        let dial_cfg = cfg.clone();
        let dialer = std::thread::spawn(move || -> std::result::Result<Vec<(usize, TcpStream)>, String> {
            let mut out = Vec::new();
            for peer in 0..dial_cfg.endpoints.len() {
                if peer == dial_cfg.rank {
                    continue;
                }
                let (h, p) = &dial_cfg.endpoints[peer];
                let stream = loop {
                    match TcpStream::connect((h.as_str(), *p)) {
                        Ok(s) => break s,
                        Err(e) => {
                            if Instant::now() >= deadline {
                                return Err(format!("connecting to rank {} at {}:{}: {}", peer, h, p, e));
                            }
                            std::thread::sleep(Duration::from_millis(50));
                        }
                    }
                };
                stream.set_nodelay(true).ok();
                let hello = Frame::control(0, dial_cfg.rank as u32, control::HELLO, &[]);
                let mut s = &stream;
                if let Err(e) = std::io::Write::write_all(&mut s, &hello.encode()) {
                    return Err(format!("handshake with rank {}: {}", peer, e));
                }
                out.push((peer, stream));
            }
            Ok(out)
        });

        // accept P-1 inbound connections, identified by their hello frame
        let mut inbound_streams: Vec<Option<TcpStream>> = (0..parts).map(|_| None).collect();
        let mut accepted = 0usize;
        while accepted < parts - 1 {
            if Instant::now() >= deadline {
                return Err(EngineError::Transport(format!(
                    "rank {}: timed out waiting for inbound connections ({} of {})",
                    cfg.rank,
                    accepted,
                    parts - 1
                )));
            }
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nodelay(true).ok();
                    stream.set_nonblocking(false).ok();
                    let mut s = &stream;
                    let hello = Frame::read_from(&mut s)?;
                    if hello.kind != FrameKind::Control
                        || hello.payload.first() != Some(&control::HELLO)
                    {
                        return Err(EngineError::Transport("bad handshake frame".into()));
                    }
                    let src = hello.src as usize;
                    if src >= parts || inbound_streams[src].is_some() {
                        return Err(EngineError::Transport(format!(
                            "duplicate or invalid handshake from rank {}",
                            src
                        )));
                    }
                    inbound_streams[src] = Some(stream);
                    accepted += 1;
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(EngineError::Transport(format!("accept: {}", e))),
            }
        }
        drop(listener);

        let dialed = dialer
            .join()
            .map_err(|_| EngineError::Transport("dialer thread panicked".into()))?
            .map_err(EngineError::Transport)?;
        let mut outbound: Vec<Option<Mutex<BufWriter<TcpStream>>>> =
            (0..parts).map(|_| None).collect();
        for (peer, stream) in dialed {
            if let Some(t) = cfg.io_timeout {
                stream.set_write_timeout(Some(t)).ok();
            }
            outbound[peer] = Some(Mutex::new(BufWriter::with_capacity(256 * 1024, stream)));
        }

        let shutdown = Arc::new(AtomicBool::new(false));
        let mut inbound = Vec::with_capacity(parts);
        let mut reader_handles = Vec::new();
        for (src, slot) in inbound_streams.into_iter().enumerate() {
            match slot {
                None => inbound.push(None),
                Some(stream) => {
                    if let Some(t) = cfg.io_timeout {
                        stream.set_read_timeout(Some(t)).ok();
                    }
                    let (data_tx, data_rx) = bounded(cfg.queue_depth.max(1));
                    let (ctrl_tx, ctrl_rx) = unbounded();
                    let stop = shutdown.clone();
                    reader_handles.push(std::thread::Builder::new()
                        .name(format!("recv-r{}", src))
                        .spawn(move || reader_loop(stream, data_tx, ctrl_tx, stop))
                        .map_err(|e| EngineError::Transport(format!("spawning reader: {}", e)))?);
                    inbound.push(Some(Inbound { data: data_rx, ctrl: ctrl_rx }));
                }
            }
        }

        Ok(Self { rank: cfg.rank, parts, outbound, inbound, shutdown, reader_handles })
    }

    pub fn send_frame(&self, peer: usize, f: &Frame) -> Result<()> {
        let Some(conn) = self.outbound.get(peer).and_then(|o| o.as_ref()) else {
            return Err(EngineError::Transport(format!("no connection to rank {}", peer)));
        };
        let mut w = conn.lock();
        f.write_to(&mut *w)?;
        use std::io::Write;
        w.flush().map_err(|e| EngineError::Transport(format!("flushing to rank {}: {}", peer, e)))
    }

    /// Next message-block or terminal frame from `peer`.
    pub fn recv_data(&self, peer: usize) -> Result<Frame> {
        let Some(inb) = self.inbound.get(peer).and_then(|i| i.as_ref()) else {
            return Err(EngineError::Transport(format!("no connection from rank {}", peer)));
        };
        match inb.data.recv() {
            Ok(Ok(f)) => Ok(f),
            Ok(Err(e)) => Err(EngineError::Transport(e)),
            Err(_) => Err(EngineError::Transport(format!("stream from rank {} closed", peer))),
        }
    }

    fn recv_ctrl(&self, peer: usize) -> Result<Frame> {
        let Some(inb) = self.inbound.get(peer).and_then(|i| i.as_ref()) else {
            return Err(EngineError::Transport(format!("no connection from rank {}", peer)));
        };
        match inb.ctrl.recv() {
            Ok(Ok(f)) => Ok(f),
            Ok(Err(e)) => Err(EngineError::Transport(e)),
            Err(_) => Err(EngineError::Transport(format!("stream from rank {} closed", peer))),
        }
    }

    /// Rank-ordered global sum doubling as the call-commit barrier. Rank 0
    /// gathers contributions, calls `at_root` with the total (the journal
    /// append happens inside), then broadcasts the total as the commit
    /// release.
    pub fn reduce_commit(
        &self,
        ordinal: u64,
        local: ReduceValue,
        at_root: impl FnOnce(ReduceValue) -> Result<()>,
    ) -> Result<ReduceValue> {
        if self.parts == 1 {
            at_root(local)?;
            return Ok(local);
        }
        if self.rank == 0 {
            let mut values = vec![local];
            for peer in 1..self.parts {
                let f = self.recv_ctrl(peer)?;
                if f.kind != FrameKind::Reduction || f.call != ordinal {
                    return Err(EngineError::Transport(format!(
                        "unexpected frame from rank {} during reduction of call {}",
                        peer, ordinal
                    )));
                }
                let v = ReduceValue::decode(&f.payload).ok_or_else(|| {
                    EngineError::Transport("malformed reduction payload".into())
                })?;
                values.push(v);
            }
            let total = combine_rank_ordered(&values);
            at_root(total)?;
            let release = Frame {
                call: ordinal,
                kind: FrameKind::Journal,
                src: 0,
                flags: 0,
                record_count: 0,
                message_bytes: 0,
                payload: total.encode().to_vec(),
            };
            for peer in 1..self.parts {
                self.send_frame(peer, &release)?;
            }
            Ok(total)
        } else {
            let contrib = Frame {
                call: ordinal,
                kind: FrameKind::Reduction,
                src: self.rank as u32,
                flags: 0,
                record_count: 0,
                message_bytes: 0,
                payload: local.encode().to_vec(),
            };
            self.send_frame(0, &contrib)?;
            let f = self.recv_ctrl(0)?;
            if f.kind != FrameKind::Journal || f.call != ordinal {
                return Err(EngineError::Transport(format!(
                    "expected commit release for call {}, got kind {:?} call {}",
                    ordinal, f.kind, f.call
                )));
            }
            ReduceValue::decode(&f.payload)
                .ok_or_else(|| EngineError::Transport("malformed commit payload".into()))
        }
    }

    /// Plain barrier: everyone arrives at rank 0, rank 0 releases.
    pub fn barrier(&self, tag: u64) -> Result<()> {
        if self.parts == 1 {
            return Ok(());
        }
        if self.rank == 0 {
            for peer in 1..self.parts {
                let f = self.recv_ctrl(peer)?;
                if f.kind != FrameKind::Control
                    || f.payload.first() != Some(&control::BARRIER_ARRIVE)
                    || f.call != tag
                {
                    return Err(EngineError::Transport(format!(
                        "unexpected frame from rank {} at barrier {}",
                        peer, tag
                    )));
                }
            }
            let release = Frame::control(tag, 0, control::BARRIER_RELEASE, &[]);
            for peer in 1..self.parts {
                self.send_frame(peer, &release)?;
            }
        } else {
            self.send_frame(0, &Frame::control(tag, self.rank as u32, control::BARRIER_ARRIVE, &[]))?;
            let f = self.recv_ctrl(0)?;
            if f.kind != FrameKind::Control
                || f.payload.first() != Some(&control::BARRIER_RELEASE)
                || f.call != tag
            {
                return Err(EngineError::Transport(format!("unexpected frame at barrier {}", tag)));
            }
        }
        Ok(())
    }

    /// Rank 0 broadcasts a u64 (the recovery journal horizon); other ranks
    /// receive it.
    pub fn broadcast_u64(&self, tag: u64, value: u64) -> Result<u64> {
        if self.parts == 1 {
            return Ok(value);
        }
        if self.rank == 0 {
            let f = Frame::control(tag, 0, control::HORIZON, &value.to_le_bytes());
            for peer in 1..self.parts {
                self.send_frame(peer, &f)?;
            }
            Ok(value)
        } else {
            let f = self.recv_ctrl(0)?;
            if f.kind != FrameKind::Control || f.payload.first() != Some(&control::HORIZON) {
                return Err(EngineError::Transport("expected horizon broadcast".into()));
            }
            Ok(u64::from_le_bytes(f.payload[1..9].try_into().map_err(|_| {
                EngineError::Transport("short horizon payload".into())
            })?))
        }
    }

    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // close writers so peer readers see EOF
        for o in &mut self.outbound {
            *o = None;
        }
        for h in self.reader_handles.drain(..) {
            let _ = h.join();
        }
    }
}

fn reader_loop(
    stream: TcpStream,
    data_tx: Sender<std::result::Result<Frame, String>>,
    ctrl_tx: Sender<std::result::Result<Frame, String>>,
    stop: Arc<AtomicBool>,
) {
    let mut r = std::io::BufReader::with_capacity(256 * 1024, stream);
    loop {
        match Frame::read_from(&mut r) {
            Ok(f) => {
                let is_data = f.kind == FrameKind::MessageBlock
                    || (f.kind == FrameKind::Control
                        && f.payload.first() == Some(&control::TERMINAL));
                let tx = if is_data { &data_tx } else { &ctrl_tx };
                if tx.send(Ok(f)).is_err() {
                    return;
                }
            }
            Err(e) => {
                if !stop.load(Ordering::SeqCst) {
                    let _ = data_tx.send(Err(e.to_string()));
                    let _ = ctrl_tx.send(Err(e.to_string()));
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_examples() {
        assert_eq!(round_robin_targets(0, 4), vec![1, 2, 3]);
        assert_eq!(round_robin_targets(2, 4), vec![3, 0, 1]);
        assert!(round_robin_targets(0, 1).is_empty());
    }

    #[test]
    fn hostfile_parsing() {
        let eps = ClusterConfig::parse_hostfile("127.0.0.1:9000\n# comment\nlocalhost:9001\n").unwrap();
        assert_eq!(eps, vec![("127.0.0.1".into(), 9000), ("localhost".into(), 9001)]);
        assert!(ClusterConfig::parse_hostfile("nope\n").is_err());
    }
}
