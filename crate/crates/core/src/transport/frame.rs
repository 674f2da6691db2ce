//! Wire frames, little-endian, bit-exact:
//! header {magic "DFOM", version u32, call ordinal u64, kind u8, src rank
//! u32, flags u16 (bit0 = filtered), record count u64, message_bytes u32,
//! payload length u64, header checksum u32}, then the payload. Message-block
//! payloads are packed (source u64, message bytes) records and satisfy
//! payload length = record count * (8 + message_bytes).

use std::io::{Read, Write};

use crate::error::{EngineError, IoContext, Result};
use crate::util::crc32;

pub const FRAME_MAGIC: [u8; 4] = *b"DFOM";
pub const FRAME_VERSION: u32 = 1;
pub const FRAME_HEADER_LEN: usize = 47;

pub const FLAG_FILTERED: u16 = 1 << 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    MessageBlock = 0,
    Control = 1,
    Reduction = 2,
    Journal = 3,
}

impl FrameKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(FrameKind::MessageBlock),
            1 => Some(FrameKind::Control),
            2 => Some(FrameKind::Reduction),
            3 => Some(FrameKind::Journal),
            _ => None,
        }
    }
}

/// Control payload opcodes (first payload byte of a Control frame).
pub mod control {
    pub const HELLO: u8 = 0;
    pub const TERMINAL: u8 = 1;
    pub const BARRIER_ARRIVE: u8 = 2;
    pub const BARRIER_RELEASE: u8 = 3;
    pub const HORIZON: u8 = 4;
    pub const ABORT: u8 = 5;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub call: u64,
    pub kind: FrameKind,
    pub src: u32,
    pub flags: u16,
    pub record_count: u64,
    pub message_bytes: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn control(call: u64, src: u32, op: u8, extra: &[u8]) -> Self {
        let mut payload = Vec::with_capacity(1 + extra.len());
        payload.push(op);
        payload.extend_from_slice(extra);
        Frame {
            call,
            kind: FrameKind::Control,
            src,
            flags: 0,
            record_count: 0,
            message_bytes: 0,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        b.extend_from_slice(&FRAME_MAGIC);
        b.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        b.extend_from_slice(&self.call.to_le_bytes());
        b.push(self.kind as u8);
        b.extend_from_slice(&self.src.to_le_bytes());
        b.extend_from_slice(&self.flags.to_le_bytes());
        b.extend_from_slice(&self.record_count.to_le_bytes());
        b.extend_from_slice(&self.message_bytes.to_le_bytes());
        b.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        let crc = crc32(&b[..43]);
        b.extend_from_slice(&crc.to_le_bytes());
        b.extend_from_slice(&self.payload);
        b
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode()).io_ctx("sending frame")
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut h = [0u8; FRAME_HEADER_LEN];
        r.read_exact(&mut h).io_ctx("receiving frame header")?;
        if h[0..4] != FRAME_MAGIC {
            return Err(EngineError::Transport("bad frame magic".into()));
        }
        let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
        if version != FRAME_VERSION {
            return Err(EngineError::Transport(format!("unsupported frame version {}", version)));
        }
        let stored_crc = u32::from_le_bytes(h[43..47].try_into().unwrap());
        if crc32(&h[..43]) != stored_crc {
            return Err(EngineError::Transport("frame header checksum failure".into()));
        }
        let call = u64::from_le_bytes(h[8..16].try_into().unwrap());
        let kind = FrameKind::from_u8(h[16])
            .ok_or_else(|| EngineError::Transport(format!("unknown frame kind {}", h[16])))?;
        let src = u32::from_le_bytes(h[17..21].try_into().unwrap());
        let flags = u16::from_le_bytes(h[21..23].try_into().unwrap());
        let record_count = u64::from_le_bytes(h[23..31].try_into().unwrap());
        let message_bytes = u32::from_le_bytes(h[31..35].try_into().unwrap());
        let payload_len = u64::from_le_bytes(h[35..43].try_into().unwrap());
        if kind == FrameKind::MessageBlock
            && payload_len != record_count * (8 + message_bytes as u64)
        {
            return Err(EngineError::Transport(format!(
                "message frame length {} does not match {} records of {} bytes",
                payload_len, record_count, message_bytes
            )));
        }
        if payload_len > (1 << 30) {
            return Err(EngineError::Transport(format!("oversized frame: {} bytes", payload_len)));
        }
        let mut payload = vec![0u8; payload_len as usize];
        r.read_exact(&mut payload).io_ctx("receiving frame payload")?;
        Ok(Frame { call, kind, src, flags, record_count, message_bytes, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{:02x}", b)).collect()
    }

    #[test]
    fn golden_message_frame_bytes() {
        // call 3, src rank 1, filtered, two records of 4 message bytes
        let f = Frame {
            call: 3,
            kind: FrameKind::MessageBlock,
            src: 1,
            flags: FLAG_FILTERED,
            record_count: 2,
            message_bytes: 4,
            payload: vec![
                5, 0, 0, 0, 0, 0, 0, 0, 0xAA, 0xBB, 0xCC, 0xDD, // (src 5, msg)
                9, 0, 0, 0, 0, 0, 0, 0, 0x01, 0x02, 0x03, 0x04, // (src 9, msg)
            ],
        };
        let bytes = f.encode();
        let want_header = concat!(
            "44464f4d",         // "DFOM"
            "01000000",         // version
            "0300000000000000", // call
            "00",               // kind = message block
            "01000000",         // src rank
            "0100",             // flags: filtered
            "0200000000000000", // record count
            "04000000",         // message_bytes
            "1800000000000000", // payload length = 2 * 12
        );
        assert_eq!(&hex(&bytes[..43]), want_header);
        // trailing checksum validates the preceding 43 bytes
        let crc = u32::from_le_bytes(bytes[43..47].try_into().unwrap());
        assert_eq!(crc, crate::util::crc32(&bytes[..43]));
        let back = Frame::read_from(&mut &bytes[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn payload_length_must_match_record_count() {
        let f = Frame {
            call: 0,
            kind: FrameKind::MessageBlock,
            src: 0,
            flags: 0,
            record_count: 5,
            message_bytes: 8,
            payload: vec![0; 80],
        };
        assert_eq!(f.payload.len(), 5 * (8 + 8));
        let ok = Frame::read_from(&mut &f.encode()[..]).unwrap();
        assert_eq!(ok.record_count, 5);

        let mut bad = f.clone();
        bad.payload.truncate(70);
        let err = Frame::read_from(&mut &bad.encode()[..]).unwrap_err();
        assert!(err.to_string().contains("does not match"));
    }

    #[test]
    fn corrupt_header_rejected() {
        let f = Frame::control(1, 0, control::TERMINAL, &[]);
        let mut bytes = f.encode();
        bytes[9] ^= 0x40; // flip a call bit: checksum must catch it
        let err = Frame::read_from(&mut &bytes[..]).unwrap_err();
        assert!(err.to_string().contains("checksum"));
    }
}
