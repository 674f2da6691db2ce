//! Call-level types shared by the runtime, storage and transport layers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallKind {
    ProcessVertices,
    ProcessEdges,
}

/// Reduction kind declared per call: integer sums are exact, float sums are
/// accumulated exactly within a node and combined in ascending rank order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReduceKind {
    I64,
    F64,
}

/// A reduction value. Floats are stored and transported as raw bits so
/// round-trips are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReduceValue {
    I64(i64),
    F64Bits(u64),
}

impl ReduceValue {
    pub fn f64(v: f64) -> Self {
        ReduceValue::F64Bits(v.to_bits())
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            ReduceValue::I64(v) => v as f64,
            ReduceValue::F64Bits(b) => f64::from_bits(b),
        }
    }

    pub fn as_i64(&self) -> i64 {
        match *self {
            ReduceValue::I64(v) => v,
            ReduceValue::F64Bits(b) => f64::from_bits(b) as i64,
        }
    }

    pub fn kind(&self) -> ReduceKind {
        match self {
            ReduceValue::I64(_) => ReduceKind::I64,
            ReduceValue::F64Bits(_) => ReduceKind::F64,
        }
    }

    /// Wire encoding: kind byte + 8 value bytes, little-endian.
    pub fn encode(&self) -> [u8; 9] {
        let mut b = [0u8; 9];
        match *self {
            ReduceValue::I64(v) => {
                b[0] = 0;
                b[1..9].copy_from_slice(&v.to_le_bytes());
            }
            ReduceValue::F64Bits(bits) => {
                b[0] = 1;
                b[1..9].copy_from_slice(&bits.to_le_bytes());
            }
        }
        b
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        if b.len() != 9 {
            return None;
        }
        let v = u64::from_le_bytes(b[1..9].try_into().unwrap());
        match b[0] {
            0 => Some(ReduceValue::I64(v as i64)),
            1 => Some(ReduceValue::F64Bits(v)),
            _ => None,
        }
    }
}

/// Accumulates local reduction contributions of one kind.
#[derive(Debug, Clone)]
pub enum ReduceAcc {
    I64(i64),
    F64(crate::util::ExactSum),
}

impl ReduceAcc {
    pub fn new(kind: ReduceKind) -> Self {
        match kind {
            ReduceKind::I64 => ReduceAcc::I64(0),
            ReduceKind::F64 => ReduceAcc::F64(crate::util::ExactSum::new()),
        }
    }

    pub fn add(&mut self, v: ReduceValue) {
        match (self, v) {
            (ReduceAcc::I64(acc), ReduceValue::I64(x)) => *acc += x,
            (ReduceAcc::F64(acc), ReduceValue::F64Bits(b)) => acc.add(f64::from_bits(b)),
            _ => panic!("reduction kind mismatch"),
        }
    }

    pub fn merge(&mut self, other: &ReduceAcc) {
        match (self, other) {
            (ReduceAcc::I64(a), ReduceAcc::I64(b)) => *a += *b,
            (ReduceAcc::F64(a), ReduceAcc::F64(b)) => a.merge(b),
            _ => panic!("reduction kind mismatch"),
        }
    }

    pub fn value(&self) -> ReduceValue {
        match self {
            ReduceAcc::I64(v) => ReduceValue::I64(*v),
            ReduceAcc::F64(s) => ReduceValue::f64(s.value()),
        }
    }
}

/// Combine per-node values in ascending rank order; exact for integers,
/// fixed-order for floats so results are reproducible.
pub fn combine_rank_ordered(values: &[ReduceValue]) -> ReduceValue {
    match values.first() {
        None => ReduceValue::I64(0),
        Some(ReduceValue::I64(_)) => {
            ReduceValue::I64(values.iter().map(|v| v.as_i64()).sum())
        }
        Some(ReduceValue::F64Bits(_)) => {
            let mut acc = 0.0f64;
            for v in values {
                acc += v.as_f64();
            }
            ReduceValue::f64(acc)
        }
    }
}
