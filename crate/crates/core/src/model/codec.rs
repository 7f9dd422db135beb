// SPDX-License-Identifier: Apache-2.0

//! Binary and JSON encodings for write records, read requests and responses.
//!
//! Every encoded record starts with [`FORMAT_VERSION`]. Integers are
//! little-endian, names are UTF-8 with a `u32` length prefix, byte strings
//! use the same prefix.
//!
//! Write record body, in order:
//!
//! ```text
//! u64 id | u32 origin | u64 timestamp | u64 origin_seq
//! u8 has_order_index [u64 order_index] | u8 has_prev [u64 prev]
//! u8 ordered | bound | unit target | payload
//! ```
//!
//! `bound` is `u8 tag` (0 finite, 1 infinite) followed by `u64` micros for
//! finite bounds. `unit` is `str table | bytes row | str cf | u8 has_super
//! [str super] | str column`. `payload` is `u8 tag`: 0 = put with `u32 n`
//! column entries, 1 = read-test-write with its two units and three values.
//!
//! Read request body: `u64 id | unit | bound`. Response body:
//! `u64 op | u8 kind [bytes value] | u64 latency_ns | u8 stage_mask`.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use super::{
    ColumnKey, DataUnitRef, LatencyBound, NodeId, OpId, ReadRequest, Response, ResponseKind, Stage,
    WritePayload, WriteRecord,
};

pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("record truncated")]
    Truncated,
    #[error("invalid tag {0}")]
    Tag(u8),
    #[error("invalid utf-8 in name")]
    Utf8,
    #[error("json: {0}")]
    Json(String),
}

pub struct Writer<'a> {
    out: &'a mut Vec<u8>,
}

impl<'a> Writer<'a> {
    pub fn new(out: &'a mut Vec<u8>) -> Self {
        Writer { out }
    }

    pub fn u8(&mut self, v: u8) {
        self.out.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.out.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn opt_u64(&mut self, v: Option<u64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.u64(x);
            }
            None => self.u8(0),
        }
    }

    fn bound(&mut self, b: &LatencyBound) {
        match b {
            LatencyBound::Finite(d) => {
                self.u8(0);
                self.u64(d.as_micros() as u64);
            }
            LatencyBound::Infinite => self.u8(1),
        }
    }

    fn column(&mut self, c: &ColumnKey) {
        match &c.super_column {
            Some(s) => {
                self.u8(1);
                self.str(s);
            }
            None => self.u8(0),
        }
        self.str(&c.name);
    }

    pub fn unit(&mut self, u: &DataUnitRef) {
        self.str(&u.table);
        self.bytes(&u.row_key);
        self.str(&u.column_family);
        self.column(&u.column);
    }

    pub fn write_record(&mut self, w: &WriteRecord) {
        self.u64(w.id.0);
        self.u32(w.origin.0);
        self.u64(w.timestamp);
        self.u64(w.origin_seq);
        self.opt_u64(w.order_index);
        self.opt_u64(w.prev_ordered);
        self.u8(w.ordered as u8);
        self.bound(&w.t_bound);
        self.unit(&w.target);
        match &w.payload {
            WritePayload::Put { columns } => {
                self.u8(0);
                self.u32(columns.len() as u32);
                for (c, v) in columns {
                    self.column(c);
                    self.bytes(v);
                }
            }
            WritePayload::ReadTestWrite {
                read_unit,
                test_value,
                write_unit,
                value_if_equal,
                value_if_not,
            } => {
                self.u8(1);
                self.unit(read_unit);
                self.bytes(test_value);
                self.unit(write_unit);
                self.bytes(value_if_equal);
                self.bytes(value_if_not);
            }
        }
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.bytes()?).map_err(|_| CodecError::Utf8)
    }

    fn opt_u64(&mut self) -> Result<Option<u64>, CodecError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.u64()?)),
            t => Err(CodecError::Tag(t)),
        }
    }

    fn bound(&mut self) -> Result<LatencyBound, CodecError> {
        match self.u8()? {
            0 => Ok(LatencyBound::Finite(Duration::from_micros(self.u64()?))),
            1 => Ok(LatencyBound::Infinite),
            t => Err(CodecError::Tag(t)),
        }
    }

    fn column(&mut self) -> Result<ColumnKey, CodecError> {
        let super_column = match self.u8()? {
            0 => None,
            1 => Some(self.str()?),
            t => return Err(CodecError::Tag(t)),
        };
        Ok(ColumnKey {
            super_column,
            name: self.str()?,
        })
    }

    pub fn unit(&mut self) -> Result<DataUnitRef, CodecError> {
        Ok(DataUnitRef {
            table: self.str()?,
            row_key: self.bytes()?,
            column_family: self.str()?,
            column: self.column()?,
        })
    }

    pub fn write_record(&mut self) -> Result<WriteRecord, CodecError> {
        let id = OpId(self.u64()?);
        let origin = NodeId(self.u32()?);
        let timestamp = self.u64()?;
        let origin_seq = self.u64()?;
        let order_index = self.opt_u64()?;
        let prev_ordered = self.opt_u64()?;
        let ordered = match self.u8()? {
            0 => false,
            1 => true,
            t => return Err(CodecError::Tag(t)),
        };
        let t_bound = self.bound()?;
        let target = self.unit()?;
        let payload = match self.u8()? {
            0 => {
                let n = self.u32()? as usize;
                let mut columns = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let c = self.column()?;
                    columns.push((c, self.bytes()?));
                }
                WritePayload::Put { columns }
            }
            1 => WritePayload::ReadTestWrite {
                read_unit: self.unit()?,
                test_value: self.bytes()?,
                write_unit: self.unit()?,
                value_if_equal: self.bytes()?,
                value_if_not: self.bytes()?,
            },
            t => return Err(CodecError::Tag(t)),
        };
        Ok(WriteRecord {
            id,
            target,
            payload,
            timestamp,
            origin_seq,
            order_index,
            prev_ordered,
            ordered,
            t_bound,
            origin,
        })
    }
}

fn framed(body: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 5);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

fn unframe(buf: &[u8]) -> Result<&[u8], CodecError> {
    let (&v, rest) = buf.split_first().ok_or(CodecError::Truncated)?;
    if v != FORMAT_VERSION {
        return Err(CodecError::Version(v));
    }
    if rest.len() < 4 {
        return Err(CodecError::Truncated);
    }
    let n = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    rest.get(4..4 + n).ok_or(CodecError::Truncated)
}

/// Body bytes of a write record without version byte or length prefix.
pub fn write_body(w: &WriteRecord) -> Vec<u8> {
    let mut body = Vec::with_capacity(96);
    Writer::new(&mut body).write_record(w);
    body
}

pub fn decode_write_body(body: &[u8]) -> Result<WriteRecord, CodecError> {
    Reader::new(body).write_record()
}

/// Encoded size of a write record's body; drives byte accounting.
pub fn write_size(w: &WriteRecord) -> usize {
    fn unit_len(u: &DataUnitRef) -> usize {
        4 + u.table.len() + 4 + u.row_key.len() + 4 + u.column_family.len() + col_len(&u.column)
    }
    fn col_len(c: &ColumnKey) -> usize {
        1 + c.super_column.as_ref().map_or(0, |s| 4 + s.len()) + 4 + c.name.len()
    }
    let bound = if w.t_bound.is_infinite() { 1 } else { 9 };
    let head = 8 + 4 + 8 + 8 + 1 + 1 + 1 + bound;
    let opt = w.order_index.map_or(0, |_| 8) + w.prev_ordered.map_or(0, |_| 8);
    let payload = match &w.payload {
        WritePayload::Put { columns } => {
            1 + 4
                + columns
                    .iter()
                    .map(|(c, v)| col_len(c) + 4 + v.len())
                    .sum::<usize>()
        }
        WritePayload::ReadTestWrite {
            read_unit,
            test_value,
            write_unit,
            value_if_equal,
            value_if_not,
        } => {
            1 + unit_len(read_unit)
                + unit_len(write_unit)
                + 12
                + test_value.len()
                + value_if_equal.len()
                + value_if_not.len()
        }
    };
    head + opt + unit_len(&w.target) + payload
}

pub fn encode_write(w: &WriteRecord) -> Vec<u8> {
    framed(write_body(w))
}

pub fn decode_write(buf: &[u8]) -> Result<WriteRecord, CodecError> {
    decode_write_body(unframe(buf)?)
}

pub fn encode_read(r: &ReadRequest) -> Vec<u8> {
    let mut body = Vec::new();
    let mut w = Writer::new(&mut body);
    w.u64(r.id.0);
    w.unit(&r.target);
    w.bound(&r.t_bound);
    framed(body)
}

pub fn decode_read(buf: &[u8]) -> Result<ReadRequest, CodecError> {
    let mut r = Reader::new(unframe(buf)?);
    Ok(ReadRequest {
        id: OpId(r.u64()?),
        target: r.unit()?,
        t_bound: r.bound()?,
    })
}

fn stage_bit(s: Stage) -> u8 {
    1 << Stage::ALL.iter().position(|&x| x == s).unwrap()
}

pub fn encode_response(resp: &Response) -> Vec<u8> {
    let mut body = Vec::new();
    let mut w = Writer::new(&mut body);
    w.u64(resp.op_id.0);
    match &resp.kind {
        ResponseKind::Ack => w.u8(0),
        ResponseKind::Value(v) => {
            w.u8(1);
            w.bytes(v);
        }
        ResponseKind::Null => w.u8(2),
    }
    w.u64(resp.measured_latency.as_nanos() as u64);
    w.u8(resp
        .stages_completed
        .iter()
        .fold(0, |m, &s| m | stage_bit(s)));
    framed(body)
}

pub fn decode_response(buf: &[u8]) -> Result<Response, CodecError> {
    let mut r = Reader::new(unframe(buf)?);
    let op_id = OpId(r.u64()?);
    let kind = match r.u8()? {
        0 => ResponseKind::Ack,
        1 => ResponseKind::Value(r.bytes()?),
        2 => ResponseKind::Null,
        t => return Err(CodecError::Tag(t)),
    };
    let measured_latency = Duration::from_nanos(r.u64()?);
    let mask = r.u8()?;
    let stages_completed: BTreeSet<Stage> = Stage::ALL
        .iter()
        .copied()
        .filter(|&s| mask & stage_bit(s) != 0)
        .collect();
    Ok(Response {
        op_id,
        kind,
        measured_latency,
        stages_completed,
    })
}

#[derive(Serialize, Deserialize)]
struct JsonEnvelope<T> {
    format_version: u8,
    record: T,
}

/// Debug rendering, tagged with the format version.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(&JsonEnvelope {
        format_version: FORMAT_VERSION,
        record: value,
    })
    .expect("model types always serialize")
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, CodecError> {
    let env: JsonEnvelope<T> =
        serde_json::from_str(text).map_err(|e| CodecError::Json(e.to_string()))?;
    if env.format_version != FORMAT_VERSION {
        return Err(CodecError::Version(env.format_version));
    }
    Ok(env.record)
}
