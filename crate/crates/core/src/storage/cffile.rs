// SPDX-License-Identifier: Apache-2.0

//! Sealed, sorted, sparsely indexed column-family files.
//!
//! On-disk layout:
//! header `[version u8][id u64][seal u64][rows u32][min key][max key]`,
//! row block, index block (every 16th key with its row ordinal),
//! footer `[row block offset u64][index block offset u64]`.

use std::collections::BTreeMap;

use crate::model::codec::{CodecError, Reader, Writer, FORMAT_VERSION};
use crate::model::ColumnKey;

pub const INDEX_STRIDE: usize = 16;

/// A column value tagged with the coordination sequence number that wrote it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub value: Vec<u8>,
    pub seq: u64,
}

pub type Row = BTreeMap<ColumnKey, Cell>;

/// Merges `src` into `dst`, keeping the cell with the higher sequence number.
pub fn merge_row(dst: &mut Row, src: &Row) {
    for (col, cell) in src {
        match dst.get(col) {
            Some(old) if old.seq > cell.seq => {}
            _ => {
                dst.insert(col.clone(), cell.clone());
            }
        }
    }
}

pub fn row_bytes(key: &[u8], row: &Row) -> usize {
    key.len()
        + row
            .iter()
            .map(|(c, v)| {
                c.name.len() + c.super_column.as_ref().map_or(0, |s| s.len()) + v.value.len() + 8
            })
            .sum::<usize>()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfFile {
    pub id: u64,
    rows: Vec<(Vec<u8>, Row)>,
    index: Vec<(Vec<u8>, usize)>,
    pub min_key: Vec<u8>,
    pub max_key: Vec<u8>,
    pub seal_timestamp: u64,
}

impl CfFile {
    /// Seals `rows`, which must be sorted by key and unique.
    pub fn seal(id: u64, rows: Vec<(Vec<u8>, Row)>, seal_timestamp: u64) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
        let index = rows
            .iter()
            .enumerate()
            .step_by(INDEX_STRIDE)
            .map(|(i, (k, _))| (k.clone(), i))
            .collect();
        CfFile {
            id,
            min_key: rows.first().map(|r| r.0.clone()).unwrap_or_default(),
            max_key: rows.last().map(|r| r.0.clone()).unwrap_or_default(),
            rows,
            index,
            seal_timestamp,
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(Vec<u8>, Row)] {
        &self.rows
    }

    /// Index lookup, then a scan of at most one stride.
    pub fn get(&self, key: &[u8]) -> Option<&Row> {
        if self.rows.is_empty() || key < self.min_key.as_slice() || key > self.max_key.as_slice() {
            return None;
        }
        let slot = self.index.partition_point(|(k, _)| k.as_slice() <= key);
        let start = self.index[slot.saturating_sub(1)].1;
        self.rows[start..(start + INDEX_STRIDE).min(self.rows.len())]
            .iter()
            .find(|(k, _)| k.as_slice() == key)
            .map(|(_, r)| r)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut w = Writer::new(&mut out);
        w.u8(FORMAT_VERSION);
        w.u64(self.id);
        w.u64(self.seal_timestamp);
        w.u32(self.rows.len() as u32);
        w.bytes(&self.min_key);
        w.bytes(&self.max_key);
        let row_off = out.len() as u64;
        let mut w = Writer::new(&mut out);
        for (key, row) in &self.rows {
            w.bytes(key);
            w.u32(row.len() as u32);
            for (col, cell) in row {
                match &col.super_column {
                    Some(s) => {
                        w.u8(1);
                        w.str(s);
                    }
                    None => w.u8(0),
                }
                w.str(&col.name);
                w.bytes(&cell.value);
                w.u64(cell.seq);
            }
        }
        let idx_off = out.len() as u64;
        let mut w = Writer::new(&mut out);
        w.u32(self.index.len() as u32);
        for (k, ord) in &self.index {
            w.bytes(k);
            w.u32(*ord as u32);
        }
        w.u64(row_off);
        w.u64(idx_off);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let v = r.u8()?;
        if v != FORMAT_VERSION {
            return Err(CodecError::Version(v));
        }
        let id = r.u64()?;
        let seal_timestamp = r.u64()?;
        let n = r.u32()? as usize;
        let min_key = r.bytes()?;
        let max_key = r.bytes()?;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let key = r.bytes()?;
            let cols = r.u32()? as usize;
            let mut row = Row::new();
            for _ in 0..cols {
                let super_column = match r.u8()? {
                    0 => None,
                    1 => Some(r.str()?),
                    t => return Err(CodecError::Tag(t)),
                };
                let name = r.str()?;
                let value = r.bytes()?;
                let seq = r.u64()?;
                row.insert(ColumnKey { super_column, name }, Cell { value, seq });
            }
            rows.push((key, row));
        }
        let f = CfFile::seal(id, rows, seal_timestamp);
        if f.min_key != min_key || f.max_key != max_key {
            return Err(CodecError::Truncated);
        }
        Ok(f)
    }
}
