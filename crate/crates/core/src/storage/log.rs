// SPDX-License-Identifier: Apache-2.0

//! Append logs for the bl-file, b-file and p-file.
//!
//! File format: one format-version byte, then `[u32 length][record]`
//! entries. p-file records carry a leading `u64` sequence number inside the
//! length-prefixed record. Records live in memory; when a backing path is
//! configured every append is mirrored to that file.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::model::codec::{self, CodecError, FORMAT_VERSION};
use crate::model::WriteRecord;

/// A log entry: a write, with its coordination sequence for p-file entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub seq: Option<u64>,
    pub write: WriteRecord,
}

#[derive(Debug)]
pub struct AppendLog {
    entries: VecDeque<LogEntry>,
    sequenced: bool,
    /// Bytes written to the current file generation.
    file_bytes: u64,
    generation: u64,
    path: Option<PathBuf>,
}

impl Clone for AppendLog {
    fn clone(&self) -> Self {
        AppendLog {
            entries: self.entries.clone(),
            sequenced: self.sequenced,
            file_bytes: self.file_bytes,
            generation: self.generation,
            path: None,
        }
    }
}

fn entry_bytes(e: &LogEntry) -> Vec<u8> {
    let mut body = Vec::new();
    if let Some(s) = e.seq {
        body.extend_from_slice(&s.to_le_bytes());
    }
    body.extend(codec::write_body(&e.write));
    let mut out = (body.len() as u32).to_le_bytes().to_vec();
    out.extend(body);
    out
}

fn entry_len(e: &LogEntry) -> u64 {
    4 + e.seq.map_or(0, |_| 8) + codec::write_size(&e.write) as u64
}

impl AppendLog {
    pub fn new(sequenced: bool) -> Self {
        AppendLog {
            entries: VecDeque::new(),
            sequenced,
            file_bytes: 1,
            generation: 0,
            path: None,
        }
    }

    /// Mirrors appends to `path`, starting a fresh file there.
    pub fn with_file(sequenced: bool, path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        File::create(&path)?.write_all(&[FORMAT_VERSION])?;
        Ok(AppendLog {
            path: Some(path),
            ..Self::new(sequenced)
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn file_bytes(&self) -> u64 {
        self.file_bytes
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Bytes one more append of `e` would add.
    pub fn cost_of(e: &LogEntry) -> u64 {
        entry_len(e)
    }

    pub fn append(&mut self, e: LogEntry) -> io::Result<()> {
        debug_assert_eq!(e.seq.is_some(), self.sequenced);
        if let Some(p) = &self.path {
            OpenOptions::new()
                .append(true)
                .open(p)?
                .write_all(&entry_bytes(&e))?;
        }
        self.file_bytes += entry_len(&e);
        self.entries.push_back(e);
        Ok(())
    }

    pub fn pop_front(&mut self) -> Option<LogEntry> {
        self.entries.pop_front()
    }

    pub fn front(&self) -> Option<&LogEntry> {
        self.entries.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter()
    }

    pub fn retain(&mut self, f: impl FnMut(&LogEntry) -> bool) {
        self.entries.retain(f);
    }

    /// Discards the file and starts a new, empty generation.
    pub fn reset(&mut self) -> io::Result<()> {
        self.entries.clear();
        self.file_bytes = 1;
        self.generation += 1;
        if let Some(p) = &self.path {
            File::create(p)?.write_all(&[FORMAT_VERSION])?;
        }
        Ok(())
    }

    /// Drops front entries until at most `keep` remain. Rewrites the
    /// backing file when one is configured.
    pub fn truncate_front(&mut self, keep: usize) -> io::Result<()> {
        if self.entries.len() <= keep {
            return Ok(());
        }
        while self.entries.len() > keep {
            self.entries.pop_front();
        }
        self.file_bytes = 1 + self.entries.iter().map(entry_len).sum::<u64>();
        if let Some(p) = &self.path {
            let mut f = File::create(p)?;
            f.write_all(&[FORMAT_VERSION])?;
            for e in &self.entries {
                f.write_all(&entry_bytes(e))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Reads every entry of a log file written by [`AppendLog::with_file`].
pub fn read_log_file(
    path: impl AsRef<Path>,
    sequenced: bool,
) -> Result<Vec<LogEntry>, LogReadError> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let (&v, mut rest) = buf.split_first().ok_or(CodecError::Truncated)?;
    if v != FORMAT_VERSION {
        return Err(CodecError::Version(v).into());
    }
    let mut out = Vec::new();
    while !rest.is_empty() {
        if rest.len() < 4 {
            return Err(CodecError::Truncated.into());
        }
        let n = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let body = rest.get(4..4 + n).ok_or(CodecError::Truncated)?;
        let (seq, rec) = if sequenced {
            if body.len() < 8 {
                return Err(CodecError::Truncated.into());
            }
            (
                Some(u64::from_le_bytes(body[..8].try_into().unwrap())),
                &body[8..],
            )
        } else {
            (None, body)
        };
        out.push(LogEntry {
            seq,
            write: codec::decode_write_body(rec)?,
        });
        rest = &rest[4 + n..];
    }
    Ok(out)
}
