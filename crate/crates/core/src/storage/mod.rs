// SPDX-License-Identifier: Apache-2.0

//! One tablet replica's storage: reception logs and lists, coordination
//! lists, and the column-family maps and files that reads see.
//!
//! Writes flow bl-file / b-list / b-file → t-list → p-list (+ p-file) →
//! cfMap → cfFile. Only cfMap and cfFiles are readable.

mod cffile;
mod log;

pub use cffile::{merge_row, row_bytes, Cell, CfFile, Row, INDEX_STRIDE};
pub use log::{read_log_file, AppendLog, LogEntry, LogReadError};

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    codec, quorum_size, ColumnKey, DataUnitRef, NodeId, OpId, TabletId, ValidatedRequest,
    WritePayload, WriteRecord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageConfig {
    pub b_list_capacity: usize,
    pub p_list_capacity: usize,
    pub cf_map_flush_bytes: usize,
    pub cf_file_limit: usize,
    /// Total bytes the three logs may hold; `None` is unlimited.
    pub disk_budget_bytes: Option<u64>,
    /// Mirror the logs into files under this directory.
    #[serde(default)]
    pub log_dir: Option<PathBuf>,
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig {
            b_list_capacity: 1024,
            p_list_capacity: 4096,
            cf_map_flush_bytes: 1 << 20,
            cf_file_limit: 4,
            disk_budget_bytes: None,
            log_dir: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("simulated disk budget exhausted")]
    StorageFull,
    #[error("sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("cfMap is empty")]
    EmptyMap,
    #[error("log i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for StorageError {
    fn from(e: std::io::Error) -> Self {
        StorageError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    BList,
    BFile,
    BlFile,
}

/// In-memory buffer of received writes, split by the ordered flag.
#[derive(Debug, Clone, Default)]
pub struct BufferingList {
    pub ob_list: VecDeque<WriteRecord>,
    pub db_list: VecDeque<WriteRecord>,
}

impl BufferingList {
    pub fn len(&self) -> usize {
        self.ob_list.len() + self.db_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ob_list.is_empty() && self.db_list.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &WriteRecord> {
        self.ob_list.iter().chain(self.db_list.iter())
    }
}

/// Rows of one column family.
#[derive(Debug, Clone, Default)]
pub struct CfState {
    pub map: BTreeMap<Vec<u8>, Row>,
    pub map_bytes: usize,
    /// Oldest first.
    pub files: Vec<CfFile>,
}

impl CfState {
    pub fn file_rows(&self) -> usize {
        self.files.iter().map(|f| f.row_count()).sum()
    }
}

/// Conditions a..k for one request at one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionSet {
    pub a: bool,
    pub b: bool,
    pub c: bool,
    pub d: bool,
    pub e: bool,
    pub f: bool,
    pub g: bool,
    pub h: bool,
    pub i: bool,
    pub j: bool,
    pub k: bool,
}

impl ConditionSet {
    pub fn all_true_write() -> Self {
        ConditionSet {
            a: true,
            b: false,
            c: true,
            d: true,
            e: true,
            f: true,
            g: true,
            h: true,
            i: true,
            j: true,
            k: true,
        }
    }

    pub fn all_true_read() -> Self {
        ConditionSet {
            a: false,
            b: true,
            ..Self::all_true_write()
        }
    }

    /// Flags as a compact string such as `acij`.
    pub fn letters(&self) -> String {
        let f = [
            self.a, self.b, self.c, self.d, self.e, self.f, self.g, self.h, self.i, self.j, self.k,
        ];
        f.iter()
            .zip('a'..='k')
            .filter(|(on, _)| **on)
            .map(|(_, c)| c)
            .collect()
    }
}

/// Liveness of a tablet's replica set as seen from one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Membership {
    pub replicas: usize,
    /// Reachable replicas, counting the evaluating node.
    pub reachable: usize,
}

impl Membership {
    pub fn healthy(r: usize) -> Self {
        Membership {
            replicas: r,
            reachable: r,
        }
    }
}

/// Counts the planner needs about one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StoreSummary {
    pub bl_file: usize,
    pub b_list: usize,
    pub b_file: usize,
    pub b_list_space: usize,
    pub t_list: usize,
    pub p_list: usize,
    pub p_list_space: usize,
    pub cf_map_rows: usize,
    pub cf_file_rows: usize,
    pub cf_files: usize,
}

/// Result of an acquisition with the work it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Acquired {
    pub value: Option<Vec<u8>>,
    /// cfMap lookups.
    pub j: usize,
    /// cfFiles searched.
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompactStats {
    pub file_id: u64,
    pub rows: usize,
    pub j: usize,
    pub k: usize,
}

/// State copied wholesale to a replica that fell behind a truncated p-file.
#[derive(Debug, Clone)]
pub struct CfSnapshot {
    pub cfs: BTreeMap<String, CfState>,
    pub executed_seq: u64,
    pub p_list: Vec<(u64, WriteRecord)>,
    pub coordinated: HashSet<OpId>,
    pub sequenced_order: HashSet<(NodeId, u64)>,
}

/// Storage of one tablet replica.
#[derive(Debug, Clone)]
pub struct ReplicaStore {
    config: StorageConfig,
    tablet: TabletId,
    bl_file: AppendLog,
    b_list: BufferingList,
    b_file: AppendLog,
    t_list: Vec<WriteRecord>,
    p_list: VecDeque<(u64, WriteRecord)>,
    p_file: AppendLog,
    last_seq: u64,
    executed_seq: u64,
    cfs: BTreeMap<String, CfState>,
    next_file_id: u64,
    /// Ids that already received a sequence number.
    coordinated: HashSet<OpId>,
    /// `(origin, order_index)` of every sequenced write.
    sequenced_order: HashSet<(NodeId, u64)>,
}

impl ReplicaStore {
    pub fn new(config: StorageConfig, tablet: TabletId) -> Result<Self, StorageError> {
        let (bl_file, b_file, p_file) = match &config.log_dir {
            Some(dir) => {
                let name = |kind: &str| dir.join(format!("{tablet}.{kind}"));
                (
                    AppendLog::with_file(false, name("bl"))?,
                    AppendLog::with_file(false, name("b"))?,
                    AppendLog::with_file(true, name("p"))?,
                )
            }
            None => (
                AppendLog::new(false),
                AppendLog::new(false),
                AppendLog::new(true),
            ),
        };
        Ok(ReplicaStore {
            config,
            tablet,
            bl_file,
            b_list: BufferingList::default(),
            b_file,
            t_list: Vec::new(),
            p_list: VecDeque::new(),
            p_file,
            last_seq: 0,
            executed_seq: 0,
            cfs: BTreeMap::new(),
            next_file_id: 1,
            coordinated: HashSet::new(),
            sequenced_order: HashSet::new(),
        })
    }

    pub fn in_memory(tablet: TabletId) -> Self {
        Self::new(StorageConfig::default(), tablet).expect("no files involved")
    }

    pub fn config(&self) -> &StorageConfig {
        &self.config
    }

    pub fn tablet(&self) -> TabletId {
        self.tablet
    }

    pub fn bl_file(&self) -> &AppendLog {
        &self.bl_file
    }

    pub fn b_list(&self) -> &BufferingList {
        &self.b_list
    }

    pub fn b_file(&self) -> &AppendLog {
        &self.b_file
    }

    pub fn t_list(&self) -> &[WriteRecord] {
        &self.t_list
    }

    pub fn p_list(&self) -> &VecDeque<(u64, WriteRecord)> {
        &self.p_list
    }

    pub fn p_file(&self) -> &AppendLog {
        &self.p_file
    }

    pub fn cf(&self, cf: &str) -> Option<&CfState> {
        self.cfs.get(cf)
    }

    pub fn column_families(&self) -> impl Iterator<Item = &String> {
        self.cfs.keys()
    }

    /// Highest sequence number inserted into the p-list.
    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn executed_seq(&self) -> u64 {
        self.executed_seq
    }

    pub fn is_coordinated(&self, id: OpId) -> bool {
        self.coordinated.contains(&id)
    }

    pub fn mark_coordinated(&mut self, id: OpId) {
        self.coordinated.insert(id);
    }

    /// Whether the origin's ordered write with this index was sequenced.
    pub fn order_sequenced(&self, origin: NodeId, index: u64) -> bool {
        self.sequenced_order.contains(&(origin, index))
    }

    fn check_disk(&self, extra: u64) -> Result<(), StorageError> {
        match self.config.disk_budget_bytes {
            Some(cap)
                if self.bl_file.file_bytes()
                    + self.b_file.file_bytes()
                    + self.p_file.file_bytes()
                    + extra
                    > cap =>
            {
                Err(StorageError::StorageFull)
            }
            _ => Ok(()),
        }
    }

    fn log_entry(w: WriteRecord) -> LogEntry {
        LogEntry {
            seq: None,
            write: w,
        }
    }

    /// Appends to the bl-file; every record is stored as disordered.
    pub fn bl_append(&mut self, writes: Vec<WriteRecord>) -> Result<usize, StorageError> {
        let entries: Vec<LogEntry> = writes
            .into_iter()
            .map(|w| Self::log_entry(w.into_disordered()))
            .collect();
        self.check_disk(entries.iter().map(AppendLog::cost_of).sum())?;
        let n = entries.len();
        for e in entries {
            self.bl_file.append(e)?;
        }
        Ok(n)
    }

    /// Removes and returns up to `max_n` oldest bl-file records.
    pub fn bl_drain(&mut self, max_n: usize) -> Vec<WriteRecord> {
        let mut out = Vec::new();
        while out.len() < max_n {
            match self.bl_file.pop_front() {
                Some(e) => out.push(e.write),
                None => break,
            }
        }
        out
    }

    /// Starts a new bl-file when the current one holds only sent records.
    pub fn bl_reset_if_drained(&mut self) -> Result<bool, StorageError> {
        if self.bl_file.is_empty() && self.bl_file.file_bytes() > 1 {
            self.bl_file.reset()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Buffers a received write, spilling to the b-file or bl-file when the
    /// b-list is full.
    pub fn blist_put(&mut self, w: WriteRecord) -> Result<Placement, StorageError> {
        if self.b_list.len() < self.config.b_list_capacity {
            if w.ordered {
                self.b_list.ob_list.push_back(w);
            } else {
                self.b_list.db_list.push_back(w);
            }
            return Ok(Placement::BList);
        }
        if w.ordered {
            let e = Self::log_entry(w);
            self.check_disk(AppendLog::cost_of(&e))?;
            self.b_file.append(e)?;
            Ok(Placement::BFile)
        } else {
            self.bl_append(vec![w])?;
            Ok(Placement::BlFile)
        }
    }

    /// Takes up to `n` writes for coordination: ob-list, db-list, b-file,
    /// then bl-file.
    pub fn blist_take(&mut self, n: usize) -> Vec<WriteRecord> {
        let mut out = Vec::with_capacity(n.min(self.pending_len()));
        while out.len() < n {
            if let Some(w) = self.b_list.ob_list.pop_front() {
                out.push(w);
            } else if let Some(w) = self.b_list.db_list.pop_front() {
                out.push(w);
            } else if let Some(e) = self.b_file.pop_front() {
                out.push(e.write);
            } else if let Some(e) = self.bl_file.pop_front() {
                out.push(e.write);
            } else {
                break;
            }
        }
        out
    }

    /// Moves up to `n` b-file writes into the b-list (step 8).
    pub fn bfile_to_blist(&mut self, n: usize) -> usize {
        let mut moved = 0;
        while moved < n {
            let Some(e) = self.b_file.pop_front() else {
                break;
            };
            self.b_list.ob_list.push_back(e.write);
            moved += 1;
        }
        moved
    }

    /// Writes received but not yet sequenced.
    pub fn pending_len(&self) -> usize {
        self.b_list.len() + self.b_file.len() + self.bl_file.len() + self.t_list.len()
    }

    pub fn pending_writes(&self) -> impl Iterator<Item = &WriteRecord> {
        self.b_list
            .iter()
            .chain(self.b_file.iter().map(|e| &e.write))
            .chain(self.bl_file.iter().map(|e| &e.write))
            .chain(self.t_list.iter())
    }

    pub fn holds(&self, id: OpId) -> bool {
        self.pending_writes().any(|w| w.id == id)
            || self.p_list.iter().any(|(_, w)| w.id == id)
            || self.coordinated.contains(&id)
    }

    /// True when some received write to `unit` is not yet executed here.
    pub fn has_unexecuted(&self, unit: &DataUnitRef) -> bool {
        self.pending_writes().any(|w| w.touches(unit))
            || self.p_list.iter().any(|(_, w)| w.touches(unit))
    }

    pub fn t_push(&mut self, writes: Vec<WriteRecord>) {
        self.t_list.extend(writes);
    }

    /// Drops sequenced writes from every pre-coordination structure.
    pub fn remove_sequenced(&mut self, ids: &HashSet<OpId>) {
        if ids.is_empty() {
            return;
        }
        self.b_list.ob_list.retain(|w| !ids.contains(&w.id));
        self.b_list.db_list.retain(|w| !ids.contains(&w.id));
        self.b_file.retain(|e| !ids.contains(&e.write.id));
        self.bl_file.retain(|e| !ids.contains(&e.write.id));
        self.t_list.retain(|w| !ids.contains(&w.id));
    }

    /// Moves the listed t-list writes back to the front of the b-list,
    /// keeping their relative order.
    pub fn return_to_blist(&mut self, ids: &HashSet<OpId>) {
        let (back, keep): (Vec<_>, Vec<_>) =
            self.t_list.drain(..).partition(|w| ids.contains(&w.id));
        self.t_list = keep;
        for w in back.into_iter().rev() {
            if w.ordered {
                self.b_list.ob_list.push_front(w);
            } else {
                self.b_list.db_list.push_front(w);
            }
        }
    }

    /// Returns t-list leftovers to the front of the b-list.
    pub fn return_t_list(&mut self) {
        for w in self.t_list.drain(..).rev() {
            if w.ordered {
                self.b_list.ob_list.push_front(w);
            } else {
                self.b_list.db_list.push_front(w);
            }
        }
    }

    /// Appends a coordinated sequence. Entries at or below the last known
    /// sequence are skipped; a hole before the first new entry is an error.
    pub fn plist_insert(
        &mut self,
        seq: Vec<(u64, WriteRecord)>,
        some_replica_failed: bool,
    ) -> Result<usize, StorageError> {
        let fresh: Vec<_> = seq
            .into_iter()
            .filter(|(s, _)| *s > self.last_seq)
            .collect();
        let mut expect = self.last_seq + 1;
        for (s, _) in &fresh {
            if *s != expect {
                return Err(StorageError::SequenceGap {
                    expected: expect,
                    got: *s,
                });
            }
            expect += 1;
        }
        let n = fresh.len();
        for (s, w) in fresh {
            if some_replica_failed {
                self.p_file.append(LogEntry {
                    seq: Some(s),
                    write: w.clone(),
                })?;
            }
            self.coordinated.insert(w.id);
            if let Some(i) = w.order_index {
                self.sequenced_order.insert((w.origin, i));
            }
            self.last_seq = s;
            self.p_list.push_back((s, w));
        }
        self.p_file.truncate_front(self.config.p_list_capacity)?;
        Ok(n)
    }

    /// Coordinated records still retrievable for catch-up, oldest first.
    pub fn catch_up_records(&self, after: u64) -> Option<Vec<(u64, WriteRecord)>> {
        let mut out: BTreeMap<u64, WriteRecord> = BTreeMap::new();
        for e in self.p_file.iter() {
            let s = e.seq.expect("p-file entries are sequenced");
            if s > after {
                out.insert(s, e.write.clone());
            }
        }
        for (s, w) in &self.p_list {
            if *s > after {
                out.insert(*s, w.clone());
            }
        }
        let contiguous = out.keys().copied().eq(after + 1..=self.last_seq);
        contiguous.then(|| out.into_iter().collect())
    }

    fn cf_mut(&mut self, cf: &str) -> &mut CfState {
        if !self.cfs.contains_key(cf) {
            self.cfs.insert(cf.to_string(), CfState::default());
        }
        self.cfs.get_mut(cf).unwrap()
    }

    fn put_cell(&mut self, unit_row: &[u8], cf: &str, col: &ColumnKey, value: &[u8], seq: u64) {
        let state = self.cf_mut(cf);
        let row = state.map.entry(unit_row.to_vec()).or_default();
        let before = row_bytes(unit_row, row);
        match row.get(col) {
            Some(old) if old.seq > seq => {}
            _ => {
                row.insert(
                    col.clone(),
                    Cell {
                        value: value.to_vec(),
                        seq,
                    },
                );
            }
        }
        let after = row_bytes(unit_row, row);
        state.map_bytes = state.map_bytes + after - before;
    }

    fn apply(&mut self, seq: u64, w: &WriteRecord) {
        match &w.payload {
            WritePayload::Put { columns } => {
                for (col, v) in columns {
                    self.put_cell(&w.target.row_key, &w.target.column_family, col, v, seq);
                }
            }
            WritePayload::ReadTestWrite {
                read_unit,
                test_value,
                write_unit,
                value_if_equal,
                value_if_not,
            } => {
                let cur = self.acquire(read_unit).value;
                let v = if cur.as_deref() == Some(test_value.as_slice()) {
                    value_if_equal
                } else {
                    value_if_not
                };
                self.put_cell(
                    &write_unit.row_key,
                    &write_unit.column_family,
                    &write_unit.column,
                    v,
                    seq,
                );
            }
        }
    }

    /// Executes up to `n` p-list writes in sequence order. Returns what ran.
    pub fn execute_writes(&mut self, n: usize, now: u64) -> Vec<(u64, WriteRecord)> {
        let mut done = Vec::new();
        while done.len() < n {
            let Some((s, w)) = self.p_list.pop_front() else {
                break;
            };
            self.apply(s, &w);
            self.executed_seq = s;
            let cf = w.target.column_family.clone();
            if self.cfs[&cf].map_bytes > self.config.cf_map_flush_bytes {
                let _ = self.flush_cfmap(&cf, now);
            }
            done.push((s, w));
        }
        done
    }

    /// Seals the cfMap of `cf` into a new cfFile.
    pub fn flush_cfmap(&mut self, cf: &str, now: u64) -> Result<&CfFile, StorageError> {
        let id = self.next_file_id;
        let state = self.cfs.get_mut(cf).ok_or(StorageError::EmptyMap)?;
        if state.map.is_empty() {
            return Err(StorageError::EmptyMap);
        }
        let rows: Vec<_> = std::mem::take(&mut state.map).into_iter().collect();
        state.map_bytes = 0;
        state.files.push(CfFile::seal(id, rows, now));
        self.next_file_id += 1;
        Ok(self.cfs[cf].files.last().unwrap())
    }

    /// Merges the cfMap and all cfFiles of `cf` into one file.
    pub fn compact(&mut self, cf: &str, now: u64) -> Option<CompactStats> {
        let id = self.next_file_id;
        let state = self.cfs.get_mut(cf)?;
        if state.map.is_empty() && state.files.len() <= 1 {
            return None;
        }
        let j = state.map.len();
        let k = state.file_rows();
        let mut merged: BTreeMap<Vec<u8>, Row> = BTreeMap::new();
        for f in state.files.drain(..) {
            for (key, row) in f.rows() {
                merge_row(merged.entry(key.clone()).or_default(), row);
            }
        }
        for (key, row) in std::mem::take(&mut state.map) {
            merge_row(merged.entry(key).or_default(), &row);
        }
        state.map_bytes = 0;
        let rows = merged.len();
        state
            .files
            .push(CfFile::seal(id, merged.into_iter().collect(), now));
        self.next_file_id += 1;
        Some(CompactStats {
            file_id: id,
            rows,
            j,
            k,
        })
    }

    /// Looks the column up in the cfMap, then cfFiles newest first.
    pub fn acquire(&self, unit: &DataUnitRef) -> Acquired {
        let Some(state) = self.cfs.get(&unit.column_family) else {
            return Acquired {
                value: None,
                j: 1,
                k: 0,
            };
        };
        if let Some(c) = state
            .map
            .get(&unit.row_key)
            .and_then(|r| r.get(&unit.column))
        {
            return Acquired {
                value: Some(c.value.clone()),
                j: 1,
                k: 0,
            };
        }
        let mut k = 0;
        for f in state.files.iter().rev() {
            k += 1;
            if let Some(c) = f.get(&unit.row_key).and_then(|r| r.get(&unit.column)) {
                return Acquired {
                    value: Some(c.value.clone()),
                    j: 1,
                    k,
                };
            }
        }
        Acquired {
            value: None,
            j: 1,
            k,
        }
    }

    pub fn summary(&self, cf: &str) -> StoreSummary {
        let (rows, file_rows, files) = self
            .cfs
            .get(cf)
            .map_or((0, 0, 0), |s| (s.map.len(), s.file_rows(), s.files.len()));
        StoreSummary {
            bl_file: self.bl_file.len(),
            b_list: self.b_list.len(),
            b_file: self.b_file.len(),
            b_list_space: self
                .config
                .b_list_capacity
                .saturating_sub(self.b_list.len()),
            t_list: self.t_list.len(),
            p_list: self.p_list.len(),
            p_list_space: self
                .config
                .p_list_capacity
                .saturating_sub(self.p_list.len()),
            cf_map_rows: rows,
            cf_file_rows: file_rows,
            cf_files: files,
        }
    }

    /// Condition k for one column family.
    pub fn needs_compaction(&self, cf: &str) -> bool {
        self.cfs
            .get(cf)
            .is_some_and(|s| !s.map.is_empty() || s.files.len() > self.config.cf_file_limit)
    }

    pub fn snapshot(&self) -> CfSnapshot {
        CfSnapshot {
            cfs: self.cfs.clone(),
            executed_seq: self.executed_seq,
            p_list: self.p_list.iter().cloned().collect(),
            coordinated: self.coordinated.clone(),
            sequenced_order: self.sequenced_order.clone(),
        }
    }

    /// Replaces executed state with a donor's copy. Pending writes that the
    /// donor already sequenced are dropped.
    pub fn install_snapshot(&mut self, snap: CfSnapshot) {
        self.cfs = snap.cfs;
        self.executed_seq = snap.executed_seq;
        self.p_list = snap.p_list.into_iter().collect();
        self.last_seq = self.p_list.back().map_or(self.executed_seq, |(s, _)| *s);
        self.coordinated.extend(snap.coordinated);
        self.sequenced_order.extend(snap.sequenced_order);
        let ids = self.coordinated.clone();
        self.remove_sequenced(&ids);
        self.next_file_id = self
            .cfs
            .values()
            .flat_map(|s| s.files.iter().map(|f| f.id + 1))
            .max()
            .unwrap_or(1)
            .max(self.next_file_id);
    }

    /// Bytes of the pending structures, for reporting.
    pub fn pending_bytes(&self) -> usize {
        self.pending_writes().map(codec::write_size).sum()
    }
}

/// Evaluates the conditions for `req` against this replica.
pub fn eval_conditions(
    store: &ReplicaStore,
    req: &ValidatedRequest,
    membership: Membership,
) -> ConditionSet {
    let cf = &req.target().column_family;
    ConditionSet {
        a: req.is_write(),
        b: !req.is_write(),
        c: membership.reachable >= quorum_size(membership.replicas),
        d: membership.reachable < membership.replicas,
        e: !store.b_list.is_empty(),
        f: !store.p_list.is_empty(),
        g: !store.bl_file.is_empty(),
        h: !store.b_file.is_empty(),
        i: store.b_list.len() < store.config.b_list_capacity,
        j: store.p_list.len() < store.config.p_list_capacity,
        k: store.needs_compaction(cf),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LatencyBound, NodeId, ReadRequest};

    fn unit(row: &str, col: &str) -> DataUnitRef {
        DataUnitRef::new("t", row.as_bytes(), "cf", col)
    }

    fn w(id: u64, row: &str, col: &str, val: &str, ordered: bool) -> WriteRecord {
        WriteRecord {
            id: OpId(id),
            target: unit(row, col),
            payload: WritePayload::put(col, val),
            timestamp: id,
            origin_seq: id,
            order_index: ordered.then_some(id),
            prev_ordered: None,
            ordered,
            t_bound: LatencyBound::Infinite,
            origin: NodeId(0),
        }
    }

    fn store() -> ReplicaStore {
        ReplicaStore::in_memory(TabletId(1))
    }

    fn small(cap: usize) -> ReplicaStore {
        ReplicaStore::new(
            StorageConfig {
                b_list_capacity: cap,
                ..StorageConfig::default()
            },
            TabletId(1),
        )
        .unwrap()
    }

    fn read_req() -> ValidatedRequest {
        ValidatedRequest::Read(ReadRequest {
            id: OpId(99),
            target: unit("r", "c"),
            t_bound: LatencyBound::millis(0),
        })
    }

    #[test]
    fn bl_append_forces_disordered() {
        let mut s = store();
        assert_eq!(s.bl_append(vec![w(1, "r", "c", "v", true)]).unwrap(), 1);
        let back = s.bl_drain(10);
        assert_eq!(back.len(), 1);
        assert!(!back[0].ordered);
        assert_eq!(back[0].id, OpId(1));
    }

    #[test]
    fn bl_drain_fifo_and_reset() {
        let mut s = store();
        assert!(s.bl_drain(10).is_empty());
        s.bl_append((1..=3).map(|i| w(i, "r", "c", "v", false)).collect())
            .unwrap();
        let got: Vec<_> = s.bl_drain(2).iter().map(|w| w.id.0).collect();
        assert_eq!(got, vec![1, 2]);
        s.bl_drain(10);
        let gen = s.bl_file().generation();
        assert!(s.bl_reset_if_drained().unwrap());
        assert_eq!(s.bl_file().generation(), gen + 1);
        assert_eq!(s.bl_file().file_bytes(), 1);
    }

    #[test]
    fn blist_put_spills_by_order_flag() {
        let mut s = small(1);
        assert_eq!(
            s.blist_put(w(1, "r", "c", "v", true)).unwrap(),
            Placement::BList
        );
        assert_eq!(s.b_list().ob_list.len(), 1);
        assert_eq!(
            s.blist_put(w(2, "r", "c", "v", true)).unwrap(),
            Placement::BFile
        );
        assert_eq!(
            s.blist_put(w(3, "r", "c", "v", false)).unwrap(),
            Placement::BlFile
        );
    }

    #[test]
    fn blist_take_order() {
        let mut s = store();
        s.blist_put(w(1, "r", "c", "v", true)).unwrap();
        s.blist_put(w(2, "r", "c", "v", false)).unwrap();
        s.blist_put(w(3, "r", "c", "v", true)).unwrap();
        let got: Vec<_> = s.blist_take(3).iter().map(|w| w.id.0).collect();
        assert_eq!(got, vec![1, 3, 2]);
        assert!(s.blist_take(5).is_empty());

        let mut s = small(0);
        for i in 1..=4 {
            s.blist_put(w(i, "r", "c", "v", true)).unwrap();
        }
        let got: Vec<_> = s.blist_take(2).iter().map(|w| w.id.0).collect();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn plist_insert_and_p_file() {
        let mut s = store();
        let seq = |a: u64, b: u64| {
            (a..=b)
                .map(|i| (i, w(i, "r", "c", "v", true)))
                .collect::<Vec<_>>()
        };
        s.plist_insert(seq(1, 4), false).unwrap();
        s.plist_insert(seq(5, 8), false).unwrap();
        assert_eq!(s.p_list().len(), 8);
        assert_eq!(s.p_file().len(), 0);
        s.plist_insert(seq(9, 12), true).unwrap();
        assert_eq!(s.p_file().len(), 4);
        assert_eq!(
            s.plist_insert(seq(15, 16), false),
            Err(StorageError::SequenceGap {
                expected: 13,
                got: 15
            })
        );
    }

    #[test]
    fn p_file_truncates_to_p_list_capacity() {
        let mut s = ReplicaStore::new(
            StorageConfig {
                p_list_capacity: 4,
                ..StorageConfig::default()
            },
            TabletId(1),
        )
        .unwrap();
        let seq: Vec<_> = (1..=10).map(|i| (i, w(i, "r", "c", "v", true))).collect();
        s.plist_insert(seq, true).unwrap();
        assert_eq!(s.p_file().len(), 4);
        assert_eq!(s.p_file().front().unwrap().seq, Some(7));
    }

    #[test]
    fn execute_put_and_rtw() {
        let mut s = store();
        let rtw = WriteRecord {
            payload: WritePayload::ReadTestWrite {
                read_unit: unit("r", "d1"),
                test_value: b"v1".to_vec(),
                write_unit: unit("r", "d2"),
                value_if_equal: b"v2".to_vec(),
                value_if_not: b"v3".to_vec(),
            },
            ..w(2, "r", "d2", "", true)
        };
        s.plist_insert(vec![(1, w(1, "r", "d1", "v1", true)), (2, rtw)], false)
            .unwrap();
        assert_eq!(s.execute_writes(5, 0).len(), 2);
        assert_eq!(s.acquire(&unit("r", "d2")).value.unwrap(), b"v2");
        assert_eq!(s.executed_seq(), 2);
    }

    #[test]
    fn later_sequence_wins() {
        let mut s = store();
        s.plist_insert(
            vec![
                (1, w(1, "r", "c", "a", true)),
                (2, w(2, "r", "c", "b", true)),
            ],
            false,
        )
        .unwrap();
        s.execute_writes(2, 0);
        assert_eq!(s.acquire(&unit("r", "c")).value.unwrap(), b"b");
    }

    #[test]
    fn flush_then_acquire_from_file() {
        let mut s = store();
        let seq: Vec<_> = ["x", "a", "m"]
            .iter()
            .enumerate()
            .map(|(i, r)| (i as u64 + 1, w(i as u64 + 1, r, "c", r, true)))
            .collect();
        s.plist_insert(seq, false).unwrap();
        s.execute_writes(3, 0);
        let f = s.flush_cfmap("cf", 5).unwrap();
        assert_eq!(f.row_count(), 3);
        assert_eq!(f.min_key, b"a");
        assert!(s.cf("cf").unwrap().map.is_empty());
        let got = s.acquire(&unit("m", "c"));
        assert_eq!(got.value.unwrap(), b"m");
        assert_eq!(got.k, 1);
        assert_eq!(s.flush_cfmap("cf", 6).unwrap_err(), StorageError::EmptyMap);
    }

    #[test]
    fn compaction_merges_newest_wins() {
        let mut s = store();
        s.plist_insert(vec![(1, w(1, "k1", "c", "v1", true))], false)
            .unwrap();
        s.execute_writes(1, 0);
        s.flush_cfmap("cf", 0).unwrap();
        s.plist_insert(vec![(2, w(2, "k1", "c", "v2", true))], false)
            .unwrap();
        s.execute_writes(1, 0);
        s.flush_cfmap("cf", 0).unwrap();
        s.plist_insert(vec![(3, w(3, "k2", "c", "v3", true))], false)
            .unwrap();
        s.execute_writes(1, 0);
        let st = s.compact("cf", 1).unwrap();
        assert_eq!((st.j, st.k, st.rows), (1, 2, 2));
        let cf = s.cf("cf").unwrap();
        assert_eq!(cf.files.len(), 1);
        assert!(cf.map.is_empty());
        assert_eq!(s.acquire(&unit("k1", "c")).value.unwrap(), b"v2");
        assert_eq!(s.acquire(&unit("k2", "c")).value.unwrap(), b"v3");
        assert!(!s.needs_compaction("cf"));
    }

    #[test]
    fn conditions_on_empty_store() {
        let s = store();
        let req = ValidatedRequest::Write(crate::model::ValidWrite {
            id: OpId(1),
            target: unit("r", "c"),
            payload: WritePayload::put("c", "v"),
            ordered: true,
            t_bound: LatencyBound::millis(0),
        });
        let c = eval_conditions(&s, &req, Membership::healthy(3));
        assert_eq!(c.letters(), "acij");
        let c = eval_conditions(
            &s,
            &read_req(),
            Membership {
                replicas: 3,
                reachable: 1,
            },
        );
        assert_eq!(c.letters(), "bdij");
    }

    #[test]
    fn condition_f_and_k() {
        let mut s = ReplicaStore::new(
            StorageConfig {
                cf_file_limit: 2,
                ..StorageConfig::default()
            },
            TabletId(1),
        )
        .unwrap();
        let seq: Vec<_> = (1..=5).map(|i| (i, w(i, "r", "c", "v", true))).collect();
        s.plist_insert(seq, false).unwrap();
        let c = eval_conditions(&s, &read_req(), Membership::healthy(3));
        assert!(c.f && !c.k);
        for i in 0..3 {
            s.execute_writes(1, i);
            s.flush_cfmap("cf", i).unwrap();
        }
        let c = eval_conditions(&s, &read_req(), Membership::healthy(3));
        assert!(c.k, "three files over a limit of two");
    }

    #[test]
    fn catch_up_records_need_contiguity() {
        let mut s = ReplicaStore::new(
            StorageConfig {
                p_list_capacity: 3,
                ..StorageConfig::default()
            },
            TabletId(1),
        )
        .unwrap();
        let seq: Vec<_> = (1..=6).map(|i| (i, w(i, "r", "c", "v", true))).collect();
        s.plist_insert(seq, true).unwrap();
        s.execute_writes(6, 0);
        assert_eq!(s.catch_up_records(3).unwrap().len(), 3);
        assert!(s.catch_up_records(1).is_none());
    }
}
