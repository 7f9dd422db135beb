// SPDX-License-Identifier: Apache-2.0

//! Messages exchanged between node engines.
//!
//! Every message has a fixed 32-byte header (type byte, tablet, round or
//! sequence fields, padding). Bodies are the encoded records they carry.
//! Only the size matters to the simulator; payloads travel as values.

use crate::model::{
    codec, NodeId, OpId, Response, ResponseKind, TabletId, ValidatedRequest, WritePayload,
    WriteRecord,
};
use crate::planner::MSG_HEADER_BYTES;
use crate::storage::{row_bytes, CfSnapshot};

pub const HEADER: usize = MSG_HEADER_BYTES as usize;

/// Catch-up payload: missing sequence records, or a full copy when the
/// donor no longer has them.
#[derive(Debug, Clone)]
pub enum CatchUpBody {
    Records(Vec<(u64, WriteRecord)>),
    Snapshot(Box<CfSnapshot>),
    /// The donor is not ahead.
    Nothing,
}

#[derive(Debug, Clone)]
pub enum Message {
    /// A request relayed from a node without a replica.
    Forward {
        origin_op: OpId,
        req: ValidatedRequest,
        /// Nanoseconds already spent at the forwarding node.
        spent: u64,
    },
    /// The relayed response travelling back.
    ForwardReply {
        origin_op: OpId,
        resp: Response,
    },
    /// Step 4: writes for the receivers' b-lists.
    WriteBatch {
        tablet: TabletId,
        op: u64,
        writes: Vec<WriteRecord>,
        /// Sender's last sequence number, so stale peers notice.
        last_seq: u64,
    },
    /// Step 7.
    Ack {
        tablet: TabletId,
        op: u64,
        last_seq: u64,
    },
    /// Step 9: a contribution sent to the rotation holder.
    CoordRequest {
        tablet: TabletId,
        round: u64,
        initiator: NodeId,
        writes: Vec<WriteRecord>,
        eager: bool,
        last_seq: u64,
    },
    /// The addressee was not the rotation holder.
    CoordReject {
        tablet: TabletId,
        round: u64,
        last_seq: u64,
    },
    /// Step 13: the aligned sequence, plus the ids the leader held back.
    CoordSequence {
        tablet: TabletId,
        round: u64,
        initiator: NodeId,
        seq: Vec<(u64, WriteRecord)>,
        held: Vec<OpId>,
        /// Execute through this sequence number before acknowledging.
        eager: bool,
    },
    /// Step 16.
    CoordAck {
        tablet: TabletId,
        round: u64,
    },
    /// Consistent operations ask peers for pending writes and progress.
    GatherRequest {
        tablet: TabletId,
        op: u64,
        /// Writes the requester already holds.
        known: Vec<OpId>,
    },
    GatherReply {
        tablet: TabletId,
        op: u64,
        writes: Vec<WriteRecord>,
        last_seq: u64,
    },
    CatchUpRequest {
        tablet: TabletId,
        after: u64,
    },
    CatchUpChunk {
        tablet: TabletId,
        body: CatchUpBody,
        last_seq: u64,
    },
}

fn payload_bytes(p: &WritePayload) -> usize {
    match p {
        WritePayload::Put { columns } => columns
            .iter()
            .map(|(c, v)| 8 + c.name.len() + v.len())
            .sum(),
        WritePayload::ReadTestWrite {
            test_value,
            value_if_equal,
            value_if_not,
            ..
        } => 96 + test_value.len() + value_if_equal.len() + value_if_not.len(),
    }
}

fn writes_bytes(ws: &[WriteRecord]) -> usize {
    ws.iter().map(codec::write_size).sum()
}

fn snapshot_bytes(s: &CfSnapshot) -> usize {
    let rows: usize = s
        .cfs
        .values()
        .map(|cf| {
            cf.map.iter().map(|(k, r)| row_bytes(k, r)).sum::<usize>()
                + cf.files
                    .iter()
                    .flat_map(|f| f.rows())
                    .map(|(k, r)| row_bytes(k, r))
                    .sum::<usize>()
        })
        .sum();
    rows + s
        .p_list
        .iter()
        .map(|(_, w)| 8 + codec::write_size(w))
        .sum::<usize>()
}

/// Bytes of a client request on the wire.
pub fn request_size(req: &ValidatedRequest) -> usize {
    HEADER
        + match req {
            ValidatedRequest::Write(w) => w.target.row_key.len() + 64 + payload_bytes(&w.payload),
            ValidatedRequest::Read(r) => r.target.row_key.len() + 48,
        }
}

/// Bytes of a response on the wire.
pub fn response_size(resp: &Response) -> usize {
    HEADER
        + match &resp.kind {
            ResponseKind::Value(v) => v.len(),
            _ => 0,
        }
}

impl Message {
    /// Bytes on the wire.
    pub fn size(&self) -> usize {
        HEADER
            + match self {
                Message::Forward { req, .. } => request_size(req) - HEADER,
                Message::ForwardReply { resp, .. } => response_size(resp) - HEADER,
                Message::WriteBatch { writes, .. } => writes_bytes(writes),
                Message::CoordRequest { writes, .. } => writes_bytes(writes),
                Message::CoordSequence { seq, held, .. } => {
                    seq.iter()
                        .map(|(_, w)| 8 + codec::write_size(w))
                        .sum::<usize>()
                        + 8 * held.len()
                }
                Message::GatherReply { writes, .. } => writes_bytes(writes),
                Message::GatherRequest { known, .. } => 8 * known.len(),
                Message::CatchUpChunk { body, .. } => match body {
                    CatchUpBody::Records(r) => {
                        r.iter().map(|(_, w)| 8 + codec::write_size(w)).sum()
                    }
                    CatchUpBody::Snapshot(s) => snapshot_bytes(s),
                    CatchUpBody::Nothing => 0,
                },
                Message::Ack { .. }
                | Message::CoordReject { .. }
                | Message::CoordAck { .. }
                | Message::CatchUpRequest { .. } => 0,
            }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Forward { .. } => "forward",
            Message::ForwardReply { .. } => "forward-reply",
            Message::WriteBatch { .. } => "write-batch",
            Message::Ack { .. } => "ack",
            Message::CoordRequest { .. } => "coord-request",
            Message::CoordReject { .. } => "coord-reject",
            Message::CoordSequence { .. } => "coord-sequence",
            Message::CoordAck { .. } => "coord-ack",
            Message::GatherRequest { .. } => "gather-request",
            Message::GatherReply { .. } => "gather-reply",
            Message::CatchUpRequest { .. } => "catchup-request",
            Message::CatchUpChunk { .. } => "catchup-chunk",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataUnitRef, LatencyBound};

    fn w(id: u64) -> WriteRecord {
        WriteRecord {
            id: OpId(id),
            target: DataUnitRef::new("t", b"k".as_slice(), "cf", "c"),
            payload: WritePayload::put("c", vec![0u8; 100]),
            timestamp: 1,
            origin_seq: id,
            order_index: None,
            prev_ordered: None,
            ordered: false,
            t_bound: LatencyBound::Infinite,
            origin: NodeId(0),
        }
    }

    #[test]
    fn sizes_count_header_and_records() {
        let ack = Message::Ack {
            tablet: TabletId(1),
            op: 1,
            last_seq: 0,
        };
        assert_eq!(ack.size(), HEADER);
        let one = codec::write_size(&w(1));
        let batch = Message::WriteBatch {
            tablet: TabletId(1),
            op: 1,
            writes: vec![w(1), w(2)],
            last_seq: 0,
        };
        assert_eq!(batch.size(), HEADER + 2 * one);
        let seq = Message::CoordSequence {
            tablet: TabletId(1),
            round: 1,
            initiator: NodeId(0),
            seq: vec![(1, w(1))],
            held: vec![OpId(9)],
            eager: false,
        };
        assert_eq!(seq.size(), HEADER + 8 + one + 8);
    }
}
