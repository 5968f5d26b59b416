//! Framed wire protocol shared by the client-server and server-server
//! links, plus traffic metering.
//!
//! Every message is `length (u32 LE) | type (u8) | query id (16 bytes) |
//! payload`, where `length` covers everything after itself. The same
//! framing runs on both legs; peers batch all per-iteration traffic for a
//! query into a single frame so one bisection step costs one round trip.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::Fe;

pub const QID_LEN: usize = 16;
/// Upper bound on a frame body; a candidate-vector share for 2^24
/// documents still fits.
pub const MAX_FRAME: u32 = 1 << 30;

pub type QueryId = [u8; QID_LEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    PromptShare = 1,
    IterKey = 2,
    CountShare = 3,
    Finalize = 4,
    DcShare = 5,
    Abort = 6,
    PeerOpenBatch = 7,
    PeerPublicBatch = 8,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Self::PromptShare,
            2 => Self::IterKey,
            3 => Self::CountShare,
            4 => Self::Finalize,
            5 => Self::DcShare,
            6 => Self::Abort,
            7 => Self::PeerOpenBatch,
            8 => Self::PeerPublicBatch,
            _ => return Err(Error::Decode(format!("unknown message type {v}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub mtype: MsgType,
    pub qid: QueryId,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(mtype: MsgType, qid: QueryId, payload: Vec<u8>) -> Self {
        Self { mtype, qid, payload }
    }

    /// Total bytes on the wire including the length prefix.
    pub fn wire_len(&self) -> u64 {
        4 + 1 + QID_LEN as u64 + self.payload.len() as u64
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<()> {
    let body_len = 1 + QID_LEN + frame.payload.len();
    if body_len as u64 > MAX_FRAME as u64 {
        return Err(Error::Protocol("frame too large".into()));
    }
    w.write_all(&(body_len as u32).to_le_bytes())?;
    w.write_all(&[frame.mtype as u8])?;
    w.write_all(&frame.qid)?;
    w.write_all(&frame.payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame> {
    let mut len_b = [0u8; 4];
    r.read_exact(&mut len_b)?;
    let len = u32::from_le_bytes(len_b);
    if len < (1 + QID_LEN) as u32 || len > MAX_FRAME {
        return Err(Error::Decode(format!("bad frame length {len}")));
    }
    let mut type_b = [0u8; 1];
    r.read_exact(&mut type_b)?;
    let mtype = MsgType::from_u8(type_b[0])?;
    let mut qid = [0u8; QID_LEN];
    r.read_exact(&mut qid)?;
    let mut payload = vec![0u8; len as usize - 1 - QID_LEN];
    r.read_exact(&mut payload)?;
    Ok(Frame { mtype, qid, payload })
}

/// Role of a peer open-batch exchange inside a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PeerKind {
    /// Prompt-difference contributions for the distance calculation;
    /// party 0's message also announces the offline slot.
    DotOpen = 1,
    /// Masked-value contributions for one bisection iteration's gate batch.
    GateMask = 2,
    /// Masked-value contributions for the verification gates.
    VerifyMask = 3,
    /// Output-share contributions that make the verification results public.
    VerifyOpen = 4,
}

impl PeerKind {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Self::DotOpen,
            2 => Self::GateMask,
            3 => Self::VerifyMask,
            4 => Self::VerifyOpen,
            _ => return Err(Error::Decode(format!("unknown peer batch kind {v}"))),
        })
    }
}

/// Body of a `PeerOpenBatch` / `PeerPublicBatch` frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerBatch {
    pub kind: PeerKind,
    pub party: u8,
    /// Iteration number for `GateMask`, offline slot for `DotOpen`.
    pub step: u64,
    pub values: Vec<Fe>,
}

impl PeerBatch {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + 8 * self.values.len());
        out.push(self.kind as u8);
        out.push(self.party);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 18 {
            return Err(Error::Decode("peer batch truncated".into()));
        }
        let kind = PeerKind::from_u8(bytes[0])?;
        let party = bytes[1];
        let step = u64::from_le_bytes(bytes[2..10].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
        if bytes.len() != 18 + 8 * count {
            return Err(Error::Decode("peer batch length mismatch".into()));
        }
        let values = bytes[18..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(PeerBatch { kind, party, step, values })
    }
}

/// Abort notice payload: a phase tag plus a human-readable reason.
pub fn abort_payload(phase: &str, reason: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + phase.len() + reason.len());
    out.push(phase.len() as u8);
    out.extend_from_slice(phase.as_bytes());
    out.extend_from_slice(reason.as_bytes());
    out
}

pub fn parse_abort(payload: &[u8]) -> (String, String) {
    if payload.is_empty() {
        return ("unknown".into(), String::new());
    }
    let plen = payload[0] as usize;
    if payload.len() < 1 + plen {
        return ("unknown".into(), String::new());
    }
    let phase = String::from_utf8_lossy(&payload[1..1 + plen]).into_owned();
    let reason = String::from_utf8_lossy(&payload[1 + plen..]).into_owned();
    (phase, reason)
}

/// Byte and round accounting for one link direction pair.
#[derive(Debug, Default, Clone)]
pub struct Meter {
    pub bytes_out: u64,
    pub bytes_in: u64,
    /// Payload bytes per message type, outgoing.
    pub payload_out: HashMap<u8, u64>,
    pub payload_in: HashMap<u8, u64>,
    /// Completed request/response (or symmetric exchange) cycles.
    pub rounds: u64,
}

impl Meter {
    pub fn record_out(&mut self, frame: &Frame) {
        self.bytes_out += frame.wire_len();
        *self.payload_out.entry(frame.mtype as u8).or_default() += frame.payload.len() as u64;
    }

    pub fn record_in(&mut self, frame: &Frame) {
        self.bytes_in += frame.wire_len();
        *self.payload_in.entry(frame.mtype as u8).or_default() += frame.payload.len() as u64;
    }

    pub fn bump_round(&mut self) {
        self.rounds += 1;
    }

    pub fn payload_out_of(&self, t: MsgType) -> u64 {
        self.payload_out.get(&(t as u8)).copied().unwrap_or(0)
    }

    pub fn payload_in_of(&self, t: MsgType) -> u64 {
        self.payload_in.get(&(t as u8)).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let f = Frame::new(MsgType::CountShare, [7u8; 16], vec![1, 2, 3]);
        let mut buf = Vec::new();
        write_frame(&mut buf, &f).unwrap();
        assert_eq!(buf.len() as u64, f.wire_len());
        let back = read_frame(&mut buf.as_slice()).unwrap();
        assert_eq!(back.mtype, f.mtype);
        assert_eq!(back.qid, f.qid);
        assert_eq!(back.payload, f.payload);
    }

    #[test]
    fn bad_frames_rejected() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &Frame::new(MsgType::Abort, [0u8; 16], vec![])).unwrap();
        buf[4] = 99; // unknown type
        assert!(read_frame(&mut buf.as_slice()).is_err());
        let short = [1u8, 0, 0, 0, 1];
        assert!(read_frame(&mut short.as_slice()).is_err());
    }

    #[test]
    fn peer_batch_roundtrip() {
        let b = PeerBatch { kind: PeerKind::GateMask, party: 1, step: 3, values: vec![9, 8, 7] };
        let back = PeerBatch::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(back, b);
        assert!(PeerBatch::from_bytes(&b.to_bytes()[..5]).is_err());
    }

    #[test]
    fn abort_roundtrip() {
        let p = abort_payload("binary-check", "element 3 not in {0,1}");
        let (phase, reason) = parse_abort(&p);
        assert_eq!(phase, "binary-check");
        assert!(reason.contains("element 3"));
    }
}
