//! Message vocabulary, wire codec, count ledgers and the mediator.

mod codec;
mod ledger;
mod mediator;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clause::{BottomClause, Clause, ClauseId, HeadKind, Seed};
use crate::ec::{parse_atom, parse_term, ParseError};
use crate::scoring::ClauseStats;

pub use codec::{decode, decode_frame, encode, encoded_len, read_frame, write_frame, CodecError, WIRE_VERSION};
pub use ledger::{merge_counts, PeerLedger, PARENT};
pub use mediator::{Mediator, Request};

/// A protocol endpoint: a learner node or the mediator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Addr {
    Node(u32),
    Mediator,
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addr::Node(n) => write!(f, "node{n}"),
            Addr::Mediator => f.write_str("mediator"),
        }
    }
}

impl std::str::FromStr for Addr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "mediator" {
            return Ok(Addr::Mediator);
        }
        s.strip_prefix("node")
            .and_then(|n| n.parse().ok())
            .map(Addr::Node)
            .ok_or_else(|| format!("bad endpoint {s:?}"))
    }
}

impl Serialize for Addr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Addr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Specialize,
    Prune,
}

/// What a granted round did to the clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Outcome {
    Changed { version: u32 },
    Removed,
    Unchanged,
}

/// Clause as carried on the wire: literals as canonical strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireClause {
    pub id: ClauseId,
    pub version: u32,
    pub kind: HeadKind,
    pub body: Vec<String>,
    pub bottom_head: String,
    pub bottom: Vec<String>,
    pub seed_interpretation: u64,
    pub seed_time: i64,
    pub seed_fluent: String,
    pub specialized_at: u64,
}

impl WireClause {
    pub fn from_clause(c: &Clause) -> WireClause {
        WireClause {
            id: c.id,
            version: c.version,
            kind: c.kind,
            body: c.body.iter().map(|l| l.to_string()).collect(),
            bottom_head: c.bottom.head.to_string(),
            bottom: c.bottom.literals.iter().map(|l| l.to_string()).collect(),
            seed_interpretation: c.seed.interpretation,
            seed_time: c.seed.time,
            seed_fluent: c.seed.fluent.to_string(),
            specialized_at: c.specialized_at,
        }
    }

    /// Rebuilds the clause with zeroed statistics.
    pub fn to_clause(&self) -> Result<Clause, ParseError> {
        let bottom = BottomClause {
            head: parse_atom(&self.bottom_head)?,
            literals: self.bottom.iter().map(|s| parse_atom(s)).collect::<Result<_, _>>()?,
        };
        let body = self.body.iter().map(|s| parse_atom(s)).collect::<Result<_, _>>()?;
        let seed = Seed {
            interpretation: self.seed_interpretation,
            time: self.seed_time,
            fluent: parse_term(&self.seed_fluent)?,
        };
        Ok(Clause::with_body(
            self.id,
            self.version,
            self.kind,
            Arc::new(bottom),
            seed,
            body,
            self.specialized_at,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body")]
pub enum Message {
    AddNewClause {
        clause: WireClause,
    },
    SpecializeRequest {
        id: ClauseId,
        version: u32,
        requester: u32,
    },
    StatsReply {
        id: ClauseId,
        version: u32,
        parent: ClauseStats,
        refinements: BTreeMap<String, ClauseStats>,
        responder: u32,
    },
    Replace {
        id: ClauseId,
        clause: WireClause,
    },
    Proceed {
        id: ClauseId,
    },
    PruneRequest {
        id: ClauseId,
        version: u32,
        requester: u32,
    },
    PruneStatsReply {
        id: ClauseId,
        version: u32,
        stats: ClauseStats,
        stable_since: u64,
        responder: u32,
    },
    Remove {
        id: ClauseId,
    },
    MediatorGrant {
        requester: u32,
        id: ClauseId,
        purpose: Purpose,
    },
    MediatorDone {
        requester: u32,
        id: ClauseId,
        outcome: Outcome,
    },
    /// Mediator to a queued requester whose clause changed or vanished.
    Abandon {
        requester: u32,
        id: ClauseId,
    },
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::AddNewClause { .. } => "AddNewClause",
            Message::SpecializeRequest { .. } => "SpecializeRequest",
            Message::StatsReply { .. } => "StatsReply",
            Message::Replace { .. } => "Replace",
            Message::Proceed { .. } => "Proceed",
            Message::PruneRequest { .. } => "PruneRequest",
            Message::PruneStatsReply { .. } => "PruneStatsReply",
            Message::Remove { .. } => "Remove",
            Message::MediatorGrant { .. } => "MediatorGrant",
            Message::MediatorDone { .. } => "MediatorDone",
            Message::Abandon { .. } => "Abandon",
        }
    }

    pub fn clause_id(&self) -> Option<ClauseId> {
        match self {
            Message::AddNewClause { clause } => Some(clause.id),
            Message::SpecializeRequest { id, .. }
            | Message::StatsReply { id, .. }
            | Message::Replace { id, .. }
            | Message::Proceed { id }
            | Message::PruneRequest { id, .. }
            | Message::PruneStatsReply { id, .. }
            | Message::Remove { id }
            | Message::MediatorGrant { id, .. }
            | Message::MediatorDone { id, .. }
            | Message::Abandon { id, .. } => Some(*id),
        }
    }

    pub fn is_verdict(&self) -> bool {
        matches!(self, Message::Replace { .. } | Message::Proceed { .. } | Message::Remove { .. })
    }
}

/// A message in flight. `seq` increases strictly per sender.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub from: Addr,
    pub to: Addr,
    pub seq: u64,
    pub msg: Message,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("peer {peer} counters for {id}/{key} went backwards")]
    CountersBackwards { peer: u32, id: ClauseId, key: String },
    #[error("{0} for unknown clause {1}")]
    UnknownClause(&'static str, ClauseId),
    #[error("unexpected {msg} from {from}")]
    Unexpected { msg: &'static str, from: Addr },
    #[error("sequence number {seq} from {from} not above {last}")]
    OutOfOrder { from: Addr, seq: u64, last: u64 },
    #[error("MediatorDone from node {0} which holds no grant")]
    NotGranted(u32),
    #[error("bad clause in message: {0}")]
    BadClause(#[from] ParseError),
}

/// Tracks the last sequence number seen from every sender.
#[derive(Clone, Debug, Default)]
pub struct SeqCheck(BTreeMap<Addr, u64>);

impl SeqCheck {
    pub fn accept(&mut self, env: &Envelope) -> Result<(), ProtocolError> {
        match self.0.get(&env.from) {
            Some(&last) if env.seq <= last => Err(ProtocolError::OutOfOrder {
                from: env.from,
                seq: env.seq,
                last,
            }),
            _ => {
                self.0.insert(env.from, env.seq);
                Ok(())
            }
        }
    }
}

/// Outbound message builder with a per-sender sequence counter.
#[derive(Clone, Debug)]
pub struct Outbox {
    pub from: Addr,
    next_seq: u64,
    pub queued: Vec<Envelope>,
}

impl Outbox {
    pub fn new(from: Addr) -> Self {
        Outbox {
            from,
            next_seq: 1,
            queued: Vec::new(),
        }
    }

    pub fn send(&mut self, to: Addr, msg: Message) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queued.push(Envelope {
            from: self.from,
            to,
            seq,
            msg,
        });
    }

    pub fn take(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.queued)
    }
}
