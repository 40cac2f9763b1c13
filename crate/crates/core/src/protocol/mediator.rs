use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clause::ClauseId;

use super::{Addr, Envelope, Message, Outbox, Outcome, ProtocolError, Purpose, SeqCheck};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Request {
    pub requester: u32,
    pub id: ClauseId,
    pub version: u32,
    pub purpose: Purpose,
}

impl Request {
    fn message(&self) -> Message {
        match self.purpose {
            Purpose::Specialize => Message::SpecializeRequest {
                id: self.id,
                version: self.version,
                requester: self.requester,
            },
            Purpose::Prune => Message::PruneRequest {
                id: self.id,
                version: self.version,
                requester: self.requester,
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Fate {
    Version(u32),
    Removed,
}

/// Serializes specialize/prune rounds: one grant at a time, chosen at random
/// among the queued requests, relayed to every other node.
#[derive(Debug)]
pub struct Mediator {
    nodes: u32,
    rng: ChaCha8Rng,
    queue: Vec<Request>,
    granted: Option<Request>,
    fates: BTreeMap<ClauseId, Fate>,
    seq: SeqCheck,
    outbox: Outbox,
    pub grants: u64,
    pub abandoned: u64,
}

impl Mediator {
    pub fn new(nodes: u32, seed: u64) -> Self {
        Mediator {
            nodes,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: Vec::new(),
            granted: None,
            fates: BTreeMap::new(),
            seq: SeqCheck::default(),
            outbox: Outbox::new(Addr::Mediator),
            grants: 0,
            abandoned: 0,
        }
    }

    pub fn granted(&self) -> Option<&Request> {
        self.granted.as_ref()
    }

    pub fn queued(&self) -> &[Request] {
        &self.queue
    }

    pub fn is_idle(&self) -> bool {
        self.granted.is_none() && self.queue.is_empty()
    }

    fn stale(&self, r: &Request) -> bool {
        match self.fates.get(&r.id) {
            Some(Fate::Removed) => true,
            Some(Fate::Version(v)) => r.version < *v,
            None => false,
        }
    }

    fn abandon(&mut self, r: Request) {
        self.abandoned += 1;
        self.outbox.send(
            Addr::Node(r.requester),
            Message::Abandon {
                requester: r.requester,
                id: r.id,
            },
        );
    }

    pub fn handle(&mut self, env: Envelope) -> Result<Vec<Envelope>, ProtocolError> {
        self.seq.accept(&env)?;
        match env.msg {
            Message::SpecializeRequest { id, version, requester } => self.queue.push(Request {
                requester,
                id,
                version,
                purpose: Purpose::Specialize,
            }),
            Message::PruneRequest { id, version, requester } => self.queue.push(Request {
                requester,
                id,
                version,
                purpose: Purpose::Prune,
            }),
            Message::MediatorDone { requester, id, outcome } => {
                match self.granted {
                    Some(g) if g.requester == requester && g.id == id => {}
                    _ => return Err(ProtocolError::NotGranted(requester)),
                }
                self.granted = None;
                match outcome {
                    Outcome::Changed { version } => {
                        self.fates.insert(id, Fate::Version(version));
                    }
                    Outcome::Removed => {
                        self.fates.insert(id, Fate::Removed);
                    }
                    Outcome::Unchanged => {}
                }
                let (stale, keep): (Vec<Request>, Vec<Request>) =
                    std::mem::take(&mut self.queue).into_iter().partition(|r| self.stale(r));
                self.queue = keep;
                stale.into_iter().for_each(|r| self.abandon(r));
            }
            other => {
                return Err(ProtocolError::Unexpected {
                    msg: other.type_name(),
                    from: env.from,
                })
            }
        }
        Ok(self.outbox.take())
    }

    /// Grants one queued request if none is outstanding.
    pub fn tick(&mut self) -> Vec<Envelope> {
        while self.granted.is_none() && !self.queue.is_empty() {
            let i = self.rng.gen_range(0..self.queue.len());
            let r = self.queue.remove(i);
            if self.stale(&r) {
                self.abandon(r);
                continue;
            }
            self.grants += 1;
            self.granted = Some(r);
            self.outbox.send(
                Addr::Node(r.requester),
                Message::MediatorGrant {
                    requester: r.requester,
                    id: r.id,
                    purpose: r.purpose,
                },
            );
            for n in (0..self.nodes).filter(|&n| n != r.requester) {
                self.outbox.send(Addr::Node(n), r.message());
            }
        }
        self.outbox.take()
    }
}
