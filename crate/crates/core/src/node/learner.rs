use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Bound;
use std::sync::Arc;

use crate::clause::{construct_bottom, Clause, ClauseError, ClauseId, HeadKind, ModeSet, Seed};
use crate::ec::{CoverError, Interpretation, Term};
use crate::protocol::{
    Addr, Envelope, Message, Outbox, Outcome, PeerLedger, ProtocolError, Purpose, SeqCheck, WireClause, PARENT,
};
use crate::scoring::{hoeffding_decision, should_prune, ClauseStats, Decision, HoeffdingParams, SpecializationHistory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NodeError {
    #[error("node {0} is blocked and cannot consume input")]
    Blocked(u32),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Clause(#[from] ClauseError),
}

/// Which learning steps run; the count-merge checks switch off everything
/// that changes the theory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LearnFlags {
    pub generate: bool,
    pub specialize: bool,
    pub prune: bool,
}

impl Default for LearnFlags {
    fn default() -> Self {
        LearnFlags {
            generate: true,
            specialize: true,
            prune: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub id: u32,
    pub nodes: u32,
    pub kind: HeadKind,
    pub modes: Arc<ModeSet>,
    pub params: HoeffdingParams,
    pub flags: LearnFlags,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Phase {
    Running,
    AwaitingStats(ClauseId, Purpose),
    AwaitingVerdict(ClauseId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrunedClause {
    pub id: ClauseId,
    pub version: u32,
    pub kind: HeadKind,
    pub seed: Seed,
    pub rendered: String,
    /// Combined counts at removal time.
    pub stats: ClauseStats,
}

#[derive(Clone, Debug)]
enum Reply {
    Stats {
        parent: ClauseStats,
        refinements: BTreeMap<String, ClauseStats>,
    },
    Prune {
        stats: ClauseStats,
        stable_since: u64,
    },
}

#[derive(Clone, Debug)]
struct OwnRequest {
    id: ClauseId,
    version: u32,
    purpose: Purpose,
    granted: bool,
    replies: BTreeMap<u32, Reply>,
}

#[derive(Clone, Copy)]
enum Counter {
    Tp,
    Fp,
    Fn,
}

fn bump(s: &mut ClauseStats, c: Counter) {
    match c {
        Counter::Tp => s.tp += 1,
        Counter::Fp => s.fp += 1,
        Counter::Fn => s.fn_ += 1,
    }
}

/// Reward/penalty for a firing at `T`, given whether the fluent is annotated
/// at `T` and at `T+1`.
fn reward(kind: HeadKind, held: bool, holds_next: bool) -> Option<Counter> {
    match kind {
        HeadKind::Initiation => Some(if holds_next { Counter::Tp } else { Counter::Fp }),
        HeadKind::Termination if holds_next => Some(Counter::Fn),
        HeadKind::Termination if held => Some(Counter::Tp),
        HeadKind::Termination => None,
    }
}

/// Whether an uncovered instance at `T` calls for a new clause.
fn triggers(kind: HeadKind, held: bool, holds_next: bool) -> bool {
    match kind {
        HeadKind::Initiation => holds_next && !held,
        HeadKind::Termination => held && !holds_next,
    }
}

/// One learner of one head kind on one node.
#[derive(Debug)]
pub struct LearnerNode {
    cfg: NodeConfig,
    clauses: BTreeMap<ClauseId, Clause>,
    next_seq: u32,
    history: SpecializationHistory,
    ledger: PeerLedger,
    own: Option<OwnRequest>,
    awaiting: BTreeSet<ClauseId>,
    pending: VecDeque<Envelope>,
    cursor: Option<ClauseId>,
    seq: SeqCheck,
    outbox: Outbox,
    pruned: Vec<PrunedClause>,
    processed: u64,
}

impl LearnerNode {
    pub fn new(cfg: NodeConfig) -> Self {
        let outbox = Outbox::new(Addr::Node(cfg.id));
        LearnerNode {
            cfg,
            clauses: BTreeMap::new(),
            next_seq: 0,
            history: SpecializationHistory::default(),
            ledger: PeerLedger::default(),
            own: None,
            awaiting: BTreeSet::new(),
            pending: VecDeque::new(),
            cursor: None,
            seq: SeqCheck::default(),
            outbox,
            pruned: Vec::new(),
            processed: 0,
        }
    }

    /// Starts from a fixed set of clauses (fresh statistics).
    pub fn with_clauses(cfg: NodeConfig, clauses: impl IntoIterator<Item = Clause>) -> Self {
        let mut n = LearnerNode::new(cfg);
        for c in clauses {
            n.clauses.insert(c.id, c);
        }
        n
    }

    pub fn id(&self) -> u32 {
        self.cfg.id
    }

    pub fn kind(&self) -> HeadKind {
        self.cfg.kind
    }

    pub fn phase(&self) -> Phase {
        if let Some(r) = &self.own {
            Phase::AwaitingStats(r.id, r.purpose)
        } else if let Some(id) = self.awaiting.iter().next() {
            Phase::AwaitingVerdict(*id)
        } else {
            Phase::Running
        }
    }

    pub fn is_running(&self) -> bool {
        self.own.is_none() && self.awaiting.is_empty()
    }

    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.values()
    }

    pub fn clause(&self, id: ClauseId) -> Option<&Clause> {
        self.clauses.get(&id)
    }

    pub fn signature(&self) -> BTreeSet<(ClauseId, String)> {
        self.clauses.values().map(Clause::signature).collect()
    }

    pub fn pruned(&self) -> &[PrunedClause] {
        &self.pruned
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn average_specialization_n(&self) -> Option<f64> {
        self.history.average()
    }

    fn peers(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.cfg.nodes).filter(move |&n| n != self.cfg.id)
    }

    fn broadcast(&mut self, msg: Message) {
        let peers: Vec<u32> = self.peers().collect();
        for p in peers {
            self.outbox.send(Addr::Node(p), msg.clone());
        }
    }

    /// Target fluents this learner scores in `interp`.
    fn fluents(&self, interp: &Interpretation) -> Vec<Term> {
        let modes = &self.cfg.modes;
        let domains = modes.type_domains(interp);
        let mut out: BTreeSet<Term> = modes.head_groundings(self.cfg.kind, &domains).into_iter().collect();
        for t in interp.start()..=interp.end() + 1 {
            out.extend(
                interp
                    .annotated_at(t)
                    .filter(|f| modes.head_for(self.cfg.kind, f).is_some())
                    .cloned(),
            );
        }
        out.into_iter().collect()
    }

    /// Counts one interpretation and runs the learning steps.
    pub fn process_interpretation(&mut self, interp: &Interpretation) -> Result<Vec<Envelope>, NodeError> {
        if !self.is_running() {
            return Err(NodeError::Blocked(self.cfg.id));
        }
        self.processed += 1;
        let kind = self.cfg.kind;
        let fluents = self.fluents(interp);
        let mut covered: BTreeSet<(i64, usize)> = BTreeSet::new();
        for c in self.clauses.values_mut() {
            let mut parent = ClauseStats::default();
            let mut refs = vec![ClauseStats::default(); c.refinements.len()];
            for t in interp.times() {
                for (fi, f) in fluents.iter().enumerate() {
                    let (fired, ref_fired) = c.fires_with_refinements(interp, f, t)?;
                    if !fired {
                        continue;
                    }
                    covered.insert((t, fi));
                    let held = interp.is_annotated(f, t);
                    let next = interp.is_annotated(f, t + 1);
                    if let Some(counter) = reward(kind, held, next) {
                        bump(&mut parent, counter);
                        for (s, hit) in refs.iter_mut().zip(ref_fired) {
                            if hit {
                                bump(s, counter);
                            }
                        }
                    }
                }
            }
            parent.e = 1;
            c.stats.add(&parent);
            c.local_stats.add(&parent);
            for (r, mut d) in c.refinements.values_mut().zip(refs) {
                d.e = 1;
                r.stats.add(&d);
                r.local.add(&d);
            }
            c.stable_since += 1;
        }
        if self.cfg.flags.generate {
            self.generate(interp, &fluents, &covered)?;
        }
        self.decide();
        Ok(self.outbox.take())
    }

    fn generate(
        &mut self,
        interp: &Interpretation,
        fluents: &[Term],
        covered: &BTreeSet<(i64, usize)>,
    ) -> Result<(), NodeError> {
        let kind = self.cfg.kind;
        for t in interp.times() {
            for (fi, f) in fluents.iter().enumerate() {
                let trig = triggers(kind, interp.is_annotated(f, t), interp.is_annotated(f, t + 1));
                if !trig || covered.contains(&(t, fi)) {
                    continue;
                }
                let bottom = construct_bottom(interp, t, f, kind, &self.cfg.modes)?;
                let id = ClauseId::new(self.cfg.id, self.next_seq);
                self.next_seq += 1;
                let seed = Seed {
                    interpretation: interp.id(),
                    time: t,
                    fluent: f.clone(),
                };
                let c = Clause::new(id, kind, Arc::new(bottom), seed);
                log::debug!("node {} new {} clause {id}: {}", self.cfg.id, kind.as_str(), c);
                self.broadcast(Message::AddNewClause {
                    clause: WireClause::from_clause(&c),
                });
                self.clauses.insert(id, c);
                return Ok(());
            }
        }
        Ok(())
    }

    fn local_prune(&self, c: &Clause) -> bool {
        self.cfg.flags.prune
            && should_prune(&c.stats, c.kind, c.stable_since, self.history.average(), &self.cfg.params)
    }

    fn local_specialize(&self, c: &Clause) -> Option<String> {
        if !self.cfg.flags.specialize {
            return None;
        }
        match hoeffding_decision(c, &self.cfg.params) {
            Decision::Specialize(key) => Some(key),
            Decision::Keep => None,
        }
    }

    fn decide(&mut self) {
        if self.cfg.nodes <= 1 {
            let ids: Vec<ClauseId> = self.clauses.keys().copied().collect();
            for id in ids {
                let c = &self.clauses[&id];
                if let Some(key) = self.local_specialize(c) {
                    let new = c.specialize(&key, c.stats.e).expect("candidate key from own refinements");
                    self.install(new);
                } else if self.local_prune(c) {
                    self.remove(id, true);
                }
            }
            return;
        }
        if self.own.is_some() {
            return;
        }
        // Round-robin start so one clause cannot starve the rest.
        let ids: Vec<ClauseId> = match self.cursor {
            Some(cur) => self
                .clauses
                .range((Bound::Excluded(cur), Bound::Unbounded))
                .chain(self.clauses.range(..=cur))
                .map(|(k, _)| *k)
                .collect(),
            None => self.clauses.keys().copied().collect(),
        };
        for id in ids {
            let c = &self.clauses[&id];
            let purpose = if self.local_specialize(c).is_some() {
                Purpose::Specialize
            } else if self.local_prune(c) {
                Purpose::Prune
            } else {
                continue;
            };
            let (version, requester) = (c.version, self.cfg.id);
            let msg = match purpose {
                Purpose::Specialize => Message::SpecializeRequest { id, version, requester },
                Purpose::Prune => Message::PruneRequest { id, version, requester },
            };
            self.outbox.send(Addr::Mediator, msg);
            self.own = Some(OwnRequest {
                id,
                version,
                purpose,
                granted: false,
                replies: BTreeMap::new(),
            });
            self.cursor = Some(id);
            return;
        }
    }

    fn install(&mut self, c: Clause) {
        self.history.record(c.specialized_at);
        self.ledger.forget(c.id);
        log::debug!("node {} {} -> {}", self.cfg.id, c.id, c);
        self.clauses.insert(c.id, c);
    }

    fn remove(&mut self, id: ClauseId, log_it: bool) -> bool {
        self.ledger.forget(id);
        match self.clauses.remove(&id) {
            Some(c) => {
                if log_it {
                    log::debug!("node {} pruned {}: {}", self.cfg.id, id, c);
                    self.pruned.push(PrunedClause {
                        id,
                        version: c.version,
                        kind: c.kind,
                        seed: c.seed.clone(),
                        rendered: c.render(),
                        stats: c.stats,
                    });
                }
                true
            }
            None => false,
        }
    }

    /// Handles one inbound protocol message. Messages are processed on
    /// arrival whatever the phase; only stream consumption is gated.
    pub fn handle(&mut self, env: Envelope) -> Result<Vec<Envelope>, NodeError> {
        self.seq.accept(&env)?;
        let result = self.dispatch(env);
        let out = self.outbox.take();
        result.map(|_| out)
    }

    fn dispatch(&mut self, env: Envelope) -> Result<(), NodeError> {
        let from = env.from;
        match env.msg {
            Message::AddNewClause { clause } => {
                let c = clause.to_clause().map_err(ProtocolError::from)?;
                self.clauses.entry(c.id).or_insert(c);
                self.drain_pending()?;
            }
            Message::SpecializeRequest { .. } | Message::PruneRequest { .. } => {
                if !self.try_answer(&env.msg)? {
                    self.pending.push_back(Envelope { msg: env.msg, ..env });
                }
            }
            Message::StatsReply {
                id,
                version,
                parent,
                refinements,
                responder,
            } => {
                self.store_reply(id, version, responder, Reply::Stats { parent, refinements }, from)?;
                self.try_decide()?;
            }
            Message::PruneStatsReply {
                id,
                version,
                stats,
                stable_since,
                responder,
            } => {
                self.store_reply(id, version, responder, Reply::Prune { stats, stable_since }, from)?;
                self.try_decide()?;
            }
            Message::MediatorGrant { requester, id, .. } => {
                match self.own.as_mut() {
                    Some(r) if r.id == id && requester == self.cfg.id => r.granted = true,
                    _ => {
                        return Err(ProtocolError::Unexpected {
                            msg: "MediatorGrant",
                            from,
                        }
                        .into())
                    }
                }
                self.try_decide()?;
            }
            Message::Abandon { id, .. } => match &self.own {
                Some(r) if r.id == id && !r.granted => self.own = None,
                _ => return Err(ProtocolError::Unexpected { msg: "Abandon", from }.into()),
            },
            Message::Replace { id, clause } => {
                self.awaiting.remove(&id);
                if !self.clauses.contains_key(&id) {
                    return Err(ProtocolError::UnknownClause("Replace", id).into());
                }
                let c = clause.to_clause().map_err(ProtocolError::from)?;
                self.install(c);
                self.drain_pending()?;
            }
            Message::Proceed { id } => {
                self.awaiting.remove(&id);
                if !self.clauses.contains_key(&id) {
                    return Err(ProtocolError::UnknownClause("Proceed", id).into());
                }
            }
            Message::Remove { id } => {
                self.awaiting.remove(&id);
                if !self.remove(id, false) {
                    return Err(ProtocolError::UnknownClause("Remove", id).into());
                }
            }
            Message::MediatorDone { .. } => {
                return Err(ProtocolError::Unexpected {
                    msg: "MediatorDone",
                    from,
                }
                .into())
            }
        }
        Ok(())
    }

    /// Replies to a forwarded request if the clause is present at the
    /// requested version; otherwise the request waits for the clause.
    fn try_answer(&mut self, msg: &Message) -> Result<bool, NodeError> {
        let (id, version, requester, purpose) = match *msg {
            Message::SpecializeRequest { id, version, requester } => (id, version, requester, Purpose::Specialize),
            Message::PruneRequest { id, version, requester } => (id, version, requester, Purpose::Prune),
            _ => unreachable!("only requests are answered"),
        };
        let Some(c) = self.clauses.get(&id) else {
            return Ok(false);
        };
        if c.version != version {
            return Ok(false);
        }
        let reply = match purpose {
            Purpose::Specialize => Message::StatsReply {
                id,
                version,
                parent: c.local_stats,
                refinements: c.refinements.iter().map(|(k, r)| (k.clone(), r.local)).collect(),
                responder: self.cfg.id,
            },
            Purpose::Prune => Message::PruneStatsReply {
                id,
                version,
                stats: c.local_stats,
                stable_since: c.stable_since,
                responder: self.cfg.id,
            },
        };
        self.outbox.send(Addr::Node(requester), reply);
        self.awaiting.insert(id);
        Ok(true)
    }

    fn drain_pending(&mut self) -> Result<(), NodeError> {
        let queued = std::mem::take(&mut self.pending);
        for env in queued {
            if !self.try_answer(&env.msg)? {
                self.pending.push_back(env);
            }
        }
        Ok(())
    }

    fn store_reply(&mut self, id: ClauseId, version: u32, responder: u32, reply: Reply, from: Addr) -> Result<(), NodeError> {
        match self.own.as_mut() {
            Some(r) if r.id == id && r.version == version && !r.replies.contains_key(&responder) => {
                r.replies.insert(responder, reply);
                Ok(())
            }
            _ => Err(ProtocolError::Unexpected { msg: "stats reply", from }.into()),
        }
    }

    fn try_decide(&mut self) -> Result<(), NodeError> {
        let ready = self
            .own
            .as_ref()
            .is_some_and(|r| r.granted && r.replies.len() as u32 + 1 == self.cfg.nodes);
        if !ready {
            return Ok(());
        }
        let req = self.own.take().expect("checked above");
        let id = req.id;
        let Some(mut c) = self.clauses.remove(&id) else {
            return Err(ProtocolError::UnknownClause("decision", id).into());
        };
        let mut stable = c.stable_since;
        for (peer, reply) in &req.replies {
            match reply {
                Reply::Stats { parent, refinements } => {
                    self.ledger.merge(&mut c.stats, *peer, id, PARENT, *parent)?;
                    for (key, s) in refinements {
                        if let Some(r) = c.refinements.get_mut(key) {
                            self.ledger.merge(&mut r.stats, *peer, id, key, *s)?;
                        }
                    }
                }
                Reply::Prune { stats, stable_since } => {
                    self.ledger.merge(&mut c.stats, *peer, id, PARENT, *stats)?;
                    stable += stable_since;
                }
            }
        }
        let outcome = match req.purpose {
            Purpose::Specialize => match hoeffding_decision(&c, &self.cfg.params) {
                Decision::Specialize(key) => {
                    let new = c.specialize(&key, c.stats.e)?;
                    let version = new.version;
                    self.broadcast(Message::Replace {
                        id,
                        clause: WireClause::from_clause(&new),
                    });
                    self.clauses.insert(id, c);
                    self.install(new);
                    Outcome::Changed { version }
                }
                Decision::Keep => {
                    self.clauses.insert(id, c);
                    self.broadcast(Message::Proceed { id });
                    Outcome::Unchanged
                }
            },
            Purpose::Prune => {
                let prune = should_prune(&c.stats, c.kind, stable, self.history.average(), &self.cfg.params);
                self.clauses.insert(id, c);
                if prune {
                    self.broadcast(Message::Remove { id });
                    self.remove(id, true);
                    Outcome::Removed
                } else {
                    self.broadcast(Message::Proceed { id });
                    Outcome::Unchanged
                }
            }
        };
        self.outbox.send(
            Addr::Mediator,
            Message::MediatorDone {
                requester: self.cfg.id,
                id,
                outcome,
            },
        );
        Ok(())
    }
}
