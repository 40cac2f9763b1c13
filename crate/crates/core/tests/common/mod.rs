#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use ecl_core::clause::{construct_bottom, Clause, ClauseId, HeadKind, ModeSet, Seed};
use ecl_core::data::{default_modes, parse_stream};
use ecl_core::ec::{parse_term, sym, Interpretation};
use ecl_core::node::{LearnFlags, LearnerNode, NodeConfig};
use ecl_core::protocol::{encoded_len, Addr, Envelope, Mediator};
use ecl_core::runtime::Metrics;
use ecl_core::scoring::{ClauseStats, HoeffdingParams};

pub const TABLE_2A: &str = "\
happensAt(walk(id1),1).
happensAt(walk(id2),1).
holdsAt(coords(id1,201,454),1).
holdsAt(coords(id2,230,440),1).
holdsAt(direction(id1,270),1).
holdsAt(direction(id2,270),1).
happensAt(walk(id1),2).
happensAt(walk(id2),2).
holdsAt(coords(id1,201,454),2).
holdsAt(coords(id2,227,440),2).
holdsAt(direction(id1,275),2).
holdsAt(direction(id2,278),2).
holdsAt(moving(id1,id2),2).
";

pub fn targets() -> BTreeSet<ecl_core::ec::Sym> {
    [sym("moving")].into_iter().collect()
}

/// The excerpt cut into one interpretation per time point.
pub fn table_2a() -> Vec<Interpretation> {
    parse_stream(TABLE_2A, 1, &targets()).unwrap()
}

pub fn modes() -> Arc<ModeSet> {
    Arc::new(default_modes())
}

pub fn node_cfg(id: u32, nodes: u32, kind: HeadKind, flags: LearnFlags) -> NodeConfig {
    NodeConfig {
        id,
        nodes,
        kind,
        modes: modes(),
        params: HoeffdingParams::default(),
        flags,
    }
}

pub const FROZEN: LearnFlags = LearnFlags {
    generate: false,
    specialize: false,
    prune: false,
};

pub const NO_GENERATE: LearnFlags = LearnFlags {
    generate: false,
    specialize: true,
    prune: true,
};

/// Empty-bodied clause whose bottom comes from the first Table 2(a) window.
pub fn table_clause(id: ClauseId, kind: HeadKind) -> Clause {
    let interp = &table_2a()[0];
    let fluent = parse_term("moving(id1,id2)").unwrap();
    let bottom = construct_bottom(interp, 1, &fluent, kind, &modes()).unwrap();
    let seed = Seed {
        interpretation: 0,
        time: 1,
        fluent,
    };
    Clause::new(id, kind, Arc::new(bottom), seed)
}

/// A clause whose best candidate beats the runner-up by a wide margin.
pub fn ready_to_specialize(mut c: Clause) -> Clause {
    let parent = ClauseStats::new(500, 500, 0, 1000);
    c.stats = parent;
    c.local_stats = parent;
    for (i, r) in c.refinements.values_mut().enumerate() {
        let s = if i == 0 {
            ClauseStats::new(450, 50, 0, 1000)
        } else {
            ClauseStats::new(300, 200, 0, 1000)
        };
        r.stats = s;
        r.local = s;
    }
    c
}

/// A clause that scores zero, has been stable for a long time, and whose
/// candidates are all worse.
pub fn ready_to_prune(mut c: Clause) -> Clause {
    let s = ClauseStats::new(0, 100, 0, 1000);
    c.stats = s;
    c.local_stats = s;
    for r in c.refinements.values_mut() {
        r.stats = ClauseStats::new(0, 200, 0, 1000);
        r.local = r.stats;
    }
    c.stable_since = 1_000_000;
    c
}

/// A tiny in-process network: FIFO delivery, mediator ticked whenever the
/// queue runs dry.
pub struct Net {
    pub nodes: Vec<LearnerNode>,
    pub mediator: Mediator,
    pub queue: VecDeque<Envelope>,
    pub metrics: Metrics,
    pub log: Vec<Envelope>,
}

impl Net {
    pub fn new(nodes: Vec<LearnerNode>, seed: u64) -> Self {
        let k = nodes.len() as u32;
        Net {
            nodes,
            mediator: Mediator::new(k, seed),
            queue: VecDeque::new(),
            metrics: Metrics::default(),
            log: Vec::new(),
        }
    }

    pub fn post(&mut self, out: Vec<Envelope>) {
        for e in out {
            self.metrics.record(&e, encoded_len(&e));
            self.log.push(e.clone());
            self.queue.push_back(e);
        }
    }

    pub fn consume(&mut self, node: usize, interp: &Interpretation) -> Vec<Envelope> {
        let out = self.nodes[node].process_interpretation(interp).unwrap();
        self.post(out.clone());
        out
    }

    pub fn pump(&mut self) {
        loop {
            while let Some(env) = self.queue.pop_front() {
                let out = match env.to {
                    Addr::Mediator => self.mediator.handle(env).unwrap(),
                    Addr::Node(n) => self.nodes[n as usize].handle(env).unwrap(),
                };
                self.post(out);
            }
            let out = self.mediator.tick();
            if out.is_empty() {
                break;
            }
            self.post(out);
        }
    }
}
