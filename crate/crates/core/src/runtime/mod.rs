//! Drivers that run one learner group (k nodes plus a mediator) over
//! partitioned streams, in process or over TCP.

mod socket;

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ec::Interpretation;
use crate::node::{LearnerNode, NodeError};
use crate::protocol::{encoded_len, Addr, CodecError, Envelope, Mediator, ProtocolError};

pub use socket::{run_group_socket, GroupAddrs, Topology, TopologyError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("node {node}: {source}")]
    Node { node: u32, source: NodeError },
    #[error("mediator: {0}")]
    Mediator(ProtocolError),
    #[error("no progress possible: {0}")]
    Deadlock(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl From<CodecError> for RunError {
    fn from(e: CodecError) -> Self {
        RunError::Transport(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Transport(e.to_string())
    }
}

/// Message counts and encoded sizes, in total and per message type.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub messages: u64,
    pub bytes: u64,
    pub by_type: BTreeMap<String, (u64, u64)>,
}

impl Metrics {
    pub fn record(&mut self, env: &Envelope, bytes: usize) {
        self.messages += 1;
        self.bytes += bytes as u64;
        let slot = self.by_type.entry(env.msg.type_name().to_string()).or_default();
        slot.0 += 1;
        slot.1 += bytes as u64;
    }

    pub fn count(&self, type_name: &str) -> u64 {
        self.by_type.get(type_name).map_or(0, |c| c.0)
    }

    pub fn merge(&mut self, other: &Metrics) {
        self.messages += other.messages;
        self.bytes += other.bytes;
        for (k, (n, b)) in &other.by_type {
            let slot = self.by_type.entry(k.clone()).or_default();
            slot.0 += n;
            slot.1 += b;
        }
    }
}

/// Final state of one group run.
#[derive(Debug)]
pub struct GroupRun {
    pub nodes: Vec<LearnerNode>,
    pub metrics: Metrics,
    pub grants: u64,
    pub abandoned: u64,
    pub quiescent_points: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Every running node consumes one interpretation (in parallel), then
    /// messages are delivered in FIFO order until the network is empty.
    Lockstep,
    /// A seeded random interleaving of input consumption, per-channel
    /// deliveries and mediator ticks.
    Random(u64),
}

struct Network {
    mediator: Mediator,
    metrics: Metrics,
}

impl Network {
    fn deliver(&mut self, nodes: &mut [LearnerNode], env: Envelope) -> Result<Vec<Envelope>, RunError> {
        match env.to {
            Addr::Mediator => self.mediator.handle(env).map_err(RunError::Mediator),
            Addr::Node(n) => nodes[n as usize]
                .handle(env)
                .map_err(|source| RunError::Node { node: n, source }),
        }
    }

    fn sent(&mut self, out: &[Envelope]) {
        for e in out {
            self.metrics.record(e, encoded_len(e));
        }
    }
}

fn check_ids(nodes: &[LearnerNode], streams: &[Vec<Interpretation>]) {
    assert_eq!(nodes.len(), streams.len(), "one stream per node");
    for (i, n) in nodes.iter().enumerate() {
        assert_eq!(n.id() as usize, i, "nodes must be numbered 0..k in order");
    }
}

fn finish(nodes: &[LearnerNode], cursors: &[usize], streams: &[Vec<Interpretation>]) -> Result<(), RunError> {
    for (i, n) in nodes.iter().enumerate() {
        if !n.is_running() || cursors[i] < streams[i].len() {
            return Err(RunError::Deadlock(format!(
                "node {i} stuck in {:?} with {} interpretations left",
                n.phase(),
                streams[i].len() - cursors[i]
            )));
        }
    }
    Ok(())
}

/// Runs one group to stream exhaustion and quiescence in this process.
/// `observer` sees the nodes at every quiescent point.
pub fn run_group_inproc(
    mut nodes: Vec<LearnerNode>,
    streams: &[Vec<Interpretation>],
    mediator_seed: u64,
    schedule: Schedule,
    observer: &mut dyn FnMut(&[LearnerNode]),
) -> Result<GroupRun, RunError> {
    check_ids(&nodes, streams);
    let mut net = Network {
        mediator: Mediator::new(nodes.len() as u32, mediator_seed),
        metrics: Metrics::default(),
    };
    let mut cursors = vec![0usize; nodes.len()];
    let mut quiescent = 0;
    match schedule {
        Schedule::Lockstep => loop {
            let step = |((node, cur), stream): ((&mut LearnerNode, &mut usize), &Vec<Interpretation>)| {
                if node.is_running() && *cur < stream.len() {
                    *cur += 1;
                    let id = node.id();
                    node.process_interpretation(&stream[*cur - 1])
                        .map_err(|source| RunError::Node { node: id, source })
                } else {
                    Ok(Vec::new())
                }
            };
            // a one-thread pool only adds a hand-off per step
            let outs: Vec<Result<Vec<Envelope>, RunError>> = if rayon::current_num_threads() > 1 {
                nodes.par_iter_mut().zip(cursors.par_iter_mut()).zip(streams.par_iter()).map(step).collect()
            } else {
                nodes.iter_mut().zip(cursors.iter_mut()).zip(streams.iter()).map(step).collect()
            };
            let mut queue = VecDeque::new();
            for o in outs {
                let o = o?;
                net.sent(&o);
                queue.extend(o);
            }
            loop {
                while let Some(env) = queue.pop_front() {
                    let out = net.deliver(&mut nodes, env)?;
                    net.sent(&out);
                    queue.extend(out);
                }
                let out = net.mediator.tick();
                if out.is_empty() {
                    break;
                }
                net.sent(&out);
                queue.extend(out);
            }
            if let Some(n) = nodes.iter().find(|n| !n.is_running()) {
                return Err(RunError::Deadlock(format!("node {} blocked in {:?} with an empty network", n.id(), n.phase())));
            }
            quiescent += 1;
            observer(&nodes);
            if cursors.iter().zip(streams).all(|(c, s)| *c >= s.len()) {
                break;
            }
        },
        Schedule::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut channels: BTreeMap<(Addr, Addr), VecDeque<Envelope>> = BTreeMap::new();
            enum Step {
                Consume(usize),
                Deliver((Addr, Addr)),
                Tick,
            }
            loop {
                let mut options = Vec::new();
                for (i, n) in nodes.iter().enumerate() {
                    if n.is_running() && cursors[i] < streams[i].len() {
                        options.push(Step::Consume(i));
                    }
                }
                for (k, q) in &channels {
                    if !q.is_empty() {
                        options.push(Step::Deliver(*k));
                    }
                }
                if net.mediator.granted().is_none() && !net.mediator.queued().is_empty() {
                    options.push(Step::Tick);
                }
                if options.is_empty() {
                    break;
                }
                let out = match options.swap_remove(rng.gen_range(0..options.len())) {
                    Step::Consume(i) => {
                        cursors[i] += 1;
                        nodes[i]
                            .process_interpretation(&streams[i][cursors[i] - 1])
                            .map_err(|source| RunError::Node { node: i as u32, source })?
                    }
                    Step::Deliver(k) => {
                        let env = channels.get_mut(&k).and_then(VecDeque::pop_front).expect("non-empty channel");
                        net.deliver(&mut nodes, env)?
                    }
                    Step::Tick => net.mediator.tick(),
                };
                net.sent(&out);
                for e in out {
                    channels.entry((e.from, e.to)).or_default().push_back(e);
                }
                if channels.values().all(VecDeque::is_empty)
                    && net.mediator.is_idle()
                    && nodes.iter().all(LearnerNode::is_running)
                {
                    quiescent += 1;
                    observer(&nodes);
                }
            }
        }
    }
    finish(&nodes, &cursors, streams)?;
    Ok(GroupRun {
        nodes,
        grants: net.mediator.grants,
        abandoned: net.mediator.abandoned,
        metrics: net.metrics,
        quiescent_points: quiescent,
    })
}
