//! TCP transport: one thread per node and one for the mediator, one
//! connection per ordered pair of endpoints, length-prefixed JSON frames.
//!
//! Termination is detected by the driver: every frame is counted as in
//! flight from the moment it is written until its receiver has finished
//! handling it (including writing any replies), and every endpoint bumps a
//! shared activity counter on each step. The group is done once all nodes
//! have exhausted their input and are running, nothing is in flight, and no
//! activity happened while those checks were made.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::data::{ConfigError, KeyValues};
use crate::ec::Interpretation;
use crate::node::LearnerNode;
use crate::protocol::{encode, read_frame, Addr, Envelope, Mediator};

use super::{finish, GroupRun, Metrics, RunError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot resolve {0}")]
    Address(String),
    #[error("topology lists {listed} nodes but the run uses {wanted}")]
    NodeCount { listed: usize, wanted: usize },
}

/// Listen addresses for one group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupAddrs {
    pub nodes: Vec<SocketAddr>,
    pub mediator: SocketAddr,
}

/// `nodes = [host:port, ...]`, `mediator = host:port`, and optionally
/// `termination_nodes` / `termination_mediator` for the second group. A
/// group without addresses binds ephemeral localhost ports.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    pub initiation: Option<GroupAddrs>,
    pub termination: Option<GroupAddrs>,
}

fn resolve(s: &str) -> Result<SocketAddr, TopologyError> {
    s.to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| TopologyError::Address(s.to_string()))
}

impl Topology {
    pub fn parse(src: &str) -> Result<Topology, TopologyError> {
        let kv = KeyValues::parse(src)?;
        kv.check_keys(&["nodes", "mediator", "termination_nodes", "termination_mediator"])?;
        let group = |n: &str, m: &str| -> Result<Option<GroupAddrs>, TopologyError> {
            match (kv.list(n), kv.raw(m)) {
                (None, None) => Ok(None),
                (Some(nodes), Some(med)) => Ok(Some(GroupAddrs {
                    nodes: nodes.iter().map(|s| resolve(s)).collect::<Result<_, _>>()?,
                    mediator: resolve(med)?,
                })),
                (None, _) => Err(ConfigError::Missing(n.to_string()).into()),
                (_, None) => Err(ConfigError::Missing(m.to_string()).into()),
            }
        };
        Ok(Topology {
            initiation: group("nodes", "mediator")?,
            termination: group("termination_nodes", "termination_mediator")?,
        })
    }

    pub fn check(&self, k: usize) -> Result<(), TopologyError> {
        for g in [&self.initiation, &self.termination].into_iter().flatten() {
            if g.nodes.len() != k {
                return Err(TopologyError::NodeCount {
                    listed: g.nodes.len(),
                    wanted: k,
                });
            }
        }
        Ok(())
    }
}

struct Shared {
    in_flight: AtomicI64,
    activity: AtomicU64,
    stop: AtomicBool,
    idle: Vec<AtomicBool>,
    metrics: Mutex<Metrics>,
    error: Mutex<Option<RunError>>,
}

impl Shared {
    fn fail(&self, e: RunError) {
        let mut slot = self.error.lock().expect("error slot");
        if slot.is_none() {
            *slot = Some(e);
        }
        self.stop.store(true, Ordering::SeqCst);
    }
}

struct Endpoint {
    directory: Arc<BTreeMap<Addr, SocketAddr>>,
    conns: BTreeMap<Addr, BufWriter<TcpStream>>,
    shared: Arc<Shared>,
}

impl Endpoint {
    fn send(&mut self, out: Vec<Envelope>) -> Result<(), RunError> {
        for env in out {
            let frame = encode(&env);
            self.shared.in_flight.fetch_add(1, Ordering::SeqCst);
            self.shared.metrics.lock().expect("metrics").record(&env, frame.len());
            let w = match self.conns.entry(env.to) {
                std::collections::btree_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::btree_map::Entry::Vacant(v) => {
                    let addr = self.directory[&env.to];
                    let s = TcpStream::connect(addr)?;
                    s.set_nodelay(true)?;
                    v.insert(BufWriter::new(s))
                }
            };
            w.write_all(&frame)?;
            w.flush()?;
        }
        Ok(())
    }

    fn done_with_input(&self) {
        self.shared.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn spawn_listener(listener: TcpListener, me: Addr, inbox: Sender<Envelope>, shared: Arc<Shared>) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        listener.set_nonblocking(true).expect("nonblocking listener");
        while !shared.stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false).expect("blocking stream");
                    let inbox = inbox.clone();
                    let shared = shared.clone();
                    thread::spawn(move || {
                        let mut r = BufReader::new(stream);
                        loop {
                            match read_frame(&mut r, me) {
                                Ok(Some(env)) => {
                                    if inbox.send(env).is_err() {
                                        break;
                                    }
                                }
                                Ok(None) => break,
                                Err(e) => {
                                    if !shared.stop.load(Ordering::SeqCst) {
                                        shared.fail(e.into());
                                    }
                                    break;
                                }
                            }
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(1)),
                Err(e) => {
                    shared.fail(e.into());
                    break;
                }
            }
        }
    })
}

fn node_loop(
    mut node: LearnerNode,
    stream: Vec<Interpretation>,
    inbox: Receiver<Envelope>,
    mut ep: Endpoint,
) -> (LearnerNode, usize) {
    let idx = node.id() as usize;
    let mut cursor = 0;
    let fail = |ep: &Endpoint, e: RunError| ep.shared.fail(e);
    while !ep.shared.stop.load(Ordering::SeqCst) {
        // protocol messages first, then at most one interpretation
        let mut handled = false;
        while let Ok(env) = inbox.try_recv() {
            handled = true;
            ep.shared.activity.fetch_add(1, Ordering::SeqCst);
            ep.shared.idle[idx].store(false, Ordering::SeqCst);
            let res = node.handle(env).map_err(|source| RunError::Node {
                node: idx as u32,
                source,
            });
            match res.and_then(|out| ep.send(out)) {
                Ok(()) => ep.done_with_input(),
                Err(e) => {
                    fail(&ep, e);
                    return (node, cursor);
                }
            }
        }
        if node.is_running() && cursor < stream.len() {
            ep.shared.activity.fetch_add(1, Ordering::SeqCst);
            cursor += 1;
            let res = node
                .process_interpretation(&stream[cursor - 1])
                .map_err(|source| RunError::Node {
                    node: idx as u32,
                    source,
                });
            if let Err(e) = res.and_then(|out| ep.send(out)) {
                fail(&ep, e);
                return (node, cursor);
            }
            continue;
        }
        ep.shared.idle[idx].store(node.is_running() && cursor >= stream.len(), Ordering::SeqCst);
        if !handled {
            match inbox.recv_timeout(Duration::from_millis(2)) {
                Ok(env) => {
                    ep.shared.activity.fetch_add(1, Ordering::SeqCst);
                    ep.shared.idle[idx].store(false, Ordering::SeqCst);
                    let res = node.handle(env).map_err(|source| RunError::Node {
                        node: idx as u32,
                        source,
                    });
                    match res.and_then(|out| ep.send(out)) {
                        Ok(()) => ep.done_with_input(),
                        Err(e) => {
                            fail(&ep, e);
                            return (node, cursor);
                        }
                    }
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
    }
    (node, cursor)
}

fn mediator_loop(mut mediator: Mediator, inbox: Receiver<Envelope>, mut ep: Endpoint) -> Mediator {
    while !ep.shared.stop.load(Ordering::SeqCst) {
        match inbox.recv_timeout(Duration::from_millis(2)) {
            Ok(env) => {
                ep.shared.activity.fetch_add(1, Ordering::SeqCst);
                let mut out = match mediator.handle(env) {
                    Ok(o) => o,
                    Err(e) => {
                        ep.shared.fail(RunError::Mediator(e));
                        break;
                    }
                };
                // drain everything already queued before granting
                let mut extra = 0;
                while let Ok(env) = inbox.try_recv() {
                    extra += 1;
                    match mediator.handle(env) {
                        Ok(o) => out.extend(o),
                        Err(e) => {
                            ep.shared.fail(RunError::Mediator(e));
                            return mediator;
                        }
                    }
                }
                out.extend(mediator.tick());
                if let Err(e) = ep.send(out) {
                    ep.shared.fail(e);
                    break;
                }
                for _ in 0..=extra {
                    ep.done_with_input();
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    mediator
}

fn bind(addr: Option<SocketAddr>) -> Result<TcpListener, RunError> {
    let a = addr.unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 0)));
    TcpListener::bind(a).map_err(|e| RunError::Transport(format!("bind {a}: {e}")))
}

/// Runs one group with every endpoint talking over TCP.
pub fn run_group_socket(
    nodes: Vec<LearnerNode>,
    streams: &[Vec<Interpretation>],
    mediator_seed: u64,
    addrs: Option<&GroupAddrs>,
) -> Result<GroupRun, RunError> {
    super::check_ids(&nodes, streams);
    let k = nodes.len();
    let mut listeners = BTreeMap::new();
    for i in 0..k {
        listeners.insert(Addr::Node(i as u32), bind(addrs.map(|a| a.nodes[i]))?);
    }
    listeners.insert(Addr::Mediator, bind(addrs.map(|a| a.mediator))?);
    let directory: Arc<BTreeMap<Addr, SocketAddr>> = Arc::new(
        listeners
            .iter()
            .map(|(a, l)| Ok((*a, l.local_addr()?)))
            .collect::<Result<_, std::io::Error>>()?,
    );
    let shared = Arc::new(Shared {
        in_flight: AtomicI64::new(0),
        activity: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        idle: (0..k).map(|_| AtomicBool::new(false)).collect(),
        metrics: Mutex::new(Metrics::default()),
        error: Mutex::new(None),
    });
    let endpoint = || Endpoint {
        directory: directory.clone(),
        conns: BTreeMap::new(),
        shared: shared.clone(),
    };

    let mut accept_threads = Vec::new();
    let mut inboxes = BTreeMap::new();
    for (addr, l) in listeners {
        let (tx, rx) = mpsc::channel();
        accept_threads.push(spawn_listener(l, addr, tx, shared.clone()));
        inboxes.insert(addr, rx);
    }

    let med_inbox = inboxes.remove(&Addr::Mediator).expect("mediator inbox");
    let med_ep = endpoint();
    let med_thread = thread::spawn(move || mediator_loop(Mediator::new(k as u32, mediator_seed), med_inbox, med_ep));
    let mut node_threads = Vec::new();
    for (node, stream) in nodes.into_iter().zip(streams.iter().cloned()) {
        let me = Addr::Node(node.id());
        let inbox = inboxes.remove(&me).expect("node inbox");
        let ep = endpoint();
        node_threads.push(thread::spawn(move || node_loop(node, stream, inbox, ep)));
    }

    // quiescence detection
    loop {
        thread::sleep(Duration::from_millis(2));
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let before = shared.activity.load(Ordering::SeqCst);
        let idle = shared.idle.iter().all(|b| b.load(Ordering::SeqCst));
        let quiet = shared.in_flight.load(Ordering::SeqCst) == 0;
        let after = shared.activity.load(Ordering::SeqCst);
        if idle && quiet && before == after {
            shared.stop.store(true, Ordering::SeqCst);
            break;
        }
    }

    let mut finished = Vec::with_capacity(k);
    let mut cursors = Vec::with_capacity(k);
    for t in node_threads {
        let (n, c) = t.join().map_err(|_| RunError::Transport("node thread panicked".into()))?;
        finished.push(n);
        cursors.push(c);
    }
    let mediator = med_thread
        .join()
        .map_err(|_| RunError::Transport("mediator thread panicked".into()))?;
    for t in accept_threads {
        let _ = t.join();
    }
    if let Some(e) = shared.error.lock().expect("error slot").take() {
        return Err(e);
    }
    finish(&finished, &cursors, streams)?;
    let metrics = shared.metrics.lock().expect("metrics").clone();
    Ok(GroupRun {
        nodes: finished,
        metrics,
        grants: mediator.grants,
        abandoned: mediator.abandoned,
        quiescent_points: 1,
    })
}
