//! End-to-end runs: learning with both learner groups, evaluation, and
//! cross-validation, plus report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use crate::clause::{Clause, ClauseId, HeadKind, ModeSet};
use crate::data::{partition, KeyValues};
use crate::ec::{CoverError, Interpretation};
use crate::node::{classify_stream, Confusion, LearnFlags, LearnerNode, NodeConfig, PrunedClause, Theory};
use crate::runtime::{run_group_inproc, run_group_socket, GroupRun, Metrics, RunError, Schedule, Topology};
use crate::scoring::HoeffdingParams;

#[derive(Clone, Debug)]
pub enum Transport {
    InProcess(Schedule),
    Socket(Topology),
}

#[derive(Clone, Debug)]
pub struct LearnSettings {
    pub nodes: u32,
    pub params: HoeffdingParams,
    pub flags: LearnFlags,
    pub transport: Transport,
    /// Seeds the mediators' grant order.
    pub seed: u64,
}

impl Default for LearnSettings {
    fn default() -> Self {
        LearnSettings {
            nodes: 1,
            params: HoeffdingParams::default(),
            flags: LearnFlags::default(),
            transport: Transport::InProcess(Schedule::Lockstep),
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Cover(#[from] CoverError),
}

impl ExperimentError {
    pub fn is_transport(&self) -> bool {
        matches!(self, ExperimentError::Run(RunError::Transport(_)))
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub training_seconds: f64,
    /// Counts of the final theory on the training stream (or on the test
    /// folds for cross-validation).
    pub counts: Confusion,
    pub f1: f64,
    pub theory_size_literals: usize,
    pub metrics: Metrics,
    pub final_theory: Theory,
    pub pruned: Vec<PrunedClause>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("training_seconds", format!("{:.6}", self.training_seconds));
        kv.insert("f1", format!("{:.6}", self.f1));
        kv.insert("tp", self.counts.tp);
        kv.insert("fp", self.counts.fp);
        kv.insert("fn", self.counts.fn_);
        kv.insert("theory_clauses", self.final_theory.len());
        kv.insert("theory_size_literals", self.theory_size_literals);
        kv.insert("messages_sent", self.metrics.messages);
        kv.insert("message_bytes", self.metrics.bytes);
        for (t, (n, b)) in &self.metrics.by_type {
            kv.insert(&format!("messages.{t}"), n);
            kv.insert(&format!("bytes.{t}"), b);
        }
        kv.insert("pruned_clauses", self.pruned.len());
        kv
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "F1 {:.4} (tp {} fp {} fn {})\ntheory: {} clauses, {} literals\nmessages: {} ({} bytes)\ntime: {:.3} s\n",
            self.f1,
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.final_theory.len(),
            self.theory_size_literals,
            self.metrics.messages,
            self.metrics.bytes,
            self.training_seconds
        );
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

/// Runs the theory over the stream with the inferred state carried across
/// windows and sums the counts.
pub fn evaluate(theory: &Theory, stream: &[Interpretation], modes: &ModeSet) -> Result<Confusion, CoverError> {
    let mut total = Confusion::default();
    for c in classify_stream(theory, stream, modes)? {
        total.add(&c.counts);
    }
    Ok(total)
}

fn build_group(kind: HeadKind, modes: &Arc<ModeSet>, s: &LearnSettings) -> Vec<LearnerNode> {
    (0..s.nodes)
        .map(|id| {
            LearnerNode::new(NodeConfig {
                id,
                nodes: s.nodes,
                kind,
                modes: modes.clone(),
                params: s.params,
                flags: s.flags,
            })
        })
        .collect()
}

fn run_group(
    kind: HeadKind,
    streams: &[Vec<Interpretation>],
    modes: &Arc<ModeSet>,
    s: &LearnSettings,
) -> Result<GroupRun, RunError> {
    let nodes = build_group(kind, modes, s);
    let seed = s.seed.wrapping_mul(2).wrapping_add(kind as u64);
    match &s.transport {
        Transport::InProcess(schedule) => run_group_inproc(nodes, streams, seed, *schedule, &mut |_| {}),
        Transport::Socket(topo) => {
            let addrs = match kind {
                HeadKind::Initiation => topo.initiation.as_ref(),
                HeadKind::Termination => topo.termination.as_ref(),
            };
            run_group_socket(nodes, streams, seed, addrs)
        }
    }
}

/// Clauses of a finished group whose evaluation count, summed over all
/// replicas, reaches the warm-up threshold.
pub fn warmed_up_clauses(nodes: &[LearnerNode], warm_up: u64) -> Vec<Clause> {
    let mut global_e: BTreeMap<ClauseId, u64> = BTreeMap::new();
    for n in nodes {
        for c in n.clauses() {
            *global_e.entry(c.id).or_default() += c.local_stats.e;
        }
    }
    nodes
        .first()
        .map(|n| {
            n.clauses()
                .filter(|c| global_e[&c.id] >= warm_up)
                .cloned()
                .collect()
        })
        .unwrap_or_default()
}

fn pruned_log(nodes: &[LearnerNode]) -> Vec<PrunedClause> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for n in nodes {
        for p in n.pruned() {
            if seen.insert((p.id, p.version)) {
                out.push(p.clone());
            }
        }
    }
    out.sort_by_key(|p| (p.kind, p.id));
    out
}

/// Learns initiation and termination clauses from `stream` with both
/// groups running side by side, then scores the result on `stream`.
pub fn learn(stream: &[Interpretation], modes: &ModeSet, settings: &LearnSettings) -> Result<RunReport, ExperimentError> {
    if settings.nodes == 0 {
        return Err(ExperimentError::Config("at least one node is required".into()));
    }
    settings
        .params
        .validate()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    if let Transport::Socket(t) = &settings.transport {
        t.check(settings.nodes as usize)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
    }
    let modes = Arc::new(modes.clone());
    let streams = partition(stream, settings.nodes as usize);

    let started = Instant::now();
    let (init, term) = thread::scope(|scope| {
        let t = scope.spawn(|| run_group(HeadKind::Termination, &streams, &modes, settings));
        let i = run_group(HeadKind::Initiation, &streams, &modes, settings);
        (i, t.join().expect("termination group panicked"))
    });
    let training_seconds = started.elapsed().as_secs_f64();
    let (init, term) = (init?, term?);

    let warm = settings.params.warm_up;
    let theory = Theory::new(warmed_up_clauses(&init.nodes, warm), warmed_up_clauses(&term.nodes, warm));
    let mut metrics = init.metrics.clone();
    metrics.merge(&term.metrics);
    let mut pruned = pruned_log(&init.nodes);
    pruned.extend(pruned_log(&term.nodes));

    let counts = evaluate(&theory, stream, &modes)?;
    let mut warnings = Vec::new();
    if !stream.iter().any(Interpretation::has_positive) {
        warnings.push("stream has no positive annotation".to_string());
    }
    Ok(RunReport {
        training_seconds,
        f1: counts.f1(),
        counts,
        theory_size_literals: theory.size_literals(),
        metrics,
        final_theory: theory,
        pruned,
        warnings,
    })
}

/// Contiguous test folds; fold `i` covers `[i*n/folds, (i+1)*n/folds)`.
pub fn fold_ranges(n: usize, folds: usize) -> Result<Vec<std::ops::Range<usize>>, ExperimentError> {
    if folds < 2 {
        return Err(ExperimentError::Config("cross-validation needs at least 2 folds".into()));
    }
    if folds > n {
        return Err(ExperimentError::Config(format!(
            "{folds} folds but only {n} interpretations"
        )));
    }
    Ok((0..folds).map(|i| i * n / folds..(i + 1) * n / folds).collect())
}

#[derive(Clone, Debug, Default)]
pub struct CvReport {
    pub folds: Vec<RunReport>,
    /// Test counts summed over folds.
    pub counts: Confusion,
    pub f1: f64,
    pub mean_training_seconds: f64,
    pub mean_theory_size_literals: f64,
    pub mean_messages: f64,
    pub mean_message_bytes: f64,
}

impl CvReport {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("folds", self.folds.len());
        kv.insert("f1", format!("{:.6}", self.f1));
        kv.insert("tp", self.counts.tp);
        kv.insert("fp", self.counts.fp);
        kv.insert("fn", self.counts.fn_);
        kv.insert("training_seconds", format!("{:.6}", self.mean_training_seconds));
        kv.insert("theory_size_literals", format!("{:.3}", self.mean_theory_size_literals));
        kv.insert("messages_sent", format!("{:.3}", self.mean_messages));
        kv.insert("message_bytes", format!("{:.3}", self.mean_message_bytes));
        for (i, f) in self.folds.iter().enumerate() {
            kv.insert(&format!("fold{i}.f1"), format!("{:.6}", f.f1));
            kv.insert(&format!("fold{i}.messages_sent"), f.metrics.messages);
            kv.insert(&format!("fold{i}.message_bytes"), f.metrics.bytes);
            kv.insert(&format!("fold{i}.theory_size_literals"), f.theory_size_literals);
        }
        kv
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} folds, micro-averaged F1 {:.4} (tp {} fp {} fn {})\nmean theory size {:.1} literals, mean messages {:.1} ({:.0} bytes), mean time {:.3} s\n",
            self.folds.len(),
            self.f1,
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.mean_theory_size_literals,
            self.mean_messages,
            self.mean_message_bytes,
            self.mean_training_seconds
        );
        for (i, f) in self.folds.iter().enumerate() {
            s.push_str(&format!(
                "  fold {i}: F1 {:.4}, {} literals, {} messages\n",
                f.f1, f.theory_size_literals, f.metrics.messages
            ));
        }
        s
    }
}

/// Trains on all folds but one and tests on the held-out fold, for every
/// fold. Training streams keep their original order.
pub fn cross_validate(
    stream: &[Interpretation],
    folds: usize,
    modes: &ModeSet,
    settings: &LearnSettings,
) -> Result<CvReport, ExperimentError> {
    let ranges = fold_ranges(stream.len(), folds)?;
    let mut out = CvReport::default();
    for r in ranges {
        let train: Vec<Interpretation> = stream[..r.start].iter().chain(&stream[r.end..]).cloned().collect();
        let test = &stream[r];
        let mut rep = learn(&train, modes, settings)?;
        rep.counts = evaluate(&rep.final_theory, test, modes)?;
        rep.f1 = rep.counts.f1();
        out.counts.add(&rep.counts);
        out.folds.push(rep);
    }
    let n = out.folds.len() as f64;
    out.f1 = out.counts.f1();
    out.mean_training_seconds = out.folds.iter().map(|f| f.training_seconds).sum::<f64>() / n;
    out.mean_theory_size_literals = out.folds.iter().map(|f| f.theory_size_literals as f64).sum::<f64>() / n;
    out.mean_messages = out.folds.iter().map(|f| f.metrics.messages as f64).sum::<f64>() / n;
    out.mean_message_bytes = out.folds.iter().map(|f| f.metrics.bytes as f64).sum::<f64>() / n;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_arithmetic() {
        let r = fold_ranges(100, 10).unwrap();
        assert_eq!(r.len(), 10);
        assert!(r.iter().all(|x| x.len() == 10));
        assert_eq!(fold_ranges(7, 3).unwrap(), vec![0..2, 2..4, 4..7]);
        assert!(fold_ranges(3, 4).is_err());
        assert!(fold_ranges(10, 1).is_err());
    }
}
