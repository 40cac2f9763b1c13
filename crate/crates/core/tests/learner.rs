mod common;

use common::*;
use ecl_core::clause::{ClauseId, HeadKind};
use ecl_core::data::{generate, partition, GeneratorConfig};
use ecl_core::node::{LearnFlags, LearnerNode, Phase};
use ecl_core::protocol::{Addr, Envelope, Message, Purpose};
use ecl_core::runtime::{run_group_inproc, Schedule};
use ecl_core::scoring::ClauseStats;

fn requests(out: &[Envelope]) -> Vec<(Purpose, ClauseId)> {
    out.iter()
        .filter(|e| e.to == Addr::Mediator)
        .filter_map(|e| match e.msg {
            Message::SpecializeRequest { id, .. } => Some((Purpose::Specialize, id)),
            Message::PruneRequest { id, .. } => Some((Purpose::Prune, id)),
            _ => None,
        })
        .collect()
}

#[test]
fn round_robin_survives_removal_of_the_cursor_clause() {
    let (c, a, b) = (ClauseId::new(0, 0), ClauseId::new(0, 1), ClauseId::new(0, 2));
    let kind = HeadKind::Initiation;
    let n0 = LearnerNode::with_clauses(
        node_cfg(0, 2, kind, NO_GENERATE),
        [
            ready_to_specialize(table_clause(c, kind)),
            ready_to_prune(table_clause(a, kind)),
            ready_to_specialize(table_clause(b, kind)),
        ],
    );
    let n1 = LearnerNode::with_clauses(
        node_cfg(1, 2, kind, FROZEN),
        [table_clause(c, kind), table_clause(a, kind), table_clause(b, kind)],
    );
    let mut net = Net::new(vec![n0, n1], 3);
    let w = table_2a();

    assert_eq!(requests(&net.consume(0, &w[0])), vec![(Purpose::Specialize, c)]);
    net.pump();
    assert_eq!(net.nodes[1].clause(c).unwrap().version, 1);

    // the specialization gave node 0 a history, so the stale clause is next
    assert_eq!(requests(&net.consume(0, &w[1])), vec![(Purpose::Prune, a)]);
    net.pump();
    assert!(net.nodes[0].clause(a).is_none());
    assert!(net.nodes[1].clause(a).is_none());

    assert_eq!(requests(&net.consume(0, &w[0])), vec![(Purpose::Specialize, b)]);
}

#[test]
fn duplicated_stats_reply_is_rejected_without_effect() {
    let id = ClauseId::new(0, 0);
    let kind = HeadKind::Initiation;
    let n0 = LearnerNode::with_clauses(node_cfg(0, 3, kind, NO_GENERATE), [ready_to_specialize(table_clause(id, kind))]);
    let peers = (1..3).map(|i| LearnerNode::with_clauses(node_cfg(i, 3, kind, FROZEN), [table_clause(id, kind)]));
    let mut net = Net::new(std::iter::once(n0).chain(peers).collect(), 1);
    net.consume(0, &table_2a()[0]);
    // deliver request and grant, then let only node 1 answer
    let req = net.queue.pop_front().unwrap();
    let out = net.mediator.handle(req).unwrap();
    net.post(out);
    let out = net.mediator.tick();
    for e in out {
        match e.to {
            Addr::Node(0) => {
                net.nodes[0].handle(e).unwrap();
            }
            Addr::Node(1) => {
                let reply = net.nodes[1].handle(e).unwrap();
                assert_eq!(reply.len(), 1);
                net.nodes[0].handle(reply[0].clone()).unwrap();
                let before = net.nodes[0].clause(id).unwrap().stats;
                assert!(net.nodes[0].handle(reply[0].clone()).is_err());
                assert_eq!(net.nodes[0].clause(id).unwrap().stats, before);
                assert_eq!(net.nodes[0].phase(), Phase::AwaitingStats(id, Purpose::Specialize));
            }
            _ => {}
        }
    }
}

#[test]
fn single_node_never_talks() {
    let g = generate(&GeneratorConfig {
        horizon: 600,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let node = LearnerNode::new(node_cfg(0, 1, HeadKind::Initiation, LearnFlags::default()));
    let run = run_group_inproc(vec![node], &[g.stream], 0, Schedule::Lockstep, &mut |_| {}).unwrap();
    assert_eq!(run.metrics.messages, 0);
    assert!(run.nodes[0].clauses().count() > 0);
}

#[test]
fn one_specialization_round_costs_three_messages_per_peer() {
    let id = ClauseId::new(0, 0);
    let kind = HeadKind::Initiation;
    let mut nodes = vec![LearnerNode::with_clauses(
        node_cfg(0, 4, kind, NO_GENERATE),
        [ready_to_specialize(table_clause(id, kind))],
    )];
    nodes.extend((1..4).map(|i| LearnerNode::with_clauses(node_cfg(i, 4, kind, NO_GENERATE), [table_clause(id, kind)])));
    let w = table_2a();
    let streams = vec![vec![w[0].clone()], vec![w[0].clone()], vec![w[1].clone()], vec![w[1].clone()]];
    let run = run_group_inproc(nodes, &streams, 9, Schedule::Lockstep, &mut |_| {}).unwrap();
    let m = &run.metrics;
    assert_eq!(m.count("SpecializeRequest"), 4);
    assert_eq!(m.count("StatsReply"), 3);
    assert_eq!(m.count("Replace") + m.count("Proceed"), 3);
    assert_eq!(m.count("MediatorGrant"), 1);
    assert_eq!(m.count("MediatorDone"), 1);
    assert_eq!(m.messages, 4 + 3 + 3 + 2);
    assert!(m.by_type.values().all(|(_, bytes)| *bytes > 0));
    let sigs: Vec<_> = run.nodes.iter().map(LearnerNode::signature).collect();
    assert!(sigs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn replicas_agree_at_every_quiescent_point() {
    let g = generate(&GeneratorConfig {
        horizon: 1200,
        seed: 4,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let streams = partition(&g.stream, 3);
    for (kind, schedule) in [
        (HeadKind::Initiation, Schedule::Lockstep),
        (HeadKind::Termination, Schedule::Random(11)),
    ] {
        let nodes = (0..3).map(|i| LearnerNode::new(node_cfg(i, 3, kind, LearnFlags::default()))).collect();
        let mut points = 0;
        let run = run_group_inproc(nodes, &streams, 5, schedule, &mut |ns| {
            points += 1;
            let first = ns[0].signature();
            assert!(ns.iter().all(|n| n.signature() == first));
        })
        .unwrap();
        assert!(points > 0);
        assert!(run.nodes.iter().all(LearnerNode::is_running));
    }
}

#[test]
fn frozen_counts_match_a_direct_tally() {
    let w = table_2a();
    let kind = HeadKind::Initiation;
    let c = table_clause(ClauseId::new(0, 0), kind);
    let mut node = LearnerNode::with_clauses(node_cfg(0, 1, kind, FROZEN), [c]);
    for i in &w {
        node.process_interpretation(i).unwrap();
    }
    // the empty body fires for both ordered pairs at both time points; only
    // moving(id1,id2) holds at time 2
    let s = node.clauses().next().unwrap().stats;
    assert_eq!(s, ClauseStats::new(1, 3, 0, 2));
}

