mod common;

use std::collections::BTreeMap;
use std::io::Cursor;

use common::*;
use ecl_core::clause::{ClauseId, HeadKind};
use ecl_core::protocol::{
    decode, encode, merge_counts, read_frame, write_frame, Addr, CodecError, Envelope, Message, Outcome, PeerLedger,
    Purpose, WireClause, PARENT,
};
use ecl_core::scoring::ClauseStats;
use proptest::prelude::*;

fn stats() -> impl Strategy<Value = ClauseStats> {
    (0u64..1 << 40, 0u64..1000, 0u64..1000, 0u64..1 << 40).prop_map(|(a, b, c, d)| ClauseStats::new(a, b, c, d))
}

fn message() -> impl Strategy<Value = Message> {
    let id = (0u32..8, 0u32..1000).prop_map(|(o, s)| ClauseId::new(o, s));
    let wire = WireClause::from_clause(&table_clause(ClauseId::new(1, 2), HeadKind::Termination));
    prop_oneof![
        Just(Message::AddNewClause { clause: wire.clone() }),
        (id.clone(), any::<u32>(), 0u32..8).prop_map(|(id, version, requester)| Message::SpecializeRequest {
            id,
            version,
            requester
        }),
        (id.clone(), stats(), prop::collection::btree_map("[a-z(),0-9]{1,12}", stats(), 0..4), 0u32..8).prop_map(
            |(id, parent, refinements, responder)| Message::StatsReply {
                id,
                version: 3,
                parent,
                refinements,
                responder
            }
        ),
        id.clone().prop_map(move |id| Message::Replace { id, clause: wire.clone() }),
        id.clone().prop_map(|id| Message::Proceed { id }),
        (id.clone(), stats(), any::<u64>()).prop_map(|(id, stats, stable_since)| Message::PruneStatsReply {
            id,
            version: 0,
            stats,
            stable_since,
            responder: 1
        }),
        id.clone().prop_map(|id| Message::Remove { id }),
        (id.clone(), any::<bool>()).prop_map(|(id, p)| Message::MediatorGrant {
            requester: 2,
            id,
            purpose: if p { Purpose::Prune } else { Purpose::Specialize }
        }),
        (id.clone(), 0u8..3).prop_map(|(id, o)| Message::MediatorDone {
            requester: 0,
            id,
            outcome: match o {
                0 => Outcome::Changed { version: 7 },
                1 => Outcome::Removed,
                _ => Outcome::Unchanged,
            }
        }),
        id.prop_map(|id| Message::Abandon { requester: 5, id }),
    ]
}

fn envelope() -> impl Strategy<Value = Envelope> {
    (message(), any::<u64>(), prop::option::of(0u32..16), prop::option::of(0u32..16)).prop_map(|(msg, seq, f, t)| {
        Envelope {
            from: f.map_or(Addr::Mediator, Addr::Node),
            to: t.map_or(Addr::Mediator, Addr::Node),
            seq,
            msg,
        }
    })
}

proptest! {
    #[test]
    fn frames_round_trip(env in envelope()) {
        let buf = encode(&env);
        let (back, used) = decode(&buf, env.to).unwrap();
        prop_assert_eq!(used, buf.len());
        prop_assert_eq!(&back, &env);
        let mut sink = Vec::new();
        write_frame(&mut sink, &env).unwrap();
        prop_assert_eq!(read_frame(&mut Cursor::new(sink), env.to).unwrap(), Some(env));
    }

    #[test]
    fn every_proper_prefix_is_truncated(env in envelope(), cut in 0.0f64..1.0) {
        let buf = encode(&env);
        let n = (cut * buf.len() as f64) as usize;
        let truncated = matches!(decode(&buf[..n], env.to), Err(CodecError::Truncated { .. }));
        prop_assert!(truncated);
    }

    // replaying any prefix of the acknowledged history, in any order, leaves
    // the local counts where one in-order pass put them
    #[test]
    fn ledger_merge_is_idempotent(
        steps in prop::collection::vec((0u32..3, 0u64..5, 0u64..5), 1..30),
        replays in prop::collection::vec((0usize..30, 0u32..3), 0..30),
    ) {
        let id = ClauseId::new(0, 0);
        let mut latest: BTreeMap<u32, ClauseStats> = BTreeMap::new();
        let mut history = Vec::new();
        for (peer, a, b) in steps {
            let s = latest.entry(peer).or_default();
            *s = *s + ClauseStats::new(a, b, 0, a + b);
            history.push((peer, *s));
        }
        let mut local = ClauseStats::default();
        let mut ledger = PeerLedger::default();
        for (peer, s) in &history {
            ledger.merge(&mut local, *peer, id, PARENT, *s).unwrap();
        }
        let expected = latest.values().fold(ClauseStats::default(), |a, b| a + *b);
        prop_assert_eq!(local, expected);
        for (i, _) in replays {
            let (peer, s) = history[i % history.len()];
            let before = (local, ledger.clone());
            let r = ledger.merge(&mut local, peer, id, PARENT, s);
            if s == latest[&peer] {
                prop_assert!(r.is_ok());
            } else {
                prop_assert!(r.is_err());
            }
            prop_assert_eq!((local, ledger.clone()), before);
        }
    }
}

#[test]
fn oversized_and_garbled_frames_are_rejected() {
    let mut buf = vec![0xff, 0xff, 0xff, 0xff];
    buf.extend([b'{'; 8]);
    assert!(matches!(decode(&buf, Addr::Mediator), Err(CodecError::TooLarge(_))));
    let body = br#"{"v":1,"type":"Proceed","seq":1,"sender":"node0","body":{"id":"bogus"}}"#;
    let mut buf = (body.len() as u32).to_be_bytes().to_vec();
    buf.extend_from_slice(body);
    assert!(matches!(decode(&buf, Addr::Mediator), Err(CodecError::Invalid { .. })));
    let body = br#"{"v":9,"type":"Proceed","seq":1,"sender":"node0","body":{}}"#;
    let mut buf = (body.len() as u32).to_be_bytes().to_vec();
    buf.extend_from_slice(body);
    assert!(matches!(decode(&buf, Addr::Mediator), Err(CodecError::Version(9))));
}

#[test]
fn round_merge_is_all_or_nothing() {
    let id = ClauseId::new(0, 0);
    let mut ledger = PeerLedger::default();
    let mut local = ClauseStats::default();
    ledger.merge(&mut local, 1, id, PARENT, ClauseStats::new(5, 0, 0, 5)).unwrap();
    let replies = [(2, ClauseStats::new(1, 0, 0, 1)), (1, ClauseStats::new(4, 0, 0, 4))];
    assert!(merge_counts(&local, &ledger, &replies, id, PARENT).is_err());
    assert_eq!(local, ClauseStats::new(5, 0, 0, 5));
    let (s, l) = merge_counts(&local, &ledger, &replies[..1], id, PARENT).unwrap();
    assert_eq!(s, ClauseStats::new(6, 0, 0, 6));
    assert_eq!(l.len(), 2);
}

#[test]
fn wire_clause_rebuilds_the_clause() {
    let c = table_clause(ClauseId::new(3, 4), HeadKind::Initiation);
    let key = c.refinements.keys().next().unwrap().clone();
    let s = c.specialize(&key, 17).unwrap();
    let back = WireClause::from_clause(&s).to_clause().unwrap();
    assert_eq!(back.signature(), s.signature());
    assert_eq!(back.render(), s.render());
    assert_eq!(back.refinements.len(), s.refinements.len());
    assert_eq!(back.stats, ClauseStats::default());
}
