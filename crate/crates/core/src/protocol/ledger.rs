use std::collections::BTreeMap;

use crate::clause::ClauseId;
use crate::scoring::ClauseStats;

use super::ProtocolError;

/// Ledger key for the clause's own counts (candidates use their literal).
pub const PARENT: &str = "";

/// Last counts received from each peer, per clause and candidate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeerLedger {
    entries: BTreeMap<(u32, ClauseId, String), ClauseStats>,
}

impl PeerLedger {
    pub fn get(&self, peer: u32, id: ClauseId, key: &str) -> Option<&ClauseStats> {
        self.entries.get(&(peer, id, key.to_string()))
    }

    /// Adds `new - previous` to `local` and records `new`.
    pub fn merge(
        &mut self,
        local: &mut ClauseStats,
        peer: u32,
        id: ClauseId,
        key: &str,
        new: ClauseStats,
    ) -> Result<(), ProtocolError> {
        let slot = self.entries.entry((peer, id, key.to_string())).or_default();
        let delta = new.checked_delta(slot).ok_or_else(|| ProtocolError::CountersBackwards {
            peer,
            id,
            key: key.to_string(),
        })?;
        local.add(&delta);
        *slot = new;
        Ok(())
    }

    /// Drops every entry of a clause (after it was replaced or removed).
    pub fn forget(&mut self, id: ClauseId) {
        self.entries.retain(|(_, c, _), _| *c != id);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Merges one round of replies `(peer, counts)` for a single clause key.
/// Either every reply is applied or, on error, `local` and `ledger` are left
/// unchanged.
pub fn merge_counts(
    local: &ClauseStats,
    ledger: &PeerLedger,
    replies: &[(u32, ClauseStats)],
    id: ClauseId,
    key: &str,
) -> Result<(ClauseStats, PeerLedger), ProtocolError> {
    let mut stats = *local;
    let mut ledger = ledger.clone();
    for (peer, counts) in replies {
        ledger.merge(&mut stats, *peer, id, key, *counts)?;
    }
    Ok((stats, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(n: u64) -> ClauseStats {
        ClauseStats::new(n, 0, 0, 0)
    }

    #[test]
    fn delta_rule() {
        let id = ClauseId::new(0, 0);
        let mut ledger = PeerLedger::default();
        let mut local = tp(5);
        ledger.merge(&mut local, 1, id, PARENT, tp(3)).unwrap();
        assert_eq!(local.tp, 8);
        let mut local = tp(5);
        let mut ledger = PeerLedger::default();
        ledger.entries.insert((1, id, PARENT.into()), tp(3));
        ledger.merge(&mut local, 1, id, PARENT, tp(7)).unwrap();
        assert_eq!(local.tp, 9);
        assert_eq!(ledger.get(1, id, PARENT), Some(&tp(7)));
        ledger.merge(&mut local, 1, id, PARENT, tp(7)).unwrap();
        assert_eq!(local.tp, 9);
    }

    #[test]
    fn first_reply_adds_everything() {
        let (s, l) = merge_counts(&tp(0), &PeerLedger::default(), &[(2, tp(4))], ClauseId::new(0, 1), "k").unwrap();
        assert_eq!(s.tp, 4);
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn backwards_counts_rejected_atomically() {
        let id = ClauseId::new(0, 0);
        let (s, l) = merge_counts(&tp(0), &PeerLedger::default(), &[(1, tp(4))], id, PARENT).unwrap();
        let err = merge_counts(&s, &l, &[(2, tp(1)), (1, tp(2))], id, PARENT).unwrap_err();
        assert!(matches!(err, ProtocolError::CountersBackwards { peer: 1, .. }));
    }

    #[test]
    fn forget_clears_clause() {
        let mut l = PeerLedger::default();
        let mut s = tp(0);
        l.merge(&mut s, 1, ClauseId::new(0, 0), PARENT, tp(1)).unwrap();
        l.merge(&mut s, 1, ClauseId::new(0, 1), PARENT, tp(1)).unwrap();
        l.forget(ClauseId::new(0, 0));
        assert_eq!(l.len(), 1);
    }
}
