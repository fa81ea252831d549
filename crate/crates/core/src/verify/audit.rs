//! Reclamation audits: at quiescence the allocated tuples must be exactly
//! those reachable from the live roots, with reference counts equal to
//! their in-degree.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{CheckError, CheckReport, Verdict, Witness};
use crate::store::{TaggedValue, TupleHandle, TupleStore};
use crate::txn::TxnRuntime;
use crate::vm::VersionMaintenance;

/// Outcome of comparing a store with the tuples its roots reach.
#[derive(Clone, Default, PartialEq, Eq, Debug)]
pub struct AuditReport {
    pub allocated: usize,
    pub reachable: usize,
    /// Allocated but unreachable: imprecise reclamation.
    pub leaked: Vec<TupleHandle>,
    /// Reachable through a reference whose target was freed: unsafe
    /// reclamation. `(parent, child)`; the parent is `None` for a root.
    pub dangling: Vec<(Option<TupleHandle>, TupleHandle)>,
    /// `(tuple, stored count, expected count)`.
    pub count_mismatches: Vec<(TupleHandle, u64, u64)>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.leaked.is_empty() && self.dangling.is_empty() && self.count_mismatches.is_empty()
    }
}

/// Audits `store` against `roots`, one entry per published version that is
/// still live (a root shared by two versions appears twice).
pub fn audit_store(store: &TupleStore, roots: &[TaggedValue]) -> CheckReport {
    let mut report = AuditReport::default();
    let allocated = store.allocated_handles();
    report.allocated = allocated.len();

    let mut expected: BTreeMap<TupleHandle, u64> = BTreeMap::new();
    for h in roots.iter().filter_map(|r| r.as_ref()) {
        *expected.entry(h).or_default() += 1;
        if !store.is_live_handle(h) {
            report.dangling.push((None, h));
        }
    }
    for &h in &allocated {
        for i in 0..store.arity() {
            if let Ok(TaggedValue::Ref(c)) = store.try_nth(h, i) {
                *expected.entry(c).or_default() += 1;
            }
        }
    }

    let mut seen: BTreeSet<TupleHandle> = BTreeSet::new();
    let mut stack: Vec<TupleHandle> = roots
        .iter()
        .filter_map(|r| r.as_ref())
        .filter(|h| store.is_live_handle(*h))
        .collect();
    while let Some(h) = stack.pop() {
        if !seen.insert(h) {
            continue;
        }
        for i in 0..store.arity() {
            if let Ok(TaggedValue::Ref(c)) = store.try_nth(h, i) {
                if store.is_live_handle(c) {
                    stack.push(c);
                } else {
                    report.dangling.push((Some(h), c));
                }
            }
        }
    }
    report.reachable = seen.len();
    report.leaked = allocated.iter().copied().filter(|h| !seen.contains(h)).collect();
    for &h in &allocated {
        let stored = store.ref_count(h).unwrap_or(0);
        let want = expected.get(&h).copied().unwrap_or(0);
        if stored != want {
            report.count_mismatches.push((h, stored, want));
        }
    }
    CheckReport {
        verdict: if report.is_clean() { Verdict::Pass } else { Verdict::Fail },
        witness: Witness::Reclamation(report),
    }
}

/// Audits a runtime's store against its current version. Refuses while a
/// transaction is running.
pub fn reclamation_audit<V: VersionMaintenance>(rt: &TxnRuntime<V>) -> Result<CheckReport, CheckError> {
    let root = rt.quiescent_root().map_err(|e| match e {
        crate::txn::TxnError::ProcessBusy(k) => CheckError::NotQuiescent(k),
        _ => CheckError::NotQuiescent(0),
    })?;
    Ok(audit_store(rt.store(), &[root]))
}
