//! Exhaustive linearizability checking against the sequential oracle.
//!
//! Depth-first search over orders that respect real time: an operation may
//! be placed next only if no unplaced operation responded before it was
//! invoked. Each placement replays through [`OracleState::apply`] and must
//! reproduce the recorded result. States already shown to be dead ends are
//! memoized by (placed set, oracle state).

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::history::{Operation, VmHistory};
use super::{CheckError, CheckReport, Verdict, Witness};
use crate::oracle::OracleState;
use crate::version::DataHandle;

/// Largest history, in operations, accepted by [`check_linearizable`].
pub const DEFAULT_OP_BOUND: usize = 14;

/// Checks `h` for an object of `processes` processes whose initial version
/// carries `initial`. Refuses histories above [`DEFAULT_OP_BOUND`]
/// operations.
pub fn check_linearizable(h: &VmHistory, processes: usize, initial: DataHandle) -> Result<CheckReport, CheckError> {
    check_linearizable_bounded(h, processes, initial, DEFAULT_OP_BOUND)
}

pub fn check_linearizable_bounded(
    h: &VmHistory,
    processes: usize,
    initial: DataHandle,
    bound: usize,
) -> Result<CheckReport, CheckError> {
    let ops = h.operations()?;
    if ops.len() > bound || ops.len() > 64 {
        return Err(CheckError::TooLarge {
            ops: ops.len(),
            bound: bound.min(64),
        });
    }
    let processes = processes.max(h.processes());
    if let Some(order) = linearize(&ops, processes, initial) {
        return Ok(CheckReport {
            verdict: Verdict::Pass,
            witness: Witness::Linearization(order),
        });
    }
    // Linearizability is prefix-closed, so failing prefixes form an upper
    // interval of lengths: binary search for its start.
    let (mut lo, mut hi) = (0, h.len());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let prefix = h.prefix(mid).operations()?;
        if linearize(&prefix, processes, initial).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CheckReport {
        verdict: Verdict::Fail,
        witness: Witness::ViolatingPrefix(h.prefix(hi)),
    })
}

fn linearize(ops: &[Operation], processes: usize, initial: DataHandle) -> Option<Vec<usize>> {
    let must = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.responded.is_some())
        .fold(0u64, |m, (i, _)| m | 1 << i);
    let mut search = Search {
        ops,
        must,
        dead: BTreeSet::new(),
        order: Vec::with_capacity(ops.len()),
    };
    search
        .run(0, &OracleState::new(processes, initial))
        .then_some(search.order)
}

struct Search<'a> {
    ops: &'a [Operation],
    must: u64,
    dead: BTreeSet<(u64, OracleState)>,
    order: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, placed: u64, state: &OracleState) -> bool {
        if placed & self.must == self.must {
            return true;
        }
        if self.dead.contains(&(placed, state.clone())) {
            return false;
        }
        // Earliest response among unplaced operations; anything invoked
        // after it cannot go next.
        let horizon = self
            .ops
            .iter()
            .enumerate()
            .filter(|(i, _)| placed & (1 << i) == 0)
            .filter_map(|(_, o)| o.responded.map(|r| r.0))
            .min()
            .unwrap_or(u64::MAX);
        for (i, o) in self.ops.iter().enumerate() {
            if placed & (1 << i) != 0 || o.invoked > horizon {
                continue;
            }
            let mut next = state.clone();
            let Ok(result) = next.apply(o.op) else { continue };
            if o.responded.is_some_and(|(_, r)| r != result) {
                continue;
            }
            self.order.push(i);
            if self.run(placed | 1 << i, &next) {
                return true;
            }
            self.order.pop();
        }
        self.dead.insert((placed, state.clone()));
        false
    }
}
