//! Strict serializability of single-writer transaction histories.
//!
//! Commits are totally ordered by the writer token. A committed state `w`
//! became visible somewhere between its `WriteCommit` and `WriteEnd`
//! stamps. A read invoked at `inv` (its `ReadBegin`) and responding at
//! `resp` (its `ReadRespond`) may legally observe `w` when `w`'s commit
//! started before `resp` and no later commit had finished before `inv`.
//! The read passes when its digest equals the digest of such a `w`.

use alloc::vec::Vec;

use super::{CheckError, CheckReport, Verdict, Witness};
use crate::txn::{TxnEvent, TxnEventKind};
use crate::version::ProcessId;

/// Commit matched by one read.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ReadMatch {
    pub read: u64,
    /// Transaction id of the matched commit (the initial state's event id
    /// for the initial state).
    pub commit: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ReadViolation {
    pub read: u64,
    pub process: ProcessId,
    pub invoked: u64,
    pub responded: u64,
    pub digest: u64,
    /// `(commit txn, digest)` for every commit in the read's window.
    pub window: Vec<(u64, u64)>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Commit {
    txn: u64,
    start: u64,
    end: u64,
    digest: u64,
}

/// A read that has responded.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct CompletedRead {
    pub txn: u64,
    pub process: ProcessId,
    pub invoked: u64,
    pub responded: u64,
    pub digest: u64,
}

/// Committed states in commit order, with their visibility intervals.
#[derive(Clone, Default, Debug)]
pub struct CommitLog {
    commits: Vec<Commit>,
}

impl CommitLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }

    /// True once the initial state has been recorded.
    pub fn has_initial(&self) -> bool {
        self.commits.first().is_some_and(|c| c.start == c.end)
    }

    pub fn push_initial(&mut self, txn: u64, seq: u64, digest: u64) {
        self.commits.push(Commit {
            txn,
            start: seq,
            end: seq,
            digest,
        });
    }

    /// A commit whose `WriteCommit` was stamped `seq`.
    pub fn push_commit(&mut self, txn: u64, seq: u64, digest: u64) {
        self.commits.push(Commit {
            txn,
            start: seq,
            end: u64::MAX,
            digest,
        });
    }

    /// Closes the interval of the latest commit if it belongs to `txn`.
    pub fn end_commit(&mut self, txn: u64, seq: u64) {
        if let Some(c) = self.commits.last_mut().filter(|c| c.txn == txn) {
            c.end = seq;
        }
    }

    /// Whether the log fixes `r`'s window, given that it holds every commit
    /// stamped before `r.responded`: false while the last such commit
    /// started before the read and has no recorded end.
    pub fn decides(&self, r: &CompletedRead) -> bool {
        let hi = self.commits.partition_point(|c| c.start < r.responded);
        hi == 0 || {
            let last = &self.commits[hi - 1];
            last.end != u64::MAX || last.start > r.invoked
        }
    }

    /// Matches `r` against the commits of its real-time window.
    pub fn check(&self, r: &CompletedRead) -> Result<ReadMatch, ReadViolation> {
        // Last commit finished before the read began; commits never
        // overlap, so ends are increasing.
        let lo = self
            .commits
            .partition_point(|c| c.end < r.invoked)
            .saturating_sub(1);
        let hi = self.commits.partition_point(|c| c.start < r.responded);
        let window = self.commits.get(lo..hi.max(lo + 1)).unwrap_or_default();
        match window.iter().rev().find(|c| c.digest == r.digest) {
            Some(c) => Ok(ReadMatch {
                read: r.txn,
                commit: c.txn,
            }),
            None => Err(ReadViolation {
                read: r.txn,
                process: r.process,
                invoked: r.invoked,
                responded: r.responded,
                digest: r.digest,
                window: window.iter().map(|c| (c.txn, c.digest)).collect(),
            }),
        }
    }
}

/// Checks reads against committed digests. Refuses histories whose
/// commits or completed reads lack a digest, or that lack the initial
/// state.
pub fn check_strict_serializable(events: &[TxnEvent]) -> Result<CheckReport, CheckError> {
    let mut events = events.to_vec();
    events.sort_by_key(|e| e.seq);

    let mut log = CommitLog::new();
    // (txn, process, invoked)
    let mut open_reads: Vec<(u64, ProcessId, u64)> = Vec::new();
    let mut reads: Vec<CompletedRead> = Vec::new();

    for e in &events {
        match e.kind {
            TxnEventKind::Initial => {
                let digest = e.digest.ok_or(CheckError::MissingDigest { txn: e.txn })?;
                log.push_initial(e.txn, e.seq, digest);
            }
            TxnEventKind::WriteCommit => {
                let digest = e.digest.ok_or(CheckError::MissingDigest { txn: e.txn })?;
                log.push_commit(e.txn, e.seq, digest);
            }
            TxnEventKind::WriteEnd => log.end_commit(e.txn, e.seq),
            TxnEventKind::ReadBegin => open_reads.push((e.txn, e.process, e.seq)),
            TxnEventKind::ReadRespond => {
                let digest = e.digest.ok_or(CheckError::MissingDigest { txn: e.txn })?;
                if let Some(pos) = open_reads.iter().position(|r| r.0 == e.txn) {
                    let (txn, process, invoked) = open_reads.swap_remove(pos);
                    reads.push(CompletedRead {
                        txn,
                        process,
                        invoked,
                        responded: e.seq,
                        digest,
                    });
                }
            }
            TxnEventKind::WriteBegin | TxnEventKind::ReadVersionObserved | TxnEventKind::ReadEnd => {}
        }
    }
    if !log.has_initial() {
        return Err(CheckError::NoInitialState);
    }

    let mut matches = Vec::with_capacity(reads.len());
    for r in &reads {
        match log.check(r) {
            Ok(m) => matches.push(m),
            Err(v) => {
                return Ok(CheckReport {
                    verdict: Verdict::Fail,
                    witness: Witness::UnmatchedRead(v),
                })
            }
        }
    }
    Ok(CheckReport {
        verdict: Verdict::Pass,
        witness: Witness::Serialization(matches),
    })
}
