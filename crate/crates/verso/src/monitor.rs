//! Streaming strict serializability check for long runs.
//!
//! Keeping every event of a 30 second run is too much memory when reads
//! are short, so the monitor keeps only the commit log and checks reads in
//! batches as they respond. A read is checked once the log is known to
//! hold every commit stamped before its response: no write may sit
//! between its `WriteBegin` and `WriteCommit` with a begin stamp below the
//! response, and the window's last commit must have a recorded end unless
//! it began after the read. Reads that are not yet decided wait for a later
//! batch or for [`SerialMonitor::finish`].

use std::sync::{Mutex, MutexGuard};

use serde::Serialize;
use verso_core::txn::{TxnEvent, TxnEventKind, TxnEventSink};
use verso_core::verify::{CheckError, CommitLog, CompletedRead, ReadViolation};

#[derive(Default)]
struct WriterSide {
    log: CommitLog,
    /// Begin stamp of a write that has not recorded its commit yet.
    open_write: Option<u64>,
    missing_digest: Option<u64>,
}

#[derive(Default)]
struct ReaderSide {
    open: Option<(u64, u64)>,
    pending: Vec<CompletedRead>,
    checked: u64,
    violation: Option<ReadViolation>,
    missing_digest: Option<u64>,
}

pub struct SerialMonitor {
    writer: Mutex<WriterSide>,
    readers: Vec<Mutex<ReaderSide>>,
    batch: usize,
}

impl std::fmt::Debug for SerialMonitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SerialMonitor")
            .field("processes", &self.readers.len())
            .finish_non_exhaustive()
    }
}

/// Result of a monitored run.
#[derive(Clone, Debug, Serialize)]
pub struct SerialSummary {
    pub passed: bool,
    pub reads_checked: u64,
    pub commits: usize,
    /// The earliest-found read that matched no commit of its window.
    pub violation: Option<ViolationReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViolationReport {
    pub read_txn: u64,
    pub process: usize,
    pub invoked: u64,
    pub responded: u64,
    pub digest: u64,
    pub window: Vec<(u64, u64)>,
}

impl From<ReadViolation> for ViolationReport {
    fn from(v: ReadViolation) -> Self {
        ViolationReport {
            read_txn: v.read,
            process: v.process.get(),
            invoked: v.invoked,
            responded: v.responded,
            digest: v.digest,
            window: v.window,
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl SerialMonitor {
    pub fn new(processes: usize) -> Self {
        Self::with_batch(processes, 512)
    }

    pub fn with_batch(processes: usize, batch: usize) -> Self {
        SerialMonitor {
            writer: Mutex::default(),
            readers: (0..processes).map(|_| Mutex::default()).collect(),
            batch: batch.max(1),
        }
    }

    fn flush(&self, r: &mut ReaderSide, final_pass: bool) {
        let w = lock(&self.writer);
        let mut kept = Vec::new();
        for read in r.pending.drain(..) {
            let decided = final_pass
                || (w.log.has_initial()
                    && w.open_write.is_none_or(|b| b > read.responded)
                    && w.log.decides(&read));
            if !decided {
                kept.push(read);
                continue;
            }
            r.checked += 1;
            if let Err(v) = w.log.check(&read) {
                if r.violation.is_none() {
                    r.violation = Some(v);
                }
            }
        }
        r.pending = kept;
    }

    /// Checks every remaining read. Call after all transactions returned.
    pub fn finish(&self) -> Result<SerialSummary, CheckError> {
        {
            let w = lock(&self.writer);
            if let Some(txn) = w.missing_digest {
                return Err(CheckError::MissingDigest { txn });
            }
            if !w.log.has_initial() {
                return Err(CheckError::NoInitialState);
            }
        }
        let mut checked = 0;
        let mut violation: Option<ReadViolation> = None;
        for r in &self.readers {
            let mut r = lock(r);
            if let Some(txn) = r.missing_digest {
                return Err(CheckError::MissingDigest { txn });
            }
            self.flush(&mut r, true);
            checked += r.checked;
            if let Some(v) = r.violation.clone() {
                if violation.as_ref().is_none_or(|cur| v.responded < cur.responded) {
                    violation = Some(v);
                }
            }
        }
        Ok(SerialSummary {
            passed: violation.is_none(),
            reads_checked: checked,
            commits: lock(&self.writer).log.len(),
            violation: violation.map(Into::into),
        })
    }
}

impl TxnEventSink for SerialMonitor {
    fn record(&self, e: TxnEvent) {
        match e.kind {
            TxnEventKind::Initial | TxnEventKind::WriteBegin | TxnEventKind::WriteCommit | TxnEventKind::WriteEnd => {
                let mut w = lock(&self.writer);
                match (e.kind, e.digest) {
                    (TxnEventKind::Initial, Some(d)) => w.log.push_initial(e.txn, e.seq, d),
                    (TxnEventKind::WriteBegin, _) => w.open_write = Some(e.seq),
                    (TxnEventKind::WriteCommit, Some(d)) => {
                        w.log.push_commit(e.txn, e.seq, d);
                        w.open_write = None;
                    }
                    (TxnEventKind::WriteEnd, _) => {
                        w.log.end_commit(e.txn, e.seq);
                        w.open_write = None;
                    }
                    _ => {
                        w.missing_digest.get_or_insert(e.txn);
                    }
                }
            }
            TxnEventKind::ReadBegin => {
                lock(&self.readers[e.process.get()]).open = Some((e.txn, e.seq));
            }
            TxnEventKind::ReadRespond => {
                let mut r = lock(&self.readers[e.process.get()]);
                let Some(digest) = e.digest else {
                    r.missing_digest.get_or_insert(e.txn);
                    return;
                };
                if let Some((txn, invoked)) = r.open.take() {
                    r.pending.push(CompletedRead {
                        txn,
                        process: e.process,
                        invoked,
                        responded: e.seq,
                        digest,
                    });
                }
                if r.pending.len() >= self.batch {
                    self.flush(&mut r, false);
                }
            }
            TxnEventKind::ReadVersionObserved | TxnEventKind::ReadEnd => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use verso_core::ProcessId;

    fn ev(seq: u64, txn: u64, kind: TxnEventKind, k: usize, digest: Option<u64>) -> TxnEvent {
        TxnEvent {
            seq,
            txn,
            kind,
            process: ProcessId(k),
            version: None,
            digest,
        }
    }

    #[test]
    fn agrees_with_offline_checker() {
        use verso_core::verify::check_strict_serializable;
        let events = vec![
            ev(0, 0, TxnEventKind::Initial, 0, Some(10)),
            ev(1, 1, TxnEventKind::ReadBegin, 1, None),
            ev(2, 2, TxnEventKind::WriteBegin, 0, None),
            ev(3, 2, TxnEventKind::WriteCommit, 0, Some(11)),
            ev(4, 1, TxnEventKind::ReadRespond, 1, Some(11)),
            ev(5, 2, TxnEventKind::WriteEnd, 0, None),
            ev(6, 6, TxnEventKind::ReadBegin, 1, None),
            ev(7, 6, TxnEventKind::ReadRespond, 1, Some(10)),
        ];
        let offline = check_strict_serializable(&events).unwrap();
        let m = SerialMonitor::with_batch(2, 1);
        for e in &events {
            m.record(*e);
        }
        let s = m.finish().unwrap();
        assert_eq!(s.passed, offline.passed());
        assert!(!s.passed);
        assert_eq!(s.reads_checked, 2);
        let v = s.violation.unwrap();
        assert_eq!((v.read_txn, v.window.clone()), (6, vec![(2, 11)]));
    }

    #[test]
    fn defers_reads_racing_an_unrecorded_commit() {
        let m = SerialMonitor::with_batch(2, 1);
        m.record(ev(0, 0, TxnEventKind::Initial, 0, Some(10)));
        m.record(ev(1, 1, TxnEventKind::WriteBegin, 0, None));
        m.record(ev(2, 2, TxnEventKind::ReadBegin, 1, None));
        // The commit (seq 3) is stamped before the response but recorded after.
        m.record(ev(4, 2, TxnEventKind::ReadRespond, 1, Some(11)));
        assert_eq!(lock(&m.readers[1]).pending.len(), 1);
        m.record(ev(3, 1, TxnEventKind::WriteCommit, 0, Some(11)));
        m.record(ev(5, 1, TxnEventKind::WriteEnd, 0, None));
        let s = m.finish().unwrap();
        assert!(s.passed, "{s:?}");
    }

    #[test]
    fn refuses_missing_digests() {
        let m = SerialMonitor::new(1);
        m.record(ev(0, 0, TxnEventKind::Initial, 0, Some(1)));
        m.record(ev(1, 1, TxnEventKind::WriteCommit, 0, None));
        assert_eq!(m.finish().unwrap_err(), CheckError::MissingDigest { txn: 1 });
        assert_eq!(SerialMonitor::new(1).finish().unwrap_err(), CheckError::NoInitialState);
    }
}
