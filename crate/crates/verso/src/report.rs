//! Report pieces shared by the subcommands.

use serde::Serialize;
use verso_core::verify::{CheckReport, Witness};
use verso_core::CounterSnapshot;

/// Failed CAS instructions per operation class: the contention proxy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FailedCas {
    pub acquire: u64,
    pub release: u64,
    pub set: u64,
}

/// Shared-memory access statistics of the version maintenance object.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AccessReport {
    pub acquire_max: u64,
    pub release_max: u64,
    pub set_max: u64,
    pub acquire_mean: f64,
    pub release_mean: f64,
    pub set_mean: f64,
    pub failed_cas: FailedCas,
    /// Announcement slots whose CAS count exceeded 8 times their owner's
    /// acquires.
    pub announcement_budget_violations: Vec<usize>,
    /// Largest CAS-per-acquire ratio over announcement slots.
    pub announcement_cas_per_acquire_max: f64,
}

fn mean(total: u64, calls: u64) -> f64 {
    if calls == 0 {
        0.0
    } else {
        total as f64 / calls as f64
    }
}

impl From<&CounterSnapshot> for AccessReport {
    fn from(c: &CounterSnapshot) -> Self {
        let ratio = c
            .announcement_cas
            .iter()
            .zip(&c.acquires_by_process)
            .filter(|(_, &a)| a > 0)
            .map(|(&cas, &a)| cas as f64 / a as f64)
            .fold(0.0, f64::max);
        AccessReport {
            acquire_max: c.acquire.max_accesses,
            release_max: c.release.max_accesses,
            set_max: c.set.max_accesses,
            acquire_mean: mean(c.acquire.total_accesses, c.acquire.calls),
            release_mean: mean(c.release.total_accesses, c.release.calls),
            set_mean: mean(c.set.total_accesses, c.set.calls),
            failed_cas: FailedCas {
                acquire: c.acquire.failed_cas,
                release: c.release.failed_cas,
                set: c.set.failed_cas,
            },
            announcement_budget_violations: c.announcement_budget_violations(),
            announcement_cas_per_acquire_max: ratio,
        }
    }
}

/// Reclamation audit outcome, with a few example handles.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuditSummary {
    pub performed: bool,
    pub passed: bool,
    pub allocated: usize,
    pub reachable: usize,
    pub leaked: usize,
    pub dangling: usize,
    pub count_mismatches: usize,
    pub examples: Vec<String>,
}

impl AuditSummary {
    pub fn skipped() -> Self {
        AuditSummary::default()
    }
}

impl From<&CheckReport> for AuditSummary {
    fn from(r: &CheckReport) -> Self {
        let Witness::Reclamation(a) = &r.witness else {
            return AuditSummary {
                performed: true,
                ..AuditSummary::default()
            };
        };
        let examples = a
            .leaked
            .iter()
            .take(8)
            .map(|h| format!("leaked {h}"))
            .chain(a.dangling.iter().take(8).map(|(p, c)| match p {
                Some(p) => format!("dangling {p} -> {c}"),
                None => format!("dangling root {c}"),
            }))
            .chain(
                a.count_mismatches
                    .iter()
                    .take(8)
                    .map(|(h, got, want)| format!("count {h}: stored {got}, expected {want}")),
            )
            .collect();
        AuditSummary {
            performed: true,
            passed: r.passed(),
            allocated: a.allocated,
            reachable: a.reachable,
            leaked: a.leaked.len(),
            dangling: a.dangling.len(),
            count_mismatches: a.count_mismatches.len(),
            examples,
        }
    }
}

/// Power-of-two histogram: bucket 0 counts zeros, bucket `i > 0` counts
/// values in `2^(i-1) .. 2^i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Log2Histogram {
    counts: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HistogramBucket {
    pub lo: u64,
    pub hi: u64,
    pub count: u64,
}

impl Log2Histogram {
    pub fn add(&mut self, v: u64) {
        let b = (u64::BITS - v.leading_zeros()) as usize;
        if self.counts.len() <= b {
            self.counts.resize(b + 1, 0);
        }
        self.counts[b] += 1;
    }

    pub fn merge(&mut self, other: &Log2Histogram) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Non-empty buckets with inclusive bounds.
    pub fn buckets(&self) -> Vec<HistogramBucket> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &count)| {
                let (lo, hi) = if i == 0 { (0, 0) } else { (1 << (i - 1), (1u64 << i) - 1) };
                HistogramBucket { lo, hi, count }
            })
            .collect()
    }
}

/// Live-version samples taken by the writer after each `set`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LiveStats {
    pub max: usize,
    pub sum: u64,
    pub samples: u64,
    pub over_bound: u64,
}

impl LiveStats {
    pub fn add(&mut self, live: usize, bound: usize) {
        self.max = self.max.max(live);
        self.sum += live as u64;
        self.samples += 1;
        if live > bound {
            self.over_bound += 1;
        }
    }

    pub fn merge(&mut self, o: &LiveStats) {
        self.max = self.max.max(o.max);
        self.sum += o.sum;
        self.samples += o.samples;
        self.over_bound += o.over_bound;
    }

    pub fn mean(&self) -> f64 {
        mean(self.sum, self.samples)
    }
}
