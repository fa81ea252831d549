//! The transactional benchmark: one writer inserting `nu` keys per
//! transaction, `threads - 1` readers answering `nq` range sums each.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use verso_core::ptree::{self, TreeView, NODE_ARITY};
use verso_core::verify::reclamation_audit;
use verso_core::{ProcessId, StepCounters, TupleStore, TxnConfig, TxnRuntime, VersionMaintenance};

use crate::algo::{build_vm, Algo};
use crate::error::HarnessError;
use crate::monitor::{SerialMonitor, SerialSummary};
use crate::report::{AccessReport, AuditSummary, HistogramBucket, LiveStats, Log2Histogram};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub algo: Algo,
    pub threads: usize,
    pub seconds: f64,
    pub nu: usize,
    pub nq: usize,
    pub keys: usize,
    pub seed: u64,
    pub collect: bool,
    /// Run this many rounds on the calling thread instead of timing
    /// concurrent threads: each round is one write then one read per reader.
    pub rounds: Option<u64>,
    pub csv: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            algo: Algo::Waitfree,
            threads: 8,
            seconds: 5.0,
            nu: 10,
            nq: 10,
            keys: 100_000,
            seed: 1,
            collect: true,
            rounds: None,
            csv: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.threads == 0 || self.threads > self.algo.max_processes() {
            return bad(format!(
                "threads must be in 1..={} for {}",
                self.algo.max_processes(),
                self.algo
            ));
        }
        if self.nu == 0 || self.nq == 0 {
            return bad("nu and nq must be positive".into());
        }
        if self.keys == 0 || self.keys > (1 << 40) {
            return bad("keys must be in 1..=2^40".into());
        }
        if self.rounds.is_none() && !(self.seconds.is_finite() && self.seconds > 0.0) {
            return bad("seconds must be positive".into());
        }
        Ok(())
    }

    fn key_space(&self) -> i64 {
        2 * self.keys as i64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub command: &'static str,
    pub algo: Algo,
    pub threads: usize,
    pub nu: usize,
    pub nq: usize,
    pub keys: usize,
    pub seed: u64,
    pub collect: bool,
    pub sequential: bool,
    pub elapsed_seconds: f64,
    pub commits: u64,
    pub read_txns: u64,
    pub update_throughput: f64,
    pub query_throughput: f64,
    pub max_live_versions: usize,
    pub avg_live_versions: f64,
    pub live_samples: u64,
    pub live_bound: usize,
    pub live_bound_violations: u64,
    pub access: Option<AccessReport>,
    pub allocated_tuples: u64,
    pub tree_size: usize,
    pub collect_freed_histogram: Vec<HistogramBucket>,
    pub serializability: SerialSummary,
    pub audit: AuditSummary,
    pub breaches: Vec<String>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.breaches.is_empty()
    }
}

/// A live-version sample for the CSV time series.
#[derive(Clone, Copy, Debug)]
struct Sample {
    commit: u64,
    micros: u128,
    live: usize,
}

#[derive(Default)]
struct WriterStats {
    commits: u64,
    live: LiveStats,
    freed: Log2Histogram,
    series: Vec<Sample>,
}

#[derive(Default)]
struct ReaderStats {
    reads: u64,
    freed: Log2Histogram,
}

/// Range sums over a random partition of `[MIN, MAX]` into `parts` pieces,
/// cut inside the key space. The digest is their wrapping sum.
pub fn partition_sums(t: &TreeView<'_>, rng: &mut impl Rng, parts: usize, key_space: i64) -> u64 {
    let mut cuts: Vec<i64> = (1..parts).map(|_| rng.random_range(0..key_space)).collect();
    cuts.sort_unstable();
    let mut lo = i64::MIN;
    let mut digest = 0i64;
    for c in cuts {
        if c > lo {
            digest = digest.wrapping_add(t.range_sum(lo, c - 1));
        }
        lo = c;
    }
    digest.wrapping_add(t.range_sum(lo, i64::MAX)) as u64
}

fn initial_pairs(cfg: &BenchConfig, rng: &mut SmallRng) -> Vec<(i64, i64)> {
    let mut pairs: Vec<(i64, i64)> = rand::seq::index::sample(rng, cfg.key_space() as usize, cfg.keys)
        .into_iter()
        .map(|k| (k as i64, 0))
        .collect();
    for p in &mut pairs {
        p.1 = rng.random();
    }
    pairs
}

fn writer_loop<V: VersionMaintenance>(
    rt: &TxnRuntime<V>,
    cfg: &BenchConfig,
    rng: &mut SmallRng,
    started: Instant,
    stop: impl Fn() -> bool,
    stats: &mut WriterStats,
) -> Result<(), HarnessError> {
    let key_space = cfg.key_space();
    let bound = cfg.threads + 1;
    while !stop() {
        let info = rt.write_txn(ProcessId(0), |s, root, log| {
            let mut t = root;
            for _ in 0..cfg.nu {
                t = ptree::insert(s, t, rng.random_range(0..key_space), rng.random(), log)?;
            }
            Ok(t)
        })?;
        stats.commits += 1;
        stats.live.add(info.live_after_set, bound);
        if info.collected.freed > 0 {
            stats.freed.add(info.collected.freed as u64);
        }
        if cfg.csv.is_some() {
            stats.series.push(Sample {
                commit: stats.commits,
                micros: started.elapsed().as_micros(),
                live: info.live_after_set,
            });
        }
    }
    Ok(())
}

fn read_once<V: VersionMaintenance>(
    rt: &TxnRuntime<V>,
    cfg: &BenchConfig,
    k: usize,
    rng: &mut SmallRng,
    stats: &mut ReaderStats,
) {
    let out = rt.read_txn_digest(ProcessId(k), |t| ((), partition_sums(&t, rng, cfg.nq, cfg.key_space())));
    stats.reads += 1;
    if out.collected.freed > 0 {
        stats.freed.add(out.collected.freed as u64);
    }
}

fn thread_rng(seed: u64, k: usize) -> SmallRng {
    SmallRng::seed_from_u64(seed ^ (k as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, HarnessError> {
    cfg.validate()?;
    let p = cfg.threads;
    let mut rng = thread_rng(cfg.seed, usize::MAX);
    let pairs = initial_pairs(cfg, &mut rng);
    let monitor = Arc::new(SerialMonitor::new(p));
    let tcfg = TxnConfig {
        sink: Some(Box::new(Arc::clone(&monitor))),
        collect: cfg.collect,
        relax: std::thread::yield_now,
        ..TxnConfig::default()
    };
    let rt = TxnRuntime::build(
        TupleStore::new(NODE_ARITY),
        tcfg,
        |s, log| ptree::build(s, &pairs, log),
        |d| build_vm(cfg.algo, p, d, cfg.seed, StepCounters::new(p)).map_err(HarnessError::from),
    )?;
    drop(pairs);

    let started = Instant::now();
    let mut writer = WriterStats::default();
    let mut readers: Vec<ReaderStats> = (1..p).map(|_| ReaderStats::default()).collect();
    if let Some(rounds) = cfg.rounds {
        let mut wrng = thread_rng(cfg.seed, 0);
        let mut rrngs: Vec<SmallRng> = (1..p).map(|k| thread_rng(cfg.seed, k)).collect();
        for _ in 0..rounds {
            let once = std::cell::Cell::new(false);
            writer_loop(&rt, cfg, &mut wrng, started, || once.replace(true), &mut writer)?;
            for (i, s) in readers.iter_mut().enumerate() {
                read_once(&rt, cfg, i + 1, &mut rrngs[i], s);
            }
        }
    } else {
        let deadline = started + Duration::from_secs_f64(cfg.seconds);
        let failed = AtomicBool::new(false);
        let stop = || failed.load(Ordering::Relaxed) || Instant::now() >= deadline;
        std::thread::scope(|scope| -> Result<(), HarnessError> {
            let rt = &rt;
            let stop = &stop;
            let handles: Vec<_> = readers
                .iter_mut()
                .enumerate()
                .map(|(i, s)| {
                    scope.spawn(move || {
                        let mut rng = thread_rng(cfg.seed, i + 1);
                        while !stop() {
                            read_once(rt, cfg, i + 1, &mut rng, s);
                        }
                    })
                })
                .collect();
            let mut wrng = thread_rng(cfg.seed, 0);
            let res = writer_loop(rt, cfg, &mut wrng, started, stop, &mut writer);
            if res.is_err() {
                failed.store(true, Ordering::Relaxed);
            }
            for h in handles {
                if let Err(e) = h.join() {
                    std::panic::resume_unwind(e);
                }
            }
            res
        })?;
    }
    let elapsed = started.elapsed().as_secs_f64();

    let serializability = monitor.finish()?;
    let audit = if cfg.collect {
        AuditSummary::from(&reclamation_audit(&rt)?)
    } else {
        AuditSummary::skipped()
    };
    let root = rt.quiescent_root()?;

    let mut freed = writer.freed;
    let mut reads = 0;
    for r in &readers {
        freed.merge(&r.freed);
        reads += r.reads;
    }
    if let Some(path) = &cfg.csv {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "commit,elapsed_us,live_versions")?;
        for s in &writer.series {
            writeln!(f, "{},{},{}", s.commit, s.micros, s.live)?;
        }
        f.flush()?;
    }

    let access = rt.vm().counters().map(|c| AccessReport::from(&c));
    let mut breaches = Vec::new();
    if writer.live.over_bound > 0 {
        breaches.push(format!(
            "live versions reached {} (bound {}) in {} samples",
            writer.live.max,
            p + 1,
            writer.live.over_bound
        ));
    }
    if !serializability.passed {
        breaches.push("a read matched no commit in its window".into());
    }
    if audit.performed && !audit.passed {
        breaches.push(format!(
            "reclamation audit: {} leaked, {} dangling, {} count mismatches",
            audit.leaked, audit.dangling, audit.count_mismatches
        ));
    }
    if let Some(a) = &access {
        if !a.announcement_budget_violations.is_empty() {
            breaches.push(format!(
                "announcement CAS budget exceeded on slots {:?}",
                a.announcement_budget_violations
            ));
        }
    }
    let rate = |n: u64| if elapsed > 0.0 { n as f64 / elapsed } else { 0.0 };
    Ok(BenchReport {
        command: "bench",
        algo: cfg.algo,
        threads: p,
        nu: cfg.nu,
        nq: cfg.nq,
        keys: cfg.keys,
        seed: cfg.seed,
        collect: cfg.collect,
        sequential: cfg.rounds.is_some(),
        elapsed_seconds: elapsed,
        commits: writer.commits,
        read_txns: reads,
        update_throughput: rate(writer.commits * cfg.nu as u64),
        query_throughput: rate(reads * cfg.nq as u64),
        max_live_versions: writer.live.max,
        avg_live_versions: writer.live.mean(),
        live_samples: writer.live.samples,
        live_bound: p + 1,
        live_bound_violations: writer.live.over_bound,
        access,
        allocated_tuples: rt.store().stats().allocated,
        tree_size: ptree::len(rt.store(), root),
        collect_freed_histogram: freed.buckets(),
        serializability,
        audit,
        breaches,
    })
}
