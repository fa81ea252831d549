//! Stress run of a bare version maintenance object guarding a tree in the
//! tuple store. Processes take turns as the writer; everyone else reads,
//! checks the snapshot it acquired, and sometimes builds private versions.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use verso_core::ptree::{self, TreeRoot, NODE_ARITY};
use verso_core::verify::audit_store;
use verso_core::{CreationLog, ProcessId, StoreError, TaggedValue, TupleStore, VersionMaintenance};

use crate::algo::{build_vm, Algo};
use crate::error::HarnessError;
use crate::report::{AccessReport, AuditSummary, LiveStats};
use crate::yields::YieldInjector;

#[derive(Clone, Debug, PartialEq)]
pub struct StressConfig {
    pub algo: Algo,
    pub threads: usize,
    pub seconds: f64,
    pub keys: usize,
    pub seed: u64,
    /// Yield before about one in this many shared accesses; 0 disables.
    pub yield_one_in: u64,
}

impl Default for StressConfig {
    fn default() -> Self {
        StressConfig {
            algo: Algo::Waitfree,
            threads: 8,
            seconds: 5.0,
            keys: 1000,
            seed: 1,
            yield_one_in: 64,
        }
    }
}

impl StressConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.threads == 0 || self.threads > self.algo.max_processes() {
            return Err(HarnessError::Config(format!(
                "threads must be in 1..={} for {}",
                self.algo.max_processes(),
                self.algo
            )));
        }
        if self.keys == 0 || self.keys > (1 << 30) {
            return Err(HarnessError::Config("keys must be in 1..=2^30".into()));
        }
        if !(self.seconds.is_finite() && self.seconds > 0.0) {
            return Err(HarnessError::Config("seconds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StressReport {
    pub command: &'static str,
    pub algo: Algo,
    pub threads: usize,
    pub keys: usize,
    pub seed: u64,
    pub yield_one_in: u64,
    pub elapsed_seconds: f64,
    pub sets: u64,
    pub reads: u64,
    pub local_versions: u64,
    /// Versions from the initial one up to the final current version.
    pub versions: u64,
    pub true_release_violations: u64,
    /// Up to 16 `(timestamp, true releases)` pairs that were wrong.
    pub true_release_examples: Vec<(u64, u32)>,
    pub max_live_versions: usize,
    pub avg_live_versions: f64,
    pub live_bound: usize,
    pub live_bound_violations: u64,
    pub snapshot_faults: u64,
    pub first_snapshot_fault: Option<String>,
    pub panics: Vec<String>,
    pub access: Option<AccessReport>,
    pub audit: AuditSummary,
    pub breaches: Vec<String>,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.breaches.is_empty()
    }
}

#[derive(Default)]
struct ThreadStats {
    sets: u64,
    reads: u64,
    local_versions: u64,
    live: LiveStats,
    true_releases: Vec<u64>,
    faults: u64,
    first_fault: Option<String>,
}

impl ThreadStats {
    fn fault(&mut self, msg: String) {
        self.faults += 1;
        self.first_fault.get_or_insert(msg);
    }
}

/// Walks the tree with checked reads, verifying key order and sums.
/// Returns the node count.
pub fn check_snapshot(store: &TupleStore, root: TreeRoot) -> Result<usize, String> {
    fn walk(store: &TupleStore, t: TaggedValue, lo: i64, hi: i64, n: &mut usize) -> Result<i64, String> {
        let h = match t {
            TaggedValue::Nil => return Ok(0),
            TaggedValue::Ref(h) => h,
            TaggedValue::Prim(x) => return Err(format!("primitive {x} in child slot")),
        };
        let get = |i| store.try_nth(h, i).map_err(|e: StoreError| e.to_string());
        let prim = |i| get(i)?.as_prim().ok_or_else(|| format!("node {h}: slot {i} is not a primitive"));
        let key = prim(2)?;
        if key < lo || key > hi {
            return Err(format!("node {h}: key {key} outside [{lo}, {hi}]"));
        }
        *n += 1;
        let left = walk(store, get(0)?, lo, key.saturating_sub(1), n)?;
        let right = walk(store, get(1)?, key.saturating_add(1), hi, n)?;
        let sum = prim(3)?.wrapping_add(left).wrapping_add(right);
        let stored = prim(4)?;
        if sum != stored {
            return Err(format!("node {h}: stored sum {stored}, computed {sum}"));
        }
        Ok(sum)
    }
    let mut n = 0;
    walk(store, root, i64::MIN, i64::MAX, &mut n)?;
    Ok(n)
}

fn mutate(
    store: &TupleStore,
    root: TreeRoot,
    rng: &mut SmallRng,
    key_space: i64,
    log: &mut CreationLog,
) -> Result<TreeRoot, StoreError> {
    let mut t = root;
    for _ in 0..rng.random_range(1..=4) {
        let key = rng.random_range(0..key_space);
        t = if rng.random_bool(0.3) {
            ptree::delete(store, t, key, log)?
        } else {
            ptree::insert(store, t, key, rng.random(), log)?
        };
    }
    Ok(t)
}

struct Shared<'a> {
    vm: &'a dyn VersionMaintenance,
    store: &'a TupleStore,
    writing: AtomicBool,
    deadline: Instant,
    key_space: i64,
    live_bound: usize,
    fixed_writer: bool,
}

fn worker(sh: &Shared<'_>, k: usize, seed: u64) -> ThreadStats {
    let mut rng = SmallRng::seed_from_u64(seed);
    YieldInjector::seed_thread(seed.rotate_left(17));
    let mut st = ThreadStats::default();
    let pk = ProcessId(k);
    while Instant::now() < sh.deadline {
        let may_write = if sh.fixed_writer { k == 0 } else { rng.random_ratio(1, 4) };
        if may_write
            && sh
                .writing
                .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
                .is_ok()
        {
            let (v, d) = sh.vm.acquire_version(pk);
            let root = TaggedValue::from_root_handle(d);
            let mut log = CreationLog::new();
            match mutate(sh.store, root, &mut rng, sh.key_space, &mut log)
                .and_then(|t| sh.store.output(t, &mut log))
            {
                Ok(p) => {
                    sh.vm.set(p.root.to_root_handle());
                    st.sets += 1;
                    st.live.add(sh.vm.occupied_slots(), sh.live_bound);
                }
                Err(e) => {
                    sh.store.discard(&mut log);
                    st.fault(format!("writer {k}: {e}"));
                }
            }
            if sh.vm.release(pk) {
                st.true_releases.push(v.timestamp);
                sh.store.collect(root);
            }
            sh.writing.store(false, Ordering::Release);
        } else {
            let (v, d) = sh.vm.acquire_version(pk);
            let root = TaggedValue::from_root_handle(d);
            if let Err(e) = check_snapshot(sh.store, root) {
                st.fault(format!("reader {k} on version {v}: {e}"));
            }
            st.reads += 1;
            if st.reads % 8 == 0 {
                let mut log = CreationLog::new();
                match mutate(sh.store, root, &mut rng, sh.key_space, &mut log) {
                    Ok(t) => {
                        if let Err(e) = check_snapshot(sh.store, t) {
                            st.fault(format!("local version of {k}: {e}"));
                        }
                        st.local_versions += 1;
                    }
                    Err(e) => st.fault(format!("local version of {k}: {e}")),
                }
                sh.store.discard(&mut log);
            }
            if sh.vm.release(pk) {
                st.true_releases.push(v.timestamp);
                sh.store.collect(root);
            }
        }
    }
    st
}

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

pub fn run_stress(cfg: &StressConfig) -> Result<StressReport, HarnessError> {
    cfg.validate()?;
    let p = cfg.threads;
    let key_space = 2 * cfg.keys as i64;
    let mut rng = SmallRng::seed_from_u64(cfg.seed);
    let store = TupleStore::new(NODE_ARITY);
    let pairs: Vec<(i64, i64)> = rand::seq::index::sample(&mut rng, key_space as usize, cfg.keys)
        .into_iter()
        .map(|key| (key as i64, 0))
        .collect();
    let mut log = CreationLog::new();
    let root = ptree::build(&store, &pairs, &mut log)?;
    let root = store.output(root, &mut log)?.root;
    let vm = build_vm(
        cfg.algo,
        p,
        root.to_root_handle(),
        cfg.seed,
        YieldInjector::counting(cfg.yield_one_in, p),
    )?;
    let (first, _) = vm.acquire_version(ProcessId(0));
    vm.release(ProcessId(0));

    let started = Instant::now();
    let shared = Shared {
        vm: vm.as_ref(),
        store: &store,
        writing: AtomicBool::new(false),
        deadline: started + Duration::from_secs_f64(cfg.seconds),
        key_space,
        live_bound: p + 1,
        fixed_writer: cfg.algo == Algo::LockedOracle,
    };
    let mut stats = Vec::new();
    let mut panics = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..p)
            .map(|k| {
                let shared = &shared;
                let seed = cfg.seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                scope.spawn(move || worker(shared, k, seed))
            })
            .collect();
        for h in handles {
            match h.join() {
                Ok(s) => stats.push(s),
                Err(e) => panics.push(panic_message(e.as_ref())),
            }
        }
    });
    let elapsed = started.elapsed().as_secs_f64();

    let (last, d) = vm.acquire_version(ProcessId(0));
    vm.release(ProcessId(0));
    let final_root = TaggedValue::from_root_handle(d);
    let audit = AuditSummary::from(&audit_store(&store, &[final_root]));

    let versions = last.timestamp - first.timestamp + 1;
    let mut counts = vec![0u32; versions as usize];
    let mut out_of_range = Vec::new();
    let mut live = LiveStats::default();
    let (mut sets, mut reads, mut local, mut faults) = (0, 0, 0, 0);
    let mut first_fault = None;
    for s in &stats {
        for &ts in &s.true_releases {
            match ts.checked_sub(first.timestamp).filter(|&i| i < versions) {
                Some(i) => counts[i as usize] += 1,
                None => out_of_range.push((ts, 1)),
            }
        }
        live.merge(&s.live);
        sets += s.sets;
        reads += s.reads;
        local += s.local_versions;
        faults += s.faults;
        if first_fault.is_none() {
            first_fault.clone_from(&s.first_fault);
        }
    }
    let mut bad: Vec<(u64, u32)> = counts
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c != u32::from(i as u64 + 1 != versions))
        .map(|(i, &c)| (first.timestamp + i as u64, c))
        .collect();
    bad.extend(out_of_range);
    let access = vm.counters().map(|c| AccessReport::from(&c));

    let mut breaches = Vec::new();
    if !panics.is_empty() {
        breaches.push(format!("{} worker threads panicked", panics.len()));
    }
    if !bad.is_empty() {
        breaches.push(format!("{} versions without exactly one true release", bad.len()));
    }
    if live.over_bound > 0 {
        breaches.push(format!("live versions reached {} (bound {})", live.max, p + 1));
    }
    if faults > 0 {
        breaches.push(format!("{faults} snapshot faults"));
    }
    if !audit.passed {
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
    Ok(StressReport {
        command: "stress",
        algo: cfg.algo,
        threads: p,
        keys: cfg.keys,
        seed: cfg.seed,
        yield_one_in: cfg.yield_one_in,
        elapsed_seconds: elapsed,
        sets,
        reads,
        local_versions: local,
        versions,
        true_release_violations: bad.len() as u64,
        true_release_examples: bad.into_iter().take(16).collect(),
        max_live_versions: live.max,
        avg_live_versions: live.mean(),
        live_bound: p + 1,
        live_bound_violations: live.over_bound,
        snapshot_faults: faults,
        first_snapshot_fault: first_fault,
        panics,
        access,
        audit,
        breaches,
    })
}
