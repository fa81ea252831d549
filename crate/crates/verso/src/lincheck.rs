//! Randomized linearizability trials: short concurrent histories recorded
//! from the real object and checked against the sequential specification.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use verso_core::verify::{check_linearizable, VmEvent, VmEventKind, VmHistory, DEFAULT_OP_BOUND};
use verso_core::{DataHandle, ProcessId, VmOp, VmResult};

use crate::algo::{build_vm, Algo};
use crate::error::HarnessError;
use crate::history_file::HistoryFile;
use crate::yields::YieldInjector;

pub const INITIAL_DATA: DataHandle = DataHandle(0);

#[derive(Clone, Debug, PartialEq)]
pub struct LincheckConfig {
    pub algo: Algo,
    pub trials: u64,
    pub threads: usize,
    /// Upper bound on operations per history.
    pub ops: usize,
    pub seed: u64,
    pub yield_one_in: u64,
    /// Where failing histories are written.
    pub fail_dir: Option<PathBuf>,
}

impl Default for LincheckConfig {
    fn default() -> Self {
        LincheckConfig {
            algo: Algo::Waitfree,
            trials: 1000,
            threads: 3,
            ops: 12,
            seed: 1,
            yield_one_in: 3,
            fail_dir: None,
        }
    }
}

impl LincheckConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(2..=3).contains(&self.threads) {
            return Err(HarnessError::Config("threads must be 2 or 3".into()));
        }
        if self.ops < 2 || self.ops > DEFAULT_OP_BOUND {
            return Err(HarnessError::Config(format!("ops must be in 2..={DEFAULT_OP_BOUND}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LincheckReport {
    pub command: &'static str,
    pub algo: Algo,
    pub trials: u64,
    pub threads: usize,
    pub ops: usize,
    pub seed: u64,
    pub passed: u64,
    pub failed: u64,
    pub longest_history: usize,
    pub elapsed_seconds: f64,
    pub failure_files: Vec<String>,
    /// The first failing history in text form.
    pub first_failure: Option<String>,
}

impl LincheckReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Per-process scripts of whole transactions, at most `ops` operations in
/// total. Process 0 is the only writer.
pub fn scripts(rng: &mut SmallRng, threads: usize, ops: usize) -> Vec<Vec<VmOp>> {
    let mut out = vec![Vec::new(); threads];
    let mut left = ops;
    let mut data = INITIAL_DATA.0;
    while left >= 2 {
        let k = rng.random_range(0..threads);
        let p = ProcessId(k);
        out[k].push(VmOp::Acquire(p));
        if k == 0 && left >= 3 && rng.random_bool(0.6) {
            data += 1;
            out[k].push(VmOp::Set(p, DataHandle(data)));
            left -= 1;
        }
        out[k].push(VmOp::Release(p));
        left -= 2;
    }
    out
}

/// Runs one trial and returns its history.
pub fn record_trial(cfg: &LincheckConfig, trial: u64) -> Result<VmHistory, HarnessError> {
    let seed = cfg.seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ trial;
    let mut rng = SmallRng::seed_from_u64(seed);
    let scripts = scripts(&mut rng, cfg.threads, cfg.ops);
    let vm = build_vm(
        cfg.algo,
        cfg.threads,
        INITIAL_DATA,
        seed,
        YieldInjector::new(cfg.yield_one_in),
    )?;
    let vm = vm.as_ref();
    let seq = AtomicU64::new(0);
    let start = Barrier::new(cfg.threads);
    let mut events = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = scripts
            .iter()
            .enumerate()
            .map(|(k, script)| {
                let (seq, start) = (&seq, &start);
                scope.spawn(move || {
                    YieldInjector::seed_thread(seed ^ (k as u64 + 1) << 32);
                    let mut ev = Vec::with_capacity(2 * script.len());
                    let p = ProcessId(k);
                    start.wait();
                    for &op in script {
                        let stamp = || seq.fetch_add(1, Ordering::SeqCst);
                        ev.push(VmEvent {
                            seq: stamp(),
                            process: p,
                            kind: VmEventKind::Invoke(op),
                        });
                        let res = match op {
                            VmOp::Acquire(_) => VmResult::Data(vm.acquire(p)),
                            VmOp::Release(_) => VmResult::Released(vm.release(p)),
                            VmOp::Set(_, d) => {
                                vm.set(d);
                                VmResult::Unit
                            }
                        };
                        ev.push(VmEvent {
                            seq: stamp(),
                            process: p,
                            kind: VmEventKind::Respond(res),
                        });
                    }
                    ev
                })
            })
            .collect();
        for h in handles {
            match h.join() {
                Ok(ev) => events.extend(ev),
                Err(e) => std::panic::resume_unwind(e),
            }
        }
    });
    Ok(VmHistory::from_events(events))
}

pub fn run_lincheck(cfg: &LincheckConfig) -> Result<LincheckReport, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut report = LincheckReport {
        command: "lincheck",
        algo: cfg.algo,
        trials: cfg.trials,
        threads: cfg.threads,
        ops: cfg.ops,
        seed: cfg.seed,
        passed: 0,
        failed: 0,
        longest_history: 0,
        elapsed_seconds: 0.0,
        failure_files: Vec::new(),
        first_failure: None,
    };
    for trial in 0..cfg.trials {
        let h = record_trial(cfg, trial)?;
        report.longest_history = report.longest_history.max(h.len() / 2);
        if check_linearizable(&h, cfg.threads, INITIAL_DATA)?.passed() {
            report.passed += 1;
            continue;
        }
        report.failed += 1;
        let text = HistoryFile {
            processes: cfg.threads,
            initial: INITIAL_DATA,
            history: h,
        }
        .to_text();
        if let Some(dir) = &cfg.fail_dir {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}-trial{trial}.hist", cfg.algo));
            std::fs::write(&path, &text)?;
            report.failure_files.push(path.display().to_string());
        }
        report.first_failure.get_or_insert(text);
    }
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}
