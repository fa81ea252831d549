#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use verso_core::oracle::{VmOp, VmResult};
use verso_core::verify::{VmEvent, VmEventKind, VmHistory};
use verso_core::{DataHandle, ProcessId, VersionMaintenance};

/// Runs operations against a VM and records invocations and responses.
#[derive(Default)]
pub struct Recorder {
    seq: AtomicU64,
    events: Mutex<Vec<VmEvent>>,
}

impl Recorder {
    fn stamp(&self, process: ProcessId, kind: VmEventKind) {
        let mut events = self.events.lock().unwrap();
        let seq = self.seq.fetch_add(1, Ordering::SeqCst);
        events.push(VmEvent { seq, process, kind });
    }

    pub fn run<V: VersionMaintenance>(&self, vm: &V, op: VmOp) -> VmResult {
        let k = op.process();
        self.stamp(k, VmEventKind::Invoke(op));
        let r = match op {
            VmOp::Acquire(k) => VmResult::Data(vm.acquire(k)),
            VmOp::Release(k) => VmResult::Released(vm.release(k)),
            VmOp::Set(_, d) => {
                vm.set(d);
                VmResult::Unit
            }
        };
        self.stamp(k, VmEventKind::Respond(r));
        r
    }

    pub fn acquire<V: VersionMaintenance>(&self, vm: &V, k: usize) -> DataHandle {
        match self.run(vm, VmOp::Acquire(ProcessId(k))) {
            VmResult::Data(d) => d,
            r => unreachable!("{r:?}"),
        }
    }

    pub fn release<V: VersionMaintenance>(&self, vm: &V, k: usize) -> bool {
        match self.run(vm, VmOp::Release(ProcessId(k))) {
            VmResult::Released(b) => b,
            r => unreachable!("{r:?}"),
        }
    }

    pub fn set<V: VersionMaintenance>(&self, vm: &V, k: usize, d: u64) {
        self.run(vm, VmOp::Set(ProcessId(k), DataHandle(d)));
    }

    pub fn history(&self) -> VmHistory {
        VmHistory::from_events(self.events.lock().unwrap().clone())
    }
}
