//! Interleaving pressure: an instrument that yields the CPU at random
//! shared accesses.

use std::cell::RefCell;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use verso_core::instrument::{Instrument, OpClass, Tally};
use verso_core::{CounterSnapshot, ProcessId, StepCounters};

thread_local! {
    static RNG: RefCell<SmallRng> = RefCell::new(SmallRng::seed_from_u64(0));
}

/// Yields before roughly one in `one_in` shared accesses, optionally
/// forwarding everything to a [`StepCounters`].
#[derive(Debug)]
pub struct YieldInjector {
    one_in: u64,
    counters: Option<StepCounters>,
}

impl YieldInjector {
    /// `one_in == 0` disables yielding.
    pub fn new(one_in: u64) -> Self {
        YieldInjector { one_in, counters: None }
    }

    pub fn counting(one_in: u64, processes: usize) -> Self {
        YieldInjector {
            one_in,
            counters: Some(StepCounters::new(processes)),
        }
    }

    /// Seeds this thread's yield pattern.
    pub fn seed_thread(seed: u64) {
        RNG.with(|r| *r.borrow_mut() = SmallRng::seed_from_u64(seed));
    }

    fn roll(&self) -> bool {
        RNG.with(|r| r.borrow_mut().random_range(0..self.one_in) == 0)
    }
}

impl Instrument for YieldInjector {
    const ENABLED: bool = true;

    fn before_access(&self) {
        if self.one_in != 0 && self.roll() {
            std::thread::yield_now();
        }
    }

    fn on_op(&self, class: OpClass, k: Option<ProcessId>, tally: &Tally) {
        if let Some(c) = &self.counters {
            c.on_op(class, k, tally);
        }
    }

    fn on_announcement_cas(&self, slot: usize) {
        if let Some(c) = &self.counters {
            c.on_announcement_cas(slot);
        }
    }

    fn snapshot(&self) -> Option<CounterSnapshot> {
        self.counters.as_ref().map(StepCounters::totals)
    }
}
