//! 64-bit mixing used for treap priorities and probe start positions.

use core::sync::atomic::{AtomicU64, Ordering};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a bijective, well-avalanched hash of `x`.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// SplitMix64 generator usable through a shared reference.
#[derive(Debug)]
pub struct SharedSplitMix {
    state: AtomicU64,
}

impl SharedSplitMix {
    pub fn new(seed: u64) -> Self {
        SharedSplitMix {
            state: AtomicU64::new(seed),
        }
    }

    #[inline]
    pub fn next_u64(&self) -> u64 {
        mix64(self.state.fetch_add(GOLDEN_GAMMA, Ordering::Relaxed).wrapping_add(GOLDEN_GAMMA))
    }

    /// Uniform-ish value in `0..bound` (multiply-shift reduction).
    #[inline]
    pub fn below(&self, bound: usize) -> usize {
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }
}
