//! Reference-counted immutable tuples.
//!
//! A [`TupleStore`] is an arena of fixed-arity tuples. Tuples are created
//! with [`TupleStore::tuple`], read with [`TupleStore::nth`] and never
//! mutated. Each tuple carries a count equal to the number of tuples that
//! reference it, plus one while it is a published version root. The count
//! is raised only by the creating writer; [`TupleStore::collect`] lowers it
//! and frees the tuple (then its children, transitively) when it reaches
//! zero. Reads never touch counts.
//!
//! Slots live in geometrically growing chunks that are never moved or
//! returned before the store is dropped, so a slot address stays valid for
//! the store's lifetime. Freed slots go to a tagged Treiber free list.
//! Every slot has a generation that is odd while allocated; handles carry
//! the generation they were created with, which makes stale handles
//! detectable.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::ptr;
use core::sync::atomic::{AtomicPtr, AtomicU32, AtomicU64, Ordering};

use thiserror::Error;

use crate::version::DataHandle;

/// Tuple arity used by the tree nodes.
pub const DEFAULT_ARITY: usize = 5;
/// Largest supported arity (two kind bits per child in one word).
pub const MAX_ARITY: usize = 32;

const BASE_CHUNK: usize = 1024;
const MAX_CHUNKS: usize = 22;
const NO_SLOT: u32 = u32::MAX;

const KIND_NIL: u64 = 0;
const KIND_PRIM: u64 = 1;
const KIND_REF: u64 = 2;

/// Name of an allocated tuple: slot index plus the slot generation at
/// creation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TupleHandle {
    index: u32,
    generation: u32,
}

impl TupleHandle {
    pub fn index(self) -> u32 {
        self.index
    }

    pub fn generation(self) -> u32 {
        self.generation
    }

    pub fn to_bits(self) -> u64 {
        (u64::from(self.index) << 32) | u64::from(self.generation)
    }

    pub fn from_bits(bits: u64) -> Self {
        TupleHandle {
            index: (bits >> 32) as u32,
            generation: bits as u32,
        }
    }
}

impl core::fmt::Display for TupleHandle {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "#{}@{}", self.index, self.generation)
    }
}

/// A tuple element.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub enum TaggedValue {
    #[default]
    Nil,
    Prim(i64),
    Ref(TupleHandle),
}

const NIL_ROOT: u64 = u64::MAX;

impl TaggedValue {
    pub fn as_ref(self) -> Option<TupleHandle> {
        match self {
            TaggedValue::Ref(h) => Some(h),
            _ => None,
        }
    }

    pub fn as_prim(self) -> Option<i64> {
        match self {
            TaggedValue::Prim(x) => Some(x),
            _ => None,
        }
    }

    /// Encodes a version root (`Ref` or `Nil`) as a data handle.
    pub fn to_root_handle(self) -> DataHandle {
        match self {
            TaggedValue::Nil => DataHandle(NIL_ROOT),
            TaggedValue::Ref(h) => DataHandle(h.to_bits()),
            TaggedValue::Prim(_) => panic!("a primitive cannot be a version root"),
        }
    }

    pub fn from_root_handle(d: DataHandle) -> Self {
        if d.0 == NIL_ROOT {
            TaggedValue::Nil
        } else {
            TaggedValue::Ref(TupleHandle::from_bits(d.0))
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Error)]
pub enum StoreError {
    #[error("tuple store exhausted ({0} slots)")]
    Exhausted(usize),
    #[error("expected {expected} values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("stale tuple handle {0}")]
    StaleHandle(TupleHandle),
    #[error("element index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("root {0} was not created in this run phase")]
    RootNotInLog(TupleHandle),
}

/// Tuples created by one writer during one run phase.
#[derive(Clone, Debug, Default)]
pub struct CreationLog {
    created: Vec<TupleHandle>,
}

impl CreationLog {
    pub fn new() -> Self {
        CreationLog::default()
    }

    pub fn len(&self) -> usize {
        self.created.len()
    }

    pub fn is_empty(&self) -> bool {
        self.created.is_empty()
    }

    pub fn contains(&self, h: TupleHandle) -> bool {
        self.created.contains(&h)
    }

    pub fn iter(&self) -> impl Iterator<Item = TupleHandle> + '_ {
        self.created.iter().copied()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct StoreStats {
    pub allocated: u64,
    pub total_created: u64,
    pub total_freed: u64,
}

/// Work done by one collect.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct CollectWork {
    pub freed: usize,
    /// Count decrements, one per reference dropped.
    pub decrements: usize,
}

impl core::ops::AddAssign for CollectWork {
    fn add_assign(&mut self, rhs: Self) {
        self.freed += rhs.freed;
        self.decrements += rhs.decrements;
    }
}

/// Result of publishing a root with [`TupleStore::output`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Published {
    pub root: TaggedValue,
    /// Tuples of the run phase that were unreachable from the root.
    pub orphans_freed: usize,
}

struct SlotHeader {
    refs: AtomicU64,
    generation: AtomicU32,
    next_free: AtomicU32,
    kinds: AtomicU64,
}

impl SlotHeader {
    fn new() -> Self {
        SlotHeader {
            refs: AtomicU64::new(0),
            generation: AtomicU32::new(0),
            next_free: AtomicU32::new(NO_SLOT),
            kinds: AtomicU64::new(0),
        }
    }
}

/// The tuple arena.
pub struct TupleStore {
    arity: usize,
    limit: usize,
    headers: [AtomicPtr<SlotHeader>; MAX_CHUNKS],
    values: [AtomicPtr<AtomicU64>; MAX_CHUNKS],
    /// `tag (32) | slot (32)`.
    free_head: AtomicU64,
    next_fresh: AtomicU64,
    created: AtomicU64,
    freed: AtomicU64,
}

// Chunk `c` holds `BASE_CHUNK << c` slots starting at `BASE_CHUNK * (2^c - 1)`.
#[inline]
fn locate(index: u32) -> (usize, usize) {
    let j = index as usize / BASE_CHUNK + 1;
    let chunk = (usize::BITS - 1 - j.leading_zeros()) as usize;
    let start = BASE_CHUNK * ((1 << chunk) - 1);
    (chunk, index as usize - start)
}

#[inline]
fn chunk_len(chunk: usize) -> usize {
    BASE_CHUNK << chunk
}

fn leak_slice<T>(items: Box<[T]>) -> *mut T {
    Box::into_raw(items) as *mut T
}

impl TupleStore {
    pub fn new(arity: usize) -> Self {
        Self::with_limit(arity, NO_SLOT as usize - 1)
    }

    /// Store refusing to hold more than `limit` tuples at once.
    pub fn with_limit(arity: usize, limit: usize) -> Self {
        assert!((1..=MAX_ARITY).contains(&arity), "arity must be in 1..={MAX_ARITY}");
        TupleStore {
            arity,
            limit: limit.min(NO_SLOT as usize - 1),
            headers: [const { AtomicPtr::new(ptr::null_mut()) }; MAX_CHUNKS],
            values: [const { AtomicPtr::new(ptr::null_mut()) }; MAX_CHUNKS],
            free_head: AtomicU64::new(u64::from(NO_SLOT)),
            next_fresh: AtomicU64::new(0),
            created: AtomicU64::new(0),
            freed: AtomicU64::new(0),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn stats(&self) -> StoreStats {
        // Read freed first so allocated never appears negative.
        let total_freed = self.freed.load(Ordering::SeqCst);
        let total_created = self.created.load(Ordering::SeqCst);
        StoreStats {
            allocated: total_created - total_freed,
            total_created,
            total_freed,
        }
    }

    #[inline]
    fn header(&self, index: u32) -> &SlotHeader {
        let (chunk, offset) = locate(index);
        let base = self.headers[chunk].load(Ordering::Acquire);
        debug_assert!(!base.is_null(), "slot {index} in an unallocated chunk");
        // SAFETY: chunks are installed before any index inside them is handed
        // out and are only freed in Drop; offset < chunk_len(chunk).
        unsafe { &*base.add(offset) }
    }

    fn try_header(&self, index: u32) -> Option<&SlotHeader> {
        if u64::from(index) >= self.next_fresh.load(Ordering::Acquire) {
            return None;
        }
        let (chunk, offset) = locate(index);
        let base = self.headers[chunk].load(Ordering::Acquire);
        // SAFETY: see `header`; a null chunk is still being installed.
        (!base.is_null()).then(|| unsafe { &*base.add(offset) })
    }

    #[inline]
    fn value(&self, index: u32, i: usize) -> &AtomicU64 {
        let (chunk, offset) = locate(index);
        let base = self.values[chunk].load(Ordering::Acquire);
        debug_assert!(!base.is_null());
        // SAFETY: as in `header`; the value chunk has `arity` words per slot.
        unsafe { &*base.add(offset * self.arity + i) }
    }

    fn ensure_chunk(&self, chunk: usize) {
        if !self.headers[chunk].load(Ordering::Acquire).is_null() {
            return;
        }
        let n = chunk_len(chunk);
        let values: Box<[AtomicU64]> = (0..n * self.arity).map(|_| AtomicU64::new(0)).collect();
        let values = leak_slice(values);
        if self.values[chunk]
            .compare_exchange(ptr::null_mut(), values, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            // SAFETY: `values` came from `leak_slice` with this length and lost the race.
            drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(values, n * self.arity)) });
        }
        let headers: Box<[SlotHeader]> = (0..n).map(|_| SlotHeader::new()).collect();
        let headers = leak_slice(headers);
        if self.headers[chunk]
            .compare_exchange(ptr::null_mut(), headers, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            // SAFETY: as above.
            drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(headers, n)) });
        }
    }

    fn allocate_slot(&self) -> Result<u32, StoreError> {
        let mut head = self.free_head.load(Ordering::Acquire);
        loop {
            let slot = head as u32;
            if slot == NO_SLOT {
                break;
            }
            let next = self.header(slot).next_free.load(Ordering::Acquire);
            let tag = (head >> 32).wrapping_add(1);
            match self.free_head.compare_exchange_weak(
                head,
                (tag << 32) | u64::from(next),
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Ok(slot),
                Err(h) => head = h,
            }
        }
        let fresh = self.next_fresh.fetch_add(1, Ordering::Relaxed);
        if fresh as usize >= self.limit {
            self.next_fresh.fetch_sub(1, Ordering::Relaxed);
            return Err(StoreError::Exhausted(self.limit));
        }
        let slot = fresh as u32;
        self.ensure_chunk(locate(slot).0);
        Ok(slot)
    }

    fn release_slot(&self, slot: u32) {
        let header = self.header(slot);
        let mut head = self.free_head.load(Ordering::Acquire);
        loop {
            header.next_free.store(head as u32, Ordering::Release);
            let tag = (head >> 32).wrapping_add(1);
            match self.free_head.compare_exchange_weak(
                head,
                (tag << 32) | u64::from(slot),
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return,
                Err(h) => head = h,
            }
        }
    }

    /// Whether `h` names a tuple that is still allocated.
    pub fn is_live_handle(&self, h: TupleHandle) -> bool {
        h.generation % 2 == 1
            && self
                .try_header(h.index)
                .is_some_and(|hd| hd.generation.load(Ordering::Acquire) == h.generation)
    }

    /// Creates a tuple holding `values` with count zero, raising the count
    /// of every referenced tuple, and logs it in `log`.
    pub fn tuple(&self, values: &[TaggedValue], log: &mut CreationLog) -> Result<TupleHandle, StoreError> {
        if values.len() != self.arity {
            return Err(StoreError::ArityMismatch {
                expected: self.arity,
                got: values.len(),
            });
        }
        for v in values {
            if let TaggedValue::Ref(h) = *v {
                if !self.is_live_handle(h) {
                    return Err(StoreError::StaleHandle(h));
                }
            }
        }
        let slot = self.allocate_slot()?;
        let header = self.header(slot);
        let mut kinds = 0u64;
        for (i, v) in values.iter().enumerate() {
            let (kind, word) = match *v {
                TaggedValue::Nil => (KIND_NIL, 0),
                TaggedValue::Prim(x) => (KIND_PRIM, x as u64),
                TaggedValue::Ref(h) => (KIND_REF, h.to_bits()),
            };
            kinds |= kind << (2 * i);
            self.value(slot, i).store(word, Ordering::Relaxed);
        }
        header.kinds.store(kinds, Ordering::Relaxed);
        header.refs.store(0, Ordering::Relaxed);
        let generation = header.generation.load(Ordering::Relaxed).wrapping_add(1);
        header.generation.store(generation, Ordering::Release);
        for v in values {
            if let TaggedValue::Ref(h) = *v {
                self.header(h.index).refs.fetch_add(1, Ordering::AcqRel);
            }
        }
        self.created.fetch_add(1, Ordering::SeqCst);
        let h = TupleHandle { index: slot, generation };
        log.created.push(h);
        Ok(h)
    }

    #[inline]
    fn read_element(&self, t: TupleHandle, i: usize) -> TaggedValue {
        let kinds = self.header(t.index).kinds.load(Ordering::Acquire);
        let word = self.value(t.index, i).load(Ordering::Acquire);
        match (kinds >> (2 * i)) & 3 {
            KIND_PRIM => TaggedValue::Prim(word as i64),
            KIND_REF => TaggedValue::Ref(TupleHandle::from_bits(word)),
            _ => TaggedValue::Nil,
        }
    }

    /// Element `i` of `t`. Debug builds panic on a stale handle.
    #[inline]
    pub fn nth(&self, t: TupleHandle, i: usize) -> TaggedValue {
        debug_assert!(i < self.arity, "element {i} out of range");
        debug_assert!(self.is_live_handle(t), "stale tuple handle {t}");
        self.read_element(t, i)
    }

    /// Checked element read.
    pub fn try_nth(&self, t: TupleHandle, i: usize) -> Result<TaggedValue, StoreError> {
        if i >= self.arity {
            return Err(StoreError::IndexOutOfRange { index: i, arity: self.arity });
        }
        if !self.is_live_handle(t) {
            return Err(StoreError::StaleHandle(t));
        }
        let v = self.read_element(t, i);
        // A concurrent free between the check and the read is caught here.
        if !self.is_live_handle(t) {
            return Err(StoreError::StaleHandle(t));
        }
        Ok(v)
    }

    /// Current count of `t`, or `None` for a stale handle.
    pub fn ref_count(&self, t: TupleHandle) -> Option<u64> {
        self.is_live_handle(t)
            .then(|| self.header(t.index).refs.load(Ordering::Acquire))
    }

    /// Drops one count on `x` and frees everything that becomes
    /// unreferenced. Returns the number of tuples freed.
    ///
    /// The caller must own one outstanding count on `x`.
    pub fn collect(&self, x: TaggedValue) -> usize {
        self.collect_with_work(x).freed
    }

    pub fn collect_with_work(&self, x: TaggedValue) -> CollectWork {
        let mut work = CollectWork::default();
        let mut pending: Vec<TupleHandle> = Vec::new();
        if let TaggedValue::Ref(h) = x {
            pending.push(h);
        }
        while let Some(h) = pending.pop() {
            assert!(self.is_live_handle(h), "collect of stale tuple handle {h}");
            let header = self.header(h.index);
            let before = header.refs.fetch_sub(1, Ordering::AcqRel);
            work.decrements += 1;
            assert!(before != 0, "collect of {h} with count 0 (double collect)");
            if before == 1 {
                for i in 0..self.arity {
                    if let TaggedValue::Ref(child) = self.read_element(h, i) {
                        pending.push(child);
                    }
                }
                self.free(h);
                work.freed += 1;
            }
        }
        work
    }

    fn free(&self, h: TupleHandle) {
        let header = self.header(h.index);
        header
            .generation
            .store(h.generation.wrapping_add(1), Ordering::Release);
        self.freed.fetch_add(1, Ordering::SeqCst);
        self.release_slot(h.index);
    }

    /// Publishes `root` as a version root: raises its count and frees
    /// every tuple of `log` left unreferenced. Clears `log`.
    ///
    /// A `Ref` root must have been created in this run phase; otherwise
    /// nothing changes and `RootNotInLog` is returned.
    pub fn output(&self, root: TaggedValue, log: &mut CreationLog) -> Result<Published, StoreError> {
        let keep = match root {
            TaggedValue::Ref(h) => {
                if !log.contains(h) {
                    return Err(StoreError::RootNotInLog(h));
                }
                self.header(h.index).refs.fetch_add(1, Ordering::AcqRel);
                Some(h)
            }
            TaggedValue::Nil => None,
            TaggedValue::Prim(_) => panic!("a primitive cannot be a version root"),
        };
        let mut orphans_freed = 0;
        for y in log.created.drain(..) {
            if Some(y) == keep {
                continue;
            }
            // Already freed through an orphan parent.
            if !self.is_live_handle(y) {
                continue;
            }
            if self.header(y.index).refs.load(Ordering::Acquire) == 0 {
                self.header(y.index).refs.fetch_add(1, Ordering::AcqRel);
                orphans_freed += self.collect(TaggedValue::Ref(y));
            }
        }
        Ok(Published { root, orphans_freed })
    }

    /// Frees every unreferenced tuple of `log` (a run phase whose result is
    /// not published). Returns the number freed.
    pub fn discard(&self, log: &mut CreationLog) -> usize {
        self.output(TaggedValue::Nil, log)
            .map(|p| p.orphans_freed)
            .unwrap_or(0)
    }

    /// All currently allocated tuples. Only meaningful at quiescence.
    pub fn allocated_handles(&self) -> Vec<TupleHandle> {
        let n = self.next_fresh.load(Ordering::Acquire) as u32;
        (0..n)
            .filter_map(|index| {
                let generation = self.try_header(index)?.generation.load(Ordering::Acquire);
                (generation % 2 == 1).then_some(TupleHandle { index, generation })
            })
            .collect()
    }
}

impl Drop for TupleStore {
    fn drop(&mut self) {
        for chunk in 0..MAX_CHUNKS {
            let n = chunk_len(chunk);
            let headers = *self.headers[chunk].get_mut();
            if !headers.is_null() {
                // SAFETY: installed by `ensure_chunk` with exactly this length.
                drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(headers, n)) });
            }
            let values = *self.values[chunk].get_mut();
            if !values.is_null() {
                // SAFETY: as above.
                drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(values, n * self.arity)) });
            }
        }
    }
}

impl core::fmt::Debug for TupleStore {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TupleStore")
            .field("arity", &self.arity)
            .field("stats", &self.stats())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    use TaggedValue::{Nil, Prim, Ref};

    fn store() -> TupleStore {
        TupleStore::new(3)
    }

    /// Reachability oracle: every tuple reachable from `root`.
    fn reachable(s: &TupleStore, root: TaggedValue) -> BTreeSet<TupleHandle> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<TaggedValue> = vec![root];
        while let Some(v) = stack.pop() {
            if let Ref(h) = v {
                if seen.insert(h) {
                    stack.extend((0..s.arity()).map(|i| s.try_nth(h, i).unwrap()));
                }
            }
        }
        seen
    }

    /// In-degree oracle over all allocated tuples.
    fn in_degrees(s: &TupleStore) -> alloc::collections::BTreeMap<TupleHandle, u64> {
        let mut deg = alloc::collections::BTreeMap::new();
        for h in s.allocated_handles() {
            deg.entry(h).or_insert(0);
            for i in 0..s.arity() {
                if let Ref(c) = s.nth(h, i) {
                    *deg.entry(c).or_insert(0) += 1;
                }
            }
        }
        deg
    }

    #[test]
    fn locate_covers_chunks_contiguously() {
        assert_eq!(locate(0), (0, 0));
        assert_eq!(locate(1023), (0, 1023));
        assert_eq!(locate(1024), (1, 0));
        assert_eq!(locate(3071), (1, 2047));
        assert_eq!(locate(3072), (2, 0));
    }

    #[test]
    fn fresh_tuple_has_zero_count() {
        let s = store();
        let mut log = CreationLog::new();
        let h = s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        assert_eq!(s.ref_count(h), Some(0));
        assert_eq!(s.stats(), StoreStats { allocated: 1, total_created: 1, total_freed: 0 });
        assert_eq!(log.iter().collect::<Vec<_>>(), vec![h]);
    }

    #[test]
    fn duplicate_references_count_twice() {
        let s = store();
        let mut log = CreationLog::new();
        let a = s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        s.tuple(&[Ref(a), Ref(a), Nil], &mut log).unwrap();
        assert_eq!(s.ref_count(a), Some(2));
    }

    #[test]
    fn chain_counts_match_in_degree() {
        let s = store();
        let mut log = CreationLog::new();
        let leaf = s.tuple(&[Prim(0), Nil, Nil], &mut log).unwrap();
        let mid = s.tuple(&[Ref(leaf), Nil, Nil], &mut log).unwrap();
        let root = s.tuple(&[Ref(mid), Nil, Nil], &mut log).unwrap();
        let deg = in_degrees(&s);
        for h in [leaf, mid, root] {
            assert_eq!(s.ref_count(h), Some(deg[&h]));
        }
        assert_eq!((s.ref_count(leaf), s.ref_count(mid), s.ref_count(root)), (Some(1), Some(1), Some(0)));
    }

    #[test]
    fn nth_is_a_pure_read() {
        let s = store();
        let mut log = CreationLog::new();
        let a = s.tuple(&[Prim(-3), Nil, Nil], &mut log).unwrap();
        let t = s.tuple(&[Prim(7), Ref(a), Prim(i64::MIN)], &mut log).unwrap();
        assert_eq!(s.nth(t, 0), Prim(7));
        assert_eq!(s.nth(t, 1), Ref(a));
        assert_eq!(s.nth(t, 2), Prim(i64::MIN));
        assert_eq!(s.nth(t, 0), s.nth(t, 0));
        assert_eq!(s.ref_count(a), Some(1));
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "stale tuple handle")]
    fn nth_on_freed_handle_faults_in_debug() {
        let s = store();
        let mut log = CreationLog::new();
        let a = s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        s.output(Ref(a), &mut log).unwrap();
        s.collect(Ref(a));
        s.nth(a, 0);
    }

    #[test]
    fn try_nth_reports_stale_and_range_errors() {
        let s = store();
        let mut log = CreationLog::new();
        let a = s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        assert_eq!(s.try_nth(a, 3), Err(StoreError::IndexOutOfRange { index: 3, arity: 3 }));
        s.output(Ref(a), &mut log).unwrap();
        assert_eq!(s.collect(Ref(a)), 1);
        assert_eq!(s.try_nth(a, 0), Err(StoreError::StaleHandle(a)));
        // The slot is reused under a new generation.
        let b = s.tuple(&[Prim(2), Nil, Nil], &mut log).unwrap();
        assert_eq!(b.index(), a.index());
        assert_ne!(b.generation(), a.generation());
        assert_eq!(s.try_nth(a, 0), Err(StoreError::StaleHandle(a)));
        assert_eq!(s.try_nth(b, 0), Ok(Prim(2)));
    }

    #[test]
    fn arity_and_stale_inputs_are_rejected() {
        let s = store();
        let mut log = CreationLog::new();
        assert_eq!(
            s.tuple(&[Nil], &mut log),
            Err(StoreError::ArityMismatch { expected: 3, got: 1 })
        );
        let a = s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        s.discard(&mut log);
        assert_eq!(s.tuple(&[Ref(a), Nil, Nil], &mut log), Err(StoreError::StaleHandle(a)));
    }

    #[test]
    fn exhaustion_is_an_error() {
        let s = TupleStore::with_limit(3, 2);
        let mut log = CreationLog::new();
        s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        assert_eq!(s.tuple(&[Nil, Nil, Nil], &mut log), Err(StoreError::Exhausted(2)));
        s.discard(&mut log);
        assert!(s.tuple(&[Nil, Nil, Nil], &mut log).is_ok());
    }

    #[test]
    fn single_root_collect_frees_one() {
        let s = store();
        let mut log = CreationLog::new();
        let a = s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        s.output(Ref(a), &mut log).unwrap();
        assert_eq!(s.ref_count(a), Some(1));
        assert_eq!(s.collect(Ref(a)), 1);
        assert_eq!(s.stats().allocated, 0);
    }

    #[test]
    fn diamond_collect_frees_all_four() {
        let s = store();
        let mut log = CreationLog::new();
        let d = s.tuple(&[Prim(4), Nil, Nil], &mut log).unwrap();
        let b = s.tuple(&[Ref(d), Nil, Nil], &mut log).unwrap();
        let c = s.tuple(&[Ref(d), Nil, Nil], &mut log).unwrap();
        let a = s.tuple(&[Ref(b), Ref(c), Nil], &mut log).unwrap();
        let p = s.output(Ref(a), &mut log).unwrap();
        assert_eq!(p.orphans_freed, 0);
        let expected = reachable(&s, Ref(a)).len();
        assert_eq!(expected, 4);
        let work = s.collect_with_work(Ref(a));
        assert_eq!(work, CollectWork { freed: 4, decrements: 5 });
        assert_eq!(s.stats(), StoreStats { allocated: 0, total_created: 4, total_freed: 4 });
    }

    #[test]
    fn collecting_old_version_frees_only_its_private_part() {
        let s = store();
        let mut log = CreationLog::new();
        let shared = s.tuple(&[Prim(9), Nil, Nil], &mut log).unwrap();
        let old_priv = s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        let old = s.tuple(&[Ref(shared), Ref(old_priv), Nil], &mut log).unwrap();
        s.output(Ref(old), &mut log).unwrap();

        let new_priv = s.tuple(&[Prim(2), Nil, Nil], &mut log).unwrap();
        let new = s.tuple(&[Ref(shared), Ref(new_priv), Nil], &mut log).unwrap();
        s.output(Ref(new), &mut log).unwrap();

        let only_old = reachable(&s, Ref(old))
            .difference(&reachable(&s, Ref(new)))
            .count();
        assert_eq!(s.collect(Ref(old)), only_old);
        assert_eq!(only_old, 2);
        assert_eq!(reachable(&s, Ref(new)).len() as u64, s.stats().allocated);
    }

    #[test]
    fn output_without_orphans_keeps_everything() {
        let s = store();
        let mut log = CreationLog::new();
        let x = s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        let p = s.output(Ref(x), &mut log).unwrap();
        assert_eq!((p.root, p.orphans_freed), (Ref(x), 0));
        assert_eq!(s.ref_count(x), Some(1));
        assert!(log.is_empty());
    }

    #[test]
    fn output_frees_orphans() {
        let s = store();
        let mut log = CreationLog::new();
        let x = s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        assert_eq!(s.output(Ref(x), &mut log).unwrap().orphans_freed, 1);
        assert_eq!(s.stats().allocated, 1);
    }

    #[test]
    fn output_frees_discarded_subtree() {
        let s = store();
        let mut log = CreationLog::new();
        let x = s.tuple(&[Prim(0), Nil, Nil], &mut log).unwrap();
        // Five-tuple subtree built and abandoned; leaves logged first so the
        // sweep meets referenced tuples before their parents.
        let l1 = s.tuple(&[Prim(1), Nil, Nil], &mut log).unwrap();
        let l2 = s.tuple(&[Prim(2), Nil, Nil], &mut log).unwrap();
        let m1 = s.tuple(&[Ref(l1), Ref(l2), Nil], &mut log).unwrap();
        let m2 = s.tuple(&[Ref(l2), Nil, Nil], &mut log).unwrap();
        let top = s.tuple(&[Ref(m1), Ref(m2), Nil], &mut log).unwrap();
        let discarded = reachable(&s, Ref(top)).len();
        assert_eq!(s.output(Ref(x), &mut log).unwrap().orphans_freed, discarded);
        assert_eq!(discarded, 5);
    }

    #[test]
    fn output_rejects_foreign_root() {
        let s = store();
        let mut log = CreationLog::new();
        let x = s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        s.output(Ref(x), &mut log).unwrap();
        let y = s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        assert_eq!(s.output(Ref(x), &mut log), Err(StoreError::RootNotInLog(x)));
        assert!(log.contains(y));
        assert_eq!(s.ref_count(x), Some(1));
    }

    #[test]
    #[should_panic(expected = "double collect")]
    fn double_collect_is_fatal() {
        let s = store();
        let mut log = CreationLog::new();
        let a = s.tuple(&[Nil, Nil, Nil], &mut log).unwrap();
        let _root = s.tuple(&[Ref(a), Nil, Nil], &mut log).unwrap();
        // Simulate a count already dropped by an earlier collect.
        s.header(a.index).refs.store(0, Ordering::SeqCst);
        s.collect(Ref(a));
    }

    #[test]
    fn stats_track_create_and_free() {
        let s = store();
        assert_eq!(s.stats(), StoreStats::default());
        let mut log = CreationLog::new();
        let d = s.tuple(&[Prim(4), Nil, Nil], &mut log).unwrap();
        let b = s.tuple(&[Ref(d), Nil, Nil], &mut log).unwrap();
        let c = s.tuple(&[Ref(d), Nil, Nil], &mut log).unwrap();
        let a = s.tuple(&[Ref(b), Ref(c), Nil], &mut log).unwrap();
        s.output(Ref(a), &mut log).unwrap();
        s.collect(Ref(a));
        let st = s.stats();
        assert_eq!(st.allocated, 0);
        assert_eq!(st.allocated, st.total_created - st.total_freed);
    }

    #[test]
    fn grows_across_chunks() {
        let s = TupleStore::new(2);
        let mut log = CreationLog::new();
        let mut prev = Nil;
        for i in 0..5000 {
            prev = Ref(s.tuple(&[Prim(i), prev], &mut log).unwrap());
        }
        s.output(prev, &mut log).unwrap();
        assert_eq!(s.stats().allocated, 5000);
        assert_eq!(s.collect(prev), 5000);
        assert_eq!(s.allocated_handles().len(), 0);
    }

    #[test]
    fn root_handle_encoding() {
        assert_eq!(TaggedValue::from_root_handle(Nil.to_root_handle()), Nil);
        let h = TupleHandle { index: 17, generation: 3 };
        assert_eq!(TaggedValue::from_root_handle(Ref(h).to_root_handle()), Ref(h));
    }
}
