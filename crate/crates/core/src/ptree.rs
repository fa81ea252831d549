//! Persistent sum-augmented treap built from store tuples by path copying.
//!
//! Node layout (arity 5, extra slots are `Nil`):
//!
//! | slot | content            |
//! |------|--------------------|
//! | 0    | left child or Nil  |
//! | 1    | right child or Nil |
//! | 2    | key                |
//! | 3    | value              |
//! | 4    | subtree value sum  |
//!
//! Priorities are a hash of the key, so the shape of a tree depends only on
//! its key set. Updates never modify a node: they allocate copies of the
//! nodes on the search path (and of the nodes touched by rotations) and
//! share everything else with the input tree. Sums use wrapping
//! arithmetic.

use alloc::vec;
use alloc::vec::Vec;

use crate::mix::mix64;
use crate::store::{CreationLog, StoreError, TaggedValue, TupleHandle, TupleStore};

/// A tree version: `Ref` to the root node, or `Nil` for the empty tree.
pub type TreeRoot = TaggedValue;

const LEFT: usize = 0;
const RIGHT: usize = 1;
const KEY: usize = 2;
const VALUE: usize = 3;
const SUM: usize = 4;

/// Smallest store arity able to hold a node.
pub const NODE_ARITY: usize = 5;

#[inline]
fn priority(key: i64) -> u64 {
    mix64(key as u64)
}

#[derive(Clone, Copy, Debug)]
struct Node {
    left: TaggedValue,
    right: TaggedValue,
    key: i64,
    value: i64,
}

#[inline]
fn prim(store: &TupleStore, h: TupleHandle, i: usize) -> i64 {
    match store.nth(h, i) {
        TaggedValue::Prim(x) => x,
        other => panic!("malformed tree node {h}: slot {i} holds {other:?}"),
    }
}

#[inline]
fn read(store: &TupleStore, h: TupleHandle) -> Node {
    Node {
        left: store.nth(h, LEFT),
        right: store.nth(h, RIGHT),
        key: prim(store, h, KEY),
        value: prim(store, h, VALUE),
    }
}

#[inline]
fn sum_of(store: &TupleStore, t: TaggedValue) -> i64 {
    match t {
        TaggedValue::Ref(h) => prim(store, h, SUM),
        _ => 0,
    }
}

fn make(
    store: &TupleStore,
    log: &mut CreationLog,
    left: TaggedValue,
    right: TaggedValue,
    key: i64,
    value: i64,
) -> Result<TaggedValue, StoreError> {
    let sum = value
        .wrapping_add(sum_of(store, left))
        .wrapping_add(sum_of(store, right));
    let mut slots = [TaggedValue::Nil; crate::store::MAX_ARITY];
    slots[LEFT] = left;
    slots[RIGHT] = right;
    slots[KEY] = TaggedValue::Prim(key);
    slots[VALUE] = TaggedValue::Prim(value);
    slots[SUM] = TaggedValue::Prim(sum);
    store
        .tuple(&slots[..store.arity()], log)
        .map(TaggedValue::Ref)
}

fn node_key(store: &TupleStore, t: TaggedValue) -> Option<i64> {
    t.as_ref().map(|h| prim(store, h, KEY))
}

/// New version with `key` mapped to `value`.
pub fn insert(
    store: &TupleStore,
    root: TreeRoot,
    key: i64,
    value: i64,
    log: &mut CreationLog,
) -> Result<TreeRoot, StoreError> {
    debug_assert!(store.arity() >= NODE_ARITY);
    let h = match root {
        TaggedValue::Ref(h) => h,
        _ => return make(store, log, TaggedValue::Nil, TaggedValue::Nil, key, value),
    };
    let n = read(store, h);
    if key == n.key {
        return make(store, log, n.left, n.right, key, value);
    }
    let my_prio = priority(n.key);
    if key < n.key {
        let left = insert(store, n.left, key, value, log)?;
        let l = read(store, left.as_ref().expect("insert returns a node"));
        if priority(l.key) > my_prio {
            // Rotate right; the fresh `left` copy is left for output to reclaim.
            let lowered = make(store, log, l.right, n.right, n.key, n.value)?;
            return make(store, log, l.left, lowered, l.key, l.value);
        }
        make(store, log, left, n.right, n.key, n.value)
    } else {
        let right = insert(store, n.right, key, value, log)?;
        let r = read(store, right.as_ref().expect("insert returns a node"));
        if priority(r.key) > my_prio {
            let lowered = make(store, log, n.left, r.left, n.key, n.value)?;
            return make(store, log, lowered, r.right, r.key, r.value);
        }
        make(store, log, n.left, right, n.key, n.value)
    }
}

/// Merges two treaps where every key of `a` is below every key of `b`.
fn join(store: &TupleStore, a: TaggedValue, b: TaggedValue, log: &mut CreationLog) -> Result<TaggedValue, StoreError> {
    match (a, b) {
        (TaggedValue::Ref(ha), TaggedValue::Ref(hb)) => {
            let na = read(store, ha);
            let nb = read(store, hb);
            if priority(na.key) > priority(nb.key) {
                let right = join(store, na.right, b, log)?;
                make(store, log, na.left, right, na.key, na.value)
            } else {
                let left = join(store, a, nb.left, log)?;
                make(store, log, left, nb.right, nb.key, nb.value)
            }
        }
        (TaggedValue::Ref(_), _) => Ok(a),
        _ => Ok(b),
    }
}

/// New version without `key`. The search path is copied even when the key
/// is absent, so a non-empty result is always a fresh root.
pub fn delete(store: &TupleStore, root: TreeRoot, key: i64, log: &mut CreationLog) -> Result<TreeRoot, StoreError> {
    let h = match root {
        TaggedValue::Ref(h) => h,
        _ => return Ok(TaggedValue::Nil),
    };
    let n = read(store, h);
    if key < n.key {
        let left = delete(store, n.left, key, log)?;
        make(store, log, left, n.right, n.key, n.value)
    } else if key > n.key {
        let right = delete(store, n.right, key, log)?;
        make(store, log, n.left, right, n.key, n.value)
    } else {
        join(store, n.left, n.right, log)
    }
}

pub fn lookup(store: &TupleStore, root: TreeRoot, key: i64) -> Option<i64> {
    let mut t = root;
    while let TaggedValue::Ref(h) = t {
        let k = prim(store, h, KEY);
        t = match key.cmp(&k) {
            core::cmp::Ordering::Equal => return Some(prim(store, h, VALUE)),
            core::cmp::Ordering::Less => store.nth(h, LEFT),
            core::cmp::Ordering::Greater => store.nth(h, RIGHT),
        };
    }
    None
}

/// Sum of values with keys `>= lo` in `t`.
fn suffix_sum(store: &TupleStore, mut t: TaggedValue, lo: i64) -> i64 {
    let mut acc = 0i64;
    while let TaggedValue::Ref(h) = t {
        if prim(store, h, KEY) >= lo {
            acc = acc
                .wrapping_add(prim(store, h, VALUE))
                .wrapping_add(sum_of(store, store.nth(h, RIGHT)));
            t = store.nth(h, LEFT);
        } else {
            t = store.nth(h, RIGHT);
        }
    }
    acc
}

/// Sum of values with keys `<= hi` in `t`.
fn prefix_sum(store: &TupleStore, mut t: TaggedValue, hi: i64) -> i64 {
    let mut acc = 0i64;
    while let TaggedValue::Ref(h) = t {
        if prim(store, h, KEY) <= hi {
            acc = acc
                .wrapping_add(prim(store, h, VALUE))
                .wrapping_add(sum_of(store, store.nth(h, LEFT)));
            t = store.nth(h, RIGHT);
        } else {
            t = store.nth(h, LEFT);
        }
    }
    acc
}

/// Sum of values with keys in `lo..=hi` (0 when `lo > hi`), visiting
/// O(depth) nodes.
pub fn range_sum(store: &TupleStore, root: TreeRoot, lo: i64, hi: i64) -> i64 {
    if lo > hi {
        return 0;
    }
    let mut t = root;
    while let TaggedValue::Ref(h) = t {
        let k = prim(store, h, KEY);
        if k < lo {
            t = store.nth(h, RIGHT);
        } else if k > hi {
            t = store.nth(h, LEFT);
        } else {
            return prim(store, h, VALUE)
                .wrapping_add(suffix_sum(store, store.nth(h, LEFT), lo))
                .wrapping_add(prefix_sum(store, store.nth(h, RIGHT), hi));
        }
    }
    0
}

/// Sum of all values (the root's stored sum).
pub fn total(store: &TupleStore, root: TreeRoot) -> i64 {
    sum_of(store, root)
}

/// Tree holding `pairs`; later duplicates win. Builds the treap directly
/// from the sorted keys, allocating exactly one tuple per distinct key.
pub fn build(store: &TupleStore, pairs: &[(i64, i64)], log: &mut CreationLog) -> Result<TreeRoot, StoreError> {
    let mut sorted: Vec<(usize, i64, i64)> = pairs.iter().enumerate().map(|(i, &(k, v))| (i, k, v)).collect();
    sorted.sort_unstable_by_key(|&(i, k, _)| (k, core::cmp::Reverse(i)));
    sorted.dedup_by_key(|e| e.1);
    let n = sorted.len();
    if n == 0 {
        return Ok(TaggedValue::Nil);
    }
    // Cartesian tree on priorities over the sorted keys.
    const NONE: usize = usize::MAX;
    let mut left = vec![NONE; n];
    let mut right = vec![NONE; n];
    let mut spine: Vec<usize> = Vec::new();
    for i in 0..n {
        let p = priority(sorted[i].1);
        let mut last = NONE;
        while let Some(&top) = spine.last() {
            if priority(sorted[top].1) < p {
                last = top;
                spine.pop();
            } else {
                break;
            }
        }
        left[i] = last;
        if let Some(&top) = spine.last() {
            right[top] = i;
        }
        spine.push(i);
    }
    let root = spine[0];
    // Post-order creation.
    let mut made = vec![TaggedValue::Nil; n];
    let mut stack = vec![(root, false)];
    while let Some((i, expanded)) = stack.pop() {
        if expanded {
            let l = if left[i] == NONE { TaggedValue::Nil } else { made[left[i]] };
            let r = if right[i] == NONE { TaggedValue::Nil } else { made[right[i]] };
            made[i] = make(store, log, l, r, sorted[i].1, sorted[i].2)?;
        } else {
            stack.push((i, true));
            for child in [left[i], right[i]] {
                if child != NONE {
                    stack.push((child, false));
                }
            }
        }
    }
    Ok(made[root])
}

/// In-order `(key, value)` pairs.
pub fn to_vec(store: &TupleStore, root: TreeRoot) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut stack: Vec<TupleHandle> = Vec::new();
    let mut t = root;
    loop {
        while let TaggedValue::Ref(h) = t {
            stack.push(h);
            t = store.nth(h, LEFT);
        }
        let Some(h) = stack.pop() else { break };
        out.push((prim(store, h, KEY), prim(store, h, VALUE)));
        t = store.nth(h, RIGHT);
    }
    out
}

/// Number of nodes.
pub fn len(store: &TupleStore, root: TreeRoot) -> usize {
    let mut n = 0;
    let mut stack = vec![root];
    while let Some(t) = stack.pop() {
        if let TaggedValue::Ref(h) = t {
            n += 1;
            stack.push(store.nth(h, LEFT));
            stack.push(store.nth(h, RIGHT));
        }
    }
    n
}

pub fn depth(store: &TupleStore, root: TreeRoot) -> usize {
    match root {
        TaggedValue::Ref(h) => 1 + depth(store, store.nth(h, LEFT)).max(depth(store, store.nth(h, RIGHT))),
        _ => 0,
    }
}

/// A broken tree invariant found by [`validate`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TreeDefect {
    KeyOrder { key: i64 },
    HeapOrder { parent: i64, child: i64 },
    Sum { key: i64, stored: i64, computed: i64 },
}

/// Checks search order, heap order on priorities and every stored sum.
/// Returns the node count.
pub fn validate(store: &TupleStore, root: TreeRoot) -> Result<usize, TreeDefect> {
    // (node, lower bound, upper bound) with exclusive bounds.
    fn walk(
        store: &TupleStore,
        t: TaggedValue,
        lo: Option<i64>,
        hi: Option<i64>,
        count: &mut usize,
    ) -> Result<i64, TreeDefect> {
        let h = match t {
            TaggedValue::Ref(h) => h,
            _ => return Ok(0),
        };
        *count += 1;
        let n = read(store, h);
        if lo.is_some_and(|lo| n.key <= lo) || hi.is_some_and(|hi| n.key >= hi) {
            return Err(TreeDefect::KeyOrder { key: n.key });
        }
        for child in [n.left, n.right] {
            if let Some(ck) = node_key(store, child) {
                if priority(ck) > priority(n.key) {
                    return Err(TreeDefect::HeapOrder { parent: n.key, child: ck });
                }
            }
        }
        let computed = n
            .value
            .wrapping_add(walk(store, n.left, lo, Some(n.key), count)?)
            .wrapping_add(walk(store, n.right, Some(n.key), hi, count)?);
        let stored = prim(store, h, SUM);
        if stored != computed {
            return Err(TreeDefect::Sum { key: n.key, stored, computed });
        }
        Ok(stored)
    }
    let mut count = 0;
    walk(store, root, None, None, &mut count)?;
    Ok(count)
}

/// Read-only view of one tree version.
#[derive(Clone, Copy, Debug)]
pub struct TreeView<'s> {
    store: &'s TupleStore,
    root: TreeRoot,
}

impl<'s> TreeView<'s> {
    pub fn new(store: &'s TupleStore, root: TreeRoot) -> Self {
        TreeView { store, root }
    }

    pub fn root(&self) -> TreeRoot {
        self.root
    }

    pub fn store(&self) -> &'s TupleStore {
        self.store
    }

    pub fn lookup(&self, key: i64) -> Option<i64> {
        lookup(self.store, self.root, key)
    }

    pub fn range_sum(&self, lo: i64, hi: i64) -> i64 {
        range_sum(self.store, self.root, lo, hi)
    }

    pub fn total(&self) -> i64 {
        total(self.store, self.root)
    }

    pub fn len(&self) -> usize {
        len(self.store, self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.root.as_ref().is_none()
    }

    pub fn to_vec(&self) -> Vec<(i64, i64)> {
        to_vec(self.store, self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mix::SharedSplitMix;
    use alloc::collections::BTreeMap;

    fn fresh() -> (TupleStore, CreationLog) {
        (TupleStore::new(NODE_ARITY), CreationLog::new())
    }

    /// Publishes `root` (collecting orphans) and returns it.
    fn publish(s: &TupleStore, root: TreeRoot, log: &mut CreationLog) -> TreeRoot {
        s.output(root, log).unwrap().root
    }

    #[test]
    fn insert_into_empty() {
        let (s, mut log) = fresh();
        let t = insert(&s, TaggedValue::Nil, 5, 10, &mut log).unwrap();
        assert_eq!(to_vec(&s, t), vec![(5, 10)]);
        assert_eq!(total(&s, t), 10);
    }

    #[test]
    fn duplicate_insert_replaces_value() {
        let (s, mut log) = fresh();
        let t = insert(&s, TaggedValue::Nil, 5, 10, &mut log).unwrap();
        let t = insert(&s, t, 5, 11, &mut log).unwrap();
        assert_eq!(to_vec(&s, t), vec![(5, 11)]);
    }

    #[test]
    fn random_inserts_stay_sorted_and_summed() {
        let (s, mut log) = fresh();
        let rng = SharedSplitMix::new(42);
        let mut t = TaggedValue::Nil;
        let mut oracle = BTreeMap::new();
        for _ in 0..1000 {
            let k = rng.below(5000) as i64;
            let v = rng.below(1000) as i64 - 500;
            t = insert(&s, t, k, v, &mut log).unwrap();
            oracle.insert(k, v);
        }
        let expected: Vec<(i64, i64)> = oracle.into_iter().collect();
        assert_eq!(to_vec(&s, t), expected);
        assert_eq!(total(&s, t), expected.iter().map(|e| e.1).sum::<i64>());
        assert_eq!(validate(&s, t), Ok(expected.len()));
    }

    #[test]
    fn delete_cases() {
        let (s, mut log) = fresh();
        let one = insert(&s, TaggedValue::Nil, 3, 4, &mut log).unwrap();
        assert_eq!(delete(&s, one, 3, &mut log).unwrap(), TaggedValue::Nil);
        let t = build(&s, &[(1, 1), (2, 2), (3, 3)], &mut log).unwrap();
        let same = delete(&s, t, 99, &mut log).unwrap();
        assert_ne!(same, t);
        assert_eq!(to_vec(&s, same), to_vec(&s, t));
        assert_eq!(validate(&s, same), Ok(3));
    }

    #[test]
    fn delete_all_then_reclaim_everything() {
        let (s, mut log) = fresh();
        let rng = SharedSplitMix::new(3);
        let keys: Vec<i64> = (0..300).map(|_| rng.below(10_000) as i64).collect();
        let mut t = publish(&s, TaggedValue::Nil, &mut log);
        for &k in &keys {
            let next = publish(&s, insert(&s, t, k, k, &mut log).unwrap(), &mut log);
            s.collect(t);
            t = next;
        }
        for &k in &keys {
            let next = publish(&s, delete(&s, t, k, &mut log).unwrap(), &mut log);
            s.collect(t);
            t = next;
        }
        assert_eq!(t, TaggedValue::Nil);
        assert_eq!(s.stats().allocated, 0);
    }

    #[test]
    fn lookup_cases() {
        let (s, mut log) = fresh();
        assert_eq!(lookup(&s, TaggedValue::Nil, 1), None);
        let t = insert(&s, TaggedValue::Nil, 1, 9, &mut log).unwrap();
        assert_eq!(lookup(&s, t, 1), Some(9));
        assert_eq!(lookup(&s, t, 2), None);
    }

    #[test]
    fn lookup_matches_map_oracle_over_mixed_ops() {
        let (s, mut log) = fresh();
        let rng = SharedSplitMix::new(1234);
        let mut t = TaggedValue::Nil;
        let mut oracle = BTreeMap::new();
        for _ in 0..10_000 {
            let k = rng.below(500) as i64;
            let next = match rng.below(3) {
                0 => {
                    let v = rng.next_u64() as i64;
                    oracle.insert(k, v);
                    insert(&s, t, k, v, &mut log).unwrap()
                }
                1 => {
                    oracle.remove(&k);
                    delete(&s, t, k, &mut log).unwrap()
                }
                _ => {
                    assert_eq!(lookup(&s, t, k), oracle.get(&k).copied());
                    continue;
                }
            };
            // Keep the arena small: publish and drop the previous version.
            let next = publish(&s, next, &mut log);
            s.collect(t);
            t = next;
        }
        assert_eq!(validate(&s, t), Ok(oracle.len()));
    }

    #[test]
    fn range_sum_cases() {
        let (s, mut log) = fresh();
        assert_eq!(range_sum(&s, TaggedValue::Nil, 0, 10), 0);
        let t = build(&s, &[(1, 10), (2, 20), (5, 50), (9, 90)], &mut log).unwrap();
        assert_eq!(range_sum(&s, t, i64::MIN, i64::MAX), total(&s, t));
        assert_eq!(range_sum(&s, t, 2, 5), 70);
        assert_eq!(range_sum(&s, t, 3, 4), 0);
        assert_eq!(range_sum(&s, t, 6, 1), 0);
        assert_eq!(range_sum(&s, t, 9, 9), 90);
    }

    #[test]
    fn range_sum_matches_linear_scan() {
        let (s, mut log) = fresh();
        let rng = SharedSplitMix::new(77);
        let pairs: Vec<(i64, i64)> = (0..2000)
            .map(|_| (rng.below(100_000) as i64, rng.below(1 << 20) as i64))
            .collect();
        let t = build(&s, &pairs, &mut log).unwrap();
        let flat = to_vec(&s, t);
        for _ in 0..500 {
            let a = rng.below(110_000) as i64 - 5000;
            let b = rng.below(110_000) as i64 - 5000;
            let (lo, hi) = (a.min(b), a.max(b));
            let scan: i64 = flat.iter().filter(|e| lo <= e.0 && e.0 <= hi).map(|e| e.1).sum();
            assert_eq!(range_sum(&s, t, lo, hi), scan);
        }
    }

    #[test]
    fn build_cases() {
        let (s, mut log) = fresh();
        assert_eq!(build(&s, &[], &mut log).unwrap(), TaggedValue::Nil);
        let t = build(&s, &[(3, 30), (1, 10), (2, 20)], &mut log).unwrap();
        assert_eq!(to_vec(&s, t), vec![(1, 10), (2, 20), (3, 30)]);
        let t = build(&s, &[(1, 1), (1, 2)], &mut log).unwrap();
        assert_eq!(to_vec(&s, t), vec![(1, 2)]);
    }

    #[test]
    fn build_sum_and_shape_match_repeated_insert() {
        let (s, mut log) = fresh();
        let rng = SharedSplitMix::new(9);
        let pairs: Vec<(i64, i64)> = (0..3000)
            .map(|_| (rng.below(1 << 30) as i64, rng.below(1000) as i64))
            .collect();
        let built = build(&s, &pairs, &mut log).unwrap();
        let mut inserted = TaggedValue::Nil;
        for &(k, v) in &pairs {
            inserted = insert(&s, inserted, k, v, &mut log).unwrap();
        }
        assert_eq!(total(&s, built), pairs.iter().map(|p| p.1).sum::<i64>() - duplicates_overwritten(&pairs));
        assert_eq!(validate(&s, built), validate(&s, inserted));
        assert_eq!(shape(&s, built), shape(&s, inserted));
    }

    fn duplicates_overwritten(pairs: &[(i64, i64)]) -> i64 {
        let mut last = BTreeMap::new();
        for &(k, v) in pairs {
            last.insert(k, v);
        }
        pairs.iter().map(|p| p.1).sum::<i64>() - last.values().sum::<i64>()
    }

    /// Pre-order key sequence with Nil markers.
    fn shape(s: &TupleStore, t: TaggedValue) -> Vec<Option<i64>> {
        let mut out = Vec::new();
        let mut stack = vec![t];
        while let Some(t) = stack.pop() {
            match t {
                TaggedValue::Ref(h) => {
                    out.push(Some(prim(s, h, KEY)));
                    stack.push(s.nth(h, RIGHT));
                    stack.push(s.nth(h, LEFT));
                }
                _ => out.push(None),
            }
        }
        out
    }

    #[test]
    fn old_versions_are_unchanged_by_updates() {
        let (s, mut log) = fresh();
        let t1 = build(&s, &[(1, 1), (4, 4), (7, 7)], &mut log).unwrap();
        let before = to_vec(&s, t1);
        let t2 = insert(&s, t1, 5, 5, &mut log).unwrap();
        let t3 = delete(&s, t2, 4, &mut log).unwrap();
        assert_eq!(to_vec(&s, t1), before);
        assert_eq!(range_sum(&s, t1, 0, 10), 12);
        assert_eq!(to_vec(&s, t3), vec![(1, 1), (5, 5), (7, 7)]);
    }

    #[test]
    fn insert_allocation_is_logarithmic() {
        let (s, mut log) = fresh();
        let rng = SharedSplitMix::new(5);
        let n = 1 << 14;
        let pairs: Vec<(i64, i64)> = (0..n).map(|_| (rng.next_u64() as i64, 1)).collect();
        let t = publish(&s, build(&s, &pairs, &mut log).unwrap(), &mut log);
        let bound = 4 * 14 + 8;
        let mut within = 0;
        let trials = 200;
        for _ in 0..trials {
            let before = s.stats().total_created;
            let t2 = insert(&s, t, rng.next_u64() as i64, 1, &mut log).unwrap();
            if (s.stats().total_created - before) as usize <= bound {
                within += 1;
            }
            publish(&s, t2, &mut log);
            s.collect(t2);
        }
        assert!(within * 100 >= trials * 99, "{within}/{trials}");
    }

    #[test]
    fn view_delegates() {
        let (s, mut log) = fresh();
        let t = build(&s, &[(1, 2), (3, 4)], &mut log).unwrap();
        let v = TreeView::new(&s, t);
        assert_eq!((v.len(), v.total(), v.lookup(3), v.range_sum(0, 1)), (2, 6, Some(4), 2));
        assert!(!v.is_empty());
        assert!(TreeView::new(&s, TaggedValue::Nil).is_empty());
    }
}
