//! Identifier types shared by the oracle and both concurrent objects.

use core::fmt;

/// A version name: a monotonically increasing timestamp plus the slot it
/// occupies in the status and data arrays.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionId {
    pub timestamp: u64,
    pub index: u32,
}

impl VersionId {
    /// The "no version" marker. Never produced by `set`.
    pub const EMPTY: VersionId = VersionId {
        timestamp: u64::MAX,
        index: u32::MAX,
    };

    pub const fn new(timestamp: u64, index: u32) -> Self {
        VersionId { timestamp, index }
    }

    pub const fn is_empty(self) -> bool {
        self.timestamp == u64::MAX && self.index == u32::MAX
    }
}

impl fmt::Debug for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            f.write_str("<empty>")
        } else {
            write!(f, "<{},{}>", self.timestamp, self.index)
        }
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Opaque token naming the root of a version.
///
/// The transaction layer stores encoded tuple handles here; tests use
/// plain integers.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct DataHandle(pub u64);

impl fmt::Display for DataHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identity of one of the `P` participating processes, `0 <= k < P`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ProcessId(pub usize);

impl ProcessId {
    #[inline]
    pub const fn get(self) -> usize {
        self.0
    }
}

impl From<usize> for ProcessId {
    fn from(k: usize) -> Self {
        ProcessId(k)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}
