//! Harness around `verso-core`: a transactional benchmark, a stress run of
//! the bare objects, and randomized linearizability trials.

pub mod algo;
pub mod bench;
pub mod error;
pub mod history_file;
pub mod lincheck;
pub mod monitor;
pub mod report;
pub mod stress;
pub mod yields;

pub use algo::Algo;
pub use error::HarnessError;
