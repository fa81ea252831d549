use thiserror::Error;
use verso_core::verify::CheckError;
use verso_core::{CapacityError, StoreError, TxnError};

/// Why a harness run could not produce a report.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Txn(#[from] TxnError),
    #[error("checker refused: {0}")]
    Check(#[from] CheckError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 64 for usage errors, 74 for I/O errors, 2 for
    /// everything that indicates a fault in the system under test.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Capacity(_) => 64,
            HarnessError::Io(_) => 74,
            _ => 2,
        }
    }
}
