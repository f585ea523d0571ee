use std::path::PathBuf;

use thiserror::Error;

use crate::governance::GovernanceError;
use crate::hashcore::{CanonicalError, FixedError, HashError};
use crate::ledger::LedgerError;
use crate::rfl::RflError;
use crate::verifier::VerifierError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("commitment registry {path}: {reason}")]
    Registry { path: PathBuf, reason: String },
    #[error("output directory {0} is not empty")]
    OutputNotEmpty(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Rfl(#[from] RflError),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Fixed(#[from] FixedError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
