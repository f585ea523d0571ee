//! Verifier-driven learning over an append-only, attested ledger.
//!
//! Each cycle samples tactics from a softmax policy, lets a verifier decide
//! PASS/FAIL/ABSTAIN, seals passing artifacts into a Merkle ledger, commits
//! the epoch under a dual root, and feeds the outcomes back into the policy.
//! Runs end in an evidence pack that [`evidence::replay_verify`] re-checks
//! from bytes alone.

pub mod attestation;
pub mod cli;
pub mod error;
pub mod evidence;
pub mod governance;
pub mod harness;
pub mod hashcore;
pub mod ledger;
pub mod rfl;
pub mod stream;
pub mod verifier;

pub use error::{Error, Result};
