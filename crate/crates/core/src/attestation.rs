//! Per-epoch dual-root commitment `H_t = H("EPOCH:" ‖ r_t ‖ u_t)`.
//!
//! `r_t` is the Merkle root over every artifact id sealed during the epoch.
//! `u_t` commits to the epoch's ordered interface event log; here that log is
//! the harness's own structured event records.

use serde::{Deserialize, Serialize};

use crate::hashcore::{
    domain_hash, hash, preimage, split_preimage, to_canonical_bytes, CanonicalError, Digest32,
    DomainLabel, HashError,
};
use crate::ledger::{merkle_root, Block, LedgerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochAttestation {
    pub epoch: u64,
    #[serde(rename = "r")]
    pub reasoning_root: Digest32,
    #[serde(rename = "u")]
    pub ui_root: Digest32,
    #[serde(rename = "h")]
    pub commitment: Digest32,
}

impl EpochAttestation {
    pub fn recompute(&self) -> Digest32 {
        domain_hash(DomainLabel::Epoch, &[self.reasoning_root, self.ui_root])
    }

    pub fn is_consistent(&self) -> bool {
        self.recompute() == self.commitment
    }

    /// The exact bytes hashed into the commitment.
    pub fn preimage(&self) -> Vec<u8> {
        preimage(DomainLabel::Epoch, &[self.reasoning_root, self.ui_root])
    }

    /// Rebuilds the `(r, u)` pair from a commitment preimage.
    pub fn from_preimage(epoch: u64, bytes: &[u8]) -> Result<Self, HashError> {
        let parts = split_preimage(DomainLabel::Epoch, bytes, 2)?;
        Ok(attest(parts[0], parts[1], epoch))
    }
}

/// `r_t` over the union of artifact ids sealed in the epoch's blocks.
pub fn reasoning_root(epoch_blocks: &[Block]) -> Result<Digest32, LedgerError> {
    let ids: Vec<&str> = epoch_blocks
        .iter()
        .flat_map(|b| b.artifact_ids.iter().map(String::as_str))
        .collect();
    merkle_root(&ids)
}

/// `u_t = H("UIROOT:" ‖ H(canonical(event_log)))`. Order matters.
pub fn ui_root<T: Serialize>(event_log: &[T]) -> Result<Digest32, CanonicalError> {
    let doc = to_canonical_bytes(event_log)?;
    Ok(domain_hash(DomainLabel::UiRoot, &[hash(&doc)]))
}

pub fn attest(reasoning_root: Digest32, ui_root: Digest32, epoch: u64) -> EpochAttestation {
    EpochAttestation {
        epoch,
        reasoning_root,
        ui_root,
        commitment: domain_hash(DomainLabel::Epoch, &[reasoning_root, ui_root]),
    }
}

/// [`attest`] over raw byte slices; both must be exactly 32 bytes.
pub fn attest_slices(r: &[u8], u: &[u8], epoch: u64) -> Result<EpochAttestation, HashError> {
    Ok(attest(
        Digest32::from_slice(r)?,
        Digest32::from_slice(u)?,
        epoch,
    ))
}
