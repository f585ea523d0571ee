//! Monotone, append-only ledger of verifier-accepted proof artifacts.
//!
//! Each block carries the Merkle root `R_t` over its sorted artifact ids and
//! the ledger head folds those roots into a hash chain:
//! `L_t = H("CHAIN:" ‖ L_{t-1} ‖ R_t)`, `L_0 = 0^32`.
//!
//! Merkle layout: `leaf = H("LEAF:" ‖ H(id))`, `node = H("NODE:" ‖ l ‖ r)`;
//! an unpaired trailing node is promoted unchanged. A block with no
//! artifacts has root `H("")`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashcore::{domain_hash, hash, Digest32, DomainLabel};
use crate::verifier::{admissible, Outcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("NOT_ADMISSIBLE: artifact {id} has status {status}")]
    NotAdmissible { id: String, status: Outcome },
    #[error("duplicate artifact id {0}")]
    DuplicateId(String),
    #[error("artifact id {0:?} must be non-empty ASCII")]
    InvalidId(String),
}

/// One reasoning attempt that the verifier accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofArtifact {
    pub id: String,
    pub statement_hash: Digest32,
    pub status: Outcome,
    pub payload_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub artifact_ids: Vec<String>,
    pub merkle_root: Digest32,
}

impl Block {
    pub fn is_empty(&self) -> bool {
        self.artifact_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerHead {
    pub index: u64,
    pub head: Digest32,
}

impl LedgerHead {
    pub const GENESIS: LedgerHead = LedgerHead {
        index: 0,
        head: Digest32::ZERO,
    };
}

/// Root used for a block with no admitted artifacts.
pub fn empty_root() -> Digest32 {
    hash(b"")
}

fn validate_id(id: &str) -> Result<(), LedgerError> {
    if id.is_empty() || !id.is_ascii() {
        return Err(LedgerError::InvalidId(id.to_string()));
    }
    Ok(())
}

/// Merkle root over the ids after sorting them ascending.
pub fn merkle_root<S: AsRef<str>>(ids: &[S]) -> Result<Digest32, LedgerError> {
    let mut sorted: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    sorted.sort_unstable();
    for pair in sorted.windows(2) {
        if pair[0] == pair[1] {
            return Err(LedgerError::DuplicateId(pair[0].to_string()));
        }
    }
    for id in &sorted {
        validate_id(id)?;
    }
    Ok(root_of_sorted(&sorted))
}

fn root_of_sorted(sorted: &[&str]) -> Digest32 {
    if sorted.is_empty() {
        return empty_root();
    }
    let mut level: Vec<Digest32> = sorted
        .iter()
        .map(|id| domain_hash(DomainLabel::Leaf, &[hash(id.as_bytes())]))
        .collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [left, right] => domain_hash(DomainLabel::Node, &[*left, *right]),
                [odd] => *odd,
                _ => unreachable!("chunks(2)"),
            })
            .collect();
    }
    level[0]
}

pub fn chain_step(prior: &Digest32, root: &Digest32) -> Digest32 {
    domain_hash(DomainLabel::Chain, &[*prior, *root])
}

/// Seals `artifacts` into the block following `prior`. Only checks the batch
/// itself; [`Ledger::append`] also rejects ids already in the ledger.
pub fn append_block(
    artifacts: &[ProofArtifact],
    prior: &LedgerHead,
) -> Result<(Block, LedgerHead), LedgerError> {
    for artifact in artifacts {
        if !admissible(artifact.status) {
            return Err(LedgerError::NotAdmissible {
                id: artifact.id.clone(),
                status: artifact.status,
            });
        }
    }
    let mut ids: Vec<String> = artifacts.iter().map(|a| a.id.clone()).collect();
    let merkle_root = merkle_root(&ids)?;
    ids.sort_unstable();
    let index = prior.index + 1;
    let head = LedgerHead {
        index,
        head: chain_step(&prior.head, &merkle_root),
    };
    Ok((
        Block {
            index,
            artifact_ids: ids,
            merkle_root,
        },
        head,
    ))
}

/// Single-writer ledger. Exposes no way to edit or remove admitted blocks.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    blocks: Vec<Block>,
    head: Option<LedgerHead>,
    ids: HashSet<String>,
    knowledge: BTreeSet<Digest32>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(
        &mut self,
        artifacts: &[ProofArtifact],
    ) -> Result<(Block, LedgerHead), LedgerError> {
        if let Some(dup) = artifacts.iter().find(|a| self.ids.contains(&a.id)) {
            return Err(LedgerError::DuplicateId(dup.id.clone()));
        }
        let (block, head) = append_block(artifacts, &self.head())?;
        self.ids.extend(artifacts.iter().map(|a| a.id.clone()));
        self.knowledge
            .extend(artifacts.iter().map(|a| a.statement_hash));
        self.blocks.push(block.clone());
        self.head = Some(head);
        Ok((block, head))
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> LedgerHead {
        self.head.unwrap_or(LedgerHead::GENESIS)
    }

    /// `K_t`: statement hashes accepted so far.
    pub fn knowledge(&self) -> &BTreeSet<Digest32> {
        &self.knowledge
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Whether `block` is internally consistent as the block at `expected_index`.
pub fn block_is_consistent(block: &Block, expected_index: u64) -> bool {
    block.index == expected_index
        && block.artifact_ids.windows(2).all(|w| w[0] < w[1])
        && block.artifact_ids.iter().all(|id| validate_id(id).is_ok())
        && {
            let ids: Vec<&str> = block.artifact_ids.iter().map(String::as_str).collect();
            root_of_sorted(&ids) == block.merkle_root
        }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainReport {
    pub matches: bool,
    pub first_divergence: Option<u64>,
    pub recomputed: LedgerHead,
    pub claimed: LedgerHead,
}

/// Recomputes every block root and the chain fold, comparing against `claimed`.
pub fn verify_chain(blocks: &[Block], claimed: &LedgerHead) -> ChainReport {
    let mut head = LedgerHead::GENESIS;
    let mut first_divergence = None;
    for (pos, block) in blocks.iter().enumerate() {
        let expected = pos as u64 + 1;
        if first_divergence.is_none() && !block_is_consistent(block, expected) {
            first_divergence = Some(expected);
        }
        let root = merkle_root(&block.artifact_ids).unwrap_or(block.merkle_root);
        head = LedgerHead {
            index: expected,
            head: chain_step(&head.head, &root),
        };
    }
    let matches = first_divergence.is_none() && head == *claimed;
    if first_divergence.is_none() && !matches {
        // every block is self-consistent, so the difference is in length or
        // in a root rewritten together with its ids
        first_divergence = Some(if head.index == claimed.index {
            head.index
        } else {
            head.index.min(claimed.index) + 1
        });
    }
    ChainReport {
        matches,
        first_divergence,
        recomputed: head,
        claimed: *claimed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub total: u64,
    pub verified: u64,
    /// One decimal place, e.g. `"99.0"`.
    pub coverage_pct: String,
    pub divergences: Vec<u64>,
    pub empty: bool,
    pub head_match: bool,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.verified == self.total && self.head_match
    }
}

fn coverage_string(verified: u64, total: u64) -> String {
    if total == 0 {
        return "100.0".to_string();
    }
    let tenths = (verified * 1000 + total / 2) / total;
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// Mirror audit: re-verifies every block on its own and reports coverage.
pub fn audit(blocks: &[Block], head: &LedgerHead) -> AuditReport {
    let divergences: Vec<u64> = blocks
        .iter()
        .enumerate()
        .filter(|(pos, block)| !block_is_consistent(block, *pos as u64 + 1))
        .map(|(pos, _)| pos as u64 + 1)
        .collect();
    let total = blocks.len() as u64;
    let verified = total - divergences.len() as u64;
    AuditReport {
        total,
        verified,
        coverage_pct: coverage_string(verified, total),
        divergences,
        empty: total == 0,
        head_match: verify_chain(blocks, head).matches,
    }
}
