//! Evidence packs: deterministic emission and the fail-closed replay verifier.
//!
//! Layout of a pack directory:
//!
//! ```text
//! manifest.json              written last, lists every other file
//! registry.json              commitment registry (canonical)
//! run.json                   seed, shape, arms, mode, verifier profile
//! blocks/<arm>/<i>.json      one ledger block per cycle
//! blocks/<arm>/head.json
//! artifacts/<arm>/<id>.json  one body per typed artifact
//! attestations.jsonl  events.jsonl  policy_trace.jsonl  metrics.jsonl
//! summary.json  governance_verdict.json
//! ```
//!
//! Every JSON document is canonical; `.jsonl` files hold one canonical
//! document per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attestation::{ui_root, EpochAttestation};
use crate::error::{Error, IoContext, Result};
use crate::governance::{ArtifactKind, CommitmentRegistry, VerdictDocument};
use crate::harness::{
    build_verdict, delta_p, AttestationRecord, CycleRecord, RunMetadata, RunState, RunSummary,
};
use crate::hashcore::{hash, is_canonical, to_canonical_bytes, Digest32};
use crate::ledger::{audit, verify_chain, AuditReport, Block, LedgerHead};

pub const MANIFEST_VERSION: &str = "evidence-1";
pub const MANIFEST_PATH: &str = "manifest.json";
pub const REGISTRY_PATH: &str = "registry.json";
pub const RUN_PATH: &str = "run.json";
pub const VERDICT_PATH: &str = "governance_verdict.json";
pub const SUMMARY_PATH: &str = "summary.json";
pub const ATTESTATIONS_PATH: &str = "attestations.jsonl";
pub const EVENTS_PATH: &str = "events.jsonl";
pub const TRACE_PATH: &str = "policy_trace.jsonl";
pub const METRICS_PATH: &str = "metrics.jsonl";

pub const DISCLAIMER: &str = "verification covers artifact integrity, determinism, and governance binding only; it does not validate correctness or safety";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: Digest32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_kind: Option<ArtifactKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceManifest {
    pub version: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
    pub commitment_registry_sha256: Digest32,
    pub governance_verdict_path: String,
    pub ledger_heads: BTreeMap<String, LedgerHead>,
    /// Block indices per arm that sealed no artifacts (root `H("")`).
    pub empty_blocks: BTreeMap<String, Vec<u64>>,
    pub attestation_count: u64,
}

pub fn block_path(arm: &str, index: u64) -> String {
    format!("blocks/{arm}/{index}.json")
}

pub fn head_path(arm: &str) -> String {
    format!("blocks/{arm}/head.json")
}

fn jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        out.extend(to_canonical_bytes(&r)?);
        out.push(b'\n');
    }
    Ok(out)
}

struct PackFile {
    path: String,
    bytes: Vec<u8>,
    kind: Option<ArtifactKind>,
}

fn file(path: impl Into<String>, bytes: Vec<u8>) -> PackFile {
    PackFile {
        path: path.into(),
        bytes,
        kind: None,
    }
}

fn ensure_empty_dir(dir: &Path) -> Result<()> {
    match fs::read_dir(dir) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(Error::OutputNotEmpty(dir.to_path_buf()));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => fs::create_dir_all(dir).at(dir),
        Err(e) => Err(e).at(dir),
    }
}

fn pack_files(state: &RunState) -> Result<Vec<PackFile>> {
    let mut files = vec![
        file(REGISTRY_PATH, to_canonical_bytes(&state.registry)?),
        file(RUN_PATH, to_canonical_bytes(&state.metadata())?),
    ];
    for arm in &state.arms {
        let name = &arm.config.name;
        for block in arm.ledger.blocks() {
            files.push(file(
                block_path(name, block.index),
                to_canonical_bytes(block)?,
            ));
        }
        files.push(file(
            head_path(name),
            to_canonical_bytes(&arm.ledger.head())?,
        ));
        for artifact in &arm.artifacts {
            files.push(PackFile {
                path: artifact.path.clone(),
                bytes: to_canonical_bytes(&artifact.body)?,
                kind: Some(artifact.kind),
            });
        }
    }
    let attestations = state.arms.iter().flat_map(|a| {
        a.attestations.iter().map(|att| AttestationRecord {
            arm: a.config.name.clone(),
            attestation: *att,
        })
    });
    files.push(file(ATTESTATIONS_PATH, jsonl(attestations)?));
    files.push(file(
        EVENTS_PATH,
        jsonl(state.arms.iter().flat_map(|a| &a.events))?,
    ));
    files.push(file(
        TRACE_PATH,
        jsonl(state.arms.iter().flat_map(|a| &a.trace))?,
    ));
    files.push(file(
        METRICS_PATH,
        jsonl(state.arms.iter().flat_map(|a| &a.metrics))?,
    ));
    files.push(file(SUMMARY_PATH, to_canonical_bytes(&state.summary()?)?));
    files.push(file(VERDICT_PATH, to_canonical_bytes(&state.verdict)?));
    Ok(files)
}

/// Writes the pack for a finished run into `dir`, which must be empty or
/// absent. `manifest.json` is written last.
pub fn emit_pack(state: &RunState, dir: &Path) -> Result<EvidenceManifest> {
    ensure_empty_dir(dir)?;
    let files = pack_files(state)?;
    let mut entries = Vec::with_capacity(files.len());
    for f in &files {
        let path = dir.join(&f.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).at(parent)?;
        }
        fs::write(&path, &f.bytes).at(&path)?;
        entries.push(ManifestEntry {
            path: f.path.clone(),
            sha256: hash(&f.bytes),
            artifact_kind: f.kind,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));

    let manifest = EvidenceManifest {
        version: MANIFEST_VERSION.to_string(),
        seed: state.seed,
        files: entries,
        commitment_registry_sha256: state.registry_sha256,
        governance_verdict_path: VERDICT_PATH.to_string(),
        ledger_heads: state
            .arms
            .iter()
            .map(|a| (a.config.name.clone(), a.ledger.head()))
            .collect(),
        empty_blocks: state
            .arms
            .iter()
            .map(|a| {
                let empty = a
                    .ledger
                    .blocks()
                    .iter()
                    .filter(|b| b.is_empty())
                    .map(|b| b.index);
                (a.config.name.clone(), empty.collect())
            })
            .collect(),
        attestation_count: state.arms.iter().map(|a| a.attestations.len() as u64).sum(),
    };
    let path = dir.join(MANIFEST_PATH);
    fs::write(&path, to_canonical_bytes(&manifest)?).at(&path)?;
    Ok(manifest)
}

/// The replay checks, in the order they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    ManifestCanonical,
    ArtifactKinds,
    RegistryBindingPresent,
    RegistryHash,
    FileHashes,
    LedgerChain,
    Attestations,
    GovernanceConsistency,
}

impl CheckId {
    pub const ALL: [CheckId; 8] = [
        CheckId::ManifestCanonical,
        CheckId::ArtifactKinds,
        CheckId::RegistryBindingPresent,
        CheckId::RegistryHash,
        CheckId::FileHashes,
        CheckId::LedgerChain,
        CheckId::Attestations,
        CheckId::GovernanceConsistency,
    ];

    /// 1-based position in the check order.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CheckId::ManifestCanonical => "manifest_canonical",
            CheckId::ArtifactKinds => "artifact_kinds",
            CheckId::RegistryBindingPresent => "registry_binding_present",
            CheckId::RegistryHash => "registry_hash",
            CheckId::FileHashes => "file_hashes",
            CheckId::LedgerChain => "ledger_chain",
            CheckId::Attestations => "attestations",
            CheckId::GovernanceConsistency => "governance_consistency",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.number(), self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub check: CheckId,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub pack: String,
    pub passed: bool,
    pub failed_check: Option<CheckId>,
    /// Checks that ran; verification stops at the first failure.
    pub checks: Vec<CheckResult>,
    pub disclaimer: String,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pack {}", self.pack)?;
        for c in &self.checks {
            let status = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "  {status} {}: {}", c.check, c.detail)?;
        }
        match self.failed_check {
            Some(check) => writeln!(f, "verification FAILED at check {check}")?,
            None => writeln!(f, "verification passed")?,
        }
        write!(f, "note: {}", self.disclaimer)
    }
}

type Check<T> = std::result::Result<T, String>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    path: String,
    sha256: String,
    #[serde(default)]
    artifact_kind: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    version: String,
    #[allow(dead_code)]
    seed: u64,
    files: Vec<RawEntry>,
    #[serde(default)]
    commitment_registry_sha256: Option<String>,
    governance_verdict_path: String,
    ledger_heads: BTreeMap<String, LedgerHead>,
    empty_blocks: BTreeMap<String, Vec<u64>>,
    attestation_count: u64,
}

fn safe_relative(path: &str) -> bool {
    !path.is_empty()
        && path != MANIFEST_PATH
        && Path::new(path)
            .components()
            .all(|c| matches!(c, Component::Normal(_)))
}

fn read(dir: &Path, rel: &str) -> Check<Vec<u8>> {
    fs::read(dir.join(rel)).map_err(|e| format!("{rel}: {e}"))
}

fn parse_json<T: serde::de::DeserializeOwned>(rel: &str, bytes: &[u8]) -> Check<T> {
    serde_json::from_slice(bytes).map_err(|e| format!("{rel}: {e}"))
}

fn parse_lines<T: serde::de::DeserializeOwned>(rel: &str, bytes: &[u8]) -> Check<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("{rel}: {e}"))?;
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            serde_json::from_str(line).map_err(|e| format!("{rel} line {}: {e}", n + 1))
        })
        .collect()
}

fn check_manifest(dir: &Path) -> Check<RawManifest> {
    let bytes = read(dir, MANIFEST_PATH)?;
    if !is_canonical(&bytes) {
        return Err("manifest.json is not canonical JSON".into());
    }
    let manifest: RawManifest = parse_json(MANIFEST_PATH, &bytes)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(format!(
            "unsupported manifest version {:?}",
            manifest.version
        ));
    }
    let mut seen = BTreeSet::new();
    for e in &manifest.files {
        if !safe_relative(&e.path) {
            return Err(format!("illegal file path {:?}", e.path));
        }
        if !seen.insert(e.path.as_str()) {
            return Err(format!("file {} listed twice", e.path));
        }
    }
    Ok(manifest)
}

fn check_kinds(manifest: &RawManifest) -> Check<usize> {
    let mut typed = 0;
    for e in &manifest.files {
        match &e.artifact_kind {
            Some(kind) => {
                kind.parse::<ArtifactKind>()
                    .map_err(|_| format!("{}: invalid artifact_kind {kind:?}", e.path))?;
                typed += 1;
            }
            None if e.path.starts_with("artifacts/") => {
                return Err(format!("{}: missing artifact_kind", e.path));
            }
            None => {}
        }
    }
    Ok(typed)
}

fn check_binding_present(manifest: &RawManifest) -> Check<Digest32> {
    let hex = manifest
        .commitment_registry_sha256
        .as_deref()
        .ok_or("missing commitment_registry_sha256 field")?;
    Digest32::from_hex(hex).map_err(|e| format!("commitment_registry_sha256: {e}"))
}

fn check_registry_hash(dir: &Path, bound: Digest32) -> Check<()> {
    let actual = hash(&read(dir, REGISTRY_PATH)?);
    if actual != bound {
        return Err(format!(
            "registry.json hashes to {actual}, manifest binds {bound}"
        ));
    }
    Ok(())
}

fn walk(dir: &Path, prefix: &str, out: &mut BTreeSet<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let rel = if prefix.is_empty() {
            name
        } else {
            format!("{prefix}/{name}")
        };
        if entry.file_type()?.is_dir() {
            walk(&entry.path(), &rel, out)?;
        } else {
            out.insert(rel);
        }
    }
    Ok(())
}

fn check_file_hashes(dir: &Path, manifest: &RawManifest) -> Check<usize> {
    let mismatch = manifest
        .files
        .par_iter()
        .map(|e| match fs::read(dir.join(&e.path)) {
            Ok(bytes) if hash(&bytes).to_hex() == e.sha256 => None,
            Ok(_) => Some(format!("{}: sha256 mismatch", e.path)),
            Err(_) => Some(format!("{}: listed but missing", e.path)),
        })
        .flatten()
        .min();
    if let Some(msg) = mismatch {
        return Err(msg);
    }
    let mut present = BTreeSet::new();
    walk(dir, "", &mut present).map_err(|e| e.to_string())?;
    let listed: BTreeSet<&str> = manifest.files.iter().map(|e| e.path.as_str()).collect();
    if let Some(extra) = present
        .iter()
        .find(|p| p.as_str() != MANIFEST_PATH && !listed.contains(p.as_str()))
    {
        return Err(format!("{extra}: present but not listed"));
    }
    Ok(manifest.files.len())
}

fn block_files(manifest: &RawManifest, arm: &str) -> Check<Vec<(u64, String)>> {
    let prefix = format!("blocks/{arm}/");
    let mut out = Vec::new();
    for e in &manifest.files {
        let Some(name) = e.path.strip_prefix(&prefix) else {
            continue;
        };
        if name == "head.json" {
            continue;
        }
        let index = name
            .strip_suffix(".json")
            .and_then(|n| n.parse::<u64>().ok())
            .ok_or_else(|| format!("unexpected block file {}", e.path))?;
        out.push((index, e.path.clone()));
    }
    out.sort();
    Ok(out)
}

fn check_ledger(dir: &Path, manifest: &RawManifest) -> Check<BTreeMap<String, Vec<Block>>> {
    let arms_on_disk: BTreeSet<String> = manifest
        .files
        .iter()
        .filter_map(|e| e.path.strip_prefix("blocks/"))
        .filter_map(|rest| rest.split('/').next().map(str::to_string))
        .collect();
    let claimed: BTreeSet<String> = manifest.ledger_heads.keys().cloned().collect();
    if arms_on_disk != claimed {
        return Err(format!(
            "ledgers on disk {arms_on_disk:?} differ from manifest {claimed:?}"
        ));
    }
    let mut ledgers = BTreeMap::new();
    for (arm, claimed_head) in &manifest.ledger_heads {
        let mut blocks = Vec::new();
        for (_, rel) in block_files(manifest, arm)? {
            blocks.push(parse_json::<Block>(&rel, &read(dir, &rel)?)?);
        }
        let head_rel = head_path(arm);
        let stored: LedgerHead = parse_json(&head_rel, &read(dir, &head_rel)?)?;
        if stored != *claimed_head {
            return Err(format!("{head_rel} disagrees with the manifest head"));
        }
        let report = verify_chain(&blocks, claimed_head);
        if !report.matches {
            return Err(format!(
                "arm {arm}: chain diverges at block {}",
                report.first_divergence.unwrap_or(0)
            ));
        }
        let empty: Vec<u64> = blocks
            .iter()
            .filter(|b| b.is_empty())
            .map(|b| b.index)
            .collect();
        if manifest.empty_blocks.get(arm) != Some(&empty) {
            return Err(format!("arm {arm}: empty block flags disagree with blocks"));
        }
        ledgers.insert(arm.clone(), blocks);
    }
    Ok(ledgers)
}

fn check_attestations(
    dir: &Path,
    manifest: &RawManifest,
    ledgers: &BTreeMap<String, Vec<Block>>,
) -> Check<usize> {
    let records: Vec<AttestationRecord> =
        parse_lines(ATTESTATIONS_PATH, &read(dir, ATTESTATIONS_PATH)?)?;
    if records.len() as u64 != manifest.attestation_count {
        return Err(format!(
            "{} attestations on disk, manifest records {}",
            records.len(),
            manifest.attestation_count
        ));
    }
    let events: Vec<Value> = parse_lines(EVENTS_PATH, &read(dir, EVENTS_PATH)?)?;
    let mut logs: BTreeMap<(String, u64), Vec<Value>> = BTreeMap::new();
    for e in events {
        let arm = e
            .get("arm")
            .and_then(Value::as_str)
            .ok_or("event without arm")?;
        let cycle = e
            .get("cycle")
            .and_then(Value::as_u64)
            .ok_or("event without cycle")?;
        logs.entry((arm.to_string(), cycle)).or_default().push(e);
    }
    let metrics: Vec<CycleRecord> = parse_lines(METRICS_PATH, &read(dir, METRICS_PATH)?)?;
    let metric_h: BTreeMap<(&str, u64), Digest32> = metrics
        .iter()
        .map(|m| ((m.arm.as_str(), m.cycle), m.attestation))
        .collect();

    let mut per_arm: BTreeMap<&str, Vec<&EpochAttestation>> = BTreeMap::new();
    for rec in &records {
        per_arm
            .entry(rec.arm.as_str())
            .or_default()
            .push(&rec.attestation);
    }
    for (arm, blocks) in ledgers {
        let atts = per_arm.remove(arm.as_str()).unwrap_or_default();
        if atts.len() != blocks.len() {
            return Err(format!(
                "arm {arm}: {} attestations for {} blocks",
                atts.len(),
                blocks.len()
            ));
        }
        for (att, block) in atts.iter().zip(blocks) {
            let tag = format!("arm {arm} epoch {}", att.epoch);
            if att.epoch != block.index {
                return Err(format!("{tag}: out of sequence"));
            }
            if !att.is_consistent() {
                return Err(format!("{tag}: H_t does not recompute from (r_t, u_t)"));
            }
            if att.reasoning_root != block.merkle_root {
                return Err(format!("{tag}: r_t differs from the block root"));
            }
            let log = logs
                .get(&(arm.clone(), att.epoch))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            if ui_root(log).map_err(|e| e.to_string())? != att.ui_root {
                return Err(format!("{tag}: u_t does not recompute from events"));
            }
            if metric_h.get(&(arm.as_str(), att.epoch)) != Some(&att.commitment) {
                return Err(format!("{tag}: metrics record a different H_t"));
            }
        }
    }
    if let Some(arm) = per_arm.keys().next() {
        return Err(format!("attestations for unknown arm {arm}"));
    }
    Ok(records.len())
}

fn check_governance(dir: &Path, manifest: &RawManifest, bound: Digest32) -> Check<()> {
    let registry =
        CommitmentRegistry::from_json(&read(dir, REGISTRY_PATH)?).map_err(|e| e.to_string())?;
    let run: RunMetadata = parse_json(RUN_PATH, &read(dir, RUN_PATH)?)?;
    let c = &registry.constraints;
    let lrs = run
        .arms
        .iter()
        .map(|a| (a.name.clone(), a.lr))
        .collect::<BTreeMap<_, _>>();
    if lrs != c.arm_learning_rates
        || run.cycles != c.cycles
        || run.events_per_cycle != c.events_per_cycle
        || run.verifier.tactics.len() as u32 != c.tactics
    {
        return Err("run.json disagrees with the committed registry".into());
    }

    let metrics: Vec<CycleRecord> = parse_lines(METRICS_PATH, &read(dir, METRICS_PATH)?)?;
    let mut series: Vec<(String, Vec<f64>)> = run
        .arms
        .iter()
        .map(|a| (a.name.clone(), Vec::new()))
        .collect();
    for m in &metrics {
        let expected = delta_p(m.pass_count, run.events_per_cycle, c.decision_threshold)
            .map_err(|e| e.to_string())?;
        if m.events() != run.events_per_cycle || m.delta_p != expected {
            return Err(format!(
                "arm {} cycle {}: inconsistent metrics",
                m.arm, m.cycle
            ));
        }
        let (_, s) = series
            .iter_mut()
            .find(|(name, _)| *name == m.arm)
            .ok_or_else(|| format!("metrics for unknown arm {}", m.arm))?;
        s.push(m.delta_p.to_f64());
    }
    if series.iter().any(|(_, s)| s.len() as u64 != run.cycles) {
        return Err("metrics do not cover every cycle".into());
    }

    let recomputed =
        build_verdict(&registry, bound, run.mode, &series).map_err(|e| e.to_string())?;
    let verdict_path = &manifest.governance_verdict_path;
    if !safe_relative(verdict_path) {
        return Err(format!("illegal verdict path {verdict_path:?}"));
    }
    let stored: VerdictDocument = parse_json(verdict_path, &read(dir, verdict_path)?)?;
    if stored != recomputed {
        return Err(format!(
            "stored verdict (fired {:?}, {:?}) differs from recomputed (fired {:?}, {:?})",
            stored.fired, stored.claim_level, recomputed.fired, recomputed.claim_level
        ));
    }
    let summary: RunSummary = parse_json(SUMMARY_PATH, &read(dir, SUMMARY_PATH)?)?;
    if summary.fired != recomputed.fired || summary.claim_level != recomputed.claim_level {
        return Err("summary.json disagrees with the verdict".into());
    }
    Ok(())
}

struct Checks {
    results: Vec<CheckResult>,
}

impl Checks {
    fn run<T>(
        &mut self,
        check: CheckId,
        outcome: Check<T>,
        ok: impl FnOnce(&T) -> String,
    ) -> Option<T> {
        let (passed, detail) = match &outcome {
            Ok(v) => (true, ok(v)),
            Err(msg) => (false, msg.clone()),
        };
        self.results.push(CheckResult {
            check,
            passed,
            detail,
        });
        outcome.ok()
    }
}

fn run_checks(dir: &Path, checks: &mut Checks) -> Option<()> {
    use CheckId::*;
    let manifest = checks.run(ManifestCanonical, check_manifest(dir), |m| {
        format!("{} files listed", m.files.len())
    })?;
    checks.run(ArtifactKinds, check_kinds(&manifest), |n| {
        format!("{n} typed artifacts")
    })?;
    let bound = checks.run(
        RegistryBindingPresent,
        check_binding_present(&manifest),
        |d| format!("registry bound to {d}"),
    )?;
    checks.run(RegistryHash, check_registry_hash(dir, bound), |_| {
        "registry.json matches".into()
    })?;
    checks.run(FileHashes, check_file_hashes(dir, &manifest), |n| {
        format!("{n} files match")
    })?;
    let ledgers = checks.run(LedgerChain, check_ledger(dir, &manifest), |l| {
        let blocks: usize = l.values().map(Vec::len).sum();
        format!("{} ledgers, {blocks} blocks replay to their heads", l.len())
    })?;
    checks.run(
        Attestations,
        check_attestations(dir, &manifest, &ledgers),
        |n| format!("{n} epoch commitments recompute"),
    )?;
    checks.run(
        GovernanceConsistency,
        check_governance(dir, &manifest, bound),
        |_| "fired predicates and claim level recompute".into(),
    )?;
    Some(())
}

/// Re-verifies a pack from its bytes alone. Read-only; stops at the first
/// failing check.
pub fn replay_verify(dir: &Path) -> VerifyReport {
    let mut checks = Checks {
        results: Vec::new(),
    };
    run_checks(dir, &mut checks);
    let failed_check = checks.results.iter().find(|c| !c.passed).map(|c| c.check);
    VerifyReport {
        pack: dir.display().to_string(),
        passed: failed_check.is_none() && checks.results.len() == CheckId::ALL.len(),
        failed_check,
        checks: checks.results,
        disclaimer: DISCLAIMER.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArmAudit {
    pub arm: String,
    #[serde(flatten)]
    pub report: AuditReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PackAudit {
    pub pack: String,
    pub passed: bool,
    pub arms: Vec<ArmAudit>,
}

impl fmt::Display for PackAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pack {}", self.pack)?;
        for a in &self.arms {
            let r = &a.report;
            write!(
                f,
                "  {}: coverage {}%, {} blocks, {} verified, head {}",
                a.arm,
                r.coverage_pct,
                r.total,
                r.verified,
                if r.head_match { "matches" } else { "MISMATCH" }
            )?;
            if !r.divergences.is_empty() {
                write!(f, ", divergent blocks {:?}", r.divergences)?;
            }
            writeln!(f)?;
        }
        write!(f, "audit {}", if self.passed { "passed" } else { "FAILED" })
    }
}

/// Mirror audit of every ledger in a pack. Block files that do not parse
/// count as unverified.
pub fn audit_pack(dir: &Path) -> Result<PackAudit> {
    let blocks_dir = dir.join("blocks");
    let mut arms: Vec<String> = fs::read_dir(&blocks_dir)
        .at(&blocks_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    arms.sort();

    let mut out = Vec::new();
    for arm in arms {
        let arm_dir = blocks_dir.join(&arm);
        let mut indexed: Vec<(u64, PathBuf)> = fs::read_dir(&arm_dir)
            .at(&arm_dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let index = name.strip_suffix(".json")?.parse::<u64>().ok()?;
                Some((index, e.path()))
            })
            .collect();
        indexed.sort();
        let blocks: Vec<Block> = indexed
            .iter()
            .map(|(index, path)| {
                fs::read(path)
                    .ok()
                    .and_then(|b| serde_json::from_slice(&b).ok())
                    .unwrap_or(Block {
                        index: *index,
                        artifact_ids: Vec::new(),
                        merkle_root: Digest32::ZERO,
                    })
            })
            .collect();
        let head_file = arm_dir.join("head.json");
        let head = fs::read(&head_file)
            .ok()
            .and_then(|b| serde_json::from_slice::<LedgerHead>(&b).ok());
        let report = match head {
            Some(h) => audit(&blocks, &h),
            None => AuditReport {
                head_match: false,
                ..audit(&blocks, &LedgerHead::GENESIS)
            },
        };
        out.push(ArmAudit { arm, report });
    }
    Ok(PackAudit {
        pack: dir.display().to_string(),
        passed: !out.is_empty() && out.iter().all(|a| a.report.passed()),
        arms: out,
    })
}
