//! Frozen commitments, fail-closed predicates and negative-knowledge typing.
//!
//! F5.2 and F5.3 are this crate's realizations of "variance ratio out of
//! bounds" and "windowed Δp drift excessive":
//!
//! * F5.2: `ρ = Var(treatment) / Var(baseline)` (population variances) fires
//!   when `ρ > ρ_max` or `ρ < 1/ρ_max`. Zero baseline variance fires unless
//!   the treatment variance is zero too.
//! * F5.3: split the series into disjoint windows of `W` cycles (a trailing
//!   partial window is ignored) and fire when any two adjacent window means
//!   differ by more than `δ`.
//!
//! Both fire when the series is too short to evaluate. Any fired predicate
//! caps the claim level at L0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::metrics::{arm_variance, mean};
use crate::hashcore::{hash, to_canonical_bytes, CanonicalError, Digest32, Fixed6};
use crate::rfl::{ABSTAIN_PENALTY, WEIGHT_CLIP};
use crate::verifier::Outcome;

#[derive(Debug, Error)]
pub enum GovernanceError {
    #[error("variance ratio bound must exceed 1, got {0}")]
    BadRatioBound(f64),
    #[error("drift window must be at least 2, got {0}")]
    BadWindow(u32),
    #[error("registry document is invalid: {0}")]
    InvalidRegistry(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClaimLevel {
    /// No capability claim.
    L0,
    /// Measurement infrastructure valid for this run.
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredicateId {
    #[serde(rename = "F5.2")]
    VarianceRatio,
    #[serde(rename = "F5.3")]
    WindowedDrift,
}

impl PredicateId {
    pub fn as_str(self) -> &'static str {
        match self {
            PredicateId::VarianceRatio => "F5.2",
            PredicateId::WindowedDrift => "F5.3",
        }
    }
}

impl fmt::Display for PredicateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArtifactKind {
    Verified,
    Refuted,
    Abstained,
    InadmissibleUpdate,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [
        ArtifactKind::Verified,
        ArtifactKind::Refuted,
        ArtifactKind::Abstained,
        ArtifactKind::InadmissibleUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Verified => "VERIFIED",
            ArtifactKind::Refuted => "REFUTED",
            ArtifactKind::Abstained => "ABSTAINED",
            ArtifactKind::InadmissibleUpdate => "INADMISSIBLE_UPDATE",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("invalid artifact_kind {s:?}"))
    }
}

pub fn classify_artifact(outcome: Outcome, blocked_update: bool) -> ArtifactKind {
    if blocked_update {
        return ArtifactKind::InadmissibleUpdate;
    }
    match outcome {
        Outcome::Pass => ArtifactKind::Verified,
        Outcome::Fail => ArtifactKind::Refuted,
        Outcome::Abstain => ArtifactKind::Abstained,
    }
}

/// SHADOW records would-be-blocked updates; ENFORCE blocks them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GovernanceMode {
    #[default]
    Shadow,
    Enforce,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    pub variance_ratio_max: Fixed6,
    pub drift_window: u32,
    pub drift_tolerance: Fixed6,
    pub decision_threshold: Fixed6,
    pub arm_learning_rates: BTreeMap<String, Fixed6>,
    /// Updates with a learning rate above this are inadmissible under ENFORCE.
    pub lr_ceiling: Fixed6,
    pub abstain_penalty: Fixed6,
    pub weight_clip: Fixed6,
    pub claim_ceiling: ClaimLevel,
    pub cycles: u64,
    pub events_per_cycle: u32,
    pub tactics: u32,
}

/// Versioned set of frozen run constraints. Bound into the manifest by hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitmentRegistry {
    pub version: String,
    pub constraints: Constraints,
}

pub const REGISTRY_VERSION: &str = "gcr-1";

impl CommitmentRegistry {
    /// Frozen defaults for the two-arm desk-scale run.
    pub fn defaults() -> Self {
        let lr = |micros| Fixed6::from_micros(micros);
        CommitmentRegistry {
            version: REGISTRY_VERSION.to_string(),
            constraints: Constraints {
                variance_ratio_max: lr(4_000_000),
                drift_window: 10,
                drift_tolerance: lr(150_000),
                decision_threshold: lr(500_000),
                arm_learning_rates: BTreeMap::from([
                    ("baseline".to_string(), lr(0)),
                    ("treatment".to_string(), lr(100_000)),
                ]),
                lr_ceiling: lr(100_000),
                abstain_penalty: Fixed6::from_f64(ABSTAIN_PENALTY).expect("finite"),
                weight_clip: Fixed6::from_f64(WEIGHT_CLIP).expect("finite"),
                claim_ceiling: ClaimLevel::L1,
                cycles: 100,
                events_per_cycle: 20,
                tactics: 4,
            },
        }
    }

    pub fn canonical_bytes(&self) -> Result<Vec<u8>, GovernanceError> {
        Ok(to_canonical_bytes(self)?)
    }

    /// Parses any JSON rendering of a registry; key order and whitespace are irrelevant.
    pub fn from_json(bytes: &[u8]) -> Result<Self, GovernanceError> {
        serde_json::from_slice(bytes).map_err(|e| GovernanceError::InvalidRegistry(e.to_string()))
    }
}

pub fn registry_hash(registry: &CommitmentRegistry) -> Result<Digest32, GovernanceError> {
    Ok(hash(&registry.canonical_bytes()?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateEvaluation {
    pub id: PredicateId,
    pub fired: bool,
    /// ρ for F5.2, the largest window drift for F5.3; absent when undefined.
    pub statistic: Option<Fixed6>,
    pub reason: String,
}

pub fn f52_variance_ratio(
    baseline: &[f64],
    treatment: &[f64],
    rho_max: f64,
) -> Result<PredicateEvaluation, GovernanceError> {
    if !rho_max.is_finite() || rho_max <= 1.0 {
        return Err(GovernanceError::BadRatioBound(rho_max));
    }
    let eval = |fired, statistic: Option<f64>, reason: String| PredicateEvaluation {
        id: PredicateId::VarianceRatio,
        fired,
        statistic: statistic.and_then(|s| Fixed6::from_f64(s).ok()),
        reason,
    };
    if baseline.len() < 2 || treatment.len() < 2 {
        return Ok(eval(
            true,
            None,
            "insufficient evidence: series shorter than 2".into(),
        ));
    }
    let vb = arm_variance(baseline);
    let vt = arm_variance(treatment);
    if vb == 0.0 {
        return Ok(if vt == 0.0 {
            eval(false, None, "both arms have zero variance".into())
        } else {
            eval(
                true,
                None,
                "baseline variance is zero, treatment is not".into(),
            )
        });
    }
    let rho = vt / vb;
    let fired = rho > rho_max || rho < 1.0 / rho_max;
    Ok(eval(
        fired,
        Some(rho),
        format!("variance ratio {rho:.6} against bound {rho_max}"),
    ))
}

pub fn f53_windowed_drift(
    series: &[f64],
    window: u32,
    tolerance: f64,
) -> Result<PredicateEvaluation, GovernanceError> {
    if window < 2 {
        return Err(GovernanceError::BadWindow(window));
    }
    let w = window as usize;
    if series.len() < 2 * w {
        return Ok(PredicateEvaluation {
            id: PredicateId::WindowedDrift,
            fired: true,
            statistic: None,
            reason: format!(
                "insufficient evidence: {} cycles, need {}",
                series.len(),
                2 * w
            ),
        });
    }
    let means: Vec<f64> = series.chunks_exact(w).map(mean).collect();
    let max_drift = means
        .windows(2)
        .map(|pair| (pair[1] - pair[0]).abs())
        .fold(0.0, f64::max);
    Ok(PredicateEvaluation {
        id: PredicateId::WindowedDrift,
        fired: max_drift > tolerance,
        statistic: Fixed6::from_f64(max_drift).ok(),
        reason: format!("max window drift {max_drift:.6} against tolerance {tolerance}"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernanceVerdict {
    pub fired: BTreeSet<PredicateId>,
    pub claim_level: ClaimLevel,
}

pub fn evaluate(fired: BTreeSet<PredicateId>) -> GovernanceVerdict {
    let claim_level = if fired.is_empty() {
        ClaimLevel::L1
    } else {
        ClaimLevel::L0
    };
    GovernanceVerdict { fired, claim_level }
}

impl GovernanceVerdict {
    /// Lowers the claim level to `ceiling` if it is above it.
    pub fn capped(mut self, ceiling: ClaimLevel) -> Self {
        self.claim_level = self.claim_level.min(ceiling);
        self
    }
}

/// Contents of `governance_verdict.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictDocument {
    pub fired: BTreeSet<PredicateId>,
    pub claim_level: ClaimLevel,
    pub registry_sha256: Digest32,
    pub mode: GovernanceMode,
    pub evaluations: BTreeMap<String, Vec<PredicateEvaluation>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::statistics::Statistics;

    #[test]
    fn classification() {
        assert_eq!(
            classify_artifact(Outcome::Pass, false),
            ArtifactKind::Verified
        );
        assert_eq!(
            classify_artifact(Outcome::Fail, false),
            ArtifactKind::Refuted
        );
        assert_eq!(
            classify_artifact(Outcome::Abstain, false),
            ArtifactKind::Abstained
        );
        for o in Outcome::ALL {
            assert_eq!(classify_artifact(o, true), ArtifactKind::InadmissibleUpdate);
        }
    }

    #[test]
    fn kind_parsing_is_closed() {
        for k in ArtifactKind::ALL {
            assert_eq!(k.as_str().parse::<ArtifactKind>().unwrap(), k);
        }
        assert!("FOO".parse::<ArtifactKind>().is_err());
        assert!("verified".parse::<ArtifactKind>().is_err());
    }

    #[test]
    fn verdict_ladder() {
        assert_eq!(evaluate(BTreeSet::new()).claim_level, ClaimLevel::L1);
        assert_eq!(
            evaluate([PredicateId::VarianceRatio].into()).claim_level,
            ClaimLevel::L0
        );
        assert_eq!(
            evaluate([PredicateId::VarianceRatio, PredicateId::WindowedDrift].into()).claim_level,
            ClaimLevel::L0
        );
        assert_eq!(
            evaluate(BTreeSet::new()).capped(ClaimLevel::L0).claim_level,
            ClaimLevel::L0
        );
    }

    #[test]
    fn verdict_serializes_predicate_ids() {
        let v = evaluate([PredicateId::WindowedDrift, PredicateId::VarianceRatio].into());
        let doc = String::from_utf8(to_canonical_bytes(&v).unwrap()).unwrap();
        assert_eq!(doc, r#"{"claim_level":"L0","fired":["F5.2","F5.3"]}"#);
    }

    #[test]
    fn f52_cases() {
        let s = [0.1, -0.1, 0.2, 0.0];
        assert!(!f52_variance_ratio(&s, &s, 4.0).unwrap().fired);
        assert!(f52_variance_ratio(&[0.2; 5], &s, 4.0).unwrap().fired);
        assert!(!f52_variance_ratio(&[0.2; 5], &[0.1; 5], 4.0).unwrap().fired);
        assert!(f52_variance_ratio(&[0.1], &s, 4.0).unwrap().fired);
        assert!(f52_variance_ratio(&s, &s, 1.0).is_err());
    }

    #[test]
    fn f52_ratio_five() {
        // baseline ±0.1 -> Var 0.01; treatment ±sqrt(0.05) -> Var 0.05
        let baseline = [0.1, -0.1, 0.1, -0.1];
        let a = 0.05f64.sqrt();
        let treatment = [a, -a, a, -a];
        // independent oracle
        let vb = baseline.iter().population_variance();
        let vt = treatment.iter().population_variance();
        assert!((vt / vb - 5.0).abs() < 1e-9);
        let eval = f52_variance_ratio(&baseline, &treatment, 4.0).unwrap();
        assert!(eval.fired);
        assert_eq!(eval.statistic.unwrap().to_string(), "5.000000");
        // inverse direction fires as well
        assert!(
            f52_variance_ratio(&treatment, &baseline, 4.0)
                .unwrap()
                .fired
        );
    }

    #[test]
    fn f53_cases() {
        assert!(!f53_windowed_drift(&[0.1; 40], 10, 0.15).unwrap().fired);
        assert!(f53_windowed_drift(&[0.1; 10], 10, 0.15).unwrap().fired);
        assert!(f53_windowed_drift(&[0.1; 19], 10, 0.15).unwrap().fired);
        let mut step = vec![0.2; 10];
        step.extend([0.5; 10]);
        let eval = f53_windowed_drift(&step, 10, 0.15).unwrap();
        assert!(eval.fired);
        assert_eq!(eval.statistic.unwrap().to_string(), "0.300000");
        assert!(f53_windowed_drift(&step, 1, 0.15).is_err());
    }

    #[test]
    fn f53_ignores_trailing_partial_window() {
        let mut s = vec![0.0; 20];
        s.extend([0.9; 5]);
        assert!(!f53_windowed_drift(&s, 10, 0.15).unwrap().fired);
    }

    #[test]
    fn registry_hash_is_order_independent() {
        let reg = CommitmentRegistry::defaults();
        let mut v = serde_json::to_value(&reg).unwrap();
        let pretty = serde_json::to_vec_pretty(&v).unwrap();
        let reparsed = CommitmentRegistry::from_json(&pretty).unwrap();
        assert_eq!(
            registry_hash(&reg).unwrap(),
            registry_hash(&reparsed).unwrap()
        );

        v["constraints"]["drift_window"] = serde_json::json!(11);
        let changed = CommitmentRegistry::from_json(&serde_json::to_vec(&v).unwrap()).unwrap();
        assert_ne!(
            registry_hash(&reg).unwrap(),
            registry_hash(&changed).unwrap()
        );
    }

    #[test]
    fn registry_rejects_unknown_fields() {
        let mut v = serde_json::to_value(CommitmentRegistry::defaults()).unwrap();
        v["constraints"]["surprise"] = serde_json::json!(1);
        assert!(CommitmentRegistry::from_json(&serde_json::to_vec(&v).unwrap()).is_err());
    }

    #[test]
    fn default_registry_hash_frozen() {
        // python: sha256(json.dumps(reg, sort_keys=True, separators=(",", ":")))
        assert_eq!(
            registry_hash(&CommitmentRegistry::defaults())
                .unwrap()
                .to_hex(),
            "290949785691f4a6a3744f8090f748c8ca06803f955adac5e3fc737726f108fe"
        );
    }
}
