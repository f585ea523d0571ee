//! Configured stand-in verifier: each reasoning event
//! is mapped to PASS, FAIL or ABSTAIN by one uniform draw against the chosen
//! tactic's profile.

use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashcore::{Digest32, Fixed6};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifierError {
    #[error("tactic {tactic} out of range for {count} tactics")]
    TacticOutOfRange { tactic: usize, count: usize },
    #[error("verifier needs at least 2 tactics, got {0}")]
    TooFewTactics(usize),
    #[error("tactic {index}: probabilities must lie in [0, 1] with pass + abstain <= 1 (got {pass}, {abstain})")]
    BadProfile {
        index: usize,
        pass: f64,
        abstain: f64,
    },
    #[error("budget must be at least 1")]
    ZeroBudget,
}

/// Ternary verification outcome. There is no fourth state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Pass,
    Fail,
    Abstain,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Pass, Outcome::Fail, Outcome::Abstain];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Abstain => "ABSTAIN",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Only PASS is admissible to the ledger.
pub fn admissible(outcome: Outcome) -> bool {
    outcome == Outcome::Pass
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TacticProfile {
    pub success_prob: f64,
    pub abstain_prob: f64,
}

impl TacticProfile {
    pub fn new(success_prob: f64, abstain_prob: f64) -> Self {
        TacticProfile {
            success_prob,
            abstain_prob,
        }
    }

    pub fn fail_prob(&self) -> f64 {
        (1.0 - self.success_prob - self.abstain_prob).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierConfig {
    tactics: Vec<TacticProfile>,
    budget: u32,
}

impl VerifierConfig {
    pub fn new(tactics: Vec<TacticProfile>, budget: u32) -> Result<Self, VerifierError> {
        if tactics.len() < 2 {
            return Err(VerifierError::TooFewTactics(tactics.len()));
        }
        if budget == 0 {
            return Err(VerifierError::ZeroBudget);
        }
        for (index, t) in tactics.iter().enumerate() {
            let unit = |p: f64| (0.0..=1.0).contains(&p);
            if !unit(t.success_prob)
                || !unit(t.abstain_prob)
                || t.success_prob + t.abstain_prob > 1.0
            {
                return Err(VerifierError::BadProfile {
                    index,
                    pass: t.success_prob,
                    abstain: t.abstain_prob,
                });
            }
        }
        Ok(VerifierConfig { tactics, budget })
    }

    /// Four tactics whose mean pass rate is exactly 0.5.
    pub fn default_fair() -> Self {
        VerifierConfig::new(
            vec![
                TacticProfile::new(0.65, 0.10),
                TacticProfile::new(0.55, 0.15),
                TacticProfile::new(0.45, 0.20),
                TacticProfile::new(0.35, 0.25),
            ],
            64,
        )
        .expect("default profile is valid")
    }

    pub fn tactics(&self) -> &[TacticProfile] {
        &self.tactics
    }

    pub fn tactic_count(&self) -> usize {
        self.tactics.len()
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn profile(&self, tactic: usize) -> Result<&TacticProfile, VerifierError> {
        self.tactics
            .get(tactic)
            .ok_or(VerifierError::TacticOutOfRange {
                tactic,
                count: self.tactics.len(),
            })
    }

    /// Fixed-point rendering for hashed documents.
    pub fn describe(&self) -> VerifierConfigRecord {
        VerifierConfigRecord {
            budget: self.budget,
            tactics: self
                .tactics
                .iter()
                .map(|t| TacticRecord {
                    success_prob: Fixed6::from_f64(t.success_prob).unwrap_or_default(),
                    abstain_prob: Fixed6::from_f64(t.abstain_prob).unwrap_or_default(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticRecord {
    pub success_prob: Fixed6,
    pub abstain_prob: Fixed6,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierConfigRecord {
    pub budget: u32,
    pub tactics: Vec<TacticRecord>,
}

/// One reasoning attempt produced by the derivation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningEvent {
    pub cycle: u64,
    pub index: u32,
    pub tactic: usize,
    pub descriptor: serde_json::Value,
    pub statement_hash: Digest32,
}

/// Consumes exactly one uniform draw `u` from `rng`:
/// `u < a` abstains, `a <= u < a + p` passes, anything else fails.
pub fn verify<R: RngCore + ?Sized>(
    event: &ReasoningEvent,
    config: &VerifierConfig,
    rng: &mut R,
) -> Result<Outcome, VerifierError> {
    draw_outcome(config, event.tactic, rng)
}

/// The draw behind [`verify`], without an event wrapper.
pub fn draw_outcome<R: RngCore + ?Sized>(
    config: &VerifierConfig,
    tactic: usize,
    rng: &mut R,
) -> Result<Outcome, VerifierError> {
    let profile = config.profile(tactic)?;
    let u: f64 = rng.gen();
    Ok(classify_draw(u, profile))
}

fn classify_draw(u: f64, profile: &TacticProfile) -> Outcome {
    if u < profile.abstain_prob {
        Outcome::Abstain
    } else if u < profile.abstain_prob + profile.success_prob {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashcore::hash;
    use crate::stream::stream_rng;

    fn event(tactic: usize) -> ReasoningEvent {
        ReasoningEvent {
            cycle: 0,
            index: 0,
            tactic,
            descriptor: serde_json::json!({}),
            statement_hash: hash(b""),
        }
    }

    fn two(p: f64, a: f64) -> VerifierConfig {
        VerifierConfig::new(
            vec![TacticProfile::new(p, a), TacticProfile::new(0.5, 0.0)],
            1,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_profiles() {
        let mut rng = stream_rng(1, "verifier", &[0]);
        let always_pass = two(1.0, 0.0);
        let always_abstain = two(0.0, 1.0);
        for _ in 0..1000 {
            assert_eq!(
                verify(&event(0), &always_pass, &mut rng).unwrap(),
                Outcome::Pass
            );
            assert_eq!(
                verify(&event(0), &always_abstain, &mut rng).unwrap(),
                Outcome::Abstain
            );
        }
    }

    #[test]
    fn empirical_rates_match_profile() {
        // binomial sigma at n = 10_000, p = 0.6 is 0.0049; 0.015 is ~3 sigma
        let cfg = two(0.6, 0.2);
        let mut rng = stream_rng(7, "verifier", &[0]);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            match verify(&event(0), &cfg, &mut rng).unwrap() {
                Outcome::Pass => counts[0] += 1,
                Outcome::Fail => counts[1] += 1,
                Outcome::Abstain => counts[2] += 1,
            }
        }
        let rate = |c: usize| c as f64 / n as f64;
        assert!((rate(counts[0]) - 0.6).abs() <= 0.015, "{counts:?}");
        for (c, p) in [(counts[1], 0.2), (counts[2], 0.2)] {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((rate(c) - p).abs() <= 3.0 * sigma, "{counts:?}");
        }
        assert_eq!(counts.iter().sum::<usize>(), n);
    }

    #[test]
    fn same_seed_same_outcomes() {
        let cfg = VerifierConfig::default_fair();
        let run = |seed| {
            let mut rng = stream_rng(seed, "verifier", &[5]);
            (0..200)
                .map(|i| verify(&event(i % 4), &cfg, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn draw_boundaries() {
        let p = TacticProfile::new(0.6, 0.2);
        assert_eq!(classify_draw(0.0, &p), Outcome::Abstain);
        assert_eq!(classify_draw(0.2, &p), Outcome::Pass);
        assert_eq!(classify_draw(0.79, &p), Outcome::Pass);
        assert_eq!(classify_draw(0.8, &p), Outcome::Fail);
    }

    #[test]
    fn out_of_range_tactic_rejected() {
        let cfg = VerifierConfig::default_fair();
        let mut rng = stream_rng(1, "verifier", &[0]);
        assert_eq!(
            verify(&event(4), &cfg, &mut rng),
            Err(VerifierError::TacticOutOfRange {
                tactic: 4,
                count: 4
            })
        );
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            VerifierConfig::new(vec![TacticProfile::new(0.5, 0.5)], 1),
            Err(VerifierError::TooFewTactics(1))
        ));
        assert!(VerifierConfig::new(vec![TacticProfile::new(0.7, 0.4); 2], 1).is_err());
        assert!(VerifierConfig::new(vec![TacticProfile::new(-0.1, 0.0); 2], 1).is_err());
        assert!(VerifierConfig::new(vec![TacticProfile::new(0.5, 0.5); 2], 0).is_err());
    }

    #[test]
    fn admissibility() {
        assert!(admissible(Outcome::Pass));
        assert!(!admissible(Outcome::Fail));
        assert!(!admissible(Outcome::Abstain));
    }

    #[test]
    fn default_profile_is_fair() {
        let cfg = VerifierConfig::default_fair();
        let mean: f64 = cfg.tactics().iter().map(|t| t.success_prob).sum::<f64>() / 4.0;
        assert!((mean - 0.5).abs() < 1e-12);
    }
}
