//! Outcome-driven policy learning.
//!
//! The policy is a softmax over one weight per tactic. A verifier outcome on
//! tactic `k` produces the delta `Φ = s·e_k` with `s = +1` (PASS), `-1`
//! (FAIL) or `-β` (ABSTAIN, `β = 0.5`), and the update is
//! `w ← clip(w + η·Φ, ±10)`. Nothing but `(outcome, k, η)` reaches the
//! update, so artifact payloads can never leak into the policy.
//!
//! The stochastic-approximation view `w_{t+1} = w_t + η(h(w_t) + M_{t+1})`
//! is exposed only as diagnostics: a Monte Carlo estimate of the mean field
//! `h`, the martingale residual `M`, and partial-sum checks of the step
//! schedule.

use rand::{Rng, RngCore};
use serde::Serialize;
use thiserror::Error;

use crate::stream::stream_rng;
use crate::verifier::{draw_outcome, Outcome, VerifierConfig, VerifierError};

/// β: penalty applied to an abstaining tactic.
pub const ABSTAIN_PENALTY: f64 = 0.5;
/// Bound on every weight's magnitude.
pub const WEIGHT_CLIP: f64 = 10.0;
/// `L` in the bounded-update assumption.
pub const DELTA_BOUND: f64 = 1.0;
/// Smallest Monte Carlo sample accepted for estimating `h`.
pub const MIN_ORACLE_SAMPLES: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RflError {
    #[error("a policy needs at least 2 tactics, got {0}")]
    TooFewTactics(usize),
    #[error("tactic {tactic} out of range for {count} tactics")]
    TacticOutOfRange { tactic: usize, count: usize },
    #[error("weight {0} is not finite or exceeds the clip bound")]
    BadWeight(f64),
    #[error("step size must be finite and non-negative, got {0}")]
    BadStep(f64),
    #[error("Robbins-Monro decay exponent must lie in (0.5, 1], got {0}")]
    BadDecay(f64),
    #[error("delta has {delta} components, policy has {policy}")]
    DimensionMismatch { delta: usize, policy: usize },
    #[error("update produced a non-finite weight")]
    NonFinite,
    #[error("epistemic risk needs a non-empty window")]
    EmptyWindow,
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("need at least {MIN_ORACLE_SAMPLES} oracle samples, got {0}")]
    TooFewOracleSamples(usize),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    weights: Vec<f64>,
    version: u64,
}

impl Policy {
    /// All-zero weights, i.e. uniform tactic choice.
    pub fn uniform(tactics: usize) -> Result<Self, RflError> {
        Self::from_weights(vec![0.0; tactics])
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self, RflError> {
        if weights.len() < 2 {
            return Err(RflError::TooFewTactics(weights.len()));
        }
        if let Some(&w) = weights
            .iter()
            .find(|w| !w.is_finite() || w.abs() > WEIGHT_CLIP)
        {
            return Err(RflError::BadWeight(w));
        }
        Ok(Policy {
            weights,
            version: 0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn tactic_count(&self) -> usize {
        self.weights.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let max = self
            .weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TacticChoice {
    pub tactic: usize,
    pub probabilities: Vec<f64>,
}

/// Samples a tactic from `softmax(weights)` using one uniform draw.
pub fn select_tactic<R: RngCore + ?Sized>(policy: &Policy, rng: &mut R) -> TacticChoice {
    let probabilities = policy.probabilities();
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut tactic = probabilities.len() - 1;
    for (k, p) in probabilities.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            tactic = k;
            break;
        }
    }
    TacticChoice {
        tactic,
        probabilities,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyDelta(Vec<f64>);

impl PolicyDelta {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Signed magnitude of the delta for an outcome.
pub fn outcome_signal(outcome: Outcome) -> f64 {
    match outcome {
        Outcome::Pass => 1.0,
        Outcome::Fail => -1.0,
        Outcome::Abstain => -ABSTAIN_PENALTY,
    }
}

/// `Φ(outcome, π)` for an event that used `tactic`.
pub fn phi(outcome: Outcome, tactic: usize, policy: &Policy) -> Result<PolicyDelta, RflError> {
    let count = policy.tactic_count();
    if tactic >= count {
        return Err(RflError::TacticOutOfRange { tactic, count });
    }
    let mut delta = vec![0.0; count];
    delta[tactic] = outcome_signal(outcome);
    Ok(PolicyDelta(delta))
}

/// `π ⊕ η·Φ` as clipped vector addition. `η = 0` means learning is off: the
/// policy is returned untouched and its version does not advance.
pub fn update(policy: &Policy, eta: f64, delta: &PolicyDelta) -> Result<Policy, RflError> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(RflError::BadStep(eta));
    }
    if delta.0.len() != policy.tactic_count() {
        return Err(RflError::DimensionMismatch {
            delta: delta.0.len(),
            policy: policy.tactic_count(),
        });
    }
    if eta == 0.0 {
        return Ok(policy.clone());
    }
    let weights = policy
        .weights
        .iter()
        .zip(&delta.0)
        .map(|(w, d)| (w + eta * d).clamp(-WEIGHT_CLIP, WEIGHT_CLIP))
        .collect::<Vec<_>>();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(RflError::NonFinite);
    }
    Ok(Policy {
        weights,
        version: policy.version + 1,
    })
}

/// Plug-in estimate of `J(π)`: the fraction of outcomes that are not PASS.
pub fn epistemic_risk(outcomes: &[Outcome]) -> Result<f64, RflError> {
    if outcomes.is_empty() {
        return Err(RflError::EmptyWindow);
    }
    let unverified = outcomes.iter().filter(|o| **o != Outcome::Pass).count();
    Ok(unverified as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepSchedule {
    Constant { eta: f64 },
    RobbinsMonro { eta0: f64, alpha: f64 },
}

impl StepSchedule {
    pub fn constant(eta: f64) -> Result<Self, RflError> {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(RflError::BadStep(eta));
        }
        Ok(StepSchedule::Constant { eta })
    }

    /// `η_t = η_0 / (t + 1)^α` with `α ∈ (0.5, 1]`.
    pub fn robbins_monro(eta0: f64, alpha: f64) -> Result<Self, RflError> {
        if !eta0.is_finite() || eta0 <= 0.0 {
            return Err(RflError::BadStep(eta0));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(RflError::BadDecay(alpha));
        }
        Ok(StepSchedule::RobbinsMonro { eta0, alpha })
    }

    pub fn eta(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::RobbinsMonro { eta0, alpha } => eta0 / ((t + 1) as f64).powf(alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub horizon: u64,
    pub sum_eta: f64,
    pub sum_eta_sq: f64,
    /// `Σ η_t = ∞` holds analytically.
    pub divergent_sum: bool,
    /// `Σ η_t² < ∞` holds analytically.
    pub square_summable: bool,
}

impl ScheduleReport {
    pub fn satisfies_robbins_monro(&self) -> bool {
        self.divergent_sum && self.square_summable
    }
}

pub fn schedule_check(schedule: &StepSchedule, horizon: u64) -> Result<ScheduleReport, RflError> {
    if horizon == 0 {
        return Err(RflError::EmptyHorizon);
    }
    let (sum_eta, sum_eta_sq) = (0..horizon).fold((0.0, 0.0), |(s, s2), t| {
        let eta = schedule.eta(t);
        (s + eta, s2 + eta * eta)
    });
    let square_summable = matches!(schedule, StepSchedule::RobbinsMonro { .. });
    Ok(ScheduleReport {
        horizon,
        sum_eta,
        sum_eta_sq,
        divergent_sum: true,
        square_summable,
    })
}

/// Monte Carlo estimate of `h(π) = E[Φ | π]` at a frozen policy.
pub fn estimate_mean_field<R: RngCore + ?Sized>(
    policy: &Policy,
    config: &VerifierConfig,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>, RflError> {
    if samples < MIN_ORACLE_SAMPLES {
        return Err(RflError::TooFewOracleSamples(samples));
    }
    let mut sum = vec![0.0; policy.tactic_count()];
    for _ in 0..samples {
        let choice = select_tactic(policy, rng);
        let outcome = draw_outcome(config, choice.tactic, rng)?;
        sum[choice.tactic] += outcome_signal(outcome);
    }
    Ok(sum.into_iter().map(|s| s / samples as f64).collect())
}

/// `M = Φ_observed − ĥ(π)`. Diagnostic only; never used for learning.
pub fn martingale_residual<R: RngCore + ?Sized>(
    policy: &Policy,
    config: &VerifierConfig,
    observed: &PolicyDelta,
    n_oracle: usize,
    rng: &mut R,
) -> Result<Vec<f64>, RflError> {
    if observed.0.len() != policy.tactic_count() {
        return Err(RflError::DimensionMismatch {
            delta: observed.0.len(),
            policy: policy.tactic_count(),
        });
    }
    let h = estimate_mean_field(policy, config, n_oracle, rng)?;
    Ok(observed.0.iter().zip(h).map(|(d, h)| d - h).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualDiagnostic {
    pub steps: usize,
    pub oracle_samples: usize,
    pub mean_field: Vec<f64>,
    pub mean_residual: Vec<f64>,
    /// Standard error of each mean residual component.
    pub std_error: Vec<f64>,
    pub max_delta_norm: f64,
}

impl ResidualDiagnostic {
    pub fn within_sigmas(&self, sigmas: f64) -> bool {
        self.mean_residual
            .iter()
            .zip(&self.std_error)
            .all(|(m, se)| m.abs() <= sigmas * se + 1e-12)
    }
}

/// Runs `steps` events at the frozen `policy`, averaging `Φ − ĥ(π)`.
///
/// The standard error combines the spread of the observed deltas with the
/// Monte Carlo error of `ĥ`: `sd_k · sqrt(1/steps + 1/n_oracle)`.
pub fn residual_diagnostic(
    policy: &Policy,
    config: &VerifierConfig,
    steps: usize,
    n_oracle: usize,
    seed: u64,
) -> Result<ResidualDiagnostic, RflError> {
    if steps == 0 {
        return Err(RflError::EmptyHorizon);
    }
    let k = policy.tactic_count();
    let mean_field = estimate_mean_field(
        policy,
        config,
        n_oracle,
        &mut stream_rng(seed, "residual/oracle", &[]),
    )?;
    let mut rng = stream_rng(seed, "residual/steps", &[]);
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut max_delta_norm: f64 = 0.0;
    for _ in 0..steps {
        let choice = select_tactic(policy, &mut rng);
        let outcome = draw_outcome(config, choice.tactic, &mut rng)?;
        let delta = phi(outcome, choice.tactic, policy)?;
        max_delta_norm = max_delta_norm.max(delta.norm());
        for (i, d) in delta.0.iter().enumerate() {
            sum[i] += d;
            sum_sq[i] += d * d;
        }
    }
    let n = steps as f64;
    let scale = (1.0 / n + 1.0 / n_oracle as f64).sqrt();
    let mean_residual = sum
        .iter()
        .zip(&mean_field)
        .map(|(s, h)| s / n - h)
        .collect();
    let std_error = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, s2)| {
            let mean = s / n;
            ((s2 / n - mean * mean).max(0.0)).sqrt() * scale
        })
        .collect();
    Ok(ResidualDiagnostic {
        steps,
        oracle_samples: n_oracle,
        mean_field,
        mean_residual,
        std_error,
        max_delta_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::TacticProfile;

    /// Closed form of `h(π)_k = π_k (p_k − f_k − β a_k)`, independent of the
    /// sampling path.
    fn exact_mean_field(policy: &Policy, config: &VerifierConfig) -> Vec<f64> {
        policy
            .probabilities()
            .iter()
            .zip(config.tactics())
            .map(|(pi, t)| pi * (t.success_prob - t.fail_prob() - ABSTAIN_PENALTY * t.abstain_prob))
            .collect()
    }

    #[test]
    fn zero_weights_are_uniform() {
        let p = Policy::uniform(4).unwrap();
        for prob in p.probabilities() {
            assert!((prob - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_weights() {
        let p = Policy::from_weights(vec![10.0, -10.0]).unwrap();
        assert!(p.probabilities()[0] > 0.9999);
    }

    #[test]
    fn sampling_matches_softmax() {
        let p = Policy::from_weights(vec![1.0, 0.0, 0.0]).unwrap();
        let mut rng = stream_rng(3, "policy", &[0]);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| select_tactic(&p, &mut rng).tactic == 0)
            .count();
        let e = std::f64::consts::E;
        let expected = e / (e + 2.0);
        assert!((hits as f64 / n as f64 - expected).abs() <= 0.015);
    }

    #[test]
    fn phi_values() {
        let p = Policy::uniform(4).unwrap();
        assert_eq!(
            phi(Outcome::Pass, 2, &p).unwrap().as_slice(),
            &[0.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(
            phi(Outcome::Fail, 0, &p).unwrap().as_slice(),
            &[-1.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            phi(Outcome::Abstain, 1, &p).unwrap().as_slice(),
            &[0.0, -0.5, 0.0, 0.0]
        );
        assert!(phi(Outcome::Pass, 4, &p).is_err());
        for o in Outcome::ALL {
            assert!(phi(o, 3, &p).unwrap().norm() <= DELTA_BOUND);
        }
    }

    #[test]
    fn update_step() {
        let p = Policy::uniform(4).unwrap();
        let next = update(&p, 0.1, &phi(Outcome::Pass, 0, &p).unwrap()).unwrap();
        assert_eq!(next.weights(), &[0.1, 0.0, 0.0, 0.0]);
        assert_eq!(next.version(), 1);
    }

    #[test]
    fn zero_step_is_skipped() {
        let mut p = Policy::uniform(3).unwrap();
        for o in [Outcome::Pass, Outcome::Fail, Outcome::Abstain] {
            p = update(&p, 0.0, &phi(o, 1, &p).unwrap()).unwrap();
        }
        assert_eq!(p, Policy::uniform(3).unwrap());
        assert!(update(&p, -0.1, &phi(Outcome::Pass, 0, &p).unwrap()).is_err());
    }

    #[test]
    fn updates_add_when_unclipped() {
        let p = Policy::uniform(3).unwrap();
        let d1 = phi(Outcome::Pass, 0, &p).unwrap();
        let d2 = phi(Outcome::Abstain, 2, &p).unwrap();
        let seq = update(&update(&p, 0.1, &d1).unwrap(), 0.1, &d2).unwrap();
        let sum = PolicyDelta(d1.0.iter().zip(&d2.0).map(|(a, b)| a + b).collect());
        let once = update(&p, 0.1, &sum).unwrap();
        assert_eq!(seq.weights(), once.weights());
    }

    #[test]
    fn clip_holds() {
        let mut p = Policy::uniform(2).unwrap();
        for _ in 0..500 {
            p = update(&p, 0.1, &phi(Outcome::Pass, 0, &p).unwrap()).unwrap();
        }
        assert_eq!(p.weights()[0], WEIGHT_CLIP);
        assert!(Policy::from_weights(vec![11.0, 0.0]).is_err());
        assert!(Policy::from_weights(vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn pass_raises_probability() {
        for w in [
            vec![0.0, 0.0, 0.0],
            vec![3.0, -2.0, 1.0],
            vec![-9.0, 9.0, 0.0],
        ] {
            let p = Policy::from_weights(w).unwrap();
            for k in 0..3 {
                let next = update(&p, 0.1, &phi(Outcome::Pass, k, &p).unwrap()).unwrap();
                assert!(next.probabilities()[k] > p.probabilities()[k]);
            }
        }
    }

    #[test]
    fn risk_estimates() {
        use Outcome::*;
        assert_eq!(epistemic_risk(&[Pass, Pass]).unwrap(), 0.0);
        assert_eq!(epistemic_risk(&[Fail, Abstain]).unwrap(), 1.0);
        assert_eq!(epistemic_risk(&[Pass, Fail, Abstain, Pass]).unwrap(), 0.5);
        assert_eq!(epistemic_risk(&[]), Err(RflError::EmptyWindow));
    }

    #[test]
    fn schedules() {
        let c = schedule_check(&StepSchedule::constant(0.1).unwrap(), 100).unwrap();
        assert!((c.sum_eta - 10.0).abs() < 1e-12);
        assert!((c.sum_eta_sq - 1.0).abs() < 1e-12);
        assert!(!c.square_summable && !c.satisfies_robbins_monro());

        let rm = schedule_check(&StepSchedule::robbins_monro(1.0, 1.0).unwrap(), 100).unwrap();
        // H_100 computed as an exact rational with python fractions
        assert!((rm.sum_eta - 5.187377517639621).abs() < 1e-12);
        assert!(rm.satisfies_robbins_monro());

        assert_eq!(
            StepSchedule::robbins_monro(1.0, 0.4),
            Err(RflError::BadDecay(0.4))
        );
        assert!(StepSchedule::robbins_monro(1.0, 0.5).is_err());
        assert!(StepSchedule::constant(0.0).is_err());
        assert!(schedule_check(&StepSchedule::constant(0.1).unwrap(), 0).is_err());
    }

    #[test]
    fn mean_field_estimate_matches_closed_form() {
        let cfg = VerifierConfig::default_fair();
        let p = Policy::from_weights(vec![0.5, -0.3, 1.2, 0.0]).unwrap();
        let mut rng = stream_rng(9, "oracle", &[]);
        let est = estimate_mean_field(&p, &cfg, 50_000, &mut rng).unwrap();
        for (e, x) in est.iter().zip(exact_mean_field(&p, &cfg)) {
            // each component has variance <= 1/n
            assert!((e - x).abs() < 4.0 / (50_000f64).sqrt(), "{e} vs {x}");
        }
        let norm: f64 = est.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1.0);
    }

    #[test]
    fn deterministic_environment_residual_vanishes() {
        let cfg = VerifierConfig::new(
            vec![TacticProfile::new(1.0, 0.0), TacticProfile::new(1.0, 0.0)],
            1,
        )
        .unwrap();
        let p = Policy::from_weights(vec![10.0, -10.0]).unwrap();
        let observed = phi(Outcome::Pass, 0, &p).unwrap();
        let mut rng = stream_rng(1, "oracle", &[]);
        let m = martingale_residual(&p, &cfg, &observed, 1_000, &mut rng).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-3), "{m:?}");
        assert!(matches!(
            martingale_residual(&p, &cfg, &observed, 999, &mut rng),
            Err(RflError::TooFewOracleSamples(999))
        ));
    }

    #[test]
    fn residual_diagnostic_centers_on_zero() {
        let cfg = VerifierConfig::default_fair();
        let p = Policy::uniform(4).unwrap();
        let diag = residual_diagnostic(&p, &cfg, 10_000, 10_000, 5).unwrap();
        assert!(diag.within_sigmas(3.0), "{diag:?}");
        assert!(diag.max_delta_norm <= DELTA_BOUND);
    }
}
