//! Monte Carlo evaluation of payout policies.
//!
//! Each path discretizes the controlled reserve with an Euler scheme,
//! accrues the dividend stream with the exact per-step discount integral,
//! and stops at ruin (located by linear interpolation inside the crossing
//! step, with the dividend prorated to the crossing time) or at the horizon.
//!
//! Reproducibility: path `i` draws from a counter-seeded generator stream,
//! so the estimate is bit-identical for a given `(seed, n_paths, dt,
//! horizon)` regardless of thread count or scheduling. Antithetic pairs
//! `(2j, 2j + 1)` share stream `j` with the second path negating every
//! draw; standard errors are then computed over pair means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::FeedbackCurve;
use crate::model::ModelParams;
use crate::value::Solution;

/// Rejected simulation setup.
#[derive(Debug, Error, PartialEq)]
pub enum SimConfigError {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("need at least one path")]
    NoPaths,
    #[error("start level must be nonnegative, got {0}")]
    NegativeStart(f64),
}

/// Risk rule of a simulated policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskRule {
    /// The optimal feedback curve.
    Feedback,
    /// Constant exposure (must lie in the band).
    Constant(f64),
    /// The feedback curve reflected inside the band, `alpha + beta - a(x)`:
    /// an admissible control that is maximally wrong about where to take
    /// risk while keeping the same range.
    Reflected,
}

/// Payout rule of a simulated policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoutRule {
    /// Pay the cap exactly on `[threshold, inf)`.
    Threshold(f64),
    /// Constant rate (must lie in `[0, M]`).
    Constant(f64),
}

/// An admissible feedback policy for the simulator.
#[derive(Debug, Clone)]
pub struct Policy {
    pub risk: RiskRule,
    pub payout: PayoutRule,
    curve: FeedbackCurve,
    band: (f64, f64),
    label: String,
    claims_optimal: bool,
}

impl Policy {
    /// The policy the closed form claims is optimal: feedback risk, cap
    /// payout above the threshold.
    pub fn optimal(s: &Solution) -> Policy {
        Policy {
            risk: RiskRule::Feedback,
            payout: PayoutRule::Threshold(s.value.x1),
            curve: s.value.curve.clone(),
            band: (s.params.alpha, s.params.beta),
            label: "optimal".to_string(),
            claims_optimal: true,
        }
    }

    pub fn with_rules(
        s: &Solution,
        risk: RiskRule,
        payout: PayoutRule,
        label: impl Into<String>,
    ) -> Policy {
        Policy {
            risk,
            payout,
            curve: s.value.curve.clone(),
            band: (s.params.alpha, s.params.beta),
            label: label.into(),
            claims_optimal: false,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Whether this policy was built as the claimed optimum (and so should
    /// match the value function, rather than merely stay below it).
    pub fn claims_optimal(&self) -> bool {
        self.claims_optimal
    }

    /// Effective risk at reserve `x`, plus the warm-start hint for the next
    /// lookup (the raw curve value where one is consulted).
    #[inline]
    fn risk_at(&self, x: f64, hint: f64) -> (f64, f64) {
        match self.risk {
            RiskRule::Constant(a) => (a, hint),
            RiskRule::Feedback => {
                let a = self.curve.a_at_hinted(x, hint);
                (a, a)
            }
            RiskRule::Reflected => {
                let raw = self.curve.a_at_hinted(x, hint);
                (self.band.0 + self.band.1 - raw, raw)
            }
        }
    }

    #[inline]
    fn payout_at(&self, x: f64, cap: f64) -> f64 {
        match self.payout {
            PayoutRule::Threshold(t) => {
                if x >= t {
                    cap
                } else {
                    0.0
                }
            }
            PayoutRule::Constant(c) => c,
        }
    }
}

/// Deliberately suboptimal competitors for majorization checks: extreme
/// constant controls, a delayed payout threshold, and reversed risk taking.
pub fn suboptimal_suite(s: &Solution) -> Vec<Policy> {
    let p = &s.params;
    let late = if s.value.x1 > 0.0 { 2.0 * s.value.x1 } else { 0.5 };
    vec![
        Policy::with_rules(s, RiskRule::Constant(p.alpha), PayoutRule::Constant(p.m), "min_risk_always_pay"),
        Policy::with_rules(s, RiskRule::Constant(p.beta), PayoutRule::Constant(p.m), "max_risk_always_pay"),
        Policy::with_rules(s, RiskRule::Constant(p.beta), PayoutRule::Constant(0.0), "max_risk_never_pay"),
        Policy::with_rules(s, RiskRule::Feedback, PayoutRule::Threshold(late), "late_payout"),
        Policy::with_rules(s, RiskRule::Reflected, PayoutRule::Threshold(s.value.x1), "reflected_risk"),
    ]
}

/// Simulation setup. `horizon` truncates paths that have not hit ruin; the
/// resulting bias is bounded by [`SimEstimate::truncation_bound`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub antithetic: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_paths: 50_000, dt: 1e-3, horizon: 80.0, seed: 7, antithetic: true }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        if !(self.dt > 0.0) {
            return Err(SimConfigError::NonPositiveStep(self.dt));
        }
        if !(self.horizon > 0.0) {
            return Err(SimConfigError::NonPositiveHorizon(self.horizon));
        }
        if self.n_paths == 0 {
            return Err(SimConfigError::NoPaths);
        }
        Ok(())
    }
}

/// A Monte Carlo estimate of the discounted dividend stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Upper bound on the value truncated at the horizon:
    /// `(surviving fraction) * (M / gamma) * e^{-gamma horizon}`.
    pub truncation_bound: f64,
    pub ruined_fraction: f64,
    pub n_paths: usize,
}

/// Estimates the expected discounted dividends of `policy` from `x0`.
pub fn simulate_policy(
    p: &ModelParams,
    policy: &Policy,
    x0: f64,
    cfg: &SimConfig,
) -> Result<SimEstimate, SimConfigError> {
    cfg.validate()?;
    if x0 < 0.0 {
        return Err(SimConfigError::NegativeStart(x0));
    }
    let n_paths = if cfg.antithetic { cfg.n_paths.next_multiple_of(2) } else { cfg.n_paths };
    let n_steps = (cfg.horizon / cfg.dt).ceil() as u64;
    let decay = (-p.gamma * cfg.dt).exp();
    let pay_unit = (1.0 - decay) / p.gamma;
    let sqrt_dt = cfg.dt.sqrt();
    let hint0 = policy.curve.a_at(0.0);

    let paths: Vec<(f64, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let (stream, flip) =
                if cfg.antithetic { ((i / 2) as u64, i % 2 == 1) } else { (i as u64, false) };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            one_path(p, policy, x0, n_steps, cfg.dt, decay, pay_unit, sqrt_dt, hint0, &mut rng, flip)
        })
        .collect();

    // Sequential reduction in path order keeps the estimate bit-identical
    // under any parallel schedule.
    let mut sum = 0.0;
    let mut ruined = 0usize;
    for &(v, hit) in &paths {
        sum += v;
        ruined += hit as usize;
    }
    let mean = sum / n_paths as f64;

    let std_error = if cfg.antithetic {
        let m = n_paths / 2;
        let mut ss = 0.0;
        for j in 0..m {
            let pair = 0.5 * (paths[2 * j].0 + paths[2 * j + 1].0);
            ss += (pair - mean) * (pair - mean);
        }
        (ss / (m.saturating_sub(1).max(1) as f64) / m as f64).sqrt()
    } else {
        let mut ss = 0.0;
        for &(v, _) in &paths {
            ss += (v - mean) * (v - mean);
        }
        (ss / (n_paths.saturating_sub(1).max(1) as f64) / n_paths as f64).sqrt()
    };

    let survive = 1.0 - ruined as f64 / n_paths as f64;
    Ok(SimEstimate {
        mean,
        std_error,
        truncation_bound: survive * p.m / p.gamma * (-p.gamma * cfg.horizon).exp(),
        ruined_fraction: ruined as f64 / n_paths as f64,
        n_paths,
    })
}

/// One line of a policy-comparison run: a policy, a start level, the Monte
/// Carlo estimate there, and whether it is consistent with the closed form
/// (equal within noise for the claimed optimum, not above it within noise
/// for anything else).
#[derive(Debug, Clone, Serialize)]
pub struct MajorizationRow {
    pub policy: String,
    pub x0: f64,
    pub estimate: SimEstimate,
    pub value: f64,
    /// Margin left in the inequality the row had to satisfy; nonnegative
    /// exactly when the row passes.
    pub margin: f64,
    pub pass: bool,
}

/// Runs every policy from every start level and compares against the
/// closed-form value there. `allowance` absorbs the discretization bias of
/// the claimed optimum (scheme error grows like the square root of the step
/// size; calibrate it by comparing runs at nested steps).
pub fn majorization_check(
    s: &Solution,
    policies: &[Policy],
    x0s: &[f64],
    cfg: &SimConfig,
    allowance: f64,
) -> Result<Vec<MajorizationRow>, SimConfigError> {
    let mut rows = Vec::with_capacity(policies.len() * x0s.len());
    for policy in policies {
        for &x0 in x0s {
            let estimate = simulate_policy(&s.params, policy, x0, cfg)?;
            let value = s.value.eval(x0).v;
            let margin = if policy.claims_optimal() {
                let slack = 3.0 * estimate.std_error + allowance + estimate.truncation_bound;
                slack - (estimate.mean - value).abs()
            } else {
                value + 3.0 * estimate.std_error - estimate.mean
            };
            rows.push(MajorizationRow {
                policy: policy.label().to_string(),
                x0,
                estimate,
                value,
                margin,
                pass: margin >= 0.0,
            });
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn one_path(
    p: &ModelParams,
    policy: &Policy,
    x0: f64,
    n_steps: u64,
    dt: f64,
    decay: f64,
    pay_unit: f64,
    sqrt_dt: f64,
    hint0: f64,
    rng: &mut ChaCha8Rng,
    flip: bool,
) -> (f64, bool) {
    let mut x = x0;
    let mut w = 1.0;
    let mut payout = 0.0;
    let mut hint = hint0;
    for _ in 0..n_steps {
        let (a, new_hint) = policy.risk_at(x, hint);
        hint = new_hint;
        let c = policy.payout_at(x, p.m);
        let z: f64 = rng.sample(StandardNormal);
        let z = if flip { -z } else { z };
        let x_next = x + (a * p.mu - p.delta - c) * dt + a * p.sigma * sqrt_dt * z;
        if x_next <= 0.0 {
            // Prorate the dividend to the linearly interpolated crossing.
            let theta = x / (x - x_next);
            let w_end = w * (-p.gamma * theta * dt).exp();
            payout += c * w * (1.0 - (-p.gamma * theta * dt).exp()) / p.gamma;
            debug_assert!(payout <= p.m / p.gamma * (1.0 - w_end) * (1.0 + 1e-12) + 1e-300);
            return (payout, true);
        }
        payout += c * w * pay_unit;
        w *= decay;
        x = x_next;
    }
    // Paying the cap at every step telescopes to exactly this bound, so no
    // path can exceed it however the controls behave.
    debug_assert!(payout <= p.m / p.gamma * (1.0 - w) * (1.0 + 1e-12) + 1e-300);
    (payout, false)
}
