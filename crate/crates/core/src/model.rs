//! Model parameters, characteristic roots, derived thresholds, and regime
//! classification.
//!
//! The controlled reserve follows
//!
//! ```text
//!     dR_t = (a_t * mu - delta) dt + a_t * sigma dW_t - c_t dt,
//! ```
//!
//! where the risk exposure `a_t` is constrained to `[alpha, beta]` and the
//! dividend rate `c_t` to `[0, M]`. Dividends are discounted at rate `gamma`
//! and stop at the ruin time `inf { t : R_t = 0 }`.
//!
//! Everything downstream is organized around a small set of derived
//! constants. With `D = mu^2 + 2 gamma sigma^2`:
//!
//! ```text
//!     c       = 2 delta mu / D          fixed point of the feedback ODE
//!     c_tilde = 2 mu (delta + M) / D    risk level where the payout region saturates
//!     Gamma   = mu^2 / D                exponent of the power-form value segment
//!     scale   = mu sigma^2 / D          reserve-per-risk scale of the feedback ODE
//!     M_z     = (z - c) D / (2 mu)      cap at which c_tilde equals z
//!     M0(z)   = z^2 sigma^2 gamma / (2 (z mu - delta))   cap below which the
//!               payout threshold collapses to zero under constant risk z
//! ```
//!
//! The sign of `2 delta / mu` relative to `[alpha, beta]` splits the parameter
//! space into four debt cases, and the cap `M` relative to the `M_z` / `M0`
//! thresholds selects one of fifteen qualitative policy shapes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Primitive parameters of the reserve model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Profit rate per unit of retained risk.
    pub mu: f64,
    /// Volatility per unit of retained risk.
    pub sigma: f64,
    /// Debt service rate. Zero is allowed.
    pub delta: f64,
    /// Discount rate applied to the dividend stream.
    pub gamma: f64,
    /// Lower bound on the risk exposure.
    pub alpha: f64,
    /// Upper bound on the risk exposure.
    pub beta: f64,
    /// Cap on the dividend payout rate.
    #[serde(rename = "M")]
    pub m: f64,
}

/// Rejection reasons for a parameter set.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("delta must be nonnegative and finite, got {0}")]
    NegativeDelta(f64),
    #[error("risk bounds must satisfy 0 < alpha < beta, got alpha={alpha}, beta={beta}")]
    BadRiskBounds { alpha: f64, beta: f64 },
}

impl ModelParams {
    pub fn new(
        mu: f64,
        sigma: f64,
        delta: f64,
        gamma: f64,
        alpha: f64,
        beta: f64,
        m: f64,
    ) -> Result<Self, ParamError> {
        let p = ModelParams { mu, sigma, delta, gamma, alpha, beta, m };
        p.validate()?;
        Ok(p)
    }

    /// Checks positivity and ordering constraints. `delta = 0` is accepted;
    /// every other rate must be strictly positive.
    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("M", self.m),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::NotPositive { name, value });
            }
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(ParamError::NegativeDelta(self.delta));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite() && 0.0 < self.alpha && self.alpha < self.beta)
        {
            return Err(ParamError::BadRiskBounds { alpha: self.alpha, beta: self.beta });
        }
        Ok(())
    }

    /// `mu^2 + 2 gamma sigma^2`, the denominator shared by all derived constants.
    pub fn d_denom(&self) -> f64 {
        self.mu * self.mu + 2.0 * self.gamma * self.sigma * self.sigma
    }
}

/// A reserve-level breakpoint that a given regime may never reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Breakpoint {
    At(f64),
    Unreached,
}

impl Serialize for Breakpoint {
    /// A reached breakpoint is a plain number; an unreached one is the
    /// string `"inf"`, matching the sentinel used everywhere in reports.
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Breakpoint::At(x) => serializer.serialize_f64(*x),
            Breakpoint::Unreached => serializer.serialize_str("inf"),
        }
    }
}

impl Breakpoint {
    pub fn is_finite(&self) -> bool {
        matches!(self, Breakpoint::At(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Breakpoint::At(x) => Some(x),
            Breakpoint::Unreached => None,
        }
    }

    /// `Unreached` maps to `f64::INFINITY` for comparisons and display.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Breakpoint::At(x) => x,
            Breakpoint::Unreached => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Breakpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Breakpoint::At(x) => write!(f, "{x}"),
            Breakpoint::Unreached => write!(f, "inf"),
        }
    }
}

// =========================================================================
// Characteristic roots
// =========================================================================

/// The two real roots of a constant-risk characteristic equation, `plus > 0 > minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    pub plus: f64,
    pub minus: f64,
}

/// Solves `(sigma^2 z^2 / 2) r^2 + b r - gamma = 0` without cancellation:
/// the larger-magnitude root comes from the stable branch of the quadratic
/// formula and the other from the root product `-2 gamma / (sigma^2 z^2)`.
fn stable_roots(p: &ModelParams, z: f64, b: f64) -> RootPair {
    let a2 = p.sigma * p.sigma * z * z; // 2 A
    let disc = b * b + 2.0 * a2 * p.gamma;
    let s = disc.sqrt();
    // q = -(b + sign(b) sqrt(disc)) / 2; both roots are q/A and C/q.
    let q = -0.5 * (b + b.signum() * s);
    let r1 = 2.0 * q / a2;
    let r2 = -p.gamma / q;
    if r1 > r2 {
        RootPair { plus: r1, minus: r2 }
    } else {
        RootPair { plus: r2, minus: r1 }
    }
}

/// Roots of the no-payout equation `(sigma^2 z^2 / 2) V'' + (z mu - delta) V' - gamma V = 0`
/// at constant risk `z > 0`.
pub fn characteristic_roots(p: &ModelParams, z: f64) -> RootPair {
    stable_roots(p, z, z * p.mu - p.delta)
}

/// Roots of the full-payout equation, drift reduced by the cap:
/// `(sigma^2 z^2 / 2) V'' + (z mu - delta - M) V' - gamma V = 0`.
///
/// At `z = c_tilde` the discriminant collapses to `(delta + M)^2` and the
/// negative root equals `-mu / (sigma^2 c_tilde)` exactly.
pub fn post_dividend_roots(p: &ModelParams, z: f64) -> RootPair {
    stable_roots(p, z, z * p.mu - p.delta - p.m)
}

// =========================================================================
// Derived constants
// =========================================================================

/// Cap thresholds and feedback-curve constants derived from the parameters.
///
/// The `m0_*` fields are `None` where the defining expression has a
/// nonpositive denominator: `m0_alpha` needs `alpha mu > delta`, `m0_beta`
/// needs `beta mu > delta`, and `m0_mid` (the value at `z = 2 delta / mu`)
/// needs `delta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// Fixed point of the feedback ODE, `2 delta mu / D`.
    pub c: f64,
    /// Saturation risk level of the payout region, `2 mu (delta + M) / D`.
    pub c_tilde: f64,
    /// Exponent of the power-form value segment, `mu^2 / D`.
    pub gamma_pow: f64,
    /// Reserve-per-risk scale of the feedback ODE, `mu sigma^2 / D`.
    pub scale: f64,
    /// Cap at which `c_tilde = alpha`.
    pub m_alpha: f64,
    /// Cap at which `c_tilde = beta`.
    pub m_beta: f64,
    /// Zero-threshold cap under constant risk `alpha`.
    pub m0_alpha: Option<f64>,
    /// Zero-threshold cap at the interior risk level `2 delta / mu`.
    pub m0_mid: Option<f64>,
    /// Zero-threshold cap under constant risk `beta`.
    pub m0_beta: Option<f64>,
}

/// `M0(z) = z^2 sigma^2 gamma / (2 (z mu - delta))`, defined for `z mu > delta`.
pub fn m0_at(p: &ModelParams, z: f64) -> Option<f64> {
    let denom = z * p.mu - p.delta;
    if denom > 0.0 {
        Some(z * z * p.sigma * p.sigma * p.gamma / (2.0 * denom))
    } else {
        None
    }
}

pub fn derived_constants(p: &ModelParams) -> DerivedConstants {
    let d = p.d_denom();
    let m_at = |z: f64| (z - 2.0 * p.delta * p.mu / d) * d / (2.0 * p.mu);
    DerivedConstants {
        c: 2.0 * p.delta * p.mu / d,
        c_tilde: 2.0 * p.mu * (p.delta + p.m) / d,
        gamma_pow: p.mu * p.mu / d,
        scale: p.mu * p.sigma * p.sigma / d,
        m_alpha: m_at(p.alpha),
        m_beta: m_at(p.beta),
        m0_alpha: m0_at(p, p.alpha),
        m0_mid: if p.delta > 0.0 { m0_at(p, 2.0 * p.delta / p.mu) } else { None },
        m0_beta: m0_at(p, p.beta),
    }
}

// =========================================================================
// Regime classification
// =========================================================================

/// Position of the interior drift-balance level `2 delta / mu` relative to
/// the risk bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebtCase {
    /// `2 delta / mu < alpha`
    Low,
    /// `alpha <= 2 delta / mu < beta`
    Mid,
    /// `delta / mu < beta <= 2 delta / mu`
    High,
    /// `beta mu <= delta`
    VeryHigh,
}

/// Qualitative shape of the optimal policy within a debt case, selected by
/// the cap `M`. `Delayed` means the payout threshold `x1` is positive,
/// `Immediate` means payout starts at zero reserve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MSubcase {
    /// `M > M_beta`: risk climbs from alpha to beta strictly below `x1`.
    LowFullBand,
    /// `M_alpha < M <= M_beta`: risk climbs from alpha and saturates at
    /// `c_tilde` exactly at `x1`.
    LowSaturated,
    /// `M0(alpha) < M <= M_alpha`: constant risk alpha, positive `x1`.
    LowAlphaDelayed,
    /// `M <= M0(alpha)`: constant risk alpha, `x1 = 0`.
    LowAlphaImmediate,
    /// `M >= M_beta`: risk climbs from `2 delta / mu` to beta strictly below `x1`.
    MidFullBand,
    /// `M0(2 delta / mu) < M < M_beta`: risk climbs from `2 delta / mu` and
    /// saturates at `c_tilde` exactly at `x1`.
    MidSaturated,
    /// `M_alpha < M <= M0(2 delta / mu)`: constant risk `c_tilde`, `x1 = 0`.
    MidTildeImmediate,
    /// `M <= M_alpha`: constant risk alpha, `x1 = 0`.
    MidAlphaImmediate,
    /// `M > M0(beta)`: constant risk beta, positive `x1`.
    HighBetaDelayed,
    /// `M_beta <= M <= M0(beta)`: constant risk beta, `x1 = 0`.
    HighBetaImmediate,
    /// `M_alpha <= M < M_beta`: constant risk `c_tilde`, `x1 = 0`.
    HighTildeImmediate,
    /// `M < M_alpha`: constant risk alpha, `x1 = 0`.
    HighAlphaImmediate,
    /// `M >= M_beta`: constant risk beta, `x1 = 0`.
    VeryHighBeta,
    /// `M_alpha <= M < M_beta`: constant risk `c_tilde`, `x1 = 0`.
    VeryHighTilde,
    /// `M < M_alpha`: constant risk alpha, `x1 = 0`.
    VeryHighAlpha,
}

impl MSubcase {
    /// Ordinal of the cap range within its debt case, `1` (largest caps)
    /// through `4` (smallest); the very-high case has only three ranges.
    pub fn branch_index(self) -> u8 {
        match self {
            MSubcase::LowFullBand
            | MSubcase::MidFullBand
            | MSubcase::HighBetaDelayed
            | MSubcase::VeryHighBeta => 1,
            MSubcase::LowSaturated
            | MSubcase::MidSaturated
            | MSubcase::HighBetaImmediate
            | MSubcase::VeryHighTilde => 2,
            MSubcase::LowAlphaDelayed
            | MSubcase::MidTildeImmediate
            | MSubcase::HighTildeImmediate
            | MSubcase::VeryHighAlpha => 3,
            MSubcase::LowAlphaImmediate
            | MSubcase::MidAlphaImmediate
            | MSubcase::HighAlphaImmediate => 4,
        }
    }
}

/// Full classification of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Regime {
    pub debt_case: DebtCase,
    pub m_subcase: MSubcase,
    /// Whether the payout threshold `x1` is strictly positive.
    pub x1_positive: bool,
}

/// Classifies a valid parameter set. Total and deterministic: every valid
/// set lands in exactly one subcase. Boundary caps are assigned to the
/// branch whose closed form covers them, as listed on each variant; at any
/// such boundary the two adjacent closed forms coincide.
pub fn classify_regime(p: &ModelParams) -> Regime {
    let k = derived_constants(p);
    let two_d_mu = 2.0 * p.delta / p.mu;
    if two_d_mu < p.alpha {
        let m0a = k.m0_alpha.expect("alpha mu > 2 delta >= delta in the low-debt case");
        let (sub, pos) = if p.m > k.m_beta {
            (MSubcase::LowFullBand, true)
        } else if p.m > k.m_alpha {
            (MSubcase::LowSaturated, true)
        } else if p.m > m0a {
            (MSubcase::LowAlphaDelayed, true)
        } else {
            (MSubcase::LowAlphaImmediate, false)
        };
        Regime { debt_case: DebtCase::Low, m_subcase: sub, x1_positive: pos }
    } else if two_d_mu < p.beta {
        let m0m = k.m0_mid.expect("delta > 0 since 2 delta / mu >= alpha > 0");
        let (sub, pos) = if p.m >= k.m_beta {
            (MSubcase::MidFullBand, true)
        } else if p.m > m0m {
            (MSubcase::MidSaturated, true)
        } else if p.m > k.m_alpha {
            (MSubcase::MidTildeImmediate, false)
        } else {
            (MSubcase::MidAlphaImmediate, false)
        };
        Regime { debt_case: DebtCase::Mid, m_subcase: sub, x1_positive: pos }
    } else if p.beta * p.mu > p.delta {
        let m0b = k.m0_beta.expect("beta mu > delta in the high-debt case");
        let (sub, pos) = if p.m > m0b {
            (MSubcase::HighBetaDelayed, true)
        } else if p.m >= k.m_beta {
            (MSubcase::HighBetaImmediate, false)
        } else if p.m >= k.m_alpha {
            (MSubcase::HighTildeImmediate, false)
        } else {
            (MSubcase::HighAlphaImmediate, false)
        };
        Regime { debt_case: DebtCase::High, m_subcase: sub, x1_positive: pos }
    } else {
        let sub = if p.m >= k.m_beta {
            MSubcase::VeryHighBeta
        } else if p.m >= k.m_alpha {
            MSubcase::VeryHighTilde
        } else {
            MSubcase::VeryHighAlpha
        };
        Regime { debt_case: DebtCase::VeryHigh, m_subcase: sub, x1_positive: false }
    }
}

// =========================================================================
// Qualitative policy traits
// =========================================================================

/// Qualitative facts about the optimal feedback policy used by the sweep
/// command: which risk bounds the policy ever attains, and whether the
/// payout threshold is the first reserve level of maximal risk.
///
/// The flags follow the published taxonomy row by row; in particular the
/// high-debt constant-alpha row reports `alpha_attained = false` even though
/// the clamped policy sits at alpha, because the unconstrained maximizer
/// stays strictly below it there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PolicyTraits {
    pub alpha_attained: bool,
    pub beta_attained: bool,
    pub x1_first_max: bool,
}

/// Relative equality used for boundary rows of the taxonomy.
fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

pub fn policy_traits(p: &ModelParams) -> PolicyTraits {
    let k = derived_constants(p);
    let r = classify_regime(p);
    let alpha_is_pivot = near(p.alpha, 2.0 * p.delta / p.mu);
    match r.m_subcase {
        MSubcase::LowFullBand => PolicyTraits {
            alpha_attained: true,
            beta_attained: true,
            x1_first_max: false,
        },
        MSubcase::LowSaturated => PolicyTraits {
            alpha_attained: true,
            beta_attained: near(p.m, k.m_beta),
            x1_first_max: true,
        },
        MSubcase::LowAlphaDelayed => PolicyTraits {
            alpha_attained: true,
            beta_attained: false,
            x1_first_max: false,
        },
        MSubcase::LowAlphaImmediate => PolicyTraits {
            alpha_attained: true,
            beta_attained: false,
            x1_first_max: true,
        },
        MSubcase::MidFullBand => PolicyTraits {
            alpha_attained: alpha_is_pivot,
            beta_attained: true,
            x1_first_max: false,
        },
        MSubcase::MidSaturated => PolicyTraits {
            alpha_attained: alpha_is_pivot,
            beta_attained: false,
            x1_first_max: true,
        },
        MSubcase::MidTildeImmediate => PolicyTraits {
            alpha_attained: false,
            beta_attained: false,
            x1_first_max: true,
        },
        MSubcase::MidAlphaImmediate => PolicyTraits {
            alpha_attained: true,
            beta_attained: false,
            x1_first_max: true,
        },
        MSubcase::HighBetaDelayed => PolicyTraits {
            alpha_attained: false,
            beta_attained: true,
            x1_first_max: false,
        },
        MSubcase::HighBetaImmediate | MSubcase::VeryHighBeta => PolicyTraits {
            alpha_attained: false,
            beta_attained: true,
            x1_first_max: true,
        },
        MSubcase::HighTildeImmediate | MSubcase::VeryHighTilde => PolicyTraits {
            alpha_attained: near(p.m, k.m_alpha),
            beta_attained: false,
            x1_first_max: true,
        },
        MSubcase::HighAlphaImmediate | MSubcase::VeryHighAlpha => PolicyTraits {
            alpha_attained: false,
            beta_attained: false,
            x1_first_max: true,
        },
    }
}
