//! The optimal feedback risk curve `a(x)`.
//!
//! Wherever the risk constraint is inactive, the optimal exposure solves the
//! autonomous ODE
//!
//! ```text
//!     a'(x) = (1 - c / a(x)) / scale,
//! ```
//!
//! whose solution is given implicitly by `G(a(x)) = G(a0) + (x - x0) / scale`
//! with the strictly increasing potential
//!
//! ```text
//!     G(u) = u + c ln(u - c),        u > c
//! ```
//!
//! (`G(u) = u` when `c = 0`). The curve therefore rises from its starting
//! level toward the relevant endpoint, and the constraint clamps it to a
//! constant outside one rising window. Each regime needs at most three
//! pieces: a constant floor, one rising window, and a constant ceiling.
//!
//! Depending on the regime the rise starts at `alpha` (low debt, above the
//! reserve level `x_alpha`) or at `2 delta / mu` (mid debt, at zero reserve),
//! and ends either at `beta` (full band) or at the saturation level
//! `c_tilde` (exactly at the payout threshold). All remaining regimes keep
//! the risk constant.

use crate::model::{
    characteristic_roots, classify_regime, derived_constants, Breakpoint, MSubcase, ModelParams,
    Regime,
};

/// Evaluates the curve potential `G(u) = u + c ln(u - c)` for `u > c`.
///
/// The `c = 0` case must short-circuit to `u`: the general expression would
/// evaluate `0 * ln(u)` which is fine for `u > 0` but NaN at the `u -> 0`
/// edge probed by property tests.
pub fn g_eval(u: f64, c: f64) -> f64 {
    if c == 0.0 {
        u
    } else {
        u + c * (u - c).ln()
    }
}

/// Inverts the curve potential: returns the unique `u > c` with `G(u) = y`.
///
/// Newton from a branch-appropriate seed, safeguarded by a bracket so a
/// step that escapes `(c, inf)` or overshoots falls back to bisection.
/// Accurate to `1e-13 * max(1, |y|)` in `G` terms.
pub fn g_invert(y: f64, c: f64) -> f64 {
    if c == 0.0 {
        return y;
    }
    // Seed from whichever term of G dominates: the log term below u = c + 1,
    // the linear term above it.
    let mut u = if y < c + 1.0 { c + ((y - c) / c).exp() } else { y };
    if !(u > c) || !u.is_finite() {
        u = c + 1.0;
    }
    let mut lo = u;
    let mut hi = u;
    while g_eval(lo, c) > y {
        lo = c + 0.5 * (lo - c);
    }
    while g_eval(hi, c) < y {
        hi = c + 2.0 * (hi - c);
    }
    let tol = 1e-13 * y.abs().max(1.0);
    for _ in 0..100 {
        let diff = g_eval(u, c) - y;
        if diff.abs() <= tol {
            return u;
        }
        if diff > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        // G'(u) = u / (u - c)
        let next = u - diff * (u - c) / u;
        u = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi.abs() {
            return u;
        }
    }
    u
}

/// One window of strictly rising risk, `a(x) = G^{-1}(g_start + (x - x_start) / scale)`.
#[derive(Debug, Clone, Copy)]
struct Rise {
    x_start: f64,
    x_end: f64,
    a_start: f64,
    a_end: f64,
    g_start: f64,
}

/// The optimal risk exposure as a function of the reserve level.
#[derive(Debug, Clone)]
pub struct FeedbackCurve {
    pub regime: Regime,
    /// Fixed point of the risk ODE, `2 delta mu / (mu^2 + 2 gamma sigma^2)`.
    pub c: f64,
    /// Reserve-per-risk scale of the risk ODE.
    pub scale: f64,
    floor: f64,
    rise: Option<Rise>,
    ceiling: f64,
}

/// Reserve level at which the low-debt curve leaves `alpha`: the unique
/// positive solution of the slope-matching condition at constant risk
/// `alpha`, expressed through the characteristic roots at `alpha`.
///
/// Requires `2 delta < alpha mu` (otherwise the log argument is not in
/// `(1, inf)` and no such level exists).
fn x_alpha_low(p: &ModelParams) -> f64 {
    let r = characteristic_roots(p, p.alpha);
    let s2 = p.sigma * p.sigma;
    let arg = r.minus * (p.mu + p.alpha * s2 * r.minus)
        / (r.plus * (p.mu + p.alpha * s2 * r.plus));
    arg.ln() / (r.plus - r.minus)
}

impl FeedbackCurve {
    pub fn build(p: &ModelParams) -> Self {
        let regime = classify_regime(p);
        let k = derived_constants(p);
        let rise_from = |x_start: f64, a_start: f64, a_end: f64| {
            let g_start = g_eval(a_start, k.c);
            Rise {
                x_start,
                x_end: x_start + k.scale * (g_eval(a_end, k.c) - g_start),
                a_start,
                a_end,
                g_start,
            }
        };
        let (floor, rise, ceiling) = match regime.m_subcase {
            MSubcase::LowFullBand => {
                let r = rise_from(x_alpha_low(p), p.alpha, p.beta);
                (p.alpha, Some(r), p.beta)
            }
            MSubcase::LowSaturated => {
                let r = rise_from(x_alpha_low(p), p.alpha, k.c_tilde);
                (p.alpha, Some(r), k.c_tilde)
            }
            MSubcase::MidFullBand => {
                let r = rise_from(0.0, 2.0 * p.delta / p.mu, p.beta);
                (r.a_start, Some(r), p.beta)
            }
            MSubcase::MidSaturated => {
                let r = rise_from(0.0, 2.0 * p.delta / p.mu, k.c_tilde);
                (r.a_start, Some(r), k.c_tilde)
            }
            MSubcase::LowAlphaDelayed
            | MSubcase::LowAlphaImmediate
            | MSubcase::MidAlphaImmediate
            | MSubcase::HighAlphaImmediate
            | MSubcase::VeryHighAlpha => (p.alpha, None, p.alpha),
            MSubcase::MidTildeImmediate
            | MSubcase::HighTildeImmediate
            | MSubcase::VeryHighTilde => (k.c_tilde, None, k.c_tilde),
            MSubcase::HighBetaDelayed
            | MSubcase::HighBetaImmediate
            | MSubcase::VeryHighBeta => (p.beta, None, p.beta),
        };
        FeedbackCurve { regime, c: k.c, scale: k.scale, floor, rise, ceiling }
    }

    /// Optimal risk exposure at reserve level `x >= 0`.
    pub fn a_at(&self, x: f64) -> f64 {
        match &self.rise {
            None => self.floor,
            Some(r) if x <= r.x_start => self.floor,
            Some(r) if x >= r.x_end => self.ceiling,
            Some(r) => g_invert(r.g_start + (x - r.x_start) / self.scale, self.c),
        }
    }

    /// Like [`a_at`](Self::a_at) but seeded with a nearby known value, for
    /// tight loops that sweep `x` in small increments. Falls back to the
    /// safeguarded inversion if plain Newton stalls.
    pub fn a_at_hinted(&self, x: f64, hint: f64) -> f64 {
        let r = match &self.rise {
            None => return self.floor,
            Some(r) if x <= r.x_start => return self.floor,
            Some(r) if x >= r.x_end => return self.ceiling,
            Some(r) => r,
        };
        let y = r.g_start + (x - r.x_start) / self.scale;
        if self.c == 0.0 {
            return y;
        }
        let mut u = hint.clamp(r.a_start, r.a_end);
        let tol = 1e-13 * y.abs().max(1.0);
        for _ in 0..8 {
            let diff = g_eval(u, self.c) - y;
            if diff.abs() <= tol {
                return u;
            }
            let next = u - diff * (u - self.c) / u;
            if !(next > self.c) {
                break;
            }
            u = next;
        }
        g_invert(y, self.c)
    }

    /// Start of the rising window, if the curve rises at all.
    pub fn rise_start(&self) -> Option<(f64, f64)> {
        self.rise.map(|r| (r.x_start, r.a_start))
    }

    /// End of the rising window, if the curve rises at all.
    pub fn rise_end(&self) -> Option<(f64, f64)> {
        self.rise.map(|r| (r.x_end, r.a_end))
    }

    /// Last reserve level at constant risk `alpha`, as reported in the
    /// published regime taxonomy (`Unreached` rows stay at a clamped
    /// constant for every reserve level).
    pub fn x_alpha_table(&self) -> Breakpoint {
        match self.regime.m_subcase {
            MSubcase::LowFullBand | MSubcase::LowSaturated => {
                Breakpoint::At(self.rise.expect("low-debt rising regimes have a window").x_start)
            }
            MSubcase::LowAlphaDelayed
            | MSubcase::LowAlphaImmediate
            | MSubcase::HighAlphaImmediate
            | MSubcase::VeryHighAlpha => Breakpoint::Unreached,
            MSubcase::MidFullBand
            | MSubcase::MidSaturated
            | MSubcase::MidTildeImmediate
            | MSubcase::MidAlphaImmediate
            | MSubcase::HighBetaDelayed
            | MSubcase::HighBetaImmediate
            | MSubcase::HighTildeImmediate
            | MSubcase::VeryHighBeta
            | MSubcase::VeryHighTilde => Breakpoint::At(0.0),
        }
    }

    /// First reserve level at risk `beta`, as reported in the published
    /// regime taxonomy.
    pub fn x_beta_table(&self) -> Breakpoint {
        match self.regime.m_subcase {
            MSubcase::LowFullBand | MSubcase::MidFullBand => {
                Breakpoint::At(self.rise.expect("full-band regimes have a window").x_end)
            }
            MSubcase::HighBetaDelayed
            | MSubcase::HighBetaImmediate
            | MSubcase::VeryHighBeta => Breakpoint::At(0.0),
            _ => Breakpoint::Unreached,
        }
    }
}
