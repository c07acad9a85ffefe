//! Analytic verification of a candidate solution.
//!
//! Everything here treats the assembled value function as a black box that
//! can be evaluated, and asks whether it actually solves the control
//! problem:
//!
//! * [`hjb_residual`] plugs the evaluation into the maximized
//!   dynamic-programming operator, re-deriving the maximizing risk and
//!   payout from the candidate's own derivatives.
//! * [`smooth_fit_report`] compares adjacent closed forms exactly at each
//!   breakpoint and checks the unit-slope condition at the payout threshold.
//! * [`identity_suite`] checks exact relations that the construction does
//!   not impose directly, so agreement is evidence rather than tautology.
//! * [`shape_report`] scans for monotonicity, concavity, the value bound,
//!   and consistency between the value's maximizer and the feedback curve.
//!
//! A deliberately spoiled candidate (see `PiecewiseValue::perturbed`) makes
//! every one of these reports fail, which is exercised in the tests.

use crate::model::{derived_constants, post_dividend_roots, DebtCase, DerivedConstants};
use crate::value::{PiecewiseValue, Solution};
use serde::Serialize;

/// Exclusion radius around breakpoints for scanned reports. The solution is
/// twice continuously differentiable, but exactly at a join the evaluation
/// switches forms and the last float digit can flap.
const BREAK_RADIUS: f64 = 1e-6;

/// Residual of the maximized dynamic-programming operator at `x`:
///
/// ```text
///     max_a [ sigma^2 a^2 V''/2 + (a mu - delta) V' ] - gamma V + M (1 - V')^+
/// ```
///
/// The maximizing risk is recomputed from the candidate's own derivatives
/// (interior stationary point clamped to the band, endpoints if the
/// curvature is not negative). Zero everywhere is equivalent to optimality.
pub fn hjb_residual(pv: &PiecewiseValue, x: f64) -> f64 {
    let p = pv.params();
    let e = pv.eval(x);
    let s2 = p.sigma * p.sigma;
    let gen_at = |a: f64| 0.5 * s2 * a * a * e.ddv + (a * p.mu - p.delta) * e.dv - p.gamma * e.v;
    let best = if e.ddv < 0.0 {
        gen_at((-p.mu * e.dv / (s2 * e.ddv)).clamp(p.alpha, p.beta))
    } else {
        gen_at(p.alpha).max(gen_at(p.beta))
    };
    best + p.m * (1.0 - e.dv).max(0.0)
}

/// Residuals over an even scan of `(0, x_max]`, with the worst raw and
/// normalized magnitudes singled out.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// Scan points actually evaluated (breakpoint neighborhoods are
    /// skipped, so the spacing is even but not gapless).
    pub xs: Vec<f64>,
    /// Normalized residual `residual / (gamma |V| + M)` at each scan point.
    pub residuals: Vec<f64>,
    /// Max of `|residual|` over scanned points, unnormalized.
    pub max_abs: f64,
    /// Max of `|residual| / (gamma |V| + M)` over scanned points.
    pub max_rel: f64,
    /// Scan point attaining the normalized max.
    pub at_x: f64,
}

impl ResidualReport {
    pub fn points(&self) -> usize {
        self.xs.len()
    }
}

pub fn residual_report(pv: &PiecewiseValue, n: usize, x_max: f64) -> ResidualReport {
    let p = pv.params();
    let breaks = pv.breakpoints();
    let mut report = ResidualReport {
        xs: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n),
        max_abs: 0.0,
        max_rel: 0.0,
        at_x: 0.0,
    };
    for i in 1..=n {
        let x = x_max * i as f64 / n as f64;
        if breaks.iter().any(|b| (x - b).abs() < BREAK_RADIUS) {
            continue;
        }
        let e = pv.eval(x);
        let raw = hjb_residual(pv, x);
        let rel = raw / (p.gamma * e.v.abs() + p.m);
        report.xs.push(x);
        report.residuals.push(rel);
        report.max_abs = report.max_abs.max(raw.abs());
        if rel.abs() > report.max_rel {
            report.max_rel = rel.abs();
            report.at_x = x;
        }
    }
    report
}

/// Mismatch between the two closed forms meeting at one breakpoint,
/// evaluated one-sidedly and exactly at the join.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BreakpointGap {
    pub x: f64,
    /// `V(left) - V(right)`, raw.
    pub d_value: f64,
    /// `V'(left) - V'(right)`, raw.
    pub d_slope: f64,
    /// `V''(left) - V''(right)`, raw.
    pub d_curve: f64,
}

/// Exact two-sided comparison of adjacent closed forms at each breakpoint.
/// Jump maxima are normalized by the payout ceiling `M / gamma` so the
/// same tolerance applies across parameter scales.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothFitReport {
    /// Raw per-breakpoint gaps, in increasing `x` order.
    pub gaps: Vec<BreakpointGap>,
    /// Largest value mismatch across a join, relative to `M / gamma`.
    pub max_value_jump: f64,
    /// Largest slope mismatch across a join, relative to `M / gamma`.
    pub max_slope_jump: f64,
    /// Largest curvature mismatch across a join, relative to `M / gamma`.
    pub max_curve_jump: f64,
    /// Breakpoint where the worst of the three mismatches occurs.
    pub worst_at: Option<f64>,
    /// `|V'(x1) - 1|` when the threshold is positive, else zero.
    pub threshold_slope_gap: f64,
}

pub fn smooth_fit_report(pv: &PiecewiseValue) -> SmoothFitReport {
    let ceiling = pv.ceiling();
    let mut rep = SmoothFitReport {
        gaps: Vec::new(),
        max_value_jump: 0.0,
        max_slope_jump: 0.0,
        max_curve_jump: 0.0,
        worst_at: None,
        threshold_slope_gap: if pv.x1 > 0.0 { (pv.eval(pv.x1).dv - 1.0).abs() } else { 0.0 },
    };
    let mut worst = 0.0;
    for bp in pv.breakpoints() {
        let hi = pv.segment_index(bp);
        let left = pv.eval_on(hi - 1, bp);
        let right = pv.eval_on(hi, bp);
        let gap = BreakpointGap {
            x: bp,
            d_value: left.v - right.v,
            d_slope: left.dv - right.dv,
            d_curve: left.ddv - right.ddv,
        };
        rep.max_value_jump = rep.max_value_jump.max(gap.d_value.abs() / ceiling);
        rep.max_slope_jump = rep.max_slope_jump.max(gap.d_slope.abs() / ceiling);
        rep.max_curve_jump = rep.max_curve_jump.max(gap.d_curve.abs() / ceiling);
        let here = gap.d_value.abs().max(gap.d_slope.abs()).max(gap.d_curve.abs()) / ceiling;
        if here >= worst {
            worst = here;
            rep.worst_at = Some(bp);
        }
        rep.gaps.push(gap);
    }
    rep
}

/// One named identity with its relative error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub error: f64,
}

/// Exact relations the parameters and the assembled solution must satisfy.
/// All errors are relative; an ordering check reports its worst normalized
/// violation (zero when the order holds).
pub fn identity_suite(s: &Solution) -> Vec<IdentityCheck> {
    let p = &s.params;
    let k = &s.constants;
    let s2 = p.sigma * p.sigma;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut checks = Vec::new();

    // The negative post-payout root at the saturation level has a closed
    // form independent of the quadratic solve.
    let rt = post_dividend_roots(p, k.c_tilde).minus;
    checks.push(IdentityCheck {
        name: "saturation_root",
        error: rel(rt, -p.mu / (s2 * k.c_tilde)),
    });

    checks.push(IdentityCheck {
        name: "cap_threshold_order",
        error: ordering_violation(s.regime.debt_case, k),
    });

    let at0 = s.value.eval(0.0);
    checks.push(IdentityCheck { name: "ruin_anchor", error: at0.v.abs() / s.value.ceiling() });
    checks.push(IdentityCheck {
        name: "concave_at_zero",
        error: if at0.ddv < 0.0 { 0.0 } else { 1.0 },
    });

    if s.value.x1 > 0.0 {
        checks.push(IdentityCheck {
            name: "threshold_slope",
            error: (s.value.eval(s.value.x1).dv - 1.0).abs(),
        });
        // The unconstrained maximizer at zero reserve has a closed form per
        // debt case; it is what the clamp acts on.
        let unconstrained = -p.mu * at0.dv / (s2 * at0.ddv);
        let want = match s.regime.debt_case {
            DebtCase::Low => p.mu * p.alpha * p.alpha / (2.0 * (p.mu * p.alpha - p.delta)),
            DebtCase::Mid => 2.0 * p.delta / p.mu,
            DebtCase::High => p.mu * p.beta * p.beta / (2.0 * (p.mu * p.beta - p.delta)),
            DebtCase::VeryHigh => unreachable!("very high debt never delays payout"),
        };
        checks.push(IdentityCheck { name: "initial_risk", error: rel(unconstrained, want) });
    }

    if let Some((x_end, a_end)) = s.value.curve.rise_end() {
        if (a_end - k.c_tilde).abs() <= 1e-9 * k.c_tilde {
            // Saturated regimes: the value where the window closes.
            let want = p.m / p.gamma - s2 * k.c_tilde / p.mu;
            checks.push(IdentityCheck {
                name: "saturation_value",
                error: rel(s.value.eval(x_end).v, want),
            });
        } else if s.value.curve.rise_start().map(|(x, _)| x > 0.0).unwrap_or(false) {
            // Full-band low-debt regime: slopes at the two ends of the
            // window are tied through the power form, but each side is
            // evaluated with the adjacent non-power segment.
            let (x_start, _) = s.value.curve.rise_start().expect("checked above");
            let below = s.value.eval_on(0, x_start);
            let above = s.value.eval_on(2, x_end);
            let ratio = ((p.beta - k.c) / (p.alpha - k.c)).powf(k.gamma_pow);
            checks.push(IdentityCheck {
                name: "window_slope_ratio",
                error: rel(below.dv, above.dv * ratio),
            });
        }
    }
    checks
}

/// Worst violation of the cap-threshold ordering for the given debt case,
/// normalized by the magnitude of the thresholds involved.
fn ordering_violation(case: DebtCase, k: &DerivedConstants) -> f64 {
    let mut worst: f64 = 0.0;
    let mut require = |lo: Option<f64>, hi: Option<f64>| {
        if let (Some(a), Some(b)) = (lo, hi) {
            worst = worst.max((a - b) / a.abs().max(b.abs()).max(1.0));
        }
    };
    match case {
        DebtCase::Low => {
            require(k.m0_mid, k.m0_alpha);
            require(k.m0_alpha, Some(k.m_alpha));
            require(Some(k.m_alpha), Some(k.m_beta));
        }
        DebtCase::Mid => {
            require(Some(k.m_alpha), k.m0_mid);
            require(k.m0_mid, k.m0_alpha);
            require(k.m0_mid, Some(k.m_beta));
        }
        DebtCase::High => {
            require(Some(k.m_alpha), Some(k.m_beta));
            require(Some(k.m_beta), k.m0_mid);
            require(k.m0_mid, k.m0_beta);
            require(k.m0_beta, k.m0_alpha);
        }
        DebtCase::VeryHigh => {
            require(Some(k.m_alpha), Some(k.m_beta));
        }
    }
    worst.max(0.0)
}

/// Scan-based qualitative checks of the value and policy.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShapeReport {
    /// Minimum slope over the scan; must stay positive.
    pub min_slope: f64,
    /// Maximum curvature over the scan; must stay negative.
    pub max_curvature: f64,
    /// Maximum of `V / (M / gamma)`; must stay below one.
    pub max_value_ratio: f64,
    /// Worst violation of "slope >= 1 exactly below the threshold,
    /// <= 1 exactly above it".
    pub payout_indicator_error: f64,
    /// Worst gap between the clamped maximizer of the candidate value and
    /// the feedback curve.
    pub policy_gap: f64,
}

pub fn shape_report(pv: &PiecewiseValue, n: usize, x_max: f64) -> ShapeReport {
    let p = pv.params();
    let s2 = p.sigma * p.sigma;
    let breaks = pv.breakpoints();
    let mut rep = ShapeReport {
        min_slope: f64::INFINITY,
        max_curvature: f64::NEG_INFINITY,
        max_value_ratio: 0.0,
        payout_indicator_error: 0.0,
        policy_gap: 0.0,
    };
    for i in 1..=n {
        let x = x_max * i as f64 / n as f64;
        let e = pv.eval(x);
        rep.min_slope = rep.min_slope.min(e.dv);
        rep.max_curvature = rep.max_curvature.max(e.ddv);
        rep.max_value_ratio = rep.max_value_ratio.max(e.v / pv.ceiling());
        let indicator = if x < pv.x1 { 1.0 - e.dv } else { e.dv - 1.0 };
        rep.payout_indicator_error = rep.payout_indicator_error.max(indicator.max(0.0));
        if breaks.iter().all(|b| (x - b).abs() >= BREAK_RADIUS) && e.ddv < 0.0 {
            let clamped = (-p.mu * e.dv / (s2 * e.ddv)).clamp(p.alpha, p.beta);
            rep.policy_gap = rep.policy_gap.max((clamped - pv.curve.a_at(x)).abs());
        }
    }
    rep
}

/// Default scan ceiling for reports: past the payout threshold by enough
/// tail widths that the value has visibly flattened.
pub fn scan_ceiling(s: &Solution) -> f64 {
    let rate = tail_decay_rate(s);
    s.value.x1 + 8.0 / rate.abs()
}

/// Decay rate of the payout tail (always negative). Re-derived from the
/// parameters rather than read off the segment, so reports cannot simply
/// echo the assembly.
pub fn tail_decay_rate(s: &Solution) -> f64 {
    let p = &s.params;
    let k = derived_constants(p);
    if k.c_tilde >= p.beta {
        post_dividend_roots(p, p.beta).minus
    } else if k.c_tilde >= p.alpha {
        -p.mu / (p.sigma * p.sigma * k.c_tilde)
    } else {
        post_dividend_roots(p, p.alpha).minus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_sets;
    use crate::value::solve;

    #[test]
    fn residual_vanishes_across_all_regimes() {
        for p in test_sets::all_regimes() {
            let s = solve(&p).unwrap();
            let rep = residual_report(&s.value, 800, scan_ceiling(&s));
            assert!(rep.max_rel < 1e-10, "residual {} at {} for {p:?}", rep.max_rel, rep.at_x);
            assert!(rep.points() > 700);
            assert!(rep.residuals.iter().all(|r| r.is_finite()));
        }
    }

    #[test]
    fn spoiled_value_fails_residual() {
        let s = solve(&test_sets::low(2.0)).unwrap();
        let good = residual_report(&s.value, 500, scan_ceiling(&s));
        let bad = residual_report(&s.value.perturbed(1e-3), 500, scan_ceiling(&s));
        assert!(good.max_rel < 1e-11);
        assert!(bad.max_rel > 1e-5, "perturbation went unnoticed: {}", bad.max_rel);
    }

    #[test]
    fn smooth_fit_tight_everywhere() {
        for p in test_sets::all_regimes() {
            let s = solve(&p).unwrap();
            let rep = smooth_fit_report(&s.value);
            assert!(rep.max_value_jump < 1e-12, "{p:?}: {rep:?}");
            assert!(rep.max_slope_jump < 1e-12, "{p:?}: {rep:?}");
            assert!(rep.max_curve_jump < 1e-11, "{p:?}: {rep:?}");
            assert!(rep.threshold_slope_gap < 1e-11, "{p:?}: {rep:?}");
            assert_eq!(rep.gaps.len() + 1, s.value.segment_count());
        }
    }

    #[test]
    fn gap_lists_match_segment_layout() {
        // Full-band low debt joins four forms at three interior points, in
        // increasing order; a pure-tail value has nothing to join.
        let full = solve(&test_sets::low(2.0)).unwrap();
        let gaps = smooth_fit_report(&full.value).gaps;
        assert_eq!(gaps.len(), 3);
        assert!(gaps[0].x < gaps[1].x && gaps[1].x < gaps[2].x);
        assert!((gaps[2].x - full.value.x1).abs() < 1e-12);

        let tail = solve(&test_sets::very_high(1.0)).unwrap();
        let rep = smooth_fit_report(&tail.value);
        assert!(rep.gaps.is_empty());
        assert!(rep.worst_at.is_none());
    }

    #[test]
    fn spoiled_value_fails_smooth_fit() {
        let s = solve(&test_sets::low(1.0)).unwrap();
        let rep = smooth_fit_report(&s.value.perturbed(1e-3));
        assert!(rep.threshold_slope_gap > 5e-4);
    }

    #[test]
    fn identities_hold_across_all_regimes() {
        for p in test_sets::all_regimes() {
            let s = solve(&p).unwrap();
            for check in identity_suite(&s) {
                assert!(
                    check.error < 1e-11,
                    "{} error {} for {p:?}",
                    check.name,
                    check.error
                );
            }
        }
    }

    #[test]
    fn shape_clean_across_all_regimes() {
        for p in test_sets::all_regimes() {
            let s = solve(&p).unwrap();
            let rep = shape_report(&s.value, 600, scan_ceiling(&s));
            assert!(rep.min_slope > 0.0, "{p:?}: {rep:?}");
            assert!(rep.max_curvature < 0.0, "{p:?}: {rep:?}");
            assert!(rep.max_value_ratio < 1.0, "{p:?}: {rep:?}");
            assert!(rep.payout_indicator_error < 1e-9, "{p:?}: {rep:?}");
            assert!(rep.policy_gap < 1e-8, "{p:?}: {rep:?}");
        }
    }

    #[test]
    fn residual_normalization_is_scale_aware() {
        // The same relative perturbation produces comparable normalized
        // residuals on parameter sets whose values differ by an order of
        // magnitude, which is the point of normalizing by gamma |V| + M.
        let small = solve(&test_sets::high(0.05)).unwrap();
        let large = solve(&test_sets::low(2.0)).unwrap();
        let rs = residual_report(&small.value.perturbed(1e-3), 400, scan_ceiling(&small));
        let rl = residual_report(&large.value.perturbed(1e-3), 400, scan_ceiling(&large));
        assert!(rs.max_rel > 1e-5 && rl.max_rel > 1e-5);
        assert!(rs.max_rel / rl.max_rel < 50.0 && rl.max_rel / rs.max_rel < 50.0);
    }
}
