//! Piecewise assembly of the exact value function and payout threshold.
//!
//! Below the payout threshold `x1` nothing is paid out and the value solves
//! the no-payout generator equation along the optimal risk curve; above `x1`
//! the cap `M` is paid and the value relaxes exponentially to `M / gamma`.
//! Four closed forms cover every regime:
//!
//! * `ExpDiff`: `k (e^{r+ x} - e^{r- x})` at constant clamped risk, pinned to
//!   zero value at zero reserve.
//! * `Power`: along the rising risk curve `a(x)`, the slope is
//!   `V'(x) = d (a(x) - c)^{-Gamma}` and value and curvature follow from
//!   `V = (mu a - 2 delta) V' / (2 gamma)` and `V'' = -mu V' / (sigma^2 a)`.
//! * `TwoExp`: `K1 e^{r+ (x - x1)} + K2 e^{r- (x - x1)}` at constant risk
//!   `beta` between the top of the risk band and the payout threshold.
//! * `Tail`: `M / gamma + k e^{rate (x - x1)}` in the payout region.
//!
//! Coefficients are chosen so that value and slope match at every interior
//! breakpoint and `V'(x1) = 1` whenever `x1 > 0`; the matching conditions
//! also determine `x1` itself in closed form.

use serde::Serialize;

use crate::feedback::FeedbackCurve;
use crate::model::{
    characteristic_roots, classify_regime, derived_constants, post_dividend_roots,
    DerivedConstants, MSubcase, ModelParams, ParamError, Regime,
};

/// Value, slope, and curvature at one reserve level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ValuePoint {
    pub v: f64,
    pub dv: f64,
    pub ddv: f64,
}

/// One named coefficient of a closed-form segment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Coefficient {
    pub name: &'static str,
    pub value: f64,
}

/// Reporting view of one segment: which closed form it is, where it
/// applies, and its coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub x_start: f64,
    /// Start of the next segment, absent for the final tail.
    pub x_end: Option<f64>,
    /// Exponentials are anchored here rather than at zero reserve.
    pub anchor: f64,
    pub form: &'static str,
    pub coefficients: Vec<Coefficient>,
}

#[derive(Debug, Clone, Copy)]
enum SegmentForm {
    ExpDiff { k: f64, r_plus: f64, r_minus: f64 },
    Power { dcoef: f64 },
    TwoExp { k1: f64, k2: f64, r_plus: f64, r_minus: f64 },
    Tail { k: f64, rate: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    x_start: f64,
    /// Exponentials in `TwoExp` and `Tail` are anchored here instead of at
    /// zero reserve, which keeps their coefficients well scaled.
    anchor: f64,
    form: SegmentForm,
}

/// The assembled value function. Evaluation picks the segment covering `x`
/// and applies its closed form; the rising-risk segment consults the
/// feedback curve.
#[derive(Debug, Clone)]
pub struct PiecewiseValue {
    params: ModelParams,
    constants: DerivedConstants,
    pub curve: FeedbackCurve,
    /// Payout threshold: the cap is paid exactly on `[x1, inf)`.
    pub x1: f64,
    segments: Vec<Segment>,
    /// Multiplier on the assembled value, `1` except for deliberately
    /// spoiled copies used as negative controls.
    gain: f64,
}

/// A solved parameter set: classification plus the value function (which
/// carries the optimal risk curve).
#[derive(Debug, Clone)]
pub struct Solution {
    pub params: ModelParams,
    pub constants: DerivedConstants,
    pub regime: Regime,
    pub value: PiecewiseValue,
}

/// Validates the parameters and assembles the exact solution.
pub fn solve(p: &ModelParams) -> Result<Solution, ParamError> {
    p.validate()?;
    let regime = classify_regime(p);
    let constants = derived_constants(p);
    let curve = FeedbackCurve::build(p);
    let value = assemble(p, &constants, regime, curve);
    Ok(Solution { params: *p, constants, regime, value })
}

/// Decay rate of the payout tail: the negative characteristic root at the
/// clamp of the saturation level `c_tilde` into the risk band. At an
/// interior `c_tilde` the root simplifies to `-mu / (sigma^2 c_tilde)`.
fn tail_rate(p: &ModelParams, c_tilde: f64) -> f64 {
    if c_tilde >= p.beta {
        post_dividend_roots(p, p.beta).minus
    } else if c_tilde >= p.alpha {
        -p.mu / (p.sigma * p.sigma * c_tilde)
    } else {
        post_dividend_roots(p, p.alpha).minus
    }
}

/// Payout threshold for regimes whose no-payout region is a single
/// constant-risk `ExpDiff` piece at risk `z` (low debt below the alpha
/// departure cap, high debt above the beta cap): the level where the
/// slope-to-curvature ratio matches the payout tail.
fn x1_single_piece(p: &ModelParams, z: f64) -> f64 {
    let r = characteristic_roots(p, z);
    let rt = post_dividend_roots(p, z).minus;
    ((r.minus * (r.minus - rt)) / (r.plus * (r.plus - rt))).ln() / (r.plus - r.minus)
}

fn assemble(
    p: &ModelParams,
    k: &DerivedConstants,
    regime: Regime,
    curve: FeedbackCurve,
) -> PiecewiseValue {
    let s2 = p.sigma * p.sigma;
    let mut segments = Vec::with_capacity(4);
    let x1;
    match regime.m_subcase {
        MSubcase::LowFullBand | MSubcase::MidFullBand => {
            // Payout tail and a constant-beta stretch sit above the rising
            // window. The gap between the top of the window and the payout
            // threshold follows from slope-ratio matching at both ends.
            let rb = characteristic_roots(p, p.beta);
            let rtb = post_dividend_roots(p, p.beta).minus;
            let gap = -(((rb.plus - rtb) * (-(p.mu + p.beta * s2 * rb.minus)))
                / ((rtb - rb.minus) * (p.mu + p.beta * s2 * rb.plus)))
                .ln()
                / (rb.plus - rb.minus);
            let (x_beta, _) = curve.rise_end().expect("full-band regimes rise");
            x1 = x_beta + gap;
            let k1 = (rtb - rb.minus) / (rb.plus * (rb.plus - rb.minus));
            let k2 = (rb.plus - rtb) / (rb.minus * (rb.plus - rb.minus));
            let dv_beta = k1 * rb.plus * (-rb.plus * gap).exp()
                + k2 * rb.minus * (-rb.minus * gap).exp();
            let dcoef = dv_beta * (p.beta - k.c).powf(k.gamma_pow);
            let (x_rise, a_rise) = curve.rise_start().expect("full-band regimes rise");
            if regime.m_subcase == MSubcase::LowFullBand {
                let dv = dcoef * (a_rise - k.c).powf(-k.gamma_pow);
                segments.push(expdiff_below(p, p.alpha, x_rise, dv));
            }
            segments.push(Segment {
                x_start: x_rise,
                anchor: 0.0,
                form: SegmentForm::Power { dcoef },
            });
            if x1 > x_beta {
                segments.push(Segment {
                    x_start: x_beta,
                    anchor: x1,
                    form: SegmentForm::TwoExp { k1, k2, r_plus: rb.plus, r_minus: rb.minus },
                });
            }
            segments.push(Segment {
                x_start: x1,
                anchor: x1,
                form: SegmentForm::Tail { k: 1.0 / rtb, rate: rtb },
            });
        }
        MSubcase::LowSaturated | MSubcase::MidSaturated => {
            // The rising window saturates at c_tilde exactly where payout
            // starts, so the tail attaches directly to the power piece with
            // unit slope.
            let (x_end, _) = curve.rise_end().expect("saturated regimes rise");
            x1 = x_end;
            let dcoef = (k.c_tilde - k.c).powf(k.gamma_pow);
            let (x_rise, a_rise) = curve.rise_start().expect("saturated regimes rise");
            if regime.m_subcase == MSubcase::LowSaturated {
                let dv = dcoef * (a_rise - k.c).powf(-k.gamma_pow);
                segments.push(expdiff_below(p, p.alpha, x_rise, dv));
            }
            segments.push(Segment {
                x_start: x_rise,
                anchor: 0.0,
                form: SegmentForm::Power { dcoef },
            });
            let rate = -p.mu / (s2 * k.c_tilde);
            segments.push(Segment {
                x_start: x1,
                anchor: x1,
                form: SegmentForm::Tail { k: -s2 * k.c_tilde / p.mu, rate },
            });
        }
        MSubcase::LowAlphaDelayed | MSubcase::HighBetaDelayed => {
            // One constant-risk piece below the threshold, tail above.
            let z = if regime.m_subcase == MSubcase::LowAlphaDelayed { p.alpha } else { p.beta };
            x1 = x1_single_piece(p, z);
            segments.push(expdiff_below(p, z, x1, 1.0));
            let rt = post_dividend_roots(p, z).minus;
            segments.push(Segment {
                x_start: x1,
                anchor: x1,
                form: SegmentForm::Tail { k: 1.0 / rt, rate: rt },
            });
        }
        _ => {
            // Payout from zero reserve: a single tail pinned to V(0) = 0.
            x1 = 0.0;
            segments.push(Segment {
                x_start: 0.0,
                anchor: 0.0,
                form: SegmentForm::Tail { k: -p.m / p.gamma, rate: tail_rate(p, k.c_tilde) },
            });
        }
    }
    debug_assert!(segments.windows(2).all(|w| w[0].x_start <= w[1].x_start));
    PiecewiseValue { params: *p, constants: *k, curve, x1, segments, gain: 1.0 }
}

/// Constant-risk piece on `[0, x_top)` at risk `z`, pinned to `V(0) = 0`,
/// with slope `dv_top` at its upper end.
fn expdiff_below(p: &ModelParams, z: f64, x_top: f64, dv_top: f64) -> Segment {
    let r = characteristic_roots(p, z);
    let k = dv_top / (r.plus * (r.plus * x_top).exp() - r.minus * (r.minus * x_top).exp());
    Segment {
        x_start: 0.0,
        anchor: 0.0,
        form: SegmentForm::ExpDiff { k, r_plus: r.plus, r_minus: r.minus },
    }
}

impl PiecewiseValue {
    /// Evaluates value, slope, and curvature at reserve level `x >= 0`.
    pub fn eval(&self, x: f64) -> ValuePoint {
        debug_assert!(x >= 0.0, "reserve level must be nonnegative, got {x}");
        let idx = self
            .segments
            .iter()
            .rposition(|s| s.x_start <= x)
            .unwrap_or(0);
        self.eval_on(idx, x)
    }

    /// Evaluates one segment's closed form at `x`, which may sit outside the
    /// segment's own span. Used to compare adjacent forms exactly at a
    /// breakpoint.
    pub(crate) fn eval_on(&self, idx: usize, x: f64) -> ValuePoint {
        let p = &self.params;
        let seg = &self.segments[idx];
        let u = x - seg.anchor;
        let raw = match seg.form {
            SegmentForm::ExpDiff { k, r_plus, r_minus } => {
                let ep = (r_plus * u).exp();
                let em = (r_minus * u).exp();
                ValuePoint {
                    v: k * (ep - em),
                    dv: k * (r_plus * ep - r_minus * em),
                    ddv: k * (r_plus * r_plus * ep - r_minus * r_minus * em),
                }
            }
            SegmentForm::Power { dcoef } => {
                let a = self.curve.a_at(x);
                let dv = dcoef * (a - self.constants.c).powf(-self.constants.gamma_pow);
                ValuePoint {
                    v: (p.mu * a - 2.0 * p.delta) * dv / (2.0 * p.gamma),
                    dv,
                    ddv: -p.mu * dv / (p.sigma * p.sigma * a),
                }
            }
            SegmentForm::TwoExp { k1, k2, r_plus, r_minus } => {
                let ep = (r_plus * u).exp();
                let em = (r_minus * u).exp();
                ValuePoint {
                    v: k1 * ep + k2 * em,
                    dv: k1 * r_plus * ep + k2 * r_minus * em,
                    ddv: k1 * r_plus * r_plus * ep + k2 * r_minus * r_minus * em,
                }
            }
            SegmentForm::Tail { k, rate } => {
                let e = (rate * u).exp();
                ValuePoint {
                    v: p.m / p.gamma + k * e,
                    dv: k * rate * e,
                    ddv: k * rate * rate * e,
                }
            }
        };
        ValuePoint { v: self.gain * raw.v, dv: self.gain * raw.dv, ddv: self.gain * raw.ddv }
    }

    /// Interior breakpoints (segment joins), including the payout threshold
    /// when it is positive. Sorted ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.x_start).collect()
    }

    /// Index of the segment covering `x`.
    pub(crate) fn segment_index(&self, x: f64) -> usize {
        self.segments.iter().rposition(|s| s.x_start <= x).unwrap_or(0)
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// The segment layout with every coefficient named, in evaluation
    /// order, for reporting. The last segment extends to infinity.
    pub fn segment_reports(&self) -> Vec<SegmentReport> {
        let mut out = Vec::with_capacity(self.segments.len());
        for (i, seg) in self.segments.iter().enumerate() {
            let x_end = self.segments.get(i + 1).map(|next| next.x_start);
            let (form, coefficients) = match seg.form {
                SegmentForm::ExpDiff { k, r_plus, r_minus } => (
                    "exp_diff",
                    vec![("k", k), ("r_plus", r_plus), ("r_minus", r_minus)],
                ),
                SegmentForm::Power { dcoef } => ("power", vec![("d", dcoef)]),
                SegmentForm::TwoExp { k1, k2, r_plus, r_minus } => (
                    "two_exp",
                    vec![("k1", k1), ("k2", k2), ("r_plus", r_plus), ("r_minus", r_minus)],
                ),
                SegmentForm::Tail { k, rate } => ("tail", vec![("k", k), ("rate", rate)]),
            };
            out.push(SegmentReport {
                x_start: seg.x_start,
                x_end,
                anchor: seg.anchor,
                form,
                coefficients: coefficients
                    .into_iter()
                    .map(|(name, value)| Coefficient { name, value })
                    .collect(),
            });
        }
        out
    }

    /// Upper bound of the value function, `M / gamma`.
    pub fn ceiling(&self) -> f64 {
        self.params.m / self.params.gamma
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// A deliberately wrong copy: the value is scaled by `1 + rel` while the
    /// policy objects are untouched. Every verification layer must flag it
    /// for nonzero `rel`, which makes the layers falsifiable.
    pub fn perturbed(&self, rel: f64) -> PiecewiseValue {
        let mut copy = self.clone();
        copy.gain *= 1.0 + rel;
        copy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_sets::{self, low as canon_low};

    #[test]
    fn payout_threshold_frozen_values() {
        let rows = [
            (canon_low(2.0), 1.9686881598795720),
            (canon_low(1.0), 1.3579035726724552),
            (canon_low(0.1), 0.36450688534210532),
            (test_sets::mid(1.2), 2.1469191012216938),
            (test_sets::mid(0.5), 1.3534314029206844),
            (test_sets::high(0.5), 1.6303186408815633),
            (test_sets::mid_aux(1.2), 0.31817258148260726),
            (test_sets::mid_aux(2.5), 0.78521845604828485),
            (test_sets::high_aux(2.0), 0.10298690890439120),
            (test_sets::zero_debt(0.5), 0.79401014331237395),
        ];
        for (p, want) in rows {
            let s = solve(&p).unwrap();
            assert!(
                (s.value.x1 - want).abs() < 1e-10,
                "x1={}, want {want} for {p:?}",
                s.value.x1
            );
        }
    }

    #[test]
    fn spot_values_frozen_full_band() {
        // Evaluations of the four-piece solution at the low-debt reference
        // set with M = 2, spanning all four segments.
        let s = solve(&canon_low(2.0)).unwrap();
        let rows = [
            (0.1, 4.5046445211906853, 38.656758261759616, -115.06934588104071),
            (0.5, 13.606444286401560, 12.144788971192626, -33.713078056297567),
            (1.2, 17.585044790565180, 2.4534127832049117, -4.0327029115129463),
            (1.8, 18.586369803121422, 1.1600853736171646, -1.1008309136739670),
            (2.5, 19.199465784260382, 0.64971855675385103, -0.52731562835236912),
        ];
        for (x, v, dv, ddv) in rows {
            let got = s.value.eval(x);
            assert!((got.v - v).abs() < 1e-10 * v.abs(), "v at {x}: {} vs {v}", got.v);
            assert!((got.dv - dv).abs() < 1e-10 * dv.abs(), "dv at {x}: {} vs {dv}", got.dv);
            assert!(
                (got.ddv - ddv).abs() < 1e-10 * ddv.abs(),
                "ddv at {x}: {} vs {ddv}",
                got.ddv
            );
        }
        // Value at the threshold, frozen.
        let at_x1 = s.value.eval(s.value.x1);
        assert!((at_x1.v - 18.767875401713509).abs() < 1e-12 * at_x1.v);
    }

    #[test]
    fn saturated_threshold_value_identity() {
        // Where the rising window meets the payout region, the value equals
        // M / gamma - sigma^2 c_tilde / mu exactly.
        for p in [canon_low(1.0), test_sets::mid(0.5)] {
            let s = solve(&p).unwrap();
            let want = p.m / p.gamma - p.sigma * p.sigma * s.constants.c_tilde / p.mu;
            let got = s.value.eval(s.value.x1).v;
            assert!((got - want).abs() < 1e-12 * want.abs(), "{p:?}: {got} vs {want}");
        }
        let s = solve(&canon_low(1.0)).unwrap();
        assert!((s.value.eval(s.value.x1).v - 9.2857142857142852).abs() < 1e-12);
    }

    #[test]
    fn zero_value_at_ruin_and_unit_slope_at_threshold() {
        for p in test_sets::all_regimes() {
            let s = solve(&p).unwrap();
            let at0 = s.value.eval(0.0);
            assert!(at0.v.abs() < 1e-12 * s.value.ceiling(), "V(0) != 0 for {p:?}");
            if s.value.x1 > 0.0 {
                let at1 = s.value.eval(s.value.x1);
                assert!((at1.dv - 1.0).abs() < 1e-11, "V'(x1) = {} for {p:?}", at1.dv);
            }
        }
    }

    #[test]
    fn smooth_fit_at_every_breakpoint() {
        for p in test_sets::all_regimes() {
            let s = solve(&p).unwrap();
            for bp in s.value.breakpoints() {
                let hi = s.value.segment_index(bp);
                let lo = hi - 1;
                let left = s.value.eval_on(lo, bp);
                let right = s.value.eval_on(hi, bp);
                let vs = s.value.ceiling();
                assert!(
                    (left.v - right.v).abs() < 1e-11 * vs,
                    "value jump {} at {bp} for {p:?}",
                    left.v - right.v
                );
                assert!(
                    (left.dv - right.dv).abs() < 1e-10 * left.dv.abs().max(1.0),
                    "slope jump {} at {bp} for {p:?}",
                    left.dv - right.dv
                );
            }
        }
    }

    #[test]
    fn increasing_concave_and_bounded() {
        for p in test_sets::all_regimes() {
            let s = solve(&p).unwrap();
            let top = 2.0 * s.value.x1 + 8.0 / -tail_rate_of(&s);
            let mut prev = 0.0;
            for i in 0..=400 {
                let x = top * i as f64 / 400.0;
                let e = s.value.eval(x);
                assert!(e.dv > 0.0, "slope {} at {x} for {p:?}", e.dv);
                assert!(e.ddv < 0.0, "curvature {} at {x} for {p:?}", e.ddv);
                assert!(e.v >= prev - 1e-12 && e.v < s.value.ceiling(), "{p:?} at {x}");
                prev = e.v;
            }
        }
    }

    fn tail_rate_of(s: &Solution) -> f64 {
        match s.value.segments.last().unwrap().form {
            SegmentForm::Tail { rate, .. } => rate,
            _ => unreachable!("last segment is always the payout tail"),
        }
    }

    #[test]
    fn immediate_payout_rows_are_pure_tails() {
        // With a zero threshold the whole solution is M/gamma (1 - e^{rate x}).
        for p in [canon_low(0.02), test_sets::very_high(1.0), test_sets::high(0.05)] {
            let s = solve(&p).unwrap();
            assert_eq!(s.value.x1, 0.0);
            assert_eq!(s.value.segment_count(), 1);
            let rate = tail_rate_of(&s);
            for x in [0.0, 0.4, 1.3, 6.0] {
                let want = p.m / p.gamma * (1.0 - (rate * x).exp());
                assert!((s.value.eval(x).v - want).abs() < 1e-13 * p.m / p.gamma);
            }
        }
    }

    /// Independent check of the single-piece threshold: bisect for the level
    /// where the slope-to-curvature ratio of the no-payout piece matches the
    /// tail root, instead of using the closed form.
    #[test]
    fn single_piece_threshold_matches_bisection() {
        for (p, z) in [(canon_low(0.1), 1.0), (test_sets::high(0.5), 1.5)] {
            let r = characteristic_roots(&p, z);
            let rt = post_dividend_roots(&p, z).minus;
            let ratio = |x: f64| {
                let ep = (r.plus * x).exp();
                let em = (r.minus * x).exp();
                (r.plus * r.plus * ep - r.minus * r.minus * em)
                    / (r.plus * ep - r.minus * em)
            };
            // The slope-to-curvature ratio rises from r+ + r- toward r+, so
            // bisect upward to the crossing with the tail root.
            let (mut lo, mut hi) = (1e-9, 60.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ratio(mid) < rt {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = solve(&p).unwrap();
            assert!((s.value.x1 - 0.5 * (lo + hi)).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn cap_continuity_across_regime_boundaries() {
        // Nudging M across each classification threshold moves the value
        // only infinitesimally.
        let base = canon_low(1.0);
        let k = derived_constants(&base);
        let thresholds = [k.m0_alpha.unwrap(), k.m_alpha, k.m_beta];
        for t in thresholds {
            let mut lo = base;
            lo.m = t - 1e-7;
            let mut hi = base;
            hi.m = t + 1e-7;
            let sl = solve(&lo).unwrap();
            let sh = solve(&hi).unwrap();
            assert_ne!(
                classify_regime(&lo).m_subcase,
                classify_regime(&hi).m_subcase,
                "threshold {t} did not separate regimes"
            );
            for x in [0.1, 0.5, 1.0, 1.9, 3.0] {
                let dv = (sl.value.eval(x).v - sh.value.eval(x).v).abs();
                assert!(dv < 1e-4, "jump {dv} at x={x}, M={t}");
            }
        }
    }

    #[test]
    fn perturbed_copy_breaks_threshold_slope() {
        let s = solve(&canon_low(2.0)).unwrap();
        let bad = s.value.perturbed(1e-3);
        assert!((bad.eval(bad.x1).dv - 1.0).abs() > 5e-4);
        assert!((s.value.eval(s.value.x1).dv - 1.0).abs() < 1e-11);
    }

    #[test]
    fn boundary_cap_joins_full_band_and_saturated() {
        // At M exactly equal to the beta cap the two assembly paths coincide.
        let p = canon_low(1.6);
        let s = solve(&p).unwrap();
        assert_eq!(s.regime.m_subcase, MSubcase::LowSaturated);
        let (x_end, a_end) = s.value.curve.rise_end().unwrap();
        assert!((a_end - 2.0).abs() < 1e-12);
        assert!((s.value.x1 - x_end).abs() < 1e-12);
        assert!((s.value.x1 - 1.7365892028869077).abs() < 1e-10);
    }
}
