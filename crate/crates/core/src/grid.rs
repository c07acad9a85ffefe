//! Monotone finite-difference oracle for the dynamic program.
//!
//! Independent cross-check of the closed form: the same maximization is
//! solved numerically on a truncated domain `[0, x_max]` with Dirichlet
//! conditions `V(0) = 0` and `V(x_max) = M / gamma`, by policy iteration.
//! Each sweep solves the tridiagonal linear system of the current (risk,
//! payout) policy exactly, then improves the policy pointwise from the
//! discrete derivatives.
//!
//! The drift term uses central differences wherever that keeps the scheme
//! monotone (an M-matrix), falling back to first-order upwinding at any
//! node where it would not. On the solutions in this crate the central
//! branch applies everywhere, so the oracle converges at second order;
//! the fallback keeps the maximum principle on arbitrary inputs.
//!
//! Nothing here touches the closed-form assembly: the only shared code is
//! the parameter struct.

use thiserror::Error;

use crate::model::ModelParams;
use crate::value::Solution;
use crate::verify::tail_decay_rate;

#[derive(Debug, Clone, Copy)]
pub struct GridConfig {
    /// Number of cells; the grid has `n + 1` nodes.
    pub n: usize,
    /// Truncation point carrying the upper Dirichlet condition.
    pub x_max: f64,
    pub max_sweeps: usize,
    /// Convergence threshold for the sup-norm change, relative to `M / gamma`.
    pub tol: f64,
}

impl GridConfig {
    pub fn with_resolution(n: usize, x_max: f64) -> GridConfig {
        GridConfig { n, x_max, max_sweeps: 500, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Error)]
pub enum GridError {
    #[error("grid is ill-conditioned: {reason}")]
    IllConditioned { reason: String },
    #[error("policy iteration did not converge in {sweeps} sweeps (last change {last_change:e})")]
    NoConvergence { sweeps: usize, last_change: f64 },
}

/// Converged grid solution with the policy the iteration settled on.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub h: f64,
    pub xs: Vec<f64>,
    pub v: Vec<f64>,
    pub risk: Vec<f64>,
    pub payout: Vec<f64>,
    pub sweeps: usize,
    /// Most negative nodewise change seen after the first evaluation
    /// (the first sweep only replaces the arbitrary start). Policy
    /// iteration improves monotonically, so this stays at roundoff level;
    /// infinite if the solve converged in a single sweep.
    pub min_sweep_delta: f64,
}

/// Domain large enough that the upper Dirichlet condition is exact to well
/// below solver accuracy: the tail has decayed by `e^{-30}` at the cut.
pub fn oracle_domain(s: &Solution) -> f64 {
    s.value.x1 + 30.0 / tail_decay_rate(s).abs()
}

pub fn solve_grid(p: &ModelParams, cfg: &GridConfig) -> Result<GridSolution, GridError> {
    p.validate()
        .map_err(|e| GridError::IllConditioned { reason: e.to_string() })?;
    if cfg.n < 100 {
        return Err(GridError::IllConditioned {
            reason: format!("need at least 100 cells, got {}", cfg.n),
        });
    }
    if !(cfg.x_max.is_finite() && cfg.x_max > 0.0) {
        return Err(GridError::IllConditioned {
            reason: format!("domain length must be positive, got {}", cfg.x_max),
        });
    }

    let n = cfg.n;
    let h = cfg.x_max / n as f64;
    let ceiling = p.m / p.gamma;
    let s2 = p.sigma * p.sigma;

    // Ramp start; the exact shape only affects the sweep count.
    let mut v: Vec<f64> = (0..=n).map(|i| ceiling * i as f64 / n as f64).collect();
    let mut risk = vec![p.beta; n + 1];
    let mut payout = vec![p.m; n + 1];

    // Scratch for the tridiagonal solve over interior nodes 1..n-1.
    let m = n - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];

    let mut last_change = f64::INFINITY;
    let mut min_sweep_delta = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        // Policy evaluation: exact solve of the linear system for the
        // current policy.
        for i in 1..n {
            let a = risk[i];
            let c = payout[i];
            let d2 = 0.5 * s2 * a * a / (h * h);
            let b = a * p.mu - p.delta - c;
            let (lo, up) = if d2 >= b.abs() / (2.0 * h) {
                (d2 - b / (2.0 * h), d2 + b / (2.0 * h))
            } else if b >= 0.0 {
                (d2, d2 + b / h)
            } else {
                (d2 - b / h, d2)
            };
            let j = i - 1;
            lower[j] = lo;
            upper[j] = up;
            diag[j] = -(lo + up) - p.gamma;
            rhs[j] = -c;
        }
        rhs[m - 1] -= upper[m - 1] * ceiling;

        let interior = thomas(&lower, &diag, &upper, &rhs);

        last_change = 0.0;
        for i in 1..n {
            let delta = interior[i - 1] - v[i];
            last_change = last_change.max(delta.abs());
            if sweep > 1 {
                min_sweep_delta = min_sweep_delta.min(delta);
            }
            v[i] = interior[i - 1];
        }

        // Policy improvement from discrete derivatives.
        for i in 1..n {
            let dv = (v[i + 1] - v[i - 1]) / (2.0 * h);
            let ddv = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
            payout[i] = if dv <= 1.0 { p.m } else { 0.0 };
            risk[i] = if ddv < 0.0 {
                (-p.mu * dv / (s2 * ddv)).clamp(p.alpha, p.beta)
            } else {
                // Convex in the risk: an endpoint maximizes.
                let q = |a: f64| 0.5 * s2 * a * a * ddv + a * p.mu * dv;
                if q(p.alpha) >= q(p.beta) {
                    p.alpha
                } else {
                    p.beta
                }
            };
        }

        // Convergence is judged on the value alone: once the evaluation
        // stops moving, the improvement step is a fixed point too, up to
        // roundoff flapping far below `tol`.
        if last_change <= cfg.tol * ceiling {
            let xs = (0..=n).map(|i| i as f64 * h).collect();
            return Ok(GridSolution { h, xs, v, risk, payout, sweeps: sweep, min_sweep_delta });
        }
    }
    Err(GridError::NoConvergence { sweeps: cfg.max_sweeps, last_change })
}

/// Tridiagonal solve by forward elimination and back substitution. The
/// policy-evaluation matrix is strictly diagonally dominant (the diagonal
/// exceeds the off-diagonals by `gamma`), so no pivoting is needed.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c_star = vec![0.0; m];
    let mut d_star = vec![0.0; m];
    c_star[0] = upper[0] / diag[0];
    d_star[0] = rhs[0] / diag[0];
    for j in 1..m {
        let denom = diag[j] - lower[j] * c_star[j - 1];
        c_star[j] = upper[j] / denom;
        d_star[j] = (rhs[j] - lower[j] * d_star[j - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d_star[m - 1];
    for j in (0..m - 1).rev() {
        x[j] = d_star[j] - c_star[j] * x[j + 1];
    }
    x
}

/// Worst absolute gap to the closed form over `x <= frac * x_max`,
/// relative to `M / gamma`. The cutoff discards the neighborhood of the
/// artificial upper boundary.
pub fn compare_with_closed_form(gs: &GridSolution, s: &Solution, frac: f64) -> f64 {
    let ceiling = s.value.ceiling();
    let cut = frac * gs.xs[gs.xs.len() - 1];
    let mut worst: f64 = 0.0;
    for (x, vhat) in gs.xs.iter().zip(&gs.v) {
        if *x > cut {
            break;
        }
        worst = worst.max((vhat - s.value.eval(*x).v).abs() / ceiling);
    }
    worst
}

/// First node at which the converged policy pays the cap: the grid's
/// estimate of the payout threshold.
pub fn payout_switch(gs: &GridSolution) -> f64 {
    for i in 1..gs.payout.len() - 1 {
        if gs.payout[i] > 0.0 {
            return gs.xs[i];
        }
    }
    *gs.xs.last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_sets;
    use crate::value::solve;

    #[test]
    fn rejects_degenerate_grids() {
        let p = test_sets::low(1.0);
        assert!(matches!(
            solve_grid(&p, &GridConfig::with_resolution(50, 10.0)),
            Err(GridError::IllConditioned { .. })
        ));
        assert!(matches!(
            solve_grid(&p, &GridConfig::with_resolution(500, 0.0)),
            Err(GridError::IllConditioned { .. })
        ));
    }

    #[test]
    fn reports_non_convergence_when_starved() {
        let p = test_sets::low(1.0);
        let cfg = GridConfig { n: 500, x_max: 20.0, max_sweeps: 1, tol: 1e-12 };
        assert!(matches!(solve_grid(&p, &cfg), Err(GridError::NoConvergence { .. })));
    }

    #[test]
    fn solution_is_bounded_and_increasing() {
        for p in [test_sets::low(2.0), test_sets::mid(0.5), test_sets::very_high(1.0)] {
            let s = solve(&p).unwrap();
            let gs = solve_grid(&p, &GridConfig::with_resolution(800, oracle_domain(&s))).unwrap();
            let ceiling = s.value.ceiling();
            for w in gs.v.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * ceiling, "{p:?}");
            }
            assert!(gs.v.iter().all(|&x| (-1e-12..=ceiling * (1.0 + 1e-12)).contains(&x)));
            assert_eq!(gs.v[0], 0.0);
        }
    }

    #[test]
    fn matches_closed_form_and_refines() {
        for p in [test_sets::low(2.0), test_sets::high(0.5), test_sets::very_high(1.0)] {
            let s = solve(&p).unwrap();
            let dom = oracle_domain(&s);
            let coarse = solve_grid(&p, &GridConfig::with_resolution(500, dom)).unwrap();
            let fine = solve_grid(&p, &GridConfig::with_resolution(1000, dom)).unwrap();
            let e_coarse = compare_with_closed_form(&coarse, &s, 0.8);
            let e_fine = compare_with_closed_form(&fine, &s, 0.8);
            assert!(e_coarse < 2e-2, "coarse error {e_coarse} for {p:?}");
            assert!(e_fine < 0.7 * e_coarse, "{e_fine} !< 0.7 * {e_coarse} for {p:?}");
        }
    }

    #[test]
    fn recovered_policy_locates_threshold() {
        let p = test_sets::low(2.0);
        let s = solve(&p).unwrap();
        let gs = solve_grid(&p, &GridConfig::with_resolution(2000, oracle_domain(&s))).unwrap();
        let switch = payout_switch(&gs);
        assert!(
            (switch - s.value.x1).abs() < 4.0 * gs.h,
            "switch {switch} vs threshold {}",
            s.value.x1
        );
        // The recovered risk at low reserve hugs the band floor and at high
        // reserve the saturation level or band cap.
        let i_low = (0.2 / gs.h) as usize;
        assert!((gs.risk[i_low] - p.alpha).abs() < 1e-6, "risk {}", gs.risk[i_low]);
        let i_high = ((s.value.x1 + 1.0) / gs.h) as usize;
        assert!((gs.risk[i_high] - p.beta).abs() < 0.05);
    }

    #[test]
    fn immediate_payout_regime_pays_everywhere() {
        let p = test_sets::very_high(1.0);
        let s = solve(&p).unwrap();
        let gs = solve_grid(&p, &GridConfig::with_resolution(600, oracle_domain(&s))).unwrap();
        assert!(gs.payout[1..gs.payout.len() - 1].iter().all(|&c| c == p.m));
    }

    #[test]
    fn scheme_is_monotone_at_converged_controls() {
        // Reconstruct the stencil at the final policy and check both
        // off-diagonal coefficients are nonnegative at every interior node.
        for p in [test_sets::low(2.0), test_sets::mid(0.5), test_sets::high(0.5)] {
            let s = solve(&p).unwrap();
            let gs = solve_grid(&p, &GridConfig::with_resolution(700, oracle_domain(&s))).unwrap();
            let s2 = p.sigma * p.sigma;
            for i in 1..gs.v.len() - 1 {
                let a = gs.risk[i];
                let c = gs.payout[i];
                let d2 = 0.5 * s2 * a * a / (gs.h * gs.h);
                let b = a * p.mu - p.delta - c;
                let (lo, up) = if d2 >= b.abs() / (2.0 * gs.h) {
                    (d2 - b / (2.0 * gs.h), d2 + b / (2.0 * gs.h))
                } else if b >= 0.0 {
                    (d2, d2 + b / gs.h)
                } else {
                    (d2 - b / gs.h, d2)
                };
                assert!(lo >= 0.0 && up >= 0.0, "node {i} of {p:?}: lo={lo} up={up}");
            }
        }
    }

    #[test]
    fn discrete_concavity_holds_at_interior_nodes() {
        for p in [test_sets::low(2.0), test_sets::very_high(1.0)] {
            let s = solve(&p).unwrap();
            let gs = solve_grid(&p, &GridConfig::with_resolution(700, oracle_domain(&s))).unwrap();
            for i in 1..gs.v.len() - 1 {
                let second = gs.v[i + 1] - 2.0 * gs.v[i] + gs.v[i - 1];
                assert!(second <= 1e-8, "node {i} of {p:?}: {second}");
            }
        }
    }

    #[test]
    fn sweeps_improve_the_value_monotonically() {
        for p in [test_sets::low(2.0), test_sets::high(0.5), test_sets::very_high(1.0)] {
            let s = solve(&p).unwrap();
            let gs = solve_grid(&p, &GridConfig::with_resolution(600, oracle_domain(&s))).unwrap();
            assert!(gs.sweeps >= 2, "want a multi-sweep run to observe, got {}", gs.sweeps);
            assert!(
                gs.min_sweep_delta >= -1e-9 * s.value.ceiling(),
                "{p:?}: min sweep delta {}",
                gs.min_sweep_delta
            );
        }
    }
}
