//! The five commands. Each builds one structured report, its CSV
//! rendering, and an overall pass flag; the caller turns a failed flag
//! into exit status 1 and a returned error message into status 2.
//!
//! Number conventions: closed-form coefficients and thresholds are emitted
//! at full precision (the JSON round-trips to the exact double), sample
//! grids are rounded to six significant digits, and non-finite quantities
//! appear as the string `"inf"` (or `"-inf"`).

use serde_json::{json, Value};

use reserve_control::grid::{
    compare_with_closed_form, oracle_domain, payout_switch, solve_grid, GridConfig, GridError,
};
use reserve_control::model::{policy_traits, Breakpoint};
use reserve_control::simulate::{simulate_policy, PayoutRule, Policy, RiskRule, SimConfig};
use reserve_control::verify::{
    identity_suite, residual_report, scan_ceiling, shape_report, smooth_fit_report,
};
use reserve_control::{solve, ModelParams, Solution};

use crate::config::FileConfig;

pub struct CmdOutput {
    pub json: Value,
    pub csv: String,
    pub ok: bool,
}

/// Rounds to six significant digits for display grids.
fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powf(5.0 - x.abs().log10().floor());
    (x * scale).round() / scale
}

/// JSON number with a string sentinel for non-finite values.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Cap thresholds that are undefined for the parameters never bind, which
/// reports express as infinite.
fn cap_or_inf(v: Option<f64>) -> Value {
    match v {
        Some(x) => num(x),
        None => json!("inf"),
    }
}

fn config_echo(p: &ModelParams, extra: Option<(&str, Value)>) -> Value {
    let mut obj = serde_json::to_value(p).expect("parameters serialize");
    if let Some((key, value)) = extra {
        obj.as_object_mut().expect("object").insert(key.to_string(), value);
    }
    obj
}

fn regime_json(s: &Solution) -> Value {
    json!({
        "debt_case": s.regime.debt_case,
        "subcase": s.regime.m_subcase,
        "branch": s.regime.m_subcase.branch_index(),
        "x1_positive": s.regime.x1_positive,
    })
}

fn constants_json(s: &Solution) -> Value {
    let k = &s.constants;
    json!({
        "c": k.c,
        "c_tilde": k.c_tilde,
        "gamma_pow": k.gamma_pow,
        "scale": k.scale,
        "m_alpha": num(k.m_alpha),
        "m_beta": num(k.m_beta),
        "m0_alpha": cap_or_inf(k.m0_alpha),
        "m0_mid": cap_or_inf(k.m0_mid),
        "m0_beta": cap_or_inf(k.m0_beta),
    })
}

/// Human name for a breakpoint, for failure reports.
fn breakpoint_name(s: &Solution, x: f64) -> String {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    if close(x, s.value.x1) {
        return "x1".to_string();
    }
    if let Some((xa, _)) = s.value.curve.rise_start() {
        if close(x, xa) {
            return "x_alpha".to_string();
        }
    }
    if let Some((xb, _)) = s.value.curve.rise_end() {
        if close(x, xb) {
            return "x_beta".to_string();
        }
    }
    format!("join_at_{x:.6}")
}

// =========================================================================
// solve
// =========================================================================

pub fn solve_report(cfg: &FileConfig) -> Result<CmdOutput, String> {
    let s = solve(&cfg.params).expect("parameters validated at load");
    let top = scan_ceiling(&s);

    let n = 40usize;
    let mut grid_x = Vec::with_capacity(n + 1);
    let mut grid_v = Vec::with_capacity(n + 1);
    let mut grid_dv = Vec::with_capacity(n + 1);
    let mut grid_a = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = top * i as f64 / n as f64;
        let e = s.value.eval(x);
        grid_x.push(sig6(x));
        grid_v.push(sig6(e.v));
        grid_dv.push(sig6(e.dv));
        grid_a.push(sig6(s.value.curve.a_at(x)));
    }

    let segments: Vec<Value> = s
        .value
        .segment_reports()
        .iter()
        .map(|seg| {
            let coeffs: Value = seg
                .coefficients
                .iter()
                .map(|c| (c.name.to_string(), json!(c.value)))
                .collect::<serde_json::Map<_, _>>()
                .into();
            json!({
                "form": seg.form,
                "x_start": seg.x_start,
                "x_end": seg.x_end.map_or(json!("inf"), |x| json!(x)),
                "anchor": seg.anchor,
                "coefficients": coeffs,
            })
        })
        .collect();

    let json = json!({
        "command": "solve",
        "config": config_echo(&cfg.params, None),
        "regime": regime_json(&s),
        "constants": constants_json(&s),
        "x_alpha": s.value.curve.x_alpha_table(),
        "x_beta": s.value.curve.x_beta_table(),
        "x1": s.value.x1,
        "ceiling": s.value.ceiling(),
        "traits": policy_traits(&cfg.params),
        "segments": segments,
        "grid": {"x": grid_x, "v": grid_v, "dv": grid_dv, "a": grid_a},
    });

    let mut csv = String::from("x,v,dv,a\n");
    for i in 0..=n {
        csv.push_str(&format!("{},{},{},{}\n", grid_x[i], grid_v[i], grid_dv[i], grid_a[i]));
    }

    Ok(CmdOutput { json, csv, ok: true })
}

// =========================================================================
// verify
// =========================================================================

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
    pass: bool,
    breakpoint: Option<String>,
}

impl Check {
    fn against_tol(name: &'static str, value: f64, tol: f64, breakpoint: Option<String>) -> Check {
        Check { name, value, tol, pass: value <= tol, breakpoint }
    }
}

pub fn verify_report(cfg: &FileConfig, perturb: Option<f64>) -> Result<CmdOutput, String> {
    let s = solve(&cfg.params).expect("parameters validated at load");
    let candidate = Solution {
        params: s.params,
        constants: s.constants,
        regime: s.regime,
        value: match perturb {
            Some(rel) => s.value.perturbed(rel),
            None => s.value.clone(),
        },
    };
    let top = scan_ceiling(&s);
    let rr = residual_report(&candidate.value, 1000, top);
    let sf = smooth_fit_report(&candidate.value);
    let sh = shape_report(&candidate.value, 1000, top);

    let join = sf.worst_at.map(|x| breakpoint_name(&s, x));
    let mut checks = vec![
        Check::against_tol("hjb_residual_max_rel", rr.max_rel, 1e-7, None),
        Check::against_tol("smooth_fit_value_jump", sf.max_value_jump, 1e-9, join.clone()),
        Check::against_tol("smooth_fit_slope_jump", sf.max_slope_jump, 1e-9, join.clone()),
        Check::against_tol("smooth_fit_curvature_jump", sf.max_curve_jump, 1e-9, join),
        Check::against_tol(
            "threshold_slope",
            sf.threshold_slope_gap,
            1e-9,
            Some("x1".to_string()),
        ),
    ];
    for id in identity_suite(&candidate) {
        // The slope-at-threshold identity is already listed above with its
        // breakpoint attached.
        if id.name != "threshold_slope" {
            checks.push(Check::against_tol(id.name, id.error, 1e-9, None));
        }
    }
    checks.push(Check {
        name: "slope_positive",
        value: sh.min_slope,
        tol: 0.0,
        pass: sh.min_slope > 0.0,
        breakpoint: None,
    });
    checks.push(Check {
        name: "concave",
        value: sh.max_curvature,
        tol: 0.0,
        pass: sh.max_curvature < 0.0,
        breakpoint: None,
    });
    checks.push(Check {
        name: "bounded_by_ceiling",
        value: sh.max_value_ratio,
        tol: 1.0 + 1e-12,
        pass: sh.max_value_ratio <= 1.0 + 1e-12,
        breakpoint: None,
    });
    checks.push(Check::against_tol("payout_indicator", sh.payout_indicator_error, 1e-9, None));
    checks.push(Check::against_tol("policy_consistency", sh.policy_gap, 1e-8, None));

    let passes = checks.iter().all(|c| c.pass);
    let check_values: Vec<Value> = checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "value": num(c.value),
                "tol": c.tol,
                "pass": c.pass,
                "breakpoint": c.breakpoint,
            })
        })
        .collect();
    let failures: Vec<Value> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| json!({"name": c.name, "breakpoint": c.breakpoint}))
        .collect();

    let json = json!({
        "command": "verify",
        "config": config_echo(&cfg.params, None),
        "regime": regime_json(&s),
        "perturb": perturb,
        "max_abs_residual": rr.max_abs,
        "max_rel_residual": rr.max_rel,
        "residual_worst_x": rr.at_x,
        "residual_points": rr.points(),
        "checks": check_values,
        "failures": failures,
        "passes": passes,
    });

    let mut csv = String::from("check,value,tol,pass,breakpoint\n");
    for c in &checks {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.name,
            c.value,
            c.tol,
            c.pass,
            c.breakpoint.as_deref().unwrap_or("")
        ));
    }

    Ok(CmdOutput { json, csv, ok: passes })
}

// =========================================================================
// simulate
// =========================================================================

fn parse_kv(body: &str) -> Result<Vec<(String, f64)>, String> {
    body.split(',')
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got '{pair}'"))?;
            let v: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Policy specs: `optimal`, `reflected`, `constant:a=A,c=C`, or
/// `threshold:x1=T` (optionally `threshold:a=A,x1=T` to fix the risk).
fn parse_policy(spec: &str, s: &Solution) -> Result<Policy, String> {
    let p = &s.params;
    match spec {
        "optimal" => return Ok(Policy::optimal(s)),
        "reflected" => {
            return Ok(Policy::with_rules(
                s,
                RiskRule::Reflected,
                PayoutRule::Threshold(s.value.x1),
                "reflected",
            ))
        }
        _ => {}
    }
    if let Some(body) = spec.strip_prefix("constant:") {
        let kv = parse_kv(body)?;
        let a = kv.iter().find(|(k, _)| k == "a").map(|(_, v)| *v);
        let c = kv.iter().find(|(k, _)| k == "c").map(|(_, v)| *v);
        let (a, c) = match (a, c) {
            (Some(a), Some(c)) => (a, c),
            _ => return Err("constant policy needs a=... and c=...".to_string()),
        };
        if !(p.alpha..=p.beta).contains(&a) {
            return Err(format!("risk {a} outside [{}, {}]", p.alpha, p.beta));
        }
        if !(0.0..=p.m).contains(&c) {
            return Err(format!("payout {c} outside [0, {}]", p.m));
        }
        return Ok(Policy::with_rules(
            s,
            RiskRule::Constant(a),
            PayoutRule::Constant(c),
            spec,
        ));
    }
    if let Some(body) = spec.strip_prefix("threshold:") {
        let kv = parse_kv(body)?;
        let t = kv
            .iter()
            .find(|(k, _)| k == "x1")
            .map(|(_, v)| *v)
            .ok_or("threshold policy needs x1=...")?;
        if t < 0.0 {
            return Err(format!("threshold {t} must be nonnegative"));
        }
        let risk = match kv.iter().find(|(k, _)| k == "a").map(|(_, v)| *v) {
            Some(a) if !(p.alpha..=p.beta).contains(&a) => {
                return Err(format!("risk {a} outside [{}, {}]", p.alpha, p.beta))
            }
            Some(a) => RiskRule::Constant(a),
            None => RiskRule::Feedback,
        };
        return Ok(Policy::with_rules(s, risk, PayoutRule::Threshold(t), spec));
    }
    Err(format!("unrecognized policy '{spec}'"))
}

fn default_x0(s: &Solution) -> Vec<f64> {
    if s.value.x1 > 0.0 {
        vec![0.5 * s.value.x1, s.value.x1, 2.0 * s.value.x1]
    } else {
        vec![0.5, 1.0, 2.0]
    }
}

pub fn simulate_report(
    cfg: &FileConfig,
    policy_spec: Option<&str>,
    seed_flag: Option<u64>,
) -> Result<CmdOutput, String> {
    let s = solve(&cfg.params).expect("parameters validated at load");
    let block = cfg.simulate.clone().unwrap_or_default();
    let d = SimConfig::default();
    let sim = SimConfig {
        n_paths: block.n_paths.unwrap_or(d.n_paths),
        dt: block.dt.unwrap_or(d.dt),
        horizon: block.horizon.unwrap_or(d.horizon),
        seed: seed_flag.or(block.seed).unwrap_or(d.seed),
        antithetic: block.antithetic.unwrap_or(d.antithetic),
    };
    let x0s = block.x0.unwrap_or_else(|| default_x0(&s));
    let policy = parse_policy(policy_spec.unwrap_or("optimal"), &s)?;

    let mut rows = Vec::with_capacity(x0s.len());
    for &x0 in &x0s {
        let est = simulate_policy(&s.params, &policy, x0, &sim).map_err(|e| e.to_string())?;
        let value = s.value.eval(x0).v;
        let z = if est.std_error > 0.0 {
            json!((est.mean - value) / est.std_error)
        } else {
            Value::Null
        };
        rows.push(json!({
            "x0": x0,
            "mean": est.mean,
            "std_error": est.std_error,
            "truncation_bound": est.truncation_bound,
            "ruined_fraction": est.ruined_fraction,
            "n_paths": est.n_paths,
            "value": value,
            "z": z,
        }));
    }

    let sim_echo = json!({
        "dt": sim.dt,
        "horizon": sim.horizon,
        "n_paths": sim.n_paths,
        "seed": sim.seed,
        "antithetic": sim.antithetic,
        "x0": x0s,
    });
    let json = json!({
        "command": "simulate",
        "config": config_echo(&cfg.params, Some(("simulate", sim_echo))),
        "regime": regime_json(&s),
        "policy": policy.label(),
        "x1": s.value.x1,
        "rows": rows,
    });

    let mut csv = String::from("x0,mean,std_error,truncation_bound,ruined_fraction,value,z\n");
    for row in json["rows"].as_array().expect("rows array") {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row["x0"], row["mean"], row["std_error"], row["truncation_bound"],
            row["ruined_fraction"], row["value"], row["z"]
        ));
    }

    Ok(CmdOutput { json, csv, ok: true })
}

// =========================================================================
// oracle
// =========================================================================

pub fn oracle_report(cfg: &FileConfig) -> Result<CmdOutput, String> {
    let s = solve(&cfg.params).expect("parameters validated at load");
    let block = cfg.oracle.clone().unwrap_or_default();
    let domain = block.domain.unwrap_or_else(|| oracle_domain(&s));
    let n = block.n.unwrap_or(4000);
    let tol = block.tol.unwrap_or(1e-3);
    let oracle_echo = json!({"L": domain, "n": n, "tol": tol});

    let gs = match solve_grid(&cfg.params, &GridConfig::with_resolution(n, domain)) {
        Ok(gs) => gs,
        Err(GridError::IllConditioned { reason }) => return Err(reason),
        Err(e @ GridError::NoConvergence { .. }) => {
            let json = json!({
                "command": "oracle",
                "config": config_echo(&cfg.params, Some(("oracle", oracle_echo))),
                "error": e.to_string(),
                "passes": false,
            });
            return Ok(CmdOutput { json, csv: format!("error\n{e}\n"), ok: false });
        }
    };

    let err = compare_with_closed_form(&gs, &s, 0.8);
    let switch = payout_switch(&gs);
    let gap_cells = (switch - s.value.x1).abs() / gs.h;
    let stride = (gs.xs.len() / 81).max(1);
    let sample: Vec<Value> = gs
        .xs
        .iter()
        .zip(&gs.v)
        .step_by(stride)
        .map(|(x, v)| json!([sig6(*x), sig6(*v), sig6(s.value.eval(*x).v)]))
        .collect();
    let passes = err <= tol;

    let json = json!({
        "command": "oracle",
        "config": config_echo(&cfg.params, Some(("oracle", oracle_echo))),
        "regime": regime_json(&s),
        "sweeps": gs.sweeps,
        "h": gs.h,
        "max_rel_error": err,
        "tol": tol,
        "payout_switch": switch,
        "x1": s.value.x1,
        "threshold_gap_cells": gap_cells,
        "grid": sample,
        "passes": passes,
    });

    let mut csv = String::from("x,v_grid,v_exact\n");
    for row in json["grid"].as_array().expect("grid array") {
        csv.push_str(&format!("{},{},{}\n", row[0], row[1], row[2]));
    }

    Ok(CmdOutput { json, csv, ok: passes })
}

// =========================================================================
// sweep
// =========================================================================

fn set_param(p: &ModelParams, name: &str, v: f64) -> Result<ModelParams, String> {
    let mut q = *p;
    match name {
        "mu" => q.mu = v,
        "sigma" => q.sigma = v,
        "delta" => q.delta = v,
        "gamma" => q.gamma = v,
        "alpha" => q.alpha = v,
        "beta" => q.beta = v,
        "M" | "m" => q.m = v,
        _ => return Err(format!("unknown sweep parameter '{name}'")),
    }
    Ok(q)
}

fn breakpoint_csv(b: Breakpoint) -> String {
    match b {
        Breakpoint::At(x) => format!("{x}"),
        Breakpoint::Unreached => "inf".to_string(),
    }
}

pub fn sweep_report(cfg: &FileConfig) -> Result<CmdOutput, String> {
    let block = cfg
        .sweep
        .as_ref()
        .ok_or("sweep requires a \"sweep\" block in the config")?;
    let values = block.values()?;
    // Reject unknown parameter names before producing any rows.
    set_param(&cfg.params, &block.param, values[0])?;

    let mut rows = Vec::with_capacity(values.len());
    let mut csv = String::from(
        "value,valid,debt_case,subcase,branch,x1,x1_positive,x_alpha,x_beta,\
         alpha_attained,beta_attained,x1_first_max,error\n",
    );
    for &v in &values {
        let q = match set_param(&cfg.params, &block.param, v) {
            Ok(q) => q,
            Err(e) => return Err(e),
        };
        if let Err(e) = q.validate() {
            rows.push(json!({"value": v, "valid": false, "error": e.to_string()}));
            csv.push_str(&format!("{v},false,,,,,,,,,,,{e}\n"));
            continue;
        }
        let s = solve(&q).expect("validated");
        let traits = policy_traits(&q);
        let xa = s.value.curve.x_alpha_table();
        let xb = s.value.curve.x_beta_table();
        let case_name = serde_json::to_value(s.regime.debt_case).expect("case serializes");
        let sub_name = serde_json::to_value(s.regime.m_subcase).expect("subcase serializes");
        rows.push(json!({
            "value": v,
            "valid": true,
            "debt_case": s.regime.debt_case,
            "subcase": s.regime.m_subcase,
            "branch": s.regime.m_subcase.branch_index(),
            "x1": s.value.x1,
            "x1_positive": s.regime.x1_positive,
            "x_alpha": xa,
            "x_beta": xb,
            "alpha_attained": traits.alpha_attained,
            "beta_attained": traits.beta_attained,
            "x1_first_max": traits.x1_first_max,
        }));
        csv.push_str(&format!(
            "{v},true,{},{},{},{},{},{},{},{},{},{},\n",
            case_name.as_str().expect("string name"),
            sub_name.as_str().expect("string name"),
            s.regime.m_subcase.branch_index(),
            s.value.x1,
            s.regime.x1_positive,
            breakpoint_csv(xa),
            breakpoint_csv(xb),
            traits.alpha_attained,
            traits.beta_attained,
            traits.x1_first_max,
        ));
    }

    let json = json!({
        "command": "sweep",
        "config": config_echo(
            &cfg.params,
            Some(("sweep", serde_json::to_value(block).expect("sweep block serializes"))),
        ),
        "rows": rows,
    });

    Ok(CmdOutput { json, csv, ok: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn low() -> ModelParams {
        ModelParams::new(2.0, 1.0, 0.5, 0.1, 1.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(123456789.0), 123457000.0);
        assert_eq!(sig6(0.0001234567), 0.000123457);
        assert_eq!(sig6(-1.9686881598), -1.96869);
        assert_eq!(sig6(0.0), 0.0);
        assert!(sig6(f64::INFINITY).is_infinite());
    }

    #[test]
    fn non_finite_numbers_become_sentinels() {
        assert_eq!(num(1.5), serde_json::json!(1.5));
        assert_eq!(num(f64::INFINITY), serde_json::json!("inf"));
        assert_eq!(num(f64::NEG_INFINITY), serde_json::json!("-inf"));
    }

    #[test]
    fn policy_specs_parse_or_reject() {
        let s = solve(&low()).unwrap();
        assert_eq!(parse_policy("optimal", &s).unwrap().label(), "optimal");
        assert_eq!(parse_policy("reflected", &s).unwrap().label(), "reflected");
        let spec = "constant:a=1.5,c=2";
        assert_eq!(parse_policy(spec, &s).unwrap().label(), spec);
        assert_eq!(
            parse_policy("threshold:x1=3", &s).unwrap().label(),
            "threshold:x1=3"
        );
        for bad in [
            "bogus",
            "constant:a=1.5",
            "constant:a=5,c=1",
            "constant:a=1.5,c=9",
            "threshold:a=1.5",
            "threshold:x1=-1",
            "constant:a=zebra,c=1",
        ] {
            assert!(parse_policy(bad, &s).is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn breakpoints_get_their_table_names() {
        let s = solve(&low()).unwrap();
        assert_eq!(breakpoint_name(&s, s.value.x1), "x1");
        let (xa, _) = s.value.curve.rise_start().unwrap();
        let (xb, _) = s.value.curve.rise_end().unwrap();
        assert_eq!(breakpoint_name(&s, xa), "x_alpha");
        assert_eq!(breakpoint_name(&s, xb), "x_beta");
        assert!(breakpoint_name(&s, 0.123).starts_with("join_at_"));
    }

    #[test]
    fn unknown_sweep_parameter_is_rejected() {
        let p = low();
        assert!(set_param(&p, "gamma", 0.2).is_ok());
        assert!(set_param(&p, "m", 1.0).is_ok());
        assert!(set_param(&p, "kappa", 1.0).is_err());
    }
}
