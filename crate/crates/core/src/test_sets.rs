//! Parameter rosters shared by the unit tests: one reference family per
//! debt case, auxiliary families that make the remaining cap regimes
//! nonempty, a zero-debt family, and a boundary cap.

use crate::model::ModelParams;

pub fn low(m: f64) -> ModelParams {
    ModelParams::new(2.0, 1.0, 0.5, 0.1, 1.0, 2.0, m).unwrap()
}

pub fn mid(m: f64) -> ModelParams {
    ModelParams::new(2.0, 1.0, 1.2, 0.1, 1.0, 2.0, m).unwrap()
}

/// Higher discount moves the alpha cap above zero, populating the two
/// immediate-payout mid-debt regimes.
pub fn mid_aux(m: f64) -> ModelParams {
    ModelParams::new(2.0, 1.0, 1.2, 1.0, 1.0, 2.0, m).unwrap()
}

pub fn high(m: f64) -> ModelParams {
    ModelParams::new(1.0, 1.0, 0.8, 0.1, 1.0, 1.5, m).unwrap()
}

pub fn high_aux(m: f64) -> ModelParams {
    ModelParams::new(1.0, 1.0, 0.8, 1.0, 1.0, 1.5, m).unwrap()
}

pub fn very_high(m: f64) -> ModelParams {
    ModelParams::new(1.0, 1.0, 2.0, 0.1, 1.0, 1.5, m).unwrap()
}

pub fn very_high_aux(m: f64) -> ModelParams {
    ModelParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 1.5, m).unwrap()
}

pub fn zero_debt(m: f64) -> ModelParams {
    ModelParams::new(2.0, 1.0, 0.0, 0.1, 1.0, 2.0, m).unwrap()
}

/// At least one parameter set in every one of the fifteen regimes, plus the
/// zero-debt edge and the cap boundary where the full-band and saturated
/// low-debt constructions meet.
pub fn all_regimes() -> Vec<ModelParams> {
    vec![
        low(2.0),
        low(1.0),
        low(1.6),
        low(0.1),
        low(0.02),
        mid(1.2),
        mid(0.5),
        mid(0.03),
        mid_aux(2.5),
        mid_aux(1.2),
        mid_aux(0.45),
        mid_aux(0.2),
        high(0.5),
        high(0.13),
        high(0.05),
        high_aux(2.0),
        high_aux(1.5),
        high_aux(1.0),
        high_aux(0.3),
        very_high(1.0),
        very_high_aux(2.0),
        very_high_aux(1.0),
        very_high_aux(0.2),
        zero_debt(0.5),
        zero_debt(2.0),
    ]
}
