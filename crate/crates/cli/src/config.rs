//! File-backed run configuration.
//!
//! Every command reads the same JSON file: the seven model parameters at
//! the top level plus optional per-command blocks. Command-line flags
//! override the file, and the merged result is echoed into each report so
//! a report is self-describing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use reserve_control::ModelParams;

#[derive(Debug, Clone, Deserialize)]
pub struct FileConfig {
    #[serde(flatten)]
    pub params: ModelParams,
    pub simulate: Option<SimBlock>,
    pub oracle: Option<OracleBlock>,
    pub sweep: Option<SweepBlock>,
}

/// Monte Carlo settings; anything omitted falls back to the defaults of
/// [`reserve_control::simulate::SimConfig`], and start levels default to
/// half, one, and two payout thresholds (or `0.5, 1, 2` when the threshold
/// is zero).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimBlock {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub antithetic: Option<bool>,
    pub x0: Option<Vec<f64>>,
}

/// Grid-oracle settings; the domain defaults to the module's own choice
/// (threshold plus thirty tail widths) and the node count to 4000.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OracleBlock {
    #[serde(rename = "L")]
    pub domain: Option<f64>,
    pub n: Option<usize>,
    /// Pass threshold on the worst relative gap to the closed form.
    pub tol: Option<f64>,
}

/// One-parameter sweep: `steps` evenly spaced samples from `from` to `to`
/// inclusive (a single step samples `from` alone).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepBlock {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

/// Loads and validates the configuration, mapping every failure to a
/// message the caller reports as a usage error.
pub fn load_config(path: Option<&Path>) -> Result<FileConfig, String> {
    let path = path.ok_or("a --config file is required")?;
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cfg: FileConfig =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    cfg.params.validate().map_err(|e| format!("invalid parameters: {e}"))?;
    Ok(cfg)
}

impl SweepBlock {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        if self.steps == 0 {
            return Err("sweep needs at least one step".to_string());
        }
        if self.steps == 1 {
            return Ok(vec![self.from]);
        }
        let span = self.to - self.from;
        Ok((0..self.steps)
            .map(|i| self.from + span * i as f64 / (self.steps - 1) as f64)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(from: f64, to: f64, steps: usize) -> SweepBlock {
        SweepBlock { param: "M".to_string(), from, to, steps }
    }

    #[test]
    fn sweep_values_are_inclusive_and_even() {
        assert_eq!(sweep(1.0, 2.0, 5).values().unwrap(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert_eq!(sweep(1.6, 0.4, 1).values().unwrap(), vec![1.6]);
        assert!(sweep(1.0, 2.0, 0).values().is_err());
    }

    #[test]
    fn top_level_parameters_parse_with_the_capital_cap() {
        let cfg: FileConfig = serde_json::from_str(
            r#"{"mu":2,"sigma":1,"delta":0.5,"gamma":0.1,"alpha":1,"beta":2,"M":2}"#,
        )
        .unwrap();
        assert_eq!(cfg.params.m, 2.0);
        assert!(cfg.simulate.is_none() && cfg.oracle.is_none() && cfg.sweep.is_none());
    }
}
