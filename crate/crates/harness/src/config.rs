//! Experiment configuration, read from TOML and overridden by CLI flags.
//!
//! ```toml
//! experiment = "inverse"
//! output_dir = "out"
//! seeds = [1, 2, 3]
//!
//! [budget]
//! seconds = 2.0
//!
//! [inverse]
//! m = 100
//! n = 200
//! q = [1.1, 2.0]
//!
//! [solvers]
//! names = ["boosted", "sg_gdss"]
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use hifba::solver::Budget;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Inverse,
    Nmf,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    Hifba,
    Boosted,
    SgGdss,
    SgCss,
    Bpg,
}

impl SolverName {
    pub fn label(self) -> &'static str {
        match self {
            SolverName::Hifba => "hifba",
            SolverName::Boosted => "boosted",
            SolverName::SgGdss => "sg_gdss",
            SolverName::SgCss => "sg_css",
            SolverName::Bpg => "bpg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "hifba" => Ok(SolverName::Hifba),
            "boosted" => Ok(SolverName::Boosted),
            "sg_gdss" => Ok(SolverName::SgGdss),
            "sg_css" => Ok(SolverName::SgCss),
            "bpg" => Ok(SolverName::Bpg),
            other => Err(HarnessError::Config(format!("unknown solver {other:?}"))),
        }
    }
}

/// `β₀` per method and `q`, used when the config does not override it.
pub fn default_beta0(solver: SolverName, q: f64) -> f64 {
    const TABLE: [(f64, [f64; 3]); 4] = [
        (1.1, [0.97, 0.86, 0.97]),
        (1.5, [0.80, 0.76, 0.80]),
        (1.75, [0.94, 0.86, 0.94]),
        (2.0, [0.99, 0.75, 0.99]),
    ];
    let col = match solver {
        SolverName::Hifba => 0,
        SolverName::Boosted => 1,
        _ => 2,
    };
    let row = TABLE
        .iter()
        .min_by(|a, b| (a.0 - q).abs().total_cmp(&(b.0 - q).abs()))
        .expect("table is non-empty");
    row.1[col]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub seconds: Option<f64>,
    pub iterations: Option<usize>,
}

impl BudgetConfig {
    pub fn to_budget(&self) -> Budget {
        Budget {
            max_iters: self.iterations,
            max_time: self.seconds.map(Duration::from_secs_f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    pub m: usize,
    pub n: usize,
    pub sparsity: f64,
    pub noise_level: f64,
    pub lambda: f64,
    pub q: Vec<f64>,
    /// Emit `10·log10(‖x‖²/‖e‖²)` next to the default SNR.
    pub snr_power: bool,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            m: 500,
            n: 1000,
            sparsity: 0.1,
            noise_level: 0.1,
            lambda: 1.0,
            q: vec![1.1, 1.5, 1.75, 2.0],
            snr_power: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfConfig {
    /// Dense CSV data; synthetic uniform data when absent.
    pub data: Option<PathBuf>,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub lambda: f64,
    /// Synthetic entries are uniform on `[0, upper)`.
    pub upper: f64,
    pub gamma_hifba: f64,
    pub gamma_boosted: f64,
    pub vartheta: f64,
    pub gamma_bpg: f64,
    /// Accept kernel parameters that violate the relative-smoothness condition.
    pub force: bool,
    pub kernel_a: Option<f64>,
    pub kernel_b: Option<f64>,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            data: None,
            m: 200,
            n: 200,
            rank: 5,
            lambda: 0.1,
            upper: 0.1,
            gamma_hifba: 300.0,
            gamma_boosted: 300.0,
            vartheta: 0.95,
            gamma_bpg: 1.0,
            force: false,
            kernel_a: None,
            kernel_b: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolversConfig {
    pub names: Vec<SolverName>,
    pub sg_css_alphas: Vec<f64>,
    /// Overrides the `β₀` lookup for every `q`.
    pub beta0: Option<f64>,
    pub vartheta: f64,
    pub max_inner: usize,
    /// Extra SG-GDSS passes per splitting solve, see `InnerSolverConfig::max_restarts`.
    pub inner_restarts: usize,
    pub max_backtracks: usize,
    pub stop_residual_tol: f64,
}

impl Default for SolversConfig {
    fn default() -> Self {
        SolversConfig {
            names: vec![
                SolverName::Hifba,
                SolverName::Boosted,
                SolverName::SgGdss,
                SolverName::SgCss,
            ],
            sg_css_alphas: vec![0.01, 0.1, 1.0],
            beta0: None,
            vartheta: 0.72,
            max_inner: 25,
            inner_restarts: 4,
            max_backtracks: 60,
            stop_residual_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Extra majorant check of `½x²` with this (possibly too small) `L_p`.
    pub faulty_lp: Option<f64>,
    pub samples: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            faulty_lp: None,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub budget: BudgetConfig,
    /// Write measured wall time into traces; off gives byte-reproducible files.
    pub record_timing: bool,
    /// Worker threads for independent runs (0 = all cores).
    pub threads: usize,
    pub inverse: InverseConfig,
    pub nmf: NmfConfig,
    pub solvers: SolversConfig,
    pub validate: ValidateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Inverse,
            output_dir: PathBuf::from("out"),
            seeds: vec![0],
            budget: BudgetConfig {
                seconds: Some(2.0),
                iterations: None,
            },
            record_timing: true,
            threads: 0,
            inverse: InverseConfig::default(),
            nmf: NmfConfig::default(),
            solvers: SolversConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Defaults for one experiment kind: the NMF track runs exactly 1000 iterations of HiFBA, Boosted and BPG.
    pub fn for_experiment(experiment: Experiment) -> Self {
        let mut cfg = ExperimentConfig {
            experiment,
            ..Default::default()
        };
        if experiment == Experiment::Nmf {
            cfg.budget = BudgetConfig {
                seconds: None,
                iterations: Some(1000),
            };
            cfg.solvers.names = vec![SolverName::Hifba, SolverName::Boosted, SolverName::Bpg];
            // Fixed iteration counts, no residual stop.
            cfg.solvers.stop_residual_tol = 0.0;
        }
        cfg
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.experiment != Experiment::Validate {
            if self.solvers.names.is_empty() {
                return bad("select at least one solver");
            }
            if self.seeds.is_empty() {
                return bad("seeds must be non-empty");
            }
            if self.budget.seconds.is_none() && self.budget.iterations.is_none() {
                return bad("set budget.seconds or budget.iterations");
            }
        }
        if self
            .budget
            .seconds
            .is_some_and(|s| !(s > 0.0 && s.is_finite()))
        {
            return bad("budget.seconds must be positive");
        }
        match self.experiment {
            Experiment::Inverse => {
                if self.inverse.q.is_empty() {
                    return bad("inverse.q must list at least one value");
                }
                if let Some(q) = self.inverse.q.iter().find(|q| !(**q > 1.0 && **q <= 2.0)) {
                    return Err(HarnessError::Config(format!("q = {q} outside (1, 2]")));
                }
                if self.solvers.names.contains(&SolverName::Bpg) {
                    return bad("bpg applies to the nmf experiment only");
                }
                if self.solvers.names.contains(&SolverName::SgCss)
                    && self.solvers.sg_css_alphas.is_empty()
                {
                    return bad("sg_css needs at least one step in solvers.sg_css_alphas");
                }
            }
            Experiment::Nmf => {
                if let Some(s) = self
                    .solvers
                    .names
                    .iter()
                    .find(|s| matches!(s, SolverName::SgCss | SolverName::SgGdss))
                {
                    return Err(HarnessError::Config(format!(
                        "{} is not part of the nmf experiment",
                        s.label()
                    )));
                }
            }
            Experiment::Validate => {}
        }
        Ok(())
    }

    pub fn beta0(&self, solver: SolverName, q: f64) -> f64 {
        self.solvers
            .beta0
            .unwrap_or_else(|| default_beta0(solver, q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta0_lookup() {
        assert_eq!(default_beta0(SolverName::Boosted, 1.1), 0.86);
        assert_eq!(default_beta0(SolverName::Hifba, 1.5), 0.80);
        assert_eq!(default_beta0(SolverName::SgGdss, 2.0), 0.99);
        assert_eq!(default_beta0(SolverName::Boosted, 1.75), 0.86);
    }

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            experiment = "inverse"
            seeds = [3, 4]
            [budget]
            iterations = 50
            [inverse]
            m = 10
            n = 20
            q = [1.5]
            [solvers]
            names = ["boosted", "sg_css"]
            sg_css_alphas = [0.1]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, [3, 4]);
        assert_eq!(cfg.inverse.m, 10);
        assert_eq!(cfg.inverse.sparsity, 0.1);
        assert_eq!(cfg.budget.iterations, Some(50));
        // Defaults keep the seconds budget unless the file overrides the table.
        assert_eq!(cfg.budget.seconds, None);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.inverse.q = vec![2.5];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.solvers.names.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::for_experiment(Experiment::Nmf);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
