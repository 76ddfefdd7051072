//! Regularized NMF: HiFBA and Boosted HiFBA on the reformulated problem against BPG.

use std::path::PathBuf;

use hifba::baselines::bpg_nmf;
use hifba::hifbs::NmfClosedForm;
use hifba::problems::{load_matrix_csv, nmf_objective, nmf_reformulate, NmfState};
use hifba::solver::{run, SolverConfig, SolverTrace, Status};
use serde::Serialize;

use crate::config::{ExperimentConfig, SolverName};
use crate::error::{HarnessError, Result};
use crate::output::{csv_bytes, write_atomic, write_manifest, write_trace};
use crate::plot::{Chart, Series};

/// Data and initial factors for one seed, with any kernel override applied.
pub fn build_state(cfg: &ExperimentConfig, seed: u64) -> Result<NmfState> {
    let n = &cfg.nmf;
    let state = match &n.data {
        Some(path) => NmfState::new(load_matrix_csv(path, true)?, n.rank, n.lambda)?,
        None => NmfState::synthetic(n.m, n.n, n.rank, n.lambda, n.upper, seed)?,
    };
    if n.kernel_a.is_none() && n.kernel_b.is_none() {
        return Ok(state);
    }
    let a = n.kernel_a.unwrap_or(state.kernel_a);
    let b = n.kernel_b.unwrap_or(state.kernel_b);
    Ok(state.with_kernel(a, b, n.force)?)
}

/// HiFBA-family config with `σ = 0.99/(2γ)`.
pub fn hifba_config(cfg: &ExperimentConfig, solver: SolverName) -> SolverConfig {
    let gamma = match solver {
        SolverName::Hifba => cfg.nmf.gamma_hifba,
        _ => cfg.nmf.gamma_boosted,
    };
    let sigma = 0.99 / (2.0 * gamma);
    let mut sc = if solver == SolverName::Hifba {
        SolverConfig::plain(gamma, sigma)
    } else {
        SolverConfig::boosted(gamma, sigma)
    };
    sc.vartheta = cfg.nmf.vartheta;
    sc.max_backtracks = cfg.solvers.max_backtracks;
    sc.stop_residual_tol = cfg.solvers.stop_residual_tol;
    sc.max_outer = cfg.budget.iterations.unwrap_or(usize::MAX);
    sc.time_budget = cfg.budget.to_budget().max_time;
    sc
}

pub fn run_method(
    cfg: &ExperimentConfig,
    state: &NmfState,
    solver: SolverName,
) -> Result<SolverTrace> {
    match solver {
        SolverName::Hifba | SolverName::Boosted => {
            let problem = nmf_reformulate(state)?;
            let oracle = NmfClosedForm::new(state);
            Ok(run(
                &problem,
                &oracle,
                &state.current_point(),
                &hifba_config(cfg, solver),
            )?)
        }
        SolverName::Bpg => Ok(bpg_nmf(
            state,
            cfg.nmf.gamma_bpg,
            cfg.budget.to_budget(),
            !cfg.nmf.force,
        )?),
        other => Err(HarnessError::Config(format!(
            "{} is not part of the nmf experiment",
            other.label()
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NmfSummaryRow {
    pub method: String,
    pub seed: u64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub status: Status,
    pub fallbacks: usize,
}

#[derive(Debug, Serialize)]
pub struct NmfReport {
    pub summary: Vec<NmfSummaryRow>,
    pub files: Vec<PathBuf>,
    #[serde(skip)]
    pub traces: Vec<(String, u64, SolverTrace)>,
}

impl NmfReport {
    pub fn trace(&self, method: &str, seed: u64) -> Option<&SolverTrace> {
        self.traces
            .iter()
            .find(|(m, s, _)| m == method && *s == seed)
            .map(|t| &t.2)
    }
}

pub fn run_nmf(cfg: &ExperimentConfig) -> Result<NmfReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let mut files = Vec::new();
    let mut summary = Vec::new();
    let mut traces = Vec::new();
    for &seed in &cfg.seeds {
        let state = build_state(cfg, seed)?;
        let initial = nmf_objective(&state);
        for &solver in &cfg.solvers.names {
            let trace = run_method(cfg, &state, solver)?;
            let path = out
                .join("traces")
                .join(format!("nmf_{}_seed{seed}.csv", solver.label()));
            write_trace(&path, &trace, cfg.record_timing)?;
            files.push(path);
            summary.push(NmfSummaryRow {
                method: solver.label().to_string(),
                seed,
                initial_objective: initial,
                final_objective: trace.last().phi,
                iterations: trace.iterations(),
                status: trace.status,
                fallbacks: trace.monitors.fallbacks,
            });
            traces.push((solver.label().to_string(), seed, trace));
        }
    }
    let summary_path = out.join("summary.csv");
    write_atomic(&summary_path, &csv_bytes(&summary)?)?;
    files.push(summary_path);

    let seed = cfg.seeds[0];
    let chart = Chart {
        title: format!("NMF objective, seed {seed}"),
        x_label: "iteration".into(),
        y_label: "objective".into(),
        log_y: true,
        series: traces
            .iter()
            .filter(|t| t.1 == seed)
            .map(|(m, _, t)| Series {
                label: m.clone(),
                points: t.records.iter().map(|r| (r.k as f64, r.phi)).collect(),
            })
            .collect(),
    };
    let plot_path = out.join("plots").join("nmf_objective.svg");
    write_atomic(&plot_path, chart.render().as_bytes())?;
    files.push(plot_path);
    files.push(write_manifest(out, "run-nmf", cfg, &files)?);
    Ok(NmfReport {
        summary,
        files,
        traces,
    })
}
