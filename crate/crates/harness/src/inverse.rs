//! Sparse recovery with an `ℓ_q` fidelity and the clipped quadratic penalty.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hifba::baselines::{run_subgradient, BaselineConfig};
use hifba::hifbs::{InnerSolverConfig, SubgradientInner};
use hifba::problems::{
    gen_inverse, relative_error, snr_db, snr_db_power, InverseInstance, InverseParams,
};
use hifba::solver::{run_with_observer, IterationView, SolverConfig, SolverTrace, Status};
use hifba::Point;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SolverName};
use crate::error::{HarnessError, Result};
use crate::output::{csv_bytes, q_tag, write_atomic, write_json, write_manifest, write_trace};
use crate::plot::{Chart, Series};
use crate::stats::{iqr, median};

/// One method as it appears in file names and summary columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub solver: SolverName,
    /// Constant step for SG-CSS.
    pub alpha: Option<f64>,
}

impl Method {
    pub fn label(&self) -> String {
        match self.alpha {
            Some(a) => format!("{}_{}", self.solver.label(), q_tag(a)),
            None => self.solver.label().to_string(),
        }
    }
}

pub fn methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let mut out = Vec::new();
    for &s in &cfg.solvers.names {
        if s == SolverName::SgCss {
            out.extend(cfg.solvers.sg_css_alphas.iter().map(|&a| Method {
                solver: s,
                alpha: Some(a),
            }));
        } else {
            out.push(Method {
                solver: s,
                alpha: None,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub k: usize,
    pub snr_db: f64,
    /// SNR at the lowest-`φ` point reported so far.
    pub snr_db_best: f64,
    pub rel_error: f64,
    #[serde(skip)]
    pub snr_db_power: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub q: f64,
    pub method: String,
    pub seed: u64,
    pub beta0: Option<f64>,
    /// SNR of the method's output point at the end of the run.
    pub final_snr_db: f64,
    pub best_snr_db: f64,
    pub final_rel_error: f64,
    pub iterations: usize,
    pub status: Status,
}

pub struct CellResult {
    pub summary: CellSummary,
    pub trace: SolverTrace,
    pub metrics: Vec<MetricRow>,
}

pub fn instance_params(cfg: &ExperimentConfig, q: f64) -> InverseParams {
    InverseParams {
        m: cfg.inverse.m,
        n: cfg.inverse.n,
        sparsity: cfg.inverse.sparsity,
        noise_level: cfg.inverse.noise_level,
        q,
        lambda: cfg.inverse.lambda,
    }
}

fn solver_config(cfg: &ExperimentConfig, method: &Method) -> SolverConfig {
    let mut sc = match method.solver {
        SolverName::Hifba => SolverConfig::plain(1.0, 1.0),
        _ => SolverConfig::boosted(1.0, 1.0),
    }
    .adaptive();
    sc.vartheta = cfg.solvers.vartheta;
    sc.max_backtracks = cfg.solvers.max_backtracks;
    sc.stop_residual_tol = cfg.solvers.stop_residual_tol;
    sc.max_outer = cfg.budget.iterations.unwrap_or(usize::MAX);
    sc.time_budget = cfg.budget.to_budget().max_time;
    sc
}

/// Runs one method on one instance from `x⁰ = 0`.
pub fn run_cell(
    cfg: &ExperimentConfig,
    instance: &InverseInstance,
    method: &Method,
    seed: u64,
) -> Result<CellResult> {
    let problem = instance.problem()?;
    let x0 = Point::zeros(instance.x_true.len());
    let q = instance.q;
    let mut snrs = Vec::new();
    let mut observer = |v: &IterationView<'_>| {
        snrs.push((
            snr_db(&instance.x_true, v.output),
            relative_error(&instance.x_true, v.output),
            snr_db_power(&instance.x_true, v.output),
        ));
    };
    let (trace, beta0) = match method.solver {
        SolverName::Hifba | SolverName::Boosted => {
            let beta0 = cfg.beta0(method.solver, q);
            let inner = SubgradientInner::new(InnerSolverConfig {
                beta0,
                max_inner: cfg.solvers.max_inner,
                max_restarts: cfg.solvers.inner_restarts,
                ..Default::default()
            });
            let sc = solver_config(cfg, method);
            (
                run_with_observer(&problem, &inner, &x0, &sc, &mut observer)?,
                Some(beta0),
            )
        }
        SolverName::SgGdss => {
            let beta0 = cfg.beta0(method.solver, q);
            let bc = BaselineConfig::sg_gdss(beta0, cfg.budget.to_budget());
            (
                run_subgradient(&problem, &x0, &bc, &mut observer)?,
                Some(beta0),
            )
        }
        SolverName::SgCss => {
            let alpha = method.alpha.unwrap_or(0.1);
            let bc = BaselineConfig::sg_css(alpha, cfg.budget.to_budget());
            (run_subgradient(&problem, &x0, &bc, &mut observer)?, None)
        }
        SolverName::Bpg => {
            return Err(HarnessError::Config(
                "bpg applies to the nmf experiment only".into(),
            ))
        }
    };

    let mut metrics = Vec::with_capacity(snrs.len());
    let mut best_phi = f64::INFINITY;
    let mut best_snr = f64::NEG_INFINITY;
    for (rec, &(snr, rel, snr_pow)) in trace.records.iter().zip(&snrs) {
        if rec.phi < best_phi || metrics.is_empty() {
            best_phi = rec.phi;
            best_snr = snr;
        }
        metrics.push(MetricRow {
            k: rec.k,
            snr_db: snr,
            snr_db_best: best_snr,
            rel_error: rel,
            snr_db_power: snr_pow,
        });
    }
    let summary = CellSummary {
        q,
        method: method.label(),
        seed,
        beta0,
        final_snr_db: snr_db(&instance.x_true, &trace.output),
        best_snr_db: best_snr,
        final_rel_error: relative_error(&instance.x_true, &trace.output),
        iterations: trace.iterations(),
        status: trace.status,
    };
    Ok(CellResult {
        summary,
        trace,
        metrics,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub q: f64,
    pub method: String,
    pub beta0: Option<f64>,
    pub seeds: usize,
    pub snr_db_median: f64,
    pub snr_db_iqr: f64,
    pub best_snr_db_median: f64,
    pub rel_error_median: f64,
}

#[derive(Debug, Serialize)]
pub struct InverseReport {
    pub cells: Vec<CellSummary>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

impl InverseReport {
    pub fn median_snr(&self, q: f64, method: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.q == q && r.method == method)
            .map(|r| r.snr_db_median)
    }
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

fn metrics_bytes(rows: &[MetricRow], with_power: bool) -> Result<Vec<u8>> {
    if !with_power {
        return csv_bytes(rows);
    }
    #[derive(Serialize)]
    struct WithPower {
        k: usize,
        snr_db: f64,
        snr_db_best: f64,
        rel_error: f64,
        snr_db_power: f64,
    }
    csv_bytes(rows.iter().map(|r| WithPower {
        k: r.k,
        snr_db: r.snr_db,
        snr_db_best: r.snr_db_best,
        rel_error: r.rel_error,
        snr_db_power: r.snr_db_power,
    }))
}

/// Every `(q, method, seed)` cell, then summary tables, plots and a manifest under `output_dir`.
pub fn run_inverse(cfg: &ExperimentConfig) -> Result<InverseReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let methods = methods(cfg);
    let mut jobs = Vec::new();
    for &q in &cfg.inverse.q {
        for m in &methods {
            for &seed in &cfg.seeds {
                jobs.push((q, m.clone(), seed));
            }
        }
    }

    let pool = thread_pool(cfg.threads)?;
    let results: Vec<CellOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|(q, method, seed)| {
                let instance = gen_inverse(&instance_params(cfg, *q), *seed)?;
                let cell = run_cell(cfg, &instance, method, *seed)?;
                let stem = format!("inverse_q{}_{}_seed{}", q_tag(*q), method.label(), seed);
                let trace_path = out.join("traces").join(format!("{stem}.csv"));
                let metrics_path = out.join("metrics").join(format!("{stem}.csv"));
                write_trace(&trace_path, &cell.trace, cfg.record_timing)?;
                write_atomic(
                    &metrics_path,
                    &metrics_bytes(&cell.metrics, cfg.inverse.snr_power)?,
                )?;
                let times = cell
                    .trace
                    .records
                    .iter()
                    .map(|r| (r.wall_time_ms, r.phi))
                    .collect();
                Ok((cell.summary, cell.metrics, times, trace_path, metrics_path))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut files: Vec<PathBuf> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<&CellSummary>> = BTreeMap::new();
    for (summary, _, _, tp, mp) in &results {
        files.push(tp.clone());
        files.push(mp.clone());
        let qi = cfg
            .inverse
            .q
            .iter()
            .position(|q| *q == summary.q)
            .unwrap_or(0);
        let mi = methods
            .iter()
            .position(|m| m.label() == summary.method)
            .unwrap_or(0);
        groups.entry((qi, mi)).or_default().push(summary);
    }

    let summary: Vec<SummaryRow> = groups
        .iter()
        .map(|(&(qi, mi), cells)| {
            let finals: Vec<f64> = cells.iter().map(|c| c.final_snr_db).collect();
            let bests: Vec<f64> = cells.iter().map(|c| c.best_snr_db).collect();
            let rels: Vec<f64> = cells.iter().map(|c| c.final_rel_error).collect();
            SummaryRow {
                q: cfg.inverse.q[qi],
                method: methods[mi].label(),
                beta0: cells[0].beta0,
                seeds: cells.len(),
                snr_db_median: median(&finals),
                snr_db_iqr: iqr(&finals),
                best_snr_db_median: median(&bests),
                rel_error_median: median(&rels),
            }
        })
        .collect();
    let summary_path = out.join("summary.csv");
    write_atomic(&summary_path, &csv_bytes(&summary)?)?;
    files.push(summary_path);

    let table_path = out.join("table1.csv");
    write_atomic(&table_path, &table_one(cfg, &methods, &summary)?)?;
    files.push(table_path);

    files.extend(write_plots(cfg, &methods, &results)?);

    let cells: Vec<CellSummary> = results.into_iter().map(|r| r.0).collect();
    let cells_path = out.join("cells.json");
    write_json(&cells_path, &cells)?;
    files.push(cells_path);
    files.push(write_manifest(out, "run-inverse", cfg, &files)?);
    Ok(InverseReport {
        cells,
        summary,
        files,
    })
}

/// Wide table: one row per `q`, a `β₀` and median-SNR column per method.
fn table_one(
    cfg: &ExperimentConfig,
    methods: &[Method],
    summary: &[SummaryRow],
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["p".to_string()];
    for m in methods {
        if m.alpha.is_none() {
            header.push(format!("{}_beta0", m.label()));
        }
        header.push(format!("{}_snr_db", m.label()));
        header.push(format!("{}_snr_db_iqr", m.label()));
    }
    w.write_record(&header)?;
    for &q in &cfg.inverse.q {
        let mut row = vec![q_tag(q)];
        for m in methods {
            let r = summary.iter().find(|r| r.q == q && r.method == m.label());
            if m.alpha.is_none() {
                row.push(
                    r.and_then(|r| r.beta0)
                        .map(|b| b.to_string())
                        .unwrap_or_default(),
                );
            }
            row.push(
                r.map(|r| format!("{:.2}", r.snr_db_median))
                    .unwrap_or_default(),
            );
            row.push(
                r.map(|r| format!("{:.2}", r.snr_db_iqr))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Csv(csv::Error::from(e.into_error())))
}

type CellOutput = (
    CellSummary,
    Vec<MetricRow>,
    Vec<(f64, f64)>,
    PathBuf,
    PathBuf,
);

/// SNR and relative error against iteration (and SNR against wall time) for the first seed.
fn write_plots(
    cfg: &ExperimentConfig,
    methods: &[Method],
    results: &[CellOutput],
) -> Result<Vec<PathBuf>> {
    let seed = cfg.seeds[0];
    let mut files = Vec::new();
    for &q in &cfg.inverse.q {
        let pick = |m: &Method| {
            results
                .iter()
                .find(|r| r.0.q == q && r.0.seed == seed && r.0.method == m.label())
        };
        let mut snr = Vec::new();
        let mut rel = Vec::new();
        let mut snr_time = Vec::new();
        for m in methods {
            let Some((_, metrics, times, _, _)) = pick(m) else {
                continue;
            };
            snr.push(Series {
                label: m.label(),
                points: metrics.iter().map(|r| (r.k as f64, r.snr_db)).collect(),
            });
            rel.push(Series {
                label: m.label(),
                points: metrics.iter().map(|r| (r.k as f64, r.rel_error)).collect(),
            });
            snr_time.push(Series {
                label: m.label(),
                points: times
                    .iter()
                    .zip(metrics)
                    .map(|(t, r)| (t.0, r.snr_db))
                    .collect(),
            });
        }
        let tag = q_tag(q);
        let mut charts = vec![
            (
                format!("snr_vs_iteration_q{tag}.svg"),
                Chart {
                    title: format!("SNR (dB), q = {tag}, seed {seed}"),
                    x_label: "iteration".into(),
                    y_label: "SNR (dB)".into(),
                    log_y: false,
                    series: snr,
                },
            ),
            (
                format!("rel_error_vs_iteration_q{tag}.svg"),
                Chart {
                    title: format!("relative error, q = {tag}, seed {seed}"),
                    x_label: "iteration".into(),
                    y_label: "relative error".into(),
                    log_y: true,
                    series: rel,
                },
            ),
        ];
        if cfg.record_timing {
            charts.push((
                format!("snr_vs_time_q{tag}.svg"),
                Chart {
                    title: format!("SNR (dB) against wall time, q = {tag}, seed {seed}"),
                    x_label: "wall time (ms)".into(),
                    y_label: "SNR (dB)".into(),
                    log_y: false,
                    series: snr_time,
                },
            ));
        }
        for (name, chart) in charts {
            let path = cfg.output_dir.join("plots").join(name);
            write_atomic(&path, chart.render().as_bytes())?;
            files.push(path);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    fn tiny(dir: &std::path::Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_experiment(Experiment::Inverse);
        cfg.output_dir = dir.to_path_buf();
        cfg.inverse.m = 20;
        cfg.inverse.n = 40;
        cfg.inverse.q = vec![1.5];
        cfg.budget.seconds = None;
        cfg.budget.iterations = Some(15);
        cfg.record_timing = false;
        cfg.threads = 1;
        cfg
    }

    #[test]
    fn single_cell_writes_one_trace_and_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.solvers.names = vec![SolverName::Boosted];
        let report = run_inverse(&cfg).unwrap();
        assert_eq!(report.summary.len(), 1);
        assert_eq!(
            std::fs::read_dir(dir.path().join("traces"))
                .unwrap()
                .count(),
            1
        );
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 2);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn full_method_grid_matches_table_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let report = run_inverse(&cfg).unwrap();
        assert_eq!(report.summary.len(), 6);
        let table = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
        let header = table.lines().next().unwrap();
        assert_eq!(
            header,
            "p,hifba_beta0,hifba_snr_db,hifba_snr_db_iqr,boosted_beta0,boosted_snr_db,boosted_snr_db_iqr,\
             sg_gdss_beta0,sg_gdss_snr_db,sg_gdss_snr_db_iqr,sg_css_0.01_snr_db,sg_css_0.01_snr_db_iqr,\
             sg_css_0.1_snr_db,sg_css_0.1_snr_db_iqr,sg_css_1.0_snr_db,sg_css_1.0_snr_db_iqr"
        );
        assert_eq!(table.lines().count(), 2);
    }

    #[test]
    fn method_labels() {
        let m = Method {
            solver: SolverName::SgCss,
            alpha: Some(0.01),
        };
        assert_eq!(m.label(), "sg_css_0.01");
    }
}
