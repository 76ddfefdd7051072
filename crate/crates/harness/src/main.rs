use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hifba_harness::config::{Experiment, ExperimentConfig, SolverName};
use hifba_harness::error::{HarnessError, Result};
use hifba_harness::output::{write_json, write_manifest};
use hifba_harness::{inverse, nmf, validate};

#[derive(Parser)]
#[command(
    name = "hifba",
    version,
    about = "Run HiFBA experiments and property suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sparse recovery with an l_q fidelity across q, solvers and seeds.
    RunInverse {
        #[command(flatten)]
        common: Common,
        /// Fidelity exponents, e.g. `1.1,1.5,1.75,2`.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        /// Also write 10·log10 of the squared norm ratio.
        #[arg(long)]
        snr_power: bool,
    },
    /// Regularized NMF: HiFBA, Boosted HiFBA and BPG.
    RunNmf {
        #[command(flatten)]
        common: Common,
        /// Nonnegative data matrix as headerless CSV.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Accept kernel parameters that break relative smoothness.
        #[arg(long)]
        force: bool,
    },
    /// Majorant, paraconcavity and envelope suites; prints a JSON report.
    #[command(visible_alias = "validate-majorant")]
    Validate {
        #[command(flatten)]
        common: Common,
        /// Also check `½x²` against this `L_p`.
        #[arg(long)]
        faulty_lp: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long, conflicts_with = "budget_iters")]
    budget_secs: Option<f64>,
    #[arg(long)]
    budget_iters: Option<usize>,
    /// Write zero wall times so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Solvers to run, e.g. `boosted,sg_gdss`.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<String>>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::for_experiment(experiment),
        };
        if cfg.experiment != experiment {
            return Err(HarnessError::Config(format!(
                "config is for the {:?} experiment",
                cfg.experiment
            )));
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seeds) = &self.seed {
            cfg.seeds = seeds.clone();
        }
        if let Some(s) = self.budget_secs {
            cfg.budget.seconds = Some(s);
            cfg.budget.iterations = None;
        }
        if let Some(k) = self.budget_iters {
            cfg.budget.iterations = Some(k);
            cfg.budget.seconds = None;
        }
        if self.no_timing {
            cfg.record_timing = false;
        }
        if let Some(names) = &self.solvers {
            cfg.solvers.names = names
                .iter()
                .map(|s| SolverName::parse(s))
                .collect::<Result<_>>()?;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::RunInverse {
            common,
            q,
            m,
            n,
            snr_power,
        } => {
            let mut cfg = common.resolve(Experiment::Inverse)?;
            if let Some(q) = q {
                cfg.inverse.q = q;
            }
            if let Some(m) = m {
                cfg.inverse.m = m;
            }
            if let Some(n) = n {
                cfg.inverse.n = n;
            }
            cfg.inverse.snr_power |= snr_power;
            let report = inverse::run_inverse(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
            Ok(0)
        }
        Command::RunNmf {
            common,
            data,
            m,
            n,
            rank,
            lambda,
            force,
        } => {
            let mut cfg = common.resolve(Experiment::Nmf)?;
            if data.is_some() {
                cfg.nmf.data = data;
            }
            if let Some(m) = m {
                cfg.nmf.m = m;
            }
            if let Some(n) = n {
                cfg.nmf.n = n;
            }
            if let Some(r) = rank {
                cfg.nmf.rank = r;
            }
            if let Some(l) = lambda {
                cfg.nmf.lambda = l;
            }
            cfg.nmf.force |= force;
            let report = nmf::run_nmf(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
            Ok(0)
        }
        Command::Validate {
            common,
            faulty_lp,
            samples,
        } => {
            let mut cfg = common.resolve(Experiment::Validate)?;
            if faulty_lp.is_some() {
                cfg.validate.faulty_lp = faulty_lp;
            }
            if let Some(s) = samples {
                cfg.validate.samples = s;
            }
            cfg.validate()?;
            let report = validate::run_validate(&cfg)?;
            let path = cfg.output_dir.join("validate.json");
            write_json(&path, &report)?;
            write_manifest(&cfg.output_dir, "validate", &cfg, &[path])?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.passed {
                Ok(0)
            } else {
                eprintln!(
                    r#"{{"error":"validation","message":"one or more property checks failed"}}"#
                );
                Ok(2)
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
