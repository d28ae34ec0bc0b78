use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use qrm_tomo::experiment::{
    compare_methods, run_test, summary, write_metrics_csv, ExperimentResult, Method, Problem, RunConfig,
};
use qrm_tomo::export;
use qrm_tomo::theory::{
    carleman_sweep, convergence_study, error_ratios, loglog_slope, random_test_functions, CARLEMAN_SAMPLES,
};

#[derive(Parser)]
#[command(name = "qrm-tomo", version, about = "Incomplete-data tomography: quasi-reversibility vs filtered back projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct one test with one method.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "qrm")]
        method: Method,
    },
    /// Reconstruct one test with both methods and write a merged table.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Carleman estimate sweep and convergence study.
    Theory {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        /// Noise levels for the convergence study.
        #[arg(long, value_delimiter = ',', default_values_t = [0.04, 0.02, 0.01])]
        deltas: Vec<f64>,
    },
    /// Tests 1-4 with both methods at the published noise levels.
    All {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Test number (1-4).
    #[arg(long = "test")]
    test_id: Option<u32>,
    /// Relative noise level, e.g. 0.05.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Full-size lattice (T_x = 150, N = 15).
    #[arg(long)]
    full_scale: bool,
    /// Extra overrides, e.g. `--set eps1=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(t) = self.test_id {
            cfg.test_id = t;
        }
        if let Some(n) = self.noise {
            cfg.noise = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

fn write_table(dir: &Path, name: &str, results: &[ExperimentResult]) -> Result<()> {
    let mut out = export::create(&dir.join(name))?;
    write_metrics_csv(results, &mut out)?;
    out.flush()?;
    Ok(())
}

fn report(dir: &Path, results: &[ExperimentResult]) -> Result<()> {
    let text = summary(results);
    print!("{text}");
    std::fs::write(dir.join("summary.txt"), text)?;
    Ok(())
}

fn theory(out_dir: &Path, seed: u64, deltas: &[f64]) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let funcs = random_test_functions(100, 20, seed);
    let lambdas = [1.0, 2.0, 5.0, 10.0];
    let entries = carleman_sweep(&funcs, &lambdas, 1.0, 3.0, CARLEMAN_SAMPLES)?;
    let mut out = export::create(&out_dir.join("carleman.csv"))?;
    writeln!(out, "function,lambda,lhs,rhs,slack,rel_slack,quad_error")?;
    for (k, e) in entries.iter().enumerate() {
        writeln!(
            out,
            "{},{},{:.10e},{:.10e},{:.10e},{:.6e},{:.3e}",
            k / lambdas.len(),
            e.lambda,
            e.lhs,
            e.rhs,
            e.slack,
            e.rel_slack,
            e.quad_error
        )?;
    }
    out.flush()?;
    let worst = entries.iter().map(|e| e.rel_slack).fold(f64::INFINITY, f64::min);
    println!("carleman: {} cases, min relative slack {worst:.3e}", entries.len());

    let problem = Problem::new(&RunConfig::default())?;
    let rows = convergence_study(&problem, deltas, seed)?;
    let mut out = export::create(&out_dir.join("convergence.csv"))?;
    writeln!(out, "delta,eps,error,clean_norm")?;
    for r in &rows {
        writeln!(out, "{},{},{:.6e},{:.6e}", r.delta, r.eps, r.error, r.clean_norm)?;
        println!("delta {:<6} eps {:<8} error {:.4e}", r.delta, r.eps, r.error);
    }
    out.flush()?;
    println!("ratios {:?}, log-log slope {:.3}", error_ratios(&rows), loglog_slope(&rows));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { common, method } => {
            let cfg = common.config()?;
            let res = run_test(&cfg, method, Some(&common.out_dir))?;
            report(&common.out_dir, std::slice::from_ref(&res))?;
        }
        Command::Compare { common } => {
            let cfg = common.config()?;
            let qrm = run_test(&cfg, Method::Qrm, Some(&common.out_dir))?;
            let fbp = run_test(&cfg, Method::Fbp, Some(&common.out_dir))?;
            let path = common.out_dir.join(format!("test{}_compare_noise{}.csv", cfg.test_id, cfg.noise));
            let mut out = export::create(&path)?;
            compare_methods(&qrm, &fbp, &mut out)?;
            out.flush()?;
            report(&common.out_dir, &[qrm, fbp])?;
        }
        Command::Theory { out_dir, seed, deltas } => theory(&out_dir, seed, &deltas)?,
        Command::All { common } => {
            let base = common.config()?;
            let mut results = Vec::new();
            for test_id in 1..=4 {
                for (method, noise) in [(Method::Qrm, 0.05), (Method::Qrm, 0.15), (Method::Fbp, 0.05)] {
                    let cfg = RunConfig { test_id, noise, ..base.clone() };
                    info!("test {test_id}, {}, noise {noise}", method.tag());
                    results.push(run_test(&cfg, method, Some(&common.out_dir))?);
                }
            }
            write_table(&common.out_dir, "table.csv", &results)?;
            report(&common.out_dir, &results)?;
        }
    }
    Ok(())
}
