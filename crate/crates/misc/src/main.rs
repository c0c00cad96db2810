use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use misc::config::{Method, RateSource, StudyConfig};
use misc::fit::fit_rates;
use misc::plot::{emit_plot, read_study_csv};
use misc::setfile;
use misc::study::{pde_study, resolve_schedule, sgsc_envelope, write_csv, ConvergenceRecord};
use misc_core::index_sets::{
    aposteriori_set, apriori_set, mlsc_apriori_set, scc_set, sgsc_set, DiagonalEvaluator,
};
use misc_core::estimator::{estimate, estimate_single_level, measured_set_work, required_evaluations};
use misc_core::{Evaluator, Mode, SurplusCache};

/// Multi-index stochastic collocation for elliptic PDEs with random
/// coefficients: rate fitting, index sets, estimates and convergence studies.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-field overrides.
#[derive(Args)]
struct Overrides {
    /// TOML study config; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    n_vars: Option<usize>,
    #[arg(long, global = true)]
    h0: Option<f64>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long, global = true)]
    dof_cap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    rate_source: Option<SourceArg>,
    #[arg(long, global = true, value_delimiter = ',')]
    g: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Increasing a-priori levels L.
    #[arg(long, global = true, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    #[arg(long, global = true)]
    points: Option<usize>,
    #[arg(long, global = true)]
    step: Option<f64>,
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    sgsc_levels: Option<Vec<u32>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Table,
    Fitted,
    Lemma,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Surplus,
    Combination,
}

#[derive(Subcommand)]
enum Command {
    /// Fit r~ and g on the configured problem; emits the config with the rates pinned.
    FitRates {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an index set. MLSC/SCC sets are written collapsed (D=1), SGSC
    /// sets as the stochastic set alone (D=0).
    BuildSet {
        #[arg(long)]
        method: Method,
        /// L (misc-apriori, mlsc), epsilon (misc-aposteriori), w (scc) or
        /// the stochastic exponent bound (sgsc).
        #[arg(long)]
        threshold: f64,
        /// Search-buffer level for misc-aposteriori.
        #[arg(long)]
        buffer: Option<f64>,
        /// Fixed diagonal spatial level for sgsc.
        #[arg(long)]
        alpha: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate E[F] over a set file.
    Estimate {
        #[arg(long)]
        set: PathBuf,
        #[arg(long, value_enum, default_value = "combination")]
        mode: ModeArg,
        /// Fixed diagonal spatial level, for D=0 (SGSC) sets.
        #[arg(long)]
        alpha: Option<u32>,
    },
    /// Reference value at the finest schedule level plus the margin.
    Reference {
        /// Where to write the reference set (default: output.reference_set).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the convergence study, writing the CSV and plot script.
    Converge {
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Lower envelope of the per-level SGSC curves of a study CSV.
    Envelope {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot script for a study CSV; the guide curve uses the configured rates.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Overrides {
    fn load(&self) -> anyhow::Result<StudyConfig> {
        let mut c = match &self.config {
            Some(path) => StudyConfig::load(path)?,
            None => StudyConfig::default(),
        };
        let p = &mut c.problem;
        if let Some(v) = self.dim {
            p.dim = v;
        }
        if let Some(v) = self.n_vars {
            p.n_vars = v;
        }
        if let Some(v) = self.h0 {
            p.h0 = v;
        }
        if let Some(v) = self.sigma {
            p.sigma = v;
        }
        if let Some(v) = &self.x0 {
            p.x0 = Some(v.clone());
        }
        if let Some(v) = self.dof_cap {
            p.dof_cap = v;
        }
        if let Some(v) = self.rate_source {
            c.rates.source = match v {
                SourceArg::Table => RateSource::Table,
                SourceArg::Fitted => RateSource::Fitted,
                SourceArg::Lemma => RateSource::Lemma,
            };
        }
        if let Some(v) = &self.g {
            c.rates.g = Some(v.clone());
        }
        let s = &mut c.study;
        if let Some(v) = &self.methods {
            s.methods = v.clone();
        }
        if let Some(v) = &self.schedule {
            s.schedule = v.clone();
        }
        if let Some(v) = self.points {
            s.points = v;
        }
        if let Some(v) = self.step {
            s.step = Some(v);
        }
        if let Some(v) = self.margin {
            s.margin = Some(v);
        }
        if let Some(v) = &self.sgsc_levels {
            s.sgsc_levels = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fit(config: &StudyConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let eval = misc::evaluator::PdeEvaluator::new(
        config.problem.field()?,
        config.problem.qoi()?,
        config.problem.h0,
        config.problem.dof_cap,
    )?;
    let gamma = config.rates.gamma_tilde.clone().unwrap_or_else(|| vec![1.0; config.problem.dim]);
    let mut cache = SurplusCache::new();
    let report = fit_rates(&eval, config.problem.dim, config.problem.n_vars, &gamma, &config.rates.fit, &mut cache)?;
    eprintln!("r~ = {:?}", report.rates.r_tilde());
    eprintln!("g  = {:?}", report.rates.gs);
    eprintln!("product check: max |log10 ratio| = {:.3}", report.product.max_abs_log10);
    let mut pinned = config.clone();
    pinned.pin_rates(&report.rates, RateSource::Fitted);
    write_or_print(out, &pinned.to_toml()?)
}

fn build_set(config: &StudyConfig, method: Method, threshold: f64, buffer: Option<f64>, alpha: Option<u32>, out: &Path) -> anyhow::Result<()> {
    let rates = match config.rate_model() {
        Ok(r) => r,
        Err(_) => pde_study(config)?.rates,
    };
    let set = match method {
        Method::MiscApriori => apriori_set(threshold, &rates)?,
        Method::MiscAposteriori => {
            let level = buffer.context("misc-aposteriori needs --buffer <L>")?;
            let study = pde_study(config)?;
            let buffer = apriori_set(level, &rates)?;
            for idx in &buffer {
                check_cap(study.eval.dof(idx.alpha()), config.problem.dof_cap)?;
            }
            let mut cache = SurplusCache::new();
            aposteriori_set(threshold, &buffer, &study.eval, &mut cache, &rates)?
        }
        Method::Mlsc => mlsc_apriori_set(threshold, &rates)?,
        Method::Scc => {
            ensure!(threshold >= 0.0 && threshold.fract() == 0.0, "scc needs an integer threshold w");
            scc_set(threshold as u32, rates.stochastic_dim())?
        }
        Method::Sgsc => {
            let l = alpha.context("sgsc needs --alpha <level>")?;
            sgsc_set(&vec![l; rates.spatial_dim()], threshold, &rates)?.betas
        }
    };
    setfile::write(out, &set)?;
    eprintln!("{} indices -> {}", set.len(), out.display());
    Ok(())
}

fn estimate_file(config: &StudyConfig, path: &Path, mode: ModeArg, alpha: Option<u32>) -> anyhow::Result<()> {
    let set = setfile::read(path)?;
    let study = pde_study(config)?;
    let d = config.problem.dim;
    let mode = match mode {
        ModeArg::Surplus => Mode::Surplus,
        ModeArg::Combination => Mode::Combination,
    };
    let n = config.problem.n_vars;
    ensure!(set.stochastic_dim() == n, "set has N={}, the problem has {n}", set.stochastic_dim());
    let mut cache = SurplusCache::new();
    let (value, work) = match set.spatial_dim() {
        0 => {
            let l = alpha.context("D=0 sets need --alpha <level>")?;
            let alpha = vec![l; d];
            check_cap(study.eval.dof(&alpha), config.problem.dof_cap)?;
            let value = estimate_single_level(&alpha, &set, &study.eval, &mut cache)?;
            let points: usize = required_evaluations(&set, Mode::Combination)?.values().sum();
            (value, study.eval.dof(&alpha) * points as u64)
        }
        s if s == d => {
            for idx in &set {
                check_cap(study.eval.dof(idx.alpha()), config.problem.dof_cap)?;
            }
            (estimate(&set, &study.eval, mode, &mut cache)?, measured_set_work(&set, mode, &study.eval)?)
        }
        1 => {
            let diag = DiagonalEvaluator { inner: &study.eval, spatial: d };
            check_cap(diag.dof(&[set.max_levels()[0]]), config.problem.dof_cap)?;
            (estimate(&set, &diag, mode, &mut cache)?, measured_set_work(&set, mode, &diag)?)
        }
        s => bail!("set has D={s}, the problem has D={d}"),
    };
    println!("estimate = {value:.16e}");
    println!("set_size = {}", set.len());
    println!("work_measured = {work}");
    Ok(())
}

fn check_cap(dof: u64, cap: usize) -> anyhow::Result<()> {
    ensure!(dof <= cap as u64, "{dof} unknowns exceed the dof cap {cap}");
    Ok(())
}

fn reference(config: &StudyConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let mut study = pde_study(config)?;
    let schedule = resolve_schedule(&study, config)?;
    let level = schedule.last().unwrap() + study.margin();
    let r = study.reference(level)?;
    println!("level = {}", r.level);
    println!("reference = {:.16e}", r.value);
    println!("set_size = {}", r.set.len());
    if let Some(path) = out.or(config.output.reference_set.as_deref()) {
        setfile::write(path, &r.set)?;
    }
    Ok(())
}

/// Returns the number of per-threshold failures.
fn converge(config: &StudyConfig, csv: Option<&Path>, plot: Option<&Path>) -> anyhow::Result<usize> {
    let mut study = pde_study(config)?;
    let schedule = resolve_schedule(&study, config)?;
    let report = study.run(&config.study.methods, &schedule, &config.study.sgsc_levels)?;
    eprintln!(
        "reference {:.12e} at L = {:.4} ({} indices)",
        report.reference.value,
        report.reference.level,
        report.reference.set.len()
    );
    match csv.or(config.output.csv.as_deref()) {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&report.records, file)?;
            if let Some(script) = plot.or(config.output.plot.as_deref()) {
                emit_plot(path, script, Some(&config.complexity()?))?;
            }
        }
        None => {
            ensure!(plot.is_none() && config.output.plot.is_none(), "a plot needs a CSV path");
            write_csv(&report.records, std::io::stdout().lock())?;
        }
    }
    if let Some(path) = &config.output.reference_set {
        setfile::write(path, &report.reference.set)?;
    }
    for f in &report.failures {
        eprintln!("error: {} at threshold {}: {}", f.method, f.threshold, f.message);
    }
    Ok(report.failures.len())
}

fn envelope(csv: &Path, out: &Path) -> anyhow::Result<()> {
    let records = read_study_csv(csv)?;
    let mut levels: Vec<&str> = records.iter().map(|r| r.method.as_str()).filter(|m| m.starts_with("sgsc@")).collect();
    levels.sort();
    levels.dedup();
    ensure!(!levels.is_empty(), "{}: no sgsc@<level> rows", csv.display());
    let curves: Vec<Vec<(f64, f64)>> = levels
        .iter()
        .map(|l| {
            let mut c: Vec<(f64, f64)> = records.iter().filter(|r| r.method == *l).map(|r| (r.work_model, r.abs_error)).collect();
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
            c
        })
        .collect();
    let env: Vec<ConvergenceRecord> = sgsc_envelope(&curves)
        .into_iter()
        .map(|(w, e)| ConvergenceRecord {
            method: "sgsc".into(),
            threshold: None,
            set_size: None,
            work_model: w,
            work_measured: None,
            estimate: None,
            abs_error: e,
        })
        .collect();
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(&env, file)
}

fn run(cli: Cli) -> anyhow::Result<usize> {
    let config = cli.overrides.load()?;
    match cli.command {
        Command::FitRates { out } => fit(&config, out.as_deref())?,
        Command::BuildSet { method, threshold, buffer, alpha, out } => build_set(&config, method, threshold, buffer, alpha, &out)?,
        Command::Estimate { set, mode, alpha } => estimate_file(&config, &set, mode, alpha)?,
        Command::Reference { out } => reference(&config, out.as_deref())?,
        Command::Converge { csv, plot } => return converge(&config, csv.as_deref(), plot.as_deref()),
        Command::Envelope { csv, out } => envelope(&csv, &out)?,
        Command::Plot { csv, out } => emit_plot(&csv, &out, Some(&config.complexity()?))?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
