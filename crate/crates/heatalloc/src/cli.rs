//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use heatalloc_core::domain::{validate_dataset, Dataset, DeviceKind, Method};
use heatalloc_core::estimator::{self, default_grid};
use heatalloc_core::metrics::{global_indicators, Subsets};
use heatalloc_core::pipeline::{self, calibrate, Consumption, LambdaPolicy};
use heatalloc_core::sensitivity::{sensitivity_suite, Axis, SensitivityOptions};
use heatalloc_core::simulator::{simulate_season, GroundTruth, ScenarioConfig};
use heatalloc_core::uncertainty::UncertaintyConfig;
use log::{info, warn};

use crate::error::{Error, Result};
use crate::io;
use crate::report::{self, ReportFile};

#[derive(Debug, Parser)]
#[command(name = "heatalloc", version, about = "Calibrated heat cost allocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a heating season and write its dataset and ground truth.
    Simulate {
        /// Scenario configuration, JSON. Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate the radiator parameters of a dataset.
    Estimate {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "hca")]
        method: MethodArg,
        #[command(flatten)]
        lambda: LambdaArg,
        /// Also write the L-curve table.
        #[arg(long)]
        lcurve: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the L-curve of a dataset and print its corner.
    Lcurve {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "hca")]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Allocation reports of the nominal allocator and the calibrated methods.
    Evaluate {
        #[command(flatten)]
        input: Input,
        /// CSV of radiator_id,subset_id. Defaults to the registry's subsets.
        #[arg(long)]
        subsets: Option<PathBuf>,
        /// Calibrated methods to report. Defaults to those the dataset supports.
        #[arg(long, value_enum)]
        method: Vec<MethodArg>,
        #[arg(long, value_enum, default_value = "auto")]
        reference: ReferenceArg,
        /// Report label every report is compared against.
        #[arg(long, default_value = pipeline::HCA_NOMINAL)]
        baseline: String,
        #[command(flatten)]
        lambda: LambdaArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one axis of a simulated scenario.
    Sensitivity {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated levels.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        #[arg(long, value_enum, default_value = "hca")]
        method: MethodArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the comparison table of an evaluation.
    Report {
        /// Directory holding report.json, or the file itself.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Input {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct LambdaArg {
    /// Regularization parameter, or "auto" for the L-curve corner.
    #[arg(long, default_value = "auto", value_parser = parse_lambda)]
    pub lambda: Lambda,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lambda {
    Auto,
    Fixed(f64),
}

fn parse_lambda(s: &str) -> std::result::Result<Lambda, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Lambda::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(Lambda::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a non-negative number, got {s:?}")),
    }
}

impl Lambda {
    fn policy(self) -> LambdaPolicy {
        match self {
            Lambda::Auto => LambdaPolicy::auto(),
            Lambda::Fixed(v) => LambdaPolicy::Fixed(v),
        }
    }

    /// Like [`Lambda::policy`], but a curve without a corner falls back to
    /// the smallest grid value.
    fn lenient_policy(self) -> LambdaPolicy {
        match self {
            Lambda::Auto => {
                let grid = default_grid();
                LambdaPolicy::LCurve {
                    fallback: grid.first().copied(),
                    grid,
                }
            }
            Lambda::Fixed(v) => LambdaPolicy::Fixed(v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Hca,
    Stv,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Hca => Method::Hca,
            MethodArg::Stv => Method::Stv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    /// Ground truth when the dataset has one, radiator meters otherwise.
    Auto,
    Truth,
    Meters,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Frequency,
    HeatLoss,
    PriorOffset,
    PriorScatter,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Frequency => Axis::Frequency,
            AxisArg::HeatLoss => Axis::HeatLoss,
            AxisArg::PriorOffset => Axis::PriorOffset,
            AxisArg::PriorScatter => Axis::PriorScatter,
        }
    }
}

/// Scenario from `path`, or the defaults.
pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let cfg: ScenarioConfig = io::read_json(path)?;
    check_config(&cfg, path)?;
    Ok(cfg)
}

fn check_config(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    match cfg.validate() {
        Ok(()) => Ok(()),
        Err(heatalloc_core::Error::InvalidConfig { field, reason }) => Err(Error::Config {
            path: path.into(),
            field,
            reason,
        }),
        Err(e) => Err(e.into()),
    }
}

fn with_seed(mut cfg: ScenarioConfig, seed: Option<u64>) -> ScenarioConfig {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}

/// Reads a dataset and checks it for `method`.
pub fn load_dataset(dir: &Path, method: Option<Method>) -> Result<Dataset> {
    let d = io::read_dataset(dir)?;
    let v = validate_dataset(&d, method);
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    Ok(d)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let path = config.as_deref();
            let cfg = with_seed(load_config(path)?, seed);
            if let Some(p) = path {
                check_config(&cfg, p)?;
            }
            simulate(&cfg, &out)
        }
        Command::Estimate {
            input,
            method,
            lambda,
            lcurve,
            out,
        } => {
            let m = Method::from(method);
            let d = load_dataset(&input.data, Some(m))?;
            let cal = calibrate(&d, m, &lambda.lambda.policy())?;
            for id in report::EstimateFile::of(&cal).negative {
                warn!("negative estimate for {id}");
            }
            report::write_estimate(&out, &cal)?;
            if lcurve {
                let pts = match &cal.lcurve {
                    Some(p) => p.clone(),
                    None => estimator::lcurve(&estimator::assemble(&d, m)?, &cal.prior, &default_grid())?,
                };
                report::write_lcurve(&out.join(report::LCURVE_CSV), &pts)?;
            }
            println!(
                "{m}: {} radiators, {} samplings, lambda {}",
                cal.estimate.theta_hat.len(),
                cal.estimate.n_samplings,
                io::fmt_num(cal.estimate.lambda)
            );
            Ok(())
        }
        Command::Lcurve { input, method, out } => {
            let m = Method::from(method);
            let d = load_dataset(&input.data, Some(m))?;
            let sm = estimator::assemble(&d, m)?;
            let prior = pipeline::priors(&d, m);
            let grid = default_grid();
            let pts = estimator::lcurve(&sm, &prior, &grid)?;
            report::write_lcurve(&out.join(report::LCURVE_CSV), &pts)?;
            match estimator::lcurve_select(&sm, &prior, &grid) {
                Ok((l, _)) => println!("corner at lambda {}", io::fmt_num(l)),
                Err(e) => println!("{e}"),
            }
            Ok(())
        }
        Command::Evaluate {
            input,
            subsets,
            method,
            reference,
            baseline,
            lambda,
            out,
        } => evaluate(&input.data, subsets.as_deref(), &method, reference, &baseline, lambda.lambda, &out),
        Command::Sensitivity {
            config,
            axis,
            levels,
            method,
            seed,
            out,
        } => {
            let cfg = with_seed(load_config(config.as_deref())?, seed);
            let opts = SensitivityOptions {
                method: method.into(),
                ..SensitivityOptions::default()
            };
            let rows = sensitivity_suite(&cfg, axis.into(), &levels, &opts)?;
            for r in rows.iter().filter(|r| r.lambda_fallback) {
                warn!("level {}: no L-curve corner, lambda {}", r.level, r.lambda);
            }
            report::write_sensitivity(&out, &rows)?;
            for r in &rows {
                println!(
                    "{} MAPE {:.3} (nominal {:.3})",
                    io::fmt_num(r.level),
                    r.indicators.mape,
                    r.baseline_mape
                );
            }
            Ok(())
        }
        Command::Report { input } => {
            let path = if input.is_dir() {
                input.join(report::REPORT_JSON)
            } else {
                input
            };
            let file: ReportFile = io::read_json(&path)?;
            print!("{}", report::comparison_table(&file.reports));
            Ok(())
        }
    }
}

/// Simulates `cfg` into `out` and prints a summary.
pub fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let (dataset, truth) = simulate_season(cfg)?;
    io::write_dataset(out, &dataset, Some(cfg.sampling_frequency))?;
    io::write_json(&out.join(io::GROUND_TRUTH), &truth)?;
    io::write_json(&out.join("scenario.json"), cfg)?;
    let total: f64 = dataset.total_energy_per_period.iter().sum();
    info!("wrote {}", out.display());
    println!(
        "{} periods, {} radiators, {:.3} kWh",
        dataset.periods.len(),
        dataset.radiators.len(),
        total
    );
    Ok(())
}

fn reference_consumption(
    dir: &Path,
    dataset: &Dataset,
    which: ReferenceArg,
    cfg: &UncertaintyConfig,
) -> Result<(String, Consumption)> {
    let truth_path = dir.join(io::GROUND_TRUTH);
    let use_truth = match which {
        ReferenceArg::Truth => true,
        ReferenceArg::Meters => false,
        ReferenceArg::Auto => truth_path.exists(),
    };
    if !use_truth {
        return Ok(("meters".into(), pipeline::metered_reference(dataset, cfg)?));
    }
    let truth: GroundTruth = io::read_json(&truth_path)?;
    let totals = truth.radiator_totals();
    let values = dataset
        .radiators
        .iter()
        .map(|r| {
            truth
                .radiator_ids
                .iter()
                .position(|id| *id == r.id)
                .map(|i| totals[i])
                .ok_or_else(|| Error::parse(&truth_path, format!("no ground truth for {}", r.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = dataset.radiators.iter().map(|r| r.id.clone()).collect();
    Ok(("truth".into(), pipeline::exact_reference(ids, values)))
}

fn default_methods(d: &Dataset) -> Vec<Method> {
    [Method::Hca, Method::Stv]
        .into_iter()
        .filter(|m| {
            let kind = m.device_kind();
            d.radiators.iter().all(|r| d.series_for(&r.id, kind).is_some())
        })
        .collect()
}

fn evaluate(
    data: &Path,
    subsets: Option<&Path>,
    methods: &[MethodArg],
    reference: ReferenceArg,
    baseline: &str,
    lambda: Lambda,
    out: &Path,
) -> Result<()> {
    let d = load_dataset(data, None)?;
    if d.radiators.iter().any(|r| d.series_for(&r.id, DeviceKind::Hca).is_none()) {
        return Err(Error::Usage("the nominal allocator needs an HCA series for every radiator".into()));
    }
    let ids: Vec<&str> = d.radiators.iter().map(|r| r.id.as_str()).collect();
    let subsets = match subsets {
        Some(p) => {
            let s = io::read_subsets(p)?;
            if let Err(e) = s.check(&ids) {
                return Err(Error::parse(p, e));
            }
            s
        }
        None => Subsets::from_assignments(d.radiators.iter().map(|r| (r.id.as_str(), r.subset_id.as_str()))),
    };
    let methods: Vec<Method> = if methods.is_empty() {
        default_methods(&d)
    } else {
        methods.iter().map(|&m| m.into()).collect()
    };
    let ucfg = UncertaintyConfig::default();
    let (ref_label, reference) = reference_consumption(data, &d, reference, &ucfg)?;
    let cmp = pipeline::compare(&d, &reference, &subsets, &lambda.lenient_policy(), &methods, &ucfg)?;
    let mut reports = cmp.reports;
    let base = reports
        .iter()
        .find(|r| r.method == baseline)
        .map(|r| r.errors())
        .ok_or_else(|| Error::Usage(format!("baseline {baseline:?} is not among the reports")))?;
    for r in &mut reports {
        let f_ref: Vec<f64> = r.rows.iter().map(|x| x.reference_fraction).collect();
        r.indicators = global_indicators(&r.errors(), &f_ref, Some(&base))?;
    }
    for b in &cmp.budgets {
        for w in &b.warnings {
            warn!("{}: {w}", b.method);
        }
    }
    for c in &cmp.calibrations {
        if c.lambda_fallback {
            warn!("{}: no L-curve corner, lambda {}", c.method, c.estimate.lambda);
        }
        report::write_estimate(&out.join(c.method.as_str()), c)?;
    }
    let file = ReportFile {
        schema_version: io::SCHEMA_VERSION,
        reference: ref_label,
        baseline: Some(baseline.into()),
        reports,
        budgets: cmp.budgets,
    };
    report::write_report(out, &file)?;
    print!("{}", report::comparison_table(&file.reports));
    Ok(())
}
