//! Command-line arguments. Every command is serializable so that its manifest
//! can replay it.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sppc_core::{CvMode, Measure};

#[derive(Debug, Parser)]
#[command(name = "sppc", version, about = "Valuation of stock-price and performance-conditioned awards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Price an award contract.
    Price(PriceArgs),
    /// Mean and covariance of the period-product coordinates of a contract.
    Moments(MomentsArgs),
    /// Sample statistics and calibrated parameters from accounting data.
    Estimate(EstimateArgs),
    /// Compare current-standards and theoretical-price compensation cost.
    CompareStandards(StandardsArgs),
    /// Correlation of period-sums and of their log ratios against period count.
    Fig1(Fig1Args),
    /// Simulate one accounting dataset of period-sums from a model.
    Series(SeriesArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Price(_) => "price",
            Command::Moments(_) => "moments",
            Command::Estimate(_) => "estimate",
            Command::CompareStandards(_) => "compare-standards",
            Command::Fig1(_) => "fig1",
            Command::Series(_) => "series",
            Command::Rerun(_) => "rerun",
        }
    }

    pub fn out_dir(&self) -> Option<&PathBuf> {
        match self {
            Command::Price(a) => Some(&a.out),
            Command::Moments(a) => Some(&a.out),
            Command::Estimate(a) => Some(&a.out),
            Command::CompareStandards(a) => Some(&a.out),
            Command::Fig1(a) => Some(&a.out),
            Command::Series(a) => Some(&a.out),
            Command::Rerun(_) => None,
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Price(a) => a.out = dir,
            Command::Moments(a) => a.out = dir,
            Command::Estimate(a) => a.out = dir,
            Command::CompareStandards(a) => a.out = dir,
            Command::Fig1(a) => a.out = dir,
            Command::Series(a) => a.out = dir,
            Command::Rerun(_) => {}
        }
    }

    /// Input files read by the command.
    pub fn inputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Price(a) => a.files.iter_mut().collect(),
            Command::Moments(a) => a.files.iter_mut().collect(),
            Command::CompareStandards(a) => a.files.iter_mut().collect(),
            Command::Series(a) => a.files.iter_mut().collect(),
            Command::Estimate(a) => {
                let mut v: Vec<&mut PathBuf> = vec![&mut a.data];
                v.extend(a.template.iter_mut());
                v.extend(a.daily_prices.iter_mut());
                v
            }
            Command::Fig1(_) | Command::Rerun(_) => Vec::new(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Price(a) => Some(a.sim.seed),
            Command::CompareStandards(a) => Some(a.sim.seed),
            Command::Fig1(a) => Some(a.seed),
            Command::Series(a) => Some(a.seed),
            Command::Estimate(a) => a.seed,
            Command::Moments(_) | Command::Rerun(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureArg {
    Physical,
    Optimal,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Physical => Measure::Physical,
            MeasureArg::Optimal => Measure::Optimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Plain,
    Cv,
    Quasi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvArg {
    /// Control coefficient fixed at one.
    Unit,
    /// Coefficient regressed on a pilot sample.
    Regression,
}

impl From<CvArg> for CvMode {
    fn from(c: CvArg) -> Self {
        match c {
            CvArg::Unit => CvMode::UnitCoefficient,
            CvArg::Regression => CvMode::RegressionCoefficient,
        }
    }
}

fn seed_parser() -> clap::builder::RangedU64ValueParser<u64> {
    clap::value_parser!(u64).range(0..=i64::MAX as u64)
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimArgs {
    /// Number of simulated paths.
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Maximum simulation step in years.
    #[arg(long, default_value_t = 1.0 / 256.0)]
    pub step: f64,
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    pub seed: u64,
    /// Pricing measure.
    #[arg(long, value_enum, default_value_t = MeasureArg::Optimal)]
    pub measure: MeasureArg,
    /// Pricing method; defaults to cv, or to the scenario's choice.
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodArg>,
    /// Control-variate coefficient.
    #[arg(long, value_enum, default_value_t = CvArg::Unit)]
    pub cv_coefficient: CvArg,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PriceArgs {
    /// TOML files holding the [model] and [contract] sections.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MomentsArgs {
    /// TOML files holding the [model] and [contract] sections.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = MeasureArg::Optimal)]
    pub measure: MeasureArg,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticArg {
    /// Sample statistics only.
    Sample,
    /// Sample statistics plus control-variate corrected calibration.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// CSV of period-sums with header `start,end,<variable>...`.
    pub data: PathBuf,
    /// TOML files holding the [calibration] section.
    pub template: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = StatisticArg::Corrected)]
    pub statistic: StatisticArg,
    /// Also report Olkin–Pratt adjusted correlations.
    #[arg(long)]
    pub olkin_pratt: bool,
    /// Trial datasets per evaluation; overrides the template.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Calibration tolerance; overrides the template.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Trial seed; overrides the template.
    #[arg(long, value_parser = seed_parser())]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Trial simulation step; overrides the template.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// CSV of stock prices with header `time,<stock>...`, sampled at a fixed interval.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub daily_prices: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StandardsArgs {
    /// TOML files holding the [model], [contract] and [scenario] sections.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Fig1Args {
    /// Instantaneous correlation of the stock and the flow.
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub rho: f64,
    #[arg(long, default_value_t = 20_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 40)]
    pub max_periods: usize,
    #[arg(long, default_value_t = 4)]
    pub min_periods: usize,
    /// Accounting period length in years.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    #[arg(long, default_value_t = 1.0 / 256.0)]
    pub step: f64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub stock_drift: f64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub flow_drift: f64,
    #[arg(long, default_value_t = 0.2)]
    pub stock_vol: f64,
    #[arg(long, default_value_t = 0.2)]
    pub flow_vol: f64,
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SeriesArgs {
    /// TOML files holding the [model] section.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub periods: usize,
    /// Period length in years.
    #[arg(long, default_value_t = 0.25)]
    pub period_length: f64,
    /// Start of the first period.
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    /// Index of the simulated path.
    #[arg(long, default_value_t = 0)]
    pub path: u64,
    #[arg(long, default_value_t = 1.0 / 64.0)]
    pub step: f64,
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Default)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
