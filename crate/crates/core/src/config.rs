//! TOML configuration. One file may hold any of the `[model]`, `[contract]`,
//! `[scenario]` and `[calibration]` sections; variables are referenced by name.
//!
//! ```toml
//! [model]
//! horizon = 3.0
//! rate = 0.02
//! correlation = [[1.0, 0.4], [0.4, 1.0]]
//!
//! [[model.stocks]]
//! name = "issuer"
//! initial = 100.0
//! drift = 0.08
//! dividend_yield = 0.01
//! vol = 0.3
//!
//! [[model.perf_vars]]
//! name = "sales"
//! initial = 50.0
//! drift = 0.05
//! vol = 0.2
//!
//! [contract]
//! vesting_date = 1.0
//! payment_date = 3.0
//! shares = 1000.0
//! payoff = { type = "stock_grant", stock = "issuer" }
//!
//! [[contract.conditions]]
//! variable = "sales"
//! type = "period_sum"
//! start = 0.0
//! end = 1.0
//! goal = 52.0
//! ```

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::accounting::ScenarioInputs;
use crate::contract::{AwardContract, ConditionKind, PayoffKind, PerformanceCondition, StrikeRule};
use crate::curve::ParamCurve;
use crate::error::{Result, SppcError};
use crate::estimation::{
    drift_term_structure, CalibrationConfig, FlatFactor, FlatModelSpec, FreeParameter, TrialConfig,
};
use crate::model::{FactorInput, MarketModel, OptimalPortfolio, PerfVariable, Stock};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<ContractConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioInputs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationFile>,
}

impl ConfigFile {
    /// Parses TOML; parse errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SppcError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SppcError::Parse(e.to_string()))
    }

    pub fn model(&self) -> Result<&ModelConfig> {
        self.model.as_ref().ok_or_else(|| SppcError::invalid("model", "missing [model] section"))
    }

    pub fn contract(&self) -> Result<&ContractConfig> {
        self.contract.as_ref().ok_or_else(|| SppcError::invalid("contract", "missing [contract] section"))
    }

    pub fn scenario(&self) -> Result<&ScenarioInputs> {
        self.scenario.as_ref().ok_or_else(|| SppcError::invalid("scenario", "missing [scenario] section"))
    }

    pub fn calibration(&self) -> Result<&CalibrationFile> {
        self.calibration.as_ref().ok_or_else(|| SppcError::invalid("calibration", "missing [calibration] section"))
    }
}

fn zero_curve() -> ParamCurve {
    ParamCurve::zero()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StockConfig {
    pub name: String,
    pub initial: f64,
    pub drift: ParamCurve,
    #[serde(default = "zero_curve")]
    pub dividend_yield: ParamCurve,
    /// Total volatility, combined with `model.correlation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol: Option<ParamCurve>,
    /// Explicit loadings on every Brownian coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol_row: Option<Vec<ParamCurve>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfConfig {
    pub name: String,
    pub initial: f64,
    pub drift: ParamCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol: Option<ParamCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol_row: Option<Vec<ParamCurve>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimalPortfolioConfig {
    pub excess_return: ParamCurve,
    /// Single-regression beta per performance variable name.
    pub betas: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    pub rate: ParamCurve,
    /// Correlation of all variables, stocks first; requires `vol` everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub stocks: Vec<StockConfig>,
    #[serde(default)]
    pub perf_vars: Vec<PerfConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_portfolio: Option<OptimalPortfolioConfig>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<MarketModel> {
        let m = self.stocks.len();
        let d = m + self.perf_vars.len();
        let perf_names: Vec<&str> = self.perf_vars.iter().map(|p| p.name.as_str()).collect();
        let optimal = match &self.optimal_portfolio {
            Some(op) => {
                for name in op.betas.keys() {
                    if !perf_names.contains(&name.as_str()) {
                        return Err(SppcError::invalid(
                            "model.optimal_portfolio.betas",
                            format!("unknown performance variable {name:?}"),
                        ));
                    }
                }
                Some(OptimalPortfolio {
                    excess_return: op.excess_return.clone(),
                    betas: perf_names.iter().map(|n| op.betas.get(*n).copied().unwrap_or(0.0)).collect(),
                })
            }
            None => None,
        };
        let has_rows =
            self.stocks.iter().any(|s| s.vol_row.is_some()) || self.perf_vars.iter().any(|p| p.vol_row.is_some());
        if has_rows {
            if self.correlation.is_some() {
                return Err(SppcError::invalid(
                    "model.correlation",
                    "cannot be combined with explicit vol_row entries",
                ));
            }
            let row =
                |name: &str, vol: &Option<ParamCurve>, row: &Option<Vec<ParamCurve>>| -> Result<Vec<ParamCurve>> {
                    match (vol, row) {
                        (None, Some(r)) => Ok(r.clone()),
                        _ => Err(SppcError::invalid(
                            format!("model variable {name:?}"),
                            "give vol_row for every variable, or vol for every variable",
                        )),
                    }
                };
            let stocks = self
                .stocks
                .iter()
                .map(|s| {
                    Ok(Stock {
                        name: s.name.clone(),
                        initial_price: s.initial,
                        dividend_yield: s.dividend_yield.clone(),
                        drift: s.drift.clone(),
                        vol_row: row(&s.name, &s.vol, &s.vol_row)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let perf_vars = self
                .perf_vars
                .iter()
                .map(|p| {
                    Ok(PerfVariable {
                        name: p.name.clone(),
                        initial_level: p.initial,
                        drift: p.drift.clone(),
                        vol_row: row(&p.name, &p.vol, &p.vol_row)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            return MarketModel::new(self.horizon, self.rate.clone(), stocks, perf_vars, optimal);
        }
        let vol = |name: &str, v: &Option<ParamCurve>| {
            v.clone().ok_or_else(|| SppcError::invalid(format!("model variable {name:?}"), "missing vol or vol_row"))
        };
        let stocks = self
            .stocks
            .iter()
            .map(|s| {
                Ok(FactorInput {
                    name: s.name.clone(),
                    initial: s.initial,
                    drift: s.drift.clone(),
                    vol: vol(&s.name, &s.vol)?,
                    dividend_yield: s.dividend_yield.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let perf_vars = self
            .perf_vars
            .iter()
            .map(|p| {
                Ok(FactorInput {
                    name: p.name.clone(),
                    initial: p.initial,
                    drift: p.drift.clone(),
                    vol: vol(&p.name, &p.vol)?,
                    dividend_yield: ParamCurve::zero(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let corr = match &self.correlation {
            Some(rows) => matrix("model.correlation", rows, d)?,
            None => DMatrix::identity(d, d),
        };
        MarketModel::from_vols_and_correlation(self.horizon, self.rate.clone(), stocks, perf_vars, &corr, optimal)
    }

    /// Configuration with explicit volatility rows for an existing model.
    pub fn from_model(model: &MarketModel) -> Self {
        ModelConfig {
            horizon: model.horizon(),
            rate: model.rate().clone(),
            correlation: None,
            stocks: model
                .stocks()
                .iter()
                .map(|s| StockConfig {
                    name: s.name.clone(),
                    initial: s.initial_price,
                    drift: s.drift.clone(),
                    dividend_yield: s.dividend_yield.clone(),
                    vol: None,
                    vol_row: Some(s.vol_row.clone()),
                })
                .collect(),
            perf_vars: model
                .perf_vars()
                .iter()
                .map(|p| PerfConfig {
                    name: p.name.clone(),
                    initial: p.initial_level,
                    drift: p.drift.clone(),
                    vol: None,
                    vol_row: Some(p.vol_row.clone()),
                })
                .collect(),
            optimal_portfolio: model.optimal_portfolio().map(|op| OptimalPortfolioConfig {
                excess_return: op.excess_return.clone(),
                betas: model.perf_vars().iter().map(|p| p.name.clone()).zip(op.betas.iter().copied()).collect(),
            }),
        }
    }
}

fn matrix(field: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(SppcError::invalid(field, format!("expected a {d}×{d} matrix (stocks first)")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrikeConfig {
    Fixed { strike: f64 },
    IndexLinked { reference: String, grant_price: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    StockGrant { stock: String },
    EuropeanCall { stock: String, strike: StrikeConfig },
    Cash { amount: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    /// Performance variable name.
    pub variable: String,
    #[serde(flatten)]
    pub kind: ConditionKind,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub vesting_date: f64,
    pub payment_date: f64,
    #[serde(default = "one")]
    pub shares: f64,
    pub payoff: PayoffConfig,
    #[serde(default)]
    pub conditions: Vec<ConditionConfig>,
}

impl ContractConfig {
    pub fn build(&self, model: &MarketModel) -> Result<AwardContract> {
        let stock = |field: &str, name: &str| -> Result<usize> {
            model
                .stocks()
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| SppcError::invalid(field, format!("{name:?} is not a stock of the model")))
        };
        let payoff = match &self.payoff {
            PayoffConfig::StockGrant { stock: s } => {
                PayoffKind::StockGrant { stock: stock("contract.payoff.stock", s)? }
            }
            PayoffConfig::EuropeanCall { stock: s, strike } => PayoffKind::EuropeanCall {
                stock: stock("contract.payoff.stock", s)?,
                strike: match strike {
                    StrikeConfig::Fixed { strike } => StrikeRule::Fixed { strike: *strike },
                    StrikeConfig::IndexLinked { reference, grant_price } => StrikeRule::IndexLinked {
                        reference: stock("contract.payoff.strike.reference", reference)?,
                        grant_price: *grant_price,
                    },
                },
            },
            PayoffConfig::Cash { amount } => PayoffKind::Cash { amount: *amount },
        };
        let conditions = self
            .conditions
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let variable = model.perf_vars().iter().position(|p| p.name == c.variable).ok_or_else(|| {
                    SppcError::invalid(
                        format!("contract.conditions[{k}].variable"),
                        format!("{:?} is not a performance variable of the model", c.variable),
                    )
                })?;
                Ok(PerformanceCondition { variable, kind: c.kind.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        let contract = AwardContract::new(self.vesting_date, self.payment_date, payoff, conditions, self.shares)?;
        contract.validate_against(model)?;
        Ok(contract)
    }

    pub fn from_contract(contract: &AwardContract, model: &MarketModel) -> Self {
        let stock = |i: usize| model.stocks()[i].name.clone();
        ContractConfig {
            vesting_date: contract.vesting_date,
            payment_date: contract.payment_date,
            shares: contract.shares,
            payoff: match &contract.payoff {
                PayoffKind::StockGrant { stock: s } => PayoffConfig::StockGrant { stock: stock(*s) },
                PayoffKind::EuropeanCall { stock: s, strike } => PayoffConfig::EuropeanCall {
                    stock: stock(*s),
                    strike: match strike {
                        StrikeRule::Fixed { strike } => StrikeConfig::Fixed { strike: *strike },
                        StrikeRule::IndexLinked { reference, grant_price } => {
                            StrikeConfig::IndexLinked { reference: stock(*reference), grant_price: *grant_price }
                        }
                    },
                },
                PayoffKind::Cash { amount } => PayoffConfig::Cash { amount: *amount },
            },
            conditions: contract
                .conditions
                .iter()
                .map(|c| ConditionConfig { variable: model.perf_vars()[c.variable].name.clone(), kind: c.kind.clone() })
                .collect(),
        }
    }
}

/// Parameter to calibrate, by variable name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FreeParameterConfig {
    Volatility { variable: String },
    Correlation { first: String, second: String },
    Drift { variable: String },
}

impl FreeParameterConfig {
    pub fn resolve(&self, spec: &FlatModelSpec) -> Result<FreeParameter> {
        let index = |name: &str| {
            spec.variable_index(name)
                .ok_or_else(|| SppcError::invalid("calibration.free", format!("{name:?} is not a template variable")))
        };
        Ok(match self {
            FreeParameterConfig::Volatility { variable } => FreeParameter::Volatility { variable: index(variable)? },
            FreeParameterConfig::Drift { variable } => FreeParameter::Drift { variable: index(variable)? },
            FreeParameterConfig::Correlation { first, second } => {
                FreeParameter::Correlation { first: index(first)?, second: index(second)? }
            }
        })
    }

    /// Variable names the parameter's statistic reads.
    pub fn variables(&self) -> Vec<&str> {
        match self {
            FreeParameterConfig::Volatility { variable } | FreeParameterConfig::Drift { variable } => vec![variable],
            FreeParameterConfig::Correlation { first, second } => vec![first, second],
        }
    }
}

/// Analyst forecasts of one variable's period-sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub variable: String,
    pub base_year: f64,
    pub realized: f64,
    /// `[year, forecast]` pairs in increasing year order.
    pub forecasts: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatTemplate {
    #[serde(default)]
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub stocks: Vec<FlatFactor>,
    #[serde(default)]
    pub perf_vars: Vec<FlatFactor>,
}

impl FlatTemplate {
    pub fn spec(&self, horizon: f64) -> Result<FlatModelSpec> {
        let d = self.stocks.len() + self.perf_vars.len();
        let correlation = match &self.correlation {
            Some(rows) => matrix("calibration.template.correlation", rows, d)?,
            None => DMatrix::identity(d, d),
        };
        Ok(FlatModelSpec {
            horizon,
            rate: self.rate,
            stocks: self.stocks.clone(),
            perf_vars: self.perf_vars.clone(),
            correlation,
        })
    }
}

fn default_trials() -> usize {
    200
}

fn default_step() -> f64 {
    1.0 / 64.0
}

fn default_tolerance() -> f64 {
    1e-4
}

fn default_max_iterations() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<FlatTemplate>,
    #[serde(default)]
    pub free: Vec<FreeParameterConfig>,
    #[serde(default)]
    pub forecasts: Vec<ForecastConfig>,
}

impl ForecastConfig {
    pub fn drift_curve(&self) -> Result<ParamCurve> {
        let pairs: Vec<(f64, f64)> = self.forecasts.iter().map(|p| (p[0], p[1])).collect();
        drift_term_structure(self.realized, self.base_year, &pairs)
    }
}

impl CalibrationFile {
    /// Calibration settings whose trial datasets share `boundaries`.
    pub fn settings(&self, boundaries: Vec<f64>) -> CalibrationConfig {
        CalibrationConfig {
            trials: TrialConfig { boundaries, trials: self.trials, seed: self.seed, step: self.step },
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..CalibrationConfig::default()
        }
    }

    pub fn template(&self) -> Result<&FlatTemplate> {
        self.template
            .as_ref()
            .ok_or_else(|| SppcError::invalid("calibration.template", "missing [calibration.template] section"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[model]
horizon = 3.0
rate = { breakpoints = [0.0, 1.0], values = [0.01, 0.02] }
correlation = [[1.0, 0.4], [0.4, 1.0]]

[[model.stocks]]
name = "issuer"
initial = 100.0
drift = 0.08
dividend_yield = 0.01
vol = 0.3

[[model.perf_vars]]
name = "sales"
initial = 50.0
drift = 0.05
vol = 0.2

[model.optimal_portfolio]
excess_return = 0.05
betas = { sales = 0.4 }

[contract]
vesting_date = 1.0
payment_date = 3.0
shares = 1000.0
payoff = { type = "european_call", stock = "issuer", strike = { type = "fixed", strike = 100.0 } }

[[contract.conditions]]
variable = "sales"
type = "period_sum"
start = 0.0
end = 1.0
goal = 52

[scenario]
service_years = 3
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ConfigFile::parse(SAMPLE).unwrap();
        let model = cfg.model().unwrap().build().unwrap();
        assert_eq!(model.n_stocks(), 1);
        assert_eq!(model.optimal_portfolio().unwrap().betas, vec![0.4]);
        let contract = cfg.contract().unwrap().build(&model).unwrap();
        assert_eq!(contract.conditions[0].kind, ConditionKind::PeriodSum { start: 0.0, end: 1.0, goal: 52.0 });
        assert_eq!(cfg.scenario().unwrap().service_years, 3);
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ConfigFile::parse(SAMPLE).unwrap();
        let again = ConfigFile::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let model = cfg.model().unwrap().build().unwrap();
        let explicit = ModelConfig::from_model(&model);
        let rebuilt = explicit.build().unwrap();
        assert_eq!(rebuilt, model);
        let contract = cfg.contract().unwrap().build(&model).unwrap();
        assert_eq!(ContractConfig::from_contract(&contract, &model).build(&model).unwrap(), contract);
    }

    #[test]
    fn errors_name_the_problem() {
        let bad = SAMPLE.replace("stock = \"issuer\", strike", "stock = \"nobody\", strike");
        let cfg = ConfigFile::parse(&bad).unwrap();
        let model = cfg.model().unwrap().build().unwrap();
        let err = cfg.contract().unwrap().build(&model).unwrap_err();
        assert!(err.to_string().contains("nobody"));
        let err = ConfigFile::parse("[model]\nhorizon = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = ConfigFile::parse("[modle]\n").unwrap_err();
        assert!(err.is_validation());
    }
}
