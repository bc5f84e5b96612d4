//! Award contracts and the path functionals that decide vesting.
//!
//! Three kinds of performance condition are supported:
//! a goal on the time integral of a flow over an accounting window
//! (period-sum), goals on successive stage ratios, and a goal on the level at
//! the vesting date. The period-product variant swaps each period-sum for the
//! window length times the continuous geometric mean of the level, which has a
//! lognormal law and so serves as a control variate.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result, SppcError};
use crate::grid::index_of;
use crate::model::MarketModel;
use crate::paths::{PathBatch, PathView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConditionKind {
    PeriodSum { start: f64, end: f64, goal: f64 },
    StagedRatio { stage_times: Vec<f64>, goals: Vec<f64> },
    TerminalLevel { goal: f64 },
}

impl ConditionKind {
    fn tag(&self) -> u8 {
        match self {
            ConditionKind::PeriodSum { .. } => 1,
            ConditionKind::StagedRatio { .. } => 2,
            ConditionKind::TerminalLevel { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceCondition {
    /// Index into the model's performance variables.
    pub variable: usize,
    pub kind: ConditionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StrikeRule {
    Fixed {
        strike: f64,
    },
    /// `grant_price × S_ref(T_v) / S_ref(0)`, resolved at the vesting date.
    IndexLinked {
        reference: usize,
        grant_price: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    StockGrant { stock: usize },
    EuropeanCall { stock: usize, strike: StrikeRule },
    Cash { amount: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Conditions as written.
    Sum,
    /// Period-sum conditions replaced by period-product conditions.
    Prod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AwardContract {
    pub vesting_date: f64,
    pub payment_date: f64,
    pub payoff: PayoffKind,
    pub conditions: Vec<PerformanceCondition>,
    pub shares: f64,
}

impl AwardContract {
    pub fn new(
        vesting_date: f64,
        payment_date: f64,
        payoff: PayoffKind,
        conditions: Vec<PerformanceCondition>,
        shares: f64,
    ) -> Result<Self> {
        let c = AwardContract { vesting_date, payment_date, payoff, conditions, shares };
        c.check_intrinsic()?;
        Ok(c)
    }

    fn check_intrinsic(&self) -> Result<()> {
        let tv = self.vesting_date;
        ensure(tv > 0.0 && tv < self.payment_date, "vesting_date", || {
            format!("need 0 < T_v < T, got T_v = {tv}, T = {}", self.payment_date)
        })?;
        ensure(self.shares > 0.0 && self.shares.is_finite(), "shares", || {
            format!("must be positive, got {}", self.shares)
        })?;
        match &self.payoff {
            PayoffKind::Cash { amount } => {
                ensure(*amount >= 0.0, "cash amount", || format!("must be nonnegative, got {amount}"))?
            }
            PayoffKind::EuropeanCall { strike: StrikeRule::Fixed { strike }, .. } => {
                ensure(*strike >= 0.0, "strike", || format!("must be nonnegative, got {strike}"))?
            }
            PayoffKind::EuropeanCall { strike: StrikeRule::IndexLinked { grant_price, .. }, .. } => {
                ensure(*grant_price >= 0.0, "grant_price", || format!("must be nonnegative, got {grant_price}"))?
            }
            PayoffKind::StockGrant { .. } => {}
        }
        let mut seen = Vec::new();
        for (k, cond) in self.conditions.iter().enumerate() {
            let field = format!("conditions[{k}]");
            let key = (cond.variable, cond.kind.tag());
            ensure(!seen.contains(&key), &field, || {
                "duplicate condition kind for the same performance variable".into()
            })?;
            seen.push(key);
            match &cond.kind {
                ConditionKind::PeriodSum { start, end, goal } => {
                    ensure(0.0 <= *start && start < end && *end <= tv + 1e-12, &field, || {
                        format!("accounting window [{start}, {end}] must lie within [0, T_v = {tv}]")
                    })?;
                    ensure(*goal > 0.0, &field, || format!("goal must be positive, got {goal}"))?;
                }
                ConditionKind::StagedRatio { stage_times, goals } => {
                    ensure(stage_times.len() >= 2, &field, || "need at least one stage".into())?;
                    ensure(goals.len() + 1 == stage_times.len(), &field, || {
                        format!("{} stage times need {} goals", stage_times.len(), stage_times.len() - 1)
                    })?;
                    ensure(
                        stage_times[0] >= 0.0
                            && stage_times.windows(2).all(|w| w[1] > w[0])
                            && *stage_times.last().unwrap() <= tv + 1e-12,
                        &field,
                        || format!("stage times must increase within [0, T_v = {tv}]"),
                    )?;
                    ensure(goals.iter().all(|g| g.is_finite()), &field, || "goals must be finite".into())?;
                }
                ConditionKind::TerminalLevel { goal } => {
                    ensure(*goal > 0.0, &field, || format!("goal must be positive, got {goal}"))?;
                }
            }
        }
        Ok(())
    }

    /// Checks every index and date against a model.
    pub fn validate_against(&self, model: &MarketModel) -> Result<()> {
        self.check_intrinsic()?;
        ensure(self.payment_date <= model.horizon() + 1e-12, "payment_date", || {
            format!("T = {} exceeds the model horizon {}", self.payment_date, model.horizon())
        })?;
        let stock_ok = |s: usize, what: &str| {
            ensure(s < model.n_stocks(), what, || {
                format!("stock index {s} out of range (model has {})", model.n_stocks())
            })
        };
        match &self.payoff {
            PayoffKind::StockGrant { stock } => stock_ok(*stock, "payoff.stock")?,
            PayoffKind::EuropeanCall { stock, strike } => {
                stock_ok(*stock, "payoff.stock")?;
                if let StrikeRule::IndexLinked { reference, .. } = strike {
                    stock_ok(*reference, "payoff.strike.reference")?;
                }
            }
            PayoffKind::Cash { .. } => {}
        }
        for (k, c) in self.conditions.iter().enumerate() {
            ensure(c.variable < model.n_perf(), &format!("conditions[{k}]"), || {
                format!("performance variable {} out of range (model has {})", c.variable, model.n_perf())
            })?;
        }
        Ok(())
    }

    /// Every date the simulation grid must hit exactly.
    pub fn dates(&self) -> Vec<f64> {
        let mut out = vec![self.vesting_date, self.payment_date];
        for c in &self.conditions {
            match &c.kind {
                ConditionKind::PeriodSum { start, end, .. } => out.extend([*start, *end]),
                ConditionKind::StagedRatio { stage_times, .. } => out.extend(stage_times),
                ConditionKind::TerminalLevel { .. } => {}
            }
        }
        out
    }

    pub fn without_conditions(&self) -> Self {
        AwardContract { conditions: Vec::new(), ..self.clone() }
    }

    pub fn has_period_sum(&self) -> bool {
        self.conditions.iter().any(|c| matches!(c.kind, ConditionKind::PeriodSum { .. }))
    }
}

fn trapezoid(values: impl Fn(usize) -> f64, grid: &[f64], i0: usize, i1: usize) -> f64 {
    let mut acc = 0.0;
    let mut prev = values(i0);
    for k in i0 + 1..=i1 {
        let cur = values(k);
        acc += 0.5 * (prev + cur) * (grid[k] - grid[k - 1]);
        prev = cur;
    }
    acc
}

fn window(grid: &[f64], a: f64, b: f64) -> Result<(usize, usize)> {
    ensure(a < b, "window", || format!("need a < b, got [{a}, {b}]"))?;
    Ok((index_of(grid, a)?, index_of(grid, b)?))
}

/// Trapezoid approximation of `∫ₐᵇ P(u) du` over the grid.
pub fn period_sum(levels: &[f64], grid: &[f64], a: f64, b: f64) -> Result<f64> {
    ensure(levels.len() == grid.len(), "levels", || "must match the grid length".into())?;
    let (i0, i1) = window(grid, a, b)?;
    Ok(trapezoid(|k| levels[k], grid, i0, i1))
}

/// `(b - a) · exp(mean of log P over [a, b])`, the window length times the
/// continuous geometric mean; the log integral uses the trapezoid rule.
pub fn period_product(levels: &[f64], grid: &[f64], a: f64, b: f64) -> Result<f64> {
    ensure(levels.len() == grid.len(), "levels", || "must match the grid length".into())?;
    let (i0, i1) = window(grid, a, b)?;
    if let Some(bad) = levels[i0..=i1].iter().find(|v| !(**v > 0.0)) {
        return Err(SppcError::invalid("levels", format!("period-product needs positive levels, got {bad}")));
    }
    let len = grid[i1] - grid[i0];
    Ok(len * (trapezoid(|k| levels[k].ln(), grid, i0, i1) / len).exp())
}

#[derive(Debug, Clone)]
enum CompiledKind {
    Window { i0: usize, i1: usize, len: f64, goal: f64 },
    Stages { idx: Vec<usize>, goals: Vec<f64> },
    Terminal { iv: usize, goal: f64 },
}

#[derive(Debug, Clone)]
struct CompiledCondition {
    var: usize,
    kind: CompiledKind,
}

#[derive(Debug, Clone)]
enum CompiledPayoff {
    Stock { var: usize },
    Call { var: usize, strike: f64 },
    IndexCall { var: usize, reference: usize, grant_price: f64 },
    Cash { amount: f64 },
}

/// A contract resolved against a grid: every date is a grid index.
#[derive(Debug, Clone)]
pub struct CompiledContract {
    conditions: Vec<CompiledCondition>,
    payoff: CompiledPayoff,
    i_pay: usize,
    i_vest: usize,
    discount: f64,
}

impl CompiledContract {
    pub fn new(contract: &AwardContract, model: &MarketModel, grid: &[f64]) -> Result<Self> {
        contract.validate_against(model)?;
        let m = model.n_stocks();
        let conditions = contract
            .conditions
            .iter()
            .map(|c| {
                let var = m + c.variable;
                let kind = match &c.kind {
                    ConditionKind::PeriodSum { start, end, goal } => {
                        let (i0, i1) = window(grid, *start, *end)?;
                        CompiledKind::Window { i0, i1, len: grid[i1] - grid[i0], goal: *goal }
                    }
                    ConditionKind::StagedRatio { stage_times, goals } => CompiledKind::Stages {
                        idx: stage_times.iter().map(|t| index_of(grid, *t)).collect::<Result<_>>()?,
                        goals: goals.clone(),
                    },
                    ConditionKind::TerminalLevel { goal } => {
                        CompiledKind::Terminal { iv: index_of(grid, contract.vesting_date)?, goal: *goal }
                    }
                };
                Ok(CompiledCondition { var, kind })
            })
            .collect::<Result<Vec<_>>>()?;
        let payoff = match &contract.payoff {
            PayoffKind::StockGrant { stock } => CompiledPayoff::Stock { var: *stock },
            PayoffKind::EuropeanCall { stock, strike: StrikeRule::Fixed { strike } } => {
                CompiledPayoff::Call { var: *stock, strike: *strike }
            }
            PayoffKind::EuropeanCall { stock, strike: StrikeRule::IndexLinked { reference, grant_price } } => {
                CompiledPayoff::IndexCall { var: *stock, reference: *reference, grant_price: *grant_price }
            }
            PayoffKind::Cash { amount } => CompiledPayoff::Cash { amount: *amount },
        };
        Ok(CompiledContract {
            conditions,
            payoff,
            i_pay: index_of(grid, contract.payment_date)?,
            i_vest: index_of(grid, contract.vesting_date)?,
            discount: model.discount_factor(contract.payment_date),
        })
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Product of the condition indicators (0 or 1) on one path.
    pub fn indicator(&self, path: &PathView<'_>, variant: Variant) -> f64 {
        let grid = path.grid();
        let ok = self.conditions.iter().all(|c| {
            let logs = path.log_series(c.var);
            match &c.kind {
                CompiledKind::Window { i0, i1, len, goal } => match variant {
                    Variant::Sum => trapezoid(|k| logs[k].exp(), grid, *i0, *i1) >= *goal,
                    Variant::Prod => len * (trapezoid(|k| logs[k], grid, *i0, *i1) / len).exp() >= *goal,
                },
                CompiledKind::Stages { idx, goals } => {
                    idx.windows(2).zip(goals).all(|(w, g)| (logs[w[1]] - logs[w[0]]).exp() >= *g)
                }
                CompiledKind::Terminal { iv, goal } => logs[*iv].exp() >= *goal,
            }
        });
        if ok {
            1.0
        } else {
            0.0
        }
    }

    /// Payoff `C` at the payment date, before conditions and discounting.
    pub fn payoff(&self, path: &PathView<'_>) -> f64 {
        match &self.payoff {
            CompiledPayoff::Stock { var } => path.level(*var, self.i_pay),
            CompiledPayoff::Call { var, strike } => (path.level(*var, self.i_pay) - strike).max(0.0),
            CompiledPayoff::IndexCall { var, reference, grant_price } => {
                let r = path.log_series(*reference);
                let strike = grant_price * (r[self.i_vest] - r[0]).exp();
                (path.level(*var, self.i_pay) - strike).max(0.0)
            }
            CompiledPayoff::Cash { amount } => *amount,
        }
    }

    /// Discounted payoff times the indicator product, per share.
    pub fn discounted(&self, path: &PathView<'_>, variant: Variant) -> f64 {
        let ind = self.indicator(path, variant);
        if ind == 0.0 {
            0.0
        } else {
            self.discount * self.payoff(path)
        }
    }
}

/// Per-path indicator products (0/1) for a simulated batch.
pub fn evaluate_indicators(
    paths: &PathBatch,
    contract: &AwardContract,
    model: &MarketModel,
    variant: Variant,
) -> Result<Vec<f64>> {
    let compiled = CompiledContract::new(contract, model, paths.grid())?;
    Ok(paths.paths().map(|p| compiled.indicator(&p, variant)).collect())
}

/// Per-path `exp(-∫₀ᵀ r) · C · ∏ I`, per share.
pub fn discounted_payoff(
    paths: &PathBatch,
    contract: &AwardContract,
    model: &MarketModel,
    variant: Variant,
) -> Result<Vec<f64>> {
    let compiled = CompiledContract::new(contract, model, paths.grid())?;
    Ok(paths.paths().map(|p| compiled.discounted(&p, variant)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: usize, end: f64) -> Vec<f64> {
        (0..=n).map(|k| end * k as f64 / n as f64).collect()
    }

    #[test]
    fn period_sum_examples() {
        let g = uniform(8, 2.0);
        assert!((period_sum(&[5.0; 9], &g, 0.0, 2.0).unwrap() - 10.0).abs() < 1e-14);
        let g = uniform(7, 1.0);
        let lin: Vec<f64> = g.clone();
        assert!((period_sum(&lin, &g, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let g = uniform(512, 1.0);
        let e: Vec<f64> = g.iter().map(|t| t.exp()).collect();
        assert!((period_sum(&e, &g, 0.0, 1.0).unwrap() - (1f64.exp() - 1.0)).abs() < 1e-5);
    }

    #[test]
    fn period_product_examples() {
        let g = uniform(8, 2.0);
        assert!((period_product(&[5.0; 9], &g, 0.0, 2.0).unwrap() - 10.0).abs() < 1e-13);
        let g = uniform(512, 1.0);
        let e: Vec<f64> = g.iter().map(|t| t.exp()).collect();
        assert!((period_product(&e, &g, 0.0, 1.0).unwrap() - 0.5f64.exp()).abs() < 1e-4);
    }

    #[test]
    fn functional_errors() {
        let g = uniform(4, 1.0);
        assert!(matches!(period_sum(&[1.0; 5], &g, 0.1, 1.0), Err(SppcError::OffGrid { .. })));
        assert!(period_product(&[1.0, 1.0, 0.0, 1.0, 1.0], &g, 0.0, 1.0).is_err());
        assert!(period_sum(&[1.0; 5], &g, 1.0, 0.5).is_err());
    }

    #[test]
    fn contract_validation() {
        let cash = PayoffKind::Cash { amount: 1.0 };
        assert!(AwardContract::new(2.0, 1.0, cash.clone(), vec![], 1.0).is_err());
        let window = |s: f64, e: f64| PerformanceCondition {
            variable: 0,
            kind: ConditionKind::PeriodSum { start: s, end: e, goal: 1.0 },
        };
        assert!(AwardContract::new(1.0, 2.0, cash.clone(), vec![window(0.0, 1.5)], 1.0).is_err());
        assert!(AwardContract::new(1.0, 2.0, cash.clone(), vec![window(0.0, 1.0)], 1.0).is_ok());
        assert!(AwardContract::new(1.0, 2.0, cash.clone(), vec![window(0.0, 0.5), window(0.5, 1.0)], 1.0).is_err());
        let stages = PerformanceCondition {
            variable: 0,
            kind: ConditionKind::StagedRatio { stage_times: vec![0.0, 0.5, 1.0], goals: vec![1.0] },
        };
        assert!(AwardContract::new(1.0, 2.0, cash, vec![stages], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn geometric_never_exceeds_arithmetic(logs in proptest::collection::vec(-2.0f64..2.0, 3..40)) {
            let g = uniform(logs.len() - 1, 1.0);
            let lv: Vec<f64> = logs.iter().map(|x| x.exp()).collect();
            let s = period_sum(&lv, &g, 0.0, 1.0).unwrap();
            let p = period_product(&lv, &g, 0.0, 1.0).unwrap();
            prop_assert!(p <= s * (1.0 + 1e-12));
        }
    }
}
