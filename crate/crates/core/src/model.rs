//! Market model: one money-market account, `m` traded stocks and `n`
//! non-traded performance variables driven by a `d = m + n` dimensional
//! Brownian motion, with piecewise-constant deterministic coefficients.
//!
//! Volatility is stored as full rows over the `d` Brownian coordinates. Stock
//! rows must vanish on the last `n` coordinates, so the stock block is `[Σ₁ 0]`
//! and the performance block is `[T₁ T₂]`.
//!
//! Two measures are supported. Under the physical measure stocks drift at `b`
//! and performance variables at `c`. Under the optimal (minimal martingale)
//! measure stocks drift at `r - d`, and performance drifts are reduced by the
//! regression betas times the stocks' expected excess return.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curve::ParamCurve;
use crate::error::{ensure, Result, SppcError};
use crate::linalg::{condition_number, psd_cholesky};

/// Condition-number ceiling for the stock volatility block.
pub const MAX_STOCK_VOL_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Physical,
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stock {
    pub name: String,
    pub initial_price: f64,
    pub dividend_yield: ParamCurve,
    pub drift: ParamCurve,
    pub vol_row: Vec<ParamCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfVariable {
    pub name: String,
    pub initial_level: f64,
    pub drift: ParamCurve,
    pub vol_row: Vec<ParamCurve>,
}

/// Single-factor description of the investor's optimal portfolio, usually a
/// stock index: its expected excess return and each performance variable's
/// single-regression beta on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPortfolio {
    pub excess_return: ParamCurve,
    pub betas: Vec<f64>,
}

/// Per-variable inputs for [`MarketModel::from_vols_and_correlation`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorInput {
    pub name: String,
    pub initial: f64,
    pub drift: ParamCurve,
    pub vol: ParamCurve,
    /// Dividend yield; ignored for performance variables.
    pub dividend_yield: ParamCurve,
}

/// Coefficients frozen over one interval between consecutive model knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Arithmetic drift per variable (stocks first).
    pub drift: Vec<f64>,
    /// `d × d` volatility matrix, one row per variable.
    pub vol: DMatrix<f64>,
}

impl Segment {
    /// Drift of the log-level, `μ - ½‖row‖²`.
    pub fn log_drift(&self, var: usize) -> f64 {
        self.drift[var] - 0.5 * self.vol.row(var).norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    horizon: f64,
    rate: ParamCurve,
    stocks: Vec<Stock>,
    perf_vars: Vec<PerfVariable>,
    optimal_portfolio: Option<OptimalPortfolio>,
    knots: Vec<f64>,
}

impl MarketModel {
    pub fn new(
        horizon: f64,
        rate: ParamCurve,
        stocks: Vec<Stock>,
        perf_vars: Vec<PerfVariable>,
        optimal_portfolio: Option<OptimalPortfolio>,
    ) -> Result<Self> {
        ensure(horizon.is_finite() && horizon > 0.0, "horizon", || format!("must be positive, got {horizon}"))?;
        let m = stocks.len();
        let d = m + perf_vars.len();
        ensure(d > 0, "model", || "needs at least one stock or performance variable".into())?;

        for s in &stocks {
            ensure(s.initial_price > 0.0 && s.initial_price.is_finite(), &s.name, || {
                format!("initial price must be positive, got {}", s.initial_price)
            })?;
            ensure(s.vol_row.len() == d, &s.name, || {
                format!("volatility row has {} entries, expected {d}", s.vol_row.len())
            })?;
            ensure(s.vol_row[m..].iter().all(ParamCurve::is_zero), &s.name, || {
                "stock volatility must vanish on performance-variable coordinates".into()
            })?;
        }
        for p in &perf_vars {
            ensure(p.initial_level > 0.0 && p.initial_level.is_finite(), &p.name, || {
                format!("initial level must be positive, got {}", p.initial_level)
            })?;
            ensure(p.vol_row.len() == d, &p.name, || {
                format!("volatility row has {} entries, expected {d}", p.vol_row.len())
            })?;
        }
        let mut names: Vec<&str> =
            stocks.iter().map(|s| s.name.as_str()).chain(perf_vars.iter().map(|p| p.name.as_str())).collect();
        names.sort_unstable();
        ensure(names.windows(2).all(|w| w[0] != w[1]), "model", || "variable names must be unique".into())?;
        if let Some(op) = &optimal_portfolio {
            ensure(op.betas.len() == perf_vars.len(), "optimal_portfolio.betas", || {
                format!("expected {} betas, got {}", perf_vars.len(), op.betas.len())
            })?;
            ensure(op.betas.iter().all(|b| b.is_finite()), "optimal_portfolio.betas", || {
                "betas must be finite".into()
            })?;
        }

        let mut knots: Vec<f64> = std::iter::once(&rate)
            .chain(stocks.iter().flat_map(|s| [&s.dividend_yield, &s.drift].into_iter().chain(s.vol_row.iter())))
            .chain(perf_vars.iter().flat_map(|p| std::iter::once(&p.drift).chain(p.vol_row.iter())))
            .chain(optimal_portfolio.iter().map(|o| &o.excess_return))
            .flat_map(|c| c.breakpoints().iter().copied())
            .filter(|t| *t < horizon)
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let model = MarketModel { horizon, rate, stocks, perf_vars, optimal_portfolio, knots };
        for &t in &model.knots {
            model.multiple_regression_betas(t)?;
        }
        Ok(model)
    }

    /// Builds volatility rows from per-variable vols and a correlation matrix
    /// (stocks first) through a lower-triangular factorization, which keeps the
    /// `[Σ₁ 0]` shape of the stock block.
    pub fn from_vols_and_correlation(
        horizon: f64,
        rate: ParamCurve,
        stocks: Vec<FactorInput>,
        perf_vars: Vec<FactorInput>,
        correlation: &DMatrix<f64>,
        optimal_portfolio: Option<OptimalPortfolio>,
    ) -> Result<Self> {
        let d = stocks.len() + perf_vars.len();
        ensure(correlation.nrows() == d && correlation.ncols() == d, "correlation", || {
            format!("expected a {d}×{d} matrix")
        })?;
        for i in 0..d {
            ensure((correlation[(i, i)] - 1.0).abs() < 1e-12, "correlation", || "diagonal entries must be 1".into())?;
            for j in 0..d {
                let c = correlation[(i, j)];
                ensure(c.abs() <= 1.0 && c == correlation[(j, i)], "correlation", || {
                    format!("entry ({i},{j}) = {c} must be symmetric and within [-1, 1]")
                })?;
            }
        }
        let l = psd_cholesky(correlation)?;
        let row = |vol: &ParamCurve, i: usize| -> Vec<ParamCurve> { (0..d).map(|j| vol.scaled(l[(i, j)])).collect() };
        let m = stocks.len();
        let stocks = stocks
            .into_iter()
            .enumerate()
            .map(|(i, s)| Stock {
                vol_row: row(&s.vol, i),
                name: s.name,
                initial_price: s.initial,
                dividend_yield: s.dividend_yield,
                drift: s.drift,
            })
            .collect();
        let perf_vars = perf_vars
            .into_iter()
            .enumerate()
            .map(|(i, p)| PerfVariable {
                vol_row: row(&p.vol, m + i),
                name: p.name,
                initial_level: p.initial,
                drift: p.drift,
            })
            .collect();
        MarketModel::new(horizon, rate, stocks, perf_vars, optimal_portfolio)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn rate(&self) -> &ParamCurve {
        &self.rate
    }

    pub fn stocks(&self) -> &[Stock] {
        &self.stocks
    }

    pub fn perf_vars(&self) -> &[PerfVariable] {
        &self.perf_vars
    }

    pub fn optimal_portfolio(&self) -> Option<&OptimalPortfolio> {
        self.optimal_portfolio.as_ref()
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn n_perf(&self) -> usize {
        self.perf_vars.len()
    }

    pub fn dim(&self) -> usize {
        self.stocks.len() + self.perf_vars.len()
    }

    /// Start times of the intervals on which every coefficient is constant.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Global variable index of performance variable `j` (stocks come first).
    pub fn perf_global(&self, j: usize) -> usize {
        self.stocks.len() + j
    }

    pub fn variable_name(&self, global: usize) -> &str {
        let m = self.stocks.len();
        if global < m {
            &self.stocks[global].name
        } else {
            &self.perf_vars[global - m].name
        }
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        (0..self.dim()).find(|&g| self.variable_name(g) == name)
    }

    pub fn initial_level(&self, global: usize) -> f64 {
        let m = self.stocks.len();
        if global < m {
            self.stocks[global].initial_price
        } else {
            self.perf_vars[global - m].initial_level
        }
    }

    pub fn vol_row_curves(&self, global: usize) -> &[ParamCurve] {
        let m = self.stocks.len();
        if global < m {
            &self.stocks[global].vol_row
        } else {
            &self.perf_vars[global - m].vol_row
        }
    }

    /// `exp(-∫₀ᵗ r)`.
    pub fn discount_factor(&self, t: f64) -> f64 {
        (-self.rate.integral(0.0, t)).exp()
    }

    /// Full `d × d` volatility matrix at `t`.
    pub fn vol_matrix(&self, t: f64) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.vol_row_curves(i)[j].value_at(t))
    }

    /// `Σ₁(t)`, the `m × m` stock block.
    pub fn stock_vol_block(&self, t: f64) -> DMatrix<f64> {
        let m = self.stocks.len();
        DMatrix::from_fn(m, m, |i, j| self.stocks[i].vol_row[j].value_at(t))
    }

    /// `T₁(t)`, the `n × m` loading of performance variables on stock shocks.
    pub fn perf_stock_block(&self, t: f64) -> DMatrix<f64> {
        let m = self.stocks.len();
        DMatrix::from_fn(self.perf_vars.len(), m, |i, j| self.perf_vars[i].vol_row[j].value_at(t))
    }

    /// `b + d - r·1` at `t`.
    pub fn stock_excess_return(&self, t: f64) -> DVector<f64> {
        let r = self.rate.value_at(t);
        DVector::from_iterator(
            self.stocks.len(),
            self.stocks.iter().map(|s| s.drift.value_at(t) + s.dividend_yield.value_at(t) - r),
        )
    }

    /// Stock drifts under the optimal measure, `r - d`.
    pub fn q_stock_drift(&self, t: f64) -> DVector<f64> {
        let r = self.rate.value_at(t);
        DVector::from_iterator(self.stocks.len(), self.stocks.iter().map(|s| r - s.dividend_yield.value_at(t)))
    }

    pub fn physical_perf_drift(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.perf_vars.len(), self.perf_vars.iter().map(|p| p.drift.value_at(t)))
    }

    /// Multiple-regression betas `B_PS(t) = T₁ Σ₁⁻¹` of performance-variable
    /// shocks on stock shocks.
    ///
    /// When `T₁(t)` vanishes the betas are zero whatever `Σ₁` is; this admits
    /// deterministic stocks next to performance variables that are unrelated to them.
    pub fn multiple_regression_betas(&self, t: f64) -> Result<DMatrix<f64>> {
        let t1 = self.perf_stock_block(t);
        if t1.iter().all(|v| *v == 0.0) {
            return Ok(t1);
        }
        let sigma1 = self.stock_vol_block(t);
        let cond = condition_number(&sigma1);
        if !(cond <= MAX_STOCK_VOL_CONDITION) {
            return Err(SppcError::SingularStockVolatility { time: t, condition: cond });
        }
        // B Σ₁ = T₁  ⇔  Σ₁ᵀ Bᵀ = T₁ᵀ
        let bt = sigma1
            .transpose()
            .lu()
            .solve(&t1.transpose())
            .ok_or(SppcError::SingularStockVolatility { time: t, condition: cond })?;
        Ok(bt.transpose())
    }

    /// Performance drifts under the optimal measure using the full stock set:
    /// `c - B_PS (b + d - r·1)`.
    pub fn q_drift_multi(&self, t: f64) -> Result<DVector<f64>> {
        let betas = self.multiple_regression_betas(t)?;
        Ok(self.physical_perf_drift(t) - betas * self.stock_excess_return(t))
    }

    /// Performance drifts under the optimal measure using the optimal-portfolio
    /// summary: `c_j - β*_j (b*_π - r)`.
    pub fn q_drift_optimal(&self, t: f64) -> Result<DVector<f64>> {
        let op = self.optimal_portfolio.as_ref().ok_or_else(|| {
            SppcError::Unsupported(
                "model has no optimal_portfolio section; use the multiple-regression drift instead".into(),
            )
        })?;
        let excess = op.excess_return.value_at(t);
        let c = self.physical_perf_drift(t);
        Ok(DVector::from_iterator(c.len(), c.iter().zip(&op.betas).map(|(c, b)| c - b * excess)))
    }

    /// Arithmetic drifts of all variables (stocks first) under `measure`.
    ///
    /// The optimal measure uses the optimal-portfolio summary when the model
    /// carries one, the multiple-regression adjustment otherwise.
    pub fn drifts(&self, measure: Measure, t: f64) -> Result<Vec<f64>> {
        let (stock, perf) = match measure {
            Measure::Physical => (
                DVector::from_iterator(self.stocks.len(), self.stocks.iter().map(|s| s.drift.value_at(t))),
                self.physical_perf_drift(t),
            ),
            Measure::Optimal => {
                let perf =
                    if self.optimal_portfolio.is_some() { self.q_drift_optimal(t)? } else { self.q_drift_multi(t)? };
                (self.q_stock_drift(t), perf)
            }
        };
        Ok(stock.iter().chain(perf.iter()).copied().collect())
    }

    /// Constant-coefficient pieces covering `[0, until]`.
    pub fn segments(&self, measure: Measure, until: f64) -> Result<Vec<Segment>> {
        let mut out = Vec::new();
        for (k, &start) in self.knots.iter().enumerate() {
            if start >= until {
                break;
            }
            let end = self.knots.get(k + 1).copied().unwrap_or(f64::INFINITY).min(until);
            out.push(Segment { start, end, drift: self.drifts(measure, start)?, vol: self.vol_matrix(start) });
        }
        Ok(out)
    }

    /// Copy with a replaced (or removed) optimal-portfolio summary.
    pub fn with_optimal_portfolio(&self, op: Option<OptimalPortfolio>) -> Result<Self> {
        MarketModel::new(self.horizon, self.rate.clone(), self.stocks.clone(), self.perf_vars.clone(), op)
    }

    /// Copy with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        MarketModel::new(
            horizon,
            self.rate.clone(),
            self.stocks.clone(),
            self.perf_vars.clone(),
            self.optimal_portfolio.clone(),
        )
    }
}

/// Single-regression beta of a performance variable on an index:
/// `ρ σ_P / σ_I`.
pub fn single_regression_beta(correlation: f64, vol_perf: f64, vol_index: f64) -> Result<f64> {
    ensure(correlation.abs() <= 1.0, "correlation", || format!("must lie in [-1, 1], got {correlation}"))?;
    ensure(vol_perf >= 0.0, "vol_perf", || format!("must be nonnegative, got {vol_perf}"))?;
    ensure(vol_index > 0.0, "vol_index", || format!("must be positive, got {vol_index}"))?;
    Ok(correlation * vol_perf / vol_index)
}
