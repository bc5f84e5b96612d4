//! Parameter estimation from accounting-period data: log-ratio statistics,
//! the Olkin–Pratt correction, drift from forecasts, the control-variate
//! corrected statistics with their calibration loop, and the experiment on
//! how log-ratio and raw period-sum correlations behave as periods accumulate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curve::ParamCurve;
use crate::error::{ensure, Result, SppcError};
use crate::grid::TimeGrid;
use crate::mc_engine::Simulator;
use crate::model::{FactorInput, MarketModel, Measure};
use crate::paths::PathView;
use crate::quasi_analytic::{law_of, Functional};
use crate::stats::{mean, pearson, sample_variance};

/// Relative tolerance for treating period lengths as equal.
const EQUAL_LENGTH_TOL: f64 = 1e-9;

/// Per-period observations of one or more variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountingSeries {
    boundaries: Vec<f64>,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl AccountingSeries {
    /// `boundaries` has one more entry than each column of `values`.
    pub fn new(boundaries: Vec<f64>, names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        ensure(boundaries.len() >= 2, "boundaries", || "need at least one period".into())?;
        ensure(boundaries.windows(2).all(|w| w[1] > w[0]), "boundaries", || {
            "period boundaries must be strictly increasing".into()
        })?;
        ensure(names.len() == values.len(), "values", || "one column per name".into())?;
        let k = boundaries.len() - 1;
        for (n, col) in names.iter().zip(&values) {
            ensure(col.len() == k, n, || format!("expected {k} periods, got {}", col.len()))?;
            if let Some((i, v)) = col.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(SppcError::invalid(n.as_str(), format!("observation {} must be positive, got {v}", i + 1)));
            }
        }
        Ok(AccountingSeries { boundaries, names, values })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_periods(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(Vec::as_slice))
    }

    /// Common period length; errors when the periods differ.
    pub fn period_length(&self) -> Result<f64> {
        equal_period_length(&self.boundaries)
    }
}

fn equal_period_length(boundaries: &[f64]) -> Result<f64> {
    let len = boundaries[1] - boundaries[0];
    for w in boundaries.windows(2) {
        ensure(((w[1] - w[0]) - len).abs() <= EQUAL_LENGTH_TOL * len, "boundaries", || {
            format!("periods must have equal length, found {} and {len}", w[1] - w[0])
        })?;
    }
    Ok(len)
}

/// `log(x[i+1] / x[i])` for consecutive observations.
pub fn log_ratio_series(xs: &[f64]) -> Result<Vec<f64>> {
    ensure(xs.len() >= 2, "series", || "need at least two observations".into())?;
    if let Some(v) = xs.iter().find(|v| !(**v > 0.0)) {
        return Err(SppcError::invalid("series", format!("observations must be positive, got {v}")));
    }
    Ok(xs.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Pearson correlation of two equally long samples.
pub fn sample_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    ensure(xs.len() == ys.len(), "samples", || format!("lengths differ: {} vs {}", xs.len(), ys.len()))?;
    ensure(xs.len() >= 2, "samples", || "need at least two pairs".into())?;
    pearson(xs, ys).ok_or_else(|| SppcError::invalid("samples", "correlation undefined for a zero-variance sample"))
}

/// Olkin–Pratt approximation `ρ̂ (1 + (1 - ρ̂²) / (2n - 6))`, clamped to [-1, 1].
pub fn unbiased_correlation(rho_hat: f64, n: usize) -> Result<f64> {
    ensure(n >= 4, "n", || format!("the correction needs n >= 4 samples, got {n}"))?;
    ensure(rho_hat.abs() <= 1.0, "rho_hat", || format!("must lie in [-1, 1], got {rho_hat}"))?;
    Ok((rho_hat * (1.0 + (1.0 - rho_hat * rho_hat) / (2.0 * n as f64 - 6.0))).clamp(-1.0, 1.0))
}

/// Annualized volatility from period-sums: the unbiased standard deviation of
/// the log ratios divided by the square root of the period length.
pub fn volatility_from_period_sums(values: &[f64], boundaries: &[f64]) -> Result<f64> {
    ensure(values.len() >= 3, "series", || format!("need at least 3 periods, got {}", values.len()))?;
    ensure(boundaries.len() == values.len() + 1, "boundaries", || "one more boundary than periods".into())?;
    let len = equal_period_length(boundaries)?;
    let lr = log_ratio_series(values)?;
    Ok((sample_variance(&lr) / len).sqrt())
}

/// Annualized volatility from prices sampled every `dt` years.
pub fn volatility_from_prices(prices: &[f64], dt: f64) -> Result<f64> {
    ensure(prices.len() >= 3, "prices", || format!("need at least 3 prices, got {}", prices.len()))?;
    ensure(dt > 0.0, "dt", || format!("must be positive, got {dt}"))?;
    Ok((sample_variance(&log_ratio_series(prices)?) / dt).sqrt())
}

/// `log(forecast / realized) / (year - base_year)`.
pub fn drift_from_forecast(realized: f64, forecast: f64, base_year: f64, year: f64) -> Result<f64> {
    ensure(year > base_year, "year", || format!("forecast year {year} must follow {base_year}"))?;
    ensure(realized > 0.0 && forecast > 0.0, "forecast", || "values must be positive".into())?;
    Ok((forecast / realized).ln() / (year - base_year))
}

/// Piecewise-constant drift, in time since `base_year`, whose integral up to
/// each forecast horizon reproduces `log(forecast / realized)`.
pub fn drift_term_structure(realized: f64, base_year: f64, forecasts: &[(f64, f64)]) -> Result<ParamCurve> {
    ensure(!forecasts.is_empty(), "forecasts", || "need at least one forecast".into())?;
    let mut breakpoints = Vec::with_capacity(forecasts.len());
    let mut values = Vec::with_capacity(forecasts.len());
    let (mut prev_year, mut prev_value) = (base_year, realized);
    for &(year, value) in forecasts {
        values.push(drift_from_forecast(prev_value, value, prev_year, year)?);
        breakpoints.push(prev_year - base_year);
        (prev_year, prev_value) = (year, value);
    }
    ParamCurve::new(breakpoints, values)
}

/// Statistic of a dataset of per-period values. Variables are global model
/// indices (stocks first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Statistic {
    /// Unbiased variance of the log ratios per year of period length.
    Volatility { variable: usize },
    /// Correlation of two log-ratio series.
    Correlation { first: usize, second: usize },
    /// Mean log ratio per year of period length.
    LogRatioMean { variable: usize },
}

impl Statistic {
    fn variables(&self) -> Vec<usize> {
        match *self {
            Statistic::Volatility { variable } | Statistic::LogRatioMean { variable } => vec![variable],
            Statistic::Correlation { first, second } => vec![first, second],
        }
    }

    /// Value on one dataset; `series(v)` gives the per-period values of `v`.
    pub fn evaluate<'a>(&self, series: impl Fn(usize) -> &'a [f64], period_length: f64) -> Result<f64> {
        match *self {
            Statistic::Volatility { variable } => {
                Ok(sample_variance(&log_ratio_series(series(variable))?) / period_length)
            }
            Statistic::LogRatioMean { variable } => Ok(mean(&log_ratio_series(series(variable))?) / period_length),
            Statistic::Correlation { first, second } => {
                let (a, b) = (log_ratio_series(series(first))?, log_ratio_series(series(second))?);
                // a degenerate dataset carries no correlation information
                Ok(pearson(&a, &b).unwrap_or(0.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedStatistic {
    pub value: f64,
    pub e_sum: f64,
    pub e_prod: f64,
    pub a_prod: f64,
}

/// Settings of the simulated trial datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    /// Period boundaries of every trial dataset.
    pub boundaries: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig { boundaries: (0..=20).map(|k| k as f64 * 0.25).collect(), trials: 200, seed: 0, step: 1.0 / 64.0 }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<f64> {
        ensure(self.boundaries.len() >= 4, "boundaries", || "need at least 3 periods".into())?;
        ensure(self.boundaries[0] >= 0.0, "boundaries", || "must start at or after 0".into())?;
        ensure(self.trials >= 2, "trials", || format!("need at least 2 trials, got {}", self.trials))?;
        ensure(self.step > 0.0, "step", || format!("must be positive, got {}", self.step))?;
        equal_period_length(&self.boundaries)
    }
}

/// Trapezoid period-sum and period-product of one log series over `[i0, i1]`.
fn window_pair(logs: &[f64], grid: &[f64], i0: usize, i1: usize) -> (f64, f64) {
    let (mut s, mut l) = (0.0, 0.0);
    for k in i0..i1 {
        let h = grid[k + 1] - grid[k];
        s += 0.5 * (logs[k].exp() + logs[k + 1].exp()) * h;
        l += 0.5 * (logs[k] + logs[k + 1]) * h;
    }
    let len = grid[i1] - grid[i0];
    (s, len * (l / len).exp())
}

/// Per-window period-sums and period-products of the listed variables.
fn window_values(path: &PathView<'_>, idx: &[usize], vars: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut sums = Vec::with_capacity(vars.len());
    let mut prods = Vec::with_capacity(vars.len());
    for &v in vars {
        let logs = path.log_series(v);
        let (s, p): (Vec<f64>, Vec<f64>) = idx.windows(2).map(|w| window_pair(logs, path.grid(), w[0], w[1])).unzip();
        sums.push(s);
        prods.push(p);
    }
    (sums, prods)
}

fn trial_simulator(model: &MarketModel, boundaries: &[f64], step: f64) -> Result<(Simulator, Vec<usize>)> {
    let end = *boundaries.last().unwrap();
    ensure(end <= model.horizon() + 1e-12, "boundaries", || {
        format!("last boundary {end} exceeds the model horizon {}", model.horizon())
    })?;
    let mut dates = boundaries.to_vec();
    dates.extend(model.knots().iter().copied().filter(|&k| k > 0.0 && k < end));
    let grid = TimeGrid::build(end, step, &dates)?;
    let idx = boundaries.iter().map(|&b| grid.index_of(b)).collect::<Result<Vec<_>>>()?;
    Ok((Simulator::new(model, grid.times(), Measure::Physical)?, idx))
}

/// Exact expectation of the statistic on period-product data.
pub fn period_product_statistic(model: &MarketModel, statistic: &Statistic, boundaries: &[f64]) -> Result<f64> {
    let len = equal_period_length(boundaries)?;
    let vars = statistic.variables();
    let k = boundaries.len() - 1;
    let fs: Vec<Functional> = vars
        .iter()
        .flat_map(|&v| boundaries.windows(2).map(move |w| (v, w[0], w[1])))
        .map(|(v, a, b)| Functional::period_product(model, v, a, b))
        .collect();
    let (mean_x, cov_x) = law_of(model, Measure::Physical, &fs)?;
    // log ratios y = D x, per variable
    let n = k - 1;
    let mut d = DMatrix::zeros(vars.len() * n, vars.len() * k);
    for s in 0..vars.len() {
        for i in 0..n {
            d[(s * n + i, s * k + i)] = -1.0;
            d[(s * n + i, s * k + i + 1)] = 1.0;
        }
    }
    let mu: DVector<f64> = &d * mean_x;
    let cov: DMatrix<f64> = &d * cov_x * d.transpose();
    // expected centered cross-moment sum E[Σ (y_a - ȳ_a)(y_b - ȳ_b)]
    let centered = |a: usize, b: usize| -> f64 {
        let (ra, rb) = (a * n..(a + 1) * n, b * n..(b + 1) * n);
        let block = cov.view((ra.start, rb.start), (n, n));
        let trace = block.trace() - block.sum() / n as f64;
        let (ma, mb) = (mu.rows(ra.start, n), mu.rows(rb.start, n));
        let (ca, cb) = (ma.add_scalar(-ma.mean()), mb.add_scalar(-mb.mean()));
        trace + ca.dot(&cb)
    };
    Ok(match statistic {
        Statistic::Volatility { .. } => centered(0, 0) / (n as f64 - 1.0) / len,
        Statistic::LogRatioMean { .. } => mu.mean() / len,
        Statistic::Correlation { .. } => {
            let denom = (centered(0, 0) * centered(1, 1)).sqrt();
            if denom > 0.0 {
                centered(0, 1) / denom
            } else {
                0.0
            }
        }
    })
}

/// `mean f(D_SUM) - mean f(D_PROD) + a_PROD` over simulated trial datasets
/// under the physical measure.
pub fn cv_corrected_statistic(
    model: &MarketModel,
    statistic: &Statistic,
    config: &TrialConfig,
) -> Result<CorrectedStatistic> {
    let len = config.validate()?;
    let vars = statistic.variables();
    for &v in &vars {
        ensure(v < model.dim(), "statistic", || format!("variable index {v} out of range"))?;
    }
    let (sim, idx) = trial_simulator(model, &config.boundaries, config.step)?;
    let pairs = sim.map_paths(config.trials, config.seed, |_, p| {
        let (sums, prods) = window_values(p, &idx, &vars);
        let pick = |data: &[Vec<f64>]| {
            let lookup = |v: usize| data[vars.iter().position(|x| *x == v).unwrap()].as_slice();
            statistic.evaluate(lookup, len)
        };
        (pick(&sums), pick(&prods))
    });
    let mut fs = Vec::with_capacity(pairs.len());
    let mut fp = Vec::with_capacity(pairs.len());
    for (s, p) in pairs {
        fs.push(s?);
        fp.push(p?);
    }
    let (e_sum, e_prod) = (mean(&fs), mean(&fp));
    let a_prod = period_product_statistic(model, statistic, &config.boundaries)?;
    Ok(CorrectedStatistic { value: e_sum - e_prod + a_prod, e_sum, e_prod, a_prod })
}

/// One simulated dataset of period-sums for every model variable, under the
/// physical measure.
pub fn synthetic_series(
    model: &MarketModel,
    boundaries: &[f64],
    step: f64,
    seed: u64,
    path: u64,
) -> Result<AccountingSeries> {
    ensure(boundaries.len() >= 2, "boundaries", || "need at least one period".into())?;
    let (sim, idx) = trial_simulator(model, boundaries, step)?;
    let n = sim.grid().len();
    let mut buf = vec![0.0; sim.n_vars() * n];
    let mut z = vec![0.0; sim.n_vars()];
    sim.simulate_into(seed, path, &mut buf, &mut z);
    let view = PathView::new(sim.grid(), &buf);
    let vars: Vec<usize> = (0..model.dim()).collect();
    let (sums, _) = window_values(&view, &idx, &vars);
    let names = vars.iter().map(|&v| model.variable_name(v).to_string()).collect();
    AccountingSeries::new(boundaries.to_vec(), names, sums)
}

/// A variable with constant parameters, as used by the calibration template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatFactor {
    pub name: String,
    pub initial: f64,
    pub drift: f64,
    pub vol: f64,
    #[serde(default)]
    pub dividend_yield: f64,
}

/// Constant-parameter model rebuilt from vols and a correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatModelSpec {
    pub horizon: f64,
    pub rate: f64,
    pub stocks: Vec<FlatFactor>,
    pub perf_vars: Vec<FlatFactor>,
    pub correlation: DMatrix<f64>,
}

impl FlatModelSpec {
    pub fn build(&self) -> Result<MarketModel> {
        let input = |f: &FlatFactor| FactorInput {
            name: f.name.clone(),
            initial: f.initial,
            drift: ParamCurve::constant(f.drift),
            vol: ParamCurve::constant(f.vol),
            dividend_yield: ParamCurve::constant(f.dividend_yield),
        };
        MarketModel::from_vols_and_correlation(
            self.horizon,
            ParamCurve::constant(self.rate),
            self.stocks.iter().map(input).collect(),
            self.perf_vars.iter().map(input).collect(),
            &self.correlation,
            None,
        )
    }

    fn factor_mut(&mut self, v: usize) -> &mut FlatFactor {
        let m = self.stocks.len();
        if v < m {
            &mut self.stocks[v]
        } else {
            &mut self.perf_vars[v - m]
        }
    }

    fn factor(&self, v: usize) -> &FlatFactor {
        let m = self.stocks.len();
        if v < m {
            &self.stocks[v]
        } else {
            &self.perf_vars[v - m]
        }
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.stocks.iter().chain(&self.perf_vars).position(|f| f.name == name)
    }

    pub fn variable_name(&self, v: usize) -> &str {
        &self.factor(v).name
    }

    pub fn get(&self, p: &FreeParameter) -> f64 {
        match *p {
            FreeParameter::Volatility { variable } => self.factor(variable).vol,
            FreeParameter::Drift { variable } => self.factor(variable).drift,
            FreeParameter::Correlation { first, second } => self.correlation[(first, second)],
        }
    }

    pub fn set(&mut self, p: &FreeParameter, value: f64) {
        match *p {
            FreeParameter::Volatility { variable } => self.factor_mut(variable).vol = value,
            FreeParameter::Drift { variable } => self.factor_mut(variable).drift = value,
            FreeParameter::Correlation { first, second } => {
                self.correlation[(first, second)] = value;
                self.correlation[(second, first)] = value;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FreeParameter {
    Volatility { variable: usize },
    Correlation { first: usize, second: usize },
    Drift { variable: usize },
}

impl FreeParameter {
    /// The statistic matched against observations for this parameter.
    pub fn statistic(&self) -> Statistic {
        match *self {
            FreeParameter::Volatility { variable } => Statistic::Volatility { variable },
            FreeParameter::Correlation { first, second } => Statistic::Correlation { first, second },
            FreeParameter::Drift { variable } => Statistic::LogRatioMean { variable },
        }
    }

    /// Iteration coordinate: variance for volatilities, the raw value otherwise.
    fn to_coordinate(self, value: f64) -> f64 {
        match self {
            FreeParameter::Volatility { .. } => value * value,
            _ => value,
        }
    }

    fn into_value(self, x: f64) -> f64 {
        match self {
            FreeParameter::Volatility { .. } => x.sqrt(),
            _ => x,
        }
    }

    fn clamp(&self, x: f64) -> f64 {
        match self {
            FreeParameter::Volatility { .. } => x.max(0.0),
            FreeParameter::Correlation { .. } => x.clamp(-0.999, 0.999),
            FreeParameter::Drift { .. } => x,
        }
    }

    fn label(&self, spec: &FlatModelSpec) -> String {
        match *self {
            FreeParameter::Volatility { variable } => format!("vol[{}]", spec.variable_name(variable)),
            FreeParameter::Drift { variable } => format!("drift[{}]", spec.variable_name(variable)),
            FreeParameter::Correlation { first, second } => {
                format!("corr[{},{}]", spec.variable_name(first), spec.variable_name(second))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    pub parameter: FreeParameter,
    /// Observed value of the parameter's statistic.
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub trials: TrialConfig,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_sweeps: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { trials: TrialConfig::default(), tolerance: 1e-4, max_iterations: 50, max_sweeps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationEntry {
    pub name: String,
    pub estimate: f64,
    pub method: String,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationReport {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationReport {
    pub fn all_converged(&self) -> bool {
        self.entries.iter().all(|e| e.converged)
    }

    pub fn get(&self, name: &str) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,estimate,method,iterations,residual,converged\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{:e},{},{},{:e},{}\n",
                e.name, e.estimate, e.method, e.iterations, e.residual, e.converged
            ));
        }
        out
    }
}

fn check_target(spec: &FlatModelSpec, t: &CalibrationTarget) -> Result<()> {
    let d = spec.stocks.len() + spec.perf_vars.len();
    let in_range = |v: usize| ensure(v < d, "target", || format!("variable index {v} out of range"));
    ensure(t.observed.is_finite(), "target", || "observed value must be finite".into())?;
    match t.parameter {
        FreeParameter::Volatility { variable } => {
            in_range(variable)?;
            ensure(t.observed >= 0.0, "target", || {
                format!("a variance statistic cannot be negative, got {}", t.observed)
            })
        }
        FreeParameter::Drift { variable } => in_range(variable),
        FreeParameter::Correlation { first, second } => {
            in_range(first)?;
            in_range(second)?;
            ensure(first != second, "target", || "correlation needs two distinct variables".into())?;
            ensure(t.observed.abs() < 1.0, "target", || {
                format!("correlation target must lie in (-1, 1), got {}", t.observed)
            })
        }
    }
}

/// Matches each target's corrected statistic to its observed value by secant
/// iteration on the corresponding parameter, sweeping over the targets until
/// all residuals are within tolerance. Every evaluation reuses the same seed.
pub fn calibrate_instantaneous(
    targets: &[CalibrationTarget],
    template: &FlatModelSpec,
    config: &CalibrationConfig,
) -> Result<(FlatModelSpec, CalibrationReport)> {
    config.trials.validate()?;
    for t in targets {
        check_target(template, t)?;
    }
    let mut spec = template.clone();
    spec.build()?;
    let mut stats = vec![(0usize, f64::INFINITY); targets.len()];
    let eval = |spec: &FlatModelSpec, t: &CalibrationTarget| -> Result<f64> {
        let model = spec.build()?;
        Ok(cv_corrected_statistic(&model, &t.parameter.statistic(), &config.trials)?.value - t.observed)
    };
    for _ in 0..config.max_sweeps.max(1) {
        for (k, t) in targets.iter().enumerate() {
            let p = t.parameter;
            let get = |s: &FlatModelSpec| p.to_coordinate(s.get(&p));
            let set = |s: &mut FlatModelSpec, x: f64| s.set(&p, p.into_value(x));
            let mut x0 = get(&spec);
            let mut g0 = eval(&spec, t)?;
            let mut iterations = 0;
            if g0.abs() > config.tolerance {
                let mut x1 = p.clamp(x0 + 0.1 * x0.abs().max(0.1));
                let mut trial = spec.clone();
                set(&mut trial, x1);
                let mut g1 = eval(&trial, t)?;
                iterations = 1;
                while g1.abs() > config.tolerance && iterations < config.max_iterations {
                    let slope = (g1 - g0) / (x1 - x0);
                    if slope == 0.0 || !slope.is_finite() {
                        break;
                    }
                    let x2 = p.clamp(x1 - g1 / slope);
                    if x2 == x1 {
                        break;
                    }
                    set(&mut trial, x2);
                    let g2 = match eval(&trial, t) {
                        Ok(g) => g,
                        // an infeasible correlation matrix: step halfway back
                        Err(SppcError::NotPositiveSemidefinite { .. }) => {
                            set(&mut trial, 0.5 * (x1 + x2));
                            eval(&trial, t)?
                        }
                        Err(e) => return Err(e),
                    };
                    (x0, g0) = (x1, g1);
                    (x1, g1) = (get(&trial), g2);
                    iterations += 1;
                }
                if g1.abs() <= g0.abs() {
                    set(&mut spec, x1);
                    g0 = g1;
                } else {
                    set(&mut spec, x0);
                }
            }
            stats[k] = (stats[k].0 + iterations, g0);
        }
        // the last target's residual is current; earlier ones may have moved
        let mut all_ok = true;
        for (k, t) in targets.iter().enumerate() {
            let g = eval(&spec, t)?;
            stats[k].1 = g;
            all_ok &= g.abs() <= config.tolerance;
        }
        if all_ok {
            break;
        }
    }
    let entries = targets
        .iter()
        .zip(&stats)
        .map(|(t, &(iterations, residual))| {
            let raw = spec.get(&t.parameter);
            CalibrationEntry {
                name: t.parameter.label(&spec),
                estimate: raw,
                method: "secant_cv_corrected".into(),
                iterations,
                residual,
                converged: residual.abs() <= config.tolerance,
            }
        })
        .collect();
    Ok((spec, CalibrationReport { entries }))
}

/// Parameters of the correlation-convergence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSettings {
    pub stock_drift: f64,
    pub flow_drift: f64,
    pub stock_vol: f64,
    pub flow_vol: f64,
    /// Accounting period length in years.
    pub period: f64,
    pub step: f64,
    /// Smallest period count reported.
    pub min_periods: usize,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            stock_drift: 0.05,
            flow_drift: 0.05,
            stock_vol: 0.2,
            flow_vol: 0.2,
            period: 1.0,
            step: 1.0 / 256.0,
            min_periods: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub periods: usize,
    /// Path average of the log-ratio sample correlation.
    pub corr_log_ratio: f64,
    /// Path average of the raw period-sum sample correlation.
    pub corr_level: f64,
    /// Paths on which both correlations were defined.
    pub paths_used: usize,
}

/// For each period count `k`, the sample correlation of the `k - 1` log ratios
/// and of the `k` raw period-sums of a stock and a flow, averaged over paths.
pub fn correlation_convergence_experiment(
    population_rho: f64,
    n_paths: usize,
    max_periods: usize,
    seed: u64,
    settings: &ConvergenceSettings,
) -> Result<Vec<ConvergenceRow>> {
    ensure(population_rho.abs() < 1.0, "population_rho", || format!("must lie in (-1, 1), got {population_rho}"))?;
    ensure(n_paths >= 1, "n_paths", || "need at least one path".into())?;
    let min = settings.min_periods.max(4);
    ensure(max_periods >= min, "max_periods", || format!("must be at least {min}, got {max_periods}"))?;
    ensure(settings.period > 0.0, "period", || "must be positive".into())?;
    let horizon = settings.period * max_periods as f64;
    let factor = |name: &str, drift: f64, vol: f64| FactorInput {
        name: name.into(),
        initial: 1.0,
        drift: ParamCurve::constant(drift),
        vol: ParamCurve::constant(vol),
        dividend_yield: ParamCurve::zero(),
    };
    let corr = DMatrix::from_row_slice(2, 2, &[1.0, population_rho, population_rho, 1.0]);
    let model = MarketModel::from_vols_and_correlation(
        horizon,
        ParamCurve::zero(),
        vec![factor("stock", settings.stock_drift, settings.stock_vol)],
        vec![factor("flow", settings.flow_drift, settings.flow_vol)],
        &corr,
        None,
    )?;
    let boundaries: Vec<f64> = (0..=max_periods).map(|k| k as f64 * settings.period).collect();
    let (sim, idx) = trial_simulator(&model, &boundaries, settings.step)?;
    let counts: Vec<usize> = (min..=max_periods).collect();
    let per_path = sim.map_paths(n_paths, seed, |_, p| {
        let (sums, _) = window_values(p, &idx, &[0, 1]);
        let lr: Vec<Vec<f64>> = sums.iter().map(|s| s.windows(2).map(|w| (w[1] / w[0]).ln()).collect()).collect();
        counts
            .iter()
            .map(|&k| (pearson(&lr[0][..k - 1], &lr[1][..k - 1]), pearson(&sums[0][..k], &sums[1][..k])))
            .collect::<Vec<_>>()
    });
    Ok(counts
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (mut a, mut b) = (Vec::with_capacity(n_paths), Vec::with_capacity(n_paths));
            for row in &per_path {
                if let (Some(x), Some(y)) = row[j] {
                    a.push(x);
                    b.push(y);
                }
            }
            ConvergenceRow {
                periods: k,
                corr_log_ratio: if a.is_empty() { f64::NAN } else { mean(&a) },
                corr_level: if b.is_empty() { f64::NAN } else { mean(&b) },
                paths_used: a.len(),
            }
        })
        .collect())
}
