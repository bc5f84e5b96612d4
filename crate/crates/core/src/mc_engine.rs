//! Path simulation under the physical or optimal measure and the Monte Carlo
//! price, plain or with the period-product control variate.
//!
//! Paths are never stored in bulk for pricing: each block of paths is
//! simulated into a reusable buffer and mapped to per-path values, so memory
//! stays flat in the path count.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{AwardContract, CompiledContract, Variant};
use crate::error::{ensure, Result, SppcError};
use crate::grid::TimeGrid;
use crate::linalg::psd_cholesky;
use crate::model::{MarketModel, Measure};
use crate::paths::{PathBatch, PathView};
use crate::quasi_analytic::{price_period_product, quadrature_supported, QuasiMethod};
use crate::rng::PathRng;
use crate::stats::{covariance, mean, mean_with_error, sample_variance, Estimate};

/// Paths per parallel work unit. Results never depend on it.
pub const PATH_BLOCK: usize = 1024;
/// Share of paths used to estimate the regression coefficient.
pub const PILOT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    None,
    UnitCoefficient,
    RegressionCoefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Maximum grid step in years.
    pub step: f64,
    pub seed: u64,
    pub measure: Measure,
    pub cv_mode: CvMode,
    /// Samples for the direct-sampling control mean when quadrature does not
    /// apply; `None` uses `n_paths`.
    pub quasi_samples: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 100_000,
            step: 1.0 / 256.0,
            seed: 0,
            measure: Measure::Optimal,
            cv_mode: CvMode::UnitCoefficient,
            quasi_samples: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.n_paths >= 2, "n_paths", || format!("need at least 2 paths, got {}", self.n_paths))?;
        ensure(self.step > 0.0 && self.step.is_finite(), "step", || format!("must be positive, got {}", self.step))?;
        if let Some(q) = self.quasi_samples {
            ensure(q >= 2, "quasi_samples", || format!("need at least 2 samples, got {q}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingMethod {
    Plain,
    ControlVariate,
    QuasiAnalytic,
}

impl PricingMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PricingMethod::Plain => "plain",
            PricingMethod::ControlVariate => "control_variate",
            PricingMethod::QuasiAnalytic => "quasi_analytic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvComponents {
    pub plain_mean: f64,
    pub prod_mc_mean: f64,
    pub prod_quasi: f64,
    pub prod_quasi_std_error: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub method: PricingMethod,
    pub seed: u64,
    pub components: Option<CvComponents>,
}

/// Per-step increments of the log-levels: exact drift integral plus a factor
/// of the exact increment covariance `∫ V Vᵀ dt`.
pub struct Simulator {
    grid: Vec<f64>,
    n_vars: usize,
    n_stocks: usize,
    drift: Vec<f64>,
    factor: Vec<f64>,
    log_initial: Vec<f64>,
    measure: Measure,
}

impl Simulator {
    pub fn new(model: &MarketModel, grid: &[f64], measure: Measure) -> Result<Self> {
        ensure(grid.len() >= 2 && grid[0] == 0.0, "grid", || "must start at 0 with at least two points".into())?;
        let end = *grid.last().unwrap();
        ensure(end <= model.horizon() + 1e-12, "grid", || {
            format!("grid end {end} exceeds the model horizon {}", model.horizon())
        })?;
        let d = model.dim();
        let segments = model.segments(measure, end)?;
        let steps = grid.len() - 1;
        let mut drift = vec![0.0; steps * d];
        let mut factor = vec![0.0; steps * d * d];
        let mut seg = 0;
        for k in 0..steps {
            let (t0, t1) = (grid[k], grid[k + 1]);
            while seg + 1 < segments.len() && segments[seg].end <= t0 {
                seg += 1;
            }
            let mut cov = DMatrix::<f64>::zeros(d, d);
            let mut j = seg;
            while j < segments.len() && segments[j].start < t1 {
                let s = &segments[j];
                let h = t1.min(s.end) - t0.max(s.start);
                if h > 0.0 {
                    for v in 0..d {
                        drift[k * d + v] += s.log_drift(v) * h;
                    }
                    cov += &s.vol * s.vol.transpose() * h;
                }
                j += 1;
            }
            let l = psd_cholesky(&cov)?;
            for r in 0..d {
                for c in 0..=r {
                    factor[(k * d + r) * d + c] = l[(r, c)];
                }
            }
        }
        Ok(Simulator {
            grid: grid.to_vec(),
            n_vars: d,
            n_stocks: model.n_stocks(),
            drift,
            factor,
            log_initial: (0..d).map(|v| model.initial_level(v).ln()).collect(),
            measure,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Writes the log-levels of path `index` into `out` (variable-major).
    pub fn simulate_into(&self, seed: u64, index: u64, out: &mut [f64], z: &mut [f64]) {
        let (d, n) = (self.n_vars, self.grid.len());
        let mut rng = PathRng::new(seed, index);
        for v in 0..d {
            out[v * n] = self.log_initial[v];
        }
        for k in 0..n - 1 {
            rng.fill_normal(z);
            let f = &self.factor[k * d * d..(k + 1) * d * d];
            for v in 0..d {
                let shock: f64 = (0..=v).map(|c| f[v * d + c] * z[c]).sum();
                out[v * n + k + 1] = out[v * n + k] + self.drift[k * d + v] + shock;
            }
        }
    }

    /// Simulates paths `0..n_paths` and maps each to a value, in path order.
    pub fn map_paths<T, F>(&self, n_paths: usize, seed: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &PathView<'_>) -> T + Sync,
    {
        let n_blocks = n_paths.div_ceil(PATH_BLOCK);
        let stride = self.n_vars * self.grid.len();
        let blocks: Vec<Vec<T>> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut buf = vec![0.0; stride];
                let mut z = vec![0.0; self.n_vars];
                let hi = ((b + 1) * PATH_BLOCK).min(n_paths);
                (b * PATH_BLOCK..hi)
                    .map(|i| {
                        self.simulate_into(seed, i as u64, &mut buf, &mut z);
                        f(i, &PathView::new(&self.grid, &buf))
                    })
                    .collect()
            })
            .collect();
        blocks.into_iter().flatten().collect()
    }

    pub fn simulate(&self, n_paths: usize, seed: u64) -> PathBatch {
        let stride = self.n_vars * self.grid.len();
        let rows = self.map_paths(n_paths, seed, |_, p| p.logs.to_vec());
        let mut log_levels = Vec::with_capacity(n_paths * stride);
        for r in rows {
            log_levels.extend_from_slice(&r);
        }
        PathBatch {
            grid: self.grid.clone(),
            n_vars: self.n_vars,
            n_stocks: self.n_stocks,
            log_levels,
            measure: self.measure,
            seed,
        }
    }
}

/// Simulates and stores `config.n_paths` paths on `grid`.
pub fn simulate_paths(model: &MarketModel, grid: &TimeGrid, config: &SimConfig) -> Result<PathBatch> {
    config.validate()?;
    let sim = Simulator::new(model, grid.times(), config.measure)?;
    Ok(sim.simulate(config.n_paths, config.seed))
}

/// Grid for a contract: uniform steps plus every contract date and model knot
/// up to the payment date.
pub fn pricing_grid(model: &MarketModel, contract: &AwardContract, step: f64) -> Result<TimeGrid> {
    pricing_grid_with(model, contract, &[], step)
}

/// [`pricing_grid`] with additional dates forced onto the grid.
pub fn pricing_grid_with(model: &MarketModel, contract: &AwardContract, extra: &[f64], step: f64) -> Result<TimeGrid> {
    contract.validate_against(model)?;
    let end = contract.payment_date;
    let mut dates = contract.dates();
    dates.extend_from_slice(extra);
    dates.extend(model.knots().iter().copied().filter(|&k| k > 0.0 && k < end));
    TimeGrid::build(end, step, &dates)
}

fn contract_paths<T: Send>(
    model: &MarketModel,
    contract: &AwardContract,
    extra_dates: &[f64],
    config: &SimConfig,
    f: impl Fn(&CompiledContract, &PathView<'_>) -> T + Sync,
) -> Result<Vec<T>> {
    config.validate()?;
    let grid = pricing_grid_with(model, contract, extra_dates, config.step)?;
    let compiled = CompiledContract::new(contract, model, grid.times())?;
    let sim = Simulator::new(model, grid.times(), config.measure)?;
    Ok(sim.map_paths(config.n_paths, config.seed, |_, p| f(&compiled, p)))
}

/// Mean discounted payoff with the period-sum indicators.
pub fn price_plain(model: &MarketModel, contract: &AwardContract, config: &SimConfig) -> Result<PricingResult> {
    price_plain_with_dates(model, contract, &[], config)
}

/// [`price_plain`] on a grid that also contains `extra_dates`, so that two
/// contracts can be priced on identical paths.
pub fn price_plain_with_dates(
    model: &MarketModel,
    contract: &AwardContract,
    extra_dates: &[f64],
    config: &SimConfig,
) -> Result<PricingResult> {
    let values = contract_paths(model, contract, extra_dates, config, |c, p| c.discounted(p, Variant::Sum))?;
    let e = mean_with_error(&values);
    Ok(PricingResult {
        estimate: contract.shares * e.value,
        std_error: contract.shares * e.std_error,
        n_paths: config.n_paths,
        method: PricingMethod::Plain,
        seed: config.seed,
        components: None,
    })
}

/// Seed offset that separates the control-mean sampler from the path streams.
const QUASI_SEED_SALT: u64 = 0x5eed_c0de_0000_0001;

/// Control-variate price. Contracts without a period-sum condition fall back
/// to [`price_plain`]; the result's `method` reports which one ran.
pub fn price_with_cv(model: &MarketModel, contract: &AwardContract, config: &SimConfig) -> Result<PricingResult> {
    if config.cv_mode == CvMode::None || !contract.has_period_sum() {
        return price_plain(model, contract, config);
    }
    let pairs = contract_paths(model, contract, &[], config, |c, p| {
        (c.discounted(p, Variant::Sum), c.discounted(p, Variant::Prod))
    })?;
    let quasi_method = if quadrature_supported(contract) {
        QuasiMethod::Quadrature
    } else {
        QuasiMethod::DirectSampling {
            n_samples: config.quasi_samples.unwrap_or(config.n_paths),
            seed: config.seed ^ QUASI_SEED_SALT,
        }
    };
    let quasi = price_period_product(model, contract, config.measure, quasi_method).map_err(|e| match e {
        SppcError::Unsupported(msg) => SppcError::Unsupported(format!("{msg}; use the plain method")),
        other => other,
    })?;
    let q = contract.shares;
    let (ys, yp): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (coefficient, ys, yp) = match config.cv_mode {
        CvMode::RegressionCoefficient => {
            let pilot = ((ys.len() as f64 * PILOT_FRACTION).ceil() as usize).clamp(2, ys.len() - 2);
            let var = sample_variance(&yp[..pilot]);
            let b = if var > 0.0 { covariance(&ys[..pilot], &yp[..pilot]) / var } else { 0.0 };
            (b, &ys[pilot..], &yp[pilot..])
        }
        _ => (1.0, &ys[..], &yp[..]),
    };
    let diffs: Vec<f64> = ys.iter().zip(yp).map(|(s, p)| s - coefficient * p).collect();
    let d = mean_with_error(&diffs);
    let plain_mean = q * mean(ys);
    let prod_mc_mean = q * coefficient * mean(yp);
    let prod_quasi = coefficient * quasi.estimate;
    let quasi_se = coefficient.abs() * quasi.std_error;
    Ok(PricingResult {
        estimate: plain_mean + prod_quasi - prod_mc_mean,
        std_error: ((q * d.std_error).powi(2) + quasi_se.powi(2)).sqrt(),
        n_paths: config.n_paths,
        method: PricingMethod::ControlVariate,
        seed: config.seed,
        components: Some(CvComponents {
            plain_mean,
            prod_mc_mean,
            prod_quasi,
            prod_quasi_std_error: quasi_se,
            coefficient,
        }),
    })
}

/// Probability that every condition is met, under `config.measure`.
pub fn achievement_probability(model: &MarketModel, contract: &AwardContract, config: &SimConfig) -> Result<Estimate> {
    if contract.conditions.is_empty() {
        config.validate()?;
        contract.validate_against(model)?;
        return Ok(Estimate { value: 1.0, std_error: 0.0 });
    }
    let values = contract_paths(model, contract, &[], config, |c, p| c.indicator(p, Variant::Sum))?;
    Ok(mean_with_error(&values))
}
