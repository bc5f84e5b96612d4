//! Exact joint Gaussian law of the log-functionals that drive a contract, and
//! the period-product price computed from it.
//!
//! Every coordinate is a weighted time integral of one variable's log-dynamics,
//!
//! ```text
//! x = c + ∫₀ᵀ g(t) w(t) dt + ∫₀ᵀ w(t) row(t) · dŵ(t)
//! ```
//!
//! with `g` the log-drift, `row` the volatility row and `w` a piecewise-linear
//! weight: `1{t ≤ H}` for a level at `H`, `1{t₀ ≤ t ≤ t₁}` for a log ratio and
//! `1{t ≤ a} + (b - t)/(b - a)·1{a ≤ t ≤ b}` for the log of a period-product
//! (the stochastic Fubini rearrangement of the window average of `log P`).
//! Coefficients are constant between model knots, so both the means and the
//! covariances `∫ w w' ⟨row, row'⟩ dt` integrate in closed form.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::contract::{AwardContract, ConditionKind, PayoffKind, StrikeRule};
use crate::error::{Result, SppcError};
use crate::linalg::symmetric_factor;
use crate::mc_engine::{PricingMethod, PricingResult};
use crate::model::{MarketModel, Measure, Segment};
use crate::rng::PathRng;
use crate::stats::mean_with_error;

/// Nodes of the Gauss–Legendre rule used by [`QuasiMethod::Quadrature`].
pub const QUADRATURE_NODES: usize = 256;
/// Half-width, in standard deviations, of the integration box.
pub const QUADRATURE_BOX_SD: f64 = 8.0;

const SAMPLE_BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Coordinate {
    /// `log S_i(T)` at the payment date.
    StockAtPayment { stock: usize, time: f64 },
    /// `log S_i(T_v)`, needed by index-linked strikes.
    StockAtVesting { stock: usize, time: f64 },
    /// `log P_PROD` over `[start, end]`.
    PeriodProduct { variable: usize, start: f64, end: f64 },
    /// `log P(to) / P(from)`.
    StageRatio { variable: usize, from: f64, to: f64 },
    /// `log P(T_v)`.
    TerminalLevel { variable: usize, time: f64 },
}

impl Coordinate {
    /// Human-readable label using the model's variable names.
    pub fn label(&self, model: &MarketModel) -> String {
        let perf = |v: usize| model.perf_vars()[v].name.as_str();
        match self {
            Coordinate::StockAtPayment { stock, time } => {
                format!("log_stock[{}]@{time}", model.stocks()[*stock].name)
            }
            Coordinate::StockAtVesting { stock, time } => {
                format!("log_stock[{}]@{time}", model.stocks()[*stock].name)
            }
            Coordinate::PeriodProduct { variable, start, end } => {
                format!("log_period_product[{}]@{start}..{end}", perf(*variable))
            }
            Coordinate::StageRatio { variable, from, to } => {
                format!("log_stage_ratio[{}]@{from}..{to}", perf(*variable))
            }
            Coordinate::TerminalLevel { variable, time } => {
                format!("log_level[{}]@{time}", perf(*variable))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub labels: Vec<Coordinate>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, c: &Coordinate) -> Option<usize> {
        self.labels.iter().position(|l| l == c)
    }

    /// CSV with one row per coordinate: label, mean, then the covariance row.
    pub fn to_csv(&self, model: &MarketModel) -> String {
        let labels: Vec<String> = self.labels.iter().map(|l| l.label(model)).collect();
        let mut out = String::from("label,mean");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in labels.iter().enumerate() {
            out.push_str(&format!("{l},{:e}", self.mean[i]));
            for j in 0..self.dim() {
                out.push_str(&format!(",{:e}", self.covariance[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct WeightPiece {
    start: f64,
    end: f64,
    alpha: f64,
    beta: f64,
}

/// A coordinate expressed as `constant + weighted integral` of one variable.
#[derive(Debug, Clone)]
pub(crate) struct Functional {
    var: usize,
    constant: f64,
    pieces: Vec<WeightPiece>,
}

impl Functional {
    pub(crate) fn level(model: &MarketModel, var: usize, at: f64) -> Self {
        Functional {
            var,
            constant: model.initial_level(var).ln(),
            pieces: vec![WeightPiece { start: 0.0, end: at, alpha: 1.0, beta: 0.0 }],
        }
    }

    pub(crate) fn log_ratio(var: usize, from: f64, to: f64) -> Self {
        Functional { var, constant: 0.0, pieces: vec![WeightPiece { start: from, end: to, alpha: 1.0, beta: 0.0 }] }
    }

    pub(crate) fn period_product(model: &MarketModel, var: usize, a: f64, b: f64) -> Self {
        let len = b - a;
        let mut pieces = Vec::with_capacity(2);
        if a > 0.0 {
            pieces.push(WeightPiece { start: 0.0, end: a, alpha: 1.0, beta: 0.0 });
        }
        pieces.push(WeightPiece { start: a, end: b, alpha: b / len, beta: -1.0 / len });
        Functional { var, constant: (len * model.initial_level(var)).ln(), pieces }
    }

    fn end(&self) -> f64 {
        self.pieces.iter().map(|p| p.end).fold(0.0, f64::max)
    }
}

/// `∫ₛᵉ (α + βt)(α' + β't) dt`, evaluated in the local variable `u = t - s`.
fn product_integral(s: f64, e: f64, p: &WeightPiece, q: &WeightPiece) -> f64 {
    let h = e - s;
    if h <= 0.0 {
        return 0.0;
    }
    let (a1, b1) = (p.alpha + p.beta * s, p.beta);
    let (a2, b2) = (q.alpha + q.beta * s, q.beta);
    a1 * a2 * h + (a1 * b2 + a2 * b1) * h * h / 2.0 + b1 * b2 * h * h * h / 3.0
}

fn weight_integral(s: f64, e: f64, p: &WeightPiece) -> f64 {
    let h = e - s;
    if h <= 0.0 {
        return 0.0;
    }
    (p.alpha + p.beta * s) * h + p.beta * h * h / 2.0
}

/// Mean vector and covariance of a set of functionals over the given segments.
pub(crate) fn functional_law(segments: &[Segment], fs: &[Functional]) -> (DVector<f64>, DMatrix<f64>) {
    let k = fs.len();
    let mut mean = DVector::from_iterator(k, fs.iter().map(|f| f.constant));
    let mut cov = DMatrix::zeros(k, k);
    for seg in segments {
        for (i, f) in fs.iter().enumerate() {
            let g = seg.log_drift(f.var);
            for p in &f.pieces {
                mean[i] += g * weight_integral(seg.start.max(p.start), seg.end.min(p.end), p);
            }
            for (j, h) in fs.iter().enumerate().skip(i) {
                let inner = seg.vol.row(f.var).dot(&seg.vol.row(h.var));
                if inner == 0.0 {
                    continue;
                }
                let mut acc = 0.0;
                for p in &f.pieces {
                    for q in &h.pieces {
                        let s = seg.start.max(p.start).max(q.start);
                        let e = seg.end.min(p.end).min(q.end);
                        acc += product_integral(s, e, p, q);
                    }
                }
                cov[(i, j)] += inner * acc;
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    (mean, cov)
}

pub(crate) fn law_of(model: &MarketModel, measure: Measure, fs: &[Functional]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let until = fs.iter().map(Functional::end).fold(0.0, f64::max);
    if until > model.horizon() + 1e-12 {
        return Err(SppcError::invalid(
            "functional",
            format!("date {until} lies beyond the model horizon {}", model.horizon()),
        ));
    }
    let segments = model.segments(measure, until)?;
    Ok(functional_law(&segments, fs))
}

fn coordinates(model: &MarketModel, contract: &AwardContract) -> Result<Vec<(Coordinate, Functional)>> {
    contract.validate_against(model)?;
    let m = model.n_stocks();
    let t = contract.payment_date;
    let tv = contract.vesting_date;
    let mut out: Vec<(Coordinate, Functional)> =
        (0..m).map(|i| (Coordinate::StockAtPayment { stock: i, time: t }, Functional::level(model, i, t))).collect();
    if let PayoffKind::EuropeanCall { strike: StrikeRule::IndexLinked { reference, .. }, .. } = &contract.payoff {
        out.push((
            Coordinate::StockAtVesting { stock: *reference, time: tv },
            Functional::level(model, *reference, tv),
        ));
    }
    for c in &contract.conditions {
        let var = m + c.variable;
        let entry = match &c.kind {
            ConditionKind::PeriodSum { start, end, .. } => (
                Coordinate::PeriodProduct { variable: c.variable, start: *start, end: *end },
                Functional::period_product(model, var, *start, *end),
            ),
            ConditionKind::StagedRatio { stage_times, .. } => {
                if stage_times.len() != 2 {
                    return Err(SppcError::Unsupported(format!(
                        "staged-ratio condition with {} stages has no closed-form law; only single-stage \
                         conditions are supported, price it with the plain Monte Carlo method",
                        stage_times.len() - 1
                    )));
                }
                let (from, to) = (stage_times[0], stage_times[1]);
                (Coordinate::StageRatio { variable: c.variable, from, to }, Functional::log_ratio(var, from, to))
            }
            ConditionKind::TerminalLevel { .. } => {
                (Coordinate::TerminalLevel { variable: c.variable, time: tv }, Functional::level(model, var, tv))
            }
        };
        out.push(entry);
    }
    Ok(out)
}

/// Joint Gaussian law of the contract's log-functionals under `measure`.
pub fn gaussian_moments(model: &MarketModel, contract: &AwardContract, measure: Measure) -> Result<GaussianLaw> {
    let coords = coordinates(model, contract)?;
    let (labels, fs): (Vec<_>, Vec<_>) = coords.into_iter().unzip();
    let (mean, covariance) = law_of(model, measure, &fs)?;
    Ok(GaussianLaw { labels, mean, covariance })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuasiMethod {
    DirectSampling { n_samples: usize, seed: u64 },
    Quadrature,
}

#[derive(Debug, Clone)]
enum LawPayoff {
    Stock { ix: usize },
    Call { ix: usize, strike: f64 },
    IndexCall { ix: usize, ref_ix: usize, grant_price: f64, log_ref0: f64 },
    Cash { amount: f64 },
}

/// A contract evaluated on a draw of the Gaussian coordinates.
#[derive(Debug, Clone)]
struct LawContract {
    payoff: LawPayoff,
    conditions: Vec<(usize, f64)>,
    discount: f64,
}

fn log_goal(goal: f64) -> f64 {
    if goal > 0.0 {
        goal.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl LawContract {
    fn new(model: &MarketModel, contract: &AwardContract, law: &GaussianLaw) -> Self {
        let t = contract.payment_date;
        let stock_ix = |s: usize| law.index_of(&Coordinate::StockAtPayment { stock: s, time: t }).unwrap();
        let payoff = match &contract.payoff {
            PayoffKind::StockGrant { stock } => LawPayoff::Stock { ix: stock_ix(*stock) },
            PayoffKind::EuropeanCall { stock, strike: StrikeRule::Fixed { strike } } => {
                LawPayoff::Call { ix: stock_ix(*stock), strike: *strike }
            }
            PayoffKind::EuropeanCall { stock, strike: StrikeRule::IndexLinked { reference, grant_price } } => {
                LawPayoff::IndexCall {
                    ix: stock_ix(*stock),
                    ref_ix: law
                        .index_of(&Coordinate::StockAtVesting { stock: *reference, time: contract.vesting_date })
                        .unwrap(),
                    grant_price: *grant_price,
                    log_ref0: model.stocks()[*reference].initial_price.ln(),
                }
            }
            PayoffKind::Cash { amount } => LawPayoff::Cash { amount: *amount },
        };
        let m = model.n_stocks();
        let conditions = contract
            .conditions
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let goal = match &c.kind {
                    ConditionKind::PeriodSum { goal, .. } | ConditionKind::TerminalLevel { goal } => *goal,
                    ConditionKind::StagedRatio { goals, .. } => goals[0],
                };
                (
                    m + usize::from(matches!(law.labels.get(m), Some(Coordinate::StockAtVesting { .. }))) + k,
                    log_goal(goal),
                )
            })
            .collect();
        LawContract { payoff, conditions, discount: model.discount_factor(t) }
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.conditions.iter().any(|(ix, k)| x[*ix] < *k) {
            return 0.0;
        }
        let c = match &self.payoff {
            LawPayoff::Stock { ix } => x[*ix].exp(),
            LawPayoff::Call { ix, strike } => (x[*ix].exp() - strike).max(0.0),
            LawPayoff::IndexCall { ix, ref_ix, grant_price, log_ref0 } => {
                (x[*ix].exp() - grant_price * (x[*ref_ix] - log_ref0).exp()).max(0.0)
            }
            LawPayoff::Cash { amount } => *amount,
        };
        self.discount * c
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[(e^X - K)⁺]` for `X ~ N(m, v)`.
fn lognormal_call(m: f64, v: f64, strike: f64) -> f64 {
    if strike <= 0.0 {
        return (m + 0.5 * v).exp() - strike;
    }
    if v <= 0.0 {
        return (m.exp() - strike).max(0.0);
    }
    let sd = v.sqrt();
    let d1 = (m - strike.ln() + v) / sd;
    (m + 0.5 * v).exp() * normal_cdf(d1) - strike * normal_cdf(d1 - sd)
}

/// `E[(e^X - e^Y)⁺]` for jointly normal `X, Y`.
fn exchange_option(mx: f64, vx: f64, my: f64, vy: f64, cxy: f64) -> f64 {
    let (ex, ey) = ((mx + 0.5 * vx).exp(), (my + 0.5 * vy).exp());
    let v = (vx + vy - 2.0 * cxy).max(0.0);
    if ey == 0.0 {
        return ex;
    }
    if v <= 1e-300 {
        return (ex - ey).max(0.0);
    }
    let sd = v.sqrt();
    let d1 = ((ex / ey).ln() + 0.5 * v) / sd;
    ex * normal_cdf(d1) - ey * normal_cdf(d1 - sd)
}

fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(QUADRATURE_NODES).unwrap()))
}

/// Unconditional expectation of the discounted payoff, per share, from the law.
fn unconditional_value(lc: &LawContract, law: &GaussianLaw) -> f64 {
    let m = &law.mean;
    let c = &law.covariance;
    let v = match &lc.payoff {
        LawPayoff::Stock { ix } => (m[*ix] + 0.5 * c[(*ix, *ix)]).exp(),
        LawPayoff::Call { ix, strike } => lognormal_call(m[*ix], c[(*ix, *ix)], *strike),
        LawPayoff::IndexCall { ix, ref_ix, grant_price, log_ref0 } => {
            if *grant_price == 0.0 {
                (m[*ix] + 0.5 * c[(*ix, *ix)]).exp()
            } else {
                let my = grant_price.ln() + m[*ref_ix] - log_ref0;
                exchange_option(m[*ix], c[(*ix, *ix)], my, c[(*ref_ix, *ref_ix)], c[(*ix, *ref_ix)])
            }
        }
        LawPayoff::Cash { amount } => *amount,
    };
    lc.discount * v
}

fn quadrature_value(lc: &LawContract, law: &GaussianLaw) -> Result<f64> {
    if matches!(lc.payoff, LawPayoff::IndexCall { .. }) && !lc.conditions.is_empty() {
        return Err(SppcError::Unsupported(
            "quadrature handles one stock coordinate and one condition; index-linked strikes need \
             direct sampling"
                .into(),
        ));
    }
    match lc.conditions.as_slice() {
        [] => Ok(unconditional_value(lc, law)),
        [(cix, k)] => {
            let (mc, vc) = (law.mean[*cix], law.covariance[(*cix, *cix)]);
            if vc <= 0.0 {
                return Ok(if mc >= *k { unconditional_value(lc, law) } else { 0.0 });
            }
            let sc = vc.sqrt();
            let lo = k.max(mc - QUADRATURE_BOX_SD * sc);
            let hi = mc + QUADRATURE_BOX_SD * sc;
            if lo >= hi {
                return Ok(0.0);
            }
            // conditional law of the stock coordinate given the condition coordinate = y
            let stock = match &lc.payoff {
                LawPayoff::Stock { ix } | LawPayoff::Call { ix, .. } => Some(*ix),
                _ => None,
            };
            let (ms, slope, cond_var) = match stock {
                Some(s) => {
                    let cov = law.covariance[(s, *cix)];
                    let slope = cov / vc;
                    (law.mean[s], slope, (law.covariance[(s, s)] - cov * slope).max(0.0))
                }
                None => (0.0, 0.0, 0.0),
            };
            let inner = |y: f64| -> f64 {
                let m = ms + slope * (y - mc);
                match &lc.payoff {
                    LawPayoff::Stock { .. } => (m + 0.5 * cond_var).exp(),
                    LawPayoff::Call { strike, .. } => lognormal_call(m, cond_var, *strike),
                    LawPayoff::Cash { amount } => *amount,
                    LawPayoff::IndexCall { .. } => unreachable!(),
                }
            };
            let f = |y: f64| normal_pdf((y - mc) / sc) / sc * inner(y);
            let rule = gauss_legendre();
            // split at the payoff kink so each panel is smooth
            let mut cuts = vec![lo, hi];
            if let LawPayoff::Call { strike, .. } = &lc.payoff {
                if *strike > 0.0 && slope != 0.0 {
                    let y = mc + (strike.ln() - ms) / slope;
                    if y > lo && y < hi {
                        cuts.insert(1, y);
                    }
                }
            }
            let total: f64 = cuts.windows(2).map(|w| rule.integrate(w[0], w[1], f)).sum();
            Ok(lc.discount * total)
        }
        _ => Err(SppcError::Unsupported(
            "quadrature handles one stock coordinate and one condition; use direct sampling".into(),
        )),
    }
}

/// Draws `n` vectors from the law with per-sample counter-based streams.
fn sample_values(law: &GaussianLaw, n: usize, seed: u64, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Vec<f64>> {
    let factor = symmetric_factor(&law.covariance)?;
    let k = law.dim();
    let n_blocks = n.div_ceil(SAMPLE_BLOCK);
    let blocks: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (b * SAMPLE_BLOCK, ((b + 1) * SAMPLE_BLOCK).min(n));
            let mut z = vec![0.0; k];
            let mut x = vec![0.0; k];
            (lo..hi)
                .map(|i| {
                    PathRng::new(seed, i as u64).fill_normal(&mut z);
                    for r in 0..k {
                        x[r] = law.mean[r] + (0..k).map(|c| factor[(r, c)] * z[c]).sum::<f64>();
                    }
                    f(&x)
                })
                .collect()
        })
        .collect();
    Ok(blocks.concat())
}

/// Price of the period-product payment, scaled by the contract's share count.
pub fn price_period_product(
    model: &MarketModel,
    contract: &AwardContract,
    measure: Measure,
    method: QuasiMethod,
) -> Result<PricingResult> {
    let law = gaussian_moments(model, contract, measure)?;
    let lc = LawContract::new(model, contract, &law);
    let q = contract.shares;
    match method {
        QuasiMethod::Quadrature => Ok(PricingResult {
            estimate: q * quadrature_value(&lc, &law)?,
            std_error: 0.0,
            n_paths: 0,
            method: PricingMethod::QuasiAnalytic,
            seed: 0,
            components: None,
        }),
        QuasiMethod::DirectSampling { n_samples, seed } => {
            if n_samples < 2 {
                return Err(SppcError::invalid("n_samples", "need at least two samples"));
            }
            let values = sample_values(&law, n_samples, seed, |x| lc.value(x))?;
            let e = mean_with_error(&values);
            Ok(PricingResult {
                estimate: q * e.value,
                std_error: q * e.std_error,
                n_paths: n_samples,
                method: PricingMethod::QuasiAnalytic,
                seed,
                components: None,
            })
        }
    }
}

/// True when [`QuasiMethod::Quadrature`] can price the contract.
pub fn quadrature_supported(contract: &AwardContract) -> bool {
    let index_linked =
        matches!(contract.payoff, PayoffKind::EuropeanCall { strike: StrikeRule::IndexLinked { .. }, .. });
    let single_stage = contract.conditions.iter().all(|c| match &c.kind {
        ConditionKind::StagedRatio { stage_times, .. } => stage_times.len() == 2,
        _ => true,
    });
    single_stage && (contract.conditions.is_empty() || (contract.conditions.len() == 1 && !index_linked))
}

/// Closed-form value of the contract with its conditions removed, per share.
pub fn unconditional_closed_form(model: &MarketModel, contract: &AwardContract, measure: Measure) -> Result<f64> {
    let bare = contract.without_conditions();
    let law = gaussian_moments(model, &bare, measure)?;
    let lc = LawContract::new(model, &bare, &law);
    Ok(unconditional_value(&lc, &law))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::PerformanceCondition;
    use crate::curve::ParamCurve;
    use crate::model::{PerfVariable, Stock};

    fn c(v: f64) -> ParamCurve {
        ParamCurve::constant(v)
    }

    fn model(sigma_s: f64, perf_row: [f64; 2], r: f64, d: f64) -> MarketModel {
        MarketModel::new(
            2.0,
            c(r),
            vec![Stock {
                name: "S".into(),
                initial_price: 100.0,
                dividend_yield: c(d),
                drift: c(0.08),
                vol_row: vec![c(sigma_s), c(0.0)],
            }],
            vec![PerfVariable {
                name: "P".into(),
                initial_level: 50.0,
                drift: c(0.05),
                vol_row: vec![c(perf_row[0]), c(perf_row[1])],
            }],
            None,
        )
        .unwrap()
    }

    fn grant(conditions: Vec<PerformanceCondition>) -> AwardContract {
        AwardContract::new(1.0, 1.0 + 1e-9, PayoffKind::StockGrant { stock: 0 }, conditions, 1.0).unwrap()
    }

    #[test]
    fn stock_coordinate_moments() {
        let m = model(0.2, [0.0, 0.1], 0.0, 0.0);
        let k = AwardContract::new(0.5, 1.0, PayoffKind::StockGrant { stock: 0 }, vec![], 1.0).unwrap();
        let law = gaussian_moments(&m, &k, Measure::Optimal).unwrap();
        assert!((law.covariance[(0, 0)] - 0.04).abs() < 1e-15);
        assert!((law.mean[0] - (100f64.ln() - 0.02)).abs() < 1e-14);
    }

    #[test]
    fn period_product_variance_on_initial_window() {
        // window [0, b] with constant row: ∫₀ᵇ ((b-t)/b)² σ² dt = σ² b / 3
        let m = model(0.2, [0.06, 0.08], 0.01, 0.0);
        let cond =
            PerformanceCondition { variable: 0, kind: ConditionKind::PeriodSum { start: 0.0, end: 0.9, goal: 1.0 } };
        let law = gaussian_moments(&m, &grant(vec![cond]), Measure::Physical).unwrap();
        assert!((law.covariance[(1, 1)] - 0.01 * 0.9 / 3.0).abs() < 1e-15);
        // mean: log(b P0) + ∫₀ᵇ g (b-t)/b dt = log(b P0) + g b / 2
        let g = 0.05 - 0.5 * 0.01;
        assert!((law.mean[1] - ((0.9 * 50.0f64).ln() + g * 0.45)).abs() < 1e-14);
        // cross term: ∫₀ᵇ (b-t)/b · 0.2·0.06 dt = 0.012 b / 2
        assert!((law.covariance[(0, 1)] - 0.012 * 0.45).abs() < 1e-15);
    }

    #[test]
    fn zero_vol_law_is_degenerate() {
        let m = model(0.0, [0.0, 0.0], 0.02, 0.0);
        let cond = PerformanceCondition { variable: 0, kind: ConditionKind::TerminalLevel { goal: 1.0 } };
        let law = gaussian_moments(&m, &grant(vec![cond]), Measure::Physical).unwrap();
        assert_eq!(law.covariance.abs().max(), 0.0);
        assert!((law.mean[1] - (50f64.ln() + 0.05)).abs() < 1e-14);
    }

    #[test]
    fn multi_stage_is_unsupported() {
        let m = model(0.2, [0.05, 0.1], 0.0, 0.0);
        let cond = PerformanceCondition {
            variable: 0,
            kind: ConditionKind::StagedRatio { stage_times: vec![0.0, 0.5, 1.0], goals: vec![1.0, 1.0] },
        };
        let err = gaussian_moments(&m, &grant(vec![cond]), Measure::Optimal).unwrap_err();
        assert!(matches!(err, SppcError::Unsupported(_)));
    }

    #[test]
    fn quadrature_unconditional_forward() {
        let m = model(0.3, [0.1, 0.1], 0.03, 0.02);
        let k = AwardContract::new(1.0, 2.0, PayoffKind::StockGrant { stock: 0 }, vec![], 1.0).unwrap();
        let p = price_period_product(&m, &k, Measure::Optimal, QuasiMethod::Quadrature).unwrap();
        assert!((p.estimate - 100.0 * (-0.04f64).exp()).abs() < 1e-9);
        // saturated goal: the integration box sits entirely above the goal
        let cond = PerformanceCondition { variable: 0, kind: ConditionKind::TerminalLevel { goal: 1e-12 } };
        let k2 = AwardContract { conditions: vec![cond], ..k };
        let p2 = price_period_product(&m, &k2, Measure::Optimal, QuasiMethod::Quadrature).unwrap();
        assert!((p2.estimate - 100.0 * (-0.04f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn quadrature_call_matches_black_scholes() {
        let m = model(0.25, [0.0, 0.1], 0.03, 0.0);
        let k = AwardContract::new(
            1.0,
            2.0,
            PayoffKind::EuropeanCall { stock: 0, strike: StrikeRule::Fixed { strike: 110.0 } },
            vec![],
            1.0,
        )
        .unwrap();
        let p = price_period_product(&m, &k, Measure::Optimal, QuasiMethod::Quadrature).unwrap();
        // Black–Scholes, S=100, K=110, r=3%, σ=25%, T=2
        let (s, kk, r, v, t) = (100.0f64, 110.0f64, 0.03f64, 0.25f64, 2.0f64);
        let d1 = ((s / kk).ln() + (r + 0.5 * v * v) * t) / (v * t.sqrt());
        let bs = s * normal_cdf(d1) - kk * (-r * t).exp() * normal_cdf(d1 - v * t.sqrt());
        assert!((p.estimate - bs).abs() < 1e-9);
    }

    #[test]
    fn quadrature_against_direct_sampling() {
        let m = model(0.25, [0.08, 0.12], 0.02, 0.0);
        let cond =
            PerformanceCondition { variable: 0, kind: ConditionKind::PeriodSum { start: 0.0, end: 1.0, goal: 52.0 } };
        for payoff in [
            PayoffKind::StockGrant { stock: 0 },
            PayoffKind::EuropeanCall { stock: 0, strike: StrikeRule::Fixed { strike: 100.0 } },
            PayoffKind::Cash { amount: 10.0 },
        ] {
            let k = AwardContract::new(1.0, 2.0, payoff, vec![cond.clone()], 1.0).unwrap();
            let quad = price_period_product(&m, &k, Measure::Optimal, QuasiMethod::Quadrature).unwrap();
            let ds = price_period_product(
                &m,
                &k,
                Measure::Optimal,
                QuasiMethod::DirectSampling { n_samples: 200_000, seed: 9 },
            )
            .unwrap();
            assert!(
                (quad.estimate - ds.estimate).abs() < 3.0 * ds.std_error,
                "{} vs {} ± {}",
                quad.estimate,
                ds.estimate,
                ds.std_error
            );
        }
    }

    #[test]
    fn index_linked_closed_form_against_sampling() {
        let m = MarketModel::from_vols_and_correlation(
            2.0,
            c(0.02),
            vec![
                crate::model::FactorInput {
                    name: "S".into(),
                    initial: 100.0,
                    drift: c(0.07),
                    vol: c(0.3),
                    dividend_yield: c(0.01),
                },
                crate::model::FactorInput {
                    name: "I".into(),
                    initial: 2000.0,
                    drift: c(0.06),
                    vol: c(0.2),
                    dividend_yield: c(0.02),
                },
            ],
            vec![],
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]),
            None,
        )
        .unwrap();
        let k = AwardContract::new(
            1.0,
            2.0,
            PayoffKind::EuropeanCall { stock: 0, strike: StrikeRule::IndexLinked { reference: 1, grant_price: 100.0 } },
            vec![],
            1.0,
        )
        .unwrap();
        let closed = unconditional_closed_form(&m, &k, Measure::Optimal).unwrap();
        let ds =
            price_period_product(&m, &k, Measure::Optimal, QuasiMethod::DirectSampling { n_samples: 400_000, seed: 3 })
                .unwrap();
        assert!((closed - ds.estimate).abs() < 3.0 * ds.std_error);
    }

    #[test]
    fn scaling_initial_level_shifts_mean_only() {
        let cond =
            PerformanceCondition { variable: 0, kind: ConditionKind::PeriodSum { start: 0.2, end: 0.8, goal: 1.0 } };
        let a = model(0.2, [0.06, 0.08], 0.01, 0.0);
        let mut pv = a.perf_vars().to_vec();
        pv[0].initial_level *= 3.0;
        let b = MarketModel::new(a.horizon(), a.rate().clone(), a.stocks().to_vec(), pv, None).unwrap();
        let la = gaussian_moments(&a, &grant(vec![cond.clone()]), Measure::Optimal).unwrap();
        let lb = gaussian_moments(&b, &grant(vec![cond]), Measure::Optimal).unwrap();
        assert!((lb.mean[1] - la.mean[1] - 3f64.ln()).abs() < 1e-14);
        assert_eq!(la.mean[0], lb.mean[0]);
        assert_eq!(la.covariance, lb.covariance);
    }
}
