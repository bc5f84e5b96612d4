//! Reference models and contracts shared by the test suites and benchmarks.

use crate::contract::{AwardContract, ConditionKind, PayoffKind, PerformanceCondition, StrikeRule};
use crate::curve::ParamCurve;
use crate::error::Result;
use crate::mc_engine::{pricing_grid, Simulator};
use crate::model::{MarketModel, Measure, OptimalPortfolio, PerfVariable, Stock};
use crate::quasi_analytic::{Coordinate, GaussianLaw};
use crate::rng::PathRng;

fn c(v: f64) -> ParamCurve {
    ParamCurve::constant(v)
}

/// One stock and one sales flow with correlation 0.4 over three years.
pub fn benchmark_model() -> MarketModel {
    let rho: f64 = 0.4;
    MarketModel::new(
        3.0,
        c(0.02),
        vec![Stock {
            name: "issuer".into(),
            initial_price: 100.0,
            dividend_yield: c(0.01),
            drift: c(0.08),
            vol_row: vec![c(0.3), c(0.0)],
        }],
        vec![PerfVariable {
            name: "sales".into(),
            initial_level: 50.0,
            drift: c(0.05),
            vol_row: vec![c(0.2 * rho), c(0.2 * (1.0 - rho * rho).sqrt())],
        }],
        None,
    )
    .expect("benchmark model is valid")
}

/// At-the-money call paid at year three, vesting at year one when first-year
/// sales reach 52.
pub fn benchmark_contract() -> AwardContract {
    benchmark_contract_with_goal(52.0)
}

pub fn benchmark_contract_with_goal(goal: f64) -> AwardContract {
    AwardContract::new(
        1.0,
        3.0,
        PayoffKind::EuropeanCall { stock: 0, strike: StrikeRule::Fixed { strike: 100.0 } },
        vec![PerformanceCondition { variable: 0, kind: ConditionKind::PeriodSum { start: 0.0, end: 1.0, goal } }],
        1.0,
    )
    .expect("benchmark contract is valid")
}

fn between(rng: &mut PathRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Curve with one breakpoint placed off any dyadic grid.
fn random_curve(rng: &mut PathRng, lo: f64, hi: f64) -> ParamCurve {
    let split = between(rng, 0.3, 2.7);
    ParamCurve::new(vec![0.0, split], vec![between(rng, lo, hi), between(rng, lo, hi)]).expect("valid curve")
}

/// Model with 1–2 stocks and 1–2 performance variables over three years, with
/// piecewise-constant parameters and a diagonally dominant stock block.
pub fn random_model(seed: u64) -> Result<MarketModel> {
    let mut rng = PathRng::new(seed, 0);
    let m = 1 + (rng.uniform() < 0.5) as usize;
    let n = 1 + (rng.uniform() < 0.5) as usize;
    let d = m + n;
    let stocks = (0..m)
        .map(|i| {
            let mut row = vec![c(0.0); d];
            for (j, slot) in row.iter_mut().enumerate().take(m) {
                *slot = if i == j { random_curve(&mut rng, 0.15, 0.4) } else { c(between(&mut rng, -0.08, 0.08)) };
            }
            Stock {
                name: format!("stock{i}"),
                initial_price: between(&mut rng, 20.0, 120.0),
                dividend_yield: c(between(&mut rng, 0.0, 0.03)),
                drift: random_curve(&mut rng, 0.02, 0.12),
                vol_row: row,
            }
        })
        .collect();
    let perf_vars = (0..n)
        .map(|k| {
            let row = (0..d)
                .map(|j| if j == m + k { random_curve(&mut rng, 0.1, 0.3) } else { c(between(&mut rng, -0.15, 0.15)) })
                .collect();
            PerfVariable {
                name: format!("flow{k}"),
                initial_level: between(&mut rng, 10.0, 200.0),
                drift: random_curve(&mut rng, -0.02, 0.1),
                vol_row: row,
            }
        })
        .collect();
    let optimal = if rng.uniform() < 0.5 {
        Some(OptimalPortfolio {
            excess_return: c(between(&mut rng, 0.02, 0.08)),
            betas: (0..n).map(|_| between(&mut rng, 0.0, 1.2)).collect(),
        })
    } else {
        None
    };
    MarketModel::new(3.0, random_curve(&mut rng, 0.0, 0.05), stocks, perf_vars, optimal)
}

/// Contract on `model` with one condition of a random kind per performance
/// variable and goals near the initial levels.
pub fn random_contract(model: &MarketModel, seed: u64) -> Result<AwardContract> {
    let mut rng = PathRng::new(seed, 1);
    let tv = between(&mut rng, 0.75, 1.5);
    let t = (tv + between(&mut rng, 0.5, 1.4)).min(model.horizon());
    let m = model.n_stocks();
    let stock = (rng.uniform() * m as f64) as usize;
    let s0 = model.stocks()[stock].initial_price;
    let payoff = match (rng.uniform() * 4.0) as usize {
        0 => PayoffKind::StockGrant { stock },
        1 => PayoffKind::EuropeanCall { stock, strike: StrikeRule::Fixed { strike: s0 * between(&mut rng, 0.8, 1.2) } },
        2 if m > 1 => PayoffKind::EuropeanCall {
            stock,
            strike: StrikeRule::IndexLinked { reference: 1 - stock, grant_price: s0 },
        },
        _ => PayoffKind::Cash { amount: between(&mut rng, 1.0, 20.0) },
    };
    let conditions = model
        .perf_vars()
        .iter()
        .enumerate()
        .map(|(variable, p)| {
            let x0 = p.initial_level;
            let kind = match (rng.uniform() * 3.0) as usize {
                0 => {
                    let a = between(&mut rng, 0.0, 0.5 * tv);
                    let b = between(&mut rng, a + 0.25 * tv, tv);
                    ConditionKind::PeriodSum { start: a, end: b, goal: x0 * (b - a) * between(&mut rng, 0.9, 1.15) }
                }
                1 => {
                    let t0 = between(&mut rng, 0.0, 0.4 * tv);
                    let t1 = between(&mut rng, t0 + 0.3 * tv, tv);
                    ConditionKind::StagedRatio { stage_times: vec![t0, t1], goals: vec![between(&mut rng, 0.9, 1.15)] }
                }
                _ => ConditionKind::TerminalLevel { goal: x0 * between(&mut rng, 0.9, 1.15) },
            };
            PerformanceCondition { variable, kind }
        })
        .collect();
    let contract = AwardContract::new(tv, t, payoff, conditions, between(&mut rng, 1.0, 1000.0).round())?;
    contract.validate_against(model)?;
    Ok(contract)
}

/// Sample of the coordinates of `law`, evaluated on step-simulated paths with
/// trapezoid period-products.
pub fn simulated_coordinates(
    model: &MarketModel,
    contract: &AwardContract,
    law: &GaussianLaw,
    measure: Measure,
    n_paths: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let grid = pricing_grid(model, contract, step)?;
    let sim = Simulator::new(model, grid.times(), measure)?;
    let times = grid.times();
    let at = |t: f64| grid.index_of(t);
    let plan = law
        .labels
        .iter()
        .map(|l| {
            Ok(match *l {
                Coordinate::StockAtPayment { stock, time } | Coordinate::StockAtVesting { stock, time } => {
                    (stock, at(time)?, at(time)?, 0u8)
                }
                Coordinate::TerminalLevel { variable, time } => (model.perf_global(variable), at(time)?, at(time)?, 0),
                Coordinate::StageRatio { variable, from, to } => (model.perf_global(variable), at(from)?, at(to)?, 1),
                Coordinate::PeriodProduct { variable, start, end } => {
                    (model.perf_global(variable), at(start)?, at(end)?, 2)
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sim.map_paths(n_paths, seed, |_, p| {
        plan.iter()
            .map(|&(v, i0, i1, kind)| {
                let logs = p.log_series(v);
                match kind {
                    0 => logs[i1],
                    1 => logs[i1] - logs[i0],
                    _ => {
                        let len = times[i1] - times[i0];
                        let integral: f64 =
                            (i0..i1).map(|k| 0.5 * (logs[k] + logs[k + 1]) * (times[k + 1] - times[k])).sum();
                        len.ln() + integral / len
                    }
                }
            })
            .collect()
    }))
}
