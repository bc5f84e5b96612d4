//! Compensation cost under the current standards (fair value ignoring
//! conditions, trued up on achievement) versus recognizing the theoretical
//! price on the grant date.

use serde::{Deserialize, Serialize};

use crate::contract::AwardContract;
use crate::error::{ensure, Result};
use crate::mc_engine::{
    achievement_probability, price_plain, price_plain_with_dates, price_with_cv, PricingMethod, PricingResult,
    SimConfig,
};
use crate::model::{MarketModel, Measure};
use crate::quasi_analytic::{price_period_product, unconditional_closed_form, QuasiMethod};
use crate::stats::Estimate;

/// Slack allowed when checking `p ≤ A` on externally supplied values.
const PRICE_BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardsScenario {
    /// Fair value per share ignoring conditions.
    pub fair_value: f64,
    /// Theoretical price per share.
    pub price: f64,
    pub alpha: f64,
    pub service_years: usize,
    /// Grant-date judgment that the goals are probable.
    pub judged_probable: bool,
    pub achieved: bool,
    pub shares: f64,
}

impl StandardsScenario {
    pub fn validate(&self) -> Result<()> {
        ensure(self.fair_value >= 0.0, "fair_value", || format!("must be nonnegative, got {}", self.fair_value))?;
        ensure(self.price >= 0.0 && self.price <= self.fair_value * (1.0 + PRICE_BOUND_TOL), "price", || {
            format!("need 0 <= p <= A, got p = {}, A = {}", self.price, self.fair_value)
        })?;
        ensure((0.0..=1.0).contains(&self.alpha), "alpha", || format!("must lie in [0, 1], got {}", self.alpha))?;
        ensure(self.service_years >= 1, "service_years", || "must be at least 1".into())?;
        ensure(self.shares > 0.0, "shares", || format!("must be positive, got {}", self.shares))
    }

    fn total_fair_value(&self) -> f64 {
        self.shares * self.fair_value
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Yearly cost under the current standards: `qA·I_p/N` until the last year,
/// which trues the total up to `qA·I_g`.
pub fn cost_schedule_current(s: &StandardsScenario) -> Result<Vec<f64>> {
    s.validate()?;
    let n = s.service_years;
    let qa = s.total_fair_value();
    let accrual = qa * flag(s.judged_probable) / n as f64;
    let mut out = vec![accrual; n];
    // final year: the regular accrual plus the true-up to the achieved amount
    out[n - 1] = accrual + qa * (flag(s.achieved) - flag(s.judged_probable));
    Ok(out)
}

/// New standards, grant-date lump: `q·p` in year one.
pub fn cost_schedule_new_lump(s: &StandardsScenario) -> Result<Vec<f64>> {
    s.validate()?;
    let mut out = vec![0.0; s.service_years];
    out[0] = s.shares * s.price;
    Ok(out)
}

/// New standards, even accrual: `q·p/N` every year.
pub fn cost_schedule_new_even(s: &StandardsScenario) -> Result<Vec<f64>> {
    s.validate()?;
    Ok(vec![s.shares * s.price / s.service_years as f64; s.service_years])
}

/// Standard deviation of the final-year true-up, `sqrt(α(1-α))·A_total`.
pub fn cost_jump_volatility(a_total: f64, alpha: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&alpha), "alpha", || format!("must lie in [0, 1], got {alpha}"))?;
    Ok((alpha * (1.0 - alpha)).sqrt() * a_total)
}

pub fn expected_total_cost(a_total: f64, alpha: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&alpha), "alpha", || format!("must lie in [0, 1], got {alpha}"))?;
    Ok(alpha * a_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AwardComparison {
    /// `(q_X - q_Y)·A`
    pub current_diff: f64,
    /// `q_X p_X - q_Y p_Y`
    pub new_diff: f64,
    /// `(q_X - q_Y)·p_X`
    pub share_effect: f64,
    /// `q_Y (p_X - p_Y)`
    pub price_effect: f64,
}

pub fn compare_awards(qx: f64, px: f64, qy: f64, py: f64, fair_value: f64) -> Result<AwardComparison> {
    for (name, v) in [("q_x", qx), ("p_x", px), ("q_y", qy), ("p_y", py), ("fair_value", fair_value)] {
        ensure(v >= 0.0 && v.is_finite(), name, || format!("must be nonnegative, got {v}"))?;
    }
    Ok(AwardComparison {
        current_diff: (qx - qy) * fair_value,
        new_diff: qx * px - qy * py,
        share_effect: (qx - qy) * px,
        price_effect: qy * (px - py),
    })
}

/// Fair value with the conditions removed, from closed forms under the
/// optimal measure, scaled by the share count.
pub fn fair_value_unconditional(model: &MarketModel, contract: &AwardContract) -> Result<PricingResult> {
    let v = unconditional_closed_form(model, contract, Measure::Optimal)?;
    Ok(PricingResult {
        estimate: contract.shares * v,
        std_error: 0.0,
        n_paths: 0,
        method: PricingMethod::QuasiAnalytic,
        seed: 0,
        components: None,
    })
}

/// Fair value by simulation on the same grid and paths as the conditional
/// price, so that `p ≤ A` holds path by path.
pub fn fair_value_matched(model: &MarketModel, contract: &AwardContract, config: &SimConfig) -> Result<PricingResult> {
    price_plain_with_dates(model, &contract.without_conditions(), &contract.dates(), config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriceMethod {
    Plain,
    #[default]
    Cv,
    Quasi,
}

/// Scenario inputs for the standards comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioInputs {
    pub service_years: usize,
    #[serde(default = "default_true")]
    pub judged_probable: bool,
    #[serde(default)]
    pub price_method: PriceMethod,
    /// Measure of the headline achievement probability.
    #[serde(default = "default_alpha_measure")]
    pub alpha_measure: Measure,
    /// Optional second award for the share-count comparison.
    #[serde(default)]
    pub alternative_award: Option<AlternativeAward>,
}

fn default_true() -> bool {
    true
}

fn default_alpha_measure() -> Measure {
    Measure::Physical
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeAward {
    pub shares: f64,
    pub price_per_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub judged_probable: bool,
    pub achieved: bool,
    pub year: usize,
    pub current: f64,
    pub new_even: f64,
    pub new_lump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardsReport {
    pub shares: f64,
    pub service_years: usize,
    pub judged_probable: bool,
    /// Fair value per share.
    pub fair_value: f64,
    /// Theoretical price per share, after clamping to `fair_value`.
    pub price: f64,
    pub price_std_error: f64,
    pub price_method: PricingMethod,
    pub alpha_measure: Measure,
    pub alpha_physical: Estimate,
    pub alpha_optimal: Estimate,
    /// `A / p`, the current-to-new cost ratio when the goals are achieved.
    pub cost_ratio: f64,
    pub jump_volatility: f64,
    pub expected_total_current: f64,
    pub total_new: f64,
    pub schedules: Vec<ScheduleRow>,
    pub awards: Option<AwardComparison>,
    pub notes: Vec<String>,
}

impl StandardsReport {
    pub fn alpha(&self) -> f64 {
        match self.alpha_measure {
            Measure::Physical => self.alpha_physical.value,
            Measure::Optimal => self.alpha_optimal.value,
        }
    }

    pub fn summary_csv(&self) -> String {
        let rows: Vec<(&str, f64)> = vec![
            ("shares", self.shares),
            ("fair_value_per_share", self.fair_value),
            ("price_per_share", self.price),
            ("price_std_error", self.price_std_error),
            ("fair_value_total", self.shares * self.fair_value),
            ("price_total", self.shares * self.price),
            ("alpha_physical", self.alpha_physical.value),
            ("alpha_physical_std_error", self.alpha_physical.std_error),
            ("alpha_optimal", self.alpha_optimal.value),
            ("alpha_optimal_std_error", self.alpha_optimal.std_error),
            ("cost_ratio_current_to_new", self.cost_ratio),
            ("jump_volatility", self.jump_volatility),
            ("expected_total_current", self.expected_total_current),
            ("total_new", self.total_new),
        ];
        let mut out = String::from("quantity,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v:e}\n"));
        }
        if let Some(a) = &self.awards {
            for (k, v) in [
                ("award_current_diff", a.current_diff),
                ("award_new_diff", a.new_diff),
                ("award_share_effect", a.share_effect),
                ("award_price_effect", a.price_effect),
            ] {
                out.push_str(&format!("{k},{v:e}\n"));
            }
        }
        out
    }

    pub fn schedule_csv(&self) -> String {
        let mut out = String::from("judged_probable,achieved,year,current,new_even,new_lump\n");
        for r in &self.schedules {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                u8::from(r.judged_probable),
                u8::from(r.achieved),
                r.year,
                r.current,
                r.new_even,
                r.new_lump
            ));
        }
        out
    }

    /// Plain-text table keyed to the five problem areas of the current standards.
    pub fn narrative(&self) -> String {
        let q = self.shares;
        let a_total = q * self.fair_value;
        let p_total = q * self.price;
        let measure = match self.alpha_measure {
            Measure::Physical => "physical",
            Measure::Optimal => "optimal",
        };
        let mut s = String::new();
        s.push_str("Compensation cost: current standards vs theoretical price on the grant date\n\n");
        s.push_str(&format!("  shares                      {q}\n"));
        s.push_str(&format!("  service years               {}\n", self.service_years));
        s.push_str(&format!("  fair value A per share      {:.6}\n", self.fair_value));
        s.push_str(&format!(
            "  price p per share           {:.6} (std error {:.6}, {})\n",
            self.price,
            self.price_std_error,
            self.price_method.as_str()
        ));
        s.push_str(&format!(
            "  achievement probability     {:.6} physical, {:.6} optimal (headline: {measure})\n\n",
            self.alpha_physical.value, self.alpha_optimal.value
        ));
        s.push_str("1. Volatile compensation cost\n");
        s.push_str(&format!("   current: final-year jump std dev {:.6}\n", self.jump_volatility));
        s.push_str("   new:     0 (cost fixed at grant)\n");
        s.push_str("2. Over-recognition of compensation cost\n");
        s.push_str(&format!("   goals achieved: current {a_total:.6}, new {p_total:.6}\n"));
        if self.cost_ratio.is_finite() {
            s.push_str(&format!(
                "   current cost is {:.4} times the new cost (p/A = {:.4})\n",
                self.cost_ratio,
                self.price / self.fair_value
            ));
        } else {
            s.push_str("   p = 0: the ratio is unbounded\n");
        }
        s.push_str("3. Inconsistent accounting objectives\n");
        match &self.awards {
            Some(a) => {
                s.push_str(&format!("   current difference (q_X - q_Y)A     {:.6}\n", a.current_diff));
                s.push_str(&format!("   new difference q_X p_X - q_Y p_Y    {:.6}\n", a.new_diff));
                s.push_str(&format!(
                    "     = share effect {:.6} + price effect {:.6}\n",
                    a.share_effect, a.price_effect
                ));
            }
            None => s.push_str("   no alternative award given\n"),
        }
        s.push_str("4. Distorted choice of award\n");
        let accrual = a_total / self.service_years as f64;
        s.push_str(&format!(
            "   current yearly cost if judged probable {accrual:.6}, if improbable 0; new {:.6} either way\n",
            p_total / self.service_years as f64
        ));
        s.push_str("5. Volatility of a difficult project's cost\n");
        s.push_str(&format!(
            "   expected total current {:.6} with jump std dev {:.6}; new total {p_total:.6} with none\n",
            self.expected_total_current, self.jump_volatility
        ));
        if !self.notes.is_empty() {
            s.push_str("\nNotes\n");
            for n in &self.notes {
                s.push_str(&format!("  - {n}\n"));
            }
        }
        s
    }
}

/// Prices the contract, its fair value and achievement probabilities, and
/// assembles the cost comparison.
pub fn compare_standards(
    model: &MarketModel,
    contract: &AwardContract,
    inputs: &ScenarioInputs,
    config: &SimConfig,
) -> Result<StandardsReport> {
    ensure(inputs.service_years >= 1, "service_years", || "must be at least 1".into())?;
    let q = contract.shares;
    let mut notes = Vec::new();
    let fair = fair_value_unconditional(model, contract)?.estimate / q;
    let (price, price_se, price_method) = if contract.conditions.is_empty() {
        notes.push("no performance conditions: p equals A".into());
        (fair, 0.0, PricingMethod::QuasiAnalytic)
    } else {
        let r = match inputs.price_method {
            PriceMethod::Plain => price_plain(model, contract, config)?,
            PriceMethod::Cv => price_with_cv(model, contract, config)?,
            PriceMethod::Quasi => price_period_product(model, contract, config.measure, QuasiMethod::Quadrature)?,
        };
        if inputs.price_method == PriceMethod::Quasi {
            notes.push(
                "price from the period-product law; period-sum goals are replaced by period-product goals".into(),
            );
        }
        (r.estimate / q, r.std_error / q, r.method)
    };
    let price = if price > fair {
        notes.push(format!("estimated p {price:.6} exceeded A {fair:.6} by sampling noise; p set to A"));
        fair
    } else {
        price
    };
    let alpha_at =
        |measure: Measure| achievement_probability(model, contract, &SimConfig { measure, ..config.clone() });
    let alpha_physical = alpha_at(Measure::Physical)?;
    let alpha_optimal = alpha_at(Measure::Optimal)?;
    let alpha = match inputs.alpha_measure {
        Measure::Physical => alpha_physical.value,
        Measure::Optimal => alpha_optimal.value,
    };
    let mut schedules = Vec::new();
    for judged_probable in [true, false] {
        for achieved in [true, false] {
            let s = StandardsScenario {
                fair_value: fair,
                price,
                alpha,
                service_years: inputs.service_years,
                judged_probable,
                achieved,
                shares: q,
            };
            let (cur, even, lump) =
                (cost_schedule_current(&s)?, cost_schedule_new_even(&s)?, cost_schedule_new_lump(&s)?);
            for t in 0..inputs.service_years {
                schedules.push(ScheduleRow {
                    judged_probable,
                    achieved,
                    year: t + 1,
                    current: cur[t],
                    new_even: even[t],
                    new_lump: lump[t],
                });
            }
        }
    }
    let awards = match &inputs.alternative_award {
        Some(alt) => Some(compare_awards(q, price, alt.shares, alt.price_per_share, fair)?),
        None => None,
    };
    Ok(StandardsReport {
        shares: q,
        service_years: inputs.service_years,
        judged_probable: inputs.judged_probable,
        fair_value: fair,
        price,
        price_std_error: price_se,
        price_method,
        alpha_measure: inputs.alpha_measure,
        alpha_physical,
        alpha_optimal,
        cost_ratio: fair / price,
        jump_volatility: cost_jump_volatility(q * fair, alpha)?,
        expected_total_current: expected_total_cost(q * fair, alpha)?,
        total_new: q * price,
        schedules,
        awards,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(qa: f64, n: usize, ip: bool, ig: bool) -> StandardsScenario {
        StandardsScenario {
            fair_value: qa,
            price: 0.4 * qa,
            alpha: 0.5,
            service_years: n,
            judged_probable: ip,
            achieved: ig,
            shares: 1.0,
        }
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(cost_schedule_current(&scenario(100.0, 4, true, true)).unwrap(), vec![25.0; 4]);
        assert_eq!(cost_schedule_current(&scenario(100.0, 4, true, false)).unwrap(), vec![25.0, 25.0, 25.0, -75.0]);
        assert_eq!(cost_schedule_current(&scenario(100.0, 4, false, true)).unwrap(), vec![0.0, 0.0, 0.0, 100.0]);
        assert_eq!(cost_schedule_new_even(&scenario(100.0, 4, false, true)).unwrap(), vec![10.0; 4]);
        assert_eq!(cost_schedule_new_lump(&scenario(100.0, 4, false, true)).unwrap(), vec![40.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn jump_identity_all_cases() {
        for n in 1..=10 {
            for ip in [false, true] {
                for ig in [false, true] {
                    let s = scenario(100.0, n, ip, ig);
                    let c = cost_schedule_current(&s).unwrap();
                    assert!((c.iter().sum::<f64>() - 100.0 * flag(ig)).abs() < 1e-12);
                    let previous = if n >= 2 { c[n - 2] } else { 100.0 * flag(ip) };
                    assert_eq!(c[n - 1] - previous, 100.0 * (flag(ig) - flag(ip)));
                }
            }
        }
    }

    #[test]
    fn volatility_and_expectation() {
        assert_eq!(cost_jump_volatility(100.0, 0.0).unwrap(), 0.0);
        assert_eq!(cost_jump_volatility(100.0, 1.0).unwrap(), 0.0);
        assert_eq!(cost_jump_volatility(100.0, 0.5).unwrap(), 50.0);
        assert_eq!(expected_total_cost(250.0, 0.4).unwrap(), 100.0);
        assert_eq!(expected_total_cost(250.0, 1.0).unwrap(), 250.0);
        assert!(cost_jump_volatility(1.0, 1.5).is_err());
    }

    #[test]
    fn award_comparison_example() {
        let c = compare_awards(1000.0, 40.0, 400.0, 100.0, 100.0).unwrap();
        assert_eq!(c.current_diff, 60_000.0);
        assert_eq!(c.new_diff, 0.0);
        assert_eq!(c.share_effect, 24_000.0);
        assert_eq!(c.price_effect, -24_000.0);
        let same = compare_awards(10.0, 100.0, 4.0, 100.0, 100.0).unwrap();
        assert_eq!(same.new_diff, same.current_diff);
    }

    #[test]
    fn engineered_ratio_is_two_and_a_half() {
        let s = StandardsScenario { fair_value: 250.0, price: 100.0, ..scenario(250.0, 4, true, true) };
        let current: f64 = cost_schedule_current(&s).unwrap().iter().sum();
        let new: f64 = cost_schedule_new_lump(&s).unwrap().iter().sum();
        assert_eq!(current / new, 2.5);
    }

    #[test]
    fn scenario_rejects_price_above_fair_value() {
        let s = StandardsScenario { price: 101.0, ..scenario(100.0, 4, true, true) };
        assert!(cost_schedule_current(&s).unwrap_err().is_validation());
    }
}
