//! Command implementations. Each writes its CSV tables and `report.txt` into
//! the output directory; `main` adds the manifest.

use std::fmt::Write as _;

use sppc_core::accounting::{compare_standards, PriceMethod};
use sppc_core::config::CalibrationFile;
use sppc_core::estimation::{
    calibrate_instantaneous, correlation_convergence_experiment, sample_correlation, synthetic_series,
    unbiased_correlation, volatility_from_prices, AccountingSeries, CalibrationTarget, ConvergenceSettings,
    FlatModelSpec, FreeParameter, Statistic,
};
use sppc_core::mc_engine::{price_plain, price_with_cv};
use sppc_core::quasi_analytic::{gaussian_moments, price_period_product, quadrature_supported};
use sppc_core::{
    AwardContract, ConditionKind, MarketModel, Measure, PayoffKind, PricingResult, QuasiMethod, SimConfig, SppcError,
    StrikeRule,
};

use crate::args::{
    EstimateArgs, Fig1Args, MethodArg, MomentsArgs, PriceArgs, SeriesArgs, SimArgs, StandardsArgs, StatisticArg,
};
use crate::data::{load_config, load_prices, load_series, Output};
use crate::error::{CliError, CliResult};

fn sim_config(sim: &SimArgs) -> SimConfig {
    SimConfig {
        n_paths: sim.paths,
        step: sim.step,
        seed: sim.seed,
        measure: sim.measure.into(),
        cv_mode: sim.cv_coefficient.into(),
        quasi_samples: None,
    }
}

fn measure_name(m: Measure) -> &'static str {
    match m {
        Measure::Physical => "physical",
        Measure::Optimal => "optimal",
    }
}

fn model_and_contract(files: &[std::path::PathBuf]) -> CliResult<(MarketModel, AwardContract)> {
    let cfg = load_config(files)?;
    let model = cfg.model()?.build()?;
    let contract = cfg.contract()?.build(&model)?;
    Ok((model, contract))
}

fn quasi_method(contract: &AwardContract, config: &SimConfig) -> QuasiMethod {
    if quadrature_supported(contract) {
        QuasiMethod::Quadrature
    } else {
        QuasiMethod::DirectSampling { n_samples: config.n_paths, seed: config.seed }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn price(args: &PriceArgs, out: &Output) -> CliResult<()> {
    let (model, contract) = model_and_contract(&args.files)?;
    let config = sim_config(&args.sim);
    config.validate()?;
    let method = args.sim.method.unwrap_or(MethodArg::Cv);
    let result = match method {
        MethodArg::Plain => price_plain(&model, &contract, &config)?,
        MethodArg::Cv => price_with_cv(&model, &contract, &config)?,
        MethodArg::Quasi => price_period_product(&model, &contract, config.measure, quasi_method(&contract, &config))?,
    };
    if !result.estimate.is_finite() || !result.std_error.is_finite() {
        return Err(SppcError::Unsupported("the price estimate is not finite".into()).into());
    }
    out.write("price.csv", &price_csv(&result, config.measure))?;
    out.write("report.txt", &price_report(&model, &contract, &config, &result))?;
    Ok(())
}

fn price_csv(r: &PricingResult, measure: Measure) -> String {
    let c = r.components;
    format!(
        "method,measure,estimate,std_error,n_paths,seed,plain_mean,prod_mc_mean,prod_quasi,prod_quasi_std_error,cv_coefficient\n\
         {},{},{:e},{:e},{},{},{},{},{},{},{}\n",
        r.method.as_str(),
        measure_name(measure),
        r.estimate,
        r.std_error,
        r.n_paths,
        r.seed,
        opt(c.map(|c| c.plain_mean)),
        opt(c.map(|c| c.prod_mc_mean)),
        opt(c.map(|c| c.prod_quasi)),
        opt(c.map(|c| c.prod_quasi_std_error)),
        opt(c.map(|c| c.coefficient)),
    )
}

fn describe_contract(model: &MarketModel, contract: &AwardContract) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "  vesting date    {}", contract.vesting_date);
    let _ = writeln!(s, "  payment date    {}", contract.payment_date);
    let _ = writeln!(s, "  shares          {}", contract.shares);
    let stock = |i: usize| model.stocks()[i].name.as_str();
    let payoff = match &contract.payoff {
        PayoffKind::StockGrant { stock: i } => format!("stock grant on {}", stock(*i)),
        PayoffKind::EuropeanCall { stock: i, strike: StrikeRule::Fixed { strike } } => {
            format!("call on {} struck at {strike}", stock(*i))
        }
        PayoffKind::EuropeanCall { stock: i, strike: StrikeRule::IndexLinked { reference, grant_price } } => {
            format!("call on {} struck at {grant_price} scaled by {}", stock(*i), stock(*reference))
        }
        PayoffKind::Cash { amount } => format!("cash {amount}"),
    };
    let _ = writeln!(s, "  payoff          {payoff}");
    for c in &contract.conditions {
        let name = &model.perf_vars()[c.variable].name;
        let goal = match &c.kind {
            ConditionKind::PeriodSum { start, end, goal } => format!("sum over [{start}, {end}] >= {goal}"),
            ConditionKind::StagedRatio { stage_times, goals } => {
                format!("stage ratios at {stage_times:?} >= {goals:?}")
            }
            ConditionKind::TerminalLevel { goal } => format!("level at vesting >= {goal}"),
        };
        let _ = writeln!(s, "  condition       {name} {goal}");
    }
    s
}

fn price_report(model: &MarketModel, contract: &AwardContract, config: &SimConfig, r: &PricingResult) -> String {
    let mut s = String::from("Award price\n\n");
    s.push_str(&describe_contract(model, contract));
    let _ = writeln!(s);
    let _ = writeln!(s, "  method          {}", r.method.as_str());
    let _ = writeln!(s, "  measure         {}", measure_name(config.measure));
    let _ = writeln!(s, "  estimate        {:.6}", r.estimate);
    let _ = writeln!(s, "  std error       {:.6}", r.std_error);
    let _ = writeln!(s, "  per share       {:.6}", r.estimate / contract.shares);
    if r.n_paths > 0 {
        let _ = writeln!(s, "  paths           {}", r.n_paths);
        let _ = writeln!(s, "  seed            {}", r.seed);
        let _ = writeln!(s, "  step            {}", config.step);
    }
    if let Some(c) = r.components {
        let _ = writeln!(s, "\nControl variate (per share)");
        let _ = writeln!(s, "  plain mean      {:.6}", c.plain_mean);
        let _ = writeln!(s, "  product MC mean {:.6}", c.prod_mc_mean);
        let _ = writeln!(s, "  product law     {:.6} (std error {:.6})", c.prod_quasi, c.prod_quasi_std_error);
        let _ = writeln!(s, "  coefficient     {:.6}", c.coefficient);
    }
    s
}

pub fn moments(args: &MomentsArgs, out: &Output) -> CliResult<()> {
    let (model, contract) = model_and_contract(&args.files)?;
    let law = gaussian_moments(&model, &contract, args.measure.into())?;
    let csv = law.to_csv(&model);
    out.write("moments.csv", &csv)?;
    let mut s = String::from("Gaussian law of the log coordinates\n\n");
    s.push_str(&describe_contract(&model, &contract));
    let _ = writeln!(s, "\n  measure         {}", measure_name(args.measure.into()));
    for (i, l) in law.labels.iter().enumerate() {
        let _ = writeln!(
            s,
            "  {:<40} mean {:>12.6}  sd {:>10.6}",
            l.label(&model),
            law.mean[i],
            law.covariance[(i, i)].max(0.0).sqrt()
        );
    }
    out.write("report.txt", &s)
}

fn statistic_name(stat: &Statistic, spec: &FlatModelSpec) -> (&'static str, String) {
    match *stat {
        Statistic::Volatility { variable } => ("volatility", spec.variable_name(variable).to_string()),
        Statistic::LogRatioMean { variable } => ("log_ratio_drift", spec.variable_name(variable).to_string()),
        Statistic::Correlation { first, second } => {
            ("correlation", format!("{}:{}", spec.variable_name(first), spec.variable_name(second)))
        }
    }
}

/// Value of `stat` on the data columns named like the template variables.
fn observed(stat: &Statistic, data: &AccountingSeries, spec: &FlatModelSpec, period: f64) -> CliResult<f64> {
    let names = data.names().to_vec();
    for v in match *stat {
        Statistic::Volatility { variable } | Statistic::LogRatioMean { variable } => vec![variable],
        Statistic::Correlation { first, second } => vec![first, second],
    } {
        let name = spec.variable_name(v);
        if !names.iter().any(|n| n == name) {
            return Err(CliError::Input(format!("the data has no column {name:?}")));
        }
    }
    Ok(stat.evaluate(|v| data.column(spec.variable_name(v)).unwrap(), period)?)
}

pub fn estimate(args: &EstimateArgs, out: &Output) -> CliResult<()> {
    let data = load_series(&args.data)?;
    let period = data.period_length()?;
    let n_ratios = data.n_periods() - 1;
    if args.olkin_pratt && n_ratios < 4 {
        return Err(SppcError::invalid(
            "olkin_pratt",
            format!("the correction needs at least 4 log ratios, the data has {n_ratios}"),
        )
        .into());
    }
    let mut stats = String::from("statistic,variables,value,adjusted,n\n");
    let mut report = String::from("Estimation\n\n");
    let _ = writeln!(report, "  periods         {}", data.n_periods());
    let _ = writeln!(report, "  period length   {period}\n");
    let _ = writeln!(report, "Sample statistics (annualized, from log ratios of period-sums)");
    let names = data.names().to_vec();
    for (name, col) in data.columns() {
        let var = sppc_core::estimation::log_ratio_series(col)?;
        let vol = (sppc_core::stats::sample_variance(&var) / period).sqrt();
        let drift = sppc_core::stats::mean(&var) / period;
        let _ = writeln!(stats, "volatility,{name},{vol:e},,{n_ratios}");
        let _ = writeln!(stats, "log_ratio_drift,{name},{drift:e},,{n_ratios}");
        let _ = writeln!(report, "  vol[{name}] {vol:.6}   drift[{name}] {drift:.6}");
    }
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let a = sppc_core::estimation::log_ratio_series(data.column(&names[i]).unwrap())?;
            let b = sppc_core::estimation::log_ratio_series(data.column(&names[j]).unwrap())?;
            let rho = sample_correlation(&a, &b)?;
            let adjusted = if args.olkin_pratt { Some(unbiased_correlation(rho, n_ratios)?) } else { None };
            let _ = writeln!(stats, "correlation,{}:{},{rho:e},{},{n_ratios}", names[i], names[j], opt(adjusted));
            let _ = write!(report, "  corr[{},{}] {rho:.6}", names[i], names[j]);
            match adjusted {
                Some(a) => {
                    let _ = writeln!(report, "   Olkin-Pratt {a:.6}");
                }
                None => report.push('\n'),
            }
        }
    }
    if let Some(path) = &args.daily_prices {
        let (dt, cols) = load_prices(path)?;
        let _ = writeln!(report, "\nPrice volatility (sampling interval {dt})");
        for (name, prices) in cols {
            let vol = volatility_from_prices(&prices, dt)?;
            let n = prices.len() - 1;
            let _ = writeln!(stats, "volatility_prices,{name},{vol:e},,{n}");
            let _ = writeln!(report, "  vol[{name}] {vol:.6}");
        }
    }
    out.write("statistics.csv", &stats)?;

    let cfg = load_config(&args.template)?;
    if let Some(cal) = &cfg.calibration {
        if !cal.forecasts.is_empty() {
            let mut curves = String::from("variable,start,end,drift\n");
            let _ = writeln!(report, "\nDrift from forecasts");
            for f in &cal.forecasts {
                let curve = f.drift_curve()?;
                let bp = curve.breakpoints();
                for (k, v) in curve.values().iter().enumerate() {
                    let end = bp.get(k + 1).map(|e| format!("{e:e}")).unwrap_or_else(|| {
                        format!("{:e}", f.forecasts.last().map(|p| p[0] - f.base_year).unwrap_or(f64::INFINITY))
                    });
                    let _ = writeln!(curves, "{},{:e},{end},{v:e}", f.variable, bp[k]);
                    let _ = writeln!(report, "  drift[{}] from {} : {v:.6}", f.variable, bp[k]);
                }
            }
            out.write("drift_curves.csv", &curves)?;
        }
    }
    if args.statistic == StatisticArg::Corrected {
        let cal = cfg.calibration()?;
        let calibration = calibrate(args, cal, &data, period, &mut report)?;
        out.write("calibration.csv", &calibration)?;
    }
    out.write("report.txt", &report)
}

fn calibrate(
    args: &EstimateArgs,
    cal: &CalibrationFile,
    data: &AccountingSeries,
    period: f64,
    report: &mut String,
) -> CliResult<String> {
    let horizon = *data.boundaries().last().unwrap();
    let spec = cal.template()?.spec(horizon)?;
    let free: Vec<FreeParameter> = if cal.free.is_empty() {
        (0..spec.stocks.len() + spec.perf_vars.len())
            .filter(|&v| data.column(spec.variable_name(v)).is_some())
            .map(|variable| FreeParameter::Volatility { variable })
            .collect()
    } else {
        cal.free.iter().map(|f| f.resolve(&spec)).collect::<Result<_, _>>()?
    };
    if free.is_empty() {
        return Err(CliError::Input("no template variable has a data column to calibrate".into()));
    }
    let targets = free
        .iter()
        .map(|p| Ok(CalibrationTarget { parameter: *p, observed: observed(&p.statistic(), data, &spec, period)? }))
        .collect::<CliResult<Vec<_>>>()?;
    let mut settings = cal.settings(data.boundaries().to_vec());
    if let Some(t) = args.trials {
        settings.trials.trials = t;
    }
    if let Some(t) = args.tolerance {
        settings.tolerance = t;
    }
    if let Some(s) = args.seed {
        settings.trials.seed = s;
    }
    if let Some(s) = args.step {
        settings.trials.step = s;
    }
    let (fitted, cal_report) = calibrate_instantaneous(&targets, &spec, &settings)?;
    let _ = writeln!(
        report,
        "\nCalibrated instantaneous parameters ({} trials, seed {}, tolerance {:e})",
        settings.trials.trials, settings.trials.seed, settings.tolerance
    );
    for (t, e) in targets.iter().zip(&cal_report.entries) {
        let (kind, vars) = statistic_name(&t.parameter.statistic(), &fitted);
        let _ = writeln!(
            report,
            "  {:<24} {:>10.6}   observed {kind}[{vars}] {:.6}, residual {:.2e}, {} iterations{}",
            e.name,
            e.estimate,
            match t.parameter {
                FreeParameter::Volatility { .. } => t.observed.sqrt(),
                _ => t.observed,
            },
            e.residual,
            e.iterations,
            if e.converged { "" } else { ", NOT CONVERGED" }
        );
    }
    Ok(cal_report.to_csv())
}

pub fn compare(args: &StandardsArgs, out: &Output) -> CliResult<()> {
    let cfg = load_config(&args.files)?;
    let model = cfg.model()?.build()?;
    let contract = cfg.contract()?.build(&model)?;
    let mut inputs = cfg.scenario()?.clone();
    if let Some(m) = args.sim.method {
        inputs.price_method = match m {
            MethodArg::Plain => PriceMethod::Plain,
            MethodArg::Cv => PriceMethod::Cv,
            MethodArg::Quasi => PriceMethod::Quasi,
        };
    }
    let config = sim_config(&args.sim);
    config.validate()?;
    let report = compare_standards(&model, &contract, &inputs, &config)?;
    out.write("summary.csv", &report.summary_csv())?;
    out.write("schedules.csv", &report.schedule_csv())?;
    out.write("report.txt", &report.narrative())
}

pub fn fig1(args: &Fig1Args, out: &Output) -> CliResult<()> {
    let settings = ConvergenceSettings {
        stock_drift: args.stock_drift,
        flow_drift: args.flow_drift,
        stock_vol: args.stock_vol,
        flow_vol: args.flow_vol,
        period: args.period,
        step: args.step,
        min_periods: args.min_periods,
    };
    let rows = correlation_convergence_experiment(args.rho, args.paths, args.max_periods, args.seed, &settings)?;
    let mut csv = String::from("periods,corr_log_ratio,corr_level,paths_used\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{:e},{:e},{}", r.periods, r.corr_log_ratio, r.corr_level, r.paths_used);
    }
    out.write("fig1.csv", &csv)?;
    let mut s = String::from("Accounting periods and correlations\n\n");
    let _ = writeln!(s, "  population correlation {}, {} paths, seed {}\n", args.rho, args.paths, args.seed);
    let _ = writeln!(s, "  periods   log-ratio corr   period-sum corr");
    for r in &rows {
        let _ = writeln!(s, "  {:>7}   {:>14.4}   {:>15.4}", r.periods, r.corr_log_ratio, r.corr_level);
    }
    out.write("report.txt", &s)
}

pub fn series(args: &SeriesArgs, out: &Output) -> CliResult<()> {
    let cfg = load_config(&args.files)?;
    let model = cfg.model()?.build()?;
    if args.periods < 1 || !(args.period_length > 0.0) {
        return Err(SppcError::invalid("periods", "need at least one period of positive length").into());
    }
    let boundaries: Vec<f64> = (0..=args.periods).map(|k| args.start + k as f64 * args.period_length).collect();
    let data = synthetic_series(&model, &boundaries, args.step, args.seed, args.path)?;
    let mut csv = String::from("start,end");
    for n in data.names() {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    let cols: Vec<&[f64]> = data.columns().map(|(_, c)| c).collect();
    for k in 0..data.n_periods() {
        let _ = write!(csv, "{},{}", boundaries[k], boundaries[k + 1]);
        for c in &cols {
            let _ = write!(csv, ",{}", c[k]);
        }
        csv.push('\n');
    }
    out.write("series.csv", &csv)?;
    out.write(
        "report.txt",
        &format!(
            "Synthetic period-sums\n\n  periods {}\n  period length {}\n  path {} of seed {}\n  step {}\n",
            args.periods, args.period_length, args.path, args.seed, args.step
        ),
    )
}
