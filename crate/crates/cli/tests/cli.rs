use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sppc_core::config::ConfigFile;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn sppc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sppc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = sppc(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

/// Value of `column` in the first data row of a CSV file.
fn csv_value(dir: &Path, file: &str, column: &str) -> f64 {
    let text = read(dir, file);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == column).unwrap();
    row[k].parse().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cash_without_conditions_prices_at_the_discount_factor() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["plain", "cv", "quasi"] {
        let out = dir.path().join(method);
        ok(&["price", s(&fixture("cash_no_condition.toml")), "--paths", "500", "--method", method, "--out", s(&out)]);
        let price = csv_value(&out, "price.csv", "estimate");
        let exact = (-0.04f64).exp();
        assert!((price - exact).abs() <= 4.0 * f64::EPSILON, "{method}: {price} vs {exact}");
    }
}

#[test]
fn benchmark_price_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["price", s(&fixture("benchmark.toml")), "--paths", "20000", "--seed", "7", "--out", s(dir.path())]);
    assert_eq!(read(dir.path(), "price.csv"), fs::read_to_string(fixture("golden/benchmark_price.csv")).unwrap());
}

#[test]
fn malformed_file_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let out = sppc(&["price", s(&fixture("malformed.toml")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7"), "{err}");
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text =
        fs::read_to_string(fixture("benchmark.toml")).unwrap().replace("vesting_date = 1.0", "vesting_date = 4.0");
    fs::write(&bad, text).unwrap();
    let out = sppc(&["price", s(&bad), "--paths", "100", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = sppc(&["price", s(&fixture("benchmark.toml")), "--paths", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = sppc(&["price", s(&fixture("benchmark.toml")), "--measure", "neutral"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sections_may_come_from_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("benchmark.toml")).unwrap();
    let split = text.find("[contract]").unwrap();
    let (model, contract) = (dir.path().join("model.toml"), dir.path().join("contract.toml"));
    fs::write(&model, &text[..split]).unwrap();
    fs::write(&contract, &text[split..]).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["price", s(&fixture("benchmark.toml")), "--paths", "2000", "--out", s(&a)]);
    ok(&["price", s(&model), s(&contract), "--paths", "2000", "--out", s(&b)]);
    assert_eq!(read(&a, "price.csv"), read(&b, "price.csv"));
    let out = sppc(&["price", s(&fixture("benchmark.toml")), s(&contract), "--out", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_round_trip_is_identity() {
    for name in ["benchmark.toml", "cash_no_condition.toml", "engineered_ratio.toml", "calibration_template.toml"] {
        let cfg = ConfigFile::parse(&fs::read_to_string(fixture(name)).unwrap()).unwrap();
        let again = ConfigFile::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}

#[test]
fn moments_table_lists_every_coordinate() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["moments", s(&fixture("benchmark.toml")), "--out", s(dir.path())]);
    let csv = read(dir.path(), "moments.csv");
    assert!(csv.starts_with("label,mean,log_stock[issuer]@3,log_period_product[sales]@0..1\n"), "{csv}");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn estimate_round_trip_recovers_volatility() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "series",
        s(&fixture("flow_model.toml")),
        "--periods",
        "1000",
        "--period-length",
        "0.25",
        "--seed",
        "5",
        "--out",
        s(&data),
    ]);
    let est = dir.path().join("est");
    ok(&["estimate", s(&data.join("series.csv")), s(&fixture("calibration_template.toml")), "--out", s(&est)]);
    let vol = csv_value(&est, "calibration.csv", "estimate");
    assert!((vol - 0.2).abs() < 0.01, "recovered {vol}");
    assert!(read(&est, "calibration.csv").contains(",true\n"));
    let curves = read(&est, "drift_curves.csv");
    assert_eq!(curves.lines().count(), 4, "{curves}");
}

#[test]
fn constant_series_has_zero_volatility() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "estimate",
        s(&fixture("constant_series.csv")),
        s(&fixture("calibration_template.toml")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(csv_value(dir.path(), "statistics.csv", "value"), 0.0);
    assert_eq!(csv_value(dir.path(), "calibration.csv", "estimate"), 0.0);
}

#[test]
fn olkin_pratt_on_three_periods_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sppc(&[
        "estimate",
        s(&fixture("three_periods.csv")),
        "--olkin-pratt",
        "--statistic",
        "sample",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    ok(&["estimate", s(&fixture("three_periods.csv")), "--statistic", "sample", "--out", s(dir.path())]);
    assert!(read(dir.path(), "statistics.csv").contains("correlation,sales:orders,"));
}

#[test]
fn daily_prices_give_stock_volatility() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    let mut text = String::from("time,issuer\n");
    for k in 0..10 {
        let v = if k % 2 == 0 { 100.0 } else { 101.0 };
        text.push_str(&format!("{},{v}\n", k as f64 / 252.0));
    }
    fs::write(&prices, text).unwrap();
    ok(&[
        "estimate",
        s(&fixture("constant_series.csv")),
        "--statistic",
        "sample",
        "--daily-prices",
        s(&prices),
        "--out",
        s(dir.path()),
    ]);
    let stats = read(dir.path(), "statistics.csv");
    let line = stats.lines().find(|l| l.starts_with("volatility_prices,issuer,")).unwrap();
    let vol: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
    // nine log returns alternating +lr, -lr: mean lr/9, unbiased variance 10 lr^2 / 9
    let lr = (101.0f64 / 100.0).ln();
    let expected = (lr * lr * 10.0 / 9.0 * 252.0).sqrt();
    assert!((vol - expected).abs() < 1e-12, "{vol} vs {expected}");
}

#[test]
fn standards_report_without_conditions_has_unit_ratio() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["compare-standards", s(&fixture("grant_no_condition.toml")), "--paths", "1000", "--out", s(dir.path())]);
    let report = read(dir.path(), "report.txt");
    assert!(report.contains("current cost is 1.0000 times the new cost"), "{report}");
    assert!(report.contains("final-year jump std dev 0.000000"), "{report}");
}

#[test]
fn engineered_scenario_reports_two_and_a_half_times() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["compare-standards", s(&fixture("engineered_ratio.toml")), "--paths", "2000", "--out", s(dir.path())]);
    let report = read(dir.path(), "report.txt");
    assert!(report.contains("current cost is 2.5000 times the new cost"), "{report}");
    let schedules = read(dir.path(), "schedules.csv");
    for combo in ["1,1,", "1,0,", "0,1,", "0,0,"] {
        assert_eq!(schedules.lines().filter(|l| l.starts_with(combo)).count(), 4, "{combo}");
    }
}

#[test]
fn fig1_is_reproducible_and_uncorrelated_at_zero_rho() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["fig1", "--rho", "0", "--paths", "500", "--max-periods", "12", "--step", "0.0625", "--seed", "9"];
    ok(&[&args[..], &["--out", s(&a)]].concat());
    ok(&[&args[..], &["--out", s(&b)]].concat());
    let table = read(&a, "fig1.csv");
    assert_eq!(table, read(&b, "fig1.csv"));
    assert_eq!(table.lines().count(), 1 + 9);
    for line in table.lines().skip(1) {
        let lr: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(lr.abs() < 0.05, "{line}");
    }
}

#[test]
fn manifest_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["price", s(&fixture("benchmark.toml")), "--paths", "300", "--seed", "42", "--out", s(dir.path())]);
    let manifest: toml::Table = read(dir.path(), "manifest.toml").parse().unwrap();
    assert_eq!(manifest["command"].as_str(), Some("price"));
    assert_eq!(manifest["seed"].as_integer(), Some(42));
    assert_eq!(manifest["tool_version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert!(manifest["timestamp"].as_integer().unwrap() > 0);
    assert!(manifest["inputs"].as_array().unwrap()[0].as_str().unwrap().ends_with("benchmark.toml"));
    assert_eq!(manifest["flags"]["sim"]["paths"].as_integer(), Some(300));
    for name in ["price.csv", "report.txt"] {
        assert!(!read(dir.path(), name).contains(&manifest["timestamp"].as_integer().unwrap().to_string()));
    }
}
