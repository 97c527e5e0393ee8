use std::path::Path;
use std::process::{Command, Output};

use reluctant_cli::analyze::{analyze, AnalysisOptions, CURVE_COLUMNS, MAIN_EFFECT_COLUMNS};
use reluctant_cli::config::RunConfig;
use reluctant_cli::dataset::Dataset;
use reluctant_cli::demo::demo_dataset;
use reluctant_cli::validate::{validate, VALIDATION_COLUMNS};
use reluctant_cli::CliError;
use reluctant_core::spline_basis::FeatureKind;
use reluctant_core::selective_mle::{Method, REPORT_COLUMNS};
use reluctant_core::sim_harness::{
    generate_features, generate_response, pooled_pivots, run_replications, summarize, SimSetting, ECDF_COLUMNS,
    METRIC_COLUMNS, REPLICATION_COLUMNS,
};

fn reluctant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reluctant")).args(args).output().expect("spawn binary")
}

fn header(path: &Path) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.headers().unwrap().iter().map(String::from).collect()
}

/// Parses every record of a CSV; returns the row count.
fn rows(path: &Path) -> usize {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let width = rdr.headers().unwrap().len();
    let mut count = 0;
    for rec in rdr.records() {
        assert_eq!(rec.unwrap().len(), width, "{}", path.display());
        count += 1;
    }
    count
}

fn strs(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

#[test]
fn zero_replications_is_usage_error() {
    let out = reluctant(&["simulate", "--reps", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn subsample_fraction_of_one_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = reluctant(&["validate", "--demo", "--subsample-frac", "1", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
    let out = reluctant(&["validate", "--demo", "--subsample-frac", "0", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_alpha_and_missing_dataset_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    assert_eq!(reluctant(&["simulate", "--alpha", "1.5", "--out", out_dir]).status.code(), Some(2));
    assert_eq!(reluctant(&["analyze", "--out", out_dir]).status.code(), Some(2));
    let out = reluctant(&["analyze", "--dataset", "/nonexistent.csv", "--response", "y", "--out", out_dir]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn constant_column_is_named() {
    let csv = "y,a,flat\n1,0.1,3\n2,0.5,3\n3,0.2,3\n4,0.9,3\n";
    let err = Dataset::from_reader(csv.as_bytes(), "y").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("degenerate feature") && msg.contains("flat"), "{msg}");
}

#[test]
fn non_numeric_column_is_named() {
    let csv = "y,a,carrier\n1,0.1,UA\n2,0.5,AA\n";
    let msg = Dataset::from_reader(csv.as_bytes(), "y").unwrap_err().to_string();
    assert!(msg.contains("carrier"), "{msg}");
}

#[test]
fn missing_response_is_usage_error() {
    let csv = "a,b\n1,2\n3,4\n";
    let err = Dataset::from_reader(csv.as_bytes(), "y").unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
}

#[test]
fn binary_feature_is_linear_and_continuous_is_nonlinear() {
    let mut csv = String::from("y,flag,speed\n");
    for i in 0..100 {
        csv.push_str(&format!("{},{},{}\n", i as f64 * 0.3, i % 2, (i as f64 * 1.37).sin()));
    }
    let data = Dataset::from_reader(csv.as_bytes(), "y").unwrap();
    assert_eq!(data.kinds(), vec![FeatureKind::Linear, FeatureKind::Nonlinear]);
}

#[test]
fn rows_with_missing_values_are_dropped_and_counted() {
    let csv = "y,a,b\n1,0.1,2\n2,,3\n3,0.2,NA\n4,0.9,5\n5,0.4,?\n";
    let data = Dataset::from_reader(csv.as_bytes(), "y").unwrap();
    assert_eq!(data.n(), 2);
    assert_eq!(data.dropped, 3);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = RunConfig {
        setting: Some(3),
        gamma_inter: Some(1.5),
        replications: 40,
        seed: 99,
        methods: vec![Method::Selective, Method::Split],
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "replicatons = 5\n").unwrap();
    assert!(matches!(RunConfig::load(&path), Err(CliError::Usage(_))));
}

#[test]
fn every_emitted_file_parses_with_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = reluctant(&[
        "simulate", "--setting", "1", "--sigma", "2", "--reps", "3", "--seed", "5", "--out", sim.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&sim.join("replications.csv")), strs(&REPLICATION_COLUMNS));
    assert_eq!(header(&sim.join("metrics.csv")), strs(&METRIC_COLUMNS));
    assert_eq!(header(&sim.join("ecdf.csv")), strs(&ECDF_COLUMNS));
    assert_eq!(rows(&sim.join("metrics.csv")), 3);
    rows(&sim.join("replications.csv"));
    rows(&sim.join("ecdf.csv"));
    RunConfig::load(&sim.join("run_config.toml")).unwrap();

    let ana = dir.path().join("analyze");
    let out = reluctant(&["analyze", "--demo", "--demo-rows", "400", "--out", ana.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut report_cols = strs(&REPORT_COLUMNS);
    report_cols.extend(strs(&["name_j", "name_k"]));
    assert_eq!(header(&ana.join("reports.csv")), report_cols);
    assert_eq!(header(&ana.join("main_effects.csv")), strs(&MAIN_EFFECT_COLUMNS));
    assert_eq!(header(&ana.join("curves.csv")), strs(&CURVE_COLUMNS));
    assert!(rows(&ana.join("reports.csv")) > 0);
    rows(&ana.join("main_effects.csv"));
    assert_eq!(rows(&ana.join("curves.csv")) % 100, 0);
    let demo = Dataset::from_path(&ana.join("demo_dataset.csv"), "arr_delay").unwrap();
    assert_eq!(demo.n(), 400);
    RunConfig::load(&ana.join("run_config.toml")).unwrap();

    let val = dir.path().join("validate");
    let out = reluctant(&[
        "validate", "--demo", "--demo-rows", "1000", "--repeats", "2", "--out", val.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&val.join("validate.csv")), strs(&VALIDATION_COLUMNS));
    assert_eq!(rows(&val.join("validate.csv")), 3);
    let mut repeat_cols = vec!["repeat".to_string()];
    repeat_cols.extend(strs(&VALIDATION_COLUMNS));
    repeat_cols.push("skipped".to_string());
    assert_eq!(header(&val.join("validate_repeats.csv")), repeat_cols);
    assert_eq!(rows(&val.join("validate_repeats.csv")), 6);
    RunConfig::load(&val.join("run_config.toml")).unwrap();
}

#[test]
fn validate_columns_are_exact() {
    assert_eq!(VALIDATION_COLUMNS, ["method", "precision", "recall", "f1", "n_discoveries", "n_truths"]);
}

#[test]
fn naive_is_calibrated_without_cross_correlation() {
    let setting = SimSetting {
        rho_cross: 0.0,
        replications: 200,
        methods: vec![Method::Selective, Method::Naive],
        ..SimSetting::preset(2).unwrap()
    };
    let records = run_replications(&setting).unwrap();
    let ks = |m| summarize(&records, m, setting.t0, setting.alpha).ks;
    let (sel, naive) = (ks(Method::Selective), ks(Method::Naive));
    eprintln!(
        "rho_cross=0: ks selective {sel:.4} ({} pivots), naive {naive:.4} ({} pivots)",
        pooled_pivots(&records, Method::Selective).len(),
        pooled_pivots(&records, Method::Naive).len()
    );
    assert!(naive <= sel + 0.02, "naive {naive} selective {sel}");
}

fn options(seed: u64, methods: Vec<Method>) -> AnalysisOptions {
    let cfg = RunConfig::default();
    AnalysisOptions {
        r: cfg.r,
        alpha: cfg.alpha,
        seed,
        methods,
        basis: cfg.basis,
    }
}

#[test]
fn analyze_recovers_planted_interaction_from_csv() {
    let setting = SimSetting {
        sigma: 1.0,
        ..SimSetting::default()
    };
    let planted = [(0usize, 1usize)];
    let seeds = 50;
    let mut hits = 0;
    for seed in 0..seeds {
        let x = generate_features(&setting, seed).unwrap();
        let (y, _) = generate_response(&x, &planted, setting.gamma_main, 3.0, setting.sigma, seed);
        let data = Dataset {
            names: (1..=setting.p).map(|j| format!("x{j}")).collect(),
            response: "y".into(),
            x,
            y,
            dropped: 0,
        };
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let parsed = Dataset::from_reader(buf.as_slice(), "y").unwrap();
        let analysis = analyze(&parsed, &options(seed, vec![Method::Selective])).unwrap();
        let fit = analysis.fit(Method::Selective).unwrap();
        let hit = fit.reports.iter().any(|r| r.pair == planted[0] && r.is_ok() && r.p_value < 0.01);
        hits += hit as usize;
    }
    eprintln!("planted interaction recovered in {hits}/{seeds} seeds");
    assert!(hits as f64 >= 0.9 * seeds as f64, "{hits}/{seeds}");
}

#[test]
fn selective_f1_is_at_least_naive_on_planted_data() {
    let data = demo_dataset(1000, 17);
    let repeats = 100;
    let rows = validate(&data, 0.1, repeats, 17, &options(17, vec![Method::Selective, Method::Naive])).unwrap();
    let f1 = |rep, m| rows.iter().find(|r| r.repeat == rep && r.method == m).map(|r| r.score.f1).unwrap();
    let wins = (0..repeats).filter(|&rep| f1(rep, Method::Selective) >= f1(rep, Method::Naive)).count();
    eprintln!("selective F1 >= naive F1 in {wins}/{repeats} repeats");
    assert!(wins as f64 >= 0.6 * repeats as f64, "{wins}/{repeats}");
}
