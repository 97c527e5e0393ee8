//! Library half of the `reluctant` binary: configuration, dataset handling
//! and the three run modes.

pub mod analyze;
pub mod config;
pub mod dataset;
pub mod demo;
pub mod simulate;
pub mod validate;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use config::{Mode, RunConfig};
use dataset::Dataset;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] reluctant_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Usage(format!("output directory {} not writable: {e}", cfg.out.display())))?;
    std::fs::write(cfg.out.join("run_config.toml"), cfg.to_toml())?;
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    if cfg.demo {
        let data = demo::demo_dataset(cfg.demo_rows, cfg.seed);
        data.write_csv(create(&cfg.out, "demo_dataset.csv")?)?;
        return Ok(data);
    }
    let path = cfg.dataset.as_ref().expect("validated");
    let response = cfg.response.as_deref().expect("validated");
    let data = Dataset::from_path(path, response)?;
    if data.dropped > 0 {
        eprintln!("warning: dropped {} rows with missing values", data.dropped);
    }
    Ok(data)
}

fn analysis_options(cfg: &RunConfig) -> analyze::AnalysisOptions {
    analyze::AnalysisOptions {
        r: cfg.r,
        alpha: cfg.alpha,
        seed: cfg.seed,
        methods: cfg.methods.clone(),
        basis: cfg.basis,
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    prepare_out(cfg)?;
    match cfg.mode {
        Mode::Simulate => {
            let points = simulate::grid(cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            let result = simulate::run_grid(&points)?;
            let all: Vec<_> = result.runs.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
            reluctant_core::sim_harness::write_replications_csv(create(&cfg.out, "replications.csv")?, &all)?;
            reluctant_core::sim_harness::write_metrics_csv(create(&cfg.out, "metrics.csv")?, &result.metrics)?;
            reluctant_core::sim_harness::write_ecdf_csv(create(&cfg.out, "ecdf.csv")?, &result.runs)?;
            simulate::print_metrics(&result.metrics);
        }
        Mode::Analyze => {
            let data = load_dataset(cfg)?;
            let analysis = analyze::analyze(&data, &analysis_options(cfg))?;
            analyze::write_reports(create(&cfg.out, "reports.csv")?, &analysis)?;
            analyze::write_main_effects(create(&cfg.out, "main_effects.csv")?, &analysis)?;
            analyze::write_curves(create(&cfg.out, "curves.csv")?, &analysis)?;
            analyze::print_summary(&analysis, data.dropped);
        }
        Mode::Validate => {
            let data = load_dataset(cfg)?;
            let opts = analysis_options(cfg);
            let rows = validate::validate(&data, cfg.subsample_frac, cfg.repeats, cfg.seed, &opts)?;
            let summary = validate::aggregate(&rows, &cfg.methods);
            validate::write_summary(create(&cfg.out, "validate.csv")?, &summary)?;
            validate::write_repeats(create(&cfg.out, "validate_repeats.csv")?, &rows)?;
            let skipped: usize = rows.iter().map(|r| r.skipped).sum();
            println!("{:<9} {:>9} {:>7} {:>7} {:>6} {:>6}", "method", "precision", "recall", "f1", "disc", "truth");
            for (m, s) in &summary {
                println!(
                    "{:<9} {:>9.3} {:>7.3} {:>7.3} {:>6} {:>6}",
                    m.as_str(),
                    s.precision,
                    s.recall,
                    s.f1,
                    s.n_discoveries,
                    s.n_truths
                );
            }
            if skipped > 0 {
                eprintln!("warning: {skipped} pairs skipped because the holdout could not fit them");
            }
        }
    }
    Ok(())
}
