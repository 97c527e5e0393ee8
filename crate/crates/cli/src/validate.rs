//! Subsample/holdout validation: analyze a small subsample, then use t-tests
//! on the disjoint holdout as a proxy truth for each candidate pair.

use std::io::Write;

use reluctant_core::baselines::{split_report, SplitPlan};
use reluctant_core::rng::derive_seed;
use reluctant_core::selective_mle::{fmt_float, Method};
use reluctant_core::sim_harness::F1Score;
use reluctant_core::Result;

use crate::analyze::{analyze, AnalysisOptions};
use crate::dataset::{csv_err, Dataset};
use crate::CliError;

pub const VALIDATION_COLUMNS: [&str; 6] = ["method", "precision", "recall", "f1", "n_discoveries", "n_truths"];

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub repeat: usize,
    pub method: Method,
    pub score: F1Score,
    /// Pairs the holdout could not fit; excluded from both counts.
    pub skipped: usize,
}

pub fn validate_once(data: &Dataset, frac: f64, seed: u64, opts: &AnalysisOptions, repeat: usize) -> Result<Vec<ValidationRow>> {
    let plan = SplitPlan::new(data.n(), frac, seed)?;
    let sub = data.select_rows(&plan.sel_indices);
    let hold = data.select_rows(&plan.inf_indices);
    let analysis = analyze(&sub, &AnalysisOptions { seed, ..opts.clone() })?;
    let holdout = analysis.design.transform(&hold.x)?;
    let mut rows = Vec::new();
    for fit in &analysis.fits {
        let mut disc = Vec::new();
        let mut truth = Vec::new();
        let mut skipped = 0;
        for r in &fit.reports {
            let check = split_report(&hold.y, &holdout, &fit.selected, r.pair, None, opts.alpha, 0.0);
            if !check.is_ok() {
                skipped += 1;
                continue;
            }
            disc.push(r.rejects());
            truth.push(check.rejects());
        }
        rows.push(ValidationRow {
            repeat,
            method: fit.method,
            score: F1Score::from_flags(&disc, &truth),
            skipped,
        });
    }
    Ok(rows)
}

/// Every repeat draws its own subsample from `derive_seed(seed, repeat)`.
pub fn validate(data: &Dataset, frac: f64, repeats: usize, seed: u64, opts: &AnalysisOptions) -> Result<Vec<ValidationRow>> {
    let mut out = Vec::new();
    for rep in 0..repeats {
        out.extend(validate_once(data, frac, derive_seed(seed, rep as u64), opts, rep)?);
    }
    Ok(out)
}

/// Mean scores and total counts per method.
pub fn aggregate(rows: &[ValidationRow], methods: &[Method]) -> Vec<(Method, F1Score)> {
    methods
        .iter()
        .filter_map(|&m| {
            let mine: Vec<&ValidationRow> = rows.iter().filter(|r| r.method == m).collect();
            if mine.is_empty() {
                return None;
            }
            let k = mine.len() as f64;
            let mean = |f: fn(&F1Score) -> f64| mine.iter().map(|r| f(&r.score)).sum::<f64>() / k;
            Some((
                m,
                F1Score {
                    precision: mean(|s| s.precision),
                    recall: mean(|s| s.recall),
                    f1: mean(|s| s.f1),
                    n_discoveries: mine.iter().map(|r| r.score.n_discoveries).sum(),
                    n_truths: mine.iter().map(|r| r.score.n_truths).sum(),
                },
            ))
        })
        .collect()
}

fn score_record(method: Method, s: &F1Score) -> Vec<String> {
    vec![
        method.to_string(),
        fmt_float(s.precision),
        fmt_float(s.recall),
        fmt_float(s.f1),
        s.n_discoveries.to_string(),
        s.n_truths.to_string(),
    ]
}

pub fn write_summary<W: Write>(out: W, summary: &[(Method, F1Score)]) -> std::result::Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VALIDATION_COLUMNS).map_err(csv_err)?;
    for (m, s) in summary {
        w.write_record(score_record(*m, s)).map_err(csv_err)?;
    }
    w.flush().map_err(CliError::Io)
}

pub fn write_repeats<W: Write>(out: W, rows: &[ValidationRow]) -> std::result::Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["repeat"];
    header.extend(VALIDATION_COLUMNS);
    header.push("skipped");
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.repeat.to_string()];
        rec.extend(score_record(r.method, &r.score));
        rec.push(r.skipped.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(CliError::Io)
}
