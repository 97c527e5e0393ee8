//! Fit the additive model on a dataset and test every weak-hierarchy
//! interaction with each requested method, using a plug-in noise level.

use std::io::Write;

use nalgebra::DVector;
use reluctant_core::baselines::{data_splitting_inference, naive_inference, LambdaRule};
use reluctant_core::group_lasso::{
    default_epsilon, default_lambda, estimate_sigma, sample_gaussian, select_main_effects, RandomizationSpec,
    SolverOptions,
};
use reluctant_core::interaction_model::{candidate_interactions, key_statistics, CandidateRule};
use reluctant_core::rng::{self, streams};
use reluctant_core::selective_mle::{
    fmt_float, selective_inference, InferenceReport, Method, Reference, ReportStatus, REPORT_COLUMNS,
};
use reluctant_core::spline_basis::{build_named_design, BasisConfig, FeatureKind, GroupedDesign};
use reluctant_core::Result;

use crate::dataset::{csv_err, Dataset};
use crate::CliError;

pub const CURVE_POINTS: usize = 100;

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub r: f64,
    pub alpha: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub basis: BasisConfig,
}

#[derive(Debug, Clone)]
pub struct MethodFit {
    pub method: Method,
    pub selected: Vec<usize>,
    /// Group lasso coefficients on `Ψ`; absent for data splitting.
    pub beta: Option<DVector<f64>>,
    pub reports: Vec<InferenceReport>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub design: GroupedDesign,
    pub sigma_hat: f64,
    pub fits: Vec<MethodFit>,
}

impl Analysis {
    pub fn fit(&self, method: Method) -> Option<&MethodFit> {
        self.fits.iter().find(|f| f.method == method)
    }
}

pub fn analyze(data: &Dataset, opts: &AnalysisOptions) -> Result<Analysis> {
    let kinds = data.kinds();
    let design = build_named_design(&data.x, &kinds, &opts.basis, data.names.clone())?;
    let sigma_hat = estimate_sigma(&data.y, &design)?;
    let lambda = default_lambda(sigma_hat, design.n(), &design.group_sizes(), design.q())?;
    let epsilon = default_epsilon(&design);
    let mut fits = Vec::new();
    for &method in &opts.methods {
        let fit = match method {
            Method::Selective => {
                let cov = RandomizationSpec::scaled_gram(opts.r, sigma_hat).covariance(&design)?;
                let omega = sample_gaussian(&cov, &mut rng::stream(opts.seed, streams::RANDOMIZATION))?;
                let (fit, event) =
                    select_main_effects(&design, &data.y, &lambda, epsilon, &omega, &SolverOptions::default())?;
                let reports = pairs(&event.selected, design.p())
                    .into_iter()
                    .map(|pair| {
                        key_statistics(&data.y, &design, &event.selected, pair.0, pair.1, sigma_hat)
                            .and_then(|st| {
                                selective_inference(&st, &event, &design, &cov, &lambda, epsilon, opts.alpha, 0.0)
                            })
                            .unwrap_or_else(|_| {
                                InferenceReport::unavailable(pair, method, ReportStatus::Failed, opts.alpha)
                            })
                    })
                    .collect();
                MethodFit {
                    method,
                    selected: event.selected,
                    beta: Some(fit.beta_hat),
                    reports,
                }
            }
            Method::Naive => {
                let omega = DVector::zeros(design.q());
                let (fit, event) =
                    select_main_effects(&design, &data.y, &lambda, epsilon, &omega, &SolverOptions::default())?;
                let reports = pairs(&event.selected, design.p())
                    .into_iter()
                    .map(|pair| {
                        naive_inference(&data.y, &design, &event.selected, pair, sigma_hat, opts.alpha, 0.0, Reference::Normal)
                            .unwrap_or_else(|_| {
                                InferenceReport::unavailable(pair, method, ReportStatus::Failed, opts.alpha)
                            })
                    })
                    .collect();
                MethodFit {
                    method,
                    selected: event.selected,
                    beta: Some(fit.beta_hat),
                    reports,
                }
            }
            Method::Split => {
                let out = data_splitting_inference(
                    &data.y,
                    &data.x,
                    &kinds,
                    data.names.clone(),
                    &opts.basis,
                    opts.r,
                    opts.seed,
                    &LambdaRule::Estimated,
                    opts.alpha,
                    None,
                    0.0,
                )?;
                MethodFit {
                    method,
                    selected: out.selected,
                    beta: None,
                    reports: out.reports,
                }
            }
        };
        fits.push(fit);
    }
    Ok(Analysis {
        names: data.names.clone(),
        kinds,
        design,
        sigma_hat,
        fits,
    })
}

fn pairs(selected: &[usize], p: usize) -> Vec<(usize, usize)> {
    candidate_interactions(selected, p, &CandidateRule::WeakHierarchy).pairs
}

fn kind_str(k: FeatureKind) -> &'static str {
    match k {
        FeatureKind::Linear => "linear",
        FeatureKind::Nonlinear => "nonlinear",
    }
}

/// [`REPORT_COLUMNS`] followed by the two feature names.
pub fn write_reports<W: Write>(out: W, analysis: &Analysis) -> std::result::Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = REPORT_COLUMNS.to_vec();
    header.extend(["name_j", "name_k"]);
    w.write_record(&header).map_err(csv_err)?;
    for fit in &analysis.fits {
        for r in &fit.reports {
            let mut rec = r.csv_record();
            rec.push(analysis.names[r.pair.0].clone());
            rec.push(analysis.names[r.pair.1].clone());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(CliError::Io)
}

pub const MAIN_EFFECT_COLUMNS: [&str; 6] = ["method", "j", "feature", "kind", "group_size", "norm"];

/// One row per selected main effect; `norm` is `‖β̂_{g_j}‖₂` when available.
pub fn write_main_effects<W: Write>(out: W, analysis: &Analysis) -> std::result::Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MAIN_EFFECT_COLUMNS).map_err(csv_err)?;
    for fit in &analysis.fits {
        for &j in &fit.selected {
            let g = analysis.design.groups[j].clone();
            let norm = fit.beta.as_ref().map_or(f64::NAN, |b| b.rows(g.start, g.len()).norm());
            w.write_record([
                fit.method.to_string(),
                (j + 1).to_string(),
                analysis.names[j].clone(),
                kind_str(analysis.kinds[j]).to_string(),
                g.len().to_string(),
                fmt_float(norm),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(CliError::Io)
}

pub const CURVE_COLUMNS: [&str; 5] = ["method", "j", "feature", "x", "fitted"];

/// Fitted additive component `Ψ_j(x)β̂_{g_j}` of each selected feature on an
/// evenly spaced grid over its observed range.
pub fn curves(analysis: &Analysis, fit: &MethodFit) -> Vec<(usize, Vec<(f64, f64)>)> {
    let Some(beta) = &fit.beta else { return Vec::new() };
    let d = &analysis.design;
    fit.selected
        .iter()
        .map(|&j| {
            let col = d.raw.column(j);
            let lo = col.min();
            let hi = col.max();
            let grid: Vec<f64> = (0..CURVE_POINTS)
                .map(|i| lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64)
                .collect();
            let g = d.groups[j].clone();
            let coef = beta.rows(g.start, g.len());
            let values = match &d.bases[j] {
                Some(basis) => {
                    let (block, _) = basis.evaluate(&grid);
                    (block * coef).iter().copied().collect::<Vec<_>>()
                }
                None => grid.iter().map(|&x| x * coef[0]).collect(),
            };
            (j, grid.into_iter().zip(values).collect())
        })
        .collect()
}

pub fn write_curves<W: Write>(out: W, analysis: &Analysis) -> std::result::Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_COLUMNS).map_err(csv_err)?;
    for fit in &analysis.fits {
        for (j, points) in curves(analysis, fit) {
            for (x, f) in points {
                w.write_record([
                    fit.method.to_string(),
                    (j + 1).to_string(),
                    analysis.names[j].clone(),
                    fmt_float(x),
                    fmt_float(f),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(CliError::Io)
}

pub fn print_summary(analysis: &Analysis, dropped: usize) {
    let nl = analysis.kinds.iter().filter(|&&k| k == FeatureKind::Nonlinear).count();
    println!(
        "n = {}, p = {} ({nl} nonlinear), q = {}, sigma_hat = {:.4}, rows dropped = {dropped}",
        analysis.design.n(),
        analysis.design.p(),
        analysis.design.q(),
        analysis.sigma_hat
    );
    for fit in &analysis.fits {
        let ok = fit.reports.iter().filter(|r| r.is_ok()).count();
        let sig = fit.reports.iter().filter(|r| r.rejects()).count();
        let names: Vec<&str> = fit.selected.iter().map(|&j| analysis.names[j].as_str()).collect();
        println!(
            "{:<9} |M| = {:<2} pairs = {:<4} reported = {:<4} significant = {:<4} M = [{}]",
            fit.method,
            fit.selected.len(),
            fit.reports.len(),
            ok,
            sig,
            names.join(", ")
        );
    }
}
