//! Reference procedures for the same interaction hypotheses: the naive
//! z-test that ignores selection, and data splitting.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group_lasso::{default_epsilon, default_lambda, estimate_sigma, select_main_effects, SolverOptions};
use crate::interaction_model::{augmented_design, candidate_interactions, fit_augmented, key_statistics, CandidateRule};
use crate::rng;
use crate::selective_mle::{check_alpha, InferenceReport, Method, Reference, ReportStatus};
use crate::spline_basis::{build_named_design, BasisConfig, FeatureKind, GroupedDesign};

/// Selection with `ω = 0`.
pub fn select_unrandomized(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda: &[f64],
    epsilon: f64,
) -> Result<Vec<usize>> {
    let omega = DVector::zeros(design.q());
    let (fit, _) = select_main_effects(design, y, lambda, epsilon, &omega, &SolverOptions::default())?;
    Ok(fit.selected())
}

/// OLS z-test (or t-test) of the interaction coefficient with `M` treated as
/// fixed.
#[allow(clippy::too_many_arguments)]
pub fn naive_inference(
    y: &DVector<f64>,
    design: &GroupedDesign,
    selected: &[usize],
    pair: (usize, usize),
    sigma: f64,
    alpha: f64,
    theta_null: f64,
    reference: Reference,
) -> Result<InferenceReport> {
    check_alpha(alpha)?;
    let stats = key_statistics(y, design, selected, pair.0, pair.1, sigma)?;
    InferenceReport::wald(
        pair,
        Method::Naive,
        stats.theta_hat,
        stats.naive_stderr(),
        alpha,
        theta_null,
        reference,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub sel_indices: Vec<usize>,
    pub inf_indices: Vec<usize>,
    pub r: f64,
    pub n1: usize,
}

impl SplitPlan {
    /// Seeded uniform shuffle; the first `⌊r·n⌋` rows select. Both index
    /// lists are returned sorted.
    pub fn new(n: usize, r: f64, seed: u64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidArgument(format!("split fraction must lie in (0, 1), got {r}")));
        }
        let n1 = (r * n as f64).floor() as usize;
        if n1 == 0 || n1 == n {
            return Err(Error::InvalidArgument(format!("split of {n} rows at r = {r} leaves an empty part")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut g = rng::stream(seed, rng::streams::SPLIT);
        idx.shuffle(&mut g);
        let mut sel = idx[..n1].to_vec();
        let mut inf = idx[n1..].to_vec();
        sel.sort_unstable();
        inf.sort_unstable();
        Ok(Self {
            sel_indices: sel,
            inf_indices: inf,
            r,
            n1,
        })
    }

    pub fn n2(&self) -> usize {
        self.inf_indices.len()
    }
}

/// How penalties are set on the selection half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// The default theoretical rule at the given noise level, computed with
    /// the number of rows that enter the fit.
    Default { sigma: f64 },
    /// The default rule with `σ` estimated from the rows that enter the fit.
    Estimated,
    Fixed(Vec<f64>),
}

impl LambdaRule {
    pub fn penalties(&self, design: &GroupedDesign, y: &DVector<f64>) -> Result<Vec<f64>> {
        let sizes = design.group_sizes();
        match self {
            LambdaRule::Default { sigma } => default_lambda(*sigma, design.n(), &sizes, design.q()),
            LambdaRule::Estimated => {
                let s = estimate_sigma(y, design)?;
                default_lambda(s, design.n(), &sizes, design.q())
            }
            LambdaRule::Fixed(l) => {
                if l.len() != design.p() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} penalties for {} groups",
                        l.len(),
                        design.p()
                    )));
                }
                Ok(l.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub plan: SplitPlan,
    pub selected: Vec<usize>,
    /// Selection-half design; its bases are reused on the holdout.
    pub design: GroupedDesign,
    pub holdout: GroupedDesign,
    pub reports: Vec<InferenceReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutFit {
    pub theta: f64,
    /// `(Z̄ᵀZ̄)⁻¹_θθ` on the holdout.
    pub gram_inv_theta: f64,
    pub rss: f64,
    pub dof: usize,
}

/// Interaction fit on the holdout; `None` when the holdout cannot support
/// the pair.
pub fn holdout_fit(
    y: &DVector<f64>,
    design: &GroupedDesign,
    selected: &[usize],
    pair: (usize, usize),
) -> Option<HoldoutFit> {
    let z = augmented_design(design, selected, pair.0, pair.1).ok()?;
    let k = z.ncols();
    if design.n() < k + 1 {
        return None;
    }
    let ls = fit_augmented(&z, pair).ok()?;
    let coef = ls.coefficients(y);
    let rss = (y - &z * &coef).norm_squared();
    Some(HoldoutFit {
        theta: coef[0],
        gram_inv_theta: ls.gram_inv[(0, 0)],
        rss,
        dof: design.n() - k,
    })
}

/// The selection step, which by construction only sees the selection rows.
pub fn select_on_slice(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda_rule: &LambdaRule,
) -> Result<Vec<usize>> {
    let lambda = lambda_rule.penalties(design, y)?;
    select_unrandomized(design, y, &lambda, default_epsilon(design))
}

/// Select on `⌊r·n⌋` rows, then test every weak-hierarchy pair of the
/// selected set on the remaining rows. With `sigma = Some(σ)` the holdout
/// test is a z-test; otherwise `σ` is estimated on the holdout and a t
/// reference with `n₂ − q_M − 1` degrees of freedom is used.
#[allow(clippy::too_many_arguments)]
pub fn data_splitting_inference(
    y: &DVector<f64>,
    x_raw: &DMatrix<f64>,
    kinds: &[FeatureKind],
    names: Vec<String>,
    cfg: &BasisConfig,
    r: f64,
    seed: u64,
    lambda_rule: &LambdaRule,
    alpha: f64,
    sigma: Option<f64>,
    theta_null: f64,
) -> Result<SplitOutcome> {
    check_alpha(alpha)?;
    let n = y.len();
    if x_raw.nrows() != n {
        return Err(Error::DimensionMismatch(format!("{} rows of X for {n} responses", x_raw.nrows())));
    }
    let plan = SplitPlan::new(n, r, seed)?;
    let x_sel = x_raw.select_rows(&plan.sel_indices);
    let y_sel = y.select_rows(&plan.sel_indices);
    let design = build_named_design(&x_sel, kinds, cfg, names)?;
    let selected = select_on_slice(&design, &y_sel, lambda_rule)?;

    let holdout = design.transform(&x_raw.select_rows(&plan.inf_indices))?;
    let y_inf = y.select_rows(&plan.inf_indices);
    let pairs = candidate_interactions(&selected, design.p(), &CandidateRule::WeakHierarchy).pairs;
    let reports = pairs
        .iter()
        .map(|&pair| split_report(&y_inf, &holdout, &selected, pair, sigma, alpha, theta_null))
        .collect();
    Ok(SplitOutcome {
        plan,
        selected,
        design,
        holdout,
        reports,
    })
}

/// One holdout report; infeasible pairs yield a status row instead of an
/// error.
pub fn split_report(
    y_inf: &DVector<f64>,
    holdout: &GroupedDesign,
    selected: &[usize],
    pair: (usize, usize),
    sigma: Option<f64>,
    alpha: f64,
    theta_null: f64,
) -> InferenceReport {
    let infeasible = InferenceReport::unavailable(pair, Method::Split, ReportStatus::Infeasible, alpha);
    let q_m: usize = selected.iter().map(|&j| holdout.groups[j].len()).sum();
    if holdout.n() < q_m + 2 {
        return infeasible;
    }
    let Some(fit) = holdout_fit(y_inf, holdout, selected, pair) else {
        return infeasible;
    };
    let (scale, reference) = match sigma {
        Some(s) => (s, Reference::Normal),
        None => {
            if fit.dof == 0 {
                return infeasible;
            }
            ((fit.rss / fit.dof as f64).sqrt(), Reference::StudentT { dof: fit.dof as f64 })
        }
    };
    let se = scale * fit.gram_inv_theta.sqrt();
    InferenceReport::wald(pair, Method::Split, fit.theta, se, alpha, theta_null, reference)
        .unwrap_or(infeasible)
}
