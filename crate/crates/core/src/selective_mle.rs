//! Selective likelihood for one interaction given the randomized selection
//! event: the change of variables, the reduced Gaussian laws, the Laplace
//! approximation with a log-barrier, the selective MLE and its observed
//! information, and Wald pivots.
//!
//! Vectors indexed by `0..q` follow the design's column order. Selected and
//! unselected groups are interleaved there, which is equivalent to the
//! block-ordered presentation up to a permutation that every formula below
//! absorbs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::group_lasso::SelectionEvent;
use crate::interaction_model::KeyStats;
use crate::linalg::{orthonormal_completion, spd_inverse, spd_solve, symmetrize};
use crate::spline_basis::GroupedDesign;

/// The log-determinant term of the change of variables,
/// `D(g) = Γ(g) + 𝒰_⊥ᵀQ⁻¹Λ𝒰_⊥`.
///
/// Because `Λ` is a scalar multiple of the identity on each group,
/// `D(g) = S(g)Λ'` with `S(g) = Γ(g)Λ'⁻¹ + 𝒰_⊥ᵀQ⁻¹𝒰_⊥` symmetric positive
/// definite and `Λ' = diag(λ_j I_{B_j−1})`. All evaluations go through `S`.
#[derive(Debug, Clone)]
pub struct JacobianTerm {
    /// `𝒰_⊥ᵀQ⁻¹𝒰_⊥`.
    pub w: DMatrix<f64>,
    /// `λ_j` for each selected group.
    pub lambda: Vec<f64>,
    /// `B_j − 1` for each selected group.
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LogJacobian {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl JacobianTerm {
    /// The term for groups of size one only, where `D` is `0 × 0`.
    pub fn empty(lambda: Vec<f64>) -> Self {
        let sizes = vec![0; lambda.len()];
        Self {
            w: DMatrix::zeros(0, 0),
            lambda,
            sizes,
        }
    }

    pub fn groups(&self) -> usize {
        self.lambda.len()
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Dense `D(g)`.
    pub fn matrix(&self, g: &DVector<f64>) -> DMatrix<f64> {
        let mut d = self.w.clone();
        let mut lam = Vec::with_capacity(self.dim());
        for (j, &s) in self.sizes.iter().enumerate() {
            lam.extend(std::iter::repeat_n(self.lambda[j], s));
        }
        for (c, &l) in lam.iter().enumerate() {
            d.column_mut(c).scale_mut(l);
        }
        let mut a = 0;
        for (j, &s) in self.sizes.iter().enumerate() {
            for _ in 0..s {
                d[(a, a)] += g[j];
                a += 1;
            }
        }
        d
    }

    pub fn evaluate(&self, g: &DVector<f64>) -> Result<LogJacobian> {
        let m = self.groups();
        if g.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "g has {} entries for {m} groups",
                g.len()
            )));
        }
        let dim = self.dim();
        if dim == 0 {
            return Ok(LogJacobian {
                value: 0.0,
                gradient: DVector::zeros(m),
                hessian: DMatrix::zeros(m, m),
            });
        }
        let mut s = self.w.clone();
        let mut owner = Vec::with_capacity(dim);
        for (j, &size) in self.sizes.iter().enumerate() {
            owner.extend(std::iter::repeat_n(j, size));
        }
        for (a, &j) in owner.iter().enumerate() {
            s[(a, a)] += g[j] / self.lambda[j];
        }
        let chol = s.cholesky().ok_or(Error::JacobianNotPd)?;
        let l = chol.l_dirty();
        let mut value: f64 = (0..dim).map(|a| 2.0 * l[(a, a)].ln()).sum();
        for (j, &size) in self.sizes.iter().enumerate() {
            value += size as f64 * self.lambda[j].ln();
        }
        if !value.is_finite() {
            return Err(Error::JacobianNotPd);
        }
        let sinv = chol.inverse();
        let mut gradient = DVector::zeros(m);
        let mut hessian = DMatrix::zeros(m, m);
        for a in 0..dim {
            let ja = owner[a];
            gradient[ja] += sinv[(a, a)] / self.lambda[ja];
            for b in 0..dim {
                let jb = owner[b];
                hessian[(ja, jb)] -= sinv[(a, b)] * sinv[(a, b)] / (self.lambda[ja] * self.lambda[jb]);
            }
        }
        symmetrize(&mut hessian);
        Ok(LogJacobian {
            value,
            gradient,
            hessian,
        })
    }
}

/// `Π(γ, U, Z) = A(θ̂, β̂) + B(U)γ + c(U, Z)` and the pieces of its Jacobian.
#[derive(Debug, Clone)]
pub struct SelectionMapping {
    pub pair: (usize, usize),
    pub selected: Vec<usize>,
    /// `−ΨᵀZ̄`, `q × (q_M + 1)`.
    pub a: DMatrix<f64>,
    /// `(ΨᵀΨ_M + εI padded)·bd(Û)`, `q × |M|`.
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Block-diagonal completion of `Û`, `q_M × (q_M − |M|)`.
    pub u_perp: DMatrix<f64>,
    /// `𝒰_⊥ᵀQ⁻¹Λ𝒰_⊥`.
    pub jacobian_term: DMatrix<f64>,
    /// `λ_j I_{B_j}` stacked over the selected groups.
    pub lambda_diag: DVector<f64>,
    pub jacobian: JacobianTerm,
    pub gamma_hat: DVector<f64>,
    pub theta_beta_hat: DVector<f64>,
}

impl SelectionMapping {
    /// `A x + B g + c`.
    pub fn apply(&self, theta_beta: &DVector<f64>, gamma: &DVector<f64>) -> DVector<f64> {
        &self.a * theta_beta + &self.b * gamma + &self.c
    }

    /// `Π` at the observed `(γ̂, Û, Ẑ)`; equals ω at a solution.
    pub fn reconstruct(&self) -> DVector<f64> {
        self.apply(&self.theta_beta_hat, &self.gamma_hat)
    }
}

pub fn build_mapping(
    design: &GroupedDesign,
    event: &SelectionEvent,
    stats: &KeyStats,
    lambda: &[f64],
    epsilon: f64,
) -> Result<SelectionMapping> {
    if event.is_empty() {
        return Err(Error::EmptySelection);
    }
    if event.selected != stats.selected {
        return Err(Error::DimensionMismatch(
            "selection event and key statistics disagree on M".into(),
        ));
    }
    if lambda.len() != design.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} penalties for {} groups",
            lambda.len(),
            design.p()
        )));
    }
    let q = design.q();
    let psi = &design.matrix;
    let sel = &event.selected;
    let n_sel = sel.len();

    let a = -(psi.transpose() * &stats.zbar);

    let mut b = DMatrix::zeros(q, n_sel);
    for (col, (&j, u)) in sel.iter().zip(&event.u_hat).enumerate() {
        let g = &design.groups[j];
        let block = psi.columns(g.start, g.len());
        let mut v = psi.transpose() * (block * u);
        for (i, r) in g.clone().enumerate() {
            v[r] += epsilon * u[i];
        }
        b.set_column(col, &v);
    }

    let mut c = DVector::zeros(q);
    for (&j, u) in sel.iter().zip(&event.u_hat) {
        let g = &design.groups[j];
        c.rows_mut(g.start, g.len()).copy_from(&(u * lambda[j]));
    }
    let mut offset = 0;
    for (&j, z) in event.inactive.iter().zip(&event.z_hat) {
        let g = &design.groups[j];
        let a_hat = stats.a_hat.rows(offset, g.len());
        c.rows_mut(g.start, g.len()).copy_from(&(a_hat + z * lambda[j]));
        offset += g.len();
    }
    if offset != stats.a_hat.len() {
        return Err(Error::DimensionMismatch(
            "inactive subgradients do not cover Â".into(),
        ));
    }

    let sizes: Vec<usize> = sel.iter().map(|&j| design.groups[j].len()).collect();
    let q_m: usize = sizes.iter().sum();
    let mut u_perp = DMatrix::zeros(q_m, q_m - n_sel);
    let (mut row, mut col) = (0, 0);
    for (u, &bj) in event.u_hat.iter().zip(&sizes) {
        let comp = orthonormal_completion(u);
        u_perp.view_mut((row, col), (bj, bj - 1)).copy_from(&comp);
        row += bj;
        col += bj - 1;
    }

    let psi_m = design.columns_of(sel);
    let mut q_mat = psi_m.transpose() * &psi_m;
    for i in 0..q_m {
        q_mat[(i, i)] += epsilon;
    }
    let solved = spd_solve(&q_mat, &u_perp).ok_or(Error::RankDeficient)?;
    let mut w = u_perp.transpose() * solved;
    symmetrize(&mut w);

    let lambda_sel: Vec<f64> = sel.iter().map(|&j| lambda[j]).collect();
    let lambda_diag = DVector::from_iterator(
        q_m,
        sel.iter()
            .zip(&sizes)
            .flat_map(|(&j, &bj)| std::iter::repeat_n(lambda[j], bj)),
    );
    let mut perp_lambda = Vec::with_capacity(q_m - n_sel);
    for (&l, &bj) in lambda_sel.iter().zip(&sizes) {
        perp_lambda.extend(std::iter::repeat_n(l, bj - 1));
    }
    let mut jacobian_term = w.clone();
    for (cidx, &l) in perp_lambda.iter().enumerate() {
        jacobian_term.column_mut(cidx).scale_mut(l);
    }

    Ok(SelectionMapping {
        pair: stats.pair,
        selected: sel.clone(),
        a,
        b,
        c,
        u_perp,
        jacobian_term,
        lambda_diag,
        jacobian: JacobianTerm {
            w,
            lambda: lambda_sel,
            sizes: sizes.iter().map(|&bj| bj - 1).collect(),
        },
        gamma_hat: DVector::from_vec(event.gamma_hat.clone()),
        theta_beta_hat: stats.theta_beta(),
    })
}

/// The Gaussian laws of `(θ̂, β̂)` and `γ̂` after conditioning on the
/// directions and subgradients. Precisions are stored next to covariances
/// since the large-randomization regime makes `Ω̄` itself badly scaled.
#[derive(Debug, Clone)]
pub struct ReducedGaussians {
    pub omega_bar: DMatrix<f64>,
    pub omega_bar_inv: DMatrix<f64>,
    pub a_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub theta_bar: DMatrix<f64>,
    pub theta_bar_inv: DMatrix<f64>,
    pub r_bar: DMatrix<f64>,
    pub s_bar: DVector<f64>,
    pub sigma_bar: DMatrix<f64>,
    pub sigma_bar_inv: DMatrix<f64>,
    /// Whether the diagonal jitter guard fired while inverting `Θ̄⁻¹`.
    pub jittered: bool,
}

pub fn reduce_gaussians(
    mapping: &SelectionMapping,
    omega: &DMatrix<f64>,
    sigma_bar: &DMatrix<f64>,
) -> Result<ReducedGaussians> {
    let q = mapping.a.nrows();
    if omega.shape() != (q, q) {
        return Err(Error::DimensionMismatch(format!(
            "Ω is {:?}, expected {q} × {q}",
            omega.shape()
        )));
    }
    let chol = omega.clone().cholesky().ok_or(Error::RandomizationNotPd)?;
    let oi_b = chol.solve(&mapping.b);
    let oi_a = chol.solve(&mapping.a);
    let oi_c = chol.solve(&mapping.c);

    let mut omega_bar_inv = mapping.b.transpose() * &oi_b;
    symmetrize(&mut omega_bar_inv);
    let omega_bar = spd_inverse(&omega_bar_inv).ok_or(Error::NonPdReducedCovariance)?;

    let bt_oi_a = oi_b.transpose() * &mapping.a;
    let bt_oi_c = oi_b.transpose() * &mapping.c;
    let a_bar = -(&omega_bar * bt_oi_a);
    let b_bar = -(&omega_bar * bt_oi_c);

    let sigma_bar_inv = spd_inverse(sigma_bar).ok_or(Error::NonPdReducedCovariance)?;
    // ĀᵀΩ̄⁻¹Ā = (BᵀΩ⁻¹A)ᵀ Ω̄ (BᵀΩ⁻¹A)
    let aoa = a_bar.transpose() * &omega_bar_inv * &a_bar;
    let at_oi_a = mapping.a.transpose() * &oi_a;
    let mut theta_bar_inv = &sigma_bar_inv - aoa + at_oi_a;
    symmetrize(&mut theta_bar_inv);

    let (theta_bar, theta_bar_inv, jittered) = match spd_inverse(&theta_bar_inv) {
        Some(t) => (t, theta_bar_inv, false),
        None => {
            let dim = theta_bar_inv.nrows();
            let jitter = 1e-10 * theta_bar_inv.trace() / dim as f64;
            let mut retry = theta_bar_inv;
            for i in 0..dim {
                retry[(i, i)] += jitter;
            }
            let t = spd_inverse(&retry).ok_or(Error::NonPdReducedCovariance)?;
            (t, retry, true)
        }
    };

    let r_bar = &theta_bar * &sigma_bar_inv;
    let rhs = a_bar.transpose() * (&omega_bar_inv * &b_bar) - mapping.a.transpose() * oi_c;
    let s_bar = &theta_bar * rhs;

    Ok(ReducedGaussians {
        omega_bar,
        omega_bar_inv,
        a_bar,
        b_bar,
        theta_bar,
        theta_bar_inv,
        r_bar,
        s_bar,
        sigma_bar: sigma_bar.clone(),
        sigma_bar_inv,
        jittered,
    })
}

pub fn log_jacobian(g: &DVector<f64>, mapping: &SelectionMapping) -> Result<LogJacobian> {
    mapping.jacobian.evaluate(g)
}

/// `Σ_k log(1 + 1/g_k)`, `+∞` off the positive orthant.
pub fn barrier(g: &DVector<f64>) -> f64 {
    if g.iter().any(|&v| !(v > 0.0)) {
        return f64::INFINITY;
    }
    g.iter().map(|&v| (1.0 / v).ln_1p()).sum()
}

fn barrier_d1(g: f64) -> f64 {
    -1.0 / (g * (1.0 + g))
}

fn barrier_d2(g: f64) -> f64 {
    (2.0 * g + 1.0) / (g * g * (1.0 + g) * (1.0 + g))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierOptions {
    /// Sup-norm gradient tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub fraction_to_boundary: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            armijo: 1e-4,
            shrink: 0.5,
            fraction_to_boundary: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub g: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective at every accepted iterate, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// `½(g − m)ᵀP(g − m) − log det D(g) + Barr(g)` with derivatives.
pub fn barrier_objective(
    precision: &DMatrix<f64>,
    mean: &DVector<f64>,
    jacobian: &JacobianTerm,
    g: &DVector<f64>,
) -> Result<BarrierEval> {
    if g.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("barrier objective needs g > 0".into()));
    }
    let ld = jacobian.evaluate(g)?;
    let r = g - mean;
    let pr = precision * &r;
    let value = 0.5 * r.dot(&pr) - ld.value + barrier(g);
    let gradient = pr - ld.gradient + g.map(barrier_d1);
    let mut hessian = precision - ld.hessian;
    for k in 0..g.len() {
        hessian[(k, k)] += barrier_d2(g[k]);
    }
    symmetrize(&mut hessian);
    Ok(BarrierEval {
        value,
        gradient,
        hessian,
    })
}

fn value_at(
    precision: &DMatrix<f64>,
    mean: &DVector<f64>,
    jacobian: &JacobianTerm,
    g: &DVector<f64>,
) -> f64 {
    barrier_objective(precision, mean, jacobian, g)
        .map(|e| e.value)
        .unwrap_or(f64::INFINITY)
}

/// Damped Newton on the barrier objective with an Armijo line search that
/// never leaves the positive orthant.
pub fn minimize_barrier_objective(
    precision: &DMatrix<f64>,
    mean: &DVector<f64>,
    jacobian: &JacobianTerm,
    init: &DVector<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution> {
    let mut g = init.clone();
    let mut eval = barrier_objective(precision, mean, jacobian, &g)?;
    let mut trace = vec![eval.value];

    for iter in 0..opts.max_iter {
        let grad_norm = eval.gradient.amax();
        let finish = |g: DVector<f64>, eval: BarrierEval, trace: Vec<f64>| BarrierSolution {
            g,
            value: eval.value,
            gradient: eval.gradient,
            hessian: eval.hessian,
            iterations: iter,
            grad_norm,
            objective_trace: trace,
        };
        if grad_norm <= opts.tol {
            return Ok(finish(g, eval, trace));
        }

        let newton = eval
            .hessian
            .clone()
            .cholesky()
            .map(|c| -c.solve(&eval.gradient))
            .filter(|d| d.dot(&eval.gradient) < 0.0);
        let mut directions = Vec::with_capacity(2);
        if let Some(d) = newton {
            directions.push(d);
        }
        directions.push(-&eval.gradient);

        let mut accepted = None;
        let mut decrement = f64::INFINITY;
        for d in &directions {
            let slope = d.dot(&eval.gradient);
            decrement = decrement.min(-slope);
            let mut t: f64 = 1.0;
            for k in 0..g.len() {
                if d[k] < 0.0 {
                    t = t.min(opts.fraction_to_boundary * g[k] / -d[k]);
                }
            }
            for _ in 0..80 {
                let trial = &g + d * t;
                let f = value_at(precision, mean, jacobian, &trial);
                if f < eval.value && f <= eval.value + opts.armijo * t * slope {
                    accepted = Some(trial);
                    break;
                }
                t *= opts.shrink;
            }
            if accepted.is_some() {
                break;
            }
        }

        match accepted {
            Some(next) => {
                g = next;
                eval = barrier_objective(precision, mean, jacobian, &g)?;
                trace.push(eval.value);
            }
            // No representable decrease remains: the iterate is optimal to
            // machine precision.
            None if decrement <= 1e-13 * (1.0 + eval.value.abs()) => {
                return Ok(finish(g, eval, trace));
            }
            None => {
                return Err(Error::BarrierInfeasible {
                    iteration: iter,
                    grad_norm,
                })
            }
        }
    }
    Err(Error::BarrierNonConvergence {
        iterations: opts.max_iter,
        grad_norm: eval.gradient.amax(),
    })
}

/// The barrier problem at `m = Ā(θ̂, β̂) + b̄` with precision `Ω̄⁻¹`,
/// started from the observed `γ̂`.
pub fn solve_barrier_problem(
    reduced: &ReducedGaussians,
    mapping: &SelectionMapping,
    theta_beta_hat: &DVector<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution> {
    let mean = &reduced.a_bar * theta_beta_hat + &reduced.b_bar;
    minimize_barrier_objective(
        &reduced.omega_bar_inv,
        &mean,
        &mapping.jacobian,
        &mapping.gamma_hat,
        opts,
    )
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub mle: DVector<f64>,
    pub fisher: DMatrix<f64>,
    /// `I⁻¹ = Σ̄KΣ̄`.
    pub fisher_inv: DMatrix<f64>,
}

impl MleFit {
    pub fn theta(&self) -> f64 {
        self.mle[0]
    }

    pub fn theta_stderr(&self) -> f64 {
        self.fisher_inv[(0, 0)].sqrt()
    }
}

pub fn selective_mle_and_fisher(
    reduced: &ReducedGaussians,
    mapping: &SelectionMapping,
    stats: &KeyStats,
    g_star: &DVector<f64>,
) -> Result<MleFit> {
    let tb = stats.theta_beta();
    let mean = &reduced.a_bar * &tb + &reduced.b_bar;
    let sb = &reduced.sigma_bar;
    let mle = sb * (&reduced.theta_bar_inv * (&tb - &reduced.s_bar))
        + sb * (reduced.a_bar.transpose() * (&reduced.omega_bar_inv * (&mean - g_star)));

    let h = barrier_objective(&reduced.omega_bar_inv, &mean, &mapping.jacobian, g_star)?.hessian;
    let oa = &reduced.omega_bar_inv * &reduced.a_bar;
    let h_oa = spd_solve(&h, &oa).ok_or(Error::DegenerateInformation)?;
    let mut k = &reduced.theta_bar_inv + reduced.a_bar.transpose() * &oa - oa.transpose() * h_oa;
    symmetrize(&mut k);
    let k_inv = spd_inverse(&k).ok_or(Error::DegenerateInformation)?;
    let mut fisher = &reduced.sigma_bar_inv * k_inv * &reduced.sigma_bar_inv;
    symmetrize(&mut fisher);
    let mut fisher_inv = sb * k * sb;
    symmetrize(&mut fisher_inv);
    let var = fisher_inv[(0, 0)];
    if !(var > 0.0) || !var.is_finite() || mle.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInformation);
    }
    Ok(MleFit {
        mle,
        fisher,
        fisher_inv,
    })
}

/// Laplace-approximated selective log-likelihood at `(θ, β)`, up to an
/// additive constant. The inner variable for `(t, b)` is eliminated in
/// closed form, leaving a barrier problem in `g` with precision
/// `(Ω̄ + ĀΘ̄Āᵀ)⁻¹`.
pub fn laplace_log_likelihood(
    reduced: &ReducedGaussians,
    mapping: &SelectionMapping,
    theta_beta_hat: &DVector<f64>,
    theta_beta: &DVector<f64>,
    opts: &BarrierOptions,
) -> Result<f64> {
    let eta = &reduced.r_bar * theta_beta + &reduced.s_bar;
    let resid = theta_beta_hat - &eta;
    let data = -0.5 * resid.dot(&(&reduced.theta_bar_inv * &resid));
    let mut cov = &reduced.omega_bar + &reduced.a_bar * &reduced.theta_bar * reduced.a_bar.transpose();
    symmetrize(&mut cov);
    let precision = spd_inverse(&cov).ok_or(Error::NonPdReducedCovariance)?;
    let mean = &reduced.a_bar * &eta + &reduced.b_bar;
    let sol = minimize_barrier_objective(&precision, &mean, &mapping.jacobian, &mapping.gamma_hat, opts)?;
    Ok(data + sol.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Selective,
    Naive,
    Split,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Selective, Method::Naive, Method::Split];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Selective => "selective",
            Method::Naive => "naive",
            Method::Split => "split",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "selective" => Ok(Method::Selective),
            "naive" => Ok(Method::Naive),
            "split" => Ok(Method::Split),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Ok,
    /// Not enough rows or rank to fit the pair (data splitting holdout).
    Infeasible,
    /// An upstream numerical failure for this pair.
    Failed,
}

impl ReportStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportStatus::Ok => "ok",
            ReportStatus::Infeasible => "infeasible",
            ReportStatus::Failed => "failed",
        }
    }
}

/// Reference law of the Wald statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Normal,
    StudentT { dof: f64 },
}

impl Reference {
    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            Reference::Normal => standard_normal().cdf(z),
            Reference::StudentT { dof } => StudentsT::new(0.0, 1.0, dof)
                .map(|t| t.cdf(z))
                .unwrap_or(f64::NAN),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if p == 0.5 {
            return 0.0;
        }
        match *self {
            Reference::Normal => standard_normal().inverse_cdf(p),
            Reference::StudentT { dof } => StudentsT::new(0.0, 1.0, dof)
                .map(|t| t.inverse_cdf(p))
                .unwrap_or(f64::NAN),
        }
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub pair: (usize, usize),
    pub method: Method,
    pub theta_mle: f64,
    pub stderr: f64,
    pub pivot: f64,
    pub p_value: f64,
    pub ci: (f64, f64),
    pub alpha: f64,
    pub theta_null: f64,
    pub reference: Reference,
    pub status: ReportStatus,
    pub diagnostics: Option<ReportDiagnostics>,
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "j", "k", "method", "theta_mle", "stderr", "pvalue", "ci_lo", "ci_hi", "pivot", "status",
];

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

impl InferenceReport {
    /// Wald pivot, two-sided p-value and interval for an estimate and its
    /// standard error.
    pub fn wald(
        pair: (usize, usize),
        method: Method,
        estimate: f64,
        stderr: f64,
        alpha: f64,
        theta_null: f64,
        reference: Reference,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !(stderr > 0.0) || !stderr.is_finite() || !estimate.is_finite() {
            return Err(Error::DegenerateInformation);
        }
        let half = reference.quantile(1.0 - alpha / 2.0) * stderr;
        let mut report = Self {
            pair,
            method,
            theta_mle: estimate,
            stderr,
            pivot: f64::NAN,
            p_value: f64::NAN,
            ci: (estimate - half, estimate + half),
            alpha,
            theta_null,
            reference,
            status: ReportStatus::Ok,
            diagnostics: None,
        };
        report.set_null(theta_null);
        Ok(report)
    }

    /// A placeholder row for a pair that could not be fitted.
    pub fn unavailable(pair: (usize, usize), method: Method, status: ReportStatus, alpha: f64) -> Self {
        Self {
            pair,
            method,
            theta_mle: f64::NAN,
            stderr: f64::NAN,
            pivot: f64::NAN,
            p_value: f64::NAN,
            ci: (f64::NAN, f64::NAN),
            alpha,
            theta_null: 0.0,
            reference: Reference::Normal,
            status,
            diagnostics: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ReportStatus::Ok
    }

    /// `F((θ_mle − θ₀)/se)` under the report's reference law.
    pub fn pivot_at(&self, theta_null: f64) -> f64 {
        self.reference.cdf((self.theta_mle - theta_null) / self.stderr)
    }

    fn set_null(&mut self, theta_null: f64) {
        let pivot = self.pivot_at(theta_null);
        self.theta_null = theta_null;
        self.pivot = pivot;
        self.p_value = (2.0 * pivot.min(1.0 - pivot)).min(1.0);
    }

    pub fn with_null(&self, theta_null: f64) -> Self {
        let mut out = self.clone();
        if out.is_ok() {
            out.set_null(theta_null);
        }
        out
    }

    pub fn ci_length(&self) -> f64 {
        self.ci.1 - self.ci.0
    }

    pub fn covers(&self, theta: f64) -> bool {
        self.ci.0 <= theta && theta <= self.ci.1
    }

    pub fn rejects(&self) -> bool {
        self.is_ok() && self.p_value < self.alpha
    }

    /// Fields in [`REPORT_COLUMNS`] order; pair indices are 1-based.
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            (self.pair.0 + 1).to_string(),
            (self.pair.1 + 1).to_string(),
            self.method.as_str().to_string(),
            fmt_float(self.theta_mle),
            fmt_float(self.stderr),
            fmt_float(self.p_value),
            fmt_float(self.ci.0),
            fmt_float(self.ci.1),
            fmt_float(self.pivot),
            self.status.as_str().to_string(),
        ]
    }
}

/// Empty string for `NaN`, shortest round-trip decimal otherwise.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Every intermediate of one selective fit.
#[derive(Debug, Clone)]
pub struct SelectiveFit {
    pub mapping: SelectionMapping,
    pub reduced: ReducedGaussians,
    pub barrier: BarrierSolution,
    pub mle: MleFit,
}

pub fn selective_fit(
    stats: &KeyStats,
    event: &SelectionEvent,
    design: &GroupedDesign,
    omega: &DMatrix<f64>,
    lambda: &[f64],
    epsilon: f64,
    opts: &BarrierOptions,
) -> Result<SelectiveFit> {
    let mapping = build_mapping(design, event, stats, lambda, epsilon)?;
    let reduced = reduce_gaussians(&mapping, omega, &stats.sigma_bar)?;
    let barrier = solve_barrier_problem(&reduced, &mapping, &stats.theta_beta(), opts)?;
    let mle = selective_mle_and_fisher(&reduced, &mapping, stats, &barrier.g)?;
    Ok(SelectiveFit {
        mapping,
        reduced,
        barrier,
        mle,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn selective_inference(
    stats: &KeyStats,
    event: &SelectionEvent,
    design: &GroupedDesign,
    omega: &DMatrix<f64>,
    lambda: &[f64],
    epsilon: f64,
    alpha: f64,
    theta_null: f64,
) -> Result<InferenceReport> {
    check_alpha(alpha)?;
    let fit = selective_fit(stats, event, design, omega, lambda, epsilon, &BarrierOptions::default())?;
    let mut report = InferenceReport::wald(
        stats.pair,
        Method::Selective,
        fit.mle.theta(),
        fit.mle.theta_stderr(),
        alpha,
        theta_null,
        Reference::Normal,
    )?;
    report.diagnostics = Some(ReportDiagnostics {
        iterations: fit.barrier.iterations,
        grad_norm: fit.barrier.grad_norm,
    });
    Ok(report)
}
