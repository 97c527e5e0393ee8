//! Randomized group lasso and the reparameterized selection event.
//!
//! The solver minimizes
//!
//! ```text
//! ½‖y − Ψβ‖² + Σ_j (λ_j‖β_j‖₂ + ε/2 ‖β_j‖²) − βᵀω
//! ```
//!
//! by cyclic block coordinate descent with an exact per-block minimizer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LeastSquares};
use crate::rng;
use crate::spline_basis::GroupedDesign;

#[derive(Debug, Clone, PartialEq)]
pub enum RandomizationSpec {
    /// `Ω = σ²·(1−r)/r·ΨᵀΨ`.
    ScaledGram { r: f64, sigma2: f64 },
    Explicit { matrix: DMatrix<f64> },
}

impl RandomizationSpec {
    pub fn scaled_gram(r: f64, sigma: f64) -> Self {
        Self::ScaledGram {
            r,
            sigma2: sigma * sigma,
        }
    }

    /// The covariance `Ω`, checked for positive definiteness.
    pub fn covariance(&self, design: &GroupedDesign) -> Result<DMatrix<f64>> {
        let cov = match self {
            Self::ScaledGram { r, sigma2 } => {
                if !(*r > 0.0 && *r < 1.0) {
                    return Err(Error::InvalidArgument(format!("r = {r} must lie in (0, 1)")));
                }
                if !(*sigma2 > 0.0) {
                    return Err(Error::InvalidArgument("sigma2 must be positive".into()));
                }
                let mut g = design.gram() * (sigma2 * (1.0 - r) / r);
                linalg::symmetrize(&mut g);
                g
            }
            Self::Explicit { matrix } => {
                if matrix.shape() != (design.q(), design.q()) {
                    return Err(Error::DimensionMismatch(format!(
                        "randomization covariance must be {q}×{q}",
                        q = design.q()
                    )));
                }
                if linalg::max_asymmetry(matrix) > 1e-12 * matrix.amax().max(1.0) {
                    return Err(Error::RandomizationNotPd);
                }
                matrix.clone()
            }
        };
        if cov.clone().cholesky().is_none() {
            return Err(Error::RandomizationNotPd);
        }
        Ok(cov)
    }
}

/// Draw `ω ∼ N(0, Ω)` as `L z` with `Ω = LLᵀ` and `z` a seeded standard
/// normal vector.
pub fn sample_randomization(
    spec: &RandomizationSpec,
    design: &GroupedDesign,
    seed: u64,
) -> Result<DVector<f64>> {
    let cov = spec.covariance(design)?;
    let mut rng = rng::stream(seed, rng::streams::RANDOMIZATION);
    sample_gaussian(&cov, &mut rng)
}

pub fn sample_gaussian<R: rand::Rng + ?Sized>(
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = cov.clone().cholesky().ok_or(Error::RandomizationNotPd)?;
    let z = rng::standard_normals(rng, cov.nrows());
    Ok(chol.l() * z)
}

/// `λ_j = ½·σ·√n·√B_j·√(2 ln q)`.
pub fn default_lambda(sigma: f64, n: usize, group_sizes: &[usize], q: usize) -> Result<Vec<f64>> {
    if q < 2 {
        return Err(Error::InvalidArgument("q must be at least 2".into()));
    }
    let common = 0.5 * sigma * (n as f64).sqrt() * (2.0 * (q as f64).ln()).sqrt();
    Ok(group_sizes.iter().map(|&b| common * (b as f64).sqrt()).collect())
}

/// Residual scale of the full-design least-squares fit,
/// `√(‖y − Ψ(ΨᵀΨ)⁻¹Ψᵀy‖² / (n − q))`.
pub fn estimate_sigma(y: &DVector<f64>, design: &GroupedDesign) -> Result<f64> {
    let (n, q) = design.matrix.shape();
    if n <= q {
        return Err(Error::OverParameterized { n, q });
    }
    let ls = LeastSquares::new(&design.matrix).ok_or(Error::RankDeficient)?;
    let resid = y - &design.matrix * ls.coefficients(y);
    Ok((resid.norm_squared() / (n - q) as f64).sqrt())
}

/// `1e-6` times the mean diagonal of `ΨᵀΨ`.
pub fn default_epsilon(design: &GroupedDesign) -> f64 {
    let q = design.q();
    let diag: f64 = (0..q).map(|c| design.matrix.column(c).norm_squared()).sum();
    1e-6 * diag / q as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on the largest coefficient change in a sweep.
    pub tol_change: f64,
    /// Bound on the sup-norm KKT residual.
    pub tol_kkt: f64,
    pub max_sweeps: usize,
    #[serde(skip)]
    pub initial: Option<DVector<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_change: 1e-9,
            tol_kkt: 1e-8,
            max_sweeps: 100_000,
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomizedLassoFit {
    pub beta_hat: DVector<f64>,
    pub omega: DVector<f64>,
    pub lambda: Vec<f64>,
    pub epsilon: f64,
    pub objective_trace: Vec<f64>,
    pub kkt_residual: f64,
    pub sweeps: usize,
    /// Per group: did the exact blockwise test `‖ρ_j‖ > λ_j` fire on the
    /// final sweep.
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub objective_trace: Vec<f64>,
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub epsilon: f64,
    pub selected: Vec<usize>,
}

impl RandomizedLassoFit {
    pub fn selected(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&j| self.active[j]).collect()
    }

    pub fn diagnostics(&self) -> SolverDiagnostics {
        SolverDiagnostics {
            objective_trace: self.objective_trace.clone(),
            kkt_residual: self.kkt_residual,
            sweeps: self.sweeps,
            epsilon: self.epsilon,
            selected: self.selected(),
        }
    }

    pub fn diagnostics_json(&self) -> String {
        serde_json::to_string_pretty(&self.diagnostics()).expect("diagnostics serialize")
    }
}

struct BlockSystem {
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
}

/// Minimizer of `½ bᵀHb − ρᵀb + λ‖b‖₂` for SPD `H = V diag(d) Vᵀ`, given
/// `‖ρ‖ > λ`. The norm `t = ‖b‖` solves `Σ ρ̃ᵢ²/(dᵢt + λ)² = 1`.
fn block_minimizer(sys: &BlockSystem, rho: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let rt = sys.eigvecs.transpose() * rho;
    let d = &sys.eigvals;
    let f = |t: f64| -> (f64, f64) {
        let mut val = -1.0;
        let mut der = 0.0;
        for i in 0..d.len() {
            let den = d[i] * t + lambda;
            let c = rt[i] * rt[i];
            val += c / (den * den);
            der -= 2.0 * c * d[i] / (den * den * den);
        }
        (val, der)
    };
    // f is convex and decreasing with f(0) > 0, so Newton from 0 increases
    // monotonically to the root.
    let mut t = 0.0;
    for _ in 0..200 {
        let (val, der) = f(t);
        if val <= 0.0 || der == 0.0 {
            break;
        }
        let step = -val / der;
        t += step;
        if step <= 1e-14 * t.max(1e-300) {
            break;
        }
    }
    let coef = DVector::from_iterator(d.len(), (0..d.len()).map(|i| rt[i] / (d[i] + lambda / t)));
    &sys.eigvecs * coef
}

pub fn objective(
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    yty: f64,
    design: &GroupedDesign,
    beta: &DVector<f64>,
    lambda: &[f64],
    epsilon: f64,
    omega: &DVector<f64>,
) -> f64 {
    let quad = 0.5 * yty - beta.dot(xty) + 0.5 * beta.dot(&(gram * beta));
    let pen: f64 = design
        .groups
        .iter()
        .zip(lambda)
        .map(|(g, &l)| {
            let b = beta.rows(g.start, g.len());
            l * b.norm() + 0.5 * epsilon * b.norm_squared()
        })
        .sum();
    quad + pen - beta.dot(omega)
}

struct KktState {
    residual: f64,
    worst_subgradient: f64,
}

fn kkt_state(
    design: &GroupedDesign,
    grad: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: &[f64],
) -> KktState {
    let mut residual: f64 = 0.0;
    let mut worst_subgradient: f64 = 0.0;
    for (j, g) in design.groups.iter().enumerate() {
        let b = beta.rows(g.start, g.len());
        let gj = grad.rows(g.start, g.len());
        let nb = b.norm();
        if nb > 0.0 {
            let r = gj + b * (lambda[j] / nb);
            residual = residual.max(r.amax());
        } else {
            let excess = gj.norm() - lambda[j];
            residual = residual.max(excess.max(0.0));
            worst_subgradient = worst_subgradient.max(excess / lambda[j]);
        }
    }
    KktState {
        residual,
        worst_subgradient,
    }
}

pub fn solve_randomized_group_lasso(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda: &[f64],
    epsilon: f64,
    omega: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<RandomizedLassoFit> {
    let (n, q) = design.matrix.shape();
    let p = design.p();
    if y.len() != n || omega.len() != q || lambda.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "y has {} rows, ω has {} entries and λ has {} entries for an {n}×{q} design with {p} groups",
            y.len(),
            omega.len(),
            lambda.len()
        )));
    }
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgument("every λ_j must be positive".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("ε must be positive".into()));
    }

    let gram = design.gram();
    let xty = design.matrix.transpose() * y;
    let yty = y.norm_squared();
    let target = &xty + omega;

    let systems: Vec<BlockSystem> = design
        .groups
        .iter()
        .map(|g| {
            let mut h = gram.view((g.start, g.start), (g.len(), g.len())).into_owned();
            for i in 0..g.len() {
                h[(i, i)] += epsilon;
            }
            let eig = SymmetricEigen::new(h);
            BlockSystem {
                eigvecs: eig.eigenvectors,
                eigvals: eig.eigenvalues,
            }
        })
        .collect();

    let mut beta = match &opts.initial {
        Some(b) if b.len() == q => b.clone(),
        Some(_) => return Err(Error::DimensionMismatch("initial β has wrong length".into())),
        None => DVector::zeros(q),
    };
    // Maintained product Gβ.
    let mut gb = &gram * &beta;
    let mut active = vec![false; p];
    let mut trace = vec![objective(&gram, &xty, yty, design, &beta, lambda, epsilon, omega)];
    let mut kkt_residual = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        let mut max_change: f64 = 0.0;
        for (j, g) in design.groups.iter().enumerate() {
            let (s, len) = (g.start, g.len());
            let old = beta.rows(s, len).into_owned();
            let g_jj = gram.view((s, s), (len, len));
            let rho = target.rows(s, len) - gb.rows(s, len) + g_jj * &old;
            let new = if rho.norm() > lambda[j] {
                active[j] = true;
                block_minimizer(&systems[j], &rho, lambda[j])
            } else {
                active[j] = false;
                DVector::zeros(len)
            };
            let delta = &new - &old;
            let change = delta.amax();
            if change > 0.0 {
                gb += gram.columns(s, len) * &delta;
                beta.rows_mut(s, len).copy_from(&new);
                max_change = max_change.max(change);
            }
        }
        trace.push(objective(&gram, &xty, yty, design, &beta, lambda, epsilon, omega));

        // Recompute Gβ to avoid drift in the maintained product.
        gb = &gram * &beta;
        let grad = &gb + &beta * epsilon - &target;
        let state = kkt_state(design, &grad, &beta, lambda);
        kkt_residual = state.residual;
        if max_change <= opts.tol_change
            && kkt_residual <= opts.tol_kkt
            && state.worst_subgradient <= 1e-11
        {
            return Ok(RandomizedLassoFit {
                beta_hat: beta,
                omega: omega.clone(),
                lambda: lambda.to_vec(),
                epsilon,
                objective_trace: trace,
                kkt_residual,
                sweeps: sweep,
                active,
            });
        }
    }
    Err(Error::NonConvergence {
        sweeps: opts.max_sweeps,
        kkt_residual,
    })
}

/// `(M, γ̂, Û, Ẑ)` from the stationarity conditions at the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEvent {
    pub selected: Vec<usize>,
    pub gamma_hat: Vec<f64>,
    /// Unit directions `û_j`, one per selected group.
    pub u_hat: Vec<DVector<f64>>,
    pub inactive: Vec<usize>,
    /// Subgradients `ẑ_j`, one per inactive group.
    pub z_hat: Vec<DVector<f64>>,
}

impl SelectionEvent {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.selected.binary_search(&j).is_ok()
    }

    /// Stacked `Û ∈ R^{q_M}`.
    pub fn stacked_u(&self) -> DVector<f64> {
        let all: Vec<f64> = self.u_hat.iter().flat_map(|u| u.iter().copied()).collect();
        DVector::from_vec(all)
    }
}

pub fn extract_selection_event(
    fit: &RandomizedLassoFit,
    design: &GroupedDesign,
    y: &DVector<f64>,
) -> Result<SelectionEvent> {
    let mut selected = Vec::new();
    let mut gamma_hat = Vec::new();
    let mut u_hat = Vec::new();
    let mut inactive = Vec::new();
    let mut z_hat = Vec::new();

    let mut stationarity = &fit.omega + design.matrix.transpose() * y
        - design.matrix.transpose() * (&design.matrix * &fit.beta_hat);
    stationarity -= &fit.beta_hat * fit.epsilon;

    for (j, g) in design.groups.iter().enumerate() {
        let b = fit.beta_hat.rows(g.start, g.len());
        let norm = b.norm();
        if fit.active[j] && norm > 0.0 {
            selected.push(j);
            gamma_hat.push(norm);
            u_hat.push(b / norm);
        } else {
            let z = stationarity.rows(g.start, g.len()) / fit.lambda[j];
            let zn = z.norm();
            if zn > 1.0 + 1e-10 {
                return Err(Error::KktViolation { group: j, norm: zn });
            }
            inactive.push(j);
            z_hat.push(z.into_owned());
        }
    }
    Ok(SelectionEvent {
        selected,
        gamma_hat,
        u_hat,
        inactive,
        z_hat,
    })
}

/// Solve and extract the event in one step.
pub fn select_main_effects(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda: &[f64],
    epsilon: f64,
    omega: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(RandomizedLassoFit, SelectionEvent)> {
    let fit = solve_randomized_group_lasso(design, y, lambda, epsilon, omega, opts)?;
    let event = extract_selection_event(&fit, design, y)?;
    Ok((fit, event))
}

/// Right-hand side of the stationarity identity evaluated at the event:
/// `−Ψᵀy + (ΨᵀΨ + εI)β + (λ_j û_j | λ_j ẑ_j)`, which equals ω at a solution.
pub fn reconstruct_omega(
    design: &GroupedDesign,
    y: &DVector<f64>,
    event: &SelectionEvent,
    lambda: &[f64],
    epsilon: f64,
) -> DVector<f64> {
    let q = design.q();
    let mut beta = DVector::zeros(q);
    let mut sub = DVector::zeros(q);
    for ((&j, &gamma), u) in event.selected.iter().zip(&event.gamma_hat).zip(&event.u_hat) {
        let g = &design.groups[j];
        beta.rows_mut(g.start, g.len()).copy_from(&(u * gamma));
        sub.rows_mut(g.start, g.len()).copy_from(&(u * lambda[j]));
    }
    for (&j, z) in event.inactive.iter().zip(&event.z_hat) {
        let g = &design.groups[j];
        sub.rows_mut(g.start, g.len()).copy_from(&(z * lambda[j]));
    }
    let xt = design.matrix.transpose();
    -(&xt * y) + &xt * (&design.matrix * &beta) + &beta * epsilon + sub
}
