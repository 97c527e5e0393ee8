//! Candidate interactions, the interaction-augmented regression, and the key
//! statistics with their pre-selection law.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, LeastSquares};
use crate::spline_basis::GroupedDesign;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRule {
    WeakHierarchy,
    AllPairs,
    Explicit(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    /// Canonical pairs `(j, k)` with `j < k`, sorted.
    pub pairs: Vec<(usize, usize)>,
    pub rule: CandidateRule,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn candidate_interactions(selected: &[usize], p: usize, rule: &CandidateRule) -> CandidateSet {
    let in_m = |j: usize| selected.contains(&j);
    let mut pairs: Vec<(usize, usize)> = match rule {
        CandidateRule::WeakHierarchy => (0..p)
            .flat_map(|j| ((j + 1)..p).map(move |k| (j, k)))
            .filter(|&(j, k)| in_m(j) || in_m(k))
            .collect(),
        CandidateRule::AllPairs => (0..p)
            .flat_map(|j| ((j + 1)..p).map(move |k| (j, k)))
            .collect(),
        CandidateRule::Explicit(list) => list
            .iter()
            .filter(|&&(j, k)| j != k && j < p && k < p)
            .map(|&(j, k)| (j.min(k), j.max(k)))
            .collect(),
    };
    pairs.sort_unstable();
    pairs.dedup();
    CandidateSet {
        pairs,
        rule: rule.clone(),
    }
}

/// `Z̄ = (I_jk : Ψ_M)` with the interaction column first.
pub fn augmented_design(
    design: &GroupedDesign,
    selected: &[usize],
    j: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    if j == k {
        return Err(Error::InvalidArgument("self-interactions are not supported".into()));
    }
    let psi_m = design.columns_of(selected);
    let n = design.n();
    let mut z = DMatrix::zeros(n, psi_m.ncols() + 1);
    z.column_mut(0).copy_from(&design.interaction(j, k));
    z.columns_mut(1, psi_m.ncols()).copy_from(&psi_m);
    Ok(z)
}

/// Least squares on `Z̄` that reports collinearity for the given pair.
pub fn fit_augmented(z: &DMatrix<f64>, pair: (usize, usize)) -> Result<LeastSquares> {
    LeastSquares::new(z).ok_or(Error::CollinearAugmentedDesign {
        j: pair.0,
        k: pair.1,
    })
}

#[derive(Debug, Clone)]
pub struct KeyStats {
    pub pair: (usize, usize),
    pub selected: Vec<usize>,
    pub theta_hat: f64,
    pub beta_hat: DVector<f64>,
    /// `Â = −Ψ_{−M}ᵀ(y − Z̄(θ̂, β̂))`.
    pub a_hat: DVector<f64>,
    /// `σ²(Z̄ᵀZ̄)⁻¹`.
    pub sigma_bar: DMatrix<f64>,
    /// `σ²Ψ_{−M}ᵀ(I_n − Z̄Z̄⁺)Ψ_{−M}`.
    pub sigma_tilde: DMatrix<f64>,
    pub zbar: DMatrix<f64>,
    pub zbar_pinv: DMatrix<f64>,
    pub sigma: f64,
}

impl KeyStats {
    /// `(θ̂, β̂)` stacked.
    pub fn theta_beta(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.beta_hat.len() + 1);
        v[0] = self.theta_hat;
        v.rows_mut(1, self.beta_hat.len()).copy_from(&self.beta_hat);
        v
    }

    pub fn residual(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.zbar * self.theta_beta()
    }

    /// The naive standard error `σ√((Z̄ᵀZ̄)⁻¹_θθ)`.
    pub fn naive_stderr(&self) -> f64 {
        self.sigma_bar[(0, 0)].sqrt()
    }
}

pub fn inactive_groups(design: &GroupedDesign, selected: &[usize]) -> Vec<usize> {
    (0..design.p()).filter(|j| !selected.contains(j)).collect()
}

pub fn key_statistics(
    y: &DVector<f64>,
    design: &GroupedDesign,
    selected: &[usize],
    j: usize,
    k: usize,
    sigma: f64,
) -> Result<KeyStats> {
    let zbar = augmented_design(design, selected, j, k)?;
    let ls = fit_augmented(&zbar, (j, k))?;
    let coef = ls.coefficients(y);
    let resid = y - &zbar * &coef;
    let psi_out = design.columns_of(&inactive_groups(design, selected));
    let a_hat = -(psi_out.transpose() * &resid);

    let s2 = sigma * sigma;
    let sigma_bar = &ls.gram_inv * s2;
    // Ψ_{−M}ᵀ(I − Z̄Z̄⁺)Ψ_{−M} = Ψ_{−M}ᵀΨ_{−M} − (Z̄ᵀΨ_{−M})ᵀ (Z̄ᵀZ̄)⁻¹ (Z̄ᵀΨ_{−M})
    let cross = zbar.transpose() * &psi_out;
    let mut sigma_tilde =
        (psi_out.transpose() * &psi_out - cross.transpose() * &ls.gram_inv * &cross) * s2;
    symmetrize(&mut sigma_tilde);

    Ok(KeyStats {
        pair: (j, k),
        selected: selected.to_vec(),
        theta_hat: coef[0],
        beta_hat: coef.rows(1, coef.len() - 1).into_owned(),
        a_hat,
        sigma_bar,
        sigma_tilde,
        zbar,
        zbar_pinv: ls.pinv,
        sigma,
    })
}

/// Projection coefficient `Z̄⁺μ` of a mean vector on the augmented design.
pub fn projection_target(mu: &DVector<f64>, zbar: &DMatrix<f64>, pair: (usize, usize)) -> Result<DVector<f64>> {
    Ok(fit_augmented(zbar, pair)?.coefficients(mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spline_basis::{build_design, BasisConfig, FeatureKind};
    use rand::Rng;

    fn design(n: usize, p: usize, seed: u64) -> GroupedDesign {
        let mut rng = rng::stream(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0);
        build_design(&x, &vec![FeatureKind::Nonlinear; p], &BasisConfig::default()).unwrap()
    }

    #[test]
    fn weak_hierarchy_enumeration() {
        let rule = CandidateRule::WeakHierarchy;
        assert!(candidate_interactions(&[], 4, &rule).is_empty());
        assert_eq!(candidate_interactions(&[0, 1, 2, 3], 4, &rule).len(), 6);
        // brute-force enumeration over ordered pairs, canonicalized
        let m = [0usize];
        let mut oracle: Vec<(usize, usize)> = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                if a != b && (m.contains(&a) || m.contains(&b)) && !oracle.contains(&(a.min(b), a.max(b))) {
                    oracle.push((a.min(b), a.max(b)));
                }
            }
        }
        oracle.sort();
        assert_eq!(candidate_interactions(&m, 4, &rule).pairs, vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(candidate_interactions(&m, 4, &rule).pairs, oracle);
    }

    #[test]
    fn explicit_pairs_are_canonical() {
        let rule = CandidateRule::Explicit(vec![(3, 1), (1, 3), (2, 2), (0, 1)]);
        assert_eq!(candidate_interactions(&[], 4, &rule).pairs, vec![(0, 1), (1, 3)]);
    }

    #[test]
    fn augmented_design_columns() {
        let raw = DMatrix::from_row_slice(
            6,
            3,
            &[
                1.0, 2.0, 0.5, //
                -1.0, 3.0, 1.5, //
                2.0, 0.5, 2.5, //
                0.0, 4.0, 3.5, //
                3.0, -2.0, 4.5, //
                1.5, 1.0, 5.5,
            ],
        );
        let d = build_design(&raw, &[FeatureKind::Linear; 3], &BasisConfig::default()).unwrap();
        let z = augmented_design(&d, &[2], 0, 1).unwrap();
        let by_hand = [2.0, -3.0, 1.0, 0.0, -6.0, 1.5];
        for i in 0..6 {
            assert_eq!(z[(i, 0)], by_hand[i]);
            assert_eq!(z[(i, 1)], raw[(i, 2)]);
        }
        let empty = augmented_design(&d, &[], 0, 2).unwrap();
        assert_eq!(empty.ncols(), 1);
    }

    #[test]
    fn zero_feature_gives_collinear_error() {
        let mut raw = DMatrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64 + 1.0);
        raw.column_mut(0).fill(0.0);
        let d = GroupedDesign {
            matrix: raw.clone(),
            groups: vec![0..1, 1..2],
            kinds: vec![FeatureKind::Linear; 2],
            raw,
            bases: vec![None, None],
            names: vec!["a".into(), "b".into()],
            clamped: 0,
        };
        let y = DVector::from_element(10, 1.0);
        assert_eq!(
            key_statistics(&y, &d, &[1], 0, 1, 1.0).unwrap_err(),
            Error::CollinearAugmentedDesign { j: 0, k: 1 }
        );
    }

    #[test]
    fn in_span_response_kills_a_hat() {
        let d = design(50, 4, 1);
        let z = augmented_design(&d, &[0, 2], 0, 1).unwrap();
        let y = &z * DVector::from_vec(vec![1.5, 0.3, -0.2, 1.0, 2.0]);
        let ks = key_statistics(&y, &d, &[0, 2], 0, 1, 1.0).unwrap();
        assert!(ks.a_hat.amax() < 1e-9);
        assert!(ks.residual(&y).amax() < 1e-10);
        assert!((ks.theta_hat - 1.5).abs() < 1e-10);
    }

    #[test]
    fn full_selection_has_empty_a_hat() {
        let d = design(40, 3, 2);
        let y = DVector::from_fn(40, |i, _| (i as f64).sin());
        let ks = key_statistics(&y, &d, &[0, 1, 2], 0, 2, 1.0).unwrap();
        assert_eq!(ks.a_hat.len(), 0);
        assert_eq!(ks.sigma_tilde.shape(), (0, 0));
    }

    #[test]
    fn decomposition_identities() {
        let d = design(80, 5, 3);
        let y = DVector::from_fn(80, |i, _| (i as f64 * 0.3).cos() * 2.0 + 0.1 * i as f64);
        let m = [1, 3];
        let ks = key_statistics(&y, &d, &m, 0, 1, 1.3).unwrap();
        // normal equations on Ψ_M
        let psi_m = d.columns_of(&m);
        assert!((psi_m.transpose() * ks.residual(&y)).amax() < 1e-8);
        // −Ψᵀy = −ΨᵀZ̄(θ̂, β̂) + (0, Â), in (M, −M) column order
        let mut order = m.to_vec();
        order.extend(inactive_groups(&d, &m));
        let psi = d.columns_of(&order);
        let lhs = -(psi.transpose() * &y);
        let mut rhs = -(psi.transpose() * &ks.zbar * ks.theta_beta());
        let qm = psi_m.ncols();
        for i in 0..ks.a_hat.len() {
            rhs[qm + i] += ks.a_hat[i];
        }
        assert!((lhs - rhs).amax() < 1e-8);
        // Z̄⁺Z̄ = I
        let k = ks.zbar.ncols();
        assert!((&ks.zbar_pinv * &ks.zbar - DMatrix::identity(k, k)).amax() < 1e-8);
        assert!(ks.sigma_bar.clone().cholesky().is_some());
        let eig = ks.sigma_tilde.clone().symmetric_eigenvalues();
        assert!(eig.min() > -1e-8);
    }

    #[test]
    fn monte_carlo_pre_selection_law() {
        let d = design(80, 4, 4);
        let m = [0, 2];
        let (j, k) = (1, 3);
        let sigma = 0.7;
        let z = augmented_design(&d, &m, j, k).unwrap();
        let truth = DVector::from_vec(vec![0.8, 1.0, -1.0, 0.5, 0.2]);
        let mu = &z * &truth;
        let reps = 2000;
        let mut draws: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(reps);
        let mut rng = rng::stream(77, 0);
        for _ in 0..reps {
            let y = &mu + rng::standard_normals(&mut rng, 80) * sigma;
            let ks = key_statistics(&y, &d, &m, j, k, sigma).unwrap();
            draws.push((ks.theta_beta(), ks.a_hat.clone()));
        }
        let ks0 = key_statistics(&mu, &d, &m, j, k, sigma).unwrap();
        let dim = truth.len();
        let mean = draws.iter().fold(DVector::zeros(dim), |acc, (tb, _)| acc + tb) / reps as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for (tb, _) in &draws {
            let c = tb - &mean;
            cov += &c * c.transpose();
        }
        cov /= (reps - 1) as f64;
        for a in 0..dim {
            for b in 0..dim {
                let sab = ks0.sigma_bar[(a, b)];
                // standard error of a sample covariance entry for Gaussian data
                let se = ((ks0.sigma_bar[(a, a)] * ks0.sigma_bar[(b, b)] + sab * sab) / reps as f64).sqrt();
                assert!((cov[(a, b)] - sab).abs() <= 3.5 * se, "entry ({a},{b})");
            }
        }
        // θ̂ uncorrelated with every coordinate of Â
        let theta: Vec<f64> = draws.iter().map(|(tb, _)| tb[0]).collect();
        for c in 0..ks0.a_hat.len() {
            let a: Vec<f64> = draws.iter().map(|(_, a)| a[c]).collect();
            let r = correlation(&theta, &a);
            assert!(r.abs() <= 3.0 / (reps as f64).sqrt(), "corr {r}");
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }
}
