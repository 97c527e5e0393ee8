//! Exact selective likelihood for one-dimensional selection events, with
//! the normalizer integrated by nested adaptive Simpson quadrature.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use reluctant_core::group_lasso::{
    default_epsilon, default_lambda, sample_randomization, select_main_effects, RandomizationSpec,
    SolverOptions,
};
use reluctant_core::interaction_model::key_statistics;
use reluctant_core::rng;
use reluctant_core::selective_mle::{selective_fit, BarrierOptions, SelectiveFit};
use reluctant_core::spline_basis::{build_design, BasisConfig, FeatureKind};
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

type Moments = [f64; 6];

fn add(a: Moments, b: Moments, s: f64) -> Moments {
    let mut out = a;
    for i in 0..6 {
        out[i] += s * b[i];
    }
    out
}

fn spread(a: &Moments, b: &Moments) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn simpson(a: f64, b: f64, fa: Moments, fm: Moments, fb: Moments) -> Moments {
    let mut s = add(fa, fb, 1.0);
    s = add(s, fm, 4.0);
    s.map(|v| v * (b - a) / 6.0)
}

fn adaptive(
    f: &dyn Fn(f64) -> Moments,
    a: f64,
    b: f64,
    fa: Moments,
    fm: Moments,
    fb: Moments,
    whole: Moments,
    tol: f64,
    depth: usize,
) -> Moments {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let both = add(left, right, 1.0);
    if depth == 0 || spread(&both, &whole) <= 15.0 * tol {
        // Richardson correction
        let diff = add(both, whole, -1.0);
        return add(both, diff, 1.0 / 15.0);
    }
    let l = adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
    let r = adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
    add(l, r, 1.0)
}

fn integrate(f: &dyn Fn(f64) -> Moments, a: f64, b: f64, tol: f64) -> Moments {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `∫ φ(z) w(η + Lz) {1, z, zzᵀ} dz` over `R²` with the selection weight
/// `w(b') = Φ((Āb' + b̄)/√Ω̄)`.
fn tilted_moments(eta: &Vector2<f64>, l: &Matrix2<f64>, a_bar: &Vector2<f64>, b_bar: f64, omega_bar: f64) -> Moments {
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let sd = omega_bar.sqrt();
    let lim = 8.5;
    let outer = |z1: f64| -> Moments {
        let inner = |z2: f64| -> Moments {
            let b = eta + l * Vector2::new(z1, z2);
            let w = n01.cdf((a_bar.dot(&b) + b_bar) / sd) * n01.pdf(z2);
            [w, 0.0, w * z2, 0.0, 0.0, w * z2 * z2]
        };
        let r = integrate(&inner, -lim, lim, 1e-11);
        let p = n01.pdf(z1);
        [p * r[0], p * z1 * r[0], p * r[2], p * z1 * z1 * r[0], p * z1 * r[2], p * r[5]]
    };
    integrate(&outer, -lim, lim, 1e-10)
}

pub struct ExactMle {
    pub theta_beta: DVector<f64>,
    pub normalizer_gap: f64,
}

/// Solve the score equation of the exact likelihood, which says the
/// selection-tilted mean of the key statistic equals its observed value.
pub fn exact_mle(fit: &SelectiveFit, tb_hat: &DVector<f64>) -> ExactMle {
    let red = &fit.reduced;
    let theta = Matrix2::from_iterator(red.theta_bar.iter().copied());
    let theta_inv = Matrix2::from_iterator(red.theta_bar_inv.iter().copied());
    let l = theta.cholesky().unwrap().l();
    let a_bar = Vector2::new(red.a_bar[(0, 0)], red.a_bar[(0, 1)]);
    let b_bar = red.b_bar[0];
    let omega_bar = red.omega_bar[(0, 0)];
    let target = Vector2::new(tb_hat[0], tb_hat[1]);

    let mut eta = target;
    for _ in 0..50 {
        let m = tilted_moments(&eta, &l, &a_bar, b_bar, omega_bar);
        let ez = Vector2::new(m[1], m[2]) / m[0];
        let ezz = Matrix2::new(m[3], m[4], m[4], m[5]) / m[0];
        let cov_z = ezz - ez * ez.transpose();
        let mean = eta + l * ez;
        let cov = l * cov_z * l.transpose();
        let f = mean - target;
        if f.amax() < 1e-12 {
            break;
        }
        let jac = cov * theta_inv;
        eta -= jac.try_inverse().unwrap() * f;
    }
    let m = tilted_moments(&eta, &l, &a_bar, b_bar, omega_bar);
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let closed = n01.cdf((a_bar.dot(&eta) + b_bar) / (omega_bar + a_bar.dot(&(theta * a_bar))).sqrt());

    let eta = DVector::from_vec(vec![eta[0], eta[1]]);
    let r_inv = red.r_bar.clone().try_inverse().unwrap();
    ExactMle {
        theta_beta: r_inv * (eta - &red.s_bar),
        normalizer_gap: (m[0] - closed).abs(),
    }
}

/// A real randomized fit on two linear features in which exactly the first
/// feature is selected.
pub fn one_dimensional_fit(seed: u64) -> Option<(SelectiveFit, DVector<f64>)> {
    let n = 100;
    let mut r = rng::stream(seed, 0);
    let x = DMatrix::from_fn(n, 2, |_, _| r.random::<f64>());
    let design = build_design(&x, &[FeatureKind::Linear; 2], &BasisConfig::default()).ok()?;
    let noise = rng::standard_normals(&mut r, n);
    let y = DVector::from_fn(n, |i, _| 2.0 * x[(i, 0)] + x[(i, 0)] * x[(i, 1)]) + noise;
    let lambda = default_lambda(1.0, n, &design.group_sizes(), design.q()).ok()?;
    let epsilon = default_epsilon(&design);
    let spec = RandomizationSpec::scaled_gram(0.9, 1.0);
    let omega = sample_randomization(&spec, &design, seed).ok()?;
    let (_, event) = select_main_effects(&design, &y, &lambda, epsilon, &omega, &SolverOptions::default()).ok()?;
    if event.selected != [0] {
        return None;
    }
    let stats = key_statistics(&y, &design, &event.selected, 0, 1, 1.0).ok()?;
    let cov = spec.covariance(&design).ok()?;
    let fit = selective_fit(&stats, &event, &design, &cov, &lambda, epsilon, &BarrierOptions::default()).ok()?;
    Some((fit, stats.theta_beta()))
}
