//! Laplace MLE against the exact selective MLE on one-dimensional selection
//! events.

#[path = "support/exact_oracle.rs"]
mod exact_oracle;

use exact_oracle::{exact_mle, one_dimensional_fit};

#[test]
fn laplace_interaction_estimate_tracks_exact_mle() {
    let mut worst_theta: f64 = 0.0;
    let mut worst_joint: f64 = 0.0;
    let mut count = 0;
    for seed in 0..200 {
        let Some((fit, tb_hat)) = one_dimensional_fit(seed) else { continue };
        let exact = exact_mle(&fit, &tb_hat);
        assert!(exact.normalizer_gap < 1e-8, "quadrature vs closed form {}", exact.normalizer_gap);
        worst_theta = worst_theta.max((fit.mle.mle[0] - exact.theta_beta[0]).abs());
        worst_joint = worst_joint.max((&fit.mle.mle - &exact.theta_beta).amax());
        count += 1;
        if count == 20 {
            break;
        }
    }
    assert_eq!(count, 20);
    println!("worst interaction gap {worst_theta:.3e}, worst joint gap {worst_joint:.3e}");
    assert!(worst_theta <= 1e-3);
}
