//! Invariants of the EM fit on privacy-perturbed data: normalized
//! responsibilities and mixing weights, the least-squares weight identity,
//! floored variances, and a monotone log-likelihood trace.

use privrec_core::data::synthetic::{self, SyntheticConfig};
use privrec_core::mechanism::{perturb_matrix, Mechanism, MechanismKind};
use privrec_core::mog::{self, FitConfig};

#[test]
fn em_invariants_on_perturbed_fit() {
    let clean = synthetic::generate(&SyntheticConfig {
        users: 100,
        items: 80,
        entries: 2500,
        seed: 5,
        ..SyntheticConfig::default()
    });
    let mech = Mechanism::new(MechanismKind::Blp, *clean.domain(), 1.0).unwrap();
    let noisy = perturb_matrix(&clean, &mech, 13).unwrap();

    let config = FitConfig {
        latent_dim: 8,
        components: 3,
        max_iters: 30,
        tol: 1e-6,
        seed: 3,
        ..FitConfig::default()
    };
    let (model, report) = mog::fit(&noisy, &config).unwrap();
    assert_eq!(report.reinit_events, 0, "no component should collapse on this data");

    // Log-likelihood never drops beyond 1e-8 relative.
    for w in report.ll_trace.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-8 * w[0].abs(),
            "log-likelihood dropped: {} -> {}",
            w[0],
            w[1]
        );
    }

    // Mixing weights are a distribution; variances respect the floor.
    let total: f64 = model.mix_weights.iter().sum();
    assert!((total - 1.0).abs() <= 1e-12, "mixing weights sum to {total}");
    assert!(model.mix_weights.iter().all(|&p| p > 0.0));
    assert!(model.variances.iter().all(|&v| v >= config.variance_floor));

    // Re-derive responsibilities at the fitted parameters.
    let residuals: Vec<f64> = noisy
        .entries()
        .iter()
        .map(|e| e.value - model.predict(e.user as usize, e.item as usize))
        .collect();
    let (resp, ll) = mog::e_step(&residuals, &model.mix_weights, &model.variances).unwrap();
    assert!((ll - report.final_ll).abs() <= 1e-9 * report.final_ll.abs().max(1.0));

    for cell in 0..resp.cells() {
        let s: f64 = resp.row(cell).iter().sum();
        assert!(
            (s - 1.0).abs() <= 1e-12,
            "responsibility row {cell} sums to {s}"
        );
    }

    // Least-squares weights match their defining identity, accumulated in
    // the opposite component order to catch order-dependent shortcuts.
    let weights = mog::cell_weights(&resp, &model.variances);
    for cell in 0..resp.cells() {
        let mut independent = 0.0;
        for k in (0..model.components()).rev() {
            independent += resp.get(cell, k) / (2.0 * model.variances[k]);
        }
        assert!(
            (weights[cell] - independent).abs() <= 1e-10 * independent.max(1.0),
            "weight identity broken at cell {cell}: {} vs {independent}",
            weights[cell]
        );
    }
}

#[test]
fn mixture_separates_perturbed_from_clean_scale() {
    // Heavy perturbation at a small budget produces residual spread far
    // above the clean-data fit; the top fitted variance must reflect the
    // injected noise rather than the rating scale.
    let clean = synthetic::generate(&SyntheticConfig {
        users: 80,
        items: 60,
        entries: 2000,
        seed: 8,
        ..SyntheticConfig::default()
    });
    let config = FitConfig {
        latent_dim: 4,
        components: 2,
        max_iters: 30,
        seed: 1,
        ..FitConfig::default()
    };

    let (clean_model, _) = mog::fit(&clean, &config).unwrap();
    let mech = Mechanism::new(MechanismKind::Blp, *clean.domain(), 0.5).unwrap();
    let noisy = perturb_matrix(&clean, &mech, 21).unwrap();
    let (noisy_model, _) = mog::fit(&noisy, &config).unwrap();

    let max_clean = clean_model.variances.iter().cloned().fold(0.0, f64::max);
    let max_noisy = noisy_model.variances.iter().cloned().fold(0.0, f64::max);
    assert!(
        max_noisy > 1.5 * max_clean,
        "noisy top variance {max_noisy} vs clean {max_clean}"
    );
}
