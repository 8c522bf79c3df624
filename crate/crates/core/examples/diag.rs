//! Scratch diagnostics for tuning; not part of the deliverable.

use privrec_core::data::synthetic::{self, SyntheticConfig};
use privrec_core::data::SparseRatingMatrix;
use privrec_core::eval;
use privrec_core::mechanism::{perturb_matrix, Mechanism, MechanismKind, RatingDomain};
use privrec_core::mog::{self, FitConfig};
use privrec_core::seeds;

fn debias(mech: &Mechanism, observed: f64) -> f64 {
    let d = mech.domain();
    let (l, u) = (d.lo(), d.hi());
    if observed <= mech.conditional_mean(l).unwrap() {
        return l;
    }
    if observed >= mech.conditional_mean(u).unwrap() {
        return u;
    }
    let (mut lo, mut hi) = (l, u);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mech.conditional_mean(mid).unwrap() < observed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn main() {
    let cfg = SyntheticConfig::default();
    let matrix = synthetic::generate(&cfg);
    let plan = eval::make_folds(matrix.nnz(), 10, 4242).unwrap();
    let train = matrix.select(&plan.train_indices(0)).unwrap();
    let true_mean = train.global_mean().unwrap();
    let test: Vec<(u32, u32, f64)> = plan
        .test_indices(0)
        .iter()
        .map(|&i| {
            let e = &matrix.entries()[i];
            (e.user, e.item, e.value)
        })
        .collect();
    let domain = *matrix.domain();
    println!("true train mean = {true_mean:.4}");

    for (kind, eps) in [
        (MechanismKind::Identity, 0.0),
        (MechanismKind::Blp, 0.1),
        (MechanismKind::LaplaceClamp, 0.1),
        (MechanismKind::Blp, 0.5),
        (MechanismKind::LaplaceClamp, 0.5),
        (MechanismKind::Blp, 2.0),
        (MechanismKind::LaplaceClamp, 2.0),
    ] {
        let mech = if kind == MechanismKind::Identity {
            Mechanism::new(kind, domain, 1.0).unwrap()
        } else {
            Mechanism::new(kind, domain, eps).unwrap()
        };
        let perturbed =
            perturb_matrix(&train, &mech, seeds::derive(4242, &[0x6d65_6368, 0])).unwrap();
        let pmean = perturbed.global_mean().unwrap();
        let anchor = debias(&mech, pmean);

        let cdomain = RatingDomain::new(domain.lo() - pmean, domain.hi() - pmean).unwrap();
        let triplets: Vec<(u32, u32, f64)> = perturbed
            .entries()
            .iter()
            .map(|e| (e.user, e.item, e.value - pmean))
            .collect();
        let centered = SparseRatingMatrix::from_entries(
            perturbed.users(),
            perturbed.items(),
            cdomain,
            triplets,
        )
        .unwrap();

        use rand::seq::SliceRandom;
        let n = centered.nnz();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeds::rng(seeds::derive(4242, &[0x7269_6467, 0]), &[]));
        let holdout_len = ((n as f64) * 0.1).round() as usize;
        let (_, fit_idx) = order.split_at(holdout_len);
        let fit_part = centered.select(fit_idx).unwrap();

        // Oracle-anchored mean-only reference isolates fit quality.
        let t_mean_oracle = (test
            .iter()
            .map(|&(_, _, v)| (true_mean - v) * (true_mean - v))
            .sum::<f64>()
            / test.len() as f64)
            .sqrt();
        println!(
            "== {} eps={eps}: pmean={pmean:.4} anchor={anchor:.4} (err {:+.4}) oracle-mean t={t_mean_oracle:.4}",
            kind.as_str(),
            anchor - true_mean
        );

        for ridge in [0.4, 0.15] {
            let base = FitConfig {
                latent_dim: 20,
                components: 3,
                init_scale: 0.5,
                seed: seeds::derive(4242, &[0x6669_745f, 0]),
                ridge,
                max_iters: 5,
                tol: 0.0,
                ..FitConfig::default()
            };
            let (mut model, _) = mog::fit(&fit_part, &base).unwrap();
            let mut line = format!("   ridge={ridge}:");
            for step in 1..=8 {
                if step > 1 {
                    let (next, _) = mog::fit_with_init(
                        &fit_part,
                        model.u_factors,
                        model.v_factors,
                        model.mix_weights,
                        model.variances,
                        &base,
                    )
                    .unwrap();
                    model = next;
                }
                // Oracle anchor: fit contribution alone.
                let t_o = (test
                    .iter()
                    .map(|&(u, i, v)| {
                        let d = true_mean + model.predict(u as usize, i as usize) - v;
                        d * d
                    })
                    .sum::<f64>()
                    / test.len() as f64)
                    .sqrt();
                line.push_str(&format!(" {}:[t_o={t_o:.4}]", step * 5));
            }
            println!("{line}");
        }
    }
}
