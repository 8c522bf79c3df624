//! Randomized invariant checks over wide input ranges. Case counts are kept
//! moderate because several properties sample or fit under the hood.

use proptest::prelude::*;

use privrec_core::data::{self, SparseRatingMatrix};
use privrec_core::eval;
use privrec_core::mechanism::{calibrate_scale, delta_c, BlpMechanism, RatingDomain};
use privrec_core::model_io::{read_model, write_model, Mixture, StoredModel};
use privrec_core::seeds;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blp_samples_stay_in_domain(
        lo in -10.0f64..0.0,
        width in 0.5f64..10.0,
        eps in 0.05f64..5.0,
        pos in 0.0f64..1.0,
        seed in 0u64..(1 << 48),
    ) {
        let domain = RatingDomain::new(lo, lo + width).unwrap();
        let r = lo + pos * width;
        let mech = BlpMechanism::new(domain, eps).unwrap();
        let mut rng = seeds::rng(seed, &[1]);
        for _ in 0..64 {
            let v = mech.sample(r, &mut rng).unwrap();
            prop_assert!(domain.contains(v), "sample {v} outside [{lo}, {}]", lo + width);
        }
    }

    #[test]
    fn calibrated_scale_satisfies_the_condition(
        lo in -5.0f64..5.0,
        width in 0.5f64..20.0,
        eps in 0.05f64..8.0,
        frac in 0.05f64..1.0,
    ) {
        let domain = RatingDomain::new(lo, lo + width).unwrap();
        let sens = frac * width;
        let params = calibrate_scale(&domain, eps, Some(sens)).unwrap();
        let dc = delta_c(&domain, params.scale, sens).unwrap();
        let residual = params.scale * (eps - dc.ln()) - sens;
        prop_assert!(residual >= -1e-9 * sens.max(1.0), "condition residual {residual}");
        prop_assert!(params.scale >= sens / eps - 1e-12, "scale below the unbounded floor");
    }

    #[test]
    fn fold_plans_partition_entries(
        entries in 2usize..300,
        folds in 2usize..10,
        seed in 0u64..1000,
    ) {
        prop_assume!(folds <= entries);
        let plan = eval::make_folds(entries, folds, seed).unwrap();
        let mut sizes = vec![0usize; folds];
        for e in 0..entries {
            sizes[plan.fold_of(e)] += 1;
        }
        prop_assert_eq!(sizes.iter().sum::<usize>(), entries);
        let min = sizes.iter().min().unwrap();
        let max = sizes.iter().max().unwrap();
        prop_assert!(max - min <= 1, "fold sizes {:?}", sizes);
    }

    #[test]
    fn top_k_confusion_accounts_for_every_item(
        n in 1usize..40,
        k in 1usize..15,
        seed in 0u64..1000,
    ) {
        let mut rng = seeds::rng(seed, &[2]);
        use rand::Rng;
        let actual: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        let predicted: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        let c = eval::top_k_confusion(&actual, &predicted, k, 4.0).unwrap();
        prop_assert_eq!(c.total(), n as u64);
        prop_assert_eq!(c.true_pos + c.false_pos, k.min(n) as u64);
    }

    #[test]
    fn canonical_io_round_trips(
        users in 1u32..12,
        items in 1u32..12,
        seed in 0u64..1000,
    ) {
        let mut rng = seeds::rng(seed, &[3]);
        use rand::Rng;
        let domain = RatingDomain::new(0.5, 5.0).unwrap();
        let mut triplets = Vec::new();
        for u in 0..users {
            for i in 0..items {
                if rng.gen::<f64>() < 0.4 {
                    triplets.push((u, i, rng.gen_range(0.5..5.0)));
                }
            }
        }
        prop_assume!(!triplets.is_empty());
        let matrix =
            SparseRatingMatrix::from_entries(users as usize, items as usize, domain, triplets)
                .unwrap();
        let mut buf = Vec::new();
        data::write_canonical(&matrix, &mut buf).unwrap();
        let back = data::read_canonical(buf.as_slice()).unwrap();
        prop_assert_eq!(matrix.users(), back.users());
        prop_assert_eq!(matrix.items(), back.items());
        prop_assert_eq!(matrix.nnz(), back.nnz());
        for (a, b) in matrix.entries().iter().zip(back.entries()) {
            prop_assert_eq!(a.user, b.user);
            prop_assert_eq!(a.item, b.item);
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn model_container_round_trips(
        users in 1usize..10,
        items in 1usize..10,
        d in 1usize..5,
        k in 0usize..4,
        seed in 0u64..1000,
    ) {
        let mut rng = seeds::rng(seed, &[4]);
        use rand::Rng;
        let u: Vec<f64> = (0..users * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..items * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let model = StoredModel {
            u_factors: ndarray::Array2::from_shape_vec((users, d), u).unwrap(),
            v_factors: ndarray::Array2::from_shape_vec((items, d), v).unwrap(),
            mixture: (k > 0).then(|| Mixture {
                mix_weights: (0..k).map(|_| rng.gen_range(0.01..1.0)).collect(),
                variances: (0..k).map(|_| rng.gen_range(0.01..10.0)).collect(),
            }),
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        let back = read_model(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(model, back);
    }
}
