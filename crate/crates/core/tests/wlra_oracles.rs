//! Oracles for the weighted low-rank solver. With uniform weights on a
//! fully observed matrix the solution must match the truncated SVD, which
//! nalgebra computes independently; on a masked problem the oracle is an
//! exhaustive search over factor directions.

use nalgebra::DMatrix;
use ndarray::Array2;
use privrec_core::mog::{weighted_low_rank, WlraOptions};
use privrec_core::seeds;
use rand::Rng;
use rand_distr::StandardNormal;

/// Dense matrix with a prescribed singular spectrum, so alternating least
/// squares converges quickly and the rank-d approximation is well separated.
fn matrix_with_spectrum(m: usize, n: usize, spectrum: &[f64], seed: u64) -> DMatrix<f64> {
    let mut rng = seeds::rng(seed, &[0]);
    let q1 = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal))
        .qr()
        .q();
    let q2 = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
        .qr()
        .q();
    let mut sigma = DMatrix::zeros(m, n);
    for (i, &s) in spectrum.iter().enumerate().take(m.min(n)) {
        sigma[(i, i)] = s;
    }
    &q1 * sigma * q2.transpose()
}

fn truncated_reconstruction(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let k = svd.singular_values.len();
    let mut s = DMatrix::zeros(k, k);
    for i in 0..d.min(k) {
        s[(i, i)] = svd.singular_values[i];
    }
    u * s * v_t
}

fn dense_cells(m: usize, n: usize, a: &DMatrix<f64>) -> (Vec<u32>, Vec<u32>, Vec<f64>) {
    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut values = Vec::new();
    for i in 0..m {
        for j in 0..n {
            users.push(i as u32);
            items.push(j as u32);
            values.push(a[(i, j)]);
        }
    }
    (users, items, values)
}

fn random_factors(rows: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeds::rng(seed, &[1]);
    let data: Vec<f64> = (0..rows * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Array2::from_shape_vec((rows, d), data).unwrap()
}

#[test]
fn uniform_weights_match_truncated_svd() {
    let cases: [(usize, usize, &[f64], u64); 2] = [
        (5, 4, &[5.0, 3.0, 1.5, 0.4], 11),
        (8, 8, &[6.0, 4.0, 2.5, 1.2, 0.6, 0.3, 0.15, 0.05], 12),
    ];
    for (m, n, spectrum, seed) in cases {
        let a = matrix_with_spectrum(m, n, spectrum, seed);
        let (users, items, values) = dense_cells(m, n, &a);
        let weights = vec![1.0; values.len()];
        for d in 1..=3usize {
            let oracle = truncated_reconstruction(&a, d);
            let out = weighted_low_rank(
                &users,
                &items,
                &values,
                &weights,
                random_factors(m, d, seed + d as u64),
                random_factors(n, d, seed + 100 + d as u64),
                WlraOptions { sweeps: 300, ridge: 0.0 },
            )
            .unwrap();
            for i in 0..m {
                for j in 0..n {
                    let pred = out.u.row(i).dot(&out.v.row(j));
                    assert!(
                        (pred - oracle[(i, j)]).abs() <= 1e-6,
                        "{m}x{n} d={d} cell ({i}, {j}): {pred} vs {}",
                        oracle[(i, j)]
                    );
                }
            }
        }
    }
}

/// Closed-form optimal column coefficients for a fixed row direction, then
/// the masked objective of that direction.
fn masked_objective(direction: &[f64; 3], cells: &[(usize, usize, f64)]) -> f64 {
    let mut num = [0.0; 3];
    let mut den = [0.0; 3];
    for &(i, j, r) in cells {
        num[j] += r * direction[i];
        den[j] += direction[i] * direction[i];
    }
    let b: Vec<f64> = (0..3).map(|j| if den[j] > 0.0 { num[j] / den[j] } else { 0.0 }).collect();
    cells
        .iter()
        .map(|&(i, j, r)| {
            let e = r - direction[i] * b[j];
            e * e
        })
        .sum()
}

#[test]
fn masked_rank_one_matches_direction_search() {
    // 3x3 with cells (0,2) and (2,0) unobserved; rank-1 fit.
    let cells: Vec<(usize, usize, f64)> = vec![
        (0, 0, 2.0),
        (0, 1, -1.0),
        (1, 0, 1.0),
        (1, 1, 3.0),
        (1, 2, -0.5),
        (2, 1, 1.5),
        (2, 2, 2.5),
    ];

    // Exhaustive search over unit row directions (sign is redundant but
    // harmless). Resolution bounds the oracle's objective error well below
    // the comparison tolerance.
    let (t_steps, p_steps) = (300, 600);
    let mut grid_min = f64::INFINITY;
    for ti in 0..=t_steps {
        let theta = std::f64::consts::PI * ti as f64 / t_steps as f64;
        for pi in 0..p_steps {
            let phi = 2.0 * std::f64::consts::PI * pi as f64 / p_steps as f64;
            let dir = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            grid_min = grid_min.min(masked_objective(&dir, &cells));
        }
    }

    let users: Vec<u32> = cells.iter().map(|c| c.0 as u32).collect();
    let items: Vec<u32> = cells.iter().map(|c| c.1 as u32).collect();
    let values: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let weights = vec![1.0; cells.len()];
    let mut best = f64::INFINITY;
    for start in 0..5u64 {
        let out = weighted_low_rank(
            &users,
            &items,
            &values,
            &weights,
            random_factors(3, 1, 40 + start),
            random_factors(3, 1, 90 + start),
            WlraOptions { sweeps: 200, ridge: 0.0 },
        )
        .unwrap();
        best = best.min(out.objective);
    }

    // The solver cannot beat the true minimum, and the grid cannot be more
    // than its resolution above it; agreement pins both.
    assert!(best <= grid_min + 1e-9, "solver {best} worse than grid {grid_min}");
    assert!(grid_min - best <= 5e-3, "solver {best} suspiciously below grid {grid_min}");
}
