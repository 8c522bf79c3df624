//! Non-mixture baseline predictors.
//!
//! Two reference models for the same prediction task as the mixture fit:
//! plain matrix factorization trained by stochastic gradient descent on the
//! observed cells, and a truncated-SVD predictor computed on a mean-imputed
//! dense copy of the matrix. Neither models the noise distribution, which is
//! exactly what makes them useful comparison points.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};
use crate::seeds;

/// Plain factor model: prediction is the inner product of factor rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MFModel {
    /// users x d.
    pub u_factors: Array2<f64>,
    /// items x d.
    pub v_factors: Array2<f64>,
}

impl MFModel {
    #[inline]
    #[must_use]
    pub fn users(&self) -> usize {
        self.u_factors.nrows()
    }

    #[inline]
    #[must_use]
    pub fn items(&self) -> usize {
        self.v_factors.nrows()
    }

    #[inline]
    #[must_use]
    pub fn latent_dim(&self) -> usize {
        self.u_factors.ncols()
    }

    /// Inner-product prediction. Panics when indices are out of range.
    #[inline]
    #[must_use]
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.u_factors.row(user).dot(&self.v_factors.row(item))
    }
}

#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { latent_dim: 20, epochs: 100, learning_rate: 0.005, init_scale: 0.1, seed: 0 }
    }
}

/// Unregularized matrix factorization by SGD over shuffled cell visits.
///
/// Both factor rows of a visited cell are updated from the same residual.
/// Training aborts with an error if the squared error stops being finite or
/// blows past 1000x its starting value, which is how an overlarge learning
/// rate shows up.
pub fn fit_mf_sgd(matrix: &SparseRatingMatrix, config: &SgdConfig) -> Result<MFModel> {
    if config.latent_dim == 0 {
        return Err(Error::Config("latent_dim must be at least 1".into()));
    }
    if config.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning_rate must be finite and > 0, got {}",
            config.learning_rate
        )));
    }
    if matrix.nnz() == 0 {
        return Err(Error::EmptyDataset("cannot fit on a matrix with no entries".into()));
    }

    let d = config.latent_dim;
    let mut rng = seeds::rng(config.seed, &[0x7367_645f]); // "sgd_"
    let mut u = random_factors(matrix.users(), d, config.init_scale, &mut rng);
    let mut v = random_factors(matrix.items(), d, config.init_scale, &mut rng);

    let entries = matrix.entries();
    let sse = |u: &Array2<f64>, v: &Array2<f64>| -> f64 {
        entries
            .iter()
            .map(|e| {
                let p = u.row(e.user as usize).dot(&v.row(e.item as usize));
                (e.value - p) * (e.value - p)
            })
            .sum()
    };
    let guard = 1e3 * sse(&u, &v) + 1.0;

    let lr = config.learning_rate;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &c in &order {
            let e = &entries[c];
            let (ui, vi) = (e.user as usize, e.item as usize);
            let mut pred = 0.0;
            for p in 0..d {
                pred += u[(ui, p)] * v[(vi, p)];
            }
            let err = e.value - pred;
            for p in 0..d {
                let up = u[(ui, p)];
                let vp = v[(vi, p)];
                u[(ui, p)] = up + lr * err * vp;
                v[(vi, p)] = vp + lr * err * up;
            }
        }
        let now = sse(&u, &v);
        if !now.is_finite() || now > guard {
            return Err(Error::NonConvergence(format!(
                "sgd diverged at epoch {epoch}: squared error {now:e}; lower the learning rate"
            )));
        }
    }
    Ok(MFModel { u_factors: u, v_factors: v })
}

/// How missing cells are filled before the dense SVD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillStrategy {
    GlobalMean,
    UserMean,
    ItemMean,
}

impl FillStrategy {
    #[must_use]
    pub fn as_str(&self) -> &'static str {
        match self {
            FillStrategy::GlobalMean => "global-mean",
            FillStrategy::UserMean => "user-mean",
            FillStrategy::ItemMean => "item-mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "global-mean" => Ok(FillStrategy::GlobalMean),
            "user-mean" => Ok(FillStrategy::UserMean),
            "item-mean" => Ok(FillStrategy::ItemMean),
            other => Err(Error::Config(format!(
                "unknown fill strategy '{other}' (expected global-mean, user-mean, item-mean)"
            ))),
        }
    }
}

impl std::fmt::Display for FillStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Truncated SVD predictor on a mean-imputed dense matrix.
///
/// Missing cells are filled per `fill` (rows without any observation fall
/// back to the global mean), then the top `latent_dim` left singular
/// directions are found by orthogonal iteration and the model stores
/// `U` and `A^T U`, so predictions reproduce the rank-d projection
/// `U U^T A`. The iteration is deterministic: its starting basis comes from
/// a fixed internal seed.
pub fn fit_svd(
    matrix: &SparseRatingMatrix,
    latent_dim: usize,
    fill: FillStrategy,
) -> Result<MFModel> {
    if latent_dim == 0 {
        return Err(Error::Config("latent_dim must be at least 1".into()));
    }
    let (m, n) = (matrix.users(), matrix.items());
    if latent_dim > m.min(n) {
        return Err(Error::Config(format!(
            "latent_dim {latent_dim} exceeds min(users, items) = {}",
            m.min(n)
        )));
    }
    let a = filled_dense(matrix, fill)?;

    let mut rng = seeds::rng(0x7376_6466, &[0]); // "svdf"
    let mut u = orthonormalize(random_factors(m, latent_dim, 1.0, &mut rng));

    // Orthogonal iteration: the captured spectral mass ||A V||_F^2 is
    // non-decreasing, so its stabilization is the stopping signal.
    let mut captured = 0.0;
    for _ in 0..500 {
        let v = orthonormalize(a.t().dot(&u));
        let y = a.dot(&v);
        let now = y.iter().map(|x| x * x).sum::<f64>();
        u = orthonormalize(y);
        let stable = (now - captured).abs() <= 1e-12 * (1.0 + now.abs());
        captured = now;
        if stable {
            break;
        }
    }

    let v_factors = a.t().dot(&u);
    Ok(MFModel { u_factors: u, v_factors })
}

fn random_factors(rows: usize, d: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    let data: Vec<f64> =
        (0..rows * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Array2::from_shape_vec((rows, d), data).expect("shape matches data length")
}

/// Dense copy of the matrix with missing cells imputed.
fn filled_dense(matrix: &SparseRatingMatrix, fill: FillStrategy) -> Result<Array2<f64>> {
    let (m, n) = (matrix.users(), matrix.items());
    let global = matrix.global_mean()?;

    let fill_value: Vec<f64> = match fill {
        FillStrategy::GlobalMean => Vec::new(),
        FillStrategy::UserMean => {
            group_means(matrix.entries().iter().map(|e| (e.user, e.value)), m, global)
        }
        FillStrategy::ItemMean => {
            group_means(matrix.entries().iter().map(|e| (e.item, e.value)), n, global)
        }
    };

    let mut a = Array2::zeros((m, n));
    for ((ui, ii), x) in a.indexed_iter_mut() {
        *x = match fill {
            FillStrategy::GlobalMean => global,
            FillStrategy::UserMean => fill_value[ui],
            FillStrategy::ItemMean => fill_value[ii],
        };
    }
    for e in matrix.entries() {
        a[(e.user as usize, e.item as usize)] = e.value;
    }
    Ok(a)
}

fn group_means(pairs: impl Iterator<Item = (u32, f64)>, groups: usize, fallback: f64) -> Vec<f64> {
    let mut sum = vec![0.0; groups];
    let mut count = vec![0u64; groups];
    for (g, v) in pairs {
        sum[g as usize] += v;
        count[g as usize] += 1;
    }
    (0..groups)
        .map(|g| if count[g] == 0 { fallback } else { sum[g] / count[g] as f64 })
        .collect()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns whose
/// norm collapses below 1e-12 are zeroed, which shrinks the effective rank
/// instead of propagating noise.
fn orthonormalize(mut m: Array2<f64>) -> Array2<f64> {
    let d = m.ncols();
    for _pass in 0..2 {
        for j in 0..d {
            for i in 0..j {
                let proj = m.column(j).dot(&m.column(i));
                let ci = m.column(i).to_owned();
                for (x, c) in m.column_mut(j).iter_mut().zip(ci.iter()) {
                    *x -= proj * c;
                }
            }
            let norm = m.column(j).dot(&m.column(j)).sqrt();
            if norm < 1e-12 {
                for x in m.column_mut(j) {
                    *x = 0.0;
                }
            } else {
                for x in m.column_mut(j) {
                    *x /= norm;
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::RatingDomain;
    use approx::assert_relative_eq;

    fn rank_one_matrix() -> SparseRatingMatrix {
        let a = [1.0, 2.0, 0.5, 1.5];
        let b = [2.0, 1.0, 3.0];
        let mut triplets = Vec::new();
        for i in 0..4u32 {
            for j in 0..3u32 {
                triplets.push((i, j, a[i as usize] * b[j as usize]));
            }
        }
        let domain = RatingDomain::new(0.0, 10.0).unwrap();
        SparseRatingMatrix::from_entries(4, 3, domain, triplets).unwrap()
    }

    #[test]
    fn sgd_fits_rank_one_data() {
        let matrix = rank_one_matrix();
        let config = SgdConfig { latent_dim: 2, epochs: 400, learning_rate: 0.03, seed: 3, ..SgdConfig::default() };
        let model = fit_mf_sgd(&matrix, &config).unwrap();
        let mut sse = 0.0;
        for e in matrix.entries() {
            let p = model.predict(e.user as usize, e.item as usize);
            sse += (p - e.value) * (p - e.value);
        }
        let rmse = (sse / matrix.nnz() as f64).sqrt();
        assert!(rmse < 0.05, "training rmse {rmse}");
    }

    #[test]
    fn sgd_deterministic_in_seed() {
        let matrix = rank_one_matrix();
        let config = SgdConfig { latent_dim: 2, epochs: 10, seed: 4, ..SgdConfig::default() };
        let a = fit_mf_sgd(&matrix, &config).unwrap();
        let b = fit_mf_sgd(&matrix, &config).unwrap();
        assert_eq!(a.u_factors, b.u_factors);
        assert_eq!(a.v_factors, b.v_factors);
    }

    #[test]
    fn sgd_divergence_guard_fires() {
        let matrix = rank_one_matrix();
        let config =
            SgdConfig { latent_dim: 2, epochs: 50, learning_rate: 10.0, seed: 1, ..SgdConfig::default() };
        match fit_mf_sgd(&matrix, &config) {
            Err(Error::NonConvergence(_)) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn svd_full_rank_reconstructs_exactly() {
        // d = min(m, n) makes the projector the identity on the row space.
        let mut rng = seeds::rng(7, &[0]);
        let domain = RatingDomain::new(-10.0, 10.0).unwrap();
        let mut triplets = Vec::new();
        for u in 0..5u32 {
            for i in 0..7u32 {
                triplets.push((u, i, rng.gen_range(-5.0..5.0)));
            }
        }
        let matrix = SparseRatingMatrix::from_entries(5, 7, domain, triplets).unwrap();
        let model = fit_svd(&matrix, 5, FillStrategy::GlobalMean).unwrap();
        for e in matrix.entries() {
            let p = model.predict(e.user as usize, e.item as usize);
            assert_relative_eq!(p, e.value, epsilon = 1e-8);
        }
    }

    #[test]
    fn svd_rank_one_is_exact_at_d_one() {
        let matrix = rank_one_matrix();
        let model = fit_svd(&matrix, 1, FillStrategy::GlobalMean).unwrap();
        for e in matrix.entries() {
            let p = model.predict(e.user as usize, e.item as usize);
            assert_relative_eq!(p, e.value, epsilon = 1e-8);
        }
    }

    #[test]
    fn svd_residual_non_increasing_in_rank() {
        let mut rng = seeds::rng(9, &[0]);
        let domain = RatingDomain::new(-10.0, 10.0).unwrap();
        let mut triplets = Vec::new();
        for u in 0..6u32 {
            for i in 0..5u32 {
                triplets.push((u, i, rng.gen_range(-5.0..5.0)));
            }
        }
        let matrix = SparseRatingMatrix::from_entries(6, 5, domain, triplets).unwrap();
        let mut prev = f64::INFINITY;
        for d in 1..=5 {
            let model = fit_svd(&matrix, d, FillStrategy::GlobalMean).unwrap();
            let mut sse = 0.0;
            for e in matrix.entries() {
                let p = model.predict(e.user as usize, e.item as usize);
                sse += (p - e.value) * (p - e.value);
            }
            assert!(sse <= prev + 1e-9, "rank {d}: {sse} > {prev}");
            prev = sse;
        }
        assert!(prev < 1e-16, "full rank leaves residual {prev}");
    }

    #[test]
    fn svd_fill_value_survives_to_missing_cells() {
        // At full rank the reconstruction equals the filled matrix, so a
        // missing cell predicts exactly its fill value.
        let domain = RatingDomain::new(0.0, 10.0).unwrap();
        let triplets = vec![(0u32, 0u32, 2.0), (0, 1, 4.0), (1, 0, 6.0)];
        let matrix = SparseRatingMatrix::from_entries(2, 2, domain, triplets).unwrap();

        let global = fit_svd(&matrix, 2, FillStrategy::GlobalMean).unwrap();
        assert_relative_eq!(global.predict(1, 1), 4.0, epsilon = 1e-8);

        let user = fit_svd(&matrix, 2, FillStrategy::UserMean).unwrap();
        assert_relative_eq!(user.predict(1, 1), 6.0, epsilon = 1e-8);

        let item = fit_svd(&matrix, 2, FillStrategy::ItemMean).unwrap();
        assert_relative_eq!(item.predict(1, 1), 4.0, epsilon = 1e-8);
    }

    #[test]
    fn svd_validates_rank() {
        let matrix = rank_one_matrix();
        assert!(fit_svd(&matrix, 0, FillStrategy::GlobalMean).is_err());
        assert!(fit_svd(&matrix, 4, FillStrategy::GlobalMean).is_err());
    }

    #[test]
    fn fill_strategy_round_trip() {
        for s in [FillStrategy::GlobalMean, FillStrategy::UserMean, FillStrategy::ItemMean] {
            assert_eq!(FillStrategy::parse(s.as_str()).unwrap(), s);
        }
        assert!(FillStrategy::parse("median").is_err());
    }
}
