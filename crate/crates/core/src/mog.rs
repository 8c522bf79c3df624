//! Mixture-of-Gaussians matrix factorization fit by EM.
//!
//! Ratings are modeled as a low-rank interaction plus noise drawn from a
//! zero-mean Gaussian mixture. The mixture absorbs heterogeneous noise, in
//! particular the heavy perturbation that a privacy mechanism injects on top
//! of ordinary rating noise:
//!
//! ```text
//! r_ij = u_i . v_j + e_ij,    e_ij ~ sum_k pi_k N(0, sigma_k^2)
//! ```
//!
//! EM alternates between responsibilities and parameter updates:
//!
//! ```text
//! E step:  gamma_ijk = pi_k N(e_ij; 0, sigma_k^2) / sum_l pi_l N(e_ij; 0, sigma_l^2)
//! M step:  pi_k      = (1/n) sum_ij gamma_ijk
//!          sigma_k^2 = sum_ij gamma_ijk e_ij^2 / sum_ij gamma_ijk
//!          U, V      = argmin sum_ij w_ij (r_ij - u_i . v_j)^2
//!          with cell weights w_ij = sum_k gamma_ijk / (2 sigma_k^2)
//! ```
//!
//! The factor update is a weighted low-rank problem solved by a few sweeps
//! of alternating per-row least squares. Each sweep can only lower the
//! weighted squared error, and the mixture update is the exact maximizer
//! given the responsibilities, so every iteration is a generalized M step:
//! the observed-data log-likelihood never decreases, up to the variance
//! floor and the tiny jitter added to keep row solves positive definite.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::seeds;

/// Components whose responsibility mass falls below this fraction of the
/// total are reinitialized during the M step.
const DEGENERATE_FRACTION: f64 = 1e-8;

/// Relative diagonal shift for the row solves: multiplied by the largest
/// Gram diagonal entry so rank-deficient rows (fewer observed cells than
/// the latent dimension) stay factorizable at any weight scale.
const ROW_SOLVE_JITTER: f64 = 1e-9;

/// Data-relative component variance floor, as a fraction of the variance
/// of the observed entries. A component whose variance reaches the
/// absolute floor on rating-scale data would give its cells a five to six
/// order-of-magnitude weight advantage, and the factor update would then
/// reproduce those perturbed values exactly at the expense of every
/// held-out cell. Tying the floor to the data scale caps the cell-weight
/// ratio near one hundred on any rating scale.
pub const RELATIVE_VARIANCE_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Latent dimension of the factor matrices.
    pub latent_dim: usize,
    /// Number of mixture components.
    pub components: usize,
    /// Maximum EM iterations.
    pub max_iters: usize,
    /// Convergence threshold on the relative Frobenius change of the user
    /// factors between iterations.
    pub tol: f64,
    /// Alternating least-squares sweeps per EM iteration.
    pub inner_iters: usize,
    /// L2 penalty per unit of row weight in every factor row solve.
    pub ridge: f64,
    /// Absolute lower bound on component variances. Fits additionally
    /// enforce [`RELATIVE_VARIANCE_FLOOR`] times the observed-value
    /// variance, whichever bound is larger.
    pub variance_floor: f64,
    /// Ratio between adjacent initial component variances.
    pub init_spread: f64,
    /// Standard deviation of the random factor initialization.
    pub init_scale: f64,
    /// Seed for factor initialization.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            latent_dim: 20,
            components: 3,
            max_iters: 100,
            tol: 1e-4,
            inner_iters: 2,
            ridge: 0.0,
            variance_floor: 1e-6,
            init_spread: 4.0,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if self.components == 0 {
            return Err(Error::Config("components must be at least 1".into()));
        }
        if self.max_iters == 0 || self.inner_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be finite and >= 0, got {}", self.tol)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!("ridge must be finite and >= 0, got {}", self.ridge)));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Config(format!(
                "variance_floor must be finite and > 0, got {}",
                self.variance_floor
            )));
        }
        if !(self.init_spread >= 1.0 && self.init_spread.is_finite()) {
            return Err(Error::Config(format!(
                "init_spread must be finite and >= 1, got {}",
                self.init_spread
            )));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be finite and > 0, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Fitted factors and mixture parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MoGMFModel {
    /// users x d.
    pub u_factors: Array2<f64>,
    /// items x d.
    pub v_factors: Array2<f64>,
    /// Mixing proportions, sum to 1.
    pub mix_weights: Vec<f64>,
    /// Component variances, each at least the effective variance floor.
    pub variances: Vec<f64>,
}

impl MoGMFModel {
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

    #[inline]
    #[must_use]
    pub fn components(&self) -> usize {
        self.mix_weights.len()
    }

    /// Inner-product prediction. Panics when indices are out of range.
    #[inline]
    #[must_use]
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.u_factors.row(user).dot(&self.v_factors.row(item))
    }
}

/// Diagnostics from one EM fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    /// Observed-data log-likelihood before each M step, plus a final entry
    /// after the last one.
    pub ll_trace: Vec<f64>,
    /// Number of component reinitializations across all iterations.
    pub reinit_events: usize,
    pub seed: u64,
    pub final_ll: f64,
}

/// Per-cell component responsibilities, stored row-major as cells x K.
#[derive(Debug, Clone)]
pub struct Responsibilities {
    data: Vec<f64>,
    components: usize,
}

impl Responsibilities {
    #[inline]
    #[must_use]
    pub fn cells(&self) -> usize {
        self.data.len() / self.components
    }

    #[inline]
    #[must_use]
    pub fn components(&self) -> usize {
        self.components
    }

    #[inline]
    #[must_use]
    pub fn get(&self, cell: usize, component: usize) -> f64 {
        self.data[cell * self.components + component]
    }

    #[inline]
    #[must_use]
    pub fn row(&self, cell: usize) -> &[f64] {
        let start = cell * self.components;
        &self.data[start..start + self.components]
    }
}

fn validate_mixture(mix_weights: &[f64], variances: &[f64]) -> Result<()> {
    if mix_weights.is_empty() || mix_weights.len() != variances.len() {
        return Err(Error::Config(format!(
            "mixture shape mismatch: {} weights vs {} variances",
            mix_weights.len(),
            variances.len()
        )));
    }
    for &p in mix_weights {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::Config(format!("invalid mixing weight {p}")));
        }
    }
    for &v in variances {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("invalid component variance {v}")));
        }
    }
    Ok(())
}

/// Computes responsibilities and the observed-data log-likelihood for the
/// given residuals. Densities are evaluated in the log domain so extreme
/// residual-to-variance ratios cannot underflow to a 0/0 split.
pub fn e_step(
    residuals: &[f64],
    mix_weights: &[f64],
    variances: &[f64],
) -> Result<(Responsibilities, f64)> {
    validate_mixture(mix_weights, variances)?;
    let k = mix_weights.len();
    let log_norm: Vec<f64> = mix_weights
        .iter()
        .zip(variances)
        .map(|(&p, &var)| p.ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln())
        .collect();

    let mut data = vec![0.0; residuals.len() * k];
    let mut ll = 0.0;
    let mut scratch = vec![0.0; k];
    for (cell, &e) in residuals.iter().enumerate() {
        if !e.is_finite() {
            return Err(Error::Numerical(format!("non-finite residual {e} at cell {cell}")));
        }
        for j in 0..k {
            scratch[j] = log_norm[j] - e * e / (2.0 * variances[j]);
        }
        let lse = linalg::log_sum_exp(&scratch);
        if !lse.is_finite() {
            return Err(Error::Numerical(format!(
                "cell {cell} has zero density under every component"
            )));
        }
        ll += lse;
        let row = &mut data[cell * k..(cell + 1) * k];
        for j in 0..k {
            row[j] = (scratch[j] - lse).exp();
        }
    }
    Ok((Responsibilities { data, components: k }, ll))
}

/// Observed-data log-likelihood of the residuals under the mixture.
pub fn log_likelihood(residuals: &[f64], mix_weights: &[f64], variances: &[f64]) -> Result<f64> {
    validate_mixture(mix_weights, variances)?;
    let k = mix_weights.len();
    let log_norm: Vec<f64> = mix_weights
        .iter()
        .zip(variances)
        .map(|(&p, &var)| p.ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln())
        .collect();
    let mut scratch = vec![0.0; k];
    let mut ll = 0.0;
    for &e in residuals {
        for j in 0..k {
            scratch[j] = log_norm[j] - e * e / (2.0 * variances[j]);
        }
        ll += linalg::log_sum_exp(&scratch);
    }
    Ok(ll)
}

/// Mixture parameters after one M step.
#[derive(Debug, Clone)]
pub struct MixtureUpdate {
    pub mix_weights: Vec<f64>,
    pub variances: Vec<f64>,
    /// Components whose responsibility mass collapsed and were reset to the
    /// global residual variance with a uniform share of the mixing mass.
    pub reinitialized: Vec<usize>,
}

/// Closed-form mixture update given responsibilities. Variances are floored
/// at `variance_floor`; the floored value is still the maximizer of the
/// constrained problem, so the generalized EM guarantee is preserved.
pub fn m_step_mixture(
    residuals: &[f64],
    resp: &Responsibilities,
    variance_floor: f64,
) -> Result<MixtureUpdate> {
    if resp.cells() != residuals.len() {
        return Err(Error::Config(format!(
            "responsibility rows {} do not match residuals {}",
            resp.cells(),
            residuals.len()
        )));
    }
    if residuals.is_empty() {
        return Err(Error::EmptyDataset("mixture update over zero cells".into()));
    }
    let k = resp.components();
    let n = residuals.len() as f64;

    let mut mass = vec![0.0; k];
    let mut weighted_sq = vec![0.0; k];
    let mut global_sq = 0.0;
    for (cell, &e) in residuals.iter().enumerate() {
        let row = resp.row(cell);
        for j in 0..k {
            mass[j] += row[j];
            weighted_sq[j] += row[j] * e * e;
        }
        global_sq += e * e;
    }
    let global_var = (global_sq / n).max(variance_floor);

    let mut mix_weights = vec![0.0; k];
    let mut variances = vec![0.0; k];
    let mut reinitialized = Vec::new();
    for j in 0..k {
        if mass[j] < DEGENERATE_FRACTION * n {
            mix_weights[j] = 1.0 / k as f64;
            variances[j] = global_var;
            reinitialized.push(j);
        } else {
            mix_weights[j] = mass[j] / n;
            variances[j] = (weighted_sq[j] / mass[j]).max(variance_floor);
        }
    }
    let total: f64 = mix_weights.iter().sum();
    for w in &mut mix_weights {
        *w /= total;
    }
    Ok(MixtureUpdate { mix_weights, variances, reinitialized })
}

/// Per-cell least-squares weights implied by the responsibilities:
/// `w = sum_k gamma_k / (2 sigma_k^2)`.
#[must_use]
pub fn cell_weights(resp: &Responsibilities, variances: &[f64]) -> Vec<f64> {
    let k = resp.components();
    debug_assert_eq!(k, variances.len());
    let inv: Vec<f64> = variances.iter().map(|&v| 1.0 / (2.0 * v)).collect();
    (0..resp.cells())
        .map(|cell| {
            let row = resp.row(cell);
            row.iter().zip(&inv).map(|(&g, &iv)| g * iv).sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct WlraOptions {
    pub sweeps: usize,
    /// L2 penalty per unit of row weight: each row solve adds
    /// `ridge` times the row's total cell weight to the Gram diagonal.
    pub ridge: f64,
}

/// Result of the alternating weighted least-squares solver.
#[derive(Debug, Clone)]
pub struct WlraOutcome {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    /// Final weighted squared error `sum w (r - u.v)^2`.
    pub objective: f64,
    /// User rows with zero total weight, left at their warm start.
    pub skipped_rows: usize,
    /// Item rows with zero total weight, left at their warm start.
    pub skipped_cols: usize,
}

fn weighted_sse(
    users: &[u32],
    items: &[u32],
    values: &[f64],
    weights: &[f64],
    u: &Array2<f64>,
    v: &Array2<f64>,
) -> f64 {
    let mut sse = 0.0;
    for c in 0..values.len() {
        let pred = u.row(users[c] as usize).dot(&v.row(items[c] as usize));
        let e = values[c] - pred;
        sse += weights[c] * e * e;
    }
    sse
}

/// Solves one row's weighted normal equations. Returns `None` when the row
/// has zero total weight.
fn solve_row(
    d: usize,
    cells: &[usize],
    other: &Array2<f64>,
    other_index: &[u32],
    values: &[f64],
    weights: &[f64],
    ridge: f64,
) -> Result<Option<Vec<f64>>> {
    let mut total = 0.0;
    for &c in cells {
        total += weights[c];
    }
    if total <= 0.0 {
        return Ok(None);
    }
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for &c in cells {
        let w = weights[c];
        if w == 0.0 {
            continue;
        }
        let row = other.row(other_index[c] as usize);
        let wr = w * values[c];
        for p in 0..d {
            b[p] += wr * row[p];
            let wp = w * row[p];
            for q in 0..=p {
                a[p * d + q] += wp * row[q];
            }
        }
    }
    for p in 0..d {
        for q in (p + 1)..d {
            a[p * d + q] = a[q * d + p];
        }
    }
    // A row observed in fewer than d cells has a rank-deficient Gram
    // matrix whose zero eigenvalues round to anywhere within machine
    // epsilon of the matrix norm, so the stabilizing shift must scale
    // with the diagonal. Escalate when rounding still wins.
    let diag_scale = (0..d).map(|p| a[p * d + p]).fold(0.0_f64, f64::max).max(1.0);
    let mut shift = ROW_SOLVE_JITTER * diag_scale;
    loop {
        let mut a_try = a.clone();
        let mut b_try = b.clone();
        // The penalty scales with the row's total cell weight so its
        // strength relative to the data term is the same for every row
        // and at every weight scale.
        for p in 0..d {
            a_try[p * d + p] += ridge * total + shift;
        }
        match linalg::solve_spd_in_place(&mut a_try, &mut b_try, d) {
            Ok(()) => return Ok(Some(b_try)),
            Err(err) => {
                if shift > 1e-3 * diag_scale {
                    return Err(err);
                }
                shift *= 1e3;
            }
        }
    }
}

/// Alternating weighted least squares for `min sum w_c (r_c - u_{uc} . v_{ic})^2`,
/// warm-started at `u0`, `v0`. Rows and columns whose cells all carry zero
/// weight keep their warm-start values. If a full sweep ever raises the
/// objective (possible only through the diagonal jitter), the sweep is
/// rolled back and iteration stops, so the returned objective never exceeds
/// the warm start's.
pub fn weighted_low_rank(
    users: &[u32],
    items: &[u32],
    values: &[f64],
    weights: &[f64],
    u0: Array2<f64>,
    v0: Array2<f64>,
    opts: WlraOptions,
) -> Result<WlraOutcome> {
    let n = values.len();
    if users.len() != n || items.len() != n || weights.len() != n {
        return Err(Error::Config(format!(
            "cell array lengths differ: {} users, {} items, {} values, {} weights",
            users.len(),
            items.len(),
            n,
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset("weighted low-rank fit over zero cells".into()));
    }
    let d = u0.ncols();
    if d == 0 || v0.ncols() != d {
        return Err(Error::Config(format!(
            "factor dimension mismatch: u is {}x{}, v is {}x{}",
            u0.nrows(),
            u0.ncols(),
            v0.nrows(),
            v0.ncols()
        )));
    }
    if opts.sweeps == 0 {
        return Err(Error::Config("sweeps must be at least 1".into()));
    }
    for c in 0..n {
        if (users[c] as usize) >= u0.nrows() || (items[c] as usize) >= v0.nrows() {
            return Err(Error::IndexOutOfBounds(format!(
                "cell ({}, {}) outside factor shape ({}, {})",
                users[c],
                items[c],
                u0.nrows(),
                v0.nrows()
            )));
        }
        if !values[c].is_finite() || !weights[c].is_finite() || weights[c] < 0.0 {
            return Err(Error::Numerical(format!(
                "invalid cell {c}: value {} weight {}",
                values[c], weights[c]
            )));
        }
    }

    let mut cells_of_user: Vec<Vec<usize>> = vec![Vec::new(); u0.nrows()];
    let mut cells_of_item: Vec<Vec<usize>> = vec![Vec::new(); v0.nrows()];
    for c in 0..n {
        cells_of_user[users[c] as usize].push(c);
        cells_of_item[items[c] as usize].push(c);
    }

    let mut u = u0;
    let mut v = v0;
    let mut objective = weighted_sse(users, items, values, weights, &u, &v);
    let mut skipped_rows = 0;
    let mut skipped_cols = 0;

    for sweep in 0..opts.sweeps {
        let before_u = u.clone();
        let before_v = v.clone();

        let mut skipped_u = 0;
        for r in 0..u.nrows() {
            match solve_row(d, &cells_of_user[r], &v, items, values, weights, opts.ridge)? {
                Some(x) => {
                    for (p, val) in x.into_iter().enumerate() {
                        u[(r, p)] = val;
                    }
                }
                None => skipped_u += 1,
            }
        }
        let mut skipped_v = 0;
        for r in 0..v.nrows() {
            match solve_row(d, &cells_of_item[r], &u, users, values, weights, opts.ridge)? {
                Some(x) => {
                    for (p, val) in x.into_iter().enumerate() {
                        v[(r, p)] = val;
                    }
                }
                None => skipped_v += 1,
            }
        }

        let after = weighted_sse(users, items, values, weights, &u, &v);
        if after > objective + 1e-12 * (1.0 + objective.abs()) {
            u = before_u;
            v = before_v;
            break;
        }
        objective = after;
        if sweep == 0 {
            skipped_rows = skipped_u;
            skipped_cols = skipped_v;
        }
    }

    Ok(WlraOutcome { u, v, objective, skipped_rows, skipped_cols })
}

fn compute_residuals(
    users: &[u32],
    items: &[u32],
    values: &[f64],
    u: &Array2<f64>,
    v: &Array2<f64>,
) -> Vec<f64> {
    (0..values.len())
        .map(|c| values[c] - u.row(users[c] as usize).dot(&v.row(items[c] as usize)))
        .collect()
}

/// Effective lower bound on component variances for a fit over `values`:
/// the configured absolute floor or the data-relative one, whichever is
/// larger. `values` must be nonempty.
fn effective_variance_floor(values: &[f64], configured: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    configured.max(RELATIVE_VARIANCE_FLOOR * var)
}

fn random_factors(rows: usize, d: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    let data: Vec<f64> =
        (0..rows * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Array2::from_shape_vec((rows, d), data).expect("shape matches data length")
}

/// Fits the model with random factor initialization derived from
/// `config.seed`. Initial component variances form a geometric ladder around
/// the mean squared residual of the random start, so components begin
/// separated and can specialize.
pub fn fit(matrix: &SparseRatingMatrix, config: &FitConfig) -> Result<(MoGMFModel, FitReport)> {
    config.validate()?;
    if matrix.nnz() == 0 {
        return Err(Error::EmptyDataset("cannot fit on a matrix with no entries".into()));
    }
    let mut rng = seeds::rng(config.seed, &[0x6d6f_675f]); // "mog_"
    let u0 = random_factors(matrix.users(), config.latent_dim, config.init_scale, &mut rng);
    let v0 = random_factors(matrix.items(), config.latent_dim, config.init_scale, &mut rng);

    let entries = matrix.entries();
    let users: Vec<u32> = entries.iter().map(|e| e.user).collect();
    let items: Vec<u32> = entries.iter().map(|e| e.item).collect();
    let values: Vec<f64> = entries.iter().map(|e| e.value).collect();
    let res = compute_residuals(&users, &items, &values, &u0, &v0);
    let mse = (res.iter().map(|e| e * e).sum::<f64>() / res.len() as f64)
        .max(config.variance_floor);

    let k = config.components;
    let mix0 = vec![1.0 / k as f64; k];
    let mid = (k as f64 - 1.0) / 2.0;
    let var0: Vec<f64> = (0..k)
        .map(|j| (mse * config.init_spread.powf(j as f64 - mid)).max(config.variance_floor))
        .collect();

    fit_from(matrix, u0, v0, mix0, var0, config)
}

/// Fits the model from explicitly supplied starting parameters. Used to pin
/// down initialization-sensitive behavior; `fit` is the usual entry point.
/// Starting variances below the effective variance floor are raised to it.
pub fn fit_with_init(
    matrix: &SparseRatingMatrix,
    u0: Array2<f64>,
    v0: Array2<f64>,
    mix0: Vec<f64>,
    var0: Vec<f64>,
    config: &FitConfig,
) -> Result<(MoGMFModel, FitReport)> {
    config.validate()?;
    if matrix.nnz() == 0 {
        return Err(Error::EmptyDataset("cannot fit on a matrix with no entries".into()));
    }
    if u0.nrows() != matrix.users() || v0.nrows() != matrix.items() {
        return Err(Error::Config(format!(
            "initial factor rows ({}, {}) do not match matrix shape ({}, {})",
            u0.nrows(),
            v0.nrows(),
            matrix.users(),
            matrix.items()
        )));
    }
    if u0.ncols() != config.latent_dim || v0.ncols() != config.latent_dim {
        return Err(Error::Config(format!(
            "initial factor dimension ({}, {}) does not match latent_dim {}",
            u0.ncols(),
            v0.ncols(),
            config.latent_dim
        )));
    }
    if mix0.len() != config.components || var0.len() != config.components {
        return Err(Error::Config(format!(
            "initial mixture sizes ({}, {}) do not match components {}",
            mix0.len(),
            var0.len(),
            config.components
        )));
    }
    validate_mixture(&mix0, &var0)?;
    fit_from(matrix, u0, v0, mix0, var0, config)
}

fn fit_from(
    matrix: &SparseRatingMatrix,
    u0: Array2<f64>,
    v0: Array2<f64>,
    mix0: Vec<f64>,
    var0: Vec<f64>,
    config: &FitConfig,
) -> Result<(MoGMFModel, FitReport)> {
    let entries = matrix.entries();
    let users: Vec<u32> = entries.iter().map(|e| e.user).collect();
    let items: Vec<u32> = entries.iter().map(|e| e.item).collect();
    let values: Vec<f64> = entries.iter().map(|e| e.value).collect();
    let floor = effective_variance_floor(&values, config.variance_floor);

    let mut u = u0;
    let mut v = v0;
    let mut mix = mix0;
    let mut vars = var0;
    // Starting variances below the floor would let the first constrained
    // M-step lower the likelihood; lift them so the trace is monotone
    // from iteration one.
    for var in &mut vars {
        *var = var.max(floor);
    }

    let mut ll_trace = Vec::with_capacity(config.max_iters + 1);
    let mut reinit_events = 0;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        iterations += 1;
        let residuals = compute_residuals(&users, &items, &values, &u, &v);
        let (resp, ll) = e_step(&residuals, &mix, &vars)?;
        ll_trace.push(ll);

        let update = m_step_mixture(&residuals, &resp, floor)?;
        reinit_events += update.reinitialized.len();
        mix = update.mix_weights;
        vars = update.variances;

        let weights = cell_weights(&resp, &vars);
        let prev_u = u.clone();
        let out = weighted_low_rank(
            &users,
            &items,
            &values,
            &weights,
            u,
            v,
            WlraOptions { sweeps: config.inner_iters, ridge: config.ridge },
        )?;
        u = out.u;
        v = out.v;

        if linalg::relative_change(&u.view(), &prev_u.view()) < config.tol {
            converged = true;
            break;
        }
    }

    let residuals = compute_residuals(&users, &items, &values, &u, &v);
    let final_ll = log_likelihood(&residuals, &mix, &vars)?;
    ll_trace.push(final_ll);

    Ok((
        MoGMFModel { u_factors: u, v_factors: v, mix_weights: mix, variances: vars },
        FitReport {
            iterations,
            converged,
            ll_trace,
            reinit_events,
            seed: config.seed,
            final_ll,
        },
    ))
}
