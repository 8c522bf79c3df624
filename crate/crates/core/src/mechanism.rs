//! Local perturbation of bounded ratings.
//!
//! A rating lives on a closed scale `[l, u]`. Adding plain Laplace noise
//! would protect it but also push it off the scale, so the service provider
//! could not treat the value as a rating any more. The bounded Laplace
//! mechanism keeps resampling until the noisy value lands inside the scale:
//!
//! ```text
//! repeat
//!     r* = r + Laplace(0, b)
//! until l <= r* <= u
//! ```
//!
//! The output density is the Laplace density renormalized to the scale,
//!
//! ```text
//! f(r* | r) = 1 / C(r) * 1/(2b) * exp(-|r* - r| / b)      for r* in [l, u]
//! C(r)      = 1 - ( exp(-(r - l)/b) + exp(-(u - r)/b) ) / 2
//! ```
//!
//! where `C(r)` is both the normalization constant and the per-round
//! acceptance probability. Because `C` depends on the true rating, the noise
//! scale that plain Laplace would use is no longer enough; the scale must
//! satisfy
//!
//! ```text
//! b >= delta_f / (epsilon - ln dC),    dC = C(l + delta_f) / C(l)
//! ```
//!
//! for the mechanism to be epsilon-differentially private with sensitivity
//! `delta_f`. When `delta_f` spans the whole scale, `dC = 1` and the
//! condition reduces to the familiar `b >= (u - l) / epsilon`.
//! [`calibrate_scale`] solves this condition for the smallest valid `b`.
//!
//! Besides the mechanism itself the module provides the exact distribution
//! of the injected noise over a discrete rank grid ([`noise_distribution`]),
//! the privacy-loss envelope [`f_ratio`] used to reason about the scale
//! condition, and an empirical privacy audit ([`audit::ldp_audit`]).

pub mod audit;

use rand::Rng;

use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};
use crate::seeds;

/// Attempt cap for the rejection sampler. At this count the acceptance
/// probability would have to be below ~1e-5 per round, which only happens
/// with a wildly miscalibrated scale.
pub const REJECTION_CAP: u64 = 1_000_000;

/// Closed rating scale `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingDomain {
    lo: f64,
    hi: f64,
}

impl RatingDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("bounds must be finite, got [{lo}, {hi}]")));
        }
        if lo >= hi {
            return Err(Error::Domain(format!("lower bound {lo} must be below upper bound {hi}")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    #[must_use]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    #[must_use]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    #[must_use]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    #[must_use]
    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }

    #[inline]
    #[must_use]
    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.lo, self.hi)
    }

    /// Evenly spaced rank grid `lo, lo + step, ..., hi`.
    ///
    /// `step` must divide the width; the last rank is pinned to `hi` exactly
    /// so accumulated rounding cannot leak outside the domain.
    pub fn ranks(&self, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Domain(format!("rank step must be positive, got {step}")));
        }
        let n = self.width() / step;
        let count = n.round();
        if (n - count).abs() > 1e-9 || count < 1.0 {
            return Err(Error::Domain(format!(
                "rank step {step} does not divide domain width {}",
                self.width()
            )));
        }
        let count = count as usize;
        let mut ranks: Vec<f64> = (0..count).map(|i| self.lo + i as f64 * step).collect();
        ranks.push(self.hi);
        Ok(ranks)
    }
}

/// Calibrated privacy parameters: budget, sensitivity, noise scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub sensitivity: f64,
    pub scale: f64,
}

/// Normalization constant / acceptance probability `C(r)` of the bounded
/// Laplace density with scale `b` on `domain`, for a true rating `r` inside
/// the domain. Always in `(0, 1)` for finite positive `b`.
pub fn normalization_constant(domain: &RatingDomain, b: f64, r: f64) -> Result<f64> {
    check_scale(b)?;
    if !domain.contains(r) {
        return Err(Error::Domain(format!(
            "rating {r} outside domain [{}, {}]",
            domain.lo, domain.hi
        )));
    }
    Ok(1.0 - 0.5 * ((-(r - domain.lo) / b).exp() + (-(domain.hi - r) / b).exp()))
}

/// Worst-case acceptance ratio `dC = C(l + sensitivity) / C(l)` over rating
/// pairs at the given sensitivity. Equals 1 exactly when the sensitivity
/// spans the whole domain, and is at least 1 otherwise.
pub fn delta_c(domain: &RatingDomain, b: f64, sensitivity: f64) -> Result<f64> {
    if !(sensitivity >= 0.0) || sensitivity > domain.width() + 1e-12 {
        return Err(Error::Privacy(format!(
            "sensitivity {sensitivity} outside [0, {}]",
            domain.width()
        )));
    }
    let shifted = (domain.lo + sensitivity).min(domain.hi);
    let num = normalization_constant(domain, b, shifted)?;
    let den = normalization_constant(domain, b, domain.lo)?;
    Ok(num / den)
}

fn check_scale(b: f64) -> Result<()> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Privacy(format!("noise scale must be positive and finite, got {b}")));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Privacy(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    Ok(())
}

/// Smallest noise scale satisfying `b * (epsilon - ln dC(b)) >= sensitivity`.
///
/// `sensitivity` defaults to the domain width, in which case the answer is
/// exactly `width / epsilon`. For smaller sensitivities the condition is
/// implicit in `b`; a damped fixed-point iteration on
/// `b <- sensitivity / (epsilon - ln dC(b))` almost always converges in a
/// handful of steps, and a bisection on the residual
/// `g(b) = b * (epsilon - ln dC(b)) - sensitivity` covers the rest.
/// (`g` is negative for small `b`, crosses zero once, and grows without
/// bound, so the root is the smallest valid scale.)
pub fn calibrate_scale(
    domain: &RatingDomain,
    epsilon: f64,
    sensitivity: Option<f64>,
) -> Result<PrivacyParams> {
    check_epsilon(epsilon)?;
    let sens = sensitivity.unwrap_or_else(|| domain.width());
    if !(sens > 0.0) || sens > domain.width() + 1e-12 {
        return Err(Error::Privacy(format!(
            "sensitivity {sens} outside (0, {}]",
            domain.width()
        )));
    }

    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 200;

    let mut b = sens / epsilon;
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let log_dc = delta_c(domain, b, sens)?.ln();
        if epsilon <= log_dc {
            // Scale too small for the budget to dominate the acceptance
            // penalty; grow and retry.
            b *= 2.0;
            continue;
        }
        let next = 0.5 * (b + sens / (epsilon - log_dc));
        if (next - b).abs() <= TOL * b.max(1.0) {
            b = next;
            converged = true;
            break;
        }
        b = next;
    }

    if !converged {
        b = bisect_scale(domain, epsilon, sens)?;
    } else {
        // The fixed point stops within a relative tolerance of the root and
        // may land a hair on the infeasible side. The returned scale must
        // satisfy the condition as evaluated in floating point, so nudge to
        // the feasible side when it does not.
        let residual = b * (epsilon - delta_c(domain, b, sens)?.ln()) - sens;
        if residual < 0.0 {
            b = bisect_scale(domain, epsilon, sens)?;
        }
    }
    Ok(PrivacyParams { epsilon, sensitivity: sens, scale: b })
}

fn bisect_scale(domain: &RatingDomain, epsilon: f64, sens: f64) -> Result<f64> {
    let g = |b: f64| -> Result<f64> {
        Ok(b * (epsilon - delta_c(domain, b, sens)?.ln()) - sens)
    };
    let mut lo = sens / epsilon; // g(lo) <= 0 always
    let mut hi = lo.max(1e-6);
    let mut grow = 0;
    while g(hi)? <= 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NonConvergence(
                "scale calibration could not bracket the root".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-10 * hi.max(1.0) {
            break;
        }
    }
    Ok(hi)
}

/// Draws one Laplace(0, b) variate by inverse CDF.
pub fn laplace_sample<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    // u strictly inside (0, 1) so 1 - 2|u - 1/2| never reaches ln(0).
    let u: f64 = loop {
        let x = rng.gen::<f64>();
        if x != 0.0 {
            break x;
        }
    };
    let centered = u - 0.5;
    let mag = -b * (1.0 - 2.0 * centered.abs()).ln();
    if centered < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Bounded Laplace mechanism calibrated for one domain and budget.
#[derive(Debug, Clone, Copy)]
pub struct BlpMechanism {
    domain: RatingDomain,
    params: PrivacyParams,
}

impl BlpMechanism {
    /// Calibrates the scale for `epsilon` with sensitivity = domain width.
    pub fn new(domain: RatingDomain, epsilon: f64) -> Result<Self> {
        let params = calibrate_scale(&domain, epsilon, None)?;
        Ok(Self { domain, params })
    }

    pub fn with_sensitivity(domain: RatingDomain, epsilon: f64, sensitivity: f64) -> Result<Self> {
        let params = calibrate_scale(&domain, epsilon, Some(sensitivity))?;
        Ok(Self { domain, params })
    }

    /// Uses an explicit scale instead of calibrating. Intended for audits of
    /// deliberately miscalibrated variants; the claimed `epsilon` is recorded
    /// as given.
    pub fn with_scale(domain: RatingDomain, epsilon: f64, scale: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_scale(scale)?;
        Ok(Self {
            domain,
            params: PrivacyParams { epsilon, sensitivity: domain.width(), scale },
        })
    }

    #[inline]
    #[must_use]
    pub fn domain(&self) -> &RatingDomain {
        &self.domain
    }

    #[inline]
    #[must_use]
    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    /// `C(r)` for this mechanism's scale.
    pub fn acceptance(&self, r: f64) -> Result<f64> {
        normalization_constant(&self.domain, self.params.scale, r)
    }

    /// Output density at `r_star` given true rating `r`. Zero outside the
    /// domain, including at infinitesimal distance past the bounds.
    pub fn pdf(&self, r: f64, r_star: f64) -> Result<f64> {
        let c = self.acceptance(r)?;
        if !self.domain.contains(r_star) {
            return Ok(0.0);
        }
        let b = self.params.scale;
        Ok((-(r_star - r).abs() / b).exp() / (2.0 * b * c))
    }

    /// Exact probability that the output lands in `[a, c]` given `r`,
    /// computed from Laplace CDF differences restricted to the domain.
    pub fn interval_mass(&self, r: f64, a: f64, c: f64) -> Result<f64> {
        let accept = self.acceptance(r)?;
        let lo = a.max(self.domain.lo);
        let hi = c.min(self.domain.hi);
        if hi <= lo {
            return Ok(0.0);
        }
        let b = self.params.scale;
        Ok((laplace_cdf(hi, r, b) - laplace_cdf(lo, r, b)) / accept)
    }

    /// One perturbed rating: resample `r + Laplace(0, b)` until it lands in
    /// the domain. Errors if the true rating is off-scale or the sampler
    /// exceeds [`REJECTION_CAP`] attempts.
    pub fn sample<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> Result<f64> {
        self.sample_with_attempts(r, rng).map(|(v, _)| v)
    }

    /// Like [`Self::sample`] but also reports the number of rejection rounds
    /// used; the expectation of that count is `1 / C(r)`.
    pub fn sample_with_attempts<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> Result<(f64, u64)> {
        if !self.domain.contains(r) {
            return Err(Error::Domain(format!(
                "rating {r} outside domain [{}, {}]",
                self.domain.lo, self.domain.hi
            )));
        }
        let b = self.params.scale;
        for attempt in 1..=REJECTION_CAP {
            let candidate = r + laplace_sample(b, rng);
            if self.domain.contains(candidate) {
                return Ok((candidate, attempt));
            }
        }
        Err(Error::SamplerStalled { attempts: REJECTION_CAP })
    }
}

#[inline]
fn laplace_cdf(x: f64, mu: f64, b: f64) -> f64 {
    if x < mu {
        0.5 * ((x - mu) / b).exp()
    } else {
        1.0 - 0.5 * ((mu - x) / b).exp()
    }
}

/// Privacy-loss envelope `F(r, z) = C(r + z) / C(r) * exp(|z| / b)`.
///
/// The scale condition comes from bounding this quantity: over the feasible
/// region it is maximized at `r = l`, `z = sensitivity`, it is non-decreasing
/// in `z` while `r + z <= u`, and non-increasing in `r` for `z >= 0`.
/// Both `r` and `r + z` must lie in the domain.
pub fn f_ratio(domain: &RatingDomain, b: f64, r: f64, z: f64) -> Result<f64> {
    let num = normalization_constant(domain, b, r + z)?;
    let den = normalization_constant(domain, b, r)?;
    Ok(num / den * (z.abs() / b).exp())
}

/// Clamped plain Laplace: `clamp(r + Laplace(0, b), l, u)`. Satisfies the
/// same budget as the unbounded mechanism (clamping is post-processing) but
/// piles probability mass onto the bounds.
pub fn clamp_perturb<R: Rng + ?Sized>(
    domain: &RatingDomain,
    b: f64,
    r: f64,
    rng: &mut R,
) -> Result<f64> {
    check_scale(b)?;
    if !domain.contains(r) {
        return Err(Error::Domain(format!(
            "rating {r} outside domain [{}, {}]",
            domain.lo, domain.hi
        )));
    }
    Ok(domain.clamp(r + laplace_sample(b, rng)))
}

/// Named mechanism choice for configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    Blp,
    LaplaceClamp,
    Laplace,
    Identity,
}

impl MechanismKind {
    #[must_use]
    pub fn as_str(&self) -> &'static str {
        match self {
            MechanismKind::Blp => "blp",
            MechanismKind::LaplaceClamp => "laplace-clamp",
            MechanismKind::Laplace => "laplace",
            MechanismKind::Identity => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "blp" => Ok(MechanismKind::Blp),
            "laplace-clamp" => Ok(MechanismKind::LaplaceClamp),
            "laplace" => Ok(MechanismKind::Laplace),
            "none" => Ok(MechanismKind::Identity),
            other => Err(Error::Config(format!(
                "unknown mechanism '{other}' (expected blp, laplace-clamp, laplace, or none)"
            ))),
        }
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete perturbation mechanism over one rating domain.
///
/// `Laplace` (unbounded) exists for noise-shape comparisons and audits; its
/// outputs can leave the domain, so it is rejected by [`perturb_matrix`].
#[derive(Debug, Clone, Copy)]
pub enum Mechanism {
    Blp(BlpMechanism),
    LaplaceClamp { domain: RatingDomain, params: PrivacyParams },
    Laplace { domain: RatingDomain, params: PrivacyParams },
    Identity { domain: RatingDomain },
}

impl Mechanism {
    /// Builds a mechanism of the given kind calibrated for `epsilon`
    /// (ignored for `Identity`). Laplace variants use scale `width/epsilon`.
    pub fn new(kind: MechanismKind, domain: RatingDomain, epsilon: f64) -> Result<Self> {
        Self::with_scale_factor(kind, domain, epsilon, 1.0)
    }

    /// Same as [`Self::new`] but multiplies the calibrated scale by
    /// `factor`. Factors below 1 deliberately break the guarantee; audits
    /// use this to check that miscalibration is detected.
    pub fn with_scale_factor(
        kind: MechanismKind,
        domain: RatingDomain,
        epsilon: f64,
        factor: f64,
    ) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::Privacy(format!("scale factor must be positive, got {factor}")));
        }
        match kind {
            MechanismKind::Blp => {
                let calibrated = calibrate_scale(&domain, epsilon, None)?;
                Ok(Mechanism::Blp(BlpMechanism::with_scale(
                    domain,
                    epsilon,
                    calibrated.scale * factor,
                )?))
            }
            MechanismKind::LaplaceClamp => {
                check_epsilon(epsilon)?;
                Ok(Mechanism::LaplaceClamp {
                    domain,
                    params: PrivacyParams {
                        epsilon,
                        sensitivity: domain.width(),
                        scale: domain.width() / epsilon * factor,
                    },
                })
            }
            MechanismKind::Laplace => {
                check_epsilon(epsilon)?;
                Ok(Mechanism::Laplace {
                    domain,
                    params: PrivacyParams {
                        epsilon,
                        sensitivity: domain.width(),
                        scale: domain.width() / epsilon * factor,
                    },
                })
            }
            MechanismKind::Identity => Ok(Mechanism::Identity { domain }),
        }
    }

    #[must_use]
    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Blp(_) => MechanismKind::Blp,
            Mechanism::LaplaceClamp { .. } => MechanismKind::LaplaceClamp,
            Mechanism::Laplace { .. } => MechanismKind::Laplace,
            Mechanism::Identity { .. } => MechanismKind::Identity,
        }
    }

    #[must_use]
    pub fn domain(&self) -> &RatingDomain {
        match self {
            Mechanism::Blp(m) => m.domain(),
            Mechanism::LaplaceClamp { domain, .. }
            | Mechanism::Laplace { domain, .. }
            | Mechanism::Identity { domain } => domain,
        }
    }

    #[must_use]
    pub fn params(&self) -> Option<&PrivacyParams> {
        match self {
            Mechanism::Blp(m) => Some(m.params()),
            Mechanism::LaplaceClamp { params, .. } | Mechanism::Laplace { params, .. } => {
                Some(params)
            }
            Mechanism::Identity { .. } => None,
        }
    }

    /// Mean of the mechanism's output for a true rating `r`, in closed form.
    ///
    /// Both Laplace variants pull the output mean toward the scale midpoint,
    /// which biases any aggregate computed from perturbed ratings; this map
    /// is what a consumer inverts to undo that. For resampling to the scale
    /// the mean is the truncated Laplace mean `N(r) / C(r)` with
    ///
    /// ```text
    /// N(r) = r - (e_l (l - b) + e_u (u + b)) / 2,
    /// C(r) = 1 - (e_l + e_u) / 2,
    /// e_l = exp(-(r - l)/b),  e_u = exp(-(u - r)/b),
    /// ```
    ///
    /// and for clamping it is `r + b (e_l - e_u) / 2`. Identity and the
    /// unbounded variant are mean-preserving. The scale midpoint is a fixed
    /// point of every variant, and the map is strictly increasing in `r`.
    pub fn conditional_mean(&self, r: f64) -> Result<f64> {
        let domain = self.domain();
        if !domain.contains(r) {
            return Err(Error::Domain(format!(
                "rating {r} outside domain [{}, {}]",
                domain.lo(),
                domain.hi()
            )));
        }
        let (l, u) = (domain.lo(), domain.hi());
        match self {
            Mechanism::Laplace { .. } | Mechanism::Identity { .. } => Ok(r),
            Mechanism::Blp(m) => {
                let b = m.params().scale;
                let e_l = (-(r - l) / b).exp();
                let e_u = (-(u - r) / b).exp();
                let numer = r - 0.5 * (e_l * (l - b) + e_u * (u + b));
                let mass = 1.0 - 0.5 * (e_l + e_u);
                Ok(numer / mass)
            }
            Mechanism::LaplaceClamp { params, .. } => {
                let b = params.scale;
                let e_l = (-(r - l) / b).exp();
                let e_u = (-(u - r) / b).exp();
                Ok(r + 0.5 * b * (e_l - e_u))
            }
        }
    }

    /// Perturbs one rating with this mechanism.
    pub fn perturb<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> Result<f64> {
        match self {
            Mechanism::Blp(m) => m.sample(r, rng),
            Mechanism::LaplaceClamp { domain, params } => {
                clamp_perturb(domain, params.scale, r, rng)
            }
            Mechanism::Laplace { domain, params } => {
                if !domain.contains(r) {
                    return Err(Error::Domain(format!(
                        "rating {r} outside domain [{}, {}]",
                        domain.lo(),
                        domain.hi()
                    )));
                }
                Ok(r + laplace_sample(params.scale, rng))
            }
            Mechanism::Identity { domain } => {
                if !domain.contains(r) {
                    return Err(Error::Domain(format!(
                        "rating {r} outside domain [{}, {}]",
                        domain.lo(),
                        domain.hi()
                    )));
                }
                Ok(r)
            }
        }
    }
}

/// Perturbs every entry of `matrix` independently, preserving the sparsity
/// pattern and dimensions.
///
/// Each entry gets its own random stream derived from `seed` and the entry
/// index, so the result does not depend on processing order and individual
/// entries can be re-derived in isolation. Unbounded Laplace is rejected
/// here because its outputs can leave the rating domain.
pub fn perturb_matrix(
    matrix: &SparseRatingMatrix,
    mech: &Mechanism,
    seed: u64,
) -> Result<SparseRatingMatrix> {
    if mech.kind() == MechanismKind::Laplace {
        return Err(Error::Config(
            "unbounded laplace produces off-scale ratings; use blp or laplace-clamp".into(),
        ));
    }
    const PERTURB_TAG: u64 = 0x7065_7274; // "pert"
    let mut out = Vec::with_capacity(matrix.nnz());
    for (idx, entry) in matrix.entries().iter().enumerate() {
        let mut rng = seeds::rng(seed, &[PERTURB_TAG, idx as u64]);
        let value = mech.perturb(entry.value, &mut rng)?;
        out.push((entry.user, entry.item, value));
    }
    SparseRatingMatrix::from_entries(matrix.users(), matrix.items(), *matrix.domain(), out)
}

/// Distribution of the injected noise `r* - r` over a rank grid.
///
/// With ranks `Q_1 < ... < Q_h` spaced by `c`, the noise ranges over
/// `[Q_1 - Q_h, Q_h - Q_1)`, split into `2(h-1)` half-open intervals of
/// width `c`. Mixing the exact per-rating interval masses with the rating
/// marginal gives the interval probabilities.
#[derive(Debug, Clone)]
pub struct NoiseDistributionTable {
    pub ranks: Vec<f64>,
    pub marginal: Vec<f64>,
    pub scale: f64,
    /// Half-open `[lo, hi)` noise intervals, ascending.
    pub intervals: Vec<(f64, f64)>,
    /// Probability of the noise falling in each interval; sums to 1.
    pub probs: Vec<f64>,
}

impl NoiseDistributionTable {
    /// Index of the interval containing `noise`, or `None` if it falls
    /// outside the covered range (possible only for unbounded mechanisms).
    #[must_use]
    pub fn bin_of(&self, noise: f64) -> Option<usize> {
        let lo = self.intervals[0].0;
        let step = self.intervals[0].1 - self.intervals[0].0;
        if noise < lo {
            return None;
        }
        let idx = ((noise - lo) / step).floor() as usize;
        if idx < self.intervals.len() {
            Some(idx)
        } else if noise <= self.intervals[self.intervals.len() - 1].1 {
            // The supremum itself carries no mass but belongs to the last bin
            // for histogram purposes.
            Some(self.intervals.len() - 1)
        } else {
            None
        }
    }
}

/// Exact noise distribution of the bounded mechanism for a rating marginal
/// given over the mechanism's rank grid.
///
/// The marginal must be non-negative and sum to 1 (tolerance 1e-6); the rank
/// grid must span the domain exactly.
pub fn noise_distribution(
    mech: &BlpMechanism,
    ranks: &[f64],
    marginal: &[f64],
) -> Result<NoiseDistributionTable> {
    if ranks.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 ranks, got {}", ranks.len())));
    }
    if marginal.len() != ranks.len() {
        return Err(Error::Config(format!(
            "marginal has {} entries for {} ranks",
            marginal.len(),
            ranks.len()
        )));
    }
    let h = ranks.len();
    let step = ranks[1] - ranks[0];
    if !(step > 0.0) {
        return Err(Error::Domain("ranks must be ascending".into()));
    }
    for w in ranks.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 {
            return Err(Error::Domain("ranks must be evenly spaced".into()));
        }
    }
    let domain = mech.domain();
    if (ranks[0] - domain.lo()).abs() > 1e-9 || (ranks[h - 1] - domain.hi()).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "rank grid [{}, {}] must span the domain [{}, {}]",
            ranks[0],
            ranks[h - 1],
            domain.lo(),
            domain.hi()
        )));
    }
    let total: f64 = marginal.iter().sum();
    if marginal.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "rating marginal must be non-negative and sum to 1, got sum {total}"
        )));
    }

    let bins = 2 * (h - 1);
    let noise_lo = ranks[0] - ranks[h - 1];
    let mut intervals = Vec::with_capacity(bins);
    let mut probs = vec![0.0; bins];
    for k in 0..bins {
        let a = noise_lo + k as f64 * step;
        intervals.push((a, a + step));
    }
    for (&q, &p) in ranks.iter().zip(marginal.iter()) {
        if p == 0.0 {
            continue;
        }
        // Noise interval [a, a+c) given rating q is the output interval
        // [q+a, q+a+c); interval_mass clips it to the domain.
        for (k, &(a, b)) in intervals.iter().enumerate() {
            probs[k] += p * mech.interval_mass(q, q + a, q + b)?;
        }
    }
    Ok(NoiseDistributionTable {
        ranks: ranks.to_vec(),
        marginal: marginal.to_vec(),
        scale: mech.params().scale,
        intervals,
        probs,
    })
}

/// Monte Carlo counterpart of [`noise_distribution`]: draws ratings from the
/// marginal, perturbs them, and histograms the realized noise over the same
/// intervals. Used to validate the exact table and by the CLI comparison.
pub fn empirical_noise_histogram(
    table: &NoiseDistributionTable,
    mech: &Mechanism,
    samples: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::InsufficientSamples("need at least one sample".into()));
    }
    let mut rng = seeds::rng(seed, &[0x6e6f_6973]); // "nois"
    let mut counts = vec![0u64; table.intervals.len()];
    let cumulative: Vec<f64> = table
        .marginal
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    for _ in 0..samples {
        let u: f64 = rng.gen::<f64>() * cumulative[cumulative.len() - 1];
        let pos = cumulative.partition_point(|&c| c < u);
        let r = table.ranks[pos.min(table.ranks.len() - 1)];
        let r_star = mech.perturb(r, &mut rng)?;
        if let Some(k) = table.bin_of(r_star - r) {
            counts[k] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / samples as f64).collect())
}
