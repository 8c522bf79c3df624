//! Empirical privacy audit.
//!
//! An epsilon-locally-private mechanism must satisfy, for every pair of
//! inputs `r, r'` and every output set `Y`,
//!
//! ```text
//! Pr[M(r) in Y] <= exp(epsilon) * Pr[M(r') in Y]
//! ```
//!
//! The audit estimates the worst log-ratio over input pairs drawn from the
//! domain's rank grid and over a fixed partition of the output range into
//! equal bins, from independent sample histograms. Because probabilities over
//! bins average the density, the measured budget of a correctly calibrated
//! mechanism sits slightly below epsilon (for the extreme bins of a bounded
//! Laplace it is exactly `epsilon - w/b`, `w` the bin width); a miscalibrated
//! scale shows up as a proportionally inflated budget.

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, MechanismKind};
use crate::seeds;

#[derive(Debug, Clone, Copy)]
pub struct AuditConfig {
    /// Claimed privacy budget to test against.
    pub epsilon: f64,
    /// Samples drawn per distinct input rating.
    pub samples_per_input: u64,
    /// Number of equal-width output bins over the rating domain.
    pub bins: usize,
    /// Tolerated excess over epsilon before declaring failure.
    pub slack: f64,
    /// Normal quantile for the per-ratio confidence bound (2.576 = 99%).
    pub z: f64,
    /// Minimum observed count per in-range bin; below this the estimate is
    /// too noisy and the audit refuses to judge.
    pub min_bin_count: u64,
    /// Spacing of the input rank grid.
    pub rank_step: f64,
}

impl AuditConfig {
    #[must_use]
    pub fn new(epsilon: f64, rank_step: f64) -> Self {
        Self {
            epsilon,
            samples_per_input: 1_000_000,
            bins: 20,
            slack: 0.05,
            z: 2.576,
            min_bin_count: 50,
            rank_step,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub mechanism: MechanismKind,
    pub epsilon_claimed: f64,
    pub slack: f64,
    /// Point estimate of the worst-case log probability ratio.
    pub measured_budget: f64,
    /// Upper confidence bound on the worst-case log ratio; the audit passes
    /// iff this does not exceed `epsilon_claimed + slack`.
    pub upper_bound: f64,
    pub pass: bool,
    /// Input pair realizing the measured budget.
    pub worst_pair: (f64, f64),
    /// Output bin realizing the measured budget.
    pub worst_bin: (f64, f64),
    /// Largest per-input probability mass on the two boundary bins; clamped
    /// mechanisms concentrate atoms there.
    pub boundary_mass: f64,
    /// Largest per-input fraction of samples outside the domain (nonzero
    /// only for unbounded mechanisms).
    pub out_of_range: f64,
    pub inputs: Vec<f64>,
    pub samples_per_input: u64,
    pub bins: usize,
}

/// Samples the mechanism on every rank-grid input and checks the indistinguishability
/// ratio over all input pairs and output bins.
///
/// Identity "mechanisms" are rejected: they provide no privacy and every
/// off-diagonal ratio is infinite.
pub fn ldp_audit(mech: &Mechanism, cfg: &AuditConfig, seed: u64) -> Result<AuditReport> {
    if mech.kind() == MechanismKind::Identity {
        return Err(Error::Config("cannot audit the identity mechanism".into()));
    }
    if cfg.bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {}", cfg.bins)));
    }
    if cfg.samples_per_input == 0 {
        return Err(Error::InsufficientSamples("samples_per_input is 0".into()));
    }
    if !(cfg.slack >= 0.0) {
        return Err(Error::Config(format!("slack must be non-negative, got {}", cfg.slack)));
    }

    let domain = *mech.domain();
    let inputs = domain.ranks(cfg.rank_step)?;
    let width = domain.width() / cfg.bins as f64;
    let n = cfg.samples_per_input;

    // Histogram each input with its own derived stream.
    let mut counts = vec![vec![0u64; cfg.bins]; inputs.len()];
    let mut out_of_range_max = 0.0f64;
    for (i, &r) in inputs.iter().enumerate() {
        let mut rng = seeds::rng(seed, &[0x6175_6469, i as u64]); // "audi"
        let mut outside = 0u64;
        for _ in 0..n {
            let v = mech.perturb(r, &mut rng)?;
            if !domain.contains(v) {
                outside += 1;
                continue;
            }
            let mut bin = ((v - domain.lo()) / width) as usize;
            if bin >= cfg.bins {
                bin = cfg.bins - 1; // v == hi lands in the last bin
            }
            counts[i][bin] += 1;
        }
        out_of_range_max = out_of_range_max.max(outside as f64 / n as f64);
    }

    // The ratio estimate is only valid when every bin is well populated.
    for (i, hist) in counts.iter().enumerate() {
        if let Some(min) = hist.iter().min() {
            if *min < cfg.min_bin_count {
                return Err(Error::InsufficientSamples(format!(
                    "input {} has a bin with {} samples (< {}); increase samples_per_input \
                     or reduce bins",
                    inputs[i], min, cfg.min_bin_count
                )));
            }
        }
    }

    let mut measured = f64::NEG_INFINITY;
    let mut ucb = f64::NEG_INFINITY;
    let mut worst_pair = (inputs[0], inputs[0]);
    let mut worst_bin = 0usize;
    for i in 0..inputs.len() {
        for j in (i + 1)..inputs.len() {
            for k in 0..cfg.bins {
                let ci = counts[i][k] as f64;
                let cj = counts[j][k] as f64;
                let lr = (ci / cj).ln().abs();
                // Delta-method variance of a log count ratio.
                let se = (1.0 / ci + 1.0 / cj - 2.0 / n as f64).max(0.0).sqrt();
                let bound = lr + cfg.z * se;
                if lr > measured {
                    measured = lr;
                    worst_pair = if ci >= cj { (inputs[i], inputs[j]) } else { (inputs[j], inputs[i]) };
                    worst_bin = k;
                }
                ucb = ucb.max(bound);
            }
        }
    }

    let boundary_mass = counts
        .iter()
        .map(|hist| (hist[0] + hist[cfg.bins - 1]) as f64 / n as f64)
        .fold(0.0f64, f64::max);

    let bin_lo = domain.lo() + worst_bin as f64 * width;
    Ok(AuditReport {
        mechanism: mech.kind(),
        epsilon_claimed: cfg.epsilon,
        slack: cfg.slack,
        measured_budget: measured,
        upper_bound: ucb,
        pass: ucb <= cfg.epsilon + cfg.slack,
        worst_pair,
        worst_bin: (bin_lo, bin_lo + width),
        boundary_mass,
        out_of_range: out_of_range_max,
        inputs,
        samples_per_input: n,
        bins: cfg.bins,
    })
}
