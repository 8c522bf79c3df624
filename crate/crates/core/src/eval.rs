//! Prediction quality metrics and cross-validation folds.
//!
//! Rating accuracy uses RMSE over held-out cells. Ranking quality uses a
//! confusion matrix built per user from the top-k predictions among that
//! user's held-out items: an item is relevant when its true rating clears
//! the scale's relevance threshold, and recommended when it lands in the
//! top-k by predicted score. Counts are micro-aggregated across users before
//! computing precision, recall, and F-score.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mechanism::RatingDomain;
use crate::seeds;

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Config(format!(
            "prediction/truth length mismatch: {} vs {}",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset("rmse over zero pairs".into()));
    }
    let mut sum = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        if !p.is_finite() || !t.is_finite() {
            return Err(Error::Numerical(format!("non-finite value in rmse input: ({p}, {t})")));
        }
        sum += (p - t) * (p - t);
    }
    Ok((sum / predictions.len() as f64).sqrt())
}

/// Confusion counts over recommended (positive) vs relevant items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    #[must_use]
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// tp / (tp + fp); 0 when nothing was recommended (see
    /// [`Self::precision_defined`]).
    #[must_use]
    pub fn precision(&self) -> f64 {
        let denom = self.true_pos + self.false_pos;
        if denom == 0 {
            0.0
        } else {
            self.true_pos as f64 / denom as f64
        }
    }

    #[must_use]
    pub fn precision_defined(&self) -> bool {
        self.true_pos + self.false_pos > 0
    }

    /// tp / (tp + fn); 0 when nothing was relevant (see
    /// [`Self::recall_defined`]).
    #[must_use]
    pub fn recall(&self) -> f64 {
        let denom = self.true_pos + self.false_neg;
        if denom == 0 {
            0.0
        } else {
            self.true_pos as f64 / denom as f64
        }
    }

    #[must_use]
    pub fn recall_defined(&self) -> bool {
        self.true_pos + self.false_neg > 0
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_pos += rhs.true_pos;
        self.false_pos += rhs.false_pos;
        self.false_neg += rhs.false_neg;
        self.true_neg += rhs.true_neg;
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
#[must_use]
pub fn f_score(counts: &ConfusionCounts) -> f64 {
    let p = counts.precision();
    let r = counts.recall();
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Builds one user's confusion counts from parallel slices of true and
/// predicted scores over that user's held-out items.
///
/// The top `k` items by predicted score are the recommendations; ties break
/// toward the lower index so results do not depend on sort internals. Users
/// with fewer than `k` held-out items use all of them.
pub fn top_k_confusion(
    actual: &[f64],
    predicted: &[f64],
    k: usize,
    relevance_threshold: f64,
) -> Result<ConfusionCounts> {
    if actual.len() != predicted.len() {
        return Err(Error::Config(format!(
            "actual/predicted length mismatch: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    if k == 0 {
        return Err(Error::Config("top-k with k = 0".into()));
    }
    let n = actual.len();
    let take = k.min(n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        predicted[b].partial_cmp(&predicted[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });

    let mut recommended = vec![false; n];
    for &idx in order.iter().take(take) {
        recommended[idx] = true;
    }

    let mut counts = ConfusionCounts::default();
    for i in 0..n {
        let relevant = actual[i] >= relevance_threshold;
        match (recommended[i], relevant) {
            (true, true) => counts.true_pos += 1,
            (true, false) => counts.false_pos += 1,
            (false, true) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
    }
    Ok(counts)
}

/// Relevance threshold conventions per rating scale: 4 on the 0.5 to 5
/// scale, 7 on 1 to 10, 4 on -10 to 10. Unknown scales default to the upper
/// quarter of the range.
#[must_use]
pub fn default_relevance_threshold(domain: &RatingDomain) -> f64 {
    let known: [(f64, f64, f64); 3] =
        [(0.5, 5.0, 4.0), (1.0, 10.0, 7.0), (-10.0, 10.0, 4.0)];
    for (lo, hi, threshold) in known {
        if (domain.lo() - lo).abs() < 1e-9 && (domain.hi() - hi).abs() < 1e-9 {
            return threshold;
        }
    }
    domain.lo() + 0.75 * domain.width()
}

/// Assignment of entry indices to cross-validation folds.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    folds: usize,
    seed: u64,
    assignment: Vec<u32>,
}

impl FoldPlan {
    #[inline]
    #[must_use]
    pub fn folds(&self) -> usize {
        self.folds
    }

    #[inline]
    #[must_use]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    #[must_use]
    pub fn fold_of(&self, entry: usize) -> usize {
        self.assignment[entry] as usize
    }

    #[must_use]
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] as usize == fold).collect()
    }

    #[must_use]
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] as usize != fold).collect()
    }
}

/// Random balanced partition of `entries` indices into `folds` folds
/// (sizes differ by at most one). Deterministic in `seed`.
pub fn make_folds(entries: usize, folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > entries {
        return Err(Error::Config(format!("{folds} folds for only {entries} entries")));
    }
    let mut order: Vec<usize> = (0..entries).collect();
    let mut rng = seeds::rng(seed, &[0x666f_6c64]); // "fold"
    order.shuffle(&mut rng);
    let mut assignment = vec![0u32; entries];
    for (pos, &entry) in order.iter().enumerate() {
        assignment[entry] = (pos % folds) as u32;
    }
    Ok(FoldPlan { folds, seed, assignment })
}
