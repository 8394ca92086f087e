//! Evaluation arithmetic: goodness of fit, mask agreement, detection
//! scores, dataset splitting, rank correlation and permutation importance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::density::BinaryMask;
use crate::NUM_CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ: {0} measured vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("zero variance in {0} series")]
    ZeroVariance(&'static str),
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("mask dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
}

/// Measured values `O` paired with predictions `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    measured: Vec<f64>,
    predicted: Vec<f64>,
}

impl PairedSeries {
    pub fn new(measured: Vec<f64>, predicted: Vec<f64>) -> Result<Self, MetricsError> {
        if measured.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch(measured.len(), predicted.len()));
        }
        if measured.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(Self { measured, predicted })
    }

    pub fn len(&self) -> usize {
        self.measured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measured.is_empty()
    }

    pub fn measured(&self) -> &[f64] {
        &self.measured
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.measured.iter().copied().zip(self.predicted.iter().copied())
    }

    /// Subset by index.
    pub fn select(&self, idx: &[usize]) -> Result<Self, MetricsError> {
        Self::new(idx.iter().map(|&i| self.measured[i]).collect(), idx.iter().map(|&i| self.predicted[i]).collect())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Squared Pearson correlation between measured and predicted values.
pub fn r_squared(s: &PairedSeries) -> Result<f64, MetricsError> {
    if s.len() < 2 {
        return Err(MetricsError::TooFew { needed: 2, got: s.len() });
    }
    let (mo, mt) = (mean(&s.measured), mean(&s.predicted));
    let (mut sot, mut soo, mut stt) = (0.0, 0.0, 0.0);
    for (o, t) in s.pairs() {
        let (a, b) = (o - mo, t - mt);
        sot += a * b;
        soo += a * a;
        stt += b * b;
    }
    if soo == 0.0 {
        return Err(MetricsError::ZeroVariance("measured"));
    }
    if stt == 0.0 {
        return Err(MetricsError::ZeroVariance("predicted"));
    }
    Ok((sot * sot / (soo * stt)).min(1.0))
}

pub fn rmse(s: &PairedSeries) -> f64 {
    (s.pairs().map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / s.len() as f64).sqrt()
}

pub fn mae(s: &PairedSeries) -> f64 {
    s.pairs().map(|(o, t)| (o - t).abs()).sum::<f64>() / s.len() as f64
}

/// Fraction of pixels on which the two masks disagree.
pub fn mask_mse(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64, MetricsError> {
    let (a, b) = ((gt.width(), gt.height()), (pred.width(), pred.height()));
    if a != b {
        return Err(MetricsError::DimensionMismatch(a, b));
    }
    if gt.area() == 0 {
        return Err(MetricsError::Empty);
    }
    let diff = gt.bits().iter().zip(pred.bits()).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / gt.area() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Precision, recall and F1 for one class; `None` where a ratio is undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

impl Prf {
    pub fn from_pr(precision: Option<f64>, recall: Option<f64>) -> Self {
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => f1_score(p, r),
            _ => None,
        };
        Self { precision, recall, f1 }
    }

    pub fn from_counts(c: &ClassCounts) -> Self {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        Self::from_pr(
            ratio(c.true_positives, c.true_positives + c.false_positives),
            ratio(c.true_positives, c.true_positives + c.false_negatives),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrfReport {
    pub per_class: Vec<Prf>,
    /// Unweighted mean over the classes where each quantity is defined.
    pub average: Prf,
    pub warnings: Vec<String>,
}

pub fn macro_average(per_class: &[Prf]) -> (Prf, Vec<String>) {
    let mut warnings = Vec::new();
    let mut avg = |name: &str, get: fn(&Prf) -> Option<f64>| {
        let defined: Vec<f64> = per_class.iter().filter_map(get).collect();
        let missing: Vec<usize> =
            per_class.iter().enumerate().filter(|(_, p)| get(p).is_none()).map(|(i, _)| i).collect();
        if !missing.is_empty() {
            warnings.push(format!("{name} undefined for classes {missing:?}; excluded from average"));
        }
        (!defined.is_empty()).then(|| mean(&defined))
    };
    let precision = avg("precision", |p| p.precision);
    let recall = avg("recall", |p| p.recall);
    let f1 = avg("f1", |p| p.f1);
    (Prf { precision, recall, f1 }, warnings)
}

pub fn precision_recall_f1(counts: &[ClassCounts]) -> PrfReport {
    let per_class: Vec<Prf> = counts.iter().map(Prf::from_counts).collect();
    let (average, warnings) = macro_average(&per_class);
    PrfReport { per_class, average, warnings }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub const TRAIN_FRACTION: f64 = 0.70;
pub const VALIDATION_END: f64 = 0.85;

/// Seeded shuffle of `0..n` cut at ⌊0.70 n⌋ and ⌊0.85 n⌋.
pub fn split_dataset(n: usize, seed: u64) -> Result<SplitIndices, MetricsError> {
    if n < 3 {
        return Err(MetricsError::TooFew { needed: 3, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let a = (TRAIN_FRACTION * n as f64).floor() as usize;
    let b = (VALIDATION_END * n as f64).floor() as usize;
    Ok(SplitIndices { train: idx[..a].to_vec(), validation: idx[a..b].to_vec(), test: idx[b..].to_vec() })
}

/// Kendall's tau-b; `None` with fewer than two items or when either
/// ranking is fully tied.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = (a[i] - a[j]).partial_cmp(&0.0)? as i64;
            let db = (b[i] - b[j]).partial_cmp(&0.0)? as i64;
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + ties_a) as f64;
    let n2 = (concordant + discordant + ties_b) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / (n1 * n2).sqrt())
}

/// Permutation importance of each of the nine inputs: mean absolute change
/// of the model output when one column is shuffled across samples,
/// normalized to sum to one (all zeros if the model ignores every input).
pub fn variable_importance<F>(model: F, samples: &[[f64; NUM_CLASSES]], seed: u64) -> [f64; NUM_CLASSES]
where
    F: Fn(&[f64; NUM_CLASSES]) -> f64,
{
    if samples.is_empty() {
        return [0.0; NUM_CLASSES];
    }
    let baseline: Vec<f64> = samples.iter().map(&model).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = [0.0; NUM_CLASSES];
    for (k, slot) in raw.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let total: f64 = samples
            .iter()
            .zip(&order)
            .zip(&baseline)
            .map(|((s, &j), &base)| {
                let mut probe = *s;
                probe[k] = samples[j][k];
                let delta = (model(&probe) - base).abs();
                if delta.is_finite() {
                    delta
                } else {
                    0.0
                }
            })
            .sum();
        *slot = total / samples.len() as f64;
    }
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 {
        raw.map(|x| x / sum)
    } else {
        raw
    }
}

/// Indices sorted by descending importance (ties keep index order).
pub fn importance_ranking(importance: &[f64; NUM_CLASSES]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..NUM_CLASSES).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]));
    idx
}
