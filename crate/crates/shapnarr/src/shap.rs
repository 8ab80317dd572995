//! Shapley attribution of a single prediction on the margin scale.
//!
//! The value function is interventional: `f(S)` is the mean margin over a
//! background set with the coalition's coordinates pinned to the explained
//! instance and the rest taken from each background row. On top of it sit
//! two attribution routes: an exact pass over all `2^n` coalitions with each
//! `f(S)` evaluated exactly once, and a seeded permutation estimator that
//! averages marginal contributions over feature orderings. The estimator
//! switches to exhaustive enumeration of all `n!` orderings whenever that is
//! no more work than the requested sample count.
//!
//! Determinism contract: identical inputs (and seed) produce bit-identical
//! attribution vectors for any number of worker threads. Permutations are
//! drawn from the seed in a fixed sequence and processed in fixed-size
//! chunks; chunk members are evaluated independently (possibly in parallel)
//! and reduced in index order.

use crate::model::{FeatureVector, ModelError, TreeEnsemble};
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Refuse exact enumeration above this many features unless the caller
/// raises the limit explicitly.
pub const DEFAULT_EXACT_LIMIT: usize = 20;

/// Permutations are processed in chunks of this fixed size; the chunk
/// geometry is part of the determinism contract, so it must not depend on
/// the worker count.
const PERM_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error("background set is empty")]
    EmptyBackground,
    #[error("{what} has length {actual}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error(
        "exact attribution over {n_features} features exceeds the limit of {limit} \
         (2^n coalitions); use the permutation estimator instead"
    )]
    TooManyFeatures { n_features: usize, limit: usize },
    #[error("n_permutations must be at least 1")]
    ZeroPermutations,
    #[error("feature index {index} out of range for {n_features} features")]
    FeatureIndexOutOfRange { index: usize, n_features: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Reference rows that supply values for out-of-coalition features.
/// Non-empty, with a uniform feature count.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<FeatureVector>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<FeatureVector>) -> Result<Self, ShapError> {
        let first = rows.first().ok_or(ShapError::EmptyBackground)?;
        let width = first.len();
        for row in &rows {
            if row.len() != width {
                return Err(ShapError::Dimension {
                    what: "background row",
                    expected: width,
                    actual: row.len(),
                });
            }
        }
        Ok(BackgroundSet { rows })
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }
}

/// A subset of feature indices treated as "present". The empty set and the
/// full set are both legal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coalition {
    mask: Vec<bool>,
    count: usize,
}

impl Coalition {
    pub fn empty(n_features: usize) -> Self {
        Coalition {
            mask: vec![false; n_features],
            count: 0,
        }
    }

    pub fn full(n_features: usize) -> Self {
        Coalition {
            mask: vec![true; n_features],
            count: n_features,
        }
    }

    pub fn from_indices(n_features: usize, indices: &[usize]) -> Result<Self, ShapError> {
        let mut coalition = Coalition::empty(n_features);
        for &index in indices {
            if index >= n_features {
                return Err(ShapError::FeatureIndexOutOfRange { index, n_features });
            }
            coalition.insert(index);
        }
        Ok(coalition)
    }

    pub fn insert(&mut self, index: usize) {
        if !self.mask[index] {
            self.mask[index] = true;
            self.count += 1;
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_full(&self) -> bool {
        self.count == self.mask.len()
    }

    pub fn n_features(&self) -> usize {
        self.mask.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMethod {
    Exact,
    Permutation,
}

/// Per-feature attributions for one prediction, in margin units.
/// `base_value` is `f(∅)`, the mean background margin; for the exact method
/// `base_value + Σ phi` reproduces `predicted_margin` up to floating-point
/// roundoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapResult {
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub method: ShapMethod,
    /// Permutations actually processed; 0 for the exact method.
    pub n_permutations: u64,
    /// RNG seed; 0 for the exact method.
    pub seed: u64,
    pub predicted_margin: f64,
}

/// Sampling diagnostics for the permutation estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationStats {
    /// Standard error of each phi estimate, from the per-permutation sample
    /// variance. Infinite when fewer than two permutations were processed.
    pub std_errors: Vec<f64>,
    pub permutations_used: u64,
}

fn check_dimensions(
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
) -> Result<(), ShapError> {
    let n = model.n_features();
    if x.len() != n {
        return Err(ShapError::Dimension {
            what: "instance",
            expected: n,
            actual: x.len(),
        });
    }
    if background.n_features() != n {
        return Err(ShapError::Dimension {
            what: "background row",
            expected: n,
            actual: background.n_features(),
        });
    }
    Ok(())
}

/// Interventional value function: the mean margin over the background set
/// with coalition coordinates taken from `x` and the rest from each
/// background row. `f(N)` is exactly `predict_margin(model, x)` and `f(∅)`
/// is the mean background margin.
pub fn value_function(
    model: &TreeEnsemble,
    x: &FeatureVector,
    s: &Coalition,
    background: &BackgroundSet,
) -> Result<f64, ShapError> {
    check_dimensions(model, x, background)?;
    let n = model.n_features();
    if s.n_features() != n {
        return Err(ShapError::Dimension {
            what: "coalition",
            expected: n,
            actual: s.n_features(),
        });
    }
    if s.is_full() {
        // Every composite row equals x; skip the averaging so the identity
        // f(N) = predict_margin holds exactly in floating point.
        return Ok(model.predict_margin(x)?);
    }
    let mut composite = FeatureVector(vec![None; n]);
    let mut sum = 0.0;
    for row in background.rows() {
        for j in 0..n {
            composite.0[j] = if s.contains(j) { x.get(j) } else { row.get(j) };
        }
        sum += model.predict_margin(&composite)?;
    }
    Ok(sum / background.len() as f64)
}

/// Same value function, driven by a bitmask. Used by the exact pass where
/// coalitions are enumerated as integers. Unlike [`value_function`], the
/// full coalition is averaged like any other: every mask then goes through
/// one identical summation sequence, so two coalitions that route every
/// background row to the same leaves produce bit-identical values and
/// unused features cancel to exactly zero.
fn value_function_masked(
    model: &TreeEnsemble,
    x: &FeatureVector,
    mask: u64,
    background: &BackgroundSet,
) -> Result<f64, ShapError> {
    let n = model.n_features();
    let mut composite = FeatureVector(vec![None; n]);
    let mut sum = 0.0;
    for row in background.rows() {
        for j in 0..n {
            composite.0[j] = if mask & (1 << j) != 0 {
                x.get(j)
            } else {
                row.get(j)
            };
        }
        sum += model.predict_margin(&composite)?;
    }
    Ok(sum / background.len() as f64)
}

/// Shapley coalition weight `|S|! (n-|S|-1)! / n!`, computed through the
/// identity `1 / (n * C(n-1, |S|))` so nothing overflows for any feature
/// count the exact pass can reach.
fn shapley_weight(n: usize, s: usize) -> f64 {
    1.0 / (n as f64 * binomial(n - 1, s))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Exact Shapley attribution with [`DEFAULT_EXACT_LIMIT`].
pub fn exact_shap(
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
) -> Result<ShapResult, ShapError> {
    exact_shap_with_limit(model, x, background, DEFAULT_EXACT_LIMIT)
}

/// Exact Shapley attribution: every coalition value `f(S)` is evaluated
/// once, memoized by bitmask, and combined with the closed-form weights.
/// Refuses models with more than `limit` features.
pub fn exact_shap_with_limit(
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
    limit: usize,
) -> Result<ShapResult, ShapError> {
    check_dimensions(model, x, background)?;
    let n = model.n_features();
    if n > limit || n >= 64 {
        return Err(ShapError::TooManyFeatures {
            n_features: n,
            limit: limit.min(63),
        });
    }

    let n_masks: u64 = 1 << n;
    // One evaluation per distinct coalition. Entries are independent, so a
    // parallel ordered collect cannot perturb the result.
    let values = (0..n_masks)
        .into_par_iter()
        .map(|mask| value_function_masked(model, x, mask, background))
        .collect::<Result<Vec<f64>, ShapError>>()?;

    let weights: Vec<f64> = (0..n).map(|s| shapley_weight(n, s)).collect();
    let mut phi = vec![0.0; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for mask in 0..n_masks {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                *phi_i += weights[s] * (values[(mask | bit) as usize] - values[mask as usize]);
            }
        }
    }

    Ok(ShapResult {
        base_value: values[0],
        phi,
        method: ShapMethod::Exact,
        n_permutations: 0,
        seed: 0,
        predicted_margin: model.predict_margin(x)?,
    })
}

fn factorial_u64(n: usize) -> Option<u64> {
    (2..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

/// Marginal contribution of every feature along one permutation: feature `i`
/// receives `f(pred(i) ∪ {i}) - f(pred(i))` where `pred(i)` holds the
/// features preceding it in the ordering.
fn permutation_contributions(
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
    base_value: f64,
    perm: &[usize],
) -> Result<Vec<f64>, ShapError> {
    let n = perm.len();
    let mut coalition = Coalition::empty(n);
    let mut previous = base_value;
    let mut contributions = vec![0.0; n];
    for &feature in perm {
        coalition.insert(feature);
        let current = value_function(model, x, &coalition, background)?;
        contributions[feature] = current - previous;
        previous = current;
    }
    Ok(contributions)
}

/// Permutation-sampling Shapley estimator; see
/// [`permutation_shap_with_stats`] for the variant that also reports
/// standard errors.
pub fn permutation_shap(
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
    n_permutations: u64,
    seed: u64,
) -> Result<ShapResult, ShapError> {
    permutation_shap_with_stats(model, x, background, n_permutations, seed).map(|(r, _)| r)
}

/// Permutation-sampling Shapley estimator.
///
/// When `n! <= n_permutations` every ordering is enumerated exactly once
/// (exhaustive mode, equal to the exact attribution up to summation order);
/// otherwise `n_permutations` orderings are drawn from a ChaCha RNG seeded
/// with `seed`. Same inputs and seed give bit-identical output for any
/// worker count.
pub fn permutation_shap_with_stats(
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
    n_permutations: u64,
    seed: u64,
) -> Result<(ShapResult, PermutationStats), ShapError> {
    if n_permutations == 0 {
        return Err(ShapError::ZeroPermutations);
    }
    check_dimensions(model, x, background)?;
    let n = model.n_features();
    let base_value = value_function(model, x, &Coalition::empty(n), background)?;

    let exhaustive = factorial_u64(n).is_some_and(|f| f <= n_permutations);
    let (sums, sum_squares, used) = if exhaustive {
        let perms = (0..n).permutations(n);
        accumulate_permutations(model, x, background, base_value, perms)?
    } else {
        // The permutation list is a pure function of the seed: a single RNG
        // drawn in permutation order, materialized chunk by chunk.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let identity: Vec<usize> = (0..n).collect();
        let perms = (0..n_permutations).map(|_| {
            let mut perm = identity.clone();
            perm.shuffle(&mut rng);
            perm
        });
        accumulate_permutations(model, x, background, base_value, perms)?
    };

    let phi: Vec<f64> = sums.iter().map(|s| s / used as f64).collect();
    let std_errors = sums
        .iter()
        .zip(&sum_squares)
        .map(|(&sum, &sq)| {
            if used < 2 {
                f64::INFINITY
            } else {
                let m = used as f64;
                let variance = ((sq - sum * sum / m) / (m - 1.0)).max(0.0);
                (variance / m).sqrt()
            }
        })
        .collect();

    Ok((
        ShapResult {
            base_value,
            phi,
            method: ShapMethod::Permutation,
            n_permutations: used,
            seed,
            predicted_margin: model.predict_margin(x)?,
        },
        PermutationStats {
            std_errors,
            permutations_used: used,
        },
    ))
}

/// Fold permutations into per-feature contribution sums and sums of
/// squares. Fixed-size chunks are evaluated member-wise (in parallel when a
/// rayon pool has threads to spare) and reduced strictly in index order, so
/// the floating-point result does not depend on the worker count.
fn accumulate_permutations<I>(
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
    base_value: f64,
    perms: I,
) -> Result<(Vec<f64>, Vec<f64>, u64), ShapError>
where
    I: Iterator<Item = Vec<usize>>,
{
    let n = model.n_features();
    let mut sums = vec![0.0; n];
    let mut sum_squares = vec![0.0; n];
    let mut used = 0u64;

    let mut perms = perms.peekable();
    let mut chunk: Vec<Vec<usize>> = Vec::with_capacity(PERM_CHUNK);
    while perms.peek().is_some() {
        chunk.clear();
        chunk.extend(perms.by_ref().take(PERM_CHUNK));
        let contributions = chunk
            .par_iter()
            .map(|perm| permutation_contributions(model, x, background, base_value, perm))
            .collect::<Result<Vec<_>, ShapError>>()?;
        for contribution in &contributions {
            for i in 0..n {
                sums[i] += contribution[i];
                sum_squares[i] += contribution[i] * contribution[i];
            }
            used += 1;
        }
    }
    Ok((sums, sum_squares, used))
}
