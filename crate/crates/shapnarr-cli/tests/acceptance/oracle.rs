//! Independent brute-force Shapley attribution used as the oracle.
//!
//! Deliberately shares no code path with the library's attribution: subsets
//! are enumerated per feature, the marginalization is recomputed literally,
//! and the coalition weights come from explicit factorials. Only the model's
//! `predict_margin` is shared, and that is pinned separately against
//! margins produced by an external evaluator.

use shapnarr::{FeatureVector, TreeEnsemble};

/// Mean margin over the background with coalition coordinates from `x`.
fn value(model: &TreeEnsemble, x: &FeatureVector, members: &[bool], rows: &[FeatureVector]) -> f64 {
    let n = x.len();
    let mut sum = 0.0;
    for row in rows {
        let composite = FeatureVector(
            (0..n)
                .map(|j| if members[j] { x.get(j) } else { row.get(j) })
                .collect(),
        );
        sum += model.predict_margin(&composite).unwrap();
    }
    sum / rows.len() as f64
}

/// Brute-force weighted subset enumeration: for each feature i, sum
/// |S|! (n-|S|-1)! / n! * [f(S ∪ {i}) - f(S)] over all S not containing i.
/// Returns (base value, phi).
pub fn exact_shap(
    model: &TreeEnsemble,
    x: &FeatureVector,
    rows: &[FeatureVector],
) -> (f64, Vec<f64>) {
    let n = x.len();
    assert!(n <= 16, "oracle is exponential; keep models small");
    let factorial: Vec<f64> = {
        let mut f = vec![1.0f64; n + 1];
        for k in 1..=n {
            f[k] = f[k - 1] * k as f64;
        }
        f
    };

    let mut phi = vec![0.0; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        for mask in 0..(1u32 << n) {
            if mask & (1 << i) != 0 {
                continue;
            }
            let members: Vec<bool> = (0..n).map(|j| mask & (1 << j) != 0).collect();
            let mut with_i = members.clone();
            with_i[i] = true;
            let s = mask.count_ones() as usize;
            let weight = factorial[s] * factorial[n - s - 1] / factorial[n];
            *phi_i += weight * (value(model, x, &with_i, rows) - value(model, x, &members, rows));
        }
    }

    let base = value(model, x, &vec![false; n], rows);
    (base, phi)
}
