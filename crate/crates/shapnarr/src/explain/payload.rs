//! The structured attribution input handed to the language layer: one
//! `(feature name, feature value, phi)` tuple per feature, ordered by
//! attribution magnitude.

use super::ExplainError;
use crate::model::FeatureVector;
use crate::shap::ShapResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEntry {
    pub feature_name: String,
    /// `None` when the instance value was missing.
    pub feature_value: Option<f64>,
    pub phi: f64,
}

/// Attribution tuples sorted by `|phi|` descending (ties by original
/// feature index ascending), plus the prediction they belong to. Holds
/// every feature; truncation to a top-k happens at prompt rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionPayload {
    pub entries: Vec<AttributionEntry>,
    pub base_value: f64,
    pub predicted_margin: f64,
    pub predicted_probability: Option<f64>,
    pub prediction_label: Option<String>,
}

impl AttributionPayload {
    /// The `min(top_k, n)` highest-magnitude entries.
    pub fn top_entries(&self, top_k: usize) -> &[AttributionEntry] {
        &self.entries[..top_k.min(self.entries.len())]
    }
}

/// Zip names, instance values, and attributions into the ordered payload.
pub fn build_attribution_payload(
    shap: &ShapResult,
    feature_names: &[String],
    x: &FeatureVector,
    probability: Option<f64>,
    label: Option<String>,
) -> Result<AttributionPayload, ExplainError> {
    let n = shap.phi.len();
    if feature_names.len() != n {
        return Err(ExplainError::Dimension {
            what: "feature names",
            expected: n,
            actual: feature_names.len(),
        });
    }
    if x.len() != n {
        return Err(ExplainError::Dimension {
            what: "feature vector",
            expected: n,
            actual: x.len(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        shap.phi[b]
            .abs()
            .total_cmp(&shap.phi[a].abs())
            .then(a.cmp(&b))
    });

    let entries = order
        .into_iter()
        .map(|i| AttributionEntry {
            feature_name: feature_names[i].clone(),
            feature_value: x.get(i),
            phi: shap.phi[i],
        })
        .collect();

    Ok(AttributionPayload {
        entries,
        base_value: shap.base_value,
        predicted_margin: shap.predicted_margin,
        predicted_probability: probability,
        prediction_label: label,
    })
}
