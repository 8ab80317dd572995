//! Report assembly. JSON is the source of truth; the text format renders
//! the same values (both use Rust's shortest round-trip float formatting,
//! so the digits agree byte for byte).

use serde::Serialize;
use shapnarr::{ExplanationResult, GenerationParams, ShapMethod, ShapResult, VerificationReport};
use std::io::Write;

#[derive(Debug, Serialize)]
pub struct PredictionOut {
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ShapValueOut {
    pub feature: String,
    pub value: Option<f64>,
    pub phi: f64,
}

#[derive(Debug, Serialize)]
pub struct ShapOut {
    pub base_value: f64,
    pub values: Vec<ShapValueOut>,
}

#[derive(Debug, Serialize)]
pub struct ExplanationOut {
    pub text: String,
    pub backend: String,
    pub params: GenerationParams,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<ShapMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_permutations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<GenerationParams>,
}

/// One command's full result. Sections absent from the command are omitted
/// from the JSON rather than emitted as null.
#[derive(Debug, Serialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shap: Option<ShapOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation: Option<ExplanationOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
    pub provenance: Provenance,
}

impl Report {
    pub fn shap_section(
        shap: &ShapResult,
        names: &[String],
        x: &shapnarr::FeatureVector,
    ) -> ShapOut {
        ShapOut {
            base_value: shap.base_value,
            values: names
                .iter()
                .enumerate()
                .map(|(i, name)| ShapValueOut {
                    feature: name.clone(),
                    value: x.get(i),
                    phi: shap.phi[i],
                })
                .collect(),
        }
    }

    pub fn explanation_section(result: &ExplanationResult) -> ExplanationOut {
        ExplanationOut {
            text: result.final_text.clone(),
            backend: result.backend_id.clone(),
            params: result.params.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn write_text<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        if let Some(p) = &self.prediction {
            writeln!(out, "prediction:")?;
            writeln!(out, "  margin: {}", p.margin)?;
            if let Some(prob) = p.probability {
                writeln!(out, "  probability: {prob}")?;
            }
        }
        if let Some(s) = &self.shap {
            writeln!(out, "shap:")?;
            writeln!(out, "  base_value: {}", s.base_value)?;
            for v in &s.values {
                let value = match v.value {
                    Some(x) => x.to_string(),
                    None => "missing".to_string(),
                };
                writeln!(out, "  {} = {} -> phi {}", v.feature, value, v.phi)?;
            }
        }
        if let Some(e) = &self.explanation {
            writeln!(out, "explanation ({}):", e.backend)?;
            for line in e.text.lines() {
                writeln!(out, "  {line}")?;
            }
        }
        if let Some(v) = &self.verification {
            writeln!(out, "verification:")?;
            writeln!(out, "  coverage: {}", v.coverage)?;
            for ((feature, mentioned), direction) in v
                .features
                .iter()
                .zip(&v.mentioned)
                .zip(&v.directional_consistency)
            {
                writeln!(
                    out,
                    "  {} mentioned={} direction={}",
                    feature,
                    mentioned,
                    match direction {
                        shapnarr::Direction::Consistent => "consistent",
                        shapnarr::Direction::Contradicted => "contradicted",
                        shapnarr::Direction::Indeterminate => "indeterminate",
                    }
                )?;
            }
        }
        let p = &self.provenance;
        writeln!(out, "provenance:")?;
        writeln!(out, "  command: {}", p.command)?;
        if let Some(row) = p.row_index {
            writeln!(out, "  row_index: {row}")?;
        }
        if let Some(method) = p.method {
            writeln!(
                out,
                "  method: {}",
                match method {
                    ShapMethod::Exact => "exact",
                    ShapMethod::Permutation => "permutation",
                }
            )?;
        }
        if let Some(seed) = p.seed {
            writeln!(out, "  seed: {seed}")?;
        }
        if let Some(n) = p.n_permutations {
            writeln!(out, "  n_permutations: {n}")?;
        }
        if let Some(k) = p.background_k {
            writeln!(out, "  background_k: {k}")?;
        }
        if let Some(id) = &p.backend_id {
            writeln!(out, "  backend: {id}")?;
        }
        Ok(())
    }
}
