//! Browser demo. Three operations are exported to JavaScript, each taking
//! and returning plain strings (IR text in, JSON out):
//!
//! - `analyze`: gate decision, click sites, features and both slices
//! - `generate_sample`: one synthetic package of a given kind
//! - `score`: verdicts under the bundled reference model or a supplied one

use clickslice_core::corpus::{generate_sample as gen_sample, NoiseConfig, SampleKind, Strategy};
use clickslice_core::detector::{aggregate_app_verdict, Label, VaeModel};
use clickslice_core::features::FeatureVector;
use clickslice_core::gate::GateDecision;
use clickslice_core::pipeline::{analyze_source, AnalysisConfig};
use clickslice_core::slicer::ddg_to_text;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Calibrated model trained on the seed-7 synthetic corpus.
pub const REFERENCE_MODEL: &str = include_str!("../../../models/reference.json");

#[derive(Serialize)]
struct SiteView {
    features: FeatureVector,
    axis_slice: String,
    condition_slice: String,
}

#[derive(Serialize)]
struct Analysis {
    package: String,
    gate: GateDecision,
    sites: Vec<SiteView>,
}

#[derive(Serialize)]
struct ScoredSite {
    location: String,
    counts: [u32; 7],
    weighted: Vec<f64>,
    score: f64,
    verdict: Label,
}

#[derive(Serialize)]
struct Scored {
    threshold: f64,
    verdict: Option<Label>,
    fraud_locations: Vec<String>,
    sites: Vec<ScoredSite>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("demo output serializes")
}

pub fn analyze_text(source: &str) -> Result<String, String> {
    let (pkg, a) = analyze_source(source, &AnalysisConfig::default(), None).map_err(|e| e.to_string())?;
    let sites = a
        .sites
        .into_iter()
        .map(|s| SiteView {
            axis_slice: ddg_to_text(&s.axis_ddg, &pkg),
            condition_slice: ddg_to_text(&s.cond_ddg, &pkg),
            features: s.features,
        })
        .collect();
    Ok(to_json(&Analysis {
        package: pkg.id,
        gate: a.gate,
        sites,
    }))
}

/// `kind` is `benign` or a strategy name such as `random_coords`.
pub fn sample_text(kind: &str, seed: u64) -> Result<String, String> {
    let kind = match kind {
        "benign" => SampleKind::Benign,
        s => SampleKind::Fraud(s.parse::<Strategy>().map_err(|e| e.to_string())?),
    };
    Ok(gen_sample(kind, seed, &NoiseConfig::default()))
}

/// Scores every site; an empty `model_json` selects the bundled model.
pub fn score_text(source: &str, model_json: &str) -> Result<String, String> {
    let text = if model_json.trim().is_empty() {
        REFERENCE_MODEL
    } else {
        model_json
    };
    let model = VaeModel::from_json(text).map_err(|e| e.to_string())?;
    let (_, a) = analyze_source(source, &AnalysisConfig::default(), None).map_err(|e| e.to_string())?;
    let mut verdicts = Vec::new();
    let mut sites = Vec::new();
    for s in a.sites {
        let weighted = model.weigh(&s.features.raw()).to_vec();
        let v = model
            .classify(&s.features.site_id, &s.features.location, &weighted)
            .map_err(|e| e.to_string())?;
        sites.push(ScoredSite {
            location: v.location.clone(),
            counts: s.features.counts(),
            weighted,
            score: v.error,
            verdict: v.label,
        });
        verdicts.push(v);
    }
    let app = a.gate.passed().then(|| aggregate_app_verdict(&verdicts));
    Ok(to_json(&Scored {
        threshold: model.threshold.unwrap_or_default(),
        verdict: app.as_ref().map(|x| x.label),
        fraud_locations: app.map(|x| x.fraud_locations).unwrap_or_default(),
        sites,
    }))
}

#[wasm_bindgen]
pub fn analyze(source: &str) -> Result<String, JsError> {
    analyze_text(source).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn generate_sample(kind: &str, seed: u32) -> Result<String, JsError> {
    sample_text(kind, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn score(source: &str, model_json: &str) -> Result<String, JsError> {
    score_text(source, model_json).map_err(|e| JsError::new(&e))
}
