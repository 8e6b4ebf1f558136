//! One-class VAE detector: trained on benign weighted feature vectors,
//! flags sites whose reconstruction error exceeds a calibrated threshold.

mod roc;
mod vae;

pub use roc::{best_f1, sweep_roc, Confusion, Roc, RocPoint};
pub use vae::{fit, loss_and_grad, mean_objective, BatchLoss, Dense, TrainingSummary, VaeConfig, VaeParams};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{
    apply_normalization, fit_normalization, FeatureError, FeatureMask, NormalizationParams, Row, FEATURE_COUNT,
};

pub const MODEL_FORMAT: &str = "clickslice-vae";
pub const MODEL_VERSION: u32 = 1;
/// Operating point reported for the original seed apps; recorded in every
/// model file for comparison, never used for classification.
pub const REFERENCE_THRESHOLD: f64 = 2.04;
pub const MIN_TRAINING_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("need at least {need} benign vectors, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("expected a {expected}-dimensional vector, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("model has no calibrated threshold")]
    Uncalibrated,
    #[error("threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("labeled set must contain both classes")]
    SingleClass,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error(transparent)]
    Features(#[from] FeatureError),
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a model file (format `{0}`)")]
    Format(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model parameters do not match the declared architecture")]
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub config: VaeConfig,
    /// SHA-256 of the training config and feature mask.
    pub config_digest: String,
    pub feature_mask: FeatureMask,
    pub normalization: NormalizationParams,
    pub reference_threshold: f64,
    pub threshold: Option<f64>,
    pub training: TrainingSummary,
    pub params: VaeParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Fraud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub site_id: String,
    pub location: String,
    pub error: f64,
    pub label: Label,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppVerdict {
    pub label: Label,
    /// `Class::method` of every fraudulent site, sorted and deduplicated.
    pub fraud_locations: Vec<String>,
}

fn config_digest(cfg: &VaeConfig, mask: FeatureMask) -> String {
    let text = serde_json::to_string(&(cfg, mask)).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Fits normalization and entropy weights on the masked benign rows, then
/// trains the VAE on the weighted rows.
pub fn train(benign: &[Row], mask: FeatureMask, cfg: &VaeConfig) -> Result<VaeModel, DetectorError> {
    cfg.validate()?;
    if benign.len() < MIN_TRAINING_SAMPLES {
        return Err(DetectorError::TooFewSamples {
            got: benign.len(),
            need: MIN_TRAINING_SAMPLES,
        });
    }
    let masked: Vec<Row> = benign.iter().map(|r| mask.apply(r)).collect();
    let normalization = fit_normalization(&masked)?;
    let data: Vec<Vec<f64>> = masked
        .iter()
        .map(|r| apply_normalization(&normalization, r).to_vec())
        .collect();
    let (params, training) = vae::fit(&data, cfg)?;
    Ok(VaeModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        architecture: Architecture {
            input: FEATURE_COUNT,
            hidden: cfg.hidden,
            latent: cfg.latent,
        },
        config: cfg.clone(),
        config_digest: config_digest(cfg, mask),
        feature_mask: mask,
        normalization,
        reference_threshold: REFERENCE_THRESHOLD,
        threshold: None,
        training,
        params,
    })
}

impl VaeModel {
    /// Raw counts to the weighted vector the network sees.
    pub fn weigh(&self, raw: &Row) -> Row {
        apply_normalization(&self.normalization, &self.feature_mask.apply(raw))
    }

    /// Squared reconstruction error of a weighted vector, decoding the
    /// latent mean.
    pub fn score(&self, weighted: &[f64]) -> Result<f64, DetectorError> {
        if weighted.len() != self.architecture.input {
            return Err(DetectorError::Dimension {
                expected: self.architecture.input,
                got: weighted.len(),
            });
        }
        Ok(self.params.reconstruction_error(weighted))
    }

    pub fn score_raw(&self, raw: &Row) -> f64 {
        self.params.reconstruction_error(&self.weigh(raw))
    }

    pub fn with_threshold(mut self, t: f64) -> Result<Self, DetectorError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(DetectorError::BadThreshold(t));
        }
        self.threshold = Some(t);
        Ok(self)
    }

    pub fn classify(&self, site_id: &str, location: &str, weighted: &[f64]) -> Result<Verdict, DetectorError> {
        let t = self.threshold.ok_or(DetectorError::Uncalibrated)?;
        let error = self.score(weighted)?;
        Ok(Verdict {
            site_id: site_id.to_string(),
            location: location.to_string(),
            error,
            label: label_for(error, t),
            threshold: t,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        // check the header before the body so old files fail with a clear error
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let h: Header = serde_json::from_str(text)?;
        if h.format != MODEL_FORMAT {
            return Err(ModelFileError::Format(h.format));
        }
        if h.version != MODEL_VERSION {
            return Err(ModelFileError::Version {
                found: h.version,
                expected: MODEL_VERSION,
            });
        }
        let m: VaeModel = serde_json::from_str(text)?;
        let a = m.architecture;
        let shapes_ok = m.params.is_consistent()
            && m.params.input_dim() == a.input
            && m.params.latent_dim() == a.latent
            && m.params.encoder.outputs == a.hidden
            && a.input == FEATURE_COUNT;
        if !shapes_ok {
            return Err(ModelFileError::Shape);
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Fraud iff the error is strictly above the threshold.
pub fn label_for(error: f64, threshold: f64) -> Label {
    if error > threshold {
        Label::Fraud
    } else {
        Label::Benign
    }
}

/// An app is fraudulent iff any of its sites is.
pub fn aggregate_app_verdict(verdicts: &[Verdict]) -> AppVerdict {
    let mut fraud_locations: Vec<String> = verdicts
        .iter()
        .filter(|v| v.label == Label::Fraud)
        .map(|v| v.location.clone())
        .collect();
    fraud_locations.sort();
    fraud_locations.dedup();
    AppVerdict {
        label: if fraud_locations.is_empty() {
            Label::Benign
        } else {
            Label::Fraud
        },
        fraud_locations,
    }
}
