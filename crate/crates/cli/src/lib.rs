//! Library side of the `clickslice` command: scanning, training, evaluation
//! and corpus generation over directories of `.ir` packages.

pub mod report;
pub mod scan;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clickslice_core::config::ConfigError;
use clickslice_core::corpus::{
    generate, read_corpus, write_corpus, CorpusError, GenSpec, Sample, SampleKind, LABELS_FILE,
};
use clickslice_core::detector::{train, DetectorError, ModelFileError, VaeConfig, VaeModel};
use clickslice_core::features::FeatureMask;
use clickslice_core::pipeline::{
    ablation_masks, analyze_source, benign_rows, calibrate, evaluate, subset_result, summarize_ablation,
    AnalysisConfig, AnalyzeError, LabeledSet, ProtocolError,
};
use clickslice_core::slicer::ddg_to_text;
use thiserror::Error;

use crate::report::{feature_header, Calibration, EvalOutput, REPORT_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("{0}: {1}")]
    Model(PathBuf, #[source] ModelFileError),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{package}: {source}")]
    Analyze {
        package: String,
        #[source]
        source: AnalyzeError,
    },
    #[error("no such file or directory: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("model has no calibrated threshold; pass --threshold or run `eval --calibrate`")]
    NoThreshold,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Corpus(e) => e.into(),
            ProtocolError::Analyze { package, source } => CliError::Analyze { package, source },
            ProtocolError::Detector(e) => e.into(),
        }
    }
}

pub fn load_model(path: &Path) -> Result<VaeModel, CliError> {
    VaeModel::load(path).map_err(|e| CliError::Model(path.to_path_buf(), e))
}

fn save_model(model: &VaeModel, path: &Path) -> Result<(), CliError> {
    model.save(path).map_err(|e| CliError::Model(path.to_path_buf(), e))
}

/// A labeled directory when it has a manifest, otherwise every `.ir` file
/// in it taken as benign.
pub fn read_training_dir(dir: &Path) -> Result<Vec<Sample>, CliError> {
    if dir.join(LABELS_FILE).is_file() {
        return Ok(read_corpus(dir)?);
    }
    scan::ir_files(dir)?
        .into_iter()
        .map(|path| {
            let source = std::fs::read_to_string(&path).map_err(|e| CliError::Io(path.clone(), e))?;
            let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok(Sample {
                file,
                kind: SampleKind::Benign,
                source,
            })
        })
        .collect()
}

pub fn train_dir(dir: &Path, analysis: &AnalysisConfig, cfg: &VaeConfig) -> Result<VaeModel, CliError> {
    let set = LabeledSet::from_samples(&read_training_dir(dir)?, analysis)?;
    Ok(train(&benign_rows(&set.vectors), FeatureMask::ALL, cfg)?)
}

#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub labeled: PathBuf,
    pub model: PathBuf,
    /// Write a calibrated copy of the model here.
    pub calibrate: Option<PathBuf>,
    /// Calibration data; the evaluated set itself when absent.
    pub validation: Option<PathBuf>,
    pub threshold: Option<f64>,
    /// Benign training data for the ablation retrains.
    pub ablate: Option<PathBuf>,
}

pub fn eval(req: &EvalRequest, analysis: &AnalysisConfig, cfg: &VaeConfig) -> Result<EvalOutput, CliError> {
    let mut model = load_model(&req.model)?;
    let labeled = LabeledSet::from_samples(&read_corpus(&req.labeled)?, analysis)?;
    let mut calibration = None;
    if let Some(out) = &req.calibrate {
        let validation = match &req.validation {
            Some(dir) => LabeledSet::from_samples(&read_corpus(dir)?, analysis)?,
            None => labeled.clone(),
        };
        let (calibrated, roc) = calibrate(&model, &validation.vectors)?;
        save_model(&calibrated, out)?;
        calibration = Some(Calibration {
            threshold: calibrated.threshold.unwrap_or_default(),
            validation_auc: roc.auc,
            written_to: out.display().to_string(),
        });
        model = calibrated;
    }
    if let Some(t) = req.threshold {
        model = model.with_threshold(t)?;
    }
    if model.threshold.is_none() {
        return Err(CliError::NoThreshold);
    }
    let metrics = evaluate(&model, &labeled.vectors, &labeled.packages)?;
    let ablation = match &req.ablate {
        None => None,
        Some(dir) => {
            let train_set = LabeledSet::from_samples(&read_training_dir(dir)?, analysis)?;
            let rows = benign_rows(&train_set.vectors);
            let results = ablation_masks()
                .into_iter()
                .map(|m| subset_result(&rows, &labeled.vectors, m, cfg))
                .collect::<Result<Vec<_>, _>>()?;
            Some(summarize_ablation(results))
        }
    };
    Ok(EvalOutput {
        version: REPORT_VERSION,
        calibration,
        metrics,
        ablation,
    })
}

pub fn gen(spec: &GenSpec, out: &Path) -> Result<usize, CliError> {
    let samples = generate(spec)?;
    write_corpus(out, &samples)?;
    Ok(samples.len())
}

/// Gate decision, click sites, features and both slices of one package.
pub fn dump(path: &Path, analysis: &AnalysisConfig) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let (pkg, a) = analyze_source(&text, analysis, None).map_err(|source| CliError::Analyze {
        package: path.display().to_string(),
        source,
    })?;
    let mut out = String::new();
    writeln!(out, "package {}", pkg.id).unwrap();
    writeln!(
        out,
        "gate {:?} {:?} ad views {:?}",
        a.gate.verdict, a.gate.reason, a.gate.ad_views
    )
    .unwrap();
    for s in &a.sites {
        writeln!(out, "\nsite {} at {}", s.features.site_id, s.features.location).unwrap();
        writeln!(out, "  {}", feature_header()).unwrap();
        writeln!(
            out,
            "  {:?}{}",
            s.features.counts(),
            if s.features.oversized { " (oversized)" } else { "" }
        )
        .unwrap();
        writeln!(out, "axis slice").unwrap();
        out.push_str(&ddg_to_text(&s.axis_ddg, &pkg));
        writeln!(out, "condition slice").unwrap();
        out.push_str(&ddg_to_text(&s.cond_ddg, &pkg));
    }
    Ok(out)
}
