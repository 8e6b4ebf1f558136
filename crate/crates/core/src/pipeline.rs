//! Wires the stages together: analysis of one package, vector collection
//! over a labeled corpus, training, calibration, evaluation and ablation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{generate, CorpusError, GenSpec, Sample, SampleKind};
use crate::dataflow::{build_icfg, compute_chains};
use crate::detector::{
    aggregate_app_verdict, best_f1, label_for, sweep_roc, train, Confusion, DetectorError, Label, Roc, VaeConfig,
    VaeModel,
};
use crate::features::{extract_features, FeatureMask, FeatureVector, Row, FEATURE_COUNT};
use crate::gate::{apply_gate, GateConfig, GateDecision};
use crate::ir::{parse_package, ApiCatalog, Package, ParseError};
use crate::slicer::{locate_click_sites, ClickSite, Ddg, Deadline, SliceError, SliceLimits, Slicer};

#[derive(Debug, Clone, Default)]
pub struct AnalysisConfig {
    pub gate: GateConfig,
    pub catalog: ApiCatalog,
    pub limits: SliceLimits,
}

#[derive(Debug, Clone)]
pub struct SiteAnalysis {
    pub site: ClickSite,
    pub features: FeatureVector,
    pub axis_ddg: Ddg,
    pub cond_ddg: Ddg,
}

#[derive(Debug, Clone)]
pub struct PackageAnalysis {
    pub gate: GateDecision,
    pub sites: Vec<SiteAnalysis>,
}

impl PackageAnalysis {
    pub fn vectors(&self) -> impl Iterator<Item = &FeatureVector> {
        self.sites.iter().map(|s| &s.features)
    }
}

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("analysis timed out")]
    Timeout,
}

impl From<SliceError> for AnalyzeError {
    fn from(e: SliceError) -> Self {
        match e {
            SliceError::TimedOut => AnalyzeError::Timeout,
        }
    }
}

/// Gate, dataflow, site location, slicing and feature extraction for one
/// package. Gate-skipped packages yield no sites.
pub fn analyze_package(
    pkg: &Package,
    cfg: &AnalysisConfig,
    deadline: Option<&Deadline>,
) -> Result<PackageAnalysis, AnalyzeError> {
    let gate = apply_gate(pkg, &cfg.gate);
    if !gate.passed() {
        return Ok(PackageAnalysis {
            gate,
            sites: Vec::new(),
        });
    }
    let icfg = build_icfg(pkg);
    let chains = compute_chains(pkg, &icfg);
    if deadline.is_some_and(Deadline::expired) {
        return Err(AnalyzeError::Timeout);
    }
    let slicer = Slicer::new(pkg, &icfg, &chains, cfg.limits).with_deadline(deadline);
    let mut sites = Vec::new();
    for site in locate_click_sites(pkg, &icfg, &chains, &cfg.catalog, &gate.ad_views) {
        let axis_ddg = slicer.build(&site.axis_roots)?;
        let cond_ddg = slicer.build(&site.condition_roots)?;
        let features = extract_features(pkg, &site, &axis_ddg, &cond_ddg, &cfg.catalog);
        sites.push(SiteAnalysis {
            site,
            features,
            axis_ddg,
            cond_ddg,
        });
    }
    Ok(PackageAnalysis { gate, sites })
}

pub fn analyze_source(
    text: &str,
    cfg: &AnalysisConfig,
    deadline: Option<&Deadline>,
) -> Result<(Package, PackageAnalysis), AnalyzeError> {
    let pkg = parse_package(text)?;
    let analysis = analyze_package(&pkg, cfg, deadline)?;
    Ok((pkg, analysis))
}

/// A site vector with its package's label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub package: String,
    pub vector: FeatureVector,
    pub kind: SampleKind,
}

/// Analyzes labeled sources; every site inherits its package's label.
pub fn labeled_vectors<'a>(
    sources: impl IntoIterator<Item = (&'a str, &'a str, SampleKind)>,
    cfg: &AnalysisConfig,
) -> Result<Vec<LabeledVector>, (String, AnalyzeError)> {
    let mut out = Vec::new();
    for (name, text, kind) in sources {
        let (_, a) = analyze_source(text, cfg, None).map_err(|e| (name.to_string(), e))?;
        out.extend(a.sites.into_iter().map(|s| LabeledVector {
            package: name.to_string(),
            vector: s.features,
            kind,
        }));
    }
    Ok(out)
}

pub fn benign_rows(vectors: &[LabeledVector]) -> Vec<Row> {
    vectors
        .iter()
        .filter(|v| !v.kind.is_fraud())
        .map(|v| v.vector.raw())
        .collect()
}

pub fn scored(model: &VaeModel, vectors: &[LabeledVector]) -> Vec<(f64, bool)> {
    vectors
        .iter()
        .map(|v| (model.score_raw(&v.vector.raw()), v.kind.is_fraud()))
        .collect()
}

/// Youden-optimal threshold on a labeled validation set.
pub fn calibrate(model: &VaeModel, validation: &[LabeledVector]) -> Result<(VaeModel, Roc), DetectorError> {
    let roc = sweep_roc(&scored(model, validation))?;
    let t = roc.best_threshold.max(f64::MIN_POSITIVE);
    Ok((model.clone().with_threshold(t)?, roc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl From<Confusion> for Metrics {
    fn from(c: Confusion) -> Self {
        Self {
            confusion: c,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            accuracy: c.accuracy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub auc: f64,
    pub site: Metrics,
    pub app: Metrics,
    pub median_benign_score: f64,
    pub median_fraud_score: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Site- and app-level metrics of a calibrated model. Packages without a
/// site count as predicted benign at app level.
pub fn evaluate(
    model: &VaeModel,
    vectors: &[LabeledVector],
    packages: &[(String, SampleKind)],
) -> Result<EvalReport, DetectorError> {
    let t = model.threshold.ok_or(DetectorError::Uncalibrated)?;
    let s = scored(model, vectors);
    let roc = sweep_roc(&s)?;
    let site = Confusion::from_pairs(
        s.iter()
            .map(|&(score, fraud)| (label_for(score, t) == Label::Fraud, fraud)),
    );
    let mut per_app: BTreeMap<&str, Vec<crate::detector::Verdict>> = BTreeMap::new();
    for (v, &(score, _)) in vectors.iter().zip(&s) {
        per_app.entry(&v.package).or_default().push(crate::detector::Verdict {
            site_id: v.vector.site_id.clone(),
            location: v.vector.location.clone(),
            error: score,
            label: label_for(score, t),
            threshold: t,
        });
    }
    let app = Confusion::from_pairs(packages.iter().map(|(name, kind)| {
        let verdicts = per_app.get(name.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        (aggregate_app_verdict(verdicts).label == Label::Fraud, kind.is_fraud())
    }));
    Ok(EvalReport {
        threshold: t,
        auc: roc.auc,
        site: site.into(),
        app: app.into(),
        median_benign_score: median(s.iter().filter(|x| !x.1).map(|x| x.0).collect()),
        median_fraud_score: median(s.iter().filter(|x| x.1).map(|x| x.0).collect()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub mask: FeatureMask,
    pub features: String,
    pub size: usize,
    pub auc: f64,
    /// Best F1 over all thresholds on the evaluation set.
    pub best_f1: f64,
}

/// Retrains on `train_rows` restricted to `mask` and measures separation on
/// `eval`.
pub fn subset_result(
    train_rows: &[Row],
    eval: &[LabeledVector],
    mask: FeatureMask,
    cfg: &VaeConfig,
) -> Result<SubsetResult, DetectorError> {
    let model = train(train_rows, mask, cfg)?;
    let s = scored(&model, eval);
    Ok(SubsetResult {
        mask,
        features: mask.to_string(),
        size: mask.len(),
        auc: sweep_roc(&s)?.auc,
        best_f1: best_f1(&s),
    })
}

/// Masks evaluated by the ablation harness: every single feature, every
/// pair, the five-feature subset and the full set.
pub fn ablation_masks() -> Vec<FeatureMask> {
    let mut masks: Vec<FeatureMask> = FeatureMask::of_size(1).chain(FeatureMask::of_size(2)).collect();
    masks.push(five_feature_subset());
    masks.push(FeatureMask::ALL);
    masks
}

/// AxisAPI, ViewSizeAPI, RandAxis, DDGSize and RandCondition.
pub fn five_feature_subset() -> FeatureMask {
    use crate::features::Feature::*;
    FeatureMask::new([AxisApi, ViewSizeApi, RandAxis, DdgSize, RandCondition])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub results: Vec<SubsetResult>,
    /// Best AUC per subset size among the evaluated masks.
    pub best_auc_by_size: BTreeMap<usize, f64>,
}

pub fn summarize_ablation(results: Vec<SubsetResult>) -> AblationSummary {
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for r in &results {
        let e = best.entry(r.size).or_insert(f64::NEG_INFINITY);
        *e = e.max(r.auc);
    }
    AblationSummary {
        results,
        best_auc_by_size: best,
    }
}

/// Sizes and seed offsets of the seed-corpus protocol: a benign training
/// corpus, a labeled validation corpus for the threshold and a labeled test
/// corpus that is never seen before evaluation.
pub const TRAIN_BENIGN: usize = 500;
pub const VALIDATION_PER_CLASS: usize = 100;
pub const TEST_PER_CLASS: usize = 50;
pub const VALIDATION_SEED_OFFSET: u64 = 1000;
pub const TEST_SEED_OFFSET: u64 = 2000;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{package}: {source}")]
    Analyze {
        package: String,
        #[source]
        source: AnalyzeError,
    },
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// Site vectors of a labeled corpus plus the package list, so that
/// packages without sites still count at app level.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub vectors: Vec<LabeledVector>,
    pub packages: Vec<(String, SampleKind)>,
}

impl LabeledSet {
    pub fn from_samples(samples: &[Sample], cfg: &AnalysisConfig) -> Result<Self, ProtocolError> {
        let vectors = labeled_vectors(
            samples.iter().map(|s| (s.file.as_str(), s.source.as_str(), s.kind)),
            cfg,
        )
        .map_err(|(package, source)| ProtocolError::Analyze { package, source })?;
        Ok(Self {
            vectors,
            packages: samples.iter().map(|s| (s.file.clone(), s.kind)).collect(),
        })
    }
}

fn labeled_corpus(seed: u64, benign: usize, fraud: usize, cfg: &AnalysisConfig) -> Result<LabeledSet, ProtocolError> {
    LabeledSet::from_samples(&generate(&GenSpec::new(seed, benign, fraud))?, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedCorpus {
    pub seed: u64,
    pub train: LabeledSet,
    pub validation: LabeledSet,
    pub test: LabeledSet,
}

impl SeedCorpus {
    pub fn generate(seed: u64, cfg: &AnalysisConfig) -> Result<Self, ProtocolError> {
        Ok(Self {
            seed,
            train: labeled_corpus(seed, TRAIN_BENIGN, 0, cfg)?,
            validation: labeled_corpus(
                seed.wrapping_add(VALIDATION_SEED_OFFSET),
                VALIDATION_PER_CLASS,
                VALIDATION_PER_CLASS,
                cfg,
            )?,
            test: labeled_corpus(seed.wrapping_add(TEST_SEED_OFFSET), TEST_PER_CLASS, TEST_PER_CLASS, cfg)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    /// Trained on the benign corpus, threshold fitted on validation.
    pub model: VaeModel,
    pub validation_auc: f64,
    pub report: EvalReport,
}

/// Train, calibrate and evaluate once on a seed corpus.
pub fn run_seed_corpus(corpus: &SeedCorpus, cfg: &VaeConfig) -> Result<SeedRun, ProtocolError> {
    let model = train(&benign_rows(&corpus.train.vectors), FeatureMask::ALL, cfg)?;
    let (model, roc) = calibrate(&model, &corpus.validation.vectors)?;
    let report = evaluate(&model, &corpus.test.vectors, &corpus.test.packages)?;
    Ok(SeedRun {
        model,
        validation_auc: roc.auc,
        report,
    })
}

/// Every ablation mask retrained on the training corpus and measured on
/// the test corpus.
pub fn ablate_seed_corpus(corpus: &SeedCorpus, cfg: &VaeConfig) -> Result<AblationSummary, ProtocolError> {
    let rows = benign_rows(&corpus.train.vectors);
    let results = ablation_masks()
        .into_iter()
        .map(|m| subset_result(&rows, &corpus.test.vectors, m, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize_ablation(results))
}

/// Weighted vector length, exposed for callers that validate input.
pub const INPUT_DIM: usize = FEATURE_COUNT;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, GenSpec};

    #[test]
    fn gate_skipped_package_has_no_vectors() {
        let src = "package p\npermission CAMERA\nlibrary com.ads.sdk\nview adView class=com.ads.Banner w=320 h=50\nclass A\nmethod m()\nev = call MotionEvent.obtain(0, 0, 0, 1, 2, 0)\ncall adView View.dispatchTouchEvent(ev)\nendmethod\nendclass\nendpackage";
        let (_, a) = analyze_source(src, &AnalysisConfig::default(), None).unwrap();
        assert!(!a.gate.passed());
        assert_eq!(a.vectors().count(), 0);
    }

    #[test]
    fn expired_deadline_times_out() {
        let src = include_str!("../data/motivating_example.ir");
        let d = Deadline::after(std::time::Duration::ZERO);
        assert!(matches!(
            analyze_source(src, &AnalysisConfig::default(), Some(&d)),
            Err(AnalyzeError::Timeout)
        ));
    }

    #[test]
    fn every_generated_package_yields_one_site() {
        let samples = generate(&GenSpec::new(21, 40, 40)).unwrap();
        let cfg = AnalysisConfig::default();
        for s in &samples {
            let (_, a) =
                analyze_source(&s.source, &cfg, None).unwrap_or_else(|e| panic!("{}: {e}\n{}", s.file, s.source));
            assert!(a.gate.passed(), "{}", s.file);
            assert_eq!(a.sites.len(), 1, "{}\n{}", s.file, s.source);
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
