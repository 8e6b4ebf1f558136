//! JSON report types written by `scan` and `eval`, plus their plain-text
//! renderings.

use std::fmt::Write as _;

use clickslice_core::detector::Label;
use clickslice_core::features::{Feature, FeatureVector, FEATURE_COUNT};
use clickslice_core::gate::GateDecision;
use clickslice_core::pipeline::{AblationSummary, EvalReport, Metrics};
use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackageStatus {
    Analyzed,
    Skipped,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site_id: String,
    pub location: String,
    pub target_view: String,
    pub features: FeatureVector,
    /// Normalized, entropy-weighted vector fed to the detector.
    pub weighted: Vec<f64>,
    pub score: f64,
    pub verdict: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageReport {
    /// Path of the scanned file; reports are sorted by it.
    pub package: String,
    pub status: PackageStatus,
    pub gate: Option<GateDecision>,
    pub error: Option<String>,
    pub sites: Vec<SiteReport>,
    pub verdict: Option<Label>,
    pub fraud_locations: Vec<String>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSummary {
    pub labeled_packages: usize,
    pub site: Metrics,
    pub app: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub version: u32,
    pub threshold: f64,
    pub model_digest: String,
    pub packages: Vec<PackageReport>,
    /// Present when a scanned directory carries a labels manifest.
    pub summary: Option<LabeledSummary>,
}

impl ScanReport {
    pub fn fraud_found(&self) -> bool {
        self.packages.iter().any(|p| p.verdict == Some(Label::Fraud))
    }

    pub fn has_errors(&self) -> bool {
        self.packages.iter().any(|p| p.status == PackageStatus::Error)
    }

    /// The same report with every timing zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for p in &mut r.packages {
            p.elapsed_ms = 0.0;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub validation_auc: f64,
    pub written_to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub version: u32,
    pub calibration: Option<Calibration>,
    pub metrics: EvalReport,
    pub ablation: Option<AblationSummary>,
}

fn label(l: Option<Label>) -> &'static str {
    match l {
        Some(Label::Fraud) => "FRAUD",
        Some(Label::Benign) => "benign",
        None => "-",
    }
}

fn metrics_line(name: &str, m: &Metrics) -> String {
    format!(
        "{name:<5} precision {:.3}  recall {:.3}  F1 {:.3}  accuracy {:.3}  (tp {} fp {} tn {} fn {})",
        m.precision, m.recall, m.f1, m.accuracy, m.confusion.tp, m.confusion.fp, m.confusion.tn, m.confusion.fn_
    )
}

pub fn render_scan(r: &ScanReport) -> String {
    let mut out = String::new();
    writeln!(out, "threshold {:.6}", r.threshold).unwrap();
    for p in &r.packages {
        let detail = match p.status {
            PackageStatus::Analyzed => format!("{} site(s)", p.sites.len()),
            PackageStatus::Skipped => match &p.gate {
                Some(g) => format!("skipped: {:?}", g.reason),
                None => "skipped".to_string(),
            },
            PackageStatus::Timeout => "timed out".to_string(),
            PackageStatus::Error => format!("error: {}", p.error.as_deref().unwrap_or("unknown")),
        };
        writeln!(
            out,
            "{:<7} {}  {detail}  {:.1} ms",
            label(p.verdict),
            p.package,
            p.elapsed_ms
        )
        .unwrap();
        for s in &p.sites {
            writeln!(
                out,
                "        {:<7} {:.6}  {}  {:?}",
                label(Some(s.verdict)),
                s.score,
                s.location,
                s.features.counts()
            )
            .unwrap();
        }
    }
    if let Some(s) = &r.summary {
        writeln!(out, "{} labeled packages", s.labeled_packages).unwrap();
        writeln!(out, "{}", metrics_line("site", &s.site)).unwrap();
        writeln!(out, "{}", metrics_line("app", &s.app)).unwrap();
    }
    out
}

pub fn render_eval(e: &EvalOutput) -> String {
    let mut out = String::new();
    if let Some(c) = &e.calibration {
        writeln!(
            out,
            "calibrated threshold {:.6} (validation AUC {:.4}) written to {}",
            c.threshold, c.validation_auc, c.written_to
        )
        .unwrap();
    }
    let m = &e.metrics;
    writeln!(out, "threshold {:.6}  AUC {:.4}", m.threshold, m.auc).unwrap();
    writeln!(out, "{}", metrics_line("site", &m.site)).unwrap();
    writeln!(out, "{}", metrics_line("app", &m.app)).unwrap();
    writeln!(
        out,
        "median score benign {:.6}  fraud {:.6}",
        m.median_benign_score, m.median_fraud_score
    )
    .unwrap();
    if let Some(a) = &e.ablation {
        writeln!(out, "ablation (AUC, best F1):").unwrap();
        for r in &a.results {
            writeln!(out, "  {:>2}  {:.4}  {:.3}  {}", r.size, r.auc, r.best_f1, r.features).unwrap();
        }
        for (size, auc) in &a.best_auc_by_size {
            writeln!(out, "  best AUC with {size} feature(s): {auc:.4}").unwrap();
        }
    }
    out
}

/// Column header for `dump` output.
pub fn feature_header() -> String {
    let names: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
    debug_assert_eq!(names.len(), FEATURE_COUNT);
    names.join(" ")
}
