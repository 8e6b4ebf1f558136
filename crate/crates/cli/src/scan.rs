//! Package scanning with a bounded worker pool.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clickslice_core::corpus::{read_labels, SampleKind, LABELS_FILE};
use clickslice_core::detector::{aggregate_app_verdict, Confusion, Label, VaeModel};
use clickslice_core::pipeline::{analyze_source, AnalysisConfig, AnalyzeError};
use clickslice_core::slicer::Deadline;
use rayon::prelude::*;

use crate::report::{LabeledSummary, PackageReport, PackageStatus, ScanReport, SiteReport, REPORT_VERSION};
use crate::CliError;

pub const IR_EXTENSION: &str = "ir";

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub threshold: f64,
    pub jobs: usize,
    pub timeout: Duration,
}

/// Files to scan and any labels found next to them. Directories contribute
/// their `.ir` files (not recursively) and their labels manifest.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<(Vec<PathBuf>, BTreeMap<String, SampleKind>), CliError> {
    let mut files = Vec::new();
    let mut labels = BTreeMap::new();
    for p in paths {
        if p.is_dir() {
            let mut found = ir_files(p)?;
            files.append(&mut found);
            if p.join(LABELS_FILE).is_file() {
                for l in read_labels(p)? {
                    labels.insert(p.join(&l.path).display().to_string(), l.kind);
                }
            }
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(CliError::MissingInput(p.clone()));
        }
    }
    files.sort();
    files.dedup();
    Ok((files, labels))
}

pub fn ir_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let read = |e: std::io::Error| CliError::Io(dir.to_path_buf(), e);
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(read)? {
        let path = entry.map_err(read)?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == IR_EXTENSION) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Scans one file with a model whose threshold is already set.
pub fn scan_file(path: &Path, model: &VaeModel, cfg: &AnalysisConfig, opts: &ScanOptions) -> PackageReport {
    let started = Instant::now();
    let mut report = PackageReport {
        package: path.display().to_string(),
        status: PackageStatus::Error,
        gate: None,
        error: None,
        sites: Vec::new(),
        verdict: None,
        fraud_locations: Vec::new(),
        elapsed_ms: 0.0,
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            report.error = Some(e.to_string());
            report.elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
            return report;
        }
    };
    let deadline = Deadline::after(opts.timeout);
    match analyze_source(&text, cfg, Some(&deadline)) {
        Err(AnalyzeError::Timeout) => report.status = PackageStatus::Timeout,
        Err(e) => report.error = Some(e.to_string()),
        Ok((_, analysis)) => {
            report.status = if analysis.gate.passed() {
                PackageStatus::Analyzed
            } else {
                PackageStatus::Skipped
            };
            let mut verdicts = Vec::new();
            for site in analysis.sites {
                let weighted = model.weigh(&site.features.raw()).to_vec();
                let v = match model.classify(&site.features.site_id, &site.features.location, &weighted) {
                    Ok(v) => v,
                    Err(e) => {
                        report.status = PackageStatus::Error;
                        report.error = Some(e.to_string());
                        break;
                    }
                };
                report.sites.push(SiteReport {
                    site_id: site.features.site_id.clone(),
                    location: site.features.location.clone(),
                    target_view: site.site.target_view.clone(),
                    features: site.features,
                    weighted,
                    score: v.error,
                    verdict: v.label,
                });
                verdicts.push(v);
            }
            if report.status == PackageStatus::Analyzed {
                let app = aggregate_app_verdict(&verdicts);
                report.verdict = Some(app.label);
                report.fraud_locations = app.fraud_locations;
            }
            report.gate = Some(analysis.gate);
        }
    }
    report.elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
    report
}

pub fn scan(
    paths: &[PathBuf],
    model: &VaeModel,
    cfg: &AnalysisConfig,
    opts: &ScanOptions,
) -> Result<ScanReport, CliError> {
    let (files, labels) = collect_inputs(paths)?;
    let model = &model.clone().with_threshold(opts.threshold)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let mut packages: Vec<PackageReport> =
        pool.install(|| files.par_iter().map(|f| scan_file(f, model, cfg, opts)).collect());
    packages.sort_by(|a, b| a.package.cmp(&b.package));
    let summary = summarize(&packages, &labels);
    Ok(ScanReport {
        version: REPORT_VERSION,
        threshold: opts.threshold,
        model_digest: model.config_digest.clone(),
        packages,
        summary,
    })
}

/// Site and app metrics over the scanned packages that carry a label.
/// Packages that were skipped, timed out or failed count as benign
/// predictions.
fn summarize(packages: &[PackageReport], labels: &BTreeMap<String, SampleKind>) -> Option<LabeledSummary> {
    let labeled: Vec<(&PackageReport, bool)> = packages
        .iter()
        .filter_map(|p| labels.get(&p.package).map(|k| (p, k.is_fraud())))
        .collect();
    if labeled.is_empty() {
        return None;
    }
    let site = Confusion::from_pairs(
        labeled
            .iter()
            .flat_map(|&(p, fraud)| p.sites.iter().map(move |s| (s.verdict == Label::Fraud, fraud))),
    );
    let app = Confusion::from_pairs(
        labeled
            .iter()
            .map(|&(p, fraud)| (p.verdict == Some(Label::Fraud), fraud)),
    );
    Some(LabeledSummary {
        labeled_packages: labeled.len(),
        site: site.into(),
        app: app.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directories_contribute_ir_files_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.ir"), "").unwrap();
        fs::write(dir.path().join("a.ir"), "").unwrap();
        fs::write(dir.path().join("notes.txt"), "").unwrap();
        fs::write(
            dir.path().join(LABELS_FILE),
            "a.ir benign -\nb.ir fraud random_timing\n",
        )
        .unwrap();
        let (files, labels) = collect_inputs(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(files, [dir.path().join("a.ir"), dir.path().join("b.ir")]);
        assert!(labels[&dir.path().join("b.ir").display().to_string()].is_fraud());
        assert_eq!(labels.len(), 2);
    }

    #[test]
    fn missing_input_is_an_error() {
        assert!(matches!(
            collect_inputs(&[PathBuf::from("/no/such/file.ir")]),
            Err(CliError::MissingInput(_))
        ));
    }
}
