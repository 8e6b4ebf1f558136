//! The seven per-site features, min-max normalization and entropy weights.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{ApiCatalog, ApiCategory, Package};
use crate::slicer::{ClickSite, Ddg, DdgNode};

pub const FEATURE_COUNT: usize = 7;

pub type Row = [f64; FEATURE_COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    AxisApi,
    ViewSizeApi,
    Const,
    RandAxis,
    DdgSize,
    RandCondition,
    SysApi,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::AxisApi,
        Feature::ViewSizeApi,
        Feature::Const,
        Feature::RandAxis,
        Feature::DdgSize,
        Feature::RandCondition,
        Feature::SysApi,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::AxisApi => "axis_api",
            Feature::ViewSizeApi => "view_size_api",
            Feature::Const => "const_count",
            Feature::RandAxis => "rand_axis",
            Feature::DdgSize => "ddg_size",
            Feature::RandCondition => "rand_condition",
            Feature::SysApi => "sys_api",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FeatureError::UnknownFeature(s.to_string()))
    }
}

/// A subset of the seven features, used for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureMask(u8);

impl FeatureMask {
    pub const ALL: FeatureMask = FeatureMask((1 << FEATURE_COUNT) - 1);

    pub fn new(features: impl IntoIterator<Item = Feature>) -> Self {
        Self(features.into_iter().fold(0, |m, f| m | (1 << f.index())))
    }

    pub fn from_bits(bits: u8) -> Self {
        Self(bits & Self::ALL.0)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, f: Feature) -> bool {
        self.0 & (1 << f.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn features(self) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |&f| self.contains(f))
    }

    /// Every non-empty mask with exactly `k` features.
    pub fn of_size(k: usize) -> impl Iterator<Item = FeatureMask> {
        (1u8..=Self::ALL.0).map(FeatureMask).filter(move |m| m.len() == k)
    }

    /// Zeroes the columns outside the mask.
    pub fn apply(self, row: &Row) -> Row {
        let mut out = *row;
        for f in Feature::ALL {
            if !self.contains(f) {
                out[f.index()] = 0.0;
            }
        }
        out
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.features().map(Feature::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for FeatureMask {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Self::ALL);
        }
        s.split(['+', ','])
            .map(|p| p.trim().parse::<Feature>())
            .collect::<Result<Vec<_>, _>>()
            .map(FeatureMask::new)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("need at least 2 training vectors, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value in training row {0}")]
    NonFinite(usize),
}

/// Raw counts for one click site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub site_id: String,
    pub location: String,
    pub axis_api: u32,
    pub view_size_api: u32,
    pub const_count: u32,
    pub rand_axis: u32,
    pub ddg_size: u32,
    pub rand_condition: u32,
    pub sys_api: u32,
    pub oversized: bool,
}

impl FeatureVector {
    pub fn counts(&self) -> [u32; FEATURE_COUNT] {
        [
            self.axis_api,
            self.view_size_api,
            self.const_count,
            self.rand_axis,
            self.ddg_size,
            self.rand_condition,
            self.sys_api,
        ]
    }

    pub fn raw(&self) -> Row {
        self.counts().map(f64::from)
    }

    pub fn get(&self, f: Feature) -> u32 {
        self.counts()[f.index()]
    }
}

fn api_count(ddg: &Ddg, catalog: &ApiCatalog, cat: ApiCategory) -> u32 {
    ddg.nodes()
        .iter()
        .filter(|n| matches!(n, DdgNode::Api { api, .. } if catalog.is(api, cat)))
        .count() as u32
}

pub fn extract_features(
    pkg: &Package,
    site: &ClickSite,
    axis_ddg: &Ddg,
    cond_ddg: &Ddg,
    catalog: &ApiCatalog,
) -> FeatureVector {
    FeatureVector {
        site_id: format!("{}/{}", pkg.id, site.id(pkg)),
        location: site.location(pkg),
        axis_api: api_count(axis_ddg, catalog, ApiCategory::AxisGetter),
        view_size_api: api_count(axis_ddg, catalog, ApiCategory::ViewSize),
        const_count: axis_ddg
            .nodes()
            .iter()
            .filter(|n| matches!(n, DdgNode::Const { .. }))
            .count() as u32,
        rand_axis: api_count(axis_ddg, catalog, ApiCategory::Rng),
        ddg_size: axis_ddg.len() as u32,
        rand_condition: api_count(cond_ddg, catalog, ApiCategory::Rng),
        sys_api: api_count(cond_ddg, catalog, ApiCategory::Sys),
        oversized: axis_ddg.flagged() || cond_ddg.flagged(),
    }
}

/// Per-feature training bounds and entropy weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Row,
    pub max: Row,
    pub weights: Row,
}

fn min_max_scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Entropy weights of min-max-scaled columns.
pub fn entropy_weights(scaled: &[Row]) -> Row {
    let n = scaled.len() as f64;
    let mut d = [0.0; FEATURE_COUNT];
    for (j, dj) in d.iter_mut().enumerate() {
        let total: f64 = scaled.iter().map(|r| r[j]).sum();
        let e = if total > 0.0 {
            let s: f64 = scaled
                .iter()
                .map(|r| r[j] / total)
                .filter(|&p| p > 0.0)
                .map(|p| p * p.ln())
                .sum();
            -s / n.ln()
        } else {
            1.0
        };
        *dj = (1.0 - e).max(0.0);
    }
    let sum: f64 = d.iter().sum();
    if sum > 0.0 {
        d.map(|x| x / sum)
    } else {
        [1.0 / FEATURE_COUNT as f64; FEATURE_COUNT]
    }
}

pub fn fit_normalization(rows: &[Row]) -> Result<NormalizationParams, FeatureError> {
    if rows.len() < 2 {
        return Err(FeatureError::TooFewSamples(rows.len()));
    }
    if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(FeatureError::NonFinite(i));
    }
    let mut min = [f64::INFINITY; FEATURE_COUNT];
    let mut max = [f64::NEG_INFINITY; FEATURE_COUNT];
    for r in rows {
        for j in 0..FEATURE_COUNT {
            min[j] = min[j].min(r[j]);
            max[j] = max[j].max(r[j]);
        }
    }
    let scaled: Vec<Row> = rows
        .iter()
        .map(|r| std::array::from_fn(|j| min_max_scale(r[j], min[j], max[j])))
        .collect();
    Ok(NormalizationParams {
        min,
        max,
        weights: entropy_weights(&scaled),
    })
}

/// Scales a raw row to the training range, clamps to [0, 1] and applies the
/// entropy weights.
pub fn apply_normalization(params: &NormalizationParams, raw: &Row) -> Row {
    std::array::from_fn(|j| min_max_scale(raw[j], params.min[j], params.max[j]) * params.weights[j])
}

pub const CSV_HEADER: [&str; 2 + 2 * FEATURE_COUNT] = [
    "site_id",
    "axis_api",
    "view_size_api",
    "const_count",
    "rand_axis",
    "ddg_size",
    "rand_condition",
    "sys_api",
    "w_axis_api",
    "w_view_size_api",
    "w_const_count",
    "w_rand_axis",
    "w_ddg_size",
    "w_rand_condition",
    "w_sys_api",
    "oversized",
];

/// Writes one row per vector: site id, raw counts, weighted values, flag.
pub fn write_csv<W: io::Write>(
    out: W,
    vectors: &[FeatureVector],
    params: &NormalizationParams,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for v in vectors {
        let weighted = apply_normalization(params, &v.raw());
        let mut rec = vec![v.site_id.clone()];
        rec.extend(v.counts().iter().map(u32::to_string));
        rec.extend(weighted.iter().map(|x| format!("{x:.6}")));
        rec.push(v.oversized.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
