//! Preprocessing gate: only packages that can talk to the network, bundle an
//! ad library and declare at least one ad view are analyzed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ir::{Package, ViewDecl};

const NETWORK_PERMISSIONS: [&str; 2] = ["INTERNET", "ACCESS_NETWORK_STATE"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Library ids (or package prefixes) of known ad SDKs.
    pub ad_libraries: BTreeSet<String>,
    /// Lower-case tokens marking a view name or label as advertising.
    pub ad_tokens: BTreeSet<String>,
    /// Fully qualified view classes that render ads.
    pub ad_classes: BTreeSet<String>,
    pub banner_min_width: u32,
    pub banner_min_height: u32,
    pub banner_max_height: u32,
}

impl Default for GateConfig {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            ad_libraries: set(&[
                "com.google.android.gms.ads",
                "com.facebook.ads",
                "com.applovin",
                "com.unity3d.ads",
                "com.mopub",
                "com.inmobi",
                "com.vungle",
                "com.bytedance.sdk.openadsdk",
                "com.qq.e.ads",
                "com.baidu.mobads",
                "com.ads.sdk",
            ]),
            ad_tokens: set(&["ad", "ads", "banner", "interstitial"]),
            ad_classes: set(&[
                "com.google.android.gms.ads.AdView",
                "com.google.android.gms.ads.BaseAdView",
                "com.facebook.ads.AdView",
                "com.applovin.adview.AppLovinAdView",
                "com.mopub.mobileads.MoPubView",
                "com.ads.Banner",
                "com.ads.NativeAdView",
            ]),
            banner_min_width: 300,
            banner_min_height: 40,
            banner_max_height: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateVerdict {
    Analyze,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateReason {
    NoNetworkPermission,
    NoAdLibrary,
    NoAdViews,
    Pass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: GateVerdict,
    pub reason: GateReason,
    pub ad_views: BTreeSet<String>,
}

impl GateDecision {
    fn skip(reason: GateReason) -> Self {
        Self {
            verdict: GateVerdict::Skip,
            reason,
            ad_views: BTreeSet::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == GateVerdict::Analyze
    }
}

/// Which of the three ad-view cues a view matches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdViewCues {
    pub marker_text: bool,
    pub ad_class: bool,
    pub banner_placement: bool,
}

impl AdViewCues {
    pub fn any(self) -> bool {
        self.marker_text || self.ad_class || self.banner_placement
    }
}

/// Splits an identifier or label into lower-case word tokens at
/// non-alphanumeric characters and camel-case boundaries.
pub fn word_tokens(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if c.is_uppercase() && !cur.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn ad_view_cues(view: &ViewDecl, cfg: &GateConfig) -> AdViewCues {
    let marker_text = std::iter::once(view.name.as_str())
        .chain(view.text_labels.iter().map(String::as_str))
        .flat_map(word_tokens)
        .any(|t| cfg.ad_tokens.contains(&t));
    AdViewCues {
        marker_text,
        ad_class: cfg.ad_classes.contains(&view.class_type),
        banner_placement: view.width_dp >= cfg.banner_min_width
            && (cfg.banner_min_height..=cfg.banner_max_height).contains(&view.height_dp),
    }
}

fn has_permission(pkg: &Package, name: &str) -> bool {
    pkg.manifest
        .permissions
        .iter()
        .any(|p| p == name || p.rsplit('.').next() == Some(name))
}

fn is_ad_library(lib: &str, allowlist: &BTreeSet<String>) -> bool {
    allowlist
        .iter()
        .any(|a| lib == a || (lib.starts_with(a.as_str()) && lib.as_bytes().get(a.len()) == Some(&b'.')))
}

pub fn apply_gate(pkg: &Package, cfg: &GateConfig) -> GateDecision {
    if !NETWORK_PERMISSIONS.iter().any(|p| has_permission(pkg, p)) {
        return GateDecision::skip(GateReason::NoNetworkPermission);
    }
    if !pkg
        .manifest
        .libraries
        .iter()
        .any(|l| is_ad_library(l, &cfg.ad_libraries))
    {
        return GateDecision::skip(GateReason::NoAdLibrary);
    }
    let ad_views: BTreeSet<String> = pkg
        .views
        .iter()
        .filter(|v| ad_view_cues(v, cfg).any())
        .map(|v| v.name.clone())
        .collect();
    if ad_views.is_empty() {
        return GateDecision::skip(GateReason::NoAdViews);
    }
    GateDecision {
        verdict: GateVerdict::Analyze,
        reason: GateReason::Pass,
        ad_views,
    }
}
