use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_CATALOG: &str = include_str!("../../data/catalog.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiCategory {
    AxisGetter,
    ViewSize,
    Rng,
    Sys,
    Obtain,
    Dispatch,
    Other,
}

impl ApiCategory {
    pub const CATALOGUED: [ApiCategory; 6] = [
        ApiCategory::AxisGetter,
        ApiCategory::ViewSize,
        ApiCategory::Rng,
        ApiCategory::Sys,
        ApiCategory::Obtain,
        ApiCategory::Dispatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ApiCategory::AxisGetter => "axis_getter",
            ApiCategory::ViewSize => "view_size",
            ApiCategory::Rng => "rng",
            ApiCategory::Sys => "sys",
            ApiCategory::Obtain => "obtain",
            ApiCategory::Dispatch => "dispatch",
            ApiCategory::Other => "other",
        }
    }
}

impl fmt::Display for ApiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ApiCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        ApiCategory::CATALOGUED.into_iter().find(|c| c.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("catalog line {line}: unknown category `{name}`")]
    UnknownCategory { line: usize, name: String },
    #[error("catalog line {line}: API name before any category header")]
    MissingHeader { line: usize },
    #[error("catalog line {line}: `{name}` is not a dotted API name")]
    BadName { line: usize, name: String },
    #[error("API `{api}` listed under both `{first}` and `{second}`")]
    Overlap {
        api: String,
        first: ApiCategory,
        second: ApiCategory,
    },
}

/// Maps API names to semantic categories. Category sets are disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiCatalog {
    sets: BTreeMap<ApiCategory, BTreeSet<String>>,
    index: HashMap<String, ApiCategory>,
}

impl Default for ApiCatalog {
    fn default() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("built-in catalog is valid")
    }
}

impl ApiCatalog {
    pub fn from_sets(sets: BTreeMap<ApiCategory, BTreeSet<String>>) -> Result<Self, CatalogError> {
        let mut index: HashMap<String, ApiCategory> = HashMap::new();
        for (&cat, names) in &sets {
            for name in names {
                if let Some(&first) = index.get(name) {
                    return Err(CatalogError::Overlap {
                        api: name.clone(),
                        first,
                        second: cat,
                    });
                }
                index.insert(name.clone(), cat);
            }
        }
        Ok(Self { sets, index })
    }

    /// Parses the catalog file format: `<category>:` header lines, each
    /// followed by API names one per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut sets: BTreeMap<ApiCategory, BTreeSet<String>> = BTreeMap::new();
        let mut current = None;
        let mut seen: HashMap<String, ApiCategory> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_suffix(':') {
                let cat = header
                    .trim()
                    .parse::<ApiCategory>()
                    .map_err(|_| CatalogError::UnknownCategory {
                        line: line_no,
                        name: header.trim().to_string(),
                    })?;
                sets.entry(cat).or_default();
                current = Some(cat);
                continue;
            }
            let cat = current.ok_or(CatalogError::MissingHeader { line: line_no })?;
            let valid = line.contains('.')
                && line
                    .split('.')
                    .all(|p| !p.is_empty() && p.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$'));
            if !valid {
                return Err(CatalogError::BadName {
                    line: line_no,
                    name: line.to_string(),
                });
            }
            if let Some(&first) = seen.get(line) {
                if first != cat {
                    return Err(CatalogError::Overlap {
                        api: line.to_string(),
                        first,
                        second: cat,
                    });
                }
            }
            seen.insert(line.to_string(), cat);
            sets.entry(cat).or_default().insert(line.to_string());
        }
        Self::from_sets(sets)
    }

    pub fn classify(&self, api: &str) -> ApiCategory {
        self.index.get(api).copied().unwrap_or(ApiCategory::Other)
    }

    pub fn apis(&self, cat: ApiCategory) -> impl Iterator<Item = &str> {
        self.sets.get(&cat).into_iter().flatten().map(String::as_str)
    }

    pub fn is(&self, api: &str, cat: ApiCategory) -> bool {
        self.classify(api) == cat
    }

    /// Serializes back into the catalog file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (cat, names) in &self.sets {
            out.push_str(cat.name());
            out.push_str(":\n");
            for n in names {
                out.push_str("  ");
                out.push_str(n);
                out.push('\n');
            }
        }
        out
    }
}

/// Category of `api` under `catalog`; [`ApiCategory::Other`] when absent.
pub fn classify_api(catalog: &ApiCatalog, api: &str) -> ApiCategory {
    catalog.classify(api)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_classification() {
        let c = ApiCatalog::default();
        assert_eq!(classify_api(&c, "MotionEvent.getX"), ApiCategory::AxisGetter);
        assert_eq!(classify_api(&c, "Random.nextGaussian"), ApiCategory::Rng);
        assert_eq!(classify_api(&c, "View.getHeight"), ApiCategory::ViewSize);
        assert_eq!(classify_api(&c, "MotionEvent.obtain"), ApiCategory::Obtain);
        assert_eq!(classify_api(&c, "View.dispatchTouchEvent"), ApiCategory::Dispatch);
        assert_eq!(classify_api(&c, "Foo.bar"), ApiCategory::Other);
        assert_eq!(c.apis(ApiCategory::Obtain).count(), 1);
        assert_eq!(c.apis(ApiCategory::Dispatch).count(), 1);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = ApiCatalog::parse("rng:\n Foo.a\nsys:\n Foo.a\n").unwrap_err();
        assert!(matches!(err, CatalogError::Overlap { .. }));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            ApiCatalog::parse("Foo.a\n"),
            Err(CatalogError::MissingHeader { line: 1 })
        ));
        assert!(matches!(
            ApiCatalog::parse("colour:\n"),
            Err(CatalogError::UnknownCategory { .. })
        ));
        assert!(matches!(
            ApiCatalog::parse("rng:\n  nodot\n"),
            Err(CatalogError::BadName { line: 2, .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let c = ApiCatalog::default();
        assert_eq!(ApiCatalog::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn override_extends_surface() {
        let c = ApiCatalog::parse("rng:\n  SecureRandom.nextBytes\n").unwrap();
        assert_eq!(c.classify("SecureRandom.nextBytes"), ApiCategory::Rng);
        assert_eq!(c.classify("Random.nextInt"), ApiCategory::Other);
    }
}
