//! Deterministic generator of labeled synthetic packages: benign click
//! forwarding plus four fraud strategies.

mod templates;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LABELS_FILE: &str = "labels.txt";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("labels line {line}: {reason}")]
    Labels { line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Coordinates drawn at random inside the ad view.
    RandomCoords,
    /// Dispatch fired on a random draw.
    RandomTiming,
    /// A second click piggybacking on a real user click.
    FollowUserClick,
    /// Coordinates and trigger read from a network response.
    ServerConfigured,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::RandomCoords,
        Strategy::RandomTiming,
        Strategy::FollowUserClick,
        Strategy::ServerConfigured,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RandomCoords => "random_coords",
            Strategy::RandomTiming => "random_timing",
            Strategy::FollowUserClick => "follow_user_click",
            Strategy::ServerConfigured => "server_configured",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CorpusError::InvalidSpec(format!("unknown strategy `{s}`")))
    }
}

/// Relative share of each strategy among fraud samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMix(pub [f64; 4]);

impl Default for StrategyMix {
    fn default() -> Self {
        Self([0.25; 4])
    }
}

impl StrategyMix {
    pub fn only(s: Strategy) -> Self {
        let mut w = [0.0; 4];
        w[s as usize] = 1.0;
        Self(w)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.0.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(CorpusError::InvalidSpec("mix weights must be non-negative".into()));
        }
        if (self.0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSpec("mix proportions must sum to 1".into()));
        }
        Ok(())
    }

    /// Splits `n` samples by largest remainder; ties go to the earlier
    /// strategy.
    pub fn counts(&self, n: usize) -> [usize; 4] {
        let exact: Vec<f64> = self.0.iter().map(|w| w * n as f64).collect();
        let mut counts: [usize; 4] = std::array::from_fn(|i| exact[i].floor() as usize);
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = n - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        counts
    }
}

impl FromStr for StrategyMix {
    type Err = CorpusError;

    /// `even`, or comma-separated `name=weight` pairs normalized to sum 1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "even" {
            return Ok(Self::default());
        }
        let mut w = [0.0; 4];
        for part in s.split(',') {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| CorpusError::InvalidSpec(format!("expected name=weight, got `{part}`")))?;
            let strategy: Strategy = name.trim().parse()?;
            w[strategy as usize] = value
                .trim()
                .parse()
                .map_err(|_| CorpusError::InvalidSpec(format!("bad weight `{value}`")))?;
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) || w.iter().any(|x| *x < 0.0) {
            return Err(CorpusError::InvalidSpec(
                "weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(Self(w.map(|x| x / total)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Upper bound on unrelated statements added to each handler.
    pub max_dead_statements: usize,
    /// Upper bound on forwarding methods around coordinates and dispatch.
    pub max_wrapper_depth: usize,
    /// Declare non-ad views and occasionally tap them synthetically.
    pub decoy_views: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            max_dead_statements: 30,
            max_wrapper_depth: 3,
            decoy_views: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub n_benign: usize,
    pub n_fraud: usize,
    pub mix: StrategyMix,
    pub noise: NoiseConfig,
    pub sites_per_package: usize,
}

impl GenSpec {
    pub fn new(seed: u64, n_benign: usize, n_fraud: usize) -> Self {
        Self {
            seed,
            n_benign,
            n_fraud,
            mix: StrategyMix::default(),
            noise: NoiseConfig::default(),
            sites_per_package: 1,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        self.mix.validate()?;
        if self.sites_per_package == 0 {
            return Err(CorpusError::InvalidSpec("sites_per_package must be at least 1".into()));
        }
        if self.noise.max_dead_statements > 30 || self.noise.max_wrapper_depth > 3 {
            return Err(CorpusError::InvalidSpec(
                "dead statements are capped at 30 and wrapper depth at 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SampleKind {
    Benign,
    Fraud(Strategy),
}

impl SampleKind {
    pub fn is_fraud(self) -> bool {
        matches!(self, SampleKind::Fraud(_))
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleKind::Benign => f.write_str("benign -"),
            SampleKind::Fraud(s) => write!(f, "fraud {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// File name relative to the corpus directory.
    pub file: String,
    pub kind: SampleKind,
    pub source: String,
}

/// One package of the given kind. Used by tests and the browser demo.
pub fn generate_sample(kind: SampleKind, seed: u64, noise: &NoiseConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    templates::build_package(&mut rng, noise, kind, (seed % 10_000) as usize, 1)
}

/// Generates the whole corpus in memory, benign samples first.
pub fn generate(spec: &GenSpec) -> Result<Vec<Sample>, CorpusError> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut kinds: Vec<SampleKind> = Vec::with_capacity(spec.n_fraud);
    for (s, n) in Strategy::ALL.into_iter().zip(spec.mix.counts(spec.n_fraud)) {
        kinds.extend(std::iter::repeat_n(SampleKind::Fraud(s), n));
    }
    kinds.shuffle(&mut master);
    let plan = std::iter::repeat_n(SampleKind::Benign, spec.n_benign).chain(kinds);
    let mut samples = Vec::with_capacity(spec.n_benign + spec.n_fraud);
    let (mut nb, mut nf) = (0, 0);
    for (i, kind) in plan.enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let source = templates::build_package(&mut rng, &spec.noise, kind, i, spec.sites_per_package);
        let file = match kind {
            SampleKind::Benign => {
                nb += 1;
                format!("benign_{:04}.ir", nb - 1)
            }
            SampleKind::Fraud(_) => {
                nf += 1;
                format!("fraud_{:04}.ir", nf - 1)
            }
        };
        samples.push(Sample { file, kind, source });
    }
    Ok(samples)
}

pub fn labels_text(samples: &[Sample]) -> String {
    samples.iter().map(|s| format!("{} {}\n", s.file, s.kind)).collect()
}

/// Writes every sample plus the labels manifest into `dir`.
pub fn write_corpus(dir: &Path, samples: &[Sample]) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for s in samples {
        let path = dir.join(&s.file);
        fs::write(&path, &s.source).map_err(io_err(&path))?;
    }
    let path = dir.join(LABELS_FILE);
    fs::write(&path, labels_text(samples)).map_err(io_err(&path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub path: String,
    pub kind: SampleKind,
}

pub fn parse_labels(text: &str) -> Result<Vec<LabelEntry>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| CorpusError::Labels {
            line: i + 1,
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [path, label, strategy] = parts[..] else {
            return Err(bad("expected `<path> <benign|fraud> <strategy|->`"));
        };
        let kind = match (label, strategy) {
            ("benign", "-") => SampleKind::Benign,
            ("fraud", s) => SampleKind::Fraud(s.parse().map_err(|_| bad("unknown strategy"))?),
            _ => return Err(bad("label must be `benign -` or `fraud <strategy>`")),
        };
        out.push(LabelEntry {
            path: path.to_string(),
            kind,
        });
    }
    Ok(out)
}

pub fn read_labels(dir: &Path) -> Result<Vec<LabelEntry>, CorpusError> {
    let path = dir.join(LABELS_FILE);
    parse_labels(&fs::read_to_string(&path).map_err(io_err(&path))?)
}

/// Reads every labeled file of a corpus directory, in manifest order.
pub fn read_corpus(dir: &Path) -> Result<Vec<Sample>, CorpusError> {
    read_labels(dir)?
        .into_iter()
        .map(|l| {
            let path = dir.join(&l.path);
            let source = fs::read_to_string(&path).map_err(io_err(&path))?;
            Ok(Sample {
                file: l.path,
                kind: l.kind,
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(StrategyMix::default().counts(50), [13, 13, 12, 12]);
        assert_eq!(StrategyMix::default().counts(0), [0; 4]);
        assert_eq!(StrategyMix::only(Strategy::RandomTiming).counts(5), [0, 5, 0, 0]);
        let m: StrategyMix = "random_coords=1,server_configured=3".parse().unwrap();
        assert_eq!(m.counts(8), [2, 0, 0, 6]);
    }

    #[test]
    fn bad_specs_rejected() {
        assert!("random_coords".parse::<StrategyMix>().is_err());
        assert!("nope=1".parse::<StrategyMix>().is_err());
        let mut spec = GenSpec::new(1, 1, 1);
        spec.mix = StrategyMix([0.5, 0.1, 0.1, 0.1]);
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn file_names_and_labels() {
        let samples = generate(&GenSpec::new(3, 2, 4)).unwrap();
        let names: Vec<&str> = samples.iter().map(|s| s.file.as_str()).collect();
        assert_eq!(names[..2], ["benign_0000.ir", "benign_0001.ir"]);
        assert_eq!(samples.iter().filter(|s| s.kind.is_fraud()).count(), 4);
        let parsed = parse_labels(&labels_text(&samples)).unwrap();
        assert_eq!(parsed.len(), 6);
        assert!(parsed
            .iter()
            .zip(&samples)
            .all(|(l, s)| l.path == s.file && l.kind == s.kind));
    }

    #[test]
    fn labels_parse_errors() {
        assert!(matches!(
            parse_labels("a.ir fraud"),
            Err(CorpusError::Labels { line: 1, .. })
        ));
        assert!(parse_labels("a.ir benign random_coords").is_err());
        assert!(parse_labels("# comment\n\na.ir benign -").unwrap().len() == 1);
    }

    #[test]
    fn deterministic() {
        let a = generate(&GenSpec::new(9, 5, 5)).unwrap();
        let b = generate(&GenSpec::new(9, 5, 5)).unwrap();
        assert_eq!(a, b);
        let c = generate(&GenSpec::new(10, 5, 5)).unwrap();
        assert_ne!(a, c);
    }
}
