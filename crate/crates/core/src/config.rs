//! Flat `section.key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! manifest = data/manifest.csv
//! output_dir = runs/a
//! basis.k = 5
//! fpca.j = 4
//! features.source = fpc_scores
//! selector.method = randomized
//! selector.k = 2
//! selector.epsilon = 0.333333
//! clusterer.method = kmeans
//! clusterer.k = 2
//! ```
//!
//! Relative paths in a file resolve against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::clustering::{Bandwidth, KmeansConfig, SpectralConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    FpcScores,
    FourierCoeffs,
}

impl FeatureSource {
    fn as_str(self) -> &'static str {
        match self {
            FeatureSource::FpcScores => "fpc_scores",
            FeatureSource::FourierCoeffs => "fourier_coeffs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    None,
    Randomized { k: usize, epsilon: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clusterer {
    Kmeans(KmeansConfig),
    Spectral(SpectralConfig),
}

impl Clusterer {
    pub fn k(&self) -> usize {
        match self {
            Clusterer::Kmeans(c) => c.k,
            Clusterer::Spectral(c) => c.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub basis_k: usize,
    pub fpca_j: usize,
    pub feature_source: FeatureSource,
    pub selector: Selector,
    pub clusterer: Clusterer,
    /// Manifest label value treated as the positive class.
    pub positive_class: Option<usize>,
}

const KEYS: &[&str] = &[
    "manifest",
    "output_dir",
    "basis.k",
    "fpca.j",
    "features.source",
    "selector.method",
    "selector.k",
    "selector.epsilon",
    "selector.seed",
    "clusterer.method",
    "clusterer.k",
    "clusterer.restarts",
    "clusterer.max_iters",
    "clusterer.tol",
    "clusterer.seed",
    "clusterer.sigma",
    "evaluation.positive_class",
];

const PATH_KEYS: &[&str] = &["manifest", "output_dir"];

fn absolute(p: &Path) -> Result<String> {
    std::path::absolute(p)
        .map(|a| a.to_string_lossy().into_owned())
        .map_err(|e| Error::io(p, e))
}

/// Parse `key = value` lines.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

/// Split a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{s}` is not `key=value`")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("`{key}` is required")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T, what: &str) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("`{key}`: expected {what}, got `{v}`"))),
        }
    }
}

impl PipelineConfig {
    /// Read a config file, then apply overrides (later wins). Relative
    /// paths from the file resolve against its directory, those from
    /// overrides against the working directory; both are stored absolute
    /// so the echoed config replays from anywhere.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut pairs = parse_pairs(&text)?;
        for (k, v) in pairs.iter_mut() {
            if PATH_KEYS.contains(&k.as_str()) {
                *v = absolute(&base.join(v.as_str()))?;
            }
        }
        for (k, v) in overrides {
            let v = if PATH_KEYS.contains(&k.as_str()) { absolute(Path::new(v))? } else { v.clone() };
            pairs.push((k.clone(), v));
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown key `{k}`")));
            }
            map.insert(k.clone(), v.clone());
        }
        let f = Fields(map);

        let feature_source = match f.get("features.source").unwrap_or("fpc_scores") {
            "fpc_scores" => FeatureSource::FpcScores,
            "fourier_coeffs" => FeatureSource::FourierCoeffs,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "`features.source`: expected fpc_scores or fourier_coeffs, got `{other}`"
                )))
            }
        };
        let selector = match f.get("selector.method").unwrap_or("none") {
            "none" => Selector::None,
            "randomized" => Selector::Randomized {
                k: f.parse("selector.k", 2, "a positive integer")?,
                epsilon: f.parse("selector.epsilon", 0.5, "a number in (0, 1]")?,
                seed: f.parse("selector.seed", 0, "an unsigned integer")?,
            },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "`selector.method`: expected none or randomized, got `{other}`"
                )))
            }
        };
        let k = f.parse("clusterer.k", 2, "a positive integer")?;
        let seed = f.parse("clusterer.seed", 0, "an unsigned integer")?;
        let defaults = KmeansConfig::new(k, seed);
        let inner = KmeansConfig {
            restarts: f.parse("clusterer.restarts", defaults.restarts, "a positive integer")?,
            max_iters: f.parse("clusterer.max_iters", defaults.max_iters, "a positive integer")?,
            tol: f.parse("clusterer.tol", defaults.tol, "a number >= 0")?,
            ..defaults
        };
        let clusterer = match f.get("clusterer.method").unwrap_or("kmeans") {
            "kmeans" => Clusterer::Kmeans(inner),
            "spectral" => {
                let sigma = match f.get("clusterer.sigma").unwrap_or("median") {
                    "median" => Bandwidth::Median,
                    _ => Bandwidth::Fixed(f.parse("clusterer.sigma", 0.0, "`median` or a number > 0")?),
                };
                Clusterer::Spectral(SpectralConfig { k, sigma, inner })
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "`clusterer.method`: expected kmeans or spectral, got `{other}`"
                )))
            }
        };
        let positive_class = match f.get("evaluation.positive_class") {
            None => None,
            Some(_) => Some(f.parse("evaluation.positive_class", 0usize, "a label >= 1")?),
        };

        let cfg = Self {
            manifest: PathBuf::from(f.required("manifest")?),
            output_dir: PathBuf::from(f.required("output_dir")?),
            basis_k: f.parse("basis.k", 5, "an odd positive integer")?,
            fpca_j: f.parse("fpca.j", 3, "a positive integer")?,
            feature_source,
            selector,
            clusterer,
            positive_class,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let field = |key: &str, e: Error| match e {
            Error::InvalidConfig(m) | Error::InvalidArg(m) => Error::InvalidConfig(format!("`{key}`: {m}")),
            other => other,
        };
        crate::basis::BasisConfig::new(self.basis_k).map_err(|e| field("basis.k", e))?;
        if self.fpca_j == 0 {
            return Err(Error::InvalidConfig("`fpca.j`: must be >= 1".into()));
        }
        if let Selector::Randomized { k, epsilon, .. } = self.selector {
            crate::sketch_select::sample_size(k, epsilon).map_err(|e| field("selector", e))?;
        }
        match &self.clusterer {
            Clusterer::Kmeans(c) => c.validate().map_err(|e| field("clusterer", e))?,
            Clusterer::Spectral(c) => {
                c.inner.validate().map_err(|e| field("clusterer", e))?;
                if let Bandwidth::Fixed(s) = c.sigma {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::InvalidConfig(format!("`clusterer.sigma`: must be > 0, got {s}")));
                    }
                }
            }
        }
        if self.positive_class == Some(0) {
            return Err(Error::InvalidConfig("`evaluation.positive_class`: labels start at 1".into()));
        }
        Ok(())
    }

    /// Every field as `key = value`, in a fixed order. Loading the output
    /// reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("manifest = {}", self.manifest.display()),
            format!("output_dir = {}", self.output_dir.display()),
            format!("basis.k = {}", self.basis_k),
            format!("fpca.j = {}", self.fpca_j),
            format!("features.source = {}", self.feature_source.as_str()),
        ];
        match self.selector {
            Selector::None => lines.push("selector.method = none".into()),
            Selector::Randomized { k, epsilon, seed } => {
                lines.push("selector.method = randomized".into());
                lines.push(format!("selector.k = {k}"));
                lines.push(format!("selector.epsilon = {epsilon}"));
                lines.push(format!("selector.seed = {seed}"));
            }
        }
        let (method, inner, sigma) = match &self.clusterer {
            Clusterer::Kmeans(c) => ("kmeans", c, None),
            Clusterer::Spectral(c) => ("spectral", &c.inner, Some(c.sigma)),
        };
        lines.push(format!("clusterer.method = {method}"));
        lines.push(format!("clusterer.k = {}", inner.k));
        lines.push(format!("clusterer.restarts = {}", inner.restarts));
        lines.push(format!("clusterer.max_iters = {}", inner.max_iters));
        lines.push(format!("clusterer.tol = {:e}", inner.tol));
        lines.push(format!("clusterer.seed = {}", inner.seed));
        match sigma {
            Some(Bandwidth::Median) => lines.push("clusterer.sigma = median".into()),
            Some(Bandwidth::Fixed(s)) => lines.push(format!("clusterer.sigma = {s}")),
            None => {}
        }
        if let Some(p) = self.positive_class {
            lines.push(format!("evaluation.positive_class = {p}"));
        }
        lines.join("\n") + "\n"
    }
}
