//! JSON experiment configuration. Unknown fields are rejected so typos surface as refusals.

use std::path::{Path, PathBuf};

use anisoft::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub space: Vec<SpaceConfig>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: Vec<usize>,
    pub box_lengths: Vec<f64>,
}

/// A real number that may also be written as the string `"inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum ExtReal {
    Num(f64),
    Text(InfText),
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub enum InfText {
    #[serde(rename = "inf")]
    Inf,
}

impl ExtReal {
    pub fn value(self) -> f64 {
        match self {
            ExtReal::Num(v) => v,
            ExtReal::Text(InfText::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub s: f64,
    pub a: Vec<f64>,
    pub p: Vec<ExtReal>,
    pub q: ExtReal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussians,
    Modes,
    BandLimited,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    pub count: usize,
    /// Band radius `|xi|_a <= cutoff` for mode families.
    #[serde(default)]
    pub cutoff: Option<f64>,
    /// Conjugate mode pairs per member.
    #[serde(default)]
    pub modes: Option<usize>,
}

impl FamilyConfig {
    /// Parses `kind:count`, e.g. `gaussians:50`.
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, count) = text
            .split_once(':')
            .ok_or_else(|| Error::Usage(format!("family '{text}' must look like kind:count")))?;
        let kind = match kind {
            "gaussians" => FamilyKind::Gaussians,
            "modes" => FamilyKind::Modes,
            "band-limited" | "band_limited" => FamilyKind::BandLimited,
            other => return Err(Error::Usage(format!("unknown family kind '{other}'"))),
        };
        let count = count.parse().map_err(|_| Error::Usage(format!("bad family count '{count}'")))?;
        Ok(Self { kind, count, cutoff: None, modes: None })
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Configuration(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(g) = &self.grid {
            if g.points.is_empty() || g.points.len() != g.box_lengths.len() {
                return Err(Error::Configuration("grid.points and grid.box_lengths need one entry per axis".into()));
            }
        }
        for (i, s) in self.space.iter().enumerate() {
            if s.a.len() != s.p.len() {
                return Err(Error::Configuration(format!("space[{i}].p needs one entry per entry of space[{i}].a")));
            }
        }
        if let Some(f) = &self.family {
            if f.count == 0 {
                return Err(Error::Configuration("family.count must be positive".into()));
            }
        }
        Ok(())
    }
}
