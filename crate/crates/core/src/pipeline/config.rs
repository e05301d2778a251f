//! Run configuration, read from and written to TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::RmseSpace;
use crate::cube::Rect;
use crate::dimensionality::DEFAULT_VOLUME_THRESHOLD;
use crate::error::{Error, Result};
use crate::io::DEFAULT_RGB_NM;
use crate::segmentation::CovarianceMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Bare-paper pixel as `[row, col]`.
    pub paper_pixel: [usize; 2],
    pub paths: Paths,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    #[serde(default)]
    pub endmembers: EndmemberConfig,
    #[serde(default)]
    pub unmix: UnmixConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub header: PathBuf,
    /// Defaults to the header path with an `.img` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Paths {
    pub fn data_path(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.header.with_extension("img"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    /// Clustering patch; the whole cube when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch: Option<Rect>,
    pub k: usize,
    pub pigment_clusters: Clusters,
    /// Minimum Lab distance from the paper colour for automatic designation.
    pub paper_delta_e: f64,
    pub covariance: CovarianceMode,
    /// Wavelengths rendered as red, green and blue.
    pub rgb_nm: [f64; 3],
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            patch: None,
            k: 4,
            pigment_clusters: Clusters::Auto,
            paper_delta_e: 10.0,
            covariance: CovarianceMode::PerClass,
            rgb_nm: DEFAULT_RGB_NM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndmemberConfig {
    pub m_max: usize,
    pub tau_vol: f64,
    /// Endmembers passed on to unmixing; `auto` uses the estimated
    /// dimensionality.
    pub count: Count,
}

impl Default for EndmemberConfig {
    fn default() -> Self {
        EndmemberConfig {
            m_max: 12,
            tau_vol: DEFAULT_VOLUME_THRESHOLD,
            count: Count::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnmixConfig {
    pub subtract_paper: bool,
}

impl Default for UnmixConfig {
    fn default() -> Self {
        UnmixConfig { subtract_paper: true }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    /// Final cluster count; `auto` uses the number of endmembers.
    pub k: Count,
    pub rmse_space: RmseSpace,
}

/// A count that is either given or derived by the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "CountRepr", into = "CountRepr")]
pub enum Count {
    #[default]
    Auto,
    Fixed(usize),
}

impl Count {
    pub fn resolve(self, auto: usize) -> usize {
        match self {
            Count::Auto => auto,
            Count::Fixed(n) => n,
        }
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Auto => f.write_str("auto"),
            Count::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CountRepr {
    Fixed(usize),
    Word(String),
}

impl TryFrom<CountRepr> for Count {
    type Error = String;

    fn try_from(r: CountRepr) -> std::result::Result<Self, String> {
        match r {
            CountRepr::Fixed(0) => Err("count must be at least 1".into()),
            CountRepr::Fixed(n) => Ok(Count::Fixed(n)),
            CountRepr::Word(w) if w == "auto" => Ok(Count::Auto),
            CountRepr::Word(w) => Err(format!("expected a number or \"auto\", got {w:?}")),
        }
    }
}

impl From<Count> for CountRepr {
    fn from(c: Count) -> Self {
        match c {
            Count::Auto => CountRepr::Word("auto".into()),
            Count::Fixed(n) => CountRepr::Fixed(n),
        }
    }
}

/// Patch clusters that hold pigment.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "ClustersRepr", into = "ClustersRepr")]
pub enum Clusters {
    /// Clusters far enough from the paper colour.
    #[default]
    Auto,
    List(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ClustersRepr {
    List(Vec<usize>),
    Word(String),
}

impl TryFrom<ClustersRepr> for Clusters {
    type Error = String;

    fn try_from(r: ClustersRepr) -> std::result::Result<Self, String> {
        match r {
            ClustersRepr::List(v) if v.is_empty() => Err("pigment cluster list is empty".into()),
            ClustersRepr::List(v) => Ok(Clusters::List(v)),
            ClustersRepr::Word(w) if w == "auto" => Ok(Clusters::Auto),
            ClustersRepr::Word(w) => Err(format!("expected a list of cluster ids or \"auto\", got {w:?}")),
        }
    }
}

impl From<Clusters> for ClustersRepr {
    fn from(c: Clusters) -> Self {
        match c {
            Clusters::Auto => ClustersRepr::Word("auto".into()),
            Clusters::List(v) => ClustersRepr::List(v),
        }
    }
}

impl PipelineConfig {
    /// A config with every tunable at its default.
    pub fn new(header: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, paper_pixel: (usize, usize)) -> Self {
        PipelineConfig {
            seed: 0,
            paper_pixel: [paper_pixel.0, paper_pixel.1],
            paths: Paths {
                header: header.into(),
                data: None,
                out_dir: out_dir.into(),
            },
            segmentation: SegmentationConfig::default(),
            endmembers: EndmemberConfig::default(),
            unmix: UnmixConfig::default(),
            classify: ClassifyConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::format(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.paths.header);
        if let Some(d) = cfg.paths.data.as_mut() {
            rebase(d);
        }
        rebase(&mut cfg.paths.out_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn paper_pixel(&self) -> (usize, usize) {
        (self.paper_pixel[0], self.paper_pixel[1])
    }

    /// Checks values that do not depend on the cube.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.segmentation.k == 0 {
            return bad("segmentation.k must be at least 1".into());
        }
        if !(self.segmentation.paper_delta_e >= 0.0) {
            return bad("segmentation.paper_delta_e must be non-negative".into());
        }
        if self.endmembers.m_max < 2 {
            return bad("endmembers.m_max must be at least 2".into());
        }
        if !(self.endmembers.tau_vol > 0.0 && self.endmembers.tau_vol < 1.0) {
            return bad(format!("endmembers.tau_vol must lie in (0, 1), got {}", self.endmembers.tau_vol));
        }
        if let Count::Fixed(n) = self.endmembers.count {
            if n > self.endmembers.m_max {
                return bad(format!(
                    "endmembers.count = {n} exceeds endmembers.m_max = {}",
                    self.endmembers.m_max
                ));
            }
        }
        if let Some(p) = self.segmentation.patch {
            if p.height == 0 || p.width == 0 {
                return bad("segmentation.patch is empty".into());
            }
        }
        Ok(())
    }
}
