//! Block-level energy compaction: each DCT block is reduced to a single
//! scalar computed from its AC coefficients, and the per-block scalars of an
//! image form its feature vector.
//!
//! With `c` the raster-scan coefficients of an `n x n` block and `K = n² - 1`,
//! summing over the AC terms only (the DC term at index 0 is always skipped):
//!
//! | method | value                      |
//! |--------|----------------------------|
//! | M1     | `Σ c²`                     |
//! | M2     | `Σ |c|`                    |
//! | M3     | `Σ c² / K`                 |
//! | M4     | `Σ |c| / K`                |
//! | M5     | `Σ |c - μ| / K`, `μ = Σ c / K` |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GrayImage;
use crate::transform::{
    crop_to_blocks, partition_blocks, zero_pad, BlockSize, DctBlock, DctPlan, TransformError,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("cannot fit scaling on an empty set of vectors")]
    Empty,
    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown compaction method {0:?} (expected m1..m5)")]
    UnknownMethod(String),
    #[error("unknown block geometry {0:?} (expected padded or cropped)")]
    UnknownGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompactionMethod {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl CompactionMethod {
    pub const ALL: [CompactionMethod; 5] = [Self::M1, Self::M2, Self::M3, Self::M4, Self::M5];
}

impl fmt::Display for CompactionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::M1 => "M1",
            Self::M2 => "M2",
            Self::M3 => "M3",
            Self::M4 => "M4",
            Self::M5 => "M5",
        };
        f.write_str(s)
    }
}

impl FromStr for CompactionMethod {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Self::M1),
            "m2" => Ok(Self::M2),
            "m3" => Ok(Self::M3),
            "m4" => Ok(Self::M4),
            "m5" => Ok(Self::M5),
            _ => Err(FeatureError::UnknownMethod(s.to_string())),
        }
    }
}

/// How an image that is not block-aligned is brought to a block multiple.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockGeometry {
    /// Zero-pad right and bottom (12x14 = 168 blocks of 8x8 on 92x112).
    #[default]
    Padded,
    /// Crop right and bottom (11x14 = 154 blocks of 8x8 on 92x112).
    Cropped,
}

impl fmt::Display for BlockGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Padded => "padded",
            Self::Cropped => "cropped",
        })
    }
}

impl FromStr for BlockGeometry {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "padded" => Ok(Self::Padded),
            "cropped" => Ok(Self::Cropped),
            _ => Err(FeatureError::UnknownGeometry(s.to_string())),
        }
    }
}

/// Number of blocks an image of the given size produces.
pub fn feature_dim(width: usize, height: usize, n: BlockSize, geometry: BlockGeometry) -> usize {
    let n = n.get();
    match geometry {
        BlockGeometry::Padded => width.div_ceil(n) * height.div_ceil(n),
        BlockGeometry::Cropped => (width / n) * (height / n),
    }
}

/// Compacts one block's AC spectrum into a scalar.
pub fn compact(method: CompactionMethod, block: &DctBlock) -> f64 {
    let ac = block.ac();
    let k = ac.len() as f64;
    match method {
        CompactionMethod::M1 | CompactionMethod::M3 => {
            let sum_sq: f64 = ac.iter().map(|c| c * c).sum();
            if method == CompactionMethod::M1 {
                sum_sq
            } else {
                sum_sq / k
            }
        }
        CompactionMethod::M2 | CompactionMethod::M4 => {
            let sum_abs: f64 = ac.iter().map(|c| c.abs()).sum();
            if method == CompactionMethod::M2 {
                sum_abs
            } else {
                sum_abs / k
            }
        }
        CompactionMethod::M5 => {
            let mean = ac.iter().sum::<f64>() / k;
            ac.iter().map(|c| (c - mean).abs()).sum::<f64>() / k
        }
    }
}

/// Per-block compacted coefficients of one image, in row-major block order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub method: CompactionMethod,
    pub block_size: BlockSize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reusable extractor holding the DCT plan for one block size.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    plan: DctPlan,
    method: CompactionMethod,
    geometry: BlockGeometry,
}

impl FeatureExtractor {
    pub fn new(n: BlockSize, method: CompactionMethod, geometry: BlockGeometry) -> Self {
        Self {
            plan: DctPlan::new(n),
            method,
            geometry,
        }
    }

    pub fn extract(&self, img: &GrayImage) -> Result<FeatureVector, FeatureError> {
        let n = self.plan.block_size();
        let aligned = match self.geometry {
            BlockGeometry::Padded => zero_pad(img, n),
            BlockGeometry::Cropped => crop_to_blocks(img, n)?,
        };
        let grid = partition_blocks(&aligned, n)?;
        let values = grid
            .blocks
            .iter()
            .map(|tile| compact(self.method, &self.plan.forward(tile)))
            .collect();
        Ok(FeatureVector {
            values,
            method: self.method,
            block_size: n,
        })
    }
}

/// Zero-pad, partition, transform, and compact one image.
pub fn extract_features(
    img: &GrayImage,
    n: BlockSize,
    method: CompactionMethod,
) -> Result<FeatureVector, FeatureError> {
    FeatureExtractor::new(n, method, BlockGeometry::Padded).extract(img)
}

/// Per-dimension training ranges for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalingParams {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }
}

/// Fits per-dimension min and max over the given (training) vectors.
pub fn fit_scaling<'a, I>(train_vectors: I) -> Result<ScalingParams, FeatureError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = train_vectors.into_iter();
    let first = iter.next().ok_or(FeatureError::Empty)?;
    let mut mins = first.to_vec();
    let mut maxs = first.to_vec();
    for v in iter {
        if v.len() != mins.len() {
            return Err(FeatureError::DimensionMismatch {
                expected: mins.len(),
                found: v.len(),
            });
        }
        for ((lo, hi), &x) in mins.iter_mut().zip(maxs.iter_mut()).zip(v) {
            *lo = lo.min(x);
            *hi = hi.max(x);
        }
    }
    Ok(ScalingParams { mins, maxs })
}

/// Maps each dimension to `[0, 1]` by its training range, clamping values
/// outside it. Constant dimensions map to 0.
pub fn apply_scaling(v: &[f64], p: &ScalingParams) -> Result<Vec<f64>, FeatureError> {
    if v.len() != p.dim() {
        return Err(FeatureError::DimensionMismatch {
            expected: p.dim(),
            found: v.len(),
        });
    }
    Ok(v.iter()
        .zip(p.mins.iter().zip(&p.maxs))
        .map(|(&x, (&lo, &hi))| {
            if hi > lo {
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect())
}
