//! Block partitioning and the orthonormal 2-D DCT-II.
//!
//! Images are zero-padded on the right and bottom to a multiple of the block
//! edge, split into row-major `n x n` tiles, and each tile is transformed with
//! a separable row/column DCT built from a precomputed cosine basis. The
//! transform is orthonormal, so coefficient energy equals pixel energy.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GrayImage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("block size must be a power of two ≥ 8, got {0}")]
    InvalidBlockSize(usize),
    #[error("{width}x{height} image is not divisible into {n}x{n} blocks")]
    NotDivisible { width: usize, height: usize, n: usize },
    #[error("{width}x{height} image is smaller than one {n}x{n} block")]
    TooSmall { width: usize, height: usize, n: usize },
    #[error("expected {expected} values for a block, got {found}")]
    BadLength { expected: usize, found: usize },
    #[error("block values must be finite")]
    NonFinite,
}

/// Edge length of a square block; a power of two no smaller than 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct BlockSize(usize);

impl BlockSize {
    pub const N8: BlockSize = BlockSize(8);
    pub const N16: BlockSize = BlockSize(16);
    pub const N32: BlockSize = BlockSize(32);

    pub fn new(n: usize) -> Result<Self, TransformError> {
        if n >= 8 && n.is_power_of_two() {
            Ok(Self(n))
        } else {
            Err(TransformError::InvalidBlockSize(n))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Coefficients per block, `n²`.
    pub fn area(self) -> usize {
        self.0 * self.0
    }
}

impl TryFrom<usize> for BlockSize {
    type Error = TransformError;

    fn try_from(n: usize) -> Result<Self, Self::Error> {
        Self::new(n)
    }
}

impl From<BlockSize> for usize {
    fn from(b: BlockSize) -> usize {
        b.0
    }
}

impl fmt::Display for BlockSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{0}x{0}", self.0)
    }
}

/// An `n x n` block of spatial samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    n: BlockSize,
    values: Vec<f64>,
}

impl Tile {
    pub fn new(n: BlockSize, values: Vec<f64>) -> Result<Self, TransformError> {
        if values.len() != n.area() {
            return Err(TransformError::BadLength {
                expected: n.area(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TransformError::NonFinite);
        }
        Ok(Self { n, values })
    }

    pub fn block_size(&self) -> BlockSize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Raster-scan DCT coefficients of one block. Index 0 is the DC term.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBlock {
    n: BlockSize,
    coeffs: Vec<f64>,
}

impl DctBlock {
    pub fn new(n: BlockSize, coeffs: Vec<f64>) -> Result<Self, TransformError> {
        if coeffs.len() != n.area() {
            return Err(TransformError::BadLength {
                expected: n.area(),
                found: coeffs.len(),
            });
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(TransformError::NonFinite);
        }
        Ok(Self { n, coeffs })
    }

    pub fn block_size(&self) -> BlockSize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn dc(&self) -> f64 {
        self.coeffs[0]
    }

    /// All coefficients after the DC term, in raster order.
    pub fn ac(&self) -> &[f64] {
        &self.coeffs[1..]
    }
}

/// Row-major grid of tiles covering a block-aligned image.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub n: BlockSize,
    pub blocks: Vec<Tile>,
}

impl BlockGrid {
    /// Stitches the tiles back into a row-major `(width, height, pixels)` raster.
    pub fn reassemble(&self) -> (usize, usize, Vec<f64>) {
        let n = self.n.get();
        let width = self.blocks_x * n;
        let height = self.blocks_y * n;
        let mut out = vec![0.0; width * height];
        for (b, tile) in self.blocks.iter().enumerate() {
            let (bx, by) = (b % self.blocks_x, b / self.blocks_x);
            for r in 0..n {
                let dst = (by * n + r) * width + bx * n;
                out[dst..dst + n].copy_from_slice(&tile.values[r * n..(r + 1) * n]);
            }
        }
        (width, height, out)
    }
}

fn next_multiple(v: usize, n: usize) -> usize {
    v.div_ceil(n) * n
}

/// Pads right and bottom with zeros up to the next multiple of `n`.
pub fn zero_pad(img: &GrayImage, n: BlockSize) -> GrayImage {
    let n = n.get();
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (next_multiple(w, n), next_multiple(h, n));
    if (pw, ph) == (w, h) {
        return img.clone();
    }
    let mut pixels = vec![0u8; pw * ph];
    for (y, row) in img.pixels().chunks_exact(w).enumerate() {
        pixels[y * pw..y * pw + w].copy_from_slice(row);
    }
    GrayImage::new(pw, ph, pixels).expect("padded dimensions are consistent")
}

/// Crops right and bottom down to the largest multiple of `n`.
pub fn crop_to_blocks(img: &GrayImage, n: BlockSize) -> Result<GrayImage, TransformError> {
    let n = n.get();
    let (w, h) = (img.width(), img.height());
    let (cw, ch) = ((w / n) * n, (h / n) * n);
    if cw == 0 || ch == 0 {
        return Err(TransformError::TooSmall {
            width: w,
            height: h,
            n,
        });
    }
    let pixels = img
        .pixels()
        .chunks_exact(w)
        .take(ch)
        .flat_map(|row| &row[..cw])
        .copied()
        .collect();
    Ok(GrayImage::new(cw, ch, pixels).expect("cropped dimensions are consistent"))
}

/// Splits a block-aligned image into row-major tiles.
pub fn partition_blocks(img: &GrayImage, n: BlockSize) -> Result<BlockGrid, TransformError> {
    let size = n.get();
    let (w, h) = (img.width(), img.height());
    if w % size != 0 || h % size != 0 {
        return Err(TransformError::NotDivisible {
            width: w,
            height: h,
            n: size,
        });
    }
    let (blocks_x, blocks_y) = (w / size, h / size);
    let mut blocks = Vec::with_capacity(blocks_x * blocks_y);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let mut values = Vec::with_capacity(n.area());
            for r in 0..size {
                let start = (by * size + r) * w + bx * size;
                values.extend(img.pixels()[start..start + size].iter().map(|&p| f64::from(p)));
            }
            blocks.push(Tile { n, values });
        }
    }
    Ok(BlockGrid {
        blocks_x,
        blocks_y,
        n,
        blocks,
    })
}

/// Precomputed orthonormal DCT-II basis for one block size.
///
/// `basis[u * n + x] = α(u) cos((2x + 1) u π / 2n)` with `α(0) = √(1/n)` and
/// `α(u) = √(2/n)` otherwise. The forward 2-D transform is `B F Bᵀ`, the
/// inverse `Bᵀ C B`.
#[derive(Debug, Clone)]
pub struct DctPlan {
    n: BlockSize,
    basis: Vec<f64>,
}

impl DctPlan {
    pub fn new(n: BlockSize) -> Self {
        let size = n.get();
        let nf = size as f64;
        let mut basis = Vec::with_capacity(n.area());
        for u in 0..size {
            let alpha = if u == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for x in 0..size {
                basis.push(alpha * ((2 * x + 1) as f64 * u as f64 * PI / (2.0 * nf)).cos());
            }
        }
        Self { n, basis }
    }

    pub fn block_size(&self) -> BlockSize {
        self.n
    }

    // out[u][v] = Σ_x Σ_y A[u][x] in[x][y] A[v][y], with A = basis or basisᵀ
    fn separable(&self, input: &[f64], transpose: bool) -> Vec<f64> {
        let n = self.n.get();
        let a = |i: usize, j: usize| {
            if transpose {
                self.basis[j * n + i]
            } else {
                self.basis[i * n + j]
            }
        };
        // rows first: tmp[x][v] = Σ_y in[x][y] A[v][y]
        let mut tmp = vec![0.0; n * n];
        for x in 0..n {
            let row = &input[x * n..(x + 1) * n];
            for v in 0..n {
                let mut acc = 0.0;
                for (y, &val) in row.iter().enumerate() {
                    acc += val * a(v, y);
                }
                tmp[x * n + v] = acc;
            }
        }
        // columns: out[u][v] = Σ_x A[u][x] tmp[x][v]
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for x in 0..n {
                let coef = a(u, x);
                let src = &tmp[x * n..(x + 1) * n];
                for (o, &t) in out[u * n..(u + 1) * n].iter_mut().zip(src) {
                    *o += coef * t;
                }
            }
        }
        out
    }

    pub fn forward(&self, tile: &Tile) -> DctBlock {
        assert_eq!(tile.n, self.n, "tile size does not match plan");
        DctBlock {
            n: self.n,
            coeffs: self.separable(&tile.values, false),
        }
    }

    pub fn inverse(&self, block: &DctBlock) -> Tile {
        assert_eq!(block.n, self.n, "block size does not match plan");
        Tile {
            n: self.n,
            values: self.separable(&block.coeffs, true),
        }
    }
}

/// Orthonormal 2-D DCT-II of one tile.
pub fn dct2d(tile: &Tile) -> DctBlock {
    DctPlan::new(tile.n).forward(tile)
}

/// Inverse of [`dct2d`].
pub fn idct2d(block: &DctBlock) -> Tile {
    DctPlan::new(block.n).inverse(block)
}
