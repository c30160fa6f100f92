//! Image and mask primitives: grayscale rasters in `[0, 1]`, binary crack
//! masks, box-filter downsampling, connected components, raster I/O, and
//! annotation rasterization.

mod annotation;
mod components;
mod io;

pub use annotation::{
    draw_polyline, load_annotation, rasterize_annotation, save_annotation, Annotation, Polyline,
};
pub use components::{connected_components, CrackComponent};
pub use io::{load_image, load_mask, save_image, save_mask};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported bit depth in {0}")]
    UnsupportedBitDepth(String),
    #[error("unsupported color type in {0} (expected 8-bit grayscale)")]
    UnsupportedColorType(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed {format} data: {detail}")]
    Malformed { format: &'static str, detail: String },
    #[error("image dimensions {width}x{height} overflow addressable size")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("mask pixel not 0 or 255 (found {value} at pixel index {index})")]
    MaskPixelNotBinary { value: u8, index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("downsample factor must be in (0, 1], got {0}")]
    BadDownsampleFactor(f64),
    #[error("intensity {value} at pixel index {index} outside [0, 1]")]
    IntensityOutOfRange { value: f32, index: usize },
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
}

/// Row-major grayscale raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    /// Build from row-major data; every value must be finite and in `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImagingError> {
        if data.len() != width * height {
            return Err(ImagingError::DimensionMismatch(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(ImagingError::IntensityOutOfRange { value, index });
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Copy the `size`x`size` window with top-left corner at `(top, left)`
    /// into a flat row-major buffer.
    pub fn patch_pixels(&self, top: usize, left: usize, size: usize) -> Vec<f32> {
        debug_assert!(top + size <= self.height && left + size <= self.width);
        let mut out = Vec::with_capacity(size * size);
        for r in top..top + size {
            out.extend_from_slice(&self.row(r)[left..left + size]);
        }
        out
    }
}

/// Row-major binary crack indicator, dimensioned like its paired image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        if bits.len() != width * height {
            return Err(ImagingError::DimensionMismatch(format!(
                "bit length {} != {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.height && col < self.width);
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.height && col < self.width);
        self.bits[row * self.width + col] = value;
    }

    /// Number of set pixels.
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Count set pixels inside the `m`x`n` window at `(top, left)`.
    pub fn count_ones_in(&self, top: usize, left: usize, m: usize, n: usize) -> usize {
        debug_assert!(top + m <= self.height && left + n <= self.width);
        let mut count = 0;
        for r in top..top + m {
            count += self.bits[r * self.width + left..r * self.width + left + n]
                .iter()
                .filter(|&&b| b)
                .count();
        }
        count
    }
}

/// Output dimension for a downsample factor: `round(dim * factor)`, at least 1.
fn scaled_dim(dim: usize, factor: f64) -> usize {
    ((dim as f64 * factor).round() as usize).max(1)
}

/// Shrink an image by `factor` in both dimensions with box-filter averaging.
///
/// The source raster is partitioned into one footprint per output pixel and
/// each output value is the mean of its footprint, accumulated in f64.
/// `factor == 1.0` returns an identical copy.
pub fn downsample(img: &GrayImage, factor: f64) -> Result<GrayImage, ImagingError> {
    if !factor.is_finite() || factor <= 0.0 || factor > 1.0 {
        return Err(ImagingError::BadDownsampleFactor(factor));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let out_w = scaled_dim(img.width, factor);
    let out_h = scaled_dim(img.height, factor);
    let mut data = Vec::with_capacity(out_w * out_h);
    for orow in 0..out_h {
        let r0 = orow * img.height / out_h;
        let r1 = (orow + 1) * img.height / out_h;
        for ocol in 0..out_w {
            let c0 = ocol * img.width / out_w;
            let c1 = (ocol + 1) * img.width / out_w;
            let mut sum = 0.0f64;
            for r in r0..r1 {
                for &v in &img.row(r)[c0..c1] {
                    sum += f64::from(v);
                }
            }
            let count = (r1 - r0) * (c1 - c0);
            data.push((sum / count as f64) as f32);
        }
    }
    GrayImage::new(out_w, out_h, data)
}

/// Shrink a mask by `factor` with any-set pooling: an output pixel is set if
/// any source pixel in its footprint is set. Keeps thin cracks visible at
/// reduced resolution, mirroring annotations that run wider than the crack.
pub fn downsample_mask(mask: &BinaryMask, factor: f64) -> Result<BinaryMask, ImagingError> {
    if !factor.is_finite() || factor <= 0.0 || factor > 1.0 {
        return Err(ImagingError::BadDownsampleFactor(factor));
    }
    if factor == 1.0 {
        return Ok(mask.clone());
    }
    let out_w = scaled_dim(mask.width, factor);
    let out_h = scaled_dim(mask.height, factor);
    let mut bits = Vec::with_capacity(out_w * out_h);
    for orow in 0..out_h {
        let r0 = orow * mask.height / out_h;
        let r1 = (orow + 1) * mask.height / out_h;
        for ocol in 0..out_w {
            let c0 = ocol * mask.width / out_w;
            let c1 = (ocol + 1) * mask.width / out_w;
            let any = (r0..r1).any(|r| mask.bits[r * mask.width + c0..r * mask.width + c1]
                .iter()
                .any(|&b| b));
            bits.push(any);
        }
    }
    BinaryMask::new(out_w, out_h, bits)
}
