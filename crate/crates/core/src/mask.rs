//! Segmentation mask types, mask file I/O and block-majority downsampling.
//!
//! Masks are stored row-major with row 0 at the top of the image, matching the
//! on-disk layout of PGM/PNG files. Pixel values on disk are the class codes
//! themselves (0 = void, 1 = traversable, 2 = untraversable), so mask files
//! need no palette.

use std::fmt;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-pixel terrain class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum SegClass {
    Void = 0,
    Traversable = 1,
    Untraversable = 2,
}

impl SegClass {
    pub const ALL: [SegClass; 3] = [SegClass::Void, SegClass::Traversable, SegClass::Untraversable];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SegClass::Void),
            1 => Some(SegClass::Traversable),
            2 => Some(SegClass::Untraversable),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Rank used to break majority ties when downsampling: untraversable wins
    /// over traversable, which wins over void.
    fn tie_priority(self) -> u8 {
        match self {
            SegClass::Untraversable => 2,
            SegClass::Traversable => 1,
            SegClass::Void => 0,
        }
    }
}

impl fmt::Display for SegClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SegClass::Void => "void",
            SegClass::Traversable => "traversable",
            SegClass::Untraversable => "untraversable",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask dimensions must be at least 1x1 (got {width}x{height})")]
    EmptyDimensions { width: usize, height: usize },
    #[error("mask data has {actual} pixels, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("mask file not found: {0}")]
    MissingFile(String),
    #[error("malformed mask image {path}: {reason}")]
    MalformedImage { path: String, reason: String },
    #[error("illegal class value {value} at ({x}, {y})")]
    IllegalClassValue { x: usize, y: usize, value: u8 },
    #[error("downsample factor must be >= 1")]
    ZeroFactor,
    #[error("i/o failure on {path}: {reason}")]
    IoFailure { path: String, reason: String },
}

/// Identifies one perception frame within a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStamp {
    pub sequence: u64,
    /// Seconds since the start of the run.
    pub time: f64,
}

impl FrameStamp {
    pub fn new(sequence: u64, time: f64) -> Self {
        Self { sequence, time }
    }

    /// Stamp for frame `sequence` of a producer running at `rate_hz`.
    pub fn at_rate(sequence: u64, rate_hz: f64) -> Self {
        Self { sequence, time: sequence as f64 / rate_hz }
    }
}

/// Row-major grid of [`SegClass`] labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    data: Vec<SegClass>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, data: Vec<SegClass>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        let expected = width * height;
        if data.len() != expected {
            return Err(MaskError::LengthMismatch { expected, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, class: SegClass) -> Result<Self, MaskError> {
        Self::new(width, height, vec![class; width * height])
    }

    /// Builds a mask from raw class codes, rejecting anything outside {0, 1, 2}.
    pub fn from_codes(width: usize, height: usize, codes: &[u8]) -> Result<Self, MaskError> {
        let data = codes
            .iter()
            .enumerate()
            .map(|(i, &value)| {
                SegClass::from_code(value).ok_or(MaskError::IllegalClassValue {
                    x: i % width.max(1),
                    y: i / width.max(1),
                    value,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(width, height, data)
    }

    /// Builds a mask by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> SegClass,
    ) -> Result<Self, MaskError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[SegClass] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [SegClass] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> SegClass {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: SegClass) {
        self.data[y * self.width + x] = class;
    }

    pub fn row(&self, y: usize) -> &[SegClass] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn codes(&self) -> Vec<u8> {
        self.data.iter().map(|c| c.code()).collect()
    }

    pub fn count(&self, class: SegClass) -> usize {
        self.data.iter().filter(|&&c| c == class).count()
    }

    /// Mirror image about the vertical axis.
    pub fn flip_horizontal(&self) -> SegMask {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            data.extend(self.row(y).iter().rev());
        }
        SegMask { width: self.width, height: self.height, data }
    }
}

fn path_string(path: &Path) -> String {
    path.display().to_string()
}

/// Reads an 8-bit single-channel PGM or PNG mask.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SegMask, MaskError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(MaskError::MissingFile(path_string(path)));
    }
    let malformed = |reason: String| MaskError::MalformedImage { path: path_string(path), reason };
    let reader = ImageReader::open(path)
        .map_err(|e| MaskError::IoFailure { path: path_string(path), reason: e.to_string() })?
        .with_guessed_format()
        .map_err(|e| malformed(e.to_string()))?;
    let decoded = reader.decode().map_err(|e| malformed(e.to_string()))?;
    let gray = match decoded {
        DynamicImage::ImageLuma8(gray) => gray,
        other => return Err(malformed(format!("expected 8-bit single channel, got {:?}", other.color()))),
    };
    let (width, height) = (gray.width() as usize, gray.height() as usize);
    SegMask::from_codes(width, height, gray.as_raw())
}

/// Writes `mask` as PNG when the extension is `.png`, otherwise as binary PGM (P5).
pub fn save_mask(mask: &SegMask, path: impl AsRef<Path>) -> Result<(), MaskError> {
    let path = path.as_ref();
    let io_err = |reason: String| MaskError::IoFailure { path: path_string(path), reason };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(e.to_string()))?;
    }
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        let img = GrayImage::from_raw(mask.width as u32, mask.height as u32, mask.codes())
            .ok_or_else(|| io_err("buffer size mismatch".into()))?;
        img.save_with_format(path, ImageFormat::Png).map_err(|e| io_err(e.to_string()))
    } else {
        let mut bytes = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
        bytes.extend(mask.codes());
        std::fs::write(path, bytes).map_err(|e| io_err(e.to_string()))
    }
}

/// Block-majority downsampling. Output dimensions are `ceil(dim / factor)`;
/// edge blocks may be partial. Ties resolve untraversable > traversable > void.
pub fn downsample(mask: &SegMask, factor: usize) -> Result<SegMask, MaskError> {
    if factor == 0 {
        return Err(MaskError::ZeroFactor);
    }
    if factor == 1 {
        return Ok(mask.clone());
    }
    let out_w = mask.width.div_ceil(factor);
    let out_h = mask.height.div_ceil(factor);
    let mut out = Vec::with_capacity(out_w * out_h);
    for by in 0..out_h {
        let y0 = by * factor;
        let y1 = (y0 + factor).min(mask.height);
        for bx in 0..out_w {
            let x0 = bx * factor;
            let x1 = (x0 + factor).min(mask.width);
            let mut counts = [0usize; 3];
            for y in y0..y1 {
                for &c in &mask.row(y)[x0..x1] {
                    counts[c.index()] += 1;
                }
            }
            out.push(majority(&counts));
        }
    }
    SegMask::new(out_w, out_h, out)
}

fn majority(counts: &[usize; 3]) -> SegClass {
    SegClass::ALL
        .into_iter()
        .max_by_key(|c| (counts[c.index()], c.tie_priority()))
        .unwrap_or(SegClass::Void)
}
