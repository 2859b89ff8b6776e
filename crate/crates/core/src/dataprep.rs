//! Dataset preparation: urban label relabeling to three classes, rectangle
//! box labels, weighted dataset sampling and class-safe augmentations.

use std::collections::BTreeMap;
use std::path::Path;

use image::{DynamicImage, ImageReader};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{MaskError, SegClass, SegMask};

/// Largest source id covered by the default urban label map.
pub const MAX_SOURCE_ID: u8 = 33;
pub const FLIP_PROBABILITY: f64 = 0.5;
pub const MAX_ROTATION_DEG: f64 = 5.0;

#[derive(Debug, Error)]
pub enum DataprepError {
    #[error("source id {id} at ({x}, {y}) has no mapping")]
    UnmappedId { id: u8, x: usize, y: usize },
    #[error("box {index} ({x}, {y}, {w}, {h}) does not fit a {width}x{height} image")]
    BoxOutOfBounds { index: usize, x: usize, y: usize, w: usize, h: usize, width: usize, height: usize },
    #[error("both datasets are empty")]
    EmptyDataset,
    #[error("sample weights must be positive")]
    InvalidWeights,
    #[error("label map: {0}")]
    LabelMap(String),
    #[error("box csv: {0}")]
    BoxCsv(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Grid of raw source class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u8>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize, ids: Vec<u8>) -> Result<Self, DataprepError> {
        if width == 0 || height == 0 || ids.len() != width * height {
            return Err(MaskError::LengthMismatch { expected: width * height, actual: ids.len() }.into());
        }
        Ok(Self { width, height, ids })
    }

    /// Loads an 8-bit single-channel image of class ids.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataprepError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        if !path.exists() {
            return Err(MaskError::MissingFile(shown).into());
        }
        let img = ImageReader::open(path)
            .map_err(|e| MaskError::IoFailure { path: shown.clone(), reason: e.to_string() })?
            .with_guessed_format()
            .map_err(|e| MaskError::MalformedImage { path: shown.clone(), reason: e.to_string() })?
            .decode()
            .map_err(|e| MaskError::MalformedImage { path: shown.clone(), reason: e.to_string() })?;
        match img {
            DynamicImage::ImageLuma8(g) => Self::new(g.width() as usize, g.height() as usize, g.into_raw()),
            other => Err(MaskError::MalformedImage {
                path: shown,
                reason: format!("expected 8-bit single channel, got {:?}", other.color()),
            }
            .into()),
        }
    }
}

/// Mapping from source class ids to the three navigation classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub name: String,
    pub mapping: BTreeMap<u8, SegClass>,
}

impl Default for LabelMap {
    /// Urban-scene ids 0..=33: walkable surfaces are traversable; vegetation,
    /// terrain and people are not; everything else is void.
    fn default() -> Self {
        use SegClass::*;
        let traversable = [6u8, 7, 8, 9]; // ground, road, sidewalk, parking
        let untraversable = [21u8, 22, 24, 25]; // vegetation, terrain, person, rider
        let mapping = (0..=MAX_SOURCE_ID)
            .map(|id| {
                let class = if traversable.contains(&id) {
                    Traversable
                } else if untraversable.contains(&id) {
                    Untraversable
                } else {
                    Void
                };
                (id, class)
            })
            .collect();
        Self { name: "urban-34-to-3".into(), mapping }
    }
}

impl LabelMap {
    pub fn from_json(text: &str) -> Result<Self, DataprepError> {
        serde_json::from_str(text).map_err(|e| DataprepError::LabelMap(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataprepError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| DataprepError::LabelMap(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn get(&self, id: u8) -> Option<SegClass> {
        self.mapping.get(&id).copied()
    }
}

pub fn relabel(source: &LabelGrid, map: &LabelMap) -> Result<SegMask, DataprepError> {
    let mut lut: [Option<SegClass>; 256] = [None; 256];
    for (&id, &class) in &map.mapping {
        lut[id as usize] = Some(class);
    }
    let data = source
        .ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            lut[id as usize].ok_or(DataprepError::UnmappedId { id, x: i % source.width, y: i / source.width })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SegMask::new(source.width, source.height, data)?)
}

/// Axis-aligned traversable label rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxLabel {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Rasterizes box labels: inside any box is traversable, everything else is
/// void (unlabeled, not negative).
pub fn boxes_to_mask(boxes: &[BoxLabel], size: (usize, usize)) -> Result<SegMask, DataprepError> {
    let (width, height) = size;
    let mut mask = SegMask::filled(width, height, SegClass::Void)?;
    for (index, b) in boxes.iter().enumerate() {
        if b.w == 0 || b.h == 0 || b.x + b.w > width || b.y + b.h > height {
            return Err(DataprepError::BoxOutOfBounds { index, x: b.x, y: b.y, w: b.w, h: b.h, width, height });
        }
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                mask.set(x, y, SegClass::Traversable);
            }
        }
    }
    Ok(mask)
}

/// Parses `image,x,y,w,h` rows (with header) into per-image box lists,
/// preserving first-appearance order of images.
pub fn parse_box_csv(text: &str) -> Result<Vec<(String, Vec<BoxLabel>)>, DataprepError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| DataprepError::BoxCsv("empty file".into()))?;
    let cols: Vec<_> = header.split(',').map(str::trim).collect();
    if cols != ["image", "x", "y", "w", "h"] {
        return Err(DataprepError::BoxCsv(format!("unexpected header {header:?}")));
    }
    let mut out: Vec<(String, Vec<BoxLabel>)> = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<_> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(DataprepError::BoxCsv(format!("row {}: expected 5 fields", n + 2)));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| DataprepError::BoxCsv(format!("row {}: {e}", n + 2)));
        let b = BoxLabel { x: num(fields[1])?, y: num(fields[2])?, w: num(fields[3])?, h: num(fields[4])? };
        match out.iter_mut().find(|(name, _)| name == fields[0]) {
            Some((_, v)) => v.push(b),
            None => out.push((fields[0].to_string(), vec![b])),
        }
    }
    Ok(out)
}

/// Replayable description of one augmentation draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub flipped: bool,
    pub rotation_deg: f64,
    /// Intensity normalization applied to the paired RGB frame; masks carry
    /// classes and are not rescaled.
    pub rgb_normalization: String,
}

impl AugmentRecord {
    pub fn identity() -> Self {
        Self { flipped: false, rotation_deg: 0.0, rgb_normalization: "[0,1]".into() }
    }
}

/// Draws flip (p = 0.5) and rotation (uniform in [-5, 5] degrees).
pub fn draw_augment<R: Rng + ?Sized>(rng: &mut R) -> AugmentRecord {
    let flipped = rng.random_bool(FLIP_PROBABILITY);
    let rotation_deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
    AugmentRecord { flipped, rotation_deg, rgb_normalization: "[0,1]".into() }
}

/// Applies a recorded augmentation: horizontal flip, then rotation about the
/// image center with nearest-neighbour sampling; pixels rotated in from
/// outside the frame become void.
pub fn apply_augment(mask: &SegMask, record: &AugmentRecord) -> SegMask {
    let src = if record.flipped { mask.flip_horizontal() } else { mask.clone() };
    if record.rotation_deg == 0.0 {
        return src;
    }
    let (w, h) = (src.width(), src.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = record.rotation_deg.to_radians().sin_cos();
    SegMask::from_fn(w, h, |x, y| {
        // Inverse map output pixel to source.
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let sx = (cos * dx + sin * dy + cx).round();
        let sy = (-sin * dx + cos * dy + cy).round();
        if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
            SegClass::Void
        } else {
            src.get(sx as usize, sy as usize)
        }
    })
    .expect("dimensions preserved")
}

pub fn augment<R: Rng + ?Sized>(mask: &SegMask, rng: &mut R) -> (SegMask, AugmentRecord) {
    let record = draw_augment(rng);
    (apply_augment(mask, &record), record)
}

/// Per-item sampling weights for the garden and urban datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleWeights {
    pub garden_weight: u32,
    pub cityscape_weight: u32,
}

impl Default for SampleWeights {
    fn default() -> Self {
        Self { garden_weight: 2, cityscape_weight: 1 }
    }
}

impl SampleWeights {
    /// Weight ratio in lowest terms.
    pub fn ratio(&self) -> (u32, u32) {
        fn gcd(a: u32, b: u32) -> u32 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(self.garden_weight, self.cityscape_weight).max(1);
        (self.garden_weight / g, self.cityscape_weight / g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleIndex {
    Garden(usize),
    City(usize),
}

/// Draws `epoch_len` indices with replacement; each garden item carries
/// `garden_weight` probability mass and each urban item `cityscape_weight`.
pub fn weighted_indices<R: Rng + ?Sized>(
    n_garden: usize,
    n_city: usize,
    weights: SampleWeights,
    epoch_len: usize,
    rng: &mut R,
) -> Result<Vec<SampleIndex>, DataprepError> {
    if n_garden + n_city == 0 {
        return Err(DataprepError::EmptyDataset);
    }
    if weights.garden_weight == 0 || weights.cityscape_weight == 0 {
        return Err(DataprepError::InvalidWeights);
    }
    let garden_mass = n_garden as u64 * weights.garden_weight as u64;
    let total = garden_mass + n_city as u64 * weights.cityscape_weight as u64;
    Ok((0..epoch_len)
        .map(|_| {
            let u = rng.random_range(0..total);
            if u < garden_mass {
                SampleIndex::Garden((u / weights.garden_weight as u64) as usize)
            } else {
                SampleIndex::City(((u - garden_mass) / weights.cityscape_weight as u64) as usize)
            }
        })
        .collect())
}
