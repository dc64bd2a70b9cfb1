//! Raster primitives shared by the whole pipeline: RGB images, binary
//! instance masks, probability maps, and pixel-exact operations on them.
//!
//! Coordinates are column-major `x`, row-major `y`, origin at the top-left
//! pixel; every raster is stored row-major and tightly packed.

use crate::error::{Error, Result};

/// Position of one pixel; `x` indexes columns, `y` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelCoord {
    pub x: u32,
    pub y: u32,
}

impl PixelCoord {
    pub fn new(x: u32, y: u32) -> Self {
        PixelCoord { x, y }
    }
}

/// 8-bit RGB image, rows packed `R G B R G B …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRGB {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageRGB {
    /// Wraps raw interleaved bytes; `data.len()` must equal `3 * width * height`.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size", "zero width or height"));
        }
        let expect = 3 * width as usize * height as usize;
        if data.len() != expect {
            return Err(Error::invalid(
                "image buffer",
                format!("expected {expect} bytes, got {}", data.len()),
            ));
        }
        Ok(ImageRGB { width, height, data })
    }

    /// Constant-color image.
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(3 * n);
        for _ in 0..n {
            data.extend_from_slice(&color);
        }
        ImageRGB { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&color);
    }
}

/// Single-instance foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask must have nonzero size");
        BinaryMask { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask size", "zero width or height"));
        }
        if bits.len() != width as usize * height as usize {
            return Err(Error::invalid(
                "mask buffer",
                format!("expected {} bits, got {}", width as usize * height as usize, bits.len()),
            ));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = BinaryMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                m.set(x, y, v);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground, if any.
    pub fn tight_bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then_some((x0, y0, x1, y1))
    }

    /// Foreground coordinates in row-major scan order.
    pub fn foreground(&self) -> Vec<PixelCoord> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.push(PixelCoord::new(x, y));
                }
            }
        }
        out
    }
}

/// Per-pixel foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl ProbMap {
    pub fn from_values(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("probability map size", "zero width or height"));
        }
        if values.len() != width as usize * height as usize {
            return Err(Error::invalid(
                "probability map buffer",
                format!(
                    "expected {} values, got {}",
                    width as usize * height as usize,
                    values.len()
                ),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid("probability value", format!("{v} outside [0, 1]")));
        }
        Ok(ProbMap { width, height, values })
    }

    /// 0/1 probabilities mirroring a mask.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        ProbMap {
            width: mask.width(),
            height: mask.height(),
            values: mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Central `side`-square crop at offset `(margin, margin)`; used to strip
    /// context padding off a refined patch.
    pub fn central_crop(&self, margin: u32, side: u32) -> ProbMap {
        assert!(margin + side <= self.width && margin + side <= self.height);
        let mut values = Vec::with_capacity(side as usize * side as usize);
        for y in 0..side {
            for x in 0..side {
                values.push(self.get(margin + x, margin + y));
            }
        }
        ProbMap { width: side, height: side, values }
    }
}

/// One segmented object: identity, category, detection score, and its mask.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: u32,
    pub category_id: u32,
    pub score: f32,
    pub mask: BinaryMask,
}

/// An image together with predicted instances and optional ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: ImageRGB,
    pub predictions: Vec<Instance>,
    pub ground_truth: Option<Vec<Instance>>,
}

impl Scene {
    /// Checks mask shapes against the image and id uniqueness within each list.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.image.width(), self.image.height());
        let check = |insts: &[Instance], what: &'static str| -> Result<()> {
            let mut ids: Vec<u32> = insts.iter().map(|i| i.id).collect();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() != insts.len() {
                return Err(Error::invalid(what, "duplicate instance ids"));
            }
            for inst in insts {
                if inst.mask.width() != w || inst.mask.height() != h {
                    return Err(Error::DimensionMismatch(
                        inst.mask.width(),
                        inst.mask.height(),
                        w,
                        h,
                    ));
                }
            }
            Ok(())
        };
        check(&self.predictions, "predictions")?;
        if let Some(gt) = &self.ground_truth {
            check(gt, "ground truth")?;
        }
        Ok(())
    }
}

/// Foreground pixels that touch background through a 4-connected edge.
///
/// Pixels beyond the grid count as background, so foreground on the image
/// border is always part of the boundary. Only foreground pixels are
/// returned (background pixels adjacent to the object are not), in row-major
/// scan order.
pub fn boundary_pixels(mask: &BinaryMask) -> Vec<PixelCoord> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x == w - 1
                || y == h - 1
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if edge {
                out.push(PixelCoord::new(x, y));
            }
        }
    }
    out
}

/// Intersection-over-union of two same-shape masks.
///
/// Two empty masks compare as identical (IoU 1.0).
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f32> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok((inter as f64 / union as f64) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Dilate,
    Erode,
}

/// Morphology with a discrete Euclidean disk: the structuring element is
/// every offset `(dx, dy)` with `dx² + dy² ≤ radius²`, so radius 0 is the
/// identity and radius 1 is the 4-connected cross. Pixels beyond the grid
/// count as background, which makes erosion shave foreground that touches
/// the image border.
pub fn morph(mask: &BinaryMask, op: MorphOp, radius: u32) -> BinaryMask {
    let r = radius as i64;
    let mut disk = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                disk.push((dx, dy));
            }
        }
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        match op {
            MorphOp::Dilate => disk.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as u32, ny as u32)
            }),
            MorphOp::Erode => disk.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as u32, ny as u32)
            }),
        }
    })
}
