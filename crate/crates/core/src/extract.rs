//! Boundary patch extraction: places square boxes along a mask's predicted
//! boundary (or on a regular grid, or around the whole instance), thins them
//! with greedy non-maximum suppression, and crops the image/mask content.

use crate::error::{Error, Result};
use crate::mask::{boundary_pixels, BinaryMask, ImageRGB, PixelCoord};

/// Axis-aligned square in pixel units covering `[x, x+size) × [y, y+size)`.
///
/// The origin may lie outside the image: boxes centered near the border
/// simply hang over the edge, and crops zero-fill the missing part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SquareBox {
    pub x: i64,
    pub y: i64,
    pub size: u32,
}

impl SquareBox {
    /// Box of even side `size` whose central cell block covers `center`: the
    /// top-left corner sits at `center − size/2`.
    pub fn centered(center: PixelCoord, size: u32) -> Self {
        let half = (size / 2) as i64;
        SquareBox { x: center.x as i64 - half, y: center.y as i64 - half, size }
    }

    /// Intersection-over-union of the two squares' pixel areas.
    pub fn iou(&self, other: &SquareBox) -> f64 {
        let ix = (self.x + self.size as i64).min(other.x + other.size as i64)
            - self.x.max(other.x);
        let iy = (self.y + self.size as i64).min(other.y + other.size as i64)
            - self.y.max(other.y);
        if ix <= 0 || iy <= 0 {
            return 0.0;
        }
        let inter = (ix * iy) as f64;
        let union = (self.size as f64).powi(2) + (other.size as f64).powi(2) - inter;
        inter / union
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        let (px, py) = (p.x as i64, p.y as i64);
        px >= self.x
            && py >= self.y
            && px < self.x + self.size as i64
            && py < self.y + self.size as i64
    }
}

/// How patches are placed on an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionScheme {
    /// A candidate box per boundary pixel, thinned by greedy NMS. The
    /// default; concentrates every patch on the mask boundary.
    DenseNms,
    /// Fixed tiling anchored at the image origin; keeps tiles that contain
    /// both foreground and background.
    Grid,
    /// One square around the instance's whole bounding box.
    InstanceLevel,
}

/// Patch extraction parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExtractionConfig {
    pub scheme: ExtractionScheme,
    /// Side of a dense boundary patch, in pixels. Must be even.
    pub patch_size: u32,
    /// Context margin cropped around each patch on every side. The refined
    /// output keeps only the central `patch_size` square.
    pub pad: u32,
    /// Greedy NMS keeps a candidate only if its IoU with every
    /// previously kept box is at most this threshold.
    pub nms_threshold: f32,
    /// Tile side for [`ExtractionScheme::Grid`]. Must be even.
    pub grid_cell: u32,
    /// Resolution an instance-level crop is meant to be resized to when it
    /// leaves the process; the crop itself stays at native size.
    pub instance_target: u32,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            scheme: ExtractionScheme::DenseNms,
            patch_size: 64,
            pad: 0,
            nms_threshold: 0.25,
            grid_cell: 64,
            instance_target: 256,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 || !self.patch_size.is_multiple_of(2) {
            return Err(Error::invalid(
                "patch size",
                format!("{} (must be even and at least 2)", self.patch_size),
            ));
        }
        if self.grid_cell < 2 || !self.grid_cell.is_multiple_of(2) {
            return Err(Error::invalid(
                "grid cell",
                format!("{} (must be even and at least 2)", self.grid_cell),
            ));
        }
        if !(0.0..1.0).contains(&self.nms_threshold) {
            return Err(Error::invalid(
                "nms threshold",
                format!("{} (must lie in [0, 1))", self.nms_threshold),
            ));
        }
        if self.instance_target < 2 || !self.instance_target.is_multiple_of(2) {
            return Err(Error::invalid(
                "instance target",
                format!("{} (must be even and at least 2)", self.instance_target),
            ));
        }
        Ok(())
    }
}

/// A candidate box together with its boundary-pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredBox {
    pub bbox: SquareBox,
    pub score: u32,
}

/// Where one patch lives: stable id, owning instance, unpadded box,
/// context pad, and the boundary-pixel count used for suppression ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub patch_id: u32,
    pub instance_id: u32,
    pub bbox: SquareBox,
    pub pad: u32,
    pub score: u32,
}

impl PatchSpec {
    /// Side of the actual crop: box size plus pad on both sides.
    pub fn crop_side(&self) -> u32 {
        self.bbox.size + 2 * self.pad
    }
}

/// Cropped patch content. Crops cover the padded box; regions outside the
/// image are zero-filled (black pixels, background mask).
#[derive(Debug, Clone)]
pub struct Patch {
    pub spec: PatchSpec,
    pub image_crop: ImageRGB,
    pub mask_crop: BinaryMask,
    pub gt_crop: Option<BinaryMask>,
}

/// One size-`s` box per boundary pixel, in row-major order of the
/// generating pixel. Empty masks yield no candidates.
pub fn candidate_boxes(mask: &BinaryMask, size: u32) -> Vec<SquareBox> {
    boundary_pixels(mask).into_iter().map(|p| SquareBox::centered(p, size)).collect()
}

/// Counts boundary pixels inside each box via a summed-area table, so the
/// cost is one pass over the mask plus O(1) per box.
pub fn boundary_counts(mask: &BinaryMask, boxes: &[SquareBox]) -> Vec<u32> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut integral = vec![0u32; (w + 1) * (h + 1)];
    for p in boundary_pixels(mask) {
        integral[(p.y as usize + 1) * (w + 1) + p.x as usize + 1] = 1;
    }
    for y in 1..=h {
        for x in 1..=w {
            integral[y * (w + 1) + x] += integral[(y - 1) * (w + 1) + x]
                + integral[y * (w + 1) + x - 1]
                - integral[(y - 1) * (w + 1) + x - 1];
        }
    }
    let sum_at = |x: i64, y: i64| -> u32 {
        let x = x.clamp(0, w as i64) as usize;
        let y = y.clamp(0, h as i64) as usize;
        integral[y * (w + 1) + x]
    };
    boxes
        .iter()
        .map(|b| {
            let (x0, y0) = (b.x, b.y);
            let (x1, y1) = (b.x + b.size as i64, b.y + b.size as i64);
            sum_at(x1, y1) + sum_at(x0, y0) - sum_at(x1, y0) - sum_at(x0, y1)
        })
        .collect()
}

/// Greedy non-maximum suppression.
///
/// Candidates are visited by score descending (ties keep their input
/// order); each kept box suppresses every later candidate whose IoU with it
/// exceeds `threshold`. Returns the kept boxes in keep order.
pub fn nms_filter(candidates: &[ScoredBox], threshold: f32) -> Result<Vec<ScoredBox>> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::invalid(
            "nms threshold",
            format!("{threshold} (must lie in [0, 1))"),
        ));
    }
    let thr = threshold as f64;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(candidates[i].score));
    let mut suppressed = vec![false; candidates.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(candidates[i]);
        for &j in &order[rank + 1..] {
            if !suppressed[j] && candidates[i].bbox.iou(&candidates[j].bbox) > thr {
                suppressed[j] = true;
            }
        }
    }
    Ok(kept)
}

/// Tiles of side `cell` anchored at the origin that contain both foreground
/// and background pixels, in row-major tile order. Tiles on the right and
/// bottom edges may hang over the image; only in-image pixels count toward
/// the census.
pub fn grid_boxes(mask: &BinaryMask, cell: u32) -> Result<Vec<SquareBox>> {
    if cell < 2 || !cell.is_multiple_of(2) {
        return Err(Error::invalid("grid cell", format!("{cell} (must be even and at least 2)")));
    }
    let (w, h) = (mask.width(), mask.height());
    let tiles_x = w.div_ceil(cell) as usize;
    let tiles_y = h.div_ceil(cell) as usize;
    let mut has_fg = vec![false; tiles_x * tiles_y];
    let mut has_bg = vec![false; tiles_x * tiles_y];
    for y in 0..h {
        for x in 0..w {
            let t = (y / cell) as usize * tiles_x + (x / cell) as usize;
            if mask.get(x, y) {
                has_fg[t] = true;
            } else {
                has_bg[t] = true;
            }
        }
    }
    let mut out = Vec::new();
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            if has_fg[ty * tiles_x + tx] && has_bg[ty * tiles_x + tx] {
                out.push(SquareBox {
                    x: (tx as u32 * cell) as i64,
                    y: (ty as u32 * cell) as i64,
                    size: cell,
                });
            }
        }
    }
    Ok(out)
}

/// Smallest even-sided square containing the mask's tight bounding box,
/// sharing its center. When the slack is odd the extra pixel goes to the
/// right/bottom, i.e. the box shifts toward the top-left.
pub fn instance_box(mask: &BinaryMask) -> Result<SquareBox> {
    let (x0, y0, x1, y1) = mask.tight_bbox().ok_or(Error::EmptyMask)?;
    let bw = (x1 - x0 + 1) as i64;
    let bh = (y1 - y0 + 1) as i64;
    let mut side = bw.max(bh);
    if side % 2 != 0 {
        side += 1;
    }
    Ok(SquareBox {
        x: x0 as i64 - (side - bw + 1) / 2,
        y: y0 as i64 - (side - bh + 1) / 2,
        size: side as u32,
    })
}

/// Runs the configured scheme over one instance mask and assigns patch ids
/// `0..n-1` in kept/box order.
pub fn extract_specs(
    mask: &BinaryMask,
    instance_id: u32,
    config: &ExtractionConfig,
) -> Result<Vec<PatchSpec>> {
    config.validate()?;
    let boxes: Vec<ScoredBox> = match config.scheme {
        ExtractionScheme::DenseNms => {
            let cands = candidate_boxes(mask, config.patch_size);
            let scores = boundary_counts(mask, &cands);
            let scored: Vec<ScoredBox> = cands
                .into_iter()
                .zip(scores)
                .map(|(bbox, score)| ScoredBox { bbox, score })
                .collect();
            nms_filter(&scored, config.nms_threshold)?
        }
        ExtractionScheme::Grid => {
            let boxes = grid_boxes(mask, config.grid_cell)?;
            let scores = boundary_counts(mask, &boxes);
            boxes
                .into_iter()
                .zip(scores)
                .map(|(bbox, score)| ScoredBox { bbox, score })
                .collect()
        }
        ExtractionScheme::InstanceLevel => {
            if mask.is_empty() {
                Vec::new()
            } else {
                let bbox = instance_box(mask)?;
                let score = boundary_counts(mask, &[bbox])[0];
                vec![ScoredBox { bbox, score }]
            }
        }
    };
    Ok(boxes
        .into_iter()
        .enumerate()
        .map(|(i, b)| PatchSpec {
            patch_id: i as u32,
            instance_id,
            bbox: b.bbox,
            pad: config.pad,
            score: b.score,
        })
        .collect())
}

/// Crops the padded box of every spec out of the image, the instance mask,
/// and (when given) the matched ground-truth mask. Pixels outside the image
/// come out black/background.
pub fn crop_patches(
    image: &ImageRGB,
    mask: &BinaryMask,
    gt: Option<&BinaryMask>,
    specs: &[PatchSpec],
) -> Result<Vec<Patch>> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::DimensionMismatch(
            image.width(),
            image.height(),
            mask.width(),
            mask.height(),
        ));
    }
    if let Some(g) = gt {
        if !g.same_dims(mask) {
            return Err(Error::DimensionMismatch(g.width(), g.height(), mask.width(), mask.height()));
        }
    }
    let (w, h) = (image.width() as i64, image.height() as i64);
    specs
        .iter()
        .map(|spec| {
            let side = spec.crop_side();
            let (ox, oy) = (spec.bbox.x - spec.pad as i64, spec.bbox.y - spec.pad as i64);
            let mut image_crop = ImageRGB::filled(side, side, [0, 0, 0]);
            let mut mask_crop = BinaryMask::new(side, side);
            let mut gt_crop = gt.map(|_| BinaryMask::new(side, side));
            for cy in 0..side {
                let sy = oy + cy as i64;
                if sy < 0 || sy >= h {
                    continue;
                }
                for cx in 0..side {
                    let sx = ox + cx as i64;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    image_crop.set(cx, cy, image.get(sx as u32, sy as u32));
                    mask_crop.set(cx, cy, mask.get(sx as u32, sy as u32));
                    if let (Some(dst), Some(src)) = (gt_crop.as_mut(), gt) {
                        dst.set(cx, cy, src.get(sx as u32, sy as u32));
                    }
                }
            }
            Ok(Patch { spec: *spec, image_crop, mask_crop, gt_crop })
        })
        .collect()
}
