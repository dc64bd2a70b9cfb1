//! Per-patch refiners.
//!
//! A refiner consumes one cropped patch — RGB pixels plus the coarse mask,
//! the same four channels an out-of-process model sees — and produces
//! foreground probabilities for the patch's unpadded square. The padded
//! margin is context only: it feeds the refiner but is stripped from the
//! output, so overlapping patches never vote outside their own box.

use crate::edt::distance_to_set;
use crate::error::{Error, Result};
use crate::extract::Patch;
use crate::mask::{boundary_pixels, mask_iou, Instance, ProbMap, Scene};

/// Built-in refiners. All of them run at the crop's native resolution;
/// resizing only ever happens on the exchange-directory boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Refiner {
    /// Returns the coarse mask unchanged, as 0/1 probabilities. The no-op
    /// baseline: reassembling identity-refined patches must reproduce the
    /// input mask exactly.
    Identity,
    /// Returns the ground-truth crop as 0/1 probabilities — the perfect
    /// refiner, for upper-bound experiments. Requires a matched GT crop.
    Oracle,
    /// Two diagonal-covariance RGB Gaussians (one per mask side) fitted to
    /// seed pixels far from the coarse boundary, then a per-pixel posterior.
    ColorModel(ColorModelParams),
}

/// Parameters of [`Refiner::ColorModel`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColorModelParams {
    /// Seed pixels must lie strictly farther than this from the coarse
    /// boundary, keeping likely-mislabeled band pixels out of the fit.
    pub band_margin: u32,
    /// Per-channel variance floor (8-bit² units); also the variance used
    /// when a seed set is constant-colored.
    pub covariance_floor: f64,
    /// Minimum seeds on each side; below it the patch falls back to the
    /// identity response.
    pub min_seeds: usize,
}

impl Default for ColorModelParams {
    fn default() -> Self {
        ColorModelParams { band_margin: 3, covariance_floor: 25.0, min_seeds: 10 }
    }
}

/// Refined foreground probabilities for a patch's unpadded box.
#[derive(Debug, Clone)]
pub struct RefinedPatch {
    pub spec: crate::extract::PatchSpec,
    pub probs: ProbMap,
}

/// Runs one refiner over one patch and strips the context pad from the
/// response. Fails when [`Refiner::Oracle`] is asked to refine a patch that
/// carries no ground-truth crop.
pub fn refine_patch(refiner: &Refiner, patch: &Patch) -> Result<RefinedPatch> {
    let full = match refiner {
        Refiner::Identity => ProbMap::from_mask(&patch.mask_crop),
        Refiner::Oracle => {
            let gt = patch
                .gt_crop
                .as_ref()
                .ok_or(Error::NoMatchedGt(patch.spec.instance_id))?;
            ProbMap::from_mask(gt)
        }
        Refiner::ColorModel(params) => colormodel_refine(patch, params),
    };
    Ok(RefinedPatch {
        spec: patch.spec,
        probs: full.central_crop(patch.spec.pad, patch.spec.bbox.size),
    })
}

/// Color-model refinement over the full padded crop.
///
/// Seeds are the pixels strictly farther than `band_margin` from the coarse
/// mask's boundary, split by mask side. Each side gets an axis-aligned RGB
/// Gaussian (mean + per-channel variance, floored at `covariance_floor`),
/// and the output is the equal-prior posterior of the foreground Gaussian.
/// If either seed set is smaller than `min_seeds` the coarse mask is
/// returned unchanged — with no usable boundary there is nothing to fit.
pub fn colormodel_refine(patch: &Patch, params: &ColorModelParams) -> ProbMap {
    let mask = &patch.mask_crop;
    let (w, h) = (mask.width(), mask.height());
    let boundary = boundary_pixels(mask);
    // all-foreground / all-background crops have no boundary: every pixel
    // is infinitely far from it and lands in its side's seed set
    let dist = if boundary.is_empty() {
        vec![f32::INFINITY; (w * h) as usize]
    } else {
        distance_to_set(w, h, &boundary).expect("boundary is non-empty and in-grid")
    };

    let margin = params.band_margin as f32;
    let mut fg_seeds: Vec<[u8; 3]> = Vec::new();
    let mut bg_seeds: Vec<[u8; 3]> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if dist[(y * w + x) as usize] > margin {
                let px = patch.image_crop.get(x, y);
                if mask.get(x, y) {
                    fg_seeds.push(px);
                } else {
                    bg_seeds.push(px);
                }
            }
        }
    }
    if fg_seeds.len() < params.min_seeds || bg_seeds.len() < params.min_seeds {
        return ProbMap::from_mask(mask);
    }

    let fg = DiagonalGaussian::fit(&fg_seeds, params.covariance_floor);
    let bg = DiagonalGaussian::fit(&bg_seeds, params.covariance_floor);

    let mut values = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let px = patch.image_crop.get(x, y);
            let llr = fg.log_density(px) - bg.log_density(px);
            values.push(sigmoid(llr) as f32);
        }
    }
    ProbMap::from_values(w, h, values).expect("sigmoid output lies in [0, 1]")
}

/// Numerically stable logistic; exactly 0.5 at zero, saturating to 0/1.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct DiagonalGaussian {
    mean: [f64; 3],
    var: [f64; 3],
}

impl DiagonalGaussian {
    fn fit(samples: &[[u8; 3]], floor: f64) -> Self {
        let n = samples.len() as f64;
        let mut mean = [0.0f64; 3];
        for s in samples {
            for c in 0..3 {
                mean[c] += s[c] as f64;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = [0.0f64; 3];
        for s in samples {
            for c in 0..3 {
                let d = s[c] as f64 - mean[c];
                var[c] += d * d;
            }
        }
        for v in &mut var {
            *v = (*v / n).max(floor);
        }
        DiagonalGaussian { mean, var }
    }

    /// Log density up to the additive constant shared by both sides.
    fn log_density(&self, px: [u8; 3]) -> f64 {
        let mut acc = 0.0;
        for ((&p, &mean), &var) in px.iter().zip(&self.mean).zip(&self.var) {
            let d = p as f64 - mean;
            acc += d * d / var + var.ln();
        }
        -0.5 * acc
    }
}

/// A prediction paired with the ground-truth instance it owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingMatch {
    pub prediction_id: u32,
    pub gt_id: u32,
}

/// Greedy IoU matching: all same-category (prediction, GT) pairs sorted by
/// IoU descending, each prediction and each GT claimed at most once, pairs
/// below or at `min_iou` never matched. Returns, per prediction, the index
/// of its GT partner.
pub fn best_iou_matching(
    predictions: &[Instance],
    gts: &[Instance],
    min_iou: f32,
) -> Result<Vec<Option<usize>>> {
    let mut pairs: Vec<(f32, usize, usize)> = Vec::new();
    for (pi, pred) in predictions.iter().enumerate() {
        for (gi, gt) in gts.iter().enumerate() {
            if pred.category_id != gt.category_id {
                continue;
            }
            let iou = mask_iou(&pred.mask, &gt.mask)?;
            if iou > min_iou {
                pairs.push((iou, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![None; predictions.len()];
    let mut gt_taken = vec![false; gts.len()];
    for (_, pi, gi) in pairs {
        if assigned[pi].is_none() && !gt_taken[gi] {
            assigned[pi] = Some(gi);
            gt_taken[gi] = true;
        }
    }
    Ok(assigned)
}

/// Predictions worth training a refiner on: those whose best available
/// same-category GT overlap exceeds IoU 0.5, annotated with the id of the
/// GT they claimed.
pub fn select_training_instances(scene: &Scene) -> Result<Vec<TrainingMatch>> {
    let gts = scene.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
    let assigned = best_iou_matching(&scene.predictions, gts, 0.5)?;
    Ok(scene
        .predictions
        .iter()
        .zip(&assigned)
        .filter_map(|(pred, gi)| {
            gi.map(|gi| TrainingMatch { prediction_id: pred.id, gt_id: gts[gi].id })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{PatchSpec, SquareBox};
    use crate::mask::{BinaryMask, ImageRGB};

    fn patch_from(
        image: ImageRGB,
        mask: BinaryMask,
        gt: Option<BinaryMask>,
        pad: u32,
    ) -> Patch {
        let size = image.width() - 2 * pad;
        Patch {
            spec: PatchSpec {
                patch_id: 0,
                instance_id: 1,
                bbox: SquareBox { x: 0, y: 0, size },
                pad,
                score: 1,
            },
            image_crop: image,
            mask_crop: mask,
            gt_crop: gt,
        }
    }

    #[test]
    fn identity_returns_mask_probabilities() {
        let mask = BinaryMask::from_fn(6, 6, |x, _| x < 3);
        let patch = patch_from(ImageRGB::filled(6, 6, [0, 0, 0]), mask.clone(), None, 0);
        let refined = refine_patch(&Refiner::Identity, &patch).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(refined.probs.get(x, y), if mask.get(x, y) { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn identity_strips_pad_to_central_square() {
        // 4-wide box with pad 2: crop is 8 wide, output must be the middle 4
        let mask = BinaryMask::from_fn(8, 8, |x, y| x >= 2 && y >= 2 && x < 6 && y < 6);
        let patch = patch_from(ImageRGB::filled(8, 8, [0, 0, 0]), mask, None, 2);
        let refined = refine_patch(&Refiner::Identity, &patch).unwrap();
        assert_eq!(refined.probs.width(), 4);
        assert!(refined.probs.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn oracle_returns_gt_and_requires_it() {
        let mask = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        let gt = BinaryMask::from_fn(4, 4, |x, _| x < 3);
        let with_gt = patch_from(
            ImageRGB::filled(4, 4, [0, 0, 0]),
            mask.clone(),
            Some(gt.clone()),
            0,
        );
        let refined = refine_patch(&Refiner::Oracle, &with_gt).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(refined.probs.get(x, y), if gt.get(x, y) { 1.0 } else { 0.0 });
            }
        }
        let without = patch_from(ImageRGB::filled(4, 4, [0, 0, 0]), mask, None, 0);
        assert!(matches!(
            refine_patch(&Refiner::Oracle, &without),
            Err(Error::NoMatchedGt(1))
        ));
    }

    /// Noiseless two-color patch with the mask boundary displaced by two
    /// pixels: the posterior must recover the true color edge exactly.
    #[test]
    fn colormodel_recovers_displaced_color_edge() {
        let side = 24u32;
        let gt = BinaryMask::from_fn(side, side, |x, _| x < 12);
        let image = {
            let mut img = ImageRGB::filled(side, side, [0, 0, 255]);
            for y in 0..side {
                for x in 0..12 {
                    img.set(x, y, [255, 0, 0]);
                }
            }
            img
        };
        // coarse mask is the edge pushed 2px to the right
        let mask = BinaryMask::from_fn(side, side, |x, _| x < 14);
        let patch = patch_from(image, mask, None, 0);
        let refined = refine_patch(&Refiner::ColorModel(ColorModelParams::default()), &patch).unwrap();
        for y in 0..side {
            for x in 0..side {
                assert_eq!(
                    refined.probs.get(x, y) >= 0.5,
                    gt.get(x, y),
                    "wrong side at ({x},{y}): {}",
                    refined.probs.get(x, y)
                );
            }
        }
    }

    /// Identical colors on both sides: nothing distinguishes them, so the
    /// posterior must sit exactly at one half everywhere.
    #[test]
    fn colormodel_identical_colors_gives_exact_half() {
        let side = 24u32;
        let image = ImageRGB::filled(side, side, [90, 90, 90]);
        let mask = BinaryMask::from_fn(side, side, |x, _| x < 12);
        let patch = patch_from(image, mask, None, 0);
        let probs = colormodel_refine(&patch, &ColorModelParams::default());
        for &v in probs.values() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn colormodel_falls_back_when_seeds_scarce() {
        // 6x6 crop with margin 3 leaves no seeds at all
        let image = ImageRGB::filled(6, 6, [10, 200, 10]);
        let mask = BinaryMask::from_fn(6, 6, |x, _| x < 3);
        let patch = patch_from(image, mask.clone(), None, 0);
        let probs = colormodel_refine(&patch, &ColorModelParams::default());
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(probs.get(x, y), if mask.get(x, y) { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn colormodel_is_deterministic() {
        let image = ImageRGB::from_raw(
            16,
            16,
            (0..16 * 16 * 3).map(|i| (i * 37 % 251) as u8).collect(),
        )
        .unwrap();
        let mask = BinaryMask::from_fn(16, 16, |x, y| x + y < 16);
        let patch = patch_from(image, mask, None, 0);
        let a = colormodel_refine(&patch, &ColorModelParams::default());
        let b = colormodel_refine(&patch, &ColorModelParams::default());
        assert_eq!(a, b);
    }

    #[test]
    fn refined_probabilities_stay_in_unit_interval() {
        let image = ImageRGB::from_raw(
            20,
            20,
            (0..20 * 20 * 3).map(|i| (i * 101 % 256) as u8).collect(),
        )
        .unwrap();
        let mask = BinaryMask::from_fn(20, 20, |x, y| (x / 4 + y / 4) % 2 == 0);
        let patch = patch_from(image, mask, None, 0);
        for refiner in [
            Refiner::Identity,
            Refiner::ColorModel(ColorModelParams::default()),
        ] {
            let refined = refine_patch(&refiner, &patch).unwrap();
            for &v in refined.probs.values() {
                assert!((0.0..=1.0).contains(&v) && v.is_finite());
            }
        }
    }

    fn instance(id: u32, category_id: u32, mask: BinaryMask) -> Instance {
        Instance { id, category_id, score: 0.9, mask }
    }

    #[test]
    fn best_iou_matching_prefers_highest_overlap() {
        let gt_a = BinaryMask::from_fn(10, 10, |x, _| x < 5);
        let gt_b = BinaryMask::from_fn(10, 10, |x, _| x >= 5);
        // pred overlaps gt_a with IoU 4/6 and gt_b not at all
        let pred = BinaryMask::from_fn(10, 10, |x, _| x < 4);
        let preds = vec![instance(1, 1, pred)];
        let gts = vec![instance(10, 1, gt_a), instance(11, 1, gt_b)];
        let m = best_iou_matching(&preds, &gts, 0.5).unwrap();
        assert_eq!(m, vec![Some(0)]);
    }

    #[test]
    fn best_iou_matching_each_gt_claimed_once() {
        let gt = BinaryMask::from_fn(10, 10, |x, _| x < 5);
        let p1 = BinaryMask::from_fn(10, 10, |x, _| x < 5);
        let p2 = BinaryMask::from_fn(10, 10, |x, _| x < 4);
        let preds = vec![instance(1, 1, p2), instance(2, 1, p1)];
        let gts = vec![instance(10, 1, gt)];
        let m = best_iou_matching(&preds, &gts, 0.5).unwrap();
        // the exact copy (second prediction) wins the only GT
        assert_eq!(m, vec![None, Some(0)]);
    }

    #[test]
    fn matching_respects_category() {
        let mask = BinaryMask::from_fn(6, 6, |x, _| x < 3);
        let preds = vec![instance(1, 1, mask.clone())];
        let gts = vec![instance(2, 2, mask)];
        let m = best_iou_matching(&preds, &gts, 0.5).unwrap();
        assert_eq!(m, vec![None]);
    }

    #[test]
    fn training_selection_drops_low_overlap() {
        let image = ImageRGB::filled(10, 10, [0, 0, 0]);
        let gt_mask = BinaryMask::from_fn(10, 10, |x, _| x < 6);
        let good = BinaryMask::from_fn(10, 10, |x, _| x < 5); // IoU 5/6
        let bad = BinaryMask::from_fn(10, 10, |x, y| x < 2 && y < 2); // tiny overlap
        let scene = Scene {
            image,
            predictions: vec![instance(1, 1, good), instance(2, 1, bad)],
            ground_truth: Some(vec![instance(7, 1, gt_mask)]),
        };
        let picked = select_training_instances(&scene).unwrap();
        assert_eq!(picked, vec![TrainingMatch { prediction_id: 1, gt_id: 7 }]);
    }

    #[test]
    fn training_selection_requires_gt() {
        let scene = Scene {
            image: ImageRGB::filled(4, 4, [0, 0, 0]),
            predictions: vec![],
            ground_truth: None,
        };
        assert!(matches!(select_training_instances(&scene), Err(Error::MissingGroundTruth)));
    }
}
