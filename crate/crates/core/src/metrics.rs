//! Evaluation: COCO-style mask AP, a boundary F-score averaged over true
//! positives, ground-truth band replacement, and the upper-bound report
//! that replacement produces.

use std::collections::BTreeSet;
use std::fmt;

use crate::edt::distance_to_set;
use crate::error::{Error, Result};
use crate::mask::{boundary_pixels, mask_iou, BinaryMask, Instance, Scene};
use crate::par;
use crate::refine::best_iou_matching;

/// The ten COCO IoU thresholds `0.50, 0.55, …, 0.95`.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + i as f64 * 0.05).collect()
}

const AREA_SMALL: u64 = 32 * 32;
const AREA_MEDIUM: u64 = 96 * 96;

/// Aggregate quality scores for a corpus. AP values average over the ten
/// IoU thresholds and over categories; categories (or area buckets) with no
/// ground truth carry the sentinel `-1` and are excluded from means.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap_s: f64,
    pub ap_m: f64,
    pub ap_l: f64,
    pub af: f64,
    pub per_instance: Vec<InstanceIou>,
}

/// Before/after IoU of one prediction against its matched ground truth.
/// Unmatched predictions report zero on both sides.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InstanceIou {
    pub scene_index: usize,
    pub instance_id: u32,
    pub iou_before: f64,
    pub iou_after: f64,
}

/// Width of the boundary band replaced from ground truth, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceBand {
    Finite(u32),
    Infinite,
}

impl DistanceBand {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "INF" | "∞" => Ok(DistanceBand::Infinite),
            t => {
                let d: u32 = t
                    .parse()
                    .map_err(|_| Error::invalid("distance band", format!("{s:?}")))?;
                if d == 0 {
                    return Err(Error::invalid("distance band", "must be at least 1"));
                }
                Ok(DistanceBand::Finite(d))
            }
        }
    }
}

impl fmt::Display for DistanceBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceBand::Finite(d) => write!(f, "{d}px"),
            DistanceBand::Infinite => write!(f, "inf"),
        }
    }
}

/// Outcome of greedy score-ordered matching within one scene and category.
#[derive(Debug, Clone, Default)]
pub struct Matching {
    /// `(prediction index, gt index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Greedy detection matching: predictions sorted by score descending (ties
/// keep list order) each claim the still-unclaimed same-category GT with
/// the highest IoU, provided that IoU reaches `iou_thr`.
pub fn match_instances(
    predictions: &[Instance],
    gts: &[Instance],
    iou_thr: f64,
) -> Result<Matching> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b].score.partial_cmp(&predictions[a].score).unwrap().then(a.cmp(&b))
    });
    let mut gt_taken = vec![false; gts.len()];
    let mut matching = Matching::default();
    for &pi in &order {
        let pred = &predictions[pi];
        let mut best: Option<(f64, usize)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] || gt.category_id != pred.category_id {
                continue;
            }
            let iou = mask_iou(&pred.mask, &gt.mask)? as f64;
            if iou >= iou_thr && best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, gi));
            }
        }
        match best {
            Some((_, gi)) => {
                gt_taken[gi] = true;
                matching.pairs.push((pi, gi));
            }
            None => matching.unmatched_predictions.push(pi),
        }
    }
    matching.unmatched_gts =
        (0..gts.len()).filter(|&gi| !gt_taken[gi]).collect();
    Ok(matching)
}

/// Precomputed per-scene, per-category state shared by AP and AF.
struct CategoryEval {
    /// Prediction indices ordered by score descending (ties by list order).
    pred_order: Vec<usize>,
    pred_scores: Vec<f32>,
    pred_areas: Vec<u64>,
    gt_areas: Vec<u64>,
    /// IoU matrix indexed `[pred_rank][gt]` following `pred_order`.
    iou: Vec<Vec<f64>>,
    /// Boundary F-scores for pairs with IoU ≥ 0.5 (the only pairs that can
    /// ever match), indexed like `iou`; `None` elsewhere.
    fscore: Vec<Vec<Option<f64>>>,
}

fn category_eval(scene: &Scene, category: u32) -> Result<CategoryEval> {
    let gts = scene.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
    let preds: Vec<usize> = scene
        .predictions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.category_id == category)
        .map(|(i, _)| i)
        .collect();
    let gt_idx: Vec<usize> = gts
        .iter()
        .enumerate()
        .filter(|(_, g)| g.category_id == category)
        .map(|(i, _)| i)
        .collect();
    let mut pred_order = preds.clone();
    pred_order.sort_by(|&a, &b| {
        scene.predictions[b]
            .score
            .partial_cmp(&scene.predictions[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut iou = Vec::with_capacity(pred_order.len());
    let mut fscore = Vec::with_capacity(pred_order.len());
    for &pi in &pred_order {
        let mut row = Vec::with_capacity(gt_idx.len());
        let mut frow = Vec::with_capacity(gt_idx.len());
        for &gi in &gt_idx {
            let v = mask_iou(&scene.predictions[pi].mask, &gts[gi].mask)? as f64;
            row.push(v);
            frow.push(if v >= 0.5 {
                Some(boundary_fscore(&scene.predictions[pi].mask, &gts[gi].mask, 1.0)?)
            } else {
                None
            });
        }
        iou.push(row);
        fscore.push(frow);
    }
    Ok(CategoryEval {
        pred_scores: pred_order.iter().map(|&i| scene.predictions[i].score).collect(),
        pred_areas: pred_order.iter().map(|&i| scene.predictions[i].mask.area()).collect(),
        gt_areas: gt_idx.iter().map(|&i| gts[i].mask.area()).collect(),
        pred_order,
        iou,
        fscore,
    })
}

/// Greedy matching over the precomputed IoU matrix, restricted to an
/// optional area bucket. Returns per-prediction-rank TP flags (bucketed
/// predictions only) and the bucketed GT count.
fn greedy_tp_flags(
    ev: &CategoryEval,
    iou_thr: f64,
    bucket: Option<(u64, u64)>,
) -> (Vec<(f32, bool)>, usize) {
    let in_bucket = |area: u64| bucket.is_none_or(|(lo, hi)| area >= lo && area < hi);
    let gt_keep: Vec<bool> = ev.gt_areas.iter().map(|&a| in_bucket(a)).collect();
    let total_gt = gt_keep.iter().filter(|&&k| k).count();
    let mut gt_taken = vec![false; ev.gt_areas.len()];
    let mut flags = Vec::new();
    for rank in 0..ev.pred_order.len() {
        if !in_bucket(ev.pred_areas[rank]) {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for gi in 0..ev.gt_areas.len() {
            if gt_taken[gi] || !gt_keep[gi] {
                continue;
            }
            let v = ev.iou[rank][gi];
            if v >= iou_thr && best.is_none_or(|(b, _)| v > b) {
                best = Some((v, gi));
            }
        }
        let tp = match best {
            Some((_, gi)) => {
                gt_taken[gi] = true;
                true
            }
            None => false,
        };
        flags.push((ev.pred_scores[rank], tp));
    }
    (flags, total_gt)
}

/// 101-point interpolated average precision from pooled per-prediction
/// results. `samples` are `(score, is_tp)`; `-1` when there is no GT.
fn interpolated_ap(mut samples: Vec<(f32, bool)>, total_gt: usize) -> f64 {
    if total_gt == 0 {
        return -1.0;
    }
    samples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut tp = 0usize;
    let mut recalls = Vec::with_capacity(samples.len());
    let mut precisions = Vec::with_capacity(samples.len());
    for (i, &(_, is_tp)) in samples.iter().enumerate() {
        tp += is_tp as usize;
        recalls.push(tp as f64 / total_gt as f64);
        precisions.push(tp as f64 / (i + 1) as f64);
    }
    // precision envelope: best precision at any recall >= r
    let mut envelope = precisions.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut acc = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let p = recalls
            .iter()
            .position(|&rec| rec >= r)
            .map_or(0.0, |idx| envelope[idx]);
        acc += p;
    }
    acc / 101.0
}

/// Average precision for one category at one IoU threshold, pooled over
/// all scenes. Returns `-1` when the category has no ground truth.
pub fn average_precision(scenes: &[Scene], category: u32, iou_thr: f64) -> Result<f64> {
    let evs: Vec<CategoryEval> =
        scenes.iter().map(|s| category_eval(s, category)).collect::<Result<_>>()?;
    Ok(pooled_ap(&evs, iou_thr, None))
}

fn pooled_ap(evs: &[CategoryEval], iou_thr: f64, bucket: Option<(u64, u64)>) -> f64 {
    let mut samples = Vec::new();
    let mut total_gt = 0usize;
    for ev in evs {
        let (mut flags, gt) = greedy_tp_flags(ev, iou_thr, bucket);
        samples.append(&mut flags);
        total_gt += gt;
    }
    interpolated_ap(samples, total_gt)
}

/// Mean of values that are not the `-1` sentinel; `-1` when all are.
fn sentinel_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        if v >= 0.0 {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        -1.0
    } else {
        sum / n as f64
    }
}

/// Boundary precision/recall/F at a Euclidean pixel tolerance.
///
/// Precision is the fraction of predicted boundary pixels within `tol` of
/// the ground-truth boundary; recall mirrors it; `F = 2PR/(P+R)` and zero
/// when both are zero. Errors when either mask is empty (an empty mask has
/// no boundary to score).
pub fn boundary_fscore(pred: &BinaryMask, gt: &BinaryMask, tol: f32) -> Result<f64> {
    if !pred.same_dims(gt) {
        return Err(Error::DimensionMismatch(pred.width(), pred.height(), gt.width(), gt.height()));
    }
    let pb = boundary_pixels(pred);
    let gb = boundary_pixels(gt);
    if pb.is_empty() || gb.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = (pred.width(), pred.height());
    let to_gt = distance_to_set(w, h, &gb)?;
    let to_pred = distance_to_set(w, h, &pb)?;
    let near = |field: &[f32], pts: &[crate::mask::PixelCoord]| {
        pts.iter().filter(|p| field[(p.y * w + p.x) as usize] <= tol).count() as f64
            / pts.len() as f64
    };
    let precision = near(&to_gt, &pb);
    let recall = near(&to_pred, &gb);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Boundary quality averaged over true positives: for every IoU threshold
/// in the COCO set, match predictions to ground truth and score each
/// matched pair's boundary F at 1 px tolerance; the result is the mean over
/// all `(threshold, pair)` samples, `0` when nothing matches anywhere.
pub fn af_metric(scenes: &[Scene]) -> Result<f64> {
    Ok(af_from_evals(&corpus_evals(scenes)?))
}

fn af_from_evals(evs: &[Vec<CategoryEval>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for scene_evs in evs {
        for ev in scene_evs {
            for t in iou_thresholds() {
                let mut gt_taken = vec![false; ev.gt_areas.len()];
                for rank in 0..ev.pred_order.len() {
                    let mut best: Option<(f64, usize)> = None;
                    for (gi, (&v, taken)) in ev.iou[rank].iter().zip(&gt_taken).enumerate() {
                        if *taken {
                            continue;
                        }
                        if v >= t && best.is_none_or(|(b, _)| v > b) {
                            best = Some((v, gi));
                        }
                    }
                    if let Some((_, gi)) = best {
                        gt_taken[gi] = true;
                        sum += ev.fscore[rank][gi]
                            .expect("matched pairs have IoU >= 0.5 and a cached F-score");
                        n += 1;
                    }
                }
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-scene, per-category precompute for the whole corpus (parallel over
/// scenes; category list pooled from the ground truth).
fn corpus_evals(scenes: &[Scene]) -> Result<Vec<Vec<CategoryEval>>> {
    let categories = gt_categories(scenes)?;
    let per_scene: Vec<Result<Vec<CategoryEval>>> = par::map(scenes, |scene| {
        categories.iter().map(|&c| category_eval(scene, c)).collect()
    });
    per_scene.into_iter().collect()
}

/// Replaces the pixels within `band` of the prediction's boundary with
/// their ground-truth values; everything farther keeps the predicted value.
/// The infinite band returns the ground truth outright. Errors when the
/// prediction is empty (no boundary to measure from).
pub fn gt_band_replace(
    pred: &BinaryMask,
    gt: &BinaryMask,
    band: DistanceBand,
) -> Result<BinaryMask> {
    if !pred.same_dims(gt) {
        return Err(Error::DimensionMismatch(pred.width(), pred.height(), gt.width(), gt.height()));
    }
    let d = match band {
        DistanceBand::Infinite => return Ok(gt.clone()),
        DistanceBand::Finite(d) => d as f32,
    };
    let pb = boundary_pixels(pred);
    if pb.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = (pred.width(), pred.height());
    let dist = distance_to_set(w, h, &pb)?;
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        if dist[(y * w + x) as usize] <= d {
            gt.get(x, y)
        } else {
            pred.get(x, y)
        }
    }))
}

fn gt_categories(scenes: &[Scene]) -> Result<BTreeSet<u32>> {
    let mut cats = BTreeSet::new();
    for scene in scenes {
        let gts = scene.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
        cats.extend(gts.iter().map(|g| g.category_id));
    }
    Ok(cats)
}

/// Full corpus evaluation. Per-instance rows report each prediction's IoU
/// against the ground truth it claims (greedy, best IoU first, above 0.5),
/// identical on both sides of the before/after pair.
pub fn evaluate(scenes: &[Scene]) -> Result<EvalReport> {
    let evs = corpus_evals(scenes)?;
    let n_categories = evs.first().map_or(0, |v| v.len());

    let ap_at = |thr: f64, bucket: Option<(u64, u64)>| -> f64 {
        sentinel_mean((0..n_categories).map(|ci| {
            let mut samples = Vec::new();
            let mut total_gt = 0usize;
            for scene_evs in &evs {
                let (mut flags, gt) = greedy_tp_flags(&scene_evs[ci], thr, bucket);
                samples.append(&mut flags);
                total_gt += gt;
            }
            interpolated_ap(samples, total_gt)
        }))
    };
    let mean_over_thresholds = |bucket: Option<(u64, u64)>| -> f64 {
        sentinel_mean(iou_thresholds().into_iter().map(|t| ap_at(t, bucket)))
    };

    Ok(EvalReport {
        ap: mean_over_thresholds(None),
        ap50: ap_at(0.5, None),
        ap75: ap_at(0.75, None),
        ap_s: mean_over_thresholds(Some((0, AREA_SMALL))),
        ap_m: mean_over_thresholds(Some((AREA_SMALL, AREA_MEDIUM))),
        ap_l: mean_over_thresholds(Some((AREA_MEDIUM, u64::MAX))),
        af: af_from_evals(&evs),
        per_instance: iou_improvement_report(scenes, scenes)?,
    })
}

/// One row of the upper-bound table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct UpperBoundRow {
    pub label: String,
    pub report: EvalReport,
}

/// Oracle-replacement study: for each band width, matched predictions
/// (greedy best-IoU above 0.5) get the ground truth pasted into their
/// boundary band and the corpus is re-evaluated. The first row is the
/// untouched baseline.
pub fn upper_bound_report(scenes: &[Scene], bands: &[DistanceBand]) -> Result<Vec<UpperBoundRow>> {
    let mut rows =
        vec![UpperBoundRow { label: "baseline".into(), report: evaluate(scenes)? }];
    for &band in bands {
        let replaced: Vec<Scene> = par::try_map(scenes, |scene| {
            let gts = scene.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
            let assigned = best_iou_matching(&scene.predictions, gts, 0.5)?;
            let mut out = scene.clone();
            for (pred, gi) in out.predictions.iter_mut().zip(&assigned) {
                if let Some(gi) = gi {
                    pred.mask = gt_band_replace(&pred.mask, &gts[*gi].mask, band)?;
                }
            }
            Ok::<Scene, Error>(out)
        })?;
        let mut report = evaluate(&replaced)?;
        report.per_instance = iou_improvement_report(scenes, &replaced)?;
        rows.push(UpperBoundRow { label: band.to_string(), report });
    }
    Ok(rows)
}

/// Per-instance IoU before and after refinement.
///
/// Matching runs on the `before` corpus (greedy best-IoU above 0.5); both
/// sides of each pair score against the same claimed ground truth, so the
/// delta isolates what refinement did. Predictions with no match report
/// zero. The two corpora must list the same instance ids scene by scene.
pub fn iou_improvement_report(before: &[Scene], after: &[Scene]) -> Result<Vec<InstanceIou>> {
    if before.len() != after.len() {
        return Err(Error::invalid(
            "corpus pair",
            format!("{} scenes before vs {} after", before.len(), after.len()),
        ));
    }
    let mut rows = Vec::new();
    for (si, (b, a)) in before.iter().zip(after).enumerate() {
        let gts = b.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
        let assigned = best_iou_matching(&b.predictions, gts, 0.5)?;
        for (pred, gi) in b.predictions.iter().zip(&assigned) {
            let after_pred = a
                .predictions
                .iter()
                .find(|p| p.id == pred.id)
                .ok_or_else(|| {
                    Error::invalid(
                        "corpus pair",
                        format!("instance {} of scene {si} missing after refinement", pred.id),
                    )
                })?;
            let (iou_before, iou_after) = match gi {
                Some(gi) => (
                    mask_iou(&pred.mask, &gts[*gi].mask)? as f64,
                    mask_iou(&after_pred.mask, &gts[*gi].mask)? as f64,
                ),
                None => (0.0, 0.0),
            };
            rows.push(InstanceIou { scene_index: si, instance_id: pred.id, iou_before, iou_after });
        }
    }
    Ok(rows)
}

/// Mean (before, after) IoU over the matched rows of an improvement report.
/// Rows from unmatched predictions score zero on both sides and are
/// skipped; the matching gate is strict, so matched rows always show
/// `iou_before > 0.5`. `None` when nothing matched.
pub fn mean_matched_iou(rows: &[InstanceIou]) -> Option<(f64, f64)> {
    let matched: Vec<&InstanceIou> = rows.iter().filter(|r| r.iou_before > 0.5).collect();
    if matched.is_empty() {
        return None;
    }
    let n = matched.len() as f64;
    Some((
        matched.iter().map(|r| r.iou_before).sum::<f64>() / n,
        matched.iter().map(|r| r.iou_after).sum::<f64>() / n,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{ImageRGB, MorphOp};

    fn inst(id: u32, category_id: u32, score: f32, mask: BinaryMask) -> Instance {
        Instance { id, category_id, score, mask }
    }

    fn disk(w: u32, h: u32, cx: i64, cy: i64, r: i64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            (x as i64 - cx).pow(2) + (y as i64 - cy).pow(2) <= r * r
        })
    }

    fn scene(predictions: Vec<Instance>, gts: Vec<Instance>) -> Scene {
        let (w, h) = (
            predictions.first().or(gts.first()).map_or(16, |i| i.mask.width()),
            predictions.first().or(gts.first()).map_or(16, |i| i.mask.height()),
        );
        Scene {
            image: ImageRGB::filled(w, h, [0, 0, 0]),
            predictions,
            ground_truth: Some(gts),
        }
    }

    /// The worked AP example: one GT, a high-scoring IoU-0.7 prediction and
    /// a lower-scoring false positive. AP50 = 1.0 and AP75 = 0.0.
    #[test]
    fn ap_hand_case_two_predictions() {
        // pred1: 7 columns of 10 over gt's 10 -> IoU 0.7
        let gt = BinaryMask::from_fn(20, 10, |x, _| x < 10);
        let pred1 = BinaryMask::from_fn(20, 10, |x, _| x < 7);
        let pred2 = BinaryMask::from_fn(20, 10, |x, y| x >= 15 && y < 2);
        let s = scene(
            vec![inst(1, 1, 0.9, pred1), inst(2, 1, 0.8, pred2)],
            vec![inst(1, 1, 1.0, gt)],
        );
        let scenes = [s];
        assert_eq!(average_precision(&scenes, 1, 0.5).unwrap(), 1.0);
        assert_eq!(average_precision(&scenes, 1, 0.75).unwrap(), 0.0);
    }

    #[test]
    fn ap_perfect_predictions_is_one_everywhere() {
        let m1 = disk(32, 32, 9, 9, 5);
        let m2 = disk(32, 32, 24, 22, 6);
        let s = scene(
            vec![inst(1, 1, 0.8, m1.clone()), inst(2, 1, 0.7, m2.clone())],
            vec![inst(1, 1, 1.0, m1), inst(2, 1, 1.0, m2)],
        );
        let scenes = [s];
        for t in iou_thresholds() {
            assert_eq!(average_precision(&scenes, 1, t).unwrap(), 1.0, "at {t}");
        }
    }

    #[test]
    fn ap_missing_category_is_sentinel() {
        let m = disk(16, 16, 8, 8, 4);
        let s = scene(vec![inst(1, 1, 0.9, m.clone())], vec![inst(1, 1, 1.0, m)]);
        assert_eq!(average_precision(&[s], 99, 0.5).unwrap(), -1.0);
    }

    #[test]
    fn ap_no_predictions_with_gt_is_zero() {
        let m = disk(16, 16, 8, 8, 4);
        let s = scene(vec![], vec![inst(1, 1, 1.0, m)]);
        assert_eq!(average_precision(&[s], 1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn match_instances_score_order_claims_best_gt() {
        let gt1 = BinaryMask::from_fn(12, 12, |x, _| x < 6);
        let gt2 = BinaryMask::from_fn(12, 12, |x, _| x >= 6);
        let p_both = BinaryMask::from_fn(12, 12, |x, _| x < 7); // overlaps both
        let p_right = BinaryMask::from_fn(12, 12, |x, _| x >= 7);
        let preds = vec![inst(1, 1, 0.9, p_both), inst(2, 1, 0.5, p_right)];
        let gts = vec![inst(1, 1, 1.0, gt1), inst(2, 1, 1.0, gt2)];
        let m = match_instances(&preds, &gts, 0.5).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        assert!(m.unmatched_predictions.is_empty());
        assert!(m.unmatched_gts.is_empty());
    }

    #[test]
    fn match_instances_never_reuses_gt() {
        let gt = BinaryMask::from_fn(8, 8, |x, _| x < 4);
        let preds = vec![
            inst(1, 1, 0.9, gt.clone()),
            inst(2, 1, 0.8, gt.clone()),
        ];
        let gts = vec![inst(1, 1, 1.0, gt)];
        let m = match_instances(&preds, &gts, 0.5).unwrap();
        assert_eq!(m.pairs, vec![(0, 0)]);
        assert_eq!(m.unmatched_predictions, vec![1]);
    }

    #[test]
    fn boundary_fscore_identical_masks_is_one() {
        let m = disk(24, 24, 12, 12, 7);
        assert_eq!(boundary_fscore(&m, &m, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn boundary_fscore_one_px_shift_within_tolerance() {
        let a = BinaryMask::from_fn(16, 16, |x, _| (4..10).contains(&x));
        let b = BinaryMask::from_fn(16, 16, |x, _| (5..11).contains(&x));
        assert_eq!(boundary_fscore(&a, &b, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn boundary_fscore_drops_under_dilation() {
        let m = disk(32, 32, 16, 16, 8);
        let fat = crate::mask::morph(&m, MorphOp::Dilate, 3);
        let f = boundary_fscore(&fat, &m, 1.0).unwrap();
        assert!(f < 1.0, "3px-displaced boundary must lose score, got {f}");
    }

    #[test]
    fn boundary_fscore_empty_mask_errors() {
        let empty = BinaryMask::new(8, 8);
        let full = disk(8, 8, 4, 4, 2);
        assert!(boundary_fscore(&empty, &full, 1.0).is_err());
        assert!(boundary_fscore(&full, &empty, 1.0).is_err());
    }

    #[test]
    fn boundary_fscore_is_symmetric() {
        let a = disk(20, 20, 9, 9, 6);
        let b = disk(20, 20, 11, 10, 5);
        assert_eq!(
            boundary_fscore(&a, &b, 1.0).unwrap(),
            boundary_fscore(&b, &a, 1.0).unwrap()
        );
    }

    #[test]
    fn af_identical_corpus_is_one() {
        let m1 = disk(24, 24, 8, 8, 5);
        let m2 = disk(24, 24, 17, 16, 4);
        let s = scene(
            vec![inst(1, 1, 0.9, m1.clone()), inst(2, 2, 0.8, m2.clone())],
            vec![inst(1, 1, 1.0, m1), inst(2, 2, 1.0, m2)],
        );
        assert_eq!(af_metric(&[s]).unwrap(), 1.0);
    }

    #[test]
    fn af_no_matches_is_zero() {
        let pred = disk(16, 16, 4, 4, 2);
        let gt = disk(16, 16, 12, 12, 2);
        let s = scene(vec![inst(1, 1, 0.9, pred)], vec![inst(1, 1, 1.0, gt)]);
        assert_eq!(af_metric(&[s]).unwrap(), 0.0);
    }

    #[test]
    fn band_replace_narrow_band_leaves_far_pixels_alone() {
        // band 1: only pixels within 1px of the pred boundary flip to gt
        let pred = disk(20, 20, 10, 10, 5);
        let gt = disk(20, 20, 10, 10, 8);
        let out = gt_band_replace(&pred, &gt, DistanceBand::Finite(1)).unwrap();
        // center far inside keeps pred foreground
        assert!(out.get(10, 10));
        // (10,17) is gt-foreground but 2px past the pred boundary: stays bg
        assert!(gt.get(10, 17) && !pred.get(10, 17));
        assert!(!out.get(10, 17));
        // (10,16) sits 1px past the boundary pixel (10,15): flips to gt
        assert!(out.get(10, 16));
    }

    #[test]
    fn band_replace_infinite_returns_gt() {
        let pred = disk(16, 16, 8, 8, 3);
        let gt = disk(16, 16, 7, 7, 5);
        assert_eq!(gt_band_replace(&pred, &gt, DistanceBand::Infinite).unwrap(), gt);
    }

    #[test]
    fn band_replace_empty_pred_errors() {
        let pred = BinaryMask::new(8, 8);
        let gt = disk(8, 8, 4, 4, 2);
        assert!(gt_band_replace(&pred, &gt, DistanceBand::Finite(1)).is_err());
    }

    /// Brute-force check of the band rule on a small asymmetric pair.
    #[test]
    fn band_replace_matches_per_pixel_rule() {
        let pred = BinaryMask::from_fn(14, 14, |x, y| (3..9).contains(&x) && (3..9).contains(&y));
        let gt = BinaryMask::from_fn(14, 14, |x, y| (4..11).contains(&x) && (2..8).contains(&y));
        for d in 1..=4u32 {
            let out = gt_band_replace(&pred, &gt, DistanceBand::Finite(d)).unwrap();
            let pb = boundary_pixels(&pred);
            for y in 0..14u32 {
                for x in 0..14u32 {
                    let dist = pb
                        .iter()
                        .map(|p| {
                            ((p.x as f64 - x as f64).powi(2) + (p.y as f64 - y as f64).powi(2))
                                .sqrt()
                        })
                        .fold(f64::INFINITY, f64::min);
                    let want = if dist <= d as f64 { gt.get(x, y) } else { pred.get(x, y) };
                    assert_eq!(out.get(x, y), want, "band {d}, pixel ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn band_replace_iou_monotone_in_band() {
        let pred = disk(32, 32, 15, 15, 8);
        let gt = disk(32, 32, 17, 16, 9);
        let mut last = mask_iou(&pred, &gt).unwrap();
        for band in [DistanceBand::Finite(1), DistanceBand::Finite(2), DistanceBand::Finite(3), DistanceBand::Infinite] {
            let replaced = gt_band_replace(&pred, &gt, band).unwrap();
            let iou = mask_iou(&replaced, &gt).unwrap();
            assert!(iou >= last, "IoU at {band} regressed: {iou} < {last}");
            last = iou;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn improvement_report_scores_against_before_match() {
        let gt = disk(20, 20, 10, 10, 6);
        let rough = disk(20, 20, 10, 10, 5);
        let before = scene(vec![inst(1, 1, 0.9, rough)], vec![inst(5, 1, 1.0, gt.clone())]);
        let after = scene(vec![inst(1, 1, 0.9, gt.clone())], vec![inst(5, 1, 1.0, gt)]);
        let rows = iou_improvement_report(&[before], &[after]).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].iou_before < 1.0);
        assert_eq!(rows[0].iou_after, 1.0);
    }

    #[test]
    fn improvement_report_unmatched_is_zero() {
        let gt = disk(20, 20, 4, 4, 2);
        let stray = disk(20, 20, 15, 15, 3);
        let s = scene(vec![inst(1, 1, 0.9, stray)], vec![inst(2, 1, 1.0, gt)]);
        let rows =
            iou_improvement_report(std::slice::from_ref(&s), std::slice::from_ref(&s)).unwrap();
        assert_eq!(rows[0].iou_before, 0.0);
        assert_eq!(rows[0].iou_after, 0.0);
    }

    #[test]
    fn improvement_report_rejects_mismatched_ids() {
        let m = disk(12, 12, 6, 6, 3);
        let before = scene(vec![inst(1, 1, 0.9, m.clone())], vec![inst(1, 1, 1.0, m.clone())]);
        let after = scene(vec![inst(99, 1, 0.9, m.clone())], vec![inst(1, 1, 1.0, m)]);
        assert!(iou_improvement_report(&[before], &[after]).is_err());
    }

    #[test]
    fn upper_bound_rows_cover_bands_and_baseline() {
        let gt = disk(24, 24, 12, 12, 7);
        let pred = disk(24, 24, 13, 12, 6);
        let s = scene(vec![inst(1, 1, 0.9, pred)], vec![inst(1, 1, 1.0, gt)]);
        let bands = [DistanceBand::Finite(1), DistanceBand::Infinite];
        let rows = upper_bound_report(&[s], &bands).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].label, "baseline");
        assert_eq!(rows[1].label, "1px");
        assert_eq!(rows[2].label, "inf");
        // infinite band: every matched pair is exact
        for r in &rows[2].report.per_instance {
            assert_eq!(r.iou_after, 1.0);
        }
        assert!(rows[2].report.ap >= rows[0].report.ap);
    }

    #[test]
    fn distance_band_parsing() {
        assert_eq!(DistanceBand::parse("3").unwrap(), DistanceBand::Finite(3));
        assert_eq!(DistanceBand::parse("inf").unwrap(), DistanceBand::Infinite);
        assert!(DistanceBand::parse("0").is_err());
        assert!(DistanceBand::parse("x").is_err());
    }

    #[test]
    fn evaluate_requires_ground_truth() {
        let s = Scene {
            image: ImageRGB::filled(8, 8, [0, 0, 0]),
            predictions: vec![],
            ground_truth: None,
        };
        assert!(matches!(evaluate(&[s]), Err(Error::MissingGroundTruth)));
    }
}
