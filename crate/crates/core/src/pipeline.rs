//! End-to-end mask refinement: extract patches along every predicted
//! boundary, refine them, and merge the results back into full-size masks.
//!
//! Scenes are processed in three phases — patch extraction, refinement,
//! reassembly — so the per-stage cost can be reported. Instances fan out
//! across the thread pool inside each phase; results are merged in a fixed
//! order, keeping the output independent of scheduling.

use std::time::Instant;

use crate::assemble::reassemble;
use crate::error::{Error, Result};
use crate::extract::{crop_patches, extract_specs, ExtractionConfig, Patch};
use crate::mask::{BinaryMask, Instance, Scene};
use crate::par;
use crate::refine::{best_iou_matching, refine_patch, RefinedPatch, Refiner};

/// Wall-clock milliseconds spent in each phase of a scene (or corpus) run.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct StageTimings {
    pub extraction_ms: f64,
    pub refinement_ms: f64,
    pub assembly_ms: f64,
}

impl StageTimings {
    /// The three stage rows of a timing report, in pipeline order.
    pub fn rows(&self) -> [(&'static str, f64); 3] {
        [
            ("patch extraction", self.extraction_ms),
            ("refinement", self.refinement_ms),
            ("reassembling", self.assembly_ms),
        ]
    }

    pub fn add(&mut self, other: &StageTimings) {
        self.extraction_ms += other.extraction_ms;
        self.refinement_ms += other.refinement_ms;
        self.assembly_ms += other.assembly_ms;
    }
}

/// What one scene run did, beyond the refined scene itself.
#[derive(Debug, Clone)]
pub struct SceneReport {
    pub timings: StageTimings,
    /// Total patches extracted across the scene's instances.
    pub patch_count: usize,
}

/// Per-prediction index of the matched ground-truth instance, greedy best
/// IoU first, same category only, strictly above 0.5. All-`None` when the
/// scene carries no ground truth.
pub fn matched_gt_indices(scene: &Scene) -> Result<Vec<Option<usize>>> {
    match &scene.ground_truth {
        Some(gts) => best_iou_matching(&scene.predictions, gts, 0.5),
        None => Ok(vec![None; scene.predictions.len()]),
    }
}

/// Extracts every prediction's patches, with ground-truth crops attached
/// for matched instances. Patch ids are renumbered to be unique across the
/// scene (running counter in prediction order), so a flattened patch list
/// can be exported with collision-free file names.
pub fn scene_patches(
    scene: &Scene,
    extraction: &ExtractionConfig,
) -> Result<Vec<Vec<Patch>>> {
    scene.validate()?;
    let matched = matched_gt_indices(scene)?;
    let gts = scene.ground_truth.as_deref().unwrap_or(&[]);
    let mut per_instance: Vec<Vec<Patch>> =
        par::map_indices(scene.predictions.len(), |idx| {
            let pred = &scene.predictions[idx];
            let specs = extract_specs(&pred.mask, pred.id, extraction)?;
            let gt_mask = matched[idx].map(|gi| &gts[gi].mask);
            crop_patches(&scene.image, &pred.mask, gt_mask, &specs)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut next_id = 0u32;
    for patches in &mut per_instance {
        for patch in patches {
            patch.spec.patch_id = next_id;
            next_id += 1;
        }
    }
    Ok(per_instance)
}

/// Refines one instance in isolation: extract, refine, reassemble. The
/// single-threaded unit [`refine_scene`] fans out over.
pub fn refine_instance(
    scene: &Scene,
    instance: &Instance,
    gt_mask: Option<&BinaryMask>,
    extraction: &ExtractionConfig,
    refiner: &Refiner,
) -> Result<BinaryMask> {
    let specs = extract_specs(&instance.mask, instance.id, extraction)?;
    let patches = crop_patches(&scene.image, &instance.mask, gt_mask, &specs)?;
    let refined: Vec<RefinedPatch> =
        patches.iter().map(|p| refine_patch(refiner, p)).collect::<Result<_>>()?;
    reassemble(&instance.mask, &refined)
}

/// Runs the full pipeline over one scene, returning the refined scene and
/// a phase-timing/patch-count report.
///
/// The oracle refiner consumes matched ground truth; predictions that match
/// no ground-truth instance pass through unchanged rather than failing the
/// scene, and a scene with no ground truth at all is an error for it.
pub fn refine_scene(
    scene: &Scene,
    extraction: &ExtractionConfig,
    refiner: &Refiner,
) -> Result<(Scene, SceneReport)> {
    if matches!(refiner, Refiner::Oracle) && scene.ground_truth.is_none() {
        return Err(Error::MissingGroundTruth);
    }

    let start = Instant::now();
    let per_instance = scene_patches(scene, extraction)?;
    let extraction_ms = start.elapsed().as_secs_f64() * 1e3;
    let patch_count = per_instance.iter().map(Vec::len).sum();

    let start = Instant::now();
    let refined: Vec<Vec<RefinedPatch>> = par::try_map(&per_instance, |patches| {
        patches
            .iter()
            // oracle pass-through for unmatched predictions: drop their
            // patches so reassembly reproduces the input mask
            .filter(|p| !(matches!(refiner, Refiner::Oracle) && p.gt_crop.is_none()))
            .map(|p| refine_patch(refiner, p))
            .collect::<Result<Vec<_>>>()
    })?;
    let refinement_ms = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let masks: Vec<BinaryMask> = par::try_map(
        &scene.predictions.iter().zip(&refined).collect::<Vec<_>>(),
        |(pred, patches)| reassemble(&pred.mask, patches),
    )?;
    let assembly_ms = start.elapsed().as_secs_f64() * 1e3;

    let predictions = scene
        .predictions
        .iter()
        .zip(masks)
        .map(|(pred, mask)| Instance { mask, ..pred.clone() })
        .collect();
    let out = Scene {
        image: scene.image.clone(),
        predictions,
        ground_truth: scene.ground_truth.clone(),
    };
    let report = SceneReport {
        timings: StageTimings { extraction_ms, refinement_ms, assembly_ms },
        patch_count,
    };
    Ok((out, report))
}

/// [`refine_scene`] over a corpus, in order.
pub fn refine_corpus(
    scenes: &[Scene],
    extraction: &ExtractionConfig,
    refiner: &Refiner,
) -> Result<(Vec<Scene>, Vec<SceneReport>)> {
    let results = par::try_map(scenes, |scene| refine_scene(scene, extraction, refiner))?;
    Ok(results.into_iter().unzip())
}

/// Merges externally refined patches back into a scene: patches are grouped
/// by their `instance_id`, each group reassembled over that prediction's
/// mask. Predictions with no patches pass through; a patch naming an
/// unknown instance is an error.
pub fn apply_refined(scene: &Scene, refined: &[RefinedPatch]) -> Result<Scene> {
    let mut groups: Vec<Vec<&RefinedPatch>> = vec![Vec::new(); scene.predictions.len()];
    for patch in refined {
        let idx = scene
            .predictions
            .iter()
            .position(|p| p.id == patch.spec.instance_id)
            .ok_or_else(|| Error::BadPatch {
                patch_id: patch.spec.patch_id,
                why: format!("instance {} not in scene", patch.spec.instance_id),
            })?;
        groups[idx].push(patch);
    }
    let predictions = scene
        .predictions
        .iter()
        .zip(groups)
        .map(|(pred, group)| {
            let owned: Vec<RefinedPatch> = group.into_iter().cloned().collect();
            Ok(Instance { mask: reassemble(&pred.mask, &owned)?, ..pred.clone() })
        })
        .collect::<Result<_>>()?;
    Ok(Scene {
        image: scene.image.clone(),
        predictions,
        ground_truth: scene.ground_truth.clone(),
    })
}
