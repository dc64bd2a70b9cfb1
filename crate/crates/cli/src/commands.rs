use std::collections::HashSet;
use std::path::{Path, PathBuf};

use bpr_core::exchange::{export_patches, import_refined, read_manifest};
use bpr_core::extract::Patch;
use bpr_core::mask::Scene;
use bpr_core::metrics::{
    evaluate, iou_improvement_report, mean_matched_iou, upper_bound_report, DistanceBand,
    EvalReport,
};
use bpr_core::pipeline::{apply_refined, refine_corpus, scene_patches, SceneReport, StageTimings};
use bpr_core::refine::select_training_instances;
use bpr_core::scene_io::{load_corpus, load_scene, save_corpus, save_scene};
use bpr_core::synthgen::{generate_corpus, SynthConfig};
use bpr_core::{Error, Result};

use crate::opts::{Resolved, SchemeArg};

/// A scene directory (has `pred.json`) or a corpus of `scene_*` children.
#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Scene,
    Corpus,
}

fn load_input(dir: &Path) -> Result<(Vec<Scene>, Layout)> {
    if dir.join("pred.json").exists() {
        Ok((vec![load_scene(dir)?], Layout::Scene))
    } else {
        Ok((load_corpus(dir)?, Layout::Corpus))
    }
}

fn save_output(scenes: &[Scene], layout: Layout, dir: &Path) -> Result<()> {
    match layout {
        Layout::Scene => save_scene(&scenes[0], dir),
        Layout::Corpus => save_corpus(scenes, dir),
    }
}

/// One exchange directory per scene: the directory itself for a single
/// scene, `scene_NNNN` children (mirroring the corpus layout) otherwise.
fn exchange_subdirs(layout: Layout, base: &Path, count: usize) -> Vec<PathBuf> {
    match layout {
        Layout::Scene => vec![base.to_path_buf()],
        Layout::Corpus => (0..count).map(|i| base.join(format!("scene_{i:04}"))).collect(),
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::malformed(path, e.to_string()))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn gen(
    out: &Path,
    scenes: Option<usize>,
    seed: Option<u64>,
    image_size: Option<u32>,
    instances: Option<u32>,
) -> Result<()> {
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        seed: seed.unwrap_or(defaults.seed),
        image_size: image_size.unwrap_or(defaults.image_size),
        instances_per_image: instances.unwrap_or(defaults.instances_per_image),
        ..defaults
    };
    let count = scenes.unwrap_or(20);
    let corpus = generate_corpus(&config, count)?;
    save_corpus(&corpus, out)?;
    println!("wrote {count} scenes (seed {}) to {}", config.seed, out.display());
    Ok(())
}

pub fn refine(input: &Path, out: &Path, resolved: &Resolved, timing: bool) -> Result<()> {
    let (scenes, layout) = load_input(input)?;
    let (refined, reports) = match resolved.builtin_refiner() {
        Some(refiner) => refine_corpus(&scenes, &resolved.extraction, &refiner)?,
        None => {
            if timing {
                log::warn!("--timing covers in-process refiners only; skipping the report");
            }
            let dirs = exchange_subdirs(layout, resolved.exchange_dir()?, scenes.len());
            let mut refined = Vec::with_capacity(scenes.len());
            for (scene, dir) in scenes.iter().zip(&dirs) {
                let manifest = read_manifest(dir)?;
                let patches = import_refined(&manifest, dir)?;
                refined.push(apply_refined(scene, &patches)?);
            }
            (refined, Vec::new())
        }
    };
    save_output(&refined, layout, out)?;
    if timing && !reports.is_empty() {
        print_timing(&reports);
    }
    println!("refined {} scene(s) -> {}", refined.len(), out.display());
    Ok(())
}

fn print_timing(reports: &[SceneReport]) {
    let mut total = StageTimings::default();
    for r in reports {
        total.add(&r.timings);
    }
    println!("timing (ms)");
    for (name, ms) in total.rows() {
        println!("  {name:<18} {ms:>10.2}");
    }
    println!("patches per image");
    for (i, r) in reports.iter().enumerate() {
        println!("  scene {i:<5} {:>8}", r.patch_count);
    }
    let mean =
        reports.iter().map(|r| r.patch_count).sum::<usize>() as f64 / reports.len() as f64;
    println!("  mean      {mean:>9.1}");
}

#[derive(serde::Serialize)]
struct EvalOutput<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    mean_matched_iou_before: Option<f64>,
    mean_matched_iou_after: Option<f64>,
}

pub fn eval(
    pred: &Path,
    gt: Option<&Path>,
    baseline: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (mut scenes, _) = load_input(pred)?;
    let gt_sets: Option<Vec<_>> = match gt {
        Some(gt_dir) => {
            let (gt_scenes, _) = load_input(gt_dir)?;
            if gt_scenes.len() != scenes.len() {
                return Err(Error::invalid(
                    "ground-truth corpus",
                    format!("{} scenes vs {} predictions", gt_scenes.len(), scenes.len()),
                ));
            }
            let sets: Vec<_> = gt_scenes.into_iter().map(|s| s.ground_truth).collect();
            for (scene, set) in scenes.iter_mut().zip(sets.clone()) {
                scene.ground_truth = set;
            }
            Some(sets)
        }
        None => None,
    };

    let mut report = evaluate(&scenes)?;
    let mut means = None;
    if let Some(base_dir) = baseline {
        let (mut base, _) = load_input(base_dir)?;
        if let Some(sets) = gt_sets {
            if base.len() != scenes.len() {
                return Err(Error::invalid(
                    "baseline corpus",
                    format!("{} scenes vs {} predictions", base.len(), scenes.len()),
                ));
            }
            for (scene, set) in base.iter_mut().zip(sets) {
                scene.ground_truth = set;
            }
        }
        report.per_instance = iou_improvement_report(&base, &scenes)?;
        means = mean_matched_iou(&report.per_instance);
    }

    println!("{:<10} {:>8}", "metric", "value");
    for (name, v) in [
        ("AP", report.ap),
        ("AP50", report.ap50),
        ("AP75", report.ap75),
        ("AP_S", report.ap_s),
        ("AP_M", report.ap_m),
        ("AP_L", report.ap_l),
        ("AF", report.af),
    ] {
        println!("{name:<10} {v:>8.4}");
    }
    if let Some((before, after)) = means {
        println!("{:<10} {before:>8.4}", "mIoU_base");
        println!("{:<10} {after:>8.4}", "mIoU");
    }
    if let Some(path) = out {
        let output = EvalOutput {
            report: &report,
            mean_matched_iou_before: means.map(|m| m.0),
            mean_matched_iou_after: means.map(|m| m.1),
        };
        write_json(&output, path)?;
        log::info!("wrote report to {}", path.display());
    }
    Ok(())
}

pub fn upperbound(input: &Path, bands: &str, out: Option<&Path>) -> Result<()> {
    let (scenes, _) = load_input(input)?;
    let bands: Vec<DistanceBand> =
        bands.split(',').map(DistanceBand::parse).collect::<Result<_>>()?;
    if bands.is_empty() {
        return Err(Error::invalid("bands", "need at least one band"));
    }
    let rows = upper_bound_report(&scenes, &bands)?;
    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>8}",
        "band", "AP", "AP50", "AF", "mIoU"
    );
    for row in &rows {
        let miou = mean_matched_iou(&row.report.per_instance).map_or(f64::NAN, |m| m.1);
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            row.label, row.report.ap, row.report.ap50, row.report.af, miou
        );
    }
    if let Some(path) = out {
        write_json(&rows, path)?;
    }
    Ok(())
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Nms,
    PatchSize,
    Scheme,
}

#[derive(serde::Serialize)]
struct SweepRow {
    value: String,
    ap: f64,
    ap50: f64,
    af: f64,
    mean_matched_iou: Option<f64>,
    /// Patches extracted in each scene, in corpus order.
    patch_counts: Vec<usize>,
}

pub fn sweep(
    input: &Path,
    axis: SweepAxis,
    values: Option<&str>,
    resolved: &Resolved,
    out: Option<&Path>,
) -> Result<()> {
    let (scenes, _) = load_input(input)?;
    let refiner = resolved
        .builtin_refiner()
        .ok_or_else(|| Error::invalid("refiner", "sweep needs an in-process refiner"))?;

    // each sweep point is (label, extraction config)
    let mut points = Vec::new();
    match axis {
        SweepAxis::Nms => {
            let defaults = "0,0.15,0.25,0.35,0.45,0.55,0.65";
            for tok in values.unwrap_or(defaults).split(',') {
                let thr: f32 = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid("nms value", format!("{tok:?}")))?;
                let mut e = resolved.extraction.clone();
                e.nms_threshold = thr;
                points.push((format!("{thr}"), e));
            }
        }
        SweepAxis::PatchSize => {
            let defaults = "32/0,32/5,64/0,64/5,96/0,96/5";
            for tok in values.unwrap_or(defaults).split(',') {
                let (s, p) = tok
                    .trim()
                    .split_once('/')
                    .ok_or_else(|| Error::invalid("patch-size value", "expected SIZE/PAD"))?;
                let size: u32 = s
                    .parse()
                    .map_err(|_| Error::invalid("patch size", format!("{s:?}")))?;
                let pad: u32 =
                    p.parse().map_err(|_| Error::invalid("pad", format!("{p:?}")))?;
                let mut e = resolved.extraction.clone();
                e.patch_size = size;
                e.grid_cell = size;
                e.pad = pad;
                points.push((format!("{size}/{pad}"), e));
            }
        }
        SweepAxis::Scheme => {
            let defaults = "dense-nms,grid,instance";
            for tok in values.unwrap_or(defaults).split(',') {
                let scheme = <SchemeArg as clap::ValueEnum>::from_str(tok.trim(), true)
                    .map_err(|_| Error::invalid("scheme", format!("{tok:?}")))?;
                let mut e = resolved.extraction.clone();
                e.scheme = scheme.into();
                points.push((tok.trim().to_string(), e));
            }
        }
    }

    let mut rows = Vec::new();
    for (label, extraction) in points {
        extraction.validate()?;
        let (refined, reports) = refine_corpus(&scenes, &extraction, &refiner)?;
        let report = evaluate(&refined)?;
        let improvement = iou_improvement_report(&scenes, &refined)?;
        rows.push(SweepRow {
            value: label,
            ap: report.ap,
            ap50: report.ap50,
            af: report.af,
            mean_matched_iou: mean_matched_iou(&improvement).map(|m| m.1),
            patch_counts: reports.iter().map(|r| r.patch_count).collect(),
        });
    }

    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>10}",
        "value", "AP", "AP50", "AF", "mIoU", "patches"
    );
    for row in &rows {
        let mean_patches =
            row.patch_counts.iter().sum::<usize>() as f64 / row.patch_counts.len().max(1) as f64;
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10.1}",
            row.value,
            row.ap,
            row.ap50,
            row.af,
            row.mean_matched_iou.unwrap_or(f64::NAN),
            mean_patches
        );
    }
    if let Some(path) = out {
        write_json(&rows, path)?;
    }
    Ok(())
}

pub fn export(input: &Path, resolved: &Resolved, training: bool) -> Result<()> {
    let (scenes, layout) = load_input(input)?;
    let dirs = exchange_subdirs(layout, resolved.exchange_dir()?, scenes.len());
    let mut extraction = resolved.extraction.clone();
    if training && extraction.nms_threshold != 0.25 {
        log::info!(
            "training export pins the NMS threshold to 0.25 (was {})",
            extraction.nms_threshold
        );
        extraction.nms_threshold = 0.25;
    }
    for (scene, dir) in scenes.iter().zip(&dirs) {
        let filtered;
        let scene = if training {
            let keep: HashSet<u32> =
                select_training_instances(scene)?.iter().map(|t| t.prediction_id).collect();
            filtered = Scene {
                image: scene.image.clone(),
                predictions: scene
                    .predictions
                    .iter()
                    .filter(|p| keep.contains(&p.id))
                    .cloned()
                    .collect(),
                ground_truth: scene.ground_truth.clone(),
            };
            &filtered
        } else {
            scene
        };
        let flat: Vec<Patch> =
            scene_patches(scene, &extraction)?.into_iter().flatten().collect();
        let manifest = export_patches(&flat, resolved.input_size, dir)?;
        println!("{}: exported {} patches", dir.display(), manifest.entries.len());
    }
    Ok(())
}

pub fn import(input: &Path, out: &Path, resolved: &Resolved) -> Result<()> {
    let (scenes, layout) = load_input(input)?;
    let dirs = exchange_subdirs(layout, resolved.exchange_dir()?, scenes.len());
    let mut refined = Vec::with_capacity(scenes.len());
    let mut total = 0usize;
    for (scene, dir) in scenes.iter().zip(&dirs) {
        let manifest = read_manifest(dir)?;
        let patches = import_refined(&manifest, dir)?;
        total += patches.len();
        refined.push(apply_refined(scene, &patches)?);
    }
    save_output(&refined, layout, out)?;
    println!("imported {total} patches into {} scene(s) -> {}", refined.len(), out.display());
    Ok(())
}
