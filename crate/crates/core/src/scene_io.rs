//! On-disk scene format.
//!
//! A scene is a directory:
//!
//! ```text
//! scene_dir/
//!   image.png          8-bit RGB
//!   pred.json          [{"id", "category_id", "score", "mask"}, ...]
//!   gt.json            same shape, optional
//!   masks/<id>.png     8-bit grayscale, nonzero = foreground
//!   masks/gt/<id>.png
//! ```
//!
//! The `mask` field in the JSON holds the path of the mask image relative
//! to the scene directory. A corpus is a directory of `scene_NNNN`
//! subdirectories, loaded in lexicographic order.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ImageRGB, Instance, Scene};

#[derive(serde::Serialize, serde::Deserialize)]
struct InstanceRecord {
    id: u32,
    category_id: u32,
    score: f32,
    mask: String,
}

/// Writes a scene into `dir`, creating it (and parents) as needed.
pub fn save_scene(scene: &Scene, dir: &Path) -> Result<()> {
    scene.validate()?;
    let masks_dir = dir.join("masks");
    fs::create_dir_all(masks_dir.join("gt")).map_err(|e| Error::io(dir, e))?;

    save_rgb(&scene.image, &dir.join("image.png"))?;
    write_instances(&scene.predictions, "masks", dir, &dir.join("pred.json"))?;
    if let Some(gt) = &scene.ground_truth {
        write_instances(gt, "masks/gt", dir, &dir.join("gt.json"))?;
    }
    Ok(())
}

/// Reads back a scene written by [`save_scene`]. Ground truth is loaded
/// when `gt.json` exists.
pub fn load_scene(dir: &Path) -> Result<Scene> {
    let image = load_rgb(&dir.join("image.png"))?;
    let predictions = read_instances(&dir.join("pred.json"), dir, &image)?;
    let gt_path = dir.join("gt.json");
    let ground_truth =
        if gt_path.exists() { Some(read_instances(&gt_path, dir, &image)?) } else { None };
    let scene = Scene { image, predictions, ground_truth };
    scene.validate()?;
    Ok(scene)
}

/// Writes `scenes` as `scene_0000`, `scene_0001`, ... under `dir`.
pub fn save_corpus(scenes: &[Scene], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, scene) in scenes.iter().enumerate() {
        save_scene(scene, &dir.join(format!("scene_{i:04}")))?;
    }
    Ok(())
}

/// Loads every `scene_*` subdirectory of `dir`, in name order.
pub fn load_corpus(dir: &Path) -> Result<Vec<Scene>> {
    let mut scene_dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("scene_"))
        })
        .collect();
    scene_dirs.sort();
    if scene_dirs.is_empty() {
        return Err(Error::malformed(dir, "no scene_* subdirectories"));
    }
    scene_dirs.iter().map(|d| load_scene(d)).collect()
}

fn write_instances(
    instances: &[Instance],
    mask_subdir: &str,
    scene_dir: &Path,
    json_path: &Path,
) -> Result<()> {
    let mut records = Vec::with_capacity(instances.len());
    for inst in instances {
        let rel = format!("{mask_subdir}/{}.png", inst.id);
        save_gray(&inst.mask, &scene_dir.join(&rel))?;
        records.push(InstanceRecord {
            id: inst.id,
            category_id: inst.category_id,
            score: inst.score,
            mask: rel,
        });
    }
    let body = serde_json::to_string_pretty(&records)
        .map_err(|e| Error::malformed(json_path, e.to_string()))?;
    fs::write(json_path, body).map_err(|e| Error::io(json_path, e))
}

fn read_instances(json_path: &Path, scene_dir: &Path, image: &ImageRGB) -> Result<Vec<Instance>> {
    let body = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let records: Vec<InstanceRecord> = serde_json::from_str(&body)
        .map_err(|e| Error::malformed(json_path, e.to_string()))?;
    let mut instances = Vec::with_capacity(records.len());
    for rec in records {
        let mask_path = scene_dir.join(&rec.mask);
        let mask = load_gray(&mask_path)?;
        if !(rec.score.is_finite() && (0.0..=1.0).contains(&rec.score)) {
            return Err(Error::malformed(
                json_path,
                format!("instance {}: score {} outside [0, 1]", rec.id, rec.score),
            ));
        }
        if mask.width() != image.width() || mask.height() != image.height() {
            return Err(Error::DimensionMismatch(
                image.width(),
                image.height(),
                mask.width(),
                mask.height(),
            ));
        }
        instances.push(Instance {
            id: rec.id,
            category_id: rec.category_id,
            score: rec.score,
            mask,
        });
    }
    Ok(instances)
}

pub(crate) fn save_rgb(image: &ImageRGB, path: &Path) -> Result<()> {
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(image.width(), image.height(), image.data().to_vec())
            .expect("buffer length matches dimensions");
    buf.save(path).map_err(|e| Error::malformed(path, e.to_string()))
}

pub(crate) fn load_rgb(path: &Path) -> Result<ImageRGB> {
    let img = image::open(path).map_err(|e| Error::malformed(path, e.to_string()))?.to_rgb8();
    ImageRGB::from_raw(img.width(), img.height(), img.into_raw())
}

pub(crate) fn save_gray(mask: &BinaryMask, path: &Path) -> Result<()> {
    let pixels: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: image::GrayImage =
        image::ImageBuffer::from_raw(mask.width(), mask.height(), pixels)
            .expect("buffer length matches dimensions");
    buf.save(path).map_err(|e| Error::malformed(path, e.to_string()))
}

pub(crate) fn load_gray(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| Error::malformed(path, e.to_string()))?.to_luma8();
    let bits = img.pixels().map(|p| p.0[0] != 0).collect();
    BinaryMask::from_bits(img.width(), img.height(), bits)
}
