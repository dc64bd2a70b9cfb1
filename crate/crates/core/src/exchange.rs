//! File protocol for refining patches with an out-of-process tool.
//!
//! An exchange directory holds one PNG triple per patch plus a manifest:
//!
//! ```text
//! exchange_dir/
//!   manifest.json
//!   img/<patch_id>.png     8-bit RGB crop, resized to input_size
//!   mask/<patch_id>.png    8-bit gray, nonzero = foreground
//!   gt/<patch_id>.png      optional, same encoding as mask
//!   out/<patch_id>.f32     written by the external tool
//! ```
//!
//! The external tool reads `img`+`mask` and writes `out`: raw little-endian
//! `f32`, row-major, exactly `input_size²` values, each a foreground
//! probability in `[0, 1]`. Import resamples those back to the native crop
//! resolution and strips the context padding, yielding the same
//! [`RefinedPatch`] shape the built-in refiners produce.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::extract::{Patch, PatchSpec, SquareBox};
use crate::mask::ProbMap;
use crate::par;
use crate::refine::RefinedPatch;
use crate::resize::{bilinear_f32, bilinear_rgb, block_mean_f32, nearest_bool};
use crate::scene_io::{load_gray, save_gray, save_rgb};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Nominal (largest) box side among the entries; per-entry geometry
    /// lives in each entry's `box`.
    pub patch_size: u32,
    pub pad: u32,
    /// Square resolution of the exported PNGs and of the `out` files.
    pub input_size: u32,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub patch_id: u32,
    pub instance_id: u32,
    #[serde(rename = "box")]
    pub bbox: BoxRecord,
    pub image: String,
    pub mask: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<String>,
    pub out: String,
}

/// JSON shape of a square box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BoxRecord {
    pub x: i64,
    pub y: i64,
    pub size: u32,
}

impl From<SquareBox> for BoxRecord {
    fn from(b: SquareBox) -> Self {
        BoxRecord { x: b.x, y: b.y, size: b.size }
    }
}

impl From<BoxRecord> for SquareBox {
    fn from(b: BoxRecord) -> Self {
        SquareBox { x: b.x, y: b.y, size: b.size }
    }
}

/// Writes `patches` into `dir` for an external refiner, image crops
/// bilinearly resized and masks nearest-neighbor resized to
/// `input_size²`, and returns the manifest (also written last, as
/// `manifest.json`, after every patch file).
///
/// `input_size` must be at least every patch's padded crop side, so the
/// export never destroys information; all patches must share one pad.
pub fn export_patches(patches: &[Patch], input_size: u32, dir: &Path) -> Result<Manifest> {
    let pad = patches.first().map_or(0, |p| p.spec.pad);
    for patch in patches {
        if patch.spec.pad != pad {
            return Err(Error::invalid(
                "patch set",
                format!("mixed pads {} and {}", pad, patch.spec.pad),
            ));
        }
        if input_size < patch.spec.crop_side() {
            return Err(Error::invalid(
                "input size",
                format!(
                    "{input_size} is smaller than the crop side {} of patch {}",
                    patch.spec.crop_side(),
                    patch.spec.patch_id
                ),
            ));
        }
    }
    for sub in ["img", "mask", "gt", "out"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir, e))?;
    }

    let entries: Vec<ManifestEntry> = par::try_map(patches, |patch: &Patch| {
        let k = patch.spec.patch_id;
        let side = patch.spec.crop_side();
        let image = bilinear_rgb(&patch.image_crop, input_size, input_size);
        let image_rel = format!("img/{k}.png");
        save_rgb(&image, &dir.join(&image_rel))?;

        let resize_mask = |m: &crate::mask::BinaryMask| {
            crate::mask::BinaryMask::from_bits(
                input_size,
                input_size,
                nearest_bool(m.bits(), side, side, input_size, input_size),
            )
        };
        let mask_rel = format!("mask/{k}.png");
        save_gray(&resize_mask(&patch.mask_crop)?, &dir.join(&mask_rel))?;

        let gt = match &patch.gt_crop {
            Some(gt_crop) => {
                let rel = format!("gt/{k}.png");
                save_gray(&resize_mask(gt_crop)?, &dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        debug_assert_eq!(patch.mask_crop.width(), side);
        Ok(ManifestEntry {
            patch_id: k,
            instance_id: patch.spec.instance_id,
            bbox: patch.spec.bbox.into(),
            image: image_rel,
            mask: mask_rel,
            gt,
            out: format!("out/{k}.f32"),
        })
    })?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        patch_size: patches.iter().map(|p| p.spec.bbox.size).max().unwrap_or(0),
        pad,
        input_size,
        entries,
    };
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::malformed(&path, e.to_string()))?;
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads `manifest.json` from an exchange directory.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&body).map_err(|e| Error::malformed(&path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::malformed(
            &path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    Ok(manifest)
}

/// Collects the external tool's outputs back into [`RefinedPatch`]es, in
/// manifest order.
///
/// Every `out` file must hold exactly `input_size²` little-endian `f32`
/// probabilities in `[0, 1]`; anything else fails naming the offending
/// patch. Probabilities are resampled from `input_size` down to each
/// entry's padded crop side — by block mean when the ratio is an integer
/// (which makes the nearest-upscale/export path an exact inverse), by
/// bilinear interpolation otherwise — and the pad ring is discarded.
pub fn import_refined(manifest: &Manifest, dir: &Path) -> Result<Vec<RefinedPatch>> {
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::invalid("manifest", format!("version {}", manifest.version)));
    }
    let n = manifest.input_size;
    par::try_map(&manifest.entries, |entry| {
        let bad = |why: String| Error::BadPatch { patch_id: entry.patch_id, why };
        let side = entry
            .bbox
            .size
            .checked_add(2 * manifest.pad)
            .filter(|&s| s > 0 && s <= n)
            .ok_or_else(|| bad(format!("crop side exceeds input size {n}")))?;

        let path = dir.join(&entry.out);
        let bytes = fs::read(&path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let expected = n as usize * n as usize * 4;
        if bytes.len() != expected {
            return Err(bad(format!(
                "{} holds {} bytes, expected {expected}",
                entry.out,
                bytes.len()
            )));
        }
        let mut values = Vec::with_capacity(n as usize * n as usize);
        for chunk in bytes.chunks_exact(4) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(bad(format!("probability {v} outside [0, 1]")));
            }
            values.push(v);
        }

        let native = if n == side {
            values
        } else if n.is_multiple_of(side) {
            block_mean_f32(&values, n, n, n / side)
        } else {
            bilinear_f32(&values, n, n, side, side)
        };
        // bilinear output can overshoot [0,1] only by rounding; clamp it
        let native = native.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let full = ProbMap::from_values(side, side, native)
            .map_err(|e| bad(format!("resampled probabilities invalid: {e}")))?;
        let probs = full.central_crop(manifest.pad, entry.bbox.size);
        Ok(RefinedPatch {
            spec: PatchSpec {
                patch_id: entry.patch_id,
                instance_id: entry.instance_id,
                bbox: entry.bbox.into(),
                pad: manifest.pad,
                score: 0,
            },
            probs,
        })
    })
}

/// Reference implementation of the external side of the protocol: echoes
/// each entry's exported mask back as hard 0/1 probabilities. Useful for
/// conformance-testing an integration end to end before plugging in a real
/// refiner.
pub fn write_identity_outputs(manifest: &Manifest, dir: &Path) -> Result<()> {
    for entry in &manifest.entries {
        let mask = load_gray(&dir.join(&entry.mask))?;
        let mut bytes = Vec::with_capacity(mask.bits().len() * 4);
        for &bit in mask.bits() {
            bytes.extend_from_slice(&(if bit { 1.0f32 } else { 0.0 }).to_le_bytes());
        }
        let path = dir.join(&entry.out);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{crop_patches, extract_specs, ExtractionConfig};
    use crate::mask::{BinaryMask, ImageRGB};
    use crate::refine::{refine_patch, Refiner};

    fn sample_patches(pad: u32) -> Vec<Patch> {
        let image = ImageRGB::from_raw(
            40,
            40,
            (0..40 * 40 * 3).map(|i| (i * 37 % 251) as u8).collect(),
        )
        .unwrap();
        let mask = BinaryMask::from_fn(40, 40, |x, y| {
            (x as i64 - 20).pow(2) + (y as i64 - 20).pow(2) <= 80
        });
        let gt = BinaryMask::from_fn(40, 40, |x, y| {
            (x as i64 - 21).pow(2) + (y as i64 - 20).pow(2) <= 85
        });
        let config = ExtractionConfig { patch_size: 16, pad, ..Default::default() };
        let specs = extract_specs(&mask, 7, &config).unwrap();
        crop_patches(&image, &mask, Some(&gt), &specs).unwrap()
    }

    #[test]
    fn export_writes_every_file_and_entry() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(2);
        let manifest = export_patches(&patches, 32, dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), patches.len());
        assert_eq!(manifest.patch_size, 16);
        assert_eq!(manifest.pad, 2);
        for entry in &manifest.entries {
            assert!(dir.path().join(&entry.image).exists());
            assert!(dir.path().join(&entry.mask).exists());
            assert!(dir.path().join(entry.gt.as_ref().unwrap()).exists());
        }
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    }

    #[test]
    fn same_size_export_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(0);
        let manifest = export_patches(&patches, 16, dir.path()).unwrap();
        for (patch, entry) in patches.iter().zip(&manifest.entries) {
            let img = crate::scene_io::load_rgb(&dir.path().join(&entry.image)).unwrap();
            assert_eq!(img, patch.image_crop);
            let mask = load_gray(&dir.path().join(&entry.mask)).unwrap();
            assert_eq!(mask, patch.mask_crop);
        }
    }

    #[test]
    fn doubled_export_recovers_masks_after_block_mean() {
        // nearest 2x upscale followed by 2x2 block mean is exactly invertible
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(2);
        let side = patches[0].spec.crop_side();
        let manifest = export_patches(&patches, side * 2, dir.path()).unwrap();
        write_identity_outputs(&manifest, dir.path()).unwrap();
        let refined = import_refined(&manifest, dir.path()).unwrap();
        for (patch, got) in patches.iter().zip(&refined) {
            let want = refine_patch(&Refiner::Identity, patch).unwrap();
            assert_eq!(got.spec.patch_id, want.spec.patch_id);
            assert_eq!(got.probs.values(), want.probs.values());
        }
    }

    #[test]
    fn identity_round_trip_without_resize() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(3);
        let side = patches[0].spec.crop_side();
        let manifest = export_patches(&patches, side, dir.path()).unwrap();
        write_identity_outputs(&manifest, dir.path()).unwrap();
        let refined = import_refined(&manifest, dir.path()).unwrap();
        assert_eq!(refined.len(), patches.len());
        for (patch, got) in patches.iter().zip(&refined) {
            let want = refine_patch(&Refiner::Identity, patch).unwrap();
            assert_eq!(got.probs.values(), want.probs.values());
            assert_eq!(got.spec.bbox, want.spec.bbox);
        }
    }

    #[test]
    fn import_preserves_manifest_order() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(0);
        let mut manifest = export_patches(&patches, 16, dir.path()).unwrap();
        write_identity_outputs(&manifest, dir.path()).unwrap();
        manifest.entries.reverse();
        let refined = import_refined(&manifest, dir.path()).unwrap();
        let ids: Vec<u32> = refined.iter().map(|r| r.spec.patch_id).collect();
        let want: Vec<u32> = manifest.entries.iter().map(|e| e.patch_id).collect();
        assert_eq!(ids, want);
    }

    #[test]
    fn undersized_input_size_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(2); // crop side 20
        assert!(export_patches(&patches, 19, dir.path()).is_err());
    }

    #[test]
    fn missing_output_names_patch() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(0);
        let manifest = export_patches(&patches, 16, dir.path()).unwrap();
        write_identity_outputs(&manifest, dir.path()).unwrap();
        let victim = manifest.entries[1].patch_id;
        fs::remove_file(dir.path().join(&manifest.entries[1].out)).unwrap();
        let err = import_refined(&manifest, dir.path()).unwrap_err();
        match err {
            Error::BadPatch { patch_id, .. } => assert_eq!(patch_id, victim),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn truncated_output_names_patch() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(0);
        let manifest = export_patches(&patches, 16, dir.path()).unwrap();
        write_identity_outputs(&manifest, dir.path()).unwrap();
        let path = dir.path().join(&manifest.entries[0].out);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = import_refined(&manifest, dir.path()).unwrap_err();
        match err {
            Error::BadPatch { patch_id, why } => {
                assert_eq!(patch_id, manifest.entries[0].patch_id);
                assert!(why.contains("bytes"), "{why}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn nan_and_out_of_range_values_name_patch() {
        for poison in [f32::NAN, 1.5, -0.1] {
            let dir = tempfile::tempdir().unwrap();
            let patches = sample_patches(0);
            let manifest = export_patches(&patches, 16, dir.path()).unwrap();
            write_identity_outputs(&manifest, dir.path()).unwrap();
            let path = dir.path().join(&manifest.entries[0].out);
            let mut bytes = fs::read(&path).unwrap();
            bytes[..4].copy_from_slice(&poison.to_le_bytes());
            fs::write(&path, bytes).unwrap();
            let err = import_refined(&manifest, dir.path()).unwrap_err();
            assert!(
                matches!(err, Error::BadPatch { patch_id, .. }
                    if patch_id == manifest.entries[0].patch_id),
                "poison {poison}: {err}"
            );
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let patches = sample_patches(0);
        let mut manifest = export_patches(&patches, 16, dir.path()).unwrap();
        manifest.version = 2;
        assert!(import_refined(&manifest, dir.path()).is_err());
        let path = dir.path().join("manifest.json");
        let body = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 9");
        fs::write(&path, body).unwrap();
        assert!(read_manifest(dir.path()).is_err());
    }

    #[test]
    fn empty_patch_list_exports_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_patches(&[], 16, dir.path()).unwrap();
        assert!(manifest.entries.is_empty());
        assert!(import_refined(&manifest, dir.path()).unwrap().is_empty());
    }
}
