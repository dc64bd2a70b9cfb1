//! Deterministic synthetic corpus generator.
//!
//! Scenes contain disjoint star-convex blobs on a flat background, rendered
//! with per-instance colors plus Gaussian pixel noise. Predictions are the
//! ground-truth masks pushed through a degradation model that mimics a
//! low-resolution segmentation head: downsample the mask to a small square,
//! upsample it back, re-threshold, then randomly erode or dilate and jitter
//! its position.
//!
//! Every scene is a pure function of `(seed, index)`. All randomness comes
//! from the fully specified generator in [`SplitMix64`], so an independent
//! reimplementation in any language reproduces a corpus bit for bit.

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ImageRGB, Instance, MorphOp, Scene};
use crate::par;
use crate::resize::{area_average_f32, bilinear_f32};

/// SplitMix64 (Steele, Lea & Flood's `splitmix64` finalizer), fixed
/// constants:
///
/// ```text
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// output = z ^ (z >> 31)
/// ```
///
/// Derived draws are specified exactly, so foreign implementations can
/// match them:
/// * `next_f64` = `(next_u64 >> 11) · 2⁻⁵³`, uniform in `[0, 1)`;
/// * `uniform(lo, hi)` = `lo + next_f64·(hi−lo)`;
/// * `below(n)` = `⌊next_f64·n⌋`;
/// * `gaussian` = `Σ₁¹² next_f64 − 6` (Irwin–Hall; exact arithmetic only,
///   no transcendentals, variance 1).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        (self.next_f64() * n as f64) as u64
    }

    /// Standard normal by the 12-uniform Irwin–Hall sum.
    pub fn gaussian(&mut self) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += self.next_f64();
        }
        acc - 6.0
    }
}

/// Corpus generation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Square image side in pixels.
    pub image_size: u32,
    pub instances_per_image: u32,
    /// Foreground colors, assigned round-robin by instance index.
    pub fg_palette: Vec<[u8; 3]>,
    pub bg_color: [u8; 3],
    /// Standard deviation of the per-channel pixel noise.
    pub noise_sigma: f64,
    /// Square resolution the degradation model squeezes each mask through,
    /// mirroring a low-resolution segmentation head.
    pub head_resolution: u32,
    /// Radius of the random erosion-or-dilation degradation step.
    pub erode_dilate_radius: u32,
    /// Maximum absolute translation jitter, per axis, in pixels.
    pub jitter: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            image_size: 256,
            instances_per_image: 4,
            fg_palette: vec![
                [203, 67, 53],
                [69, 179, 74],
                [66, 103, 212],
                [212, 188, 52],
                [156, 72, 196],
                [58, 186, 186],
            ],
            bg_color: [34, 36, 40],
            noise_sigma: 10.0,
            head_resolution: 28,
            erode_dilate_radius: 1,
            jitter: 1,
        }
    }
}

/// Number of categories instances are spread across.
const CATEGORY_COUNT: u64 = 3;
/// Blob base radius range as a fraction of the image side.
const RADIUS_MIN_FRAC: f64 = 0.09;
const RADIUS_MAX_FRAC: f64 = 0.17;
/// Radial perturbation: harmonics 2..=5 with amplitude `uniform(0, A)/h`.
const HARMONIC_MAX_AMPLITUDE: f64 = 0.55;
/// The radial function is clamped to `[0.55, 1.45]·R`.
const RADIUS_CLAMP: (f64, f64) = (0.55, 1.45);
/// Placement attempts per blob before shrinking the radius range.
const PLACEMENT_ATTEMPTS: usize = 120;

/// Generates scene `index` of the corpus. Prediction `k` is the degraded
/// copy of ground-truth instance `k`, sharing its id and category; ids are
/// `1..=instances_per_image`.
///
/// Draw order, fixed for reproducibility: blob placement (per instance:
/// center x, center y, base radius, then 8 harmonic parameters, repeated on
/// rejection), categories, prediction scores, degradation parameters
/// (per instance: erode/dilate bit, jitter dx, jitter dy), image noise
/// (row-major, channels R,G,B per pixel).
pub fn generate_scene(config: &SynthConfig, index: u64) -> Result<Scene> {
    validate(config)?;
    let mut rng =
        SplitMix64::new(config.seed.wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15)));
    let size = config.image_size;

    // ground-truth blob layout: pairwise-disjoint with a one-pixel gap
    let mut gt_masks: Vec<BinaryMask> = Vec::new();
    let mut occupied = BinaryMask::new(size, size);
    for _ in 0..config.instances_per_image {
        let mut radius_scale = 1.0;
        let mask = loop {
            let mut placed = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let candidate = sample_blob(&mut rng, size, radius_scale);
                let dilated = crate::mask::morph(&candidate, MorphOp::Dilate, 1);
                let overlaps = dilated
                    .bits()
                    .iter()
                    .zip(occupied.bits())
                    .any(|(&a, &b)| a && b);
                if !overlaps && !candidate.is_empty() {
                    placed = Some(candidate);
                    break;
                }
            }
            match placed {
                Some(m) => break m,
                // crowded image: smaller blobs until one fits
                None => radius_scale *= 0.8,
            }
        };
        occupied = union(&occupied, &mask);
        gt_masks.push(mask);
    }

    let categories: Vec<u32> = (0..config.instances_per_image)
        .map(|_| 1 + rng.below(CATEGORY_COUNT) as u32)
        .collect();
    let scores: Vec<f32> = (0..config.instances_per_image)
        .map(|_| rng.uniform(0.6, 1.0) as f32)
        .collect();
    let degraded: Vec<BinaryMask> = gt_masks
        .iter()
        .map(|m| degrade_mask(m, config, &mut rng))
        .collect::<Result<_>>()?;

    let mut image = ImageRGB::filled(size, size, config.bg_color);
    for (i, mask) in gt_masks.iter().enumerate() {
        let color = config.fg_palette[i % config.fg_palette.len()];
        for y in 0..size {
            for x in 0..size {
                if mask.get(x, y) {
                    image.set(x, y, color);
                }
            }
        }
    }
    for y in 0..size {
        for x in 0..size {
            let base = image.get(x, y);
            let mut noisy = [0u8; 3];
            for c in 0..3 {
                let v = base[c] as f64 + config.noise_sigma * rng.gaussian();
                noisy[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            image.set(x, y, noisy);
        }
    }

    let ground_truth: Vec<Instance> = gt_masks
        .into_iter()
        .enumerate()
        .map(|(i, mask)| Instance {
            id: i as u32 + 1,
            category_id: categories[i],
            score: 1.0,
            mask,
        })
        .collect();
    let predictions: Vec<Instance> = degraded
        .into_iter()
        .enumerate()
        .map(|(i, mask)| Instance {
            id: i as u32 + 1,
            category_id: categories[i],
            score: scores[i],
            mask,
        })
        .collect();

    Ok(Scene { image, predictions, ground_truth: Some(ground_truth) })
}

/// Generates scenes `0..count`, in parallel when the feature is on; output
/// order and content never depend on the execution schedule.
pub fn generate_corpus(config: &SynthConfig, count: usize) -> Result<Vec<Scene>> {
    par::map_indices(count, |i| generate_scene(config, i as u64))
        .into_iter()
        .collect()
}

fn validate(config: &SynthConfig) -> Result<()> {
    if config.image_size < 32 {
        return Err(Error::invalid("image size", "must be at least 32"));
    }
    if config.instances_per_image == 0 {
        return Err(Error::invalid("instances per image", "must be positive"));
    }
    if config.fg_palette.is_empty() {
        return Err(Error::invalid("palette", "must not be empty"));
    }
    if config.head_resolution < 2 {
        return Err(Error::invalid("head resolution", "must be at least 2"));
    }
    if config.noise_sigma.is_nan() || config.noise_sigma < 0.0 {
        return Err(Error::invalid("noise sigma", "must be non-negative"));
    }
    Ok(())
}

fn union(a: &BinaryMask, b: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(a.width(), a.height(), |x, y| a.get(x, y) || b.get(x, y))
}

/// One star-convex blob: a radial function `r(θ) = R·(1 + Σ aₕ cos(hθ+φₕ))`
/// over harmonics `h ∈ 2..=5`, rasterized as `dist ≤ r(θ)` around a center
/// placed far enough from the border that the blob always fits.
fn sample_blob(rng: &mut SplitMix64, size: u32, radius_scale: f64) -> BinaryMask {
    let s = size as f64;
    let r_min = s * RADIUS_MIN_FRAC * radius_scale;
    let r_max = s * RADIUS_MAX_FRAC * radius_scale;
    let margin = r_max * RADIUS_CLAMP.1 + 3.0;
    let cx = rng.uniform(margin, s - margin);
    let cy = rng.uniform(margin, s - margin);
    let radius = rng.uniform(r_min, r_max);
    let mut amp = [0.0f64; 4];
    let mut phase = [0.0f64; 4];
    for h in 0..4 {
        amp[h] = rng.uniform(0.0, HARMONIC_MAX_AMPLITUDE) / (h + 2) as f64;
        phase[h] = rng.uniform(0.0, std::f64::consts::TAU);
    }
    // bound the raster scan to the largest possible radius
    let reach = (radius * RADIUS_CLAMP.1).ceil() as i64 + 1;
    let (icx, icy) = (cx.round() as i64, cy.round() as i64);
    let mut mask = BinaryMask::new(size, size);
    for y in (icy - reach).max(0)..=(icy + reach).min(size as i64 - 1) {
        for x in (icx - reach).max(0)..=(icx + reach).min(size as i64 - 1) {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let dist = (dx * dx + dy * dy).sqrt();
            if dist > radius * RADIUS_CLAMP.1 {
                continue;
            }
            let theta = dy.atan2(dx);
            let mut wobble = 1.0;
            for h in 0..4 {
                wobble += amp[h] * ((h + 2) as f64 * theta + phase[h]).cos();
            }
            let r = radius * wobble.clamp(RADIUS_CLAMP.0, RADIUS_CLAMP.1);
            if dist <= r {
                mask.set(x as u32, y as u32, true);
            }
        }
    }
    mask
}

/// Degrades a ground-truth mask into a plausible coarse prediction.
///
/// The tight bounding-box crop is area-average downsampled to
/// `head_resolution²`, bilinearly upsampled back, and re-thresholded at
/// 0.5 — unless the crop already fits inside the head square, in which case
/// no information would be lost and the resampling is skipped. The result
/// is then randomly eroded or dilated by `erode_dilate_radius` and shifted
/// by a uniform per-axis jitter in `[-jitter, jitter]`.
///
/// Consumes exactly three draws: the erode/dilate bit, then jitter dx, dy.
/// Errors on an empty input mask.
pub fn degrade_mask(
    gt: &BinaryMask,
    config: &SynthConfig,
    rng: &mut SplitMix64,
) -> Result<BinaryMask> {
    let (x0, y0, x1, y1) = gt.tight_bbox().ok_or(Error::EmptyMask)?;
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let g = config.head_resolution;

    let erode_bit = rng.next_f64() < 0.5;
    let j = config.jitter as u64;
    let dx = rng.below(2 * j + 1) as i64 - j as i64;
    let dy = rng.below(2 * j + 1) as i64 - j as i64;

    // work on the crop padded by the morphology radius so dilation has room
    let r = config.erode_dilate_radius;
    let (cw, ch) = (bw + 2 * r, bh + 2 * r);
    let mut crop = BinaryMask::new(cw, ch);
    for y in 0..bh {
        for x in 0..bw {
            crop.set(x + r, y + r, gt.get(x0 + x, y0 + y));
        }
    }

    if bw > g || bh > g {
        let field: Vec<f32> =
            crop.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let down = area_average_f32(&field, cw, ch, g, g);
        let up = bilinear_f32(&down, g, g, cw, ch);
        let resampled =
            BinaryMask::from_bits(cw, ch, up.iter().map(|&v| v >= 0.5).collect())?;
        if !resampled.is_empty() {
            crop = resampled;
        }
    }

    let morphed = crate::mask::morph(
        &crop,
        if erode_bit { MorphOp::Erode } else { MorphOp::Dilate },
        r,
    );
    if !morphed.is_empty() {
        crop = morphed;
    }

    // re-embed at the original bbox position plus jitter, clipped
    let (ox, oy) = (x0 as i64 - r as i64 + dx, y0 as i64 - r as i64 + dy);
    let mut out = BinaryMask::new(gt.width(), gt.height());
    for y in 0..ch {
        let gy = oy + y as i64;
        if gy < 0 || gy >= gt.height() as i64 {
            continue;
        }
        for x in 0..cw {
            let gx = ox + x as i64;
            if gx < 0 || gx >= gt.width() as i64 {
                continue;
            }
            if crop.get(x, y) {
                out.set(gx as u32, gy as u32, true);
            }
        }
    }
    Ok(out)
}
