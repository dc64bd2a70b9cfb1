//! Resampling kernels used at the exchange boundary and by the synthetic
//! degradation model.
//!
//! All kernels use the pixel-center convention (`src = (dst + 0.5)·scale − 0.5`
//! for bilinear), so resizing to the same shape reproduces the input exactly.

use crate::mask::ImageRGB;

/// Bilinear interpolation of a scalar field.
pub fn bilinear_f32(src: &[f32], sw: u32, sh: u32, dw: u32, dh: u32) -> Vec<f32> {
    assert_eq!(src.len(), sw as usize * sh as usize);
    assert!(dw > 0 && dh > 0);
    let mut out = Vec::with_capacity(dw as usize * dh as usize);
    let sx_scale = sw as f64 / dw as f64;
    let sy_scale = sh as f64 / dh as f64;
    for y in 0..dh {
        let fy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh as usize - 1);
        let wy = fy - y0 as f64;
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw as usize - 1);
            let wx = fx - x0 as f64;
            let at = |xx: usize, yy: usize| src[yy * sw as usize + xx] as f64;
            let top = at(x0, y0) * (1.0 - wx) + at(x1, y0) * wx;
            let bot = at(x0, y1) * (1.0 - wx) + at(x1, y1) * wx;
            out.push((top * (1.0 - wy) + bot * wy) as f32);
        }
    }
    out
}

/// Nearest-neighbor resampling of a boolean field. Integer upscale factors
/// replicate each source pixel into a constant block.
pub fn nearest_bool(src: &[bool], sw: u32, sh: u32, dw: u32, dh: u32) -> Vec<bool> {
    assert_eq!(src.len(), sw as usize * sh as usize);
    assert!(dw > 0 && dh > 0);
    let mut out = Vec::with_capacity(dw as usize * dh as usize);
    for y in 0..dh {
        let sy = (((y as f64 + 0.5) * sh as f64 / dh as f64) as usize).min(sh as usize - 1);
        for x in 0..dw {
            let sx = (((x as f64 + 0.5) * sw as f64 / dw as f64) as usize).min(sw as usize - 1);
            out.push(src[sy * sw as usize + sx]);
        }
    }
    out
}

/// Mean over disjoint `factor × factor` blocks; exact for block-constant
/// inputs. Source sides must be multiples of `factor`.
pub fn block_mean_f32(src: &[f32], sw: u32, sh: u32, factor: u32) -> Vec<f32> {
    assert!(factor > 0 && sw.is_multiple_of(factor) && sh.is_multiple_of(factor));
    assert_eq!(src.len(), sw as usize * sh as usize);
    let (dw, dh) = (sw / factor, sh / factor);
    let inv = 1.0 / (factor as f64 * factor as f64);
    let mut out = Vec::with_capacity(dw as usize * dh as usize);
    for y in 0..dh {
        for x in 0..dw {
            let mut sum = 0.0f64;
            for by in 0..factor {
                for bx in 0..factor {
                    sum += src[((y * factor + by) * sw + x * factor + bx) as usize] as f64;
                }
            }
            out.push((sum * inv) as f32);
        }
    }
    out
}

/// Area-weighted average resampling: every destination cell averages the
/// source region it covers, with fractional rows/columns weighted by their
/// overlap. Works for downscaling and upscaling alike.
pub fn area_average_f32(src: &[f32], sw: u32, sh: u32, dw: u32, dh: u32) -> Vec<f32> {
    assert_eq!(src.len(), sw as usize * sh as usize);
    assert!(dw > 0 && dh > 0);
    let x_scale = sw as f64 / dw as f64;
    let y_scale = sh as f64 / dh as f64;
    let mut out = Vec::with_capacity(dw as usize * dh as usize);
    for y in 0..dh {
        let (y_lo, y_hi) = (y as f64 * y_scale, (y + 1) as f64 * y_scale);
        for x in 0..dw {
            let (x_lo, x_hi) = (x as f64 * x_scale, (x + 1) as f64 * x_scale);
            let mut sum = 0.0f64;
            let mut weight = 0.0f64;
            let mut sy = y_lo.floor() as usize;
            while (sy as f64) < y_hi && sy < sh as usize {
                let cover_y = (y_hi.min(sy as f64 + 1.0) - y_lo.max(sy as f64)).max(0.0);
                if cover_y > 0.0 {
                    let mut sx = x_lo.floor() as usize;
                    while (sx as f64) < x_hi && sx < sw as usize {
                        let cover_x =
                            (x_hi.min(sx as f64 + 1.0) - x_lo.max(sx as f64)).max(0.0);
                        if cover_x > 0.0 {
                            let w = cover_x * cover_y;
                            sum += src[sy * sw as usize + sx] as f64 * w;
                            weight += w;
                        }
                        sx += 1;
                    }
                }
                sy += 1;
            }
            out.push((sum / weight) as f32);
        }
    }
    out
}

/// Bilinear resize of an RGB image, channel by channel, rounding back to u8.
pub fn bilinear_rgb(img: &ImageRGB, dw: u32, dh: u32) -> ImageRGB {
    let (sw, sh) = (img.width(), img.height());
    if sw == dw && sh == dh {
        return img.clone();
    }
    let n = sw as usize * sh as usize;
    let mut channel = vec![0.0f32; n];
    let mut out = vec![0u8; 3 * dw as usize * dh as usize];
    for c in 0..3 {
        for (i, v) in channel.iter_mut().enumerate() {
            *v = img.data()[3 * i + c] as f32;
        }
        for (i, v) in bilinear_f32(&channel, sw, sh, dw, dh).into_iter().enumerate() {
            out[3 * i + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    ImageRGB::from_raw(dw, dh, out).expect("constructed buffer has the right size")
}
