//! Exact Euclidean distance transform.
//!
//! Computed with the two-pass lower-envelope algorithm over squared
//! distances: a 1-D transform down each column, then along each row. Squared
//! distances between pixel centers are integers, so they are representable
//! exactly in `f64` and the final `sqrt` is correctly rounded — the result
//! matches a brute-force scan over the seed set bit for bit.

use crate::error::{Error, Result};
use crate::mask::PixelCoord;

/// Distance from every pixel of a `width × height` grid to the nearest seed.
///
/// Returns a row-major field of Euclidean distances; output is `0` exactly
/// at seeds and positive elsewhere. Errors when `seeds` is empty or any seed
/// lies outside the grid.
pub fn distance_to_set(width: u32, height: u32, seeds: &[PixelCoord]) -> Result<Vec<f32>> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("grid size", "zero width or height"));
    }
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    let (w, h) = (width as usize, height as usize);
    let mut field = vec![f64::INFINITY; w * h];
    for s in seeds {
        if s.x >= width || s.y >= height {
            return Err(Error::invalid(
                "seed",
                format!("({}, {}) outside {width}x{height} grid", s.x, s.y),
            ));
        }
        field[s.y as usize * w + s.x as usize] = 0.0;
    }
    squared_transform(&mut field, w, h);
    Ok(field.iter().map(|&d| d.sqrt() as f32).collect())
}

/// In-place exact squared-distance transform of an initialized field
/// (0 at seeds, `+inf` elsewhere).
fn squared_transform(field: &mut [f64], w: usize, h: usize) {
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = field[y * w + x];
        }
        transform_1d(&f[..h], &mut d, &mut v, &mut z);
        for y in 0..h {
            field[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&field[y * w..y * w + w]);
        transform_1d(&f[..w], &mut d, &mut v, &mut z);
        field[y * w..y * w + w].copy_from_slice(&d[..w]);
    }
}

/// 1-D squared-distance transform: `d[q] = min_p (q - p)² + f[p]`.
///
/// Maintains the lower envelope of the parabolas rooted at each finite
/// `f[p]`; infinite entries never contribute and are skipped.
fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut any = false;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if !any {
            any = true;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            continue;
        }
        // abscissa where the parabola at q overtakes the one at v[k]
        let mut s = intersect(f, q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(f, q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    if !any {
        d[..n].fill(f64::INFINITY);
        return;
    }
    let mut k = 0usize;
    for (q, slot) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *slot = dq * dq + f[v[k]];
    }
}

#[inline]
fn intersect(f: &[f64], p: usize, q: usize) -> f64 {
    let (fp, fq) = (f[p], f[q]);
    let (p, q) = (p as f64, q as f64);
    ((fp + p * p) - (fq + q * q)) / (2.0 * p - 2.0 * q)
}
