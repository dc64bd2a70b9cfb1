//! Reassembly of refined patches into a full-resolution mask.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::refine::RefinedPatch;

/// Per-pixel probability accumulator over the instance's full grid.
///
/// Patches are added in ascending `patch_id` order by [`reassemble`], which
/// pins the floating-point summation order and makes the result bitwise
/// reproducible regardless of how the patches were produced.
#[derive(Debug, Clone)]
pub struct AccumulatorGrid {
    width: u32,
    height: u32,
    sum: Vec<f32>,
    count: Vec<u32>,
}

impl AccumulatorGrid {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        AccumulatorGrid { width, height, sum: vec![0.0; n], count: vec![0; n] }
    }

    /// Adds one refined patch's votes; pixels outside the grid are ignored.
    pub fn add(&mut self, patch: &RefinedPatch) -> Result<()> {
        let side = patch.spec.bbox.size;
        if patch.probs.width() != side || patch.probs.height() != side {
            return Err(Error::DimensionMismatch(
                patch.probs.width(),
                patch.probs.height(),
                side,
                side,
            ));
        }
        for py in 0..side {
            let gy = patch.spec.bbox.y + py as i64;
            if gy < 0 || gy >= self.height as i64 {
                continue;
            }
            for px in 0..side {
                let gx = patch.spec.bbox.x + px as i64;
                if gx < 0 || gx >= self.width as i64 {
                    continue;
                }
                let i = gy as usize * self.width as usize + gx as usize;
                self.sum[i] += patch.probs.get(px, py);
                self.count[i] += 1;
            }
        }
        Ok(())
    }

    /// Resolves the grid: covered pixels become foreground when their mean
    /// probability reaches 0.5 (ties included); uncovered pixels copy the
    /// original mask.
    pub fn resolve(&self, original: &BinaryMask) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            let i = y as usize * self.width as usize + x as usize;
            if self.count[i] == 0 {
                original.get(x, y)
            } else {
                self.sum[i] / self.count[i] as f32 >= 0.5
            }
        })
    }
}

/// Merges refined patches back into a full mask by averaging overlapping
/// probabilities. Patch votes accumulate in ascending `patch_id` order.
pub fn reassemble(original: &BinaryMask, patches: &[RefinedPatch]) -> Result<BinaryMask> {
    let mut grid = AccumulatorGrid::new(original.width(), original.height());
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by_key(|&i| patches[i].spec.patch_id);
    for i in order {
        grid.add(&patches[i])?;
    }
    Ok(grid.resolve(original))
}
