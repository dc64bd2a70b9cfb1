//! Post-processing toolkit that sharpens instance segmentation masks by
//! re-deciding the pixels along each predicted object boundary.
//!
//! The pipeline crops square patches centered on boundary pixels, runs a
//! pluggable per-patch refiner over them, and averages the refined
//! foreground probabilities back into a full-resolution mask. The crate also
//! ships the surrounding machinery: mask/image primitives, COCO-style
//! evaluation with a boundary F-score, ground-truth band-replacement
//! upper-bound reports, a deterministic synthetic scene generator, and a
//! file-based exchange format for plugging in out-of-process refiners.

pub mod assemble;
pub mod edt;
pub mod error;
pub mod exchange;
pub mod extract;
pub mod mask;
pub mod metrics;
pub(crate) mod par;
pub mod pipeline;
pub mod refine;
pub mod resize;
pub mod scene_io;
pub mod synthgen;

pub use error::{Error, Result};
