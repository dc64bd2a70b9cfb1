//! Flag handling: shared pipeline options, the JSON config file, and the
//! merge between them (explicit flags always win).

use std::path::{Path, PathBuf};

use bpr_core::extract::{ExtractionConfig, ExtractionScheme};
use bpr_core::refine::{ColorModelParams, Refiner};
use bpr_core::{Error, Result};

#[derive(clap::Args, Clone, Default, Debug)]
pub struct PipelineOpts {
    /// Boundary patch side in pixels (even)
    #[arg(long, value_name = "PX")]
    pub patch_size: Option<u32>,
    /// Context margin cropped around each patch side
    #[arg(long, value_name = "PX")]
    pub pad: Option<u32>,
    /// Greedy NMS IoU threshold, in [0, 1)
    #[arg(long, value_name = "IOU")]
    pub nms_thr: Option<f32>,
    /// Patch extraction scheme
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Per-patch refiner
    #[arg(long, value_enum)]
    pub refiner: Option<RefinerArg>,
    /// Square resolution patches are resized to in the exchange directory
    #[arg(long, value_name = "PX")]
    pub input_size: Option<u32>,
    /// Exchange directory (external refiner and export/import)
    #[arg(long, value_name = "DIR")]
    pub exchange_dir: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeArg {
    DenseNms,
    Grid,
    Instance,
}

impl From<SchemeArg> for ExtractionScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::DenseNms => ExtractionScheme::DenseNms,
            SchemeArg::Grid => ExtractionScheme::Grid,
            SchemeArg::Instance => ExtractionScheme::InstanceLevel,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinerArg {
    Identity,
    Oracle,
    Colormodel,
    External,
}

/// Optional defaults loaded from `--config`. Keys mirror the long flags.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub patch_size: Option<u32>,
    pub pad: Option<u32>,
    pub nms_thr: Option<f32>,
    pub scheme: Option<String>,
    pub refiner: Option<String>,
    pub input_size: Option<u32>,
    pub exchange_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scenes: Option<usize>,
    pub image_size: Option<u32>,
    pub instances: Option<u32>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&body).map_err(|e| Error::malformed(path, e.to_string()))
    }
}

fn parse_enum<T: clap::ValueEnum>(what: &'static str, s: &str) -> Result<T> {
    T::from_str(s, true).map_err(|_| Error::invalid(what, format!("unknown value {s:?}")))
}

/// Everything the pipeline commands need, after flag/file/default merging.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub extraction: ExtractionConfig,
    pub refiner: RefinerArg,
    pub input_size: u32,
    pub exchange_dir: Option<PathBuf>,
}

impl Resolved {
    pub fn merge(opts: &PipelineOpts, file: &FileConfig) -> Result<Resolved> {
        let defaults = ExtractionConfig::default();
        let scheme = match (opts.scheme, &file.scheme) {
            (Some(s), _) => s.into(),
            (None, Some(s)) => parse_enum::<SchemeArg>("scheme", s)?.into(),
            (None, None) => defaults.scheme,
        };
        let refiner = match (opts.refiner, &file.refiner) {
            (Some(r), _) => r,
            (None, Some(r)) => parse_enum("refiner", r)?,
            (None, None) => RefinerArg::Colormodel,
        };
        let patch_size = opts.patch_size.or(file.patch_size).unwrap_or(defaults.patch_size);
        let extraction = ExtractionConfig {
            scheme,
            patch_size,
            pad: opts.pad.or(file.pad).unwrap_or(defaults.pad),
            nms_threshold: opts.nms_thr.or(file.nms_thr).unwrap_or(defaults.nms_threshold),
            // the grid scheme tiles at the patch size; no separate knob
            grid_cell: patch_size,
            ..defaults
        };
        extraction.validate()?;
        let input_size = opts
            .input_size
            .or(file.input_size)
            .unwrap_or(2 * (patch_size + 2 * extraction.pad));
        Ok(Resolved {
            extraction,
            refiner,
            input_size,
            exchange_dir: opts.exchange_dir.clone().or_else(|| file.exchange_dir.clone()),
        })
    }

    /// The in-process refiner, or `None` for the external protocol.
    pub fn builtin_refiner(&self) -> Option<Refiner> {
        match self.refiner {
            RefinerArg::Identity => Some(Refiner::Identity),
            RefinerArg::Oracle => Some(Refiner::Oracle),
            RefinerArg::Colormodel => Some(Refiner::ColorModel(ColorModelParams::default())),
            RefinerArg::External => None,
        }
    }

    pub fn exchange_dir(&self) -> Result<&Path> {
        self.exchange_dir
            .as_deref()
            .ok_or_else(|| Error::invalid("exchange dir", "required; pass --exchange-dir"))
    }
}
