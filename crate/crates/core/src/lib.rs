//! Tools for studying foreground class imbalance in object detection data.
//!
//! * [`coco`]: COCO annotation ingestion into a validated [`DatasetIndex`].
//! * [`curation`]: long-tailed subsets whose per-class image counts follow a
//!   Zipf law.
//! * [`sampling`]: uniform, class-aware and repeat-factor epoch schedules.
//! * [`reweigh`]: inverse-frequency class weights and reference
//!   (weighted) binary cross-entropy.
//! * [`augment`]: mosaic and mixup with exact box bookkeeping, plus pickers
//!   biased toward rare classes.
//! * [`stats`]: per-class histograms, Zipf goodness of fit, CSV/SVG output.
//! * [`rng`]: the seeded stream recipe behind every random choice.
//!
//! ```
//! use longtail::curation::zipf_targets;
//!
//! let spec = zipf_targets(1.0, 2).unwrap();
//! assert!((spec.probabilities[0] - 2.0 / 3.0).abs() < 1e-15);
//! ```

pub mod augment;
pub mod coco;
pub mod curation;
pub mod error;
pub mod fixture;
pub mod geometry;
pub mod reweigh;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use coco::{parse_coco, validate, write_manifest, CategoryId, DatasetIndex, ImageId, Label};
pub use error::{Error, Result};

// The guide's code blocks compile and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dataset-model.md")]
    mod dataset_model {}
    #[doc = include_str!("../../../book/src/curation.md")]
    mod curation {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/loss-weights.md")]
    mod loss_weights {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/randomness.md")]
    mod randomness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
