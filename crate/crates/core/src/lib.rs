//! Bottom-up organ segmentation for 3D scans.
//!
//! Each axial slice is over-segmented into SLIC superpixels. Dense patch
//! classifiers (a random forest on hand-crafted features, or a small
//! convolutional network) produce per-voxel probability maps. Superpixels
//! are described by pooled statistics of intensity and probability, and a
//! two-stage cascade of random forests selects the organ superpixels. The
//! largest 3D connected component of the result is the final mask.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod cnn;
pub mod commands;
pub mod components;
pub mod config;
pub mod densemap;
pub mod error;
pub mod forest;
pub mod overlay;
pub mod patchfeat;
pub mod pipeline;
pub mod postmetrics;
pub mod seed;
pub mod stats;
pub mod superpixel;
pub mod volume;

pub use error::{Error, Result};
