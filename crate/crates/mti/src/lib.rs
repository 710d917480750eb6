//! Training and evaluation of single-task and multitask image-to-images
//! translation networks (U-Net and conditional GAN) on multimodal brain-MRI
//! slices: cross-modality conversion, bias-field correction and tissue
//! segmentation under leave-one-subject-out cross-validation, with a metric
//! and statistical-reporting harness.
//!
//! The pipeline is organized as a chain of pure stages:
//!
//! * [`dataset`] ingests multimodal volumes, stretches intensities, resizes,
//!   augments and assembles slice samples for a scenario.
//! * [`biasfield`] generates the eight reproducible low-frequency bias fields
//!   used to simulate intensity inhomogeneity.
//! * [`nets`] builds the U-Net generator and the patch discriminator on top of
//!   the [`nn`] numerical core (plain `ndarray` with hand-written backprop).
//! * [`trainer`] runs one training session with the early-stop / force-stop
//!   rules and records loss curves.
//! * [`scenarios`] declares the ten experiment specs and drives the
//!   280-session LOSO matrix.
//! * [`metrics`] and [`stats`] score outputs (SSIM, NCC, Dice, FPR) and
//!   aggregate them into tables, paired t-tests and boxplot summaries.
//! * [`report`] renders the file-based report bundle.

pub mod biasfield;
pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod raster;
pub mod report;
pub mod scenarios;
pub mod stats;
pub mod toydata;
pub mod trainer;

pub use error::{Error, Result};
