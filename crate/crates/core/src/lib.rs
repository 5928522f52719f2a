//! Sublingual vein segmentation with two-round U-Net training.
pub mod data;
pub mod eval;
pub mod nn;
pub mod train;
pub mod unet;
