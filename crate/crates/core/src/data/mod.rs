//! Images, labels and everything that turns them into training inputs.

pub mod augment;
pub mod bra;
pub mod crop;
pub mod folds;
pub mod gcn;
pub mod pgm;
pub mod store;
pub mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{expand_epoch, expand_epoch_plan, hflip, rotate, Augmentation, ExpansionMode};
pub use bra::{bra_combine, BraSwitch};
pub use crop::{random_roi_crop, roi_crop_box, CropBox, CropDraws};
pub use folds::{kfold_split, FoldSplit};
pub use gcn::gcn_normalize;
pub use pgm::{read_pgm, write_pgm, PgmError};
pub use synth::synth_generate;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("raster of {height}x{width} needs {expected} values, got {got}")]
    Length { height: usize, width: usize, expected: usize, got: usize },
    #[error("label {0:?} has no positive pixels")]
    EmptyLabel(String),
    #[error("label contains value {0}; only 0 and 1 are allowed")]
    NonBinaryLabel(u8),
    #[error("dimensions {height}x{width} must be positive multiples of 16")]
    BadSize { height: usize, width: usize },
    #[error("expected {expected} ids, got {got}")]
    IdCount { expected: usize, got: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("empty dataset")]
    Empty,
    #[error("unknown sample id {0:?}")]
    UnknownId(String),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// Single-channel raster, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Plane { height, width, data: vec![value; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self, DataError> {
        if data.len() != height * width {
            return Err(DataError::Length { height, width, expected: height * width, got: data.len() });
        }
        Ok(Plane { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn same_dims<U: Copy>(&self, other: &Plane<U>) -> Result<(), DataError> {
        if self.dims() != other.dims() {
            return Err(DataError::DimensionMismatch { a: self.dims(), b: other.dims() });
        }
        Ok(())
    }
}

/// Binary mask, values in {0, 1}.
pub type Mask = Plane<u8>;

impl Mask {
    pub fn count_positive(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }
}

/// Which label a round trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Tongue,
    Vein,
}

/// One grayscale image with its two label masks. `image` holds raw gray
/// levels as loaded, or standardized values after [`gcn_normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub image: Plane<f32>,
    pub tongue: Mask,
    pub vein: Mask,
}

impl ImageSample {
    pub fn new(id: impl Into<String>, image: Plane<f32>, tongue: Mask, vein: Mask) -> Result<Self, DataError> {
        let s = ImageSample { id: id.into(), image, tongue, vein };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.image.same_dims(&self.tongue)?;
        self.image.same_dims(&self.vein)?;
        for m in [&self.tongue, &self.vein] {
            if let Some(&v) = m.data().iter().find(|&&v| v > 1) {
                return Err(DataError::NonBinaryLabel(v));
            }
        }
        Ok(())
    }

    pub fn label(&self, target: Target) -> &Mask {
        match target {
            Target::Tongue => &self.tongue,
            Target::Vein => &self.vein,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// Copy with the image standardized.
    pub fn normalized(&self) -> ImageSample {
        ImageSample { image: gcn_normalize(&self.image), ..self.clone() }
    }
}
