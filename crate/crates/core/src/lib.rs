//! Kubelka-Munk pigment unmixing and classification for hyperspectral
//! reflectance cubes.
//!
//! The processing chain, in order:
//!
//! 1. [`segmentation`]: pick out pigment pixels with K-means on a Lab+xy
//!    rendering followed by a Mahalanobis distance classifier.
//! 2. [`dimensionality`]: extract endmembers with MaxD and estimate how many
//!    are distinct from the Gram-determinant volume function.
//! 3. [`km`]: move spectra into K/S space and remove the paper substrate.
//! 4. [`unmix`]: non-negative least squares abundances per pixel.
//! 5. [`classify`]: append pairwise abundance differences, cluster, and map
//!    the per-pixel RMSE against each class mean.
//!
//! [`pipeline`] runs the whole chain from a config file and [`synth`]
//! generates scenes with known ground truth.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod cube;
pub mod dimensionality;
pub mod error;
pub mod eval;
pub mod exec;
pub mod io;
pub mod km;
pub mod pipeline;
pub mod segmentation;
pub mod synth;
pub mod unmix;

pub use cube::{AbundanceMatrix, ClassMap, EndmemberSet, PixelMask, Rect, SpectralCube, VolumeFunction};
pub use error::{Error, Result};
pub use exec::Exec;
pub use km::{KsCube, PaperSpectrum};
