//! Opaque single-constant Kubelka-Munk transforms.
//!
//! For an optically thick layer the reflectance `R` and the ratio of
//! absorption to scattering `K/S` are related by
//!
//! ```text
//! K/S = (1 - R)^2 / (2R)
//! R   = 1 + K/S - sqrt((K/S)^2 + 2 K/S)
//! ```
//!
//! Mixtures are linear in K/S once the substrate (paper) contribution is
//! removed from both the pixel and the pigment masstones.

use crate::cube::{PixelMask, SpectralCube};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Reflectance below this is raised to it before the K/S transform.
pub const REFLECTANCE_FLOOR: f64 = 1e-4;

/// Reflectance above 1 is lowered to this value.
pub const REFLECTANCE_CEILING: f64 = 1.0 - 1e-6;

/// K/S of a single reflectance value. Total: inputs are floored at
/// [`REFLECTANCE_FLOOR`] and values above 1 are clamped to
/// [`REFLECTANCE_CEILING`].
pub fn reflectance_to_ks(r: f64) -> f64 {
    let r = if r > 1.0 {
        REFLECTANCE_CEILING
    } else if r < REFLECTANCE_FLOOR {
        REFLECTANCE_FLOOR
    } else {
        r
    };
    let a = 1.0 - r;
    a * a / (2.0 * r)
}

/// Reflectance of an opaque layer with the given K/S.
pub fn ks_to_reflectance(ks: f64) -> Result<f64> {
    if !(ks >= 0.0) {
        return Err(Error::NegativeKs(ks));
    }
    // 1 + k - sqrt(k^2 + 2k), rationalized to avoid cancellation for large k.
    Ok(1.0 / (1.0 + ks + (ks * (ks + 2.0)).sqrt()))
}

/// The bare-substrate spectrum used as the mixing baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PaperSpectrum {
    pub reflectance: Vec<f64>,
    pub ks: Vec<f64>,
}

impl PaperSpectrum {
    pub fn new(reflectance: Vec<f64>) -> Self {
        let ks = reflectance.iter().map(|&r| reflectance_to_ks(r)).collect();
        PaperSpectrum { reflectance, ks }
    }

    /// A hand-picked substrate pixel.
    pub fn from_pixel(cube: &SpectralCube, row: usize, col: usize) -> Result<Self> {
        Ok(PaperSpectrum::new(cube.pixel(row, col)?))
    }

    pub fn bands(&self) -> usize {
        self.ks.len()
    }
}

/// `ks_pixel - paper.ks`, with negative entries floored at zero.
pub fn subtract_paper(ks_pixel: &[f64], paper: &PaperSpectrum) -> Result<Vec<f64>> {
    if ks_pixel.len() != paper.ks.len() {
        return Err(Error::Dimension(format!(
            "pixel has {} bands, paper spectrum has {}",
            ks_pixel.len(),
            paper.ks.len()
        )));
    }
    Ok(ks_pixel
        .iter()
        .zip(&paper.ks)
        .map(|(&k, &p)| (k - p).max(0.0))
        .collect())
}

/// K/S values of a cube, stored pixel-interleaved (`values[pixel][band]`)
/// because every consumer reads whole spectra. Pixels outside the mask hold
/// zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct KsCube {
    width: usize,
    height: usize,
    bands: usize,
    mask: PixelMask,
    values: Vec<f64>,
}

impl KsCube {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn mask(&self) -> &PixelMask {
        &self.mask
    }

    pub fn pixel_at(&self, index: usize) -> &[f64] {
        &self.values[index * self.bands..(index + 1) * self.bands]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        self.pixel_at(row * self.width + col)
    }
}

/// Elementwise [`reflectance_to_ks`] over the masked pixels of `cube`.
pub fn cube_to_ks(cube: &SpectralCube, mask: &PixelMask) -> Result<KsCube> {
    cube_to_ks_with(cube, mask, Exec::default())
}

pub fn cube_to_ks_with(cube: &SpectralCube, mask: &PixelMask, exec: Exec) -> Result<KsCube> {
    mask.check_matches(cube)?;
    let bands = cube.bands();
    let selected = mask.selected();
    let per_pixel = exec.map(cube.n_pixels(), |p| {
        let mut px = vec![0.0; bands];
        if selected[p] {
            cube.pixel_into(p, &mut px);
            px.iter_mut().for_each(|v| *v = reflectance_to_ks(*v));
        }
        px
    });
    Ok(KsCube {
        width: cube.width(),
        height: cube.height(),
        bands,
        mask: mask.clone(),
        values: per_pixel.concat(),
    })
}
