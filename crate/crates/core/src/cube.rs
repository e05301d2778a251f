//! Shared data model: cubes, masks, endmembers, abundances and class maps.

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Rect {
            row,
            col,
            height,
            width,
        }
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.height > 0
            && self.width > 0
            && self.row + self.height <= height
            && self.col + self.width <= width
    }
}

/// Reflectance cube stored band-sequentially: `data[band][row][col]`.
///
/// Values are kept in `f32` and promoted to `f64` whenever they are read
/// for computation.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCube {
    width: usize,
    height: usize,
    wavelengths: Vec<f64>,
    data: Vec<f32>,
}

impl SpectralCube {
    /// Builds a cube from band-sequential data, validating shape, wavelength
    /// ordering and finiteness.
    pub fn new(width: usize, height: usize, wavelengths: Vec<f64>, data: Vec<f32>) -> Result<Self> {
        let bands = wavelengths.len();
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::InvalidCube(format!(
                "empty cube ({width}x{height}x{bands})"
            )));
        }
        if wavelengths.iter().any(|w| !w.is_finite())
            || wavelengths.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidCube(
                "wavelengths must be finite and strictly increasing".into(),
            ));
        }
        let expected = width * height * bands;
        if data.len() != expected {
            return Err(Error::InvalidCube(format!(
                "data length {} does not match {width}x{height}x{bands} = {expected}",
                data.len()
            )));
        }
        let plane = width * height;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let pix = i % plane;
            return Err(Error::NonFinite {
                row: pix / width,
                col: pix % width,
                band: i / plane,
                value: data[i] as f64,
            });
        }
        Ok(SpectralCube {
            width,
            height,
            wavelengths,
            data,
        })
    }

    /// Builds a cube from per-pixel spectra given in row-major pixel order.
    pub fn from_pixels(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        pixels: &[Vec<f64>],
    ) -> Result<Self> {
        let bands = wavelengths.len();
        if pixels.len() != width * height {
            return Err(Error::InvalidCube(format!(
                "{} pixel spectra for a {width}x{height} cube",
                pixels.len()
            )));
        }
        let plane = width * height;
        let mut data = vec![0f32; plane * bands];
        for (p, spectrum) in pixels.iter().enumerate() {
            if spectrum.len() != bands {
                return Err(Error::InvalidCube(format!(
                    "pixel {p} has {} bands, expected {bands}",
                    spectrum.len()
                )));
            }
            for (b, &v) in spectrum.iter().enumerate() {
                data[b * plane + p] = v as f32;
            }
        }
        SpectralCube::new(width, height, wavelengths, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    /// Raw band-sequential storage.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let plane = self.n_pixels();
        &self.data[band * plane..(band + 1) * plane]
    }

    pub fn value(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[band * self.n_pixels() + row * self.width + col]
    }

    pub fn check_bounds(&self, row: usize, col: usize) -> Result<()> {
        if row < self.height && col < self.width {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                row,
                col,
                height: self.height,
                width: self.width,
            })
        }
    }

    /// Reflectance spectrum at `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> Result<Vec<f64>> {
        self.check_bounds(row, col)?;
        Ok(self.pixel_at(row * self.width + col))
    }

    /// Spectrum at a row-major linear pixel index. Panics when out of range.
    pub fn pixel_at(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.bands()];
        self.pixel_into(index, &mut out);
        out
    }

    pub fn pixel_into(&self, index: usize, out: &mut [f64]) {
        let plane = self.n_pixels();
        assert!(index < plane, "pixel index {index} out of range");
        for (b, o) in out.iter_mut().enumerate() {
            *o = self.data[b * plane + index] as f64;
        }
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn crop(&self, rect: Rect) -> Result<SpectralCube> {
        if !rect.fits(self.height, self.width) {
            return Err(Error::InvalidArgument(format!(
                "rectangle {rect:?} does not fit a {}x{} cube",
                self.height, self.width
            )));
        }
        let plane = rect.width * rect.height;
        let mut data = Vec::with_capacity(plane * self.bands());
        for b in 0..self.bands() {
            let band = self.band(b);
            for r in rect.row..rect.row + rect.height {
                let start = r * self.width + rect.col;
                data.extend_from_slice(&band[start..start + rect.width]);
            }
        }
        SpectralCube::new(rect.width, rect.height, self.wavelengths.clone(), data)
    }

    /// Places `right` next to `self`. Heights and wavelengths must agree.
    pub fn hstack(&self, right: &SpectralCube) -> Result<SpectralCube> {
        if self.height != right.height {
            return Err(Error::Dimension(format!(
                "cannot stitch heights {} and {}",
                self.height, right.height
            )));
        }
        if self.wavelengths != right.wavelengths {
            return Err(Error::Dimension(
                "cannot stitch cubes with different wavelengths".into(),
            ));
        }
        let width = self.width + right.width;
        let mut data = Vec::with_capacity(width * self.height * self.bands());
        for b in 0..self.bands() {
            let (lb, rb) = (self.band(b), right.band(b));
            for r in 0..self.height {
                data.extend_from_slice(&lb[r * self.width..(r + 1) * self.width]);
                data.extend_from_slice(&rb[r * right.width..(r + 1) * right.width]);
            }
        }
        SpectralCube::new(width, self.height, self.wavelengths.clone(), data)
    }
}

/// Cuts one rectangle out of each cube and places them side by side.
pub fn crop_stitch(
    left: &SpectralCube,
    left_rect: Rect,
    right: &SpectralCube,
    right_rect: Rect,
) -> Result<SpectralCube> {
    left.crop(left_rect)?.hstack(&right.crop(right_rect)?)
}

/// Boolean pixel selection over a `height x width` raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    selected: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, selected: Vec<bool>) -> Result<Self> {
        if selected.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask of {} entries for a {width}x{height} raster",
                selected.len()
            )));
        }
        Ok(PixelMask {
            width,
            height,
            selected,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        PixelMask {
            width,
            height,
            selected: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let selected = (0..width * height).map(|i| f(i / width, i % width)).collect();
        PixelMask {
            width,
            height,
            selected,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn is_selected(&self, row: usize, col: usize) -> bool {
        self.selected[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    /// Linear indices of the selected pixels in ascending order. This is the
    /// row order of every per-pixel table derived from the mask.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&i| self.selected[i]).collect()
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn check_matches(&self, cube: &SpectralCube) -> Result<()> {
        if self.width != cube.width() || self.height != cube.height() {
            return Err(Error::Dimension(format!(
                "mask is {}x{} but cube is {}x{}",
                self.height,
                self.width,
                cube.height(),
                cube.width()
            )));
        }
        Ok(())
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.selected.iter().any(|&s| s) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("mask selects no pixels".into()))
        }
    }

    /// Intersection over union with another mask of the same shape.
    pub fn iou(&self, other: &PixelMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.selected.iter().zip(&other.selected) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Ordered endmember spectra together with the pixels they were taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct EndmemberSet {
    spectra: Vec<Vec<f64>>,
    sources: Vec<(usize, usize)>,
}

impl EndmemberSet {
    /// Reads the endmember spectra out of `cube` at `sources`.
    pub fn from_cube(cube: &SpectralCube, sources: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut spectra = Vec::with_capacity(sources.len());
        for &(r, c) in &sources {
            if !seen.insert((r, c)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate endmember source ({r}, {c})"
                )));
            }
            spectra.push(cube.pixel(r, c)?);
        }
        Ok(EndmemberSet { spectra, sources })
    }

    /// Builds a set from explicit spectra, e.g. when reading one back from
    /// disk. Callers are responsible for the spectra matching their sources.
    pub fn from_parts(spectra: Vec<Vec<f64>>, sources: Vec<(usize, usize)>) -> Result<Self> {
        if spectra.len() != sources.len() {
            return Err(Error::Dimension(format!(
                "{} spectra but {} sources",
                spectra.len(),
                sources.len()
            )));
        }
        if let Some(first) = spectra.first() {
            if spectra.iter().any(|s| s.len() != first.len()) {
                return Err(Error::Dimension("endmember spectra differ in length".into()));
            }
        }
        Ok(EndmemberSet { spectra, sources })
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn spectra(&self) -> &[Vec<f64>] {
        &self.spectra
    }

    pub fn sources(&self) -> &[(usize, usize)] {
        &self.sources
    }

    /// The first `k` endmembers.
    pub fn truncated(&self, k: usize) -> EndmemberSet {
        let k = k.min(self.len());
        EndmemberSet {
            spectra: self.spectra[..k].to_vec(),
            sources: self.sources[..k].to_vec(),
        }
    }
}

/// Per-pixel non-negative mixing coefficients, one row per selected pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct AbundanceMatrix {
    width: usize,
    height: usize,
    m: usize,
    pixels: Vec<usize>,
    values: Vec<f64>,
}

impl AbundanceMatrix {
    /// `pixels` are row-major linear indices; `rows[i]` belongs to `pixels[i]`.
    pub fn new(width: usize, height: usize, pixels: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if pixels.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} pixels but {} abundance rows",
                pixels.len(),
                rows.len()
            )));
        }
        let m = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * m);
        for (row, &p) in rows.iter().zip(&pixels) {
            if row.len() != m {
                return Err(Error::Dimension("abundance rows differ in length".into()));
            }
            if p >= width * height {
                return Err(Error::OutOfBounds {
                    row: p / width.max(1),
                    col: p % width.max(1),
                    height,
                    width,
                });
            }
            if let Some(&v) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "abundance {v} at pixel index {p} is not a finite non-negative number"
                )));
            }
            values.extend_from_slice(row);
        }
        Ok(AbundanceMatrix {
            width,
            height,
            m,
            pixels,
            values,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.pixels.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_pixels()).map(move |i| self.row(i))
    }

    pub fn pixels(&self) -> &[usize] {
        &self.pixels
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (self.pixels[i] / self.width, self.pixels[i] % self.width)
    }

    /// Mask of the pixels that have an abundance row.
    pub fn mask(&self) -> PixelMask {
        let mut selected = vec![false; self.width * self.height];
        for &p in &self.pixels {
            selected[p] = true;
        }
        PixelMask {
            width: self.width,
            height: self.height,
            selected,
        }
    }
}

/// Final per-pixel labels, class mean spectra and per-pixel RMSE.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMap {
    pub width: usize,
    pub height: usize,
    pub k: usize,
    /// `None` for pixels outside the analysed mask.
    pub labels: Vec<Option<usize>>,
    /// Zero outside the mask.
    pub rmse: Vec<f64>,
    pub class_means: Vec<Vec<f64>>,
}

impl ClassMap {
    pub fn label(&self, row: usize, col: usize) -> Option<usize> {
        self.labels[row * self.width + col]
    }

    pub fn populations(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for l in self.labels.iter().flatten() {
            counts[*l] += 1;
        }
        counts
    }
}

/// Parallelotope volume of the first `k` unit-normalized endmembers,
/// `values[k - 1]` for `k = 1..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeFunction {
    pub values: Vec<f64>,
    pub estimated_dimensionality: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_2x2() -> SpectralCube {
        let pixels: Vec<Vec<f64>> = (0..4)
            .map(|p| (0..3).map(|b| (p * 3 + b) as f64 / 16.0).collect())
            .collect();
        SpectralCube::from_pixels(2, 2, vec![400.0, 500.0, 600.0], &pixels).unwrap()
    }

    #[test]
    fn single_pixel_identity() {
        let cube = SpectralCube::new(1, 1, vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3]).unwrap();
        let px = cube.pixel(0, 0).unwrap();
        let want = [0.1f32, 0.2, 0.3];
        assert_eq!(px, want.map(f64::from).to_vec());
    }

    #[test]
    fn last_pixel_is_last_stored_spectrum() {
        let cube = cube_2x2();
        assert_eq!(cube.pixel(1, 1).unwrap(), vec![9.0 / 16.0, 10.0 / 16.0, 11.0 / 16.0]);
    }

    #[test]
    fn out_of_bounds_names_coordinate() {
        let err = cube_2x2().pixel(5, 0).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { row: 5, col: 0, .. }));
        assert!(err.to_string().contains("(5, 0)"));
    }

    #[test]
    fn rejects_nan_and_bad_wavelengths() {
        let err = SpectralCube::new(1, 1, vec![1.0, 2.0], vec![0.1, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { band: 1, .. }));
        assert!(SpectralCube::new(1, 1, vec![2.0, 1.0], vec![0.1, 0.2]).is_err());
        assert!(SpectralCube::new(1, 1, vec![1.0], vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn mask_indices_invert_to_coords() {
        let mask = PixelMask::from_fn(7, 5, |r, c| (r * 3 + c) % 4 == 1);
        for i in mask.indices() {
            let (r, c) = mask.coords(i);
            assert!(mask.is_selected(r, c));
            assert_eq!(r * 7 + c, i);
        }
    }

    #[test]
    fn crop_and_stitch() {
        let cube = cube_2x2();
        let left = Rect::new(0, 0, 2, 1);
        let right = Rect::new(0, 1, 2, 1);
        let stitched = crop_stitch(&cube, left, &cube, right).unwrap();
        assert_eq!(stitched, cube);
        assert!(cube.crop(Rect::new(1, 1, 2, 1)).is_err());
    }

    #[test]
    fn endmember_sources_must_be_unique() {
        let cube = cube_2x2();
        let set = EndmemberSet::from_cube(&cube, vec![(0, 1), (1, 0)]).unwrap();
        assert_eq!(set.spectra()[0], cube.pixel(0, 1).unwrap());
        assert!(EndmemberSet::from_cube(&cube, vec![(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn abundances_reject_negative() {
        assert!(AbundanceMatrix::new(2, 1, vec![0], vec![vec![0.1, -0.1]]).is_err());
        let a = AbundanceMatrix::new(2, 1, vec![1], vec![vec![0.1, 1.7]]).unwrap();
        assert_eq!(a.coords(0), (0, 1));
        assert_eq!(a.mask().selected(), &[false, true]);
    }
}
