//! Final classification in abundance space and the per-pixel error map.

use crate::cube::{AbundanceMatrix, ClassMap, PixelMask, SpectralCube};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::km::KsCube;
use crate::segmentation::kmeans;

/// Space in which class means and RMSE are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmseSpace {
    #[default]
    Reflectance,
    Ks,
}

/// `|a_i - a_j|` for every pair `i < j`, in lexicographic order.
pub fn difference_features(a: &[f64]) -> Vec<f64> {
    let m = a.len();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            out.push((a[i] - a[j]).abs());
        }
    }
    out
}

/// Abundances followed by their pairwise differences, one row per pixel.
pub fn augment(abundances: &AbundanceMatrix) -> Vec<Vec<f64>> {
    augment_with(abundances, Exec::default())
}

pub fn augment_with(abundances: &AbundanceMatrix, exec: Exec) -> Vec<Vec<f64>> {
    exec.map(abundances.n_pixels(), |i| {
        let row = abundances.row(i);
        let mut features = row.to_vec();
        features.extend(difference_features(row));
        features
    })
}

/// K-means on the augmented features.
pub fn classify_pixels(features: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(kmeans(features, k, seed)?.labels)
}

/// Class mean reflectance spectra and the RMSE of every masked pixel
/// against its class mean. `labels[i]` belongs to the `i`-th selected pixel
/// of `mask` in row-major order; the class count is `max(labels) + 1`.
pub fn class_rmse(cube: &SpectralCube, mask: &PixelMask, labels: &[usize]) -> Result<ClassMap> {
    class_rmse_with(cube, mask, labels, Exec::default())
}

pub fn class_rmse_with(cube: &SpectralCube, mask: &PixelMask, labels: &[usize], exec: Exec) -> Result<ClassMap> {
    mask.check_matches(cube)?;
    rmse_map(mask, labels, cube.bands(), |p| cube.pixel_at(p), exec)
}

/// [`class_rmse`] on K/S spectra.
pub fn class_rmse_ks(ks: &KsCube, mask: &PixelMask, labels: &[usize], exec: Exec) -> Result<ClassMap> {
    if mask.width() != ks.width() || mask.height() != ks.height() {
        return Err(Error::Dimension("mask and K/S cube differ in size".into()));
    }
    if let Some(p) = mask.indices().into_iter().find(|&p| !ks.mask().selected()[p]) {
        let (row, col) = mask.coords(p);
        return Err(Error::InvalidArgument(format!(
            "pixel ({row}, {col}) was not transformed to K/S"
        )));
    }
    rmse_map(mask, labels, ks.bands(), |p| ks.pixel_at(p).to_vec(), exec)
}

fn rmse_map<F>(mask: &PixelMask, labels: &[usize], bands: usize, spectrum: F, exec: Exec) -> Result<ClassMap>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let pixels = mask.indices();
    if labels.len() != pixels.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} masked pixels",
            labels.len(),
            pixels.len()
        )));
    }
    mask.require_nonempty()?;
    let k = labels.iter().max().map_or(0, |&l| l + 1);

    // Shifted accumulation: the mean of identical spectra is exactly that
    // spectrum, so homogeneous classes get an RMSE of exactly zero.
    let mut origin: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut sums = vec![vec![0.0; bands]; k];
    let mut counts = vec![0usize; k];
    for (&p, &l) in pixels.iter().zip(labels) {
        let s = spectrum(p);
        let o = origin[l].get_or_insert_with(|| s.clone());
        for ((acc, v), o) in sums[l].iter_mut().zip(&s).zip(o.iter()) {
            *acc += v - o;
        }
        counts[l] += 1;
    }
    let mut class_means = Vec::with_capacity(k);
    for c in 0..k {
        let Some(o) = &origin[c] else {
            return Err(Error::EmptyClass(c));
        };
        let n = counts[c] as f64;
        class_means.push(o.iter().zip(&sums[c]).map(|(o, s)| o + s / n).collect::<Vec<f64>>());
    }

    let errors = exec.map(pixels.len(), |i| {
        let s = spectrum(pixels[i]);
        let mean = &class_means[labels[i]];
        let sq: f64 = s.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        (sq / bands as f64).sqrt()
    });
    let n = mask.width() * mask.height();
    let mut out_labels = vec![None; n];
    let mut rmse = vec![0.0; n];
    for ((&p, &l), e) in pixels.iter().zip(labels).zip(errors) {
        out_labels[p] = Some(l);
        rmse[p] = e;
    }
    Ok(ClassMap {
        width: mask.width(),
        height: mask.height(),
        k,
        labels: out_labels,
        rmse,
        class_means,
    })
}
