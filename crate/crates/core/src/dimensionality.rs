//! Endmember extraction by maximum distance (MaxD) and dimensionality
//! estimation from the Gram-determinant volume function.
//!
//! Both run on reflectance spectra, before any Kubelka-Munk transform.

use nalgebra::DMatrix;

use crate::cube::{EndmemberSet, PixelMask, SpectralCube, VolumeFunction};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Default volume threshold below which the volume function is treated as
/// having reached zero.
pub const DEFAULT_VOLUME_THRESHOLD: f64 = 1e-3;

/// Residual distances at or below this fraction of the largest pixel norm
/// are treated as zero by MaxD.
const DEGENERATE_RELATIVE: f64 = 1e-10;

/// Extracts `m_max` endmembers from the masked pixels of `cube`.
///
/// The first endmember is the pixel with the largest Euclidean norm, the
/// second the pixel farthest from it. Each later endmember is the pixel
/// farthest from the common point that all previous selections collapse to
/// once every pixel is projected onto the orthogonal complement of the
/// span of `e_j - e_1`. Ties go to the lowest linear pixel index.
pub fn maxd(cube: &SpectralCube, mask: &PixelMask, m_max: usize) -> Result<EndmemberSet> {
    maxd_with(cube, mask, m_max, Exec::default())
}

pub fn maxd_with(
    cube: &SpectralCube,
    mask: &PixelMask,
    m_max: usize,
    exec: Exec,
) -> Result<EndmemberSet> {
    mask.check_matches(cube)?;
    if m_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "MaxD needs at least 2 endmembers, got m_max = {m_max}"
        )));
    }
    let pixels = mask.indices();
    if pixels.len() < m_max {
        return Err(Error::InvalidArgument(format!(
            "mask selects {} pixels, fewer than m_max = {m_max}",
            pixels.len()
        )));
    }
    let bands = cube.bands();

    let mut residuals: Vec<Vec<f64>> = exec.map(pixels.len(), |i| cube.pixel_at(pixels[i]));
    let (first, max_norm_sq) = exec
        .argmax(residuals.len(), |i| norm_sq(&residuals[i]))
        .expect("non-empty mask");
    let anchor = residuals[first].clone();
    let tol = DEGENERATE_RELATIVE * max_norm_sq.sqrt();

    // Residuals start as x - e1; each selection then removes one direction.
    exec.for_each_mut(&mut residuals, |_, r| {
        r.iter_mut().zip(&anchor).for_each(|(v, a)| *v -= a)
    });

    let mut selected = vec![first];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while selected.len() < m_max {
        let (next, dist_sq) = exec
            .argmax(residuals.len(), |i| norm_sq(&residuals[i]))
            .expect("non-empty mask");
        if dist_sq.sqrt() <= tol {
            return Err(Error::Degenerate {
                selected: selected.len(),
                reason: format!(
                    "every remaining pixel lies in the span of the {} endmember(s) already \
                     selected; the data has fewer than {m_max} distinct directions",
                    selected.len()
                ),
            });
        }
        selected.push(next);

        let mut q = residuals[next].clone();
        // Reorthogonalize once against the existing basis.
        for b in &basis {
            let d = dot(&q, b);
            q.iter_mut().zip(b).for_each(|(v, bv)| *v -= d * bv);
        }
        let n = norm_sq(&q).sqrt();
        q.iter_mut().for_each(|v| *v /= n);
        exec.for_each_mut(&mut residuals, |_, r| {
            let d = dot(r, &q);
            r.iter_mut().zip(&q).for_each(|(v, qv)| *v -= d * qv);
        });
        basis.push(q);
        debug_assert_eq!(basis[0].len(), bands);
    }

    let sources = selected.iter().map(|&i| mask.coords(pixels[i])).collect();
    EndmemberSet::from_cube(cube, sources)
}

/// `G[i][j] = <v_i, v_j>`.
pub fn gram_matrix(vectors: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidArgument("Gram matrix of an empty set".into()))?;
    if let Some(v) = vectors.iter().find(|v| v.len() != first.len()) {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            first.len(),
            v.len()
        )));
    }
    let k = vectors.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let d = dot(&vectors[i], &vectors[j]);
            g[(i, j)] = d;
            g[(j, i)] = d;
        }
    }
    Ok(g)
}

/// Squared volume of the parallelotope spanned by `vectors`.
pub fn gram_determinant(vectors: &[Vec<f64>]) -> Result<f64> {
    Ok(gram_matrix(vectors)?.determinant())
}

/// Volume function over the endmembers in their extraction order.
///
/// `values[k-1]` is `sqrt(det G)` of the first `k` endmembers after each has
/// been scaled to unit norm. The square root of the Gram determinant is
/// evaluated as the product of successive distances to the span of the
/// preceding vectors, which is the same quantity but does not lose
/// precision as the determinant approaches zero.
pub fn volume_function(endmembers: &EndmemberSet, threshold: f64) -> VolumeFunction {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut values = Vec::with_capacity(endmembers.len());
    let mut volume = 1.0;
    for spectrum in endmembers.spectra() {
        let n = norm_sq(spectrum).sqrt();
        let height = if n > 0.0 {
            let mut r: Vec<f64> = spectrum.iter().map(|v| v / n).collect();
            for _ in 0..2 {
                for b in &basis {
                    let d = dot(&r, b);
                    r.iter_mut().zip(b).for_each(|(v, bv)| *v -= d * bv);
                }
            }
            let h = norm_sq(&r).sqrt();
            if h > f64::EPSILON {
                r.iter_mut().for_each(|v| *v /= h);
                basis.push(r);
            }
            h.min(1.0)
        } else {
            0.0
        };
        volume *= height;
        values.push(volume);
    }
    let estimated_dimensionality = values.iter().rposition(|&v| v >= threshold).map_or(0, |k| k + 1);
    VolumeFunction {
        values,
        estimated_dimensionality,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}
