//! Non-negative least squares unmixing in K/S space.

use nalgebra::{DMatrix, DVector};

use crate::cube::{AbundanceMatrix, EndmemberSet, PixelMask};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::km::{reflectance_to_ks, subtract_paper, KsCube, PaperSpectrum};

/// KKT tolerance relative to `||C^T d||_inf`.
pub const KKT_TOLERANCE: f64 = 1e-8;

/// Endmembers whose reflectance stays below this in every band are
/// reported as dark.
const DARK_REFLECTANCE: f64 = 0.02;

/// Columns whose distance to the span of the active columns falls below
/// this fraction of their norm are treated as linearly dependent.
const DEPENDENCE_RELATIVE: f64 = 1e-10;

/// Solves `min ||C y - d||^2` subject to `y >= 0` with the Lawson-Hanson
/// active-set method. `c` is `bands x m`.
pub fn nnls(c: &DMatrix<f64>, d: &[f64]) -> Result<Vec<f64>> {
    let (bands, m) = c.shape();
    if d.len() != bands {
        return Err(Error::Dimension(format!(
            "matrix has {bands} rows but right-hand side has {}",
            d.len()
        )));
    }
    if bands == 0 || m == 0 {
        return Err(Error::InvalidArgument("empty NNLS system".into()));
    }
    if let Some(j) = (0..m).find(|&j| c.column(j).iter().all(|&v| v == 0.0)) {
        return Err(Error::ZeroColumn { index: j });
    }

    let d = DVector::from_column_slice(d);
    let ctd = c.tr_mul(&d);
    let tol = KKT_TOLERANCE * ctd.amax();

    let mut x = DVector::<f64>::zeros(m);
    let mut passive = vec![false; m];
    let mut excluded = vec![false; m];
    let max_outer = 3 * m;
    let mut outer = 0;

    loop {
        // w is the negative gradient of the objective (up to a factor 2).
        let w = c.tr_mul(&(&d - c * &x));
        let entering = (0..m)
            .filter(|&j| !passive[j] && !excluded[j] && w[j] > tol)
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if w[b] >= w[j] => Some(b),
                _ => Some(j),
            });
        let Some(j) = entering else { break };

        outer += 1;
        if outer > max_outer {
            let residual = (&d - c * &x).norm();
            return Err(Error::NnlsNoConvergence {
                iterations: max_outer,
                residual,
            });
        }

        passive[j] = true;
        let mut accepted = false;
        loop {
            let active: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let Some(z) = least_squares(c, &d, &active) else {
                // Column j adds no new direction; try another candidate.
                passive[j] = false;
                x[j] = 0.0;
                excluded[j] = true;
                break;
            };
            if !accepted {
                let zj = active.iter().position(|&i| i == j).map(|p| z[p]);
                if zj.is_some_and(|v| v <= 0.0) {
                    passive[j] = false;
                    excluded[j] = true;
                    break;
                }
                accepted = true;
            }
            if z.iter().all(|&v| v > 0.0) {
                for (p, &i) in active.iter().enumerate() {
                    x[i] = z[p];
                }
                break;
            }
            // Step from x towards z until the first active variable hits zero.
            let mut alpha = f64::INFINITY;
            let mut blocking = active[0];
            for (p, &i) in active.iter().enumerate() {
                if z[p] <= 0.0 {
                    let a = x[i] / (x[i] - z[p]);
                    if a < alpha {
                        alpha = a;
                        blocking = i;
                    }
                }
            }
            for (p, &i) in active.iter().enumerate() {
                x[i] += alpha * (z[p] - x[i]);
            }
            x[blocking] = 0.0;
            passive[blocking] = false;
            for &i in &active {
                if x[i] <= 0.0 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        if accepted {
            excluded.iter_mut().for_each(|e| *e = false);
        }
    }
    Ok(x.iter().map(|&v| v.max(0.0)).collect())
}

/// Least squares over the `active` columns by Householder QR. Returns
/// `None` when the columns are numerically dependent.
fn least_squares(c: &DMatrix<f64>, d: &DVector<f64>, active: &[usize]) -> Option<Vec<f64>> {
    let bands = c.nrows();
    if active.len() > bands {
        return None;
    }
    let sub = c.select_columns(active);
    let qr = sub.qr();
    let r = qr.r();
    for (k, &i) in active.iter().enumerate() {
        if r[(k, k)].abs() <= DEPENDENCE_RELATIVE * c.column(i).norm() {
            return None;
        }
    }
    let qtd = qr.q().tr_mul(d);
    let z = r.solve_upper_triangular(&qtd)?;
    Some(z.iter().copied().collect())
}

/// Largest KKT violation of `y` for `min ||C y - d||^2, y >= 0`, relative to
/// `||C^T d||_inf`. Zero means the conditions hold exactly.
pub fn kkt_violation(c: &DMatrix<f64>, d: &[f64], y: &[f64]) -> f64 {
    let d = DVector::from_column_slice(d);
    let y = DVector::from_column_slice(y);
    let scale = c.tr_mul(&d).amax();
    let grad = c.tr_mul(&(c * &y - &d));
    let mut worst: f64 = y.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
    for i in 0..y.len() {
        let v = if y[i] > 0.0 { grad[i].abs() } else { (-grad[i]).max(0.0) };
        worst = worst.max(v);
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Transforms endmember reflectance spectra to K/S and, when `paper` is
/// given, subtracts the substrate. Returns one row per endmember.
pub fn prepare_endmembers(
    endmembers: &EndmemberSet,
    paper: Option<&PaperSpectrum>,
) -> Result<Vec<Vec<f64>>> {
    endmembers
        .spectra()
        .iter()
        .enumerate()
        .map(|(i, spectrum)| {
            if spectrum.iter().all(|&r| r < DARK_REFLECTANCE) {
                let (row, col) = endmembers.sources()[i];
                log::warn!(
                    "endmember {i} at ({row}, {col}) is dark in every band; its K/S spectrum is large"
                );
            }
            let ks: Vec<f64> = spectrum.iter().map(|&r| reflectance_to_ks(r)).collect();
            match paper {
                Some(p) => subtract_paper(&ks, p),
                None => Ok(ks),
            }
        })
        .collect()
}

/// Unmixes every masked pixel of `ks` against `endmembers_ks` (one row per
/// endmember, already prepared with [`prepare_endmembers`]). With a paper
/// spectrum the right-hand side of each solve is the paper-subtracted pixel.
///
/// Abundances are not constrained to sum to one.
pub fn unmix_cube(
    ks: &KsCube,
    endmembers_ks: &[Vec<f64>],
    paper: Option<&PaperSpectrum>,
    mask: &PixelMask,
) -> Result<AbundanceMatrix> {
    unmix_cube_with(ks, endmembers_ks, paper, mask, Exec::default())
}

pub fn unmix_cube_with(
    ks: &KsCube,
    endmembers_ks: &[Vec<f64>],
    paper: Option<&PaperSpectrum>,
    mask: &PixelMask,
    exec: Exec,
) -> Result<AbundanceMatrix> {
    if mask.width() != ks.width() || mask.height() != ks.height() {
        return Err(Error::Dimension("mask and K/S cube differ in size".into()));
    }
    mask.require_nonempty()?;
    let bands = ks.bands();
    let m = endmembers_ks.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no endmembers to unmix against".into()));
    }
    if let Some(e) = endmembers_ks.iter().find(|e| e.len() != bands) {
        return Err(Error::Dimension(format!(
            "endmember has {} bands, cube has {bands}",
            e.len()
        )));
    }
    let c = DMatrix::from_fn(bands, m, |b, j| endmembers_ks[j][b]);
    if let Some(j) = (0..m).find(|&j| c.column(j).iter().all(|&v| v == 0.0)) {
        return Err(Error::ZeroColumn { index: j });
    }

    let pixels = mask.indices();
    if let Some(&p) = pixels.iter().find(|&&p| !ks.mask().selected()[p]) {
        let (row, col) = mask.coords(p);
        return Err(Error::InvalidArgument(format!(
            "pixel ({row}, {col}) was not transformed to K/S"
        )));
    }
    let rows = exec.try_map(pixels.len(), |i| {
        let p = pixels[i];
        let rhs = match paper {
            Some(paper) => subtract_paper(ks.pixel_at(p), paper)?,
            None => ks.pixel_at(p).to_vec(),
        };
        nnls(&c, &rhs).map_err(|e| {
            let (row, col) = mask.coords(p);
            Error::AtPixel {
                row,
                col,
                source: Box::new(e),
            }
        })
    })?;
    AbundanceMatrix::new(ks.width(), ks.height(), pixels, rows)
}
