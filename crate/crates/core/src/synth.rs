//! Synthetic painted scenes with known masks, abundances and labels.
//!
//! Pigment masstones and a paper spectrum are drawn as smooth random
//! reflectance curves. Pixels are mixed in K/S space on top of the paper,
//!
//! ```text
//! K/S(pixel) = K/S(paper) + sum_i a_i (K/S(pigment_i) - K/S(paper))
//! ```
//!
//! then converted back to reflectance, perturbed with Gaussian noise and
//! clamped to `(0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::cube::{AbundanceMatrix, PixelMask, SpectralCube};
use crate::error::{Error, Result};
use crate::km::{ks_to_reflectance, reflectance_to_ks, PaperSpectrum, REFLECTANCE_FLOOR};

/// Minimum gap between a pigment and the paper in every band, so that each
/// pigment absorbs more than the paper.
const PAPER_GAP: f64 = 0.03;
const MIN_PIGMENT: f64 = 0.05;
/// Each new spectrum must keep at least this unit-normalized distance from
/// the span of the spectra drawn before it (paper included).
const MIN_SEPARATION: f64 = 0.12;
const MAX_DRAWS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub n_pigments: usize,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub bands: usize,
    pub wavelength_range: (f64, f64),
    /// Fraction of pigment pixels that are mixtures rather than masstone.
    pub mixed_fraction: f64,
    /// Largest share of a mixed pixel drawn away from its dominant pigment.
    pub max_admixture: f64,
}

impl SynthOptions {
    pub fn new(n_pigments: usize, width: usize, height: usize, noise_sigma: f64, seed: u64) -> Self {
        SynthOptions {
            n_pigments,
            width,
            height,
            noise_sigma,
            seed,
            bands: 64,
            wavelength_range: (400.0, 1000.0),
            mixed_fraction: 0.25,
            max_admixture: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub cube: SpectralCube,
    /// Pixels that carry pigment.
    pub true_mask: PixelMask,
    /// One row per pixel of `true_mask`, one column per pigment.
    pub true_abundances: AbundanceMatrix,
    /// Dominant pigment of each pixel, `None` on bare paper.
    pub true_labels: Vec<Option<usize>>,
    /// Masstone reflectance of each pigment.
    pub endmembers: Vec<Vec<f64>>,
    pub paper: PaperSpectrum,
    /// A bare-paper pixel, `(row, col)`.
    pub paper_pixel: (usize, usize),
}

pub fn synth_scene(n_pigments: usize, width: usize, height: usize, noise_sigma: f64, seed: u64) -> Result<SyntheticScene> {
    synth_scene_with(&SynthOptions::new(n_pigments, width, height, noise_sigma, seed))
}

fn validate(o: &SynthOptions) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidArgument(msg));
    if o.n_pigments == 0 {
        return bad("at least one pigment is required".into());
    }
    if !(o.noise_sigma >= 0.0) || !o.noise_sigma.is_finite() {
        return bad(format!("noise sigma must be non-negative, got {}", o.noise_sigma));
    }
    if o.bands < 2 {
        return bad("at least two bands are required".into());
    }
    let (lo, hi) = o.wavelength_range;
    if !(lo < hi) {
        return bad(format!("empty wavelength range {lo}..{hi}"));
    }
    if !(0.0..=1.0).contains(&o.mixed_fraction) || !(0.0..=1.0).contains(&o.max_admixture) {
        return bad("mixed fraction and admixture must lie in [0, 1]".into());
    }
    let cols = grid_cols(o.n_pigments);
    let rows = o.n_pigments.div_ceil(cols);
    let (border, gap) = (2, 1);
    let need_w = 2 * border + cols * 2 + (cols - 1) * gap;
    let need_h = 2 * border + rows * 2 + (rows - 1) * gap;
    if o.width < need_w || o.height < need_h {
        return bad(format!(
            "{}x{} is too small for {} pigment regions; need at least {need_w}x{need_h}",
            o.width, o.height, o.n_pigments
        ));
    }
    Ok(())
}

fn grid_cols(n: usize) -> usize {
    (1..=n).find(|c| c * c >= n).unwrap_or(1)
}

pub fn synth_scene_with(o: &SynthOptions) -> Result<SyntheticScene> {
    validate(o)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let (lo, hi) = o.wavelength_range;
    let wavelengths: Vec<f64> = (0..o.bands)
        .map(|b| lo + (hi - lo) * b as f64 / (o.bands - 1) as f64)
        .collect();

    let paper = paper_spectrum(&wavelengths, &mut rng);
    let mut basis = Basis::default();
    basis.push(&paper);
    let mut endmembers = Vec::with_capacity(o.n_pigments);
    let mut attempts = 0;
    while endmembers.len() < o.n_pigments {
        attempts += 1;
        if attempts > MAX_DRAWS {
            return Err(Error::InvalidArgument(format!(
                "could not draw {} mutually distinct pigments over {} bands",
                o.n_pigments, o.bands
            )));
        }
        let candidate = pigment_spectrum(&wavelengths, &paper, &mut rng);
        if basis.distance(&candidate) >= MIN_SEPARATION {
            basis.push(&candidate);
            endmembers.push(candidate);
        }
    }

    let paper_ks: Vec<f64> = paper.iter().map(|&r| reflectance_to_ks(r)).collect();
    let offsets: Vec<Vec<f64>> = endmembers
        .iter()
        .map(|e| e.iter().zip(&paper_ks).map(|(&r, p)| reflectance_to_ks(r) - p).collect())
        .collect();

    let regions = layout(o);
    let dirichlet = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
    let noise = Normal::new(0.0, o.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid normal parameters");

    let n = o.width * o.height;
    let mut pixels = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut abundance_pixels = Vec::new();
    let mut abundance_rows = Vec::new();
    for (p, region) in regions.iter().enumerate() {
        let mut a = vec![0.0; o.n_pigments];
        if let Some(i) = *region {
            a[i] = 1.0;
            if rng.random::<f64>() < o.mixed_fraction {
                let t = rng.random::<f64>() * o.max_admixture;
                let w: Vec<f64> = (0..o.n_pigments).map(|_| dirichlet.sample(&mut rng)).collect();
                let total: f64 = w.iter().sum();
                for (aj, wj) in a.iter_mut().zip(&w) {
                    *aj = (1.0 - t) * *aj + t * wj / total;
                }
            }
            abundance_pixels.push(p);
            abundance_rows.push(a.clone());
        }
        labels.push(*region);

        let mut spectrum = Vec::with_capacity(o.bands);
        for b in 0..o.bands {
            let ks = paper_ks[b] + a.iter().zip(&offsets).map(|(ai, off)| ai * off[b]).sum::<f64>();
            let mut r = ks_to_reflectance(ks.max(0.0))?;
            if o.noise_sigma > 0.0 {
                r += noise.sample(&mut rng);
            }
            spectrum.push(r.clamp(REFLECTANCE_FLOOR, 1.0));
        }
        pixels.push(spectrum);
    }

    let cube = SpectralCube::from_pixels(o.width, o.height, wavelengths, &pixels)?;
    let true_mask = PixelMask::new(o.width, o.height, labels.iter().map(Option::is_some).collect())?;
    let true_abundances = AbundanceMatrix::new(o.width, o.height, abundance_pixels, abundance_rows)?;
    Ok(SyntheticScene {
        cube,
        true_mask,
        true_abundances,
        true_labels: labels,
        endmembers,
        paper: PaperSpectrum::new(paper),
        paper_pixel: (0, 0),
    })
}

/// Pigment id of every pixel: a paper frame around a grid of rectangular
/// regions separated by one-pixel paper gutters.
fn layout(o: &SynthOptions) -> Vec<Option<usize>> {
    let cols = grid_cols(o.n_pigments);
    let rows = o.n_pigments.div_ceil(cols);
    let border_w = (o.width / 10).max(2);
    let border_h = (o.height / 10).max(2);
    let inner_w = o.width - 2 * border_w;
    let inner_h = o.height - 2 * border_h;
    let cell_w = (inner_w + 1) / cols;
    let cell_h = (inner_h + 1) / rows;

    let mut out = vec![None; o.width * o.height];
    for r in border_h..o.height - border_h {
        for c in border_w..o.width - border_w {
            let (gr, gc) = ((r - border_h) / cell_h, (c - border_w) / cell_w);
            let in_gutter = (r - border_h) % cell_h == cell_h - 1 && gr + 1 < rows
                || (c - border_w) % cell_w == cell_w - 1 && gc + 1 < cols;
            let id = gr.min(rows - 1) * cols + gc.min(cols - 1);
            if !in_gutter && id < o.n_pigments {
                out[r * o.width + c] = Some(id);
            }
        }
    }
    out
}

fn paper_spectrum(wl: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let level = rng.random_range(0.84..0.9);
    let blue_dip = rng.random_range(0.03..0.08);
    wl.iter()
        .map(|&w| level - blue_dip * (-(w - wl[0]) / 60.0).exp())
        .collect()
}

/// Low base reflectance with one to three Gaussian reflectance peaks and
/// usually a rise into the near infrared, clamped below the paper.
fn pigment_spectrum(wl: &[f64], paper: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = (wl[0], wl[wl.len() - 1]);
    let span = hi - lo;
    let base = rng.random_range(0.06..0.3);
    let peaks: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
        .map(|_| {
            (
                rng.random_range(0.1..0.5),
                lo + span * rng.random_range(0.0..0.6),
                span * rng.random_range(0.04..0.12),
            )
        })
        .collect();
    let rise = if rng.random::<f64>() < 0.7 {
        Some((rng.random_range(0.2..0.6), lo + span * rng.random_range(0.45..0.75), span * rng.random_range(0.02..0.06)))
    } else {
        None
    };
    wl.iter()
        .zip(paper)
        .map(|(&w, &p)| {
            let mut r = base;
            for &(amp, centre, width) in &peaks {
                r += amp * (-0.5 * ((w - centre) / width).powi(2)).exp();
            }
            if let Some((amp, centre, width)) = rise {
                r += amp / (1.0 + (-(w - centre) / width).exp());
            }
            r.clamp(MIN_PIGMENT, p - PAPER_GAP)
        })
        .collect()
}

/// Orthonormal basis of the unit-normalized spectra pushed so far.
#[derive(Default)]
struct Basis {
    vectors: Vec<Vec<f64>>,
}

impl Basis {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r: Vec<f64> = x.iter().map(|v| v / norm).collect();
        for q in &self.vectors {
            let dot: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= dot * qi;
            }
        }
        r
    }

    fn distance(&self, x: &[f64]) -> f64 {
        self.residual(x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn push(&mut self, x: &[f64]) {
        let r = self.residual(x);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.vectors.push(r.iter().map(|v| v / norm).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = synth_scene(4, 40, 30, 0.002, 11).unwrap();
        let b = synth_scene(4, 40, 30, 0.002, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.cube, synth_scene(4, 40, 30, 0.002, 12).unwrap().cube);

        assert_eq!(a.true_labels[0], None);
        let mut seen = [false; 4];
        for l in a.true_labels.iter().flatten() {
            seen[*l] = true;
        }
        assert_eq!(seen, [true; 4]);
        for e in &a.endmembers {
            for (r, p) in e.iter().zip(a.paper.reflectance.iter()) {
                assert!(*r >= MIN_PIGMENT && *r <= p - PAPER_GAP + 1e-12);
            }
        }
        assert!(a.cube.data().iter().all(|&v| v > 0.0 && v <= 1.0));
        assert_eq!(a.true_abundances.n_pixels(), a.true_mask.count());
    }

    #[test]
    fn pure_pixels_reproduce_masstones() {
        let mut o = SynthOptions::new(2, 12, 12, 0.0, 3);
        o.mixed_fraction = 0.0;
        let s = synth_scene_with(&o).unwrap();
        let (r, c) = s.true_mask.coords(s.true_mask.indices()[0]);
        let id = s.true_labels[r * 12 + c].unwrap();
        let px = s.cube.pixel(r, c).unwrap();
        for (got, want) in px.iter().zip(&s.endmembers[id]) {
            assert!((got - want).abs() < 1e-6);
        }
        let paper = s.cube.pixel(0, 0).unwrap();
        for (got, want) in paper.iter().zip(&s.paper.reflectance) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(synth_scene(0, 20, 20, 0.0, 0).is_err());
        assert!(synth_scene(2, 20, 20, -1.0, 0).is_err());
        assert!(synth_scene(9, 6, 6, 0.0, 0).is_err());
    }
}
