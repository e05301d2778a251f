//! Pigment pixel extraction.
//!
//! A patch of the cube is rendered to RGB, converted to Lab and augmented
//! with pixel coordinates, then clustered with K-means. The clusters
//! designated as pigment, together with the rest, train a Mahalanobis
//! distance classifier which is applied to every pixel of the cube.

pub mod kmeans;
pub mod lab;
pub mod mdc;

pub use kmeans::{kmeans, KMeans};
pub use lab::{delta_e, rgb_to_lab};
pub use mdc::{mdc_classify, mdc_train, mdc_train_with, CovarianceMode, MdcModel, MdcOptions, Regularization};

use crate::cube::{PixelMask, Rect, SpectralCube};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::raster::{render_rgb, DEFAULT_RGB_NM};

/// Which patch clusters count as pigment.
#[derive(Clone, Debug, PartialEq)]
pub enum Designation {
    /// Explicit cluster ids.
    Clusters(Vec<usize>),
    /// Every cluster whose Lab centroid is at least `min_delta_e` away from
    /// the colour of the paper pixel.
    AwayFromPaper {
        paper: (usize, usize),
        min_delta_e: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOptions {
    pub patch: Rect,
    pub k: usize,
    pub seed: u64,
    pub designation: Designation,
    pub rgb_nm: [f64; 3],
    pub mdc: MdcOptions,
}

impl SegmentOptions {
    pub fn new(patch: Rect, k: usize, seed: u64, designation: Designation) -> Self {
        SegmentOptions {
            patch,
            k,
            seed,
            designation,
            rgb_nm: DEFAULT_RGB_NM,
            mdc: MdcOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub mask: PixelMask,
    /// K-means label of every patch pixel, row-major within the patch.
    pub patch_labels: Vec<usize>,
    pub pigment_clusters: Vec<usize>,
    pub model: MdcModel,
}

/// Lab colour plus coordinates scaled to `[0, 100]`, the range of `L`.
pub fn lab_xy_features(rgb: &crate::io::RgbImage) -> Vec<Vec<f64>> {
    let scale = |i: usize, n: usize| if n > 1 { 100.0 * i as f64 / (n - 1) as f64 } else { 0.0 };
    (0..rgb.width * rgb.height)
        .map(|p| {
            let (r, c) = (p / rgb.width, p % rgb.width);
            let lab = rgb_to_lab(rgb.pixels[p]);
            vec![lab[0], lab[1], lab[2], scale(c, rgb.width), scale(r, rgb.height)]
        })
        .collect()
}

pub fn segment(cube: &SpectralCube, opts: &SegmentOptions) -> Result<Segmentation> {
    segment_with(cube, opts, Exec::default())
}

pub fn segment_with(cube: &SpectralCube, opts: &SegmentOptions, exec: Exec) -> Result<Segmentation> {
    let [red, green, blue] = opts.rgb_nm;
    let patch = cube.crop(opts.patch)?;
    let rgb = render_rgb(&patch, red, green, blue)?;
    let features = lab_xy_features(&rgb);
    let clusters = kmeans(&features, opts.k, opts.seed)?;

    let pigment_clusters = match &opts.designation {
        Designation::Clusters(ids) => {
            if let Some(bad) = ids.iter().find(|&&id| id >= opts.k) {
                return Err(Error::InvalidArgument(format!(
                    "pigment cluster {bad} does not exist; cluster ids run 0..{}",
                    opts.k
                )));
            }
            let mut ids = ids.clone();
            ids.sort_unstable();
            ids.dedup();
            ids
        }
        Designation::AwayFromPaper { paper, min_delta_e } => {
            cube.check_bounds(paper.0, paper.1)?;
            let paper_px = cube.crop(Rect::new(paper.0, paper.1, 1, 1))?;
            let paper_lab = rgb_to_lab(render_rgb(&paper_px, red, green, blue)?.pixels[0]);
            (0..opts.k)
                .filter(|&c| {
                    let cen = &clusters.centroids[c];
                    delta_e([cen[0], cen[1], cen[2]], paper_lab) >= *min_delta_e
                })
                .collect()
        }
    };
    if pigment_clusters.is_empty() {
        return Err(Error::InvalidArgument("no cluster is designated as pigment".into()));
    }

    let spectra: Vec<Vec<f64>> = (0..patch.n_pixels()).map(|p| patch.pixel_at(p)).collect();
    let model = mdc_train_with(&spectra, &clusters.labels, opts.mdc)?;
    let is_pigment: Vec<bool> = (0..opts.k).map(|c| pigment_clusters.contains(&c)).collect();
    let selected = exec.map(cube.n_pixels(), |p| is_pigment[model.classify(&cube.pixel_at(p))]);
    let mask = PixelMask::new(cube.width(), cube.height(), selected)?;

    Ok(Segmentation {
        mask,
        patch_labels: clusters.labels,
        pigment_clusters,
        model,
    })
}
