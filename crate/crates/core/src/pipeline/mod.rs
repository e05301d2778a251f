//! End-to-end runs over files.
//!
//! Each stage reads its inputs from the output directory written by the
//! stage before it, so stages can be rerun on their own:
//!
//! | stage        | reads                         | writes |
//! |--------------|-------------------------------|--------|
//! | `segment`    | cube                          | `mask.png`, `patch_clusters.csv` |
//! | `endmembers` | cube, `mask.png`              | `endmembers.csv`, `volume.csv` |
//! | `unmix`      | cube, `mask.png`, `endmembers.csv` | `abundances.csv` |
//! | `classify`   | cube, `abundances.csv`        | `labels.csv`, `class_means.csv`, `class.png`, `error.png` |
//!
//! [`run_pipeline`] runs all four and adds `manifest.txt`.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ClassifyConfig, Clusters, Count, EndmemberConfig, Paths, PipelineConfig, SegmentationConfig, UnmixConfig};

use crate::classify::{augment_with, class_rmse_ks, class_rmse_with, classify_pixels, RmseSpace};
use crate::cube::{AbundanceMatrix, ClassMap, EndmemberSet, PixelMask, Rect, SpectralCube, VolumeFunction};
use crate::dimensionality::{maxd_with, volume_function};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::{
    read_csv_matrix, read_envi, read_mask_png, write_class_png, write_csv_matrix, write_envi, write_error_png, write_mask_png,
    NamedTable,
};
use crate::km::{cube_to_ks_with, PaperSpectrum};
use crate::synth::SyntheticScene;
use crate::segmentation::{segment_with, Designation, MdcOptions, Regularization, SegmentOptions};
use crate::unmix::{prepare_endmembers, unmix_cube_with};

pub const MASK_FILE: &str = "mask.png";
pub const PATCH_CLUSTERS_FILE: &str = "patch_clusters.csv";
pub const ENDMEMBERS_FILE: &str = "endmembers.csv";
pub const VOLUME_FILE: &str = "volume.csv";
pub const ABUNDANCES_FILE: &str = "abundances.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const CLASS_MEANS_FILE: &str = "class_means.csv";
pub const CLASS_PNG_FILE: &str = "class.png";
pub const ERROR_PNG_FILE: &str = "error.png";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Columns of `endmembers.csv` before the spectrum.
const ENDMEMBER_META: [&str; 4] = ["index", "row", "col", "used"];

const SEGMENT_STREAM: u64 = 1;
const CLASSIFY_STREAM: u64 = 2;

/// Derives an independent seed for one stage from the run seed.
pub fn stage_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined state.
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn segment_seed(cfg: &PipelineConfig) -> u64 {
    stage_seed(cfg.seed, SEGMENT_STREAM)
}

pub fn classify_seed(cfg: &PipelineConfig) -> u64 {
    stage_seed(cfg.seed, CLASSIFY_STREAM)
}

#[derive(Clone, Debug)]
pub struct SegmentReport {
    pub mask: PixelMask,
    pub patch: Rect,
    pub pigment_clusters: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct EndmemberReport {
    /// Every extracted endmember, in extraction order.
    pub extracted: EndmemberSet,
    pub volume: VolumeFunction,
    /// How many leading endmembers go on to unmixing.
    pub used: usize,
}

#[derive(Clone, Debug)]
pub struct ClassifyReport {
    pub map: ClassMap,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub segment: SegmentReport,
    pub endmembers: EndmemberReport,
    pub abundances: AbundanceMatrix,
    pub classify: ClassifyReport,
    /// Wall-clock seconds per stage, in run order.
    pub timings: Vec<(&'static str, f64)>,
}

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.out_dir.join(name)
}

fn create_out_dir(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.paths.out_dir).map_err(|e| Error::io(&cfg.paths.out_dir, e))
}

/// Reads the cube and checks every coordinate in the config against it.
pub fn load_cube(cfg: &PipelineConfig) -> Result<SpectralCube> {
    cfg.validate()?;
    let cube = read_envi(&cfg.paths.header, cfg.paths.data_path())?;
    let (row, col) = cfg.paper_pixel();
    cube.check_bounds(row, col)?;
    let patch = patch_rect(cfg, &cube);
    if !patch.fits(cube.height(), cube.width()) {
        return Err(Error::OutOfBounds {
            row: patch.row + patch.height - 1,
            col: patch.col + patch.width - 1,
            height: cube.height(),
            width: cube.width(),
        });
    }
    Ok(cube)
}

fn patch_rect(cfg: &PipelineConfig, cube: &SpectralCube) -> Rect {
    cfg.segmentation
        .patch
        .unwrap_or(Rect::new(0, 0, cube.height(), cube.width()))
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.at_stage(name))
}

pub fn run_segment(cfg: &PipelineConfig, exec: Exec) -> Result<SegmentReport> {
    stage("segment", || {
        let cube = load_cube(cfg)?;
        create_out_dir(cfg)?;
        let s = &cfg.segmentation;
        let designation = match &s.pigment_clusters {
            Clusters::Auto => Designation::AwayFromPaper {
                paper: cfg.paper_pixel(),
                min_delta_e: s.paper_delta_e,
            },
            Clusters::List(ids) => Designation::Clusters(ids.clone()),
        };
        let patch = patch_rect(cfg, &cube);
        let mut opts = SegmentOptions::new(patch, s.k, segment_seed(cfg), designation);
        opts.rgb_nm = s.rgb_nm;
        opts.mdc = MdcOptions {
            covariance: s.covariance,
            regularization: Regularization::Auto,
        };
        let seg = segment_with(&cube, &opts, exec)?;
        let (row, col) = cfg.paper_pixel();
        if seg.mask.is_selected(row, col) {
            log::warn!("paper pixel ({row}, {col}) was classified as pigment");
        }
        log::info!(
            "segment: clusters {:?} are pigment, {} of {} pixels selected",
            seg.pigment_clusters,
            seg.mask.count(),
            cube.n_pixels()
        );

        write_mask_png(&seg.mask, out_path(cfg, MASK_FILE))?;
        let mut table = NamedTable::new(["row", "col", "cluster", "pigment"].map(String::from).to_vec());
        for (i, &label) in seg.patch_labels.iter().enumerate() {
            let (r, c) = (patch.row + i / patch.width, patch.col + i % patch.width);
            let pigment = seg.pigment_clusters.contains(&label);
            table.rows.push(vec![r as f64, c as f64, label as f64, pigment as u8 as f64]);
        }
        write_csv_matrix(&table, out_path(cfg, PATCH_CLUSTERS_FILE))?;

        Ok(SegmentReport {
            mask: seg.mask,
            patch,
            pigment_clusters: seg.pigment_clusters,
        })
    })
}

fn read_mask(cfg: &PipelineConfig, cube: &SpectralCube) -> Result<PixelMask> {
    let mask = read_mask_png(out_path(cfg, MASK_FILE))?;
    mask.check_matches(cube)?;
    mask.require_nonempty()?;
    Ok(mask)
}

pub fn run_endmembers(cfg: &PipelineConfig, exec: Exec) -> Result<EndmemberReport> {
    stage("endmembers", || {
        let cube = load_cube(cfg)?;
        let mask = read_mask(cfg, &cube)?;
        let m_max = cfg.endmembers.m_max.min(mask.count());
        if m_max < cfg.endmembers.m_max {
            log::warn!("mask has only {m_max} pixels; extracting {m_max} endmembers");
        }
        let extracted = match maxd_with(&cube, &mask, m_max.max(2), exec) {
            Ok(set) => set,
            // Fewer distinct directions than m_max: keep every one there is.
            Err(Error::Degenerate { selected, .. }) if selected >= 2 => {
                log::warn!("data spans only {selected} endmembers; stopping there");
                maxd_with(&cube, &mask, selected, exec)?
            }
            Err(e) => return Err(e),
        };
        let volume = volume_function(&extracted, cfg.endmembers.tau_vol);
        let used = cfg
            .endmembers
            .count
            .resolve(volume.estimated_dimensionality)
            .clamp(1, extracted.len());
        log::info!(
            "endmembers: extracted {}, estimated dimensionality {}, using {used}",
            extracted.len(),
            volume.estimated_dimensionality
        );

        let mut columns: Vec<String> = ENDMEMBER_META.map(String::from).to_vec();
        columns.extend(cube.wavelengths().iter().map(|w| format!("{w}")));
        let mut table = NamedTable::new(columns);
        for (i, (spectrum, &(r, c))) in extracted.spectra().iter().zip(extracted.sources()).enumerate() {
            let mut row = vec![i as f64, r as f64, c as f64, (i < used) as u8 as f64];
            row.extend(spectrum);
            table.rows.push(row);
        }
        write_csv_matrix(&table, out_path(cfg, ENDMEMBERS_FILE))?;

        let mut vt = NamedTable::new(vec!["k".into(), "volume".into()]);
        vt.rows = volume.values.iter().enumerate().map(|(k, &v)| vec![(k + 1) as f64, v]).collect();
        write_csv_matrix(&vt, out_path(cfg, VOLUME_FILE))?;

        Ok(EndmemberReport { extracted, volume, used })
    })
}

fn as_index(v: f64, what: &str, path: &Path) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::format(path, format!("{what} {v} is not a non-negative integer")))
    }
}

/// The endmembers flagged as used in `endmembers.csv`.
pub fn read_endmembers(path: impl AsRef<Path>, bands: usize) -> Result<EndmemberSet> {
    let path = path.as_ref();
    let table = read_csv_matrix(path)?;
    if table.columns.len() != ENDMEMBER_META.len() + bands || table.columns[..4] != ENDMEMBER_META {
        return Err(Error::format(
            path,
            format!("expected columns {ENDMEMBER_META:?} followed by {bands} bands"),
        ));
    }
    let mut spectra = Vec::new();
    let mut sources = Vec::new();
    for row in table.rows.iter().filter(|r| r[3] != 0.0) {
        sources.push((as_index(row[1], "row", path)?, as_index(row[2], "col", path)?));
        spectra.push(row[4..].to_vec());
    }
    if spectra.is_empty() {
        return Err(Error::format(path, "no endmember is marked as used"));
    }
    EndmemberSet::from_parts(spectra, sources)
}

pub fn run_unmix(cfg: &PipelineConfig, exec: Exec) -> Result<AbundanceMatrix> {
    stage("unmix", || {
        let cube = load_cube(cfg)?;
        let mask = read_mask(cfg, &cube)?;
        let endmembers = read_endmembers(out_path(cfg, ENDMEMBERS_FILE), cube.bands())?;
        let (row, col) = cfg.paper_pixel();
        let paper = cfg
            .unmix
            .subtract_paper
            .then(|| PaperSpectrum::from_pixel(&cube, row, col))
            .transpose()?;
        let ks = cube_to_ks_with(&cube, &mask, exec)?;
        let endmembers_ks = prepare_endmembers(&endmembers, paper.as_ref())?;
        let abundances = unmix_cube_with(&ks, &endmembers_ks, paper.as_ref(), &mask, exec)?;
        write_abundances(&abundances, out_path(cfg, ABUNDANCES_FILE))?;
        Ok(abundances)
    })
}

pub fn write_abundances(a: &AbundanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut columns = vec!["row".to_string(), "col".to_string()];
    columns.extend((0..a.m()).map(|j| format!("a{j}")));
    let mut table = NamedTable::new(columns);
    for i in 0..a.n_pixels() {
        let (r, c) = a.coords(i);
        let mut row = vec![r as f64, c as f64];
        row.extend(a.row(i));
        table.rows.push(row);
    }
    write_csv_matrix(&table, path)
}

pub fn read_abundances(path: impl AsRef<Path>, width: usize, height: usize) -> Result<AbundanceMatrix> {
    let path = path.as_ref();
    let table = read_csv_matrix(path)?;
    if table.columns.len() < 3 || table.columns[0] != "row" || table.columns[1] != "col" {
        return Err(Error::format(path, "expected columns row, col, a0, ..."));
    }
    let mut pixels = Vec::with_capacity(table.rows.len());
    let mut rows = Vec::with_capacity(table.rows.len());
    for r in &table.rows {
        let (row, col) = (as_index(r[0], "row", path)?, as_index(r[1], "col", path)?);
        if row >= height || col >= width {
            return Err(Error::OutOfBounds { row, col, height, width });
        }
        pixels.push(row * width + col);
        rows.push(r[2..].to_vec());
    }
    if pixels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::format(path, "pixels must be listed once each in row-major order"));
    }
    AbundanceMatrix::new(width, height, pixels, rows)
}

pub fn run_classify(cfg: &PipelineConfig, exec: Exec) -> Result<ClassifyReport> {
    stage("classify", || {
        let cube = load_cube(cfg)?;
        let abundances = read_abundances(out_path(cfg, ABUNDANCES_FILE), cube.width(), cube.height())?;
        let k = cfg.classify.k.resolve(abundances.m());
        let features = augment_with(&abundances, exec);
        let labels = classify_pixels(&features, k, classify_seed(cfg))?;
        let mask = abundances.mask();
        let map = match cfg.classify.rmse_space {
            RmseSpace::Reflectance => class_rmse_with(&cube, &mask, &labels, exec)?,
            RmseSpace::Ks => {
                let ks = cube_to_ks_with(&cube, &mask, exec)?;
                class_rmse_ks(&ks, &mask, &labels, exec)?
            }
        };

        let mut lt = NamedTable::new(["row", "col", "label", "rmse"].map(String::from).to_vec());
        for (i, &l) in labels.iter().enumerate() {
            let (r, c) = abundances.coords(i);
            lt.rows.push(vec![r as f64, c as f64, l as f64, map.rmse[abundances.pixels()[i]]]);
        }
        write_csv_matrix(&lt, out_path(cfg, LABELS_FILE))?;

        let mut columns = vec!["class".to_string(), "population".to_string()];
        columns.extend(cube.wavelengths().iter().map(|w| format!("{w}")));
        let mut mt = NamedTable::new(columns);
        for (c, (mean, n)) in map.class_means.iter().zip(map.populations()).enumerate() {
            let mut row = vec![c as f64, n as f64];
            row.extend(mean);
            mt.rows.push(row);
        }
        write_csv_matrix(&mt, out_path(cfg, CLASS_MEANS_FILE))?;
        write_class_png(&map, out_path(cfg, CLASS_PNG_FILE))?;
        write_error_png(&map, out_path(cfg, ERROR_PNG_FILE))?;
        log::info!("classify: {} pixels in {k} classes", labels.len());
        Ok(ClassifyReport { map })
    })
}

/// Runs every stage in order and writes the run manifest.
pub fn run_pipeline(cfg: &PipelineConfig, exec: Exec) -> Result<RunReport> {
    // Surface config and bounds problems before any stage starts.
    stage("config", || load_cube(cfg).map(drop))?;
    let mut timings = Vec::new();
    let mut timed = |name: &'static str, t: Instant| timings.push((name, t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let segment = run_segment(cfg, exec)?;
    timed("segment", t);
    let t = Instant::now();
    let endmembers = run_endmembers(cfg, exec)?;
    timed("endmembers", t);
    let t = Instant::now();
    let abundances = run_unmix(cfg, exec)?;
    timed("unmix", t);
    let t = Instant::now();
    let classify = run_classify(cfg, exec)?;
    timed("classify", t);

    let report = RunReport {
        segment,
        endmembers,
        abundances,
        classify,
        timings,
    };
    stage("manifest", || write_manifest(cfg, &report))?;
    Ok(report)
}

/// The configuration followed by a `[run]` table of derived values.
pub fn manifest_text(cfg: &PipelineConfig, report: &RunReport) -> String {
    let mut run = toml::Table::new();
    let int = |v: usize| toml::Value::Integer(v as i64);
    run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    run.insert("segment_seed".into(), segment_seed(cfg).to_string().into());
    run.insert("classify_seed".into(), classify_seed(cfg).to_string().into());
    run.insert(
        "pigment_clusters".into(),
        toml::Value::Array(report.segment.pigment_clusters.iter().map(|&c| int(c)).collect()),
    );
    run.insert("mask_pixels".into(), int(report.segment.mask.count()));
    run.insert("endmembers_extracted".into(), int(report.endmembers.extracted.len()));
    run.insert(
        "estimated_dimensionality".into(),
        int(report.endmembers.volume.estimated_dimensionality),
    );
    run.insert("endmembers_used".into(), int(report.endmembers.used));
    run.insert("classes".into(), int(report.classify.map.k));
    let mut timings = toml::Table::new();
    for (name, secs) in &report.timings {
        timings.insert((*name).into(), (*secs).into());
    }
    run.insert("seconds".into(), timings.into());

    let mut text = String::from("# kmpigment run manifest\n\n");
    text.push_str(&cfg.to_toml());
    text.push('\n');
    let mut wrapper = toml::Table::new();
    wrapper.insert("run".into(), run.into());
    text.push_str(&toml::to_string(&wrapper).expect("manifest serializes"));
    text
}

const SCENE_SEGMENT_K: usize = 12;

/// Writes a synthetic scene as a ready-to-run input directory: the cube
/// (`scene.hdr`/`scene.img`), its ground truth (`truth_*`) and a
/// `config.toml` with default settings apart from the segmentation
/// cluster count. Returns that config with paths
/// resolved against `dir`.
pub fn write_scene_bundle(scene: &SyntheticScene, dir: impl AsRef<Path>, seed: u64) -> Result<PipelineConfig> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_envi(&scene.cube, dir.join("scene.hdr"), dir.join("scene.img"))?;
    write_mask_png(&scene.true_mask, dir.join("truth_mask.png"))?;
    write_abundances(&scene.true_abundances, dir.join("truth_abundances.csv"))?;

    let mut labels = NamedTable::new(["row", "col", "label"].map(String::from).to_vec());
    for (p, l) in scene.true_labels.iter().enumerate() {
        if let Some(l) = l {
            let (r, c) = scene.cube.coords(p);
            labels.rows.push(vec![r as f64, c as f64, *l as f64]);
        }
    }
    write_csv_matrix(&labels, dir.join("truth_labels.csv"))?;

    let mut columns = vec!["pigment".to_string()];
    columns.extend(scene.cube.wavelengths().iter().map(|w| format!("{w}")));
    let mut spectra = NamedTable::new(columns);
    for (i, e) in scene.endmembers.iter().enumerate() {
        let mut row = vec![i as f64];
        row.extend(e);
        spectra.rows.push(row);
    }
    write_csv_matrix(&spectra, dir.join("truth_endmembers.csv"))?;

    let mut cfg = PipelineConfig::new("scene.hdr", "out", scene.paper_pixel);
    cfg.seed = seed;
    // The patch is the whole scene, so over-segment: with few clusters the
    // xy features split it into quadrants that mix paper and pigment.
    cfg.segmentation.k = SCENE_SEGMENT_K;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    PipelineConfig::load(path)
}

fn write_manifest(cfg: &PipelineConfig, report: &RunReport) -> Result<()> {
    let path = out_path(cfg, MANIFEST_FILE);
    std::fs::write(&path, manifest_text(cfg, report)).map_err(|e| Error::io(path, e))
}
