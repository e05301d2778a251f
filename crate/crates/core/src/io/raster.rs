//! RGB previews and PNG class, error and mask maps.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::cube::{ClassMap, PixelMask, SpectralCube};
use crate::error::{Error, Result};

/// Default red, green and blue rendering wavelengths in nanometres.
pub const DEFAULT_RGB_NM: [f64; 3] = [650.0, 550.0, 450.0];

/// Wavelength differences below this count as ties.
const WAVELENGTH_TIE_NM: f64 = 1e-6;

/// Distinct class colours; none of them is white.
pub const PALETTE: [[u8; 3]; 16] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [0, 0, 128],
    [128, 0, 0],
    [0, 100, 0],
    [255, 215, 0],
    [0, 0, 0],
    [70, 240, 240],
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }
}

/// Index of the band nearest `nm`; exact ties go to the lower wavelength.
pub fn nearest_band(wavelengths: &[f64], nm: f64) -> usize {
    let mut best = 0;
    for (i, &w) in wavelengths.iter().enumerate().skip(1) {
        let (d, bd) = ((w - nm).abs(), (wavelengths[best] - nm).abs());
        if d < bd - WAVELENGTH_TIE_NM {
            best = i;
        }
    }
    best
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Three-band preview: nearest band per channel, reflectance clamped to
/// `[0, 1]` and scaled to `[0, 255]` with round-half-up.
pub fn render_rgb(cube: &SpectralCube, red_nm: f64, green_nm: f64, blue_nm: f64) -> Result<RgbImage> {
    let wl = cube.wavelengths();
    let (lo, hi) = (wl[0], wl[wl.len() - 1]);
    let mut bands = [0usize; 3];
    for (i, (name, nm)) in [("red", red_nm), ("green", green_nm), ("blue", blue_nm)]
        .into_iter()
        .enumerate()
    {
        if !(nm >= lo && nm <= hi) {
            return Err(Error::InvalidArgument(format!(
                "{name} channel wavelength {nm} nm is outside the cube's range [{lo}, {hi}] nm"
            )));
        }
        bands[i] = nearest_band(wl, nm);
    }
    let planes = bands.map(|b| cube.band(b));
    let pixels = (0..cube.n_pixels())
        .map(|p| planes.map(|plane| to_byte(plane[p] as f64)))
        .collect();
    Ok(RgbImage {
        width: cube.width(),
        height: cube.height(),
        pixels,
    })
}

fn encoder(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
) -> Result<png::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    enc.write_header().map_err(|e| png_err(path, e))
}

fn png_err(path: &Path, e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

pub fn write_rgb_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = encoder(path, image.width, image.height, png::ColorType::Rgb, png::BitDepth::Eight)?;
    let data: Vec<u8> = image.pixels.iter().flatten().copied().collect();
    w.write_image_data(&data).map_err(|e| png_err(path, e))
}

/// Palette slot per class: the most populous class gets slot 0. Ties go
/// to the lower class id.
pub fn palette_order(map: &ClassMap) -> Vec<usize> {
    let pops = map.populations();
    let mut by_pop: Vec<usize> = (0..map.k).collect();
    by_pop.sort_by(|&a, &b| pops[b].cmp(&pops[a]).then(a.cmp(&b)));
    let mut slot = vec![0; map.k];
    for (rank, &class) in by_pop.iter().enumerate() {
        slot[class] = rank;
    }
    slot
}

/// Class map in palette colours; unlabelled pixels are white.
pub fn write_class_png(map: &ClassMap, path: impl AsRef<Path>) -> Result<()> {
    if map.k > PALETTE.len() {
        return Err(Error::InvalidArgument(format!(
            "{} classes exceed the {}-colour palette; extend PALETTE to render more",
            map.k,
            PALETTE.len()
        )));
    }
    let slot = palette_order(map);
    let pixels = map
        .labels
        .iter()
        .map(|l| match l {
            Some(c) => PALETTE[slot[*c]],
            None => [255, 255, 255],
        })
        .collect();
    let image = RgbImage {
        width: map.width,
        height: map.height,
        pixels,
    };
    write_rgb_png(&image, path)
}

/// Path of the text file recording the error map's scale.
pub fn error_scale_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("scale.txt")
}

/// Grayscale RMSE map, linearly scaled so the largest RMSE is 255. The
/// scale is written next to the PNG (see [`error_scale_path`]).
pub fn write_error_png(map: &ClassMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let max = map.rmse.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let data: Vec<u8> = map
        .rmse
        .iter()
        .map(|&e| (e * scale + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    let mut w = encoder(path, map.width, map.height, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    w.write_image_data(&data).map_err(|e| png_err(path, e))?;
    let mut sidecar = format!("max_rmse = {max}\nscale = {scale}\n");
    if max == 0.0 {
        sidecar.push_str("note = all RMSE values are zero; the image is black\n");
    } else {
        sidecar.push_str("note = pixel value = round(rmse * scale)\n");
    }
    let side = error_scale_path(path);
    std::fs::write(&side, sidecar).map_err(|e| Error::io(side, e))
}

/// 1-bit mask image: black marks selected pixels.
pub fn write_mask_png(mask: &PixelMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (mask.width(), mask.height());
    let stride = w.div_ceil(8);
    let mut data = vec![0u8; stride * h];
    for r in 0..h {
        for c in 0..w {
            if !mask.is_selected(r, c) {
                data[r * stride + c / 8] |= 0x80 >> (c % 8);
            }
        }
    }
    let mut wr = encoder(path, w, h, png::ColorType::Grayscale, png::BitDepth::One)?;
    wr.write_image_data(&data).map_err(|e| png_err(path, e))
}

/// Reads a mask written by [`write_mask_png`]. 8-bit grayscale images are
/// accepted too, with values below 128 counting as selected.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<PixelMask> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let selected = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::One) => (0..w * h)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                buf[r * info.line_size + c / 8] & (0x80 >> (c % 8)) == 0
            })
            .collect(),
        (png::ColorType::Grayscale, png::BitDepth::Eight) => (0..w * h)
            .map(|i| buf[(i / w) * info.line_size + i % w] < 128)
            .collect(),
        (ct, bd) => {
            return Err(Error::format(
                path,
                format!("mask must be 1- or 8-bit grayscale, found {ct:?} {bd:?}"),
            ))
        }
    };
    PixelMask::new(w, h, selected)
}

/// Decodes an 8-bit grayscale or RGB PNG into raw bytes; used by tests and
/// tools that inspect written maps.
pub fn read_png_bytes(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "expected an 8-bit image"));
    }
    let channels = info.color_type.samples();
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, channels, buf))
}
