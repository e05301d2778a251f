//! ENVI raw cubes: a text `.hdr` of `key = value` pairs next to a raw binary
//! data file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bsq" => Some(Interleave::Bsq),
            "bil" => Some(Interleave::Bil),
            "bip" => Some(Interleave::Bip),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        }
    }

    /// Position of `(line, sample, band)` in a file with this interleave.
    fn offset(self, line: usize, sample: usize, band: usize, h: &EnviHeader) -> usize {
        match self {
            Interleave::Bsq => (band * h.lines + line) * h.samples + sample,
            Interleave::Bil => (line * h.bands + band) * h.samples + sample,
            Interleave::Bip => (line * h.samples + sample) * h.bands + band,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

/// ENVI `data type` codes this reader understands.
pub const SUPPORTED_DATA_TYPES: [(u32, &str); 5] = [
    (1, "uint8"),
    (2, "int16"),
    (4, "float32"),
    (5, "float64"),
    (12, "uint16"),
];

fn element_size(data_type: u32) -> Option<usize> {
    match data_type {
        1 => Some(1),
        2 | 12 => Some(2),
        4 => Some(4),
        5 => Some(8),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub data_type: u32,
    pub byte_order: ByteOrder,
    pub header_offset: usize,
    pub wavelength: Option<Vec<f64>>,
}

impl EnviHeader {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        match lines.by_ref().find(|l| !l.trim().is_empty()) {
            Some(l) if l.trim() == "ENVI" => {}
            _ => return Err("missing ENVI magic on the first line".into()),
        }
        let mut pairs = Vec::new();
        while let Some(line) = lines.next() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("expected `key = value`, found `{line}`"));
            };
            let mut value = value.trim().to_string();
            if value.starts_with('{') {
                while !value.contains('}') {
                    let Some(more) = lines.next() else {
                        return Err(format!("unterminated `{{` in `{}`", key.trim()));
                    };
                    value.push(' ');
                    value.push_str(more.trim());
                }
                value = value
                    .trim_start_matches('{')
                    .trim_end()
                    .trim_end_matches('}')
                    .trim()
                    .to_string();
            }
            pairs.push((key.trim().to_ascii_lowercase(), value));
        }
        let get = |k: &str| pairs.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let count = |k: &str| -> std::result::Result<usize, String> {
            let v = get(k).ok_or_else(|| format!("missing `{k}`"))?;
            let n: usize = v.parse().map_err(|_| format!("`{k}` is not a count: `{v}`"))?;
            if n == 0 {
                return Err(format!("`{k}` must be at least 1"));
            }
            Ok(n)
        };
        let samples = count("samples")?;
        let lines_n = count("lines")?;
        let bands = count("bands")?;
        let interleave = match get("interleave") {
            None => Interleave::Bsq,
            Some(v) => Interleave::parse(v).ok_or_else(|| format!("unknown interleave `{v}`"))?,
        };
        let data_type = get("data type")
            .ok_or("missing `data type`")?
            .parse()
            .map_err(|_| "`data type` is not an integer".to_string())?;
        let byte_order = match get("byte order") {
            None | Some("0") => ByteOrder::Little,
            Some("1") => ByteOrder::Big,
            Some(v) => return Err(format!("unknown byte order `{v}`")),
        };
        let header_offset = match get("header offset") {
            None => 0,
            Some(v) => v.parse().map_err(|_| format!("bad header offset `{v}`"))?,
        };
        let wavelength = match get("wavelength") {
            None => None,
            Some(v) => {
                let wl = v
                    .split(',')
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>().map_err(|_| format!("bad wavelength `{s}`")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if wl.len() != bands {
                    return Err(format!("{} wavelengths listed for {bands} bands", wl.len()));
                }
                Some(wl)
            }
        };
        Ok(EnviHeader {
            samples,
            lines: lines_n,
            bands,
            interleave,
            data_type,
            byte_order,
            header_offset,
            wavelength,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("ENVI\n");
        let _ = writeln!(s, "description = {{kmpigment reflectance cube}}");
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "lines = {}", self.lines);
        let _ = writeln!(s, "bands = {}", self.bands);
        let _ = writeln!(s, "header offset = {}", self.header_offset);
        let _ = writeln!(s, "file type = ENVI Standard");
        let _ = writeln!(s, "data type = {}", self.data_type);
        let _ = writeln!(s, "interleave = {}", self.interleave.as_str());
        let order = match self.byte_order {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        };
        let _ = writeln!(s, "byte order = {order}");
        if let Some(wl) = &self.wavelength {
            let _ = writeln!(s, "wavelength units = Nanometers");
            let list: Vec<String> = wl.iter().map(|w| format!("{w}")).collect();
            let _ = writeln!(s, "wavelength = {{\n {}}}", list.join(", "));
        }
        s
    }

    fn expected_bytes(&self) -> Option<usize> {
        element_size(self.data_type).map(|e| self.header_offset + self.samples * self.lines * self.bands * e)
    }
}

fn decode(bytes: &[u8], data_type: u32, order: ByteOrder) -> f64 {
    macro_rules! num {
        ($t:ty) => {{
            let arr = bytes.try_into().unwrap();
            match order {
                ByteOrder::Little => <$t>::from_le_bytes(arr) as f64,
                ByteOrder::Big => <$t>::from_be_bytes(arr) as f64,
            }
        }};
    }
    match data_type {
        1 => bytes[0] as f64,
        2 => num!(i16),
        4 => num!(f32),
        5 => num!(f64),
        12 => num!(u16),
        _ => unreachable!("data type validated before decoding"),
    }
}

/// Reads a cube. The result is always band-sequential in memory whatever
/// the file's interleave. Headers without a wavelength list get band
/// indices `0, 1, ...` as wavelengths.
pub fn read_envi(header_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<SpectralCube> {
    let header_path = header_path.as_ref();
    let data_path = data_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = EnviHeader::parse(&text).map_err(|m| Error::format(header_path, m))?;
    let Some(size) = element_size(header.data_type) else {
        let supported: Vec<String> = SUPPORTED_DATA_TYPES
            .iter()
            .map(|(c, n)| format!("{c} ({n})"))
            .collect();
        return Err(Error::format(
            header_path,
            format!(
                "unsupported data type {}; supported codes: {}",
                header.data_type,
                supported.join(", ")
            ),
        ));
    };
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let expected = header.expected_bytes().unwrap();
    if bytes.len() != expected {
        return Err(Error::format(
            data_path,
            format!("expected {expected} bytes from the header, found {}", bytes.len()),
        ));
    }
    let body = &bytes[header.header_offset..];
    let (w, h, b) = (header.samples, header.lines, header.bands);
    let mut data = vec![0f32; w * h * b];
    for band in 0..b {
        for line in 0..h {
            for sample in 0..w {
                let off = header.interleave.offset(line, sample, band, &header) * size;
                let v = decode(&body[off..off + size], header.data_type, header.byte_order);
                data[(band * h + line) * w + sample] = v as f32;
            }
        }
    }
    let wavelengths = header
        .wavelength
        .clone()
        .unwrap_or_else(|| (0..b).map(|i| i as f64).collect());
    SpectralCube::new(w, h, wavelengths, data).map_err(|e| match e {
        Error::NonFinite { .. } | Error::InvalidCube(_) => Error::format(data_path, e.to_string()),
        other => other,
    })
}

/// Writes `cube` as little-endian float32 BSQ.
pub fn write_envi(cube: &SpectralCube, header_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<()> {
    write_envi_with(cube, header_path, data_path, Interleave::Bsq)
}

pub fn write_envi_with(
    cube: &SpectralCube,
    header_path: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
    interleave: Interleave,
) -> Result<()> {
    let header = EnviHeader {
        samples: cube.width(),
        lines: cube.height(),
        bands: cube.bands(),
        interleave,
        data_type: 4,
        byte_order: ByteOrder::Little,
        header_offset: 0,
        wavelength: Some(cube.wavelengths().to_vec()),
    };
    let (w, h, b) = (cube.width(), cube.height(), cube.bands());
    let mut bytes = vec![0u8; w * h * b * 4];
    for band in 0..b {
        for line in 0..h {
            for sample in 0..w {
                let off = interleave.offset(line, sample, band, &header) * 4;
                bytes[off..off + 4].copy_from_slice(&cube.value(line, sample, band).to_le_bytes());
            }
        }
    }
    let header_path = header_path.as_ref();
    let data_path = data_path.as_ref();
    fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))?;
    fs::write(header_path, header.to_text()).map_err(|e| Error::io(header_path, e))?;
    Ok(())
}
