//! File formats: ENVI cubes, PNG rasters and CSV tables.

pub mod envi;
pub mod raster;
pub mod table;

pub use envi::{read_envi, write_envi, write_envi_with, EnviHeader, Interleave};
pub use raster::{
    read_mask_png, render_rgb, write_class_png, write_error_png, write_mask_png, write_rgb_png,
    RgbImage, DEFAULT_RGB_NM,
};
pub use table::{read_csv_matrix, write_csv_matrix, NamedTable};
