//! File formats, exports and the command-line front end for `aqtv-core`.

pub mod cli;
pub mod config;
pub mod export;
pub mod flo;
pub mod image_io;

pub use flo::{read_flo, write_flo, FloError};
pub use image_io::{read_image, write_image, write_rgb, ImageError};
