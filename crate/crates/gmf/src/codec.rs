//! Image decoding and encoding between files and [`PixelGrid`]s.

use std::io::Cursor;
use std::path::Path;

use gmf_core::data::PixelGrid;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{self, Error, Result};

/// File extensions treated as images, lowercase.
pub const IMAGE_EXTENSIONS: &[&str] = &["jpg", "jpeg", "png", "ppm", "pgm"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Reads a JPEG, PNG or binary PPM/PGM file. Grayscale files give one
/// channel, everything else three (alpha is dropped).
pub fn decode_image(path: &Path) -> Result<PixelGrid> {
    decode_bytes(&error::read(path)?, path)
}

/// Decodes an in-memory file; `path` only names it in errors and serves
/// as a format hint when the content is ambiguous.
pub fn decode_bytes(bytes: &[u8], path: &Path) -> Result<PixelGrid> {
    let fail = |reason: String| Error::Decode { path: path.to_path_buf(), reason };
    let mut reader = ImageReader::new(Cursor::new(bytes)).with_guessed_format().map_err(|e| fail(e.to_string()))?;
    if reader.format().is_none() {
        reader.set_format(ImageFormat::from_path(path).map_err(|_| fail("unrecognized image format".into()))?);
    }
    let img = reader.decode().map_err(|e| fail(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grid = if img.color().has_color() {
        PixelGrid::new(w, h, 3, img.into_rgb8().into_raw())
    } else {
        PixelGrid::new(w, h, 1, img.into_luma8().into_raw())
    };
    grid.map_err(|e| fail(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Png,
    Ppm,
    Pgm,
}

impl OutputFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => Ok(OutputFormat::Png),
            Some("ppm") | Some("pnm") => Ok(OutputFormat::Ppm),
            Some("pgm") => Ok(OutputFormat::Pgm),
            _ => Err(Error::Encode { path: path.to_path_buf(), reason: "output must be .png, .ppm or .pgm".into() }),
        }
    }
}

/// Serializes `img`; PPM output is always RGB and PGM always gray.
pub fn encode(img: &PixelGrid, format: OutputFormat) -> Vec<u8> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut out = Vec::new();
    let res = match format {
        OutputFormat::Png => {
            let color = if img.channels() == 1 { ExtendedColorType::L8 } else { ExtendedColorType::Rgb8 };
            image::codecs::png::PngEncoder::new(&mut out).write_image(img.data(), w, h, color)
        }
        OutputFormat::Ppm => {
            let rgb = img.to_rgb();
            PnmEncoder::new(&mut out).with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary)).write_image(
                rgb.data(),
                w,
                h,
                ExtendedColorType::Rgb8,
            )
        }
        OutputFormat::Pgm => {
            let gray = if img.channels() == 1 { img.clone() } else { img.to_gray() };
            PnmEncoder::new(&mut out).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary)).write_image(
                gray.data(),
                w,
                h,
                ExtendedColorType::L8,
            )
        }
    };
    res.expect("encoding into memory cannot fail for a consistent grid");
    out
}

/// Writes `img` in the format named by the extension of `path`.
pub fn save_image(img: &PixelGrid, path: &Path) -> Result<()> {
    let format = OutputFormat::from_path(path)?;
    error::write(path, &encode(img, format))
}
