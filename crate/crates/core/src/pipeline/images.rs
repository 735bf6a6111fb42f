//! Grayscale image IO (binary PGM for fixtures and reconstructions).

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use crate::error::{invalid, Result};

/// Luminance weights applied to color inputs.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(name: impl Into<String>, width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return invalid(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            ));
        }
        Ok(Self {
            name: name.into(),
            width,
            height,
            pixels,
        })
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Copies the `size × size` window with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, size: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(size * size);
        for row in y..y + size {
            out.extend_from_slice(&self.pixels[row * self.width + x..row * self.width + x + size]);
        }
        out
    }
}

fn from_dynamic(name: String, img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64)
                    / 255.0
            })
            .collect(),
    };
    GrayImage::new(name, w, h, pixels)
}

/// Loads any PNM image, converting color to luminance.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    from_dynamic(name, img)
}

/// Loads every `.pgm`, `.ppm` and `.pnm` file of `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("pgm" | "ppm" | "pnm")
            )
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| load_image(p)).collect()
}

/// Directory of the bundled fixture images.
pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Writes intensities in `[0, 1]` as 8-bit binary PGM (values clamped, rounded).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    if pixels.len() != width * height {
        return invalid(format!(
            "{}x{} image needs {} pixels, got {}",
            width,
            height,
            width * height,
            pixels.len()
        ));
    }
    let bytes: Vec<u8> = pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let file = BufWriter::new(File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, width as u32, height as u32, ExtendedColorType::L8)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_8bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let pixels: Vec<f64> = (0..12).map(|i| i as f64 * 20.0 / 255.0).collect();
        write_pgm(&path, 4, 3, &pixels).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5"));
        let back = load_image(&path).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        for (a, b) in back.pixels.iter().zip(&pixels) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn color_uses_luma_weights() {
        let rgb = image::RgbImage::from_raw(1, 1, vec![255, 0, 0]).unwrap();
        let g = from_dynamic("c".into(), DynamicImage::ImageRgb8(rgb)).unwrap();
        assert!((g.pixels[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn fixtures_load() {
        let imgs = load_dir(&fixture_dir()).unwrap();
        assert!(imgs.len() >= 2);
        assert!(imgs.iter().all(|i| i.width >= 33 && i.height >= 33));
    }
}
