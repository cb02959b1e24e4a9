//! RGB image tensor (H x W x 3, f32 in [0, 1]) and 16-bit PNG round trip.
//!
//! PNGs store round(v * 65535) per channel; loading yields k / 65535. An
//! image whose values already lie on that grid round-trips bit-exactly.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("image io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("expected 16-bit rgb png at {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    /// Row-major, 3 channels: data[(y * w + x) * 3 + c].
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(h: usize, w: usize) -> Self {
        Image {
            h,
            w,
            data: vec![0.0; h * w * 3],
        }
    }

    pub fn filled(h: usize, w: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            data.extend_from_slice(&rgb);
        }
        Image { h, w, data }
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.h == other.h && self.w == other.w
    }

    #[inline]
    pub fn px(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_px(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mean absolute difference over all pixels and channels (f64 accumulator).
    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert!(self.same_shape(other), "image shape mismatch");
        let n = self.data.len() as f64;
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum();
        s / n
    }

    /// Mean squared error over all pixels and channels (f64 accumulator).
    pub fn mse(&self, other: &Image) -> f64 {
        assert!(self.same_shape(other), "image shape mismatch");
        let n = self.data.len() as f64;
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum();
        s / n
    }

    /// Per-pixel maximum over the three channels.
    pub fn channel_max(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| p[0].max(p[1]).max(p[2]))
            .collect()
    }

    pub fn to_u16(&self) -> Vec<u16> {
        self.data.iter().map(|&v| quantize_u16(v)).collect()
    }

    /// Snaps every value onto the 16-bit grid k / 65535.
    pub fn quantize(&mut self) {
        for v in &mut self.data {
            *v = quantize_u16(*v) as f32 / 65535.0;
        }
    }
}

#[inline]
pub fn quantize_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

pub fn save_rgb16(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    let buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_raw(
        img.w as u32,
        img.h as u32,
        img.to_u16(),
    )
    .expect("buffer sized from image");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn load_rgb16(path: &Path) -> Result<Image, ImageIoError> {
    let dyn_img = image::open(path)?;
    let buf = match dyn_img {
        image::DynamicImage::ImageRgb16(b) => b,
        _ => return Err(ImageIoError::Format(path.display().to_string())),
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let data = buf.into_raw().iter().map(|&v| v as f32 / 65535.0).collect();
    Ok(Image { h, w, data })
}

/// Grayscale 16-bit PNG of `values` (already in [0, 1]).
pub fn save_gray16(path: &Path, h: usize, w: usize, values: &[f32]) -> Result<(), ImageIoError> {
    assert_eq!(values.len(), h * w);
    let raw: Vec<u16> = values.iter().map(|&v| quantize_u16(v)).collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w as u32, h as u32, raw)
        .expect("buffer sized from values");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn load_gray16(path: &Path) -> Result<(usize, usize, Vec<f32>), ImageIoError> {
    let dyn_img = image::open(path)?;
    let buf = match dyn_img {
        image::DynamicImage::ImageLuma16(b) => b,
        _ => return Err(ImageIoError::Format(path.display().to_string())),
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let data = buf.into_raw().iter().map(|&v| v as f32 / 65535.0).collect();
    Ok((h, w, data))
}
