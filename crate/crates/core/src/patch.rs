//! Image patches, noise maps, and 8-bit PNG input/output.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

/// Largest 8-bit intensity; the canonical storage range is `[0, PEAK_8BIT]`.
pub const PEAK_8BIT: f64 = 255.0;

/// Raster of real intensities in planar (channel-major) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePatch {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Additive residual with the shape of the patch it belongs to. Values have
/// no sign constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Storage range `[0, 255]` mapped linearly to `[0, 1]`.
    Scale,
    /// Per-channel mean removed.
    MeanSubtract,
}

fn check_shape(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidShape(format!("{height}x{width} has an empty axis")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidShape(format!("{channels} channels (expected 1 or 3)")));
    }
    if len != height * width * channels {
        return Err(Error::InvalidShape(format!(
            "{len} values for a {height}x{width}x{channels} raster"
        )));
    }
    Ok(())
}

macro_rules! raster_common {
    ($t:ty) => {
        impl $t {
            pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
                check_shape(height, width, channels, data.len())?;
                Ok(Self {
                    height,
                    width,
                    channels,
                    data,
                })
            }

            pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
                Self::new(height, width, channels, vec![value; height * width * channels])
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn channels(&self) -> usize {
                self.channels
            }

            /// `(height, width, channels)`.
            pub fn shape(&self) -> (usize, usize, usize) {
                (self.height, self.width, self.channels)
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<f64> {
                self.data
            }

            pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
                self.data[(c * self.height + y) * self.width + x]
            }

            pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
                self.data[(c * self.height + y) * self.width + x] = v;
            }

            pub fn channel(&self, c: usize) -> &[f64] {
                let plane = self.height * self.width;
                &self.data[c * plane..(c + 1) * plane]
            }

            pub fn mean(&self) -> f64 {
                self.data.iter().sum::<f64>() / self.data.len() as f64
            }

            /// Single-sample NCHW tensor with every value multiplied by `scale`.
            pub fn to_tensor<T: Real>(&self, scale: f64) -> Tensor<T> {
                Tensor::from_vec(
                    1,
                    self.channels,
                    self.height,
                    self.width,
                    self.data.iter().map(|&v| T::from_f64_lossy(v * scale)).collect(),
                )
            }

            /// Inverse of [`Self::to_tensor`] for one sample of a batch.
            pub fn from_tensor_sample<T: Real>(t: &Tensor<T>, index: usize, scale: f64) -> Result<Self> {
                let data = t.sample(index).iter().map(|v| v.as_f64() * scale).collect();
                Self::new(t.h, t.w, t.c, data)
            }

            #[allow(dead_code)] // unused by NoiseMap
            fn zip_with(
                &self,
                other_shape: (usize, usize, usize),
                other: &[f64],
                f: impl Fn(f64, f64) -> f64,
            ) -> Result<Vec<f64>> {
                if self.shape() != other_shape {
                    return Err(Error::shape(self.shape(), other_shape));
                }
                Ok(self.data.iter().zip(other).map(|(&a, &b)| f(a, b)).collect())
            }
        }
    };
}

raster_common!(ImagePatch);
raster_common!(NoiseMap);

impl ImagePatch {
    /// Builds a patch from a per-pixel function of `(channel, y, x)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn normalize(&self, mode: NormalizationMode) -> ImagePatch {
        let mut out = self.clone();
        match mode {
            NormalizationMode::Scale => out.data.iter_mut().for_each(|v| *v /= PEAK_8BIT),
            NormalizationMode::MeanSubtract => {
                let plane = self.height * self.width;
                for chunk in out.data.chunks_mut(plane) {
                    let mean = chunk.iter().sum::<f64>() / plane as f64;
                    chunk.iter_mut().for_each(|v| *v -= mean);
                }
            }
        }
        out
    }

    /// Per-channel means.
    pub fn channel_means(&self) -> Vec<f64> {
        let plane = (self.height * self.width) as f64;
        (0..self.channels)
            .map(|c| self.channel(c).iter().sum::<f64>() / plane)
            .collect()
    }

    pub fn add_noise(&self, noise: &NoiseMap) -> Result<ImagePatch> {
        let data = self.zip_with(noise.shape(), &noise.data, |a, b| a + b)?;
        Ok(ImagePatch {
            data,
            ..self.clone_shape()
        })
    }

    pub fn sub_noise(&self, noise: &NoiseMap) -> Result<ImagePatch> {
        let data = self.zip_with(noise.shape(), &noise.data, |a, b| a - b)?;
        Ok(ImagePatch {
            data,
            ..self.clone_shape()
        })
    }

    /// `self - other` as a noise map.
    pub fn residual(&self, other: &ImagePatch) -> Result<NoiseMap> {
        let data = self.zip_with(other.shape(), &other.data, |a, b| a - b)?;
        NoiseMap::new(self.height, self.width, self.channels, data)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> ImagePatch {
        ImagePatch {
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
            ..self.clone_shape()
        }
    }

    pub fn clamp_storage(&self) -> ImagePatch {
        self.clamp(0.0, PEAK_8BIT)
    }

    /// Values rounded to the nearest 8-bit level.
    pub fn quantize_8bit(&self) -> ImagePatch {
        ImagePatch {
            data: self.data.iter().map(|v| v.round().clamp(0.0, PEAK_8BIT)).collect(),
            ..self.clone_shape()
        }
    }

    fn clone_shape(&self) -> ImagePatch {
        ImagePatch {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: Vec::new(),
        }
    }
}

impl NoiseMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn zeros_like(patch: &ImagePatch) -> NoiseMap {
        NoiseMap {
            height: patch.height,
            width: patch.width,
            channels: patch.channels,
            data: vec![0.0; patch.data.len()],
        }
    }

    pub fn scaled(&self, k: f64) -> NoiseMap {
        NoiseMap {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    /// Reinterprets the map as a patch (for visualization or re-injection).
    pub fn as_patch(&self) -> ImagePatch {
        ImagePatch {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.clone(),
        }
    }
}

/// Loads an 8-bit grayscale or RGB PNG. Alpha channels are dropped.
pub fn load_patch(path: impl AsRef<Path>) -> Result<ImagePatch> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = ImageReader::new(BufReader::new(file))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                reason: format!("{other:?}"),
            })
        }
        None => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                reason: "unrecognized signature".into(),
            })
        }
    }
    let img = reader.decode().map_err(|e| Error::CorruptImage {
        path: path.into(),
        reason: e.to_string(),
    })?;
    patch_from_image(img).map_err(|reason| Error::UnsupportedFormat {
        path: path.into(),
        reason,
    })
}

fn patch_from_image(img: DynamicImage) -> std::result::Result<ImagePatch, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let luma = img.to_luma8();
            let data = luma.as_raw().iter().map(|&v| v as f64).collect();
            ImagePatch::new(h, w, 1, data).map_err(|e| e.to_string())
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let rgb = img.to_rgb8();
            let raw = rgb.as_raw();
            let mut data = vec![0.0; h * w * 3];
            for (i, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    data[c * h * w + i] = px[c] as f64;
                }
            }
            ImagePatch::new(h, w, 3, data).map_err(|e| e.to_string())
        }
        other => Err(format!("{:?} is not an 8-bit gray or RGB layout", other.color())),
    }
}

/// Interleaved 8-bit buffer (gray or RGB) of a patch, values rounded and clamped.
pub fn to_8bit_interleaved(patch: &ImagePatch) -> Vec<u8> {
    let (h, w, c) = patch.shape();
    let mut out = vec![0u8; h * w * c];
    for ch in 0..c {
        for (i, &v) in patch.channel(ch).iter().enumerate() {
            out[i * c + ch] = v.round().clamp(0.0, PEAK_8BIT) as u8;
        }
    }
    out
}

/// Saves as an 8-bit PNG, rounding and clamping values to `[0, 255]`.
pub fn save_patch(patch: &ImagePatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w, c) = patch.shape();
    let buf = to_8bit_interleaved(patch);
    let color = if c == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(path, &buf, w as u32, h as u32, color, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedFormat {
            path: path.into(),
            reason: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImagePatch::new(0, 4, 1, vec![]).is_err());
        assert!(ImagePatch::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImagePatch::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let constant = ImagePatch::filled(3, 3, 1, 100.0).unwrap();
        assert!(constant
            .normalize(NormalizationMode::MeanSubtract)
            .data()
            .iter()
            .all(|&v| v == 0.0));

        let ends = ImagePatch::new(1, 2, 1, vec![0.0, 255.0]).unwrap();
        assert_eq!(ends.normalize(NormalizationMode::Scale).data(), &[0.0, 1.0]);

        let ramp = ImagePatch::new(2, 2, 1, vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(
            ramp.normalize(NormalizationMode::MeanSubtract).data(),
            &[-15.0, -5.0, 5.0, 15.0]
        );
    }

    #[test]
    fn mean_subtract_is_per_channel() {
        let p = ImagePatch::from_fn(2, 2, 3, |c, y, x| (c * 50 + y * 2 + x) as f64).unwrap();
        let n = p.normalize(NormalizationMode::MeanSubtract);
        for m in n.channel_means() {
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn residual_and_noise_ops_agree() {
        let a = ImagePatch::new(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let b = ImagePatch::new(1, 3, 1, vec![0.5, 2.0, 4.0]).unwrap();
        let r = a.residual(&b).unwrap();
        assert_eq!(r.data(), &[0.5, 0.0, -1.0]);
        assert_eq!(b.add_noise(&r).unwrap(), a);
        assert!(a.residual(&ImagePatch::filled(3, 1, 1, 0.0).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn mean_subtract_is_idempotent(vals in proptest::collection::vec(0.0f64..255.0, 12)) {
            let p = ImagePatch::new(2, 2, 3, vals).unwrap();
            let once = p.normalize(NormalizationMode::MeanSubtract);
            let twice = once.normalize(NormalizationMode::MeanSubtract);
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
