//! Planar floating point rasters and PNG I/O.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// A planar raster of `f64` samples.
///
/// Samples are stored channel-major, then row-major: the sample at
/// `(channel, row, col)` lives at `channel * height * width + row * width + col`.
/// Loaded images and renders stay in `[0, 1]`; the same type also carries
/// wavelet coefficients and image-shaped gradients, which are unbounded.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(channel, row, col)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for r in 0..height {
                for x in 0..width {
                    data.push(f(c, r, x));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    #[inline]
    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(channel, row, col)]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        let i = self.index(channel, row, col);
        self.data[i] = value;
    }

    #[inline]
    pub fn add(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        let i = self.index(channel, row, col);
        self.data[i] += value;
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// `self += k * other`; shapes must agree.
    pub fn add_scaled(&mut self, other: &Image, k: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    /// Copies `channel` into a new single-channel image.
    pub fn channel(&self, channel: usize) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.plane(channel).to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Stacks three single-channel bands into a three-channel composite
/// (red, green, red-edge) used as the pose-estimation image for
/// multispectral captures. Samples are copied untouched.
pub fn compose_pseudo_rgb(red: &Image, green: &Image, red_edge: &Image) -> Result<Image> {
    for (name, band) in [("red", red), ("green", green), ("red_edge", red_edge)] {
        if band.channels != 1 {
            return Err(Error::DimensionMismatch(format!(
                "{name} band has {} channels, expected 1",
                band.channels
            )));
        }
    }
    red.check_same_shape(green, "pseudo-rgb red/green")?;
    red.check_same_shape(red_edge, "pseudo-rgb red/red_edge")?;
    let mut data = Vec::with_capacity(red.len() * 3);
    data.extend_from_slice(&red.data);
    data.extend_from_slice(&green.data);
    data.extend_from_slice(&red_edge.data);
    Image::from_data(red.width, red.height, 3, data)
}

/// Loads an 8- or 16-bit grayscale or RGB PNG and normalises it to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| Error::CorruptImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    from_dynamic(decoded).map_err(|reason| Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason,
    })
}

fn from_dynamic(img: DynamicImage) -> std::result::Result<Image, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let interleaved_to_planar = |samples: Vec<f64>, channels: usize| {
        Image::from_fn(w, h, channels, |c, r, x| {
            samples[(r * w + x) * channels + c]
        })
    };
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(interleaved_to_planar(
            buf.into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
            1,
        )),
        DynamicImage::ImageRgb8(buf) => Ok(interleaved_to_planar(
            buf.into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
            3,
        )),
        DynamicImage::ImageLuma16(buf) => Ok(interleaved_to_planar(
            buf.into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
            1,
        )),
        DynamicImage::ImageRgb16(buf) => Ok(interleaved_to_planar(
            buf.into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
            3,
        )),
        other => Err(format!("color type {:?}", other.color())),
    }
}

/// Supported PNG sample depths for [`save_image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Writes a 1- or 3-channel image as PNG, clamping to `[0, 1]` and rounding
/// to the nearest code value.
pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (w, h, ch) = (img.width, img.height, img.channels);
    if ch != 1 && ch != 3 {
        return Err(Error::InvalidArgument(format!(
            "cannot save a {ch}-channel image"
        )));
    }
    let max = depth.max_value();
    let quantized: Vec<u16> = (0..h)
        .flat_map(|r| (0..w).flat_map(move |x| (0..ch).map(move |c| (c, r, x))))
        .map(|(c, r, x)| (img.get(c, r, x).clamp(0.0, 1.0) * max).round() as u16)
        .collect();
    let encode_err =
        |e: image::ImageError| Error::InvalidArgument(format!("{}: {e}", path.display()));
    let (w32, h32) = (w as u32, h as u32);
    match (depth, ch) {
        (BitDepth::Eight, 1) => {
            let raw = quantized.iter().map(|&v| v as u8).collect();
            ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w32, h32, raw)
                .expect("buffer size")
                .save(path)
                .map_err(encode_err)
        }
        (BitDepth::Eight, _) => {
            let raw = quantized.iter().map(|&v| v as u8).collect();
            ImageBuffer::<Rgb<u8>, Vec<u8>>::from_raw(w32, h32, raw)
                .expect("buffer size")
                .save(path)
                .map_err(encode_err)
        }
        (BitDepth::Sixteen, 1) => ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w32, h32, quantized)
            .expect("buffer size")
            .save(path)
            .map_err(encode_err),
        (BitDepth::Sixteen, _) => ImageBuffer::<Rgb<u16>, Vec<u16>>::from_raw(w32, h32, quantized)
            .expect("buffer size")
            .save(path)
            .map_err(encode_err),
    }
}
