//! Image values, pixel-range discipline and binary PGM/PPM I/O.
//!
//! Intensities are real numbers in `[0, 1]`, stored row-major with channels
//! interleaved per pixel (the P6 byte order). Files quantize to 8 bits:
//! `v = byte / 255` on read and `byte = round(255 v)` on write.

use crate::error::{FmdError, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, validating shape and range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(height, width, channels, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FmdError::config(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image from an unconstrained buffer by clamping every value to `[0, 1]`.
    pub fn from_raw_clipped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        check_shape(height, width, channels, data.len())?;
        clip01_in_place(&mut data);
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

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Extracts one channel as a dense row-major plane.
    pub fn plane(&self, channel: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Reassembles an image from per-channel planes, clamping to `[0, 1]`.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0.0; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != height * width {
                return Err(FmdError::shape(
                    format!("plane of {} values", height * width),
                    format!("{}", plane.len()),
                ));
            }
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Self::from_raw_clipped(height, width, channels, data)
    }

    /// Largest absolute per-entry difference to `other`.
    pub fn linf_distance(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(FmdError::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    /// Snaps every intensity onto the 8-bit grid used by the file format.
    pub fn quantized(&self) -> Image {
        Image {
            data: self.data.iter().map(|&v| quantize(v) as f64 / 255.0).collect(),
            ..self.clone()
        }
    }
}

fn check_shape(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if channels != 1 && channels != 3 {
        return Err(FmdError::config(format!(
            "channels must be 1 or 3, got {channels}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(FmdError::config("image dimensions must be positive"));
    }
    if len != height * width * channels {
        return Err(FmdError::shape(
            format!("{height}x{width}x{channels} = {} values", height * width * channels),
            format!("{len} values"),
        ));
    }
    Ok(())
}

pub fn clip01_in_place(data: &mut [f64]) {
    for v in data {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Clamps every intensity into `[0, 1]`.
pub fn clip01(img: &Image) -> Image {
    let mut out = img.clone();
    clip01_in_place(&mut out.data);
    out
}

pub fn to_grayscale(img: &Image) -> Result<Image> {
    if img.channels == 1 {
        return Err(FmdError::AlreadyGrayscale);
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2]
        })
        .collect();
    Image::from_raw_clipped(img.height, img.width, 1, data)
}

/// Copies a single-channel image into all three channels.
pub fn replicate_gray(img: &Image) -> Result<Image> {
    if img.channels != 1 {
        return Err(FmdError::GrayscaleRequired(img.channels));
    }
    let data = img.data.iter().flat_map(|&v| [v, v, v]).collect();
    Ok(Image {
        height: img.height,
        width: img.width,
        channels: 3,
        data,
    })
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes as binary P5 (1 channel) or P6 (3 channels), maxval 255.
pub fn write_ppm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FmdError::PpmHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FmdError::PpmHeader(format!("invalid {what}")))
    }
}

/// Decodes binary P5/P6 data with maxval 255. Comments in the header are accepted.
pub fn read_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 {
        return Err(FmdError::PpmBadMagic(String::from_utf8_lossy(bytes).into_owned()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(FmdError::PpmBadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.number("width")? as usize;
    let height = header.number("height")? as usize;
    let maxval = header.number("maxval")?;
    if maxval != 255 {
        return Err(FmdError::PpmMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(FmdError::PpmHeader("missing whitespace after maxval".into())),
    }
    if width == 0 || height == 0 {
        return Err(FmdError::PpmHeader("zero dimension".into()));
    }
    let expected = width * height * channels;
    let payload = &bytes[header.pos..];
    if payload.len() < expected {
        return Err(FmdError::PpmTruncated {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(height, width, channels, data)
}
