//! Denoising operators and the image-space utilities they share.

mod fft;
mod median;
mod wiener;

pub use fft::{fft2, fft2_complex, ifft2};
pub use median::median_filter;
pub use wiener::{
    adaptive_gain, box_kernel, centered_psf, estimate_noise_power, local_stats, wiener_adaptive,
    wiener_deconvolve, LocalStats, MIN_TRANSFER_MAGNITUDE,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{FmdError, Result};
use crate::image::{replicate_gray, to_grayscale, Image};

/// Reflect padding without repeating the edge: `-1 -> 1`, `n -> n - 2`.
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

pub(crate) fn check_window(window: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(FmdError::config(format!(
            "window must be odd and >= 3, got {window}"
        )));
    }
    Ok(())
}

/// Mean squared difference over all entries.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.data().len() as f64)
}

/// Which denoiser family a score was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterTag {
    Median,
    Wiener,
}

impl FilterTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterTag::Median => "median",
            FilterTag::Wiener => "wiener",
        }
    }
}

impl std::str::FromStr for FilterTag {
    type Err = FmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(FilterTag::Median),
            "wiener" => Ok(FilterTag::Wiener),
            other => Err(FmdError::config(format!("unknown filter {other:?}"))),
        }
    }
}

/// A concrete denoising operation applied before re-prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Denoiser {
    /// Per-channel median, keeps the channel count.
    Median { window: usize },
    /// Grayscale, adaptive Wiener, replicate back to three channels.
    WienerAdaptive { window: usize, noise_power: Option<f64> },
    /// Grayscale, Wiener deconvolution, replicate back to three channels.
    WienerDeconvolve { kernel: Array2<f64>, k: f64 },
}

impl Denoiser {
    pub fn tag(&self) -> FilterTag {
        match self {
            Denoiser::Median { .. } => FilterTag::Median,
            Denoiser::WienerAdaptive { .. } | Denoiser::WienerDeconvolve { .. } => FilterTag::Wiener,
        }
    }

    /// Output of the filter itself (grayscale for the Wiener variants).
    pub fn filter(&self, img: &Image) -> Result<Image> {
        let gray = |img: &Image| -> Result<Image> {
            if img.channels() == 1 {
                Ok(img.clone())
            } else {
                to_grayscale(img)
            }
        };
        match self {
            Denoiser::Median { window } => median_filter(img, *window),
            Denoiser::WienerAdaptive { window, noise_power } => {
                wiener_adaptive(&gray(img)?, *window, *noise_power)
            }
            Denoiser::WienerDeconvolve { kernel, k } => wiener_deconvolve(&gray(img)?, kernel, *k),
        }
    }

    /// Filter output in the input's channel layout, ready for the model.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        let out = self.filter(img)?;
        if img.channels() == 3 && out.channels() == 1 {
            replicate_gray(&out)
        } else {
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 3), 1);
        assert_eq!(reflect(-2, 3), 2);
        assert_eq!(reflect(3, 3), 1);
        assert_eq!(reflect(4, 3), 0);
        assert_eq!(reflect(0, 3), 0);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn mse_examples() {
        let a = Image::filled(2, 3, 1, 0.0).unwrap();
        let b = Image::filled(2, 3, 1, 0.5).unwrap();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 0.25);
        assert_eq!(mse(&b, &a).unwrap(), mse(&a, &b).unwrap());
        let c = Image::filled(3, 2, 1, 0.0).unwrap();
        assert!(matches!(mse(&a, &c), Err(FmdError::Shape { .. })));
    }

    #[test]
    fn denoisers_preserve_shape_and_range() {
        let data: Vec<f64> = (0..8 * 8 * 3).map(|i| ((i * 31) % 17) as f64 / 16.0).collect();
        let img = Image::new(8, 8, 3, data).unwrap();
        for d in [
            Denoiser::Median { window: 3 },
            Denoiser::WienerAdaptive { window: 5, noise_power: None },
            Denoiser::WienerDeconvolve { kernel: box_kernel(3, 3), k: 0.01 },
        ] {
            let out = d.apply(&img).unwrap();
            assert_eq!(out.shape(), img.shape());
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let wiener = Denoiser::WienerAdaptive { window: 3, noise_power: None }.apply(&img).unwrap();
        // replicated gray: all three channels agree
        for px in wiener.data().chunks_exact(3) {
            assert!(px[0] == px[1] && px[1] == px[2]);
        }
    }
}
