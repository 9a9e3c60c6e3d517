//! Wiener filtering: the local-statistics adaptive denoiser and
//! frequency-domain deconvolution `X = conj(H) Y / (|H|^2 + K)`.

use ndarray::Array2;
use num_complex::Complex64;

use super::fft::{fft2, ifft2};
use super::{check_window, reflect};
use crate::error::{FmdError, Result};
use crate::image::Image;

/// Smallest `|H|` tolerated by an unregularized (`K = 0`) deconvolution.
pub const MIN_TRANSFER_MAGNITUDE: f64 = 1e-8;

/// Window mean and (population) variance around every pixel of a plane.
#[derive(Debug, Clone)]
pub struct LocalStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn local_stats(plane: &[f64], h: usize, w: usize, window: usize) -> Result<LocalStats> {
    check_window(window)?;
    let r = (window / 2) as isize;
    let count = (window * window) as f64;
    let mut mean = Vec::with_capacity(h * w);
    let mut variance = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut s2) = (0.0, 0.0);
            for dy in -r..=r {
                let row = reflect(y as isize + dy, h) * w;
                for dx in -r..=r {
                    let v = plane[row + reflect(x as isize + dx, w)];
                    s += v;
                    s2 += v * v;
                }
            }
            let mu = s / count;
            mean.push(mu);
            variance.push((s2 / count - mu * mu).max(0.0));
        }
    }
    Ok(LocalStats { mean, variance })
}

/// Gain applied to `y - mu`: `max(var - noise, 0) / max(var, noise)`, zero when both vanish.
pub fn adaptive_gain(variance: f64, noise_power: f64) -> f64 {
    let denom = variance.max(noise_power);
    if denom <= 0.0 {
        0.0
    } else {
        (variance - noise_power).max(0.0) / denom
    }
}

/// Noise power used when none is given: the mean local variance.
pub fn estimate_noise_power(stats: &LocalStats) -> f64 {
    stats.variance.iter().sum::<f64>() / stats.variance.len() as f64
}

/// Adaptive Wiener filter on a grayscale image.
pub fn wiener_adaptive(img: &Image, window: usize, noise_power: Option<f64>) -> Result<Image> {
    if img.channels() != 1 {
        return Err(FmdError::GrayscaleRequired(img.channels()));
    }
    if let Some(n) = noise_power {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(FmdError::config("noise_power must be finite and >= 0"));
        }
    }
    let (h, w, _) = img.shape();
    let stats = local_stats(img.data(), h, w, window)?;
    let noise = noise_power.unwrap_or_else(|| estimate_noise_power(&stats));
    let out = img
        .data()
        .iter()
        .zip(stats.mean.iter().zip(&stats.variance))
        .map(|(&y, (&mu, &var))| mu + adaptive_gain(var, noise) * (y - mu))
        .collect();
    Image::from_raw_clipped(h, w, 1, out)
}

/// `h x w` box blur kernel (all entries `1 / (h w)`).
pub fn box_kernel(h: usize, w: usize) -> Array2<f64> {
    Array2::from_elem((h, w), 1.0 / (h * w) as f64)
}

/// Zero-pads `kernel` to `(m, n)` with its center (`(kh / 2, kw / 2)`) moved to the origin, wrapping around.
pub fn centered_psf(kernel: &Array2<f64>, m: usize, n: usize) -> Array2<f64> {
    let (kh, kw) = kernel.dim();
    let (ch, cw) = (kh / 2, kw / 2);
    let mut out = Array2::zeros((m, n));
    for ((i, j), &v) in kernel.indexed_iter() {
        let y = (i + m - ch % m) % m;
        let x = (j + n - cw % n) % n;
        out[[y, x]] += v;
    }
    out
}

fn validate_kernel(kernel: &Array2<f64>, h: usize, w: usize) -> Result<()> {
    let (kh, kw) = kernel.dim();
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(FmdError::config(format!(
            "kernel {kh}x{kw} does not fit image {h}x{w}"
        )));
    }
    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(FmdError::config("kernel entries must be finite"));
    }
    let sum: f64 = kernel.sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(FmdError::config(format!("kernel sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Frequency-domain Wiener deconvolution of a grayscale image; the real
/// part of the inverse transform is clipped to `[0, 1]`.
pub fn wiener_deconvolve(img: &Image, kernel: &Array2<f64>, k: f64) -> Result<Image> {
    if img.channels() != 1 {
        return Err(FmdError::GrayscaleRequired(img.channels()));
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(FmdError::config(format!("K must be finite and >= 0, got {k}")));
    }
    let (h, w, _) = img.shape();
    validate_kernel(kernel, h, w)?;
    let transfer = fft2(&centered_psf(kernel, h, w));
    if k == 0.0 {
        let min_abs_h = transfer.iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
        if min_abs_h < MIN_TRANSFER_MAGNITUDE {
            return Err(FmdError::IllConditioned { min_abs_h });
        }
    }
    let observed = Array2::from_shape_vec((h, w), img.data().to_vec()).expect("image plane shape");
    let spectrum = fft2(&observed);
    let restored: Array2<Complex64> = ndarray::Zip::from(&transfer)
        .and(&spectrum)
        .map_collect(|hc, y| hc.conj() * y / (hc.norm_sqr() + k));
    let spatial = ifft2(&restored);
    Image::from_raw_clipped(h, w, 1, spatial.iter().map(|c| c.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::mse;
    use crate::rng::SplitMix64;

    fn noisy_constant(seed: u64) -> (Image, Image) {
        let clean = Image::filled(32, 32, 1, 0.5).unwrap();
        let mut rng = SplitMix64::new(seed);
        let noisy = clean.data().iter().map(|&v| v + 0.05 * rng.next_gaussian()).collect();
        (clean, Image::from_raw_clipped(32, 32, 1, noisy).unwrap())
    }

    #[test]
    fn adaptive_constant_unchanged() {
        let img = Image::filled(8, 8, 1, 0.25).unwrap();
        let out = wiener_adaptive(&img, 5, None).unwrap();
        for v in out.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_zero_noise_is_identity() {
        let (_, noisy) = noisy_constant(3);
        let out = wiener_adaptive(&noisy, 5, Some(0.0)).unwrap();
        for (a, b) in out.data().iter().zip(noisy.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_halves_mse_on_noisy_constant() {
        let (clean, noisy) = noisy_constant(2024);
        let before = mse(&noisy, &clean).unwrap();
        let after = mse(&wiener_adaptive(&noisy, 5, None).unwrap(), &clean).unwrap();
        assert!(after * 2.0 <= before, "before {before} after {after}");
    }

    #[test]
    fn adaptive_requires_grayscale() {
        let rgb = Image::filled(4, 4, 3, 0.1).unwrap();
        assert!(matches!(wiener_adaptive(&rgb, 3, None), Err(FmdError::GrayscaleRequired(3))));
    }

    #[test]
    fn gain_is_a_fraction() {
        for var in [0.0, 1e-6, 0.01, 0.5] {
            for noise in [0.0, 1e-6, 0.01, 0.5] {
                let g = adaptive_gain(var, noise);
                assert!((0.0..=1.0).contains(&g));
            }
        }
        assert_eq!(adaptive_gain(0.0, 0.0), 0.0);
        assert_eq!(adaptive_gain(0.3, 0.0), 1.0);
    }

    fn ramp() -> Image {
        let data = (0..12 * 10).map(|i| ((i * 7) % 23) as f64 / 23.0).collect();
        Image::new(12, 10, 1, data).unwrap()
    }

    #[test]
    fn delta_kernel_roundtrip() {
        let img = ramp();
        let delta = Array2::from_elem((1, 1), 1.0);
        let out = wiener_deconvolve(&img, &delta, 0.0).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let scaled = wiener_deconvolve(&img, &delta, 0.5).unwrap();
        for (a, b) in scaled.data().iter().zip(img.data()) {
            assert!((a - (b / 1.5).clamp(0.0, 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn ill_conditioned_without_regularization() {
        // [0.5, 0.5] has H = 0 at the Nyquist column
        let kernel = Array2::from_shape_vec((1, 2), vec![0.5, 0.5]).unwrap();
        let img = ramp();
        assert!(matches!(
            wiener_deconvolve(&img, &kernel, 0.0),
            Err(FmdError::IllConditioned { .. })
        ));
        assert!(wiener_deconvolve(&img, &kernel, 1e-3).is_ok());
    }

    #[test]
    fn kernel_validation() {
        let img = ramp();
        assert!(wiener_deconvolve(&img, &box_kernel(13, 3), 0.1).is_err());
        assert!(wiener_deconvolve(&img, &Array2::from_elem((2, 2), 1.0), 0.1).is_err());
        assert!(wiener_deconvolve(&img, &box_kernel(3, 3), -1.0).is_err());
    }

    #[test]
    fn psf_center_lands_on_origin() {
        let mut k = Array2::zeros((3, 3));
        k[[1, 1]] = 1.0;
        let psf = centered_psf(&k, 5, 4);
        assert_eq!(psf[[0, 0]], 1.0);
        assert_eq!(psf.sum(), 1.0);
        let b = centered_psf(&box_kernel(3, 3), 5, 4);
        assert!((b[[4, 3]] - 1.0 / 9.0).abs() < 1e-15);
    }
}
