//! Per-channel median filter with reflect padding.

use super::{check_window, reflect};
use crate::error::Result;
use crate::image::Image;

/// Replaces each value by the median of its `window x window` neighborhood,
/// channel by channel. `window` must be odd, so the median is always an
/// element of the neighborhood.
pub fn median_filter(img: &Image, window: usize) -> Result<Image> {
    check_window(window)?;
    let (h, w, c) = img.shape();
    let r = (window / 2) as isize;
    let mut out = Vec::with_capacity(img.data().len());
    let mut buf = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                buf.clear();
                for dy in -r..=r {
                    let sy = reflect(y as isize + dy, h);
                    for dx in -r..=r {
                        let sx = reflect(x as isize + dx, w);
                        buf.push(img.get(sy, sx, ch));
                    }
                }
                let mid = buf.len() / 2;
                let (_, median, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
                out.push(*median);
            }
        }
    }
    Image::new(h, w, c, out)
}
